//! Render a few synthetic click tracks and save them as WAV + annotation
//! pairs.
//!
//! Each track is a decaying click at every beat (downbeats twice as loud)
//! over a soft noise floor — just enough structure for the toy onset
//! features to work with, and fully deterministic per seed.
//!
//! Run with: `cargo run --example synthesize`

use beatdet::io::{write_beats, write_wav};
use beatdet::toy::{random_specs, synth_track, SAMPLE_RATE};

fn main() -> beatdet::Result<()> {
    let out_dir = std::env::temp_dir().join("beatdet-synthesize");
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| beatdet::Error::io(&out_dir, e))?;

    let specs = random_specs(4, (60.0, 180.0), &[3, 4], 10.0, 0.0, 7);
    for (i, spec) in specs.iter().enumerate() {
        let (audio, annotation) = synth_track(spec)?;
        let stem = format!("track{i}");
        write_wav(out_dir.join(format!("{stem}.wav")), &audio, SAMPLE_RATE)?;
        write_beats(out_dir.join(format!("{stem}.beats")), &annotation)?;

        let downbeats = annotation.downbeat_times().unwrap_or_default();
        let peak = audio.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
        println!(
            "{stem}: {:>5.1} BPM, {}/4 meter, {} beats ({} downbeats), peak {:.2}",
            spec.tempo_bpm,
            spec.meter,
            annotation.len(),
            downbeats.len(),
            peak,
        );
    }
    println!("\nwrote WAV + .beats pairs to {}", out_dir.display());
    Ok(())
}
