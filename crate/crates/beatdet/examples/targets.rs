//! Turn one annotated track into per-anchor training targets.
//!
//! Beats become intervals from each beat to the next, downbeats likewise;
//! every interval is routed to the pyramid level whose stride matches its
//! length, and the anchors inside a short left-aligned sub-box become the
//! positives that must regress its endpoints. This prints the anchor count
//! and positive count per level, then dissects one positive anchor.
//!
//! Run with: `cargo run --example targets`

use beatdet::geometry::intervals_from_beats;
use beatdet::pyramid::{assign_targets, AnchorGrid, LevelConfig};
use beatdet::toy::{synth_track, SynthSpec};

fn main() -> beatdet::Result<()> {
    let spec = SynthSpec {
        tempo_bpm: 132.0,
        meter: 3,
        ..SynthSpec::default()
    };
    let (audio, annotation) = synth_track(&spec)?;
    let (beat_ivs, downbeat_ivs) = intervals_from_beats(&annotation);
    println!(
        "132 BPM in 3/4: {} beat intervals (~{:.3} s), {} downbeat intervals (~{:.3} s)",
        beat_ivs.len(),
        beat_ivs[0].length(),
        downbeat_ivs.len(),
        downbeat_ivs[0].length()
    );

    let cfg = LevelConfig::default();
    let grid = AnchorGrid::new(audio.len(), &cfg)?;
    let targets = assign_targets(&beat_ivs, &downbeat_ivs, &grid, &cfg)?;

    println!("\n  level  stride    anchors  positives");
    for (i, level) in targets.levels.iter().enumerate() {
        let positives = level.iter().filter(|t| t.is_positive()).count();
        println!(
            "  {i}      {:>6.1} ms  {:>4}     {positives:>4}",
            grid.stride_seconds(i) * 1e3,
            level.len()
        );
    }
    println!(
        "  total  {} anchors, {} positive ({} beat / {} downbeat channels)",
        targets.num_anchors(),
        targets.num_positive(),
        targets.num_positive_for(beatdet::geometry::EventClass::Beat),
        targets.num_positive_for(beatdet::geometry::EventClass::Downbeat),
    );

    // Pick the first positive anchor and show what it is asked to predict.
    for (level_idx, level) in targets.levels.iter().enumerate() {
        if let Some((index, t)) = level.iter().enumerate().find(|(_, t)| t.is_positive()) {
            let reg = t.reg.as_ref().unwrap();
            let pos = grid.position(level_idx, index);
            println!(
                "\nfirst positive: level {level_idx}, anchor {index} at {pos:.3} s"
            );
            println!(
                "  interval ({:.3}, {:.3}) s, class {}",
                reg.interval.left(),
                reg.interval.right(),
                reg.interval.class()
            );
            println!(
                "  offsets in strides: left {:.3}, right {:.3}; quality {:.3}",
                reg.left, reg.right, reg.quality
            );
            break;
        }
    }
    Ok(())
}
