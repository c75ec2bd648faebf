//! Demonstrate the beat-tracking metrics on estimates with known flaws.
//!
//! Scores a perfect estimate, a double-tempo estimate, and an offbeat
//! estimate against the same 120 BPM reference. The continuity metrics
//! make the distinction the F-measure cannot: CMLt insists on the correct
//! metrical level, while AMLt forgives double/half tempo and offbeat
//! phase as long as the tapping is internally consistent.
//!
//! Run with: `cargo run --example evaluate`

use beatdet::geometry::BeatSequence;
use beatdet::metrics::{joint_report, ClassMetrics, EvalConfig};

fn main() -> beatdet::Result<()> {
    let period = 0.5; // 120 BPM
    let reference_times: Vec<f64> = (0..60).map(|k| k as f64 * period).collect();
    let reference = BeatSequence::from_times(reference_times.clone())?;
    let cfg = EvalConfig::default();

    // Same beats, reported at twice the rate, and shifted half a period.
    let double: Vec<f64> = (0..120).map(|k| k as f64 * period / 2.0).collect();
    let offbeat: Vec<f64> = reference_times.iter().map(|t| t + period / 2.0).collect();

    println!("reference: {} beats at 120 BPM", reference.len());
    println!("\n  estimate       F1     CMLc   CMLt   AMLc   AMLt");
    for (label, times) in [
        ("perfect", reference_times),
        ("double tempo", double),
        ("offbeat", offbeat),
    ] {
        let est = BeatSequence::from_times(times)?;
        let report = joint_report(&est, &reference, &cfg)?;
        println!("  {label:<13}{}", row(&report.beat));
    }

    println!("\nhow AMLt works: the reference is scored against metrical variations");
    println!("of itself (double, half, offbeat, ...) and the best one counts.");
    let variations = beatdet::metrics::metrical_variations(reference.times(), true);
    println!(
        "a 120 BPM reference expands into {} variations, e.g. periods:",
        variations.len()
    );
    for v in &variations {
        if v.len() >= 2 {
            print!(" {:.2}", v[1] - v[0]);
        }
    }
    println!(" s");
    Ok(())
}

fn row(m: &ClassMetrics) -> String {
    [m.f_measure, m.cmlc, m.cmlt, m.amlc, m.amlt]
        .iter()
        .map(|v| match v {
            Some(x) => format!("{x:.3}  "),
            None => "na     ".to_string(),
        })
        .collect()
}
