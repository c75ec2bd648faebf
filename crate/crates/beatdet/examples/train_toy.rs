//! Train the per-level detection heads on a small synthetic corpus.
//!
//! A cut-down run — 12 training tracks and a few hundred epochs instead of
//! the full reference recipe — that still reaches usable accuracy in a few
//! seconds. Prints the loss trajectory while training, then scores the
//! trained model on held-out tracks.
//!
//! Run with: `cargo run --release --example train_toy`

use beatdet::metrics::{aggregate_reports, joint_report, ClassMetrics};
use beatdet::toy::{predict, random_specs, synth_track, train_toy, ToyHeads, TrainConfig};

fn main() -> beatdet::Result<()> {
    let train = random_specs(12, (60.0, 180.0), &[3, 4], 10.0, 0.0, 101);
    let val = random_specs(4, (60.0, 180.0), &[3, 4], 10.0, 0.0, 202);
    let test = random_specs(6, (60.0, 180.0), &[3, 4], 10.0, 0.0, 303);

    let cfg = TrainConfig {
        epochs: 400,
        patience: 60,
        ..TrainConfig::default()
    };
    let mut heads = ToyHeads::new(cfg.levels.num_levels, cfg.levels.base_level, cfg.seed);
    println!(
        "training {} parameters on {} tracks for {} epochs",
        heads.num_params(),
        train.len(),
        cfg.epochs
    );

    let started = std::time::Instant::now();
    let outcome = train_toy(&train, &val, &mut heads, &cfg)?;
    println!("\n  epoch   total loss   val joint F");
    for stats in outcome.log.iter().filter(|s| s.epoch % 50 == 0 || s.epoch == 1) {
        println!(
            "  {:>5}   {:>10.4}   {}",
            stats.epoch,
            stats.total,
            stats
                .val_joint_f
                .map_or("na".to_string(), |f| format!("{f:.3}"))
        );
    }
    println!(
        "  best validation joint F {:.3} after {:.1} s",
        outcome.best_val_joint_f.unwrap_or(0.0),
        started.elapsed().as_secs_f64()
    );

    let mut reports = Vec::new();
    for spec in &test {
        let (audio, annotation) = synth_track(spec)?;
        let est = predict(&audio, &heads, &cfg.levels, &cfg.decode)?;
        reports.push(joint_report(&est, &annotation, &cfg.eval)?);
    }
    let all = aggregate_reports(&reports);
    println!("\nheld-out tracks ({}):", test.len());
    println!("  beat     {}", row(&all.beat));
    if let Some(downbeat) = &all.downbeat {
        println!("  downbeat {}", row(downbeat));
    }
    Ok(())
}

fn row(m: &ClassMetrics) -> String {
    format!(
        "F1 {}  CMLt {}  AMLt {}",
        cell(m.f_measure),
        cell(m.cmlt),
        cell(m.amlt)
    )
}

fn cell(v: Option<f64>) -> String {
    v.map_or("na".to_string(), |x| format!("{x:.3}"))
}
