//! Run the quality-target × suppression ablation grid at reduced scale.
//!
//! Trains one model per quality target (leftness — how close the anchor
//! sits to the interval's left edge — versus classic centerness), then
//! evaluates each with hard NMS and soft-linear NMS on the same held-out
//! tracks. The full-size grid is available as `beatdet ablate`.
//!
//! Run with: `cargo run --release --example ablate`

use beatdet::decode::NmsKind;
use beatdet::metrics::ClassMetrics;
use beatdet::pyramid::QualityTarget;
use beatdet::toy::{random_specs, run_ablation, TrainConfig};

fn main() -> beatdet::Result<()> {
    let train = random_specs(12, (60.0, 180.0), &[3, 4], 10.0, 0.0, 101);
    let val = random_specs(4, (60.0, 180.0), &[3, 4], 10.0, 0.0, 202);
    let test = random_specs(6, (60.0, 180.0), &[3, 4], 10.0, 0.0, 303);
    let cfg = TrainConfig {
        epochs: 400,
        patience: 60,
        ..TrainConfig::default()
    };

    println!(
        "training 2 models ({} epochs each), evaluating 4 cells...\n",
        cfg.epochs
    );
    let started = std::time::Instant::now();
    let cells = run_ablation(
        &train,
        &val,
        &test,
        &cfg,
        &[NmsKind::Hard, NmsKind::SoftLinear],
        &[QualityTarget::Leftness, QualityTarget::Centerness],
    )?;

    println!("  quality     suppression   beat F1  downbeat F1");
    for cell in &cells {
        let quality = match cell.quality {
            QualityTarget::Leftness => "leftness",
            QualityTarget::Centerness => "centerness",
        };
        let nms = match cell.nms {
            NmsKind::Hard => "hard",
            NmsKind::SoftLinear => "soft-linear",
            NmsKind::SoftGaussian => "soft-gaussian",
        };
        println!(
            "  {quality:<11} {nms:<13} {:>6}   {:>6}",
            f1(&Some(cell.report.beat)),
            f1(&cell.report.downbeat),
        );
    }
    println!("\nfinished in {:.1} s", started.elapsed().as_secs_f64());
    Ok(())
}

fn f1(m: &Option<ClassMetrics>) -> String {
    m.and_then(|c| c.f_measure)
        .map_or("na".to_string(), |f| format!("{f:.3}"))
}
