//! Pick the suppression IoU threshold from data instead of folklore.
//!
//! Trains a quick model, collects its pre-suppression candidates on fresh
//! tracks, and histograms the IoU between each candidate and its next
//! neighbor, split by confidence. Confident candidates form two modes —
//! near-duplicates of the same event at high IoU and the next event over at
//! low IoU — and the threshold lands in the valley between them. A plot of
//! the histogram is written as SVG for inspection.
//!
//! Run with: `cargo run --release --example analyze_iou`

use beatdet::decode::{score_and_collect, DecodeConfig};
use beatdet::geometry::EventClass;
use beatdet::histogram::{neighbor_iou_histogram, select_iou_threshold, HistogramConfig};
use beatdet::io::{histogram_svg, Provenance};
use beatdet::toy::{extract_pyramid, random_specs, synth_track, train_toy, ToyHeads, TrainConfig};

fn main() -> beatdet::Result<()> {
    let train = random_specs(10, (60.0, 180.0), &[3, 4], 8.0, 0.0, 101);
    let probe = random_specs(8, (60.0, 180.0), &[3, 4], 8.0, 0.0, 202);
    let cfg = TrainConfig {
        epochs: 300,
        patience: 60,
        ..TrainConfig::default()
    };
    let mut heads = ToyHeads::new(cfg.levels.num_levels, cfg.levels.base_level, cfg.seed);
    println!("training a probe model on {} tracks...", train.len());
    train_toy(&train, &[], &mut heads, &cfg)?;

    // Permissive collection: everything above a low floor, no suppression.
    let collect = DecodeConfig {
        pre_filter: 0.2,
        ..cfg.decode
    };
    let mut per_track: Vec<Vec<beatdet::decode::Detection>> = Vec::new();
    for spec in &probe {
        let (audio, _) = synth_track(spec)?;
        let pyramid = extract_pyramid(&audio, &cfg.levels)?;
        let preds = heads.forward(&pyramid)?;
        let [beats, downs] = score_and_collect(&preds, pyramid.grid(), &collect)?;
        per_track.push(beats.into_iter().chain(downs).collect());
    }
    let total: usize = per_track.iter().map(Vec::len).sum();
    println!("collected {total} raw candidates from {} tracks", probe.len());

    let hist_cfg = HistogramConfig::default();
    println!("\nrow-normalized neighbor-IoU mass (beat class):");
    let beat_hist = neighbor_iou_histogram(&per_track, EventClass::Beat, &hist_cfg)?;
    let mass = beat_hist.mass();
    println!("  confidence   IoU bins 0.0..1.0 in tenths");
    for (row, masses) in mass.iter().enumerate() {
        let lo = hist_cfg.confidence_edges[row];
        let hi = hist_cfg.confidence_edges[row + 1];
        let bars: String = masses
            .iter()
            .map(|&m| {
                let level = (m * 8.0).round() as usize;
                [" ", "▁", "▂", "▃", "▄", "▅", "▆", "▇", "█"][level.min(8)]
            })
            .collect();
        println!("  [{lo:.1}, {hi:.1})   |{bars}|  n={}", beat_hist.row_total(row));
    }

    for class in [EventClass::Beat, EventClass::Downbeat] {
        let hist = neighbor_iou_histogram(&per_track, class, &hist_cfg)?;
        match select_iou_threshold(&hist, 0.2) {
            Ok(t) => println!("\n{class}: suppress above IoU {t}"),
            Err(e) => println!("\n{class}: {e}"),
        }
    }

    let out = std::env::temp_dir().join("beatdet-analyze-iou.svg");
    let downbeat_hist = neighbor_iou_histogram(&per_track, EventClass::Downbeat, &hist_cfg)?;
    let svg = histogram_svg(
        &[&beat_hist, &downbeat_hist],
        Some(&Provenance::new("example", cfg.seed)),
    );
    std::fs::write(&out, svg).map_err(|e| beatdet::Error::io(&out, e))?;
    println!("wrote histogram plot to {}", out.display());
    Ok(())
}
