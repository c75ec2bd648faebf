//! Fit pyramid level boundaries to a corpus with 1D k-means.
//!
//! Pools beat and downbeat interval lengths from a batch of synthetic
//! annotations, clusters them into five groups, and prints the resulting
//! centroids and level boundaries next to the built-in defaults. The
//! boundaries are midpoints between adjacent centroids, bracketed by 0 and
//! +∞, so every possible interval length lands on exactly one level.
//!
//! Run with: `cargo run --example fit_levels`

use beatdet::geometry::intervals_from_beats;
use beatdet::kmeans::kmeans_1d;
use beatdet::pyramid::LevelConfig;
use beatdet::toy::{random_specs, synth_track};

fn main() -> beatdet::Result<()> {
    let specs = random_specs(50, (60.0, 180.0), &[3, 4], 10.0, 0.0, 101);
    let mut lengths = Vec::new();
    for spec in &specs {
        let (_, annotation) = synth_track(spec)?;
        let (beats, downbeats) = intervals_from_beats(&annotation);
        lengths.extend(beats.iter().chain(&downbeats).map(|iv| iv.length()));
    }
    println!(
        "pooled {} interval lengths from {} tracks",
        lengths.len(),
        specs.len()
    );

    let fit = kmeans_1d(&lengths, 5, 7)?;
    println!("\n  level  centroid   covers lengths in");
    for (i, &c) in fit.centroids.iter().enumerate() {
        println!(
            "  {i}      {c:>6.3} s   ({:.3}, {:.3}] s",
            fit.boundaries[i],
            fit.boundaries[i + 1]
        );
    }
    println!("  inertia {:.4}", fit.inertia);

    let defaults = LevelConfig::default();
    println!("\nfitted boundaries:  {}", fmt_bounds(&fit.boundaries));
    println!("default boundaries: {}", fmt_bounds(&defaults.size_limits));
    Ok(())
}

fn fmt_bounds(bounds: &[f64]) -> String {
    bounds
        .iter()
        .map(|b| {
            if b.is_infinite() {
                "∞".to_string()
            } else {
                format!("{b:.3}")
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}
