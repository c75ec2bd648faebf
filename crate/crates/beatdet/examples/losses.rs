//! Walk through the three loss components on concrete numbers.
//!
//! Shows how focal loss reweights easy vs hard classifications, how the
//! generalized-IoU loss penalizes disjoint intervals beyond plain IoU, and
//! how the quality head's cross-entropy treats its soft target. Finishes by
//! checking each analytic gradient against central finite differences.
//!
//! Run with: `cargo run --example losses`

use beatdet::geometry::{giou, iou, EventClass, Interval};
use beatdet::loss::{
    bce_from_logit, focal_from_logit, focal_loss, giou_loss, giou_loss_from_raw, gradient_check,
    leftness_bce, sigmoid,
};

fn main() -> beatdet::Result<()> {
    let (gamma, alpha) = (2.0, 0.25);
    println!("focal loss (γ = {gamma}, α = {alpha}) vs plain cross-entropy:");
    println!("  p(fg)   label     focal      plain");
    for (p, c) in [(0.9, true), (0.6, true), (0.1, true), (0.9, false)] {
        let plain = if c { -(p as f64).ln() } else { -(1.0 - p).ln() };
        println!(
            "  {p:.1}     {}  {:>9.5}  {:>9.5}",
            if c { "positive" } else { "negative" },
            focal_loss(p, c, gamma, alpha),
            plain
        );
    }
    println!("  (confident-and-correct is damped hardest; mistakes keep their gradient)");

    println!("\ngeneralized IoU loss on beat intervals:");
    let cases = [
        ((0.0, 1.0), (0.0, 1.0)),
        ((0.0, 2.0), (1.0, 3.0)),
        ((0.0, 1.0), (2.0, 3.0)),
        ((0.0, 1.0), (9.0, 10.0)),
    ];
    for ((pl, pr), (gl, gr)) in cases {
        let pred = Interval::new(pl, pr, EventClass::Beat)?;
        let gt = Interval::new(gl, gr, EventClass::Beat)?;
        println!(
            "  pred ({pl}, {pr}) vs gt ({gl}, {gr}): iou {:>6.3}, giou {:>6.3}, loss {:.3}",
            iou(&pred, &gt),
            giou(&pred, &gt),
            giou_loss(&pred, &gt)
        );
    }
    println!("  (disjoint pairs all have iou 0, but giou still ranks them by distance)");

    let reg_target = (1.2, 3.6);
    println!("\nquality target for offsets {reg_target:?}:");
    for p in [0.25, 0.5, 0.75] {
        println!("  predicted quality {p:.2}: bce {:.4}", leftness_bce(reg_target, p));
    }

    println!("\ngradient checks (max relative error vs central differences):");
    let probe = [0.7, -1.3, 0.4, 2.0];

    let focal_grad: Vec<f64> = probe
        .iter()
        .map(|&z| focal_from_logit(z, true, gamma, alpha).1)
        .collect();
    let err = gradient_check(
        |x| x.iter().map(|&z| focal_from_logit(z, true, gamma, alpha).0).sum(),
        &probe,
        &focal_grad,
        1e-6,
    );
    println!("  focal-from-logit: {err:.2e}");

    let raw = (probe[0], probe[1]);
    let target = (1.0, 2.0);
    let (_, dl, dr) = giou_loss_from_raw(raw, target);
    let err = gradient_check(
        |x| giou_loss_from_raw((x[0], x[1]), target).0,
        &[raw.0, raw.1],
        &[dl, dr],
        1e-6,
    );
    println!("  giou-from-raw:    {err:.2e}");

    let t = 0.37;
    let bce_grad: Vec<f64> = probe.iter().map(|&z| bce_from_logit(z, t).1).collect();
    let err = gradient_check(
        |x| x.iter().map(|&z| bce_from_logit(z, t).0).sum(),
        &probe,
        &bce_grad,
        1e-6,
    );
    println!("  bce-from-logit:   {err:.2e}");
    println!("  (sigmoid(0) = {}, so a zero logit is maximal uncertainty)", sigmoid(0.0));
    Ok(())
}
