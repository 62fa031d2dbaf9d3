//! End-to-end detection on a simulated 20-dimensional series: thresholds,
//! per-scale estimates and the merged result.

use sbs_mvts::{evaluate, generate, sbs_mvts, Model, ModelSpec, MvtsConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ModelSpec::new(Model::M1_2, 20, 1024, 0.5, 3);
    let x = generate(&spec)?;
    let truth = x.truth.clone().unwrap_or_default();
    println!("p = {}, T = {}, true change-points {truth:?}", x.dim(), x.len());

    let cfg = MvtsConfig::default();
    let out = sbs_mvts(&x, &cfg)?;
    for (scale, set) in &out.per_scale {
        println!("scale {scale}: {:?}", set.locations());
    }
    let merged = out.merged.locations();
    println!("merged: {merged:?}");
    let report = evaluate(&merged, &truth, cfg.lambda_for(x.len()));
    println!(
        "{} estimates, detected {:?}, errors {:?}",
        report.n_hat, report.detected, report.errors
    );
    for d in &out.merged.diagnostics {
        println!("note: {d}");
    }
    Ok(())
}
