//! Root-segment aggregates for the sparse-change and spurious-CUSUM
//! examples, using the finest differenced panel `(x_t - x_{t-1})^2 / 2`.

use sbs_mvts::cusum::{aggregate, cusum_curve, Aggregation, Segment};
use sbs_mvts::mvts::{calibrate_lenient, CalibrationConfig};
use sbs_mvts::sbs::PanelSource;
use sbs_mvts::simbench::difference_panel;
use sbs_mvts::wavelet::Scale;
use sbs_mvts::{generate, Model, ModelSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (model, truth) in [(Model::A, 512), (Model::B, 100)] {
        for d in [2, 100] {
            let x = generate(&ModelSpec::new(model, d, 1024, 1.0, 0))?;
            let panel = difference_panel(&x)?;
            let table = calibrate_lenient(&x, 1, &CalibrationConfig::default())?;
            let diag: Vec<_> = (0..d).map(|j| (j, j)).collect();
            let pis = table.for_scale(Scale::new(-1)?, &diag)?;
            let root = Segment::full(panel.len())?;
            let curves = (0..d)
                .map(|k| cusum_curve(panel.row(k), root))
                .collect::<Result<Vec<_>, _>>()?;
            print!("{model} d = {d:3} (change at {truth}):");
            for rule in [Aggregation::Avg, Aggregation::Max, Aggregation::Thr] {
                let agg = aggregate(&curves, &pis, rule)?;
                let (b, v) = agg
                    .values
                    .iter()
                    .enumerate()
                    .fold((0, 0.0), |best, (b, &v)| if v > best.1 { (b, v) } else { best });
                if v > 0.0 {
                    print!("  {rule} peak {:4} ({v:.2})", b + 1);
                } else {
                    print!("  {rule} empty");
                }
            }
            println!();
        }
    }
    Ok(())
}
