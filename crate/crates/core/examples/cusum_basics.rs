//! CUSUM curves of a single multiplicative sequence and the three ways of
//! combining several of them.

use sbs_mvts::cusum::{aggregate, cusum_curve, Aggregation, Segment};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a noiseless level shift from 1 to 4 after t = 63
    let step: Vec<f64> = (0..128).map(|t| if t < 64 { 1.0 } else { 4.0 }).collect();
    let root = Segment::full(step.len())?;
    let curve = cusum_curve(&step, root)?;
    println!("step: argmax b = {}, value {:.3}", curve.argmax(), curve.max());

    // two flat sequences and one with a change
    let flat = vec![2.0; 128];
    let wobble: Vec<f64> = (0..128).map(|t| 1.0 + 0.1 * ((t % 7) as f64)).collect();
    let curves = vec![
        cusum_curve(&flat, root)?,
        cusum_curve(&wobble, root)?,
        curve.clone(),
    ];
    let thresholds = [1.0, 1.0, 1.0];
    for rule in [Aggregation::Thr, Aggregation::Avg, Aggregation::Max] {
        let agg = aggregate(&curves, &thresholds, rule)?;
        let (b, v) = agg
            .values
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (b, &v)| if v > best.1 { (b, v) } else { best });
        println!(
            "{rule}: peak {v:.3} at b = {b}, {} sequence(s) above threshold there",
            agg.contributing_counts[b]
        );
    }

    let mut out = std::io::stdout().lock();
    println!("\nfirst rows of the step curve as CSV:");
    let short = cusum_curve(&step[56..72], Segment::new(56, 71)?)?;
    short.write_csv(&mut out)?;
    Ok(())
}
