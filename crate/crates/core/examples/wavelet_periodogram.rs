//! Haar coefficients and wavelet periodogram panels of a bivariate series
//! whose cross-correlation flips sign half way.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbs_mvts::wavelet::{haar_coefficients, PeriodogramPanel, Scale};
use sbs_mvts::MultivariateSeries;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let len = 512;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a = Vec::with_capacity(len);
    let mut b = Vec::with_capacity(len);
    for t in 0..len {
        let common: f64 = rng.sample(StandardNormal);
        let own: f64 = rng.sample(StandardNormal);
        let sign = if t < len / 2 { 1.0 } else { -1.0 };
        a.push(common);
        b.push(sign * 0.9 * common + 0.3 * own);
    }
    let x = MultivariateSeries::new(vec![a, b])?;

    for depth in 1..=3 {
        let scale = Scale::from_depth(depth)?;
        let w = haar_coefficients(x.component(0), scale)?;
        let panel = PeriodogramPanel::new(&x, scale)?;
        let cross = panel.index_of(0, 1).expect("pair");
        let entries = panel.entries(cross);
        let half = entries.len() / 2;
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "scale {scale}: support {}, first valid t = {}, cross entry mean {:.3} then {:.3}",
            scale.support(),
            w.offset(),
            mean(&entries[..half]),
            mean(&entries[half..])
        );
    }

    let panel = PeriodogramPanel::new(&x, Scale::new(-1)?)?;
    let mut buf = Vec::new();
    panel.write_csv(&mut buf)?;
    let text = String::from_utf8(buf)?;
    println!("\n{}", text.lines().take(4).collect::<Vec<_>>().join("\n"));
    Ok(())
}
