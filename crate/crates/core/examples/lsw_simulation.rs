//! Simulate a bivariate locally stationary wavelet process from a TOML
//! description and compare its periodogram with the expected one.

use sbs_mvts::lsw::{expected_periodogram, simulate, LswSpec};
use sbs_mvts::wavelet::{PeriodogramPanel, Scale};

const SPEC: &str = r#"
p = 2
truncation = 5

[[transfer]]
scale = -1
component = 0
breaks = [0.5]
values = [1.0, 0.3]

[[transfer]]
scale = -1
component = 1
values = [0.8]

[[transfer]]
scale = -3
component = 0
values = [0.5]

[[correlation]]
scale = -1
pair = [0, 1]
breaks = [0.25]
values = [0.0, 0.7]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = LswSpec::from_toml(SPEC)?;
    let len = 2048;
    println!("breaks at z = {:?}, truth at T = {len}: {:?}", spec.breaks(), spec.truth(len));

    let reps = 500;
    let finest = Scale::new(-1)?;
    let times = [200, 800, 1500];
    let pairs = [(0, 0), (1, 1), (0, 1)];
    let mut sums = [[0.0; 3]; 3];
    for seed in 0..reps {
        let x = simulate(&spec, len, seed)?;
        let panel = PeriodogramPanel::new(&x, finest)?;
        for (row, &(j, l)) in pairs.iter().enumerate() {
            // unsigned products, whose mean is the cross spectrum's beta
            let entries = panel.raw_cross(j, l);
            for (q, &t) in times.iter().enumerate() {
                sums[row][q] += entries[t - panel.offset()] / reps as f64;
            }
        }
    }
    for (row, &(j, l)) in pairs.iter().enumerate() {
        for (q, &t) in times.iter().enumerate() {
            let beta = expected_periodogram(&spec, j, l, finest, t as f64 / len as f64)?;
            println!(
                "({j},{l}) t = {t:4}: Monte Carlo mean {:6.3}, expected {beta:6.3}",
                sums[row][q]
            );
        }
    }
    Ok(())
}
