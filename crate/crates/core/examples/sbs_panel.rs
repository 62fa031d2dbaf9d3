//! Sparsified binary segmentation of a small in-memory panel with two
//! changes, each carried by a different subset of sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbs_mvts::sbs::{post_process_within, sbs_segment, Balance, DensePanel, SbsConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (d, len) = (12, 1024);
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let rows: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            (0..len)
                .map(|t| {
                    let z: f64 = rng.sample(StandardNormal);
                    let level = match (k, t) {
                        (0..=2, 300..) => 2.5,
                        (9..=11, 700..) => 0.4,
                        _ => 1.0,
                    };
                    level * z * z
                })
                .collect()
        })
        .collect();
    let panel = DensePanel::new(rows)?;

    // squared-Gaussian sequences: a flat threshold is enough for a demo
    let config = SbsConfig::new(vec![6.0; d], 16).with_balance(Balance::MinDistance);
    let found = sbs_segment(&panel, &config)?;
    for p in &found.points {
        println!(
            "b = {:4} level {} segment [{}, {}] value {:7.2} sequences {:?}",
            p.location,
            p.level,
            p.segment.start(),
            p.segment.end(),
            p.value,
            p.passing_sequences
        );
    }
    let kept = post_process_within(&panel, &found, &config)?;
    println!("after pruning: {:?}", kept.locations());
    println!("\n{}", kept.to_json()?);
    Ok(())
}
