//! Prior distribution of the number of occupied components implied by the
//! logit stick-breaking weights, over a grid of alpha variances.
//!
//! `cargo run --release --example prior_cluster_check`

use lsbvar::priors::{median_clusters, prior_check_grid};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> lsbvar::Result<()> {
    // Intercept plus three standardised covariates for 766 subjects.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = DMatrix::from_fn(766, 4, |_, c| if c == 0 { 1.0 } else { StandardNormal.sample(&mut rng) });
    let grid = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
    for (s, draws) in prior_check_grid(&z, 50, &grid, 2000, 9)? {
        let mean_max = draws.iter().map(|d| d.max_fraction).sum::<f64>() / draws.len() as f64;
        println!("sigma_alpha^2 = {s:>5}: median clusters {:>4}, mean largest-cluster share {mean_max:.3}", median_clusters(&draws));
    }
    Ok(())
}
