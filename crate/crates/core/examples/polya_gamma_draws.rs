//! Draws from the Polya-Gamma PG(1, c) law against its exact mean and variance.
//!
//! `cargo run --release --example polya_gamma_draws`

use lsbvar::gibbs::polya_gamma::{pg1_mean, pg1_variance, sample_pg1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let n = 200_000;
    for c in [0.0, 0.5, 1.0, 2.0, 5.0, 20.0] {
        let draws: Vec<f64> = (0..n).map(|_| sample_pg1(c, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let z = (mean - pg1_mean(c)) / (pg1_variance(c) / n as f64).sqrt();
        println!("c = {c:>4}: mean {mean:.6} (exact {:.6}, z = {z:+.2}), variance {var:.6} (exact {:.6})", pg1_mean(c), pg1_variance(c));
    }
}
