//! Exact conditional law of missing responses given the observed ones, and
//! draws from it, for a single subject with known parameters.
//!
//! `cargo run --example impute_missing`

use lsbvar::missing::{build_trajectory_law, impute_subject, stack};
use lsbvar::model::Subject;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> lsbvar::Result<()> {
    let phi = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.8]);
    let b = DMatrix::from_row_slice(2, 1, &[0.5, 0.2]);
    let gamma = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
    let sigma = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]);
    let t_len = 4;
    let x = DMatrix::from_fn(t_len, 1, |t, _| ((t + 1) as f64).sqrt());
    let z = DVector::from_vec(vec![0.4]);

    let responses = DMatrix::from_row_slice(t_len, 2, &[0.8, -0.3, 1.9, -0.5, f64::NAN, -0.9, 3.1, f64::NAN]);
    let observed: Vec<bool> = responses.transpose().iter().map(|v| v.is_finite()).collect();
    let subject = Subject { id: "demo".into(), responses: responses.clone(), observed, tv_covariates: x.clone(), base_covariates: z.clone() };

    let law = build_trajectory_law(&phi, &b, &gamma, &sigma, &x, &z)?;
    let missing = subject.missing_positions();
    let filled = DMatrix::from_fn(t_len, 2, |t, j| if responses[(t, j)].is_finite() { responses[(t, j)] } else { 0.0 });
    let (mean, precision) = law.conditional(&stack(&filled), &missing);
    let cov = precision.try_inverse().expect("SPD");
    println!("missing positions (row-major t*k + j): {missing:?}");
    println!("conditional mean {:.4}", mean.transpose());
    println!("conditional covariance{:.4}", cov);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 20_000;
    let mut acc = DVector::zeros(missing.len());
    for _ in 0..n {
        let draw = impute_subject(&law, &subject, &filled, &mut rng)?;
        let y = stack(&draw);
        for (a, &m) in missing.iter().enumerate() {
            acc[a] += y[m];
        }
    }
    println!("Monte Carlo mean of {n} imputations {:.4}", (acc / n as f64).transpose());
    Ok(())
}
