//! Missing-entry conditionals and observed-data log densities against a dense
//! covariance-form oracle built from the stacked recursion `A y = m + e`.

use super::*;
use lsbvar::gibbs::{Model, PriorKind};
use lsbvar::missing::{build_trajectory_law, impute_subject, regression_means, stack, TrajectoryLaw};
use lsbvar::model::Dims;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

/// Dense mean and covariance of the stacked trajectory: `A^{-1} m` and
/// `A^{-1} (I (x) Sigma) A^{-T}`.
fn dense_law(phi: &DMatrix<f64>, sigma: &DMatrix<f64>, means: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (t, k) = means.shape();
    let n = t * k;
    let mut a = DMatrix::<f64>::identity(n, n);
    for s in 1..t {
        a.view_mut((s * k, (s - 1) * k), (k, k)).copy_from(&(-phi));
    }
    let a_inv = a.try_inverse().unwrap();
    let noise = DMatrix::<f64>::identity(t, t).kronecker(sigma);
    let m = DVector::from_iterator(n, (0..n).map(|e| means[(e / k, e % k)]));
    (&a_inv * m, &a_inv * noise * a_inv.transpose())
}

fn pick(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

fn block(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Conditional mean and covariance of the `missing` block by the Schur complement.
fn schur_conditional(mean: &DVector<f64>, cov: &DMatrix<f64>, y: &DVector<f64>, missing: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let observed: Vec<usize> = (0..y.len()).filter(|i| !missing.contains(i)).collect();
    let c_mo = block(cov, missing, &observed);
    let c_oo_inv = block(cov, &observed, &observed).try_inverse().unwrap();
    let resid = pick(y, &observed) - pick(mean, &observed);
    let cond_mean = pick(mean, missing) + &c_mo * &c_oo_inv * resid;
    let cond_cov = block(cov, missing, missing) - &c_mo * c_oo_inv * c_mo.transpose();
    (cond_mean, cond_cov)
}

pub fn precision_form_conditional_matches_schur_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for _ in 0..200 {
        let k = rng.random_range(1..=3);
        let t = rng.random_range(1..=12 / k);
        let n = t * k;
        let phi = random_matrix(&mut rng, k, k, 0.6);
        let sigma = random_spd(&mut rng, k);
        let means = random_matrix(&mut rng, t, k, 1.0);
        let law = TrajectoryLaw::from_parts(&phi, &sigma.clone().try_inverse().unwrap(), &means);
        let (mean, cov) = dense_law(&phi, &sigma, &means);
        assert!(rel_close(&DMatrix::from_column_slice(n, 1, law.mean().as_slice()), &DMatrix::from_column_slice(n, 1, mean.as_slice()), TOL));
        assert!(rel_close(&law.covariance_dense().unwrap(), &cov, TOL));

        let mut missing: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.4).collect();
        if missing.is_empty() {
            missing.push(rng.random_range(0..n));
        }
        let y = DVector::from_fn(n, |_, _| normal(&mut rng));
        let (cm, precision) = law.conditional(&y, &missing);
        let (om, ocov) = if missing.len() == n {
            (mean.clone(), cov.clone())
        } else {
            schur_conditional(&mean, &cov, &y, &missing)
        };
        let cm = DMatrix::from_column_slice(cm.len(), 1, cm.as_slice());
        let om = DMatrix::from_column_slice(om.len(), 1, om.as_slice());
        assert!(rel_close(&cm, &om, TOL), "mean mismatch {}", max_abs_diff(&cm, &om));
        let ccov = precision.try_inverse().unwrap();
        assert!(rel_close(&ccov, &ocov, TOL), "cov mismatch {}", max_abs_diff(&ccov, &ocov));
    }
}

pub fn conditional_draws_have_the_oracle_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (k, t) = (2, 3);
    let phi = random_matrix(&mut rng, k, k, 0.5);
    let sigma = random_spd(&mut rng, k);
    let means = random_matrix(&mut rng, t, k, 1.0);
    let law = TrajectoryLaw::from_parts(&phi, &sigma.clone().try_inverse().unwrap(), &means);
    let (mean, cov) = dense_law(&phi, &sigma, &means);
    let y = DVector::from_fn(t * k, |_, _| normal(&mut rng));
    let missing = [1, 2, 5];
    let (om, ocov) = schur_conditional(&mean, &cov, &y, &missing);
    let n = 100_000;
    let mut sum = DVector::zeros(3);
    for _ in 0..n {
        sum += law.sample_conditional(&y, &missing, &mut rng).unwrap();
    }
    let avg = sum / n as f64;
    for j in 0..3 {
        let se = (ocov[(j, j)] / n as f64).sqrt();
        assert!((avg[j] - om[j]).abs() < 5.0 * se, "entry {j}: {} vs {}", avg[j], om[j]);
    }
}

pub fn imputation_leaves_observed_entries_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = Dims { k: 3, p: 1, q: 2 };
    let ds = random_dataset(&mut rng, 20, (2, 5), dims, 0.3);
    let hyper = random_hyper(&mut rng, dims, 3);
    let state = random_state(&mut rng, &ds, hyper.h);
    for (i, s) in ds.subjects().iter().enumerate() {
        let law = build_trajectory_law(state.phi_of(i), &state.b_matrix(), &state.gamma_matrix(), &state.sigma, &s.tv_covariates, &s.base_covariates).unwrap();
        let out = impute_subject(&law, s, &state.responses[i], &mut rng).unwrap();
        for tt in 0..s.horizon() {
            for j in 0..3 {
                if s.is_observed(tt, j) {
                    assert_eq!(out[(tt, j)], s.responses[(tt, j)]);
                } else {
                    assert!(out[(tt, j)].is_finite());
                }
            }
        }
    }
}

pub fn pointwise_loglik_sums_to_dense_observed_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dims = Dims { k: 2, p: 2, q: 1 };
    for missing in [0.0, 0.35] {
        let ds = random_dataset(&mut rng, 15, (2, 5), dims, missing);
        let hyper = random_hyper(&mut rng, dims, 3);
        let state = random_state(&mut rng, &ds, hyper.h);
        let model = Model::new(&ds, &hyper, PriorKind::Lsb).unwrap();
        let terms = model.pointwise_loglik(&state).unwrap();
        assert_eq!(terms.len(), ds.n_observed_entries());
        let mut offset = 0;
        for (i, s) in ds.subjects().iter().enumerate() {
            let m = regression_means(&state.b_matrix(), &state.gamma_matrix(), &s.tv_covariates, &s.base_covariates);
            let (mean, cov) = dense_law(state.phi_of(i), &state.sigma, &m);
            let obs = s.observed_positions();
            let y = stack(&state.responses[i]);
            let oracle = dense_gaussian_logpdf(&pick(&y, &obs), &pick(&mean, &obs), &block(&cov, &obs, &obs));
            let ours: f64 = terms[offset..offset + obs.len()].iter().sum();
            assert!((ours - oracle).abs() <= TOL * (1.0 + oracle.abs()), "subject {i}: {ours} vs {oracle}");
            offset += obs.len();
        }
    }
}
