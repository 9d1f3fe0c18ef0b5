//! Random fixtures shared by the integration tests.
#![allow(dead_code)]

use lsbvar::model::{ChainState, Dims, LongitudinalDataset, ModelHyperparams, Subject};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| sd * normal(rng))
}

/// Well-conditioned SPD matrix: `A A' / d + I / 2`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, d, d, 1.0);
    &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5
}

/// Stable autoregression matrix (spectral norm below one).
pub fn random_phi<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, k, k, 1.0);
    let norm = m.norm().max(1e-9);
    m * (0.8 / norm)
}

/// `n` subjects with horizons in `t_min..=t_max`; each response entry is
/// missing with probability `missing`, keeping the first visit complete.
pub fn random_dataset<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    (t_min, t_max): (usize, usize),
    dims: Dims,
    missing: f64,
) -> LongitudinalDataset {
    let Dims { k, p, q } = dims;
    let subjects = (0..n)
        .map(|i| {
            let t = rng.random_range(t_min..=t_max);
            let observed: Vec<bool> = (0..t * k).map(|e| e < k || rng.random::<f64>() >= missing).collect();
            let responses = DMatrix::from_fn(t, k, |r, j| if observed[r * k + j] { normal(rng) } else { f64::NAN });
            Subject {
                id: format!("u{i}"),
                responses,
                observed,
                tv_covariates: random_matrix(rng, t, p, 1.0),
                base_covariates: DVector::from_fn(q, |_, _| normal(rng)),
            }
        })
        .collect();
    LongitudinalDataset::new(k, p, q, subjects).unwrap()
}

/// Random hyperparameters with proper, non-identity priors.
pub fn random_hyper<R: Rng + ?Sized>(rng: &mut R, dims: Dims, h: usize) -> ModelHyperparams {
    let Dims { k, p, q } = dims;
    let d = k * k;
    ModelHyperparams {
        h,
        mu_alpha: DVector::from_fn(q, |_, _| 0.3 * normal(rng)),
        sigma_alpha: random_spd(rng, q),
        sigma_b: random_spd(rng, k * p),
        sigma_gamma: random_spd(rng, k * q),
        sigma_0: random_spd(rng, k),
        nu: k as f64 + 2.0 + rng.random::<f64>(),
        phi_000: DVector::from_fn(d, |_, _| 0.2 * normal(rng)),
        lambda: 0.5 + rng.random::<f64>(),
        v_00: random_spd(rng, d),
        tau_0: d as f64 + 2.0 + rng.random::<f64>(),
    }
}

/// Random chain state whose completed responses fill missing entries with noise.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, ds: &LongitudinalDataset, h: usize) -> ChainState {
    let (k, p, q) = (ds.resp_dim(), ds.tv_cov_dim(), ds.base_cov_dim());
    let responses = ds
        .subjects()
        .iter()
        .map(|s| DMatrix::from_fn(s.horizon(), k, |t, j| if s.is_observed(t, j) { s.responses[(t, j)] } else { normal(rng) }))
        .collect();
    let mut sticks: Vec<f64> = (0..h).map(|_| rng.random_range(0.1..0.9)).collect();
    if let Some(last) = sticks.last_mut() {
        *last = 1.0;
    }
    ChainState {
        b: DVector::from_fn(k * p, |_, _| 0.5 * normal(rng)),
        gamma: DVector::from_fn(k * q, |_, _| 0.5 * normal(rng)),
        sigma: random_spd(rng, k),
        atoms: (0..h).map(|_| random_phi(rng, k)).collect(),
        allocations: (0..ds.n_subjects()).map(|_| rng.random_range(0..h)).collect(),
        alphas: (0..h.saturating_sub(1)).map(|_| DVector::from_fn(q, |_, _| normal(rng))).collect(),
        sticks,
        phi_00: DVector::from_fn(k * k, |_, _| 0.3 * normal(rng)),
        v_0: random_spd(rng, k * k),
        responses,
    }
}

/// Log density of `N(x; mean, cov)` through a dense inverse and determinant.
pub fn dense_gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let r = x - mean;
    let inv = cov.clone().try_inverse().unwrap();
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + cov.determinant().ln() + (r.transpose() * inv * &r)[(0, 0)])
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}

pub fn rel_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    max_abs_diff(a, b) <= tol * (1.0 + b.abs().max())
}

pub mod geweke;

/// Mean and variance of `PG(1, c)` from its representation as an infinite
/// weighted sum of unit exponentials, `(1 / 2 pi^2) sum_k g_k / ((k - 1/2)^2 + c^2 / 4 pi^2)`,
/// summed directly with an integral tail correction.
pub fn pg1_series_moments(c: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    let a = c * c / (4.0 * PI * PI);
    let terms = 200_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in (1..=terms).rev() {
        let d = (k as f64 - 0.5).powi(2) + a;
        s1 += 1.0 / d;
        s2 += 1.0 / (d * d);
    }
    // Tail beyond `terms` by the midpoint integral of 1/x^2 and 1/x^4.
    let edge = terms as f64;
    s1 += 1.0 / edge;
    s2 += 1.0 / (3.0 * edge.powi(3));
    (s1 / (2.0 * PI * PI), s2 / (4.0 * PI.powi(4)))
}

pub mod conjugacy;
pub mod missing;
pub mod oracles;

/// Sample mean and variance of `n` draws of `PG(1, c)` from a seeded stream.
pub fn pg1_sample_moments(c: f64, n: usize, seed: u64) -> (f64, f64) {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = lsbvar::gibbs::polya_gamma::sample_pg1(c, &mut rng);
        assert!(x > 0.0 && x.is_finite());
        s1 += x;
        s2 += x * x;
    }
    let mean = s1 / n as f64;
    (mean, s2 / n as f64 - mean * mean)
}
