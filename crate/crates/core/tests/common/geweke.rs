//! Joint-distribution test of the Gibbs sweep on a tiny LSB instance: the
//! marginal-conditional simulator draws parameters from the prior and data
//! given parameters; the successive-conditional simulator alternates data
//! draws with one sweep. Both target the same joint law.

use lsbvar::gibbs::{Model, PriorKind};
use lsbvar::linalg::{gaussian_from_covariance, logistic, sample_inverse_wishart};
use lsbvar::model::{ChainState, LongitudinalDataset, ModelHyperparams, Subject};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::normal;

pub const N: usize = 4;
pub const T: usize = 3;
pub const H: usize = 2;
pub const Q: usize = 2;

/// Tails light enough that every tested statistic has finite variance.
pub fn hyper() -> ModelHyperparams {
    ModelHyperparams {
        h: H,
        mu_alpha: DVector::from_vec(vec![0.3, -0.2]),
        sigma_alpha: DMatrix::from_diagonal(&DVector::from_vec(vec![1.5, 1.0])),
        sigma_b: DMatrix::from_element(1, 1, 2.0),
        sigma_gamma: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.5])),
        sigma_0: DMatrix::from_element(1, 1, 1.0 / 12.0),
        nu: 12.0,
        phi_000: DVector::from_element(1, 0.2),
        lambda: 1.0,
        v_00: DMatrix::from_element(1, 1, 0.8),
        tau_0: 10.0,
    }
}

pub struct Design {
    pub x: Vec<DMatrix<f64>>,
    pub z: Vec<DVector<f64>>,
}

pub fn design(rng: &mut impl Rng) -> Design {
    Design {
        x: (0..N).map(|_| DMatrix::from_fn(T, 1, |_, _| normal(rng))).collect(),
        z: (0..N).map(|_| DVector::from_fn(Q, |_, _| normal(rng))).collect(),
    }
}

fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// Independent draw of every parameter from the prior.
pub fn prior_draw(hp: &ModelHyperparams, design: &Design, rng: &mut impl Rng) -> ChainState {
    let v_0 = sample_inverse_wishart(hp.tau_0, &hp.v_00, rng).unwrap();
    let phi_00 = &hp.phi_000 + DVector::from_element(1, (v_0[(0, 0)] / hp.lambda).sqrt() * normal(rng));
    let atoms = (0..H).map(|_| scalar(phi_00[0] + v_0[(0, 0)].sqrt() * normal(rng))).collect();
    let sigma = scalar(1.0 / (hp.sigma_0[(0, 0)] * chi_square(hp.nu, rng)));
    let alphas: Vec<DVector<f64>> =
        (0..H - 1).map(|_| gaussian_from_covariance(&hp.mu_alpha, &hp.sigma_alpha, "alpha", rng).unwrap()).collect();
    let allocations = design
        .z
        .iter()
        .map(|z| {
            let v = logistic(alphas[0].dot(z));
            usize::from(rng.random::<f64>() >= v)
        })
        .collect();
    ChainState {
        b: DVector::from_element(1, hp.sigma_b[(0, 0)].sqrt() * normal(rng)),
        gamma: DVector::from_fn(Q, |j, _| hp.sigma_gamma[(j, j)].sqrt() * normal(rng)),
        sigma,
        atoms,
        allocations,
        alphas,
        sticks: vec![0.5, 1.0],
        phi_00,
        v_0,
        responses: Vec::new(),
    }
}

fn chi_square(df: f64, rng: &mut impl Rng) -> f64 {
    use rand_distr::{ChiSquared, Distribution};
    ChiSquared::new(df).unwrap().sample(rng)
}

/// Fresh trajectories given the parameters, starting from `y_0 = 0`.
pub fn simulate_data(state: &ChainState, design: &Design, rng: &mut impl Rng) -> LongitudinalDataset {
    let sd = state.sigma[(0, 0)].sqrt();
    let subjects = (0..N)
        .map(|i| {
            let phi = state.atoms[state.allocations[i]][(0, 0)];
            let shift = state.gamma.dot(&design.z[i]);
            let mut prev = 0.0;
            let y = DMatrix::from_fn(T, 1, |t, _| {
                prev = phi * prev + state.b[0] * design.x[i][(t, 0)] + shift + sd * normal(rng);
                prev
            });
            Subject {
                id: format!("g{i}"),
                responses: y,
                observed: vec![true; T],
                tv_covariates: design.x[i].clone(),
                base_covariates: design.z[i].clone(),
            }
        })
        .collect();
    LongitudinalDataset::new(1, 1, Q, subjects).unwrap()
}

pub const STAT_NAMES: [&str; 10] = ["b", "gamma_1", "gamma_2", "sigma", "phi_00", "b^2", "gamma_1^2", "gamma_2^2", "sigma^2", "phi_00^2"];

fn stats(s: &ChainState) -> [f64; 10] {
    let first = [s.b[0], s.gamma[0], s.gamma[1], s.sigma[(0, 0)], s.phi_00[0]];
    let mut out = [0.0; 10];
    for j in 0..5 {
        out[j] = first[j];
        out[j + 5] = first[j] * first[j];
    }
    out
}

fn mean_and_se(rows: &[[f64; 10]], batches: usize) -> ([f64; 10], [f64; 10]) {
    let n = rows.len();
    let size = n / batches;
    let mut mean = [0.0; 10];
    let mut se = [0.0; 10];
    for j in 0..10 {
        let batch_means: Vec<f64> =
            (0..batches).map(|b| rows[b * size..(b + 1) * size].iter().map(|r| r[j]).sum::<f64>() / size as f64).collect();
        let m = batch_means.iter().sum::<f64>() / batches as f64;
        let var = batch_means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
        mean[j] = m;
        se[j] = (var / batches as f64).sqrt();
    }
    (mean, se)
}

pub struct GewekeResult {
    pub names: [&'static str; 10],
    pub z: [f64; 10],
    /// Two-sided Bonferroni critical value for the family at level 1%.
    pub critical: f64,
}

impl GewekeResult {
    pub fn passes(&self) -> bool {
        self.z.iter().all(|z| z.abs() < self.critical)
    }
}

pub fn run(seed: u64, marginal: usize, successive: usize) -> GewekeResult {
    run_with(seed, marginal, successive, &hyper())
}

/// As [`run`], but the sweep uses `sweep_hyper` while the prior draws use
/// [`hyper`]; a mismatch must be detected.
pub fn run_with(seed: u64, marginal: usize, successive: usize, sweep_hyper: &ModelHyperparams) -> GewekeResult {
    let hp = hyper();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = design(&mut rng);

    let mc: Vec<[f64; 10]> = (0..marginal).map(|_| stats(&prior_draw(&hp, &design, &mut rng))).collect();

    let mut state = prior_draw(&hp, &design, &mut rng);
    let mut sc = Vec::with_capacity(successive);
    for _ in 0..successive {
        let data = simulate_data(&state, &design, &mut rng);
        state.responses = data.subjects().iter().map(|s| s.responses.clone()).collect();
        let model = Model::new(&data, sweep_hyper, PriorKind::Lsb).unwrap();
        model.sweep(&mut state, &mut rng).unwrap();
        sc.push(stats(&state));
    }

    let (m1, s1) = mean_and_se(&mc, 100);
    let (m2, s2) = mean_and_se(&sc, 100);
    let mut z = [0.0; 10];
    for j in 0..10 {
        z[j] = (m1[j] - m2[j]) / (s1[j] * s1[j] + s2[j] * s2[j]).sqrt();
    }
    // Upper 1 - 0.01 / (2 * 10) standard normal quantile.
    GewekeResult { names: STAT_NAMES, z, critical: 3.290_526_731_491_926 }
}
