//! Full conditionals of the Gibbs sweep against independently assembled
//! posteriors: dense stacked regressions, scalar closed forms and direct
//! likelihood evaluation.

use super::*;
use lsbvar::gibbs::{Model, PriorKind};
use lsbvar::linalg::vec_row;
use lsbvar::model::{ChainState, Dims, LongitudinalDataset, ModelHyperparams};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;
const DIMS: Dims = Dims { k: 2, p: 2, q: 3 };

fn inv(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().unwrap()
}

/// Posterior of `beta` in `w_n = X_n beta + e_n`, `e_n ~ N(0, Sigma)`,
/// `beta ~ N(m0, V0)`, from explicit per-observation design matrices.
fn dense_regression(
    rows: &[(DMatrix<f64>, DVector<f64>)],
    sigma: &DMatrix<f64>,
    m0: &DVector<f64>,
    v0: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s_inv = inv(sigma);
    let mut precision = inv(v0);
    let mut potential = &precision * m0;
    for (x, w) in rows {
        precision += x.transpose() * &s_inv * x;
        potential += x.transpose() * &s_inv * w;
    }
    (inv(&precision) * potential, precision)
}

/// `I_k (x) r'`: maps row-major `vec(M)` to `M r`.
fn design(k: usize, r: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::identity(k, k).kronecker(&r.transpose())
}

fn lag(y: &DMatrix<f64>, t: usize) -> DVector<f64> {
    if t == 0 {
        DVector::zeros(y.ncols())
    } else {
        y.row(t - 1).transpose()
    }
}

struct Fixture {
    data: LongitudinalDataset,
    hyper: ModelHyperparams,
    state: ChainState,
}

fn fixture(seed: u64, dims: Dims, h: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = random_dataset(&mut rng, 7, (2, 5), dims, 0.2);
    let hyper = random_hyper(&mut rng, dims, h);
    let state = random_state(&mut rng, &data, h);
    Fixture { data, hyper, state }
}

pub fn regression_coefficients_match_dense_oracle() {
    for seed in 0..5 {
        let f = fixture(seed, DIMS, 3);
        let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
        let k = DIMS.k;
        let s_inv = inv(&f.state.sigma);
        let (b, gamma) = (f.state.b_matrix(), f.state.gamma_matrix());

        let mut b_rows = Vec::new();
        let mut g_rows = Vec::new();
        for (i, s) in f.data.subjects().iter().enumerate() {
            let y = &f.state.responses[i];
            let phi = &f.state.atoms[f.state.allocations[i]];
            for t in 0..s.horizon() {
                let x = s.tv_covariates.row(t).transpose();
                let ar = phi * lag(y, t);
                b_rows.push((design(k, &x), y.row(t).transpose() - &ar - &gamma * &s.base_covariates));
                g_rows.push((design(k, &s.base_covariates), y.row(t).transpose() - &ar - &b * &x));
            }
        }
        let (mb, pb) = dense_regression(&b_rows, &f.state.sigma, &DVector::zeros(k * DIMS.p), &f.hyper.sigma_b);
        let got = model.b_conditional(&f.state, &s_inv).unwrap();
        assert!(rel_close(&got.precision, &pb, TOL));
        assert!((got.mean - mb).amax() < TOL * 10.0);

        let (mg, pg) = dense_regression(&g_rows, &f.state.sigma, &DVector::zeros(k * DIMS.q), &f.hyper.sigma_gamma);
        let got = model.gamma_conditional(&f.state, &s_inv).unwrap();
        assert!(rel_close(&got.precision, &pg, TOL));
        assert!((got.mean - mg).amax() < TOL * 10.0);
    }
}

pub fn scalar_regression_closed_form() {
    let dims = Dims { k: 1, p: 1, q: 1 };
    let f = fixture(11, dims, 2);
    let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
    let sigma = f.state.sigma[(0, 0)];
    let (g, sb) = (f.state.gamma[0], f.hyper.sigma_b[(0, 0)]);
    let (mut sxx, mut sxw) = (0.0, 0.0);
    for (i, s) in f.data.subjects().iter().enumerate() {
        let y = &f.state.responses[i];
        let phi = f.state.atoms[f.state.allocations[i]][(0, 0)];
        for t in 0..s.horizon() {
            let prev = if t == 0 { 0.0 } else { y[(t - 1, 0)] };
            let x = s.tv_covariates[(t, 0)];
            let w = y[(t, 0)] - phi * prev - g * s.base_covariates[0];
            sxx += x * x;
            sxw += x * w;
        }
    }
    let precision = 1.0 / sb + sxx / sigma;
    let got = model.b_conditional(&f.state, &DMatrix::from_element(1, 1, 1.0 / sigma)).unwrap();
    assert!((got.precision[(0, 0)] - precision).abs() < TOL * precision);
    assert!((got.mean[0] - sxw / sigma / precision).abs() < TOL);
}

pub fn error_covariance_matches_residual_scatter() {
    for seed in 0..5 {
        let f = fixture(100 + seed, DIMS, 3);
        let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
        let (b, gamma) = (f.state.b_matrix(), f.state.gamma_matrix());
        let mut scale = inv(&f.hyper.sigma_0);
        let mut n = 0;
        for (i, s) in f.data.subjects().iter().enumerate() {
            let y = &f.state.responses[i];
            for t in 0..s.horizon() {
                let e = y.row(t).transpose()
                    - &f.state.atoms[f.state.allocations[i]] * lag(y, t)
                    - &b * s.tv_covariates.row(t).transpose()
                    - &gamma * &s.base_covariates;
                scale += &e * e.transpose();
                n += 1;
            }
        }
        let got = model.sigma_conditional(&f.state);
        assert!((got.df - (f.hyper.nu + n as f64)).abs() < TOL);
        assert!(rel_close(&got.scale, &scale, TOL));
    }
}

pub fn scalar_error_variance_is_gamma_update_of_precision() {
    // Sigma^{-1} ~ Gamma(nu / 2, rate 1 / (2 s0)) a priori; the posterior is
    // Gamma((nu + n) / 2, rate 1 / (2 s0) + SSE / 2), i.e. IW(nu + n, 1 / s0 + SSE).
    let dims = Dims { k: 1, p: 1, q: 1 };
    let f = fixture(12, dims, 2);
    let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
    let s0 = f.hyper.sigma_0[(0, 0)];
    let (mut sse, mut n) = (0.0, 0usize);
    for (i, s) in f.data.subjects().iter().enumerate() {
        let y = &f.state.responses[i];
        let phi = f.state.atoms[f.state.allocations[i]][(0, 0)];
        for t in 0..s.horizon() {
            let prev = if t == 0 { 0.0 } else { y[(t - 1, 0)] };
            let r = y[(t, 0)] - phi * prev - f.state.b[0] * s.tv_covariates[(t, 0)] - f.state.gamma[0] * s.base_covariates[0];
            sse += r * r;
            n += 1;
        }
    }
    let shape = (f.hyper.nu + n as f64) / 2.0;
    let rate = 1.0 / (2.0 * s0) + sse / 2.0;
    let got = model.sigma_conditional(&f.state);
    assert!((got.df / 2.0 - shape).abs() < TOL);
    assert!((got.scale[(0, 0)] / 2.0 - rate).abs() < TOL * rate);
}

pub fn atoms_match_dense_oracle_and_empty_atoms_follow_the_base_measure() {
    for seed in 0..5 {
        let mut f = fixture(200 + seed, DIMS, 4);
        // Component 3 left empty.
        for g in f.state.allocations.iter_mut() {
            *g %= 3;
        }
        let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
        let k = DIMS.k;
        let s_inv = inv(&f.state.sigma);
        let (b, gamma) = (f.state.b_matrix(), f.state.gamma_matrix());
        for h in 0..4 {
            let mut rows = Vec::new();
            for (i, s) in f.data.subjects().iter().enumerate().filter(|(i, _)| f.state.allocations[*i] == h) {
                let y = &f.state.responses[i];
                for t in 1..s.horizon() {
                    let m = &b * s.tv_covariates.row(t).transpose() + &gamma * &s.base_covariates;
                    rows.push((design(k, &lag(y, t)), y.row(t).transpose() - m));
                }
            }
            let (mean, precision) = dense_regression(&rows, &f.state.sigma, &f.state.phi_00, &f.state.v_0);
            let got = model.atom_conditional(&f.state, h, &s_inv).unwrap();
            assert!(rel_close(&got.precision, &precision, TOL), "component {h}");
            assert!((&got.mean - &mean).amax() < TOL * (1.0 + mean.amax()), "component {h}");
            if h == 3 {
                assert!((&got.mean - &f.state.phi_00).amax() < TOL);
                assert!(rel_close(&got.precision, &inv(&f.state.v_0), TOL));
            }
        }
    }
}

pub fn niw_hyper_update_matches_completed_square_form() {
    for seed in 0..5 {
        let f = fixture(300 + seed, DIMS, 5);
        let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
        let hp = &f.hyper;
        let h = f.state.atoms.len() as f64;
        let vecs: Vec<DVector<f64>> = f.state.atoms.iter().map(vec_row).collect();
        let kappa = hp.lambda + h;
        let mean = (vecs.iter().sum::<DVector<f64>>() + &hp.phi_000 * hp.lambda) / kappa;
        // V_00 + sum phi phi' + lambda m0 m0' - kappa m m'.
        let mut scale = hp.v_00.clone() + &hp.phi_000 * hp.phi_000.transpose() * hp.lambda - &mean * mean.transpose() * kappa;
        for v in &vecs {
            scale += v * v.transpose();
        }
        let got = model.hyper_conditional(&f.state);
        assert!((got.kappa - kappa).abs() < TOL);
        assert!((got.df - (hp.tau_0 + h)).abs() < TOL);
        assert!((&got.mean - &mean).amax() < TOL);
        assert!(rel_close(&got.scale, &scale, TOL));
    }
}

pub fn scalar_niw_update() {
    let dims = Dims { k: 1, p: 1, q: 1 };
    let f = fixture(13, dims, 3);
    let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
    let xs: Vec<f64> = f.state.atoms.iter().map(|a| a[(0, 0)]).collect();
    let (m0, lam, v00) = (f.hyper.phi_000[0], f.hyper.lambda, f.hyper.v_00[(0, 0)]);
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let got = model.hyper_conditional(&f.state);
    assert!((got.mean[0] - (lam * m0 + n * xbar) / (lam + n)).abs() < TOL);
    assert!((got.scale[(0, 0)] - (v00 + ss + lam * n / (lam + n) * (xbar - m0).powi(2))).abs() < TOL);
}

pub fn alpha_update_is_weighted_logistic_regression() {
    let f = fixture(400, DIMS, 4);
    let model = Model::new(&f.data, &f.hyper, PriorKind::Lsb).unwrap();
    for h in 0..3 {
        let risk = model.risk_set(&f.state, h);
        let omegas: Vec<f64> = (0..risk.len()).map(|j| 0.1 + 0.05 * j as f64).collect();
        let prior_inv = inv(&f.hyper.sigma_alpha);
        let mut precision = prior_inv.clone();
        let mut potential = &prior_inv * &f.hyper.mu_alpha;
        for (i, s) in f.data.subjects().iter().enumerate() {
            let g = f.state.allocations[i];
            if g < h {
                continue;
            }
            let j = risk.iter().position(|(r, _)| *r == i).unwrap();
            let z = &s.base_covariates;
            precision += z * z.transpose() * omegas[j];
            potential += z * if g == h { 0.5 } else { -0.5 };
        }
        let got = model.alpha_conditional(&f.state, h, &omegas).unwrap();
        assert!(rel_close(&got.precision, &precision, TOL));
        assert!((&got.mean - inv(&precision) * potential).amax() < TOL);
    }
}

pub fn allocation_probabilities_match_direct_likelihood() {
    for prior in [PriorKind::Lsb, PriorKind::Dp { mass: 1.5 }] {
        let f = fixture(500, DIMS, 4);
        let model = Model::new(&f.data, &f.hyper, prior).unwrap();
        let s_inv = inv(&f.state.sigma);
        let (b, gamma) = (f.state.b_matrix(), f.state.gamma_matrix());
        for (i, s) in f.data.subjects().iter().enumerate() {
            let y = &f.state.responses[i];
            let log_w = model.log_mixing_weights(&f.state, i).unwrap();
            let direct: Vec<f64> = (0..4)
                .map(|h| {
                    let mut ll = log_w[h];
                    for t in 0..s.horizon() {
                        let m = &f.state.atoms[h] * lag(y, t) + &b * s.tv_covariates.row(t).transpose() + &gamma * &s.base_covariates;
                        ll += dense_gaussian_logpdf(&y.row(t).transpose(), &m, &f.state.sigma);
                    }
                    ll
                })
                .collect();
            let got = model.allocation_log_probs(&f.state, i, &s_inv).unwrap();
            let norm = |v: &[f64]| {
                let m = v.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = v.iter().map(|x| (x - m).exp()).sum();
                v.iter().map(|x| (x - m).exp() / z).collect::<Vec<_>>()
            };
            for (a, b) in norm(&got).iter().zip(norm(&direct)) {
                assert!((a - b).abs() < TOL);
            }
        }
    }
}

pub fn dp_stick_parameters_from_counts() {
    let mut f = fixture(600, DIMS, 3);
    f.data = f.data.subset(&[0, 1, 2, 3, 4]);
    f.state.responses.truncate(5);
    f.state.allocations = vec![0, 1, 0, 1, 0];
    let model = Model::new(&f.data, &f.hyper, PriorKind::Dp { mass: 1.0 }).unwrap();
    assert_eq!(model.dp_stick_params(&f.state, 1.0), vec![(4.0, 3.0), (3.0, 1.0)]);
}
