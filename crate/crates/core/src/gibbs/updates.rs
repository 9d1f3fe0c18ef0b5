//! Full conditional distributions of the blocked Gibbs sweep.
//!
//! Every update has two halves: a method returning the parameters of the
//! full conditional (used by the conjugacy tests) and a method drawing from it.
//! Residuals are `e_it = y_it - Phi_{G_i} y_{i,t-1} - B x_it - Gamma z_i` with
//! `y_{i0} = 0`; matrices are vectorised row-major.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::polya_gamma::sample_pg1;
use crate::linalg::{self, RegressionStats};
use crate::missing::{self, regression_means, TrajectoryLaw};
use crate::model::dataset::LongitudinalDataset;
use crate::model::hyper::ModelHyperparams;
use crate::model::state::ChainState;
use crate::priors::weights::{log_weights, StickWeights};

/// Mixing-weight prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorKind {
    /// Covariate-dependent logit stick-breaking.
    Lsb,
    /// Truncated Dirichlet process with concentration `mass`, ignoring covariates.
    Dp { mass: f64 },
}

/// Gaussian full conditional in moment-plus-precision form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianConditional {
    pub mean: DVector<f64>,
    pub precision: DMatrix<f64>,
}

impl GaussianConditional {
    fn from_canonical(precision: DMatrix<f64>, potential: &DVector<f64>, what: &str) -> Result<Self> {
        let mean = linalg::cholesky(&precision, what)?.solve(potential);
        Ok(Self { mean, precision })
    }

    pub fn sample<R: Rng + ?Sized>(&self, what: &str, rng: &mut R) -> Result<DVector<f64>> {
        let potential = &self.precision * &self.mean;
        Ok(linalg::gaussian_from_precision(&self.precision, &potential, what, rng)?.1)
    }
}

/// Inverse-Wishart full conditional `IW(df, scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseWishartConditional {
    pub df: f64,
    pub scale: DMatrix<f64>,
}

/// Joint normal-inverse-Wishart conditional of `(phi_00, V_0)`:
/// `V_0 ~ IW(df, scale)`, `phi_00 | V_0 ~ N(mean, V_0 / kappa)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwConditional {
    pub mean: DVector<f64>,
    pub kappa: f64,
    pub df: f64,
    pub scale: DMatrix<f64>,
}

fn lagged(y: &DMatrix<f64>, t: usize) -> DVector<f64> {
    if t == 0 {
        DVector::zeros(y.ncols())
    } else {
        y.row(t - 1).transpose()
    }
}

/// Sample an index from unnormalised log probabilities.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical("allocation probabilities are all zero or not finite".into()));
    }
    let probs: Vec<f64> = log_probs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (h, p) in probs.iter().enumerate() {
        if u < *p {
            return Ok(h);
        }
        u -= p;
    }
    Ok(probs.iter().rposition(|p| *p > 0.0).unwrap_or(0))
}

/// Model, data and prior constants for one chain, with the prior inverses precomputed.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    pub data: &'a LongitudinalDataset,
    pub hyper: &'a ModelHyperparams,
    pub prior: PriorKind,
    sigma_alpha_inv: DMatrix<f64>,
    sigma_b_inv: DMatrix<f64>,
    sigma_gamma_inv: DMatrix<f64>,
    sigma_iw_scale: DMatrix<f64>,
}

impl<'a> Model<'a> {
    pub fn new(data: &'a LongitudinalDataset, hyper: &'a ModelHyperparams, prior: PriorKind) -> Result<Self> {
        let dims = crate::model::hyper::Dims {
            k: data.resp_dim(),
            p: data.tv_cov_dim(),
            q: data.base_cov_dim(),
        };
        hyper.validate(dims)?;
        if let PriorKind::Dp { mass } = prior {
            if !(mass > 0.0) {
                return Err(Error::InvalidHyper("Dirichlet-process mass must be positive".into()));
            }
        }
        let inv = |m: &DMatrix<f64>, what: &str| {
            if m.nrows() == 0 {
                Ok(m.clone())
            } else {
                linalg::spd_inverse(m, what)
            }
        };
        Ok(Self {
            data,
            hyper,
            prior,
            sigma_alpha_inv: inv(&hyper.sigma_alpha, "sigma_alpha")?,
            sigma_b_inv: inv(&hyper.sigma_b, "sigma_b")?,
            sigma_gamma_inv: inv(&hyper.sigma_gamma, "sigma_gamma")?,
            sigma_iw_scale: hyper.sigma_iw_scale()?,
        })
    }

    fn k(&self) -> usize {
        self.data.resp_dim()
    }

    /// Log mixing weights of subject `i` under the current state.
    pub fn log_mixing_weights(&self, state: &ChainState, i: usize) -> Result<Vec<f64>> {
        match self.prior {
            PriorKind::Lsb => log_weights(&state.alphas, &self.data.subject(i).base_covariates),
            PriorKind::Dp { .. } => Ok(StickWeights::from_fractions(&state.sticks)
                .as_slice()
                .iter()
                .map(|w| w.ln())
                .collect()),
        }
    }

    /// `vec(B)` given everything else: regress `y_t - Phi y_{t-1} - Gamma z` on `x_t`.
    pub fn b_conditional(&self, state: &ChainState, sigma_inv: &DMatrix<f64>) -> Result<GaussianConditional> {
        let (k, p) = (self.k(), self.data.tv_cov_dim());
        let gamma = state.gamma_matrix();
        let mut stats = RegressionStats::new(k, p);
        for (i, s) in self.data.subjects().iter().enumerate() {
            let y = &state.responses[i];
            let base = &gamma * &s.base_covariates;
            let phi = state.phi_of(i);
            for t in 0..s.horizon() {
                let w = y.row(t).transpose() - phi * lagged(y, t) - &base;
                stats.add(&w, &s.tv_covariates.row(t).transpose());
            }
        }
        let (lp, pot) = stats.likelihood_canonical(sigma_inv);
        GaussianConditional::from_canonical(lp + &self.sigma_b_inv, &pot, "B posterior precision")
    }

    /// `vec(Gamma)` given everything else: regress `y_t - Phi y_{t-1} - B x_t` on `z`.
    pub fn gamma_conditional(&self, state: &ChainState, sigma_inv: &DMatrix<f64>) -> Result<GaussianConditional> {
        let (k, q) = (self.k(), self.data.base_cov_dim());
        let b = state.b_matrix();
        let mut stats = RegressionStats::new(k, q);
        for (i, s) in self.data.subjects().iter().enumerate() {
            let y = &state.responses[i];
            let phi = state.phi_of(i);
            for t in 0..s.horizon() {
                let w = y.row(t).transpose() - phi * lagged(y, t) - &b * s.tv_covariates.row(t).transpose();
                stats.add(&w, &s.base_covariates);
            }
        }
        let (lp, pot) = stats.likelihood_canonical(sigma_inv);
        GaussianConditional::from_canonical(lp + &self.sigma_gamma_inv, &pot, "Gamma posterior precision")
    }

    /// Residuals of every visit under the current state.
    fn for_each_residual(&self, state: &ChainState, mut f: impl FnMut(usize, usize, DVector<f64>)) {
        let (b, gamma) = (state.b_matrix(), state.gamma_matrix());
        for (i, s) in self.data.subjects().iter().enumerate() {
            let y = &state.responses[i];
            let m = regression_means(&b, &gamma, &s.tv_covariates, &s.base_covariates);
            let phi = state.phi_of(i);
            for t in 0..s.horizon() {
                f(i, t, y.row(t).transpose() - phi * lagged(y, t) - m.row(t).transpose());
            }
        }
    }

    pub fn sigma_conditional(&self, state: &ChainState) -> InverseWishartConditional {
        let mut scale = self.sigma_iw_scale.clone();
        let mut n = 0usize;
        self.for_each_residual(state, |_, _, e| {
            scale.ger(1.0, &e, &e, 1.0);
            n += 1;
        });
        InverseWishartConditional { df: self.hyper.nu + n as f64, scale: linalg::symmetrize(scale) }
    }

    /// Unnormalised log allocation probabilities of subject `i` over the `H` components.
    ///
    /// Terms not depending on the component cancel, leaving
    /// `log w_h + tr(S^-1 Phi_h P'W) - tr(S^-1 Phi_h P'P Phi_h') / 2` with
    /// `P'W = sum y_{t-1} (y_t - m_t)'` and `P'P = sum y_{t-1} y_{t-1}'`.
    pub fn allocation_log_probs(&self, state: &ChainState, i: usize, sigma_inv: &DMatrix<f64>) -> Result<Vec<f64>> {
        let k = self.k();
        let s = self.data.subject(i);
        let y = &state.responses[i];
        let m = regression_means(&state.b_matrix(), &state.gamma_matrix(), &s.tv_covariates, &s.base_covariates);
        let mut pp = DMatrix::zeros(k, k);
        let mut pw = DMatrix::zeros(k, k);
        for t in 1..s.horizon() {
            let prev = y.row(t - 1).transpose();
            let w = y.row(t).transpose() - m.row(t).transpose();
            pp.ger(1.0, &prev, &prev, 1.0);
            pw.ger(1.0, &prev, &w, 1.0);
        }
        let log_w = self.log_mixing_weights(state, i)?;
        Ok(state
            .atoms
            .iter()
            .zip(&log_w)
            .map(|(phi, lw)| {
                let a = sigma_inv * phi;
                let cross = a.component_mul(&pw.transpose()).sum();
                let quad = (&a * &pp).component_mul(phi).sum();
                lw + cross - 0.5 * quad
            })
            .collect())
    }

    /// `vec(Phi_h)` given the subjects currently allocated to component `h`;
    /// the base measure `N(phi_00, V_0)` when the component is empty.
    pub fn atom_conditional(&self, state: &ChainState, h: usize, sigma_inv: &DMatrix<f64>) -> Result<GaussianConditional> {
        let k = self.k();
        let (b, gamma) = (state.b_matrix(), state.gamma_matrix());
        let mut stats = RegressionStats::new(k, k);
        for (i, s) in self.data.subjects().iter().enumerate() {
            if state.allocations[i] != h {
                continue;
            }
            let y = &state.responses[i];
            let m = regression_means(&b, &gamma, &s.tv_covariates, &s.base_covariates);
            for t in 1..s.horizon() {
                let w = y.row(t).transpose() - m.row(t).transpose();
                stats.add(&w, &y.row(t - 1).transpose());
            }
        }
        let v0_inv = linalg::spd_inverse(&state.v_0, "V_0")?;
        let (lp, pot) = stats.likelihood_canonical(sigma_inv);
        let potential = pot + &v0_inv * &state.phi_00;
        GaussianConditional::from_canonical(lp + v0_inv, &potential, "atom posterior precision")
    }

    /// Risk set of stick `h`: subjects with `G_i >= h`, with indicator `G_i == h`.
    pub fn risk_set(&self, state: &ChainState, h: usize) -> Vec<(usize, bool)> {
        state
            .allocations
            .iter()
            .enumerate()
            .filter(|(_, g)| **g >= h)
            .map(|(i, g)| (i, *g == h))
            .collect()
    }

    /// `alpha_h` given Pólya-Gamma variables `omegas` aligned with [`Self::risk_set`].
    pub fn alpha_conditional(&self, state: &ChainState, h: usize, omegas: &[f64]) -> Result<GaussianConditional> {
        let risk = self.risk_set(state, h);
        if risk.len() != omegas.len() {
            return Err(Error::dim("one Pólya-Gamma variable per subject in the risk set"));
        }
        let mut precision = self.sigma_alpha_inv.clone();
        let mut potential = &self.sigma_alpha_inv * &self.hyper.mu_alpha;
        for ((i, hit), w) in risk.iter().zip(omegas) {
            let z = &self.data.subject(*i).base_covariates;
            precision.ger(*w, z, z, 1.0);
            potential.axpy(if *hit { 0.5 } else { -0.5 }, z, 1.0);
        }
        GaussianConditional::from_canonical(precision, &potential, "alpha posterior precision")
    }

    pub fn hyper_conditional(&self, state: &ChainState) -> NiwConditional {
        let hp = self.hyper;
        let h = state.atoms.len() as f64;
        let vecs: Vec<DVector<f64>> = state.atoms.iter().map(linalg::vec_row).collect();
        let d = hp.phi_000.len();
        let mean_atom = vecs.iter().fold(DVector::zeros(d), |a, v| a + v) / h;
        let mut scatter = DMatrix::zeros(d, d);
        for v in &vecs {
            let c = v - &mean_atom;
            scatter.ger(1.0, &c, &c, 1.0);
        }
        let dev = &mean_atom - &hp.phi_000;
        let mut scale = &hp.v_00 + scatter;
        scale.ger(h * hp.lambda / (h + hp.lambda), &dev, &dev, 1.0);
        NiwConditional {
            mean: (mean_atom * h + &hp.phi_000 * hp.lambda) / (h + hp.lambda),
            kappa: h + hp.lambda,
            df: hp.tau_0 + h,
            scale: linalg::symmetrize(scale),
        }
    }

    /// Beta parameters of the Dirichlet-process sticks `V_1..V_{H-1}`.
    pub fn dp_stick_params(&self, state: &ChainState, mass: f64) -> Vec<(f64, f64)> {
        let counts = state.counts();
        let h = counts.len();
        (0..h.saturating_sub(1))
            .map(|l| (1.0 + counts[l] as f64, mass + counts[l + 1..].iter().sum::<usize>() as f64))
            .collect()
    }

    pub fn update_missing<R: Rng + ?Sized>(&self, state: &mut ChainState, sigma_inv: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        let (b, gamma) = (state.b_matrix(), state.gamma_matrix());
        for (i, s) in self.data.subjects().iter().enumerate() {
            if s.is_complete() {
                continue;
            }
            let m = regression_means(&b, &gamma, &s.tv_covariates, &s.base_covariates);
            let law = TrajectoryLaw::from_parts(state.phi_of(i), sigma_inv, &m);
            state.responses[i] = missing::impute_subject(&law, s, &state.responses[i], rng)?;
        }
        Ok(())
    }

    pub fn update_b<R: Rng + ?Sized>(&self, state: &mut ChainState, sigma_inv: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        if self.data.tv_cov_dim() > 0 {
            state.b = self.b_conditional(state, sigma_inv)?.sample("B posterior precision", rng)?;
        }
        Ok(())
    }

    pub fn update_gamma<R: Rng + ?Sized>(&self, state: &mut ChainState, sigma_inv: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        if self.data.base_cov_dim() > 0 {
            state.gamma = self.gamma_conditional(state, sigma_inv)?.sample("Gamma posterior precision", rng)?;
        }
        Ok(())
    }

    pub fn update_sigma<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let c = self.sigma_conditional(state);
        state.sigma = linalg::sample_inverse_wishart(c.df, &c.scale, rng)?;
        Ok(())
    }

    pub fn update_allocations<R: Rng + ?Sized>(&self, state: &mut ChainState, sigma_inv: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        for i in 0..self.data.n_subjects() {
            let lp = self.allocation_log_probs(state, i, sigma_inv)?;
            state.allocations[i] = sample_log_categorical(&lp, rng)?;
        }
        Ok(())
    }

    pub fn update_atoms<R: Rng + ?Sized>(&self, state: &mut ChainState, sigma_inv: &DMatrix<f64>, rng: &mut R) -> Result<()> {
        let k = self.k();
        for h in 0..state.atoms.len() {
            let draw = self.atom_conditional(state, h, sigma_inv)?.sample("atom posterior precision", rng)?;
            state.atoms[h] = linalg::unvec_row(&draw, k, k);
        }
        Ok(())
    }

    /// Pólya-Gamma augmented update of `alpha_1..alpha_{H-1}`. An empty risk
    /// set gives a draw from the prior.
    pub fn update_alphas<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        for h in 0..state.alphas.len() {
            let omegas: Vec<f64> = self
                .risk_set(state, h)
                .iter()
                .map(|(i, _)| sample_pg1(self.data.subject(*i).base_covariates.dot(&state.alphas[h]), rng))
                .collect();
            state.alphas[h] = self.alpha_conditional(state, h, &omegas)?.sample("alpha posterior precision", rng)?;
        }
        Ok(())
    }

    pub fn update_dp_sticks<R: Rng + ?Sized>(&self, state: &mut ChainState, mass: f64, rng: &mut R) -> Result<()> {
        let params = self.dp_stick_params(state, mass);
        for (h, (a, b)) in params.into_iter().enumerate() {
            let beta = Beta::new(a, b).map_err(|e| Error::Numerical(format!("stick Beta({a}, {b}): {e}")))?;
            state.sticks[h] = beta.sample(rng);
        }
        if let Some(last) = state.sticks.last_mut() {
            *last = 1.0;
        }
        Ok(())
    }

    pub fn update_hyper<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let c = self.hyper_conditional(state);
        let v0 = linalg::sample_inverse_wishart(c.df, &c.scale, rng)?;
        state.phi_00 = linalg::gaussian_from_covariance(&c.mean, &(&v0 / c.kappa), "phi_00 covariance", rng)?;
        state.v_0 = v0;
        Ok(())
    }

    /// One full sweep: missing responses, `B`, `Gamma`, `Sigma`, allocations,
    /// atoms, mixing weights, then `(phi_00, V_0)`.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) -> Result<()> {
        let sigma_inv = linalg::spd_inverse(&state.sigma, "sigma")?;
        self.update_missing(state, &sigma_inv, rng)?;
        self.update_b(state, &sigma_inv, rng)?;
        self.update_gamma(state, &sigma_inv, rng)?;
        self.update_sigma(state, rng)?;
        let sigma_inv = linalg::spd_inverse(&state.sigma, "sigma")?;
        self.update_allocations(state, &sigma_inv, rng)?;
        self.update_atoms(state, &sigma_inv, rng)?;
        match self.prior {
            PriorKind::Lsb => self.update_alphas(state, rng)?,
            PriorKind::Dp { mass } => self.update_dp_sticks(state, mass, rng)?,
        }
        self.update_hyper(state, rng)
    }

    /// Log predictive terms of every observed entry given the subject's
    /// allocation, in subject order and stacked `(t, j)` order within a subject.
    pub fn pointwise_loglik(&self, state: &ChainState) -> Result<Vec<f64>> {
        let sigma_chol = linalg::cholesky(&state.sigma, "sigma")?;
        let sigma_inv = sigma_chol.inverse();
        let (b, gamma) = (state.b_matrix(), state.gamma_matrix());
        let mut out = Vec::with_capacity(self.data.n_observed_entries());
        for (i, s) in self.data.subjects().iter().enumerate() {
            let y = &state.responses[i];
            let m = regression_means(&b, &gamma, &s.tv_covariates, &s.base_covariates);
            let phi = state.phi_of(i);
            if s.is_complete() {
                for t in 0..s.horizon() {
                    let e = y.row(t).transpose() - phi * lagged(y, t) - m.row(t).transpose();
                    out.extend(missing::chain_rule_terms(&sigma_chol, &e));
                }
            } else {
                let law = TrajectoryLaw::from_parts(phi, &sigma_inv, &m);
                out.extend(law.observed_pointwise_loglik(&missing::stack(y), &s.observed_positions())?);
            }
        }
        Ok(out)
    }
}
