//! Data-driven hyperparameters for the atom base measure and the error covariance.
//!
//! A single homogeneous VAR(1) `y_t = Phi y_{t-1} + e_t` is fitted by least
//! squares to the complete subjects. Its coefficient matrix centres the atom
//! hyper-mean, and inverse-Wishart degrees of freedom and scales are matched
//! in closed form to target means and average diagonal variances, using
//! `Var(S_ii) = 2 M_ii^2 / (df - d - 3)` for `S ~ IW` with mean `M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::dataset::LongitudinalDataset;
use crate::model::hyper::ModelHyperparams;

/// Moment targets for the elicited inverse-Wishart laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElicitationTargets {
    /// `E[V_0] = v0_mean_scale * I`.
    pub v0_mean_scale: f64,
    /// Average diagonal variance of `V_0`.
    pub v0_diag_var: f64,
    /// Average diagonal variance of `Sigma`; its mean is the fitted residual covariance.
    pub sigma_diag_var: f64,
    /// Prior sample size of the atom hyper-mean.
    pub lambda: f64,
}

impl Default for ElicitationTargets {
    fn default() -> Self {
        Self { v0_mean_scale: 1.0, v0_diag_var: 1.5, sigma_diag_var: 10.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElicitationResult {
    pub phi_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub phi_000: DVector<f64>,
    pub lambda: f64,
    pub v_00: DMatrix<f64>,
    pub tau_0: f64,
    /// Wishart scale of `Sigma^{-1}`.
    pub sigma_0: DMatrix<f64>,
    pub nu: f64,
}

impl ElicitationResult {
    /// Overwrite the elicited entries of `hyper`, leaving the rest untouched.
    pub fn apply(&self, hyper: &mut ModelHyperparams) {
        hyper.phi_000 = self.phi_000.clone();
        hyper.lambda = self.lambda;
        hyper.v_00 = self.v_00.clone();
        hyper.tau_0 = self.tau_0;
        hyper.sigma_0 = self.sigma_0.clone();
        hyper.nu = self.nu;
    }
}

/// Least-squares fit of `y_t = Phi y_{t-1} + e_t` over consecutive pairs
/// `t = 2..T` of all complete subjects. Returns `(Phi_hat, Sigma_hat)` with
/// the maximum-likelihood divisor `n` for the residual covariance.
pub fn fit_var_mle(ds: &LongitudinalDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = ds.resp_dim();
    let mut yy = DMatrix::zeros(k, k);
    let mut cross = DMatrix::zeros(k, k);
    let mut pairs = Vec::new();
    for s in ds.subjects().iter().filter(|s| s.is_complete()) {
        for t in 1..s.horizon() {
            let prev = s.responses.row(t - 1).transpose();
            let cur = s.responses.row(t).transpose();
            yy += &prev * prev.transpose();
            cross += &cur * prev.transpose();
            pairs.push((prev, cur));
        }
    }
    if pairs.len() < k {
        return Err(Error::Elicitation(format!(
            "{} complete transition pairs are too few to fit a {k}-dimensional VAR(1)",
            pairs.len()
        )));
    }
    let yy_inv = linalg::spd_inverse(&yy, "lagged response cross-product")
        .map_err(|_| Error::Elicitation("lagged responses are collinear".into()))?;
    let phi_hat = cross * yy_inv;
    let mut sigma_hat = DMatrix::zeros(k, k);
    for (prev, cur) in &pairs {
        let e = cur - &phi_hat * prev;
        sigma_hat += &e * e.transpose();
    }
    sigma_hat /= pairs.len() as f64;
    Ok((phi_hat, linalg::symmetrize(sigma_hat)))
}

/// Degrees of freedom and scale of a `d`-dimensional inverse-Wishart law with
/// mean `mean` and average diagonal variance `diag_var`.
pub fn match_inverse_wishart(mean: &DMatrix<f64>, diag_var: f64, what: &str) -> Result<(f64, DMatrix<f64>)> {
    let d = mean.nrows();
    if !(diag_var > 0.0 && diag_var.is_finite()) {
        return Err(Error::Elicitation(format!("target diagonal variance of {what} must be positive and finite")));
    }
    linalg::cholesky(mean, what).map_err(|_| {
        Error::Elicitation(format!("target mean of {what} is not positive definite"))
    })?;
    let mean_sq = (0..d).map(|i| mean[(i, i)].powi(2)).sum::<f64>() / d as f64;
    let df = d as f64 + 3.0 + 2.0 * mean_sq / diag_var;
    Ok((df, mean * (df - d as f64 - 1.0)))
}

pub fn elicit_hyperparams(ds: &LongitudinalDataset, targets: &ElicitationTargets) -> Result<ElicitationResult> {
    let k = ds.resp_dim();
    if !(targets.lambda > 0.0) {
        return Err(Error::Elicitation("lambda must be positive".into()));
    }
    if !(targets.v0_mean_scale > 0.0) {
        return Err(Error::Elicitation("mean scale of V_0 must be positive".into()));
    }
    let (phi_hat, sigma_hat) = fit_var_mle(ds)?;
    let (sum_sq, count) = ds
        .subjects()
        .iter()
        .filter(|s| s.is_complete())
        .fold((0.0, 0usize), |(a, n), s| (a + s.responses.norm_squared(), n + s.responses.len()));
    let data_scale = (sum_sq / count as f64).max(f64::MIN_POSITIVE);
    if sigma_hat.clone().symmetric_eigenvalues().min() <= 1e-10 * data_scale {
        return Err(Error::Elicitation("fitted residual covariance is degenerate".into()));
    }
    let d = k * k;
    let (tau_0, v_00) = match_inverse_wishart(
        &(DMatrix::identity(d, d) * targets.v0_mean_scale),
        targets.v0_diag_var,
        "V_0",
    )?;
    let (nu, psi) = match_inverse_wishart(&sigma_hat, targets.sigma_diag_var, "Sigma")?;
    Ok(ElicitationResult {
        phi_000: linalg::vec_row(&phi_hat),
        phi_hat,
        sigma_hat,
        lambda: targets.lambda,
        v_00,
        tau_0,
        sigma_0: ModelHyperparams::sigma_0_from_iw_scale(&psi)?,
        nu,
    })
}
