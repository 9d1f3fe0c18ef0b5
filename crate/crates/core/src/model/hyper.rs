//! Fixed prior constants and their flat key-value configuration format.
//!
//! Prior on the error covariance: the configured `sigma_0` and `nu` describe
//! `Sigma^{-1} ~ Wishart(nu, sigma_0)` with `E[Sigma^{-1}] = nu * sigma_0`.
//! The sampler works with the equivalent `Sigma ~ IW(nu, sigma_0^{-1})`,
//! whose mean is `sigma_0^{-1} / (nu - k - 1)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelHyperparams {
    /// Truncation level (number of mixture components).
    pub h: usize,
    pub mu_alpha: DVector<f64>,
    pub sigma_alpha: DMatrix<f64>,
    pub sigma_b: DMatrix<f64>,
    pub sigma_gamma: DMatrix<f64>,
    /// Wishart scale of `Sigma^{-1}`.
    pub sigma_0: DMatrix<f64>,
    pub nu: f64,
    pub phi_000: DVector<f64>,
    pub lambda: f64,
    pub v_00: DMatrix<f64>,
    pub tau_0: f64,
}

/// Problem dimensions `(k, p, q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub k: usize,
    pub p: usize,
    pub q: usize,
}

impl ModelHyperparams {
    /// The simulation-study prior: `phi_000 = 0`, `lambda = 0.1`,
    /// `V_00 = I`, `tau_0 = k^2 + 2`, `nu = 5`, `Sigma_0 = I / nu`, and
    /// identity covariances for `alpha`, `b` and `gamma`.
    pub fn simulation_defaults(dims: Dims, h: usize) -> Self {
        let Dims { k, p, q } = dims;
        let d = k * k;
        let nu = 5.0f64.max(k as f64 + 2.0);
        Self {
            h,
            mu_alpha: DVector::zeros(q),
            sigma_alpha: DMatrix::identity(q, q),
            sigma_b: DMatrix::identity(k * p, k * p),
            sigma_gamma: DMatrix::identity(k * q, k * q),
            sigma_0: DMatrix::identity(k, k) / nu,
            nu,
            phi_000: DVector::zeros(d),
            lambda: 0.1,
            v_00: DMatrix::identity(d, d),
            tau_0: d as f64 + 2.0,
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        let Dims { k, p, q } = dims;
        let d = k * k;
        if self.h < 1 {
            return Err(Error::InvalidHyper("H must be at least 1".into()));
        }
        let shape = |name: &str, m: &DMatrix<f64>, n: usize| -> Result<()> {
            if m.shape() != (n, n) {
                return Err(Error::dim(format!("`{name}` is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
            if n > 0 {
                linalg::cholesky(m, name)?;
            }
            Ok(())
        };
        shape("sigma_alpha", &self.sigma_alpha, q)?;
        shape("sigma_b", &self.sigma_b, k * p)?;
        shape("sigma_gamma", &self.sigma_gamma, k * q)?;
        shape("sigma_0", &self.sigma_0, k)?;
        shape("v_00", &self.v_00, d)?;
        if self.mu_alpha.len() != q {
            return Err(Error::dim(format!("`mu_alpha` has length {}, expected {q}", self.mu_alpha.len())));
        }
        if self.phi_000.len() != d {
            return Err(Error::dim(format!("`phi_000` has length {}, expected {d}", self.phi_000.len())));
        }
        if !(self.nu > k as f64 - 1.0) {
            return Err(Error::InvalidHyper(format!("nu = {} must exceed k - 1 = {}", self.nu, k as f64 - 1.0)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidHyper("lambda must be positive".into()));
        }
        if !(self.tau_0 > d as f64 + 1.0) {
            return Err(Error::InvalidHyper(format!("tau_0 = {} must exceed k^2 + 1 = {}", self.tau_0, d + 1)));
        }
        Ok(())
    }

    /// Scale of the inverse-Wishart law of `Sigma`: `sigma_0^{-1}`.
    pub fn sigma_iw_scale(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.sigma_0, "sigma_0")
    }

    /// Wishart scale `sigma_0` matching an inverse-Wishart scale `psi`.
    pub fn sigma_0_from_iw_scale(psi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(psi, "inverse-Wishart scale")
    }

    pub fn to_config(&self) -> HyperConfig {
        let m = |x: &DMatrix<f64>| Some(MatrixSpec::List(linalg::vec_row(x).iter().copied().collect()));
        HyperConfig {
            h: Some(self.h),
            mu_alpha: Some(VectorSpec::List(self.mu_alpha.iter().copied().collect())),
            sigma_alpha: m(&self.sigma_alpha),
            sigma_b: m(&self.sigma_b),
            sigma_gamma: m(&self.sigma_gamma),
            sigma_0: m(&self.sigma_0),
            nu: Some(self.nu),
            phi_000: Some(VectorSpec::List(self.phi_000.iter().copied().collect())),
            lambda: Some(self.lambda),
            v_00: m(&self.v_00),
            tau_0: Some(self.tau_0),
        }
    }
}

/// A matrix given either as a scalar multiple of the identity or as a
/// row-major list of `n * n` numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    List(Vec<f64>),
}

impl MatrixSpec {
    pub fn to_matrix(&self, n: usize, name: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
            MatrixSpec::List(v) if v.len() == n * n => Ok(DMatrix::from_row_slice(n, n, v)),
            MatrixSpec::List(v) => Err(Error::Config(format!(
                "`{name}` has {} entries, expected {} (row-major {n}x{n})",
                v.len(),
                n * n
            ))),
        }
    }
}

/// A vector given either as a constant fill value or as a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    List(Vec<f64>),
}

impl VectorSpec {
    pub fn to_vector(&self, n: usize, name: &str) -> Result<DVector<f64>> {
        match self {
            VectorSpec::Scalar(s) => Ok(DVector::from_element(n, *s)),
            VectorSpec::List(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            VectorSpec::List(v) => {
                Err(Error::Config(format!("`{name}` has {} entries, expected {n}", v.len())))
            }
        }
    }
}

/// Flat key-value hyperparameter schema. Every key is optional; missing keys
/// fall back to [`ModelHyperparams::simulation_defaults`].
///
/// ```toml
/// h = 25
/// mu_alpha = 0.0            # or [0.0, 0.0]
/// sigma_alpha = 5.0         # 5 * I, or a row-major list
/// sigma_b = 1.0
/// sigma_gamma = 1.0
/// sigma_0 = [0.2, 0.0, 0.0, 0.2]
/// nu = 5.0
/// phi_000 = 0.0
/// lambda = 0.1
/// v_00 = 1.0
/// tau_0 = 11.0
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub h: Option<usize>,
    pub mu_alpha: Option<VectorSpec>,
    pub sigma_alpha: Option<MatrixSpec>,
    pub sigma_b: Option<MatrixSpec>,
    pub sigma_gamma: Option<MatrixSpec>,
    pub sigma_0: Option<MatrixSpec>,
    pub nu: Option<f64>,
    pub phi_000: Option<VectorSpec>,
    pub lambda: Option<f64>,
    pub v_00: Option<MatrixSpec>,
    pub tau_0: Option<f64>,
}

impl HyperConfig {
    pub fn resolve(&self, dims: Dims) -> Result<ModelHyperparams> {
        let Dims { k, p, q } = dims;
        let d = k * k;
        let defaults = ModelHyperparams::simulation_defaults(dims, self.h.unwrap_or(25));
        let nu = self.nu.unwrap_or(defaults.nu);
        let mat = |spec: &Option<MatrixSpec>, n: usize, name: &str, default: DMatrix<f64>| match spec {
            Some(s) => s.to_matrix(n, name),
            None => Ok(default),
        };
        let vec = |spec: &Option<VectorSpec>, n: usize, name: &str, default: DVector<f64>| match spec {
            Some(s) => s.to_vector(n, name),
            None => Ok(default),
        };
        let hp = ModelHyperparams {
            h: defaults.h,
            mu_alpha: vec(&self.mu_alpha, q, "mu_alpha", defaults.mu_alpha)?,
            sigma_alpha: mat(&self.sigma_alpha, q, "sigma_alpha", defaults.sigma_alpha)?,
            sigma_b: mat(&self.sigma_b, k * p, "sigma_b", defaults.sigma_b)?,
            sigma_gamma: mat(&self.sigma_gamma, k * q, "sigma_gamma", defaults.sigma_gamma)?,
            sigma_0: mat(&self.sigma_0, k, "sigma_0", DMatrix::identity(k, k) / nu)?,
            nu,
            phi_000: vec(&self.phi_000, d, "phi_000", defaults.phi_000)?,
            lambda: self.lambda.unwrap_or(defaults.lambda),
            v_00: mat(&self.v_00, d, "v_00", defaults.v_00)?,
            tau_0: self.tau_0.unwrap_or(defaults.tau_0),
        };
        hp.validate(dims)?;
        Ok(hp)
    }
}
