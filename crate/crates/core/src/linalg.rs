//! Dense linear-algebra and sampling helpers shared by the samplers.
//!
//! Vectorisation throughout the crate is row-major: the `(j, l)` entry of a
//! `rows x cols` matrix sits at index `j * cols + l`. Under this convention a
//! multivariate regression `w_t = M r_t + e_t`, `e_t ~ N(0, Sigma)` has a
//! likelihood precision for `vec(M)` equal to `Sigma^{-1} (x) sum_t r_t r_t'`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Chol> {
    if !m.is_square() {
        return Err(Error::dim(format!("`{what}` is {}x{}", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd(what.to_string()));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::NotSpd(what.to_string()))
}

pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = cholesky(m, what)?.inverse();
    Ok(symmetrize(inv))
}

pub fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn std_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// Gaussian in canonical form: precision `P` and potential `h = P mean`.
/// Returns `(mean, draw)`.
pub fn gaussian_from_precision<R: Rng + ?Sized>(
    precision: &DMatrix<f64>,
    potential: &DVector<f64>,
    what: &str,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let chol = cholesky(precision, what)?;
    let mean = chol.solve(potential);
    let z = std_normal_vec(mean.len(), rng);
    let offset = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numerical(format!("triangular solve failed for `{what}`")))?;
    Ok((mean.clone(), mean + offset))
}

pub fn gaussian_from_covariance<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    covariance: &DMatrix<f64>,
    what: &str,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let chol = cholesky(covariance, what)?;
    let z = std_normal_vec(mean.len(), rng);
    Ok(mean + chol.l() * z)
}

/// Lower Bartlett factor `A` such that `L A A' L'` is Wishart when `L L'` is the scale.
fn bartlett_factor<R: Rng + ?Sized>(dim: usize, df: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|_| Error::Numerical(format!("Wishart degrees of freedom {df} too small")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    Ok(a)
}

/// Draw from the Wishart law with `E[W] = df * scale`.
pub fn sample_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let dim = scale.nrows();
    if df <= dim as f64 - 1.0 {
        return Err(Error::Numerical(format!("Wishart df {df} <= dim - 1")));
    }
    let l = cholesky(scale, "Wishart scale")?.l();
    let la = l * bartlett_factor(dim, df, rng)?;
    Ok(symmetrize(&la * la.transpose()))
}

/// Draw from the inverse-Wishart law `IW(df, scale)` with
/// `E[S] = scale / (df - dim - 1)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    df: f64,
    scale: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let dim = scale.nrows();
    if df <= dim as f64 - 1.0 {
        return Err(Error::Numerical(format!("inverse-Wishart df {df} <= dim - 1")));
    }
    // S^{-1} ~ W(df, scale^{-1}); with scale^{-1} = L L', S = (L A)^{-T} (L A)^{-1}.
    let scale_inv = spd_inverse(scale, "inverse-Wishart scale")?;
    let l = cholesky(&scale_inv, "inverse-Wishart scale")?.l();
    let la = l * bartlett_factor(dim, df, rng)?;
    let la_inv = la
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .ok_or_else(|| Error::Numerical("singular Bartlett factor".into()))?;
    Ok(symmetrize(la_inv.transpose() * la_inv))
}

/// Log density of `N(mean, cov)` at `x` given the Cholesky factor of `cov`.
pub fn gaussian_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov_chol: &Chol) -> f64 {
    let l = cov_chol.l_dirty();
    let diff = x - mean;
    let e = l
        .solve_lower_triangular(&diff)
        .expect("Cholesky factor has a positive diagonal");
    let log_det: f64 = (0..diff.len()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * (diff.len() as f64 * LN_2PI + e.norm_squared()) - log_det
}

pub(crate) fn ln_2pi() -> f64 {
    LN_2PI
}

pub fn vec_row(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows() * m.ncols(),
        (0..m.nrows()).flat_map(|j| (0..m.ncols()).map(move |l| m[(j, l)])),
    )
}

pub fn unvec_row(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec_row length mismatch");
    DMatrix::from_fn(rows, cols, |j, l| v[j * cols + l])
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Accumulated sufficient statistics of a multivariate regression
/// `w_t = M r_t + e_t`: `sum r r'` and `sum w r'`.
#[derive(Debug, Clone)]
pub struct RegressionStats {
    pub rr: DMatrix<f64>,
    pub wr: DMatrix<f64>,
}

impl RegressionStats {
    pub fn new(resp_dim: usize, reg_dim: usize) -> Self {
        Self {
            rr: DMatrix::zeros(reg_dim, reg_dim),
            wr: DMatrix::zeros(resp_dim, reg_dim),
        }
    }

    pub fn add(&mut self, w: &DVector<f64>, r: &DVector<f64>) {
        self.rr.ger(1.0, r, r, 1.0);
        self.wr.ger(1.0, w, r, 1.0);
    }

    /// Canonical parameters of the likelihood for `vec(M)` (row-major):
    /// precision `Sigma^{-1} (x) RR` and potential `vec(Sigma^{-1} WR)`.
    pub fn likelihood_canonical(&self, sigma_inv: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
        (kron(sigma_inv, &self.rr), vec_row(&(sigma_inv * &self.wr)))
    }
}

/// Draw `vec(M)` from the Gaussian full conditional of a multivariate regression
/// with prior `N(prior_mean, prior_cov)`. Returns `(posterior mean, draw)`.
pub fn regression_posterior_draw<R: Rng + ?Sized>(
    stats: &RegressionStats,
    sigma_inv: &DMatrix<f64>,
    prior_mean: &DVector<f64>,
    prior_precision: &DMatrix<f64>,
    what: &str,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (lik_prec, lik_pot) = stats.likelihood_canonical(sigma_inv);
    let precision = lik_prec + prior_precision;
    let potential = lik_pot + prior_precision * prior_mean;
    gaussian_from_precision(&precision, &potential, what, rng)
}
