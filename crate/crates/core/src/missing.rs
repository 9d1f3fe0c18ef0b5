//! Joint Gaussian law of one subject's stacked trajectory and exact
//! conditional simulation of its missing response entries.
//!
//! Writing `m_t = B x_t + Gamma z` and `y_0 = 0`, the model
//! `y_t = Phi y_{t-1} + m_t + e_t` stacks into `A y = m + e` with `A` block
//! lower-bidiagonal (`I` on the diagonal, `-Phi` below it). Hence the stacked
//! trajectory has precision `A' (I (x) Sigma^{-1}) A`, which is block
//! tridiagonal:
//!
//! * diagonal blocks `Sigma^{-1} + Phi' Sigma^{-1} Phi` for `t < T` and `Sigma^{-1}` at `t = T`,
//! * block `(t, t+1)` equal to `-Phi' Sigma^{-1}` and block `(t+1, t)` its transpose,
//!
//! and mean `mu = A^{-1} m`, i.e. `mu_1 = m_1`, `mu_t = Phi mu_{t-1} + m_t`.
//!
//! Conditioning is done in precision form: the missing block `M` given the
//! observed block `O` is Gaussian with precision `Q_MM` and mean
//! `mu_M - Q_MM^{-1} Q_MO (y_O - mu_O)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};
use crate::model::dataset::Subject;

#[derive(Debug, Clone)]
pub struct TrajectoryLaw {
    resp_dim: usize,
    horizon: usize,
    mean: DVector<f64>,
    diag_blocks: Vec<DMatrix<f64>>,
    /// Block `(t, t+1)` for `t = 0..T-1`.
    upper_blocks: Vec<DMatrix<f64>>,
}

/// Regression means `m_t = B x_t + Gamma z` for each visit, as rows of a `T x k` matrix.
pub fn regression_means(
    b: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
) -> DMatrix<f64> {
    let base = gamma * z;
    let mut m = DMatrix::zeros(x.nrows(), b.nrows());
    for t in 0..x.nrows() {
        let xt = x.row(t).transpose();
        let row = &base + b * xt;
        m.set_row(t, &row.transpose());
    }
    m
}

/// Assemble the trajectory law of a subject with autoregression matrix `phi`,
/// regression matrices `b` (`k x p`), `gamma` (`k x q`), noise covariance
/// `sigma`, time-varying covariates `x` (`T x p`) and baseline covariates `z`.
pub fn build_trajectory_law(
    phi: &DMatrix<f64>,
    b: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<TrajectoryLaw> {
    let sigma_inv = linalg::spd_inverse(sigma, "sigma")?;
    Ok(TrajectoryLaw::from_parts(phi, &sigma_inv, &regression_means(b, gamma, x, z)))
}

impl TrajectoryLaw {
    /// `means` holds `m_t` as rows (`T x k`).
    pub fn from_parts(phi: &DMatrix<f64>, sigma_inv: &DMatrix<f64>, means: &DMatrix<f64>) -> Self {
        let (horizon, k) = means.shape();
        let mut mean = DVector::zeros(horizon * k);
        let mut prev = DVector::zeros(k);
        for t in 0..horizon {
            let mu = phi * &prev + means.row(t).transpose();
            mean.rows_mut(t * k, k).copy_from(&mu);
            prev = mu;
        }
        let phit_sinv = phi.transpose() * sigma_inv;
        let inner = sigma_inv + &phit_sinv * phi;
        let diag_blocks = (0..horizon)
            .map(|t| if t + 1 < horizon { inner.clone() } else { sigma_inv.clone() })
            .collect();
        let upper = -phit_sinv;
        let upper_blocks = (0..horizon.saturating_sub(1)).map(|_| upper.clone()).collect();
        Self { resp_dim: k, horizon, mean, diag_blocks, upper_blocks }
    }

    pub fn resp_dim(&self) -> usize {
        self.resp_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.horizon * self.resp_dim
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn diag_block(&self, t: usize) -> &DMatrix<f64> {
        &self.diag_blocks[t]
    }

    pub fn upper_block(&self, t: usize) -> &DMatrix<f64> {
        &self.upper_blocks[t]
    }

    /// Entry `(a, b)` of the stacked precision.
    pub fn precision_entry(&self, a: usize, b: usize) -> f64 {
        let k = self.resp_dim;
        let (ta, ja) = (a / k, a % k);
        let (tb, jb) = (b / k, b % k);
        if ta == tb {
            self.diag_blocks[ta][(ja, jb)]
        } else if tb == ta + 1 {
            self.upper_blocks[ta][(ja, jb)]
        } else if ta == tb + 1 {
            self.upper_blocks[tb][(jb, ja)]
        } else {
            0.0
        }
    }

    pub fn precision_submatrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |r, c| self.precision_entry(rows[r], cols[c]))
    }

    pub fn precision_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |a, b| self.precision_entry(a, b))
    }

    pub fn covariance_dense(&self) -> Result<DMatrix<f64>> {
        linalg::spd_inverse(&self.precision_dense(), "trajectory precision")
    }

    /// Gaussian law of the entries at `missing` given the values at all other
    /// positions of `y` (stacked, row-major in `(t, j)`). Returns
    /// `(mean, precision)`.
    pub fn conditional(&self, y: &DVector<f64>, missing: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let mut is_missing = vec![false; self.dim()];
        for &m in missing {
            is_missing[m] = true;
        }
        let observed: Vec<usize> = (0..self.dim()).filter(|&i| !is_missing[i]).collect();
        let q_mm = self.precision_submatrix(missing, missing);
        let q_mo = self.precision_submatrix(missing, &observed);
        let resid = DVector::from_iterator(observed.len(), observed.iter().map(|&o| y[o] - self.mean[o]));
        let mu_m = DVector::from_iterator(missing.len(), missing.iter().map(|&m| self.mean[m]));
        let chol = q_mm
            .clone()
            .cholesky()
            .expect("principal sub-block of an SPD precision is SPD");
        let shift = chol.solve(&(q_mo * resid));
        (mu_m - shift, q_mm)
    }

    /// Draw the entries at `missing` from their conditional law.
    pub fn sample_conditional<R: Rng + ?Sized>(
        &self,
        y: &DVector<f64>,
        missing: &[usize],
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        if missing.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let (mean, precision) = self.conditional(y, missing);
        let potential = &precision * &mean;
        Ok(linalg::gaussian_from_precision(&precision, &potential, "missing-entry precision", rng)?.1)
    }

    /// Per-entry log predictive contributions of the observed entries:
    /// `log p(y_o[j] | y_o[<j])` in stacked order, under the marginal law of
    /// the observed block. They sum to the observed-data log density.
    pub fn observed_pointwise_loglik(&self, y: &DVector<f64>, observed: &[usize]) -> Result<Vec<f64>> {
        let cov = self.covariance_dense()?;
        let c_oo = DMatrix::from_fn(observed.len(), observed.len(), |a, b| cov[(observed[a], observed[b])]);
        let chol = linalg::cholesky(&c_oo, "observed covariance")?;
        let resid = DVector::from_iterator(observed.len(), observed.iter().map(|&o| y[o] - self.mean[o]));
        Ok(chain_rule_terms(&chol, &resid))
    }
}

/// Split the log density `N(resid; 0, L L')` into sequential conditional terms.
pub(crate) fn chain_rule_terms(chol: &Chol, resid: &DVector<f64>) -> Vec<f64> {
    let l = chol.l_dirty();
    let e = l.solve_lower_triangular(resid).expect("positive Cholesky diagonal");
    (0..resid.len())
        .map(|j| -0.5 * linalg::ln_2pi() - l[(j, j)].ln() - 0.5 * e[j] * e[j])
        .collect()
}

/// Stack a `T x k` response matrix row-major.
pub fn stack(responses: &DMatrix<f64>) -> DVector<f64> {
    linalg::vec_row(responses)
}

/// Draw fresh values for the missing entries of `subject`, given the current
/// completed responses and the law of the subject's trajectory. Observed
/// entries are returned unchanged. A subject with no observed entries gets an
/// unconditional draw from the law.
pub fn impute_subject<R: Rng + ?Sized>(
    law: &TrajectoryLaw,
    subject: &Subject,
    current: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let missing = subject.missing_positions();
    if missing.is_empty() {
        return Ok(current.clone());
    }
    if law.dim() != subject.observed.len() {
        return Err(Error::dim("trajectory law does not match subject horizon"));
    }
    let mut y = stack(current);
    for &o in &subject.observed_positions() {
        let (t, j) = (o / law.resp_dim, o % law.resp_dim);
        y[o] = subject.responses[(t, j)];
    }
    let draw = law.sample_conditional(&y, &missing, rng)?;
    for (idx, &m) in missing.iter().enumerate() {
        y[m] = draw[idx];
    }
    Ok(linalg::unvec_row(&y, law.horizon, law.resp_dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_phi_gives_block_diagonal_precision() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let law = build_trajectory_law(
            &DMatrix::zeros(2, 2),
            &DMatrix::zeros(2, 0),
            &DMatrix::zeros(2, 0),
            &sigma,
            &DMatrix::zeros(3, 0),
            &DVector::zeros(0),
        )
        .unwrap();
        let sinv = sigma.clone().try_inverse().unwrap();
        let q = law.precision_dense();
        for t in 0..3 {
            for s in 0..3 {
                let block = q.view((2 * t, 2 * s), (2, 2)).clone_owned();
                if t == s {
                    assert_relative_eq!(block, sinv, epsilon = 1e-12);
                } else {
                    assert_eq!(block, DMatrix::zeros(2, 2));
                }
            }
        }
    }

    #[test]
    fn scalar_two_step_precision_inverts_forward_covariance() {
        let (phi, s2) = (0.7, 1.5);
        let law = TrajectoryLaw::from_parts(&scalar(phi), &scalar(1.0 / s2), &DMatrix::zeros(2, 1));
        let cov = DMatrix::from_row_slice(2, 2, &[s2, phi * s2, phi * s2, s2 * (1.0 + phi * phi)]);
        let inv = cov.try_inverse().unwrap();
        assert_relative_eq!(law.precision_dense(), inv, epsilon = 1e-10);
    }

    #[test]
    fn markov_conditional_is_forward_transition() {
        // y_2 missing: conditional is N(phi * y_1 + m_2, sigma^2).
        let (phi, s2) = (0.8, 0.4);
        let means = DMatrix::from_row_slice(2, 1, &[0.5, -1.0]);
        let law = TrajectoryLaw::from_parts(&scalar(phi), &scalar(1.0 / s2), &means);
        let y = DVector::from_vec(vec![2.0, f64::NAN]);
        let (mean, prec) = law.conditional(&y, &[1]);
        assert_relative_eq!(mean[0], phi * 2.0 - 1.0, epsilon = 1e-12);
        assert_relative_eq!(prec[(0, 0)], 1.0 / s2, epsilon = 1e-12);
    }

    #[test]
    fn pointwise_loglik_sums_to_dense_log_density() {
        let phi = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 0.5]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let means = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, 0.3, -0.1, 0.0, 0.4]);
        let sinv = sigma.clone().try_inverse().unwrap();
        let law = TrajectoryLaw::from_parts(&phi, &sinv, &means);
        let y = DVector::from_vec(vec![0.5, -0.3, 1.0, 0.2, -0.4, 0.8]);
        let observed = vec![0, 2, 3, 5];
        let terms = law.observed_pointwise_loglik(&y, &observed).unwrap();
        let cov = law.covariance_dense().unwrap();
        let c = DMatrix::from_fn(4, 4, |a, b| cov[(observed[a], observed[b])]);
        let yo = DVector::from_iterator(4, observed.iter().map(|&o| y[o]));
        let mo = DVector::from_iterator(4, observed.iter().map(|&o| law.mean()[o]));
        let direct = linalg::gaussian_logpdf(&yo, &mo, &linalg::cholesky(&c, "c").unwrap());
        assert_relative_eq!(terms.iter().sum::<f64>(), direct, epsilon = 1e-10);
    }

    #[test]
    fn complete_subject_is_unchanged() {
        let subject = Subject {
            id: "s".into(),
            responses: DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
            observed: vec![true, true],
            tv_covariates: DMatrix::zeros(2, 0),
            base_covariates: DVector::zeros(0),
        };
        let law = TrajectoryLaw::from_parts(&scalar(0.5), &scalar(1.0), &DMatrix::zeros(2, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = impute_subject(&law, &subject, &subject.responses, &mut rng).unwrap();
        assert_eq!(out, subject.responses);
    }

    #[test]
    fn fully_missing_subject_gets_unconditional_draw() {
        let subject = Subject {
            id: "s".into(),
            responses: DMatrix::from_element(3, 1, f64::NAN),
            observed: vec![false; 3],
            tv_covariates: DMatrix::zeros(3, 0),
            base_covariates: DVector::zeros(0),
        };
        let law = TrajectoryLaw::from_parts(&scalar(0.5), &scalar(1.0), &DMatrix::from_element(3, 1, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 20_000;
        let mut acc = DVector::zeros(3);
        for _ in 0..n {
            let out = impute_subject(&law, &subject, &DMatrix::zeros(3, 1), &mut rng).unwrap();
            acc += stack(&out);
        }
        acc /= n as f64;
        // mu = (1, 1.5, 1.75)
        assert_relative_eq!(acc, DVector::from_vec(vec![1.0, 1.5, 1.75]), epsilon = 0.05);
    }
}
