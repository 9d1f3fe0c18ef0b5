use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::logistic;

/// Mixture weights produced by a stick-breaking recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct StickWeights {
    weights: Vec<f64>,
}

impl StickWeights {
    /// Run the recursion `w_h = v_h * prod_{l<h} (1 - v_l)` over the given
    /// stick fractions; the final fraction is forced to 1 so the weights sum to one.
    pub fn from_fractions(fractions: &[f64]) -> Self {
        let h = fractions.len();
        let mut weights = Vec::with_capacity(h);
        let mut rest = 1.0;
        for (idx, &v) in fractions.iter().enumerate() {
            if idx + 1 == h {
                weights.push(rest);
            } else {
                let w = v * rest;
                weights.push(w);
                rest *= 1.0 - v;
            }
        }
        Self { weights }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights
    }
}

fn check_dims(alphas: &[DVector<f64>], z: &DVector<f64>) -> Result<()> {
    if let Some((h, a)) = alphas.iter().enumerate().find(|(_, a)| a.len() != z.len()) {
        return Err(Error::dim(format!(
            "alpha_{} has length {}, covariate vector has length {}",
            h + 1,
            a.len(),
            z.len()
        )));
    }
    Ok(())
}

/// Logit stick-breaking weights at baseline covariates `z`:
/// `v_h(z) = logistic(z' alpha_h)` for `h < H` and `v_H = 1`, with
/// `H = alphas.len() + 1`.
pub fn compute_weights(alphas: &[DVector<f64>], z: &DVector<f64>) -> Result<StickWeights> {
    check_dims(alphas, z)?;
    let mut fractions: Vec<f64> = alphas.iter().map(|a| logistic(z.dot(a))).collect();
    fractions.push(1.0);
    Ok(StickWeights::from_fractions(&fractions))
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log weights computed without forming the fractions, stable for large
/// `|z' alpha_h|`: `log v = -softplus(-eta)`, `log(1 - v) = -softplus(eta)`.
pub fn log_weights(alphas: &[DVector<f64>], z: &DVector<f64>) -> Result<Vec<f64>> {
    check_dims(alphas, z)?;
    let mut out = Vec::with_capacity(alphas.len() + 1);
    let mut log_rest = 0.0;
    for a in alphas {
        let eta = z.dot(a);
        out.push(log_rest - softplus(-eta));
        log_rest -= softplus(eta);
    }
    out.push(log_rest);
    Ok(out)
}
