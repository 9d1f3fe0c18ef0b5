use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::model::dataset::LongitudinalDataset;
use crate::model::hyper::Dims;

/// One configuration of every latent quantity updated by the Gibbs sweep.
///
/// Allocations are 0-based component indices in `0..H`. `alphas` holds the
/// `H - 1` logit stick-breaking coefficient vectors; `sticks` holds the `H`
/// covariate-free stick fractions used by the truncated Dirichlet-process
/// comparator (last entry fixed at 1). Only the one matching the run's prior
/// is updated.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    /// Row-major `vec(B)`, length `k * p`.
    pub b: DVector<f64>,
    /// Row-major `vec(Gamma)`, length `k * q`.
    pub gamma: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub atoms: Vec<DMatrix<f64>>,
    pub allocations: Vec<usize>,
    pub alphas: Vec<DVector<f64>>,
    pub sticks: Vec<f64>,
    pub phi_00: DVector<f64>,
    pub v_0: DMatrix<f64>,
    /// Completed responses (observed values plus current imputations), one `T_i x k` matrix per subject.
    pub responses: Vec<DMatrix<f64>>,
}

impl ChainState {
    pub fn dims(&self) -> Dims {
        let k = self.sigma.nrows();
        Dims {
            k,
            p: if k == 0 { 0 } else { self.b.len() / k },
            q: if k == 0 { 0 } else { self.gamma.len() / k },
        }
    }

    pub fn n_components(&self) -> usize {
        self.atoms.len()
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let Dims { k, p, .. } = self.dims();
        linalg::unvec_row(&self.b, k, p)
    }

    pub fn gamma_matrix(&self) -> DMatrix<f64> {
        let Dims { k, q, .. } = self.dims();
        linalg::unvec_row(&self.gamma, k, q)
    }

    pub fn phi_of(&self, subject: usize) -> &DMatrix<f64> {
        &self.atoms[self.allocations[subject]]
    }

    /// Number of subjects allocated to each component.
    pub fn counts(&self) -> Vec<usize> {
        let mut n = vec![0; self.atoms.len()];
        for &g in &self.allocations {
            n[g] += 1;
        }
        n
    }

    /// Current values of all missing entries, subject by subject in stacked order.
    pub fn imputed_values(&self, ds: &LongitudinalDataset) -> Vec<f64> {
        let k = ds.resp_dim();
        ds.subjects()
            .iter()
            .zip(&self.responses)
            .flat_map(|(s, y)| s.missing_positions().into_iter().map(move |m| y[(m / k, m % k)]))
            .collect()
    }

    /// Overwrite the missing entries from a flat list produced by [`Self::imputed_values`].
    pub fn set_imputed_values(&mut self, ds: &LongitudinalDataset, values: &[f64]) {
        let k = ds.resp_dim();
        let mut it = values.iter();
        for (s, y) in ds.subjects().iter().zip(self.responses.iter_mut()) {
            for m in s.missing_positions() {
                y[(m / k, m % k)] = *it.next().expect("imputed value count matches dataset");
            }
        }
    }
}
