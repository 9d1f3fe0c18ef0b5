//! Retained posterior draws, kept as flat per-parameter arrays and persisted
//! as one little-endian binary file per parameter plus a JSON manifest.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::updates::PriorKind;
use crate::linalg;
use crate::model::partition::Partition;
use crate::model::state::ChainState;

pub const STORE_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

/// Shape information shared by every retained draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreLayout {
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub h: usize,
    pub n_subjects: usize,
    pub n_missing: usize,
    /// Entries per log-likelihood row, when per-entry log-likelihoods are kept.
    pub n_loglik: Option<usize>,
    pub prior: PriorKind,
}

impl StoreLayout {
    fn widths(&self) -> [(&'static str, usize); 10] {
        let (k, p, q, h) = (self.k, self.p, self.q, self.h);
        [
            ("atoms", h * k * k),
            ("alphas", h.saturating_sub(1) * q),
            ("sticks", h),
            ("b", k * p),
            ("gamma", k * q),
            ("sigma", k * k),
            ("phi_00", k * k),
            ("v_0", k * k * k * k),
            ("imputed", self.n_missing),
            ("loglik", self.n_loglik.unwrap_or(0)),
        ]
    }
}

/// One retained draw, unpacked into matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub b: DMatrix<f64>,
    pub gamma: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub atoms: Vec<DMatrix<f64>>,
    pub allocations: Vec<usize>,
    pub alphas: Vec<DVector<f64>>,
    pub sticks: Vec<f64>,
    pub phi_00: DVector<f64>,
    pub v_0: DMatrix<f64>,
    /// Missing-entry imputations in the order of `ChainState::imputed_values`.
    pub imputed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    layout: StoreLayout,
    iterations: Vec<u64>,
    chains: Vec<u32>,
    allocations: Vec<u32>,
    real: [Vec<f64>; 10],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    layout: StoreLayout,
    n_samples: usize,
}

fn write_f64(path: &Path, data: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    Ok(fs::write(path, bytes)?)
}

fn write_u32(path: &Path, data: &[u32]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    Ok(fs::write(path, bytes)?)
}

fn write_u64(path: &Path, data: &[u64]) -> Result<()> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    Ok(fs::write(path, bytes)?)
}

fn read_words<const W: usize>(path: &Path, expected: usize) -> Result<Vec<[u8; W]>> {
    let bytes = fs::read(path)?;
    if bytes.len() != expected * W {
        return Err(Error::Store(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * W
        )));
    }
    Ok(bytes.chunks_exact(W).map(|c| c.try_into().expect("chunk width")).collect())
}

impl PosteriorSamples {
    pub fn new(layout: StoreLayout) -> Self {
        Self {
            layout,
            iterations: Vec::new(),
            chains: Vec::new(),
            allocations: Vec::new(),
            real: Default::default(),
        }
    }

    pub fn layout(&self) -> &StoreLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// Sweep number (1-based) at which each draw was retained.
    pub fn iterations(&self) -> &[u64] {
        &self.iterations
    }

    pub fn chains(&self) -> &[u32] {
        &self.chains
    }

    /// Append the current state. `loglik` must be given exactly when the layout keeps log-likelihoods.
    pub fn push(
        &mut self,
        iteration: u64,
        chain: u32,
        state: &ChainState,
        imputed: &[f64],
        loglik: Option<&[f64]>,
    ) -> Result<()> {
        let l = &self.layout;
        if state.allocations.len() != l.n_subjects || state.atoms.len() != l.h || imputed.len() != l.n_missing {
            return Err(Error::Store("state does not match the store layout".into()));
        }
        let ll: &[f64] = match (loglik, l.n_loglik) {
            (Some(v), Some(n)) if v.len() == n => v,
            (None, None) => &[],
            _ => return Err(Error::Store("log-likelihood row does not match the store layout".into())),
        };
        let atoms: Vec<f64> = state.atoms.iter().flat_map(|a| linalg::vec_row(a).iter().copied().collect::<Vec<_>>()).collect();
        let alphas: Vec<f64> = state.alphas.iter().flat_map(|a| a.iter().copied()).collect();
        let sticks = if state.sticks.len() == l.h { state.sticks.clone() } else { vec![0.0; l.h] };
        let parts: [Vec<f64>; 10] = [
            atoms,
            alphas,
            sticks,
            state.b.iter().copied().collect(),
            state.gamma.iter().copied().collect(),
            linalg::vec_row(&state.sigma).iter().copied().collect(),
            state.phi_00.iter().copied().collect(),
            linalg::vec_row(&state.v_0).iter().copied().collect(),
            imputed.to_vec(),
            ll.to_vec(),
        ];
        for ((name, width), part) in l.widths().iter().zip(&parts) {
            if part.len() != *width {
                return Err(Error::Store(format!("`{name}` has {} values, expected {width}", part.len())));
            }
        }
        for (dst, part) in self.real.iter_mut().zip(parts) {
            dst.extend(part);
        }
        self.iterations.push(iteration);
        self.chains.push(chain);
        self.allocations.extend(state.allocations.iter().map(|&g| g as u32));
        Ok(())
    }

    fn row(&self, field: usize, s: usize) -> &[f64] {
        let w = self.layout.widths()[field].1;
        &self.real[field][s * w..(s + 1) * w]
    }

    pub fn allocations(&self, s: usize) -> &[u32] {
        let n = self.layout.n_subjects;
        &self.allocations[s * n..(s + 1) * n]
    }

    pub fn partition(&self, s: usize) -> Partition {
        Partition::new(self.allocations(s).iter().map(|&g| g as usize).collect())
    }

    pub fn loglik(&self, s: usize) -> Option<&[f64]> {
        self.layout.n_loglik.map(|_| self.row(9, s))
    }

    pub fn imputed(&self, s: usize) -> &[f64] {
        self.row(8, s)
    }

    pub fn draw(&self, s: usize) -> PosteriorDraw {
        let StoreLayout { k, p, q, h, .. } = self.layout;
        let mat = |v: &[f64], r: usize, c: usize| linalg::unvec_row(&DVector::from_column_slice(v), r, c);
        let atoms = self.row(0, s).chunks(k * k).map(|c| mat(c, k, k)).collect();
        let alphas = if q == 0 {
            vec![DVector::zeros(0); h.saturating_sub(1)]
        } else {
            self.row(1, s).chunks(q).map(DVector::from_column_slice).collect()
        };
        PosteriorDraw {
            atoms,
            alphas,
            sticks: self.row(2, s).to_vec(),
            b: mat(self.row(3, s), k, p),
            gamma: mat(self.row(4, s), k, q),
            sigma: mat(self.row(5, s), k, k),
            phi_00: DVector::from_column_slice(self.row(6, s)),
            v_0: mat(self.row(7, s), k * k, k * k),
            allocations: self.allocations(s).iter().map(|&g| g as usize).collect(),
            imputed: self.row(8, s).to_vec(),
        }
    }

    /// Append the draws of another store with the same layout.
    pub fn extend(&mut self, other: &PosteriorSamples) -> Result<()> {
        if other.layout != self.layout {
            return Err(Error::Store("cannot combine stores with different layouts".into()));
        }
        self.iterations.extend(&other.iterations);
        self.chains.extend(&other.chains);
        self.allocations.extend(&other.allocations);
        for (dst, src) in self.real.iter_mut().zip(&other.real) {
            dst.extend(src);
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let manifest = Manifest { version: STORE_VERSION, layout: self.layout.clone(), n_samples: self.len() };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        write_u64(&dir.join("iterations.u64"), &self.iterations)?;
        write_u32(&dir.join("chains.u32"), &self.chains)?;
        write_u32(&dir.join("allocations.u32"), &self.allocations)?;
        for ((name, _), data) in self.layout.widths().iter().zip(&self.real) {
            write_f64(&dir.join(format!("{name}.f64")), data)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| Error::Store(format!("cannot read {}: {e}", dir.join(MANIFEST).display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.version != STORE_VERSION {
            return Err(Error::Store(format!(
                "store version {} is not supported (expected {STORE_VERSION})",
                manifest.version
            )));
        }
        let n = manifest.n_samples;
        let layout = manifest.layout;
        let iterations = read_words::<8>(&dir.join("iterations.u64"), n)?.into_iter().map(u64::from_le_bytes).collect();
        let chains = read_words::<4>(&dir.join("chains.u32"), n)?.into_iter().map(u32::from_le_bytes).collect();
        let allocations: Vec<u32> = read_words::<4>(&dir.join("allocations.u32"), n * layout.n_subjects)?
            .into_iter()
            .map(u32::from_le_bytes)
            .collect();
        let mut real: [Vec<f64>; 10] = Default::default();
        for ((name, width), dst) in layout.widths().iter().zip(real.iter_mut()) {
            *dst = read_words::<8>(&dir.join(format!("{name}.f64")), n * width)?
                .into_iter()
                .map(f64::from_le_bytes)
                .collect();
        }
        if let Some(&g) = allocations.iter().find(|&&g| g as usize >= layout.h) {
            return Err(Error::Store(format!("allocation {g} exceeds the truncation level {}", layout.h)));
        }
        Ok(Self { layout, iterations, chains, allocations, real })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> ChainState {
        ChainState {
            b: DVector::from_vec(vec![1.0, 2.0]),
            gamma: DVector::from_vec(vec![3.0, 4.0, 5.0, 6.0]),
            sigma: DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]),
            atoms: vec![DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]), DMatrix::identity(2, 2)],
            allocations: vec![1, 0, 1],
            alphas: vec![DVector::from_vec(vec![0.5, -0.5])],
            sticks: vec![0.3, 1.0],
            phi_00: DVector::from_vec(vec![0.0, 1.0, 2.0, 3.0]),
            v_0: DMatrix::identity(4, 4),
            responses: vec![],
        }
    }

    fn layout(n_loglik: Option<usize>) -> StoreLayout {
        StoreLayout { k: 2, p: 1, q: 2, h: 2, n_subjects: 3, n_missing: 1, n_loglik, prior: PriorKind::Lsb }
    }

    #[test]
    fn draw_recovers_pushed_state() {
        let mut s = PosteriorSamples::new(layout(Some(2)));
        let st = state();
        s.push(7, 0, &st, &[9.5], Some(&[-1.0, -2.0])).unwrap();
        let d = s.draw(0);
        assert_eq!(d.atoms, st.atoms);
        assert_eq!(d.b, st.b_matrix());
        assert_eq!(d.gamma, st.gamma_matrix());
        assert_eq!(d.sigma, st.sigma);
        assert_eq!(d.allocations, st.allocations);
        assert_eq!(d.alphas, st.alphas);
        assert_eq!(d.imputed, vec![9.5]);
        assert_eq!(s.loglik(0).unwrap(), &[-1.0, -2.0]);
        assert_eq!(s.iterations(), &[7]);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let mut s = PosteriorSamples::new(layout(None));
        assert!(s.push(1, 0, &state(), &[0.0], Some(&[1.0])).is_err());
        assert!(s.push(1, 0, &state(), &[], None).is_err());
    }

    #[test]
    fn persistence_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = PosteriorSamples::new(layout(Some(2)));
        s.push(1, 0, &state(), &[0.25], Some(&[-0.5, -0.75])).unwrap();
        s.push(2, 1, &state(), &[f64::MIN_POSITIVE], Some(&[-1e300, 0.0])).unwrap();
        s.save(dir.path()).unwrap();
        assert_eq!(PosteriorSamples::load(dir.path()).unwrap(), s);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        PosteriorSamples::new(layout(None)).save(dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 99");
        fs::write(&path, text).unwrap();
        assert!(matches!(PosteriorSamples::load(dir.path()), Err(Error::Store(_))));
    }
}
