//! Chain driver: initialization, burn-in and thinning, checkpoint/resume and
//! independent parallel chains.
//!
//! Chain `c` draws all its randomness from ChaCha8 stream `c` of the run seed,
//! so results are identical whatever the thread count, and a resumed chain
//! continues the exact random sequence of the interrupted one.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::store::{PosteriorSamples, StoreLayout};
use crate::gibbs::updates::{Model, PriorKind};
use crate::linalg;
use crate::model::state::ChainState;
use crate::postprocess::waic::{WaicAccumulator, WaicReport};

const CHECKPOINT_VERSION: u32 = 1;

fn default_n_iter() -> usize {
    20_000
}
fn default_burn_in() -> usize {
    10_000
}
fn default_thin() -> usize {
    10
}
fn default_chains() -> usize {
    1
}
fn default_prior() -> PriorKind {
    PriorKind::Lsb
}
fn default_init_components() -> usize {
    5
}
fn default_true() -> bool {
    true
}
fn default_checkpoint_every() -> usize {
    1000
}

/// Sampler settings. Every field has a default, so a config file may name
/// only the ones it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    #[serde(default = "default_prior")]
    pub prior: PriorKind,
    /// Number of components the random initial allocation is spread over.
    #[serde(default = "default_init_components")]
    pub init_components: usize,
    /// Accumulate WAIC over retained draws.
    #[serde(default = "default_true")]
    pub compute_waic: bool,
    /// Also keep every per-entry log-likelihood row in the sample store.
    #[serde(default)]
    pub keep_loglik: bool,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Where the offending state is written when a sweep fails.
    #[serde(default)]
    pub dump_dir: Option<PathBuf>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_iter: default_n_iter(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            seed: 0,
            n_chains: default_chains(),
            prior: default_prior(),
            init_components: default_init_components(),
            compute_waic: true,
            keep_loglik: false,
            checkpoint_every: default_checkpoint_every(),
            checkpoint_dir: None,
            dump_dir: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_iter == 0 {
            return bad("n_iter must be positive");
        }
        if self.thin == 0 {
            return bad("thin must be positive");
        }
        if self.burn_in >= self.n_iter {
            return bad("burn_in must be smaller than n_iter");
        }
        if self.n_chains == 0 {
            return bad("at least one chain is required");
        }
        if self.init_components == 0 {
            return bad("init_components must be positive");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive");
        }
        if let PriorKind::Dp { mass } = self.prior {
            if !(mass > 0.0) {
                return bad("Dirichlet-process mass must be positive");
            }
        }
        Ok(())
    }

    /// Whether sweep `iteration` (1-based) is retained.
    pub fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burn_in && (iteration - self.burn_in) % self.thin == 0
    }

    pub fn n_retained(&self) -> usize {
        (self.n_iter.saturating_sub(self.burn_in)) / self.thin
    }
}

/// Output of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub chain: u32,
    pub samples: PosteriorSamples,
    pub waic: Option<WaicAccumulator>,
    pub final_state: ChainState,
}

/// Pooled output of all chains.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub samples: PosteriorSamples,
    pub waic: Option<WaicReport>,
    pub final_states: Vec<ChainState>,
}

pub fn chain_rng(seed: u64, chain: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Fill missing entries by carrying the last observed value of the same
/// coordinate forward (backward at the start), or the coordinate's overall
/// mean when the subject never observes it.
fn initial_responses(model: &Model) -> Vec<DMatrix<f64>> {
    let ds = model.data;
    let k = ds.resp_dim();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for s in ds.subjects() {
        for t in 0..s.horizon() {
            for j in 0..k {
                if s.is_observed(t, j) {
                    sums[j] += s.responses[(t, j)];
                    counts[j] += 1;
                }
            }
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 }).collect();
    ds.subjects()
        .iter()
        .map(|s| {
            let mut y = s.responses.clone();
            for j in 0..k {
                let first = (0..s.horizon()).find(|&t| s.is_observed(t, j));
                let mut last = first.map(|t| s.responses[(t, j)]).unwrap_or(means[j]);
                for t in 0..s.horizon() {
                    if s.is_observed(t, j) {
                        last = s.responses[(t, j)];
                    } else {
                        y[(t, j)] = last;
                    }
                }
            }
            y
        })
        .collect()
}

/// Starting state: regression coefficients at zero, the error covariance at
/// the diagonal of the observed response variances, allocations spread
/// uniformly at random over the first `init_components` components, then
/// atoms and mixing weights drawn from their full conditionals.
pub fn initial_state<R: Rng + ?Sized>(model: &Model, config: &SamplerConfig, rng: &mut R) -> Result<ChainState> {
    let ds = model.data;
    let hp = model.hyper;
    let (k, p, q, h) = (ds.resp_dim(), ds.tv_cov_dim(), ds.base_cov_dim(), hp.h);
    let d = k * k;
    let responses = initial_responses(model);
    let mut var = vec![0.0; k];
    let mut mean = vec![0.0; k];
    let mut n = vec![0usize; k];
    for s in ds.subjects() {
        for t in 0..s.horizon() {
            for j in 0..k {
                if s.is_observed(t, j) {
                    let x = s.responses[(t, j)];
                    n[j] += 1;
                    let delta = x - mean[j];
                    mean[j] += delta / n[j] as f64;
                    var[j] += delta * (x - mean[j]);
                }
            }
        }
    }
    let sigma = DMatrix::from_diagonal(&DVector::from_iterator(
        k,
        (0..k).map(|j| if n[j] > 1 { (var[j] / n[j] as f64).max(1e-6) } else { 1.0 }),
    ));
    let spread = config.init_components.min(h);
    let phi_000 = linalg::unvec_row(&hp.phi_000, k, k);
    let mut state = ChainState {
        b: DVector::zeros(k * p),
        gamma: DVector::zeros(k * q),
        sigma,
        atoms: vec![phi_000; h],
        allocations: (0..ds.n_subjects()).map(|_| rng.random_range(0..spread)).collect(),
        alphas: vec![DVector::zeros(q); h - 1],
        sticks: (0..h).map(|l| 1.0 / (h - l) as f64).collect(),
        phi_00: hp.phi_000.clone(),
        v_0: &hp.v_00 / (hp.tau_0 - d as f64 - 1.0).max(1.0),
        responses,
    };
    let sigma_inv = linalg::spd_inverse(&state.sigma, "sigma")?;
    model.update_atoms(&mut state, &sigma_inv, rng)?;
    match model.prior {
        PriorKind::Lsb => model.update_alphas(&mut state, rng)?,
        PriorKind::Dp { mass } => model.update_dp_sticks(&mut state, mass, rng)?,
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MatrixRecord {
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixRecord {
    fn from(m: &DMatrix<f64>) -> Self {
        Self { rows: m.nrows(), cols: m.ncols(), data: linalg::vec_row(m).iter().copied().collect() }
    }
}

impl From<&MatrixRecord> for DMatrix<f64> {
    fn from(r: &MatrixRecord) -> Self {
        DMatrix::from_row_slice(r.rows, r.cols, &r.data)
    }
}

/// Serializable image of a [`ChainState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    b: Vec<f64>,
    gamma: Vec<f64>,
    sigma: MatrixRecord,
    atoms: Vec<MatrixRecord>,
    allocations: Vec<usize>,
    alphas: Vec<Vec<f64>>,
    sticks: Vec<f64>,
    phi_00: Vec<f64>,
    v_0: MatrixRecord,
    responses: Vec<MatrixRecord>,
}

impl From<&ChainState> for StateRecord {
    fn from(s: &ChainState) -> Self {
        Self {
            b: s.b.iter().copied().collect(),
            gamma: s.gamma.iter().copied().collect(),
            sigma: (&s.sigma).into(),
            atoms: s.atoms.iter().map(Into::into).collect(),
            allocations: s.allocations.clone(),
            alphas: s.alphas.iter().map(|a| a.iter().copied().collect()).collect(),
            sticks: s.sticks.clone(),
            phi_00: s.phi_00.iter().copied().collect(),
            v_0: (&s.v_0).into(),
            responses: s.responses.iter().map(Into::into).collect(),
        }
    }
}

impl From<&StateRecord> for ChainState {
    fn from(r: &StateRecord) -> Self {
        Self {
            b: DVector::from_vec(r.b.clone()),
            gamma: DVector::from_vec(r.gamma.clone()),
            sigma: (&r.sigma).into(),
            atoms: r.atoms.iter().map(Into::into).collect(),
            allocations: r.allocations.clone(),
            alphas: r.alphas.iter().map(|a| DVector::from_vec(a.clone())).collect(),
            sticks: r.sticks.clone(),
            phi_00: DVector::from_vec(r.phi_00.clone()),
            v_0: (&r.v_0).into(),
            responses: r.responses.iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointRecord {
    version: u32,
    chain: u32,
    seed: u64,
    /// Number of completed sweeps.
    iteration: usize,
    word_pos: u128,
    state: StateRecord,
    waic: Option<WaicAccumulator>,
}

pub fn checkpoint_path(dir: &Path, chain: u32) -> PathBuf {
    dir.join(format!("chain_{chain}"))
}

fn write_checkpoint(dir: &Path, record: &CheckpointRecord, samples: &PosteriorSamples) -> Result<()> {
    let tmp = dir.with_extension("tmp");
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    fs::write(tmp.join("checkpoint.json"), serde_json::to_vec(record)?)?;
    samples.save(&tmp.join("samples"))?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}

fn read_checkpoint(dir: &Path) -> Result<(CheckpointRecord, PosteriorSamples)> {
    let text = fs::read(dir.join("checkpoint.json"))
        .map_err(|e| Error::Store(format!("cannot read checkpoint in {}: {e}", dir.display())))?;
    let record: CheckpointRecord = serde_json::from_slice(&text)?;
    if record.version != CHECKPOINT_VERSION {
        return Err(Error::Store(format!("checkpoint version {} is not supported", record.version)));
    }
    Ok((record, PosteriorSamples::load(&dir.join("samples"))?))
}

fn layout(model: &Model, config: &SamplerConfig) -> StoreLayout {
    let ds = model.data;
    StoreLayout {
        k: ds.resp_dim(),
        p: ds.tv_cov_dim(),
        q: ds.base_cov_dim(),
        h: model.hyper.h,
        n_subjects: ds.n_subjects(),
        n_missing: ds.n_missing(),
        n_loglik: config.keep_loglik.then(|| ds.n_observed_entries()),
        prior: model.prior,
    }
}

fn dump_state(config: &SamplerConfig, chain: u32, iteration: usize, state: &ChainState) -> Option<PathBuf> {
    let dir = config.dump_dir.as_ref()?;
    let path = dir.join(format!("failed_chain_{chain}_iter_{iteration}.json"));
    fs::create_dir_all(dir).ok()?;
    fs::write(&path, serde_json::to_vec(&StateRecord::from(state)).ok()?).ok()?;
    Some(path)
}

struct Progress {
    iteration: usize,
    rng: ChaCha8Rng,
    state: ChainState,
    samples: PosteriorSamples,
    waic: Option<WaicAccumulator>,
}

fn drive(model: &Model, config: &SamplerConfig, chain: u32, mut run: Progress) -> Result<ChainOutput> {
    let ckpt_dir = config.checkpoint_dir.as_ref().map(|d| checkpoint_path(d, chain));
    while run.iteration < config.n_iter {
        let it = run.iteration + 1;
        if let Err(e) = model.sweep(&mut run.state, &mut run.rng) {
            let dump = dump_state(config, chain, it, &run.state);
            return Err(Error::Sampler { iteration: it, source: Box::new(e), dump });
        }
        if config.keeps(it) {
            let needs_ll = config.keep_loglik || run.waic.is_some();
            let ll = if needs_ll { Some(model.pointwise_loglik(&run.state)?) } else { None };
            if let (Some(acc), Some(ll)) = (run.waic.as_mut(), ll.as_ref()) {
                acc.push(ll)?;
            }
            let imputed = run.state.imputed_values(model.data);
            let kept = if config.keep_loglik { ll.as_deref() } else { None };
            run.samples.push(it as u64, chain, &run.state, &imputed, kept)?;
        }
        run.iteration = it;
        if let Some(dir) = &ckpt_dir {
            if it % config.checkpoint_every == 0 || it == config.n_iter {
                let record = CheckpointRecord {
                    version: CHECKPOINT_VERSION,
                    chain,
                    seed: config.seed,
                    iteration: it,
                    word_pos: run.rng.get_word_pos(),
                    state: (&run.state).into(),
                    waic: run.waic.clone(),
                };
                write_checkpoint(dir, &record, &run.samples)?;
            }
        }
    }
    Ok(ChainOutput { chain, samples: run.samples, waic: run.waic, final_state: run.state })
}

/// Run chain `chain` from scratch.
pub fn run_chain(model: &Model, config: &SamplerConfig, chain: u32) -> Result<ChainOutput> {
    config.validate()?;
    let mut rng = chain_rng(config.seed, chain);
    let state = initial_state(model, config, &mut rng)?;
    let waic = config.compute_waic.then(|| WaicAccumulator::new(model.data.n_observed_entries()));
    let progress = Progress { iteration: 0, rng, state, samples: PosteriorSamples::new(layout(model, config)), waic };
    drive(model, config, chain, progress)
}

/// Continue chain `chain` from the checkpoint in `config.checkpoint_dir`
/// up to `config.n_iter` sweeps.
pub fn resume_chain(model: &Model, config: &SamplerConfig, chain: u32) -> Result<ChainOutput> {
    config.validate()?;
    let dir = config
        .checkpoint_dir
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("resuming needs checkpoint_dir".into()))?;
    let (record, samples) = read_checkpoint(&checkpoint_path(dir, chain))?;
    if record.seed != config.seed || record.chain != chain {
        return Err(Error::InvalidConfig("checkpoint was written by a run with another seed or chain".into()));
    }
    if samples.layout() != &layout(model, config) {
        return Err(Error::InvalidConfig("checkpoint does not match the data, prior or sampler settings".into()));
    }
    let mut rng = chain_rng(config.seed, chain);
    rng.set_word_pos(record.word_pos);
    let progress = Progress {
        iteration: record.iteration,
        rng,
        state: (&record.state).into(),
        samples,
        waic: record.waic,
    };
    drive(model, config, chain, progress)
}

fn pool(outputs: Vec<ChainOutput>) -> Result<FitOutput> {
    let mut iter = outputs.into_iter();
    let first = iter.next().ok_or_else(|| Error::InvalidConfig("no chains were run".into()))?;
    let mut samples = first.samples;
    let mut waic = first.waic;
    let mut final_states = vec![first.final_state];
    for out in iter {
        samples.extend(&out.samples)?;
        if let (Some(acc), Some(other)) = (waic.as_mut(), out.waic.as_ref()) {
            acc.merge(other)?;
        }
        final_states.push(out.final_state);
    }
    let waic = match waic {
        Some(acc) if acc.n_samples() >= 1 => Some(acc.report()?),
        _ => None,
    };
    Ok(FitOutput { samples, waic, final_states })
}

/// Run `config.n_chains` independent chains in parallel and pool their draws.
pub fn fit(model: &Model, config: &SamplerConfig) -> Result<FitOutput> {
    config.validate()?;
    let outputs = (0..config.n_chains as u32)
        .into_par_iter()
        .map(|c| run_chain(model, config, c))
        .collect::<Result<Vec<_>>>()?;
    pool(outputs)
}

/// Resume every chain from its checkpoint and pool the draws.
pub fn resume(model: &Model, config: &SamplerConfig) -> Result<FitOutput> {
    config.validate()?;
    let outputs = (0..config.n_chains as u32)
        .into_par_iter()
        .map(|c| resume_chain(model, config, c))
        .collect::<Result<Vec<_>>>()?;
    pool(outputs)
}
