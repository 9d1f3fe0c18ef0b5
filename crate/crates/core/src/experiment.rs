//! Runs on disk: fitting into a self-describing artifact directory,
//! evaluating a finished run from that directory alone, and the
//! side-by-side comparison of several mixing priors on identical data.
//!
//! A fit directory holds
//!
//! ```text
//! manifest.json     RunManifest
//! config.toml       resolved [sampler] and [hyper] sections
//! data.csv          the data the chains saw
//! truth.csv         optional reference partition (subject_id,component)
//! test.csv          optional subjects for whole-trajectory prediction
//! holdout.csv       optional held-out visits of fitted subjects
//! samples/          PosteriorSamples store
//! waic.json         when the sampler accumulated it
//! checkpoints/      one resumable checkpoint per chain
//! ```
//!
//! Randomness: chain `c` uses stream `c` of the root seed; every other use
//! draws from stream `(purpose << 32) | index`, see [`Purpose`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gibbs::{fit, resume, Model, PosteriorSamples, PriorKind, SamplerConfig};
use crate::model::{parse_long_csv, read_long_csv, Dims, HyperConfig, LongitudinalDataset, ModelHyperparams, Partition};
use crate::postprocess::{
    adjusted_rand_index, binder_point_estimate, cluster_count_posterior, predict_ins, predict_oos,
    predictive_quantiles, squared_error, summarize_mse, waic, MseSummary, PredictiveDraws, WaicReport,
};
use crate::simulation::{generate_scenario, make_ins_split, make_oos_split, HeldOutTail, Scenario, ScenarioSpec};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Probabilities reported by the predictive-quantile files.
pub const QUANTILE_PROBS: [f64; 5] = [0.025, 0.05, 0.5, 0.95, 0.975];
const QUANTILE_NAMES: [&str; 5] = ["q025", "q05", "q50", "q95", "q975"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Simulate = 1,
    Truncate = 2,
    PredictOos = 3,
    PredictIns = 4,
    PredictPhi = 5,
}

pub fn purpose_rng(seed: u64, purpose: Purpose, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | u64::from(index));
    rng
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn prior_label(prior: PriorKind) -> String {
    match prior {
        PriorKind::Lsb => "lsb".into(),
        PriorKind::Dp { mass } if mass == 1.0 => "dp".into(),
        PriorKind::Dp { mass } => format!("dp_{mass}"),
    }
}

// ---------------------------------------------------------------------------
// Configuration

/// Where the data come from: a long CSV, or one of the simulated scenarios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Reference partition for `path` data.
    pub truth_path: Option<PathBuf>,
    /// Whole-trajectory prediction targets for `path` data.
    pub test_path: Option<PathBuf>,
    pub scenario: Option<u8>,
    pub n_subjects: Option<usize>,
    pub horizon: Option<usize>,
    #[serde(default)]
    pub zero_second_component: bool,
    /// Seed of simulation and data splits; the sampler seed when absent.
    pub seed: Option<u64>,
}

fn default_priors() -> Vec<PriorKind> {
    vec![PriorKind::Lsb, PriorKind::Dp { mass: 1.0 }]
}
fn default_test_size() -> usize {
    300
}
fn default_ins_subjects() -> usize {
    100
}
fn default_t_cut() -> usize {
    5
}

/// Fit every prior in `priors` on the same truncated training set with the
/// same seed, then score whole-trajectory and in-sample prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparatorConfig {
    #[serde(default = "default_priors")]
    pub priors: Vec<PriorKind>,
    /// Size of the simulated test set (scenario data only).
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Number of training subjects truncated after `t_cut` visits.
    #[serde(default = "default_ins_subjects")]
    pub ins_subjects: usize,
    #[serde(default = "default_t_cut")]
    pub t_cut: usize,
}

impl Default for ComparatorConfig {
    fn default() -> Self {
        Self { priors: default_priors(), test_size: 300, ins_subjects: 100, t_cut: 5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub hyper: HyperConfig,
    pub comparator: Option<ComparatorConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that need no data: run before any compute.
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        match (&self.data.path, self.data.scenario) {
            (Some(_), Some(_)) => return Err(Error::Config("`data` sets both `path` and `scenario`".into())),
            (None, None) => return Err(Error::Config("`data` needs `path` or `scenario`".into())),
            (None, Some(n)) if Scenario::from_number(n).is_none() => {
                return Err(Error::Config(format!("`data.scenario` must be 1, 2 or 3, found {n}")))
            }
            _ => {}
        }
        if let Some(c) = &self.comparator {
            if c.priors.is_empty() {
                return Err(Error::Config("`comparator.priors` is empty".into()));
            }
            let mut labels: Vec<String> = c.priors.iter().map(|p| prior_label(*p)).collect();
            labels.sort();
            labels.dedup();
            if labels.len() != c.priors.len() {
                return Err(Error::Config("`comparator.priors` lists a prior twice".into()));
            }
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.data.seed.unwrap_or(self.sampler.seed)
    }
}

/// The `config.toml` of a fit directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfigFile {
    pub sampler: SamplerConfig,
    pub hyper: HyperConfig,
}

/// Read a `[sampler]` / `[hyper]` config; both sections are optional.
pub fn read_fit_config(text: &str) -> Result<(SamplerConfig, HyperConfig)> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Partial {
        #[serde(default)]
        sampler: SamplerConfig,
        #[serde(default)]
        hyper: HyperConfig,
    }
    let p: Partial = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    Ok((p.sampler, p.hyper))
}

// ---------------------------------------------------------------------------
// Manifest and file helpers

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub status: RunStatus,
    pub error: Option<String>,
    /// State dump of a failed sweep.
    pub failure_dump: Option<PathBuf>,
    pub seed: u64,
    pub prior: Option<PriorKind>,
    /// Verbatim configuration the run was started from.
    pub config: String,
    pub data_sha256: String,
    /// Every file of the directory except this manifest and the checkpoints.
    pub artifacts: Vec<Artifact>,
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let bytes = fs::read(dir.join("manifest.json"))
            .map_err(|e| Error::Store(format!("no manifest in {}: {e}", dir.display())))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let rel = path.strip_prefix(root).expect("inside root").to_path_buf();
        if rel == Path::new("manifest.json") || rel.starts_with("checkpoints") {
            continue;
        }
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(rel);
        }
    }
    Ok(())
}

/// Content hashes of every artifact under `dir`, sorted by path.
pub fn hash_artifacts(dir: &Path) -> Result<Vec<Artifact>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|rel| {
            Ok(Artifact {
                sha256: sha256_hex(&fs::read(dir.join(&rel))?),
                path: rel.to_string_lossy().replace('\\', "/"),
            })
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_truth(path: &Path, data: &LongitudinalDataset, truth: &Partition) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["subject_id", "component"])?;
    for (s, g) in data.subjects().iter().zip(truth.labels()) {
        w.write_record([s.id.clone(), (g + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reference labels for the subjects of `data`, read from `subject_id,component`.
pub fn read_truth(path: &Path, data: &LongitudinalDataset) -> Result<Partition> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut by_id = HashMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = idx + 2;
        if rec.len() != 2 {
            return Err(Error::Malformed { row, msg: "expected subject_id,component".into() });
        }
        let g: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::Malformed { row, msg: format!("invalid component `{}`", &rec[1]) })?;
        by_id.insert(rec[0].trim().to_string(), g);
    }
    let labels = data
        .subjects()
        .iter()
        .map(|s| by_id.get(&s.id).copied().ok_or_else(|| Error::Malformed { row: 0, msg: format!("no reference label for subject {}", s.id) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Partition::new(labels))
}

fn read_dataset(path: &Path) -> Result<LongitudinalDataset> {
    let file = fs::File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(read_long_csv(file)?.dataset)
}

/// Held-out visits in the long CSV layout, `t` continuing the subject's training visits.
pub fn write_holdout(path: &Path, data: &LongitudinalDataset, tails: &[HeldOutTail]) -> Result<()> {
    let (k, p, q) = (data.resp_dim(), data.tv_cov_dim(), data.base_cov_dim());
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["subject_id".to_string(), "t".to_string()];
    head.extend((1..=k).map(|j| format!("y_{j}")));
    head.extend((1..=p).map(|j| format!("x_{j}")));
    head.extend((1..=q).map(|j| format!("z_{j}")));
    w.write_record(&head)?;
    for tail in tails {
        let s = data.subject(tail.subject);
        for r in 0..tail.responses.nrows() {
            let mut row = vec![s.id.clone(), (s.horizon() + r + 1).to_string()];
            for j in 0..k {
                row.push(if tail.observed[r * k + j] { tail.responses[(r, j)].to_string() } else { String::new() });
            }
            row.extend(tail.tv_covariates.row(r).iter().map(f64::to_string));
            row.extend(s.base_covariates.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Held-out visits for subjects of `data`. Each subject's rows must continue
/// its training visits without gaps.
pub fn read_holdout(path: &Path, data: &LongitudinalDataset) -> Result<Vec<HeldOutTail>> {
    let table = parse_long_csv(fs::File::open(path)?)?;
    if table.records.is_empty() {
        return Ok(Vec::new());
    }
    if (table.resp_dim, table.tv_cov_dim, table.base_cov_dim) != (data.resp_dim(), data.tv_cov_dim(), data.base_cov_dim()) {
        return Err(Error::dim("held-out visits and fitted data have different columns"));
    }
    let index: HashMap<&str, usize> = data.subjects().iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut grouped: BTreeMap<usize, Vec<&crate::model::RawRecord>> = BTreeMap::new();
    for rec in &table.records {
        let i = *index
            .get(rec.subject_id.as_str())
            .ok_or_else(|| Error::Malformed { row: rec.row, msg: format!("subject {} was not fitted", rec.subject_id) })?;
        grouped.entry(i).or_default().push(rec);
    }
    let k = data.resp_dim();
    grouped
        .into_iter()
        .map(|(i, mut recs)| {
            recs.sort_by_key(|r| r.t);
            let start = data.subject(i).horizon() + 1;
            for (n, r) in recs.iter().enumerate() {
                if r.t != start + n {
                    return Err(Error::Malformed { row: r.row, msg: format!("expected visit {} for subject {}", start + n, r.subject_id) });
                }
            }
            let rows = recs.len();
            Ok(HeldOutTail {
                subject: i,
                responses: DMatrix::from_fn(rows, k, |t, j| recs[t].y[j].unwrap_or(f64::NAN)),
                observed: recs.iter().flat_map(|r| r.y.iter().map(Option::is_some)).collect(),
                tv_covariates: DMatrix::from_fn(rows, data.tv_cov_dim(), |t, j| recs[t].x[j]),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Fitting

/// Optional evaluation material stored next to a fit.
#[derive(Debug, Clone, Default)]
pub struct FitExtras {
    pub truth: Option<Partition>,
    pub test: Option<LongitudinalDataset>,
    pub holdout: Vec<HeldOutTail>,
}

fn dims_of(data: &LongitudinalDataset) -> Dims {
    Dims { k: data.resp_dim(), p: data.tv_cov_dim(), q: data.base_cov_dim() }
}

fn prepare_fit_dir(
    dir: &Path,
    data: &LongitudinalDataset,
    hyper: &ModelHyperparams,
    sampler: &SamplerConfig,
    extras: &FitExtras,
) -> Result<(SamplerConfig, String)> {
    fs::create_dir_all(dir)?;
    let mut sampler = sampler.clone();
    sampler.checkpoint_dir.get_or_insert_with(|| dir.join("checkpoints"));
    sampler.dump_dir.get_or_insert_with(|| dir.join("failed"));
    let data_csv = data.to_csv_string();
    fs::write(dir.join("data.csv"), &data_csv)?;
    // Paths are run-local; keep them out of the hashed snapshot.
    let snapshot = FitConfigFile {
        sampler: SamplerConfig { checkpoint_dir: None, dump_dir: None, ..sampler.clone() },
        hyper: hyper.to_config(),
    };
    fs::write(dir.join("config.toml"), toml::to_string(&snapshot).map_err(|e| Error::Config(e.to_string()))?)?;
    if let Some(truth) = &extras.truth {
        write_truth(&dir.join("truth.csv"), data, truth)?;
    }
    if let Some(test) = &extras.test {
        fs::write(dir.join("test.csv"), test.to_csv_string())?;
    }
    if !extras.holdout.is_empty() {
        write_holdout(&dir.join("holdout.csv"), data, &extras.holdout)?;
    }
    Ok((sampler, sha256_hex(data_csv.as_bytes())))
}

fn finish_fit(
    dir: &Path,
    sampler: &SamplerConfig,
    data_sha256: String,
    started: (u64, Instant),
    outcome: Result<crate::gibbs::FitOutput>,
) -> Result<RunManifest> {
    let mut manifest = RunManifest {
        code_version: CODE_VERSION.into(),
        status: RunStatus::Complete,
        error: None,
        failure_dump: None,
        seed: sampler.seed,
        prior: Some(sampler.prior),
        config: fs::read_to_string(dir.join("config.toml"))?,
        data_sha256,
        artifacts: Vec::new(),
        started_unix_secs: started.0,
        elapsed_secs: 0.0,
    };
    let result = match outcome {
        Ok(out) => {
            out.samples.save(&dir.join("samples"))?;
            if let Some(report) = &out.waic {
                write_json(&dir.join("waic.json"), report)?;
            }
            Ok(())
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            if let Error::Sampler { dump, .. } = &e {
                manifest.failure_dump = dump.clone();
            }
            Err(e)
        }
    };
    manifest.artifacts = hash_artifacts(dir)?;
    manifest.elapsed_secs = started.1.elapsed().as_secs_f64();
    write_json(&dir.join("manifest.json"), &manifest)?;
    result.map(|_| manifest)
}

/// Fit `data` into the artifact directory `dir`. A failed run still writes
/// its manifest, with the error and the path of the state dump.
pub fn fit_to_dir(
    dir: &Path,
    data: &LongitudinalDataset,
    hyper: &ModelHyperparams,
    sampler: &SamplerConfig,
    extras: &FitExtras,
) -> Result<RunManifest> {
    let started = (unix_now(), Instant::now());
    sampler.validate()?;
    let (sampler, data_sha256) = prepare_fit_dir(dir, data, hyper, sampler, extras)?;
    let model = Model::new(data, hyper, sampler.prior)?;
    let outcome = fit(&model, &sampler);
    finish_fit(dir, &sampler, data_sha256, started, outcome)
}

/// Continue the chains of an interrupted fit directory from their
/// checkpoints up to the configured number of sweeps.
pub fn resume_dir(dir: &Path) -> Result<RunManifest> {
    let started = (unix_now(), Instant::now());
    let run = FitDir::open_inputs(dir)?;
    let mut sampler = run.sampler.clone();
    sampler.checkpoint_dir = Some(dir.join("checkpoints"));
    sampler.dump_dir = Some(dir.join("failed"));
    let model = Model::new(&run.data, &run.hyper, sampler.prior)?;
    let outcome = resume(&model, &sampler);
    let data_sha256 = sha256_hex(fs::read(dir.join("data.csv"))?.as_slice());
    finish_fit(dir, &sampler, data_sha256, started, outcome)
}

/// Everything stored in a fit directory.
#[derive(Debug, Clone)]
pub struct FitDir {
    pub dir: PathBuf,
    pub sampler: SamplerConfig,
    pub hyper: ModelHyperparams,
    pub data: LongitudinalDataset,
    pub truth: Option<Partition>,
    pub test: Option<LongitudinalDataset>,
    pub holdout: Vec<HeldOutTail>,
    pub samples: Option<PosteriorSamples>,
}

impl FitDir {
    fn open_inputs(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("config.toml"))
            .map_err(|e| Error::Store(format!("{} is not a fit directory: {e}", dir.display())))?;
        let (sampler, hyper_cfg) = read_fit_config(&text)?;
        let data = read_dataset(&dir.join("data.csv"))?;
        let hyper = hyper_cfg.resolve(dims_of(&data))?;
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        let truth = opt("truth.csv").map(|p| read_truth(&p, &data)).transpose()?;
        let test = opt("test.csv").map(|p| read_dataset(&p)).transpose()?;
        let holdout = opt("holdout.csv").map(|p| read_holdout(&p, &data)).transpose()?.unwrap_or_default();
        Ok(Self { dir: dir.to_path_buf(), sampler, hyper, data, truth, test, holdout, samples: None })
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let mut run = Self::open_inputs(dir)?;
        run.samples = Some(PosteriorSamples::load(&dir.join("samples"))?);
        Ok(run)
    }

    pub fn samples(&self) -> &PosteriorSamples {
        self.samples.as_ref().expect("opened with samples")
    }

    pub fn waic(&self) -> Result<Option<WaicReport>> {
        let path = self.dir.join("waic.json");
        if path.exists() {
            return Ok(Some(serde_json::from_slice(&fs::read(path)?)?));
        }
        let samples = self.samples();
        if samples.layout().n_loglik.is_some() && !samples.is_empty() {
            let rows: Vec<Vec<f64>> = (0..samples.len()).map(|s| samples.loglik(s).expect("stored").to_vec()).collect();
            return Ok(Some(waic(&rows)?));
        }
        Ok(None)
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Predictive draws for one subject with its scored error.
#[derive(Debug, Clone)]
pub struct SubjectPrediction {
    pub subject_id: String,
    /// Visit number of the first predicted row.
    pub first_visit: usize,
    pub draws: PredictiveDraws,
    /// Mean squared error of the predictive median over observed entries;
    /// `None` when nothing could be scored.
    pub mse: Option<f64>,
}

/// Whole-trajectory prediction of every test subject from its first visit.
/// Subjects with fewer than two visits or an incomplete first visit are skipped.
pub fn predict_test_set(samples: &PosteriorSamples, test: &LongitudinalDataset, seed: u64) -> Result<Vec<SubjectPrediction>> {
    let k = test.resp_dim();
    let out = (0..test.n_subjects())
        .into_par_iter()
        .filter(|&i| {
            let s = test.subject(i);
            s.horizon() >= 2 && (0..k).all(|j| s.is_observed(0, j))
        })
        .map(|i| {
            let s = test.subject(i);
            let mut rng = purpose_rng(seed, Purpose::PredictOos, i as u32);
            let y_1 = DVector::from_fn(k, |j, _| s.responses[(0, j)]);
            let draws = predict_oos(samples, &s.base_covariates, &y_1, &s.tv_covariates, s.horizon(), &mut rng)?;
            let t = s.horizon() - 1;
            let (sum, n) = squared_error(
                &draws.median.rows(1, t).clone_owned(),
                &s.responses.rows(1, t).clone_owned(),
                &s.observed[k..],
            )?;
            Ok(SubjectPrediction { subject_id: s.id.clone(), first_visit: 1, draws, mse: (n > 0).then(|| sum / n as f64) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(out)
}

/// Prediction of each held-out tail from the subject's last fitted visit.
pub fn predict_holdout(
    samples: &PosteriorSamples,
    data: &LongitudinalDataset,
    tails: &[HeldOutTail],
    seed: u64,
) -> Result<Vec<SubjectPrediction>> {
    tails
        .par_iter()
        .map(|tail| {
            let s = data.subject(tail.subject);
            let mut rng = purpose_rng(seed, Purpose::PredictIns, tail.subject as u32);
            let draws = predict_ins(samples, data, tail.subject, s.horizon(), &tail.tv_covariates, &mut rng)?;
            let (sum, n) = squared_error(&draws.median, &tail.responses, &tail.observed)?;
            Ok(SubjectPrediction {
                subject_id: s.id.clone(),
                first_visit: s.horizon() + 1,
                draws,
                mse: (n > 0).then(|| sum / n as f64),
            })
        })
        .collect()
}

pub fn write_quantiles(path: &Path, predictions: &[SubjectPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["subject_id", "time", "response", "mean"];
    head.extend(QUANTILE_NAMES);
    w.write_record(&head)?;
    for p in predictions {
        for row in predictive_quantiles(&p.draws.draws, &QUANTILE_PROBS) {
            let mut rec = vec![
                p.subject_id.clone(),
                (p.first_visit + row.time - 1).to_string(),
                row.response.to_string(),
                p.draws.mean[(row.time - 1, row.response - 1)].to_string(),
            ];
            rec.extend(row.values.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn mse_of(predictions: &[SubjectPrediction]) -> Option<MseSummary> {
    let values: Vec<f64> = predictions.iter().filter_map(|p| p.mse).collect();
    (!values.is_empty()).then(|| summarize_mse(&values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub prior: PriorKind,
    pub n_samples: usize,
    pub n_clusters_estimate: usize,
    pub cluster_counts: BTreeMap<usize, usize>,
    pub ari: Option<f64>,
    pub waic: Option<WaicReport>,
    pub oos_mse: Option<MseSummary>,
    pub ins_mse: Option<MseSummary>,
}

/// Summarise a fit directory and write `partition.csv`,
/// `cluster_counts.csv`, `report.json` and the predictive-quantile files
/// for whatever evaluation material the directory holds.
pub fn postprocess_dir(dir: &Path) -> Result<RunReport> {
    let run = FitDir::open(dir)?;
    let samples = run.samples();
    if samples.is_empty() {
        return Err(Error::Store("the run retained no samples".into()));
    }
    let parts: Vec<Partition> = (0..samples.len()).map(|s| samples.partition(s)).collect();
    let estimate = binder_point_estimate(&parts)?;
    let counts = cluster_count_posterior(&parts);

    let mut w = csv::Writer::from_path(dir.join("partition.csv"))?;
    w.write_record(["subject_id", "cluster"])?;
    for (s, g) in run.data.subjects().iter().zip(estimate.labels()) {
        w.write_record([s.id.clone(), (g + 1).to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("cluster_counts.csv"))?;
    w.write_record(["n_clusters", "n_samples"])?;
    for (c, n) in &counts {
        w.write_record([c.to_string(), n.to_string()])?;
    }
    w.flush()?;

    let seed = run.sampler.seed;
    let oos = match &run.test {
        Some(test) => {
            let preds = predict_test_set(samples, test, seed)?;
            write_quantiles(&dir.join("oos_quantiles.csv"), &preds)?;
            mse_of(&preds)
        }
        None => None,
    };
    let ins = if run.holdout.is_empty() {
        None
    } else {
        let preds = predict_holdout(samples, &run.data, &run.holdout, seed)?;
        write_quantiles(&dir.join("ins_quantiles.csv"), &preds)?;
        mse_of(&preds)
    };
    let report = RunReport {
        prior: samples.layout().prior,
        n_samples: samples.len(),
        n_clusters_estimate: estimate.n_clusters(),
        cluster_counts: counts,
        ari: run.truth.as_ref().map(|t| adjusted_rand_index(&estimate, t)).transpose()?,
        waic: run.waic()?,
        oos_mse: oos,
        ins_mse: ins,
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Experiments

/// Training data plus optional reference labels and test subjects.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: LongitudinalDataset,
    pub truth: Option<Partition>,
    pub test: Option<LongitudinalDataset>,
}

/// Load or simulate the data described by `cfg`. Relative paths are taken
/// relative to `base`.
pub fn prepare_data(cfg: &RunConfig, base: &Path) -> Result<PreparedData> {
    let d = &cfg.data;
    if let Some(path) = &d.path {
        let train = read_dataset(&base.join(path))?;
        let truth = d.truth_path.as_ref().map(|p| read_truth(&base.join(p), &train)).transpose()?;
        let test = d.test_path.as_ref().map(|p| read_dataset(&base.join(p))).transpose()?;
        return Ok(PreparedData { train, truth, test });
    }
    let scenario = Scenario::from_number(d.scenario.expect("validated")).expect("validated");
    let mut spec = ScenarioSpec::new(scenario);
    if let Some(n) = d.n_subjects {
        spec.n_subjects = n;
    }
    if let Some(t) = d.horizon {
        spec.horizon = t;
    }
    if d.zero_second_component {
        spec = spec.with_zero_second_component();
    }
    let mut rng = purpose_rng(cfg.data_seed(), Purpose::Simulate, 0);
    let test_size = cfg.comparator.as_ref().map_or(0, |c| c.test_size);
    if test_size == 0 {
        let sim = generate_scenario(&spec, &mut rng)?;
        return Ok(PreparedData { train: sim.dataset, truth: Some(sim.truth), test: None });
    }
    let (train, test) = make_oos_split(&spec, test_size, &mut rng)?;
    Ok(PreparedData { train: train.dataset, truth: Some(train.truth), test: Some(test.dataset) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reports: Vec<(String, RunReport)>,
}

impl Comparison {
    /// Rows OOS, INS, ARI and WAIC against one column per prior.
    pub fn table(&self) -> Vec<Vec<String>> {
        let mse = |m: &Option<MseSummary>| m.map_or("NA".into(), |m| format!("{:.3} ± {:.3}", m.mean, m.sd));
        let mut head = vec!["metric".to_string()];
        head.extend(self.reports.iter().map(|(l, _)| l.to_uppercase()));
        let row = |name: &str, f: &dyn Fn(&RunReport) -> String| {
            let mut r = vec![name.to_string()];
            r.extend(self.reports.iter().map(|(_, rep)| f(rep)));
            r
        };
        vec![
            head,
            row("OOS", &|r| mse(&r.oos_mse)),
            row("INS", &|r| mse(&r.ins_mse)),
            row("ARI", &|r| r.ari.map_or("NA".into(), |a| format!("{a:.3}"))),
            row("WAIC", &|r| r.waic.as_ref().map_or("NA".into(), |w| format!("{:.2}", w.waic))),
        ]
    }

    pub fn report(&self, label: &str) -> Option<&RunReport> {
        self.reports.iter().find(|(l, _)| l == label).map(|(_, r)| r)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub reports: Comparison,
}

/// Run the pipeline described by the config file at `config_path` into `out`.
///
/// Without a `[comparator]` section this is one fit of `sampler.prior`
/// followed by post-processing. With it, the data are split once (test set,
/// truncated subjects) and every listed prior is fitted on the same
/// training set with the same seed, each into `out/<prior>/`.
pub fn run_experiment(config_path: &Path, out: &Path) -> Result<ExperimentOutcome> {
    let text = fs::read_to_string(config_path)?;
    let cfg = RunConfig::from_toml(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    run_experiment_config(&cfg, &text, base, out)
}

pub fn run_experiment_config(cfg: &RunConfig, config_text: &str, base: &Path, out: &Path) -> Result<ExperimentOutcome> {
    let started = (unix_now(), Instant::now());
    cfg.validate()?;
    let data = prepare_data(cfg, base)?;
    let hyper = cfg.hyper.resolve(dims_of(&data.train))?;
    fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    let (train, holdout) = match &cfg.comparator {
        Some(c) if c.ins_subjects > 0 => {
            let mut rng = purpose_rng(cfg.data_seed(), Purpose::Truncate, 0);
            let split = make_ins_split(&data.train, c.ins_subjects, c.t_cut, &mut rng)?;
            (split.dataset, split.tails)
        }
        _ => (data.train.clone(), Vec::new()),
    };
    let extras = FitExtras { truth: data.truth.clone(), test: data.test.clone(), holdout };
    let priors = cfg.comparator.as_ref().map_or_else(|| vec![cfg.sampler.prior], |c| c.priors.clone());
    let mut failure = None;
    for prior in priors {
        let label = prior_label(prior);
        let dir = if cfg.comparator.is_some() { out.join(&label) } else { out.to_path_buf() };
        let sampler = SamplerConfig { prior, checkpoint_dir: None, dump_dir: None, ..cfg.sampler.clone() };
        match fit_to_dir(&dir, &train, &hyper, &sampler, &extras) {
            Ok(_) => reports.push((label, postprocess_dir(&dir)?)),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    let comparison = Comparison { reports };
    if cfg.comparator.is_some() {
        write_json(&out.join("summary.json"), &comparison)?;
        let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
        for row in comparison.table() {
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let manifest = if cfg.comparator.is_some() {
        let mut m = RunManifest {
            code_version: CODE_VERSION.into(),
            status: if failure.is_some() { RunStatus::Failed } else { RunStatus::Complete },
            error: failure.as_ref().map(ToString::to_string),
            failure_dump: match &failure {
                Some(Error::Sampler { dump, .. }) => dump.clone(),
                _ => None,
            },
            seed: cfg.sampler.seed,
            prior: None,
            config: config_text.to_string(),
            data_sha256: sha256_hex(data.train.to_csv_string().as_bytes()),
            artifacts: hash_artifacts(out)?,
            started_unix_secs: started.0,
            elapsed_secs: started.1.elapsed().as_secs_f64(),
        };
        m.artifacts.retain(|a| !a.path.contains("/checkpoints/"));
        write_json(&out.join("manifest.json"), &m)?;
        m
    } else {
        RunManifest::load(out)?
    };
    match failure {
        Some(e) => Err(e),
        None => Ok(ExperimentOutcome { manifest, reports: comparison }),
    }
}
