//! Posterior predictive trajectories.
//!
//! Out of sample: a new subject known only through its baseline covariates
//! and first response. Each posterior draw picks a component from the mixing
//! weights at the new covariates, then rolls the autoregression forward with
//! Gaussian noise. In sample: a training subject keeps the component it is
//! allocated to in each draw and is rolled forward from its last retained visit.
//!
//! Two point predictions are reported. The predictive median is taken entry by
//! entry over the draws and is what prediction errors are scored against: a
//! component with negligible weight but an explosive atom (typical of empty
//! components, whose atoms come from the base measure) can move the mean by
//! orders of magnitude while leaving the median in place. The predictive mean
//! is Rao-Blackwellised: per draw, the noise-free recursion averaged over
//! components with their weights (out of sample) or under the allocated
//! component (in sample), then averaged over draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gibbs::store::{PosteriorDraw, PosteriorSamples};
use crate::gibbs::updates::{sample_log_categorical, PriorKind};
use crate::linalg;
use crate::model::dataset::LongitudinalDataset;
use crate::priors::weights::{compute_weights, StickWeights};

/// Predictive draws of a trajectory: one `horizon x k` matrix per posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub draws: Vec<DMatrix<f64>>,
    /// Predictive mean, `horizon x k`.
    pub mean: DMatrix<f64>,
    /// Entrywise predictive median, `horizon x k`.
    pub median: DMatrix<f64>,
}

impl PredictiveDraws {
    fn new(draws: Vec<DMatrix<f64>>, mean: DMatrix<f64>) -> Self {
        let median = predictive_median(&draws, mean.nrows(), mean.ncols());
        Self { draws, mean, median }
    }
}

/// Entrywise median of `rows x cols` draws; zeros when there are none.
pub fn predictive_median(draws: &[DMatrix<f64>], rows: usize, cols: usize) -> DMatrix<f64> {
    let mut buf = Vec::with_capacity(draws.len());
    DMatrix::from_fn(rows, cols, |t, j| {
        buf.clear();
        buf.extend(draws.iter().map(|d| d[(t, j)]));
        buf.sort_by(f64::total_cmp);
        if buf.is_empty() { 0.0 } else { quantile(&buf, 0.5) }
    })
}

fn mixing_weights(draw: &PosteriorDraw, prior: PriorKind, z: &DVector<f64>) -> Result<Vec<f64>> {
    match prior {
        PriorKind::Lsb => Ok(compute_weights(&draw.alphas, z)?.into_vec()),
        PriorKind::Dp { .. } => Ok(StickWeights::from_fractions(&draw.sticks).into_vec()),
    }
}

fn check_store(samples: &PosteriorSamples) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Prediction("the sample store is empty".into()));
    }
    Ok(())
}

/// `y_t = Phi y_{t-1} + B x_t + Gamma z (+ noise)` for the rows after `start`.
fn roll<R: Rng + ?Sized>(
    phi: &DMatrix<f64>,
    draw: &PosteriorDraw,
    start: &DVector<f64>,
    x: &DMatrix<f64>,
    z: &DVector<f64>,
    noise: Option<(&linalg::Chol, &mut R)>,
) -> DMatrix<f64> {
    let steps = x.nrows();
    let k = start.len();
    let base = &draw.gamma * z;
    let mut out = DMatrix::zeros(steps, k);
    let mut prev = start.clone();
    let mut noise = noise;
    for t in 0..steps {
        let mut cur = phi * &prev + &draw.b * x.row(t).transpose() + &base;
        if let Some((chol, rng)) = noise.as_mut() {
            cur += chol.l() * linalg::std_normal_vec(k, *rng);
        }
        out.set_row(t, &cur.transpose());
        prev = cur;
    }
    out
}

fn check_dims(samples: &PosteriorSamples, z: &DVector<f64>, y: &DVector<f64>, x: &DMatrix<f64>) -> Result<()> {
    let l = samples.layout();
    if z.len() != l.q || y.len() != l.k || (x.nrows() > 0 && x.ncols() != l.p) {
        return Err(Error::dim(format!(
            "expected {} baseline covariates, {} responses and {} time-varying covariates",
            l.q, l.k, l.p
        )));
    }
    Ok(())
}

/// Predict visits `1..=horizon` of a new subject from its baseline
/// covariates `z`, first response `y_1` and time-varying covariates
/// `x` (`horizon x p`, row `t` for visit `t + 1`). Row 0 of every draw is `y_1`.
pub fn predict_oos<R: Rng + ?Sized>(
    samples: &PosteriorSamples,
    z: &DVector<f64>,
    y_1: &DVector<f64>,
    x: &DMatrix<f64>,
    horizon: usize,
    rng: &mut R,
) -> Result<PredictiveDraws> {
    check_store(samples)?;
    if horizon == 0 {
        return Err(Error::Prediction("horizon must be at least 1".into()));
    }
    if x.nrows() != horizon {
        return Err(Error::dim(format!("{} covariate rows for a horizon of {horizon}", x.nrows())));
    }
    check_dims(samples, z, y_1, x)?;
    let k = y_1.len();
    let prior = samples.layout().prior;
    let future = x.rows(1, horizon - 1).clone_owned();
    let mut draws = Vec::with_capacity(samples.len());
    let mut mean = DMatrix::zeros(horizon, k);
    for s in 0..samples.len() {
        let draw = samples.draw(s);
        let w = mixing_weights(&draw, prior, z)?;
        let log_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
        let g = sample_log_categorical(&log_w, rng)?;
        let chol = linalg::cholesky(&draw.sigma, "sigma")?;
        let path = roll(&draw.atoms[g], &draw, y_1, &future, z, Some((&chol, &mut *rng)));
        let mut full = DMatrix::zeros(horizon, k);
        full.set_row(0, &y_1.transpose());
        full.rows_mut(1, horizon - 1).copy_from(&path);
        draws.push(full);
        let mut m = DMatrix::zeros(horizon, k);
        m.set_row(0, &y_1.transpose());
        for (h, wh) in w.iter().enumerate() {
            if *wh > 0.0 {
                let path = roll::<R>(&draw.atoms[h], &draw, y_1, &future, z, None);
                let mut block = m.rows_mut(1, horizon - 1);
                block += path * *wh;
            }
        }
        mean += m;
    }
    mean /= samples.len() as f64;
    Ok(PredictiveDraws::new(draws, mean))
}

/// Predict `x_future.nrows()` visits after visit `t_cut` (1-based) of
/// training subject `subject`, under the component allocated in each draw.
/// A missing entry at visit `t_cut` takes that draw's imputed value.
pub fn predict_ins<R: Rng + ?Sized>(
    samples: &PosteriorSamples,
    data: &LongitudinalDataset,
    subject: usize,
    t_cut: usize,
    x_future: &DMatrix<f64>,
    rng: &mut R,
) -> Result<PredictiveDraws> {
    check_store(samples)?;
    if subject >= data.n_subjects() || samples.layout().n_subjects != data.n_subjects() {
        return Err(Error::Prediction(format!("subject {subject} is not part of the fitted data")));
    }
    let s = data.subject(subject);
    if t_cut == 0 || t_cut > s.horizon() {
        return Err(Error::Prediction(format!("t_cut = {t_cut} outside 1..={} for subject {}", s.horizon(), s.id)));
    }
    let k = data.resp_dim();
    let steps = x_future.nrows();
    if steps == 0 {
        return Ok(PredictiveDraws::new(vec![DMatrix::zeros(0, k); samples.len()], DMatrix::zeros(0, k)));
    }
    let start_obs = DVector::from_fn(k, |j, _| s.responses[(t_cut - 1, j)]);
    check_dims(samples, &s.base_covariates, &start_obs, x_future)?;
    let offset: usize = data.subjects()[..subject].iter().map(|o| o.n_missing()).sum();
    let missing = s.missing_positions();
    let mut draws = Vec::with_capacity(samples.len());
    let mut mean = DMatrix::zeros(steps, k);
    for d in 0..samples.len() {
        let draw = samples.draw(d);
        let mut start = start_obs.clone();
        for j in 0..k {
            if !s.is_observed(t_cut - 1, j) {
                let pos = (t_cut - 1) * k + j;
                let idx = missing.iter().position(|&m| m == pos).expect("missing entry is listed");
                start[j] = draw.imputed[offset + idx];
            }
        }
        let phi = &draw.atoms[draw.allocations[subject]];
        let chol = linalg::cholesky(&draw.sigma, "sigma")?;
        draws.push(roll(phi, &draw, &start, x_future, &s.base_covariates, Some((&chol, &mut *rng))));
        mean += roll::<R>(phi, &draw, &start, x_future, &s.base_covariates, None);
    }
    mean /= samples.len() as f64;
    Ok(PredictiveDraws::new(draws, mean))
}

/// One autoregression matrix per posterior draw for a new subject with
/// baseline covariates `z`: the atom of a component drawn from the mixing weights.
pub fn predictive_phi<R: Rng + ?Sized>(
    samples: &PosteriorSamples,
    z: &DVector<f64>,
    rng: &mut R,
) -> Result<Vec<DMatrix<f64>>> {
    check_store(samples)?;
    if z.len() != samples.layout().q {
        return Err(Error::dim(format!("expected {} baseline covariates", samples.layout().q)));
    }
    let prior = samples.layout().prior;
    (0..samples.len())
        .map(|s| {
            let draw = samples.draw(s);
            let log_w: Vec<f64> = mixing_weights(&draw, prior, z)?.iter().map(|v| v.ln()).collect();
            let g = sample_log_categorical(&log_w, rng)?;
            Ok(draw.atoms[g].clone())
        })
        .collect()
}

/// Sample quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let pos = prob.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One row per `(time, response)`: the requested quantiles of the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileRow {
    /// 1-based visit offset within the predicted block.
    pub time: usize,
    /// 1-based response index.
    pub response: usize,
    pub values: Vec<f64>,
}

pub fn predictive_quantiles(draws: &[DMatrix<f64>], probs: &[f64]) -> Vec<QuantileRow> {
    let Some(first) = draws.first() else { return Vec::new() };
    let (steps, k) = first.shape();
    let mut rows = Vec::with_capacity(steps * k);
    for t in 0..steps {
        for j in 0..k {
            let mut v: Vec<f64> = draws.iter().map(|d| d[(t, j)]).collect();
            v.sort_by(f64::total_cmp);
            rows.push(QuantileRow { time: t + 1, response: j + 1, values: probs.iter().map(|&p| quantile(&v, p)).collect() });
        }
    }
    rows
}

/// Mean squared error over the entries flagged in `observed` (row-major).
pub fn squared_error(prediction: &DMatrix<f64>, truth: &DMatrix<f64>, observed: &[bool]) -> Result<(f64, usize)> {
    if prediction.shape() != truth.shape() || observed.len() != truth.len() {
        return Err(Error::dim("prediction, truth and mask shapes differ"));
    }
    let k = truth.ncols();
    let mut sum = 0.0;
    let mut n = 0;
    for (idx, _) in observed.iter().enumerate().filter(|(_, o)| **o) {
        let (t, j) = (idx / k, idx % k);
        sum += (prediction[(t, j)] - truth[(t, j)]).powi(2);
        n += 1;
    }
    Ok((sum, n))
}

/// Mean and standard deviation across subjects of per-subject mean squared errors.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MseSummary {
    pub mean: f64,
    pub sd: f64,
    pub n_subjects: usize,
}

pub fn summarize_mse(per_subject: &[f64]) -> MseSummary {
    let n = per_subject.len();
    let mean = per_subject.iter().sum::<f64>() / n.max(1) as f64;
    let sd = if n > 1 {
        (per_subject.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    MseSummary { mean, sd, n_subjects: n }
}
