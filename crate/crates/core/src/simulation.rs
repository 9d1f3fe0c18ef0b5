//! Synthetic three-component VAR(1) mixtures with known partitions, and the
//! out-of-sample and in-sample prediction splits built from them.
//!
//! Every scenario has `k = 3` responses, one time-varying covariate
//! `x_t = sqrt(t)` and two baseline covariates, with true `B = 0` and
//! `Gamma = 0`, so the trajectory of a subject in component `j` is
//! `y_t = Phi_j y_{t-1} + e_t` from `y_0 = 0`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::dataset::{LongitudinalDataset, Subject};
use crate::model::partition::Partition;

pub const RESP_DIM: usize = 3;
pub const TV_COV_DIM: usize = 1;
pub const BASE_COV_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Two well separated covariate clouds, Gaussian errors.
    I,
    /// Three components, the third covering the space between the other two.
    II,
    /// Scenario I with Student-t errors.
    III,
}

impl Scenario {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Self::I),
            2 => Some(Self::II),
            3 => Some(Self::III),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Noise {
    /// Iid `N(0, variance)` coordinates.
    Gaussian { variance: f64 },
    /// Iid Student-t coordinates with unit scale.
    StudentT { df: f64 },
    /// No error term: exact recursions.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n_subjects: usize,
    pub horizon: usize,
    /// Component probabilities.
    pub weights: [f64; 3],
    pub components: [DMatrix<f64>; 3],
    pub noise: Noise,
    /// Mean of the unit-covariance Gaussian baseline covariates of each
    /// component. Must be present for every component with positive weight.
    pub covariate_means: Option<[[f64; 2]; 3]>,
}

/// The three autoregression matrices of the simulation study.
pub fn scenario_components() -> [DMatrix<f64>; 3] {
    [
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.1, 1.1, 1.0])),
        DMatrix::from_row_slice(3, 3, &[1.1, -0.1, 0.0, -0.1, 1.1, -0.1, 0.0, 0.0, 0.9]),
        DMatrix::from_row_slice(3, 3, &[0.9, -0.1, 0.0, -0.1, 1.1, -0.1, -0.1, 0.0, 1.5]),
    ]
}

/// Stand-in covariate law for scenario II: three unit-covariance clouds with
/// means on the diagonal, the third between the other two.
pub const SCENARIO_II_COVARIATE_MEANS: [[f64; 2]; 3] = [[-1.5, -1.5], [1.5, 1.5], [0.0, 0.0]];

impl ScenarioSpec {
    /// The simulation-study settings: 300 subjects, 10 visits, error
    /// variance 0.25 (scenarios I and II) or Student-t(5) errors (scenario III).
    pub fn new(scenario: Scenario) -> Self {
        let (weights, noise, means) = match scenario {
            Scenario::I => ([0.5, 0.5, 0.0], Noise::Gaussian { variance: 0.25 }, [[-3.0, -3.0], [3.0, 3.0], [0.0, 0.0]]),
            Scenario::II => ([0.25, 0.25, 0.5], Noise::Gaussian { variance: 0.25 }, SCENARIO_II_COVARIATE_MEANS),
            Scenario::III => ([0.5, 0.5, 0.0], Noise::StudentT { df: 5.0 }, [[-3.0, -3.0], [3.0, 3.0], [0.0, 0.0]]),
        };
        Self {
            scenario,
            n_subjects: 300,
            horizon: 10,
            weights,
            components: scenario_components(),
            noise,
            covariate_means: Some(means),
        }
    }

    /// Scenario I variant whose second component has a zero autoregression matrix.
    pub fn with_zero_second_component(mut self) -> Self {
        self.components[1] = DMatrix::zeros(3, 3);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::Simulation("component weights must be non-negative and sum to one".into()));
        }
        if self.horizon < 2 {
            return Err(Error::Simulation("horizon must be at least 2".into()));
        }
        if self.components.iter().any(|c| c.shape() != (RESP_DIM, RESP_DIM)) {
            return Err(Error::Simulation("component matrices must be 3x3".into()));
        }
        match self.noise {
            Noise::Gaussian { variance } if !(variance > 0.0) => {
                return Err(Error::Simulation("Gaussian error variance must be positive".into()))
            }
            Noise::StudentT { df } if !(df > 0.0) => {
                return Err(Error::Simulation("Student-t degrees of freedom must be positive".into()))
            }
            _ => {}
        }
        if self.covariate_means.is_none() {
            return Err(Error::Simulation(
                "no baseline-covariate law given; supply one mean per component in `covariate_means`".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: LongitudinalDataset,
    /// Generating component (0-based) of each subject.
    pub truth: Partition,
}

fn noise_vector<R: Rng + ?Sized>(noise: Noise, rng: &mut R) -> Result<DVector<f64>> {
    Ok(match noise {
        Noise::Gaussian { variance } => {
            let sd = variance.sqrt();
            DVector::from_fn(RESP_DIM, |_, _| {
                let e: f64 = StandardNormal.sample(rng);
                sd * e
            })
        }
        Noise::StudentT { df } => {
            let t = StudentT::new(df).map_err(|e| Error::Simulation(e.to_string()))?;
            DVector::from_fn(RESP_DIM, |_, _| t.sample(rng))
        }
        Noise::None => DVector::zeros(RESP_DIM),
    })
}

fn draw_component<R: Rng + ?Sized>(weights: &[f64; 3], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return j;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn simulate_subjects<R: Rng + ?Sized>(spec: &ScenarioSpec, prefix: &str, n: usize, rng: &mut R) -> Result<SimulatedDataset> {
    spec.validate()?;
    let means = spec.covariate_means.expect("validated");
    let t_len = spec.horizon;
    let mut subjects = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let j = draw_component(&spec.weights, rng);
        let z = DVector::from_fn(BASE_COV_DIM, |c, _| {
            let e: f64 = StandardNormal.sample(rng);
            means[j][c] + e
        });
        let phi = &spec.components[j];
        let mut y = DMatrix::zeros(t_len, RESP_DIM);
        let mut prev = DVector::zeros(RESP_DIM);
        for t in 0..t_len {
            let cur = phi * &prev + noise_vector(spec.noise, rng)?;
            y.set_row(t, &cur.transpose());
            prev = cur;
        }
        subjects.push(Subject {
            id: format!("{prefix}{}", i + 1),
            observed: vec![true; t_len * RESP_DIM],
            responses: y,
            tv_covariates: DMatrix::from_fn(t_len, TV_COV_DIM, |t, _| ((t + 1) as f64).sqrt()),
            base_covariates: z,
        });
        labels.push(j);
    }
    Ok(SimulatedDataset {
        dataset: LongitudinalDataset::new(RESP_DIM, TV_COV_DIM, BASE_COV_DIM, subjects)?,
        truth: Partition::new(labels),
    })
}

pub fn generate_scenario<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SimulatedDataset> {
    simulate_subjects(spec, "s", spec.n_subjects, rng)
}

/// A training set of `spec.n_subjects` subjects and an independent test set of
/// `test_size` subjects from the same process. Prediction on the test set
/// starts from the first visit.
pub fn make_oos_split<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    test_size: usize,
    rng: &mut R,
) -> Result<(SimulatedDataset, SimulatedDataset)> {
    let train = simulate_subjects(spec, "s", spec.n_subjects, rng)?;
    let test = if test_size == 0 {
        spec.validate()?;
        SimulatedDataset {
            dataset: LongitudinalDataset::empty(RESP_DIM, TV_COV_DIM, BASE_COV_DIM),
            truth: Partition::new(vec![]),
        }
    } else {
        simulate_subjects(spec, "test", test_size, rng)?
    };
    Ok((train, test))
}

/// Held-out tail of one truncated subject.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutTail {
    /// Index of the subject in the dataset.
    pub subject: usize,
    /// Responses at visits `t_cut + 1 .. T` (rows), with missing entries as `NaN`.
    pub responses: DMatrix<f64>,
    pub observed: Vec<bool>,
    /// Time-varying covariates at the held-out visits.
    pub tv_covariates: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct InsSplit {
    /// The dataset with the chosen subjects cut after visit `t_cut`.
    pub dataset: LongitudinalDataset,
    pub t_cut: usize,
    pub tails: Vec<HeldOutTail>,
}

/// Truncate `n_truncate` randomly chosen subjects with more than `t_cut`
/// visits to their first `t_cut` visits, keeping the removed visits for scoring.
pub fn make_ins_split<R: Rng + ?Sized>(
    ds: &LongitudinalDataset,
    n_truncate: usize,
    t_cut: usize,
    rng: &mut R,
) -> Result<InsSplit> {
    if n_truncate > 0 && t_cut < 2 {
        return Err(Error::Simulation("truncated subjects need at least two visits".into()));
    }
    let eligible: Vec<usize> = (0..ds.n_subjects()).filter(|&i| ds.subject(i).horizon() > t_cut).collect();
    if eligible.len() < n_truncate {
        return Err(Error::Simulation(format!(
            "only {} subjects have more than {t_cut} visits, {n_truncate} requested",
            eligible.len()
        )));
    }
    let mut chosen: Vec<usize> = index::sample(rng, eligible.len(), n_truncate).into_iter().map(|c| eligible[c]).collect();
    chosen.sort_unstable();
    let k = ds.resp_dim();
    let mut subjects = ds.subjects().to_vec();
    let mut tails = Vec::with_capacity(n_truncate);
    for &i in &chosen {
        let s = &mut subjects[i];
        let t_len = s.horizon();
        let tail_len = t_len - t_cut;
        tails.push(HeldOutTail {
            subject: i,
            responses: s.responses.rows(t_cut, tail_len).clone_owned(),
            observed: s.observed[t_cut * k..].to_vec(),
            tv_covariates: s.tv_covariates.rows(t_cut, tail_len).clone_owned(),
        });
        s.responses = s.responses.rows(0, t_cut).clone_owned();
        s.tv_covariates = s.tv_covariates.rows(0, t_cut).clone_owned();
        s.observed.truncate(t_cut * k);
    }
    Ok(InsSplit {
        dataset: LongitudinalDataset::new(k, ds.tv_cov_dim(), ds.base_cov_dim(), subjects)?,
        t_cut,
        tails,
    })
}

/// CSV with columns `subject_id,component` (1-based components).
pub fn write_truth_csv<W: Write>(writer: W, sim: &SimulatedDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["subject_id", "component"])?;
    for (s, g) in sim.dataset.subjects().iter().zip(sim.truth.labels()) {
        w.write_record([s.id.clone(), (g + 1).to_string()])?;
    }
    w.flush()?;
    Ok(())
}
