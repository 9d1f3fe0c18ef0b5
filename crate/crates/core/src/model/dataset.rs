//! Longitudinal data: per-subject response trajectories with an explicit
//! observation mask, time-varying covariates and baseline covariates.
//!
//! The long CSV layout is
//! `subject_id, t, y_1..y_k, x_1..x_p, z_1..z_q`, one row per visit, with
//! `t` running 1, 2, ... without gaps. A blank (or `NA`/`nan`) response cell
//! marks a missing entry; covariates must always be present and finite, and
//! the `z` columns must be constant within a subject.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    /// `T x k`; entries flagged missing hold `NaN` and must not be read.
    pub responses: DMatrix<f64>,
    /// Row-major `T x k` observation mask.
    pub observed: Vec<bool>,
    /// `T x p`.
    pub tv_covariates: DMatrix<f64>,
    /// Length `q`.
    pub base_covariates: DVector<f64>,
}

impl Subject {
    pub fn horizon(&self) -> usize {
        self.responses.nrows()
    }

    pub fn is_observed(&self, t: usize, j: usize) -> bool {
        self.observed[t * self.responses.ncols() + j]
    }

    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|o| *o)
    }

    /// Indices into the stacked `(t, j)` trajectory (row-major) of missing entries.
    pub fn missing_positions(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&i| !self.observed[i]).collect()
    }

    pub fn observed_positions(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&i| self.observed[i]).collect()
    }
}

impl PartialEq for Subject {
    fn eq(&self, other: &Self) -> bool {
        if self.id != other.id
            || self.observed != other.observed
            || self.responses.shape() != other.responses.shape()
            || self.tv_covariates != other.tv_covariates
            || self.base_covariates != other.base_covariates
        {
            return false;
        }
        let k = self.responses.ncols();
        (0..self.observed.len())
            .filter(|&i| self.observed[i])
            .all(|i| self.responses[(i / k, i % k)] == other.responses[(i / k, i % k)])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    resp_dim: usize,
    tv_cov_dim: usize,
    base_cov_dim: usize,
    subjects: Vec<Subject>,
}

impl LongitudinalDataset {
    /// Build a dataset from already-checked subjects.
    pub fn new(
        resp_dim: usize,
        tv_cov_dim: usize,
        base_cov_dim: usize,
        subjects: Vec<Subject>,
    ) -> Result<Self> {
        for s in &subjects {
            let t = s.horizon();
            if t < 2 {
                return Err(Error::dim(format!("subject {} has horizon {t} < 2", s.id)));
            }
            if s.responses.ncols() != resp_dim
                || s.observed.len() != t * resp_dim
                || s.tv_covariates.shape() != (t, tv_cov_dim)
                || s.base_covariates.len() != base_cov_dim
            {
                return Err(Error::dim(format!("subject {} has inconsistent dimensions", s.id)));
            }
            if s.tv_covariates.iter().chain(s.base_covariates.iter()).any(|v| !v.is_finite()) {
                return Err(Error::dim(format!("subject {} has non-finite covariates", s.id)));
            }
        }
        Ok(Self { resp_dim, tv_cov_dim, base_cov_dim, subjects })
    }

    pub fn empty(resp_dim: usize, tv_cov_dim: usize, base_cov_dim: usize) -> Self {
        Self { resp_dim, tv_cov_dim, base_cov_dim, subjects: Vec::new() }
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }
    pub fn resp_dim(&self) -> usize {
        self.resp_dim
    }
    pub fn tv_cov_dim(&self) -> usize {
        self.tv_cov_dim
    }
    pub fn base_cov_dim(&self) -> usize {
        self.base_cov_dim
    }
    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }
    pub fn subject(&self, i: usize) -> &Subject {
        &self.subjects[i]
    }

    pub fn total_visits(&self) -> usize {
        self.subjects.iter().map(Subject::horizon).sum()
    }

    pub fn n_missing(&self) -> usize {
        self.subjects.iter().map(Subject::n_missing).sum()
    }

    pub fn n_observed_entries(&self) -> usize {
        self.subjects.iter().map(|s| s.observed.len() - s.n_missing()).sum()
    }

    /// `N x q` matrix of baseline covariates.
    pub fn baseline_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_subjects(), self.base_cov_dim, |i, c| {
            self.subjects[i].base_covariates[c]
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            resp_dim: self.resp_dim,
            tv_cov_dim: self.tv_cov_dim,
            base_cov_dim: self.base_cov_dim,
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    pub(crate) fn subjects_mut(&mut self) -> &mut [Subject] {
        &mut self.subjects
    }

    /// Serialise in the long CSV layout.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(header(self.resp_dim, self.tv_cov_dim, self.base_cov_dim))?;
        for s in &self.subjects {
            for t in 0..s.horizon() {
                let mut row = Vec::with_capacity(2 + self.resp_dim + self.tv_cov_dim + self.base_cov_dim);
                row.push(s.id.clone());
                row.push((t + 1).to_string());
                for j in 0..self.resp_dim {
                    row.push(if s.is_observed(t, j) {
                        s.responses[(t, j)].to_string()
                    } else {
                        String::new()
                    });
                }
                row.extend(s.tv_covariates.row(t).iter().map(f64::to_string));
                row.extend(s.base_covariates.iter().map(f64::to_string));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

fn header(k: usize, p: usize, q: usize) -> Vec<String> {
    let mut h = vec!["subject_id".to_string(), "t".to_string()];
    h.extend((1..=k).map(|j| format!("y_{j}")));
    h.extend((1..=p).map(|j| format!("x_{j}")));
    h.extend((1..=q).map(|j| format!("z_{j}")));
    h
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// 1-based file line (the header is line 1).
    pub row: usize,
    pub subject_id: String,
    pub t: usize,
    pub y: Vec<Option<f64>>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub resp_dim: usize,
    pub tv_cov_dim: usize,
    pub base_cov_dim: usize,
    pub records: Vec<RawRecord>,
}

fn count_prefixed(fields: &[&str], start: usize, prefix: &str) -> usize {
    let mut n = 0;
    while start + n < fields.len() && fields[start + n] == format!("{prefix}_{}", n + 1) {
        n += 1;
    }
    n
}

fn parse_header(fields: &[&str]) -> Result<(usize, usize, usize)> {
    if fields.len() < 2 || fields[0] != "subject_id" || fields[1] != "t" {
        return Err(Error::Malformed { row: 1, msg: "header must start with `subject_id,t`".into() });
    }
    let k = count_prefixed(fields, 2, "y");
    let p = count_prefixed(fields, 2 + k, "x");
    let q = count_prefixed(fields, 2 + k + p, "z");
    if 2 + k + p + q != fields.len() {
        return Err(Error::Malformed {
            row: 1,
            msg: format!("unexpected column `{}`", fields[2 + k + p + q]),
        });
    }
    if k == 0 {
        return Err(Error::Malformed { row: 1, msg: "no response columns `y_1..`".into() });
    }
    Ok((k, p, q))
}

fn parse_finite(cell: &str, row: usize, col: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Malformed { row, msg: format!("column `{col}`: cannot parse `{cell}`") })?;
    if !v.is_finite() {
        return Err(Error::Malformed { row, msg: format!("column `{col}` is not finite") });
    }
    Ok(v)
}

/// Parse the long CSV layout. An input with no header at all yields an empty table.
pub fn parse_long_csv<R: Read>(reader: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut rows = rdr.records();
    let Some(head) = rows.next() else {
        return Ok(RawTable { resp_dim: 0, tv_cov_dim: 0, base_cov_dim: 0, records: Vec::new() });
    };
    let head = head?;
    let fields: Vec<&str> = head.iter().map(str::trim).collect();
    let (k, p, q) = parse_header(&fields)?;
    let names = header(k, p, q);

    let mut records = Vec::new();
    for (idx, rec) in rows.enumerate() {
        let row = idx + 2;
        let rec = rec?;
        if rec.len() != 2 + k + p + q {
            return Err(Error::Malformed {
                row,
                msg: format!("expected {} fields, found {}", 2 + k + p + q, rec.len()),
            });
        }
        let subject_id = rec[0].trim().to_string();
        if subject_id.is_empty() {
            return Err(Error::Malformed { row, msg: "empty subject_id".into() });
        }
        let t: usize = rec[1]
            .trim()
            .parse()
            .map_err(|_| Error::Malformed { row, msg: format!("invalid time index `{}`", &rec[1]) })?;
        if t == 0 {
            return Err(Error::Malformed { row, msg: "time index must start at 1".into() });
        }
        let mut y = Vec::with_capacity(k);
        for j in 0..k {
            let cell = rec[2 + j].trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                y.push(None);
            } else {
                y.push(Some(parse_finite(cell, row, &names[2 + j])?));
            }
        }
        let x = (0..p)
            .map(|j| parse_finite(&rec[2 + k + j], row, &names[2 + k + j]))
            .collect::<Result<Vec<_>>>()?;
        let z = (0..q)
            .map(|j| parse_finite(&rec[2 + k + p + j], row, &names[2 + k + p + j]))
            .collect::<Result<Vec<_>>>()?;
        records.push(RawRecord { row, subject_id, t, y, x, z });
    }
    Ok(RawTable { resp_dim: k, tv_cov_dim: p, base_cov_dim: q, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// At most one visit has any observed response.
    FewerThanTwoVisits,
    /// Several visits are observed but never two consecutive ones.
    NoConsecutiveVisits,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::FewerThanTwoVisits => write!(f, "fewer than two visits"),
            DropReason::NoConsecutiveVisits => write!(f, "no two consecutive visits"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedSubject {
    pub id: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone)]
pub struct ValidatedData {
    pub dataset: LongitudinalDataset,
    pub dropped: Vec<DroppedSubject>,
}

/// Group rows by subject, check them, and apply the exclusion rule: a subject
/// is kept only if two consecutive visits each have at least one observed
/// response. Subjects keep their order of first appearance.
pub fn validate_dataset(table: &RawTable) -> Result<ValidatedData> {
    let (k, p, q) = (table.resp_dim, table.tv_cov_dim, table.base_cov_dim);
    let mut order: Vec<&str> = Vec::new();
    let mut groups: HashMap<&str, Vec<&RawRecord>> = HashMap::new();
    for r in &table.records {
        if r.y.len() != k || r.x.len() != p || r.z.len() != q {
            return Err(Error::Malformed { row: r.row, msg: "inconsistent number of fields".into() });
        }
        let entry = groups.entry(r.subject_id.as_str()).or_insert_with(|| {
            order.push(r.subject_id.as_str());
            Vec::new()
        });
        entry.push(r);
    }

    let mut subjects = Vec::new();
    let mut dropped = Vec::new();
    for id in order {
        let mut rows = groups.remove(id).expect("grouped above");
        rows.sort_by_key(|r| r.t);
        for (pos, r) in rows.iter().enumerate() {
            if r.t != pos + 1 {
                return Err(Error::Malformed {
                    row: r.row,
                    msg: format!("subject {id}: visit times must be 1, 2, ... without gaps or repeats"),
                });
            }
            if r.z != rows[0].z {
                return Err(Error::Malformed {
                    row: r.row,
                    msg: format!("subject {id}: baseline covariates change between visits"),
                });
            }
        }
        let visit_observed: Vec<bool> = rows.iter().map(|r| r.y.iter().any(Option::is_some)).collect();
        let n_obs = visit_observed.iter().filter(|v| **v).count();
        let consecutive = visit_observed.windows(2).any(|w| w[0] && w[1]);
        if n_obs < 2 {
            dropped.push(DroppedSubject { id: id.to_string(), reason: DropReason::FewerThanTwoVisits });
            continue;
        }
        if !consecutive {
            dropped.push(DroppedSubject { id: id.to_string(), reason: DropReason::NoConsecutiveVisits });
            continue;
        }
        let horizon = rows.len();
        let mut responses = DMatrix::from_element(horizon, k, f64::NAN);
        let mut observed = vec![false; horizon * k];
        let mut tv = DMatrix::zeros(horizon, p);
        for (t, r) in rows.iter().enumerate() {
            for j in 0..k {
                if let Some(v) = r.y[j] {
                    responses[(t, j)] = v;
                    observed[t * k + j] = true;
                }
            }
            for j in 0..p {
                tv[(t, j)] = r.x[j];
            }
        }
        subjects.push(Subject {
            id: id.to_string(),
            responses,
            observed,
            tv_covariates: tv,
            base_covariates: DVector::from_vec(rows[0].z.clone()),
        });
    }
    Ok(ValidatedData { dataset: LongitudinalDataset::new(k, p, q, subjects)?, dropped })
}

/// Parse and validate in one step.
pub fn read_long_csv<R: Read>(reader: R) -> Result<ValidatedData> {
    validate_dataset(&parse_long_csv(reader)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnTransform {
    pub column: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Record of a baseline standardisation; enough to map values back.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Standardization {
    pub columns: Vec<ColumnTransform>,
}

impl Standardization {
    pub fn apply(&self, z: &mut DVector<f64>) {
        for c in &self.columns {
            z[c.column] = (z[c.column] - c.mean) / c.sd;
        }
    }

    pub fn invert(&self, z: &mut DVector<f64>) {
        for c in &self.columns {
            z[c.column] = z[c.column] * c.sd + c.mean;
        }
    }
}

/// Centre and scale the designated baseline columns using the population
/// (divide-by-N) standard deviation. Other columns are left untouched.
pub fn standardize_covariates(
    ds: &LongitudinalDataset,
    numeric_columns: &[usize],
) -> Result<(LongitudinalDataset, Standardization)> {
    let n = ds.n_subjects();
    let mut out = ds.clone();
    let mut record = Standardization::default();
    if n == 0 {
        return Ok((out, record));
    }
    for &c in numeric_columns {
        if c >= ds.base_cov_dim() {
            return Err(Error::dim(format!("baseline column {c} out of range (q = {})", ds.base_cov_dim())));
        }
        let values: Vec<f64> = ds.subjects().iter().map(|s| s.base_covariates[c]).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if !(sd > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::ZeroVariance { column: c });
        }
        record.columns.push(ColumnTransform { column: c, mean, sd });
    }
    for s in out.subjects_mut() {
        record.apply(&mut s.base_covariates);
    }
    Ok((out, record))
}
