//! Prior predictive Monte Carlo of the random partition: how many components
//! are occupied, and how large the biggest cluster is, when the stick-breaking
//! coefficients are drawn from `N(0, sigma_alpha_sq * I)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::logistic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorDraw {
    pub n_clusters: usize,
    pub max_fraction: f64,
}

/// One prior draw: fresh `alpha_1..alpha_{H-1}`, then each subject allocated
/// by walking the sticks.
fn one_draw<R: Rng>(z: &DMatrix<f64>, h: usize, sd: f64, rng: &mut R) -> PriorDraw {
    let (n, q) = z.shape();
    let alphas: Vec<DVector<f64>> = (0..h.saturating_sub(1))
        .map(|_| DVector::from_iterator(q, (0..q).map(|_| { let e: f64 = StandardNormal.sample(rng); sd * e })))
        .collect();
    let mut counts = vec![0usize; h];
    for i in 0..n {
        let zi = z.row(i).transpose();
        let mut g = h - 1;
        for (idx, a) in alphas.iter().enumerate() {
            let u: f64 = rng.random();
            if u < logistic(zi.dot(a)) {
                g = idx;
                break;
            }
        }
        counts[g] += 1;
    }
    let n_clusters = counts.iter().filter(|c| **c > 0).count();
    let max = counts.iter().copied().max().unwrap_or(0);
    PriorDraw {
        n_clusters,
        max_fraction: if n == 0 { 0.0 } else { max as f64 / n as f64 },
    }
}

/// Simulate `draws` prior partitions of the subjects whose baseline covariates
/// are the rows of `z`. Draw `d` uses ChaCha stream `d` of `seed`, so results
/// do not depend on thread scheduling.
pub fn prior_cluster_monte_carlo(
    z: &DMatrix<f64>,
    h: usize,
    sigma_alpha_sq: f64,
    draws: usize,
    seed: u64,
) -> Result<Vec<PriorDraw>> {
    if h < 1 {
        return Err(Error::InvalidHyper("H must be at least 1".into()));
    }
    if draws < 1 {
        return Err(Error::InvalidConfig("at least one prior draw is required".into()));
    }
    if !(sigma_alpha_sq > 0.0) {
        return Err(Error::InvalidHyper("sigma_alpha^2 must be positive".into()));
    }
    let sd = sigma_alpha_sq.sqrt();
    Ok((0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            one_draw(z, h, sd, &mut rng)
        })
        .collect())
}

pub fn median_clusters(draws: &[PriorDraw]) -> f64 {
    let mut c: Vec<usize> = draws.iter().map(|d| d.n_clusters).collect();
    c.sort_unstable();
    let n = c.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        c[n / 2] as f64
    } else {
        0.5 * (c[n / 2 - 1] + c[n / 2]) as f64
    }
}

/// Run the Monte Carlo for each value of a `sigma_alpha^2` grid.
pub fn prior_check_grid(
    z: &DMatrix<f64>,
    h: usize,
    grid: &[f64],
    draws: usize,
    seed: u64,
) -> Result<Vec<(f64, Vec<PriorDraw>)>> {
    grid.iter()
        .map(|&s| Ok((s, prior_cluster_monte_carlo(z, h, s, draws, seed)?)))
        .collect()
}

/// CSV with columns `sigma_alpha_sq,draw,n_clusters,max_fraction`.
pub fn write_prior_check_csv<W: Write>(writer: W, results: &[(f64, Vec<PriorDraw>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sigma_alpha_sq", "draw", "n_clusters", "max_fraction"])?;
    for (s, draws) in results {
        for (d, draw) in draws.iter().enumerate() {
            w.write_record([
                s.to_string(),
                d.to_string(),
                draw.n_clusters.to_string(),
                draw.max_fraction.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
