//! Brute-force oracles for partition summaries and the property checks
//! built on them.

use lsbvar::model::Partition;
use lsbvar::postprocess::{adjusted_rand_index, binder_point_estimate};
use lsbvar::priors::{compute_weights, log_weights};
use lsbvar::priors::weights::StickWeights;
use nalgebra::DVector;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn partition(max_n: usize) -> impl Strategy<Value = Vec<usize>> {
    (1..=max_n).prop_flat_map(|n| prop::collection::vec(0..n, n))
}

/// Adjusted Rand index from the four pair counts.
pub fn pair_count_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denom == 0.0 {
        return if n10 == 0.0 && n01 == 0.0 { 1.0 } else { 0.0 };
    }
    2.0 * (n00 * n11 - n01 * n10) / denom
}

/// Every set partition of `0..n` as a restricted growth string.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for l in 0..=max + 1 {
            prefix.push(l);
            grow(prefix, max.max(l), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        grow(&mut vec![0], 0, n, &mut out);
    }
    out
}

/// Mean number of disagreeing pairs between `c` and the samples; differs
/// from the squared-error form of the Binder loss by a constant.
pub fn mean_pair_disagreement(c: &[usize], samples: &[Vec<usize>]) -> f64 {
    let n = c.len();
    let mut total = 0usize;
    for s in samples {
        for i in 0..n {
            for j in i + 1..n {
                total += usize::from((c[i] == c[j]) != (s[i] == s[j]));
            }
        }
    }
    total as f64 / samples.len() as f64
}

/// A partition of up to `max_n` items paired with another of the same size.
pub fn partition_pair(max_n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    partition(max_n).prop_flat_map(|a| {
        let n = a.len();
        (Just(a), prop::collection::vec(0..n, n))
    })
}

/// Sampled partitions of up to `max_n` items, all of one size.
pub fn partition_samples(max_n: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1..=max_n).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0..n, n), 1..12))
}

pub fn stick_inputs() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..60, 1usize..5, prop::collection::vec(-8.0f64..8.0, 300))
}

pub fn logit_sticks_normalised((h, q, seed): (usize, usize, Vec<f64>)) -> Result<(), TestCaseError> {
    let z = DVector::from_fn(q, |j, _| seed[j]);
    let alphas: Vec<DVector<f64>> = (0..h - 1).map(|l| DVector::from_fn(q, |j, _| seed[5 + (l * q + j) % 295])).collect();
    let w = compute_weights(&alphas, &z).unwrap();
    prop_assert_eq!(w.len(), h);
    prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
    prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let lw = log_weights(&alphas, &z).unwrap();
    let total: f64 = lw.iter().map(|l| l.exp()).sum();
    prop_assert!((total - 1.0).abs() < 1e-12);
    Ok(())
}

pub fn fractions_normalised(fr: Vec<f64>) -> Result<(), TestCaseError> {
    let w = StickWeights::from_fractions(&fr);
    prop_assert!(w.as_slice().iter().all(|&x| x >= 0.0));
    prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(())
}

pub fn ari_equals_pair_counting((a, b): (Vec<usize>, Vec<usize>)) -> Result<(), TestCaseError> {
    let ours = adjusted_rand_index(&Partition::new(a.clone()), &Partition::new(b.clone())).unwrap();
    let oracle = pair_count_ari(&a, &b);
    prop_assert!((ours - oracle).abs() < 1e-12, "{} vs {}", ours, oracle);
    Ok(())
}

pub fn binder_equals_exhaustive_search(samples: Vec<Vec<usize>>) -> Result<(), TestCaseError> {
    let parts: Vec<Partition> = samples.iter().cloned().map(Partition::new).collect();
    let est = binder_point_estimate(&parts).unwrap();
    prop_assert!(parts.iter().any(|p| *p == est));
    let est_loss = mean_pair_disagreement(est.labels(), &samples);
    let visited_best = samples.iter().map(|s| mean_pair_disagreement(s, &samples)).fold(f64::INFINITY, f64::min);
    prop_assert!((est_loss - visited_best).abs() < 1e-9);
    let global_best = all_partitions(samples[0].len())
        .iter()
        .map(|c| mean_pair_disagreement(c, &samples))
        .fold(f64::INFINITY, f64::min);
    prop_assert!(est_loss >= global_best - 1e-9);
    if samples.iter().any(|s| (mean_pair_disagreement(s, &samples) - global_best).abs() < 1e-9) {
        prop_assert!((est_loss - global_best).abs() < 1e-9);
    }
    Ok(())
}
