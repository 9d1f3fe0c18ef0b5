//! Label-invariant summaries of sampled partitions.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::partition::Partition;

/// Posterior co-clustering frequencies: entry `(i, j)` is the share of
/// samples placing subjects `i` and `j` together.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPosterior {
    pub co_clustering: DMatrix<f64>,
    pub n_samples: usize,
}

pub fn co_clustering(samples: &[Partition]) -> Result<PartitionPosterior> {
    let first = samples.first().ok_or_else(|| Error::InvalidConfig("no partition samples".into()))?;
    let n = first.len();
    if samples.iter().any(|p| p.len() != n) {
        return Err(Error::dim("partition samples have different lengths"));
    }
    let mut counts = DMatrix::<f64>::zeros(n, n);
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for p in samples {
        members.clear();
        for (i, &g) in p.labels().iter().enumerate() {
            members.entry(g).or_default().push(i);
        }
        for group in members.values() {
            for &a in group {
                for &b in group {
                    counts[(a, b)] += 1.0;
                }
            }
        }
    }
    Ok(PartitionPosterior { co_clustering: counts / samples.len() as f64, n_samples: samples.len() })
}

/// Expected Binder loss (equal misclassification costs) of `candidate`:
/// `sum_{i<j} (1[c_i = c_j] - pi_ij)^2`.
pub fn binder_loss(candidate: &Partition, post: &PartitionPosterior) -> f64 {
    let n = candidate.len();
    let labels = candidate.labels();
    let mut loss = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let together = if labels[i] == labels[j] { 1.0 } else { 0.0 };
            loss += (together - post.co_clustering[(i, j)]).powi(2);
        }
    }
    loss
}

/// The sampled partition with the smallest expected Binder loss; ties go to
/// the earliest sample. Returned in canonical labelling.
pub fn binder_point_estimate(samples: &[Partition]) -> Result<Partition> {
    let post = co_clustering(samples)?;
    let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in samples {
        let canon = p.canonical();
        if seen.insert(canon.clone(), ()).is_some() {
            continue;
        }
        let loss = binder_loss(p, &post);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, canon));
        }
    }
    Ok(Partition::new(best.expect("at least one sample").1))
}

/// Hubert-Arabie adjusted Rand index.
pub fn adjusted_rand_index(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("partitions have lengths {} and {}", a.len(), b.len())));
    }
    let n = a.len();
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.labels().iter().zip(b.labels()) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { sum_a * sum_b / total } else { 0.0 };
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        // Both partitions are all-singletons or single-cluster alike.
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Histogram of the number of occupied components across samples.
pub fn cluster_count_posterior(samples: &[Partition]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for p in samples {
        *hist.entry(p.n_clusters()).or_default() += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(v: &[usize]) -> Partition {
        Partition::new(v.to_vec())
    }

    #[test]
    fn ari_known_values() {
        assert_eq!(adjusted_rand_index(&p(&[0, 0, 1, 1]), &p(&[5, 5, 2, 2])).unwrap(), 1.0);
        assert_relative_eq!(adjusted_rand_index(&p(&[1, 1, 2, 2]), &p(&[1, 2, 1, 2])).unwrap(), -0.5, epsilon = 1e-15);
        assert!(adjusted_rand_index(&p(&[0]), &p(&[0, 1])).is_err());
    }

    #[test]
    fn co_clustering_has_unit_diagonal() {
        let post = co_clustering(&[p(&[0, 0, 1]), p(&[0, 1, 1])]).unwrap();
        for i in 0..3 {
            assert_eq!(post.co_clustering[(i, i)], 1.0);
        }
        assert_eq!(post.co_clustering[(0, 1)], 0.5);
        assert_eq!(post.co_clustering, post.co_clustering.transpose());
    }

    #[test]
    fn identical_samples_give_that_partition() {
        let s = vec![p(&[2, 2, 0, 1]); 4];
        assert_eq!(binder_point_estimate(&s).unwrap(), p(&[2, 2, 0, 1]));
    }

    #[test]
    fn label_permuted_samples_agree() {
        let s = vec![p(&[0, 0, 1]), p(&[1, 1, 0])];
        let est = binder_point_estimate(&s).unwrap();
        assert_eq!(est.labels(), &[0, 0, 1]);
    }

    #[test]
    fn cluster_counts() {
        let hist = cluster_count_posterior(&[p(&[1, 1, 5]), p(&[0, 1, 2]), p(&[3, 3, 3])]);
        assert_eq!(hist, BTreeMap::from([(1, 1), (2, 1), (3, 1)]));
        assert_eq!(hist.values().sum::<usize>(), 3);
    }
}
