use std::collections::HashMap;

/// A clustering of subjects. Equality ignores the naming of the labels.
#[derive(Debug, Clone, Eq)]
pub struct Partition {
    labels: Vec<usize>,
}

impl Partition {
    pub fn new(labels: Vec<usize>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Relabel by order of first appearance: the first item gets 0, the next
    /// new label 1, and so on.
    pub fn canonical(&self) -> Vec<usize> {
        let mut map = HashMap::new();
        self.labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect()
    }

    pub fn n_clusters(&self) -> usize {
        let mut seen: Vec<usize> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    pub fn same_cluster(&self, i: usize, j: usize) -> bool {
        self.labels[i] == self.labels[j]
    }
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.labels.len() == other.labels.len() && self.canonical() == other.canonical()
    }
}

impl From<Vec<usize>> for Partition {
    fn from(labels: Vec<usize>) -> Self {
        Self::new(labels)
    }
}
