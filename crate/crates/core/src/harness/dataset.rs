//! Family-classification datasets: one class per skip-set, with
//! node-permuted copies per class.
//!
//! Every instance in such a dataset is indistinguishable from every other
//! by plain color refinement, so any learning signal must come from the
//! marked subgraphs.

use crate::graph::{csl_union, Graph, LabeledGraph};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub classes: usize,
    pub graphs: Vec<LabeledGraph>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn label_of(&self, index: usize) -> usize {
        self.graphs[index].label.unwrap_or_default() as usize
    }
}

/// All size-`k` subsets of `pool`, in lexicographic order of positions.
pub fn skip_subsets(pool: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if pool.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in pool.iter().enumerate() {
        for mut rest in skip_subsets(&pool[i + 1..], k - 1) {
            let mut subset = vec![first];
            subset.append(&mut rest);
            out.push(subset);
        }
    }
    out
}

/// One class per size-`subset_size` subset of `skips`, `copies` node-permuted
/// instances per class, labels equal to the class index.
pub fn make_family_dataset(
    n: usize,
    skips: &[usize],
    subset_size: usize,
    copies: usize,
    seed: u64,
) -> Result<Dataset, HarnessError> {
    let subsets = skip_subsets(skips, subset_size);
    if subsets.is_empty() || copies == 0 {
        return Err(HarnessError::InvalidConfig(format!(
            "family over {skips:?} choose {subset_size} with {copies} copies is empty"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::with_capacity(subsets.len() * copies);
    for (class, subset) in subsets.iter().enumerate() {
        let member = csl_union(n, subset)?;
        for _ in 0..copies {
            let mut perm: Vec<usize> = (0..member.num_nodes()).collect();
            perm.shuffle(&mut rng);
            graphs.push(LabeledGraph {
                graph: member.relabeled(&perm)?,
                label: Some(class as f64),
            });
        }
    }
    Ok(Dataset {
        classes: subsets.len(),
        graphs,
    })
}

/// Class-balanced 80/20 split: within each class the copies are shuffled by
/// the seed and the tail goes to the test set (at least one instance when a
/// class has two or more).
pub fn split_indices(dataset: &Dataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0517);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..dataset.classes {
        let mut members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.label_of(i) == class)
            .collect();
        members.shuffle(&mut rng);
        let mut test_count = members.len() / 5;
        if test_count == 0 && members.len() >= 2 {
            test_count = 1;
        }
        let cut = members.len() - test_count;
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Graphs as plain structures (for membership tests against a family).
pub fn family_members(n: usize, skips: &[usize], subset_size: usize) -> Result<Vec<Graph>, HarnessError> {
    skip_subsets(skips, subset_size)
        .iter()
        .map(|subset| csl_union(n, subset).map_err(HarnessError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wl;

    #[test]
    fn three_choose_two_gives_three_classes() {
        let dataset = make_family_dataset(13, &[2, 3, 5], 2, 4, 0).unwrap();
        assert_eq!(dataset.classes, 3);
        assert_eq!(dataset.len(), 12);
        for class in 0..3 {
            assert_eq!(
                (0..dataset.len()).filter(|&i| dataset.label_of(i) == class).count(),
                4
            );
        }
    }

    #[test]
    fn instances_are_wl_indistinguishable() {
        let dataset = make_family_dataset(13, &[2, 3, 5], 2, 2, 7).unwrap();
        let reference = &dataset.graphs[0].graph;
        for item in &dataset.graphs[1..] {
            assert!(!wl::distinguish(reference, &item.graph));
        }
    }

    #[test]
    fn split_is_balanced_and_deterministic() {
        let dataset = make_family_dataset(13, &[2, 3, 5], 2, 10, 3).unwrap();
        let (train_a, test_a) = split_indices(&dataset, 11);
        let (train_b, test_b) = split_indices(&dataset, 11);
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        assert_eq!(train_a.len(), 24);
        assert_eq!(test_a.len(), 6);
        for class in 0..3 {
            let in_test = test_a.iter().filter(|&&i| dataset.label_of(i) == class).count();
            assert_eq!(in_test, 2, "class {class}");
        }
        let mut all: Vec<usize> = train_a.iter().chain(&test_a).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn dataset_round_trips_through_json() {
        let dataset = make_family_dataset(13, &[3, 5], 2, 2, 5).unwrap();
        let json = serde_json::to_string(&dataset).unwrap();
        let back: Dataset = serde_json::from_str(&json).unwrap();
        assert_eq!(back, dataset);
    }

    #[test]
    fn empty_family_is_rejected() {
        assert!(make_family_dataset(13, &[3, 5], 3, 2, 0).is_err());
        assert!(make_family_dataset(13, &[3, 5], 2, 0, 0).is_err());
    }
}
