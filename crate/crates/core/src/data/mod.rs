//! Multi-label datasets and the supervised-to-bandit conversion substrate.
//!
//! Each instance carries a dense feature vector and a set of correct labels;
//! the label set doubles as the counterfactual reward oracle (action `a` on
//! instance `i` yields reward 1 exactly when `a` is in the label set).

mod compliance;
mod libsvm;
mod synthetic;

pub use compliance::{make_compliance_2d, Compliance2d, TREAT};
pub use libsvm::{parse_libsvm_multilabel, read_snapshot, write_libsvm_multilabel, write_snapshot};
pub use synthetic::make_synthetic_multilabel;

use crate::seeds::{self, Role};
use crate::{Error, Result};

/// Immutable multi-label dataset: `n` instances of dimension `d`, label sets
/// over an action space of size `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiLabelDataset {
    features: Vec<Vec<f64>>,
    /// Sorted, deduplicated label indices per instance.
    labels: Vec<Vec<usize>>,
    num_actions: usize,
}

impl MultiLabelDataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<usize>>,
        num_actions: usize,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Data("dataset must contain at least one instance".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} label sets",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::Data("inconsistent feature dimension".into()));
        }
        let mut labels = labels;
        for set in &mut labels {
            set.sort_unstable();
            set.dedup();
            if set.iter().any(|&a| a >= num_actions) {
                return Err(Error::Data(format!(
                    "label index out of range (action space is {num_actions})"
                )));
            }
        }
        Ok(MultiLabelDataset {
            features,
            labels,
            num_actions,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn features_of(&self, instance: usize) -> &[f64] {
        &self.features[instance]
    }

    pub fn labels_of(&self, instance: usize) -> &[usize] {
        &self.labels[instance]
    }

    pub fn has_label(&self, instance: usize, action: usize) -> bool {
        self.labels[instance].binary_search(&action).is_ok()
    }

    /// Counterfactual reward oracle: 1 when `action` is a correct label.
    pub fn reward(&self, instance: usize, action: usize) -> f64 {
        if self.has_label(instance, action) {
            1.0
        } else {
            0.0
        }
    }

    /// Instances with no labels are kept in the dataset but flagged; every
    /// action on them has reward 0, so log generation skips them.
    pub fn is_flagged_empty(&self, instance: usize) -> bool {
        self.labels[instance].is_empty()
    }

    pub fn empty_label_count(&self) -> usize {
        self.labels.iter().filter(|s| s.is_empty()).count()
    }

    /// New dataset with the given instances, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("subset must be nonempty".into()));
        }
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        MultiLabelDataset::new(features, labels, self.num_actions)
    }
}

/// Test split specification: fraction held out, seeded shuffle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

/// Seeded disjoint train/test partition with `|test| = round(fraction * n)`.
pub fn split(
    dataset: &MultiLabelDataset,
    spec: SplitSpec,
) -> Result<(MultiLabelDataset, MultiLabelDataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let n = dataset.len();
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidArgument(
            "split would leave an empty train or test set".into(),
        ));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    indices.shuffle(&mut seeds::rng(spec.seed, Role::Split, 0));
    let (test_idx, train_idx) = indices.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((dataset.subset(&train_idx)?, dataset.subset(&test_idx)?))
}

/// Per-dimension z-score transform fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(dataset: &MultiLabelDataset) -> Self {
        let d = dataset.feature_dim();
        let n = dataset.len() as f64;
        let mut means = vec![0.0; d];
        for row in &dataset.features {
            for (m, x) in means.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for row in &dataset.features {
            for ((v, x), m) in vars.iter_mut().zip(row).zip(&means) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { means, stds }
    }

    pub fn transform(&self, dataset: &MultiLabelDataset) -> Result<MultiLabelDataset> {
        if dataset.feature_dim() != self.means.len() {
            return Err(Error::InputShape(format!(
                "standardizer fitted on dimension {}, dataset has {}",
                self.means.len(),
                dataset.feature_dim()
            )));
        }
        let features = dataset
            .features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(self.means.iter().zip(&self.stds))
                    .map(|(x, (m, s))| (x - m) / s)
                    .collect()
            })
            .collect();
        MultiLabelDataset::new(features, dataset.labels.clone(), dataset.num_actions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> MultiLabelDataset {
        let features = (0..n).map(|i| vec![i as f64, (i * 2) as f64]).collect();
        let labels = (0..n).map(|i| vec![i % 3]).collect();
        MultiLabelDataset::new(features, labels, 3).unwrap()
    }

    #[test]
    fn rejects_label_out_of_range() {
        let err = MultiLabelDataset::new(vec![vec![1.0]], vec![vec![5]], 3);
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn rejects_empty_dataset() {
        assert!(MultiLabelDataset::new(vec![], vec![], 3).is_err());
    }

    #[test]
    fn split_sizes_follow_fraction() {
        let ds = toy(100);
        let (train, test) = split(&ds, SplitSpec { test_fraction: 0.15, seed: 1 }).unwrap();
        assert_eq!(test.len(), 15);
        assert_eq!(train.len(), 85);
    }

    #[test]
    fn split_is_seeded_and_partitions() {
        let ds = toy(40);
        let spec = SplitSpec { test_fraction: 0.3, seed: 9 };
        let (tr1, te1) = split(&ds, spec).unwrap();
        let (tr2, te2) = split(&ds, spec).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        // Union of halves is the original multiset of rows.
        let mut rows: Vec<Vec<f64>> = tr1
            .features
            .iter()
            .chain(te1.features.iter())
            .cloned()
            .collect();
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut orig = ds.features.clone();
        orig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(rows, orig);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let ds = toy(10);
        assert!(split(&ds, SplitSpec { test_fraction: 0.0, seed: 0 }).is_err());
        assert!(split(&ds, SplitSpec { test_fraction: 1.0, seed: 0 }).is_err());
    }

    #[test]
    fn standardizer_zero_means_unit_variance_on_train() {
        let ds = toy(50);
        let scaler = Standardizer::fit(&ds);
        let scaled = scaler.transform(&ds).unwrap();
        let d = scaled.feature_dim();
        for j in 0..d {
            let mean: f64 = scaled.features.iter().map(|r| r[j]).sum::<f64>() / 50.0;
            let var: f64 = scaled.features.iter().map(|r| r[j] * r[j]).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_label_instances_are_flagged() {
        let ds = MultiLabelDataset::new(
            vec![vec![1.0], vec![2.0]],
            vec![vec![0], vec![]],
            2,
        )
        .unwrap();
        assert!(!ds.is_flagged_empty(0));
        assert!(ds.is_flagged_empty(1));
        assert_eq!(ds.empty_label_count(), 1);
    }
}
