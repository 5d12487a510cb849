//! Synthetic multi-label data: a desk-scale stand-in for the LIBSVM
//! multilabel benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use super::MultiLabelDataset;
use crate::seeds::{self, Role};
use crate::{Error, Result};

/// Mixture of `l` unit-variance Gaussian clusters. Each instance is labeled
/// with its cluster index and, with probability `label_noise`, one extra
/// label drawn uniformly from the other clusters.
///
/// A third of the clusters sit on distinct centers drawn uniformly in
/// `[-2.5, 2.5]^d`; the remaining clusters share one center and are told
/// apart only by the sign parity of paired offset coordinates. The separated
/// clusters are linearly learnable; the shared-center ones are fully
/// determined by x but only through an XOR of signs, which low-capacity
/// models cannot express — the regime where deferring to a decision-maker
/// with label knowledge pays off.
pub fn make_synthetic_multilabel(
    n: usize,
    d: usize,
    l: usize,
    label_noise: f64,
    seed: u64,
) -> Result<MultiLabelDataset> {
    if n == 0 || d == 0 || l == 0 {
        return Err(Error::InvalidArgument(
            "n, d and l must all be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&label_noise) {
        return Err(Error::InvalidArgument(format!(
            "label noise must be in [0, 1], got {label_noise}"
        )));
    }
    let mut rng = seeds::rng(seed, Role::DataGen, 0);
    let singles = l.div_ceil(3);
    let shared = l - singles;
    let centers: Vec<Vec<f64>> = (0..=singles)
        .map(|_| (0..d).map(|_| rng.random_range(-2.5..2.5)).collect())
        .collect();

    let parity_bits = if shared > 1 {
        usize::BITS as usize - (shared - 1).leading_zeros() as usize
    } else {
        0
    };

    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let pick = rng.random_range(0..l);
        let (row, cluster) = if pick < singles {
            let row: Vec<f64> = centers[pick]
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                .collect();
            (row, pick)
        } else {
            let offsets: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let mut index = 0usize;
            for bit in 0..parity_bits {
                let a = offsets[(2 * bit) % d];
                let b = offsets[(2 * bit + 1) % d];
                if a * b > 0.0 {
                    index |= 1 << bit;
                }
            }
            let row: Vec<f64> = centers[singles]
                .iter()
                .zip(&offsets)
                .map(|(c, u)| c + u)
                .collect();
            (row, singles + index % shared)
        };
        let mut set = vec![cluster];
        if l > 1 && rng.random::<f64>() < label_noise {
            let mut extra = rng.random_range(0..l - 1);
            if extra >= cluster {
                extra += 1;
            }
            set.push(extra);
        }
        features.push(row);
        labels.push(set);
    }
    MultiLabelDataset::new(features, labels, l)
}
