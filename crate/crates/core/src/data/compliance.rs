//! Two-dimensional compliance construction.
//!
//! A binary-action instance family where no single hyperplane policy can act
//! correctly everywhere, but a hyperplane router that defers the left region
//! to an expert with a fixed nonlinear decision boundary, combined with a
//! hyperplane policy for the rest, decides every point correctly.
//!
//! Geometry: three columns of axis-aligned square blobs.
//!
//! - Left column (x1 = -4): four blobs with alternating correct actions
//!   (treat, skip, treat, skip from top to bottom). Any half-plane restricted
//!   to a vertical line is a half-line, so no hyperplane can act correctly on
//!   all four; its mistakes land on an *interior* blob, which no hyperplane
//!   router can isolate either.
//! - Middle column (x1 = 0) and right column (x1 = 4): one treat/skip pair
//!   each, separable within the column, but placed at heights that force a
//!   steep descending line. The value of a line at x1 = 0 is the average of
//!   its values at x1 = -4 and x1 = 4, and the windows are arranged so that no
//!   line is simultaneously correct on the left column's best split and on
//!   both separator pairs.
//! - The expert's boundary is a union of horizontal bands over the left
//!   region (nonlinear in x), correct on the whole left column; elsewhere it
//!   never treats, so it is right on the skip blobs of the separator columns
//!   and wrong on their treat blobs.
//!
//! A policy trained alone settles on a compromise that is wrong on one
//! separator blob as well as an interior left blob; no hyperplane router can
//! hand exactly those mistakes to the expert (the interior blob sits inside
//! the hull of the points the policy gets right, and deferring the broken
//! separator blob is worthless because the expert is wrong there too).
//! Joint training escapes by deferring the left column, freeing the policy
//! to fit both separator columns exactly.

use rand::seq::SliceRandom;
use rand::Rng;

use super::MultiLabelDataset;
use crate::nn::{DenseNet, Head};
use crate::seeds::{self, Role};
use crate::Result;

/// Treat action index (the other action is 0, "skip").
pub const TREAT: usize = 1;

/// (x1, x2, correct action, mass fraction)
const BLOBS: [(f64, f64, usize, f64); 8] = [
    (-4.0, 1.8, 1, 0.15),
    (-4.0, 0.6, 0, 0.15),
    (-4.0, -0.6, 1, 0.15),
    (-4.0, -1.8, 0, 0.15),
    (0.0, 2.8, 1, 0.10),
    (0.0, 0.8, 0, 0.10),
    (4.0, -0.8, 1, 0.10),
    (4.0, -2.8, 0, 0.10),
];

const HALF_WIDTH: f64 = 0.25;

/// The generated instance plus the construction's fixed decision rules.
#[derive(Debug, Clone)]
pub struct Compliance2d {
    pub dataset: MultiLabelDataset,
}

impl Compliance2d {
    /// The expert's fixed nonlinear decision function: treat inside two
    /// horizontal bands of the left region, never elsewhere. Correct on every
    /// left-column point by construction (and on the lower separator blobs,
    /// where skipping happens to be right); wrong on the treatable separator
    /// blobs, which only the policy can serve.
    pub fn expert_action(x: &[f64]) -> usize {
        let treat = x[0] < -2.0 && (x[1] > 1.2 || (x[1] > -1.2 && x[1] < 0.0));
        usize::from(treat)
    }

    /// The joint solution's routing rule: defer the left column to the
    /// expert, exactly the region where no hyperplane policy can act
    /// correctly and the expert's bands can.
    pub fn ideal_route_to_human(x: &[f64]) -> bool {
        x[0] < -2.0
    }

    /// The joint solution's policy on the non-deferred region: the steep
    /// descending separator through (0, 1.8) and (4, -1.8), which treats
    /// nothing on the left column.
    pub fn ideal_policy_action(x: &[f64]) -> usize {
        usize::from(0.9 * x[0] + x[1] - 1.8 > 0.0)
    }

    /// Linear softmax policy network realizing [`Self::ideal_policy_action`].
    pub fn reference_policy() -> DenseNet {
        let mut net = DenseNet::zeros(2, &[], 2, Head::Softmax).expect("fixed shape");
        let s = 6.0;
        // Rows: action 0 stays zero; action 1 scores s*(0.9 x1 + x2 - 1.8).
        net.set_params_flat(&[0.0, 0.0, 0.9 * s, s, 0.0, -1.8 * s])
            .expect("fixed shape");
        net
    }

    /// Linear logistic router realizing [`Self::ideal_route_to_human`].
    pub fn reference_router() -> DenseNet {
        let mut net = DenseNet::zeros(2, &[], 1, Head::Logistic).expect("fixed shape");
        let s = 6.0;
        // P(human) = sigmoid(-s * (x1 + 2)), above 1/2 exactly when x1 < -2.
        net.set_params_flat(&[-s, 0.0, -2.0 * s]).expect("fixed shape");
        net
    }
}

/// Generate the compliance instance with `n` points split across the eight
/// blobs by largest-remainder apportionment; positions jitter uniformly
/// within each blob square.
pub fn make_compliance_2d(n: usize, seed: u64) -> Result<Compliance2d> {
    let mut counts: Vec<usize> = BLOBS.iter().map(|b| (n as f64 * b.3) as usize).collect();
    let mut remainders: Vec<(usize, f64)> = BLOBS
        .iter()
        .enumerate()
        .map(|(i, b)| (i, n as f64 * b.3 - counts[i] as f64))
        .collect();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut short = n - counts.iter().sum::<usize>();
    for &(i, _) in &remainders {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }

    let mut rng = seeds::rng(seed, Role::DataGen, 1);
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for (&(cx, cy, action, _), &count) in BLOBS.iter().zip(&counts) {
        for _ in 0..count {
            let x = cx + rng.random_range(-HALF_WIDTH..HALF_WIDTH);
            let y = cy + rng.random_range(-HALF_WIDTH..HALF_WIDTH);
            rows.push((vec![x, y], action));
        }
    }
    rows.shuffle(&mut rng);

    let features = rows.iter().map(|(x, _)| x.clone()).collect();
    let labels = rows.iter().map(|(_, a)| vec![*a]).collect();
    let dataset = MultiLabelDataset::new(features, labels, 2)?;
    Ok(Compliance2d { dataset })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: exhaustive sweep over hyperplane policies
    /// (directions x thresholds at every projection midpoint, both
    /// orientations), returning the best full-set accuracy.
    fn hyperplane_sweep_accuracy(ds: &MultiLabelDataset) -> f64 {
        let n = ds.len();
        let mut best: f64 = 0.0;
        for step in 0..=180 {
            let theta = std::f64::consts::PI * step as f64 / 180.0;
            let (wx, wy) = (theta.cos(), theta.sin());
            let mut proj: Vec<f64> = (0..n)
                .map(|i| {
                    let x = ds.features_of(i);
                    wx * x[0] + wy * x[1]
                })
                .collect();
            proj.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut thresholds = vec![proj[0] - 1.0, proj[n - 1] + 1.0];
            for w in proj.windows(2) {
                thresholds.push(0.5 * (w[0] + w[1]));
            }
            for &t in &thresholds {
                let mut above = 0usize;
                for i in 0..n {
                    let x = ds.features_of(i);
                    let treat = wx * x[0] + wy * x[1] > t;
                    let correct = ds.has_label(i, usize::from(treat));
                    above += usize::from(correct);
                }
                best = best.max(above as f64 / n as f64);
                best = best.max((n - above) as f64 / n as f64);
            }
        }
        best
    }

    #[test]
    fn expert_is_perfect_on_its_own_region() {
        let inst = make_compliance_2d(400, 3).unwrap();
        for i in 0..inst.dataset.len() {
            let x = inst.dataset.features_of(i);
            if x[0] < -2.0 {
                let a = Compliance2d::expert_action(x);
                assert!(inst.dataset.has_label(i, a), "expert wrong at {x:?}");
            }
        }
    }

    #[test]
    fn no_single_hyperplane_acts_correctly_everywhere() {
        let inst = make_compliance_2d(400, 5).unwrap();
        let best = hyperplane_sweep_accuracy(&inst.dataset);
        assert!(best < 1.0, "sweep found a perfect hyperplane ({best})");
        // The construction caps linear policies near 3/4 of the mass.
        assert!(best <= 0.80, "sweep found unexpectedly strong line ({best})");
    }

    #[test]
    fn joint_solution_decides_every_point_correctly() {
        let inst = make_compliance_2d(500, 9).unwrap();
        for i in 0..inst.dataset.len() {
            let x = inst.dataset.features_of(i);
            let action = if Compliance2d::ideal_route_to_human(x) {
                Compliance2d::expert_action(x)
            } else {
                Compliance2d::ideal_policy_action(x)
            };
            assert!(inst.dataset.has_label(i, action), "joint rule wrong at {x:?}");
        }
    }

    #[test]
    fn reference_nets_realize_the_ideal_rules() {
        let inst = make_compliance_2d(300, 1).unwrap();
        let policy = Compliance2d::reference_policy();
        let router = Compliance2d::reference_router();
        for i in 0..inst.dataset.len() {
            let x = inst.dataset.features_of(i);
            let probs = policy.forward(x).unwrap();
            let argmax = usize::from(probs[1] > probs[0]);
            assert_eq!(argmax, Compliance2d::ideal_policy_action(x));
            let p_human = router.forward(x).unwrap()[0];
            assert_eq!(p_human > 0.5, Compliance2d::ideal_route_to_human(x));
        }
    }

    #[test]
    fn apportionment_is_exact_and_seeded() {
        let a = make_compliance_2d(1000, 4).unwrap();
        let b = make_compliance_2d(1000, 4).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.dataset.len(), 1000);
        let treats = (0..1000).filter(|&i| a.dataset.has_label(i, TREAT)).count();
        // Blobs with treat labels carry mass 0.15 + 0.15 + 0.10 + 0.10.
        assert_eq!(treats, 500);
    }
}
