//! Deterministic deployment evaluation with full counterfactual accounting.
//!
//! Policy and router act by argmax at test time. Router ties break toward
//! the algorithm (it is free at equal value); action ties break toward the
//! lowest index. The human branch queries an expert — the router's argmax
//! expert for personalized systems, a uniform draw from the pool otherwise —
//! whose sampled decision is scored by the counterfactual oracle and whose
//! query cost is charged.

use crate::data::MultiLabelDataset;
use crate::nn::DenseNet;
use crate::seeds::{self, Role};
use crate::sim::ExpertPool;
use crate::train::{SystemKind, TrainedSystem};
use crate::{Error, Result};

/// Accounting for one deployment run over a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentResult {
    /// Cost-adjusted total: `raw_reward - total_cost`.
    pub total_reward: f64,
    /// Reward before costs.
    pub raw_reward: f64,
    /// Human query costs paid.
    pub total_cost: f64,
    /// Instances routed to each expert.
    pub routed_to_expert: Vec<u64>,
    /// Instances decided by the policy.
    pub algorithm_count: u64,
    pub human_branch_reward: f64,
    pub algorithm_branch_reward: f64,
    pub seed: u64,
}

impl DeploymentResult {
    pub fn human_count(&self) -> u64 {
        self.routed_to_expert.iter().sum()
    }

    pub fn human_fraction(&self) -> f64 {
        let total = self.human_count() + self.algorithm_count;
        if total == 0 {
            0.0
        } else {
            self.human_count() as f64 / total as f64
        }
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

enum Branch {
    Algorithm,
    Human { designated: Option<usize> },
}

fn route(system: &TrainedSystem, x: &[f64], pool_size: usize) -> Result<Branch> {
    match system.kind {
        SystemKind::Human => Ok(Branch::Human { designated: None }),
        SystemKind::Ao => Ok(Branch::Algorithm),
        SystemKind::Ts | SystemKind::Jc => {
            let router = system
                .router
                .as_ref()
                .ok_or_else(|| Error::Data("system has no router".into()))?;
            let p_human = router.forward(x)?[0];
            // Tie (p = 1/2) goes to the algorithm.
            if p_human > 0.5 {
                Ok(Branch::Human { designated: None })
            } else {
                Ok(Branch::Algorithm)
            }
        }
        SystemKind::Jcp => {
            let router = system
                .router
                .as_ref()
                .ok_or_else(|| Error::Data("system has no router".into()))?;
            let probs = router.forward(x)?;
            if probs.len() != pool_size + 1 {
                return Err(Error::InputShape(format!(
                    "personalized router outputs {} probabilities, pool needs {}",
                    probs.len(),
                    pool_size + 1
                )));
            }
            let bot = pool_size;
            // Argmax with ties toward the algorithm, then lowest expert index.
            let best_expert = argmax_lowest(&probs[..bot]);
            if probs[best_expert] > probs[bot] {
                Ok(Branch::Human {
                    designated: Some(best_expert),
                })
            } else {
                Ok(Branch::Algorithm)
            }
        }
    }
}

/// Evaluate a trained system on a test set.
pub fn evaluate(
    system: &TrainedSystem,
    test: &MultiLabelDataset,
    pool: &ExpertPool,
    seed: u64,
) -> Result<DeploymentResult> {
    let mut rng = seeds::rng(seed, Role::Deployment, 0);
    let mut result = DeploymentResult {
        total_reward: 0.0,
        raw_reward: 0.0,
        total_cost: 0.0,
        routed_to_expert: vec![0; pool.len()],
        algorithm_count: 0,
        human_branch_reward: 0.0,
        algorithm_branch_reward: 0.0,
        seed,
    };
    for i in 0..test.len() {
        let x = test.features_of(i);
        match route(system, x, pool.len())? {
            Branch::Algorithm => {
                let policy = system
                    .policy
                    .as_ref()
                    .ok_or_else(|| Error::Data("system has no policy".into()))?;
                let action = argmax_lowest(&policy.forward(x)?);
                let reward = test.reward(i, action);
                result.raw_reward += reward;
                result.algorithm_branch_reward += reward;
                result.algorithm_count += 1;
            }
            Branch::Human { designated } => {
                let j = match designated {
                    Some(j) => j,
                    None => rng.random_range(0..pool.len()),
                };
                let decision = pool.decide_at_test(j, test, i, &mut rng)?;
                result.raw_reward += decision.reward;
                result.human_branch_reward += decision.reward;
                result.total_cost += decision.cost;
                result.routed_to_expert[j] += 1;
            }
        }
    }
    result.total_reward = result.raw_reward - result.total_cost;
    Ok(result)
}

use rand::Rng;

/// Exact expected reward of a stochastic policy under the oracle:
/// `(1/N) sum_i sum_a pi(a|x_i) r(x_i, a)`.
pub fn expected_policy_value(policy: &DenseNet, dataset: &MultiLabelDataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..dataset.len() {
        let probs = policy.forward(dataset.features_of(i))?;
        for &a in dataset.labels_of(i) {
            total += probs[a];
        }
    }
    Ok(total / dataset.len() as f64)
}

/// Mean oracle reward of the argmax action, the deterministic deployment
/// value of a policy alone.
pub fn deterministic_policy_value(policy: &DenseNet, dataset: &MultiLabelDataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..dataset.len() {
        let action = argmax_lowest(&policy.forward(dataset.features_of(i))?);
        total += dataset.reward(i, action);
    }
    Ok(total / dataset.len() as f64)
}

/// Mean and standard error over repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub repetitions: usize,
}

impl Summary {
    /// Paper-style `mean±stderr` with one decimal.
    pub fn display_row(&self) -> String {
        format!("{:.1}±{:.1}", self.mean, self.stderr)
    }
}

/// Summarize `values` as mean ± standard error (sample standard deviation
/// over the square root of the count). Needs at least two repetitions.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "standard error needs at least 2 repetitions".into(),
        ));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary {
        mean,
        stderr: (var / n as f64).sqrt(),
        repetitions: n,
    })
}
