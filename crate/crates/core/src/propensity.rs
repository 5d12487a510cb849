//! Estimation of the historical behavior policy and expert assignment,
//! used as importance-weight denominators.
//!
//! The behavior model is a softmax classifier over actions trained by
//! cross-entropy on the logged `(x, a)` pairs; it can be fitted pooled
//! (ignoring who decided), with the expert identity appended one-hot to the
//! features, or as a separate model per expert. Emitted probabilities are
//! floored away from zero so importance weights stay finite.

use rand::seq::SliceRandom;

use crate::data::MultiLabelDataset;
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet, Gradient, Head};
use crate::seeds::{self, Role};
use crate::sim::BanditLog;
use crate::{Error, Result};

/// Default probability floor.
pub const DEFAULT_FLOOR: f64 = 1e-3;

/// How the behavior model conditions on the logging expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorConditioning {
    /// One classifier on `x` alone.
    Pooled,
    /// One classifier on `x` with the expert identity appended one-hot.
    ExpertOneHot,
    /// A separate classifier per expert.
    PerExpert,
}

/// Where the expert-assignment distribution comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMode {
    /// Randomized assignment: constant `1/K`.
    KnownUniform,
    /// Fit a classifier `x -> h` on the log.
    Estimated,
}

/// Training knobs for the estimator networks.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PropensityTrainConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay; keeps the estimate smooth where the log is
    /// uninformative instead of carving spikes around single records.
    pub weight_decay: f64,
}

impl Default for PropensityTrainConfig {
    fn default() -> Self {
        PropensityTrainConfig {
            hidden_width: 32,
            hidden_layers: 2,
            epochs: 300,
            batch_size: 64,
            learning_rate: 0.01,
            weight_decay: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
enum BehaviorModel {
    Pooled(DenseNet),
    OneHot { net: DenseNet, num_experts: usize },
    PerExpert(Vec<DenseNet>),
    /// Degenerate-fit fallback: the floored empirical action frequencies.
    Constant(Vec<f64>),
}

#[derive(Debug, Clone)]
enum AssignmentModel {
    KnownUniform(usize),
    Estimated { net: DenseNet, num_experts: usize },
}

/// Fitted behavior and assignment models plus the probability floor.
#[derive(Debug, Clone)]
pub struct PropensityEstimates {
    pooled: BehaviorModel,
    conditioned: Option<BehaviorModel>,
    assignment: AssignmentModel,
    floor: f64,
    degenerate: bool,
}

/// Mix toward uniform so every entry is at least `floor` while still summing
/// to one.
fn floor_distribution(dist: &mut [f64], floor: f64) {
    let l = dist.len() as f64;
    let alpha = (floor * l).min(1.0);
    for p in dist.iter_mut() {
        *p = (1.0 - alpha) * *p + alpha / l;
    }
}

fn one_hot_input(x: &[f64], expert: usize, num_experts: usize) -> Vec<f64> {
    let mut input = Vec::with_capacity(x.len() + num_experts);
    input.extend_from_slice(x);
    for j in 0..num_experts {
        input.push(if j == expert { 1.0 } else { 0.0 });
    }
    input
}

/// Train a softmax classifier on `(inputs[i] -> targets[i])` by cross-entropy.
fn fit_classifier(
    inputs: &[Vec<f64>],
    targets: &[usize],
    num_classes: usize,
    cfg: PropensityTrainConfig,
    seed: u64,
    stream: u64,
) -> Result<DenseNet> {
    let mut rng = seeds::rng(seed, Role::PropensityFit, stream);
    let hidden: Vec<(usize, Activation)> = (0..cfg.hidden_layers)
        .map(|_| (cfg.hidden_width, Activation::Relu))
        .collect();
    let mut net = DenseNet::new(inputs[0].len(), &hidden, num_classes, Head::Softmax, &mut rng)?;
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = Gradient::zeros(&net);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let trace = net.forward_trace(&inputs[i])?;
                // Cross-entropy through softmax: d loss / d logits = p - y.
                let mut upstream = trace.output().to_vec();
                upstream[targets[i]] -= 1.0;
                net.backward_from_logits_into(&inputs[i], &trace, &upstream, scale, &mut grad)?;
            }
            adam_step(&mut net, &mut adam, &grad)?;
            if cfg.weight_decay > 0.0 {
                net.apply_weight_decay(cfg.learning_rate * cfg.weight_decay);
            }
        }
    }
    Ok(net)
}

/// Fit the behavior policy estimate from the log, with a known-uniform
/// assignment model.
///
/// A log where a single action was ever taken cannot support a conditional
/// classifier; the fit degenerates to the floored empirical frequencies and
/// the returned estimate is marked degenerate.
pub fn fit_behavior(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    conditioning: BehaviorConditioning,
    cfg: PropensityTrainConfig,
    seed: u64,
) -> Result<PropensityEstimates> {
    fit_estimates(
        dataset,
        log,
        conditioning,
        AssignmentMode::KnownUniform,
        DEFAULT_FLOOR,
        cfg,
        seed,
    )
}

/// Fit behavior and assignment models together.
pub fn fit_estimates(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    conditioning: BehaviorConditioning,
    assignment_mode: AssignmentMode,
    floor: f64,
    cfg: PropensityTrainConfig,
    seed: u64,
) -> Result<PropensityEstimates> {
    if log.is_empty() {
        return Err(Error::Data("cannot fit propensities on an empty log".into()));
    }
    if !(floor > 0.0 && floor * log.num_actions() as f64 <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "floor {floor} is not a valid probability floor for {} actions",
            log.num_actions()
        )));
    }
    let l = log.num_actions();
    let k = log.num_experts();
    let records = log.records();

    let distinct_actions = {
        let mut seen = vec![false; l];
        for r in records {
            seen[r.action] = true;
        }
        seen.iter().filter(|s| **s).count()
    };

    let assignment = match assignment_mode {
        AssignmentMode::KnownUniform => AssignmentModel::KnownUniform(k),
        AssignmentMode::Estimated => {
            let inputs: Vec<Vec<f64>> = records
                .iter()
                .map(|r| dataset.features_of(r.instance).to_vec())
                .collect();
            let targets: Vec<usize> = records.iter().map(|r| r.expert).collect();
            AssignmentModel::Estimated {
                net: fit_classifier(&inputs, &targets, k, cfg, seed, 100)?,
                num_experts: k,
            }
        }
    };

    if distinct_actions < 2 {
        let mut freq = vec![0.0; l];
        for r in records {
            freq[r.action] += 1.0 / records.len() as f64;
        }
        floor_distribution(&mut freq, floor);
        return Ok(PropensityEstimates {
            pooled: BehaviorModel::Constant(freq),
            conditioned: None,
            assignment,
            floor,
            degenerate: true,
        });
    }

    let pooled_inputs: Vec<Vec<f64>> = records
        .iter()
        .map(|r| dataset.features_of(r.instance).to_vec())
        .collect();
    let actions: Vec<usize> = records.iter().map(|r| r.action).collect();
    let pooled = BehaviorModel::Pooled(fit_classifier(&pooled_inputs, &actions, l, cfg, seed, 0)?);

    let conditioned = match conditioning {
        BehaviorConditioning::Pooled => None,
        BehaviorConditioning::ExpertOneHot => {
            let inputs: Vec<Vec<f64>> = records
                .iter()
                .map(|r| one_hot_input(dataset.features_of(r.instance), r.expert, k))
                .collect();
            Some(BehaviorModel::OneHot {
                net: fit_classifier(&inputs, &actions, l, cfg, seed, 1)?,
                num_experts: k,
            })
        }
        BehaviorConditioning::PerExpert => {
            let mut nets = Vec::with_capacity(k);
            for j in 0..k {
                let idx: Vec<usize> = (0..records.len())
                    .filter(|&i| records[i].expert == j)
                    .collect();
                if idx.is_empty() {
                    return Err(Error::Data(format!(
                        "expert {j} has no records; cannot fit per-expert behavior"
                    )));
                }
                let inputs: Vec<Vec<f64>> = idx
                    .iter()
                    .map(|&i| dataset.features_of(records[i].instance).to_vec())
                    .collect();
                let targets: Vec<usize> = idx.iter().map(|&i| records[i].action).collect();
                nets.push(fit_classifier(
                    &inputs,
                    &targets,
                    l,
                    cfg,
                    seed,
                    2 + j as u64,
                )?);
            }
            Some(BehaviorModel::PerExpert(nets))
        }
    };

    Ok(PropensityEstimates {
        pooled,
        conditioned,
        assignment,
        floor,
        degenerate: false,
    })
}

impl PropensityEstimates {
    /// Exact-uniform estimates: behavior `1/l`, assignment `1/K`. A neutral
    /// fixture for tests and for logs produced by uniform behaviors.
    pub fn uniform(num_actions: usize, num_experts: usize) -> Self {
        PropensityEstimates {
            pooled: BehaviorModel::Constant(vec![1.0 / num_actions as f64; num_actions]),
            conditioned: None,
            assignment: AssignmentModel::KnownUniform(num_experts),
            floor: 1.0 / num_actions as f64,
            degenerate: false,
        }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn has_conditioned_behavior(&self) -> bool {
        self.conditioned.is_some()
    }

    fn distribution_of(&self, model: &BehaviorModel, x: &[f64], h: Option<usize>) -> Result<Vec<f64>> {
        let mut dist = match model {
            BehaviorModel::Pooled(net) => net.forward(x)?,
            BehaviorModel::OneHot { net, num_experts } => {
                let h = h.ok_or_else(|| {
                    Error::Data("conditioned behavior model queried without an expert".into())
                })?;
                net.forward(&one_hot_input(x, h, *num_experts))?
            }
            BehaviorModel::PerExpert(nets) => {
                let h = h.ok_or_else(|| {
                    Error::Data("conditioned behavior model queried without an expert".into())
                })?;
                let net = nets.get(h).ok_or_else(|| {
                    Error::Data(format!("expert {h} out of range for per-expert behavior"))
                })?;
                net.forward(x)?
            }
            BehaviorModel::Constant(freq) => freq.clone(),
        };
        floor_distribution(&mut dist, self.floor);
        Ok(dist)
    }

    /// Estimated behavior distribution over actions; conditioned on the
    /// expert when a conditioned model was fitted and `h` is given.
    pub fn behavior_distribution(&self, x: &[f64], h: Option<usize>) -> Result<Vec<f64>> {
        match (&self.conditioned, h) {
            (Some(model), Some(_)) => self.distribution_of(model, x, h),
            _ => self.distribution_of(&self.pooled, x, None),
        }
    }

    /// `pi_hat_0(a | x[, h])`, floored away from zero.
    pub fn behavior_prob(&self, x: &[f64], action: usize, h: Option<usize>) -> Result<f64> {
        Ok(self.behavior_distribution(x, h)?[action])
    }

    /// Estimated assignment distribution over experts.
    pub fn assignment_distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.assignment {
            AssignmentModel::KnownUniform(k) => Ok(vec![1.0 / *k as f64; *k]),
            AssignmentModel::Estimated { net, num_experts } => {
                let mut dist = net.forward(x)?;
                debug_assert_eq!(dist.len(), *num_experts);
                floor_distribution(&mut dist, self.floor);
                Ok(dist)
            }
        }
    }

    /// `d_hat_0(h | x)`.
    pub fn assignment_prob(&self, x: &[f64], h: usize) -> Result<f64> {
        let dist = self.assignment_distribution(x)?;
        dist.get(h)
            .copied()
            .ok_or_else(|| Error::Data(format!("expert {h} out of range for assignment model")))
    }

    /// Mean held-in log-likelihood of the logged actions.
    pub fn held_in_log_likelihood(&self, dataset: &MultiLabelDataset, log: &BanditLog) -> Result<f64> {
        let mut total = 0.0;
        for r in log.records() {
            let p = self.behavior_prob(dataset.features_of(r.instance), r.action, None)?;
            total += p.ln();
        }
        Ok(total / log.len() as f64)
    }
}
