//! End-to-end training procedures for the five system kinds.
//!
//! - `Human`: no models; every test instance is deferred to a random expert.
//! - `AO` (algorithm only): policy trained on the truncated IPS objective,
//!   with the reward baseline chosen by grid search on the training log.
//! - `TS` (two-stage): the AO policy, frozen, plus a router trained after the
//!   fact on the collaboration objective.
//! - `JC` (joint): policy and router optimized simultaneously on the
//!   collaboration objective, one Adam step each per minibatch.
//! - `JCP` (joint personalized): as JC, but the router chooses among the K
//!   logging experts and the algorithm on the personalized objective.
//!
//! Every trained parameter is a deterministic function of `(config, seed)`:
//! initialization and shuffling draw from per-role streams derived in
//! [`crate::seeds`], keyed by the baseline value under selection so that each
//! grid entry trains an independent, reproducible run.

use serde::{Deserialize, Serialize};

use crate::data::MultiLabelDataset;
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet, Head};
use crate::objective::{
    collab_objective, ips_objective, ips_value, personalized_objective, select_lambda,
    CollabMode, ObjectiveConfig,
};
use crate::propensity::PropensityEstimates;
use crate::seeds::{self, Role};
use crate::sim::{BanditLog, ExpertPool, LogRecord};
use crate::{Error, Result};

/// Network architecture for a policy or router.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
}

impl Default for NetArch {
    fn default() -> Self {
        // Three weight layers total, matching the experiments' model family;
        // hidden width 8 unless a capacity sweep overrides it.
        NetArch {
            hidden_layers: 2,
            hidden_width: 8,
            activation: Activation::Identity,
        }
    }
}

impl NetArch {
    pub fn linear() -> Self {
        NetArch {
            hidden_layers: 0,
            hidden_width: 0,
            activation: Activation::Identity,
        }
    }

    fn build(
        &self,
        input_dim: usize,
        output_dim: usize,
        head: Head,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> Result<DenseNet> {
        let hidden: Vec<(usize, Activation)> = (0..self.hidden_layers)
            .map(|_| (self.hidden_width, self.activation))
            .collect();
        DenseNet::new(input_dim, &hidden, output_dim, head, rng)
    }
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    /// Early stop once the moving average of the objective over this many
    /// epochs improves by less than `convergence_tol`.
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub policy_arch: NetArch,
    pub router_arch: NetArch,
    /// Decoupled weight decay (times the learning rate per step). Router
    /// decay keeps the routing gate from saturating while the policy is
    /// still moving, so gated gradients can recover mis-deferred regions.
    pub policy_weight_decay: f64,
    pub router_weight_decay: f64,
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 64,
            learning_rate: 0.001,
            seed: 0,
            lambda_grid: crate::objective::DEFAULT_LAMBDA_GRID.to_vec(),
            convergence_window: 20,
            convergence_tol: 1e-4,
            policy_arch: NetArch::default(),
            router_arch: NetArch::default(),
            policy_weight_decay: 0.0,
            router_weight_decay: 0.0,
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidArgument("lambda grid must be nonempty".into()));
        }
        self.objective.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }
}

/// The five system kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Human,
    Ao,
    Ts,
    Jc,
    Jcp,
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            SystemKind::Human => "Human",
            SystemKind::Ao => "AO",
            SystemKind::Ts => "TS",
            SystemKind::Jc => "JC",
            SystemKind::Jcp => "JCP",
        };
        write!(f, "{name}")
    }
}

/// A trained decision system ready for deployment evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub kind: SystemKind,
    pub policy: Option<DenseNet>,
    pub router: Option<DenseNet>,
    /// Baseline chosen by the grid search, when a policy was trained.
    pub lambda: Option<f64>,
    /// Full-log objective value after each epoch of the winning run.
    pub history: Vec<f64>,
}

pub const SYSTEM_FORMAT: &str = "handoff.system.v1";

#[derive(Serialize, Deserialize)]
struct SystemIo {
    format: String,
    kind: SystemKind,
    lambda: Option<f64>,
    policy: Option<DenseNet>,
    router: Option<DenseNet>,
    history: Vec<f64>,
}

impl TrainedSystem {
    pub fn human() -> Self {
        TrainedSystem {
            kind: SystemKind::Human,
            policy: None,
            router: None,
            lambda: None,
            history: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&SystemIo {
            format: SYSTEM_FORMAT.to_string(),
            kind: self.kind,
            lambda: self.lambda,
            policy: self.policy.clone(),
            router: self.router.clone(),
            history: self.history.clone(),
        })
        .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let io: SystemIo =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if io.format != SYSTEM_FORMAT {
            return Err(Error::Format(format!("unsupported system format {:?}", io.format)));
        }
        Ok(TrainedSystem {
            kind: io.kind,
            policy: io.policy,
            router: io.router,
            lambda: io.lambda,
            history: io.history,
        })
    }
}

fn shuffled(records: &[LogRecord], rng: &mut rand_chacha::ChaCha12Rng) -> Vec<LogRecord> {
    use rand::seq::SliceRandom;
    let mut out = records.to_vec();
    out.shuffle(rng);
    out
}

/// Moving-average early stop: compare the last `window` epochs with the
/// `window` before them.
fn converged(history: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let recent: f64 = history[n - window..].iter().sum::<f64>() / window as f64;
    let previous: f64 = history[n - 2 * window..n - window].iter().sum::<f64>() / window as f64;
    recent - previous < tol
}

fn check_finite(value: f64, what: &str, epoch: usize) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Training(format!(
            "{what} objective diverged to {value} at epoch {epoch}"
        )));
    }
    Ok(())
}

/// Train a policy alone on the truncated IPS objective for one baseline.
fn train_policy_ips(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
    lambda: f64,
) -> Result<(DenseNet, Vec<f64>)> {
    let stream = lambda.to_bits();
    let mut init_rng = seeds::rng(cfg.seed, Role::PolicyInit, stream);
    let mut policy = cfg.policy_arch.build(
        dataset.feature_dim(),
        dataset.num_actions(),
        Head::Softmax,
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(&policy, cfg.adam());
    let mut shuffle_rng = seeds::rng(cfg.seed, Role::Shuffle, stream);
    let obj = cfg.objective.with_baseline(lambda);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(log.records(), &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let eval = ips_objective(&policy, dataset, batch, estimates, &obj)?;
            check_finite(eval.value, "ips", epoch)?;
            let mut grad = eval.policy_grad.expect("ips returns a policy gradient");
            grad.scale(-1.0); // maximize
            adam_step(&mut policy, &mut adam, &grad)?;
            if cfg.policy_weight_decay > 0.0 {
                policy.apply_weight_decay(cfg.learning_rate * cfg.policy_weight_decay);
            }
        }
        let full = ips_value(&policy, dataset, log.records(), estimates, &obj)?;
        check_finite(full, "ips", epoch)?;
        history.push(full);
        if converged(&history, cfg.convergence_window, cfg.convergence_tol) {
            break;
        }
    }
    Ok((policy, history))
}

/// Algorithm-only system: IPS training with the baseline grid search.
pub fn train_ao(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
) -> Result<TrainedSystem> {
    cfg.validate()?;
    let unbaselined = cfg.objective.with_baseline(0.0);
    let (lambda, (policy, history), _) = select_lambda(
        &cfg.lambda_grid,
        |lambda| train_policy_ips(dataset, log, estimates, cfg, lambda),
        |(policy, _)| ips_value(policy, dataset, log.records(), estimates, &unbaselined),
    )?;
    Ok(TrainedSystem {
        kind: SystemKind::Ao,
        policy: Some(policy),
        router: None,
        lambda: Some(lambda),
        history,
    })
}

/// Two-stage system: the AO policy frozen, then a router fitted around it.
pub fn train_ts(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
) -> Result<TrainedSystem> {
    cfg.validate()?;
    let ao = train_ao(dataset, log, estimates, cfg)?;
    let policy = ao.policy.expect("AO trains a policy");
    let lambda = ao.lambda.expect("AO selects a baseline");

    let mut init_rng = seeds::rng(cfg.seed, Role::RouterInit, 0);
    let mut router =
        cfg.router_arch
            .build(dataset.feature_dim(), 1, Head::Logistic, &mut init_rng)?;
    let mut adam = AdamState::new(&router, cfg.adam());
    let mut shuffle_rng = seeds::rng(cfg.seed, Role::Shuffle, u64::MAX);
    let obj = cfg.objective.with_baseline(lambda);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(log.records(), &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let eval = collab_objective(
                &policy,
                &router,
                dataset,
                batch,
                estimates,
                &obj,
                CollabMode::RouterOnly,
            )?;
            check_finite(eval.value, "two-stage router", epoch)?;
            let mut grad = eval.router_grad.expect("router gradient");
            grad.scale(-1.0);
            adam_step(&mut router, &mut adam, &grad)?;
            if cfg.router_weight_decay > 0.0 {
                router.apply_weight_decay(cfg.learning_rate * cfg.router_weight_decay);
            }
        }
        let full = collab_objective(
            &policy,
            &router,
            dataset,
            log.records(),
            estimates,
            &obj,
            CollabMode::RouterOnly,
        )?
        .value;
        check_finite(full, "two-stage router", epoch)?;
        history.push(full);
        if converged(&history, cfg.convergence_window, cfg.convergence_tol) {
            break;
        }
    }
    Ok(TrainedSystem {
        kind: SystemKind::Ts,
        policy: Some(policy),
        router: Some(router),
        lambda: Some(lambda),
        history,
    })
}

/// Train policy and router jointly on the collaboration objective for one
/// baseline.
fn train_joint_collab(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
    lambda: f64,
) -> Result<(DenseNet, DenseNet, Vec<f64>)> {
    let stream = lambda.to_bits();
    let mut policy_rng = seeds::rng(cfg.seed, Role::PolicyInit, stream);
    let mut policy = cfg.policy_arch.build(
        dataset.feature_dim(),
        dataset.num_actions(),
        Head::Softmax,
        &mut policy_rng,
    )?;
    let mut router_rng = seeds::rng(cfg.seed, Role::RouterInit, stream);
    let mut router =
        cfg.router_arch
            .build(dataset.feature_dim(), 1, Head::Logistic, &mut router_rng)?;
    let mut policy_adam = AdamState::new(&policy, cfg.adam());
    let mut router_adam = AdamState::new(&router, cfg.adam());
    let mut shuffle_rng = seeds::rng(cfg.seed, Role::Shuffle, stream);
    let obj = cfg.objective.with_baseline(lambda);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(log.records(), &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let eval = collab_objective(
                &policy,
                &router,
                dataset,
                batch,
                estimates,
                &obj,
                CollabMode::Joint,
            )?;
            check_finite(eval.value, "joint", epoch)?;
            let mut pg = eval.policy_grad.expect("joint policy gradient");
            pg.scale(-1.0);
            adam_step(&mut policy, &mut policy_adam, &pg)?;
            if cfg.policy_weight_decay > 0.0 {
                policy.apply_weight_decay(cfg.learning_rate * cfg.policy_weight_decay);
            }
            if let Some(mut rg) = eval.router_grad {
                rg.scale(-1.0);
                adam_step(&mut router, &mut router_adam, &rg)?;
                if cfg.router_weight_decay > 0.0 {
                    router.apply_weight_decay(cfg.learning_rate * cfg.router_weight_decay);
                }
            }
        }
        let full = collab_objective(
            &policy,
            &router,
            dataset,
            log.records(),
            estimates,
            &obj,
            CollabMode::Joint,
        )?
        .value;
        check_finite(full, "joint", epoch)?;
        history.push(full);
        if converged(&history, cfg.convergence_window, cfg.convergence_tol) {
            break;
        }
    }
    Ok((policy, router, history))
}

/// Joint collaboration system.
pub fn train_jc(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
) -> Result<TrainedSystem> {
    cfg.validate()?;
    let unbaselined = cfg.objective.with_baseline(0.0);
    let (lambda, (policy, router, history), _) = select_lambda(
        &cfg.lambda_grid,
        |lambda| train_joint_collab(dataset, log, estimates, cfg, lambda),
        |(policy, router, _)| {
            Ok(collab_objective(
                policy,
                router,
                dataset,
                log.records(),
                estimates,
                &unbaselined,
                CollabMode::RouterOnly,
            )?
            .value)
        },
    )?;
    Ok(TrainedSystem {
        kind: SystemKind::Jc,
        policy: Some(policy),
        router: Some(router),
        lambda: Some(lambda),
        history,
    })
}

fn train_joint_personalized(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    pool: &ExpertPool,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
    lambda: f64,
) -> Result<(DenseNet, DenseNet, Vec<f64>)> {
    let stream = lambda.to_bits();
    let mut policy_rng = seeds::rng(cfg.seed, Role::PolicyInit, stream);
    let mut policy = cfg.policy_arch.build(
        dataset.feature_dim(),
        dataset.num_actions(),
        Head::Softmax,
        &mut policy_rng,
    )?;
    let mut router_rng = seeds::rng(cfg.seed, Role::RouterInit, stream);
    let mut router = cfg.router_arch.build(
        dataset.feature_dim(),
        pool.len() + 1,
        Head::Softmax,
        &mut router_rng,
    )?;
    let mut policy_adam = AdamState::new(&policy, cfg.adam());
    let mut router_adam = AdamState::new(&router, cfg.adam());
    let mut shuffle_rng = seeds::rng(cfg.seed, Role::Shuffle, stream);
    let obj = cfg.objective.with_baseline(lambda);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled(log.records(), &mut shuffle_rng);
        for batch in order.chunks(cfg.batch_size) {
            let eval =
                personalized_objective(&policy, &router, dataset, batch, estimates, pool, &obj)?;
            check_finite(eval.value, "personalized", epoch)?;
            let mut pg = eval.policy_grad.expect("personalized policy gradient");
            pg.scale(-1.0);
            adam_step(&mut policy, &mut policy_adam, &pg)?;
            if cfg.policy_weight_decay > 0.0 {
                policy.apply_weight_decay(cfg.learning_rate * cfg.policy_weight_decay);
            }
            if let Some(mut rg) = eval.router_grad {
                rg.scale(-1.0);
                adam_step(&mut router, &mut router_adam, &rg)?;
                if cfg.router_weight_decay > 0.0 {
                    router.apply_weight_decay(cfg.learning_rate * cfg.router_weight_decay);
                }
            }
        }
        let full =
            personalized_objective(&policy, &router, dataset, log.records(), estimates, pool, &obj)?
                .value;
        check_finite(full, "personalized", epoch)?;
        history.push(full);
        if converged(&history, cfg.convergence_window, cfg.convergence_tol) {
            break;
        }
    }
    Ok((policy, router, history))
}

/// Joint personalized system: router over `{expert_0 .. expert_{K-1}, bot}`.
///
/// Requires the log's expert identities and, unless running on logged
/// propensities, estimates fitted with expert conditioning.
pub fn train_jcp(
    dataset: &MultiLabelDataset,
    log: &BanditLog,
    pool: &ExpertPool,
    estimates: &PropensityEstimates,
    cfg: &TrainConfig,
) -> Result<TrainedSystem> {
    cfg.validate()?;
    if cfg.objective.propensity_source == crate::objective::PropensitySource::Estimated
        && !estimates.has_conditioned_behavior()
    {
        return Err(Error::Training(
            "personalized training needs expert-conditioned behavior estimates".into(),
        ));
    }
    let unbaselined = cfg.objective.with_baseline(0.0);
    let (lambda, (policy, router, history), _) = select_lambda(
        &cfg.lambda_grid,
        |lambda| train_joint_personalized(dataset, log, pool, estimates, cfg, lambda),
        |(policy, router, _)| {
            Ok(personalized_objective(
                policy,
                router,
                dataset,
                log.records(),
                estimates,
                pool,
                &unbaselined,
            )?
            .value)
        },
    )?;
    Ok(TrainedSystem {
        kind: SystemKind::Jcp,
        policy: Some(policy),
        router: Some(router),
        lambda: Some(lambda),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic_multilabel;
    use crate::sim::{generate_log, ExpertPool};

    fn quick_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: 40,
            batch_size: 32,
            seed,
            lambda_grid: vec![0.0, 0.2],
            convergence_window: 0,
            objective: ObjectiveConfig {
                propensity_source: crate::objective::PropensitySource::Logged,
                ..ObjectiveConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    fn fixture() -> (MultiLabelDataset, crate::sim::BanditLog, ExpertPool, PropensityEstimates) {
        let ds = make_synthetic_multilabel(300, 3, 4, 0.1, 5).unwrap();
        let pool = ExpertPool::noise_pool(&[0.6, 0.8], 0.3).unwrap();
        let log = generate_log(&ds, &pool, 6).unwrap();
        let est = PropensityEstimates::uniform(4, 2);
        (ds, log, pool, est)
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let (ds, log, _, est) = fixture();
        let cfg = quick_cfg(3);
        let a = train_ao(&ds, &log, &est, &cfg).unwrap();
        let b = train_ao(&ds, &log, &est, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.lambda, b.lambda);
    }

    #[test]
    fn two_stage_phase_one_is_bitwise_ao() {
        let (ds, log, _, est) = fixture();
        let cfg = quick_cfg(4);
        let ao = train_ao(&ds, &log, &est, &cfg).unwrap();
        let ts = train_ts(&ds, &log, &est, &cfg).unwrap();
        assert_eq!(ao.policy, ts.policy);
        assert_eq!(ao.lambda, ts.lambda);
        assert!(ts.router.is_some());
    }

    #[test]
    fn jc_with_clamped_router_reduces_to_ao() {
        let (ds, log, _, est) = fixture();
        let cfg = quick_cfg(9);
        let mut clamped = cfg.clone();
        clamped.objective.force_algorithm_branch = true;
        let ao = train_ao(&ds, &log, &est, &cfg).unwrap();
        let jc = train_jc(&ds, &log, &est, &clamped).unwrap();
        assert_eq!(ao.policy, jc.policy);
        assert_eq!(ao.lambda, jc.lambda);
        assert_eq!(ao.history, jc.history);
    }

    #[test]
    fn jcp_trains_a_k_plus_one_router_and_reproduces() {
        let (ds, log, pool, est) = fixture();
        let cfg = quick_cfg(11);
        let a = train_jcp(&ds, &log, &pool, &est, &cfg).unwrap();
        let b = train_jcp(&ds, &log, &pool, &est, &cfg).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.router, b.router);
        let router = a.router.unwrap();
        assert_eq!(router.output_dim(), pool.len() + 1);
    }

    #[test]
    fn jcp_requires_conditioning_with_estimated_propensities() {
        let (ds, log, pool, est) = fixture();
        let mut cfg = quick_cfg(1);
        cfg.objective.propensity_source = crate::objective::PropensitySource::Estimated;
        // `est` is the uniform fixture without a conditioned model.
        assert!(matches!(
            train_jcp(&ds, &log, &pool, &est, &cfg),
            Err(Error::Training(_))
        ));
    }

    #[test]
    fn system_json_round_trips() {
        let (ds, log, _, est) = fixture();
        let cfg = quick_cfg(2);
        let system = train_ao(&ds, &log, &est, &cfg).unwrap();
        let json = system.to_json().unwrap();
        let back = TrainedSystem::from_json(&json).unwrap();
        assert_eq!(system, back);
    }

    #[test]
    fn convergence_check_compares_window_means() {
        let rising: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert!(!converged(&rising, 10, 1e-4));
        let flat = vec![1.0; 40];
        assert!(converged(&flat, 10, 1e-4));
        assert!(!converged(&flat, 0, 1e-4));
        assert!(!converged(&flat[..15], 10, 1e-4));
    }
}
