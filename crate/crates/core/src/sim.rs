//! Simulated human decision-makers and observational log generation.
//!
//! Two behavior models stand in for human experts: a proxy scorer fitted on a
//! fully-labeled subset (different subsets per expert, so experts disagree in
//! instance-dependent ways), and a uniform-noise decision-maker that picks a
//! correct label with probability `rho` and an incorrect action otherwise. A
//! third, fixed-boundary kind backs the 2-D compliance construction.
//!
//! Expert behavior is a single sampling path used both when generating the
//! historical log and when the deployed system queries an expert, so the
//! humans in the log are the humans at deployment.

use rand::Rng;

use crate::data::{Compliance2d, MultiLabelDataset};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, DenseNet, Gradient, Head};
use crate::seeds::{self, Role};
use crate::{Error, Result};

/// Default constant human decision cost.
pub const DEFAULT_COST: f64 = 0.3;

/// Default fraction of fully-labeled data a proxy expert is fitted on.
pub const DEFAULT_PROXY_FRACTION: f64 = 0.3;

/// One-vs-rest probabilistic scorer backing a proxy expert.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyModel {
    net: DenseNet,
}

/// Training knobs for [`fit_proxy_hbm_with`].
#[derive(Debug, Clone, Copy)]
pub struct ProxyConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            hidden_width: 32,
            epochs: 400,
            batch_size: 32,
            learning_rate: 0.01,
        }
    }
}

/// Fit a proxy behavior model on a seeded fully-labeled subset of `dataset`.
pub fn fit_proxy_hbm(dataset: &MultiLabelDataset, subset_fraction: f64, seed: u64) -> Result<ProxyModel> {
    fit_proxy_hbm_with(dataset, subset_fraction, seed, ProxyConfig::default())
}

pub fn fit_proxy_hbm_with(
    dataset: &MultiLabelDataset,
    subset_fraction: f64,
    seed: u64,
    config: ProxyConfig,
) -> Result<ProxyModel> {
    if !(subset_fraction > 0.0 && subset_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "subset fraction must be in (0, 1], got {subset_fraction}"
        )));
    }
    let mut rng = seeds::rng(seed, Role::ExpertFit, 0);
    let n = dataset.len();
    let take = ((subset_fraction * n as f64).round() as usize).min(n);
    if take < 10 {
        return Err(Error::Training(format!(
            "proxy expert needs at least 10 training instances, subset has {take}"
        )));
    }
    let mut indices: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    indices.shuffle(&mut rng);
    indices.truncate(take);

    let l = dataset.num_actions();
    let mut net = DenseNet::new(
        dataset.feature_dim(),
        &[(config.hidden_width, Activation::Relu)],
        l,
        Head::Logistic,
        &mut rng,
    )?;
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );

    // Binary cross-entropy against the one-vs-rest label targets.
    for _ in 0..config.epochs {
        indices.shuffle(&mut rng);
        for batch in indices.chunks(config.batch_size) {
            let mut grad = Gradient::zeros(&net);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = dataset.features_of(i);
                let trace = net.forward_trace(x)?;
                let p = trace.output();
                // Binary cross-entropy through the sigmoid: d loss / d z = p - y.
                let upstream: Vec<f64> = (0..l)
                    .map(|a| p[a] - if dataset.has_label(i, a) { 1.0 } else { 0.0 })
                    .collect();
                net.backward_from_logits_into(x, &trace, &upstream, scale, &mut grad)?;
            }
            adam_step(&mut net, &mut adam, &grad)?;
        }
    }
    Ok(ProxyModel { net })
}

impl ProxyModel {
    /// Normalized action distribution from the one-vs-rest scores.
    pub fn action_distribution(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scores = self.net.forward(x)?;
        let sum: f64 = scores.iter().sum();
        Ok(scores.into_iter().map(|s| s / sum).collect())
    }

    /// Expected decision accuracy when sampling from the normalized scores.
    pub fn decision_accuracy(&self, dataset: &MultiLabelDataset) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..dataset.len() {
            let dist = self.action_distribution(dataset.features_of(i))?;
            total += dataset
                .labels_of(i)
                .iter()
                .map(|&a| dist[a])
                .sum::<f64>();
        }
        Ok(total / dataset.len() as f64)
    }

    /// Most likely decision, used when comparing experts.
    pub fn argmax_action(&self, x: &[f64]) -> Result<usize> {
        let dist = self.action_distribution(x)?;
        Ok(argmax(&dist))
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// How an expert maps an instance to an action distribution.
#[derive(Debug, Clone)]
pub enum ExpertBehavior {
    /// Proxy scorer fitted on a fully-labeled subset; accuracy varies by
    /// instance.
    Proxy(ProxyModel),
    /// Correct with probability `rho` (uniform over the true labels),
    /// incorrect otherwise (uniform over the rest).
    UniformNoise { rho: f64 },
    /// The 2-D compliance construction's boundary expert; takes the
    /// boundary's action with probability `1 - flip_prob`.
    FixedBoundary { flip_prob: f64 },
}

/// A simulated decision-maker with a per-instance query cost.
#[derive(Debug, Clone)]
pub struct Expert {
    pub behavior: ExpertBehavior,
    cost: f64,
}

impl Expert {
    pub fn new(behavior: ExpertBehavior, cost: f64) -> Result<Self> {
        if cost < 0.0 {
            return Err(Error::InvalidArgument(format!("cost must be >= 0, got {cost}")));
        }
        if let ExpertBehavior::UniformNoise { rho } = behavior {
            if !(0.0..=1.0).contains(&rho) {
                return Err(Error::InvalidArgument(format!(
                    "rho must be in [0, 1], got {rho}"
                )));
            }
        }
        Ok(Expert { behavior, cost })
    }

    /// Constant cost today; the signature keeps instance-dependent costs
    /// pluggable.
    pub fn cost_at(&self, _x: &[f64]) -> f64 {
        self.cost
    }

    /// Closed-form action distribution given the instance and its true
    /// labels (the noise behavior peeks at the labels by definition).
    pub fn action_distribution(
        &self,
        x: &[f64],
        labels: &[usize],
        num_actions: usize,
    ) -> Result<Vec<f64>> {
        match &self.behavior {
            ExpertBehavior::Proxy(model) => model.action_distribution(x),
            ExpertBehavior::UniformNoise { rho } => {
                let k = labels.len();
                if k == 0 || k == num_actions {
                    // No incorrect (or no correct) actions to draw from.
                    return Ok(vec![1.0 / num_actions as f64; num_actions]);
                }
                let mut dist = vec![(1.0 - rho) / (num_actions - k) as f64; num_actions];
                for &a in labels {
                    dist[a] = rho / k as f64;
                }
                Ok(dist)
            }
            ExpertBehavior::FixedBoundary { flip_prob } => {
                let preferred = Compliance2d::expert_action(x);
                let mut dist =
                    vec![flip_prob / (num_actions - 1) as f64; num_actions];
                dist[preferred] = 1.0 - flip_prob;
                Ok(dist)
            }
        }
    }

    /// Sample one decision from the behavior distribution.
    pub fn decide<R: Rng>(
        &self,
        x: &[f64],
        labels: &[usize],
        num_actions: usize,
        rng: &mut R,
    ) -> Result<usize> {
        let dist = self.action_distribution(x, labels, num_actions)?;
        Ok(sample_categorical(&dist, rng))
    }
}

fn sample_categorical<R: Rng>(dist: &[f64], rng: &mut R) -> usize {
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if draw < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// K experts plus the historical assignment distribution over them.
#[derive(Debug, Clone)]
pub struct ExpertPool {
    experts: Vec<Expert>,
    assignment: Vec<f64>,
}

impl ExpertPool {
    /// Uniform random assignment, the default logging regime.
    pub fn new(experts: Vec<Expert>) -> Result<Self> {
        if experts.is_empty() {
            return Err(Error::InvalidArgument("pool must have at least one expert".into()));
        }
        let k = experts.len();
        Ok(ExpertPool {
            experts,
            assignment: vec![1.0 / k as f64; k],
        })
    }

    pub fn with_assignment(experts: Vec<Expert>, assignment: Vec<f64>) -> Result<Self> {
        if experts.len() != assignment.len() {
            return Err(Error::InvalidArgument(
                "assignment length must match pool size".into(),
            ));
        }
        let sum: f64 = assignment.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || assignment.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidArgument("assignment must be a distribution".into()));
        }
        let mut pool = ExpertPool::new(experts)?;
        pool.assignment = assignment;
        Ok(pool)
    }

    /// Uniform-noise pool, one expert per accuracy, all at the same cost.
    pub fn noise_pool(rhos: &[f64], cost: f64) -> Result<Self> {
        let experts = rhos
            .iter()
            .map(|&rho| Expert::new(ExpertBehavior::UniformNoise { rho }, cost))
            .collect::<Result<Vec<_>>>()?;
        ExpertPool::new(experts)
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn expert(&self, j: usize) -> &Expert {
        &self.experts[j]
    }

    pub fn assignment_prob(&self, j: usize) -> f64 {
        self.assignment[j]
    }

    pub fn sample_expert<R: Rng>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.assignment, rng)
    }

    /// One test-time query of expert `j` on a dataset instance: sampled
    /// decision, oracle reward, query cost.
    pub fn decide_at_test<R: Rng>(
        &self,
        j: usize,
        dataset: &MultiLabelDataset,
        instance: usize,
        rng: &mut R,
    ) -> Result<TestDecision> {
        if j >= self.experts.len() {
            return Err(Error::Data(format!("expert {j} out of range")));
        }
        let x = dataset.features_of(instance);
        let action = self.experts[j].decide(
            x,
            dataset.labels_of(instance),
            dataset.num_actions(),
            rng,
        )?;
        Ok(TestDecision {
            action,
            reward: dataset.reward(instance, action),
            cost: self.experts[j].cost_at(x),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestDecision {
    pub action: usize,
    pub reward: f64,
    pub cost: f64,
}

/// One logged decision: who decided, what they chose, what it earned, and the
/// behavior probability of the chosen action when known in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub instance: usize,
    pub expert: usize,
    pub action: usize,
    pub reward: f64,
    pub logged_propensity: Option<f64>,
}

/// Observational log over a dataset's instances.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditLog {
    records: Vec<LogRecord>,
    num_actions: usize,
    num_experts: usize,
}

impl BanditLog {
    pub fn new(records: Vec<LogRecord>, num_actions: usize, num_experts: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Data("log must contain at least one record".into()));
        }
        for r in &records {
            if r.action >= num_actions {
                return Err(Error::Data(format!("record action {} out of range", r.action)));
            }
            if r.expert >= num_experts {
                return Err(Error::Data(format!("record expert {} out of range", r.expert)));
            }
            if !(0.0..=1.0).contains(&r.reward) {
                return Err(Error::Data(format!("record reward {} outside [0, 1]", r.reward)));
            }
            if let Some(p) = r.logged_propensity {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Data(format!("logged propensity {p} outside (0, 1]")));
                }
            }
        }
        Ok(BanditLog {
            records,
            num_actions,
            num_experts,
        })
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_experts(&self) -> usize {
        self.num_experts
    }

    pub fn mean_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum::<f64>() / self.records.len() as f64
    }

    /// CSV with columns `instance_id,expert_id,action,reward,propensity`
    /// (propensity blank when unknown).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "instance_id,expert_id,action,reward,propensity")?;
        for r in &self.records {
            match r.logged_propensity {
                Some(p) => writeln!(w, "{},{},{},{},{}", r.instance, r.expert, r.action, r.reward, p)?,
                None => writeln!(w, "{},{},{},{},", r.instance, r.expert, r.action, r.reward)?,
            }
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::BufRead>(reader: R, num_actions: usize, num_experts: usize) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 5 columns, got {}", parts.len()),
                });
            }
            let field = |idx: usize, what: &str| -> Result<f64> {
                parts[idx].parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("invalid {what} {:?}", parts[idx]),
                })
            };
            records.push(LogRecord {
                instance: field(0, "instance")? as usize,
                expert: field(1, "expert")? as usize,
                action: field(2, "action")? as usize,
                reward: field(3, "reward")?,
                logged_propensity: if parts[4].is_empty() {
                    None
                } else {
                    Some(field(4, "propensity")?)
                },
            });
        }
        BanditLog::new(records, num_actions, num_experts)
    }
}

/// Generate the observational log: for each unflagged instance, draw an
/// expert from the assignment distribution, draw an action from that expert's
/// behavior, record the oracle reward and the behavior propensity.
pub fn generate_log(dataset: &MultiLabelDataset, pool: &ExpertPool, seed: u64) -> Result<BanditLog> {
    let mut rng = seeds::rng(seed, Role::Logging, 0);
    let l = dataset.num_actions();
    let mut records = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        if dataset.is_flagged_empty(i) {
            continue;
        }
        let h = pool.sample_expert(&mut rng);
        let x = dataset.features_of(i);
        let labels = dataset.labels_of(i);
        let dist = pool.expert(h).action_distribution(x, labels, l)?;
        let a = sample_categorical(&dist, &mut rng);
        records.push(LogRecord {
            instance: i,
            expert: h,
            action: a,
            reward: dataset.reward(i, a),
            logged_propensity: Some(dist[a]),
        });
    }
    BanditLog::new(records, l, pool.len())
}
