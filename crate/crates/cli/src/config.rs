//! Experiment configuration: a single TOML tree with dotted-path overrides.
//!
//! Every field has a default, and a run writes its fully resolved
//! configuration next to its results so defaults are always visible.

use handoff_core::nn::Activation;
use handoff_core::objective::{ObjectiveConfig, PropensitySource};
use handoff_core::propensity::{AssignmentMode, BehaviorConditioning, PropensityTrainConfig};
use handoff_core::train::{NetArch, SystemKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub experts: ExpertConfig,
    pub split: SplitConfig,
    pub propensity: PropensityConfig,
    pub train: TrainSection,
    pub run: RunConfig,
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetConfig::default(),
            experts: ExpertConfig::default(),
            split: SplitConfig::default(),
            propensity: PropensityConfig::default(),
            train: TrainSection::default(),
            run: RunConfig::default(),
            sweep: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// `synthetic`, `compliance` or `file`.
    pub kind: String,
    pub n: usize,
    pub d: usize,
    pub l: usize,
    pub label_noise: f64,
    /// Snapshot or LIBSVM multilabel path for `kind = "file"`.
    pub path: Option<String>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: "synthetic".into(),
            n: 4000,
            d: 4,
            l: 6,
            label_noise: 0.2,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpertConfig {
    /// `noise`, `proxy` or `boundary`.
    pub kind: String,
    /// Per-expert decision accuracies for the noise behavior model.
    pub rhos: Vec<f64>,
    /// Pool size for the proxy behavior model.
    pub count: usize,
    pub subset_fraction: f64,
    /// Flip probability for the compliance boundary expert.
    pub flip_prob: f64,
    /// Uniform query cost, overridden per expert by `costs` when set.
    pub cost: f64,
    pub costs: Option<Vec<f64>>,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        ExpertConfig {
            kind: "noise".into(),
            rhos: vec![0.6, 0.7, 0.8],
            count: 3,
            subset_fraction: handoff_core::sim::DEFAULT_PROXY_FRACTION,
            flip_prob: 0.15,
            cost: handoff_core::sim::DEFAULT_COST,
            costs: None,
        }
    }
}

impl ExpertConfig {
    pub fn pool_size(&self) -> usize {
        match self.kind.as_str() {
            "noise" => self.rhos.len(),
            "proxy" => self.count,
            _ => 1,
        }
    }

    pub fn cost_of(&self, expert: usize) -> f64 {
        match &self.costs {
            Some(costs) => costs[expert],
            None => self.cost,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub test_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_fraction: 0.3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropensityConfig {
    /// `estimated` or `logged`.
    pub source: PropensitySource,
    pub conditioning: BehaviorConditioning,
    pub assignment: AssignmentMode,
    pub floor: f64,
    pub fit: PropensityTrainConfig,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            source: PropensitySource::Estimated,
            conditioning: BehaviorConditioning::ExpertOneHot,
            assignment: AssignmentMode::KnownUniform,
            floor: handoff_core::propensity::DEFAULT_FLOOR,
            fit: PropensityTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_grid: Vec<f64>,
    pub truncation: f64,
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub router_hidden_layers: usize,
    pub router_hidden_width: usize,
    pub router_activation: Activation,
    pub policy_weight_decay: f64,
    pub router_weight_decay: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            lambda_grid: t.lambda_grid,
            truncation: t.objective.truncation,
            convergence_window: t.convergence_window,
            convergence_tol: t.convergence_tol,
            hidden_layers: t.policy_arch.hidden_layers,
            hidden_width: t.policy_arch.hidden_width,
            activation: t.policy_arch.activation,
            router_hidden_layers: t.router_arch.hidden_layers,
            router_hidden_width: t.router_arch.hidden_width,
            router_activation: t.router_arch.activation,
            policy_weight_decay: t.policy_weight_decay,
            router_weight_decay: t.router_weight_decay,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub systems: Vec<SystemKind>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub output_dir: String,
    pub standardize: bool,
    pub save_systems: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            systems: vec![
                SystemKind::Human,
                SystemKind::Ao,
                SystemKind::Ts,
                SystemKind::Jc,
                SystemKind::Jcp,
            ],
            repetitions: 10,
            master_seed: 7,
            output_dir: "out".into(),
            standardize: true,
            save_systems: false,
        }
    }
}

/// Optional sweep: one full experiment per entry, reported side by side.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Human cost sweep.
    pub costs: Option<Vec<f64>>,
    /// Policy capacity sweep.
    pub capacity: Option<Vec<CapacitySpec>>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            costs: None,
            capacity: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySpec {
    pub hidden_width: usize,
    #[serde(default = "default_capacity_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_capacity_activation")]
    pub activation: Activation,
}

fn default_capacity_layers() -> usize {
    2
}

fn default_capacity_activation() -> Activation {
    Activation::Identity
}

impl CapacitySpec {
    pub fn label(&self) -> String {
        let act = match self.activation {
            Activation::Identity => "",
            Activation::Relu => "+relu",
        };
        format!("h{}{act}", self.hidden_width)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.dataset.kind.as_str() {
            "synthetic" | "compliance" => {}
            "file" => {
                if self.dataset.path.is_none() {
                    anyhow::bail!("dataset.kind = \"file\" requires dataset.path");
                }
            }
            other => anyhow::bail!("dataset.kind: unknown kind {other:?}"),
        }
        match self.experts.kind.as_str() {
            "noise" => {
                if self.experts.rhos.is_empty() {
                    anyhow::bail!("experts.rhos: must name at least one expert accuracy");
                }
                if self.experts.rhos.iter().any(|r| !(0.0..=1.0).contains(r)) {
                    anyhow::bail!("experts.rhos: accuracies must be in [0, 1]");
                }
            }
            "proxy" => {
                if self.experts.count == 0 {
                    anyhow::bail!("experts.count: must be at least 1");
                }
            }
            "boundary" => {
                if self.dataset.kind != "compliance" {
                    anyhow::bail!("experts.kind = \"boundary\" requires dataset.kind = \"compliance\"");
                }
            }
            other => anyhow::bail!("experts.kind: unknown kind {other:?}"),
        }
        if let Some(costs) = &self.experts.costs {
            if costs.len() != self.experts.pool_size() {
                anyhow::bail!("experts.costs: length must match the pool size");
            }
        }
        if !(self.split.test_fraction > 0.0 && self.split.test_fraction < 1.0) {
            anyhow::bail!("split.test_fraction: must be in (0, 1)");
        }
        if self.run.repetitions == 0 {
            anyhow::bail!("run.repetitions: must be at least 1");
        }
        if self.run.systems.is_empty() {
            anyhow::bail!("run.systems: must name at least one system");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.costs.is_some() && sweep.capacity.is_some() {
                anyhow::bail!("sweep: choose either costs or capacity, not both");
            }
        }
        Ok(())
    }

    /// Training configuration for one repetition seed, with the policy
    /// architecture optionally replaced by a capacity-sweep entry.
    pub fn train_config(&self, seed: u64, cost: f64, capacity: Option<&CapacitySpec>) -> TrainConfig {
        let t = &self.train;
        let policy_arch = match capacity {
            Some(spec) => NetArch {
                hidden_layers: spec.hidden_layers,
                hidden_width: spec.hidden_width,
                activation: spec.activation,
            },
            None => NetArch {
                hidden_layers: t.hidden_layers,
                hidden_width: t.hidden_width,
                activation: t.activation,
            },
        };
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            seed,
            lambda_grid: t.lambda_grid.clone(),
            convergence_window: t.convergence_window,
            convergence_tol: t.convergence_tol,
            policy_arch,
            router_arch: NetArch {
                hidden_layers: t.router_hidden_layers,
                hidden_width: t.router_hidden_width,
                activation: t.router_activation,
            },
            policy_weight_decay: t.policy_weight_decay,
            router_weight_decay: t.router_weight_decay,
            objective: ObjectiveConfig {
                truncation: t.truncation,
                baseline: 0.0,
                human_cost: cost,
                propensity_source: self.propensity.source,
                force_algorithm_branch: false,
                drop_behavior_denominator: false,
            },
        }
    }
}

/// Parse a config file's text, applying `key.path=value` overrides.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| anyhow::anyhow!("config parse error: {e}"))?;
    for entry in overrides {
        let (path, raw) = entry
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("override {entry:?} is not key.path=value"))?;
        apply_override(&mut value, path.trim(), raw.trim())?;
    }
    let config: ExperimentConfig = value
        .try_into()
        .map_err(|e| anyhow::anyhow!("config schema error: {e}"))?;
    config.validate()?;
    Ok(config)
}

fn apply_override(root: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    // Parse the right-hand side as a TOML value; fall back to a string.
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("key v present"),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut cursor = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = cursor
            .as_table_mut()
            .ok_or_else(|| anyhow::anyhow!("override path {path:?}: {part:?} is not a table"))?;
        if i == parts.len() - 1 {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    Ok(())
}

/// Serialize the fully resolved configuration.
pub fn resolved_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| anyhow::anyhow!("config serialize error: {e}"))
}
