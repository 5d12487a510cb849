//! Training objectives over logged decisions, with analytic gradients.
//!
//! Three estimators of deployment reward, all maximized:
//!
//! - `ips_objective`: truncated importance-weighted reward with a constant
//!   baseline translation,
//!   `(1/N) sum_i (r_i - lambda) * min(pi(a_i|x_i) / pi0_i, M)`.
//! - `collab_objective`: the human/algorithm team value. The human branch is
//!   the logged reward minus the query cost, taken unweighted: the people who
//!   produced the log are the people who will be queried, so their branch is
//!   already on-policy. The algorithm branch is the truncated weighted term,
//!   gated by the routing probability:
//!   `(1/N) sum_i [ p_i (r_i - C(x_i)) + (1 - p_i) w_i (r_i - lambda) ]`.
//! - `personalized_objective`: routing over K experts plus the algorithm,
//!   reweighting the human branch by the historical assignment and the
//!   algorithm branch by assignment times per-expert behavior:
//!   `(1/N) sum_i [ (r_i - C_{h_i}(x_i)) d(h_i|x_i) / d0_i
//!                  + (r_i - lambda) min(d(bot|x_i) pi(a_i|x_i) / (d0_i pi0_i), M) ]`.
//!
//! Truncation caps the whole ratio product; a capped record contributes its
//! capped value but no gradient through the weight. The baseline applies to
//! the algorithm branch only — the human branch is a plain average and needs
//! no control variate.

use crate::data::MultiLabelDataset;
use crate::nn::{DenseNet, Gradient};
use crate::propensity::PropensityEstimates;
use crate::sim::{ExpertPool, LogRecord};
use crate::{Error, Result};

/// Default truncation cap for importance weights.
pub const DEFAULT_TRUNCATION: f64 = 10.0;

/// Baseline grid searched during training.
pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];

/// Which denominator the importance weights use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensitySource {
    /// The behavior probability recorded in the log (exact for simulated
    /// decision-makers).
    Logged,
    /// The fitted classifier from [`crate::propensity`].
    Estimated,
}

/// Objective configuration shared by the three estimators.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ObjectiveConfig {
    /// Truncation cap `M` on importance weights.
    pub truncation: f64,
    /// Baseline `lambda` subtracted from rewards in the algorithm branch.
    pub baseline: f64,
    /// Constant human query cost for the non-personalized team objective.
    pub human_cost: f64,
    pub propensity_source: PropensitySource,
    /// Diagnostic switch: clamp the router to the algorithm branch
    /// (`p = 0`, `d(bot) = 1`), collapsing the team objectives onto IPS.
    pub force_algorithm_branch: bool,
    /// Sensitivity switch for the personalized objective: drop the
    /// per-expert behavior factor from the algorithm-branch denominator.
    pub drop_behavior_denominator: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            truncation: DEFAULT_TRUNCATION,
            baseline: 0.0,
            human_cost: crate::sim::DEFAULT_COST,
            propensity_source: PropensitySource::Estimated,
            force_algorithm_branch: false,
            drop_behavior_denominator: false,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "truncation cap must be >= 1, got {}",
                self.truncation
            )));
        }
        if !(0.0..=1.0).contains(&self.baseline) {
            return Err(Error::InvalidArgument(format!(
                "baseline must be in [0, 1], got {}",
                self.baseline
            )));
        }
        Ok(())
    }

    pub fn with_baseline(mut self, baseline: f64) -> Self {
        self.baseline = baseline;
        self
    }
}

/// Value plus whichever gradients the evaluation mode produces.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub value: f64,
    pub policy_grad: Option<Gradient>,
    pub router_grad: Option<Gradient>,
}

/// Per-record diagnostics: the truncated weight, the routing probability
/// (when a router participates) and the record's contribution to the value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleTerms {
    pub weight: f64,
    pub routing_prob: Option<f64>,
    pub contribution: f64,
}

/// Which gradients the collaboration objective returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollabMode {
    /// Two-stage phase 2: the policy is frozen, only the router trains.
    RouterOnly,
    /// Joint training of policy and router.
    Joint,
}

fn behavior_denominator(
    record: &LogRecord,
    x: &[f64],
    estimates: &PropensityEstimates,
    cfg: &ObjectiveConfig,
    expert: Option<usize>,
) -> Result<f64> {
    let p0 = match cfg.propensity_source {
        PropensitySource::Logged => record.logged_propensity.ok_or_else(|| {
            Error::Data(format!(
                "record for instance {} has no logged propensity",
                record.instance
            ))
        })?,
        PropensitySource::Estimated => estimates.behavior_prob(x, record.action, expert)?,
    };
    if !(p0 > 0.0) || !p0.is_finite() {
        return Err(Error::Numeric(format!(
            "behavior propensity {p0} for instance {} is not positive",
            record.instance
        )));
    }
    Ok(p0)
}

fn check_records(records: &[LogRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("objective needs at least one record".into()));
    }
    Ok(())
}

/// Truncated IPS objective value and policy gradient.
pub fn ips_objective(
    policy: &DenseNet,
    dataset: &MultiLabelDataset,
    records: &[LogRecord],
    estimates: &PropensityEstimates,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveEval> {
    cfg.validate()?;
    check_records(records)?;
    let n = records.len() as f64;
    let scale = 1.0 / n;
    let mut value = 0.0;
    let mut grad = Gradient::zeros(policy);
    let mut upstream = vec![0.0; policy.output_dim()];
    for record in records {
        let x = dataset.features_of(record.instance);
        let trace = policy.forward_trace(x)?;
        let pa = trace.output()[record.action];
        let p0 = behavior_denominator(record, x, estimates, cfg, None)?;
        let ratio = pa / p0;
        let shifted = record.reward - cfg.baseline;
        if ratio < cfg.truncation {
            value += shifted * ratio;
            upstream.fill(0.0);
            upstream[record.action] = shifted / p0;
            policy.backward_into(x, &trace, &upstream, scale, &mut grad)?;
        } else {
            value += shifted * cfg.truncation;
        }
    }
    Ok(ObjectiveEval {
        value: value / n,
        policy_grad: Some(grad),
        router_grad: None,
    })
}

/// Value-only truncated IPS estimate (used for baseline selection).
pub fn ips_value(
    policy: &DenseNet,
    dataset: &MultiLabelDataset,
    records: &[LogRecord],
    estimates: &PropensityEstimates,
    cfg: &ObjectiveConfig,
) -> Result<f64> {
    Ok(ips_objective(policy, dataset, records, estimates, cfg)?.value)
}

/// Per-record weights and contributions for the IPS objective.
pub fn ips_terms(
    policy: &DenseNet,
    dataset: &MultiLabelDataset,
    records: &[LogRecord],
    estimates: &PropensityEstimates,
    cfg: &ObjectiveConfig,
) -> Result<Vec<SampleTerms>> {
    cfg.validate()?;
    check_records(records)?;
    let mut terms = Vec::with_capacity(records.len());
    for record in records {
        let x = dataset.features_of(record.instance);
        let pa = policy.forward(x)?[record.action];
        let p0 = behavior_denominator(record, x, estimates, cfg, None)?;
        let weight = (pa / p0).min(cfg.truncation);
        terms.push(SampleTerms {
            weight,
            routing_prob: None,
            contribution: (record.reward - cfg.baseline) * weight,
        });
    }
    Ok(terms)
}

/// Human/algorithm collaboration objective (Eq. 4 behavior).
///
/// `RouterOnly` returns only the router gradient; `Joint` returns both.
pub fn collab_objective(
    policy: &DenseNet,
    router: &DenseNet,
    dataset: &MultiLabelDataset,
    records: &[LogRecord],
    estimates: &PropensityEstimates,
    cfg: &ObjectiveConfig,
    mode: CollabMode,
) -> Result<ObjectiveEval> {
    cfg.validate()?;
    check_records(records)?;
    if router.output_dim() != 1 {
        return Err(Error::InputShape(
            "collaboration router must have a single (logistic) output".into(),
        ));
    }
    let n = records.len() as f64;
    let scale = 1.0 / n;
    let mut value = 0.0;
    let mut policy_grad = Gradient::zeros(policy);
    let mut router_grad = Gradient::zeros(router);
    let mut upstream = vec![0.0; policy.output_dim()];
    for record in records {
        let x = dataset.features_of(record.instance);
        let trace = policy.forward_trace(x)?;
        let pa = trace.output()[record.action];
        let p0 = behavior_denominator(record, x, estimates, cfg, None)?;
        let ratio = pa / p0;
        let capped = ratio >= cfg.truncation;
        let weight = if capped { cfg.truncation } else { ratio };
        let shifted = record.reward - cfg.baseline;

        let (p_human, router_trace) = if cfg.force_algorithm_branch {
            (0.0, None)
        } else {
            let rt = router.forward_trace(x)?;
            (rt.output()[0], Some(rt))
        };

        value += p_human * (record.reward - cfg.human_cost)
            + (1.0 - p_human) * weight * shifted;

        if let Some(rt) = router_trace {
            // The weight is a constant with respect to the router.
            let du = (record.reward - cfg.human_cost) - weight * shifted;
            router.backward_into(x, &rt, &[du], scale, &mut router_grad)?;
        }
        if mode == CollabMode::Joint && !capped {
            upstream.fill(0.0);
            upstream[record.action] = (1.0 - p_human) * shifted / p0;
            policy.backward_into(x, &trace, &upstream, scale, &mut policy_grad)?;
        }
    }
    Ok(ObjectiveEval {
        value: value / n,
        policy_grad: match mode {
            CollabMode::Joint => Some(policy_grad),
            CollabMode::RouterOnly => None,
        },
        router_grad: if cfg.force_algorithm_branch {
            None
        } else {
            Some(router_grad)
        },
    })
}

/// Per-record terms for the collaboration objective.
pub fn collab_terms(
    policy: &DenseNet,
    router: &DenseNet,
    dataset: &MultiLabelDataset,
    records: &[LogRecord],
    estimates: &PropensityEstimates,
    cfg: &ObjectiveConfig,
) -> Result<Vec<SampleTerms>> {
    cfg.validate()?;
    check_records(records)?;
    let mut terms = Vec::with_capacity(records.len());
    for record in records {
        let x = dataset.features_of(record.instance);
        let pa = policy.forward(x)?[record.action];
        let p0 = behavior_denominator(record, x, estimates, cfg, None)?;
        let weight = (pa / p0).min(cfg.truncation);
        let p_human = if cfg.force_algorithm_branch {
            0.0
        } else {
            router.forward(x)?[0]
        };
        terms.push(SampleTerms {
            weight,
            routing_prob: Some(p_human),
            contribution: p_human * (record.reward - cfg.human_cost)
                + (1.0 - p_human) * weight * (record.reward - cfg.baseline),
        });
    }
    Ok(terms)
}

/// Personalized collaboration objective (Eq. 5 behavior): the router chooses
/// among the K logging experts and the algorithm (`bot`, the router's last
/// output). Gradients are joint over policy and router.
pub fn personalized_objective(
    policy: &DenseNet,
    router: &DenseNet,
    dataset: &MultiLabelDataset,
    records: &[LogRecord],
    estimates: &PropensityEstimates,
    pool: &ExpertPool,
    cfg: &ObjectiveConfig,
) -> Result<ObjectiveEval> {
    cfg.validate()?;
    check_records(records)?;
    let k = pool.len();
    if router.output_dim() != k + 1 {
        return Err(Error::InputShape(format!(
            "personalized router must output {} probabilities (K experts + algorithm), has {}",
            k + 1,
            router.output_dim()
        )));
    }
    let bot = k;
    let n = records.len() as f64;
    let scale = 1.0 / n;
    let mut value = 0.0;
    let mut policy_grad = Gradient::zeros(policy);
    let mut router_grad = Gradient::zeros(router);
    let mut policy_upstream = vec![0.0; policy.output_dim()];
    let mut router_upstream = vec![0.0; k + 1];
    for record in records {
        let h = record.expert;
        if h >= k {
            return Err(Error::Data(format!(
                "record references expert {h}, pool has {k}"
            )));
        }
        let x = dataset.features_of(record.instance);
        let policy_trace = policy.forward_trace(x)?;
        let pa = policy_trace.output()[record.action];
        let d0 = estimates.assignment_prob(x, h)?;
        if !(d0 > 0.0) {
            return Err(Error::Numeric(format!(
                "assignment probability {d0} for expert {h} is not positive"
            )));
        }
        let pi0 = if cfg.drop_behavior_denominator {
            1.0
        } else {
            behavior_denominator(record, x, estimates, cfg, Some(h))?
        };

        let (d_h, d_bot, router_trace) = if cfg.force_algorithm_branch {
            (0.0, 1.0, None)
        } else {
            let rt = router.forward_trace(x)?;
            (rt.output()[h], rt.output()[bot], Some(rt))
        };

        let cost_h = pool.expert(h).cost_at(x);
        let shifted = record.reward - cfg.baseline;
        let ratio = d_bot * pa / (d0 * pi0);
        let capped = ratio >= cfg.truncation;
        let weight = if capped { cfg.truncation } else { ratio };

        value += (record.reward - cost_h) * d_h / d0 + shifted * weight;

        if let Some(rt) = router_trace {
            router_upstream.fill(0.0);
            router_upstream[h] = (record.reward - cost_h) / d0;
            if !capped {
                router_upstream[bot] = shifted * pa / (d0 * pi0);
            }
            router.backward_into(x, &rt, &router_upstream, scale, &mut router_grad)?;
        }
        if !capped {
            policy_upstream.fill(0.0);
            policy_upstream[record.action] = shifted * d_bot / (d0 * pi0);
            policy.backward_into(x, &policy_trace, &policy_upstream, scale, &mut policy_grad)?;
        }
    }
    Ok(ObjectiveEval {
        value: value / n,
        policy_grad: Some(policy_grad),
        router_grad: if cfg.force_algorithm_branch {
            None
        } else {
            Some(router_grad)
        },
    })
}

/// Train one artifact per grid value, keep the one whose *un-baselined*
/// estimate is highest; near-equal estimates resolve to the smaller value,
/// so a flat grid returns its first entry.
pub fn select_lambda<T>(
    grid: &[f64],
    mut train: impl FnMut(f64) -> Result<T>,
    mut estimate: impl FnMut(&T) -> Result<f64>,
) -> Result<(f64, T, Vec<(f64, f64)>)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("baseline grid must be nonempty".into()));
    }
    let mut sorted: Vec<f64> = grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    let mut best: Option<(f64, T, f64)> = None;
    let mut trace = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let artifact = train(lambda)?;
        let est = estimate(&artifact)?;
        trace.push((lambda, est));
        let replace = match &best {
            None => true,
            Some((_, _, best_est)) => est > best_est + 1e-9 * best_est.abs().max(1.0),
        };
        if replace {
            best = Some((lambda, artifact, est));
        }
    }
    let (lambda, artifact, _) = best.expect("grid nonempty");
    Ok((lambda, artifact, trace))
}
