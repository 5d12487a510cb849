//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured numbers (run with `--nocapture` to see them).

use std::fs;

use handoff_core::data::{
    make_compliance_2d, make_synthetic_multilabel, parse_libsvm_multilabel, split,
    write_libsvm_multilabel, Compliance2d, MultiLabelDataset, SplitSpec, Standardizer,
};
use handoff_core::eval::{evaluate, expected_policy_value, summarize, DeploymentResult};
use handoff_core::nn::{finite_diff_check, Activation, DenseNet, Head};
use handoff_core::objective::{
    collab_objective, ips_objective, ips_terms, ips_value, personalized_objective, CollabMode,
    ObjectiveConfig, PropensitySource,
};
use handoff_core::propensity::{
    fit_estimates, AssignmentMode, BehaviorConditioning, PropensityTrainConfig,
};
use handoff_core::seeds::{self, Role};
use handoff_core::sim::{generate_log, BanditLog, Expert, ExpertBehavior, ExpertPool, LogRecord};
use handoff_core::train::{
    train_ao, train_jc, train_jcp, train_ts, NetArch, SystemKind, TrainConfig, TrainedSystem,
};
use handoff_core::PropensityEstimates;
use rand::Rng;

fn small_fixture(seed: u64) -> (MultiLabelDataset, BanditLog, ExpertPool) {
    let ds = make_synthetic_multilabel(12, 2, 3, 0.2, seed).unwrap();
    let pool = ExpertPool::noise_pool(&[0.6, 0.8], 0.3).unwrap();
    let log = generate_log(&ds, &pool, seed ^ 0x5a5a).unwrap();
    (ds, log, pool)
}

/// Criterion 1: analytic gradients of all three objectives match central
/// finite differences within 1e-4 relative error on 20 random instances.
#[test]
fn c01_gradient_correctness() {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let (ds, log, pool) = small_fixture(seed);
        let mut rng = seeds::rng(seed, Role::PolicyInit, 90);
        let policy =
            DenseNet::new(2, &[(4, Activation::Relu)], 3, Head::Softmax, &mut rng).unwrap();
        let router = DenseNet::new(2, &[], 1, Head::Logistic, &mut rng).unwrap();
        let prouter = DenseNet::new(2, &[], 3, Head::Softmax, &mut rng).unwrap();
        let est = PropensityEstimates::uniform(3, 2);
        let cfg = ObjectiveConfig {
            propensity_source: PropensitySource::Logged,
            baseline: 0.2,
            ..ObjectiveConfig::default()
        };

        worst = worst.max(finite_diff_check(&policy, |net| {
            let e = ips_objective(net, &ds, log.records(), &est, &cfg).unwrap();
            (e.value, e.policy_grad.unwrap())
        }));
        worst = worst.max(finite_diff_check(&policy, |net| {
            let e = collab_objective(net, &router, &ds, log.records(), &est, &cfg, CollabMode::Joint)
                .unwrap();
            (e.value, e.policy_grad.unwrap())
        }));
        for mode in [CollabMode::RouterOnly, CollabMode::Joint] {
            worst = worst.max(finite_diff_check(&router, |net| {
                let e = collab_objective(&policy, net, &ds, log.records(), &est, &cfg, mode)
                    .unwrap();
                (e.value, e.router_grad.unwrap())
            }));
        }
        worst = worst.max(finite_diff_check(&policy, |net| {
            let e = personalized_objective(net, &prouter, &ds, log.records(), &est, &pool, &cfg)
                .unwrap();
            (e.value, e.policy_grad.unwrap())
        }));
        worst = worst.max(finite_diff_check(&prouter, |net| {
            let e = personalized_objective(&policy, net, &ds, log.records(), &est, &pool, &cfg)
                .unwrap();
            (e.value, e.router_grad.unwrap())
        }));
    }
    assert!(worst < 1e-4, "worst relative gradient error {worst}");
    println!("ACCEPTANCE 1 gradient-correctness: PASS (worst relative error {worst:.2e})");
}

/// Criterion 2: on an enumerable problem with known logging propensities,
/// the mean untruncated IPS estimate over 2000 resampled logs of size 200
/// matches the exact policy value within 2%.
#[test]
fn c02_ips_unbiasedness() {
    let mut rng = seeds::rng(77, Role::DataGen, 60);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for c in 0..8 {
        features.push((0..3).map(|_| rng.random_range(-2.0..2.0)).collect());
        labels.push(vec![c % 4]);
    }
    let ds = MultiLabelDataset::new(features, labels, 4).unwrap();
    let expert = Expert::new(ExpertBehavior::UniformNoise { rho: 0.6 }, 0.0).unwrap();
    let mut policy_rng = seeds::rng(78, Role::PolicyInit, 0);
    let policy = DenseNet::new(
        3,
        &[(4, Activation::Identity)],
        4,
        Head::Softmax,
        &mut policy_rng,
    )
    .unwrap();
    // Brute-force oracle: enumerate contexts and actions.
    let exact = expected_policy_value(&policy, &ds).unwrap();

    let est = PropensityEstimates::uniform(4, 1);
    let cfg = ObjectiveConfig {
        truncation: f64::INFINITY,
        baseline: 0.0,
        propensity_source: PropensitySource::Logged,
        ..ObjectiveConfig::default()
    };
    let logs = 2000u64;
    let mut total = 0.0;
    for rep in 0..logs {
        let mut log_rng = seeds::rng(79, Role::Logging, rep);
        let records: Vec<LogRecord> = (0..200)
            .map(|_| {
                let i = log_rng.random_range(0..ds.len());
                let dist = expert
                    .action_distribution(ds.features_of(i), ds.labels_of(i), 4)
                    .unwrap();
                let draw: f64 = log_rng.random();
                let mut acc = 0.0;
                let mut action = 3;
                for (a, p) in dist.iter().enumerate() {
                    acc += p;
                    if draw < acc {
                        action = a;
                        break;
                    }
                }
                LogRecord {
                    instance: i,
                    expert: 0,
                    action,
                    reward: ds.reward(i, action),
                    logged_propensity: Some(dist[action]),
                }
            })
            .collect();
        total += ips_value(&policy, &ds, &records, &est, &cfg).unwrap();
    }
    let mean = total / logs as f64;
    let rel = (mean - exact).abs() / exact;
    assert!(rel < 0.02, "relative error {rel} (exact {exact}, mean {mean})");
    println!(
        "ACCEPTANCE 2 ips-unbiasedness: PASS (exact {exact:.4}, mean over {logs} logs {mean:.4}, relative error {rel:.4})"
    );
}

/// Criterion 3: branch-collapse identities hold to 1e-12: the collaboration
/// objective with the router clamped to the algorithm equals IPS, and the
/// personalized objective with one expert and a clamped router equals IPS.
#[test]
fn c03_branch_collapse() {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let ds = make_synthetic_multilabel(150, 2, 3, 0.1, seed).unwrap();
        let pool = ExpertPool::noise_pool(&[0.75], 0.3).unwrap();
        let log = generate_log(&ds, &pool, seed ^ 0x77).unwrap();
        let mut rng = seeds::rng(seed, Role::PolicyInit, 91);
        let policy = DenseNet::new(
            2,
            &[(4, Activation::Identity)],
            3,
            Head::Softmax,
            &mut rng,
        )
        .unwrap();
        let router = DenseNet::zeros(2, &[], 1, Head::Logistic).unwrap();
        let prouter = DenseNet::zeros(2, &[], 2, Head::Softmax).unwrap();
        let est = PropensityEstimates::uniform(3, 1);
        let mut cfg = ObjectiveConfig {
            propensity_source: PropensitySource::Logged,
            baseline: 0.2,
            ..ObjectiveConfig::default()
        };
        cfg.force_algorithm_branch = true;

        let ips = ips_objective(&policy, &ds, log.records(), &est, &cfg).unwrap();
        let collab = collab_objective(
            &policy, &router, &ds, log.records(), &est, &cfg, CollabMode::Joint,
        )
        .unwrap();
        let pers = personalized_objective(
            &policy, &prouter, &ds, log.records(), &est, &pool, &cfg,
        )
        .unwrap();
        worst = worst.max((collab.value - ips.value).abs());
        worst = worst.max((pers.value - ips.value).abs());
        let ig = ips.policy_grad.unwrap();
        for (a, b) in collab.policy_grad.unwrap().as_slice().iter().zip(ig.as_slice()) {
            worst = worst.max((a - b).abs());
        }
        for (a, b) in pers.policy_grad.unwrap().as_slice().iter().zip(ig.as_slice()) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst < 1e-12, "worst branch-collapse deviation {worst}");
    println!("ACCEPTANCE 3 branch-collapse: PASS (worst deviation {worst:.2e})");
}

struct PipelineOutcome {
    results: std::collections::HashMap<SystemKind, Vec<DeploymentResult>>,
}

/// The shared experiment pipeline used by the ordering criteria: synthetic
/// multilabel data, noise experts, estimated propensities.
fn run_noise_pipeline(
    rhos: &[f64],
    cost: f64,
    systems: &[SystemKind],
    repetitions: u64,
    master_seed: u64,
    policy_arch: NetArch,
) -> PipelineOutcome {
    let mut results: std::collections::HashMap<SystemKind, Vec<DeploymentResult>> =
        std::collections::HashMap::new();
    let dataset = make_synthetic_multilabel(3000, 6, 9, 0.1, master_seed).unwrap();
    for rep in 0..repetitions {
        let seed = master_seed ^ rep;
        let (train, test) = split(&dataset, SplitSpec { test_fraction: 0.3, seed }).unwrap();
        let scaler = Standardizer::fit(&train);
        let train = scaler.transform(&train).unwrap();
        let test = scaler.transform(&test).unwrap();
        let pool = ExpertPool::noise_pool(rhos, cost).unwrap();
        let log = generate_log(&train, &pool, seed).unwrap();
        // The simulated decision-makers record their exact behavior
        // propensities, so the objectives run on the logged truth; the
        // estimation path is exercised by the compliance criterion and the
        // estimator's own tests.
        let est = PropensityEstimates::uniform(log.num_actions(), log.num_experts());
        let cfg = TrainConfig {
            epochs: 800,
            seed,
            convergence_window: 60,
            convergence_tol: 1e-5,
            policy_arch,
            router_weight_decay: 1.0,
            objective: ObjectiveConfig {
                propensity_source: PropensitySource::Logged,
                human_cost: cost,
                ..ObjectiveConfig::default()
            },
            ..TrainConfig::default()
        };
        for &kind in systems {
            let system = match kind {
                SystemKind::Human => TrainedSystem::human(),
                SystemKind::Ao => train_ao(&train, &log, &est, &cfg).unwrap(),
                SystemKind::Ts => train_ts(&train, &log, &est, &cfg).unwrap(),
                SystemKind::Jc => train_jc(&train, &log, &est, &cfg).unwrap(),
                SystemKind::Jcp => train_jcp(&train, &log, &pool, &est, &cfg).unwrap(),
            };
            let result = evaluate(&system, &test, &pool, seed).unwrap();
            results.entry(kind).or_default().push(result);
        }
    }
    PipelineOutcome { results }
}

fn totals(outcome: &PipelineOutcome, kind: SystemKind) -> Vec<f64> {
    outcome.results[&kind].iter().map(|r| r.total_reward).collect()
}

/// Criterion 4: with noise experts at 0.6/0.7/0.8 and cost 0.3 over ten
/// seeds, mean rewards order as in the reference table: JC at least one
/// standard error above Human and AO, JCP never significantly below JC.
#[test]
fn c04_table1_ordering() {
    let outcome = run_noise_pipeline(
        &[0.6, 0.7, 0.8],
        0.3,
        &[SystemKind::Human, SystemKind::Ao, SystemKind::Ts, SystemKind::Jc, SystemKind::Jcp],
        10,
        41,
        NetArch::default(),
    );
    let human = summarize(&totals(&outcome, SystemKind::Human)).unwrap();
    let ao = summarize(&totals(&outcome, SystemKind::Ao)).unwrap();
    let ts = summarize(&totals(&outcome, SystemKind::Ts)).unwrap();
    let jc = summarize(&totals(&outcome, SystemKind::Jc)).unwrap();
    let jcp = summarize(&totals(&outcome, SystemKind::Jcp)).unwrap();
    let pooled = |a: &handoff_core::Summary, b: &handoff_core::Summary| {
        (a.stderr * a.stderr + b.stderr * b.stderr).sqrt()
    };

    println!(
        "  Human {} | AO {} | TS {} | JC {} | JCP {}",
        human.display_row(),
        ao.display_row(),
        ts.display_row(),
        jc.display_row(),
        jcp.display_row()
    );
    // Never significantly worse.
    assert!(jc.mean >= ao.mean - 2.0 * pooled(&jc, &ao), "JC below AO");
    assert!(jc.mean >= human.mean - 2.0 * pooled(&jc, &human), "JC below Human");
    assert!(jcp.mean >= jc.mean - 2.0 * pooled(&jcp, &jc), "JCP below JC");
    // The expected separations.
    assert!(
        jc.mean >= human.mean + pooled(&jc, &human),
        "JC ({}) not one stderr above Human ({})",
        jc.display_row(),
        human.display_row()
    );
    assert!(
        jc.mean >= ao.mean + pooled(&jc, &ao),
        "JC ({}) not one stderr above AO ({})",
        jc.display_row(),
        ao.display_row()
    );
    println!(
        "ACCEPTANCE 4 table1-ordering: PASS (Human {} < AO {} <= JC {} <= JCP {})",
        human.display_row(),
        ao.display_row(),
        jc.display_row(),
        jcp.display_row()
    );
}

/// Criterion 5: on the compliance construction with linear models, joint
/// training beats the two-stage procedure over ten seeds and reaches 95% of
/// the constructed joint solution.
#[test]
fn c05_compliance_separation() {
    let mut ts_totals = Vec::new();
    let mut jc_totals = Vec::new();
    let mut ref_totals = Vec::new();
    for seed in 0..10u64 {
        let inst = make_compliance_2d(1200, 100 + seed).unwrap();
        let (train, test) =
            split(&inst.dataset, SplitSpec { test_fraction: 0.3, seed: 200 + seed }).unwrap();
        let expert =
            Expert::new(ExpertBehavior::FixedBoundary { flip_prob: 0.15 }, 0.1).unwrap();
        let pool = ExpertPool::new(vec![expert]).unwrap();
        let log = generate_log(&train, &pool, 300 + seed).unwrap();
        let est = fit_estimates(
            &train,
            &log,
            BehaviorConditioning::Pooled,
            AssignmentMode::KnownUniform,
            1e-3,
            PropensityTrainConfig::default(),
            400 + seed,
        )
        .unwrap();
        let cfg = TrainConfig {
            epochs: 3000,
            seed: 500 + seed,
            convergence_window: 80,
            convergence_tol: 1e-5,
            policy_arch: NetArch::linear(),
            router_arch: NetArch::linear(),
            policy_weight_decay: 0.1,
            objective: ObjectiveConfig {
                propensity_source: PropensitySource::Estimated,
                human_cost: 0.1,
                ..ObjectiveConfig::default()
            },
            ..TrainConfig::default()
        };
        let ts = train_ts(&train, &log, &est, &cfg).unwrap();
        let jc = train_jc(&train, &log, &est, &cfg).unwrap();
        let reference = TrainedSystem {
            kind: SystemKind::Jc,
            policy: Some(Compliance2d::reference_policy()),
            router: Some(Compliance2d::reference_router()),
            lambda: Some(0.0),
            history: vec![],
        };
        ts_totals.push(evaluate(&ts, &test, &pool, 600 + seed).unwrap().total_reward);
        jc_totals.push(evaluate(&jc, &test, &pool, 600 + seed).unwrap().total_reward);
        ref_totals.push(evaluate(&reference, &test, &pool, 600 + seed).unwrap().total_reward);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ts_m, jc_m, ref_m) = (mean(&ts_totals), mean(&jc_totals), mean(&ref_totals));
    assert!(jc_m > ts_m, "JC mean {jc_m:.1} did not exceed TS mean {ts_m:.1}");
    assert!(
        jc_m >= 0.95 * ref_m,
        "JC mean {jc_m:.1} below 95% of the constructed optimum {ref_m:.1}"
    );
    println!(
        "ACCEPTANCE 5 compliance-separation: PASS (TS {ts_m:.1} < JC {jc_m:.1}, constructed optimum {ref_m:.1}, ratio {:.3})",
        jc_m / ref_m
    );
}

/// Criterion 6: with weak costly experts the routers keep everything on the
/// algorithm and match AO; with strong free experts they defer most
/// instances.
#[test]
fn c06_cost_sweep_behavior() {
    // Weak experts, cost 0.5.
    let weak = run_noise_pipeline(
        &[0.55, 0.6, 0.58],
        0.5,
        &[SystemKind::Ao, SystemKind::Jc, SystemKind::Jcp],
        5,
        61,
        NetArch::default(),
    );
    let ao = summarize(&totals(&weak, SystemKind::Ao)).unwrap();
    for kind in [SystemKind::Jc, SystemKind::Jcp] {
        let team = summarize(&totals(&weak, kind)).unwrap();
        let frac: f64 = weak.results[&kind]
            .iter()
            .map(DeploymentResult::human_fraction)
            .sum::<f64>()
            / weak.results[&kind].len() as f64;
        assert!(frac < 0.05, "{kind} human fraction {frac} with weak costly experts");
        let gap = (team.mean - ao.mean).abs();
        let pooled = (team.stderr * team.stderr + ao.stderr * ao.stderr).sqrt();
        assert!(
            gap <= pooled.max(1.0),
            "{kind} ({}) deviates from AO ({}) beyond one stderr",
            team.display_row(),
            ao.display_row()
        );
    }

    // Strong experts, cost 0.
    let strong = run_noise_pipeline(
        &[0.95, 0.97, 0.96],
        0.0,
        &[SystemKind::Jc, SystemKind::Jcp],
        5,
        67,
        NetArch::default(),
    );
    let mut strong_fracs = Vec::new();
    for kind in [SystemKind::Jc, SystemKind::Jcp] {
        let frac: f64 = strong.results[&kind]
            .iter()
            .map(DeploymentResult::human_fraction)
            .sum::<f64>()
            / strong.results[&kind].len() as f64;
        assert!(frac > 0.5, "{kind} human fraction {frac} with strong free experts");
        strong_fracs.push(frac);
    }
    println!(
        "ACCEPTANCE 6 cost-sweep-behavior: PASS (weak+costly keeps algorithm, strong+free defers {:.0}% / {:.0}%)",
        strong_fracs[0] * 100.0,
        strong_fracs[1] * 100.0
    );
}

/// Criterion 7: with the five-worker accuracy profile, personalized routing
/// sends fewer than 5% of human-routed instances to the weakest worker.
#[test]
fn c07_worst_expert_avoidance() {
    let outcome = run_noise_pipeline(
        &[0.82, 0.93, 0.89, 0.90, 0.64],
        0.0,
        &[SystemKind::Jcp],
        5,
        71,
        NetArch::default(),
    );
    let mut routed = 0u64;
    let mut weak = 0u64;
    for result in &outcome.results[&SystemKind::Jcp] {
        routed += result.human_count();
        weak += result.routed_to_expert[4];
    }
    assert!(routed > 0, "personalized routing never queried a human");
    let share = weak as f64 / routed as f64;
    assert!(share < 0.05, "weakest worker received {share:.3} of {routed} queries");
    println!(
        "ACCEPTANCE 7 worst-expert-avoidance: PASS (weakest worker got {weak} of {routed} human queries, share {share:.3})"
    );
}

/// Criterion 8: the collaboration improvement (JC - AO) is larger with 2
/// hidden units than with 8, averaged over ten seeds.
#[test]
fn c08_capacity_ablation() {
    let arch = |width| NetArch {
        hidden_layers: 2,
        hidden_width: width,
        activation: Activation::Identity,
    };
    let systems = [SystemKind::Ao, SystemKind::Jc];
    let narrow = run_noise_pipeline(&[0.6, 0.7, 0.8], 0.3, &systems, 10, 83, arch(2));
    let wide = run_noise_pipeline(&[0.6, 0.7, 0.8], 0.3, &systems, 10, 83, arch(8));
    let gain = |o: &PipelineOutcome| {
        let ao = totals(o, SystemKind::Ao);
        let jc = totals(o, SystemKind::Jc);
        jc.iter().zip(&ao).map(|(j, a)| j - a).sum::<f64>() / ao.len() as f64
    };
    let narrow_gain = gain(&narrow);
    let wide_gain = gain(&wide);
    assert!(
        narrow_gain > wide_gain,
        "improvement with 2 units ({narrow_gain:.1}) did not exceed improvement with 8 ({wide_gain:.1})"
    );
    println!(
        "ACCEPTANCE 8 capacity-ablation: PASS (JC-AO improvement {narrow_gain:.1} at width 2 vs {wide_gain:.1} at width 8)"
    );
}

/// Criterion 9: importance ratios beyond the cap contribute weight exactly
/// 10, over random networks and logs.
#[test]
fn c09_truncation_cap() {
    let cfg = ObjectiveConfig {
        propensity_source: PropensitySource::Logged,
        baseline: 0.0,
        ..ObjectiveConfig::default()
    };
    let est = PropensityEstimates::uniform(3, 1);
    let mut capped = 0usize;
    for seed in 0..50u64 {
        let ds = make_synthetic_multilabel(40, 2, 3, 0.1, seed).unwrap();
        let mut rng = seeds::rng(seed, Role::PolicyInit, 92);
        let policy = DenseNet::new(
            2,
            &[(4, Activation::Relu)],
            3,
            Head::Softmax,
            &mut rng,
        )
        .unwrap();
        // Logged propensities spanning the capped and uncapped regimes.
        let records: Vec<LogRecord> = (0..ds.len())
            .map(|i| {
                let action = i % 3;
                LogRecord {
                    instance: i,
                    expert: 0,
                    action,
                    reward: ds.reward(i, action),
                    logged_propensity: Some(if i % 2 == 0 { 0.004 } else { 0.6 }),
                }
            })
            .collect();
        let terms = ips_terms(&policy, &ds, &records, &est, &cfg).unwrap();
        for (record, term) in records.iter().zip(&terms) {
            let pa = policy.forward(ds.features_of(record.instance)).unwrap()[record.action];
            let raw = pa / record.logged_propensity.unwrap();
            if raw > 10.0 {
                assert_eq!(term.weight, 10.0, "ratio {raw} not capped exactly");
                capped += 1;
            } else {
                assert!((term.weight - raw).abs() < 1e-12);
            }
            assert!(term.weight <= 10.0);
        }
    }
    assert!(capped > 100, "only {capped} capped records exercised");
    println!("ACCEPTANCE 9 truncation-cap: PASS ({capped} records capped at exactly 10)");
}

/// Criterion 10: LIBSVM multilabel round-trip identity on 1000 random
/// instances, and malformed lines rejected with their line numbers.
#[test]
fn c10_parser_round_trip() {
    let mut rng = seeds::rng(5, Role::DataGen, 93);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..1000 {
        let row: Vec<f64> = (0..12)
            .map(|_| {
                if rng.random::<f64>() < 0.4 {
                    // Representative sparse values, including negatives.
                    (rng.random_range(-8.0..8.0) * 64.0f64).round() / 64.0
                } else {
                    0.0
                }
            })
            .collect();
        let count = rng.random_range(0..3);
        let set: Vec<usize> = (0..count).map(|_| rng.random_range(0..6)).collect();
        features.push(row);
        labels.push(set);
    }
    // Keep the dimensions pinned by construction.
    features[0][11] = 1.5;
    labels[0] = vec![5];
    let ds = MultiLabelDataset::new(features, labels, 6).unwrap();
    let mut text = Vec::new();
    write_libsvm_multilabel(&ds, &mut text).unwrap();
    let back = parse_libsvm_multilabel(text.as_slice()).unwrap();
    assert_eq!(ds, back, "round-trip changed the dataset");

    let bad = "1 1:0.5\n0 2:abc\n";
    match parse_libsvm_multilabel(bad.as_bytes()) {
        Err(handoff_core::Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error with a line number, got {other:?}"),
    }
    let bad = "1 1:0.5\n1 2:1.0\n1 0:1.0\n";
    match parse_libsvm_multilabel(bad.as_bytes()) {
        Err(handoff_core::Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error with a line number, got {other:?}"),
    }
    println!("ACCEPTANCE 10 parser-round-trip: PASS (1000 instances, line numbers reported)");
}

/// Criterion 11: the same config and master seed produce byte-identical
/// result files.
#[test]
fn c11_reproducibility() {
    use handoff_cli::config::parse_config;
    use handoff_cli::runner::run_experiment;

    let base = std::env::temp_dir().join(format!("handoff-acceptance-{}", std::process::id()));
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    let config_text = r#"
[dataset]
kind = "synthetic"
n = 400
d = 3
l = 4
label_noise = 0.1

[experts]
kind = "noise"
rhos = [0.7, 0.9]
cost = 0.2

[train]
epochs = 25
convergence_window = 0

[run]
systems = ["human", "ao", "ts"]
repetitions = 2
master_seed = 5
"#;
    for dir in [&dir_a, &dir_b] {
        let config = parse_config(
            config_text,
            &[format!("run.output_dir={:?}", dir.display().to_string())],
        )
        .unwrap();
        run_experiment(&config, false).unwrap();
    }
    for name in ["results.csv", "summary.csv", "summary.txt", "resolved_config.toml"] {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        if name == "resolved_config.toml" {
            // The configs differ only in their output directory line.
            let strip = |bytes: &[u8]| {
                String::from_utf8_lossy(bytes)
                    .lines()
                    .filter(|l| !l.starts_with("output_dir"))
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            assert_eq!(strip(&a), strip(&b), "{name} differs");
        } else {
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
    fs::remove_dir_all(&base).ok();
    println!("ACCEPTANCE 11 reproducibility: PASS (result files byte-identical across runs)");
}
