//! The experiment pipeline: data, experts, logs, propensities, training,
//! evaluation, result files.
//!
//! A repetition `r` runs with seed `master_seed ^ r`; everything downstream
//! derives from that, so a config file plus its master seed reproduces every
//! result byte (result files carry no timestamps).

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::Context;
use handoff_core::data::{
    self, make_compliance_2d, make_synthetic_multilabel, MultiLabelDataset, SplitSpec,
    Standardizer,
};
use handoff_core::eval::{evaluate, summarize, DeploymentResult};
use handoff_core::propensity::{fit_estimates, PropensityEstimates};
use handoff_core::seeds::{self, Role};
use handoff_core::sim::{fit_proxy_hbm, generate_log, Expert, ExpertBehavior, ExpertPool};
use handoff_core::train::{train_ao, train_jc, train_jcp, train_ts, SystemKind, TrainedSystem};
use handoff_core::PropensitySource;

use crate::config::{CapacitySpec, ExperimentConfig};
use crate::tables::{write_results_csv, write_summary, ResultRow, SummaryRow};
use crate::Result;

/// One experiment slice: either the plain run or one sweep entry.
#[derive(Debug, Clone)]
enum Slice {
    Plain,
    Cost(f64),
    Capacity(CapacitySpec),
}

impl Slice {
    fn label(&self) -> String {
        match self {
            Slice::Plain => "-".to_string(),
            Slice::Cost(c) => format!("cost={c}"),
            Slice::Capacity(spec) => spec.label(),
        }
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<MultiLabelDataset> {
    let ds = &config.dataset;
    match ds.kind.as_str() {
        "synthetic" => Ok(make_synthetic_multilabel(
            ds.n,
            ds.d,
            ds.l,
            ds.label_noise,
            config.run.master_seed,
        )?),
        "compliance" => Ok(make_compliance_2d(ds.n, config.run.master_seed)?.dataset),
        "file" => {
            let path = ds.path.as_ref().expect("validated");
            let file = fs::File::open(path).with_context(|| format!("opening {path}"))?;
            let mut reader = BufReader::new(file);
            // Snapshot header if present, plain LIBSVM otherwise.
            let text = {
                use std::io::Read;
                let mut buf = String::new();
                reader.read_to_string(&mut buf)?;
                buf
            };
            let parsed = if text.starts_with("# handoff-dataset") {
                data::read_snapshot(text.as_bytes())?
            } else {
                data::parse_libsvm_multilabel(text.as_bytes())?
            };
            Ok(parsed)
        }
        other => unreachable!("validated dataset kind {other}"),
    }
}

fn build_pool(
    config: &ExperimentConfig,
    train: &MultiLabelDataset,
    cost_override: Option<f64>,
    seed: u64,
) -> Result<ExpertPool> {
    let experts = &config.experts;
    let cost_at = |j: usize| cost_override.unwrap_or_else(|| experts.cost_of(j));
    let list: Vec<Expert> = match experts.kind.as_str() {
        "noise" => experts
            .rhos
            .iter()
            .enumerate()
            .map(|(j, &rho)| Expert::new(ExpertBehavior::UniformNoise { rho }, cost_at(j)))
            .collect::<handoff_core::Result<_>>()?,
        "proxy" => (0..experts.count)
            .map(|j| {
                let model = fit_proxy_hbm(
                    train,
                    experts.subset_fraction,
                    seeds::derive(seed, Role::ExpertFit, j as u64),
                )?;
                Expert::new(ExpertBehavior::Proxy(model), cost_at(j))
            })
            .collect::<handoff_core::Result<_>>()?,
        "boundary" => vec![Expert::new(
            ExpertBehavior::FixedBoundary {
                flip_prob: experts.flip_prob,
            },
            cost_at(0),
        )?],
        other => unreachable!("validated expert kind {other}"),
    };
    Ok(ExpertPool::new(list)?)
}

fn fit_propensities(
    config: &ExperimentConfig,
    train: &MultiLabelDataset,
    log: &handoff_core::BanditLog,
    seed: u64,
) -> Result<PropensityEstimates> {
    if config.propensity.source == PropensitySource::Logged {
        // Logged propensities are exact; assignment stays the known-uniform
        // historical regime.
        return Ok(PropensityEstimates::uniform(
            log.num_actions(),
            log.num_experts(),
        ));
    }
    Ok(fit_estimates(
        train,
        log,
        config.propensity.conditioning,
        config.propensity.assignment,
        config.propensity.floor,
        config.propensity.fit,
        seed,
    )?)
}

struct RepetitionOutput {
    rows: Vec<ResultRow>,
    systems: Vec<(SystemKind, TrainedSystem)>,
}

fn run_repetition(
    config: &ExperimentConfig,
    dataset: &MultiLabelDataset,
    slice: &Slice,
    repetition: usize,
) -> Result<RepetitionOutput> {
    let seed = config.run.master_seed ^ repetition as u64;
    let (train, test) = data::split(
        dataset,
        SplitSpec {
            test_fraction: config.split.test_fraction,
            seed,
        },
    )?;
    let (train, test) = if config.run.standardize {
        let scaler = Standardizer::fit(&train);
        (scaler.transform(&train)?, scaler.transform(&test)?)
    } else {
        (train, test)
    };

    let cost_override = match slice {
        Slice::Cost(c) => Some(*c),
        _ => None,
    };
    let capacity = match slice {
        Slice::Capacity(spec) => Some(spec),
        _ => None,
    };
    let pool = build_pool(config, &train, cost_override, seed)?;
    let log = generate_log(&train, &pool, seed)?;
    let estimates = fit_propensities(config, &train, &log, seed)?;

    // The team objectives charge the uniform cost; per-expert costs enter
    // through the pool in the personalized objective and at deployment.
    let uniform_cost = cost_override.unwrap_or(config.experts.cost);
    let train_cfg = config.train_config(seed, uniform_cost, capacity);

    let mut rows = Vec::new();
    let mut systems = Vec::new();
    for &kind in &config.run.systems {
        let system = match kind {
            SystemKind::Human => TrainedSystem::human(),
            SystemKind::Ao => train_ao(&train, &log, &estimates, &train_cfg)?,
            SystemKind::Ts => train_ts(&train, &log, &estimates, &train_cfg)?,
            SystemKind::Jc => train_jc(&train, &log, &estimates, &train_cfg)?,
            SystemKind::Jcp => train_jcp(&train, &log, &pool, &estimates, &train_cfg)?,
        };
        let result = evaluate(&system, &test, &pool, seed)?;
        rows.push(result_row(slice, kind, repetition, seed, &result));
        systems.push((kind, system));
    }
    Ok(RepetitionOutput { rows, systems })
}

fn result_row(
    slice: &Slice,
    system: SystemKind,
    repetition: usize,
    seed: u64,
    result: &DeploymentResult,
) -> ResultRow {
    ResultRow {
        sweep: slice.label(),
        system: system.to_string(),
        repetition,
        seed,
        total_reward: result.total_reward,
        raw_reward: result.raw_reward,
        cost_paid: result.total_cost,
        human_count: result.human_count(),
        algorithm_count: result.algorithm_count,
        expert_counts: result.routed_to_expert.clone(),
    }
}

/// Run the full experiment described by `config`; returns the output paths.
pub fn run_experiment(config: &ExperimentConfig, echo: bool) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let out_dir = output_dir(config);
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let dataset = load_dataset(config)?;

    let slices: Vec<Slice> = match &config.sweep {
        None => vec![Slice::Plain],
        Some(sweep) => {
            if let Some(costs) = &sweep.costs {
                costs.iter().map(|&c| Slice::Cost(c)).collect()
            } else if let Some(specs) = &sweep.capacity {
                specs.iter().cloned().map(Slice::Capacity).collect()
            } else {
                vec![Slice::Plain]
            }
        }
    };

    let mut all_rows: Vec<ResultRow> = Vec::new();
    for slice in &slices {
        for repetition in 0..config.run.repetitions {
            let output = run_repetition(config, &dataset, slice, repetition)?;
            if config.run.save_systems {
                for (kind, system) in &output.systems {
                    if *kind == SystemKind::Human {
                        continue;
                    }
                    let name = format!(
                        "system_{}_{}_rep{repetition}.json",
                        slice.label().replace(['=', '.'], "_"),
                        kind.to_string().to_lowercase()
                    );
                    fs::write(out_dir.join(name), system.to_json()?)?;
                }
            }
            if echo {
                for row in &output.rows {
                    println!(
                        "[{}] rep {} {}: total {:.1} (raw {:.1}, cost {:.1}, humans {})",
                        row.sweep,
                        row.repetition,
                        row.system,
                        row.total_reward,
                        row.raw_reward,
                        row.cost_paid,
                        row.human_count
                    );
                }
            }
            all_rows.extend(output.rows);
        }
    }

    // Deterministic order: slice, then system, then repetition.
    let summary = summarize_rows(config, &slices, &all_rows)?;

    let results_path = out_dir.join("results.csv");
    write_results_csv(&all_rows, config.experts.pool_size(), &results_path)?;
    let summary_csv = out_dir.join("summary.csv");
    let summary_txt = out_dir.join("summary.txt");
    let table = write_summary(&summary, &summary_csv, &summary_txt)?;
    if echo {
        println!("\n{table}");
    }
    let config_path = out_dir.join("resolved_config.toml");
    fs::write(&config_path, crate::config::resolved_toml(config)?)?;

    Ok(vec![results_path, summary_csv, summary_txt, config_path])
}

fn summarize_rows(
    config: &ExperimentConfig,
    slices: &[Slice],
    rows: &[ResultRow],
) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for slice in slices {
        let label = slice.label();
        for &system in &config.run.systems {
            let name = system.to_string();
            let totals: Vec<f64> = rows
                .iter()
                .filter(|r| r.sweep == label && r.system == name)
                .map(|r| r.total_reward)
                .collect();
            let raws: Vec<f64> = rows
                .iter()
                .filter(|r| r.sweep == label && r.system == name)
                .map(|r| r.raw_reward)
                .collect();
            if totals.len() >= 2 {
                out.push(SummaryRow {
                    sweep: label.clone(),
                    system: name,
                    total: summarize(&totals)?,
                    raw: summarize(&raws)?,
                });
            }
        }
    }
    Ok(out)
}

pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    match std::env::var("HANDOFF_OUTPUT_DIR") {
        Ok(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => PathBuf::from(&config.run.output_dir),
    }
}

/// Evaluate a saved system on the data/pool of one repetition of a config.
pub fn evaluate_saved(
    config: &ExperimentConfig,
    system_path: &Path,
    repetition: usize,
) -> Result<DeploymentResult> {
    let text = fs::read_to_string(system_path)
        .with_context(|| format!("reading {}", system_path.display()))?;
    let system = TrainedSystem::from_json(&text)?;
    let dataset = load_dataset(config)?;
    let seed = config.run.master_seed ^ repetition as u64;
    let (train, test) = data::split(
        &dataset,
        SplitSpec {
            test_fraction: config.split.test_fraction,
            seed,
        },
    )?;
    let (train, test) = if config.run.standardize {
        let scaler = Standardizer::fit(&train);
        (scaler.transform(&train)?, scaler.transform(&test)?)
    } else {
        (train, test)
    };
    let pool = build_pool(config, &train, None, seed)?;
    Ok(evaluate(&system, &test, &pool, seed)?)
}

/// Train one policy per baseline on the config's first repetition and report
/// the selection estimates.
pub fn grid_lambda_report(config: &ExperimentConfig, repetition: usize) -> Result<Vec<(f64, f64)>> {
    let dataset = load_dataset(config)?;
    let seed = config.run.master_seed ^ repetition as u64;
    let (train, _test) = data::split(
        &dataset,
        SplitSpec {
            test_fraction: config.split.test_fraction,
            seed,
        },
    )?;
    let train = if config.run.standardize {
        Standardizer::fit(&train).transform(&train)?
    } else {
        train
    };
    let pool = build_pool(config, &train, None, seed)?;
    let log = generate_log(&train, &pool, seed)?;
    let estimates = fit_propensities(config, &train, &log, seed)?;
    let cfg = config.train_config(seed, config.experts.cost, None);

    let unbaselined = cfg.objective.with_baseline(0.0);
    let mut report = Vec::new();
    for &lambda in &cfg.lambda_grid {
        let mut single = cfg.clone();
        single.lambda_grid = vec![lambda];
        let ao = train_ao(&train, &log, &estimates, &single)?;
        let estimate = handoff_core::objective::ips_value(
            ao.policy.as_ref().expect("AO trains a policy"),
            &train,
            log.records(),
            &estimates,
            &unbaselined,
        )?;
        report.push((lambda, estimate));
    }
    Ok(report)
}
