//! Monte Carlo runs of the attack over a sweep of generation parameters and
//! noise levels.
//!
//! Every random draw comes from a counter-split substream, so results do not
//! depend on thread scheduling and adding trials never perturbs earlier ones.
//! Ground-truth graphs and victims are shared across noise levels of the same
//! `(m, alpha, replicate)` to make level-to-level comparisons paired.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AssignmentSpec, ExperimentConfig, NoiseLevel};
use super::snap::{ingest_snap_communities, IngestManifest};
use super::HarnessError;
use crate::attacker::{Attacker, AttackerKnowledge, ItsConfig, Variant};
use crate::bounds::{self, BoundReport};
use crate::channels::{self, BinaryChannel};
use crate::generator;
use crate::model::{BipartiteGraph, GenerationParams, NoiseModel, VictimDistribution};
use crate::rng::{substream, Purpose, RNG_ALGORITHM};

/// One attack trial; the CSV row format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub seed: u64,
    pub replicate: usize,
    pub trial: usize,
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub variant: String,
    /// Queries made; absent when the trial failed.
    #[serde(rename = "Q")]
    pub q: Option<usize>,
    pub correct: bool,
    pub exhausted: bool,
    pub elapsed_ms: u64,
    #[serde(skip)]
    pub victim: usize,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub experiment: String,
    pub level: String,
    pub m: usize,
    pub n: usize,
    pub mu: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub variant: String,
    pub trials: usize,
    pub failed_trials: usize,
    pub mean_q: f64,
    pub std_error_q: f64,
    /// `mean_q - ln(1/epsilon) / ln(m)`.
    pub adjusted_mean_q: f64,
    pub success_rate: f64,
    /// Wrong identifications and exhausted budgets over completed trials.
    pub error_rate: f64,
    pub misidentification_rate: f64,
    pub exhausted_rate: f64,
    pub two_m_over_mu: f64,
    pub bound: Option<BoundReport>,
    /// Mean Q no more than two standard errors above a non-vacuous bound.
    pub within_bound: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub seed: u64,
    pub rng: String,
    pub version: String,
    pub trials: usize,
    pub replicates: usize,
    pub dataset: Option<IngestManifest>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub manifest: RunManifest,
    pub records: Vec<ResultRecord>,
    pub summaries: Vec<CellSummary>,
}

/// Where ground truths come from.
enum Truths {
    /// `params[mi][ai]`, graphs `[mi][ai][replicate]`.
    Generated { params: Vec<Vec<GenerationParams>>, graphs: Vec<Vec<Vec<Result<BipartiteGraph, String>>>> },
    Dataset { graph: BipartiteGraph, manifest: IngestManifest },
}

struct Cell<'a> {
    label: String,
    level: &'a NoiseLevel,
    mi: usize,
    ai: usize,
    id: u64,
    m: usize,
    n: usize,
    mu: f64,
    alpha: f64,
    params: Option<&'a GenerationParams>,
}

fn experiment_label(base: &str, level: &str) -> String {
    if level.is_empty() {
        base.to_string()
    } else {
        format!("{base}/{level}")
    }
}

fn build_noise(level: &NoiseLevel, assignment: &AssignmentSpec, m: usize, rng_seed: (u64, u64, u64)) -> Result<NoiseModel, HarnessError> {
    let (g, t) = (level.gamma.clone(), level.theta.clone());
    let model = match assignment {
        AssignmentSpec::RoundRobin => NoiseModel::round_robin(m, g, t)?,
        AssignmentSpec::Random => {
            // Balanced random assignment: round-robin labels, shuffled.
            let mut rng = substream(rng_seed.0, Purpose::Assignment, rng_seed.1, rng_seed.2, 0);
            let mut gs: Vec<usize> = (0..m).map(|k| k % g.len()).collect();
            let mut ts: Vec<usize> = (0..m).map(|k| k % t.len()).collect();
            gs.shuffle(&mut rng);
            ts.shuffle(&mut rng);
            NoiseModel::new(g, t, gs, ts)?
        }
        AssignmentSpec::Explicit { gamma, theta } => {
            if gamma.len() != m || theta.len() != m {
                return Err(HarnessError::Config(format!("explicit assignment must list {m} users")));
            }
            NoiseModel::new(g, t, gamma.clone(), theta.clone())?
        }
    };
    Ok(model)
}

fn all_identity(noise: &NoiseModel) -> bool {
    noise.gamma_channels().iter().all(|c| c.channel == BinaryChannel::identity())
}

fn cell_bound(
    variant: Variant,
    params: &GenerationParams,
    noise: &NoiseModel,
    dist: &VictimDistribution,
    epsilon: f64,
    c_prime: f64,
) -> Option<BoundReport> {
    let r = match variant {
        Variant::T1NoiselessQuery => {
            let [scan] = noise.gamma_channels() else { return None };
            bounds::theorem1_bound(params, &scan.channel, dist, epsilon, c_prime)
        }
        Variant::T2StochasticBlock => {
            let [scan] = noise.gamma_channels() else { return None };
            bounds::theorem2_bound(params, &scan.channel, dist, epsilon)
        }
        Variant::T3Compound => bounds::theorem3_bound(params, noise, dist, epsilon, c_prime),
    };
    r.ok()
}

#[allow(clippy::too_many_arguments)]
fn run_replicate(
    cfg: &ExperimentConfig,
    its: &ItsConfig,
    cell: &Cell<'_>,
    replicate: usize,
    truth: Result<&BipartiteGraph, String>,
    knowledge: &AttackerKnowledge,
    dist: &VictimDistribution,
) -> Vec<ResultRecord> {
    let seed = cfg.run.seed;
    let blank = |trial: usize| ResultRecord {
        experiment: cell.label.clone(),
        seed,
        replicate,
        trial,
        m: cell.m,
        n: cell.n,
        alpha: cell.alpha,
        variant: its.variant.to_string(),
        q: None,
        correct: false,
        exhausted: false,
        elapsed_ms: 0,
        victim: 0,
        error: None,
    };
    let failed = |msg: String| -> Vec<ResultRecord> {
        (0..cfg.run.trials).map(|t| ResultRecord { error: Some(msg.clone()), ..blank(t) }).collect()
    };
    let truth = match truth {
        Ok(g) => g,
        Err(e) => return failed(e),
    };
    let noise = match build_noise(cell.level, &cfg.noise.assignment, cell.m, (seed, cell.id, replicate as u64)) {
        Ok(n) => n,
        Err(e) => return failed(e.to_string()),
    };
    let scanned = if all_identity(&noise) {
        truth.clone()
    } else {
        let mut rng = substream(seed, Purpose::Scan, cell.id, replicate as u64, 0);
        channels::scan_graph(truth, &noise, &mut rng)
    };
    let graph_key = ((cell.mi as u64) << 32) | cell.ai as u64;

    (0..cfg.run.trials)
        .into_par_iter()
        .map(|trial| {
            let start = cfg.run.timing.then(Instant::now);
            let mut victim_rng = substream(seed, Purpose::Victim, graph_key, replicate as u64, trial as u64);
            let victim = dist.sample(&mut victim_rng);
            let mut query_rng = substream(seed, Purpose::Query, cell.id, replicate as u64, trial as u64);
            let outcome = Attacker::new(knowledge.clone(), &scanned, &noise, dist, *its)
                .and_then(|mut a| a.run(truth, victim, &mut query_rng));
            let elapsed_ms = start.map_or(0, |s| s.elapsed().as_millis() as u64);
            match outcome {
                Ok(o) => ResultRecord {
                    q: Some(o.num_queries),
                    correct: o.correct,
                    exhausted: o.exhausted,
                    elapsed_ms,
                    victim,
                    ..blank(trial)
                },
                Err(e) => ResultRecord { error: Some(e.to_string()), elapsed_ms, victim, ..blank(trial) },
            }
        })
        .collect()
}

/// Aggregates over one cell's records; failed trials are excluded from every rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean_q: f64,
    pub std_error_q: f64,
    pub success_rate: f64,
    pub misidentification_rate: f64,
    pub exhausted_rate: f64,
    pub error_rate: f64,
    pub failed_trials: usize,
}

pub fn aggregate(records: &[ResultRecord]) -> Aggregate {
    let done: Vec<&ResultRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let k = done.len() as f64;
    let qs: Vec<f64> = done.iter().filter_map(|r| r.q.map(|q| q as f64)).collect();
    let mean_q = qs.iter().sum::<f64>() / k;
    let std_error_q = if qs.len() > 1 {
        (qs.iter().map(|q| (q - mean_q).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
    } else {
        f64::NAN
    };
    let correct = done.iter().filter(|r| r.correct).count() as f64;
    let exhausted = done.iter().filter(|r| r.exhausted).count() as f64;
    let wrong = done.iter().filter(|r| !r.correct && !r.exhausted).count() as f64;
    Aggregate {
        mean_q,
        std_error_q,
        success_rate: correct / k,
        misidentification_rate: wrong / k,
        exhausted_rate: exhausted / k,
        error_rate: (k - correct) / k,
        failed_trials: records.len() - done.len(),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    cfg.validate()?;
    let its = cfg.its.build()?;
    let levels = cfg.noise.levels()?;
    let seed = cfg.run.seed;
    let reps = cfg.run.replicates;

    let truths = match &cfg.generation.dataset {
        Some(ds) => {
            let ing = ingest_snap_communities(&ds.path, ds.min_group_size, ds.min_user_memberships)?;
            Truths::Dataset { graph: ing.graph, manifest: ing.manifest }
        }
        None => {
            let params = cfg.generation.grid()?;
            let graphs = params
                .iter()
                .enumerate()
                .map(|(mi, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(ai, p)| {
                            (0..reps)
                                .into_par_iter()
                                .map(|r| {
                                    let mut rng = substream(seed, Purpose::Graph, mi as u64, ai as u64, r as u64);
                                    generator::generate_ground_truth(p, &mut rng)
                                        .map(|g| g.graph)
                                        .map_err(|e| e.to_string())
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect();
            Truths::Generated { params, graphs }
        }
    };

    // (cell, knowledge) in output order: m, alpha, noise level.
    let mut cells = Vec::new();
    match &truths {
        Truths::Generated { params, .. } => {
            let per_m = params[0].len();
            for (mi, row) in params.iter().enumerate() {
                for (ai, p) in row.iter().enumerate() {
                    for (li, level) in levels.iter().enumerate() {
                        cells.push((
                            Cell {
                                label: experiment_label(&cfg.experiment, &level.label),
                                level,
                                mi,
                                ai,
                                id: ((mi * per_m + ai) * levels.len() + li) as u64,
                                m: p.m,
                                n: p.n,
                                mu: p.mu as f64,
                                alpha: p.alpha,
                                params: Some(p),
                            },
                            AttackerKnowledge::from_params(p),
                        ));
                    }
                }
            }
        }
        Truths::Dataset { graph, .. } => {
            let knowledge = AttackerKnowledge::from_graph(graph);
            for (li, level) in levels.iter().enumerate() {
                cells.push((
                    Cell {
                        label: experiment_label(&cfg.experiment, &level.label),
                        level,
                        mi: 0,
                        ai: 0,
                        id: li as u64,
                        m: graph.num_users(),
                        n: graph.num_groups(),
                        mu: knowledge.mu,
                        alpha: 0.0,
                        params: None,
                    },
                    knowledge.clone(),
                ));
            }
        }
    }

    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for (cell, knowledge) in &cells {
        let dist = cfg.victim.build(cell.m)?;
        let per_rep: Vec<Vec<ResultRecord>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let truth = match &truths {
                    Truths::Generated { graphs, .. } => graphs[cell.mi][cell.ai][r].as_ref().map_err(Clone::clone),
                    Truths::Dataset { graph, .. } => Ok(graph),
                };
                run_replicate(cfg, &its, cell, r, truth, knowledge, &dist)
            })
            .collect();
        let cell_records: Vec<ResultRecord> = per_rep.into_iter().flatten().collect();

        let agg = aggregate(&cell_records);
        let bound = cell.params.and_then(|p| {
            let noise = build_noise(cell.level, &cfg.noise.assignment, cell.m, (seed, cell.id, 0)).ok()?;
            cell_bound(its.variant, p, &noise, &dist, its.epsilon, cfg.its.c_prime)
        });
        let within_bound = bound.as_ref().filter(|b| !b.vacuous).map(|b| agg.mean_q <= b.q_bar_bound + 2.0 * agg.std_error_q);
        summaries.push(CellSummary {
            experiment: cell.label.clone(),
            level: cell.level.label.clone(),
            m: cell.m,
            n: cell.n,
            mu: cell.mu,
            alpha: cell.alpha,
            epsilon: its.epsilon,
            variant: its.variant.to_string(),
            trials: cell_records.len(),
            failed_trials: agg.failed_trials,
            mean_q: agg.mean_q,
            std_error_q: agg.std_error_q,
            adjusted_mean_q: agg.mean_q - (1.0 / its.epsilon).ln() / (cell.m as f64).ln(),
            success_rate: agg.success_rate,
            error_rate: agg.error_rate,
            misidentification_rate: agg.misidentification_rate,
            exhausted_rate: agg.exhausted_rate,
            two_m_over_mu: 2.0 * cell.m as f64 / cell.mu,
            bound,
            within_bound,
        });
        records.extend(cell_records);
    }

    let manifest = RunManifest {
        experiment: cfg.experiment.clone(),
        seed,
        rng: RNG_ALGORITHM.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        trials: cfg.run.trials,
        replicates: reps,
        dataset: match truths {
            Truths::Dataset { manifest, .. } => Some(manifest),
            Truths::Generated { .. } => None,
        },
    };
    Ok(ExperimentOutput { config: cfg.clone(), manifest, records, summaries })
}
