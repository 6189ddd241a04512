//! Monte Carlo checks of the structural properties of generated graphs:
//! group-size moments, the membership-count tail bound, and how closely
//! a user's partial fingerprint factorizes into independent bits.
//!
//! Users are exchangeable in every model, and groups are exchangeable when
//! all initial popularities are equal. Under that symmetry the probability
//! of a partial-fingerprint pattern depends only on its length `n'` and
//! weight `w`, and a single graph yields an unbiased estimate by averaging
//! over all users and all ordered `n'`-tuples of distinct groups:
//!
//! `P(s) = (1/m) sum_i (C_i)_w (n - C_i)_{n'-w} / (n)_{n'}`
//!
//! where `(x)_k` is the falling factorial and `C_i` is user `i`'s number of
//! groups. Confidence comes from a bootstrap over graphs.

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{self, BoundsError};
use crate::generator::{self, GeneratorError};
use crate::model::{BipartiteGraph, GenerationParams, ModelError};
use crate::rng::{substream, Purpose};

#[derive(Debug, Error)]
pub enum PropsError {
    #[error("generator: {0}")]
    Generator(#[from] GeneratorError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("bounds: {0}")]
    Bounds(#[from] BoundsError),
    #[error("invalid verification input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropsOptions {
    pub psi_grid: Vec<f64>,
    /// Longest partial fingerprint examined.
    pub max_pattern_len: usize,
    pub bootstrap_resamples: usize,
    /// Fraction of resamples that must agree with the claim to pass.
    pub pass_fraction: f64,
}

impl Default for PropsOptions {
    fn default() -> Self {
        Self { psi_grid: vec![0.5, 1.0, 2.0, 3.0], max_pattern_len: 3, bootstrap_resamples: 1000, pass_fraction: 0.99 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pass,
    Fail,
    /// The data cannot decide: too few resamples agree either way, the
    /// envelope has zero width, or the pattern was never observed.
    Inconclusive,
}

fn classify(fraction: f64, pass_fraction: f64) -> CellStatus {
    if fraction >= pass_fraction {
        CellStatus::Pass
    } else if fraction <= 1.0 - pass_fraction {
        CellStatus::Fail
    } else {
        CellStatus::Inconclusive
    }
}

/// Mean and standard error over graphs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = if n > 1.0 { values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { mean, std_error: (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    /// Mean group size.
    pub d: Estimate,
    /// Mean squared group size.
    pub d2: Estimate,
    /// Mean product of the sizes of two distinct groups.
    pub d_i_d_j: Estimate,
    pub skips: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCell {
    pub psi: f64,
    /// Membership count threshold `mu (1 + psi) / beta`.
    pub level: f64,
    pub empirical: Estimate,
    /// Tail bound with the leading constant set to 1.
    pub bound: f64,
    pub exponent_nats: f64,
    pub leading_constant: f64,
    /// Fraction of bootstrap resamples whose tail frequency is below the bound.
    pub fraction_below: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternCell {
    /// Representative pattern (ones first); every arrangement of the same
    /// weight has the same probability by exchangeability.
    pub pattern: String,
    pub length: usize,
    pub weight: usize,
    pub joint: Estimate,
    pub product: f64,
    pub ratio: f64,
    pub lower: f64,
    pub upper: f64,
    pub fraction_inside: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropsReport {
    pub params: GenerationParams,
    pub num_samples: usize,
    pub options: PropsOptions,
    pub moments: Moments,
    pub tail: Vec<TailCell>,
    /// Factorization sandwich `[1 - n' mu / m, e^(mu / beta)]` on `params`;
    /// empty when groups are not exchangeable.
    pub pa_factorization: Vec<PatternCell>,
    /// Envelope `(1 -/+ w / Delta)^w` on the equal-popularity block model
    /// with the same `n`, `m`, `mu`.
    pub sb_factorization: Vec<PatternCell>,
}

impl PropsReport {
    pub fn cells(&self) -> impl Iterator<Item = CellStatus> + '_ {
        self.tail
            .iter()
            .map(|c| c.status)
            .chain(self.pa_factorization.iter().map(|c| c.status))
            .chain(self.sb_factorization.iter().map(|c| c.status))
    }
}

/// Per-graph sufficient statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub mean_d: f64,
    pub mean_d2: f64,
    pub mean_didj: f64,
    pub skips: f64,
    /// Per-graph edge probability `sum_i C_i / (m n)`.
    pub edge_prob: f64,
    /// `pattern[len - 1][w]` for `len` in `1..=max_len`.
    pub pattern: Vec<Vec<f64>>,
    /// Fraction of users with at least `thresholds[i]` memberships.
    pub tail: Vec<f64>,
}

fn falling(x: usize, k: usize) -> f64 {
    if x < k {
        return 0.0;
    }
    (0..k).map(|i| (x - i) as f64).product()
}

/// Sufficient statistics of one graph; `thresholds` are integer membership counts.
pub fn graph_statistics(graph: &BipartiteGraph, skips: usize, max_len: usize, thresholds: &[usize]) -> GraphStats {
    let n = graph.num_groups();
    let m = graph.num_users();
    let sizes = graph.group_sizes();
    let total: f64 = sizes.iter().map(|&d| d as f64).sum();
    let sum_sq: f64 = sizes.iter().map(|&d| (d * d) as f64).sum();
    let nf = n as f64;
    let mean_didj = if n > 1 { (total * total - sum_sq) / (nf * (nf - 1.0)) } else { f64::NAN };

    let counts: Vec<usize> = (0..m).map(|k| graph.user_groups(k).len()).collect();
    let pattern = (1..=max_len.min(n))
        .map(|len| {
            let denom = falling(n, len) * m as f64;
            (0..=len)
                .map(|w| counts.iter().map(|&c| falling(c, w) * falling(n - c, len - w)).sum::<f64>() / denom)
                .collect()
        })
        .collect();
    let tail = thresholds
        .iter()
        .map(|&t| counts.iter().filter(|&&c| c >= t).count() as f64 / m as f64)
        .collect();
    GraphStats {
        mean_d: total / nf,
        mean_d2: sum_sq / nf,
        mean_didj,
        skips: skips as f64,
        edge_prob: total / (nf * m as f64),
        pattern,
        tail,
    }
}

fn sample_stats(
    params: &GenerationParams,
    num_samples: usize,
    seed: u64,
    max_len: usize,
    thresholds: &[usize],
) -> Result<Vec<GraphStats>, PropsError> {
    (0..num_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, Purpose::Replicate, i as u64, 0, 0);
            let g = generator::generate_ground_truth(params, &mut rng)?;
            Ok(graph_statistics(&g.graph, g.skips(), max_len, thresholds))
        })
        .collect()
}

/// `resamples` lists of graph indices drawn with replacement.
fn bootstrap_indices(num_graphs: usize, resamples: usize, seed: u64) -> Vec<Vec<usize>> {
    (0..resamples)
        .map(|b| {
            let mut rng = substream(seed, Purpose::Bootstrap, b as u64, 0, 0);
            (0..num_graphs).map(|_| rng.random_range(0..num_graphs)).collect()
        })
        .collect()
}

fn mean_over(idx: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    idx.iter().map(|&i| f(i)).sum::<f64>() / idx.len() as f64
}

fn pattern_cells(
    stats: &[GraphStats],
    resamples: &[Vec<usize>],
    pass_fraction: f64,
    envelope: impl Fn(usize, usize) -> (f64, f64),
) -> Vec<PatternCell> {
    let all: Vec<usize> = (0..stats.len()).collect();
    let ratio_for = |idx: &[usize], len: usize, w: usize| {
        let joint = mean_over(idx, |i| stats[i].pattern[len - 1][w]);
        let p = mean_over(idx, |i| stats[i].edge_prob);
        let product = p.powi(w as i32) * (1.0 - p).powi((len - w) as i32);
        (joint, product, joint / product)
    };
    let max_len = stats.first().map_or(0, |s| s.pattern.len());
    let mut cells = Vec::new();
    for len in 1..=max_len {
        for w in 0..=len {
            let (lower, upper) = envelope(len, w);
            let (_, product, ratio) = ratio_for(&all, len, w);
            let joint = Estimate::of(stats.iter().map(|s| s.pattern[len - 1][w]));
            let inside = resamples
                .iter()
                .filter(|idx| {
                    let r = ratio_for(idx, len, w).2;
                    r >= lower && r <= upper
                })
                .count();
            let fraction_inside = inside as f64 / resamples.len() as f64;
            let status = if !(upper > lower) || !(product > 0.0) || joint.mean <= 0.0 {
                CellStatus::Inconclusive
            } else {
                classify(fraction_inside, pass_fraction)
            };
            cells.push(PatternCell {
                pattern: "1".repeat(w) + &"0".repeat(len - w),
                length: len,
                weight: w,
                joint,
                product,
                ratio,
                lower,
                upper,
                fraction_inside,
                status,
            });
        }
    }
    cells
}

/// Samples `num_samples` graphs from `params` (and as many from the
/// equal-popularity block model of the same size) and checks every property.
pub fn verify_propositions<R: RngCore + ?Sized>(
    params: &GenerationParams,
    num_samples: usize,
    rng: &mut R,
) -> Result<PropsReport, PropsError> {
    verify_propositions_with(params, num_samples, &PropsOptions::default(), rng)
}

pub fn verify_propositions_with<R: RngCore + ?Sized>(
    params: &GenerationParams,
    num_samples: usize,
    options: &PropsOptions,
    rng: &mut R,
) -> Result<PropsReport, PropsError> {
    params.validate()?;
    if num_samples < 2 {
        return Err(PropsError::Input("need at least two graphs".into()));
    }
    if options.bootstrap_resamples == 0 {
        return Err(PropsError::Input("need at least one bootstrap resample".into()));
    }
    let seed = rng.next_u64();
    let levels: Vec<f64> = options.psi_grid.iter().map(|&psi| bounds::prop2_level(params, psi)).collect();
    let thresholds: Vec<usize> = levels.iter().map(|l| l.ceil() as usize).collect();
    let tails: Vec<(f64, f64)> = options
        .psi_grid
        .iter()
        .map(|&psi| Ok((bounds::prop2_tail_bound(params, psi)?, bounds::prop2_exponent(params, psi)?)))
        .collect::<Result<_, PropsError>>()?;

    let stats = sample_stats(params, num_samples, seed, options.max_pattern_len, &thresholds)?;
    let resamples = bootstrap_indices(num_samples, options.bootstrap_resamples, seed);

    let moments = Moments {
        d: Estimate::of(stats.iter().map(|s| s.mean_d)),
        d2: Estimate::of(stats.iter().map(|s| s.mean_d2)),
        d_i_d_j: Estimate::of(stats.iter().map(|s| s.mean_didj)),
        skips: Estimate::of(stats.iter().map(|s| s.skips)),
    };

    let tail = options
        .psi_grid
        .iter()
        .enumerate()
        .map(|(t, &psi)| {
            let (bound, exponent) = tails[t];
            let below = resamples.iter().filter(|idx| mean_over(idx, |i| stats[i].tail[t]) <= bound).count();
            let fraction_below = below as f64 / resamples.len() as f64;
            TailCell {
                psi,
                level: levels[t],
                empirical: Estimate::of(stats.iter().map(|s| s.tail[t])),
                bound,
                exponent_nats: exponent,
                leading_constant: 1.0,
                fraction_below,
                status: classify(fraction_below, options.pass_fraction),
            }
        })
        .collect();

    let m = params.m as f64;
    let mu = params.mu as f64;
    let groups_exchangeable = params.tau0.iter().all(|&t| t == params.tau0[0]);
    let pa_factorization = if groups_exchangeable {
        let upper = (mu / params.beta()).exp();
        pattern_cells(&stats, &resamples, options.pass_fraction, |len, _| (1.0 - len as f64 * mu / m, upper))
    } else {
        Vec::new()
    };

    let iee = GenerationParams::iee(params.n, params.m, params.mu)?;
    let iee_stats = if params.model == iee.model {
        stats
    } else {
        sample_stats(&iee, num_samples, seed ^ 0x5b, options.max_pattern_len, &[])?
    };
    let delta = iee.delta() as f64;
    let sb_factorization = pattern_cells(&iee_stats, &resamples, options.pass_fraction, |_, w| {
        let w = w as f64;
        ((1.0 - w / delta).powf(w), (1.0 + w / delta).powf(w))
    });

    Ok(PropsReport {
        params: params.clone(),
        num_samples,
        options: options.clone(),
        moments,
        tail,
        pa_factorization,
        sb_factorization,
    })
}
