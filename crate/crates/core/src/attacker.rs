//! Information threshold strategy (ITS).
//!
//! The attacker queries the victim's group memberships one group at a time
//! in a fixed order. After every response each user's *information value*
//! (log prior plus the accumulated log-likelihood ratios of the responses
//! against that user's scanned fingerprint) is updated, and the attack stops
//! as soon as exactly one user's value exceeds `ln(1/epsilon)`.
//!
//! Three variants share this loop:
//!
//! * `T1` — one known scan channel, responses taken at face value.
//! * `T2` — block-model ground truth; groups are queried community by
//!   community, most popular first, and each community has its own edge prior.
//! * `T3` — unknown per-user scan channel from a finite set and a known noisy
//!   query channel for the victim. Each user keeps one running sum per scan
//!   hypothesis and scores the maximum.
//!
//! In T3 the response likelihood given a scanned bit routes through the true
//! edge: the scan hypothesis gives `P(E_0 | E_s)` and the victim's query
//! channel gives `P(Y | E_0)`. The response marginal therefore depends only
//! on the query channel.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{self, BinaryChannel, ChannelError};
use crate::model::{AttackOutcome, BipartiteGraph, GenerationParams, NoiseModel, VictimDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("query index {t} is past the last group (n = {n})")]
    QueryOutOfRange { t: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "t1")]
    T1NoiselessQuery,
    #[serde(rename = "t2")]
    T2StochasticBlock,
    #[serde(rename = "t3")]
    T3Compound,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::T1NoiselessQuery => "T1",
            Variant::T2StochasticBlock => "T2",
            Variant::T3Compound => "T3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOrder {
    Index,
    CommunityPopularityDesc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItsConfig {
    pub epsilon: f64,
    pub variant: Variant,
    pub query_order: QueryOrder,
    /// No identification before this many queries have been answered.
    pub min_queries_floor: usize,
}

impl ItsConfig {
    pub fn new(epsilon: f64, variant: Variant) -> Result<Self, AttackError> {
        let query_order = match variant {
            Variant::T2StochasticBlock => QueryOrder::CommunityPopularityDesc,
            _ => QueryOrder::Index,
        };
        let cfg = Self { epsilon, variant, query_order, min_queries_floor: 0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(AttackError::Config(format!("epsilon {} must lie in (0, 1)", self.epsilon)));
        }
        if self.variant == Variant::T2StochasticBlock && self.query_order != QueryOrder::CommunityPopularityDesc {
            return Err(AttackError::Config("T2 queries communities in descending popularity".into()));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        (1.0 / self.epsilon).ln()
    }
}

/// A log-domain score where a zero likelihood is a terminal state rather
/// than a float infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Eliminated,
    Finite(f64),
}

impl Score {
    fn from_ratio(ratio: f64) -> Self {
        if ratio > 0.0 {
            Score::Finite(ratio.ln())
        } else {
            Score::Eliminated
        }
    }

    #[inline]
    pub fn plus(self, other: Score) -> Score {
        match (self, other) {
            (Score::Finite(a), Score::Finite(b)) => Score::Finite(a + b),
            _ => Score::Eliminated,
        }
    }

    #[inline]
    pub fn max(self, other: Score) -> Score {
        match (self, other) {
            (Score::Finite(a), Score::Finite(b)) => Score::Finite(a.max(b)),
            (Score::Eliminated, x) | (x, Score::Eliminated) => x,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Score::Finite(v) => Some(v),
            Score::Eliminated => None,
        }
    }

    #[inline]
    fn exceeds(self, threshold: f64) -> bool {
        matches!(self, Score::Finite(v) if v > threshold)
    }
}

/// Per-query increments indexed `[scanned bit][response bit]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementTable(pub [[Score; 2]; 2]);

impl IncrementTable {
    /// `ln(P(Y = y | E_s = f) / P(Y = y))` for a Bernoulli(`p1`) true edge
    /// seen through `scan` and answered through `query`.
    pub fn new(p1: f64, scan: &BinaryChannel, query: &BinaryChannel) -> Result<Self, AttackError> {
        let compound = channels::compound_response_channel(p1, scan, query)?;
        let marginal = query.output_marginal(p1);
        let mut t = [[Score::Eliminated; 2]; 2];
        for f in [false, true] {
            for y in [false, true] {
                let py = marginal[y as usize];
                t[f as usize][y as usize] = if py > 0.0 {
                    Score::from_ratio(compound.prob(f, y) / py)
                } else {
                    // Response never observed; the entry is never read.
                    Score::Eliminated
                };
            }
        }
        Ok(Self(t))
    }

    #[inline]
    pub fn get(&self, f: bool, y: bool) -> Score {
        self.0[f as usize][y as usize]
    }
}

/// What the attacker knows about how the ground truth was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackerKnowledge {
    /// Marginal probability that a user belongs to a group, `mu / m`.
    pub edge_prior: f64,
    pub mu: f64,
    pub beta: f64,
    /// Initial group popularities; required for T2.
    pub group_tau: Option<Vec<f64>>,
}

impl AttackerKnowledge {
    pub fn from_params(params: &GenerationParams) -> Self {
        Self {
            edge_prior: params.edge_prior(),
            mu: params.mu as f64,
            beta: params.beta(),
            group_tau: Some(params.tau0.clone()),
        }
    }

    /// Empirical counterpart for an observed graph: `mu` is the mean group size.
    pub fn from_graph(graph: &BipartiteGraph) -> Self {
        let n = graph.num_groups() as f64;
        let m = graph.num_users() as f64;
        let mu = graph.num_edges() as f64 / n;
        Self { edge_prior: mu / m, mu, beta: m / n, group_tau: None }
    }

    /// Community index of every group (communities in descending popularity)
    /// and each community's edge prior `tau / sum_j tau_j * mu / beta`.
    pub fn community_structure(&self) -> Result<(Vec<usize>, Vec<f64>), AttackError> {
        let tau = self
            .group_tau
            .as_ref()
            .ok_or_else(|| AttackError::Config("community attack needs initial popularities".into()))?;
        let mut levels: Vec<f64> = tau.to_vec();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        let total: f64 = tau.iter().sum();
        let of_group = tau
            .iter()
            .map(|t| levels.iter().position(|l| l == t).expect("level present"))
            .collect();
        let priors = levels.iter().map(|l| l / total * self.mu / self.beta).collect();
        Ok((of_group, priors))
    }
}

/// Order in which groups are queried; a permutation of `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryPlan {
    order: Vec<usize>,
}

impl QueryPlan {
    pub fn index_order(n: usize) -> Self {
        Self { order: (0..n).collect() }
    }

    /// Groups sorted by initial popularity descending, ties by index.
    pub fn by_popularity(tau: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..tau.len()).collect();
        order.sort_by(|&a, &b| tau[b].total_cmp(&tau[a]).then(a.cmp(&b)));
        Self { order }
    }

    pub fn for_config(config: &ItsConfig, n: usize, knowledge: &AttackerKnowledge) -> Result<Self, AttackError> {
        match config.query_order {
            QueryOrder::Index => Ok(Self::index_order(n)),
            QueryOrder::CommunityPopularityDesc => {
                let tau = knowledge
                    .group_tau
                    .as_ref()
                    .ok_or_else(|| AttackError::Config("popularity order needs initial popularities".into()))?;
                if tau.len() != n {
                    return Err(AttackError::Dimensions(format!("{} popularities for {n} groups", tau.len())));
                }
                Ok(Self::by_popularity(tau))
            }
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Group to query after `t` queries have been made.
pub fn next_query(plan: &QueryPlan, t: usize) -> Result<usize, AttackError> {
    plan.order
        .get(t)
        .copied()
        .ok_or(AttackError::QueryOutOfRange { t, n: plan.len() })
}

/// Running information values of every user.
#[derive(Debug, Clone)]
pub struct InformationState {
    initial: Vec<f64>,
    values: Vec<Score>,
    // T3 only: user-major `m x |gamma|` log-likelihood sums, without the prior.
    per_gamma: Vec<Score>,
    gammas: usize,
    t: usize,
}

impl InformationState {
    /// Starts every user at `ln P_M(k)`; `gammas` is the number of scan
    /// hypotheses tracked separately (use 0 for T1/T2).
    pub fn new(dist: &VictimDistribution, gammas: usize) -> Self {
        let initial: Vec<f64> = (0..dist.num_users()).map(|k| dist.probability(k).ln()).collect();
        let values = initial
            .iter()
            .map(|&v| if v.is_finite() { Score::Finite(v) } else { Score::Eliminated })
            .collect();
        Self {
            per_gamma: vec![Score::Finite(0.0); initial.len() * gammas],
            initial,
            values,
            gammas,
            t: 0,
        }
    }

    pub fn num_users(&self) -> usize {
        self.values.len()
    }

    pub fn queries(&self) -> usize {
        self.t
    }

    pub fn value(&self, k: usize) -> Score {
        self.values[k]
    }

    pub fn values(&self) -> &[Score] {
        &self.values
    }

    pub fn initial(&self, k: usize) -> f64 {
        self.initial[k]
    }

    /// Log-likelihood sum of user `k` under scan hypothesis `gamma` (T3).
    pub fn gamma_sum(&self, k: usize, gamma: usize) -> Score {
        self.per_gamma[k * self.gammas + gamma]
    }
}

/// T1 update: every user adds `table[f_k][y]`.
pub fn info_update_t1(state: &mut InformationState, scanned: &[bool], y: bool, table: &IncrementTable) {
    debug_assert_eq!(scanned.len(), state.values.len());
    let inc = [table.get(false, y), table.get(true, y)];
    for (v, &f) in state.values.iter_mut().zip(scanned) {
        *v = v.plus(inc[f as usize]);
    }
    state.t += 1;
}

/// T2 update: like T1, with the table of the queried group's community.
pub fn info_update_t2(
    state: &mut InformationState,
    scanned: &[bool],
    y: bool,
    community: usize,
    tables: &[IncrementTable],
) {
    info_update_t1(state, scanned, y, &tables[community]);
}

/// T3 update: one running sum per scan hypothesis, score is the maximum.
pub fn info_update_t3(state: &mut InformationState, scanned: &[bool], y: bool, tables: &[IncrementTable]) {
    let g = state.gammas;
    debug_assert_eq!(tables.len(), g);
    let inc: Vec<[Score; 2]> = tables.iter().map(|t| [t.get(false, y), t.get(true, y)]).collect();
    for (k, &f) in scanned.iter().enumerate() {
        let row = &mut state.per_gamma[k * g..(k + 1) * g];
        let mut best = Score::Eliminated;
        for (sum, inc) in row.iter_mut().zip(&inc) {
            *sum = sum.plus(inc[f as usize]);
            best = best.max(*sum);
        }
        state.values[k] = best.plus(Score::Finite(state.initial[k]));
    }
    state.t += 1;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Identified(usize),
    Continue,
}

/// Identifies user `k` iff `k` is the only user above `ln(1/epsilon)` and
/// at least `floor` queries have been answered.
pub fn identify(state: &InformationState, epsilon: f64, floor: usize) -> Decision {
    if state.t < floor {
        return Decision::Continue;
    }
    let threshold = (1.0 / epsilon).ln();
    let mut found = None;
    for (k, v) in state.values.iter().enumerate() {
        if v.exceeds(threshold) {
            if found.is_some() {
                return Decision::Continue;
            }
            found = Some(k);
        }
    }
    found.map_or(Decision::Continue, Decision::Identified)
}

enum Tables {
    Single(IncrementTable),
    Community { of_group: Vec<usize>, tables: Vec<IncrementTable> },
    // Indexed by query label, then scan label; built on first use.
    Compound(Vec<Option<Vec<IncrementTable>>>),
}

/// Everything about an attack that does not depend on the victim.
pub struct Attacker<'a> {
    scanned: &'a BipartiteGraph,
    noise: &'a NoiseModel,
    dist: &'a VictimDistribution,
    config: ItsConfig,
    plan: QueryPlan,
    knowledge: AttackerKnowledge,
    tables: Tables,
}

impl<'a> Attacker<'a> {
    pub fn new(
        knowledge: AttackerKnowledge,
        scanned: &'a BipartiteGraph,
        noise: &'a NoiseModel,
        dist: &'a VictimDistribution,
        config: ItsConfig,
    ) -> Result<Self, AttackError> {
        config.validate()?;
        let m = scanned.num_users();
        if noise.num_users() != m || dist.num_users() != m {
            return Err(AttackError::Dimensions(format!(
                "graph has {m} users, noise model {}, victim distribution {}",
                noise.num_users(),
                dist.num_users()
            )));
        }
        let plan = QueryPlan::for_config(&config, scanned.num_groups(), &knowledge)?;
        let p1 = knowledge.edge_prior;
        let identity = BinaryChannel::identity();
        let single_scan = || -> Result<&BinaryChannel, AttackError> {
            match noise.gamma_channels() {
                [only] => Ok(&only.channel),
                many => Err(AttackError::Config(format!(
                    "{} needs a single scan channel, got {}",
                    config.variant,
                    many.len()
                ))),
            }
        };
        let tables = match config.variant {
            Variant::T1NoiselessQuery => Tables::Single(IncrementTable::new(p1, single_scan()?, &identity)?),
            Variant::T2StochasticBlock => {
                let scan = single_scan()?;
                let (of_group, priors) = knowledge.community_structure()?;
                let tables = priors
                    .iter()
                    .map(|&p| IncrementTable::new(p, scan, &identity))
                    .collect::<Result<_, _>>()?;
                Tables::Community { of_group, tables }
            }
            Variant::T3Compound => Tables::Compound(vec![None; noise.theta_channels().len()]),
        };
        Ok(Self { scanned, noise, dist, config, plan, knowledge, tables })
    }

    pub fn plan(&self) -> &QueryPlan {
        &self.plan
    }

    pub fn config(&self) -> &ItsConfig {
        &self.config
    }

    fn compound_tables(&mut self, theta: usize) -> Result<Vec<IncrementTable>, AttackError> {
        let Tables::Compound(cache) = &mut self.tables else {
            unreachable!("only called for T3")
        };
        if cache[theta].is_none() {
            let query = &self.noise.theta_channels()[theta].channel;
            let built = self
                .noise
                .gamma_channels()
                .iter()
                .map(|g| IncrementTable::new(self.knowledge.edge_prior, &g.channel, query))
                .collect::<Result<Vec<_>, _>>()?;
            cache[theta] = Some(built);
        }
        Ok(cache[theta].clone().expect("filled above"))
    }

    /// Runs the attack against `victim`, drawing responses from the
    /// ground truth through the victim's query channel.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        truth: &BipartiteGraph,
        victim: usize,
        rng: &mut R,
    ) -> Result<AttackOutcome, AttackError> {
        let m = self.scanned.num_users();
        let n = self.scanned.num_groups();
        if truth.num_users() != m || truth.num_groups() != n {
            return Err(AttackError::Dimensions("ground truth and scanned graph differ in shape".into()));
        }
        if victim >= m {
            return Err(AttackError::Dimensions(format!("victim {victim} out of range (m = {m})")));
        }
        let compound = match self.config.variant {
            Variant::T3Compound => Some(self.compound_tables(self.noise.theta_of(victim))?),
            _ => None,
        };
        let gammas = compound.as_ref().map_or(0, Vec::len);
        let mut state = InformationState::new(self.dist, gammas);
        let query_channel = *self.noise.query_channel(victim);
        let mut column = vec![false; m];
        let mut transcript = Vec::new();

        for t in 0..n {
            let j = next_query(&self.plan, t)?;
            let y = channels::query_response(truth.has_edge(victim, j), &query_channel, rng);
            let members = self.scanned.group_members(j);
            for &k in members {
                column[k as usize] = true;
            }
            match (&self.tables, &compound) {
                (_, Some(tables)) => info_update_t3(&mut state, &column, y, tables),
                (Tables::Single(table), None) => info_update_t1(&mut state, &column, y, table),
                (Tables::Community { of_group, tables }, None) => {
                    info_update_t2(&mut state, &column, y, of_group[j], tables)
                }
                (Tables::Compound(_), None) => unreachable!("compound tables always built for T3"),
            }
            for &k in members {
                column[k as usize] = false;
            }
            transcript.push((j, y));
            if let Decision::Identified(k) = identify(&state, self.config.epsilon, self.config.min_queries_floor) {
                return Ok(AttackOutcome {
                    identified: Some(k),
                    victim,
                    num_queries: transcript.len(),
                    transcript,
                    correct: k == victim,
                    exhausted: false,
                });
            }
        }
        Ok(AttackOutcome {
            identified: None,
            victim,
            num_queries: transcript.len(),
            transcript,
            correct: false,
            exhausted: true,
        })
    }
}

/// One-shot convenience wrapper around [`Attacker`].
#[allow(clippy::too_many_arguments)]
pub fn run_attack<R: Rng + ?Sized>(
    truth: &BipartiteGraph,
    scanned: &BipartiteGraph,
    victim: usize,
    noise: &NoiseModel,
    dist: &VictimDistribution,
    knowledge: AttackerKnowledge,
    config: ItsConfig,
    rng: &mut R,
) -> Result<AttackOutcome, AttackError> {
    Attacker::new(knowledge, scanned, noise, dist, config)?.run(truth, victim, rng)
}
