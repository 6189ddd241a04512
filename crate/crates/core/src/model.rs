//! Domain types shared across the crate.
//!
//! Indices are zero-based throughout: users are `0..m`, groups `0..n`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::BinaryChannel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("growth exponent {0} must lie in (0, 1]")]
    BadAlpha(f64),
    #[error("expected {expected} initial popularities, got {got}")]
    PopularityLength { expected: usize, got: usize },
    #[error("initial popularity {0} must be positive and finite")]
    BadPopularity(f64),
    #[error("alpha-PA and IEE models require equal initial popularities")]
    UnequalPopularities,
    #[error("user index {index} out of range (m = {m})")]
    UserOutOfRange { index: usize, m: usize },
    #[error("group index {index} out of range (n = {n})")]
    GroupOutOfRange { index: usize, n: usize },
    #[error("duplicate edge (user {user}, group {group})")]
    DuplicateEdge { user: usize, group: usize },
    #[error("victim weights sum to {sum}, expected {expected}")]
    WeightSum { sum: f64, expected: f64 },
    #[error("victim weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("largest victim weight {max} is not below the cap {cap}")]
    WeightCap { max: f64, cap: f64 },
    #[error("noise model: {0}")]
    Noise(String),
}

/// Growth rule for the ground-truth process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Popularity becomes `size^alpha + tau0` each time a group is chosen.
    AlphaPa,
    /// Popularities stay at their initial values (alpha -> 0).
    StochasticBlock,
    /// Stochastic block with a single community.
    Iee,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub n: usize,
    pub m: usize,
    pub mu: usize,
    /// Ignored (recorded as 0) for the block models.
    pub alpha: f64,
    pub tau0: Vec<f64>,
    pub model: ModelKind,
}

/// Groups sharing one initial popularity value.
#[derive(Debug, Clone, PartialEq)]
pub struct Community {
    pub tau: f64,
    pub groups: Vec<usize>,
}

impl GenerationParams {
    pub fn alpha_pa(n: usize, m: usize, mu: usize, alpha: f64) -> Result<Self, ModelError> {
        let p = Self { n, m, mu, alpha, tau0: vec![1.0; n], model: ModelKind::AlphaPa };
        p.validate()?;
        Ok(p)
    }

    pub fn stochastic_block(n: usize, m: usize, mu: usize, tau0: Vec<f64>) -> Result<Self, ModelError> {
        let p = Self { n, m, mu, alpha: 0.0, tau0, model: ModelKind::StochasticBlock };
        p.validate()?;
        Ok(p)
    }

    pub fn iee(n: usize, m: usize, mu: usize) -> Result<Self, ModelError> {
        let p = Self { n, m, mu, alpha: 0.0, tau0: vec![1.0; n], model: ModelKind::Iee };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n == 0 {
            return Err(ModelError::ZeroCount("n"));
        }
        if self.m == 0 {
            return Err(ModelError::ZeroCount("m"));
        }
        if self.mu == 0 {
            return Err(ModelError::ZeroCount("mu"));
        }
        if self.tau0.len() != self.n {
            return Err(ModelError::PopularityLength { expected: self.n, got: self.tau0.len() });
        }
        if let Some(&bad) = self.tau0.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(ModelError::BadPopularity(bad));
        }
        match self.model {
            ModelKind::AlphaPa => {
                if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                    return Err(ModelError::BadAlpha(self.alpha));
                }
                if self.tau0.iter().any(|&t| t != 1.0) {
                    return Err(ModelError::UnequalPopularities);
                }
            }
            ModelKind::Iee => {
                if self.tau0.iter().any(|&t| t != self.tau0[0]) {
                    return Err(ModelError::UnequalPopularities);
                }
            }
            ModelKind::StochasticBlock => {}
        }
        Ok(())
    }

    /// Total number of generation steps, `mu * n`.
    pub fn delta(&self) -> usize {
        self.mu * self.n
    }

    /// Users per group, `m / n`.
    pub fn beta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// Marginal edge probability `mu / m` used as the attacker's prior.
    pub fn edge_prior(&self) -> f64 {
        self.mu as f64 / self.m as f64
    }

    pub fn is_block_model(&self) -> bool {
        matches!(self.model, ModelKind::StochasticBlock | ModelKind::Iee)
    }

    /// Communities ordered by popularity, most popular first; groups inside a
    /// community are in ascending index order.
    pub fn communities(&self) -> Vec<Community> {
        let mut out: Vec<Community> = Vec::new();
        for (j, &tau) in self.tau0.iter().enumerate() {
            match out.iter_mut().find(|c| c.tau == tau) {
                Some(c) => c.groups.push(j),
                None => out.push(Community { tau, groups: vec![j] }),
            }
        }
        out.sort_by(|a, b| b.tau.total_cmp(&a.tau));
        out
    }
}

/// User-group membership graph, indexed both by group and by user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    members: Vec<Vec<u32>>,
    memberships: Vec<Vec<u32>>,
    edges: usize,
}

impl BipartiteGraph {
    pub fn empty(m: usize, n: usize) -> Self {
        Self { members: vec![Vec::new(); n], memberships: vec![Vec::new(); m], edges: 0 }
    }

    pub fn from_edges<I>(m: usize, n: usize, edges: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut user_lists = vec![Vec::new(); m];
        for (k, j) in edges {
            if k >= m {
                return Err(ModelError::UserOutOfRange { index: k, m });
            }
            if j >= n {
                return Err(ModelError::GroupOutOfRange { index: j, n });
            }
            user_lists[k].push(j as u32);
        }
        for (k, list) in user_lists.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(ModelError::DuplicateEdge { user: k, group: w[0] as usize });
            }
        }
        Self::from_user_lists(n, user_lists)
    }

    /// Builds from per-user sorted, duplicate-free group lists.
    pub fn from_user_lists(n: usize, user_lists: Vec<Vec<u32>>) -> Result<Self, ModelError> {
        let mut members = vec![Vec::new(); n];
        let mut edges = 0;
        for (k, list) in user_lists.iter().enumerate() {
            for (i, &j) in list.iter().enumerate() {
                if j as usize >= n {
                    return Err(ModelError::GroupOutOfRange { index: j as usize, n });
                }
                if i > 0 && list[i - 1] >= j {
                    return Err(ModelError::DuplicateEdge { user: k, group: j as usize });
                }
                members[j as usize].push(k as u32);
            }
            edges += list.len();
        }
        Ok(Self { members, memberships: user_lists, edges })
    }

    /// Builds from per-group member lists (any order, no duplicates).
    pub fn from_group_lists(m: usize, group_lists: Vec<Vec<u32>>) -> Result<Self, ModelError> {
        let n = group_lists.len();
        let mut user_lists = vec![Vec::new(); m];
        for (j, list) in group_lists.iter().enumerate() {
            for &k in list {
                if k as usize >= m {
                    return Err(ModelError::UserOutOfRange { index: k as usize, m });
                }
                user_lists[k as usize].push(j as u32);
            }
        }
        for (k, list) in user_lists.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(ModelError::DuplicateEdge { user: k, group: w[0] as usize });
            }
        }
        Self::from_user_lists(n, user_lists)
    }

    pub fn num_users(&self) -> usize {
        self.memberships.len()
    }

    pub fn num_groups(&self) -> usize {
        self.members.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges
    }

    /// Sorted members of group `j`.
    pub fn group_members(&self, j: usize) -> &[u32] {
        &self.members[j]
    }

    /// Sorted groups of user `k`.
    pub fn user_groups(&self, k: usize) -> &[u32] {
        &self.memberships[k]
    }

    pub fn group_size(&self, j: usize) -> usize {
        self.members[j].len()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, k: usize, j: usize) -> bool {
        self.memberships[k].binary_search(&(j as u32)).is_ok()
    }

    /// `(user, group)` pairs ordered by user then group.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.memberships
            .iter()
            .enumerate()
            .flat_map(|(k, list)| list.iter().map(move |&j| (k, j as usize)))
    }

    /// Membership bits of user `k` restricted to `groups`, in the given order.
    pub fn fingerprint(&self, k: usize, groups: &[usize]) -> Result<Vec<bool>, ModelError> {
        if k >= self.num_users() {
            return Err(ModelError::UserOutOfRange { index: k, m: self.num_users() });
        }
        groups
            .iter()
            .map(|&j| {
                if j >= self.num_groups() {
                    Err(ModelError::GroupOutOfRange { index: j, n: self.num_groups() })
                } else {
                    Ok(self.has_edge(k, j))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VictimKind {
    Uniform,
    ZipfNormalized,
    Custom,
}

/// Distribution of the victim index, `P(k) = c_k / m`.
#[derive(Debug, Clone, PartialEq)]
pub struct VictimDistribution {
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    lambda_cap: f64,
    kind: VictimKind,
}

impl VictimDistribution {
    pub fn uniform(m: usize) -> Result<Self, ModelError> {
        if m == 0 {
            return Err(ModelError::ZeroCount("m"));
        }
        Self::build(vec![1.0; m], None, VictimKind::Uniform)
    }

    /// `c_k` proportional to `(k + 1)^-exponent`, rescaled to sum to `m`.
    pub fn zipf(m: usize, exponent: f64) -> Result<Self, ModelError> {
        if m == 0 {
            return Err(ModelError::ZeroCount("m"));
        }
        let raw: Vec<f64> = (1..=m).map(|r| (r as f64).powf(-exponent)).collect();
        Self::build(rescale(&raw, m), None, VictimKind::ZipfNormalized)
    }

    /// Uses `c` as given; it must already sum to its length.
    pub fn custom(c: Vec<f64>, lambda_cap: Option<f64>) -> Result<Self, ModelError> {
        Self::build(c, lambda_cap, VictimKind::Custom)
    }

    /// Rescales arbitrary nonnegative weights so they sum to their length.
    pub fn from_weights(weights: &[f64]) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::ZeroCount("m"));
        }
        if let Some(&bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(ModelError::BadWeight(bad));
        }
        Self::build(rescale(weights, weights.len()), None, VictimKind::Custom)
    }

    fn build(c: Vec<f64>, lambda_cap: Option<f64>, kind: VictimKind) -> Result<Self, ModelError> {
        let m = c.len();
        if m == 0 {
            return Err(ModelError::ZeroCount("m"));
        }
        if let Some(&bad) = c.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(ModelError::BadWeight(bad));
        }
        let sum: f64 = c.iter().sum();
        if (sum - m as f64).abs() > 1e-9 {
            return Err(ModelError::WeightSum { sum, expected: m as f64 });
        }
        let max = c.iter().copied().fold(0.0, f64::max);
        let lambda_cap = lambda_cap.unwrap_or(max + 1.0);
        if max >= lambda_cap {
            return Err(ModelError::WeightCap { max, cap: lambda_cap });
        }
        let mut acc = 0.0;
        let cumulative = c
            .iter()
            .map(|w| {
                acc += w / m as f64;
                acc
            })
            .collect();
        Ok(Self { weights: c, cumulative, lambda_cap, kind })
    }

    pub fn num_users(&self) -> usize {
        self.weights.len()
    }

    pub fn kind(&self) -> VictimKind {
        self.kind
    }

    pub fn lambda_cap(&self) -> f64 {
        self.lambda_cap
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn probability(&self, k: usize) -> f64 {
        self.weights[k] / self.weights.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if self.kind == VictimKind::Uniform {
            return rng.random_range(0..self.weights.len());
        }
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // Rounding can push `u` past the last boundary; walk back to a
        // user that actually has mass.
        let mut k = idx.min(self.weights.len() - 1);
        while self.weights[k] == 0.0 && k > 0 {
            k -= 1;
        }
        k
    }
}

fn rescale(raw: &[f64], m: usize) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut c: Vec<f64> = raw.iter().map(|w| w * m as f64 / total).collect();
    // Push the rounding residue into the largest entry so the sum is exact
    // to within the 1e-9 invariant.
    let residue = m as f64 - c.iter().sum::<f64>();
    if let Some(i) = (0..c.len()).max_by(|&a, &b| c[a].total_cmp(&c[b])) {
        c[i] += residue;
    }
    c
}

/// Draws the victim index from `dist`.
pub fn sample_victim<R: Rng + ?Sized>(dist: &VictimDistribution, rng: &mut R) -> usize {
    dist.sample(rng)
}

/// Membership bits of user `k` over `groups` in `graph`.
pub fn fingerprint(graph: &BipartiteGraph, k: usize, groups: &[usize]) -> Result<Vec<bool>, ModelError> {
    graph.fingerprint(k, groups)
}

/// A channel with a display label, e.g. `"bsc(0.01)"` or `"theta=3"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledChannel {
    pub label: String,
    pub channel: BinaryChannel,
}

impl LabeledChannel {
    pub fn new(label: impl Into<String>, channel: BinaryChannel) -> Self {
        Self { label: label.into(), channel }
    }
}

/// Per-user scan channels (unknown to the attacker) and query channels
/// (known to the attacker for the victim).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    gamma_channels: Vec<LabeledChannel>,
    theta_channels: Vec<LabeledChannel>,
    gamma_of_user: Vec<usize>,
    theta_of_user: Vec<usize>,
}

impl NoiseModel {
    pub fn new(
        gamma_channels: Vec<LabeledChannel>,
        theta_channels: Vec<LabeledChannel>,
        gamma_of_user: Vec<usize>,
        theta_of_user: Vec<usize>,
    ) -> Result<Self, ModelError> {
        if gamma_channels.is_empty() || theta_channels.is_empty() {
            return Err(ModelError::Noise("channel sets must be nonempty".into()));
        }
        if gamma_of_user.len() != theta_of_user.len() {
            return Err(ModelError::Noise(format!(
                "assignment lengths differ ({} vs {})",
                gamma_of_user.len(),
                theta_of_user.len()
            )));
        }
        if let Some(&g) = gamma_of_user.iter().find(|&&g| g >= gamma_channels.len()) {
            return Err(ModelError::Noise(format!("scan label index {g} undefined")));
        }
        if let Some(&t) = theta_of_user.iter().find(|&&t| t >= theta_channels.len()) {
            return Err(ModelError::Noise(format!("query label index {t} undefined")));
        }
        Ok(Self { gamma_channels, theta_channels, gamma_of_user, theta_of_user })
    }

    /// Identity scan and query channels for every user.
    pub fn noiseless(m: usize) -> Self {
        Self::uniform(m, BinaryChannel::identity(), BinaryChannel::identity())
    }

    /// The same scan and query channel for every user.
    pub fn uniform(m: usize, scan: BinaryChannel, query: BinaryChannel) -> Self {
        Self {
            gamma_channels: vec![LabeledChannel::new("scan", scan)],
            theta_channels: vec![LabeledChannel::new("query", query)],
            gamma_of_user: vec![0; m],
            theta_of_user: vec![0; m],
        }
    }

    /// User `k` gets scan channel `k mod |gamma|` and query channel `k mod |theta|`.
    pub fn round_robin(
        m: usize,
        gamma_channels: Vec<LabeledChannel>,
        theta_channels: Vec<LabeledChannel>,
    ) -> Result<Self, ModelError> {
        let g = gamma_channels.len().max(1);
        let t = theta_channels.len().max(1);
        Self::new(
            gamma_channels,
            theta_channels,
            (0..m).map(|k| k % g).collect(),
            (0..m).map(|k| k % t).collect(),
        )
    }

    pub fn num_users(&self) -> usize {
        self.gamma_of_user.len()
    }

    pub fn gamma_channels(&self) -> &[LabeledChannel] {
        &self.gamma_channels
    }

    pub fn theta_channels(&self) -> &[LabeledChannel] {
        &self.theta_channels
    }

    pub fn gamma_of(&self, k: usize) -> usize {
        self.gamma_of_user[k]
    }

    pub fn theta_of(&self, k: usize) -> usize {
        self.theta_of_user[k]
    }

    pub fn scan_channel(&self, k: usize) -> &BinaryChannel {
        &self.gamma_channels[self.gamma_of_user[k]].channel
    }

    pub fn query_channel(&self, k: usize) -> &BinaryChannel {
        &self.theta_channels[self.theta_of_user[k]].channel
    }

    /// Fraction of users with each `(gamma, theta)` pair, indexed `[gamma][theta]`.
    pub fn joint_weights(&self) -> Vec<Vec<f64>> {
        let mut w = vec![vec![0.0; self.theta_channels.len()]; self.gamma_channels.len()];
        let m = self.num_users() as f64;
        for (&g, &t) in self.gamma_of_user.iter().zip(&self.theta_of_user) {
            w[g][t] += 1.0 / m;
        }
        w
    }
}

/// Result of one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub identified: Option<usize>,
    pub victim: usize,
    pub num_queries: usize,
    /// `(queried group, response bit)` in query order.
    pub transcript: Vec<(usize, bool)>,
    pub correct: bool,
    /// The query budget of `n` groups ran out without a unique crossing.
    pub exhausted: bool,
}
