//! Ground-truth growth process.
//!
//! The graph is grown in `delta = mu * n` steps. Each step picks a group with
//! probability proportional to its current popularity, attaches a user drawn
//! uniformly from the group's non-members, and then bumps the group's
//! popularity. Under alpha-PA a group chosen `c` times has popularity
//! `c^alpha + tau0`; the block models never change popularity.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::model::{BipartiteGraph, GenerationParams, ModelError, ModelKind};
use crate::prefix_tree::PrefixSumTree;

/// Largest trajectory count `(n * m)^delta` the exact enumerator accepts.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("growth exponent {0} must lie in (0, 1]")]
    BadAlpha(f64),
    #[error("group size after an update must be at least 1")]
    EmptyGroup,
    #[error("instance needs {needed} trajectories, over the enumeration budget of {budget}")]
    OverBudget { needed: u128, budget: u128 },
}

/// How a chosen group's popularity responds to one more member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Growth {
    /// `tau = size^alpha + tau0`.
    Power(f64),
    /// Popularity never changes (block models, alpha -> 0).
    Frozen,
}

impl Growth {
    pub fn of(params: &GenerationParams) -> Self {
        match params.model {
            ModelKind::AlphaPa => Growth::Power(params.alpha),
            ModelKind::StochasticBlock | ModelKind::Iee => Growth::Frozen,
        }
    }
}

/// New popularity of a group that now has `size` members.
pub fn popularity_update(tau_prev: f64, tau0: f64, size: usize, growth: Growth) -> Result<f64, GeneratorError> {
    match growth {
        Growth::Frozen => Ok(tau_prev),
        Growth::Power(alpha) => {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(GeneratorError::BadAlpha(alpha));
            }
            if size == 0 {
                return Err(GeneratorError::EmptyGroup);
            }
            Ok((size as f64).powf(alpha) + tau0)
        }
    }
}

/// Current popularities plus a prefix-sum tree for sampling.
#[derive(Debug, Clone)]
pub struct PopularityState {
    tau: Vec<f64>,
    tau0: Vec<f64>,
    // Times each group has been chosen; equals the group size unless the
    // group was chosen while already full.
    chosen: Vec<usize>,
    total: f64,
    tree: PrefixSumTree,
    growth: Growth,
}

impl PopularityState {
    pub fn new(tau0: &[f64], growth: Growth) -> Self {
        Self {
            tau: tau0.to_vec(),
            tau0: tau0.to_vec(),
            chosen: vec![0; tau0.len()],
            total: tau0.iter().sum(),
            tree: PrefixSumTree::new(tau0),
            growth,
        }
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn selection_probability(&self, j: usize) -> f64 {
        self.tau[j] / self.total
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.tree.find(rng.random::<f64>() * self.total)
    }

    fn record_choice(&mut self, j: usize) {
        self.chosen[j] += 1;
        if let Growth::Frozen = self.growth {
            return;
        }
        let next = popularity_update(self.tau[j], self.tau0[j], self.chosen[j], self.growth)
            .expect("growth validated with the params");
        let delta = next - self.tau[j];
        self.tau[j] = next;
        self.total += delta;
        self.tree.add(j, delta);
    }
}

/// Selection probability of group `j` in `state`.
pub fn selection_probability(state: &PopularityState, j: usize) -> f64 {
    state.selection_probability(j)
}

#[derive(Debug, Clone)]
pub struct GeneratedGraph {
    pub graph: BipartiteGraph,
    /// Steps (zero-based) whose chosen group already contained every user.
    pub skipped_steps: Vec<usize>,
}

impl GeneratedGraph {
    pub fn skips(&self) -> usize {
        self.skipped_steps.len()
    }
}

pub fn generate_ground_truth<R: Rng + ?Sized>(
    params: &GenerationParams,
    rng: &mut R,
) -> Result<GeneratedGraph, GeneratorError> {
    generate_with_observer(params, rng, |_, _| {})
}

/// Runs the growth process, calling `observe(step, state)` before each step.
pub fn generate_with_observer<R, F>(
    params: &GenerationParams,
    rng: &mut R,
    mut observe: F,
) -> Result<GeneratedGraph, GeneratorError>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &PopularityState),
{
    params.validate()?;
    let m = params.m;
    let mut state = PopularityState::new(&params.tau0, Growth::of(params));
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); params.n];
    let mut skipped_steps = Vec::new();

    for step in 0..params.delta() {
        observe(step, &state);
        let j = state.sample(rng);
        let group = &mut members[j];
        if group.len() == m {
            skipped_steps.push(step);
        } else {
            let user = draw_non_member(group, m, rng);
            let pos = group.binary_search(&user).unwrap_err();
            group.insert(pos, user);
        }
        state.record_choice(j);
    }

    let graph = BipartiteGraph::from_group_lists(m, members)?;
    Ok(GeneratedGraph { graph, skipped_steps })
}

/// Uniform draw from `0..m` minus the sorted, non-full `members`.
fn draw_non_member<R: Rng + ?Sized>(members: &[u32], m: usize, rng: &mut R) -> u32 {
    if members.len() * 2 <= m {
        loop {
            let k = rng.random_range(0..m as u32);
            if members.binary_search(&k).is_err() {
                return k;
            }
        }
    }
    // Dense group: pick the r-th non-member directly.
    let mut k = rng.random_range(0..(m - members.len()) as u32);
    for &x in members {
        if x <= k {
            k += 1;
        } else {
            break;
        }
    }
    k
}

/// Exact distribution over final graphs, keyed by the sorted
/// `(user, group)` edge list.
#[derive(Debug, Clone, Default)]
pub struct ExactDistribution {
    pub outcomes: BTreeMap<Vec<(usize, usize)>, f64>,
    /// Total probability of trajectories containing at least one skip.
    pub skip_probability: f64,
}

impl ExactDistribution {
    pub fn total_mass(&self) -> f64 {
        self.outcomes.values().sum()
    }
}

/// Enumerates every `(group, user)` trajectory of the growth process.
///
/// Probabilities are recomputed from scratch at every node from the choice
/// counts, without going through [`PopularityState`].
pub fn brute_force_generation_distribution(params: &GenerationParams) -> Result<ExactDistribution, GeneratorError> {
    params.validate()?;
    let needed = (params.n as u128 * params.m as u128)
        .checked_pow(params.delta() as u32)
        .unwrap_or(u128::MAX);
    if needed > ENUMERATION_BUDGET {
        return Err(GeneratorError::OverBudget { needed, budget: ENUMERATION_BUDGET });
    }

    struct Walk<'a> {
        params: &'a GenerationParams,
        members: Vec<Vec<bool>>,
        chosen: Vec<usize>,
        out: ExactDistribution,
    }

    impl Walk<'_> {
        fn popularity(&self, j: usize) -> f64 {
            let tau0 = self.params.tau0[j];
            match self.params.model {
                ModelKind::AlphaPa if self.chosen[j] > 0 => (self.chosen[j] as f64).powf(self.params.alpha) + tau0,
                _ => tau0,
            }
        }

        fn visit(&mut self, step: usize, prob: f64, skipped: bool) {
            if step == self.params.delta() {
                let mut edges = Vec::new();
                for (j, row) in self.members.iter().enumerate() {
                    for (k, &present) in row.iter().enumerate() {
                        if present {
                            edges.push((k, j));
                        }
                    }
                }
                edges.sort_unstable();
                *self.out.outcomes.entry(edges).or_insert(0.0) += prob;
                if skipped {
                    self.out.skip_probability += prob;
                }
                return;
            }
            let weights: Vec<f64> = (0..self.params.n).map(|j| self.popularity(j)).collect();
            let total: f64 = weights.iter().sum();
            for (j, w) in weights.iter().enumerate() {
                let pj = prob * w / total;
                let free: Vec<usize> = (0..self.params.m).filter(|&k| !self.members[j][k]).collect();
                self.chosen[j] += 1;
                if free.is_empty() {
                    self.visit(step + 1, pj, true);
                } else {
                    let pk = pj / free.len() as f64;
                    for k in free {
                        self.members[j][k] = true;
                        self.visit(step + 1, pk, skipped);
                        self.members[j][k] = false;
                    }
                }
                self.chosen[j] -= 1;
            }
        }
    }

    let mut walk = Walk {
        params,
        members: vec![vec![false; params.m]; params.n],
        chosen: vec![0; params.n],
        out: ExactDistribution::default(),
    };
    walk.visit(0, 1.0, false);
    Ok(walk.out)
}

/// Total-variation distance between an empirical sample of edge lists and
/// an exact distribution.
pub fn total_variation(exact: &ExactDistribution, counts: &BTreeMap<Vec<(usize, usize)>, usize>) -> f64 {
    let draws: usize = counts.values().sum();
    let mut tv = 0.0;
    for (key, &p) in &exact.outcomes {
        let q = counts.get(key).copied().unwrap_or(0) as f64 / draws as f64;
        tv += (p - q).abs();
    }
    for (key, &c) in counts {
        if !exact.outcomes.contains_key(key) {
            tv += c as f64 / draws as f64;
        }
    }
    tv / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The general update rule `f(x, y) = ((x - y)^(1/alpha) + 1)^alpha + y`.
    fn iterate_f(x: f64, y: f64, alpha: f64) -> f64 {
        ((x - y).powf(1.0 / alpha) + 1.0).powf(alpha) + y
    }

    #[test]
    fn update_examples() {
        assert_eq!(popularity_update(5.0, 1.0, 5, Growth::Power(1.0)).unwrap(), 6.0);
        assert_abs_diff_eq!(popularity_update(2.0, 1.0, 4, Growth::Power(0.5)).unwrap(), 3.0, epsilon = 1e-15);
        assert_eq!(popularity_update(2.0, 2.0, 17, Growth::Frozen).unwrap(), 2.0);
        assert!(popularity_update(1.0, 1.0, 0, Growth::Power(0.5)).is_err());
        assert!(popularity_update(1.0, 1.0, 3, Growth::Power(1.5)).is_err());
        assert!(popularity_update(1.0, 1.0, 3, Growth::Power(0.0)).is_err());
    }

    #[test]
    fn size_form_matches_iterated_f() {
        for alpha in [0.25, 0.5, 0.8, 1.0] {
            let mut tau = 1.0;
            for size in 1..50 {
                tau = iterate_f(tau, 1.0, alpha);
                let direct = popularity_update(0.0, 1.0, size, Growth::Power(alpha)).unwrap();
                assert_abs_diff_eq!(tau, direct, epsilon = 1e-9 * direct);
            }
        }
    }

    #[test]
    fn linear_pa_selection_probabilities() {
        // Sizes (2, 0, 1) after three steps: P = (3, 1, 2) / 6.
        let mut state = PopularityState::new(&[1.0; 3], Growth::Power(1.0));
        for j in [0, 0, 2] {
            state.record_choice(j);
        }
        assert_abs_diff_eq!(selection_probability(&state, 0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(selection_probability(&state, 1), 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(selection_probability(&state, 2), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn block_model_probabilities_stay_fixed() {
        let params = GenerationParams::stochastic_block(2, 5, 3, vec![1.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        generate_with_observer(&params, &mut rng, |_, s| {
            assert_abs_diff_eq!(s.selection_probability(0), 1.0 / 3.0, epsilon = 1e-15);
            assert_abs_diff_eq!(s.selection_probability(1), 2.0 / 3.0, epsilon = 1e-15);
        })
        .unwrap();
    }

    #[test]
    fn uniform_initial_state() {
        let s = PopularityState::new(&[1.0; 4], Growth::Power(0.7));
        for j in 0..4 {
            assert_eq!(s.selection_probability(j), 0.25);
        }
    }

    #[test]
    fn single_group_pairs_equiprobable() {
        let params = GenerationParams::alpha_pa(1, 3, 2, 0.6).unwrap();
        let exact = brute_force_generation_distribution(&params).unwrap();
        assert_eq!(exact.outcomes.len(), 3);
        for &p in exact.outcomes.values() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let g = generate_ground_truth(&params, &mut rng).unwrap();
            assert_eq!(g.graph.group_size(0), 2);
        }
    }

    #[test]
    fn oracle_small_cases() {
        let exact = brute_force_generation_distribution(&GenerationParams::alpha_pa(1, 2, 1, 1.0).unwrap()).unwrap();
        assert_eq!(exact.outcomes.len(), 2);
        assert!(exact.outcomes.values().all(|&p| (p - 0.5).abs() < 1e-12));

        // n = 2, m = 2, delta = 2, alpha = 1: after the first step the chosen
        // group has tau = 2, so it is picked again with probability 2/3.
        let exact = brute_force_generation_distribution(&GenerationParams::alpha_pa(2, 2, 1, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(exact.total_mass(), 1.0, epsilon = 1e-9);
        let both_in_group0: f64 = exact
            .outcomes
            .iter()
            .filter(|(e, _)| e.iter().all(|&(_, j)| j == 0))
            .map(|(_, p)| p)
            .sum();
        assert_abs_diff_eq!(both_in_group0, 0.5 * 2.0 / 3.0, epsilon = 1e-12);

        // One user, two groups: choosing the filled group again is a skip.
        let exact = brute_force_generation_distribution(&GenerationParams::alpha_pa(2, 1, 1, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(exact.skip_probability, 2.0 / 3.0, epsilon = 1e-12);
        let one_edge: f64 = exact.outcomes.iter().filter(|(e, _)| e.len() == 1).map(|(_, p)| p).sum();
        assert_abs_diff_eq!(one_edge, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn oracle_rejects_large_instances() {
        let params = GenerationParams::alpha_pa(10, 10, 3, 1.0).unwrap();
        assert!(matches!(
            brute_force_generation_distribution(&params),
            Err(GeneratorError::OverBudget { .. })
        ));
    }

    #[test]
    fn skips_are_counted() {
        let params = GenerationParams::alpha_pa(2, 1, 1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut saw_skip = false;
        for _ in 0..200 {
            let g = generate_ground_truth(&params, &mut rng).unwrap();
            assert_eq!(g.graph.num_edges() + g.skips(), params.delta());
            saw_skip |= g.skips() > 0;
        }
        assert!(saw_skip);
    }

    #[test]
    fn edge_count_without_skips() {
        let params = GenerationParams::alpha_pa(100, 1000, 3, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = generate_ground_truth(&params, &mut rng).unwrap();
        assert_eq!(g.skips(), 0);
        assert_eq!(g.graph.num_edges(), 300);
        let mean = g.graph.group_sizes().iter().sum::<usize>() as f64 / 100.0;
        assert_eq!(mean, 3.0);
    }

    #[test]
    fn dense_groups_sample_uniformly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let members = [0u32, 1, 3, 4, 6];
        let mut counts = [0usize; 7];
        for _ in 0..20_000 {
            counts[draw_non_member(&members, 7, &mut rng) as usize] += 1;
        }
        for k in [0, 1, 3, 4, 6] {
            assert_eq!(counts[k], 0);
        }
        for k in [2, 5] {
            assert!((counts[k] as f64 / 20_000.0 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let params = GenerationParams::alpha_pa(50, 80, 3, 0.5).unwrap();
        let a = generate_ground_truth(&params, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = generate_ground_truth(&params, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.graph, b.graph);
    }
}
