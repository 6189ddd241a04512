//! Binary noise channels and the information functionals built on them.
//!
//! A [`BinaryChannel`] is a row-stochastic 2x2 matrix `p[input][output]`.
//! Scan noise (ground truth -> scanned graph) and query noise (ground truth
//! -> query response) are both modelled this way. All logarithms are
//! natural, so every information quantity is in nats.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BipartiteGraph, NoiseModel};

const ROW_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("channel entry {value} is outside [0, 1]")]
    EntryOutOfRange { value: f64 },
    #[error("mixture weight {0} is outside [0, 1]")]
    BadWeight(f64),
    #[error("prior probability {0} must lie strictly inside (0, 1)")]
    DegeneratePrior(f64),
    #[error("output symbol {symbol} has zero probability; posterior is undefined")]
    ZeroProbabilityOutput { symbol: usize },
}

/// Conditional distribution of one output bit given one input bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryChannel {
    p: [[f64; 2]; 2],
}

impl BinaryChannel {
    pub fn new(p: [[f64; 2]; 2]) -> Result<Self, ChannelError> {
        for (row, probs) in p.iter().enumerate() {
            for &value in probs {
                if !(0.0..=1.0).contains(&value) || value.is_nan() {
                    return Err(ChannelError::EntryOutOfRange { value });
                }
            }
            let sum = probs[0] + probs[1];
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(ChannelError::NotStochastic { row, sum });
            }
        }
        Ok(Self { p })
    }

    /// Builds a channel from `P(out = 1 | in = 0)` and `P(out = 1 | in = 1)`.
    pub fn from_one_probabilities(one_given_zero: f64, one_given_one: f64) -> Result<Self, ChannelError> {
        Self::new([
            [1.0 - one_given_zero, one_given_zero],
            [1.0 - one_given_one, one_given_one],
        ])
    }

    pub fn identity() -> Self {
        Self { p: [[1.0, 0.0], [0.0, 1.0]] }
    }

    /// Binary symmetric channel with crossover probability `crossover`.
    pub fn bsc(crossover: f64) -> Result<Self, ChannelError> {
        Self::new([[1.0 - crossover, crossover], [crossover, 1.0 - crossover]])
    }

    /// Omission channel: a true 1 is hidden (reported as 0) with probability
    /// `hide`, a true 0 is never reported as 1.
    pub fn omission(hide: f64) -> Result<Self, ChannelError> {
        Self::new([[1.0, 0.0], [hide, 1.0 - hide]])
    }

    /// Output independent of input: `P(out = 1) = one` for both rows.
    pub fn constant(one: f64) -> Result<Self, ChannelError> {
        Self::new([[1.0 - one, one], [1.0 - one, one]])
    }

    /// Convex combination `weight * a + (1 - weight) * b`.
    pub fn mixture(weight: f64, a: &Self, b: &Self) -> Result<Self, ChannelError> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(ChannelError::BadWeight(weight));
        }
        let mut p = [[0.0; 2]; 2];
        for (i, row) in p.iter_mut().enumerate() {
            for (o, cell) in row.iter_mut().enumerate() {
                *cell = weight * a.p[i][o] + (1.0 - weight) * b.p[i][o];
            }
        }
        Self::new(p)
    }

    /// `P(output | input)`.
    #[inline]
    pub fn prob(&self, input: bool, output: bool) -> f64 {
        self.p[input as usize][output as usize]
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.p
    }

    /// Feeds the output of `self` into `next`: `P(y|x) = sum_s self(s|x) next(y|s)`.
    pub fn compose(&self, next: &Self) -> Self {
        let mut p = [[0.0; 2]; 2];
        for (x, row) in p.iter_mut().enumerate() {
            row[1] = self.p[x][0] * next.p[0][1] + self.p[x][1] * next.p[1][1];
            row[0] = 1.0 - row[1];
        }
        Self { p }
    }

    /// Draws an output bit for the given input bit.
    pub fn transmit<R: Rng + ?Sized>(&self, input: bool, rng: &mut R) -> bool {
        let one = self.p[input as usize][1];
        if one <= 0.0 {
            false
        } else if one >= 1.0 {
            true
        } else {
            rng.random::<f64>() < one
        }
    }

    /// Output marginal for an input that is 1 with probability `p1`.
    pub fn output_marginal(&self, p1: f64) -> [f64; 2] {
        let one = (1.0 - p1) * self.p[0][1] + p1 * self.p[1][1];
        [1.0 - one, one]
    }
}

fn prior_vector(p1: f64) -> [f64; 2] {
    [1.0 - p1, p1]
}

fn check_prior(p1: f64) -> Result<(), ChannelError> {
    if p1 > 0.0 && p1 < 1.0 {
        Ok(())
    } else {
        Err(ChannelError::DegeneratePrior(p1))
    }
}

/// Bayes inversion of `ch` under a Bernoulli(`p1`) input.
///
/// The returned channel is indexed the other way round: row = observed
/// output, column = input, entry = `P(input | output)`.
pub fn posterior(p1: f64, ch: &BinaryChannel) -> Result<BinaryChannel, ChannelError> {
    check_prior(p1)?;
    let prior = prior_vector(p1);
    let marginal = ch.output_marginal(p1);
    let mut p = [[0.0; 2]; 2];
    for out in 0..2 {
        if marginal[out] <= 0.0 {
            return Err(ChannelError::ZeroProbabilityOutput { symbol: out });
        }
        let one = prior[1] * ch.p[1][out] / marginal[out];
        p[out] = [1.0 - one, one];
    }
    Ok(BinaryChannel { p })
}

/// `-p ln p - (1-p) ln(1-p)` with `0 ln 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    xlnx_neg(p) + xlnx_neg(1.0 - p)
}

fn xlnx_neg(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// Mutual information of a joint distribution `joint[a][b]` over two bits.
pub fn joint_mutual_information(joint: [[f64; 2]; 2]) -> f64 {
    let row = [joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]];
    let col = [joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]];
    let mut total = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let pab = joint[a][b];
            if pab > 0.0 {
                total += pab * (pab / (row[a] * col[b])).ln();
            }
        }
    }
    total.max(0.0)
}

/// `I(input; output)` in nats for a Bernoulli(`p1`) input.
pub fn mutual_information(p1: f64, ch: &BinaryChannel) -> f64 {
    let prior = prior_vector(p1);
    let mut joint = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            joint[x][y] = prior[x] * ch.p[x][y];
        }
    }
    joint_mutual_information(joint)
}

/// `I(Y; E_s)` where the scan bit and the query response are two
/// conditionally independent noisy views of the same Bernoulli(`p1`) edge.
pub fn response_scan_information(p1: f64, scan: &BinaryChannel, query: &BinaryChannel) -> f64 {
    let prior = prior_vector(p1);
    let mut joint = [[0.0; 2]; 2];
    for (f, row) in joint.iter_mut().enumerate() {
        for (y, cell) in row.iter_mut().enumerate() {
            *cell = (0..2).map(|s| prior[s] * scan.p[s][f] * query.p[s][y]).sum();
        }
    }
    joint_mutual_information(joint)
}

/// Binary Kullback-Leibler divergence `D(p || q)` in nats.
///
/// Returns `f64::INFINITY` when `p` puts mass where `q` has none.
pub fn binary_kl(p: f64, q: f64) -> f64 {
    fn term(a: f64, b: f64) -> f64 {
        if a <= 0.0 {
            0.0
        } else if b <= 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    }
    let d = term(p, q) + term(1.0 - p, 1.0 - q);
    if d.is_infinite() {
        d
    } else {
        d.max(0.0)
    }
}

/// Largest single-query log-likelihood-ratio increment
/// `max_{y,f} ln(P(E_0 = y | E_s = f) / P(E_0 = y))`.
pub fn i_max(p1: f64, ch: &BinaryChannel) -> Result<f64, ChannelError> {
    let post = posterior(p1, ch)?;
    let prior = prior_vector(p1);
    let mut best = f64::NEG_INFINITY;
    for f in 0..2 {
        for y in 0..2 {
            let ratio = post.p[f][y] / prior[y];
            if ratio > 0.0 {
                best = best.max(ratio.ln());
            }
        }
    }
    Ok(best)
}

/// `P(Y = y | E_s = f)` when the attacker infers the true edge from the
/// scan bit through `scan` and the response is produced through `query`.
pub fn compound_response_channel(
    p1: f64,
    scan: &BinaryChannel,
    query: &BinaryChannel,
) -> Result<BinaryChannel, ChannelError> {
    Ok(posterior(p1, scan)?.compose(query))
}

/// Draws a noisy query response for the victim's true membership bit.
pub fn query_response<R: Rng + ?Sized>(true_bit: bool, channel: &BinaryChannel, rng: &mut R) -> bool {
    channel.transmit(true_bit, rng)
}

/// Passes every user-group pair of `truth` through the user's scan channel.
pub fn scan_graph<R: Rng + ?Sized>(truth: &BipartiteGraph, noise: &NoiseModel, rng: &mut R) -> BipartiteGraph {
    let n = truth.num_groups();
    let mut user_lists = Vec::with_capacity(truth.num_users());
    for k in 0..truth.num_users() {
        let ch = noise.scan_channel(k);
        let member_of = truth.user_groups(k);
        let mut seen: Vec<u32> = member_of
            .iter()
            .copied()
            .filter(|_| ch.transmit(true, rng))
            .collect();
        // False positives over the non-member groups, drawn with geometric
        // gaps; landing on a member group is discarded since those positions
        // were already decided above.
        let false_pos = ch.prob(false, true);
        if false_pos >= 1.0 {
            seen.extend((0..n as u32).filter(|j| member_of.binary_search(j).is_err()));
        } else if false_pos > 0.0 {
            let gap = Geometric::new(false_pos).expect("probability checked above");
            let mut j = 0u64;
            loop {
                j += gap.sample(rng);
                if j >= n as u64 {
                    break;
                }
                let g = j as u32;
                if member_of.binary_search(&g).is_err() {
                    seen.push(g);
                }
                j += 1;
            }
        }
        seen.sort_unstable();
        user_lists.push(seen);
    }
    BipartiteGraph::from_user_lists(n, user_lists).expect("scan preserves index ranges")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructors_are_stochastic() {
        assert!(BinaryChannel::bsc(0.2).is_ok());
        assert!(BinaryChannel::omission(0.3).is_ok());
        assert!(BinaryChannel::bsc(1.2).is_err());
        assert!(matches!(
            BinaryChannel::new([[0.5, 0.6], [0.0, 1.0]]),
            Err(ChannelError::NotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            BinaryChannel::mixture(1.5, &BinaryChannel::identity(), &BinaryChannel::identity()),
            Err(ChannelError::BadWeight(_))
        ));
    }

    #[test]
    fn posterior_examples() {
        let post = posterior(0.5, &BinaryChannel::bsc(0.1).unwrap()).unwrap();
        assert_abs_diff_eq!(post.prob(true, true), 0.9, epsilon = 1e-12);

        for p1 in [0.01, 0.3, 0.9] {
            let post = posterior(p1, &BinaryChannel::omission(0.4).unwrap()).unwrap();
            assert_abs_diff_eq!(post.prob(true, true), 1.0, epsilon = 1e-12);
        }

        let post = posterior(0.1, &BinaryChannel::bsc(0.2).unwrap()).unwrap();
        assert_abs_diff_eq!(post.prob(true, true), 0.08 / 0.26, epsilon = 1e-12);
    }

    #[test]
    fn posterior_flags_impossible_output() {
        let erase_all = BinaryChannel::omission(1.0).unwrap();
        assert_eq!(
            posterior(0.2, &erase_all),
            Err(ChannelError::ZeroProbabilityOutput { symbol: 1 })
        );
        assert_eq!(posterior(0.0, &BinaryChannel::identity()), Err(ChannelError::DegeneratePrior(0.0)));
    }

    #[test]
    fn information_of_constant_channel_is_zero() {
        let c = BinaryChannel::constant(0.3).unwrap();
        assert_abs_diff_eq!(mutual_information(0.2, &c), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(i_max(0.2, &c).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn kl_degenerate_cases() {
        assert_eq!(binary_kl(0.3, 0.3), 0.0);
        assert_eq!(binary_kl(1.0, 0.0), f64::INFINITY);
        assert_eq!(binary_kl(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(binary_kl(1.0, 0.1), 10f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn bsc_composition() {
        let a = BinaryChannel::bsc(0.1).unwrap();
        let c = a.compose(&a);
        assert_abs_diff_eq!(c.prob(false, true), 0.18, epsilon = 1e-15);
        assert_eq!(
            BinaryChannel::identity().compose(&BinaryChannel::identity()),
            BinaryChannel::identity()
        );
    }

    #[test]
    fn compound_channel_matches_direct_sum() {
        let scan = BinaryChannel::bsc(0.07).unwrap();
        let query = BinaryChannel::bsc(0.2).unwrap();
        let p1 = 0.15;
        let compound = compound_response_channel(p1, &scan, &query).unwrap();
        // P(y | f) = P(f, y) / P(f)
        for f in [false, true] {
            for y in [false, true] {
                let joint: f64 = [false, true]
                    .iter()
                    .map(|&s| {
                        let ps = if s { p1 } else { 1.0 - p1 };
                        ps * scan.prob(s, f) * query.prob(s, y)
                    })
                    .sum();
                let pf = scan.output_marginal(p1)[f as usize];
                assert_abs_diff_eq!(compound.prob(f, y), joint / pf, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn response_information_reduces_under_noiseless_query() {
        let scan = BinaryChannel::bsc(0.05).unwrap();
        assert_abs_diff_eq!(
            response_scan_information(0.1, &scan, &BinaryChannel::identity()),
            mutual_information(0.1, &scan),
            epsilon = 1e-14
        );
    }

    #[test]
    fn query_response_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = BinaryChannel::identity();
        assert!((0..1000).all(|_| query_response(true, &id, &mut rng)));

        let bsc = BinaryChannel::bsc(0.3).unwrap();
        let ones = (0..10_000).filter(|_| query_response(false, &bsc, &mut rng)).count();
        let freq = ones as f64 / 10_000.0;
        assert!((freq - 0.3).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn theta_mixture_endpoints() {
        let good = BinaryChannel::bsc(0.01).unwrap();
        let bad = BinaryChannel::bsc(0.3).unwrap();
        // k = 1: theta = 0 is pure bad, theta = 1 pure good.
        let zero = BinaryChannel::mixture(0.0, &good, &bad).unwrap();
        assert_eq!(zero, bad);
        let one = BinaryChannel::mixture(1.0, &good, &bad).unwrap();
        assert_abs_diff_eq!(one.prob(false, true), 0.01, epsilon = 1e-15);
        // Mixing two BSCs is a BSC with the mixed crossover.
        let mid = BinaryChannel::mixture(1.0 / 3.0, &good, &bad).unwrap();
        let expect = 0.01 / 3.0 + 0.3 * 2.0 / 3.0;
        assert_abs_diff_eq!(mid.prob(false, true), expect, epsilon = 1e-15);
        assert_abs_diff_eq!(mid.prob(true, false), expect, epsilon = 1e-15);
    }

    fn arb_channel() -> impl Strategy<Value = BinaryChannel> {
        (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| BinaryChannel::from_one_probabilities(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn data_processing(p in 0.001..0.999f64, a in arb_channel(), b in arb_channel()) {
            let composed = a.compose(&b);
            prop_assert!(mutual_information(p, &composed) <= mutual_information(p, &a) + 1e-12);
            let m = composed.matrix();
            prop_assert!((m[0][0] + m[0][1] - 1.0).abs() <= 1e-12);
            prop_assert!((m[1][0] + m[1][1] - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn information_is_bounded(p in 0.0..=1.0f64, a in arb_channel()) {
            let i = mutual_information(p, &a);
            prop_assert!(i >= 0.0);
            prop_assert!(i <= binary_entropy(p).min(std::f64::consts::LN_2) + 1e-12);
        }

        #[test]
        fn bayes_joint_consistency(p in 0.001..0.999f64, a in arb_channel()) {
            let marginal = a.output_marginal(p);
            prop_assume!(marginal[0] > 1e-9 && marginal[1] > 1e-9);
            let post = posterior(p, &a).unwrap();
            let prior = [1.0 - p, p];
            for x in [false, true] {
                for y in [false, true] {
                    let forward = prior[x as usize] * a.prob(x, y);
                    let backward = marginal[y as usize] * post.prob(y, x);
                    prop_assert!((forward - backward).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn kl_nonnegative_zero_iff_equal(i in 0usize..=20, j in 1usize..20) {
            let p = i as f64 / 20.0;
            let q = j as f64 / 20.0;
            let d = binary_kl(p, q);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d <= 1e-12, i == j);
        }

        #[test]
        fn mixtures_stay_stochastic(w in 0.0..=1.0f64, a in arb_channel(), b in arb_channel()) {
            let m = BinaryChannel::mixture(w, &a, &b).unwrap().matrix();
            prop_assert!((m[0][0] + m[0][1] - 1.0).abs() <= 1e-12);
            prop_assert!((m[1][0] + m[1][1] - 1.0).abs() <= 1e-12);
        }
    }
}
