//! Closed-form upper bounds on the expected number of ITS queries and on
//! its error probability, plus the group-size tail bound.
//!
//! Everything is in nats, matching the attacker's threshold `ln(1/epsilon)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacker::IncrementTable;
use crate::channels::{self, BinaryChannel, ChannelError};
use crate::model::{GenerationParams, NoiseModel, VictimDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("invalid bound input: {0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub q_bar_bound: f64,
    pub pe_bound: f64,
    /// Named intermediate quantities, enough to recompute both bounds.
    pub components: BTreeMap<String, f64>,
    pub vacuous: bool,
}

impl BoundReport {
    pub fn component(&self, name: &str) -> Option<f64> {
        self.components.get(name).copied()
    }
}

fn check_epsilon(epsilon: f64) -> Result<(), BoundsError> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::Input(format!("epsilon {epsilon} must lie in (0, 1)")))
    }
}

fn check_c_prime(c_prime: f64) -> Result<(), BoundsError> {
    if c_prime > 0.0 && c_prime <= 1.0 {
        Ok(())
    } else {
        Err(BoundsError::Input(format!("c' = {c_prime} must lie in (0, 1]")))
    }
}

/// Shannon entropy of the victim distribution in nats.
pub fn entropy_of_victim(dist: &VictimDistribution) -> f64 {
    (0..dist.num_users())
        .map(|k| dist.probability(k))
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// Expected queries `(H(M) + ln(1/eps) + i_max) / (c' I(E_0; E_s))` and
/// error probability `eps / c'` for the preferential-attachment model with a
/// single scan channel and noiseless queries.
pub fn theorem1_bound(
    params: &GenerationParams,
    scan: &BinaryChannel,
    dist: &VictimDistribution,
    epsilon: f64,
    c_prime: f64,
) -> Result<BoundReport, BoundsError> {
    check_epsilon(epsilon)?;
    check_c_prime(c_prime)?;
    let p1 = params.edge_prior();
    let h = entropy_of_victim(dist);
    let info = channels::mutual_information(p1, scan);
    let i_max = channels::i_max(p1, scan).ok();
    let log_inv_eps = (1.0 / epsilon).ln();
    let psi = h + log_inv_eps + i_max.unwrap_or(f64::INFINITY);
    let q = psi / (c_prime * info);
    let pe = epsilon / c_prime;
    let vacuous = i_max.is_none() || info <= 0.0 || !q.is_finite();

    let components = BTreeMap::from([
        ("H(M)".to_string(), h),
        ("ln(1/eps)".to_string(), log_inv_eps),
        ("i_max".to_string(), i_max.unwrap_or(f64::NAN)),
        ("psi".to_string(), psi),
        ("I(E0;Es)".to_string(), info),
        ("c'".to_string(), c_prime),
        ("p1".to_string(), p1),
    ]);
    Ok(BoundReport {
        q_bar_bound: if vacuous { f64::INFINITY } else { q },
        pe_bound: pe,
        components,
        vacuous,
    })
}

/// Block-model bound: communities are queried most popular first, each with
/// its own edge prior. The bound is the number of queries after which the
/// expected accumulated information first reaches
/// `psi = H(M) + ln(1/eps) + i_max`.
pub fn theorem2_bound(
    params: &GenerationParams,
    scan: &BinaryChannel,
    dist: &VictimDistribution,
    epsilon: f64,
) -> Result<BoundReport, BoundsError> {
    check_epsilon(epsilon)?;
    if !params.is_block_model() {
        return Err(BoundsError::Input("community bound needs a block model".into()));
    }
    let communities = params.communities();
    let total_tau: f64 = params.tau0.iter().sum();
    let scale = params.mu as f64 / params.beta();
    let mut components = BTreeMap::new();

    let mut infos = Vec::with_capacity(communities.len());
    let mut i_max = f64::NEG_INFINITY;
    let mut i_max_defined = true;
    for (l, c) in communities.iter().enumerate() {
        let p = c.tau / total_tau * scale;
        if !(p > 0.0 && p < 1.0) {
            return Err(BoundsError::Input(format!("community prior {p} outside (0, 1)")));
        }
        let info = channels::mutual_information(p, scan);
        match channels::i_max(p, scan) {
            Ok(v) => i_max = i_max.max(v),
            Err(_) => i_max_defined = false,
        }
        components.insert(format!("tau[{l}]"), c.tau);
        components.insert(format!("size[{l}]"), c.groups.len() as f64);
        components.insert(format!("P_tau[{l}]"), p);
        components.insert(format!("I_tau[{l}]"), info);
        infos.push(info);
    }

    let h = entropy_of_victim(dist);
    let log_inv_eps = (1.0 / epsilon).ln();
    let psi = h + log_inv_eps + if i_max_defined { i_max } else { f64::INFINITY };

    // Whole communities consumed while the expected information stays below psi.
    let mut consumed = 0usize;
    let mut accumulated = 0.0;
    let mut full = 0usize;
    while full < communities.len() {
        let next = accumulated + communities[full].groups.len() as f64 * infos[full];
        if next >= psi {
            break;
        }
        accumulated = next;
        consumed += communities[full].groups.len();
        full += 1;
    }
    let n = params.n as f64;
    let (q, vacuous, partial) = if !i_max_defined || full == communities.len() {
        (n, true, f64::NAN)
    } else {
        let i_star = ((psi - accumulated) / infos[full]).ceil().max(1.0);
        (consumed as f64 + i_star, false, i_star)
    };

    components.insert("H(M)".into(), h);
    components.insert("ln(1/eps)".into(), log_inv_eps);
    components.insert("i_max".into(), if i_max_defined { i_max } else { f64::NAN });
    components.insert("psi".into(), psi);
    components.insert("full_communities".into(), full as f64);
    components.insert("full_community_groups".into(), consumed as f64);
    components.insert("i*".into(), partial);
    Ok(BoundReport { q_bar_bound: q, pe_bound: epsilon, components, vacuous })
}

/// Compound-noise bound: a `P_{Gamma,Theta}`-weighted mix of single-channel
/// bounds with `I(Y; E_s)` in the denominator; the error bound grows by `|Gamma|`.
///
/// `i_max` is taken over the scan hypotheses from the `E_0`-posterior form;
/// the largest response-based increment is reported as `i_max(Y)` alongside.
pub fn theorem3_bound(
    params: &GenerationParams,
    noise: &NoiseModel,
    dist: &VictimDistribution,
    epsilon: f64,
    c_prime: f64,
) -> Result<BoundReport, BoundsError> {
    check_epsilon(epsilon)?;
    check_c_prime(c_prime)?;
    if noise.num_users() != dist.num_users() {
        return Err(BoundsError::Input("noise model and victim distribution differ in size".into()));
    }
    let p1 = params.edge_prior();
    let gammas = noise.gamma_channels();
    let thetas = noise.theta_channels();
    let weights = noise.joint_weights();
    let mut components = BTreeMap::new();

    let mut i_max = f64::NEG_INFINITY;
    let mut i_max_defined = true;
    for (g, gc) in gammas.iter().enumerate() {
        match channels::i_max(p1, &gc.channel) {
            Ok(v) => {
                components.insert(format!("i_max[{g}]"), v);
                i_max = i_max.max(v);
            }
            Err(_) => i_max_defined = false,
        }
    }
    let h = entropy_of_victim(dist);
    let log_inv_eps = (1.0 / epsilon).ln();
    let psi = h + log_inv_eps + if i_max_defined { i_max } else { f64::INFINITY };

    let mut q = 0.0;
    let mut vacuous = !i_max_defined;
    let mut i_max_y = f64::NEG_INFINITY;
    for (g, gc) in gammas.iter().enumerate() {
        for (t, tc) in thetas.iter().enumerate() {
            let w = weights[g][t];
            let info = channels::response_scan_information(p1, &gc.channel, &tc.channel);
            components.insert(format!("w[{g},{t}]"), w);
            components.insert(format!("I(Y;Es)[{g},{t}]"), info);
            if w <= 0.0 {
                continue;
            }
            if info <= 0.0 {
                vacuous = true;
            } else {
                q += w * psi / (c_prime * info);
            }
            if let Ok(table) = IncrementTable::new(p1, &gc.channel, &tc.channel) {
                for v in table.0.iter().flatten().filter_map(|s| s.value()) {
                    i_max_y = i_max_y.max(v);
                }
            }
        }
    }
    let pe = gammas.len() as f64 * epsilon / c_prime;
    vacuous |= pe >= 1.0 || !q.is_finite();

    components.insert("H(M)".into(), h);
    components.insert("ln(1/eps)".into(), log_inv_eps);
    components.insert("i_max".into(), if i_max_defined { i_max } else { f64::NAN });
    components.insert("i_max(Y)".into(), i_max_y);
    components.insert("psi".into(), psi);
    components.insert("c'".into(), c_prime);
    components.insert("|Gamma|".into(), gammas.len() as f64);
    components.insert("p1".into(), p1);
    Ok(BoundReport {
        q_bar_bound: if vacuous { f64::INFINITY } else { q },
        pe_bound: pe,
        components,
        vacuous,
    })
}

/// Exponent `n D(mu(1+psi)/m || mu/m)` of the group-count tail bound, in nats.
pub fn prop2_exponent(params: &GenerationParams, psi: f64) -> Result<f64, BoundsError> {
    let q = params.edge_prior();
    let top = 1.0 / q - 1.0;
    if !(psi > 0.0 && psi <= top * (1.0 + 1e-12)) {
        return Err(BoundsError::Input(format!("psi {psi} outside (0, {top}]")));
    }
    let p = (q * (1.0 + psi)).min(1.0);
    Ok(params.n as f64 * channels::binary_kl(p, q))
}

/// `P(C_i >= mu(1+psi)/beta) <= c exp(-n D(mu(1+psi)/m || mu/m))`, reported
/// with the unspecified leading constant set to 1.
pub fn prop2_tail_bound(params: &GenerationParams, psi: f64) -> Result<f64, BoundsError> {
    Ok((-prop2_exponent(params, psi)?).exp())
}

/// Group-count level `mu(1+psi)/beta` at which the tail bound applies.
pub fn prop2_level(params: &GenerationParams, psi: f64) -> f64 {
    params.mu as f64 * (1.0 + psi) / params.beta()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabeledChannel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn h(p: f64) -> f64 {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }

    #[test]
    fn victim_entropy() {
        assert_abs_diff_eq!(
            entropy_of_victim(&VictimDistribution::uniform(1000).unwrap()),
            1000f64.ln(),
            epsilon = 1e-12
        );
        let point = VictimDistribution::custom(vec![3.0, 0.0, 0.0], None).unwrap();
        assert_eq!(entropy_of_victim(&point), 0.0);
        let d = VictimDistribution::custom(vec![2.0, 1.0, 1.0].iter().map(|x| x * 0.75).collect(), None).unwrap();
        assert_abs_diff_eq!(entropy_of_victim(&d), 1.5 * 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn theorem1_fixtures() {
        let params = GenerationParams::alpha_pa(10_000, 1000, 100, 1.0).unwrap();
        let dist = VictimDistribution::uniform(1000).unwrap();
        let id = BinaryChannel::identity();
        let r = theorem1_bound(&params, &id, &dist, 0.01, 1.0).unwrap();
        // Oracle: noiseless scan, I = h(0.1), i_max = ln 10.
        let oracle = (1000f64.ln() + 100f64.ln() + 10f64.ln()) / h(0.1);
        assert_abs_diff_eq!(r.q_bar_bound, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(r.q_bar_bound, 42.4983, epsilon = 1e-3);
        assert_abs_diff_eq!(r.pe_bound, 0.01, epsilon = 1e-15);
        assert!(!r.vacuous);

        let r = theorem1_bound(&params, &id, &dist, 0.1, 1.0).unwrap();
        assert_abs_diff_eq!(r.q_bar_bound, 35.4152, epsilon = 1e-3);

        let r = theorem1_bound(&params, &id, &dist, 0.01, 0.5).unwrap();
        assert_abs_diff_eq!(r.q_bar_bound, 2.0 * oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(r.pe_bound, 0.02, epsilon = 1e-15);

        let flat = BinaryChannel::constant(0.3).unwrap();
        assert!(theorem1_bound(&params, &flat, &dist, 0.01, 1.0).unwrap().vacuous);
        assert!(theorem1_bound(&params, &id, &dist, 1.0, 1.0).is_err());
        assert!(theorem1_bound(&params, &id, &dist, 0.1, 1.5).is_err());
    }

    #[test]
    fn theorem1_recombines() {
        let params = GenerationParams::alpha_pa(500, 300, 4, 0.5).unwrap();
        let dist = VictimDistribution::zipf(300, 1.0).unwrap();
        let r = theorem1_bound(&params, &BinaryChannel::bsc(0.05).unwrap(), &dist, 0.05, 0.8).unwrap();
        let c = |k: &str| r.component(k).unwrap();
        let q = (c("H(M)") + c("ln(1/eps)") + c("i_max")) / (c("c'") * c("I(E0;Es)"));
        assert_abs_diff_eq!(q, r.q_bar_bound, epsilon = 1e-9);
        assert_abs_diff_eq!(c("psi") / (c("c'") * c("I(E0;Es)")), r.q_bar_bound, epsilon = 1e-9);
    }

    #[test]
    fn theorem2_two_community_fixture() {
        let tau = [vec![2.0; 50], vec![1.0; 50]].concat();
        let params = GenerationParams::stochastic_block(100, 100, 3, tau).unwrap();
        let dist = VictimDistribution::uniform(100).unwrap();
        let r = theorem2_bound(&params, &BinaryChannel::identity(), &dist, 0.1).unwrap();
        // Oracle: priors 0.04 and 0.02, psi = ln 100 + ln 10 + ln 50.
        let psi = 100f64.ln() + 10f64.ln() + 50f64.ln();
        assert!(50.0 * h(0.04) < psi);
        let i_star = ((psi - 50.0 * h(0.04)) / h(0.02)).ceil();
        assert_eq!(i_star, 25.0);
        assert_eq!(r.q_bar_bound, 75.0);
        assert_eq!(r.pe_bound, 0.1);
        assert!(!r.vacuous);
        assert_abs_diff_eq!(r.component("psi").unwrap(), psi, epsilon = 1e-12);
        assert_abs_diff_eq!(r.component("P_tau[0]").unwrap(), 0.04, epsilon = 1e-12);
        assert_abs_diff_eq!(r.component("P_tau[1]").unwrap(), 0.02, epsilon = 1e-12);

        // Recombine.
        let c = |k: &str| r.component(k).unwrap();
        let reached = c("size[0]") * c("I_tau[0]") + c("i*") * c("I_tau[1]");
        assert!(reached >= psi);
        assert!(reached - c("I_tau[1]") < psi);
        assert_eq!(c("full_community_groups") + c("i*"), r.q_bar_bound);
    }

    #[test]
    fn theorem2_vacuous_when_unreachable() {
        let params = GenerationParams::stochastic_block(10, 100, 1, [vec![2.0; 5], vec![1.0; 5]].concat()).unwrap();
        let dist = VictimDistribution::uniform(100).unwrap();
        let r = theorem2_bound(&params, &BinaryChannel::bsc(0.4).unwrap(), &dist, 0.01).unwrap();
        assert!(r.vacuous);
        assert_eq!(r.q_bar_bound, 10.0);
        assert!(theorem2_bound(
            &GenerationParams::alpha_pa(10, 10, 1, 1.0).unwrap(),
            &BinaryChannel::identity(),
            &VictimDistribution::uniform(10).unwrap(),
            0.1
        )
        .is_err());
    }

    #[test]
    fn reduction_chain() {
        let params = GenerationParams::iee(400, 1000, 100).unwrap();
        let dist = VictimDistribution::uniform(1000).unwrap();
        for scan in [BinaryChannel::identity(), BinaryChannel::bsc(0.05).unwrap()] {
            let t1 = theorem1_bound(&params, &scan, &dist, 0.01, 1.0).unwrap();
            let t2 = theorem2_bound(&params, &scan, &dist, 0.01).unwrap();
            assert_eq!(t2.q_bar_bound, t1.q_bar_bound.ceil());
            assert_eq!(t2.pe_bound, t1.pe_bound);

            let noise = NoiseModel::uniform(1000, scan, BinaryChannel::identity());
            let t3 = theorem3_bound(&params, &noise, &dist, 0.01, 1.0).unwrap();
            assert_abs_diff_eq!(t3.q_bar_bound, t1.q_bar_bound, epsilon = 1e-9);
            assert_eq!(t3.pe_bound, t1.pe_bound);
            assert_abs_diff_eq!(t3.component("w[0,0]").unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn theorem2_equal_information_is_split_invariant() {
        // Same tau everywhere is one pool; compare with a two-level split whose
        // priors differ only by a negligible amount is not exact, so instead
        // check that relabelling which half is "more popular" changes nothing.
        let dist = VictimDistribution::uniform(200).unwrap();
        let a = GenerationParams::stochastic_block(100, 200, 4, [vec![2.0; 30], vec![1.0; 70]].concat()).unwrap();
        let b = GenerationParams::stochastic_block(100, 200, 4, [vec![1.0; 70], vec![2.0; 30]].concat()).unwrap();
        let ra = theorem2_bound(&a, &BinaryChannel::identity(), &dist, 0.05).unwrap();
        let rb = theorem2_bound(&b, &BinaryChannel::identity(), &dist, 0.05).unwrap();
        assert_eq!(ra.q_bar_bound, rb.q_bar_bound);
    }

    #[test]
    fn theorem3_mixture_fixture() {
        let params = GenerationParams::alpha_pa(10_000, 1000, 100, 1.0).unwrap();
        let dist = VictimDistribution::uniform(1000).unwrap();
        let gammas = vec![
            LabeledChannel::new("bsc0.01", BinaryChannel::bsc(0.01).unwrap()),
            LabeledChannel::new("bsc0.3", BinaryChannel::bsc(0.3).unwrap()),
        ];
        let thetas = vec![LabeledChannel::new("id", BinaryChannel::identity())];
        let noise = NoiseModel::round_robin(1000, gammas, thetas).unwrap();
        let r = theorem3_bound(&params, &noise, &dist, 0.1, 1.0).unwrap();

        // Oracle: independent evaluation of every term from first principles.
        let mi = |c: f64| {
            let p = 0.1;
            let q = p * (1.0 - c) + (1.0 - p) * c;
            h(q) - h(c)
        };
        let imax = |c: f64| {
            let p = 0.1;
            let q1 = p * (1.0 - c) + (1.0 - p) * c;
            let post11 = p * (1.0 - c) / q1;
            let post00 = (1.0 - p) * (1.0 - c) / (1.0 - q1);
            let post10 = (1.0 - p) * c / q1; // P(E0=0 | Es=1)
            let post01 = p * c / (1.0 - q1); // P(E0=1 | Es=0)
            [(post11 / p), (post00 / (1.0 - p)), (post10 / (1.0 - p)), (post01 / p)]
                .iter()
                .map(|r| r.ln())
                .fold(f64::MIN, f64::max)
        };
        let psi = 1000f64.ln() + 10f64.ln() + imax(0.01).max(imax(0.3));
        let oracle = 0.5 * psi / mi(0.01) + 0.5 * psi / mi(0.3);
        assert_abs_diff_eq!(r.q_bar_bound, oracle, epsilon = 1e-9);
        assert_abs_diff_eq!(r.q_bar_bound, 209.3051, epsilon = 1e-3);
        assert_abs_diff_eq!(r.pe_bound, 0.2, epsilon = 1e-15);
        assert!(r.component("i_max(Y)").unwrap() <= r.component("i_max").unwrap() + 1e-12);

        // Recombine.
        let c = |k: &str| r.component(k).unwrap();
        let q: f64 = (0..2)
            .map(|g| c(&format!("w[{g},0]")) * c("psi") / (c("c'") * c(&format!("I(Y;Es)[{g},0]"))))
            .sum();
        assert_abs_diff_eq!(q, r.q_bar_bound, epsilon = 1e-9);
    }

    #[test]
    fn theorem3_vacuous_cases() {
        let params = GenerationParams::alpha_pa(100, 100, 10, 1.0).unwrap();
        let dist = VictimDistribution::uniform(100).unwrap();
        let gammas: Vec<_> = (0..12)
            .map(|i| LabeledChannel::new(format!("g{i}"), BinaryChannel::bsc(0.01 * i as f64).unwrap()))
            .collect();
        let thetas = vec![LabeledChannel::new("id", BinaryChannel::identity())];
        let noise = NoiseModel::round_robin(100, gammas, thetas).unwrap();
        let r = theorem3_bound(&params, &noise, &dist, 0.1, 1.0).unwrap();
        assert!(r.pe_bound >= 1.0 && r.vacuous);

        let noise = NoiseModel::uniform(100, BinaryChannel::identity(), BinaryChannel::bsc(0.5).unwrap());
        assert!(theorem3_bound(&params, &noise, &dist, 0.1, 1.0).unwrap().vacuous);
    }

    #[test]
    fn prop2_fixture() {
        let params = GenerationParams::alpha_pa(100, 100, 3, 1.0).unwrap();
        let d = 0.06 * 2f64.ln() + 0.94 * (0.94f64 / 0.97).ln();
        assert_abs_diff_eq!(d, 0.012058, epsilon = 1e-6);
        assert_abs_diff_eq!(prop2_exponent(&params, 1.0).unwrap(), 100.0 * d, epsilon = 1e-9);
        let b = prop2_tail_bound(&params, 1.0).unwrap();
        assert_abs_diff_eq!(b, (-100.0 * d).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.29945, epsilon = 1e-4);
        assert_abs_diff_eq!(prop2_level(&params, 1.0), 6.0, epsilon = 1e-12);

        assert!(prop2_tail_bound(&params, 1e-9).unwrap() > 0.999_999);
        let top = 100.0 / 3.0 - 1.0;
        assert_abs_diff_eq!(
            prop2_exponent(&params, top).unwrap(),
            100.0 * (100.0f64 / 3.0).ln(),
            epsilon = 1e-6
        );
        assert!(prop2_tail_bound(&params, 0.0).is_err());
        assert!(prop2_tail_bound(&params, top + 1.0).is_err());
    }

    proptest! {
        #[test]
        fn tail_bound_decreases_in_psi(a in 0.01..5.0f64, b in 0.01..5.0f64) {
            let params = GenerationParams::alpha_pa(200, 100, 3, 1.0).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let bl = prop2_tail_bound(&params, lo).unwrap();
            let bh = prop2_tail_bound(&params, hi).unwrap();
            prop_assert!(bh <= bl + 1e-15);
            prop_assert!(bl <= 1.0);
        }

        #[test]
        fn theorem1_monotone_in_epsilon(e1 in 0.001..0.5f64, e2 in 0.001..0.5f64, c in 0.0..0.3f64) {
            let params = GenerationParams::alpha_pa(100, 200, 5, 1.0).unwrap();
            let dist = VictimDistribution::uniform(200).unwrap();
            let scan = BinaryChannel::bsc(c).unwrap();
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            let a = theorem1_bound(&params, &scan, &dist, lo, 1.0).unwrap();
            let b = theorem1_bound(&params, &scan, &dist, hi, 1.0).unwrap();
            prop_assert!(b.q_bar_bound <= a.q_bar_bound + 1e-9);
        }
    }
}
