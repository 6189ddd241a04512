use groupprint::attacker::{run_attack, AttackerKnowledge, ItsConfig, Variant};
use groupprint::channels::{self, BinaryChannel};
use groupprint::generator::generate_ground_truth;
use groupprint::model::{GenerationParams, NoiseModel, VictimDistribution};
use groupprint::rng::{substream, Purpose};
use proptest::prelude::*;
use rand::RngCore;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edges_plus_skips_is_delta(n in 1usize..30, m in 1usize..20, mu in 1usize..6, alpha in 0.05f64..=1.0, seed: u64) {
        let p = GenerationParams::alpha_pa(n, m, mu, alpha).unwrap();
        let g = generate_ground_truth(&p, &mut substream(seed, Purpose::Graph, 0, 0, 0)).unwrap();
        prop_assert_eq!(g.graph.num_edges() + g.skips(), p.delta());
        prop_assert!(g.graph.group_sizes().iter().all(|&s| s <= m));
        prop_assert!(g.skipped_steps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn noiseless_attack_never_misidentifies(n in 5usize..60, m in 2usize..30, seed: u64, eps in 0.001f64..0.5) {
        let p = GenerationParams::alpha_pa(n, m, 2.min(m - 1).max(1), 1.0).unwrap();
        let truth = generate_ground_truth(&p, &mut substream(seed, Purpose::Graph, 0, 0, 0)).unwrap().graph;
        let noise = NoiseModel::noiseless(m);
        let dist = VictimDistribution::uniform(m).unwrap();
        let its = ItsConfig::new(eps, Variant::T1NoiselessQuery).unwrap();
        let mut rng = substream(seed, Purpose::Query, 0, 0, 0);
        let victim = (rng.next_u64() % m as u64) as usize;
        let out = run_attack(&truth, &truth, victim, &noise, &dist, AttackerKnowledge::from_params(&p), its, &mut rng).unwrap();
        prop_assert!(out.correct || out.exhausted);
        prop_assert_eq!(out.transcript.len(), out.num_queries);
        prop_assert!(out.num_queries <= n);
    }

    #[test]
    fn information_is_bounded_by_entropy(p1 in 0.01f64..0.99, a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let ch = BinaryChannel::from_one_probabilities(a, 1.0 - b).unwrap();
        let i = channels::mutual_information(p1, &ch);
        prop_assert!(i >= -1e-12);
        prop_assert!(i <= channels::binary_entropy(p1) + 1e-12);
        // Data processing: a further noisy stage cannot add information.
        let later = ch.compose(&BinaryChannel::bsc(0.1).unwrap());
        prop_assert!(channels::mutual_information(p1, &later) <= i + 1e-12);
    }

    #[test]
    fn substreams_are_reproducible(seed: u64, a: u64, b: u64) {
        let x = substream(seed, Purpose::Victim, a, b, 0).next_u64();
        prop_assert_eq!(x, substream(seed, Purpose::Victim, a, b, 0).next_u64());
        prop_assert_ne!(x, substream(seed, Purpose::Query, a, b, 0).next_u64());
    }
}
