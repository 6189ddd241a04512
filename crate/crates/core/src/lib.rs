//! Simulation and analysis of active deanonymization attacks on bipartite
//! user-group membership networks.
//!
//! The pipeline is: grow a ground-truth graph ([`generator`]), pass it
//! through per-user scan noise ([`channels::scan_graph`]), pick a victim and
//! run the information-threshold attacker ([`attacker`]), then compare what
//! happened with the closed-form guarantees ([`bounds`]). [`props`] checks the
//! structural properties of generated graphs by Monte Carlo, and [`harness`]
//! wires everything into reproducible experiments.

pub mod attacker;
pub mod bounds;
pub mod channels;
pub mod generator;
pub mod harness;
pub mod model;
pub mod prefix_tree;
pub mod props;
pub mod rng;

pub use channels::BinaryChannel;
pub use model::{AttackOutcome, BipartiteGraph, GenerationParams, ModelKind, NoiseModel, VictimDistribution};
