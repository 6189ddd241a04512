//! JSON experiment configuration and its expansion into concrete cells.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::attacker::{ItsConfig, QueryOrder, Variant};
use crate::channels::BinaryChannel;
use crate::model::{GenerationParams, LabeledChannel, ModelKind, VictimDistribution};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub generation: GenerationSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub victim: VictimSpec,
    pub its: ItsSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A scalar or a list of values to sweep over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunitySpec {
    pub tau: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tau0Spec {
    PerGroup(Vec<f64>),
    Communities { communities: Vec<CommunitySpec> },
}

/// Ground truth read from a SNAP community file instead of generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub min_group_size: usize,
    #[serde(default)]
    pub min_user_memberships: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSpec {
    /// Number of groups; derived from `m / beta` when absent.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub m: Option<OneOrMany<usize>>,
    #[serde(default)]
    pub mu: Option<usize>,
    #[serde(default)]
    pub alpha: Option<OneOrMany<f64>>,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub tau0: Option<Tau0Spec>,
    #[serde(default)]
    pub dataset: Option<DatasetSpec>,
}

fn default_model() -> ModelKind {
    ModelKind::AlphaPa
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Identity,
    Bsc { crossover: f64 },
    /// Members hidden with probability `erasure`; non-members never shown.
    Omission { erasure: f64 },
    Constant { one: f64 },
    Matrix { p: [[f64; 2]; 2] },
    /// `weight * a + (1 - weight) * b`.
    Mixture { weight: f64, a: Box<ChannelSpec>, b: Box<ChannelSpec> },
}

impl ChannelSpec {
    pub fn build(&self) -> Result<BinaryChannel, HarnessError> {
        let ch = match self {
            ChannelSpec::Identity => BinaryChannel::identity(),
            ChannelSpec::Bsc { crossover } => BinaryChannel::bsc(*crossover)?,
            ChannelSpec::Omission { erasure } => BinaryChannel::omission(*erasure)?,
            ChannelSpec::Constant { one } => BinaryChannel::constant(*one)?,
            ChannelSpec::Matrix { p } => BinaryChannel::new(*p)?,
            ChannelSpec::Mixture { weight, a, b } => BinaryChannel::mixture(*weight, &a.build()?, &b.build()?)?,
        };
        Ok(ch)
    }

    pub fn describe(&self) -> String {
        match self {
            ChannelSpec::Identity => "identity".into(),
            ChannelSpec::Bsc { crossover } => format!("bsc({crossover})"),
            ChannelSpec::Omission { erasure } => format!("omission({erasure})"),
            ChannelSpec::Constant { one } => format!("constant({one})"),
            ChannelSpec::Matrix { p } => format!("matrix({:?})", p),
            ChannelSpec::Mixture { weight, a, b } => format!("{weight}*{}+{}*{}", a.describe(), 1.0 - weight, b.describe()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub channel: ChannelSpec,
}

/// A fixed channel list, or a family producing one channel list per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSetSpec {
    List(Vec<LabeledSpec>),
    Family(FamilySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Level `k` has `2^k` channels; channel `i` puts weight `i / (2^k - 1)` on `a`.
    ThetaMixture { a: ChannelSpec, b: ChannelSpec, k: Vec<u32> },
    /// Level of size `s` has channels `g = 1..=s` with weight `(g - 1) / (s - 1)` on `a`.
    GammaMixture { a: ChannelSpec, b: ChannelSpec, sizes: Vec<usize> },
    /// One single-channel level per entry.
    Sweep { channels: Vec<ChannelSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AssignmentSpec {
    RoundRobin,
    Random,
    Explicit { gamma: Vec<usize>, theta: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default = "identity_set")]
    pub gamma: ChannelSetSpec,
    #[serde(default = "identity_set")]
    pub theta: ChannelSetSpec,
    #[serde(default = "default_assignment")]
    pub assignment: AssignmentSpec,
}

fn identity_set() -> ChannelSetSpec {
    ChannelSetSpec::List(vec![LabeledSpec { label: Some("identity".into()), channel: ChannelSpec::Identity }])
}

fn default_assignment() -> AssignmentSpec {
    AssignmentSpec::RoundRobin
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { gamma: identity_set(), theta: identity_set(), assignment: default_assignment() }
    }
}

/// One concrete pair of channel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevel {
    /// Empty when the configuration has a single level.
    pub label: String,
    pub gamma: Vec<LabeledChannel>,
    pub theta: Vec<LabeledChannel>,
}

fn expand_set(set: &ChannelSetSpec, prefix: &str) -> Result<Vec<(String, Vec<LabeledChannel>)>, HarnessError> {
    match set {
        ChannelSetSpec::List(list) => {
            let chans = list
                .iter()
                .map(|s| Ok(LabeledChannel::new(s.label.clone().unwrap_or_else(|| s.channel.describe()), s.channel.build()?)))
                .collect::<Result<Vec<_>, HarnessError>>()?;
            if chans.is_empty() {
                return Err(HarnessError::Config(format!("{prefix} channel list is empty")));
            }
            Ok(vec![(String::new(), chans)])
        }
        ChannelSetSpec::Family(FamilySpec::ThetaMixture { a, b, k }) => {
            let (a, b) = (a.build()?, b.build()?);
            k.iter()
                .map(|&k| {
                    if k == 0 || k > 16 {
                        return Err(HarnessError::Config(format!("mixture exponent k = {k} outside 1..=16")));
                    }
                    let top = (1u32 << k) - 1;
                    let chans = (0..=top)
                        .map(|i| {
                            let w = i as f64 / top as f64;
                            Ok(LabeledChannel::new(format!("{prefix}={i}"), BinaryChannel::mixture(w, &a, &b)?))
                        })
                        .collect::<Result<_, HarnessError>>()?;
                    Ok((format!("k={k}"), chans))
                })
                .collect()
        }
        ChannelSetSpec::Family(FamilySpec::GammaMixture { a, b, sizes }) => {
            let (a, b) = (a.build()?, b.build()?);
            sizes
                .iter()
                .map(|&s| {
                    if s < 2 {
                        return Err(HarnessError::Config(format!("mixture size {s} must be at least 2")));
                    }
                    let chans = (1..=s)
                        .map(|g| {
                            let w = (g - 1) as f64 / (s - 1) as f64;
                            Ok(LabeledChannel::new(format!("{prefix}={g}"), BinaryChannel::mixture(w, &a, &b)?))
                        })
                        .collect::<Result<_, HarnessError>>()?;
                    Ok((format!("size={s}"), chans))
                })
                .collect()
        }
        ChannelSetSpec::Family(FamilySpec::Sweep { channels }) => channels
            .iter()
            .map(|c| Ok((c.describe(), vec![LabeledChannel::new(c.describe(), c.build()?)])))
            .collect(),
    }
}

impl NoiseSpec {
    /// Levels of the sweep. A single-level side is broadcast; two multi-level
    /// sides of equal length are zipped.
    pub fn levels(&self) -> Result<Vec<NoiseLevel>, HarnessError> {
        let g = expand_set(&self.gamma, "gamma")?;
        let t = expand_set(&self.theta, "theta")?;
        if g.is_empty() || t.is_empty() {
            return Err(HarnessError::Config("noise family has no levels".into()));
        }
        let pairs: Vec<(usize, usize)> = match (g.len(), t.len()) {
            (1, l) => (0..l).map(|i| (0, i)).collect(),
            (l, 1) => (0..l).map(|i| (i, 0)).collect(),
            (a, b) if a == b => (0..a).map(|i| (i, i)).collect(),
            (a, b) => return Err(HarnessError::Config(format!("cannot pair {a} scan levels with {b} query levels"))),
        };
        Ok(pairs
            .into_iter()
            .map(|(i, j)| {
                let label = match (g[i].0.is_empty(), t[j].0.is_empty()) {
                    (true, true) => String::new(),
                    (false, true) => g[i].0.clone(),
                    (true, false) => t[j].0.clone(),
                    (false, false) if g[i].0 == t[j].0 => g[i].0.clone(),
                    (false, false) => format!("{}|{}", g[i].0, t[j].0),
                };
                NoiseLevel { label, gamma: g[i].1.clone(), theta: t[j].1.clone() }
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum VictimSpec {
    #[default]
    Uniform,
    Zipf { exponent: f64 },
    Custom {
        weights: Vec<f64>,
        #[serde(default)]
        lambda_cap: Option<f64>,
    },
}

impl VictimSpec {
    pub fn build(&self, m: usize) -> Result<VictimDistribution, HarnessError> {
        let d = match self {
            VictimSpec::Uniform => VictimDistribution::uniform(m)?,
            VictimSpec::Zipf { exponent } => VictimDistribution::zipf(m, *exponent)?,
            VictimSpec::Custom { weights, lambda_cap } => {
                if weights.len() != m {
                    return Err(HarnessError::Config(format!("{} victim weights for {m} users", weights.len())));
                }
                VictimDistribution::custom(weights.clone(), *lambda_cap)?
            }
        };
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItsSpec {
    pub epsilon: f64,
    pub variant: Variant,
    #[serde(default)]
    pub query_order: Option<QueryOrder>,
    #[serde(default)]
    pub min_queries_floor: usize,
    /// Constant in the denominator of the expected-query bounds.
    #[serde(default = "default_c_prime")]
    pub c_prime: f64,
}

fn default_c_prime() -> f64 {
    1.0
}

impl ItsSpec {
    pub fn build(&self) -> Result<ItsConfig, HarnessError> {
        let mut cfg = ItsConfig::new(self.epsilon, self.variant)?;
        if let Some(order) = self.query_order {
            cfg.query_order = order;
        }
        cfg.min_queries_floor = self.min_queries_floor;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub trials: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Record wall-clock time per trial; off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Svg,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotMetric {
    MeanQ,
    AdjustedQ,
    SuccessRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default = "default_metric")]
    pub plot_metric: PlotMetric,
    /// Draw the `2m/mu` reference line.
    #[serde(default)]
    pub reference_line: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Svg, OutputFormat::Json]
}

fn default_metric() -> PlotMetric {
    PlotMetric::MeanQ
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
            plot_metric: default_metric(),
            reference_line: false,
        }
    }
}

impl GenerationSpec {
    /// Concrete generation parameters for every `(m, alpha)` pair, `m` outermost.
    pub fn grid(&self) -> Result<Vec<Vec<GenerationParams>>, HarnessError> {
        let ms = self
            .m
            .as_ref()
            .ok_or_else(|| HarnessError::Config("generation.m is required".into()))?
            .values();
        let mu = self.mu.ok_or_else(|| HarnessError::Config("generation.mu is required".into()))?;
        let alphas = match (&self.alpha, self.model) {
            (Some(a), ModelKind::AlphaPa) => a.values(),
            (None, ModelKind::AlphaPa) => return Err(HarnessError::Config("generation.alpha is required".into())),
            (_, _) => vec![0.0],
        };
        if ms.is_empty() || alphas.is_empty() {
            return Err(HarnessError::Config("empty sweep".into()));
        }
        ms.iter()
            .map(|&m| {
                let n = match (self.n, self.beta) {
                    (Some(n), None) => n,
                    (None, Some(beta)) if beta > 0.0 => (m as f64 / beta).round() as usize,
                    (Some(_), Some(_)) => return Err(HarnessError::Config("give either n or beta, not both".into())),
                    _ => return Err(HarnessError::Config("generation needs n or a positive beta".into())),
                };
                alphas
                    .iter()
                    .map(|&alpha| {
                        let params = match self.model {
                            ModelKind::AlphaPa => GenerationParams::alpha_pa(n, m, mu, alpha)?,
                            ModelKind::Iee => GenerationParams::iee(n, m, mu)?,
                            ModelKind::StochasticBlock => {
                                let tau0 = match &self.tau0 {
                                    Some(Tau0Spec::PerGroup(t)) => t.clone(),
                                    Some(Tau0Spec::Communities { communities }) => communities
                                        .iter()
                                        .flat_map(|c| std::iter::repeat_n(c.tau, c.count))
                                        .collect(),
                                    None => {
                                        return Err(HarnessError::Config(
                                            "stochastic block model needs generation.tau0".into(),
                                        ))
                                    }
                                };
                                GenerationParams::stochastic_block(n, m, mu, tau0)?
                            }
                        };
                        Ok(params)
                    })
                    .collect()
            })
            .collect()
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.experiment.is_empty() {
            return Err(HarnessError::Config("experiment id is empty".into()));
        }
        if self.run.trials == 0 || self.run.replicates == 0 {
            return Err(HarnessError::Config("trials and replicates must be at least 1".into()));
        }
        self.its.build()?;
        self.noise.levels()?;
        if self.generation.dataset.is_none() {
            self.generation.grid()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG3: &str = r#"{
        "experiment": "fig3",
        "generation": {"m": 1000, "beta": 0.4, "mu": 100, "alpha": 1.0},
        "noise": {
            "gamma": [{"label": "clean", "channel": {"kind": "identity"}}],
            "theta": {"family": "theta_mixture",
                      "a": {"kind": "bsc", "crossover": 0.01},
                      "b": {"kind": "bsc", "crossover": 0.3},
                      "k": [1, 2, 3]}
        },
        "its": {"epsilon": 0.1, "variant": "t3"},
        "run": {"trials": 100, "replicates": 5, "seed": 7}
    }"#;

    #[test]
    fn parses_theta_family() {
        let cfg = ExperimentConfig::from_json(FIG3).unwrap();
        let levels = cfg.noise.levels().unwrap();
        assert_eq!(levels.len(), 3);
        assert_eq!(levels[2].label, "k=3");
        assert_eq!(levels[2].theta.len(), 8);
        assert_eq!(levels[0].gamma.len(), 1);
        // theta = 0 is all b, theta = 2^k - 1 is all a.
        assert_eq!(levels[1].theta[0].channel, BinaryChannel::bsc(0.3).unwrap());
        assert_eq!(levels[1].theta[3].channel, BinaryChannel::bsc(0.01).unwrap());
        let grid = cfg.generation.grid().unwrap();
        assert_eq!(grid[0][0].n, 2500);
        assert_eq!(cfg.victim, VictimSpec::Uniform);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
    }

    #[test]
    fn gamma_family_weights() {
        let set = ChannelSetSpec::Family(FamilySpec::GammaMixture {
            a: ChannelSpec::Bsc { crossover: 0.01 },
            b: ChannelSpec::Bsc { crossover: 0.3 },
            sizes: vec![2, 8],
        });
        let levels = expand_set(&set, "gamma").unwrap();
        assert_eq!(levels[1].1.len(), 8);
        assert_eq!(levels[1].1[0].channel, BinaryChannel::bsc(0.3).unwrap());
        assert_eq!(levels[1].1[7].channel, BinaryChannel::bsc(0.01).unwrap());
    }

    #[test]
    fn zipped_sweep() {
        let sweep = ChannelSetSpec::Family(FamilySpec::Sweep {
            channels: vec![ChannelSpec::Omission { erasure: 0.01 }, ChannelSpec::Omission { erasure: 0.1 }],
        });
        let spec = NoiseSpec { gamma: sweep.clone(), theta: sweep, assignment: AssignmentSpec::RoundRobin };
        let levels = spec.levels().unwrap();
        assert_eq!(levels.len(), 2);
        assert_eq!(levels[1].label, "omission(0.1)");
        assert_eq!(levels[1].gamma[0].channel, levels[1].theta[0].channel);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = FIG3.replace("\"trials\": 100", "\"trials\": 0");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = FIG3.replace("\"epsilon\": 0.1", "\"epsilon\": 2.0");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = FIG3.replace("\"beta\": 0.4", "\"beta\": 0.4, \"n\": 3");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = FIG3.replace("\"seed\": 7", "\"seed\": 7, \"bogus\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn victim_specs() {
        let v: VictimSpec = serde_json::from_str(r#"{"kind": "zipf", "params": {"exponent": 1.0}}"#).unwrap();
        assert!((v.build(3).unwrap().probability(0) - 6.0 / 11.0).abs() < 1e-15);
        let v: VictimSpec = serde_json::from_str(r#"{"kind": "uniform"}"#).unwrap();
        assert_eq!(v, VictimSpec::Uniform);
    }

    #[test]
    fn block_model_communities() {
        let spec: GenerationSpec = serde_json::from_str(
            r#"{"n": 100, "m": 100, "mu": 3, "model": "stochastic_block",
                "tau0": {"communities": [{"tau": 2.0, "count": 50}, {"tau": 1.0, "count": 50}]}}"#,
        )
        .unwrap();
        let p = &spec.grid().unwrap()[0][0];
        assert_eq!(p.tau0[0], 2.0);
        assert_eq!(p.tau0[99], 1.0);
    }
}
