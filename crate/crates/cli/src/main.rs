use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use groupprint::attacker::{Attacker, AttackerKnowledge};
use groupprint::bounds;
use groupprint::channels;
use groupprint::generator::generate_ground_truth;
use groupprint::harness::config::ExperimentConfig;
use groupprint::harness::{emit_results, ingest_snap_communities, run_experiment};
use groupprint::model::{GenerationParams, ModelKind, NoiseModel};
use groupprint::props::{verify_propositions_with, CellStatus, PropsOptions};
use groupprint::rng::{substream, Purpose};

#[derive(Parser)]
#[command(name = "groupprint", version, about = "Group-membership deanonymization simulator")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configured one).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Number of groups.
    #[arg(long)]
    n: Option<usize>,
    /// Number of users.
    #[arg(long)]
    m: Option<usize>,
    /// Mean group size.
    #[arg(long)]
    mu: Option<usize>,
    /// Growth exponent for the preferential-attachment model.
    #[arg(long)]
    alpha: Option<f64>,
    /// alpha_pa or iee.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one ground-truth graph and write it as a `user,group` edge list.
    Generate {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Run a single attack on a freshly generated graph.
    Attack {
        /// Victim index (default: drawn from the victim distribution).
        #[arg(long)]
        victim: Option<usize>,
        /// Include the query transcript in the output.
        #[arg(long)]
        transcript: bool,
    },
    /// Run a configured Monte Carlo experiment and write CSV/JSON/SVG results.
    Experiment,
    /// Monte Carlo checks of group-size moments, tail and factorization properties.
    VerifyProps {
        #[command(flatten)]
        params: ParamArgs,
        /// Number of graphs to sample.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
    },
    /// Closed-form bounds for every cell of the configuration.
    Bounds {
        /// Also report the membership-count tail bound at this psi.
        #[arg(long)]
        psi: Option<f64>,
    },
    /// Parse and filter a SNAP community file.
    Ingest {
        path: PathBuf,
        #[arg(long, default_value_t = 0)]
        min_group: usize,
        #[arg(long, default_value_t = 0)]
        min_user: usize,
        /// Also write the filtered graph as a `user,group` edge list.
        #[arg(long)]
        edges: bool,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_ref().context("this command needs --config")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn resolve_params(cli: &Cli, args: &ParamArgs) -> Result<GenerationParams> {
    if let (Some(n), Some(m), Some(mu)) = (args.n, args.m, args.mu) {
        let p = match args.model.as_deref().unwrap_or("alpha_pa") {
            "alpha_pa" => GenerationParams::alpha_pa(n, m, mu, args.alpha.unwrap_or(1.0))?,
            "iee" => GenerationParams::iee(n, m, mu)?,
            other => bail!("unknown model `{other}` (use alpha_pa or iee, or a config for block models)"),
        };
        return Ok(p);
    }
    let cfg = load_config(cli).context("give --n, --m and --mu, or a --config")?;
    let grid = cfg.generation.grid()?;
    Ok(grid[0][0].clone())
}

fn seed_of(cli: &Cli) -> u64 {
    cli.seed
        .or_else(|| cli.config.as_ref().and_then(|_| load_config(cli).ok()).map(|c| c.run.seed))
        .unwrap_or(0)
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn write_edges(path: &Path, edges: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).with_context(|| path.display().to_string())?);
    writeln!(f, "user,group")?;
    for (u, g) in edges {
        writeln!(f, "{u},{g}")?;
    }
    f.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match &cli.command {
        Command::Generate { params } => {
            let p = resolve_params(&cli, params)?;
            let seed = seed_of(&cli);
            let g = generate_ground_truth(&p, &mut substream(seed, Purpose::Graph, 0, 0, 0))?;
            let dir = out_dir(&cli);
            fs::create_dir_all(&dir)?;
            let path = dir.join("graph.csv");
            write_edges(&path, g.graph.edges())?;
            let stats = serde_json::json!({
                "params": p,
                "seed": seed,
                "edges": g.graph.num_edges(),
                "skips": g.skips(),
                "path": path,
            });
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Attack { victim, transcript } => {
            let cfg = load_config(&cli)?;
            let p = cfg.generation.grid()?[0][0].clone();
            let seed = cfg.run.seed;
            let truth = generate_ground_truth(&p, &mut substream(seed, Purpose::Graph, 0, 0, 0))?.graph;
            let level = cfg.noise.levels()?.remove(0);
            let noise = NoiseModel::round_robin(p.m, level.gamma, level.theta)?;
            let scanned = channels::scan_graph(&truth, &noise, &mut substream(seed, Purpose::Scan, 0, 0, 0));
            let dist = cfg.victim.build(p.m)?;
            let victim = match victim {
                Some(v) => *v,
                None => dist.sample(&mut substream(seed, Purpose::Victim, 0, 0, 0)),
            };
            let its = cfg.its.build()?;
            let mut attacker = Attacker::new(AttackerKnowledge::from_params(&p), &scanned, &noise, &dist, its)?;
            let mut outcome = attacker.run(&truth, victim, &mut substream(seed, Purpose::Query, 0, 0, 0))?;
            if !transcript {
                outcome.transcript.clear();
            }
            println!("{}", serde_json::to_string_pretty(&outcome)?);
        }
        Command::Experiment => {
            let cfg = load_config(&cli)?;
            let out = run_experiment(&cfg)?;
            let written = emit_results(&out, &cfg.output, &cfg.output.dir)?;
            println!(
                "{:<28} {:>6} {:>6} {:>9} {:>9} {:>9} {:>8} {:>9}",
                "experiment", "m", "alpha", "mean Q", "adj. Q", "success", "failed", "bound"
            );
            for s in &out.summaries {
                let bound = s.bound.as_ref().map_or("-".to_string(), |b| format!("{:.2}", b.q_bar_bound));
                println!(
                    "{:<28} {:>6} {:>6} {:>9.2} {:>9.2} {:>9.3} {:>8} {:>9}",
                    s.experiment, s.m, s.alpha, s.mean_q, s.adjusted_mean_q, s.success_rate, s.failed_trials, bound
                );
            }
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::VerifyProps { params, samples, bootstrap } => {
            let p = resolve_params(&cli, params)?;
            let opts = PropsOptions { bootstrap_resamples: *bootstrap, ..PropsOptions::default() };
            let mut rng = substream(seed_of(&cli), Purpose::Replicate, u64::MAX, 0, 0);
            let report = verify_propositions_with(&p, *samples, &opts, &mut rng)?;
            let m = &report.moments;
            println!("E[D]      = {:.4} +- {:.4}", m.d.mean, m.d.std_error);
            println!("E[D^2]    = {:.4} +- {:.4}", m.d2.mean, m.d2.std_error);
            println!("E[DiDj]   = {:.4} +- {:.4}", m.d_i_d_j.mean, m.d_i_d_j.std_error);
            for t in &report.tail {
                println!(
                    "tail psi={:<4} level={:<6.2} freq={:.5} bound={:.5} below={:.3} {:?}",
                    t.psi, t.level, t.empirical.mean, t.bound, t.fraction_below, t.status
                );
            }
            for (name, cells) in [("pa", &report.pa_factorization), ("sb", &report.sb_factorization)] {
                for c in cells {
                    println!(
                        "{name} pattern={:<4} ratio={:.5} envelope=[{:.5}, {:.5}] inside={:.3} {:?}",
                        c.pattern, c.ratio, c.lower, c.upper, c.fraction_inside, c.status
                    );
                }
            }
            let dir = out_dir(&cli);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("props.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            let failed = report.cells().filter(|&c| c == CellStatus::Fail).count();
            if failed > 0 {
                bail!("{failed} property cells failed");
            }
        }
        Command::Bounds { psi } => {
            let cfg = load_config(&cli)?;
            let its = cfg.its.build()?;
            let mut out = Vec::new();
            for row in cfg.generation.grid()? {
                for p in row {
                    let dist = cfg.victim.build(p.m)?;
                    for level in cfg.noise.levels()? {
                        let noise = NoiseModel::round_robin(p.m, level.gamma.clone(), level.theta.clone())?;
                        let single = noise.gamma_channels().len() == 1;
                        let t1 = single
                            .then(|| bounds::theorem1_bound(&p, &noise.gamma_channels()[0].channel, &dist, its.epsilon, cfg.its.c_prime))
                            .transpose()?;
                        let t2 = (single && p.model != ModelKind::AlphaPa)
                            .then(|| bounds::theorem2_bound(&p, &noise.gamma_channels()[0].channel, &dist, its.epsilon))
                            .transpose()?;
                        let t3 = bounds::theorem3_bound(&p, &noise, &dist, its.epsilon, cfg.its.c_prime)?;
                        let tail = psi
                            .map(|psi| -> Result<_> {
                                Ok(serde_json::json!({
                                    "psi": psi,
                                    "level": bounds::prop2_level(&p, psi),
                                    "exponent_nats": bounds::prop2_exponent(&p, psi)?,
                                    "bound_c1": bounds::prop2_tail_bound(&p, psi)?,
                                }))
                            })
                            .transpose()?;
                        out.push(serde_json::json!({
                            "m": p.m, "n": p.n, "mu": p.mu, "alpha": p.alpha, "level": level.label,
                            "theorem1": t1, "theorem2": t2, "theorem3": t3, "tail": tail,
                        }));
                    }
                }
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::Ingest { path, min_group, min_user, edges } => {
            let ing = ingest_snap_communities(path, *min_group, *min_user)?;
            let dir = out_dir(&cli);
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&ing.manifest)? + "\n")?;
            if *edges {
                write_edges(&dir.join("graph.csv"), ing.graph.edges())?;
            }
            println!("{}", serde_json::to_string_pretty(&ing.manifest)?);
        }
    }
    Ok(())
}
