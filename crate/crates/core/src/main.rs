use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphon_sde::dynamics::{simulate_particle_system, BrownianDriver, Coefficients};
use graphon_sde::graphon::{lp_norm, Graphon, Quadrature};
use graphon_sde::graphs::{graph_stats, sample_w_random, GraphMode, InteractionGraph};
use graphon_sde::harness::{build_setup, emit_report, run_experiment, ExperimentConfig, ExperimentKind, Report};
use graphon_sde::limitsolver::solve_graphon_sde;
use graphon_sde::measures::{dbl_estimate, dbl_exact, Dictionary, DiscreteMeasure};
use graphon_sde::{Error, Result};

#[derive(Parser)]
#[command(name = "graphon-sde", version, about = "Particle systems on graphs and their graphon limits")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON), or a meta.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Replace the config seeds with `seed, seed + 1, ...` (same count).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides the config's `out`, default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the finite particle system for the first N and seed.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Keep every k-th time step in trajectories.csv.
        #[arg(long, default_value_t = 1)]
        thin: usize,
    },
    /// Solve the graphon limit laws for the first N and seed.
    Limit {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence sweep over the configured N values.
    Converge {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Convergence sweep plus a log-log rate fit.
    Rate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Limit-law gap under constant graphon perturbations.
    Stability {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Law-of-large-numbers experiment.
    Wlln {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Bounded-Lipschitz distance between two measure files.
    Dbl {
        /// Measure file: a `dim d` header, then `w x_1 .. x_d` lines.
        #[arg(long)]
        mu: PathBuf,
        /// Second measure file.
        #[arg(long)]
        nu: PathBuf,
        /// Exact transport solution (default).
        #[arg(long, conflicts_with = "dict")]
        exact: bool,
        /// Lower bound from the test-function dictionary.
        #[arg(long)]
        dict: bool,
        /// Dictionary seed for --dict.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Interaction graphs.
    Graph {
        #[command(subcommand)]
        command: GraphCommand,
    },
    /// Graphon utilities.
    Graphon {
        #[command(subcommand)]
        command: GraphonCommand,
    },
}

#[derive(Args)]
struct GraphonArgs {
    /// Graphon descriptor as JSON text or a path to a JSON file.
    #[arg(long, conflicts_with = "kind")]
    graphon: Option<String>,
    /// Builtin kind: constant, power_law, uniform_attachment, product, user.
    #[arg(long)]
    kind: Option<String>,
    /// Exponent for power_law.
    #[arg(long)]
    a: Option<f64>,
    /// Value for constant.
    #[arg(long)]
    c: Option<f64>,
    /// Expression in x and y for user.
    #[arg(long)]
    expr: Option<String>,
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Sample a W-random graph on the regular grid.
    Sample {
        #[command(flatten)]
        graphon: GraphonArgs,
        /// Number of vertices.
        #[arg(long)]
        n: usize,
        /// Edge probability is min(beta g, 1).
        #[arg(long)]
        beta: f64,
        /// directed or symmetric
        #[arg(long, default_value = "symmetric")]
        mode: String,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the graph here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Degree and norm statistics of a graph file.
    Stats {
        /// Graph file in the text form written by `graph sample`.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum GraphonCommand {
    /// L^p norm, closed form when available.
    Norm {
        #[command(flatten)]
        graphon: GraphonArgs,
        /// Exponent p >= 1.
        #[arg(long)]
        p: f64,
        /// Force numerical quadrature.
        #[arg(long)]
        numeric: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_config(run: &RunArgs, kind: Option<ExperimentKind>) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(base) = run.seed {
        cfg.seeds = (0..cfg.seeds.len() as u64).map(|k| base.wrapping_add(k)).collect();
    }
    if let Some(out) = &run.out {
        cfg.out = Some(out.clone());
    }
    if let Some(kind) = kind {
        if !(kind == ExperimentKind::Converge && cfg.kind == ExperimentKind::Moments) {
            cfg.kind = kind;
        }
    }
    cfg.validate()?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok((cfg, dir))
}

fn graphon_from(args: &GraphonArgs) -> Result<Graphon> {
    if let Some(src) = &args.graphon {
        let path = Path::new(src);
        let text = if path.is_file() { read(path)? } else { src.clone() };
        return Graphon::from_json(&text);
    }
    let kind = args
        .kind
        .as_deref()
        .ok_or_else(|| Error::Config("give --graphon or --kind".into()))?;
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| Error::Config(format!("--kind {kind} needs --{name}")));
    match kind {
        "constant" => Graphon::constant(need(args.c, "c")?),
        "power_law" => Graphon::power_law(need(args.a, "a")?),
        "uniform_attachment" => Ok(Graphon::UniformAttachment),
        "product" => Ok(Graphon::Product),
        "user" => Graphon::user(
            args.expr
                .as_deref()
                .ok_or_else(|| Error::Config("--kind user needs --expr".into()))?,
        ),
        other => Err(Error::Config(format!("unknown graphon kind {other}"))),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate { run, thin } => {
            let (cfg, dir) = load_config(&run, None)?;
            let (n, seed) = (cfg.n_list[0], cfg.seeds[0]);
            let setup = build_setup(&cfg, n, seed)?;
            let driver = BrownianDriver::new(seed, &cfg.grid, cfg.model.dim_noise());
            let x0 = cfg.initial.sample_coupled(&setup.points, seed);
            let paths = simulate_particle_system(&setup.graph, &cfg.model, &x0, &cfg.grid, &driver)?;
            write(&dir.join("trajectories.csv"), &paths.to_csv(thin))?;
            write_meta(&cfg, &dir)?;
            println!("wrote {} particles x {} steps to {}", n, cfg.grid.steps, dir.display());
        }
        Command::Limit { run } => {
            let (cfg, dir) = load_config(&run, None)?;
            let (n, seed) = (cfg.n_list[0], cfg.seeds[0]);
            let setup = build_setup(&cfg, n, seed)?;
            let driver = BrownianDriver::new(seed, &cfg.grid, cfg.model.dim_noise());
            let samples = cfg.samples_for(n, setup.g_limit.blocks());
            let sol = solve_graphon_sde(
                &setup.g_limit,
                &cfg.model,
                &cfg.initial,
                &cfg.grid,
                &cfg.picard_options(samples, seed),
                &driver,
            )?;
            write(&dir.join("laws.txt"), &sol.laws.to_text())?;
            write(&dir.join("summary.json"), &serde_json::to_string_pretty(&sol.state)?)?;
            write_meta(&cfg, &dir)?;
            println!(
                "{} blocks x {} samples, {} Picard iterations, converged: {}",
                sol.laws.blocks(),
                sol.laws.samples(),
                sol.state.iterations,
                sol.state.converged
            );
        }
        Command::Converge { run } => experiment(&run, ExperimentKind::Converge)?,
        Command::Rate { run } => experiment(&run, ExperimentKind::Rate)?,
        Command::Stability { run } => experiment(&run, ExperimentKind::Stability)?,
        Command::Wlln { run } => experiment(&run, ExperimentKind::Wlln)?,
        Command::Dbl { mu, nu, exact: _, dict, seed } => {
            let mu = DiscreteMeasure::from_text(&read(&mu)?)?;
            let nu = DiscreteMeasure::from_text(&read(&nu)?)?;
            let d = if dict {
                dbl_estimate(&mu, &nu, &Dictionary::standard(&mu, &nu, 16, 32, seed))?
            } else {
                dbl_exact(&mu, &nu)?
            };
            println!("{d}");
        }
        Command::Graph { command } => match command {
            GraphCommand::Sample {
                graphon,
                n,
                beta,
                mode,
                seed,
                out,
            } => {
                let g = graphon_from(&graphon)?;
                let mode = match mode.as_str() {
                    "directed" => GraphMode::DirectedIndependent,
                    "symmetric" => GraphMode::SymmetricSimple,
                    other => return Err(Error::Config(format!("unknown graph mode {other}"))),
                };
                let graph = sample_w_random(&g, n, beta, mode, seed)?;
                match out {
                    Some(path) => write(&path, &graph.to_text())?,
                    None => {
                        let stdout = std::io::stdout();
                        graph
                            .write_text(stdout.lock())
                            .map_err(|e| Error::io("<stdout>", e))?;
                    }
                }
            }
            GraphCommand::Stats { input } => {
                let file = std::fs::File::open(&input).map_err(|e| Error::io(&input, e))?;
                let graph = InteractionGraph::read_text(BufReader::new(file))?;
                let stats = graph_stats(&graph);
                println!(
                    "N = {}, nnz = {}, mean degree = {}, edge density = {}, norm_1 = {}, norm_2 = {}, norm_4 = {}",
                    graph.n(),
                    graph.nnz(),
                    stats.mean_degree,
                    stats.edge_density,
                    stats.norm_1,
                    stats.norm_2,
                    stats.norm_4
                );
            }
        },
        Command::Graphon {
            command: GraphonCommand::Norm { graphon, p, numeric },
        } => {
            let g = graphon_from(&graphon)?;
            let quad = if numeric { Quadrature::numeric() } else { Quadrature::default() };
            println!("{}", lp_norm(&g, p, &quad)?);
        }
    }
    Ok(())
}

fn write_meta(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let meta = serde_json::json!({
        "config": cfg,
        "seeds": cfg.seeds,
        "git_describe": graphon_sde::harness::git_describe(),
        "config_hash": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
    });
    write(&dir.join("meta.json"), &serde_json::to_string_pretty(&meta)?)
}

fn experiment(run: &RunArgs, kind: ExperimentKind) -> Result<()> {
    let (cfg, dir) = load_config(run, Some(kind))?;
    let report = run_experiment(&cfg)?;
    emit_report(&report, &cfg, &dir)?;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(report.to_csv().as_bytes());
    match &report {
        Report::Convergence(r) => {
            if let Some(fit) = &r.fit {
                let _ = writeln!(
                    out,
                    "slope = {:.4}, R^2 = {:.4}, envelope slope -1/{} (upper bound only)",
                    fit.slope,
                    fit.r_squared,
                    2 * (r.dim + 1)
                );
            }
        }
        Report::Stability(r) => {
            if let Some(s) = r.spread {
                let _ = writeln!(out, "ratio spread = {s:.4}");
            }
        }
        Report::Wlln(_) => {}
    }
    let _ = writeln!(out, "report written to {}", dir.display());
    Ok(())
}
