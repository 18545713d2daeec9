//! Command-line driver: run simulations, the dense reference, trajectory
//! comparisons, grid-size sweeps, and basis reports.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use qme_core::grid::ExecMode;
use qme_core::sim::{
    self, compare_runs, emit_reports, run_simulation, RunConfig, RunMode, TrajectoryRecord,
};

#[derive(Parser)]
#[command(name = "qme", about = "Grid-distributed Lindblad master equation solver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the split-step simulation and emit trajectory and timing reports.
    Run(RunArgs),
    /// Run only the dense single-worker reference solver.
    Oracle(RunArgs),
    /// Compare two emitted trajectory files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Deviation tolerance; exit code 1 when exceeded.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Sweep grid sizes on one model and tabulate times and comm events.
    Bench(BenchArgs),
    /// Report the reduced-basis dimension and memory figures.
    Subspace {
        #[arg(long)]
        n_at: usize,
        /// Also write the index -> bit word listing to this path.
        #[arg(long)]
        list: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct ModelFlags {
    /// Config file in `key = value` form; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_at: Option<usize>,
    #[arg(long)]
    g_over_e: Option<f64>,
    #[arg(long)]
    gamma_dt: Option<f64>,
    #[arg(long)]
    gamma_prime_dt: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    grid_side: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace_tol: Option<f64>,
    /// Force sequential execution of the grid workers.
    #[arg(long)]
    sequential: bool,
}

impl ModelFlags {
    fn build(&self, base: RunConfig) -> anyhow::Result<RunConfig> {
        let mut config = base;
        if let Some(path) = &self.config {
            config
                .merge_file(path)
                .with_context(|| format!("reading {}", path.display()))?;
        }
        if let Some(v) = self.n_at {
            config.n_at = v;
        }
        if let Some(v) = self.g_over_e {
            config.g_over_e = v;
        }
        if let Some(v) = self.gamma_dt {
            config.gamma_dt = v;
        }
        if let Some(v) = self.gamma_prime_dt {
            config.gamma_prime_dt = v;
        }
        if let Some(v) = self.k_max {
            config.k_max = v;
        }
        if let Some(v) = self.dt {
            config.dt = v;
        }
        if let Some(v) = self.steps {
            config.steps = v;
        }
        if let Some(v) = self.grid_side {
            config.grid_side = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.trace_tol {
            config.trace_tol = v;
        }
        if self.sequential {
            config.exec = ExecMode::Sequential;
        }
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// distributed, oracle, or both.
    #[arg(long)]
    mode: Option<String>,
    /// Directory the reports are written to.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelFlags,
    /// Comma-separated grid sides to sweep.
    #[arg(long, default_value = "1,2,4", value_delimiter = ',')]
    grids: Vec<usize>,
    /// Optional output path for the sweep table.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_run(args: &RunArgs, force_oracle: bool) -> anyhow::Result<()> {
    let mut config = args.model.build(RunConfig::default())?;
    if let Some(mode) = &args.mode {
        config.mode = mode.parse::<RunMode>()?;
    }
    if force_oracle {
        config.mode = RunMode::Oracle;
    }
    let output = run_simulation(&config)?;

    let last = output
        .trajectory
        .steps
        .last()
        .expect("run records at least the initial step");
    println!(
        "{} run: {} atoms, dim {}, {} steps, grid {}x{}",
        config.mode,
        config.n_at,
        3usize.pow(config.n_at as u32),
        config.steps,
        config.grid_side,
        config.grid_side
    );
    println!("final trace      : {:.12}", last.trace);
    println!("final energy / E : {:.6}", last.energy());
    for (n, p) in last.populations.iter().enumerate() {
        println!("P_{n}({:.3}) = {p:.6}", last.time);
    }
    if let Some(cmp) = &output.comparison {
        println!("max deviation vs dense reference: {:.3e}", cmp.max_abs);
        if let Some(dev) = cmp.max_state_dev {
            println!("max state deviation             : {dev:.3e}");
        }
        if let Some((step, obs)) = &cmp.first_exceeding {
            bail!("comparison exceeded tolerance at step {step} ({obs})");
        }
    }
    if let Some(comm) = &output.comm {
        println!(
            "comm events: {} alignment, {} shift, {} point",
            comm.alignment_events, comm.shift_events, comm.point_events
        );
    }
    let written = emit_reports(&output, &args.out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare(a: &PathBuf, b: &PathBuf, tol: f64) -> anyhow::Result<()> {
    let ta = TrajectoryRecord::read_text(std::io::BufReader::new(
        fs::File::open(a).with_context(|| format!("opening {}", a.display()))?,
    ))?;
    let tb = TrajectoryRecord::read_text(std::io::BufReader::new(
        fs::File::open(b).with_context(|| format!("opening {}", b.display()))?,
    ))?;
    let report = compare_runs(&ta, &tb, tol)?;
    for (name, dev) in &report.per_observable {
        println!("{name}\tmax |a-b| = {dev:.3e}");
    }
    println!("overall max deviation: {:.3e}", report.max_abs);
    match &report.first_exceeding {
        Some((step, obs)) => bail!("tolerance {tol:.1e} first exceeded at step {step} ({obs})"),
        None => {
            println!("within tolerance {tol:.1e}");
            Ok(())
        }
    }
}

fn cmd_bench(args: &BenchArgs) -> anyhow::Result<()> {
    let mut config = args.model.build(RunConfig::default())?;
    // a short horizon is enough for timing trends
    if args.model.steps.is_none() {
        config.steps = 10;
    }
    let rows = sim::bench_sweep(&config, &args.grids)?;
    let mut table = Vec::new();
    sim::write_bench_table(&rows, &mut table)?;
    print!("{}", String::from_utf8_lossy(&table));
    if let Some(path) = &args.out {
        fs::write(path, &table)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_subspace(n_at: usize, list: Option<&PathBuf>) -> anyhow::Result<()> {
    let report = sim::subspace_report(n_at)?;
    println!("{report}");
    if let Some(path) = list {
        let mut f = fs::File::create(path)?;
        sim::write_subspace_listing(n_at, &mut f)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args, false),
        Command::Oracle(args) => cmd_run(args, true),
        Command::Compare { a, b, tol } => cmd_compare(a, b, *tol),
        Command::Bench(args) => cmd_bench(args),
        Command::Subspace { n_at, list } => cmd_subspace(*n_at, list.as_ref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
