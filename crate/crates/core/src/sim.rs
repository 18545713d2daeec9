//! Split-step simulation driver, trajectory records, and report emission.
//!
//! A run builds the reduced basis and model, distributes the initial density
//! matrix over the grid, then alternates the unitary step with the channel
//! updates, recording excitation-sector populations and conservation
//! diagnostics every step. Output files are plain delimited text so they can
//! be compared across implementations with ordinary tooling.

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;

use crate::cannon::{build_propagators, unitary_step, HermitianPolicy};
use crate::dissipator::{apply_all_channels, ChannelUpdatePlan};
use crate::error::{Error, Result};
use crate::grid::{CommKind, ExecMode, Grid, Section, TimingReport};
use crate::model::{build_channels, build_hamiltonian, ModelParams};
use crate::oracle::{DenseOracle, DEFAULT_ORACLE_CAP};
use crate::subspace::{generate_subspace, memory_ratio, tcm_rules, BasisState, Subspace};
use crate::tensor::ComplexMatrix;

/// Grid sides the driver accepts.
pub const SUPPORTED_GRID_SIDES: [usize; 5] = [1, 2, 4, 8, 16];

/// Hermiticity bound asserted on every recorded step.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Exact-arithmetic trace-preservation bound for one channel-update sweep.
pub const DISSIPATOR_TRACE_TOL: f64 = 1e-14;

/// Population window slack: first-order steps may dip microscopically.
pub const POPULATION_SLACK: f64 = 1e-9;

/// Per-step slack for the energy-monotonicity check.
pub const ENERGY_SLACK: f64 = 1e-12;

/// Elementwise tolerance used for distributed/oracle comparisons.
pub const DEFAULT_COMPARE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Distributed,
    Oracle,
    Both,
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distributed" => Ok(RunMode::Distributed),
            "oracle" => Ok(RunMode::Oracle),
            "both" => Ok(RunMode::Both),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected distributed, oracle, or both)"
            ))),
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunMode::Distributed => "distributed",
            RunMode::Oracle => "oracle",
            RunMode::Both => "both",
        })
    }
}

/// Full description of one run. All quantities are dimensionless internal
/// units: energies in `E = hbar*omega`, times in `hbar/E`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n_at: usize,
    /// Coupling over the excitation energy, `g / E`.
    pub g_over_e: f64,
    /// Dissipation intensity times the step, `gamma * dt / hbar`.
    pub gamma_dt: f64,
    /// Influx intensity times the step.
    pub gamma_prime_dt: f64,
    pub k_max: usize,
    /// Step size, `E * dt / hbar`.
    pub dt: f64,
    pub steps: usize,
    pub grid_side: usize,
    pub mode: RunMode,
    /// Reserved for randomized tooling; echoed into reports.
    pub seed: u64,
    pub exec: ExecMode,
    /// Cumulative trace-drift budget asserted every step.
    pub trace_tol: f64,
    /// Keep per-step dense snapshots in the output (memory heavy).
    pub store_states: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::decay_preset(5)
    }
}

impl RunConfig {
    /// The dissipative-cascade experiment: all atoms excited, photon leakage
    /// drains the energy ladder to the ground state. Sized so the run ends
    /// deep in the decayed regime while the per-step truncation drift stays
    /// within the trace budget.
    pub fn decay_preset(n_at: usize) -> Self {
        Self {
            n_at,
            g_over_e: 0.2,
            gamma_dt: 0.025,
            gamma_prime_dt: 0.0,
            k_max: 10,
            dt: 0.05,
            steps: 800,
            grid_side: 4,
            mode: RunMode::Distributed,
            seed: 42,
            exec: ExecMode::default(),
            trace_tol: 1e-9,
            store_states: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_at == 0 {
            return Err(Error::Config("n_at must be at least 1".into()));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.dt <= 0.0 {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("k_max must be at least 1".into()));
        }
        if !SUPPORTED_GRID_SIDES.contains(&self.grid_side) {
            return Err(Error::Config(format!(
                "grid_side {} unsupported (choose one of {SUPPORTED_GRID_SIDES:?})",
                self.grid_side
            )));
        }
        let dim = 3usize.checked_pow(self.n_at as u32).unwrap_or(usize::MAX);
        if self.grid_side > dim {
            return Err(Error::Config(format!(
                "grid_side {} exceeds basis dimension {dim}",
                self.grid_side
            )));
        }
        if self.gamma_dt < 0.0 || self.gamma_prime_dt < 0.0 {
            return Err(Error::Config("rates must be non-negative".into()));
        }
        if self.gamma_dt == 0.0 && self.gamma_prime_dt != 0.0 {
            return Err(Error::Config(
                "gamma_prime_dt requires a positive gamma_dt".into(),
            ));
        }
        if self.gamma_dt > 0.0 && self.gamma_prime_dt >= self.gamma_dt {
            return Err(Error::Config(format!(
                "gamma_prime_dt = {} must stay below gamma_dt = {}",
                self.gamma_prime_dt, self.gamma_dt
            )));
        }
        if self.trace_tol <= 0.0 {
            return Err(Error::Config("trace_tol must be positive".into()));
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            n_at: self.n_at,
            hbar_omega: 1.0,
            g: self.g_over_e,
            gamma: self.gamma_dt / self.dt,
            gamma_prime: self.gamma_prime_dt / self.dt,
        }
    }

    /// Apply one `key = value` setting.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("malformed value '{value}' for key '{key}'")))
        }
        match key {
            "n_at" => self.n_at = parse(key, value)?,
            "g_over_e" => self.g_over_e = parse(key, value)?,
            "gamma_dt" => self.gamma_dt = parse(key, value)?,
            "gamma_prime_dt" => self.gamma_prime_dt = parse(key, value)?,
            "k_max" => self.k_max = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "grid_side" => self.grid_side = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "trace_tol" => self.trace_tol = parse(key, value)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown config key '{other}' (valid keys: n_at, g_over_e, gamma_dt, \
                     gamma_prime_dt, k_max, dt, steps, grid_side, mode, seed, trace_tol)"
                )))
            }
        }
        Ok(())
    }

    /// Parse a `key = value` config file over the preset defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut config = Self::default();
        config.merge_file(path)?;
        Ok(config)
    }

    /// Parse a `key = value` config file into an existing config.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected 'key = value', got '{raw}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set_key(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

/// Observables of one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// Populations per excitation sector, `P_0 ..= P_n_at`.
    pub populations: Vec<f64>,
    pub trace: f64,
    pub herm_defect: f64,
}

impl StepRecord {
    /// Expected energy in units of `E`: sum of `n * P_n`.
    pub fn energy(&self) -> f64 {
        self.populations
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }
}

/// Recorded trajectory of a run, including the initial step 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub n_at: usize,
    pub dt: f64,
    pub steps: Vec<StepRecord>,
}

impl TrajectoryRecord {
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# trajectory n_at={} dt={}", self.n_at, self.dt)?;
        write!(w, "# step\ttime")?;
        for n in 0..=self.n_at {
            write!(w, "\tP_{n}")?;
        }
        writeln!(w, "\ttrace\therm_defect")?;
        for s in &self.steps {
            write!(w, "{}\t{}", s.step, s.time)?;
            for p in &s.populations {
                write!(w, "\t{p}")?;
            }
            writeln!(w, "\t{}\t{}", s.trace, s.herm_defect)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut n_at = None;
        let mut dt = None;
        let mut steps = Vec::new();
        for line in r.lines() {
            let line = line?;
            if let Some(rest) = line.strip_prefix("# trajectory") {
                for token in rest.split_whitespace() {
                    if let Some(v) = token.strip_prefix("n_at=") {
                        n_at = Some(v.parse().map_err(|_| {
                            Error::Parse(format!("malformed n_at in '{line}'"))
                        })?);
                    }
                    if let Some(v) = token.strip_prefix("dt=") {
                        dt = Some(v.parse().map_err(|_| {
                            Error::Parse(format!("malformed dt in '{line}'"))
                        })?);
                    }
                }
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() < 4 {
                return Err(Error::Parse(format!("short trajectory row '{line}'")));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|_| Error::Parse(format!("malformed float '{s}'")))
            };
            let step = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("malformed step '{}'", fields[0])))?;
            let time = parse_f(fields[1])?;
            let populations = fields[2..fields.len() - 2]
                .iter()
                .map(|s| parse_f(s))
                .collect::<Result<Vec<_>>>()?;
            let trace = parse_f(fields[fields.len() - 2])?;
            let herm_defect = parse_f(fields[fields.len() - 1])?;
            steps.push(StepRecord {
                step,
                time,
                populations,
                trace,
                herm_defect,
            });
        }
        let n_at = n_at.ok_or_else(|| Error::Parse("missing trajectory header".into()))?;
        let dt = dt.ok_or_else(|| Error::Parse("missing dt in trajectory header".into()))?;
        Ok(Self { n_at, dt, steps })
    }
}

/// Max deviations between two trajectories, per observable.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    /// `(observable, max |a - b|)` for `P_0..P_n` and the trace.
    pub per_observable: Vec<(String, f64)>,
    pub max_abs: f64,
    /// First `(step, observable)` exceeding the tolerance, if any.
    pub first_exceeding: Option<(usize, String)>,
    /// Max elementwise deviation between dense states, when both runs kept
    /// them.
    pub max_state_dev: Option<f64>,
}

/// Compare two trajectories on the same time grid.
pub fn compare_runs(
    a: &TrajectoryRecord,
    b: &TrajectoryRecord,
    tol: f64,
) -> Result<DeviationReport> {
    if a.n_at != b.n_at || a.steps.len() != b.steps.len() || a.dt != b.dt {
        return Err(Error::Config(format!(
            "trajectories use different grids: n_at {} vs {}, steps {} vs {}, dt {} vs {}",
            a.n_at,
            b.n_at,
            a.steps.len(),
            b.steps.len(),
            a.dt,
            b.dt
        )));
    }
    let observables = a.n_at + 2; // P_0..P_n, trace
    let name = |k: usize| {
        if k <= a.n_at {
            format!("P_{k}")
        } else {
            "trace".to_string()
        }
    };
    let mut per = vec![0.0f64; observables];
    let mut first = None;
    for (sa, sb) in a.steps.iter().zip(&b.steps) {
        for (k, worst) in per.iter_mut().enumerate() {
            let (va, vb) = if k <= a.n_at {
                (sa.populations[k], sb.populations[k])
            } else {
                (sa.trace, sb.trace)
            };
            let d = (va - vb).abs();
            if d > *worst {
                *worst = d;
            }
            if d > tol && first.is_none() {
                first = Some((sa.step, name(k)));
            }
        }
    }
    let max_abs = per.iter().copied().fold(0.0, f64::max);
    Ok(DeviationReport {
        per_observable: (0..observables).map(|k| (name(k), per[k])).collect(),
        max_abs,
        first_exceeding: first,
        max_state_dev: None,
    })
}

/// Communication totals of a distributed run.
#[derive(Debug, Clone, Copy, Default)]
pub struct CommSummary {
    pub alignment_events: usize,
    pub shift_events: usize,
    pub point_events: usize,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub trajectory: TrajectoryRecord,
    pub timing: Option<TimingReport>,
    pub comm: Option<CommSummary>,
    pub oracle_trajectory: Option<TrajectoryRecord>,
    pub comparison: Option<DeviationReport>,
    /// Dense states per step when `store_states` was set.
    pub states: Option<Vec<ComplexMatrix>>,
    /// Final density matrix, for offline comparison in the matrix format.
    pub final_state: ComplexMatrix,
}

struct StepCheck<'a> {
    config: &'a RunConfig,
    prev_energy: f64,
}

impl StepCheck<'_> {
    fn check(&mut self, rec: &StepRecord) -> Result<()> {
        if (rec.trace - 1.0).abs() > self.config.trace_tol {
            return Err(Error::InvariantViolation(format!(
                "step {}: |trace - 1| = {:.3e} exceeds budget {:.1e}",
                rec.step,
                (rec.trace - 1.0).abs(),
                self.config.trace_tol
            )));
        }
        if rec.herm_defect > HERMITICITY_TOL {
            return Err(Error::InvariantViolation(format!(
                "step {}: hermiticity defect {:.3e} exceeds {HERMITICITY_TOL:.1e}",
                rec.step, rec.herm_defect
            )));
        }
        for (n, &p) in rec.populations.iter().enumerate() {
            if !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(&p) {
                return Err(Error::InvariantViolation(format!(
                    "step {}: population P_{n} = {p} outside [0, 1] window",
                    rec.step
                )));
            }
        }
        if self.config.gamma_prime_dt == 0.0 {
            let e = rec.energy();
            if e > self.prev_energy + ENERGY_SLACK {
                return Err(Error::InvariantViolation(format!(
                    "step {}: energy rose from {} to {e} with no influx",
                    rec.step, self.prev_energy
                )));
            }
            self.prev_energy = e;
        }
        Ok(())
    }
}

fn initial_density(space: &Subspace) -> Result<(ComplexMatrix, usize)> {
    let start = BasisState::all_excited(space.n_at())?;
    let idx = space
        .index_of(&start)
        .ok_or(Error::ClosureViolation(start.word()))?;
    let mut rho = ComplexMatrix::zeros(space.dim(), space.dim());
    rho.set(idx, idx, Complex64::new(1.0, 0.0));
    Ok((rho, idx))
}

fn record_step(
    step: usize,
    dt: f64,
    diag: &[Complex64],
    trace: f64,
    herm_defect: f64,
    sectors: &[usize],
    n_at: usize,
) -> StepRecord {
    let mut populations = vec![0.0; n_at + 1];
    for (i, z) in diag.iter().enumerate() {
        populations[sectors[i]] += z.re;
    }
    StepRecord {
        step,
        time: step as f64 * dt,
        populations,
        trace,
        herm_defect,
    }
}

/// Execute a run per the config: the split-step loop on the grid, the dense
/// reference, or both with per-step comparison.
pub fn run_simulation(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let params = config.model_params();
    let space = generate_subspace(
        config.n_at,
        BasisState::all_excited(config.n_at)?,
        &tcm_rules(),
    )?;
    let sectors = space.excitations();
    let h = build_hamiltonian(&params, &space)?;
    let channels = build_channels(&params, &space)?;
    let (rho0, _) = initial_density(&space)?;

    let oracle_run = if config.mode != RunMode::Distributed {
        let oracle = DenseOracle::new(&h, &channels, config.dt, config.k_max, DEFAULT_ORACLE_CAP)?;
        Some(oracle.run(&rho0, config.steps, &sectors)?)
    } else {
        None
    };

    let oracle_trajectory = oracle_run.as_ref().map(|run| TrajectoryRecord {
        n_at: config.n_at,
        dt: config.dt,
        steps: (0..=config.steps)
            .map(|step| StepRecord {
                step,
                time: step as f64 * config.dt,
                populations: run.sector_populations[step].clone(),
                trace: run.traces[step],
                herm_defect: run.herm_defects[step],
            })
            .collect(),
    });

    if config.mode == RunMode::Oracle {
        let trajectory = oracle_trajectory.expect("oracle mode ran the dense reference");
        let mut check = StepCheck {
            config,
            prev_energy: f64::INFINITY,
        };
        for rec in &trajectory.steps {
            check.check(rec)?;
        }
        let run = oracle_run.expect("oracle mode ran the dense reference");
        let final_state = run.states.last().expect("run keeps every state").clone();
        let states = config.store_states.then_some(run.states);
        return Ok(RunOutput {
            trajectory,
            timing: None,
            comm: None,
            oracle_trajectory: None,
            comparison: None,
            states,
            final_state,
        });
    }

    // distributed path
    let mut grid = Grid::new(config.grid_side, config.exec)?;
    grid.set_section(Section::Unitary);
    let props = build_propagators(&h, config.dt, config.k_max, &mut grid, HermitianPolicy::Reject)?;
    let plan = if channels.is_empty() {
        None
    } else {
        Some(ChannelUpdatePlan::from_channels(
            &channels, config.dt, space.dim(),
        )?)
    };
    let mut rho = grid.distribute(&rho0)?;

    let mut trajectory = TrajectoryRecord {
        n_at: config.n_at,
        dt: config.dt,
        steps: Vec::with_capacity(config.steps + 1),
    };
    let mut states = config.store_states.then(Vec::new);
    let mut max_state_dev: Option<f64> = oracle_run.as_ref().map(|_| 0.0);

    let first = record_step(
        0,
        config.dt,
        &rho.diagonal(),
        rho.trace().re,
        rho.hermiticity_defect(),
        &sectors,
        config.n_at,
    );
    let mut check = StepCheck {
        config,
        prev_energy: f64::INFINITY,
    };
    check.check(&first)?;
    trajectory.steps.push(first);
    if let Some(states) = states.as_mut() {
        states.push(grid.collect(&rho)?);
    }

    for step in 1..=config.steps {
        grid.set_section(Section::Unitary);
        rho = unitary_step(&rho, &props, &mut grid)?;
        if let Some(plan) = &plan {
            let trace_before = rho.trace();
            grid.set_section(Section::Dissipator);
            apply_all_channels(&mut rho, plan, &mut grid)?;
            let shift = (rho.trace() - trace_before).norm();
            if shift > DISSIPATOR_TRACE_TOL {
                return Err(Error::InvariantViolation(format!(
                    "step {step}: channel updates moved the trace by {shift:.3e}"
                )));
            }
        }
        let rec = record_step(
            step,
            config.dt,
            &rho.diagonal(),
            rho.trace().re,
            rho.hermiticity_defect(),
            &sectors,
            config.n_at,
        );
        check.check(&rec)?;
        trajectory.steps.push(rec);

        if oracle_run.is_some() || states.is_some() {
            let dense = grid.collect(&rho)?;
            if let Some(run) = &oracle_run {
                let dev = dense.max_abs_diff(&run.states[step]);
                max_state_dev = max_state_dev.map(|m| m.max(dev));
            }
            if let Some(states) = states.as_mut() {
                states.push(dense);
            }
        }
    }

    let comparison = match (&oracle_trajectory, max_state_dev) {
        (Some(oracle), state_dev) => {
            let mut report = compare_runs(&trajectory, oracle, DEFAULT_COMPARE_TOL)?;
            report.max_state_dev = state_dev;
            Some(report)
        }
        _ => None,
    };

    let events = grid.events();
    let comm = CommSummary {
        alignment_events: events.iter().filter(|e| e.kind == CommKind::Alignment).count(),
        shift_events: events.iter().filter(|e| e.kind == CommKind::Shift).count(),
        point_events: events.iter().filter(|e| e.kind == CommKind::Point).count(),
    };
    let final_state = grid.collect(&rho)?;

    Ok(RunOutput {
        trajectory,
        timing: Some(grid.collect_timing()),
        comm: Some(comm),
        oracle_trajectory,
        comparison,
        states,
        final_state,
    })
}

/// Write trajectory, timing, and (when present) the reference trajectory
/// under `dir`; returns the created paths.
pub fn emit_reports(output: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let traj_path = dir.join("trajectory.tsv");
    let mut f = fs::File::create(&traj_path)?;
    output.trajectory.write_text(&mut f)?;
    written.push(traj_path);

    if let Some(timing) = &output.timing {
        let path = dir.join("timing.tsv");
        let mut f = fs::File::create(&path)?;
        timing.write_text(&mut f)?;
        written.push(path);
    }

    if let Some(oracle) = &output.oracle_trajectory {
        let path = dir.join("oracle_trajectory.tsv");
        let mut f = fs::File::create(&path)?;
        oracle.write_text(&mut f)?;
        written.push(path);
    }

    let state_path = dir.join("final_state.txt");
    let mut f = fs::File::create(&state_path)?;
    output.final_state.write_text(&mut f)?;
    written.push(state_path);

    Ok(written)
}

/// One row of the grid-size sweep.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub grid_side: usize,
    pub workers: usize,
    pub mean_unitary_mac: f64,
    pub mean_unitary_comm: f64,
    pub mean_dissipator_mac: f64,
    pub mean_dissipator_comm: f64,
    pub alignment_events: usize,
    pub shift_events: usize,
    pub point_events: usize,
}

/// Run the same model across grid sides and tabulate per-processor times
/// and communication totals.
pub fn bench_sweep(base: &RunConfig, grid_sides: &[usize]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &side in grid_sides {
        let mut config = base.clone();
        config.grid_side = side;
        config.mode = RunMode::Distributed;
        config.store_states = false;
        let output = run_simulation(&config)?;
        let timing = output.timing.expect("distributed run produces timing");
        let comm = output.comm.expect("distributed run produces comm counts");
        rows.push(BenchRow {
            grid_side: side,
            workers: side * side,
            mean_unitary_mac: timing.entries.iter().map(|e| e.unitary_mac).sum::<f64>()
                / timing.entries.len() as f64,
            mean_unitary_comm: timing.entries.iter().map(|e| e.unitary_comm).sum::<f64>()
                / timing.entries.len() as f64,
            mean_dissipator_mac: timing.entries.iter().map(|e| e.dissipator_mac).sum::<f64>()
                / timing.entries.len() as f64,
            mean_dissipator_comm: timing
                .entries
                .iter()
                .map(|e| e.dissipator_comm)
                .sum::<f64>()
                / timing.entries.len() as f64,
            alignment_events: comm.alignment_events,
            shift_events: comm.shift_events,
            point_events: comm.point_events,
        });
    }
    Ok(rows)
}

/// Serialize the sweep as a delimited table.
pub fn write_bench_table<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(
        w,
        "# grid_side\tworkers\tmean_unitary_mac\tmean_unitary_comm\tmean_dissipator_mac\tmean_dissipator_comm\talignment_events\tshift_events\tpoint_events"
    )?;
    for r in rows {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.grid_side,
            r.workers,
            r.mean_unitary_mac,
            r.mean_unitary_comm,
            r.mean_dissipator_mac,
            r.mean_dissipator_comm,
            r.alignment_events,
            r.shift_events,
            r.point_events
        )?;
    }
    Ok(())
}

/// Dimension and memory figures for the reduced basis.
#[derive(Debug, Clone)]
pub struct SubspaceReport {
    pub n_at: usize,
    pub dim: usize,
    pub full_dim: u64,
    pub dim_ratio: f64,
    pub memory_ratio: f64,
    pub channel_count: usize,
}

impl fmt::Display for SubspaceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "atoms:            {}", self.n_at)?;
        writeln!(f, "reduced dimension: {}", self.dim)?;
        writeln!(f, "full dimension:    {}", self.full_dim)?;
        writeln!(
            f,
            "dimension ratio:   {:.4} ({:.2}%)",
            self.dim_ratio,
            self.dim_ratio * 100.0
        )?;
        writeln!(
            f,
            "memory ratio:      {:.6} ({:.2}%)",
            self.memory_ratio,
            self.memory_ratio * 100.0
        )?;
        write!(f, "loss channels:     {}", self.channel_count)
    }
}

/// Build the reduced basis for the all-excited start and report its size.
pub fn subspace_report(n_at: usize) -> Result<SubspaceReport> {
    let space = generate_subspace(n_at, BasisState::all_excited(n_at)?, &tcm_rules())?;
    let dim = space.dim();
    let full = space.full_dim();
    // channel count: one per (state, atom-with-photon) pair
    let channel_count: usize = space
        .states()
        .iter()
        .map(|s| (0..n_at).filter(|&a| s.letter(a).0).count())
        .sum();
    Ok(SubspaceReport {
        n_at,
        dim,
        full_dim: full,
        dim_ratio: dim as f64 / full as f64,
        memory_ratio: memory_ratio(dim as u64, full)?,
        channel_count,
    })
}

/// Write the basis listing for `n_at` atoms.
pub fn write_subspace_listing<W: Write>(n_at: usize, w: W) -> Result<()> {
    let space = generate_subspace(n_at, BasisState::all_excited(n_at)?, &tcm_rules())?;
    space.write_listing(w)
}
