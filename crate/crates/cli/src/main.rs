mod failure;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use evi_core::experiment::{
    self, convergence_experiment, oracle_gap, sample_sweep, InstanceSource, DEFAULT_ACTIONS, DEFAULT_GAMMA,
    DEFAULT_GRID_K, DEFAULT_INSTANCE_SEED, DEFAULT_OBJECTIVES, DEFAULT_STATES,
};
use evi_core::generate::{random_deterministic_momdp, random_momdp};
use evi_core::oracles::DEFAULT_ENUMERATION_CAP;
use evi_core::{
    compute_schedule, enumerate_ccs, exact_evi, fixed_step_evi, load_momdp, model_based_evi, MomdpError, PreferenceSet, StopRule, TabularMomdp,
    TabularSimulator,
};

use failure::Failure;

#[derive(Parser)]
#[command(name = "evi", version, about = "Envelope value iteration for tabular multi-objective MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and report every problem found.
    Validate {
        /// Instance file (JSON).
        #[arg(long, value_name = "PATH")]
        instance: PathBuf,
    },
    /// Solve an instance with exact or sampled dynamics.
    Solve(SolveArgs),
    /// Compare the envelope solution against per-preference scalar solves.
    OracleCheck(OracleArgs),
    /// Distance to the empirical fixed point at every iteration, against its bound.
    ExpConvergence(ConvergenceArgs),
    /// Distance to the true fixed point as the per-pair sample count grows.
    ExpNsweep(SweepArgs),
    /// Write a random instance.
    GenInstance(GenArgs),
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance file; a seeded random instance is used when omitted.
    #[arg(long, value_name = "PATH")]
    instance: Option<PathBuf>,
    /// Override the discount factor.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_STATES)]
    states: usize,
    #[arg(long, default_value_t = DEFAULT_ACTIONS)]
    actions: usize,
    #[arg(long, default_value_t = DEFAULT_OBJECTIVES)]
    objectives: usize,
    #[arg(long, default_value_t = DEFAULT_INSTANCE_SEED)]
    instance_seed: u64,
    /// Simplex grid resolution.
    #[arg(long, default_value_t = DEFAULT_GRID_K)]
    grid_k: usize,
    /// Preference file (JSON `{m, vectors}`), replacing the simplex grid.
    #[arg(long, value_name = "PATH")]
    prefs: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exact,
    ModelBased,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Sampling seed (model-based mode).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per state-action pair, overriding the schedule.
    #[arg(long = "N", value_name = "N")]
    samples: Option<u64>,
    /// Iteration count, overriding the schedule; in exact mode, run exactly this many backups.
    #[arg(long = "T", value_name = "T")]
    iterations: Option<usize>,
    /// Stopping tolerance in exact mode.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Output directory for moq.csv and trace.csv.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Largest acceptable gap.
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
    /// Also enumerate all deterministic policies and write the frontier CSV here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    start_state: usize,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u64,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long = "N", value_name = "N", default_value_t = 1000)]
    samples: u64,
    /// Iteration count; derived from epsilon when omitted.
    #[arg(long = "T", value_name = "T")]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Seeds as `a..b` or a comma list.
    #[arg(long, default_value = "0..20", value_parser = parse_seeds)]
    seeds: U64List,
    /// CSV output; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Comma-separated samples-per-pair values.
    #[arg(long = "N-list", value_name = "LIST", default_value = "100,1000,10000,100000", value_parser = parse_u64_list)]
    sample_sizes: U64List,
    #[arg(long, default_value = "0..20", value_parser = parse_seeds)]
    seeds: U64List,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long = "T", value_name = "T")]
    iterations: Option<usize>,
    /// Add a wall_time_s column (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
    /// Fail unless the fitted slope lies in LO,HI.
    #[arg(long, value_name = "LO,HI", value_parser = parse_range)]
    slope_range: Option<(f64, f64)>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-N median CSV.
    #[arg(long, value_name = "PATH")]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = DEFAULT_STATES)]
    states: usize,
    #[arg(long, default_value_t = DEFAULT_ACTIONS)]
    actions: usize,
    #[arg(long, default_value_t = DEFAULT_OBJECTIVES)]
    objectives: usize,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_INSTANCE_SEED)]
    seed: u64,
    /// Every row is a point mass.
    #[arg(long)]
    deterministic: bool,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct U64List(Vec<u64>);

fn parse_u64_list(text: &str) -> Result<U64List, String> {
    let values: Vec<u64> = text
        .split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err("empty list".into());
    }
    Ok(U64List(values))
}

fn parse_seeds(text: &str) -> Result<U64List, String> {
    match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: u64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
            let hi: u64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
            if hi <= lo {
                return Err(format!("empty seed range {text}"));
            }
            Ok(U64List((lo..hi).collect()))
        }
        None => parse_u64_list(text),
    }
}

fn parse_range(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    Ok((lo, hi))
}

impl InstanceArgs {
    fn load(&self) -> Result<(TabularMomdp, PreferenceSet), Failure> {
        let mut momdp = match &self.instance {
            Some(path) => load_instance(path)?,
            None => InstanceSource::Random {
                states: self.states,
                actions: self.actions,
                objectives: self.objectives,
                gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
                seed: self.instance_seed,
            }
            .load()?,
        };
        if let Some(gamma) = self.gamma {
            if gamma != momdp.gamma() {
                let mut data = momdp.to_data();
                data.gamma = gamma;
                momdp = TabularMomdp::try_from(data)?;
            }
        }
        let prefs = match &self.prefs {
            Some(path) => PreferenceSet::load(path)?,
            None => experiment::preference_grid(&momdp, self.grid_k)?,
        };
        if prefs.dim() != momdp.num_objectives() {
            return Err(Failure::validation(format!(
                "preferences have {} components but the instance has {} objectives",
                prefs.dim(),
                momdp.num_objectives()
            )));
        }
        Ok((momdp, prefs))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(format!("{}: {e}", parent.display())))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_failure(path: &Path) -> impl Fn(csv::Error) -> Failure + '_ {
    move |e| Failure::io(format!("{}: {e}", path.display()))
}

fn load_instance(path: &Path) -> Result<TabularMomdp, Failure> {
    load_momdp(path).map_err(|e| match e {
        MomdpError::Io(inner) => Failure::io(format!("{}: {inner}", path.display())),
        other => other.into(),
    })
}

fn validate(path: &Path) -> Result<(), Failure> {
    let momdp = load_instance(path)?;
    println!(
        "ok: {} states, {} actions, {} objectives, gamma {}",
        momdp.num_states(),
        momdp.num_actions(),
        momdp.num_objectives(),
        momdp.gamma()
    );
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<(), Failure> {
    let (momdp, prefs) = args.instance.load()?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::io(format!("{}: {e}", args.out.display())))?;
    let (q, trace) = match args.mode {
        Mode::Exact => {
            let (q, trace) = match args.iterations {
                Some(t) => fixed_step_evi(&momdp, momdp.transitions(), &prefs, t, None)?,
                None => exact_evi(&momdp, &prefs, StopRule::new(momdp.gamma(), args.tol))?,
            };
            let last = trace.rows.last().map_or(0.0, |r| r.max_change);
            println!("exact: {} iterations, final change {last:.3e}", trace.len());
            (q, trace)
        }
        Mode::ModelBased => {
            let schedule = compute_schedule(
                args.epsilon,
                args.delta,
                momdp.num_objectives(),
                momdp.num_states(),
                momdp.num_actions(),
                momdp.gamma(),
            )?
            .with_overrides(args.samples, args.iterations);
            println!("N = {}", schedule.samples_per_pair);
            println!("T = {}", schedule.iterations);
            println!("xi = {:e}", schedule.xi);
            let sim = TabularSimulator::of(&momdp);
            let (q, empirical, trace) = model_based_evi(&momdp, &sim, &schedule, &prefs, args.seed)?;
            let path = args.out.join("empirical.json");
            empirical.save(&path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            (q, trace)
        }
    };
    let moq_path = args.out.join("moq.csv");
    q.write_csv(create(&moq_path)?).map_err(csv_failure(&moq_path))?;
    let trace_path = args.out.join("trace.csv");
    trace.write_csv(create(&trace_path)?).map_err(csv_failure(&trace_path))?;
    println!("wrote {} and {}", moq_path.display(), trace_path.display());
    Ok(())
}

fn oracle_check(args: &OracleArgs) -> Result<(), Failure> {
    let (momdp, prefs) = args.instance.load()?;
    let gap = oracle_gap(&momdp, &prefs, args.tol)?;
    println!("max |w.Q - Q_w| = {:.3e} after {} iterations", gap.max_gap, gap.iterations);
    if let Some(path) = &args.out {
        let frontier = enumerate_ccs(&momdp, &prefs, args.start_state, args.cap)?;
        println!(
            "{} policies, {} pareto, {} in coverage set",
            frontier.entries.len(),
            frontier.pareto.len(),
            frontier.ccs.len()
        );
        let (q, _) = exact_evi(&momdp, &prefs, StopRule::new(momdp.gamma(), args.tol))?;
        let envelope_gap = prefs
            .iter()
            .enumerate()
            .map(|(idx, w)| {
                let best = (0..momdp.num_actions())
                    .map(|a| q.scalarized(&prefs, args.start_state, a, idx))
                    .fold(f64::NEG_INFINITY, f64::max);
                (best - frontier.best_scalarized(w)).abs()
            })
            .fold(0.0, f64::max);
        println!("max |V_w(s0) - best policy| = {envelope_gap:.3e}");
        frontier.write_csv(create(path)?).map_err(csv_failure(path))?;
        if envelope_gap > args.threshold {
            return Err(Failure::assertion(format!("frontier gap {envelope_gap:e} exceeds {:e}", args.threshold)));
        }
    }
    if !(gap.max_gap <= args.threshold) {
        return Err(Failure::assertion(format!("gap {:e} exceeds {:e}", gap.max_gap, args.threshold)));
    }
    Ok(())
}

fn exp_convergence(args: &ConvergenceArgs) -> Result<(), Failure> {
    let (momdp, prefs) = args.instance.load()?;
    let iterations = match args.iterations {
        Some(t) => t,
        None => compute_schedule(args.epsilon, 0.1, momdp.num_objectives(), momdp.num_states(), momdp.num_actions(), momdp.gamma())?
            .iterations,
    };
    let result = convergence_experiment(&momdp, &prefs, args.samples, iterations, &args.seeds.0)?;
    let label = args.out.as_deref().unwrap_or(Path::new("stdout"));
    let mut out = output(args.out.as_deref())?;
    result.write_csv(&mut out).map_err(csv_failure(label))?;
    out.flush()?;
    eprintln!(
        "{} seeds x {} iterations: {} bound violations, {} contraction violations",
        args.seeds.0.len(),
        iterations,
        result.bound_violations.len(),
        result.contraction_violations.len()
    );
    if !result.passed() {
        let worst = result
            .bound_violations
            .iter()
            .chain(&result.contraction_violations)
            .map(|&i| &result.rows[i])
            .next()
            .map(|r| format!(" (first: seed {} t {} distance {:e} bound {:e})", r.seed, r.t, r.distance, r.bound))
            .unwrap_or_default();
        return Err(Failure::assertion(format!("measured distance exceeded the bound{worst}")));
    }
    Ok(())
}

fn exp_nsweep(args: &SweepArgs) -> Result<(), Failure> {
    let (momdp, prefs) = args.instance.load()?;
    let schedule = compute_schedule(
        args.epsilon,
        args.delta,
        momdp.num_objectives(),
        momdp.num_states(),
        momdp.num_actions(),
        momdp.gamma(),
    )?
    .with_overrides(None, args.iterations);
    eprintln!("T = {}", schedule.iterations);
    let result = sample_sweep(&momdp, &prefs, &schedule, &args.sample_sizes.0, &args.seeds.0)?;
    let label = args.out.as_deref().unwrap_or(Path::new("stdout"));
    let mut out = output(args.out.as_deref())?;
    result.write_csv(&mut out, args.timing).map_err(csv_failure(label))?;
    out.flush()?;
    if let Some(path) = &args.summary {
        result.write_summary_csv(create(path)?).map_err(csv_failure(path))?;
    }
    for (n, median) in &result.medians {
        eprintln!("N = {n}: median distance {median:.4e}");
    }
    println!("slope = {:.4}", result.slope);
    if !result.medians_monotone() {
        eprintln!("warning: medians are not monotone in N");
    }
    if let Some((lo, hi)) = args.slope_range {
        if !(lo..=hi).contains(&result.slope) {
            return Err(Failure::assertion(format!("slope {:.4} outside [{lo}, {hi}]", result.slope)));
        }
    }
    Ok(())
}

fn gen_instance(args: &GenArgs) -> Result<(), Failure> {
    if args.states == 0 || args.actions == 0 || args.objectives == 0 || !(0.0..1.0).contains(&args.gamma) {
        return Err(Failure::validation("sizes must be positive and gamma in [0, 1)"));
    }
    let momdp = if args.deterministic {
        random_deterministic_momdp(args.states, args.actions, args.objectives, args.gamma, args.seed)
    } else {
        random_momdp(args.states, args.actions, args.objectives, args.gamma, args.seed)
    };
    match &args.out {
        Some(path) => momdp.save(path)?,
        None => println!("{}", momdp.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { instance } => validate(instance),
        Command::Solve(args) => solve(args),
        Command::OracleCheck(args) => oracle_check(args),
        Command::ExpConvergence(args) => exp_convergence(args),
        Command::ExpNsweep(args) => exp_nsweep(args),
        Command::GenInstance(args) => gen_instance(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{failure}");
            failure.exit_code()
        }
    }
}
