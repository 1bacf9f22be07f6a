use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use implicit_imitation::gridworld::{scenario, scenario_names, ActionSet, CellRewards, GridMap, GridWorld, NoiseModel};
use implicit_imitation::harness::{apply_all, dump_run, read_config_file, run_experiment, ExperimentConfig};
use implicit_imitation::metrics::{fracture, policy_goal_rate, solve_world};
use implicit_imitation::{Error, Result};

/// Model-based reinforcement learning with implicit imitation.
#[derive(Parser)]
#[command(name = "imitate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run paired observer and control agents on a scenario and write CSV.
    Run(RunArgs),
    /// Compute the fracture of a scenario or of two map files.
    Fracture(FractureArgs),
    /// Solve a map exactly and print its optimal values and policy.
    Solve(SolveArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key=value` file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Base seed; the IMIT_SEED environment variable takes precedence.
    #[arg(long)]
    seed: Option<u64>,
    /// Series CSV path; the summary goes beside it as `<stem>.summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Repair path bound.
    #[arg(long)]
    k: Option<usize>,
    /// Repair attempts per state and mentor.
    #[arg(long)]
    n: Option<u32>,
    /// Confidence multiplier on the standard deviations.
    #[arg(long)]
    c: Option<f64>,
    /// Feasibility test significance.
    #[arg(long)]
    alpha: Option<f64>,
    /// Extra prioritized backups per step.
    #[arg(long)]
    backups: Option<usize>,
    #[arg(long)]
    no_imitation: bool,
    #[arg(long)]
    no_feasibility: bool,
    #[arg(long)]
    no_repair: bool,
    /// Comma-separated mentor indices, or `none`.
    #[arg(long)]
    mentors: Option<String>,
    /// Goal-rate window in steps.
    #[arg(long)]
    window: Option<usize>,
    /// Write a series row every this many steps.
    #[arg(long)]
    every: Option<usize>,
    /// Add one column per run and agent.
    #[arg(long)]
    per_run: bool,
    #[arg(long)]
    gamma: Option<f64>,
    /// Initial exploration rate.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Per-step multiplicative exploration decay.
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    mentor_epsilon: Option<f64>,
    /// Prior pseudo-count per neighbouring cell.
    #[arg(long)]
    prior: Option<f64>,
    /// Skip the control agent.
    #[arg(long)]
    observer_only: bool,
    /// Also replay run 0's observer and dump its tables into this directory.
    #[arg(long)]
    dump: Option<PathBuf>,
}

impl RunArgs {
    /// The flags actually given, as config `key=value` pairs.
    fn pairs(&self) -> Vec<(String, String)> {
        fn text<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(T::to_string)
        }
        let flag = |on: bool| on.then(|| "true".to_string());
        let entries = [
            ("scenario", text(&self.scenario)),
            ("runs", text(&self.runs)),
            ("steps", text(&self.steps)),
            ("seed", text(&self.seed)),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
            ("k", text(&self.k)),
            ("n", text(&self.n)),
            ("c", text(&self.c)),
            ("alpha", text(&self.alpha)),
            ("backups", text(&self.backups)),
            ("no-imitation", flag(self.no_imitation)),
            ("no-feasibility", flag(self.no_feasibility)),
            ("no-repair", flag(self.no_repair)),
            ("mentors", text(&self.mentors)),
            ("window", text(&self.window)),
            ("every", text(&self.every)),
            ("per-run", flag(self.per_run)),
            ("gamma", text(&self.gamma)),
            ("epsilon", text(&self.epsilon)),
            ("decay", text(&self.decay)),
            ("mentor-epsilon", text(&self.mentor_epsilon)),
            ("prior", text(&self.prior)),
            ("observer-only", flag(self.observer_only)),
        ];
        entries
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
            .collect()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Actions {
    News,
    Skew,
}

impl Actions {
    fn set(self) -> ActionSet {
        match self {
            Actions::News => ActionSet::news(),
            Actions::Skew => ActionSet::skew(),
        }
    }
}

#[derive(Args)]
struct WorldArgs {
    /// Action noise: probability of a uniformly random other action.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
}

#[derive(Args)]
struct FractureArgs {
    #[arg(long, conflicts_with = "maps", required_unless_present = "maps")]
    scenario: Option<String>,
    /// Observer map, then mentor map.
    #[arg(long, num_args = 2, value_names = ["OBSERVER", "MENTOR"])]
    maps: Option<Vec<PathBuf>>,
    /// Observer action set for `--maps`.
    #[arg(long, value_enum, default_value = "news")]
    observer_actions: Actions,
    /// Mentor action set for `--maps`.
    #[arg(long, value_enum, default_value = "news")]
    mentor_actions: Actions,
    #[command(flatten)]
    world: WorldArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long, value_enum, default_value = "news")]
    actions: Actions,
    #[command(flatten)]
    world: WorldArgs,
}

fn load_world(path: &PathBuf, actions: Actions, noise: f64) -> Result<GridWorld> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    let map = GridMap::parse(&text, &CellRewards::default())?;
    Ok(GridWorld::new(map, actions.set(), NoiseModel::new(noise)?))
}

fn run(args: RunArgs) -> Result<()> {
    let mut pairs = match &args.config {
        Some(path) => read_config_file(path)?,
        None => Vec::new(),
    };
    pairs.extend(args.pairs());
    if let Ok(seed) = std::env::var("IMIT_SEED") {
        pairs.push(("seed".into(), seed));
    }
    let name = pairs
        .iter()
        .rev()
        .find(|(k, _)| k == "scenario")
        .map(|(_, v)| v.clone())
        .ok_or_else(|| Error::Usage("a scenario is required (--scenario or config file)".into()))?;
    let mut config = ExperimentConfig::for_scenario(&name)?;
    apply_all(&mut config, &pairs)?;
    let result = run_experiment(&config)?;
    match &config.out {
        Some(path) => {
            let summary = result.write(path)?;
            eprintln!("wrote {} and {}", path.display(), summary.display());
            print!("{}", result.summary_csv());
        }
        None => {
            print!("{}", result.series_csv());
            eprint!("{}", result.summary_csv());
        }
    }
    if let Some(dir) = &args.dump {
        for path in dump_run(&config, 0, dir)? {
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn fracture_cmd(args: FractureArgs) -> Result<()> {
    let (observer, mentors, gamma) = match (&args.scenario, &args.maps) {
        (Some(name), _) => {
            let sc = scenario(name)?;
            let gamma = sc.gamma();
            (sc.observer, sc.mentors.into_iter().map(|m| m.world).collect(), gamma)
        }
        (None, Some(maps)) => {
            let o = load_world(&maps[0], args.observer_actions, args.world.noise)?;
            let m = load_world(&maps[1], args.mentor_actions, args.world.noise)?;
            (o, vec![m], args.world.gamma)
        }
        (None, None) => return Err(Error::Usage("give --scenario or --maps".into())),
    };
    for (i, m) in mentors.iter().enumerate() {
        let f = fracture(&observer, m, gamma)?;
        println!("mentor {i}: phi {:.4} disputed {}", f.phi, f.disputed.len());
    }
    Ok(())
}

fn solve(args: SolveArgs) -> Result<()> {
    let world = load_world(&args.map, args.actions, args.world.noise)?;
    let (_, values, policy) = solve_world(&world, args.world.gamma)?;
    let map = &world.map;
    let mut out = String::new();
    let _ = writeln!(out, "values");
    for y in 0..map.height() {
        let row: Vec<String> = (0..map.width())
            .map(|x| format!("{:8.4}", values.get(map.index(x, y))))
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "policy");
    for y in 0..map.height() {
        let row: Vec<String> = (0..map.width())
            .map(|x| {
                let s = map.index(x, y);
                let cell = map.cell(s);
                if cell.resets() || cell.symbol() == '#' {
                    format!("{:>2}", cell.symbol())
                } else {
                    format!("{:>2}", world.actions.labels[policy.action(s)])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    let _ = writeln!(out, "start value {:.6}", values.get(map.start()));
    let _ = writeln!(out, "goals per 1000 steps {:.4}", policy_goal_rate(&world, &policy, 1000.0));
    print!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Fracture(args) => fracture_cmd(args),
        Command::Solve(args) => solve(args),
        Command::Scenarios => {
            for name in scenario_names() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
