use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blab_core::experiments::run_scenario;
use blab_core::policy::builtin_policy_kinds;
use blab_core::report::write_outputs;
use blab_core::scenario::{OutputFormat, Scenario, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "blab", version, about = "Competing bandit platforms: simulations and equilibrium checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
        /// Worker threads (defaults to all cores).
        #[arg(long, env = "BLAB_THREADS")]
        threads: Option<usize>,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
    /// List the built-in policy kinds.
    Policies,
}

#[derive(Args)]
struct Overrides {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte-Carlo replications.
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
            Format::Both => OutputFormat::Both,
        }
    }
}

fn load(path: &Path, overrides: Option<&Overrides>) -> blab_core::Result<Scenario> {
    let mut cfg = ScenarioConfig::from_path(path)?;
    if let Some(o) = overrides {
        if let Some(seed) = o.seed {
            cfg.seeds.master = seed;
        }
        if let Some(reps) = o.reps {
            cfg.seeds.replications = reps;
        }
        if let Some(dir) = &o.out_dir {
            cfg.output.dir = dir.clone();
        }
        if let Some(f) = o.format {
            cfg.output.format = f.into();
        }
    }
    Scenario::resolve(cfg)
}

fn run(config: &Path, overrides: &Overrides, threads: Option<usize>) -> blab_core::Result<u8> {
    let scenario = load(config, Some(overrides))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(blab_core::Error::InvalidConfig("--threads must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| blab_core::Error::InvalidConfig(format!("thread pool: {e}")))?;
    let resolved = scenario.config.to_canonical_json();
    let record = pool.install(|| run_scenario(&scenario))?;
    let out = &scenario.config.output;
    let written = write_outputs(&record, &resolved, &out.dir, out.format)?;
    for note in &record.notes {
        eprintln!("note: {note}");
    }
    eprintln!(
        "{}: {} rows, status {:?}, {:.1} s on {} threads",
        record.experiment,
        record.rows.len(),
        record.status,
        record.wall_clock_secs,
        pool.current_num_threads()
    );
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(record.status.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            overrides,
            threads,
        } => run(&config, &overrides, threads),
        Command::Validate { config } => load(&config, None).map(|sc| {
            println!(
                "ok: {} experiment, {} policies, N = {}",
                sc.experiment().kind.name(),
                sc.policies.len(),
                sc.problem.n_users
            );
            0
        }),
        Command::Policies => {
            for k in builtin_policy_kinds() {
                println!("{:<16} kind = \"{}\"", k.name, k.config_kind);
                if !k.parameters.is_empty() {
                    println!("    parameters: {}", k.parameters.join(", "));
                }
                println!("    {}", k.formula);
            }
            Ok(0)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_inconclusive() { 2 } else { 1 })
        }
    }
}
