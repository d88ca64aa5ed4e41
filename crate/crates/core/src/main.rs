use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use rayon::prelude::*;

use asymstream::f2::Policy;
use asymstream::stream::{
    run_experiment, write_records, write_stream, CheckpointSchedule, Generator, GeneratorSpec, RunConfig, Source, Task,
};
use asymstream::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "asymstream", version, about = "Run streaming estimators against exact oracles and record trajectories")]
#[command(group(ArgGroup::new("source").required(true).args(["input", "gen"])))]
struct Cli {
    /// f2, cluster, regress, matmul, oracle or gen
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    epsilon0: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 64)]
    n0: u64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Columns of the second matrix for matmul
    #[arg(long = "dprime", default_value_t = 2)]
    d_prime: usize,
    /// F2 policy: parallel or two_sketch
    #[arg(long, default_value = "parallel")]
    policy: String,
    /// Task variant (objective, schedule, matmul precision, or oracle shape)
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// pow2 or pow8
    #[arg(long, default_value = "pow2")]
    checkpoints: String,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generator, e.g. uniform-int:16 or gaussian-mixture:3:2:10
    #[arg(long)]
    gen: Option<String>,
    /// Maximum stream length
    #[arg(long)]
    n: Option<u64>,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "on")]
    oracle: Switch,
    /// Record wall time per checkpoint (makes output nondeterministic)
    #[arg(long, value_enum, default_value = "off")]
    timing: Switch,
    #[arg(long, default_value_t = 1 << 20)]
    universe: u64,
    /// Solver restarts for clustering
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Independent trials with seeds seed..seed+trials, run in parallel;
    /// trial t writes to OUT.t
    #[arg(long, default_value_t = 1)]
    trials: u64,
}

fn config(cli: &Cli) -> asymstream::Result<RunConfig> {
    let source = match (&cli.input, &cli.gen) {
        (Some(path), None) => Source::File(path.clone()),
        (None, Some(spec)) => Source::Generator(spec.parse::<GeneratorSpec>()?),
        _ => return Err(Error::Config("exactly one of --input and --gen".into())),
    };
    let mut cfg = RunConfig::new(cli.task.parse::<Task>()?, source);
    cfg.seed = cli.seed;
    cfg.epsilon0 = cli.epsilon0;
    cfg.delta = cli.delta;
    cfg.n0 = cli.n0;
    cfg.k = cli.k;
    cfg.d = cli.d;
    cfg.d_prime = cli.d_prime;
    cfg.policy = cli.policy.parse::<Policy>()?;
    cfg.mode = cli.mode.clone();
    cfg.alpha = cli.alpha;
    cfg.checkpoints = cli.checkpoints.parse::<CheckpointSchedule>()?;
    cfg.n = cli.n;
    cfg.oracle = matches!(cli.oracle, Switch::On);
    cfg.timing = matches!(cli.timing, Switch::On);
    cfg.universe = cli.universe;
    cfg.restarts = cli.restarts;
    if cfg.task != Task::Gen {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn open_out(path: Option<&Path>) -> asymstream::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_one(cfg: &RunConfig, out: Option<&Path>) -> asymstream::Result<()> {
    let mut w = open_out(out)?;
    if cfg.task == Task::Gen {
        let Source::Generator(spec) = &cfg.source else {
            return Err(Error::Config("the gen task needs --gen".into()));
        };
        let n = cfg.n.ok_or_else(|| Error::Config("the gen task needs --n".into()))?;
        write_stream(&mut w, Generator::new(spec.clone(), cfg.seed)?.take(n as usize))?;
    } else {
        write_records(&mut w, &run_experiment(cfg)?)?;
    }
    w.flush()?;
    Ok(())
}

fn trial_path(out: &Path, t: u64) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(format!(".{t}"));
    PathBuf::from(s)
}

fn run(cli: &Cli) -> asymstream::Result<()> {
    let cfg = config(cli)?;
    if cli.trials <= 1 {
        return run_one(&cfg, cli.out.as_deref());
    }
    let out = cli.out.as_deref().ok_or_else(|| Error::Config("--trials needs --out".into()))?;
    (0..cli.trials).into_par_iter().try_for_each(|t| {
        let cfg = RunConfig { seed: cfg.seed.wrapping_add(t), ..cfg.clone() };
        run_one(&cfg, Some(&trial_path(out, t)))
    })
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Parse { .. } | Error::Io(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("asymstream: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
