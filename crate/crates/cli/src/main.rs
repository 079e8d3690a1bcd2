use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use offtrt_core::harness::*;
use offtrt_core::trialgen::{generate_trial, write_datasets_csv, TrialError, RATE_PAIRS};

/// Simulation study of multiple imputation for off-treatment outcomes.
#[derive(Parser)]
#[command(name = "offtrt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated trial datasets to CSV.
    Simulate(GridArgs),
    /// Run the simulation grid and write metrics.csv plus heatmaps.
    Run(GridArgs),
    /// Re-render heatmaps from an existing metrics.csv.
    Report {
        /// Metrics file written by `run`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "offtrt-out")]
        out: PathBuf,
    },
    /// Closed-form bias and variance-inflation calculators.
    Theory(TheoryArgs),
}

#[derive(Args)]
struct GridArgs {
    /// Preset scenario subset and replicate count.
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// Scenario ids: comma-separated ids or ranges (e.g. `1,18,30-36`), or `all`.
    #[arg(long)]
    scenarios: Option<String>,
    /// Replicates per scenario.
    #[arg(long)]
    sims: Option<usize>,
    /// Comma-separated models (FULL, MMRM, CICS, OICS, PICS, OIOS, PIOS, PIPS, OICS_R, PICS_R).
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    imputations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = "offtrt-out")]
    out: PathBuf,
    /// JSON file with DGM and custom-scenario overrides.
    #[arg(long)]
    overrides: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Control-arm discontinuation rate.
    #[arg(long, requires = "rate_active")]
    rate_control: Option<f64>,
    /// Active-arm discontinuation rate.
    #[arg(long, requires = "rate_control")]
    rate_active: Option<f64>,
    /// Fraction of discontinuers who withdraw.
    #[arg(long, default_value_t = 0.5)]
    withdrawal: f64,
    /// Bias of an arm mean: completers, observed discontinuers and their
    /// mean outcomes, as `n1,n2,mu1,mu2`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bias: Option<Vec<f64>>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Io(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. } | HarnessError::Csv { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<TrialError> for CliError {
    fn from(e: TrialError) -> Self {
        match e {
            TrialError::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn parse_scenarios(text: &str) -> Result<Vec<u32>, CliError> {
    if text.eq_ignore_ascii_case("all") {
        return Ok((1..=offtrt_core::trialgen::GRID_SIZE).collect());
    }
    let bad = |part: &str| CliError::Config(format!("bad scenario selector {part:?}"));
    let mut ids = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.parse().map_err(|_| bad(part))?, b.parse().map_err(|_| bad(part))?);
                if a > b {
                    return Err(bad(part));
                }
                ids.extend(a..=b);
            }
            None => ids.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    Ok(ids)
}

fn build_config(args: &GridArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::profile(args.profile);
    if let Some(path) = &args.overrides {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        cfg.overrides = Overrides::from_json(&text)?;
    }
    if let Some(s) = &args.scenarios {
        cfg.scenarios = parse_scenarios(s)?;
    }
    if let Some(n) = args.sims {
        cfg.n_sims = n;
    }
    if let Some(m) = &args.models {
        cfg.models = m
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<_, HarnessError>>()?;
    }
    if let Some(m) = args.imputations {
        cfg.imputations = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    cfg.out_dir = Some(args.out.clone());
    cfg.validate()?;
    cfg.resolve_scenarios()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn simulate(args: &GridArgs) -> Result<(), CliError> {
    let cfg = build_config(args)?;
    create_dir(&args.out)?;
    let path = args.out.join("datasets.csv");
    let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut datasets = Vec::new();
    for (id, scenario) in cfg.resolve_scenarios()? {
        for r in 0..cfg.n_sims as u64 {
            datasets.push(generate_trial(id, &scenario, r, cfg.seed)?);
        }
    }
    write_datasets_csv(&datasets, std::io::BufWriter::new(file))?;
    println!("wrote {} datasets to {}", datasets.len(), path.display());
    Ok(())
}

fn run(args: &GridArgs) -> Result<(), CliError> {
    let cfg = build_config(args)?;
    let rows = run_grid(&cfg)?;
    for path in report(&rows, &args.out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn theory(args: &TheoryArgs) -> Result<(), CliError> {
    if let Some(b) = &args.bias {
        if b.len() != 4 {
            return Err(CliError::Config("bias takes four values: n1,n2,mu1,mu2".into()));
        }
        if b[0] <= 0.0 || b[1] <= 0.0 {
            return Err(CliError::Config("bias needs n1, n2 > 0".into()));
        }
        println!("bias {:.3}", theory_bias(b[0], b[1], b[2], b[3]));
        return Ok(());
    }
    let pairs = match (args.rate_control, args.rate_active) {
        (Some(c), Some(a)) => vec![(c, a)],
        _ => RATE_PAIRS.to_vec(),
    };
    println!("control,active,withdrawal,control_inflation,active_inflation,effect_inflation");
    for (c, a) in pairs {
        if !(0.0..=1.0).contains(&c) || !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&args.withdrawal) {
            return Err(CliError::Config("rates must lie in [0, 1]".into()));
        }
        let w = args.withdrawal;
        println!(
            "{c},{a},{w},{:.4},{:.4},{:.4}",
            theory_rate_inflation(c, w)?,
            theory_rate_inflation(a, w)?,
            theory_effect_inflation(c, a, w)?
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Report { input, out } => read_metrics_csv(input)
            .and_then(|rows| report(&rows, out))
            .map(|paths| paths.iter().for_each(|p| println!("wrote {}", p.display())))
            .map_err(CliError::from),
        Command::Theory(a) => theory(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
