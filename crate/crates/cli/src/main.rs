use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smallcap_cli::config::{ExperimentConfig, Kind, Loaded, Overrides, RegressConfig, SCHEMA_VERSION};
use smallcap_cli::error::CliError;
use smallcap_cli::{run_with_workers, workers_from_env};

#[derive(Parser)]
#[command(name = "smallcap", version, about = "Small-cap decoupling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate small or canonical caps.
    Caps(Common),
    /// Synthesize test signals.
    Synth(Common),
    /// L^p norms of synthesized signals.
    Norm(Common),
    /// Decoupling ratios over scales, seeds and exponents.
    Decouple(Common),
    /// Multilinear ratios over transverse regions.
    Multilinear(Common),
    /// Wave packet decomposition and reconstruction.
    Packets(Common),
    /// Tube incidence and high-low audits.
    Incidence(Common),
    /// Log-log slope of two columns of a results CSV.
    Regress(RegressArgs),
    /// Exponent bookkeeping audit.
    AuditExponents(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Scales, comma separated.
    #[arg(long = "R", value_delimiter = ',')]
    scales: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long, conflicts_with_all = ["csv", "x", "y"])]
    config: Option<PathBuf>,
    #[arg(long, requires_all = ["x", "y"])]
    csv: Option<PathBuf>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(common: Common, kind: Kind) -> Result<Loaded, CliError> {
    let mut loaded = Loaded::from_path(&common.config)?;
    if loaded.config.kind != kind {
        return Err(CliError::Config {
            path: common.config.display().to_string(),
            line: None,
            message: format!("config kind {} does not match subcommand {}", loaded.config.kind.as_str(), kind.as_str()),
        });
    }
    loaded.apply(Overrides { scales: common.scales, p: common.p, seeds: common.seed, out: common.out });
    Ok(loaded)
}

fn load_regress(a: RegressArgs) -> Result<Loaded, CliError> {
    let mut loaded = match (a.config, a.csv, a.x, a.y) {
        (Some(path), ..) => Loaded::from_path(&path)?,
        (None, Some(csv), Some(x), Some(y)) => Loaded::from_config(ExperimentConfig {
            schema: SCHEMA_VERSION,
            kind: Kind::Regress,
            n: None,
            alpha: None,
            scales: Vec::new(),
            p: Vec::new(),
            family: None,
            seeds: vec![0],
            quadrature: Default::default(),
            cap_kind: None,
            per_cap: None,
            packets: None,
            incidence: None,
            multilinear: None,
            regress: Some(RegressConfig { csv, x, y }),
            out: None,
        }),
        _ => {
            return Err(CliError::Config {
                path: "<command line>".into(),
                line: None,
                message: "regress needs --config or --csv with --x and --y".into(),
            })
        }
    };
    loaded.apply(Overrides { out: a.out, ..Default::default() });
    Ok(loaded)
}

fn main_inner() -> Result<bool, CliError> {
    let cli = Cli::parse();
    let (loaded, kind) = match cli.command {
        Command::Caps(c) => (load(c, Kind::Caps)?, Kind::Caps),
        Command::Synth(c) => (load(c, Kind::Synth)?, Kind::Synth),
        Command::Norm(c) => (load(c, Kind::Norm)?, Kind::Norm),
        Command::Decouple(c) => (load(c, Kind::Decouple)?, Kind::Decouple),
        Command::Multilinear(c) => (load(c, Kind::Multilinear)?, Kind::Multilinear),
        Command::Packets(c) => (load(c, Kind::Packets)?, Kind::Packets),
        Command::Incidence(c) => (load(c, Kind::Incidence)?, Kind::Incidence),
        Command::AuditExponents(c) => (load(c, Kind::AuditExponents)?, Kind::AuditExponents),
        Command::Regress(a) => (load_regress(a)?, Kind::Regress),
    };
    let workers = workers_from_env()?;
    let output = run_with_workers(&loaded, workers)?;
    let dir = loaded.config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    output.write(&dir)?;
    let s = &output.summary;
    if kind == Kind::Regress {
        if let Some(f) = s.fits.first() {
            println!("slope {} intercept {} max_residual {}", f.slope, f.intercept, f.max_residual);
        }
    }
    println!("{} rows, {} errors, csv {}", s.rows, s.errors, s.csv_hash);
    for f in s.fits.iter().filter(|f| !f.pass) {
        eprintln!("fit {} failed: slope {}", f.group, f.slope);
    }
    for c in s.checks.iter().filter(|c| !c.pass) {
        eprintln!("check {} failed: {} not {}", c.name, c.value, c.limit);
    }
    println!("wrote {}", dir.display());
    Ok(s.pass)
}

fn main() -> ExitCode {
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
