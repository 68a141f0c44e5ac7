//! Command-line front end: reads a run configuration, dispatches one task and writes
//! CSV artifacts plus a manifest into the output directory.

mod config;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use output::{config_hash, Manifest, OutDir};

#[derive(Debug, Parser)]
#[command(name = "parabus", version, about = "Parametric multimode bus modelling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for all randomness (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// DC bus mode frequencies over a flux sweep.
    Spectrum,
    /// Driven resonance and sideband couplings for one qubit.
    Sidebands,
    /// 2D grid of parametric couplings, with pair couplings for two qubits.
    Coupling,
    /// Time-domain exchange chevron from the brute-force model.
    Chevron,
    /// Multimode ZZ and coupling versus static flux.
    #[command(name = "zz-scan")]
    ZzScan,
    /// Process tomography of an fSim channel.
    Qpt,
    /// Maximin qubit frequency allocation.
    Allocate,
    /// Dry-run constraint checks.
    Validate,
}

impl Command {
    fn task(self) -> Option<&'static str> {
        match self {
            Command::Spectrum => Some("spectrum"),
            Command::Sidebands => Some("sidebands"),
            Command::Coupling => Some("coupling"),
            Command::Chevron => Some("chevron"),
            Command::ZzScan => Some("zz-scan"),
            Command::Qpt => Some("qpt"),
            Command::Allocate => Some("allocate"),
            Command::Validate => None,
        }
    }
}

const EXIT_CONFIG: u8 = 2;
const EXIT_TASK: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let mut out = match OutDir::create(&cli.out) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot create output directory {}: {e}", cli.out.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut manifest = Manifest {
        tool: "parabus",
        version: env!("CARGO_PKG_VERSION"),
        task: cli.command.task().unwrap_or("validate").to_string(),
        config_path: cli.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        config_sha256: String::new(),
        seed: cli.seed.unwrap_or(0),
        threads: cli.threads,
        status: "ok".into(),
        error: None,
        outputs: Vec::new(),
        notes: Vec::new(),
    };
    let code = execute(&cli, &mut out, &mut manifest);
    manifest.outputs = out.written().to_vec();
    if let Err(e) = out.write("manifest.json", &manifest.to_json()) {
        eprintln!("error: cannot write manifest: {e}");
    }
    code
}

fn execute(cli: &Cli, out: &mut OutDir, manifest: &mut Manifest) -> ExitCode {
    let config_error = |manifest: &mut Manifest, msg: String| {
        eprintln!("config error: {msg}");
        manifest.status = "config_error".into();
        manifest.error = Some(msg);
        ExitCode::from(EXIT_CONFIG)
    };
    let Some(path) = &cli.config else {
        return config_error(manifest, "--config PATH is required".into());
    };
    let (cfg, text) = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => return config_error(manifest, e.to_string()),
    };
    manifest.config_sha256 = config_hash(&text);
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    manifest.seed = seed;

    if matches!(cli.command, Command::Validate) {
        let violations = match cfg.single_task(None) {
            Ok(task) => {
                manifest.task = format!("validate:{task}");
                tasks::validate(&cfg, task)
            }
            Err(e) => vec![e.to_string()],
        };
        let mut report = String::new();
        report.push_str(&format!("violations = {}\n", violations.len()));
        for v in &violations {
            report.push_str(&format!("- {v}\n"));
        }
        print!("{report}");
        if let Err(e) = out.write("validate_report.txt", report.as_bytes()) {
            eprintln!("error: {e}");
            manifest.status = "task_error".into();
            manifest.error = Some(e.to_string());
            return ExitCode::from(EXIT_TASK);
        }
        manifest.notes = violations;
        return ExitCode::SUCCESS;
    }

    let task = match cfg.single_task(cli.command.task()) {
        Ok(t) => t,
        Err(e) => return config_error(manifest, e.to_string()),
    };
    if let Err(e) = cfg.validate_static(task) {
        return config_error(manifest, e.to_string());
    }
    match tasks::run(task, &cfg, seed, out) {
        Ok(notes) => {
            manifest.notes = notes;
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("task error: {e}");
            manifest.status = "task_error".into();
            manifest.error = Some(e.to_string());
            ExitCode::from(EXIT_TASK)
        }
    }
}
