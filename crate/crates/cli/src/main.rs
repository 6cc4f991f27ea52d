use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use blind_ia::harness::{self, write_report, write_sweep, MAX_DEGENERATE_RATE};
use blind_ia::{
    ExperimentConfig, ExperimentReport, FadingMode, Field, HarnessError, OutputFormat,
    RankTolerance, SchemeId,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERACY: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "blind-ia", version, about = "Blind interference alignment Monte Carlo harness")]
struct Cli {
    /// Worker threads for trial evaluation (defaults to all cores)
    #[arg(long, global = true, env = "BLIND_IA_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one Monte Carlo campaign and report rates and DoF slopes
    Run(ExperimentArgs),
    /// Repeat a campaign over perturbation levels
    Sweep {
        #[command(flatten)]
        args: ExperimentArgs,
        /// Perturbation levels, descending
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0")]
        epsilons: Vec<f64>,
    },
    /// Structural checks (alignment, zero forcing, CSIT contract, support)
    Verify(ExperimentArgs),
    /// Print the available schemes
    ListSchemes,
}

#[derive(Args, Default)]
struct ExperimentArgs {
    /// TOML file with experiment fields; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scheme: Option<SchemeId>,
    #[arg(long)]
    k: Option<usize>,
    /// SNR points in dB
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// real|complex
    #[arg(long)]
    field: Option<Field>,
    /// staggered|synchronized
    #[arg(long)]
    fading: Option<FadingMode>,
    /// Coherence overrides: "tx,rx,length,offset" entries joined by ';'
    #[arg(long)]
    coherence: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv|json
    #[arg(long)]
    format: Option<OutputFormat>,
    /// Relative rank tolerance
    #[arg(long)]
    tol: Option<f64>,
}

/// Error carrying the process exit status.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME };
        Failure {
            code,
            error: e.into(),
        }
    }
}

fn config_error(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        error,
    }
}

fn runtime_error(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

impl ExperimentArgs {
    fn load(&self, default_trials: usize) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig {
                trials: default_trials,
                ..ExperimentConfig::default()
            },
        };
        if let Some(scheme) = self.scheme {
            config.scheme = scheme;
            if scheme == SchemeId::KUserIc && config.k.is_none() {
                config.k = Some(3);
            }
        }
        if self.k.is_some() {
            config.k = self.k;
        }
        if let Some(snr) = &self.snr {
            config.snr_db = snr.clone();
        }
        if let Some(trials) = self.trials {
            config.trials = trials;
        }
        if let Some(epsilon) = self.epsilon {
            config.epsilon = epsilon;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(field) = self.field {
            config.field = field;
        }
        if let Some(fading) = self.fading {
            config.fading = fading;
        }
        if self.coherence.is_some() {
            config.coherence = self.coherence.clone();
        }
        if self.out.is_some() {
            config.out = self.out.clone();
        }
        if let Some(format) = self.format {
            config.format = format;
        }
        if let Some(tol) = self.tol {
            config.tol = RankTolerance::new(tol).map_err(|e| anyhow!("{e}"))?;
        }
        config.validate()?;
        Ok(config)
    }
}

fn emit(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<(), HarnessError>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(runtime_error)?;
            let mut w = io::BufWriter::new(file);
            write(&mut w)?;
            w.flush().map_err(|e| runtime_error(e.into()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
        }
    }
    Ok(())
}

fn summarize(report: &ExperimentReport) {
    let c = &report.config;
    eprintln!(
        "{} ({} trials, eps={}, slots {:?}): claimed total {}",
        c.scheme, c.trials, c.epsilon, report.supersymbol_slots, report.claimed_total
    );
    match &report.dof {
        Some(dof) => eprintln!(
            "  dof slope total {:.3}, per message {:?} (residual {:.3e})",
            dof.total,
            dof.per_message.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
            dof.residual
        ),
        None => eprintln!("  no dof estimate: fewer than two SNR points at or above 30 dB"),
    }
    eprintln!(
        "  degenerate rate {:.2e}, wall clock {:.2}s",
        report.alignment.degenerate_rate, report.wall_clock_seconds
    );
}

fn degeneracy_breach(report: &ExperimentReport) -> Option<Failure> {
    (report.config.epsilon == 0.0 && report.alignment.degenerate_rate > MAX_DEGENERATE_RATE).then(|| {
        Failure {
            code: EXIT_DEGENERACY,
            error: anyhow!(
                "degenerate-trial rate {:.2e} exceeds {:.0e}",
                report.alignment.degenerate_rate,
                MAX_DEGENERATE_RATE
            ),
        }
    })
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| runtime_error(e.into()))?;
    }

    match cli.command {
        Command::ListSchemes => {
            for id in SchemeId::ALL {
                let k = (id == SchemeId::KUserIc).then_some(3);
                let d = blind_ia::schemes::describe(id, k).map_err(|e| runtime_error(e.into()))?;
                let suffix = if k.is_some() { " (K=3)" } else { "" };
                println!(
                    "{:<18} L={} claimed total {}{suffix}  {}",
                    id.as_str(),
                    d.supersymbol_len,
                    d.claimed_total(),
                    id.summary()
                );
            }
            Ok(())
        }
        Command::Run(args) => {
            let config = args.load(ExperimentConfig::default().trials).map_err(config_error)?;
            let report = harness::run(&config)?;
            summarize(&report);
            emit(config.out.as_deref(), |w| write_report(&report, config.format, w))?;
            match degeneracy_breach(&report) {
                Some(f) => Err(f),
                None => Ok(()),
            }
        }
        Command::Sweep { args, epsilons } => {
            let config = args.load(ExperimentConfig::default().trials).map_err(config_error)?;
            let reports = harness::sweep_epsilon(&config, &epsilons)?;
            for r in &reports {
                summarize(r);
            }
            emit(config.out.as_deref(), |w| write_sweep(&reports, config.format, w))?;
            match reports.iter().find_map(degeneracy_breach) {
                Some(f) => Err(f),
                None => Ok(()),
            }
        }
        Command::Verify(args) => {
            let config = args.load(1000).map_err(config_error)?;
            let summary = harness::verify(&config)?;
            for c in &summary.checks {
                println!(
                    "{} {:<20} {}/{} {}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.checked - c.failures,
                    c.checked,
                    c.detail.as_deref().unwrap_or("")
                );
            }
            if summary.passed() {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_ACCEPTANCE,
                    error: anyhow!("{} verification failed", summary.scheme),
                })
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
