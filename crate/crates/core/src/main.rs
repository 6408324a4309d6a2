use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ris_sim::analytics;
use ris_sim::config::SystemConfig;
use ris_sim::experiments::{self, FigureOptions, Mode, SweepSpec};
use ris_sim::montecarlo::{self, McSettings};
use ris_sim::scenario::Scenario;

/// RIS-aided MISO downlink with EMI and channel aging: closed-form SE and Monte-Carlo validation.
#[derive(Parser, Debug)]
#[command(name = "ris-sim", version)]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Write the RIS correlation matrix as CSV.
    #[arg(long, value_name = "PATH", global = true)]
    dump_correlation: Option<PathBuf>,
    /// Write per-UE estimation statistics as CSV.
    #[arg(long, value_name = "PATH", global = true)]
    dump_stats: Option<PathBuf>,
    /// Print per-(k, n) SINR terms as CSV on stdout.
    #[arg(long, global = true)]
    breakdown: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare closed-form SINR terms with Monte-Carlo estimates.
    Validate {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
        /// Downlink symbols to compare, comma separated (default: first, middle, last).
        #[arg(long, value_delimiter = ',')]
        symbols: Option<Vec<usize>>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a parameter sweep described by a spec file.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        /// Output CSV; overrides the sweep file's `output` (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SE against M and kappa, with and without EMI and aging.
    Fig1(FigArgs),
    /// Average per-symbol SE against time for two Doppler values and EMI powers.
    Fig2(FigArgs),
    /// SE against normalized Doppler for two element areas and block lengths.
    Fig3(FigArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum FigMode {
    Analytic,
    Mc,
    Both,
}

#[derive(Args, Debug)]
struct FigArgs {
    #[arg(long, value_enum, default_value_t = FigMode::Analytic)]
    mode: FigMode,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte-Carlo trials per point.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Output directory (default: current directory).
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn load_config(cli: &Cli) -> anyhow::Result<SystemConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SystemConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => SystemConfig::default(),
    };
    for pair in &cli.set {
        cfg.set_pair(pair).with_context(|| format!("--set {pair}"))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn writer(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = load_config(&cli)?;
    let sc = Scenario::new(cfg.clone())?;
    let hash = cfg.hash();
    if let Some(p) = &cli.dump_correlation {
        match &sc.correlation {
            Some(c) => c.write_csv(p)?,
            None => bail!("no surface configured, nothing to dump"),
        }
    }
    if let Some(p) = &cli.dump_stats {
        sc.write_stats_csv(writer(Some(p))?)?;
    }
    if cli.breakdown {
        let rows = analytics::breakdown_all(&sc)?;
        analytics::write_breakdown_csv(&rows, cfg.tau_c, &hash, writer(None)?)?;
    }
    match cli.command {
        None => {
            if !cli.breakdown {
                let se = analytics::ue_spectral_efficiency(&sc)?;
                let mut out = writer(None)?;
                writeln!(out, "config_hash {hash}")?;
                for (k, r) in se.iter().enumerate() {
                    writeln!(out, "ue {k} se {r:.6}")?;
                }
                writeln!(out, "sum_se {:.6}", se.iter().sum::<f64>())?;
            }
            Ok(true)
        }
        Some(Command::Validate {
            trials,
            seed,
            tolerance,
            symbols,
            workers,
            out,
        }) => {
            let mut settings = McSettings::new(&sc, trials, seed);
            if let Some(s) = symbols {
                settings.symbols = s;
            }
            settings.workers = workers;
            let report = montecarlo::validate(&sc, &settings, tolerance)?;
            report.write_csv(writer(out.as_deref())?)?;
            for t in ["I0", "I1", "I2", "I3"] {
                eprintln!("{t}: worst relative gap {:.4}", report.worst_gap(t));
            }
            let ok = report.passed();
            eprintln!("{} at tolerance {tolerance}", if ok { "PASS" } else { "FAIL" });
            Ok(ok)
        }
        Some(Command::Sweep { spec, out }) => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let mut s = SweepSpec::parse(&text, spec.parent())?;
            // command-line config settings apply on top of the sweep file's scenario
            for pair in &cli.set {
                s.scenario.set_pair(pair)?;
            }
            let rows = experiments::sweep(&s)?;
            let path = out.or(s.output_path.clone());
            experiments::write_rows_csv(&rows, writer(path.as_deref())?)?;
            Ok(true)
        }
        Some(Command::Fig1(a)) => figure(1, cfg, &hash, a),
        Some(Command::Fig2(a)) => figure(2, cfg, &hash, a),
        Some(Command::Fig3(a)) => figure(3, cfg, &hash, a),
    }
}

fn figure(fig: u8, base: SystemConfig, hash: &str, a: FigArgs) -> anyhow::Result<bool> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let modes: &[Mode] = match a.mode {
        FigMode::Analytic => &[Mode::Analytic],
        FigMode::Mc => &[Mode::MonteCarlo],
        FigMode::Both => &[Mode::Analytic, Mode::MonteCarlo],
    };
    let mut all_rows = Vec::new();
    let mut ok = true;
    let mut report_out = writer(Some(&a.out.join(format!("fig{fig}_report.csv"))))?;
    let mut first = true;
    for &mode in modes {
        let opt = FigureOptions {
            base: base.clone(),
            mode,
            trials: a.trials,
            seed: a.seed,
        };
        let (rows, report) = experiments::run_figure(fig, &opt)?;
        for c in &report.checks {
            eprintln!("fig{fig} {} {}: {} ({})", report.mode, c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail);
        }
        for an in &report.anchors {
            eprintln!(
                "fig{fig} {} {}: measured {:.2} reference {:.2}",
                report.mode, an.name, an.measured, an.reference
            );
        }
        ok &= report.passed();
        let mut buf = Vec::new();
        report.write_csv(hash, &mut buf)?;
        let text = String::from_utf8(buf)?;
        // keep a single header across modes
        let body = if first { text.as_str() } else { text.split_once('\n').map_or("", |x| x.1) };
        report_out.write_all(body.as_bytes())?;
        first = false;
        all_rows.extend(rows);
    }
    report_out.flush()?;
    experiments::write_rows_csv(&all_rows, writer(Some(&a.out.join(format!("fig{fig}.csv"))))?)?;
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
