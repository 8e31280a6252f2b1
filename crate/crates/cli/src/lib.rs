//! Command-line front end. `run_cli` is the whole program; `main` only maps
//! its return value to the process exit code.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use slowlight::config::{parse_config, preset_text, set_value, ScenarioConfig};
use slowlight::oracle::Oracle;
use slowlight::output::{write_field_csv, write_metrics, write_spin_csv};
use slowlight::report::{compare_with_oracle, oracle_for, oracle_history, protocol_metrics, ProtocolMetrics};
use slowlight::solver::{run_march_with, AtomicFieldHistory, Axes, FieldHistory};
use slowlight::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Every stride-th z and τ node inside transient windows is compared with
/// the quadrature form of the reference.
const TRANSIENT_STRIDE: usize = 4;

const METRIC_KEYS: [&str; 8] = [
    "v1_fit",
    "v2_fit",
    "amp_ratio_step",
    "fwhm_ratio_step",
    "lp_ratio_step",
    "amp_ratio_rf1",
    "retrieval_l2",
    "retrieval_sign",
];

#[derive(Debug, Parser)]
#[command(name = "slowlight", version, about = "Slow-light pulse processing: march, reference solution, comparison")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Maxwell-Bloch march and write field.csv, spin.csv and metrics.txt
    Simulate(RunArgs),
    /// Evaluate the closed-form solution on the same sample points
    Oracle(RunArgs),
    /// Run the march and report its deviation from the closed-form solution
    Compare(RunArgs),
    /// Print a built-in scenario config
    Preset {
        /// Preset name (fig1)
        name: String,
    },
    /// Tabulate metrics while one setting varies
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// key=start:stop:count, count values evenly spaced and inclusive
        #[arg(long)]
        vary: String,
        /// Also write the table to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Standard deviation of a Gaussian filter applied to the retrieved
    /// pulse before it is compared; overrides the config value
    #[arg(long)]
    broadening: Option<f64>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_VALIDATION, message: message.into() }
}

fn sink(path: &Path, e: io::Error) -> Failure {
    Failure { code: EXIT_RUNTIME, message: format!("{}: {e}", path.display()) }
}

/// Runs the program with `args` (including the program name) and returns
/// the exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run_cli_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let text = e.to_string();
                    let line = text.lines().next().unwrap_or("invalid arguments");
                    let _ = writeln!(err, "slowlight: {}", line.trim_start_matches("error: "));
                    EXIT_VALIDATION
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "slowlight: error: {}", f.message.replace('\n', " "));
            f.code
        }
    }
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_cli_with(args, &mut io::stdout().lock(), &mut io::stderr().lock())
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Simulate(args) => simulate(&args),
        Command::Oracle(args) => oracle(&args),
        Command::Compare(args) => compare(&args),
        Command::Preset { name } => {
            let text = preset_text(&name).ok_or_else(|| usage(format!("unknown preset `{name}` (available: fig1)")))?;
            out.write_all(text.as_bytes()).map_err(|e| sink(Path::new("<stdout>"), e))
        }
        Command::Sweep { config, vary, out: file } => sweep(&config, &vary, file.as_deref(), out),
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let cfg = parse_config(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_run(args: &RunArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = load(&args.config)?;
    if let Some(sigma) = args.broadening {
        cfg.broadening = sigma;
        cfg.validate()?;
    }
    fs::create_dir_all(&args.out).map_err(|e| sink(&args.out, e))?;
    Ok(cfg)
}

fn create(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> slowlight::Result<()>,
) -> Result<(), Failure> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| sink(&path, e))?;
    let mut w = BufWriter::new(file);
    write(&mut w).map_err(|e| match e {
        Error::Sink(io) => sink(&path, io),
        other => other.into(),
    })?;
    w.flush().map_err(|e| sink(&path, e))
}

fn march(cfg: &ScenarioConfig) -> Result<(FieldHistory, AtomicFieldHistory), Failure> {
    let options = cfg.march_options()?;
    Ok(run_march_with(&cfg.grid, &cfg.schedule, &cfg.input, &cfg.params, &options)?)
}

fn write_histories(
    cfg: &ScenarioConfig,
    dir: &Path,
    field: &FieldHistory,
    atoms: &AtomicFieldHistory,
) -> Result<(), Failure> {
    if cfg.outputs.field {
        create(dir, "field.csv", |w| write_field_csv(w, field).map(drop))?;
    }
    if cfg.outputs.spin {
        create(dir, "spin.csv", |w| write_spin_csv(w, atoms).map(drop))?;
    }
    Ok(())
}

fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_run(args)?;
    let (field, atoms) = march(&cfg)?;
    write_histories(&cfg, &args.out, &field, &atoms)?;
    if cfg.outputs.metrics {
        let m = protocol_metrics(&cfg, &field, &atoms)?;
        create(&args.out, "metrics.txt", |w| write_metrics(w, &m.entries()))?;
    }
    Ok(())
}

/// Ground-state amplitudes of the closed-form solution. The optical
/// coherence is not part of it and is written as zero.
fn oracle_atoms(oracle: &Oracle, axes: &Axes, c: f64) -> Result<AtomicFieldHistory, Failure> {
    let mut x = Vec::with_capacity(axes.len());
    let mut big = Vec::with_capacity(axes.len());
    for &z in &axes.z {
        for &tau in &axes.tau {
            let (m, cm) = oracle.spinwave_retarded(z, tau)?;
            x.push(m);
            big.push(cm);
        }
    }
    let y = vec![Default::default(); x.len()];
    Ok(AtomicFieldHistory { axes: axes.clone(), x, y, c_big_m: big, c })
}

fn oracle(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_run(args)?;
    let axes = cfg.march_options()?.sampling.unwrap_or_else(slowlight::solver::Sampling::full).axes(&cfg.grid)?;
    let reference = oracle_for(&cfg)?;
    let field = oracle_history(&reference, &cfg, &axes)?;
    let atoms = oracle_atoms(&reference, &axes, cfg.params.c)?;
    write_histories(&cfg, &args.out, &field, &atoms)?;
    if cfg.outputs.metrics {
        let m = protocol_metrics(&cfg, &field, &atoms)?;
        create(&args.out, "metrics.txt", |w| write_metrics(w, &m.entries()))?;
    }
    Ok(())
}

fn compare(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_run(args)?;
    let (field, atoms) = march(&cfg)?;
    write_histories(&cfg, &args.out, &field, &atoms)?;
    if cfg.outputs.oracle {
        let reference = oracle_history(&oracle_for(&cfg)?, &cfg, &field.axes)?;
        create(&args.out, "oracle_field.csv", |w| write_field_csv(w, &reference).map(drop))?;
    }
    let m = protocol_metrics(&cfg, &field, &atoms)?;
    let cmp = compare_with_oracle(&cfg, &field, TRANSIENT_STRIDE)?;
    let mut entries = m.entries();
    entries.extend(cmp.entries());
    create(&args.out, "metrics.txt", |w| write_metrics(w, &entries))
}

/// Parses `key=start:stop:count`.
fn parse_vary(spec: &str) -> Result<(String, Vec<f64>), Failure> {
    let bad = || usage(format!("--vary expects key=start:stop:count, got `{spec}`"));
    let (key, range) = spec.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = range.split(':').collect();
    let [a, b, n] = parts[..] else {
        return Err(bad());
    };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let values = (0..n).map(|k| if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect();
    Ok((key.trim().to_string(), values))
}

fn sweep(config: &Path, vary: &str, file: Option<&Path>, out: &mut dyn Write) -> Result<(), Failure> {
    let base = load(config)?;
    let (key, values) = parse_vary(vary)?;
    let configs = values
        .iter()
        .map(|&v| {
            let mut cfg = base.clone();
            set_value(&mut cfg, &key, v)?;
            cfg.validate().map_err(|e| usage(format!("{key} = {v}: {e}")))?;
            Ok(cfg)
        })
        .collect::<Result<Vec<_>, Failure>>()?;

    let rows: Vec<Result<ProtocolMetrics, Failure>> = configs
        .par_iter()
        .map(|cfg| {
            let (field, atoms) = march(cfg)?;
            Ok(protocol_metrics(cfg, &field, &atoms)?)
        })
        .collect();

    let mut table = format!("{key},{}\n", METRIC_KEYS.join(","));
    for (v, row) in values.iter().zip(rows) {
        let m = row.map_err(|f| Failure { message: format!("{key} = {v}: {}", f.message), ..f })?;
        let entries = m.entries();
        table.push_str(&v.to_string());
        for k in METRIC_KEYS {
            let cell = entries.iter().find(|e| e.0 == k).map_or("nan".to_string(), |e| e.1.to_string());
            table.push(',');
            table.push_str(&cell);
        }
        table.push('\n');
    }
    out.write_all(table.as_bytes()).map_err(|e| sink(Path::new("<stdout>"), e))?;
    if let Some(path) = file {
        fs::write(path, &table).map_err(|e| sink(path, e))?;
    }
    Ok(())
}
