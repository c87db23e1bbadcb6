//! `mcsr` command line: degradation, dataset building, training, studies,
//! evaluation and report tables.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use mcsr::image::{read_image, write_image};
use mcsr::kspace::{degrade, DegradeSpec};
use mcsr::metrics::MetricReport;
use mcsr::nets::FusionMode;
use mcsr::train::{self, ExperimentConfig, GenModel, RESOLVED_CONFIG};

/// `<crate version> (<git describe>)`.
pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("MCSR_GIT_DESCRIBE"), ")");

pub const MANIFEST: &str = "manifest.toml";
pub const THREADS_ENV: &str = "MCSR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mcsr", version = VERSION, about = "Multi-contrast MRI super-resolution")]
pub struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    factor: Option<u32>,
    /// sisr | synthesis | low_level | high_level
    #[arg(long, global = true)]
    mode: Option<FusionMode>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Config override `key=value`; dotted keys reach tables. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Zero-fill the k-space periphery of one image.
    Degrade { input: PathBuf, output: PathBuf },
    /// Build the patch store a config refers to.
    MakeData,
    /// Train one model.
    Train,
    /// Train and compare the four fusion variants.
    Ablate,
    /// Train and compare constrained and unconstrained progressive models.
    Progressive,
    /// Train the three loss combinations.
    Sweep,
    /// Score a trained run (its `--out-dir`) on the test split.
    Eval,
    /// Print mean and std per variant and factor of a metrics CSV, at full
    /// precision.
    Report { metrics: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Degrade { .. } => "degrade",
            Command::MakeData => "make-data",
            Command::Train => "train",
            Command::Ablate => "ablate",
            Command::Progressive => "progressive",
            Command::Sweep => "sweep",
            Command::Eval => "eval",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<mcsr::Error> for Failure {
    fn from(e: mcsr::Error) -> Self {
        match e {
            mcsr::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {f}");
        return 1;
    }
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &args) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            2
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A pool configured earlier in the process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Config file (or defaults), then flags, then `--override`s.
fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(f) = cli.factor {
        overrides.push(format!("factor={f}"));
    }
    if let Some(m) = cli.mode {
        overrides.push(format!("mode=\"{m}\""));
    }
    if let Some(d) = &cli.out_dir {
        overrides.push(format!("out_dir={}", toml::Value::String(d.display().to_string())));
    }
    overrides.extend(cli.overrides.iter().cloned());
    Ok(ExperimentConfig::from_toml_with(&text, &overrides)?)
}

#[derive(Serialize)]
struct RunManifest<'a> {
    version: String,
    command: &'a str,
    argv: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a ExperimentConfig>,
}

fn write_manifest(
    path: &Path,
    command: &str,
    argv: &[String],
    config: Option<&ExperimentConfig>,
) -> Result<(), Failure> {
    let m = RunManifest {
        version: VERSION.to_string(),
        command,
        argv,
        config,
    };
    let text = toml::to_string(&m).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn execute(cli: &Cli, argv: &[String]) -> Result<(), Failure> {
    let name = cli.command.name();
    match &cli.command {
        Command::Degrade { input, output } => {
            let spec = DegradeSpec::new(cli.factor.unwrap_or(2)).map_err(|e| Failure::Usage(e.to_string()))?;
            let img = read_image(input)?;
            write_image(output, &degrade(&img, &spec)?)?;
            let mut m = output.clone().into_os_string();
            m.push(".manifest.toml");
            write_manifest(Path::new(&m), name, argv, None)
        }
        Command::Report { metrics } => {
            print!("{}", MetricReport::read_csv(metrics)?.summary_csv());
            Ok(())
        }
        Command::MakeData => {
            let cfg = resolve_config(cli)?;
            write_manifest(&cfg.out_dir.join(MANIFEST), name, argv, Some(&cfg))?;
            let store = train::prepare_store(&cfg)?;
            println!("{} patch tuples in {}", store.rows().len(), store.dir().display());
            Ok(())
        }
        Command::Train => {
            let cfg = resolve_config(cli)?;
            write_manifest(&cfg.out_dir.join(MANIFEST), name, argv, Some(&cfg))?;
            let log = train::train(cfg.clone())?;
            train::emit_curves(&log, cfg.out_dir.join("curves"))?;
            if let Some(last) = log.last() {
                println!(
                    "epoch {}: L_mse {:.6} L_per {:.6} W_dis {:.6} ssim {:.4} psnr {:.3} dB",
                    last.epoch, last.mse, last.per, last.w_dis, last.eval_ssim, last.eval_psnr
                );
            }
            Ok(())
        }
        Command::Ablate | Command::Progressive | Command::Sweep => {
            let cfg = resolve_config(cli)?;
            write_manifest(&cfg.out_dir.join(MANIFEST), name, argv, Some(&cfg))?;
            let outcome = match cli.command {
                Command::Ablate => train::ablation_suite(&cfg)?,
                Command::Progressive => train::progressive_suite(&cfg)?,
                _ => {
                    let (rows, outcome) = train::loss_sweep(&cfg)?;
                    for r in rows {
                        println!(
                            "{:<16} ssim {:.4}±{:.4} psnr {:.3}±{:.3}",
                            r.config, r.ssim_mean, r.ssim_std, r.psnr_mean, r.psnr_std
                        );
                    }
                    outcome
                }
            };
            for run in &outcome.runs {
                train::emit_curves(&run.log, run.dir.join("curves"))?;
            }
            print!("{}", outcome.report.table());
            Ok(())
        }
        Command::Eval => {
            let run_dir = cli
                .out_dir
                .clone()
                .ok_or_else(|| Failure::Usage("eval needs --out-dir pointing at a trained run".into()))?;
            let cfg = ExperimentConfig::load(run_dir.join(RESOLVED_CONFIG), &cli.overrides)?;
            let model = GenModel::from_config(&cfg)?;
            let params = train::load_generator(&run_dir)?;
            model.check_params(&params)?;
            let store = train::prepare_store(&cfg)?;
            let variant = cfg.variant_name();
            let (report, _) = train::evaluate_model(&model, &params, &store, cfg.factor, &variant, true)?;
            let path = run_dir.join("metrics.csv");
            report.write_csv(&path)?;
            write_manifest(&run_dir.join("eval_manifest.toml"), name, argv, Some(&cfg))?;
            print!("{}", report.table());
            Ok(())
        }
    }
}
