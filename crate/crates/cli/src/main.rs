//! Command-line workbench for imputing missing binary covariates in
//! randomized experiments.
//!
//! Subcommands:
//! - `simulate`: run a Monte Carlo study from a JSON configuration and write
//!   the metrics table and report.
//! - `analyze`: estimate the treatment effect on one dataset with one method
//!   under the constant-effect model.
//! - `impute`: write the completed dataset copies a method produces.
//! - `check-identify`: build the identified joints for a 9-entry observed
//!   table and print their diagnostics.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use covimpute::harness::{
    analyze_dataset, impute_datasets, run_simulation, AnalyzeOptions, SimConfig,
};
use covimpute::identify::{build_identified_joint, check_identification, Restriction};
use covimpute::impute::Method;
use covimpute::io::{emit_report, ingest_csv, metrics_csv, parse_theta_file, write_completed_csvs, ReportFormat};
use covimpute::ErrorKind;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(
    name = "covimpute",
    version,
    about = "Impute missing binary covariates in randomized experiments and reproduce the simulation study"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RestrictionArg {
    Icin,
    Mar,
}

impl From<RestrictionArg> for Restriction {
    fn from(r: RestrictionArg) -> Self {
        match r {
            RestrictionArg::Icin => Restriction::Icin,
            RestrictionArg::Mar => Restriction::Mar,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo simulation study described by a JSON config file.
    Simulate {
        /// Path to the run configuration (JSON, snake_case keys).
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the treatment effect on a dataset with one method
    /// (constant-effect analysis model).
    Analyze {
        /// Dataset CSV with header t,y,x1,x2.
        #[arg(long)]
        data: PathBuf,
        /// Method name, e.g. MI-R, Mean-NR, CCA.
        #[arg(long)]
        method: String,
        #[arg(long, value_enum, default_value = "icin")]
        restriction: RestrictionArg,
        /// Number of imputed datasets for MI methods.
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Token to treat as missing in covariate columns (repeatable).
        #[arg(long = "recode-missing")]
        recode_missing: Vec<String>,
    },
    /// Run one imputation method and write the completed dataset CSVs.
    Impute {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        method: String,
        /// Directory for the completed CSVs.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "icin")]
        restriction: RestrictionArg,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long = "recode-missing")]
        recode_missing: Vec<String>,
    },
    /// Check the identification properties of a 9-entry observed table.
    CheckIdentify {
        /// File with nine whitespace- or comma-separated probabilities in the
        /// canonical cell order (four complete cells by (x1,x2), x1-observed
        /// cells for x1=1 then x1=0, x2-observed cells for x2=1 then x2=0,
        /// both missing).
        #[arg(long)]
        theta: PathBuf,
        /// Restrict the check to one identifying assumption.
        #[arg(long, value_enum)]
        restriction: Option<RestrictionArg>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn core_failure(e: covimpute::Error) -> Failure {
    let code = match e.kind() {
        ErrorKind::Config => EXIT_CONFIG,
        ErrorKind::Data => EXIT_DATA,
        ErrorKind::Runtime => EXIT_RUNTIME,
    };
    Failure::new(code, e.to_string())
}

/// Anything wrong with the `--data` file (unreadable, malformed, invalid
/// values) is a data error.
fn ingest_failure(e: covimpute::Error) -> Failure {
    match e.kind() {
        ErrorKind::Config => Failure::new(EXIT_CONFIG, e.to_string()),
        _ => Failure::new(EXIT_DATA, e.to_string()),
    }
}

fn parse_method(name: &str) -> Result<Method, Failure> {
    Method::parse(name).ok_or_else(|| {
        Failure::new(
            EXIT_CONFIG,
            format!(
                "unknown method {name:?}; expected one of {}",
                Method::ALL.map(|m| m.name()).join(", ")
            ),
        )
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| {
                Failure::new(EXIT_CONFIG, format!("cannot read {}: {e}", config.display()))
            })?;
            let mut cfg: SimConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::new(EXIT_CONFIG, format!("invalid config: {e}")))?;
            if let Some(dir) = out {
                cfg.output_dir = Some(dir);
            }
            cfg.validate().map_err(core_failure)?;

            let report = run_simulation(&cfg).map_err(core_failure)?;
            print!("{}", metrics_csv(&report));
            if let Some(bd) = &report.before_deletion {
                println!(
                    "# before-deletion means: beta_t {:.4} (mc-sd {:.4}), beta_tx2 {:.4} (mc-sd {:.4})",
                    bd.mean_beta_t, bd.mc_sd_beta_t, bd.mean_beta_tx2, bd.mc_sd_beta_tx2
                );
            }
            for f in report.failures.iter().filter(|f| f.count > 0) {
                eprintln!(
                    "warning: {} failed in {} replication(s); first error: {}",
                    f.method,
                    f.count,
                    f.first_error.as_deref().unwrap_or("unknown")
                );
            }
            if let Some(dir) = &report.config.output_dir {
                let written = emit_report(&report, &[ReportFormat::Csv, ReportFormat::Json], dir)
                    .map_err(core_failure)?;
                for path in written {
                    eprintln!("wrote {}", path.display());
                }
            }
            Ok(())
        }
        Command::Analyze {
            data,
            method,
            restriction,
            m,
            seed,
            recode_missing,
        } => {
            let method = parse_method(&method)?;
            let dataset = ingest_csv(&data, &recode_missing).map_err(ingest_failure)?;
            let opts = AnalyzeOptions {
                method,
                restriction: restriction.into(),
                imputations: m,
                seed,
                ..Default::default()
            };
            let report = analyze_dataset(&dataset, &opts).map_err(core_failure)?;
            println!("method = {}", report.method);
            println!("n = {}", report.n);
            println!("estimate = {:.6}", report.estimate);
            println!("se = {:.6}", report.se);
            println!("ci95 = ({:.6}, {:.6})", report.ci.0, report.ci.1);
            Ok(())
        }
        Command::Impute {
            data,
            method,
            out,
            restriction,
            m,
            seed,
            recode_missing,
        } => {
            let method = parse_method(&method)?;
            let dataset = ingest_csv(&data, &recode_missing).map_err(ingest_failure)?;
            let completed = impute_datasets(
                &dataset,
                method,
                restriction.into(),
                m,
                &Default::default(),
                seed,
            )
            .map_err(core_failure)?;
            let paths = write_completed_csvs(&completed, &out).map_err(core_failure)?;
            println!("wrote {} completed dataset(s) to {}", paths.len(), out.display());
            Ok(())
        }
        Command::CheckIdentify { theta, restriction } => {
            let text = std::fs::read_to_string(&theta).map_err(|e| {
                Failure::new(EXIT_DATA, format!("cannot read {}: {e}", theta.display()))
            })?;
            let table = parse_theta_file(&text).map_err(core_failure)?;
            let restrictions: Vec<Restriction> = match restriction {
                Some(r) => vec![r.into()],
                None => vec![Restriction::Icin, Restriction::Mar],
            };
            for r in restrictions {
                let joint = build_identified_joint(&table, r).map_err(core_failure)?;
                print!("{}", check_identification(&joint).to_text());
                println!("normalizer = {:.12}", joint.normalizer());
                println!();
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
