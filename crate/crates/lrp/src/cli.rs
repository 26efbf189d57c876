//! The `lrp` binary: sampling, resistance queries, identity verification,
//! block classification, scaling campaigns, and plot rendering.
//!
//! Exit codes: 0 success, 1 usage error, 2 numeric failure, 3 verification
//! suite failure. All declared outputs are written atomically (temp file in
//! the target directory, then rename) and every subcommand prints a one-line
//! summary. `LRP_SEED` overrides `--seed` when set; output paths resolve
//! relative to `--out-dir`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::estimation::{self, ScalingConfig};
use crate::identities::suites;
use crate::model::{self, Interval, ModelParams, PairClass};
use crate::plot;
use crate::renorm::{self, ClassifyParams, ThresholdMode};
use crate::solver::{self, SolverError};

#[derive(Debug, Parser)]
#[command(name = "lrp", version, about = "Electric-network toolkit for critical long-range percolation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalOpts {
    /// Master RNG seed (LRP_SEED overrides this flag when set).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory all relative output paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for replicate parallelism (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one configuration and write it as JSON.
    Sample {
        #[arg(long)]
        beta: f64,
        /// Window lower end (plain window mode).
        #[arg(long, default_value_t = 0)]
        lo: i64,
        /// Window upper end (plain window mode).
        #[arg(long)]
        hi: Option<i64>,
        /// Contract everything beyond this radius into a supernode.
        #[arg(long, conflicts_with_all = ["lo", "hi"])]
        contracted_radius: Option<i64>,
        /// Truncation distance for the contracted mode (default 8 * radius).
        #[arg(long)]
        truncation: Option<i64>,
        /// Forbid all edges between [-a, a] and the outside of [-b, b]:
        /// `--forbid-cross a b`.
        #[arg(long, num_args = 2, value_names = ["INNER", "OUTER"])]
        forbid_cross: Option<Vec<i64>>,
        #[arg(long, default_value = "sample.json")]
        out: PathBuf,
    },
    /// Restricted two-point resistance on a sampled window.
    Resist {
        #[arg(long)]
        beta: f64,
        /// Window is [0, n).
        #[arg(long)]
        n: i64,
        /// The two terminals.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        pair: Vec<i64>,
        /// Include the unit electric flow in the JSON output.
        #[arg(long)]
        emit_flow: bool,
        #[arg(long, default_value = "resist.json")]
        out: PathBuf,
    },
    /// Run the electric-network identity suites.
    Verify {
        /// Suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 500)]
        trials: u64,
        #[arg(long, default_value = "verify.json")]
        out: PathBuf,
    },
    /// Classify the blocks of a sampled window at scale m.
    Classify {
        #[arg(long)]
        beta: f64,
        /// Block length.
        #[arg(long)]
        m: i64,
        /// Number of blocks (the window is [0, m * blocks)).
        #[arg(long, default_value_t = 64)]
        blocks: i64,
        /// Cap for the long-edge endpoint count (M-goodness).
        #[arg(long, default_value_t = 8)]
        m_cap: u64,
        #[arg(long, default_value_t = 0.2)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha1: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha2: f64,
        #[arg(long, value_enum, default_value_t = ThresholdArg::Power)]
        mode: ThresholdArg,
        /// Growth-function estimate for the lambda-hat threshold mode.
        #[arg(long)]
        lambda_hat: Option<f64>,
        #[arg(long, default_value = "classify.csv")]
        out: PathBuf,
    },
    /// Monte Carlo scaling campaign with exponent regression.
    Scaling {
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Scales as `a..b` (doubling) or a comma list.
        #[arg(long, default_value = "16..1024")]
        scales: String,
        #[arg(long, default_value_t = 200)]
        replicates: u64,
        /// Truncation is factor * n.
        #[arg(long, default_value_t = 8)]
        truncation_factor: i64,
        /// Estimate the growth function as a max over a pair grid.
        #[arg(long)]
        max_over_pairs: bool,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        #[arg(long, default_value = "series.csv")]
        csv: PathBuf,
    },
    /// Render a series CSV as a standalone SVG plot.
    Report {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value = "plot.svg")]
        svg: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdArg {
    Power,
    LambdaHat,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
    SuitesFailed(u64),
}

impl From<model::ModelError> for CliError {
    fn from(e: model::ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Numeric { .. } | SolverError::InfiniteResistance => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<estimation::EstimationError> for CliError {
    fn from(e: estimation::EstimationError) -> Self {
        match e {
            estimation::EstimationError::Solver(s) => s.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<renorm::RenormError> for CliError {
    fn from(e: renorm::RenormError) -> Self {
        match e {
            renorm::RenormError::Solver(s) => s.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numeric(format!("io: {e}"))
    }
}

/// Parses argv and runs; returns the process exit code.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error: {first}");
            return 1;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {}", m.replace('\n', " "));
            1
        }
        Err(CliError::Numeric(m)) => {
            eprintln!("error: {}", m.replace('\n', " "));
            2
        }
        Err(CliError::SuitesFailed(count)) => {
            eprintln!("error: {count} verification suite(s) reported failures");
            3
        }
    }
}

fn resolve(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.to_path_buf();
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    tmp.set_file_name(name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn effective_seed(flag: u64) -> Result<u64, CliError> {
    match std::env::var("LRP_SEED") {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| CliError::Usage(format!("LRP_SEED must be an unsigned integer, got {text:?}"))),
        Err(_) => Ok(flag),
    }
}

fn parse_scales(text: &str) -> Result<Vec<i64>, CliError> {
    let bad = |m: String| CliError::Usage(m);
    if let Some((a, b)) = text.split_once("..") {
        let lo: i64 =
            a.trim().parse().map_err(|_| bad(format!("bad scale range start {a:?}")))?;
        let hi: i64 = b.trim().parse().map_err(|_| bad(format!("bad scale range end {b:?}")))?;
        if lo < 2 || hi < lo {
            return Err(bad(format!("scale range {text:?} must satisfy 2 <= start <= end")));
        }
        let mut scales = Vec::new();
        let mut n = lo;
        while n <= hi {
            scales.push(n);
            n *= 2;
        }
        return Ok(scales);
    }
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<i64>()
                .map_err(|_| bad(format!("bad scale {f:?} in list")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.global.threads {
        // a second invocation in-process keeps the first pool; that is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let seed = effective_seed(cli.global.seed)?;
    let out_dir = cli.global.out_dir.clone();

    match cli.command {
        Command::Sample { beta, lo, hi, contracted_radius, truncation, forbid_cross, out } => {
            let forbidden = match forbid_cross {
                Some(v) => {
                    let (a, b) = (v[0], v[1]);
                    vec![PairClass::CrossOutside {
                        inner: Interval::new(-a, a),
                        outer: Interval::new(-b, b),
                    }]
                }
                None => Vec::new(),
            };
            let params = ModelParams::new(beta, seed)?;
            let sample = match contracted_radius {
                Some(radius) => {
                    let t = truncation.unwrap_or(8 * radius);
                    model::sample_with_contracted_complement(
                        params,
                        Interval::new(-radius, radius),
                        radius,
                        t,
                        &forbidden,
                    )?
                }
                None => {
                    let hi = hi
                        .ok_or_else(|| CliError::Usage("--hi is required without --contracted-radius".into()))?;
                    model::sample_window(params, lo, hi, &forbidden)?
                }
            };
            let path = resolve(&out_dir, &out);
            write_atomic(&path, format!("{:#}\n", sample.to_json()).as_bytes())?;
            println!(
                "sample: window [{}, {}], {} edges, {} supernode(s), seed {} -> {}",
                sample.window.lo,
                sample.window.hi,
                sample.edges.len(),
                sample.supernodes.len(),
                seed,
                path.display()
            );
        }
        Command::Resist { beta, n, pair, emit_flow, out } => {
            if pair.len() != 2 {
                return Err(CliError::Usage("--pair takes exactly two vertices".into()));
            }
            let params = ModelParams::new(beta, seed)?;
            let sample = model::sample_window(params, 0, n - 1, &[])?;
            let window = Interval::new(0, n - 1);
            let result = solver::restricted_resistance(&sample, window, pair[0], pair[1])?;
            let path = resolve(&out_dir, &out);
            write_atomic(&path, format!("{:#}\n", result.to_json(emit_flow)).as_bytes())?;
            println!(
                "resist: R_[0,{n})({}, {}) = {:.9} (beta {beta}, seed {seed}) -> {}",
                pair[0],
                pair[1],
                result.value,
                path.display()
            );
        }
        Command::Verify { suite, trials, out } => {
            let reports = if suite == "all" {
                suites::run_all(trials, seed)
            } else {
                match suites::run_named(&suite, trials, seed) {
                    Some(r) => vec![r],
                    None => {
                        return Err(CliError::Usage(format!(
                            "unknown suite {suite:?}; pick one of {} or all",
                            suites::ALL_SUITES.join(", ")
                        )))
                    }
                }
            };
            let path = resolve(&out_dir, &out);
            let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
            write_atomic(&path, format!("{json}\n").as_bytes())?;
            let mut failures = 0u64;
            for r in &reports {
                println!(
                    "verify[{}]: trials {}, failures {}, worst violation {:.3e}",
                    r.suite, r.trials, r.failures, r.worst_violation
                );
                failures += r.failures;
            }
            println!("verify: {} suite(s) -> {}", reports.len(), path.display());
            if failures > 0 {
                return Err(CliError::SuitesFailed(failures));
            }
        }
        Command::Classify {
            beta,
            m,
            blocks,
            m_cap,
            delta,
            alpha1,
            alpha2,
            mode,
            lambda_hat,
            out,
        } => {
            let params = ModelParams::new(beta, seed)?;
            let sample = model::sample_window(params, 0, m * blocks - 1, &[])?;
            let classify_params = ClassifyParams {
                m,
                m_cap,
                delta,
                alpha1,
                alpha2,
                mode: match mode {
                    ThresholdArg::Power => ThresholdMode::Power,
                    ThresholdArg::LambdaHat => ThresholdMode::LambdaHat,
                },
                lambda_hat,
            };
            let rows = renorm::classify(&sample, &classify_params)?;
            let mut csv = String::from(
                "block_index,xi,eta,m_good,cond1,cond2,cond3,very_good,internal_energy\n",
            );
            let mut very_good = 0u64;
            let mut counted = 0u64;
            for row in rows.iter().filter(|r| !r.indeterminate) {
                counted += 1;
                very_good += row.very_good as u64;
                writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{},{:.9}",
                    row.block,
                    row.xi,
                    row.eta,
                    row.m_good,
                    row.cond1,
                    row.cond2,
                    row.cond3,
                    row.very_good,
                    row.internal_energy
                )
                .expect("string write");
            }
            let path = resolve(&out_dir, &out);
            write_atomic(&path, csv.as_bytes())?;
            println!(
                "classify: m {m}, {counted} determinate blocks, {very_good} very good -> {}",
                path.display()
            );
        }
        Command::Scaling {
            beta,
            scales,
            replicates,
            truncation_factor,
            max_over_pairs,
            out,
            csv,
        } => {
            let config = ScalingConfig {
                beta,
                scales: parse_scales(&scales)?,
                replicates,
                seed,
                truncation_factor,
                max_over_pairs,
            };
            let report = estimation::scaling_run(&config)?;
            let report_path = resolve(&out_dir, &out);
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_atomic(&report_path, format!("{json}\n").as_bytes())?;

            let mut series = String::from("n,lambda,ci_lo,ci_hi,point_to_box,ci_lo2,ci_hi2\n");
            for row in &report.type_ratios {
                let l = 1.96 * row.lambda_stderr;
                let p = 1.96 * row.point_to_box_stderr;
                writeln!(
                    series,
                    "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                    row.n,
                    row.lambda,
                    row.lambda - l,
                    row.lambda + l,
                    row.point_to_box,
                    row.point_to_box - p,
                    row.point_to_box + p
                )
                .expect("string write");
            }
            let csv_path = resolve(&out_dir, &csv);
            write_atomic(&csv_path, series.as_bytes())?;
            println!(
                "scaling: beta {beta}, delta_hat {:.4} +- {:.4}, r2 {:.4} -> {} / {}",
                report.delta_hat,
                report.delta_stderr,
                report.r_squared,
                report_path.display(),
                csv_path.display()
            );
        }
        Command::Report { csv, svg } => {
            let csv_path = resolve(&out_dir, &csv);
            let text = fs::read_to_string(&csv_path)?;
            let rendered = plot::plot_csv_to_svg(&text).map_err(|e| match e {
                plot::PlotError::Parse { .. } => CliError::Usage(e.to_string()),
                other => CliError::Usage(other.to_string()),
            })?;
            let svg_path = resolve(&out_dir, &svg);
            write_atomic(&svg_path, rendered.as_bytes())?;
            println!("report: {} -> {}", csv_path.display(), svg_path.display());
        }
    }
    Ok(())
}
