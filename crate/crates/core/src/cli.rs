//! Command-line front end. [`run`] parses arguments, executes one command on
//! a worker pool and maps the outcome to an exit code.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cusum::{aggregate, cusum_curve, Aggregation, CusumCurve, Segment};
use crate::error::{Error, Result};
use crate::lsw::{simulate, LswSpec};
use crate::mvts::{
    calibrate_lenient, calibrate_thresholds, sbs_mvts, sbs_mvts_with, MvtsConfig, ThresholdTable,
};
use crate::sbs::PanelSource;
use crate::series::MultivariateSeries;
use crate::simbench::{
    evaluate, format_bench_table, generate, run_benchmark, write_bench_csv, Model, ModelSpec,
};
use crate::wavelet::{PeriodogramPanel, Scale};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "SBS_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "sbs",
    version,
    about = "Change-point detection in the second-order structure of multivariate time series"
)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect change-points in a CSV (rows = time, columns = components).
    Segment(SegmentArgs),
    /// Simulate a benchmark model or an LSW process to CSV plus a truth sidecar.
    Simulate(SimulateArgs),
    /// Calibrate per-sequence thresholds and write them as CSV.
    Calibrate(CalibrateArgs),
    /// Run the simulation benchmark and report a table.
    Bench(BenchArgs),
    /// Dump root-segment CUSUM curves per scale as CSV.
    Cusum(CusumArgs),
}

/// Detector settings shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct Tuning {
    /// Scale-depth constant.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Minimum spacing of estimates within a scale.
    #[arg(long)]
    pub delta: Option<usize>,
    /// Cluster diameter when merging scales.
    #[arg(long)]
    pub lambda: Option<usize>,
    /// Threshold rate exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Quantile level of the null maxima.
    #[arg(long)]
    pub quantile: Option<f64>,
    /// Null replications.
    #[arg(long = "R", visible_alias = "reps-null")]
    pub null_reps: Option<usize>,
    /// Grid step for fitted AR coefficients.
    #[arg(long)]
    pub coefficient_step: Option<f64>,
    /// Calibration seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Tuning {
    pub fn config(&self, rule: Aggregation) -> MvtsConfig {
        let mut cfg = MvtsConfig {
            rule,
            ..MvtsConfig::default()
        };
        if let Some(a) = self.alpha {
            cfg.alpha = a;
        }
        cfg.delta = self.delta;
        cfg.lambda = self.lambda;
        let cal = &mut cfg.calibration;
        if let Some(g) = self.gamma {
            cal.gamma = g;
        }
        if let Some(q) = self.quantile {
            cal.quantile = q;
        }
        if let Some(r) = self.null_reps {
            cal.reps = r;
        }
        if let Some(s) = self.coefficient_step {
            cal.coefficient_step = s;
        }
        cal.seed = self.seed;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    pub input: PathBuf,
    /// JSON output (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value = "thr")]
    pub rule: Aggregation,
    /// Use thresholds from a CSV written by `calibrate`.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Also write root-segment aggregated curves per scale into this directory.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Benchmark model (M1.1, M1.2, M2.1, M2.2, M3, M4, A, B, null).
    #[arg(conflicts_with_all = ["model", "spec"])]
    pub model_name: Option<Model>,
    #[arg(long, conflicts_with = "spec")]
    pub model: Option<Model>,
    /// TOML description of an LSW process.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub p: usize,
    #[arg(long = "T", default_value_t = 1024)]
    pub len: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Spread each series' change over a window of `floor(2 ln T)`.
    #[arg(long)]
    pub jitter: bool,
    /// CSV output; the sidecar goes next to it as `<stem>.truth.json`.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Override the sidecar path.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    pub input: PathBuf,
    /// CSV output (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: Model,
    /// Sparsity levels, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub rho: Vec<f64>,
    /// Dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub p: Vec<usize>,
    #[arg(long = "T", default_value_t = 1024)]
    pub len: usize,
    /// Data sets per cell.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "thr,avg,max")]
    pub rules: Vec<Aggregation>,
    #[arg(long)]
    pub jitter: bool,
    /// Table CSV (default: none).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Aligned-text report (default: stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct CusumArgs {
    pub input: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Scales to dump, e.g. -1,-2 (default: all used by the detector).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub scales: Vec<i32>,
    #[arg(long, default_value = "thr")]
    pub rule: Aggregation,
    /// Dump the curve of this panel sequence instead of the aggregate.
    #[arg(long)]
    pub sequence: Option<usize>,
    #[command(flatten)]
    pub tuning: Tuning,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::Csv(_) | Error::Json(_) => EXIT_PARSE,
        Error::InvalidSegment { .. }
        | Error::Domain { .. }
        | Error::Degenerate { .. }
        | Error::DegenerateSequence { .. }
        | Error::DegenerateSeries { .. }
        | Error::Shape(_)
        | Error::Config(_)
        | Error::NotPsd { .. } => EXIT_VALIDATION,
        Error::Singular(_) | Error::Generator(_) | Error::Io(_) => EXIT_RUNTIME,
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a parsed command on a pool sized by `--threads`.
pub fn execute(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Segment(a) => cmd_segment(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Cusum(a) => cmd_cusum(a),
    })
}

pub fn cmd_segment(args: &SegmentArgs) -> Result<()> {
    let x = read_series(&args.input)?;
    let cfg = args.tuning.config(args.rule);
    let out = match &args.thresholds {
        Some(path) => {
            let table = ThresholdTable::read_csv(fs::File::open(path)?)?;
            sbs_mvts_with(&x, &cfg, table)?
        }
        None => sbs_mvts(&x, &cfg)?,
    };
    let mut curves = Vec::new();
    if args.curves.is_some() {
        for scale in Scale::range(cfg.depth(x.len())?) {
            curves.push((
                scale,
                root_curve_csv(&x, scale, Some(&out.thresholds), args.rule, None)?,
            ));
        }
    }
    let mut json = out.merged.to_json()?;
    json.push('\n');
    emit(args.output.as_deref(), json.as_bytes())?;
    if let Some(dir) = &args.curves {
        fs::create_dir_all(dir)?;
        for (scale, csv) in curves {
            write_atomic(&dir.join(curve_file(scale, None)), &csv)?;
        }
    }
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let (x, source) = match (&args.spec, args.model_name.or(args.model)) {
        (Some(path), _) => {
            let spec = LswSpec::from_path(path)?;
            let x = simulate(&spec, args.len, args.seed)?;
            let truth = spec.truth(args.len);
            (x.with_truth(truth)?, format!("lsw:{}", path.display()))
        }
        (None, Some(model)) => {
            let spec = ModelSpec {
                jitter: args.jitter,
                ..ModelSpec::new(model, args.p, args.len, args.rho, args.seed)
            };
            (generate(&spec)?, format!("model:{model}"))
        }
        (None, None) => {
            return Err(Error::Config("give a model name or --spec".into()));
        }
    };
    let mut csv = Vec::new();
    x.write_csv(&mut csv)?;
    let mut sidecar = serde_json::to_string_pretty(&x.sidecar(Some(source)))?;
    sidecar.push('\n');
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| sidecar_path(&args.output));
    write_atomic(&args.output, &csv)?;
    write_atomic(&truth_path, sidecar.as_bytes())
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let x = read_series(&args.input)?;
    let cfg = args.tuning.config(Aggregation::Thr);
    let table = calibrate_thresholds(&x, cfg.depth(x.len())?, &cfg.calibration)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    emit(args.output.as_deref(), &buf)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let cfg = args.tuning.config(Aggregation::Thr);
    let mut rows = Vec::new();
    for &p in &args.p {
        for &rho in &args.rho {
            let spec = ModelSpec {
                jitter: args.jitter,
                ..ModelSpec::new(args.model, p, args.len, rho, args.tuning.seed)
            };
            log::info!("bench {} rho={rho} p={p}", args.model);
            rows.extend(run_benchmark(&spec, &args.rules, args.reps, &cfg)?);
        }
    }
    let report = format_bench_table(&rows);
    if let Some(path) = &args.output {
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf)?;
        write_atomic(path, &buf)?;
    }
    emit(args.report.as_deref(), report.as_bytes())
}

pub fn cmd_cusum(args: &CusumArgs) -> Result<()> {
    let x = read_series(&args.input)?;
    let cfg = args.tuning.config(args.rule);
    let depth = cfg.depth(x.len())?;
    let scales: Vec<Scale> = if args.scales.is_empty() {
        Scale::range(depth).collect()
    } else {
        args.scales
            .iter()
            .map(|&i| Scale::new(i))
            .collect::<Result<_>>()?
    };
    let deepest = scales.iter().map(|s| s.depth()).max().unwrap_or(1);
    let thresholds = match args.sequence {
        Some(_) => None,
        None => Some(calibrate_lenient(&x, deepest, &cfg.calibration)?),
    };
    let mut files = Vec::new();
    for &scale in &scales {
        let csv = root_curve_csv(&x, scale, thresholds.as_ref(), args.rule, args.sequence)?;
        files.push((curve_file(scale, args.sequence), csv));
    }
    fs::create_dir_all(&args.output)?;
    for (name, csv) in files {
        write_atomic(&args.output.join(name), &csv)?;
    }
    Ok(())
}

fn curve_file(scale: Scale, sequence: Option<usize>) -> String {
    match sequence {
        Some(k) => format!("cusum_scale{}_seq{k}.csv", scale.index()),
        None => format!("cusum_scale{}.csv", scale.index()),
    }
}

/// CSV of the root-segment curve at `scale`, in series time: one sequence's
/// curve when `sequence` is set, otherwise the aggregate under `rule`.
fn root_curve_csv(
    x: &MultivariateSeries,
    scale: Scale,
    thresholds: Option<&ThresholdTable>,
    rule: Aggregation,
    sequence: Option<usize>,
) -> Result<Vec<u8>> {
    let panel = PeriodogramPanel::new(x, scale)?;
    let root = Segment::full(panel.len())?;
    let curve_of = |k: usize| -> Result<CusumCurve> {
        let mut y = Vec::new();
        panel.fill(k, root, &mut y);
        match cusum_curve(&y, root) {
            Err(Error::Degenerate { .. }) => Ok(CusumCurve {
                segment: root,
                values: vec![0.0; root.splits()],
                mean_level: 0.0,
            }),
            other => other,
        }
    };
    let offset = panel.offset();
    let mut buf = Vec::new();
    match (sequence, thresholds) {
        (Some(k), _) => {
            if k >= panel.dim() {
                return Err(Error::Config(format!(
                    "sequence {k} is outside the panel of {} sequences",
                    panel.dim()
                )));
            }
            let mut c = curve_of(k)?;
            c.segment = Segment::new(root.start() + offset, root.end() + offset)?;
            c.write_csv(&mut buf)?;
        }
        (None, None) => {
            return Err(Error::Config("aggregated curves need thresholds".into()));
        }
        (None, Some(thresholds)) => {
            let curves = (0..panel.dim()).map(curve_of).collect::<Result<Vec<_>>>()?;
            let pis = thresholds.for_scale(scale, panel.pairs())?;
            aggregate(&curves, &pis, rule)?.write_csv(&mut buf, offset)?;
        }
    }
    Ok(buf)
}

fn read_series(path: &Path) -> Result<MultivariateSeries> {
    let file = fs::File::open(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    MultivariateSeries::read_csv(file)
}

fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    csv.with_file_name(format!("{stem}.truth.json"))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Write via a sibling temporary file so that a failed run leaves no partial
/// output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    let result = fs::write(&tmp, bytes).and_then(|()| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Locations detected by `segment` for a series written by `simulate`,
/// scored against its sidecar.
pub fn score_against_sidecar(
    estimates: &[usize],
    sidecar: &Path,
    tolerance: usize,
) -> Result<crate::simbench::EvalReport> {
    let truth: crate::series::TruthSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    Ok(evaluate(estimates, &truth.change_points, tolerance))
}
