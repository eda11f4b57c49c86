//! Command-line driver.

mod approximate;
mod capacity;
mod verify;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lipsmooth::capacity::IsocapConfig;
use lipsmooth::geometry::{load_spec_file, make_shape, parse_shape_arg, DomainAtlas};
use lipsmooth::metrics::{MetricsConfig, PinnedConstants};
use lipsmooth::partition::BumpFamily;
use lipsmooth::suites::Context;
use lipsmooth::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "lipsmooth", version, about = "Smooth inner and outer approximation of Lipschitz domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract the approximating boundaries for each m and write reports.
    Approximate(RunArgs),
    /// Run verification suites; exit 1 if any check fails.
    Verify(VerifyArgs),
    /// Tabulate the isocapacitary comparison.
    Capacity(CapacityArgs),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    /// Library shape, e.g. `disk:radius=4,lipschitz=0.2`.
    #[arg(long, conflicts_with = "spec")]
    pub shape: Option<String>,
    /// Domain spec file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Comma-separated, strictly increasing m schedule.
    #[arg(long)]
    pub m: Option<String>,
    /// Cells per axis of the chart grids.
    #[arg(long)]
    pub chart_res: Option<usize>,
    /// Volume columns per band width 3L/m.
    #[arg(long)]
    pub vol_res: Option<f64>,
    /// Capacity grid cells per ball radius.
    #[arg(long)]
    pub cap_res: Option<usize>,
    /// Extraction margin, in (0, R/4).
    #[arg(long)]
    pub eps0: Option<f64>,
    /// Pinned-constant override `name=value`; repeatable.
    #[arg(long = "pin", value_name = "NAME=VALUE")]
    pub pins: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "lipsmooth-out")]
    pub out: PathBuf,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated suites to run (default: all). `charts` checks stored chart files.
    #[arg(long)]
    only: Option<String>,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated radii (default: four values up to r0).
    #[arg(long)]
    r: Option<String>,
    /// Compare concentric-ball capacities with their closed forms and exit.
    #[arg(long)]
    self_test: bool,
}

/// Error carrying the exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: EXIT_USAGE, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

/// Everything a run is configured with; embedded in the reports.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub shape: Option<String>,
    pub spec: Option<String>,
    pub schedule: Vec<f64>,
    pub chart_res: usize,
    pub extract_res: usize,
    pub epsilon0: f64,
    pub metrics: MetricsConfig,
    pub constants: PinnedConstants,
    pub isocap: IsocapConfig,
}

pub struct Setup {
    pub config: RunConfig,
    pub ctx: Context,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("{what}: `{t}` is not a number"))))
        .collect()
}

pub fn parse_schedule(s: &str) -> Result<Vec<f64>, Failure> {
    let v = parse_list(s, "--m")?;
    if v.is_empty() || v.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(usage("--m: values must be positive"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(usage("--m: schedule must be strictly increasing"));
    }
    Ok(v)
}

pub fn parse_radii(s: &str) -> Result<Vec<f64>, Failure> {
    let v = parse_list(s, "--r")?;
    if v.is_empty() || v.iter().any(|&r| !(r > 0.0)) {
        return Err(usage("--r: radii must be positive"));
    }
    Ok(v)
}

/// Applies `name=value` to whichever of the constant tables has the field.
fn apply_pin(pin: &str, constants: &mut PinnedConstants, isocap: &mut IsocapConfig) -> Result<(), Failure> {
    let (k, v) = pin.split_once('=').ok_or_else(|| usage(format!("--pin: expected NAME=VALUE, got `{pin}`")))?;
    let v: f64 = v.trim().parse().map_err(|_| usage(format!("--pin {k}: `{v}` is not a number")))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(usage(format!("--pin {k}: value must be positive")));
    }
    let k = k.trim();
    fn set<T: Serialize + serde::de::DeserializeOwned>(t: &mut T, k: &str, v: f64) -> Option<()> {
        let mut j = serde_json::to_value(&*t).ok()?;
        let slot = j.as_object_mut()?.get_mut(k)?;
        *slot = if slot.is_u64() { serde_json::json!(v as u64) } else { serde_json::json!(v) };
        *t = serde_json::from_value(j).ok()?;
        Some(())
    }
    if k == "family" {
        return Err(usage("--pin: the candidate family is not a scalar"));
    }
    set(constants, k, v).or_else(|| set(isocap, k, v)).ok_or_else(|| usage(format!("--pin: unknown constant `{k}`")))
}

pub fn load_atlas(args: &RunArgs) -> Result<DomainAtlas, Failure> {
    let mut atlas = match (&args.shape, &args.spec) {
        (Some(s), None) => {
            let (name, params) = parse_shape_arg(s)?;
            make_shape(&name, &params)?
        }
        (None, Some(p)) => load_spec_file(p).map_err(|e| match e {
            Error::Io(io) => usage(format!("{}: {io}", p.display())),
            e => usage(format!("{}: {e}", p.display())),
        })?,
        _ => return Err(usage("exactly one of --shape and --spec is required")),
    };
    if let Some(e) = args.eps0 {
        atlas.set_epsilon0(e)?;
    }
    Ok(atlas)
}

pub fn setup(args: &RunArgs, default_schedule: &str) -> Result<Setup, Failure> {
    let schedule = parse_schedule(args.m.as_deref().unwrap_or(default_schedule))?;
    let atlas = Arc::new(load_atlas(args)?);
    let dim = atlas.dim;
    let mut metrics = MetricsConfig::defaults(dim);
    if let Some(r) = args.chart_res {
        if r < 2 {
            return Err(usage("--chart-res must be at least 2"));
        }
        metrics.chart_res = r;
    }
    if let Some(v) = args.vol_res {
        if !(v >= 1.0) {
            return Err(usage("--vol-res must be at least 1"));
        }
        metrics.vol_res = v;
    }
    let mut constants = PinnedConstants::default();
    let mut isocap = IsocapConfig::default();
    if let Some(c) = args.cap_res {
        if c < 64 {
            return Err(usage("--cap-res must be at least 64 cells per radius"));
        }
        isocap.cap_res = c;
    }
    for p in &args.pins {
        apply_pin(p, &mut constants, &mut isocap)?;
    }
    let bumps = Arc::new(BumpFamily::build(&atlas)?);
    let mut ctx = Context::new(atlas.clone(), bumps, schedule.clone());
    ctx.metrics = metrics.clone();
    ctx.constants = constants.clone();
    ctx.isocap = isocap.clone();
    let config = RunConfig {
        shape: args.shape.clone(),
        spec: args.spec.as_ref().map(|p| p.display().to_string()),
        schedule,
        chart_res: metrics.chart_res,
        extract_res: metrics.chart_res + 1,
        epsilon0: atlas.epsilon0,
        metrics,
        constants,
        isocap,
    };
    Ok(Setup { config, ctx })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, s + "\n")?;
    Ok(())
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("LIPSMOOTH_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| usage(format!("LIPSMOOTH_THREADS: `{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

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
    let result = init_threads().and_then(|()| match cli.command {
        Command::Approximate(a) => approximate::run(&a),
        Command::Verify(v) => verify::run(&v.run, v.only.as_deref()),
        Command::Capacity(c) => capacity::run(&c.run, c.r.as_deref(), c.self_test),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
