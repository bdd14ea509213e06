//! Command-line front end: option parsing, CSV trace output and the run
//! summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgGroup, Parser, ValueEnum};
use thiserror::Error;

use crate::sim::engine::{NetworkSource, ScenarioConfig, SimError, Simulation, Trace};
use crate::sim::loss::{LossPolicy, LossTarget};
use crate::sim::summary::{Summary, SummaryError};

pub const CSV_HEADER: &str =
    "iter,link,price,user,rate,h_actual,h_estimated,delta_h,w,w_x,loss,objective";

/// Periods swept by `--sweep`.
pub const SWEEP_PERIODS: [u64; 6] = [50, 40, 30, 20, 10, 5];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Args(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("topology file {0} does not exist")]
    MissingTopology(PathBuf),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Summary(#[from] SummaryError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("trace is empty")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterRange(pub u64, pub u64);

impl FromStr for IterRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected A:B, got `{s}`"))?;
        let a: u64 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad range start `{a}`"))?;
        let b: u64 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad range end `{b}`"))?;
        if a > b {
            return Err(format!("range {a}:{b} is inverted"));
        }
        Ok(IterRange(a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Notify,
    Response,
    Random,
}

impl From<TargetArg> for LossTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Notify => LossTarget::Notification,
            TargetArg::Response => LossTarget::Response,
            TargetArg::Random => LossTarget::Random,
        }
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("probability {p} is outside [0, 1]"))
    }
}

fn period(s: &str) -> Result<u64, String> {
    match s.parse::<u64>() {
        Ok(0) => Err("loss period must be >= 1".into()),
        Ok(k) => Ok(k),
        Err(_) => Err(format!("`{s}` is not a positive integer")),
    }
}

/// Simulate price-based congestion control with lossy control messages.
#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "numsim", version)]
#[command(group(ArgGroup::new("network").required(true).args(["scenario", "topology"])))]
#[command(group(ArgGroup::new("loss").multiple(false).args(["loss_every", "loss_range", "loss_prob"])))]
pub struct RunOptions {
    /// Built-in topology: single-link or parking-lot.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Topology file (one `link`/`user` declaration per line).
    #[arg(long)]
    pub topology: Option<PathBuf>,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub iterations: u64,
    #[arg(long, env = "NUMSIM_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Initial step size; the schedule is sigma0 / (t + 1).
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    /// Price floor.
    #[arg(long, default_value_t = 0.0)]
    pub lambda_min: f64,
    /// Drop control messages every K-th iteration.
    #[arg(long, value_name = "K", value_parser = period)]
    pub loss_every: Option<u64>,
    /// Drop control messages at every iteration in A..=B.
    #[arg(long, value_name = "A:B")]
    pub loss_range: Option<IterRange>,
    /// Drop control messages with probability P each iteration.
    #[arg(long, value_name = "P", value_parser = probability)]
    pub loss_prob: Option<f64>,
    /// Which messages a loss hits.
    #[arg(long, value_enum, default_value_t = TargetArg::Random)]
    pub loss_target: TargetArg,
    /// Correction window length in iterations (default: last RTT).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub gamma: Option<u64>,
    /// Feed predictions back into the estimator during losses.
    #[arg(long)]
    pub feed_estimates: bool,
    /// Slack added to every measured RTT.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon_rtt: f64,
    /// Half-width of uniform noise on measured intervals.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// CSV trace destination (stdout when omitted and --summary is off).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Print a human-readable summary.
    #[arg(long)]
    pub summary: bool,
    /// Dump every frame as lowercase hex on stderr.
    #[arg(long)]
    pub hex_frames: bool,
    /// Run every periodic loss rate in 50,40,30,20,10,5 concurrently; needs --out.
    #[arg(long, conflicts_with = "loss")]
    pub sweep: bool,
}

pub fn parse_args<I, T>(argv: I) -> Result<RunOptions, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let opts = RunOptions::try_parse_from(argv)?;
    if let Some(path) = &opts.topology {
        if !path.exists() {
            return Err(CliError::MissingTopology(path.clone()));
        }
    }
    if opts.sweep && opts.out.is_none() {
        return Err(CliError::Args("--sweep needs --out".into()));
    }
    Ok(opts)
}

impl RunOptions {
    pub fn loss_policy(&self) -> LossPolicy {
        let policy = if let Some(k) = self.loss_every {
            LossPolicy::periodic(k)
        } else if let Some(IterRange(a, b)) = self.loss_range {
            LossPolicy::range(a, b)
        } else if let Some(p) = self.loss_prob {
            LossPolicy::bernoulli(p)
        } else {
            LossPolicy::none()
        };
        policy.with_target(self.loss_target.into())
    }

    pub fn config(&self) -> ScenarioConfig {
        let source = match (&self.scenario, &self.topology) {
            (Some(name), _) => NetworkSource::Builtin(name.clone()),
            (None, Some(path)) => NetworkSource::File(path.clone()),
            (None, None) => unreachable!("clap enforces one network source"),
        };
        let mut cfg = ScenarioConfig::new(source);
        cfg.iterations = self.iterations;
        cfg.seed = self.seed;
        cfg.sigma0 = self.sigma0;
        cfg.lambda_min = self.lambda_min;
        cfg.loss = self.loss_policy();
        cfg.gamma = self.gamma;
        cfg.feed_estimates = self.feed_estimates;
        cfg.epsilon_rtt = self.epsilon_rtt;
        cfg.noise_eps = self.noise;
        cfg.capture_frames = self.hex_frames;
        cfg
    }

    /// One line per option, echoed at the top of the summary.
    pub fn describe(&self) -> String {
        let network = match (&self.scenario, &self.topology) {
            (Some(name), _) => format!("scenario {name}"),
            (None, Some(p)) => format!("topology {}", p.display()),
            (None, None) => String::new(),
        };
        let mut s = String::new();
        let _ = writeln!(s, "network: {network}");
        let _ = writeln!(
            s,
            "iterations: {}  seed: {}  sigma0: {}  lambda_min: {}",
            self.iterations, self.seed, self.sigma0, self.lambda_min
        );
        let _ = writeln!(
            s,
            "loss: {}  gamma: {}  feed-estimates: {}",
            self.loss_policy(),
            self.gamma.map_or("auto".to_string(), |g| g.to_string()),
            self.feed_estimates
        );
        let _ = writeln!(
            s,
            "epsilon-rtt: {}  noise: {}  hex-frames: {}",
            self.epsilon_rtt, self.noise, self.hex_frames
        );
        let _ = writeln!(
            s,
            "out: {}",
            self.out
                .as_ref()
                .map_or("-".to_string(), |p| p.display().to_string())
        );
        s
    }
}

/// `%.9g`-style rendering: nine significant digits, trailing zeros trimmed.
pub fn fmt_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!(
            "{}e{}{:02}",
            trim_zeros(mantissa.to_string()),
            if exp < 0 { '-' } else { '+' },
            exp.abs()
        )
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_sig9).unwrap_or_default()
}

/// Writes one CSV row per (iteration, user); link columns refer to the
/// user's bottleneck link.
pub fn write_trace_to<W: Write>(trace: &Trace, out: &mut W) -> io::Result<()> {
    let net = &trace.network;
    writeln!(out, "{CSV_HEADER}")?;
    for rec in &trace.records {
        for (u, user) in net.users().iter().enumerate() {
            let l = net.bottleneck_link(u);
            let link = &rec.links[l];
            let ur = &rec.users[u];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                rec.t,
                net.links()[l].id,
                fmt_sig9(link.price),
                user.id,
                fmt_sig9(ur.rate),
                fmt_sig9(link.h_actual),
                opt(link.h_estimated),
                opt(link.delta_h()),
                opt(link.w),
                opt(ur.w_x),
                u8::from(rec.loss.is_some()),
                fmt_sig9(rec.objective),
            )?;
        }
    }
    Ok(())
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<(), CliError> {
    if trace.records.is_empty() {
        return Err(CliError::EmptyTrace);
    }
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_trace_to(trace, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn format_summary(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "iterations: {}", summary.iterations);
    let _ = writeln!(
        s,
        "convergence: {}",
        summary
            .convergence_iteration
            .map_or("not reached".to_string(), |t| format!("iteration {t}"))
    );
    let prices: Vec<String> = summary
        .final_prices
        .iter()
        .map(|(id, p)| format!("{id}={p:.6}"))
        .collect();
    let _ = writeln!(s, "final prices: {}", prices.join(" "));
    let rates: Vec<String> = summary
        .final_rates
        .iter()
        .map(|(id, x)| format!("{id}={x:.3}"))
        .collect();
    let _ = writeln!(s, "final rates: {}", rates.join(" "));
    let total: f64 = summary.final_rates.iter().map(|r| r.1).sum();
    let _ = writeln!(s, "total rate: {total:.3}");
    let _ = writeln!(s, "objective: {:.6}", summary.final_objective);
    let _ = writeln!(s, "tracked link: {}", summary.tracked_link);
    match summary.w_endpoints {
        Some((first, last)) => {
            let _ = writeln!(s, "w: first {} last {}", fmt_sig9(first), fmt_sig9(last));
        }
        None => {
            let _ = writeln!(s, "w: n/a");
        }
    }
    let _ = writeln!(s, "loss iterations: {}", summary.loss_iterations);
    match &summary.estimation {
        Some(e) => {
            let _ = writeln!(
                s,
                "estimation: max {} mean {}",
                fmt_sig9(e.max),
                fmt_sig9(e.mean)
            );
        }
        None => {
            let _ = writeln!(s, "estimation: n/a");
        }
    }
    s
}

pub fn print_summary<W: Write>(
    summary: &Summary,
    opts: &RunOptions,
    out: &mut W,
) -> io::Result<()> {
    write!(out, "{}", opts.describe())?;
    write!(out, "{}", format_summary(summary))
}

/// Runs a simulation, streaming frames to `frames` when requested.
pub fn simulate<E: Write>(cfg: &ScenarioConfig, frames: &mut E) -> Result<Trace, CliError> {
    let mut sim = Simulation::new(cfg.clone())?;
    let mut records = Vec::with_capacity(cfg.iterations as usize);
    for _ in 0..cfg.iterations {
        let rec = sim.step()?;
        for frame in sim.take_frames() {
            writeln!(frames, "t={} {frame}", rec.t).map_err(|source| CliError::Io {
                path: "stderr".into(),
                source,
            })?;
        }
        records.push(rec);
    }
    Ok(Trace {
        final_prices: sim.prices().to_vec(),
        network: sim.network().clone(),
        records,
    })
}

fn sweep_path(out: &Path, k: u64) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = out
        .extension()
        .map(|e| e.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}-k{k}.{ext}"))
}

/// Entry point behind the binary.
pub fn run<W: Write, E: Write>(
    opts: &RunOptions,
    stdout: &mut W,
    stderr: &mut E,
) -> Result<(), CliError> {
    let out_err = |source| CliError::Io {
        path: "stdout".into(),
        source,
    };
    if opts.sweep {
        let out = opts.out.as_ref().expect("validated by parse_args");
        let results: Vec<(u64, Result<Summary, CliError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = SWEEP_PERIODS
                .iter()
                .map(|&k| {
                    let mut o = opts.clone();
                    o.loss_every = Some(k);
                    o.hex_frames = false;
                    let path = sweep_path(out, k);
                    scope.spawn(move || {
                        let trace = simulate(&o.config(), &mut io::sink())?;
                        write_trace(&trace, &path)?;
                        Ok(Summary::from_trace(&trace)?)
                    })
                })
                .collect();
            SWEEP_PERIODS
                .iter()
                .zip(handles)
                .map(|(&k, h)| (k, h.join().expect("sweep worker panicked")))
                .collect()
        });
        for (k, res) in results {
            let summary = res?;
            if opts.summary {
                writeln!(
                    stdout,
                    "== loss every {k} -> {}",
                    sweep_path(out, k).display()
                )
                .map_err(out_err)?;
                write!(stdout, "{}", format_summary(&summary)).map_err(out_err)?;
            }
        }
        return Ok(());
    }

    let trace = simulate(&opts.config(), stderr)?;
    match &opts.out {
        Some(path) => write_trace(&trace, path)?,
        None if !opts.summary => write_trace_to(&trace, stdout).map_err(out_err)?,
        None => {}
    }
    if opts.summary {
        let summary = Summary::from_trace(&trace)?;
        print_summary(&summary, opts, stdout).map_err(out_err)?;
    }
    Ok(())
}
