//! Command-line entry point.
//!
//! Values resolve in three layers: command-line flags, then the `--config`
//! file, then built-in defaults. Errors print as one line
//! `error: <code>: <detail>`; validation problems exit with 2, runtime
//! failures with 1.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::estimator::{estimate_all_with, EstimationResult, EstimatorOptions};
use crate::exact_moments::{build_joint_chain, mean_s, second_moment_s};
use crate::experiments::{
    export_summary, ks_two_sample, m3_comparison, read_sample_csv, run_replications, summary_kv,
    write_sample_csv, KsResult, M3Sample, ReplicationConfig,
};
use crate::kv::KvMap;
use crate::model::{validate_params, Link, ModelParams, RawParams};
use crate::numfmt::fmt_sig;
use crate::simulator::{default_burn_in, simulate, ObservationSeries, RandomSource};

pub const DEFAULT_K: usize = 10_000;
pub const DEFAULT_L: usize = 100;
pub const DEFAULT_SEED: u64 = 1;
pub const FULL_K: usize = 100_000;
pub const FULL_L_REPLICATE: usize = 1000;
pub const FULL_L_COMPARE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Simulate,
    ExactMoments,
    Estimate,
    Replicate,
    CompareM3,
    KsTest,
}

impl CommandKind {
    pub const ALL: [CommandKind; 6] = [
        CommandKind::Simulate,
        CommandKind::ExactMoments,
        CommandKind::Estimate,
        CommandKind::Replicate,
        CommandKind::CompareM3,
        CommandKind::KsTest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Simulate => "simulate",
            CommandKind::ExactMoments => "exact-moments",
            CommandKind::Estimate => "estimate",
            CommandKind::Replicate => "replicate",
            CommandKind::CompareM3 => "compare-m3",
            CommandKind::KsTest => "ks-test",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CommandKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown command `{s}`")))
    }
}

/// Every setting a subcommand may read. Unset fields fall back to defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    /// Second vertex-update probability for `compare-m3`.
    pub alpha_high: Option<f64>,
    pub pi_plus: Option<f64>,
    pub pi_minus: Option<f64>,
    pub link: Option<Link>,
    /// Link of the second `compare-m3` configuration; defaults to `link`.
    pub link_high: Option<Link>,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub full_scale: Option<bool>,
    pub grid_step: Option<f64>,
    pub tol: Option<f64>,
    pub input: Option<PathBuf>,
    pub input_b: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub dump_chain: Option<PathBuf>,
    pub with_n: Option<bool>,
    pub csv: Option<bool>,
}

macro_rules! config_fields {
    ($m:ident) => {
        $m!(
            n, alpha, alpha_high, pi_plus, pi_minus, link, link_high, k, l, burn_in, seed, threads,
            full_scale, grid_step, tol, with_n, csv
        )
    };
}

macro_rules! path_fields {
    ($m:ident) => {
        $m!(input, input_b, out, out_dir, dump_chain)
    };
}

impl RunConfig {
    /// Serializes set fields as `key = value` lines. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        if let Some(c) = self.command {
            kv.insert("command", c.as_str());
        }
        macro_rules! put {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    kv.insert(stringify!($f), v.to_string());
                }
            )*};
        }
        config_fields!(put);
        macro_rules! put_path {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    kv.insert(stringify!($f), v.to_string_lossy().into_owned());
                }
            )*};
        }
        path_fields!(put_path);
        kv
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self, Error> {
        let mut cfg = RunConfig {
            command: kv.get_parsed("command")?,
            ..Default::default()
        };
        macro_rules! get {
            ($($f:ident),*) => {$( cfg.$f = kv.get_parsed(stringify!($f))?; )*};
        }
        config_fields!(get);
        macro_rules! get_path {
            ($($f:ident),*) => {$( cfg.$f = kv.get(stringify!($f)).map(PathBuf::from); )*};
        }
        path_fields!(get_path);
        let known = cfg.to_kv();
        if let Some(extra) = kv.keys().find(|k| known.get(k).is_none()) {
            return Err(Error::Parse(format!("unknown config key `{extra}`")));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::from_kv(&KvMap::parse(&fs::read_to_string(path)?)?)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: RunConfig) -> Self {
        if over.command.is_some() {
            self.command = over.command;
        }
        macro_rules! take {
            ($($f:ident),*) => {$( if over.$f.is_some() { self.$f = over.$f; } )*};
        }
        config_fields!(take);
        path_fields!(take);
        self
    }

    fn require<T: Copy>(value: Option<T>, flag: &'static str) -> Result<T, Failure> {
        value.ok_or_else(|| Failure::missing(flag))
    }

    pub fn model_params(&self) -> Result<ModelParams, Failure> {
        let raw = RawParams {
            n: Self::require(self.n, "--n")?,
            alpha: Self::require(self.alpha, "--alpha")?,
            pi_plus: Self::require(self.pi_plus, "--pi-plus")?,
            pi_minus: Self::require(self.pi_minus, "--pi-minus")?,
            link: Self::require(self.link, "--link")?,
        };
        Ok(validate_params(raw)?)
    }

    fn k_obs(&self, full: usize) -> Result<usize, Failure> {
        let k = self.k.unwrap_or(if self.full() { full } else { DEFAULT_K });
        if k < 1 {
            return Err(out_of_range("k", k as f64));
        }
        Ok(k)
    }

    fn l_runs(&self, full: usize) -> Result<usize, Failure> {
        let l = self.l.unwrap_or(if self.full() { full } else { DEFAULT_L });
        if l < 2 {
            return Err(out_of_range("l", l as f64));
        }
        Ok(l)
    }

    fn full(&self) -> bool {
        self.full_scale.unwrap_or(false)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn estimator_options(&self) -> Result<EstimatorOptions, Failure> {
        let mut opts = EstimatorOptions::default();
        if let Some(step) = self.grid_step {
            if !(step > 0.0 && step < 1.0) {
                return Err(out_of_range("grid_step", step));
            }
            opts.grid_step = step;
        }
        if let Some(tol) = self.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return Err(out_of_range("tol", tol));
            }
            opts.tol = tol;
        }
        Ok(opts)
    }
}

fn out_of_range(field: &'static str, value: f64) -> Failure {
    Error::OutOfRange { field, value }.into()
}

/// A reportable failure: machine-readable code, detail and exit status.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: String,
    pub detail: String,
    pub exit: i32,
}

impl Failure {
    fn validation(code: &str, detail: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            detail: detail.into(),
            exit: 2,
        }
    }

    fn missing(flag: &str) -> Self {
        Self::validation("MissingRequired", format!("{flag} is required"))
    }

    fn line(&self) -> String {
        let detail = self.detail.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: {}: {}", self.code, detail)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: e.code().to_string(),
            detail: e.to_string(),
            exit: if e.is_validation() { 2 } else { 1 },
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ipsnet",
    version,
    about = "Simulate, analyse and estimate a vertex-state-driven dynamic random graph"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as `t,S[,N]` CSV.
    Simulate(SimulateArgs),
    /// Print exact stationary moments of the edge count.
    ExactMoments(ExactArgs),
    /// Estimate parameters from a `t,S` trajectory CSV.
    Estimate(EstimateArgs),
    /// Run independent simulate-and-estimate replications.
    Replicate(ReplicateArgs),
    /// Compare squared-increment samples of two configurations.
    CompareM3(CompareArgs),
    /// Two-sample Kolmogorov-Smirnov test on single-column CSV samples.
    KsTest(KsArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Key-value configuration file; flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Number of vertices.
    #[arg(long)]
    n: Option<usize>,
    /// Vertex-update probability in (0, 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Edge probability for `++` pairs.
    #[arg(long)]
    pi_plus: Option<f64>,
    /// Edge probability for `--` pairs.
    #[arg(long)]
    pi_minus: Option<f64>,
    /// Linking function for mixed pairs: mean or harmonic.
    #[arg(long)]
    link: Option<Link>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of observations.
    #[arg(long)]
    k: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Discarded steps before the first observation.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write the number of `+` vertices.
    #[arg(long)]
    with_n: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct ExactArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Write the joint transition matrix as `row,col,value` CSV.
    #[arg(long, value_name = "FILE")]
    dump_chain: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    /// Trajectory CSV with header `t,S` or `t,S,N`.
    input: Option<PathBuf>,
    /// Number of vertices.
    #[arg(long)]
    n: Option<usize>,
    /// Linking function: mean or harmonic.
    #[arg(long)]
    link: Option<Link>,
    /// Spacing of the vertex-update probability grid.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Residual tolerance of the edge-probability fit.
    #[arg(long)]
    tol: Option<f64>,
    /// Print a CSV row instead of key-value lines.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Observations per run.
    #[arg(long)]
    k: Option<usize>,
    /// Number of runs.
    #[arg(long)]
    l: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Discarded steps before the first observation.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Directory for runs.csv, summary.csv, histogram.csv and config.txt.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Default to L = 1000 runs of K = 100000 observations.
    #[arg(long)]
    full_scale: bool,
    /// Spacing of the vertex-update probability grid.
    #[arg(long)]
    grid_step: Option<f64>,
    /// Residual tolerance of the edge-probability fit.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Number of vertices.
    #[arg(long)]
    n: Option<usize>,
    /// Vertex-update probability; give twice, once per configuration.
    #[arg(long, num_args = 1)]
    alpha: Vec<f64>,
    /// Edge probability for `++` pairs.
    #[arg(long)]
    pi_plus: Option<f64>,
    /// Edge probability for `--` pairs.
    #[arg(long)]
    pi_minus: Option<f64>,
    /// Linking function; a second occurrence sets the second configuration's link.
    #[arg(long, num_args = 1)]
    link: Vec<Link>,
    /// Observations per run.
    #[arg(long)]
    k: Option<usize>,
    /// Runs per configuration.
    #[arg(long)]
    l: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Discarded steps before the first observation.
    #[arg(long)]
    burn_in: Option<usize>,
    /// Directory for m3_low.csv and m3_high.csv.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Default to L = 500 runs of K = 100000 observations.
    #[arg(long)]
    full_scale: bool,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct KsArgs {
    /// First sample, single column with header `value`.
    sample_a: Option<PathBuf>,
    /// Second sample, single column with header `value`.
    sample_b: Option<PathBuf>,
    #[command(flatten)]
    common: CommonArgs,
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        cfg.n = self.n;
        cfg.alpha = self.alpha;
        cfg.pi_plus = self.pi_plus;
        cfg.pi_minus = self.pi_minus;
        cfg.link = self.link;
    }
}

/// Flags as a config layer, plus the config file path.
fn flags_to_config(command: Command) -> Result<(RunConfig, Option<PathBuf>), Failure> {
    let mut cfg = RunConfig::default();
    let common = match command {
        Command::Simulate(a) => {
            cfg.command = Some(CommandKind::Simulate);
            a.model.apply(&mut cfg);
            cfg.k = a.k;
            cfg.seed = a.seed;
            cfg.burn_in = a.burn_in;
            cfg.out = a.out;
            cfg.with_n = flag(a.with_n);
            a.common
        }
        Command::ExactMoments(a) => {
            cfg.command = Some(CommandKind::ExactMoments);
            a.model.apply(&mut cfg);
            cfg.dump_chain = a.dump_chain;
            a.common
        }
        Command::Estimate(a) => {
            cfg.command = Some(CommandKind::Estimate);
            cfg.input = a.input;
            cfg.n = a.n;
            cfg.link = a.link;
            cfg.grid_step = a.grid_step;
            cfg.tol = a.tol;
            cfg.csv = flag(a.csv);
            a.common
        }
        Command::Replicate(a) => {
            cfg.command = Some(CommandKind::Replicate);
            a.model.apply(&mut cfg);
            cfg.k = a.k;
            cfg.l = a.l;
            cfg.seed = a.seed;
            cfg.burn_in = a.burn_in;
            cfg.out_dir = a.out_dir;
            cfg.full_scale = flag(a.full_scale);
            cfg.grid_step = a.grid_step;
            cfg.tol = a.tol;
            a.common
        }
        Command::CompareM3(a) => {
            cfg.command = Some(CommandKind::CompareM3);
            if a.alpha.len() > 2 {
                return Err(Failure::validation(
                    "ParseError",
                    "--alpha given more than twice",
                ));
            }
            if a.link.len() > 2 {
                return Err(Failure::validation(
                    "ParseError",
                    "--link given more than twice",
                ));
            }
            cfg.n = a.n;
            cfg.alpha = a.alpha.first().copied();
            cfg.alpha_high = a.alpha.get(1).copied();
            cfg.pi_plus = a.pi_plus;
            cfg.pi_minus = a.pi_minus;
            cfg.link = a.link.first().copied();
            cfg.link_high = a.link.get(1).copied();
            cfg.k = a.k;
            cfg.l = a.l;
            cfg.seed = a.seed;
            cfg.burn_in = a.burn_in;
            cfg.out_dir = a.out_dir;
            cfg.full_scale = flag(a.full_scale);
            a.common
        }
        Command::KsTest(a) => {
            cfg.command = Some(CommandKind::KsTest);
            cfg.input = a.sample_a;
            cfg.input_b = a.sample_b;
            a.common
        }
    };
    cfg.threads = common.threads;
    Ok((cfg, common.config))
}

/// Parses `argv` (program name first) into a resolved configuration.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ParseOutcome>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(ParseOutcome::from_clap)?;
    let (flags, path) = flags_to_config(cli.command).map_err(ParseOutcome::Failed)?;
    let base = match path {
        Some(p) => RunConfig::load(&p).map_err(|e| ParseOutcome::Failed(e.into()))?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(flags))
}

/// Why parsing stopped without a runnable configuration.
#[derive(Debug)]
pub enum ParseOutcome {
    /// Help or version text requested.
    Display(String),
    Failed(Failure),
}

impl ParseOutcome {
    fn from_clap(e: clap::Error) -> Self {
        let text = e.to_string();
        let code = match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                return ParseOutcome::Display(text)
            }
            ErrorKind::UnknownArgument | ErrorKind::InvalidSubcommand => "UnknownFlag",
            ErrorKind::MissingRequiredArgument
            | ErrorKind::MissingSubcommand
            | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => "MissingRequired",
            _ => "ParseError",
        };
        let first = text.lines().next().unwrap_or_default();
        let detail = first.strip_prefix("error: ").unwrap_or(first);
        ParseOutcome::Failed(Failure::validation(code, detail))
    }
}

/// Runs the CLI, writing results to `out` and error lines to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = match parse_config(argv) {
        Ok(cfg) => execute(&cfg, out),
        Err(ParseOutcome::Display(text)) => {
            let _ = out.write_all(text.as_bytes());
            return 0;
        }
        Err(ParseOutcome::Failed(f)) => Err(f),
    };
    let _ = out.flush();
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "{}", f.line());
            f.exit
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = io::BufWriter::new(stdout.lock());
    let mut err = stderr.lock();
    run_with(argv, &mut out, &mut err)
}

/// Dispatches a resolved configuration, inside a dedicated pool when
/// `threads` is set.
pub fn execute(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    match cfg.threads {
        Some(0) => Err(out_of_range("threads", 0.0)),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Failure {
                    code: "ThreadPool".into(),
                    detail: e.to_string(),
                    exit: 1,
                })?;
            let mut buf = Vec::new();
            let result = pool.install(|| dispatch(cfg, &mut buf));
            out.write_all(&buf)?;
            result
        }
        None => dispatch(cfg, out),
    }
}

fn dispatch(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    match cfg.command {
        Some(CommandKind::Simulate) => cmd_simulate(cfg, out),
        Some(CommandKind::ExactMoments) => cmd_exact(cfg, out),
        Some(CommandKind::Estimate) => cmd_estimate(cfg, out),
        Some(CommandKind::Replicate) => cmd_replicate(cfg, out),
        Some(CommandKind::CompareM3) => cmd_compare(cfg, out),
        Some(CommandKind::KsTest) => cmd_ks(cfg, out),
        None => Err(Failure::missing("subcommand")),
    }
}

fn line(out: &mut dyn Write, key: &str, value: impl fmt::Display) -> Result<(), Failure> {
    writeln!(out, "{key} = {value}")?;
    Ok(())
}

fn echo_params(out: &mut dyn Write, p: &ModelParams) -> Result<(), Failure> {
    line(out, "n", p.n())?;
    line(out, "alpha", fmt_sig(p.alpha()))?;
    line(out, "pi_plus", fmt_sig(p.pi_plus()))?;
    line(out, "pi_minus", fmt_sig(p.pi_minus()))?;
    line(out, "link", p.link())
}

fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let params = cfg.model_params()?;
    let k = cfg.k_obs(DEFAULT_K)?;
    let burn = cfg
        .burn_in
        .unwrap_or_else(|| default_burn_in(params.n(), params.alpha()));
    let mut rng = RandomSource::from_seed(cfg.seed());
    let series = simulate(&params, k, burn, &mut rng)?;
    let with_n = cfg.with_n.unwrap_or(false);
    match &cfg.out {
        Some(path) => {
            let mut file = io::BufWriter::new(fs::File::create(path)?);
            series.write_csv(&mut file, with_n)?;
            file.flush()?;
        }
        None => series.write_csv(out, with_n)?,
    }
    Ok(())
}

fn cmd_exact(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let params = cfg.model_params()?;
    let m1 = mean_s(&params);
    let m2 = second_moment_s(&params);
    line(out, "m1", fmt_sig(m1))?;
    line(out, "m2", fmt_sig(m2))?;
    let chain = build_joint_chain(&params)?;
    let cross1 = chain.cross_moment(1)?;
    line(out, "cross1", fmt_sig(cross1))?;
    line(out, "m3", fmt_sig(2.0 * m2 - 2.0 * cross1))?;
    if let Some(path) = &cfg.dump_chain {
        let mut file = io::BufWriter::new(fs::File::create(path)?);
        chain.write_csv(&mut file)?;
        file.flush()?;
    }
    Ok(())
}

fn estimation_lines(out: &mut dyn Write, r: &EstimationResult, csv: bool) -> Result<(), Failure> {
    if csv {
        writeln!(
            out,
            "pi_plus_hat,pi_minus_hat,alpha_hat,residual1,residual2,flags"
        )?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(r.pi_plus_hat),
            fmt_sig(r.pi_minus_hat),
            fmt_sig(r.alpha_hat),
            fmt_sig(r.residual_stage1),
            fmt_sig(r.residual_stage2),
            r.flags
        )?;
        return Ok(());
    }
    line(out, "pi_plus_hat", fmt_sig(r.pi_plus_hat))?;
    line(out, "pi_minus_hat", fmt_sig(r.pi_minus_hat))?;
    line(out, "alpha_hat", fmt_sig(r.alpha_hat))?;
    line(out, "residual1", fmt_sig(r.residual_stage1))?;
    line(out, "residual2", fmt_sig(r.residual_stage2))?;
    line(out, "stage1_evals", r.stage1_evals)?;
    line(out, "stage2_evals", r.stage2_evals)?;
    line(out, "flags", &r.flags)
}

fn cmd_estimate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let path = cfg
        .input
        .as_ref()
        .ok_or_else(|| Failure::missing("<INPUT>"))?;
    let n = RunConfig::require(cfg.n, "--n")?;
    if n < 2 {
        return Err(out_of_range("n", n as f64));
    }
    let link = RunConfig::require(cfg.link, "--link")?;
    let opts = cfg.estimator_options()?;
    let series = ObservationSeries::read_csv(BufReader::new(fs::File::open(path)?))?;
    let result = estimate_all_with(&series, n, link, &opts)?;
    estimation_lines(out, &result, cfg.csv.unwrap_or(false))
}

fn cmd_replicate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let params = cfg.model_params()?;
    let mut rc = ReplicationConfig::new(
        params,
        cfg.k_obs(FULL_K)?,
        cfg.l_runs(FULL_L_REPLICATE)?,
        cfg.seed(),
    );
    rc.burn_in = cfg.burn_in;
    rc.estimator = cfg.estimator_options()?;
    let summary = run_replications(rc)?;
    echo_params(out, &params)?;
    line(out, "k", summary.config.k_obs)?;
    line(out, "l", summary.config.l_runs)?;
    line(out, "seed", summary.config.root_seed)?;
    line(out, "burn_in", summary.config.burn_in())?;
    out.write_all(summary_kv(&summary).to_text().as_bytes())?;
    if let Some(dir) = &cfg.out_dir {
        export_summary(&summary, dir)?;
    }
    Ok(())
}

fn m3_lines(out: &mut dyn Write, tag: &str, s: &M3Sample) -> Result<(), Failure> {
    line(out, &format!("alpha_{tag}"), fmt_sig(s.params.alpha()))?;
    line(out, &format!("link_{tag}"), s.params.link())?;
    line(out, &format!("m3_mean_{tag}"), fmt_sig(s.stats.mean))?;
    line(
        out,
        &format!("m3_variance_{tag}"),
        fmt_sig(s.stats.variance),
    )?;
    let exact = s.exact.map_or_else(|| "unavailable".to_string(), fmt_sig);
    line(out, &format!("m3_exact_{tag}"), exact)
}

fn ks_lines(out: &mut dyn Write, prefix: &str, ks: &KsResult) -> Result<(), Failure> {
    line(
        out,
        &format!("{prefix}d_statistic"),
        fmt_sig(ks.d_statistic),
    )?;
    line(out, &format!("{prefix}p_value"), fmt_sig(ks.p_value))?;
    line(out, &format!("{prefix}n1"), ks.n1)?;
    line(out, &format!("{prefix}n2"), ks.n2)?;
    line(out, &format!("{prefix}reject_at_005"), ks.reject_at_005)
}

fn cmd_compare(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let low = cfg.model_params()?;
    let high_cfg = RunConfig {
        alpha: Some(RunConfig::require(cfg.alpha_high, "a second --alpha")?),
        link: cfg.link_high.or(cfg.link),
        ..cfg.clone()
    };
    let high = high_cfg.model_params()?;
    let k = cfg.k_obs(FULL_K)?;
    let l = cfg.l_runs(FULL_L_COMPARE)?;
    let cmp = m3_comparison(&low, &high, k, l, cfg.burn_in, cfg.seed())?;
    line(out, "n", low.n())?;
    line(out, "pi_plus", fmt_sig(low.pi_plus()))?;
    line(out, "pi_minus", fmt_sig(low.pi_minus()))?;
    line(out, "k", k)?;
    line(out, "l", l)?;
    line(out, "seed", cfg.seed())?;
    m3_lines(out, "low", &cmp.low)?;
    m3_lines(out, "high", &cmp.high)?;
    ks_lines(out, "ks_", &cmp.ks)?;
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
        for (name, s) in [("m3_low.csv", &cmp.low), ("m3_high.csv", &cmp.high)] {
            let mut file = io::BufWriter::new(fs::File::create(dir.join(name))?);
            write_sample_csv(&mut file, &s.values)?;
            file.flush()?;
        }
    }
    Ok(())
}

fn cmd_ks(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let a = cfg
        .input
        .as_ref()
        .ok_or_else(|| Failure::missing("<SAMPLE_A>"))?;
    let b = cfg
        .input_b
        .as_ref()
        .ok_or_else(|| Failure::missing("<SAMPLE_B>"))?;
    let ks = ks_two_sample(&read_sample_csv(a)?, &read_sample_csv(b)?)?;
    ks_lines(out, "", &ks)
}
