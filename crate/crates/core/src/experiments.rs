//! Replication harness: many independent simulate-then-estimate runs, the
//! squared-increment comparison across configurations, and a two-sample
//! Kolmogorov-Smirnov test.
//!
//! Every run draws from its own stream of the root seed, and results are
//! collected by run index before reduction, so summaries do not depend on
//! scheduling.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{empirical_moments, estimate_all_with, EstimationResult, EstimatorOptions};
use crate::exact_moments::expected_squared_increment;
use crate::kv::KvMap;
use crate::model::ModelParams;
use crate::numfmt::fmt_sig;
use crate::simulator::{default_burn_in, simulate, RandomSource};
use crate::stats::{mean, sample_variance};

pub const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationConfig {
    pub params: ModelParams,
    pub k_obs: usize,
    pub l_runs: usize,
    pub root_seed: u64,
    /// `None` selects [`default_burn_in`].
    pub burn_in: Option<usize>,
    pub estimator: EstimatorOptions,
}

impl ReplicationConfig {
    pub fn new(params: ModelParams, k_obs: usize, l_runs: usize, root_seed: u64) -> Self {
        Self {
            params,
            k_obs,
            l_runs,
            root_seed,
            burn_in: None,
            estimator: EstimatorOptions::default(),
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
            .unwrap_or_else(|| default_burn_in(self.params.n(), self.params.alpha()))
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Estimated(EstimationResult),
    /// Estimation failed; holds the error code and message.
    Failed {
        code: String,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamStats {
    pub mean: f64,
    /// Sample variance with divisor `L - 1`.
    pub variance: f64,
}

impl ParamStats {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            variance: sample_variance(xs),
        }
    }

    /// Standard error of the mean.
    pub fn standard_error(&self, count: usize) -> f64 {
        (self.variance / count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub config: ReplicationConfig,
    pub runs: Vec<RunOutcome>,
    /// Estimates from successful runs, in run order.
    pub pi_plus: Vec<f64>,
    pub pi_minus: Vec<f64>,
    pub alpha: Vec<f64>,
    pub pi_plus_stats: ParamStats,
    pub pi_minus_stats: ParamStats,
    pub alpha_stats: ParamStats,
    /// Runs excluded because estimation failed.
    pub failed: usize,
    /// Successful runs that carry at least one diagnostic flag.
    pub flagged: usize,
}

fn run_once(config: &ReplicationConfig, run: usize) -> RunOutcome {
    let mut rng = RandomSource::derived(config.root_seed, run as u64);
    let result =
        simulate(&config.params, config.k_obs, config.burn_in(), &mut rng).and_then(|series| {
            estimate_all_with(
                &series,
                config.params.n(),
                config.params.link(),
                &config.estimator,
            )
        });
    match result {
        Ok(r) => RunOutcome::Estimated(r),
        Err(e) => RunOutcome::Failed {
            code: e.code().to_string(),
            detail: e.to_string(),
        },
    }
}

pub fn summarize(config: ReplicationConfig, runs: Vec<RunOutcome>) -> ReplicationSummary {
    let mut pi_plus = Vec::new();
    let mut pi_minus = Vec::new();
    let mut alpha = Vec::new();
    let mut failed = 0;
    let mut flagged = 0;
    for run in &runs {
        match run {
            RunOutcome::Estimated(r) => {
                pi_plus.push(r.pi_plus_hat);
                pi_minus.push(r.pi_minus_hat);
                alpha.push(r.alpha_hat);
                flagged += (!r.flags.is_empty()) as usize;
            }
            RunOutcome::Failed { .. } => failed += 1,
        }
    }
    ReplicationSummary {
        pi_plus_stats: ParamStats::of(&pi_plus),
        pi_minus_stats: ParamStats::of(&pi_minus),
        alpha_stats: ParamStats::of(&alpha),
        config,
        runs,
        pi_plus,
        pi_minus,
        alpha,
        failed,
        flagged,
    }
}

/// `L` independent simulate-and-estimate runs.
pub fn run_replications(config: ReplicationConfig) -> Result<ReplicationSummary> {
    if config.l_runs < 2 {
        return Err(Error::OutOfRange {
            field: "l",
            value: config.l_runs as f64,
        });
    }
    if config.k_obs < 2 {
        return Err(Error::OutOfRange {
            field: "k",
            value: config.k_obs as f64,
        });
    }
    let runs: Vec<RunOutcome> = (0..config.l_runs)
        .into_par_iter()
        .map(|r| run_once(&config, r))
        .collect();
    Ok(summarize(config, runs))
}

/// `l_runs` values of the empirical squared-increment moment, one per
/// independent run, drawn from streams `stream_base + r` of `root_seed`.
pub fn m3_sample(
    params: &ModelParams,
    k_obs: usize,
    l_runs: usize,
    burn_in: Option<usize>,
    root_seed: u64,
    stream_base: u64,
) -> Result<Vec<f64>> {
    let burn = burn_in.unwrap_or_else(|| default_burn_in(params.n(), params.alpha()));
    (0..l_runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomSource::derived(root_seed, stream_base + r as u64);
            let series = simulate(params, k_obs, burn, &mut rng)?;
            Ok(empirical_moments(&series)?.m3k)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct M3Sample {
    pub params: ModelParams,
    pub values: Vec<f64>,
    pub stats: ParamStats,
    /// Stationary `E[(S(t+1) - S(t))^2]`, absent when the joint chain is
    /// reducible or too large.
    pub exact: Option<f64>,
}

impl M3Sample {
    fn new(params: ModelParams, values: Vec<f64>) -> Self {
        Self {
            stats: ParamStats::of(&values),
            exact: expected_squared_increment(&params).ok(),
            params,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct M3Comparison {
    pub low: M3Sample,
    pub high: M3Sample,
    pub ks: KsResult,
}

/// Stream offset separating the two configurations of a comparison.
const SECOND_CONFIG_STREAM: u64 = 1 << 32;

pub fn m3_comparison(
    params_low: &ModelParams,
    params_high: &ModelParams,
    k_obs: usize,
    l_runs: usize,
    burn_in: Option<usize>,
    root_seed: u64,
) -> Result<M3Comparison> {
    let low = m3_sample(params_low, k_obs, l_runs, burn_in, root_seed, 0)?;
    let high = m3_sample(
        params_high,
        k_obs,
        l_runs,
        burn_in,
        root_seed,
        SECOND_CONFIG_STREAM,
    )?;
    let ks = ks_two_sample(&low, &high)?;
    Ok(M3Comparison {
        low: M3Sample::new(*params_low, low),
        high: M3Sample::new(*params_high, high),
        ks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d_statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub reject_at_005: bool,
}

/// Asymptotic Kolmogorov survival function
/// `Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let l2 = -2.0 * lambda * lambda;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100_000u32 {
        let term = (l2 * (j as f64).powi(2)).exp();
        sum += sign * term;
        if term < 1e-10 {
            return (2.0 * sum).clamp(0.0, 1.0);
        }
        sign = -sign;
    }
    // series failed to settle: lambda is tiny and the distributions are indistinguishable
    1.0
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (effective size `n1 n2 / (n1 + n2)`, small-sample correction
/// `sqrt(ne) + 0.12 + 0.11 / sqrt(ne)`).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n1, n2) = (xs.len(), ys.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let x = xs[i].min(ys[j]);
        while i < n1 && xs[i] <= x {
            i += 1;
        }
        while j < n2 && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let ne = (n1 * n2) as f64 / (n1 + n2) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let p_value = kolmogorov_q(lambda);
    Ok(KsResult {
        d_statistic: d,
        p_value,
        n1,
        n2,
        reject_at_005: p_value < 0.05,
    })
}

/// Paths written by [`export_summary`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub runs: PathBuf,
    pub summary: PathBuf,
    pub histogram: PathBuf,
    pub config: PathBuf,
}

/// Equal-width bin counts over `[min, max]`; the maximum lands in the last bin.
pub fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    if xs.is_empty() {
        return Vec::new();
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        let mut out = vec![(lo, hi, 0); bins];
        out[0].2 = xs.len();
        return out;
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<(f64, f64, usize)> = (0..bins)
        .map(|b| (lo + b as f64 * width, lo + (b + 1) as f64 * width, 0))
        .collect();
    out[bins - 1].1 = hi;
    for &x in xs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        out[b].2 += 1;
    }
    out
}

/// Writes `runs.csv`, `summary.csv`, `histogram.csv` and `config.txt` into `dir`.
pub fn export_summary(summary: &ReplicationSummary, dir: &Path) -> Result<ExportPaths> {
    fs::create_dir_all(dir)?;
    let paths = ExportPaths {
        runs: dir.join("runs.csv"),
        summary: dir.join("summary.csv"),
        histogram: dir.join("histogram.csv"),
        config: dir.join("config.txt"),
    };

    let mut out = BufWriter::new(fs::File::create(&paths.runs)?);
    writeln!(out, "run,pi_plus_hat,pi_minus_hat,alpha_hat,flags")?;
    for (r, run) in summary.runs.iter().enumerate() {
        match run {
            RunOutcome::Estimated(e) => writeln!(
                out,
                "{},{},{},{},{}",
                r + 1,
                fmt_sig(e.pi_plus_hat),
                fmt_sig(e.pi_minus_hat),
                fmt_sig(e.alpha_hat),
                e.flags
            )?,
            RunOutcome::Failed { code, .. } => writeln!(out, "{},NaN,NaN,NaN,error:{code}", r + 1)?,
        }
    }
    out.flush()?;

    let named = [
        ("pi_plus", &summary.pi_plus, summary.pi_plus_stats),
        ("pi_minus", &summary.pi_minus, summary.pi_minus_stats),
        ("alpha", &summary.alpha, summary.alpha_stats),
    ];

    let mut out = BufWriter::new(fs::File::create(&paths.summary)?);
    writeln!(out, "parameter,mean,variance")?;
    for (name, _, stats) in &named {
        writeln!(
            out,
            "{name},{},{}",
            fmt_sig(stats.mean),
            fmt_sig(stats.variance)
        )?;
    }
    out.flush()?;

    let mut out = BufWriter::new(fs::File::create(&paths.histogram)?);
    writeln!(out, "parameter,bin,lower,upper,count")?;
    for (name, values, _) in &named {
        for (b, (lo, hi, count)) in histogram(values, HISTOGRAM_BINS).into_iter().enumerate() {
            writeln!(out, "{name},{b},{},{},{count}", fmt_sig(lo), fmt_sig(hi))?;
        }
    }
    out.flush()?;

    let cfg = &summary.config;
    let mut kv = cfg.params.to_kv();
    kv.insert("k", cfg.k_obs.to_string());
    kv.insert("l", cfg.l_runs.to_string());
    kv.insert("seed", cfg.root_seed.to_string());
    kv.insert("burn_in", cfg.burn_in().to_string());
    kv.insert("failed_runs", summary.failed.to_string());
    kv.insert("flagged_runs", summary.flagged.to_string());
    fs::write(&paths.config, kv.to_text())?;
    Ok(paths)
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run: usize,
    pub pi_plus_hat: f64,
    pub pi_minus_hat: f64,
    pub alpha_hat: f64,
    pub flags: String,
}

impl RunRow {
    pub fn failed(&self) -> bool {
        self.flags.starts_with("error:")
    }
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in file.lines().enumerate().skip(1) {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("{}: malformed line {}", path.display(), lineno + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(RunRow {
            run: f[0].parse().map_err(|_| bad())?,
            pi_plus_hat: num(f[1])?,
            pi_minus_hat: num(f[2])?,
            alpha_hat: num(f[3])?,
            flags: f[4].to_string(),
        });
    }
    Ok(rows)
}

/// Reads a single-column sample file with header `value`.
pub fn read_sample_csv(path: &Path) -> Result<Vec<f64>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut lines = file.lines();
    match lines.next().transpose()? {
        Some(h) if h.trim() == "value" => {}
        _ => {
            return Err(Error::Parse(format!(
                "{}: expected header `value`",
                path.display()
            )))
        }
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        let v = line.trim();
        if v.is_empty() {
            continue;
        }
        out.push(
            v.parse()
                .map_err(|_| Error::Parse(format!("{}: bad value `{v}`", path.display())))?,
        );
    }
    Ok(out)
}

pub fn write_sample_csv<W: Write>(mut out: W, values: &[f64]) -> Result<()> {
    writeln!(out, "value")?;
    for v in values {
        writeln!(out, "{}", fmt_sig(*v))?;
    }
    Ok(())
}

/// Summary key/value lines shared by the CLI and `config.txt`.
pub fn summary_kv(summary: &ReplicationSummary) -> KvMap {
    let mut kv = KvMap::new();
    for (name, stats) in [
        ("pi_plus", summary.pi_plus_stats),
        ("pi_minus", summary.pi_minus_stats),
        ("alpha", summary.alpha_stats),
    ] {
        kv.insert(format!("{name}_mean"), fmt_sig(stats.mean));
        kv.insert(format!("{name}_variance"), fmt_sig(stats.variance));
    }
    kv.insert("runs", summary.runs.len().to_string());
    kv.insert("failed_runs", summary.failed.to_string());
    kv.insert("flagged_runs", summary.flagged.to_string());
    kv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{Flag, Flags};
    use crate::model::Link;

    fn result(pp: f64, pm: f64, a: f64) -> RunOutcome {
        let mut flags = Flags::default();
        if a > 0.5 {
            flags.insert(Flag::BoundaryHit);
        }
        RunOutcome::Estimated(EstimationResult {
            pi_plus_hat: pp,
            pi_minus_hat: pm,
            alpha_hat: a,
            residual_stage1: 0.0,
            residual_stage2: 0.0,
            stage1_evals: 1,
            stage2_evals: 1,
            flags,
        })
    }

    fn config() -> ReplicationConfig {
        ReplicationConfig::new(
            ModelParams::new(3, 0.3, 0.9, 0.4, Link::Mean).unwrap(),
            1000,
            3,
            7,
        )
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..40).map(|i| i as f64 * 0.37).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.d_statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert!(!r.reject_at_005);
        let r = ks_two_sample(&[0.0; 100], &[1.0; 100]).unwrap();
        assert_eq!(r.d_statistic, 1.0);
        assert!(r.p_value < 1e-12);
        assert!(r.reject_at_005);
        assert_eq!(
            ks_two_sample(&[], &[1.0]).unwrap_err().code(),
            "EmptySample"
        );
    }

    #[test]
    fn ks_statistic_with_ties() {
        // F_a = 2/3 on [1, 3), F_b = 1/3 on [1, 2) and 1 from 2
        let r = ks_two_sample(&[1.0, 1.0, 3.0], &[1.0, 2.0, 2.0]).unwrap();
        assert!((r.d_statistic - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((r.n1, r.n2), (3, 3));
    }

    #[test]
    fn kolmogorov_q_reference_values() {
        // Q(1) = 0.26999967..., Q(0.5) = 0.96394524...
        assert!((kolmogorov_q(1.0) - 0.269_999_671_677_2).abs() < 1e-9);
        assert!((kolmogorov_q(0.5) - 0.963_945_243_664_2).abs() < 1e-9);
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert_eq!(kolmogorov_q(1e-4), 1.0);
    }

    #[test]
    fn histogram_partitions() {
        let xs = [0.1, 0.2, 0.2, 0.9, 0.5];
        let h = histogram(&xs, 50);
        assert_eq!(h.len(), 50);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 5);
        assert_eq!(h[49].2, 1);
        let flat = histogram(&[2.0, 2.0], 50);
        assert_eq!(flat[0].2, 2);
    }

    #[test]
    fn summary_statistics_and_failures() {
        let runs = vec![
            result(0.9, 0.4, 0.3),
            RunOutcome::Failed {
                code: "NoConvergence".into(),
                detail: String::new(),
            },
            result(0.8, 0.41, 0.6),
            result(0.85, 0.39, 0.32),
        ];
        let s = summarize(config(), runs);
        assert_eq!(s.failed, 1);
        assert_eq!(s.flagged, 1);
        assert_eq!(s.pi_plus, vec![0.9, 0.8, 0.85]);
        assert!((s.pi_plus_stats.mean - 0.85).abs() < 1e-15);
        assert!((s.pi_plus_stats.variance - 0.0025).abs() < 1e-15);
    }

    #[test]
    fn export_and_reimport() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![
            result(0.9, 0.4, 0.3),
            result(0.812345678901, 0.41, 0.6),
            result(0.85, 0.390000000001, 0.32),
        ];
        let s = summarize(config(), runs);
        let paths = export_summary(&s, dir.path()).unwrap();
        let rows = read_runs_csv(&paths.runs).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].pi_plus_hat, 0.812345678901);
        assert_eq!(rows[1].flags, "BoundaryHit");
        let reimported = summarize(
            config(),
            rows.iter()
                .map(|r| result(r.pi_plus_hat, r.pi_minus_hat, r.alpha_hat))
                .collect(),
        );
        assert_eq!(reimported.pi_plus_stats, s.pi_plus_stats);
        assert_eq!(reimported.pi_minus_stats, s.pi_minus_stats);
        assert_eq!(reimported.alpha_stats, s.alpha_stats);

        let hist = fs::read_to_string(&paths.histogram).unwrap();
        let total: usize = hist
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("alpha,"))
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 3);
        let summary = fs::read_to_string(&paths.summary).unwrap();
        assert_eq!(summary.lines().count(), 4);
        assert!(summary.starts_with("parameter,mean,variance\npi_plus,"));
    }

    #[test]
    fn sample_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let values = [1.5, 2.25, 0.125];
        write_sample_csv(fs::File::create(&path).unwrap(), &values).unwrap();
        assert_eq!(read_sample_csv(&path).unwrap(), values);
        fs::write(&path, "x\n1\n").unwrap();
        assert!(read_sample_csv(&path).is_err());
    }

    #[test]
    fn replications_are_reproducible() {
        let mut cfg = config();
        cfg.k_obs = 2000;
        cfg.l_runs = 4;
        let a = run_replications(cfg.clone()).unwrap();
        let b = run_replications(cfg.clone()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 4);
        cfg.l_runs = 1;
        assert!(run_replications(cfg).is_err());
    }
}
