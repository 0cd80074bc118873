//! Two-step method-of-moments estimation from an edge-count series.
//!
//! Step 1 matches `E[S]` and `E[S^2]`, which do not involve `alpha`, to the
//! sample moments and solves for the edge probabilities on the triangle
//! `0 <= pi_minus <= pi_plus <= 1`. Step 2 plugs those into
//! `E[(S(t+1) - S(t))^2]` and solves for `alpha`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact_moments::{build_joint_chain, mean_s_raw, second_moment_raw, EdgeProbs};
use crate::model::{pair_count, Link, ModelParams};
use crate::optimize::{golden_section, nelder_mead, NelderMeadOptions};
use crate::simulator::ObservationSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalMoments {
    /// Mean of `S(t)`.
    pub m1k: f64,
    /// Mean of `S(t)^2`.
    pub m2k: f64,
    /// Mean of `(S(t+1) - S(t))^2` over the `K - 1` consecutive pairs.
    pub m3k: f64,
    pub k: usize,
}

pub fn empirical_moments(series: &ObservationSeries) -> Result<EmpiricalMoments> {
    let s = &series.s;
    let k = s.len();
    if k < 2 {
        return Err(Error::SeriesTooShort { len: k, needed: 2 });
    }
    let kf = k as f64;
    let m1k = s.iter().map(|&x| x as f64).sum::<f64>() / kf;
    let m2k = s.iter().map(|&x| (x as f64).powi(2)).sum::<f64>() / kf;
    let m3k = s
        .windows(2)
        .map(|w| (w[1] as f64 - w[0] as f64).powi(2))
        .sum::<f64>()
        / (kf - 1.0);
    Ok(EmpiricalMoments { m1k, m2k, m3k, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Flag {
    BoundaryHit,
    MultipleRoots,
    NoBracket,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::BoundaryHit => "BoundaryHit",
            Flag::MultipleRoots => "MultipleRoots",
            Flag::NoBracket => "NoBracket",
        })
    }
}

/// Sorted, duplicate-free set of diagnostic flags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Flags(Vec<Flag>);

impl Flags {
    pub fn insert(&mut self, flag: Flag) {
        if let Err(pos) = self.0.binary_search(&flag) {
            self.0.insert(pos, flag);
        }
    }

    pub fn extend(&mut self, other: &Flags) {
        for &f in &other.0 {
            self.insert(f);
        }
    }

    pub fn contains(&self, flag: Flag) -> bool {
        self.0.binary_search(&flag).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Flag> + '_ {
        self.0.iter().copied()
    }
}

/// `|`-separated flag names, or `none`.
impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("none");
        }
        let names: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&names.join("|"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    /// Spacing of the `alpha` grid over `[0.01, 0.99]`.
    pub grid_step: f64,
    /// Largest acceptable scaled squared residual in step 1.
    pub tol: f64,
    /// Coarse grid resolution per axis for step 1.
    pub stage1_grid: usize,
    /// Final bracket width of the golden-section refinement in step 2.
    pub alpha_width: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.02,
            tol: 1e-6,
            stage1_grid: 20,
            alpha_width: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeProbEstimate {
    pub pi_plus: f64,
    pub pi_minus: f64,
    pub residual: f64,
    pub evals: usize,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaEstimate {
    pub alpha: f64,
    /// `|g(alpha) - m3k|` at the returned `alpha`.
    pub residual: f64,
    pub evals: usize,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub pi_plus_hat: f64,
    pub pi_minus_hat: f64,
    pub alpha_hat: f64,
    pub residual_stage1: f64,
    pub residual_stage2: f64,
    pub stage1_evals: usize,
    pub stage2_evals: usize,
    pub flags: Flags,
}

/// Step-1 objective in the unit-square coordinates `pi_plus = u`, `pi_minus = u v`.
struct MomentObjective {
    n: usize,
    link: Link,
    m1k: f64,
    m2k: f64,
    c1: f64,
    c2: f64,
}

impl MomentObjective {
    fn new(m1k: f64, m2k: f64, n: usize, link: Link) -> Self {
        let c1 = pair_count(n) as f64;
        Self {
            n,
            link,
            m1k,
            m2k,
            c1,
            c2: c1 * c1,
        }
    }

    fn at(&self, pi_plus: f64, pi_minus: f64) -> f64 {
        let e = EdgeProbs::new(pi_plus, pi_minus, self.link);
        let r1 = (mean_s_raw(self.n, e) - self.m1k) / self.c1;
        let r2 = (second_moment_raw(self.n, e) - self.m2k) / self.c2;
        r1 * r1 + r2 * r2
    }

    fn mean(&self, pi_plus: f64, pi_minus: f64) -> f64 {
        mean_s_raw(self.n, EdgeProbs::new(pi_plus, pi_minus, self.link))
    }

    /// `pi_plus` in `[pi_minus, 1]` matching the first moment, if attainable.
    /// The mean is nondecreasing in `pi_plus` for both links.
    fn profile_point(&self, pi_minus: f64) -> Option<f64> {
        let (mut lo, mut hi) = (pi_minus, 1.0);
        if self.m1k < self.mean(lo, pi_minus) || self.m1k > self.mean(hi, pi_minus) {
            return None;
        }
        for _ in 0..PROFILE_BISECTIONS {
            let mid = 0.5 * (lo + hi);
            if self.mean(mid, pi_minus) < self.m1k {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Signed second-moment gap along the first-moment curve.
    fn profile_gap(&self, pi_minus: f64) -> Option<(f64, f64)> {
        let p = self.profile_point(pi_minus)?;
        let e = EdgeProbs::new(p, pi_minus, self.link);
        Some((p, second_moment_raw(self.n, e) - self.m2k))
    }

    /// Starts on the first-moment curve: bracketed roots of the
    /// second-moment gap, then local minima of its magnitude.
    fn profile_starts(&self, samples: usize) -> Vec<(f64, f64)> {
        let pts: Vec<(f64, f64, f64)> = (0..=samples)
            .filter_map(|j| {
                let q = j as f64 / samples as f64;
                self.profile_gap(q).map(|(p, h)| (q, p, h))
            })
            .collect();
        let mut starts = Vec::new();
        for w in pts.windows(2) {
            let ((q0, _, h0), (q1, _, h1)) = ((w[0].0, w[0].1, w[0].2), (w[1].0, w[1].1, w[1].2));
            if h0 == 0.0 || h0.signum() == h1.signum() {
                continue;
            }
            let (mut a, mut b, mut ha) = (q0, q1, h0);
            for _ in 0..PROFILE_BISECTIONS {
                let mid = 0.5 * (a + b);
                match self.profile_gap(mid) {
                    Some((_, h)) if h.signum() == ha.signum() => {
                        a = mid;
                        ha = h;
                    }
                    Some(_) => b = mid,
                    None => break,
                }
            }
            let q = 0.5 * (a + b);
            if let Some(p) = self.profile_point(q) {
                starts.push((p, q));
            }
        }
        for j in 0..pts.len() {
            let h = pts[j].2.abs();
            let left = j == 0 || pts[j - 1].2.abs() >= h;
            let right = j + 1 == pts.len() || pts[j + 1].2.abs() >= h;
            if left && right {
                starts.push((pts[j].1, pts[j].0));
            }
        }
        starts
    }
}

const PROFILE_BISECTIONS: usize = 60;
const PROFILE_SAMPLES: usize = 200;

fn to_triangle(uv: &[f64]) -> (f64, f64) {
    let u = uv[0].clamp(0.0, 1.0);
    let v = uv[1].clamp(0.0, 1.0);
    (u, u * v)
}

fn from_triangle(pi_plus: f64, pi_minus: f64) -> [f64; 2] {
    let v = if pi_plus > 0.0 {
        pi_minus / pi_plus
    } else {
        0.0
    };
    [pi_plus, v]
}

const BOUNDARY_EPS: f64 = 1e-9;
const ROOT_SEPARATION: f64 = 0.05;
const MAX_STARTS: usize = 4;
const ROOT_FLOOR: f64 = 1e-12;

pub fn estimate_edge_probs(m1k: f64, m2k: f64, n: usize, link: Link) -> Result<EdgeProbEstimate> {
    estimate_edge_probs_with(m1k, m2k, n, link, &EstimatorOptions::default())
}

/// Minimizes the scaled squared moment residual over the ordered triangle.
/// Simplex descent starts from the best few well-separated cells of a coarse
/// grid and from points on the curve where the first moment matches.
pub fn estimate_edge_probs_with(
    m1k: f64,
    m2k: f64,
    n: usize,
    link: Link,
    opts: &EstimatorOptions,
) -> Result<EdgeProbEstimate> {
    if n < 2 {
        return Err(Error::OutOfRange {
            field: "n",
            value: n as f64,
        });
    }
    let obj = MomentObjective::new(m1k, m2k, n, link);
    let g = opts.stage1_grid.max(2);
    let mut evals = 0;
    let mut cells = Vec::with_capacity((g + 1) * (g + 2) / 2);
    for i in 0..=g {
        for j in 0..=i {
            let (p, q) = (i as f64 / g as f64, j as f64 / g as f64);
            cells.push((obj.at(p, q), p, q));
            evals += 1;
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut starts: Vec<(f64, f64)> = Vec::new();
    for &(_, p, q) in &cells {
        let far = starts.iter().all(|&(sp, sq)| {
            (sp - p).abs() > 2.0 * ROOT_SEPARATION || (sq - q).abs() > 2.0 * ROOT_SEPARATION
        });
        if far {
            starts.push((p, q));
            if starts.len() == MAX_STARTS {
                break;
            }
        }
    }

    starts.extend(obj.profile_starts(PROFILE_SAMPLES));

    let nm = NelderMeadOptions {
        step: 0.5 / g as f64,
        ..Default::default()
    };
    let mut candidates: Vec<(f64, f64, f64)> = Vec::with_capacity(starts.len());
    for (p, q) in starts {
        let f = |uv: &[f64]| {
            let (a, b) = to_triangle(uv);
            obj.at(a, b)
        };
        let first = nelder_mead(f, &from_triangle(p, q), nm);
        // restart from the first optimum so a collapsed simplex cannot stall early
        let polish = nelder_mead(
            f,
            &first.x,
            NelderMeadOptions {
                step: nm.step * 0.1,
                ..nm
            },
        );
        evals += first.evals + polish.evals;
        let best = if polish.f <= first.f { polish } else { first };
        let (a, b) = to_triangle(&best.x);
        candidates.push((best.f, a, b));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (residual, pi_plus, pi_minus) = candidates[0];

    if residual.is_nan() || residual > opts.tol {
        return Err(Error::NoConvergence {
            objective: residual,
            tol: opts.tol,
            evals,
        });
    }

    let mut flags = Flags::default();
    // a second local minimum counts as a root only if it fits about as well as the best one
    let distinct_root = candidates[1..].iter().any(|&(f, a, b)| {
        f <= opts.tol
            && f <= 10.0 * residual + ROOT_FLOOR
            && ((a - pi_plus).abs() > ROOT_SEPARATION || (b - pi_minus).abs() > ROOT_SEPARATION)
    });
    if distinct_root {
        flags.insert(Flag::MultipleRoots);
    }
    if pi_plus >= 1.0 - BOUNDARY_EPS || pi_minus <= BOUNDARY_EPS {
        flags.insert(Flag::BoundaryHit);
    }
    Ok(EdgeProbEstimate {
        pi_plus,
        pi_minus,
        residual,
        evals,
        flags,
    })
}

pub fn estimate_alpha(
    m3k: f64,
    pi_plus_hat: f64,
    pi_minus_hat: f64,
    n: usize,
    link: Link,
) -> Result<AlphaEstimate> {
    estimate_alpha_with(
        m3k,
        pi_plus_hat,
        pi_minus_hat,
        n,
        link,
        &EstimatorOptions::default(),
    )
}

fn alpha_grid(step: f64) -> Vec<f64> {
    let (lo, hi) = (0.01, 0.99);
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|j| lo + j as f64 * step).collect()
}

/// Solves `g(alpha) = m3k` where `g` is the stationary mean squared increment
/// at the plugged-in edge probabilities. Does not assume `g` is monotone.
pub fn estimate_alpha_with(
    m3k: f64,
    pi_plus_hat: f64,
    pi_minus_hat: f64,
    n: usize,
    link: Link,
    opts: &EstimatorOptions,
) -> Result<AlphaEstimate> {
    let base = ModelParams::new(n, 0.5, pi_plus_hat, pi_minus_hat, link)?;
    // surface ChainTooLarge / ReducibleChain before the grid
    build_joint_chain(&base)?.stationary()?;

    let g = |alpha: f64| -> Result<f64> {
        build_joint_chain(&base.with_alpha(alpha)?)?.expected_squared_increment()
    };

    let grid = alpha_grid(opts.grid_step);
    let values: Vec<f64> = grid.par_iter().map(|&a| g(a)).collect::<Result<_>>()?;
    let mut evals = grid.len();
    let mut flags = Flags::default();

    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let gaps: Vec<f64> = values.iter().map(|v| (v - m3k).abs()).collect();
    let best = gaps
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)
        .expect("alpha grid is never empty");

    if m3k < lo || m3k > hi {
        flags.insert(Flag::NoBracket);
        flags.insert(Flag::BoundaryHit);
        return Ok(AlphaEstimate {
            alpha: grid[best],
            residual: gaps[best],
            evals,
            flags,
        });
    }

    let sign_changes = values
        .windows(2)
        .filter(|w| (w[0] - m3k).signum() != (w[1] - m3k).signum() && w[0] != m3k)
        .count();
    if sign_changes > 1 {
        flags.insert(Flag::MultipleRoots);
    }

    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(grid.len() - 1)];
    let mut failure = None;
    let refined = golden_section(
        |alpha| match g(alpha) {
            Ok(v) => (v - m3k).abs(),
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        a,
        b,
        opts.alpha_width,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    evals += refined.evals;
    let (alpha, residual) = if refined.f <= gaps[best] {
        (refined.x[0], refined.f)
    } else {
        (grid[best], gaps[best])
    };
    Ok(AlphaEstimate {
        alpha,
        residual,
        evals,
        flags,
    })
}

/// Step 1 followed by step 2 on precomputed sample moments.
pub fn estimate_from_moments(
    moments: &EmpiricalMoments,
    n: usize,
    link: Link,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    let edges = estimate_edge_probs_with(moments.m1k, moments.m2k, n, link, opts)?;
    let alpha = estimate_alpha_with(moments.m3k, edges.pi_plus, edges.pi_minus, n, link, opts)?;
    let mut flags = edges.flags.clone();
    flags.extend(&alpha.flags);
    Ok(EstimationResult {
        pi_plus_hat: edges.pi_plus,
        pi_minus_hat: edges.pi_minus,
        alpha_hat: alpha.alpha,
        residual_stage1: edges.residual,
        residual_stage2: alpha.residual,
        stage1_evals: edges.evals,
        stage2_evals: alpha.evals,
        flags,
    })
}

pub fn estimate_all(series: &ObservationSeries, n: usize, link: Link) -> Result<EstimationResult> {
    estimate_all_with(series, n, link, &EstimatorOptions::default())
}

pub fn estimate_all_with(
    series: &ObservationSeries,
    n: usize,
    link: Link,
    opts: &EstimatorOptions,
) -> Result<EstimationResult> {
    estimate_from_moments(&empirical_moments(series)?, n, link, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_moments::{mean_s, second_moment_s, MomentSet};

    fn exact(
        n: usize,
        alpha: f64,
        pp: f64,
        pm: f64,
        link: Link,
    ) -> (ModelParams, EmpiricalMoments) {
        let p = ModelParams::new(n, alpha, pp, pm, link).unwrap();
        let m = MomentSet::compute(&p).unwrap();
        (
            p,
            EmpiricalMoments {
                m1k: m.m1,
                m2k: m.m2,
                m3k: m.m3,
                k: usize::MAX,
            },
        )
    }

    #[test]
    fn sample_moments_by_hand() {
        let m = empirical_moments(&ObservationSeries::from_counts(vec![0, 1, 0, 1])).unwrap();
        assert_eq!((m.m1k, m.m2k, m.m3k, m.k), (0.5, 0.5, 1.0, 4));
        let c = empirical_moments(&ObservationSeries::from_counts(vec![3; 10])).unwrap();
        assert_eq!((c.m1k, c.m2k, c.m3k), (3.0, 9.0, 0.0));
        let err = empirical_moments(&ObservationSeries::from_counts(vec![3])).unwrap_err();
        assert_eq!(err.code(), "SeriesTooShort");
    }

    #[test]
    fn noiseless_edge_probabilities() {
        for link in Link::ALL {
            for (pp, pm) in [(0.9, 0.4), (0.5, 0.5)] {
                let (_, m) = exact(3, 0.3, pp, pm, link);
                let est = estimate_edge_probs(m.m1k, m.m2k, 3, link).unwrap();
                assert!((est.pi_plus - pp).abs() < 1e-4, "{link}: {est:?}");
                assert!((est.pi_minus - pm).abs() < 1e-4, "{link}: {est:?}");
                assert!(est.pi_plus >= est.pi_minus);
            }
        }
    }

    #[test]
    fn step_one_ignores_alpha() {
        let a = ModelParams::new(4, 0.2, 0.7, 0.3, Link::Harmonic).unwrap();
        let b = a.with_alpha(0.8).unwrap();
        let ea = estimate_edge_probs(mean_s(&a), second_moment_s(&a), 4, Link::Harmonic).unwrap();
        let eb = estimate_edge_probs(mean_s(&b), second_moment_s(&b), 4, Link::Harmonic).unwrap();
        assert_eq!(ea, eb);
    }

    #[test]
    fn noiseless_alpha() {
        for alpha in [0.3, 0.6] {
            let (_, m) = exact(3, alpha, 0.9, 0.4, Link::Mean);
            let est = estimate_alpha(m.m3k, 0.9, 0.4, 3, Link::Mean).unwrap();
            assert!((est.alpha - alpha).abs() < 1e-3, "{est:?}");
            assert!(est.flags.is_empty());
            assert!(est.residual < 1e-4);
        }
    }

    #[test]
    fn noiseless_full_pipeline() {
        let (_, m) = exact(4, 0.45, 0.8, 0.25, Link::Harmonic);
        let r = estimate_from_moments(&m, 4, Link::Harmonic, &EstimatorOptions::default()).unwrap();
        assert!((r.pi_plus_hat - 0.8).abs() < 1e-3);
        assert!((r.pi_minus_hat - 0.25).abs() < 1e-3);
        assert!((r.alpha_hat - 0.45).abs() < 1e-3);
        assert!(r.stage1_evals > 0 && r.stage2_evals > 0);
    }

    #[test]
    fn constant_series_has_no_bracket() {
        // S = 1 at n = 3 is consistent with a degenerate edge law, never with increments of zero
        let series = ObservationSeries::from_counts(vec![1; 50]);
        match estimate_all(&series, 3, Link::Mean) {
            Ok(r) => {
                assert!(r.flags.contains(Flag::NoBracket));
                assert!(r.flags.contains(Flag::BoundaryHit));
            }
            Err(e) => assert!(
                matches!(e.code(), "ReducibleChain" | "NoConvergence"),
                "{e}"
            ),
        }
        let (_, m) = exact(3, 0.3, 0.9, 0.4, Link::Mean);
        let r = estimate_alpha(0.0, 0.9, 0.4, 3, Link::Mean).unwrap();
        assert!(r.flags.contains(Flag::NoBracket) && r.flags.contains(Flag::BoundaryHit));
        assert!((r.alpha - 0.99).abs() < 1e-12);
        assert!(m.m3k > 0.0);
    }

    #[test]
    fn infeasible_moments_do_not_converge() {
        // E[S^2] below E[S]^2 is unattainable
        let err = estimate_edge_probs(1.5, 1.0, 3, Link::Mean).unwrap_err();
        assert_eq!(err.code(), "NoConvergence");
    }

    #[test]
    fn reducible_plug_in_is_refused() {
        let err = estimate_alpha(1.0, 1.0, 0.4, 3, Link::Mean).unwrap_err();
        assert_eq!(err.code(), "ReducibleChain");
        let err = estimate_alpha(1.0, 0.9, 0.4, 25, Link::Mean).unwrap_err();
        assert_eq!(err.code(), "ChainTooLarge");
    }

    #[test]
    fn grid_covers_unit_interval() {
        let g = alpha_grid(0.02);
        assert_eq!(g.len(), 50);
        assert!((g[0] - 0.01).abs() < 1e-15 && (g[49] - 0.99).abs() < 1e-12);
    }

    #[test]
    fn flags_display() {
        let mut f = Flags::default();
        assert_eq!(f.to_string(), "none");
        f.insert(Flag::NoBracket);
        f.insert(Flag::BoundaryHit);
        f.insert(Flag::NoBracket);
        assert_eq!(f.to_string(), "BoundaryHit|NoBracket");
    }
}
