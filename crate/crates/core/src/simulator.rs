//! Discrete-time simulation of the coupled vertex/edge dynamics.
//!
//! Each step either flips one uniformly chosen vertex (probability `alpha`)
//! or redraws every edge slot independently given the current vertex states.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{pair_count, pair_probability, ModelParams, SystemState, VertexState};

/// Seedable deterministic generator. Streams derived from one root seed are
/// independent of each other and of the order in which they are created.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RandomSource {
    pub fn from_seed(seed: u64) -> Self {
        Self::derived(seed, 0)
    }

    /// Stream `stream` of the generator keyed by `root`.
    pub fn derived(root: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(root);
        rng.set_stream(stream);
        Self {
            rng,
            seed: root,
            stream,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Recorded edge counts `S(1..K)`, optionally with plus-counts `N(1..K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSeries {
    pub s: Vec<usize>,
    pub n_plus: Option<Vec<usize>>,
    pub seed_record: Option<u64>,
}

impl ObservationSeries {
    pub fn from_counts(s: Vec<usize>) -> Self {
        Self {
            s,
            n_plus: None,
            seed_record: None,
        }
    }

    pub fn k(&self) -> usize {
        self.s.len()
    }

    /// Writes `t,S` (or `t,S,N` when plus-counts are present and requested), `t` from 1.
    pub fn write_csv<W: Write>(&self, mut out: W, with_n: bool) -> Result<()> {
        let n_plus = if with_n { self.n_plus.as_deref() } else { None };
        match n_plus {
            Some(np) => {
                writeln!(out, "t,S,N")?;
                for (t, (s, n)) in self.s.iter().zip(np).enumerate() {
                    writeln!(out, "{},{},{}", t + 1, s, n)?;
                }
            }
            None => {
                writeln!(out, "t,S")?;
                for (t, s) in self.s.iter().enumerate() {
                    writeln!(out, "{},{}", t + 1, s)?;
                }
            }
        }
        Ok(())
    }

    /// Reads a `t,S[,N]` trajectory file. The `t` column is not checked for gaps.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = loop {
            match lines.next() {
                None => return Err(Error::Parse("empty trajectory file".into())),
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
            }
        };
        let cols: Vec<String> = header
            .split(',')
            .map(|c| c.trim().to_ascii_lowercase())
            .collect();
        let with_n = match cols.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            ["t", "s"] => false,
            ["t", "s", "n"] => true,
            _ => {
                return Err(Error::Parse(format!(
                    "expected header `t,S` or `t,S,N`, found `{header}`"
                )))
            }
        };
        let mut s = Vec::new();
        let mut n_plus = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let expected = if with_n { 3 } else { 2 };
            let parse = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad count `{v}`", lineno + 2)))
            };
            if fields.len() != expected {
                return Err(Error::Parse(format!(
                    "line {}: expected {expected} fields",
                    lineno + 2
                )));
            }
            s.push(parse(fields[1])?);
            if with_n {
                n_plus.push(parse(fields[2])?);
            }
        }
        Ok(Self {
            s,
            n_plus: with_n.then_some(n_plus),
            seed_record: None,
        })
    }
}

/// Default number of discarded steps, `ceil(10 n ln(n+1) / alpha)`.
pub fn default_burn_in(n: usize, alpha: f64) -> usize {
    (10.0 * n as f64 * ((n + 1) as f64).ln() / alpha).ceil() as usize
}

/// Initial condition: every slot active with probability `p0`; the lowest
/// `ceil(n/2)` vertices are `+`, the rest `-`.
pub fn init_paper(params: &ModelParams, p0: f64, rng: &mut RandomSource) -> Result<SystemState> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::OutOfRange {
            field: "p0",
            value: p0,
        });
    }
    let n = params.n();
    let plus = n.div_ceil(2);
    let states = (0..n)
        .map(|v| {
            if v < plus {
                VertexState::Plus
            } else {
                VertexState::Minus
            }
        })
        .collect();
    let edges = (0..pair_count(n)).map(|_| rng.bernoulli(p0)).collect();
    SystemState::new(states, edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    VertexFlip(usize),
    EdgeRedraw,
}

/// One transition applied in place.
pub fn step_in_place(
    state: &mut SystemState,
    params: &ModelParams,
    rng: &mut RandomSource,
) -> StepKind {
    if rng.bernoulli(params.alpha()) {
        let v = rng.index(state.n());
        state.flip_vertex(v);
        StepKind::VertexFlip(v)
    } else {
        state.redraw_edges(|a, b| rng.bernoulli(pair_probability(a, b, params)));
        StepKind::EdgeRedraw
    }
}

pub fn step(state: &SystemState, params: &ModelParams, rng: &mut RandomSource) -> SystemState {
    let mut next = state.clone();
    step_in_place(&mut next, params, rng);
    next
}

/// Number of active edges, counted slot by slot.
pub fn count_edges(state: &SystemState) -> usize {
    state.edge_slots().iter().filter(|&&e| e).count()
}

/// Starts from [`init_paper`] with `p0 = 0.5`, discards `burn_in` steps, then
/// records one observation after each of the next `k_obs` steps.
pub fn simulate(
    params: &ModelParams,
    k_obs: usize,
    burn_in: usize,
    rng: &mut RandomSource,
) -> Result<ObservationSeries> {
    if k_obs == 0 {
        return Err(Error::OutOfRange {
            field: "k",
            value: 0.0,
        });
    }
    let seed_record = rng.seed();
    let mut state = init_paper(params, 0.5, rng)?;
    for _ in 0..burn_in {
        step_in_place(&mut state, params, rng);
    }
    let mut s = Vec::with_capacity(k_obs);
    let mut n_plus = Vec::with_capacity(k_obs);
    let mut plus = state.plus_count();
    for _ in 0..k_obs {
        if let StepKind::VertexFlip(v) = step_in_place(&mut state, params, rng) {
            if state.states()[v] == VertexState::Plus {
                plus += 1;
            } else {
                plus -= 1;
            }
        }
        s.push(state.edge_count());
        n_plus.push(plus);
    }
    Ok(ObservationSeries {
        s,
        n_plus: Some(n_plus),
        seed_record: Some(seed_record),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;

    fn params(alpha: f64, pp: f64, pm: f64) -> ModelParams {
        ModelParams::new(4, alpha, pp, pm, Link::Mean).unwrap()
    }

    #[test]
    fn init_extremes() {
        use VertexState::*;
        let p = params(0.3, 0.9, 0.4);
        let mut rng = RandomSource::from_seed(1);
        let s = init_paper(&p, 0.0, &mut rng).unwrap();
        assert_eq!(s.states(), &[Plus, Plus, Minus, Minus]);
        assert_eq!(count_edges(&s), 0);
        let s = init_paper(&p, 1.0, &mut rng).unwrap();
        assert_eq!(count_edges(&s), 6);
        assert!(init_paper(&p, 1.5, &mut rng).is_err());
        let odd = ModelParams::new(3, 0.3, 0.9, 0.4, Link::Mean).unwrap();
        let s = init_paper(&odd, 0.5, &mut rng).unwrap();
        assert_eq!(s.plus_count(), 2);
    }

    #[test]
    fn vertex_branch_keeps_edges_and_edge_branch_keeps_states() {
        let p = params(0.5, 0.7, 0.2);
        let mut rng = RandomSource::from_seed(9);
        let mut state = init_paper(&p, 0.5, &mut rng).unwrap();
        let mut seen = [false; 2];
        for _ in 0..500 {
            let prev = state.clone();
            match step_in_place(&mut state, &p, &mut rng) {
                StepKind::VertexFlip(v) => {
                    seen[0] = true;
                    assert_eq!(prev.edge_slots(), state.edge_slots());
                    let diff = prev
                        .states()
                        .iter()
                        .zip(state.states())
                        .filter(|(a, b)| a != b)
                        .count();
                    assert_eq!(diff, 1);
                    assert_ne!(prev.states()[v], state.states()[v]);
                }
                StepKind::EdgeRedraw => {
                    seen[1] = true;
                    assert_eq!(prev.states(), state.states());
                }
            }
            assert_eq!(state.n(), 4);
            assert_eq!(state.edge_count(), count_edges(&state));
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn all_plus_with_certain_edges_gives_complete_graph() {
        let p = params(0.2, 1.0, 0.4);
        let all_plus = SystemState::new(vec![VertexState::Plus; 4], vec![false; 6]).unwrap();
        let mut rng = RandomSource::from_seed(3);
        for _ in 0..50 {
            let mut s = all_plus.clone();
            if step_in_place(&mut s, &p, &mut rng) == StepKind::EdgeRedraw {
                assert_eq!(count_edges(&s), 6);
            }
        }
    }

    #[test]
    fn all_minus_empty_probability() {
        // P(S = 0 | edge branch, all minus, n = 3) = 0.6^3
        let p = ModelParams::new(3, 0.3, 0.9, 0.4, Link::Mean).unwrap();
        let start = SystemState::new(vec![VertexState::Minus; 3], vec![true; 3]).unwrap();
        let mut rng = RandomSource::from_seed(11);
        let (mut redraws, mut empty) = (0u32, 0u32);
        for _ in 0..200_000 {
            let mut s = start.clone();
            if step_in_place(&mut s, &p, &mut rng) == StepKind::EdgeRedraw {
                redraws += 1;
                empty += (s.edge_count() == 0) as u32;
            }
        }
        let frac = empty as f64 / redraws as f64;
        let se = (0.216f64 * 0.784 / redraws as f64).sqrt();
        assert!((frac - 0.216).abs() < 4.0 * se, "{frac}");
    }

    #[test]
    fn vertex_branch_frequency() {
        let m = 100_000;
        let alpha = 0.3;
        let p = params(alpha, 0.6, 0.3);
        let mut rng = RandomSource::from_seed(5);
        let mut state = init_paper(&p, 0.5, &mut rng).unwrap();
        let flips = (0..m)
            .filter(|_| {
                matches!(
                    step_in_place(&mut state, &p, &mut rng),
                    StepKind::VertexFlip(_)
                )
            })
            .count();
        let frac = flips as f64 / m as f64;
        assert!((frac - alpha).abs() < 4.0 * (alpha * (1.0 - alpha) / m as f64).sqrt());
    }

    #[test]
    fn simulate_is_replayable() {
        let p = params(0.3, 0.9, 0.4);
        let a = simulate(&p, 5, 0, &mut RandomSource::from_seed(77)).unwrap();
        let b = simulate(&p, 5, 0, &mut RandomSource::from_seed(77)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.k(), 5);
        assert_eq!(a.seed_record, Some(77));
        let c = simulate(&p, 50, 10, &mut RandomSource::from_seed(78)).unwrap();
        assert!(c.s.iter().all(|&s| s <= 6));
        assert!(c.n_plus.as_ref().unwrap().iter().all(|&k| k <= 4));
        assert!(simulate(&p, 0, 0, &mut RandomSource::from_seed(1)).is_err());
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = RandomSource::derived(1, 0);
        let mut b = RandomSource::derived(1, 1);
        let xa: Vec<usize> = (0..16).map(|_| a.index(1000)).collect();
        let xb: Vec<usize> = (0..16).map(|_| b.index(1000)).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn csv_round_trip() {
        let p = params(0.3, 0.9, 0.4);
        let series = simulate(&p, 20, 3, &mut RandomSource::from_seed(2)).unwrap();
        let mut buf = Vec::new();
        series.write_csv(&mut buf, true).unwrap();
        assert!(buf.starts_with(b"t,S,N\n1,"));
        let back = ObservationSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back.s, series.s);
        assert_eq!(back.n_plus, series.n_plus);

        let mut buf = Vec::new();
        series.write_csv(&mut buf, false).unwrap();
        let back = ObservationSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back.s, series.s);
        assert!(back.n_plus.is_none());

        assert!(ObservationSeries::read_csv(&b"x,y\n1,2\n"[..]).is_err());
        assert!(ObservationSeries::read_csv(&b"t,S\n1,-2\n"[..]).is_err());
    }

    #[test]
    fn burn_in_default() {
        // 10 * 3 * ln 4 / 0.3 = 138.6...
        assert_eq!(default_burn_in(3, 0.3), 139);
    }
}
