//! Closed-form stationary moments of the edge count.
//!
//! The vertex process is a lazy walk on the hypercube whose stationary law is
//! uniform, so the number of `+` vertices is Binomial(n, 1/2). Given the
//! vertex configuration at the last edge redraw, edges are independent
//! Bernoulli variables, which yields the first two moments below without any
//! dependence on `alpha`.

use crate::model::{Link, ModelParams};

/// Binomial coefficient as a float; zero whenever `b > a`.
pub fn binomial(a: usize, b: usize) -> f64 {
    if b > a {
        return 0.0;
    }
    let b = b.min(a - b);
    (0..b).fold(1.0, |acc, t| acc * (a - t) as f64 / (t + 1) as f64)
}

#[inline]
pub(crate) fn choose2(a: usize) -> f64 {
    (a * a.saturating_sub(1) / 2) as f64
}

/// Stationary law of the number of `+` vertices: `P_k = C(n, k) / 2^n`.
pub fn vertex_stationary(n: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(n + 1);
    let mut cur = 0.5f64.powi(n as i32);
    for k in 0..=n {
        p.push(cur);
        cur = cur * (n - k) as f64 / (k + 1) as f64;
    }
    p
}

/// Probabilities of the three pair categories: (`++`, `--`, mixed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct EdgeProbs {
    pub plus: f64,
    pub minus: f64,
    pub mixed: f64,
}

impl EdgeProbs {
    pub fn new(pi_plus: f64, pi_minus: f64, link: Link) -> Self {
        Self {
            plus: pi_plus,
            minus: pi_minus,
            mixed: link.apply(pi_plus, pi_minus),
        }
    }

    pub fn of(params: &ModelParams) -> Self {
        Self::new(params.pi_plus(), params.pi_minus(), params.link())
    }
}

/// Pair counts (`++`, `--`, mixed) when `k` of `n` vertices are `+`.
#[inline]
pub(crate) fn category_sizes(n: usize, k: usize) -> (f64, f64, f64) {
    (choose2(k), choose2(n - k), (k * (n - k)) as f64)
}

pub(crate) fn expected_edges(n: usize, k: usize, e: EdgeProbs) -> f64 {
    let (a, b, c) = category_sizes(n, k);
    a * e.plus + b * e.minus + c * e.mixed
}

/// `F(k) = C(k,2) pi_plus + C(n-k,2) pi_minus + k(n-k) f`, the expected
/// edge count right after a redraw with `k` vertices in state `+`.
pub fn expected_edges_given_k(k: usize, params: &ModelParams) -> f64 {
    assert!(k <= params.n(), "k = {k} exceeds n = {}", params.n());
    expected_edges(params.n(), k, EdgeProbs::of(params))
}

pub(crate) fn mean_s_raw(n: usize, e: EdgeProbs) -> f64 {
    vertex_stationary(n)
        .iter()
        .enumerate()
        .map(|(k, pk)| expected_edges(n, k, e) * pk)
        .sum()
}

/// Sum of the ordered-pair terms `E1_k + E2_k + E3_k`, i.e. the expected
/// number of ordered pairs of distinct active edges after a redraw.
pub(crate) fn distinct_pair_term(n: usize, k: usize, e: EdgeProbs) -> f64 {
    let (a, b, c) = category_sizes(n, k);
    let e1 = a * e.plus * ((a - 1.0) * e.plus + b * e.minus + c * e.mixed);
    let e2 = b * e.minus * (a * e.plus + (b - 1.0) * e.minus + c * e.mixed);
    let e3 = c * e.mixed * (a * e.plus + b * e.minus + (c - 1.0) * e.mixed);
    e1 + e2 + e3
}

pub(crate) fn second_moment_raw(n: usize, e: EdgeProbs) -> f64 {
    let pairs: f64 = vertex_stationary(n)
        .iter()
        .enumerate()
        .map(|(k, pk)| distinct_pair_term(n, k, e) * pk)
        .sum();
    mean_s_raw(n, e) + pairs
}

/// Stationary `E[S]`.
pub fn mean_s(params: &ModelParams) -> f64 {
    mean_s_raw(params.n(), EdgeProbs::of(params))
}

/// Stationary `E[S^2]`.
pub fn second_moment_s(params: &ModelParams) -> f64 {
    second_moment_raw(params.n(), EdgeProbs::of(params))
}

fn binomial_pmf(trials: usize, p: f64) -> Vec<f64> {
    (0..=trials)
        .map(|r| binomial(trials, r) * p.powi(r as i32) * (1.0 - p).powi((trials - r) as i32))
        .collect()
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn edge_count_law_raw(n: usize, i: usize, e: EdgeProbs) -> Vec<f64> {
    let plus = binomial_pmf(i * i.saturating_sub(1) / 2, e.plus);
    let minus = binomial_pmf((n - i) * (n - i).saturating_sub(1) / 2, e.minus);
    let mixed = binomial_pmf(i * (n - i), e.mixed);
    convolve(&convolve(&plus, &minus), &mixed)
}

/// Law of the edge count right after a redraw with `i` vertices in state `+`,
/// over `0..=C(n,2)`: the convolution of the three category binomials.
pub fn edge_count_law_given_i(i: usize, params: &ModelParams) -> Vec<f64> {
    assert!(i <= params.n(), "i = {i} exceeds n = {}", params.n());
    edge_count_law_raw(params.n(), i, EdgeProbs::of(params))
}
