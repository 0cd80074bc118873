//! The Markov chain on (number of `+` vertices, number of active edges).
//!
//! States `(i, l)` with `i in 0..=n`, `l in 0..=C(n,2)` are laid out
//! lexicographically. A vertex move shifts `i` by one and keeps `l`; an edge
//! redraw keeps `i` and samples `l` from the redraw law for `i`.

use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use super::closed_form::{edge_count_law_raw, second_moment_raw, EdgeProbs};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numfmt::fmt_sig;

/// Largest vertex count for which the dense chain is built.
pub const MAX_CHAIN_N: usize = 20;

/// Largest vertex count accepted by the CSV chain dump.
pub const MAX_DUMP_N: usize = 6;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1_000_000;

#[derive(Debug)]
pub struct JointChain {
    params: ModelParams,
    n: usize,
    m: usize,
    transition: Vec<f64>,
    /// Nonzero entries per row, `(column, value)`.
    rows: Vec<Vec<(usize, f64)>>,
    stationary: OnceLock<Vec<f64>>,
}

pub fn build_joint_chain(params: &ModelParams) -> Result<JointChain> {
    let n = params.n();
    if n > MAX_CHAIN_N {
        return Err(Error::ChainTooLarge {
            n,
            max: MAX_CHAIN_N,
        });
    }
    let m = params.edge_slots();
    let width = m + 1;
    let size = (n + 1) * width;
    let alpha = params.alpha();
    let e = EdgeProbs::of(params);
    let nf = n as f64;

    let mut transition = vec![0.0; size * size];
    let mut rows = Vec::with_capacity(size);
    for i in 0..=n {
        let redraw = edge_count_law_raw(n, i, e);
        for k in 0..=m {
            let row = i * width + k;
            let mut nz = Vec::with_capacity(width + 2);
            if i > 0 {
                nz.push(((i - 1) * width + k, alpha * i as f64 / nf));
            }
            for (l, q) in redraw.iter().enumerate() {
                nz.push((i * width + l, (1.0 - alpha) * q));
            }
            if i < n {
                nz.push(((i + 1) * width + k, alpha * (n - i) as f64 / nf));
            }
            nz.retain(|&(_, v)| v != 0.0);
            for &(col, v) in &nz {
                transition[row * size + col] = v;
            }
            rows.push(nz);
        }
    }
    Ok(JointChain {
        params: *params,
        n,
        m,
        transition,
        rows,
        stationary: OnceLock::new(),
    })
}

impl JointChain {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of edge slots `C(n, 2)`.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn size(&self) -> usize {
        (self.n + 1) * (self.m + 1)
    }

    #[inline]
    pub fn index(&self, i: usize, l: usize) -> usize {
        i * (self.m + 1) + l
    }

    /// `(plus count, edge count)` of a flat state index.
    #[inline]
    pub fn state(&self, idx: usize) -> (usize, usize) {
        (idx / (self.m + 1), idx % (self.m + 1))
    }

    pub fn entry(&self, from: usize, to: usize) -> f64 {
        self.transition[from * self.size() + to]
    }

    /// Row-major dense transition matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.transition
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(_, v)| v).sum())
            .collect()
    }

    /// `x P` for a row vector `x`.
    pub fn left_apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.size()];
        for (row, nz) in self.rows.iter().enumerate() {
            let w = x[row];
            if w == 0.0 {
                continue;
            }
            for &(col, v) in nz {
                y[col] += w * v;
            }
        }
        y
    }

    /// `P v` for a column vector `v`.
    pub fn right_apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|nz| nz.iter().map(|&(col, p)| p * v[col]).sum())
            .collect()
    }

    fn check_irreducible(&self) -> Result<()> {
        let e = EdgeProbs::of(&self.params);
        let interior = |p: f64| p > 0.0 && p < 1.0;
        if interior(e.plus) && interior(e.minus) && interior(e.mixed) {
            Ok(())
        } else {
            Err(Error::ReducibleChain {
                pi_plus: e.plus,
                pi_minus: e.minus,
                link: e.mixed,
            })
        }
    }

    /// Unique stationary law, computed on first use and cached.
    pub fn stationary(&self) -> Result<&[f64]> {
        self.check_irreducible()?;
        Ok(self.stationary.get_or_init(|| self.solve_stationary()))
    }

    fn solve_stationary(&self) -> Vec<f64> {
        let size = self.size();
        let mut x = vec![1.0 / size as f64; size];
        for _ in 0..POWER_MAX_ITERS {
            let mut y = self.left_apply(&x);
            let total: f64 = y.iter().sum();
            y.iter_mut().for_each(|v| *v /= total);
            let residual = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            x = y;
            if residual < POWER_TOL {
                return x;
            }
        }
        self.solve_stationary_direct()
    }

    /// Solves `pi (P - I) = 0` with the last equation replaced by `sum(pi) = 1`.
    pub(crate) fn solve_stationary_direct(&self) -> Vec<f64> {
        let size = self.size();
        let mut a = DMatrix::<f64>::zeros(size, size);
        for (row, nz) in self.rows.iter().enumerate() {
            for &(col, v) in nz {
                a[(col, row)] += v;
            }
        }
        for d in 0..size {
            a[(d, d)] -= 1.0;
        }
        for c in 0..size {
            a[(size - 1, c)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(size);
        b[size - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&b)
            .expect("irreducible chain has a nonsingular stationary system");
        sol.iter().map(|v| v.max(0.0)).collect()
    }

    /// `sup |pi P - pi|`.
    pub fn stationary_residual(&self, pi: &[f64]) -> f64 {
        self.left_apply(pi)
            .iter()
            .zip(pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `E[S(t) S(t+k)]` at stationarity, using the `k`-th power of the transition matrix.
    pub fn cross_moment(&self, k: usize) -> Result<f64> {
        assert!(k >= 1, "lag must be at least 1");
        let pi = self.stationary()?;
        let size = self.size();
        let edge = |idx: usize| self.state(idx).1 as f64;
        let mut v: Vec<f64> = (0..size).map(edge).collect();
        for _ in 0..k {
            v = self.right_apply(&v);
        }
        Ok((0..size).map(|idx| pi[idx] * edge(idx) * v[idx]).sum())
    }

    /// `E[(S(t+1) - S(t))^2] = 2 E[S^2] - 2 E[S(t) S(t+1)]`.
    pub fn expected_squared_increment(&self) -> Result<f64> {
        let m2 = second_moment_raw(self.n, EdgeProbs::of(&self.params));
        Ok(2.0 * m2 - 2.0 * self.cross_moment(1)?)
    }

    /// Writes `row,col,value` for every entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        if self.n > MAX_DUMP_N {
            return Err(Error::ChainTooLarge {
                n: self.n,
                max: MAX_DUMP_N,
            });
        }
        writeln!(out, "row,col,value")?;
        let size = self.size();
        for r in 0..size {
            for c in 0..size {
                writeln!(out, "{r},{c},{}", fmt_sig(self.transition[r * size + c]))?;
            }
        }
        Ok(())
    }
}

/// Stationary law of the chain built from `params`.
pub fn stationary_joint(chain: &JointChain) -> Result<Vec<f64>> {
    chain.stationary().map(<[f64]>::to_vec)
}

pub fn cross_moment_lag1(params: &ModelParams) -> Result<f64> {
    build_joint_chain(params)?.cross_moment(1)
}

pub fn cross_moment_lagk(params: &ModelParams, k: usize) -> Result<f64> {
    build_joint_chain(params)?.cross_moment(k)
}

pub fn expected_squared_increment(params: &ModelParams) -> Result<f64> {
    build_joint_chain(params)?.expected_squared_increment()
}
