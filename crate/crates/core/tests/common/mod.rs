//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's moment or chain code.

#![allow(dead_code)]

use nalgebra::DMatrix;

pub fn choose(a: usize, b: usize) -> f64 {
    if b > a {
        return 0.0;
    }
    let mut r = 1u128;
    for t in 0..b as u128 {
        r = r * (a as u128 - t) / (t + 1);
    }
    r as f64
}

pub fn link_value(pp: f64, pm: f64, harmonic: bool) -> f64 {
    if harmonic {
        if pp + pm == 0.0 {
            0.0
        } else {
            pp * pm / (pp + pm)
        }
    } else {
        (pp + pm) / 2.0
    }
}

/// Edge probabilities of one configuration: `++`, `--`, mixed.
#[derive(Debug, Clone, Copy)]
pub struct Probs {
    pub pp: f64,
    pub pm: f64,
    pub f: f64,
}

impl Probs {
    pub fn new(pp: f64, pm: f64, harmonic: bool) -> Self {
        Self {
            pp,
            pm,
            f: link_value(pp, pm, harmonic),
        }
    }

    fn pair(&self, a_plus: bool, b_plus: bool) -> f64 {
        match (a_plus, b_plus) {
            (true, true) => self.pp,
            (false, false) => self.pm,
            _ => self.f,
        }
    }
}

/// Slot list in lexicographic pair order.
pub fn slots(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            v.push((i, j));
        }
    }
    v
}

/// Probability that a redraw under vertex bits `sigma` produces edge bits `edges`.
fn redraw_prob(n: usize, sigma: usize, edges: usize, p: Probs) -> f64 {
    slots(n)
        .iter()
        .enumerate()
        .map(|(s, &(i, j))| {
            let q = p.pair(sigma >> i & 1 == 1, sigma >> j & 1 == 1);
            if edges >> s & 1 == 1 {
                q
            } else {
                1.0 - q
            }
        })
        .product()
}

/// Stationary `E[S]` and `E[S^2]` by summing over every vertex configuration
/// at the last redraw (uniform) and every edge subset.
pub fn enumerate_s_moments(n: usize, p: Probs) -> (f64, f64) {
    let m = n * (n - 1) / 2;
    let (mut m1, mut m2) = (0.0, 0.0);
    let w = 0.5f64.powi(n as i32);
    for sigma in 0..1usize << n {
        for edges in 0..1usize << m {
            let pr = w * redraw_prob(n, sigma, edges, p);
            let s = edges.count_ones() as f64;
            m1 += pr * s;
            m2 += pr * s * s;
        }
    }
    (m1, m2)
}

/// Law of the edge count after a redraw with `i` vertices `+`, as the triple
/// sum over active `++` edges `r1` and active `--` edges `r2`.
pub fn naive_p_star(n: usize, i: usize, l: usize, p: Probs) -> f64 {
    let a = i * i.saturating_sub(1) / 2;
    let b = (n - i) * (n - i).saturating_sub(1) / 2;
    let c = i * (n - i);
    let mut total = 0.0;
    for r1 in 0..=l.min(a) {
        for r2 in 0..=(l - r1).min(b) {
            let r3 = l - r1 - r2;
            if r3 > c {
                continue;
            }
            total += choose(a, r1)
                * p.pp.powi(r1 as i32)
                * (1.0 - p.pp).powi((a - r1) as i32)
                * choose(b, r2)
                * p.pm.powi(r2 as i32)
                * (1.0 - p.pm).powi((b - r2) as i32)
                * choose(c, r3)
                * p.f.powi(r3 as i32)
                * (1.0 - p.f).powi((c - r3) as i32);
        }
    }
    total
}

/// The full microstate chain on (vertex states, edge set); state index
/// `sigma << m | edges`, bit `v` of `sigma` set when vertex `v` is `+`.
pub struct MicroChain {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl MicroChain {
    pub fn new(n: usize, alpha: f64, p: Probs) -> Self {
        let m = n * (n - 1) / 2;
        let size = 1usize << (n + m);
        let mut rows = Vec::with_capacity(size);
        for x in 0..size {
            let sigma = x >> m;
            let edges = x & ((1 << m) - 1);
            let mut row = Vec::new();
            for v in 0..n {
                row.push((((sigma ^ (1 << v)) << m) | edges, alpha / n as f64));
            }
            for e in 0..1usize << m {
                let q = (1.0 - alpha) * redraw_prob(n, sigma, e, p);
                if q > 0.0 {
                    row.push(((sigma << m) | e, q));
                }
            }
            rows.push(row);
        }
        Self { n, m, rows }
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn edge_count(&self, x: usize) -> usize {
        (x & ((1 << self.m) - 1)).count_ones() as usize
    }

    pub fn plus_count(&self, x: usize) -> usize {
        (x >> self.m).count_ones() as usize
    }

    /// Stationary law from a dense solve of `pi (P - I) = 0`, `sum pi = 1`.
    pub fn stationary(&self) -> Vec<f64> {
        let size = self.size();
        let mut a = DMatrix::<f64>::zeros(size, size);
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, q) in row {
                a[(y, x)] += q;
            }
            a[(x, x)] -= 1.0;
        }
        for c in 0..size {
            a[(size - 1, c)] = 1.0;
        }
        let mut rhs = nalgebra::DVector::<f64>::zeros(size);
        rhs[size - 1] = 1.0;
        a.lu()
            .solve(&rhs)
            .expect("singular microstate system")
            .iter()
            .copied()
            .collect()
    }

    /// `E[S(t) S(t+k)]` under `pi`.
    pub fn cross_moment(&self, pi: &[f64], k: usize) -> f64 {
        let mut v: Vec<f64> = (0..self.size())
            .map(|x| self.edge_count(x) as f64)
            .collect();
        for _ in 0..k {
            v = self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(y, q)| q * v[y]).sum())
                .collect();
        }
        (0..self.size())
            .map(|x| pi[x] * self.edge_count(x) as f64 * v[x])
            .sum()
    }

    pub fn moment(&self, pi: &[f64], power: i32) -> f64 {
        (0..self.size())
            .map(|x| pi[x] * (self.edge_count(x) as f64).powi(power))
            .sum()
    }

    /// Transition probabilities of the lumped `(plus count, edge count)`
    /// chain, read off one representative microstate per lumped state.
    pub fn lumped(&self) -> Vec<Vec<f64>> {
        let (n, m) = (self.n, self.m);
        let size = (n + 1) * (m + 1);
        let mut out = vec![vec![0.0; size]; size];
        for i in 0..=n {
            for l in 0..=m {
                let x = (((1 << i) - 1) << m) | ((1 << l) - 1);
                for &(y, q) in &self.rows[x] {
                    out[i * (m + 1) + l][self.plus_count(y) * (m + 1) + self.edge_count(y)] += q;
                }
            }
        }
        out
    }
}
