//! Parameters, vertex/edge state and the linking functions that set the
//! activation probability of an edge between oppositely-stated vertices.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, ParamViolation, Result};
use crate::kv::KvMap;

/// Arithmetic-mean linking function `(p + q) / 2`.
pub fn link_mean(pi_plus: f64, pi_minus: f64) -> f64 {
    (pi_plus + pi_minus) / 2.0
}

/// Harmonic-type linking function `p q / (p + q)`, zero when `p + q = 0`.
///
/// Never exceeds `min(p, q)` and reaches its maximum `1/2` at `p = q = 1`.
pub fn link_harmonic(pi_plus: f64, pi_minus: f64) -> f64 {
    let s = pi_plus + pi_minus;
    if s > 0.0 {
        pi_plus * pi_minus / s
    } else {
        0.0
    }
}

/// Which linking function governs mixed (+,-) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Mean,
    Harmonic,
}

impl Link {
    pub const ALL: [Link; 2] = [Link::Mean, Link::Harmonic];

    pub fn apply(self, pi_plus: f64, pi_minus: f64) -> f64 {
        match self {
            Link::Mean => link_mean(pi_plus, pi_minus),
            Link::Harmonic => link_harmonic(pi_plus, pi_minus),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Link::Mean => "mean",
            Link::Harmonic => "harmonic",
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Link {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(Link::Mean),
            "harmonic" => Ok(Link::Harmonic),
            other => Err(Error::Parse(format!(
                "unknown link `{other}` (expected `mean` or `harmonic`)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexState {
    Plus,
    Minus,
}

impl VertexState {
    pub fn flipped(self) -> Self {
        match self {
            VertexState::Plus => VertexState::Minus,
            VertexState::Minus => VertexState::Plus,
        }
    }
}

/// Unvalidated parameter fields, as read from flags or a file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawParams {
    pub n: usize,
    pub alpha: f64,
    pub pi_plus: f64,
    pub pi_minus: f64,
    pub link: Link,
}

/// Validated model parameters.
///
/// `0 < alpha < 1`, both edge probabilities in `[0, 1]`, `n >= 2`, and under
/// [`Link::Mean`] additionally `pi_plus >= pi_minus`. Equality of the two
/// edge probabilities is accepted, though it makes the pair `(pi_plus,
/// pi_minus)` only weakly identifiable from edge counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    n: usize,
    alpha: f64,
    pi_plus: f64,
    pi_minus: f64,
    link: Link,
}

/// Checks every field and collects all violations rather than stopping at the first.
pub fn validate_params(raw: RawParams) -> Result<ModelParams> {
    let mut violations = Vec::new();
    if raw.n < 2 {
        violations.push(ParamViolation::OutOfRange {
            field: "n",
            value: raw.n as f64,
        });
    }
    if !(raw.alpha > 0.0 && raw.alpha < 1.0) {
        violations.push(ParamViolation::OutOfRange {
            field: "alpha",
            value: raw.alpha,
        });
    }
    let pp_ok = (0.0..=1.0).contains(&raw.pi_plus);
    let pm_ok = (0.0..=1.0).contains(&raw.pi_minus);
    if !pp_ok {
        violations.push(ParamViolation::OutOfRange {
            field: "pi_plus",
            value: raw.pi_plus,
        });
    }
    if !pm_ok {
        violations.push(ParamViolation::OutOfRange {
            field: "pi_minus",
            value: raw.pi_minus,
        });
    }
    if pp_ok && pm_ok && raw.link == Link::Mean && raw.pi_plus < raw.pi_minus {
        violations.push(ParamViolation::OrderingViolation {
            pi_plus: raw.pi_plus,
            pi_minus: raw.pi_minus,
        });
    }
    if violations.is_empty() {
        Ok(ModelParams {
            n: raw.n,
            alpha: raw.alpha,
            pi_plus: raw.pi_plus,
            pi_minus: raw.pi_minus,
            link: raw.link,
        })
    } else {
        Err(Error::InvalidParams(violations))
    }
}

impl ModelParams {
    pub fn new(n: usize, alpha: f64, pi_plus: f64, pi_minus: f64, link: Link) -> Result<Self> {
        validate_params(RawParams {
            n,
            alpha,
            pi_plus,
            pi_minus,
            link,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pi_plus(&self) -> f64 {
        self.pi_plus
    }

    pub fn pi_minus(&self) -> f64 {
        self.pi_minus
    }

    pub fn link(&self) -> Link {
        self.link
    }

    /// Probability of an active edge between a `+` and a `-` vertex.
    pub fn mixed_probability(&self) -> f64 {
        self.link.apply(self.pi_plus, self.pi_minus)
    }

    /// Number of edge slots `C(n, 2)`.
    pub fn edge_slots(&self) -> usize {
        pair_count(self.n)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        ModelParams::new(self.n, alpha, self.pi_plus, self.pi_minus, self.link)
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            n: self.n,
            alpha: self.alpha,
            pi_plus: self.pi_plus,
            pi_minus: self.pi_minus,
            link: self.link,
        }
    }

    pub fn to_kv(&self) -> KvMap {
        let mut map = KvMap::new();
        map.insert("n", self.n.to_string());
        map.insert("alpha", self.alpha.to_string());
        map.insert("pi_plus", self.pi_plus.to_string());
        map.insert("pi_minus", self.pi_minus.to_string());
        map.insert("link", self.link.as_str());
        map
    }

    pub fn from_kv(map: &KvMap) -> Result<Self> {
        fn required<T: FromStr>(map: &KvMap, key: &str) -> Result<T> {
            map.get_parsed(key)?
                .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
        }
        let link: String = required(map, "link")?;
        validate_params(RawParams {
            n: required(map, "n")?,
            alpha: required(map, "alpha")?,
            pi_plus: required(map, "pi_plus")?,
            pi_minus: required(map, "pi_minus")?,
            link: link.parse()?,
        })
    }
}

/// Edge probability for a pair of vertices in the given states.
pub fn pair_probability(a: VertexState, b: VertexState, params: &ModelParams) -> f64 {
    match (a, b) {
        (VertexState::Plus, VertexState::Plus) => params.pi_plus,
        (VertexState::Minus, VertexState::Minus) => params.pi_minus,
        _ => params.mixed_probability(),
    }
}

/// `C(n, 2)`.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Index of the slot for the unordered pair `i < j` in row-major upper-triangular order.
#[inline]
pub fn slot_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

/// Vertex states plus the set of active edges at one time step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState {
    states: Vec<VertexState>,
    edges: Vec<bool>,
    edge_count: usize,
}

impl SystemState {
    /// Builds a state from vertex labels and an upper-triangular presence vector.
    pub fn new(states: Vec<VertexState>, edges: Vec<bool>) -> Result<Self> {
        let n = states.len();
        if n < 2 {
            return Err(Error::OutOfRange {
                field: "n",
                value: n as f64,
            });
        }
        if edges.len() != pair_count(n) {
            return Err(Error::Parse(format!(
                "edge vector has {} slots, expected {}",
                edges.len(),
                pair_count(n)
            )));
        }
        let edge_count = edges.iter().filter(|&&e| e).count();
        Ok(Self {
            states,
            edges,
            edge_count,
        })
    }

    pub fn from_edge_list(states: Vec<VertexState>, list: &[(usize, usize)]) -> Result<Self> {
        let n = states.len();
        let mut edges = vec![false; pair_count(n)];
        for &(a, b) in list {
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if i == j || j >= n {
                return Err(Error::Parse(format!("invalid edge ({a}, {b}) for n = {n}")));
            }
            edges[slot_index(n, i, j)] = true;
        }
        Self::new(states, edges)
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[VertexState] {
        &self.states
    }

    pub fn edge_slots(&self) -> &[bool] {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i != j && j < self.n() && self.edges[slot_index(self.n(), i, j)]
    }

    /// Cached number of active edges.
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn plus_count(&self) -> usize {
        self.states
            .iter()
            .filter(|&&s| s == VertexState::Plus)
            .count()
    }

    pub(crate) fn flip_vertex(&mut self, v: usize) {
        self.states[v] = self.states[v].flipped();
    }

    /// Redraws every slot; `draw(i, j)` decides whether `(i, j)` is active.
    pub(crate) fn redraw_edges(&mut self, mut draw: impl FnMut(VertexState, VertexState) -> bool) {
        let n = self.n();
        let mut slot = 0;
        let mut count = 0;
        for i in 0..n {
            let si = self.states[i];
            for j in (i + 1)..n {
                let on = draw(si, self.states[j]);
                self.edges[slot] = on;
                count += on as usize;
                slot += 1;
            }
        }
        self.edge_count = count;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_link_values() {
        assert!((link_mean(0.9, 0.4) - 0.65).abs() < 1e-15);
        assert_eq!(link_mean(0.37, 0.37), 0.37);
        assert_eq!(link_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn harmonic_link_values() {
        assert_eq!(link_harmonic(1.0, 1.0), 0.5);
        assert_eq!(link_harmonic(0.0, 0.0), 0.0);
        assert!((link_harmonic(0.9, 0.4) - 0.276_923_076_923_077).abs() < 1e-12);
    }

    #[test]
    fn pair_probability_by_state() {
        use VertexState::*;
        let p = ModelParams::new(3, 0.3, 0.9, 0.4, Link::Mean).unwrap();
        assert_eq!(pair_probability(Plus, Plus, &p), 0.9);
        assert_eq!(pair_probability(Minus, Minus, &p), 0.4);
        assert!((pair_probability(Plus, Minus, &p) - 0.65).abs() < 1e-15);
        assert_eq!(
            pair_probability(Minus, Plus, &p),
            pair_probability(Plus, Minus, &p)
        );
    }

    #[test]
    fn validation() {
        assert!(ModelParams::new(3, 0.3, 0.9, 0.4, Link::Mean).is_ok());
        let err = ModelParams::new(3, 0.0, 0.9, 0.4, Link::Mean).unwrap_err();
        assert_eq!(err.code(), "OutOfRange");
        match err {
            Error::InvalidParams(v) => assert_eq!(
                v,
                vec![ParamViolation::OutOfRange {
                    field: "alpha",
                    value: 0.0
                }]
            ),
            e => panic!("unexpected {e:?}"),
        }
        let err = ModelParams::new(3, 0.3, 0.4, 0.9, Link::Mean).unwrap_err();
        assert_eq!(err.code(), "OrderingViolation");
        // ordering only binds the mean link
        assert!(ModelParams::new(3, 0.3, 0.4, 0.9, Link::Harmonic).is_ok());
        assert!(ModelParams::new(3, 0.3, 0.5, 0.5, Link::Mean).is_ok());
        assert!(ModelParams::new(1, 0.3, 0.5, 0.5, Link::Mean).is_err());
        assert!(ModelParams::new(3, f64::NAN, 0.5, 0.5, Link::Mean).is_err());
        assert!(ModelParams::new(3, 1.0, 0.5, 0.5, Link::Mean).is_err());
    }

    #[test]
    fn all_violations_are_reported() {
        match ModelParams::new(1, 1.5, -0.1, 2.0, Link::Harmonic) {
            Err(Error::InvalidParams(v)) => assert_eq!(v.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kv_round_trip() {
        let p = ModelParams::new(7, 0.123456789, 0.9, 0.1 + 0.2, Link::Harmonic).unwrap();
        let back = ModelParams::from_kv(&KvMap::parse(&p.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn edge_counting_and_slots() {
        use VertexState::*;
        let s = SystemState::from_edge_list(vec![Plus, Plus, Minus], &[(0, 1), (2, 1)]).unwrap();
        assert_eq!(s.edge_count(), 2);
        assert!(s.has_edge(1, 2));
        assert!(!s.has_edge(0, 2));
        assert!(SystemState::from_edge_list(vec![Plus, Plus, Minus], &[(0, 3)]).is_err());
        let n = 6;
        let mut seen = vec![false; pair_count(n)];
        for i in 0..n {
            for j in (i + 1)..n {
                let k = slot_index(n, i, j);
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.into_iter().all(|x| x));
    }

    proptest! {
        #[test]
        fn harmonic_below_min(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let f = link_harmonic(p, q);
            prop_assert!(f <= p.min(q) + 1e-15);
            if p > 0.0 && q > 0.0 {
                prop_assert!(f < p.min(q));
            }
        }

        #[test]
        fn mean_strictly_between(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            prop_assume!(p > q);
            let f = link_mean(p, q);
            prop_assert!(q < f && f < p);
        }

        #[test]
        fn links_are_symmetric(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            for link in Link::ALL {
                prop_assert_eq!(link.apply(p, q), link.apply(q, p));
            }
        }
    }
}
