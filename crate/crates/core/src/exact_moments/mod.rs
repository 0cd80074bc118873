//! Exact stationary moments of the edge-count process.

mod chain;
mod closed_form;

pub use chain::{
    build_joint_chain, cross_moment_lag1, cross_moment_lagk, expected_squared_increment,
    stationary_joint, JointChain, MAX_CHAIN_N, MAX_DUMP_N,
};
pub use closed_form::{
    binomial, edge_count_law_given_i, expected_edges_given_k, mean_s, second_moment_s,
    vertex_stationary,
};

pub(crate) use closed_form::{mean_s_raw, second_moment_raw, EdgeProbs};

use crate::error::Result;
use crate::model::ModelParams;

/// The four moments used by the estimator and the experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet {
    /// `E[S]`
    pub m1: f64,
    /// `E[S^2]`
    pub m2: f64,
    /// `E[(S(t+1) - S(t))^2]`
    pub m3: f64,
    /// `E[S(t) S(t+1)]`
    pub cross1: f64,
}

impl MomentSet {
    pub fn compute(params: &ModelParams) -> Result<Self> {
        let chain = build_joint_chain(params)?;
        let m1 = mean_s(params);
        let m2 = second_moment_s(params);
        let cross1 = chain.cross_moment(1)?;
        Ok(Self {
            m1,
            m2,
            m3: 2.0 * m2 - 2.0 * cross1,
            cross1,
        })
    }
}
