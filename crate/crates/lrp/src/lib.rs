//! Electric-network toolkit for one-dimensional critical long-range percolation.
//!
//! The crate samples edge configurations of the critical (`s = 2`) long-range
//! percolation model on finite integer windows, computes effective resistances
//! and unit electric flows on the resulting conductance networks, verifies the
//! exact electric-network identities the analysis relies on (flow comparison,
//! rank-one inverse updates, cutset lower bounds), builds renormalized block
//! graphs with per-block classifications, and runs Monte Carlo campaigns that
//! estimate the resistance growth exponent.
//!
//! The numeric core ([`solver`], [`identities`] and the flow/energy kernels in
//! [`renorm`]) is generic over the scalar type through the [`Scalar`] trait;
//! `f64` is the default everywhere and the sampling/statistics layers are
//! `f64`-only by nature.

pub mod cli;
pub mod estimation;
pub mod identities;
pub mod model;
pub mod plot;
pub mod renorm;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub use model::{
    coupling_exponent, edge_probability, expected_degree, sample_window,
    sample_with_contracted_complement, Interval, LrpSample, ModelError, ModelParams, PairClass,
};
pub use solver::{
    brute_force_resistance, hat_resistance, restricted_resistance, set_resistance,
    two_point_resistance, Flow, Network, ResistanceResult, SolverError, Vertex,
};

/// Single-precision instantiations of the generic numeric core.
pub type Network32 = solver::Network<f32>;
pub type ResistanceResult32 = solver::ResistanceResult<f32>;
pub type Flow32 = solver::Flow<f32>;
