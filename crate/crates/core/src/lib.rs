//! Classifier-agnostic lower bounds on adversarial cross-entropy and 0-1 loss
//! for two-class problems.
//!
//! The pipeline is: a [`LabeledDataset`] of weighted support points, a
//! bipartite [`ConflictGraph`] joining points of opposite classes whose
//! adversarial neighborhoods overlap, and the recursive max-flow solver in
//! [`optprob`] that returns the optimal per-point correct-classification
//! probabilities together with an exact dual certificate. [`bounds`] checks
//! that certificate in rational arithmetic and carries an independent
//! Frank-Wolfe solver; [`gaussian`] has the closed form for a symmetric
//! two-Gaussian mixture.

pub mod bounds;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod linopt;
pub mod maxflow;
pub mod optprob;
pub mod rational;
pub mod rng;

pub use nalgebra;

pub use bounds::{
    cross_entropy_value, frank_wolfe_reference, verify_certificate, zero_one_bound, CheckReport,
    FrankWolfeResult, ZeroOneBound,
};
pub use dataset::{Label, LabeledDataset};
pub use error::{Error, Result};
pub use gaussian::{GaussianProblem, GaussianSolution};
pub use geometry::{build_conflict_graph, ConflictGraph, NeighborhoodSpec, Norm};
pub use linopt::{lin_opt, LinOptResult, SubProblem};
pub use optprob::{opt_prob, solve, BoundCertificate, SolveOptions};
