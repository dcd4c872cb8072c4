//! Exact computations on a finite probability space: discrete
//! g-expectations, measure changes, the pre/post-default split of conditional
//! expectations, and entropic penalty terms.

pub mod gexp;
pub mod measure;
pub mod penalty;
pub mod suite;
pub mod tree;

pub use gexp::{discrete_g_expectation, relevance_check, RelevanceWitness, TreeDriver, TreeRisk};
pub use measure::{decompose_conditional_expectation, sample_measure, Decomposition, MeasureChange, Perturbation};
pub use penalty::{entropic_penalty, penalty_inequality_check, PenaltyComparison, PenaltyInequalityReport};
pub use tree::{Filtration, FiniteTreeModel, Outcome, TreeSpec};
pub use suite::{run_dual_suite, DualSuiteConfig};
