//! Qubit-efficient variational solver for transaction-settlement problems.
//!
//! The crate builds mixed-binary settlement instances from trade records,
//! turns them into penalty-form QUBO data with continuous slack variables,
//! compresses the `I` decision bits onto `n_a + n_r` simulated qubits
//! (ancillas carry bit values, registers address which subset of bits the
//! ancillas describe), and trains parameterized circuits against a
//! marginal-based cost estimator.
//!
//! Module map:
//!
//! - [`problem`]: instances, normalization, QUBO data, bit-vector cost.
//! - [`simulator`]: dense statevector simulation and shot sampling.
//! - [`ansatz`]: hardware-efficient and register-preserving circuits.
//! - [`encoding`]: coverings, qubit counts and greedy bit-vector assembly.
//! - [`estimator`]: marginal estimators, slack, cost, gradients, and the
//!   diagonal observable on the doubled register.
//! - [`optimize`]: gradient descent, trust-region gradient-free training,
//!   the QAOA baseline and ECDF evaluation.
//! - [`oracle`]: brute-force references used for validation.

pub mod ansatz;
pub mod encoding;
pub mod estimator;
pub mod optimize;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use ansatz::{AnsatzKind, ParamCircuit};
pub use encoding::Covering;
pub use estimator::{CostReport, EstimatorConfig, MarginalEstimates, MuMode};
pub use problem::{QuboData, SettlementKind, SettlementProblem, Transaction};
pub use simulator::{Gate, MeasurementRecord, StateVector};
