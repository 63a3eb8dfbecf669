//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use qubit_settle::problem::{generate_instance, load_transactions, GenerateParams};
use qubit_settle::{SettlementProblem, Transaction};

pub fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/trades.csv")
}

pub fn source() -> Vec<Transaction> {
    load_transactions(fixture_path()).expect("fixture parses")
}

/// Normalized generated instance with `R = ⌊I/4⌋`.
pub fn instance(transactions: usize, parties: usize, seed: u64) -> SettlementProblem {
    raw_instance(transactions, parties, transactions / 4, seed).normalize()
}

pub fn raw_instance(transactions: usize, parties: usize, extra: usize, seed: u64) -> SettlementProblem {
    let params = GenerateParams::new(transactions, parties, extra, seed);
    generate_instance(&source(), &params).expect("generation succeeds")
}
