//! On-disk formats shared by the subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use qubit_settle::ansatz::CircuitDescriptor;
use qubit_settle::optimize::{EcdfReport, GradientVariance, Optimizer, TrainTrace};
use qubit_settle::stats::ecdf_at;
use qubit_settle::{Covering, SettlementProblem};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "camelCase")]
pub enum RunConfig {
    #[serde(rename_all = "camelCase")]
    Compressed {
        ancillas: usize,
        extra_registers: usize,
        depth: usize,
        optimizer: Optimizer,
        learning_rate: f64,
        shots: u64,
        lambda: f64,
        eta: f64,
        seed: u64,
        iters: usize,
        exact: bool,
    },
    #[serde(rename_all = "camelCase")]
    Qaoa {
        p_depth: usize,
        cycles: usize,
        inner_iters: usize,
        shots: u64,
        lambda: f64,
        seed: u64,
    },
}

impl RunConfig {
    pub fn lambda(&self) -> f64 {
        match self {
            RunConfig::Compressed { lambda, .. } | RunConfig::Qaoa { lambda, .. } => *lambda,
        }
    }
}

/// Everything needed to rebuild a trained circuit and re-sample it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunFile {
    pub config: RunConfig,
    pub problem_hash: String,
    pub problem: SettlementProblem,
    pub circuit: CircuitDescriptor,
    pub covering: Covering,
    /// Trained slack of the QAOA cost layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<Vec<f64>>,
    pub trace: TrainTrace,
    pub final_params: Vec<f64>,
    pub ecdf: Vec<(f64, f64)>,
    pub best_vector: Vec<u8>,
    pub best_cost: f64,
}

impl RunFile {
    pub fn load(path: &Path) -> Result<RunFile> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let run: RunFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(
            run.problem.content_hash() == run.problem_hash,
            "{}: embedded problem does not match its hash",
            path.display()
        );
        Ok(run)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// Sorted costs with their ECDF next to the sorted random baseline.
pub fn ecdf_csv(header: &str, report: &EcdfReport) -> String {
    let mut out = format!("# {header}\ncost,ecdf,random_cost,random_ecdf\n");
    let mut costs = report.costs.clone();
    let mut random = report.random_costs.clone();
    costs.sort_by(f64::total_cmp);
    random.sort_by(f64::total_cmp);
    for (c, r) in costs.iter().zip(&random) {
        let _ = writeln!(out, "{c},{},{r},{}", ecdf_at(&report.ecdf, *c), ecdf_at(&report.random_ecdf, *r));
    }
    out
}

/// `index,bits,cost` rows; bit `i` of the index is transaction `i`.
pub fn table_csv(header: &str, table: &[f64], num_bits: usize) -> String {
    let mut out = format!("# {header}\nindex,bits,cost\n");
    for (idx, cost) in table.iter().enumerate() {
        let bits: String = (0..num_bits).map(|i| if idx >> i & 1 == 1 { '1' } else { '0' }).collect();
        let _ = writeln!(out, "{idx},{bits},{cost}");
    }
    out
}

pub fn gradvar_csv(header: &str, rows: &[(usize, GradientVariance, GradientVariance)]) -> String {
    let mut out = format!("# {header}\ndepth,regpres_median,hwe_median,regpres_mean,hwe_mean\n");
    for (depth, rp, hwe) in rows {
        let mean = |v: &GradientVariance| v.per_theta.iter().sum::<f64>() / v.per_theta.len() as f64;
        let _ = writeln!(out, "{depth},{},{},{},{}", rp.median, hwe.median, mean(rp), mean(hwe));
    }
    out
}
