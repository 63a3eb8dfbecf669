//! Exhaustive references for small instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::ParamCircuit;
use crate::encoding::Covering;
use crate::estimator::{cost_at_slack, exact_marginals, optimal_slack, EstimatorConfig, EstimatorError};
use crate::problem::{QuboData, SettlementKind, SettlementProblem, Transaction};
use crate::simulator::{run, Initial, SimError};

/// Largest bit count [`brute_force`] enumerates.
pub const MAX_BRUTE_FORCE_BITS: usize = 22;
/// Largest bit count [`exact_expectation`] enumerates.
pub const MAX_EXPECTATION_BITS: usize = 20;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OracleError {
    #[error("{got} bits exceeds the enumeration limit of {max}")]
    TooManyBits { got: usize, max: usize },
    #[error("exact expectation needs a disjoint covering")]
    NonDisjointCovering,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Bit `i` of `index` is `x_i`.
pub fn bits_of(index: u64, num_bits: usize) -> Vec<u8> {
    (0..num_bits).map(|i| (index >> i & 1) as u8).collect()
}

pub fn index_of(x: &[u8]) -> u64 {
    x.iter().enumerate().map(|(i, &b)| u64::from(b) << i).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceResult {
    pub x_opt: Vec<u8>,
    pub cost_opt: f64,
    /// Cost of every bit-vector by index, when requested.
    pub table: Option<Vec<f64>>,
}

/// Relative tolerance under which two costs count as tied.
const TIE_TOLERANCE: f64 = 1e-9;

fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    let tol = TIE_TOLERANCE * a.0.abs().max(b.0.abs()).max(1.0);
    if (a.0 - b.0).abs() <= tol {
        if a.1 <= b.1 {
            a
        } else {
            b
        }
    } else if a.0 < b.0 {
        a
    } else {
        b
    }
}

/// Minimize [`QuboData::cost_of_bitvector`] over all `2^I` vectors; ties
/// go to the lowest index.
pub fn brute_force(qubo: &QuboData, keep_table: bool) -> Result<BruteForceResult, OracleError> {
    let n = qubo.num_bits;
    if n > MAX_BRUTE_FORCE_BITS {
        return Err(OracleError::TooManyBits {
            got: n,
            max: MAX_BRUTE_FORCE_BITS,
        });
    }
    let count = 1u64 << n;
    let score = |idx: u64| qubo.cost_of_bitvector(&bits_of(idx, n));
    let (cost_opt, best) = if keep_table {
        let table: Vec<f64> = (0..count).into_par_iter().map(score).collect();
        let best = table
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u64))
            .reduce(better)
            .expect("at least one vector");
        return Ok(BruteForceResult {
            x_opt: bits_of(best.1, n),
            cost_opt: best.0,
            table: Some(table),
        });
    } else {
        (0..count)
            .into_par_iter()
            .map(|idx| (score(idx), idx))
            .reduce(|| (f64::INFINITY, u64::MAX), better)
    };
    Ok(BruteForceResult {
        x_opt: bits_of(best, n),
        cost_opt,
        table: None,
    })
}

/// Independent exact minimum by depth-first branch and bound.
///
/// Costs are evaluated as `−wᵀx + λ Σ_l min(0, (Vᵀx + d)_l)²`, and a branch
/// is cut when even settling every remaining transaction without penalty
/// cannot beat the incumbent.
pub fn branch_and_bound(qubo: &QuboData) -> Result<(Vec<u8>, f64), OracleError> {
    let n = qubo.num_bits;
    if n > MAX_BRUTE_FORCE_BITS {
        return Err(OracleError::TooManyBits {
            got: n,
            max: MAX_BRUTE_FORCE_BITS,
        });
    }
    let mut suffix_weight = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_weight[i] = suffix_weight[i + 1] + qubo.weights[i];
    }
    struct Search<'a> {
        qubo: &'a QuboData,
        suffix_weight: Vec<f64>,
        x: Vec<u8>,
        best_x: Vec<u8>,
        best: f64,
    }
    impl Search<'_> {
        fn visit(&mut self, depth: usize, gain: f64, y: &mut Vec<f64>) {
            let n = self.qubo.num_bits;
            if depth == n {
                let penalty: f64 = y.iter().map(|&v| v.min(0.0).powi(2)).sum();
                let value = -gain + self.qubo.lambda * penalty;
                if value < self.best {
                    self.best = value;
                    self.best_x = self.x.clone();
                }
                return;
            }
            if -gain - self.suffix_weight[depth] >= self.best {
                return;
            }
            // Settling first finds good incumbents early.
            for choice in [1u8, 0] {
                self.x[depth] = choice;
                if choice == 1 {
                    for (yl, v) in y.iter_mut().zip(self.qubo.v_row(depth)) {
                        *yl += v;
                    }
                    self.visit(depth + 1, gain + self.qubo.weights[depth], y);
                    for (yl, v) in y.iter_mut().zip(self.qubo.v_row(depth)) {
                        *yl -= v;
                    }
                } else {
                    self.visit(depth + 1, gain, y);
                }
            }
            self.x[depth] = 0;
        }
    }
    let mut search = Search {
        qubo,
        suffix_weight,
        x: vec![0; n],
        best_x: vec![0; n],
        best: f64::INFINITY,
    };
    let mut y = qubo.offsets.clone();
    search.visit(0, 0.0, &mut y);
    Ok((search.best_x, search.best))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactExpectation {
    /// `E[xᵀAx + b(ŝ)ᵀx + c(ŝ)]` under the sampler's distribution.
    pub expectation: f64,
    /// `Ĉ` from exact marginals at the same slack.
    pub estimator_cost: f64,
    pub slack: Vec<f64>,
}

/// Expected cost of the greedy sampler's output at the slack `ŝ` of the
/// exact marginals.
///
/// For a disjoint covering the sampler draws each register's bits
/// independently from that register's conditional ancilla distribution,
/// so the bit-vector distribution is a product over registers and can be
/// enumerated. Registers observed with probability below `ε` use uniform
/// bits, mirroring the estimator fallback.
pub fn exact_expectation(
    circuit: &ParamCircuit,
    params: &[f64],
    qubo: &QuboData,
    covering: &Covering,
    config: &EstimatorConfig,
) -> Result<ExactExpectation, OracleError> {
    let n = qubo.num_bits;
    if n > MAX_EXPECTATION_BITS {
        return Err(OracleError::TooManyBits {
            got: n,
            max: MAX_EXPECTATION_BITS,
        });
    }
    if !covering.is_disjoint() {
        return Err(OracleError::NonDisjointCovering);
    }
    let state = run(circuit, params, Initial::Zero)?;
    let marginals = exact_marginals(&state, covering, config)?;
    let slack = optimal_slack(&marginals.p_hat, qubo);
    let estimator_cost = cost_at_slack(&marginals, qubo, &slack, 0.0)?.cost;

    let n_a = covering.n_ancilla();
    let probs = state.probabilities();
    // Conditional ancilla distribution per nonempty register.
    let mut factors: Vec<(Vec<(usize, usize)>, Vec<f64>)> = Vec::new();
    for r in 0..covering.n_registers() {
        let bits: Vec<(usize, usize)> = covering.register_bits(r).collect();
        if bits.is_empty() {
            continue;
        }
        let block = &probs[r << n_a..(r + 1) << n_a];
        let weight: f64 = block.iter().sum();
        let cond = if weight >= config.epsilon && weight > 0.0 {
            block.iter().map(|p| p / weight).collect()
        } else {
            vec![1.0 / block.len() as f64; block.len()]
        };
        factors.push((bits, cond));
    }
    let (b, c) = qubo.b_c_unchecked(&slack);
    let expectation: f64 = (0..1u64 << n)
        .into_par_iter()
        .map(|idx| {
            let x = bits_of(idx, n);
            let mut p = 1.0;
            for (bits, cond) in &factors {
                let anc: usize = bits.iter().map(|&(i, l)| usize::from(x[i]) << (l - 1)).sum();
                p *= cond[anc];
                if p == 0.0 {
                    return 0.0;
                }
            }
            let mut value = c;
            for i in 0..n {
                if x[i] == 1 {
                    value += b[i];
                    for j in 0..n {
                        if x[j] == 1 {
                            value += qubo.a_entry(i, j);
                        }
                    }
                }
            }
            p * value
        })
        .sum();
    Ok(ExactExpectation {
        expectation,
        estimator_cost,
        slack,
    })
}

/// Seven parties and eight free-of-payment transfers of one unit each.
///
/// Party 2 holds one unit and is asked to deliver it twice (transactions 1
/// and 2), so exactly one of them can settle. Transactions 7 → 4 → 3 form
/// a chain where each delivery is funded by the previous one. The optimum
/// settles seven transactions and is attained twice.
pub fn handcrafted_instance() -> SettlementProblem {
    let t = |sender, receiver| Transaction {
        sender,
        receiver,
        security: 1,
        quantity: 1.0,
        consideration: 0.0,
        kind: SettlementKind::Fop,
    };
    let transactions = vec![
        t(0, 1),
        t(2, 3),
        t(2, 4),
        t(0, 3),
        t(6, 0),
        t(1, 5),
        t(5, 1),
        t(5, 6),
    ];
    let mut balances = vec![vec![0.0, 0.0]; 7];
    for k in [0, 2, 5] {
        balances[k][1] = 1.0;
    }
    SettlementProblem::new(7, 2, transactions, balances, vec![vec![0.0, 0.0]; 7]).expect("valid instance")
}

/// Penalty weight used with [`handcrafted_instance`].
pub const HANDCRAFTED_LAMBDA: f64 = 10.0;
