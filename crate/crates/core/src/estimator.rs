//! Marginal-based cost estimation for compressed encodings.
//!
//! The cost of a bit-vector distribution only depends on the marginals
//! `p_i = P(x_i = 1)` and `p_ij = P(x_i = x_j = 1)`. From measurements we
//! estimate
//!
//! ```text
//! p̂_i  = #(x̃_i = 1) / #(x̃_i ≠ −1)
//! q̂_ij = #(x̃_i = x̃_j = 1) / #(x̃_i ≠ −1, x̃_j ≠ −1)
//! p̂_ij = (1 − μ̂_ij)·q̂_ij + μ̂_ij·p̂_i·p̂_j
//! ```
//!
//! where `μ̂_ij` weighs how often the pair is observed from different
//! registers. The cost estimate is
//!
//! ```text
//! Ĉ = Σ_{i≠j} p̂_ij A_ij + Σ_i p̂_i (A_ii + b_i(ŝ)) + c(ŝ),   ŝ = max(0, d + Σ_i p̂_i V_(i))
//! ```
//!
//! plus an optional penalty `R̂ = η Σ_r (r̂_r − 1/N_r)²` on the register
//! frequencies `r̂_r`.
//!
//! All tallies are linear in the outcome weights, so exact probabilities,
//! shot counts and parameter-shift combinations of either go through the
//! same [`MarginalTally`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{AnsatzKind, ParamCircuit};
use crate::encoding::Covering;
use crate::problem::QuboData;
use crate::rng::derive_seed;
use crate::simulator::{run, run_shifted, shift_rule, Initial, MeasurementRecord, SimError, StateVector};

/// Largest factor register for which [`build_hermitian_cost`] stores
/// diagonals.
pub const MAX_HERMITIAN_QUBITS: usize = 12;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("state has {state} qubits but the covering needs {covering}")]
    QubitMismatch { state: usize, covering: usize },
    #[error("covering has {covering} bits but the QUBO has {qubo}")]
    BitMismatch { covering: usize, qubo: usize },
    #[error("slack has {got} entries, expected {expected}")]
    SlackLength { expected: usize, got: usize },
    #[error("no measurements to estimate from")]
    NoShots,
    #[error("{0} qubits per factor is too many for a stored diagonal (max {MAX_HERMITIAN_QUBITS})")]
    TooManyQubits(usize),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// How `μ̂_ij` is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MuMode {
    /// `√(S_i S_j) / (√(S_i S_j) + S_ij)` with `S_i` the fraction of shots
    /// that see bit `i` and `S_ij` those that see both bits.
    SharedSeen,
    /// As above but with `S_i − S_ij` in place of `S_i`, i.e. only shots
    /// seeing one bit without the other count as cross-register evidence.
    /// Same-register pairs of a disjoint covering get `μ̂ = 0` and
    /// cross-register pairs `μ̂ = 1`.
    #[default]
    CrossRegister,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mu_mode: MuMode,
    /// Observation fraction below which `p̂ = 1/2` and `q̂ = 1/4` are used.
    pub epsilon: f64,
    /// Treat the observation fractions as the constants `n_i/N_r` and
    /// `n_ij/N_r` when differentiating (valid for register-preserving
    /// circuits).
    pub fixed_denominators: bool,
}

impl EstimatorConfig {
    /// Defaults for a covering with `n_registers` registers:
    /// `ε = 1/(10·N_r)`, cross-register `μ̂`, quotient-rule gradients.
    pub fn new(n_registers: usize) -> Self {
        EstimatorConfig {
            mu_mode: MuMode::CrossRegister,
            epsilon: 1.0 / (10.0 * n_registers as f64),
            fixed_denominators: false,
        }
    }

    /// Defaults for `circuit`: fixed denominators for register-preserving
    /// circuits.
    pub fn for_circuit(circuit: &ParamCircuit) -> Self {
        EstimatorConfig {
            fixed_denominators: circuit.kind == AnsatzKind::RegisterPreserving,
            ..Self::new(circuit.n_registers())
        }
    }
}

/// Default regularization weight: off for register-preserving circuits.
pub fn default_eta(kind: AnsatzKind) -> f64 {
    match kind {
        AnsatzKind::RegisterPreserving | AnsatzKind::Qaoa => 0.0,
        AnsatzKind::HardwareEfficient => 1.0,
    }
}

/// Outcome-weighted counts. Pair matrices are dense `I × I`, symmetric,
/// with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTally {
    pub num_bits: usize,
    pub total: f64,
    /// Per register weight.
    pub registers: Vec<f64>,
    /// Weight of outcomes setting bit `i` to 1.
    pub ones: Vec<f64>,
    /// Weight of outcomes that set bit `i` at all.
    pub seen: Vec<f64>,
    pub pair_ones: Vec<f64>,
    pub pair_seen: Vec<f64>,
}

impl MarginalTally {
    /// Tally from a weight per basis index of the `n_a + n_r` qubits.
    pub fn from_weights(weights: &[f64], covering: &Covering) -> Self {
        let n_a = covering.n_ancilla();
        let n = covering.num_bits();
        let n_regs = covering.n_registers();
        let anc_states = 1usize << n_a;
        let mut registers = vec![0.0; n_regs];
        let mut ones = vec![0.0; n];
        let mut seen = vec![0.0; n];
        let mut pair_ones = vec![0.0; n * n];
        let mut pair_seen = vec![0.0; n * n];
        let mut bit_ones = vec![0.0; n_a];
        let mut both_ones = vec![0.0; n_a * n_a];
        for r in 0..n_regs {
            let block = &weights[r * anc_states..(r + 1) * anc_states];
            let w_r: f64 = block.iter().sum();
            registers[r] = w_r;
            let bits: Vec<(usize, usize)> = covering.register_bits(r).collect();
            if bits.is_empty() {
                continue;
            }
            bit_ones.iter_mut().for_each(|v| *v = 0.0);
            both_ones.iter_mut().for_each(|v| *v = 0.0);
            for (anc, &w) in block.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for l in 0..n_a {
                    if anc >> l & 1 == 1 {
                        bit_ones[l] += w;
                        for m in l + 1..n_a {
                            if anc >> m & 1 == 1 {
                                both_ones[l * n_a + m] += w;
                            }
                        }
                    }
                }
            }
            for (a, &(i, li)) in bits.iter().enumerate() {
                seen[i] += w_r;
                ones[i] += bit_ones[li - 1];
                for &(j, lj) in &bits[a + 1..] {
                    let (lo, hi) = ((li.min(lj)) - 1, (li.max(lj)) - 1);
                    let joint = both_ones[lo * n_a + hi];
                    for (x, y) in [(i, j), (j, i)] {
                        pair_seen[x * n + y] += w_r;
                        pair_ones[x * n + y] += joint;
                    }
                }
            }
        }
        MarginalTally {
            num_bits: n,
            total: weights.iter().sum(),
            registers,
            ones,
            seen,
            pair_ones,
            pair_seen,
        }
    }

    pub fn from_records(records: &[MeasurementRecord], covering: &Covering) -> Self {
        let n_a = covering.n_ancilla();
        let mut weights = vec![0.0; covering.n_registers() << n_a];
        for r in records {
            weights[r.index(n_a)] += 1.0;
        }
        Self::from_weights(&weights, covering)
    }

    pub fn from_counts(counts: &[u64], covering: &Covering) -> Self {
        let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::from_weights(&weights, covering)
    }

    /// Every entry divided by `total`; the tally of a probability
    /// distribution is already normalized.
    pub fn normalized(mut self) -> Self {
        let t = self.total;
        if t > 0.0 {
            for v in self
                .registers
                .iter_mut()
                .chain(&mut self.ones)
                .chain(&mut self.seen)
                .chain(&mut self.pair_ones)
                .chain(&mut self.pair_seen)
            {
                *v /= t;
            }
            self.total = 1.0;
        }
        self
    }
}

/// `p̂`, `q̂`, `μ̂` and `r̂` with the tally they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimates {
    pub num_bits: usize,
    pub p_hat: Vec<f64>,
    /// Dense `I × I`; zero for pairs never observed together.
    pub q_hat: Vec<f64>,
    /// Dense `I × I`.
    pub mu_hat: Vec<f64>,
    pub reg_freq: Vec<f64>,
    /// Whether `p̂_i` fell back to 1/2.
    pub p_fallback: Vec<bool>,
    /// Whether `q̂_ij` is a fallback or structural zero (constant in `θ`).
    pub q_constant: Vec<bool>,
    /// Normalized counts.
    pub tally: MarginalTally,
}

fn mu_value(mode: MuMode, seen_i: f64, seen_j: f64, pair_seen: f64) -> f64 {
    let (a, b) = match mode {
        MuMode::SharedSeen => (seen_i, seen_j),
        MuMode::CrossRegister => ((seen_i - pair_seen).max(0.0), (seen_j - pair_seen).max(0.0)),
    };
    let cross = (a * b).sqrt();
    if cross + pair_seen <= 0.0 {
        1.0
    } else {
        cross / (cross + pair_seen)
    }
}

impl MarginalEstimates {
    pub fn from_tally(tally: MarginalTally, covering: &Covering, config: &EstimatorConfig) -> Self {
        let tally = tally.normalized();
        let n = tally.num_bits;
        let mut p_hat = vec![0.5; n];
        let mut p_fallback = vec![true; n];
        for i in 0..n {
            if tally.seen[i] >= config.epsilon && tally.seen[i] > 0.0 {
                p_hat[i] = (tally.ones[i] / tally.seen[i]).clamp(0.0, 1.0);
                p_fallback[i] = false;
            }
        }
        let mut q_hat = vec![0.0; n * n];
        let mut mu_hat = vec![1.0; n * n];
        let mut q_constant = vec![true; n * n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i * n + j;
                if covering.pair_multiplicity(i, j) == 0 {
                    continue;
                }
                let s = tally.pair_seen[k];
                if s >= config.epsilon && s > 0.0 {
                    q_hat[k] = (tally.pair_ones[k] / s).clamp(0.0, 1.0);
                    q_constant[k] = false;
                } else {
                    q_hat[k] = 0.25;
                }
                mu_hat[k] = mu_value(config.mu_mode, tally.seen[i], tally.seen[j], s);
            }
        }
        MarginalEstimates {
            num_bits: n,
            p_hat,
            q_hat,
            mu_hat,
            reg_freq: tally.registers.clone(),
            p_fallback,
            q_constant,
            tally,
        }
    }

    /// `p̂_ij` for `i ≠ j`.
    pub fn p_pair(&self, i: usize, j: usize) -> f64 {
        let k = i * self.num_bits + j;
        (1.0 - self.mu_hat[k]) * self.q_hat[k] + self.mu_hat[k] * self.p_hat[i] * self.p_hat[j]
    }

    /// Replace every `μ̂_ij` with a fixed value.
    pub fn with_mu(mut self, mu: &[f64]) -> Self {
        self.mu_hat.copy_from_slice(mu);
        self
    }
}

pub fn estimate_marginals(
    records: &[MeasurementRecord],
    covering: &Covering,
    config: &EstimatorConfig,
) -> Result<MarginalEstimates, EstimatorError> {
    if records.is_empty() {
        return Err(EstimatorError::NoShots);
    }
    Ok(MarginalEstimates::from_tally(MarginalTally::from_records(records, covering), covering, config))
}

pub fn estimate_from_counts(
    counts: &[u64],
    covering: &Covering,
    config: &EstimatorConfig,
) -> Result<MarginalEstimates, EstimatorError> {
    if counts.iter().all(|&c| c == 0) {
        return Err(EstimatorError::NoShots);
    }
    Ok(MarginalEstimates::from_tally(MarginalTally::from_counts(counts, covering), covering, config))
}

fn check_state(state: &StateVector, covering: &Covering) -> Result<(), EstimatorError> {
    let needed = covering.n_ancilla() + covering.n_register();
    if state.n_qubits() != needed {
        return Err(EstimatorError::QubitMismatch {
            state: state.n_qubits(),
            covering: needed,
        });
    }
    Ok(())
}

/// Infinite-shot limit of [`estimate_marginals`], read off the amplitudes.
pub fn exact_marginals(
    state: &StateVector,
    covering: &Covering,
    config: &EstimatorConfig,
) -> Result<MarginalEstimates, EstimatorError> {
    check_state(state, covering)?;
    let tally = MarginalTally::from_weights(&state.probabilities(), covering);
    Ok(MarginalEstimates::from_tally(tally, covering, config))
}

/// `ŝ = max(0, d + Σ_i p̂_i V_(i))`.
pub fn optimal_slack(p_hat: &[f64], qubo: &QuboData) -> Vec<f64> {
    let mut y = qubo.offsets.clone();
    for (i, &p) in p_hat.iter().enumerate() {
        for (yl, v) in y.iter_mut().zip(qubo.v_row(i)) {
            *yl += p * v;
        }
    }
    y.into_iter().map(|v| v.max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// `Ĉ` without the regularization term.
    pub cost: f64,
    pub slack: Vec<f64>,
    pub reg_penalty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<f64>>,
}

impl CostReport {
    pub fn total(&self) -> f64 {
        self.cost + self.reg_penalty
    }
}

/// `η Σ_r (r̂_r − 1/N_r)²`.
pub fn regularization(reg_freq: &[f64], eta: f64) -> f64 {
    let target = 1.0 / reg_freq.len() as f64;
    eta * reg_freq.iter().map(|r| (r - target).powi(2)).sum::<f64>()
}

fn check_bits(estimates: &MarginalEstimates, qubo: &QuboData) -> Result<(), EstimatorError> {
    if estimates.num_bits != qubo.num_bits {
        return Err(EstimatorError::BitMismatch {
            covering: estimates.num_bits,
            qubo: qubo.num_bits,
        });
    }
    Ok(())
}

/// `Ĉ` at a given slack.
pub fn cost_at_slack(
    estimates: &MarginalEstimates,
    qubo: &QuboData,
    slack: &[f64],
    eta: f64,
) -> Result<CostReport, EstimatorError> {
    check_bits(estimates, qubo)?;
    if slack.len() != qubo.balance_len {
        return Err(EstimatorError::SlackLength {
            expected: qubo.balance_len,
            got: slack.len(),
        });
    }
    let n = qubo.num_bits;
    let (b, c) = qubo.b_c_unchecked(slack);
    let mut total = c;
    for i in 0..n {
        total += estimates.p_hat[i] * (qubo.a_entry(i, i) + b[i]);
        for j in 0..n {
            if i != j {
                let a = qubo.a_entry(i, j);
                if a != 0.0 {
                    total += estimates.p_pair(i, j) * a;
                }
            }
        }
    }
    Ok(CostReport {
        cost: total,
        slack: slack.to_vec(),
        reg_penalty: regularization(&estimates.reg_freq, eta),
        gradient: None,
    })
}

/// `Ĉ` at the optimal slack `ŝ`.
pub fn cost(estimates: &MarginalEstimates, qubo: &QuboData, eta: f64) -> Result<CostReport, EstimatorError> {
    check_bits(estimates, qubo)?;
    let slack = optimal_slack(&estimates.p_hat, qubo);
    cost_at_slack(estimates, qubo, &slack, eta)
}

/// How circuit outputs are turned into tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Evaluation {
    /// Exact probabilities.
    Exact,
    /// `n_shots` fresh measurements per circuit evaluation.
    Shots { n_shots: u64, seed: u64 },
}

fn outcome_weights(state: &StateVector, eval: Evaluation, tags: &[u64]) -> Vec<f64> {
    match eval {
        Evaluation::Exact => state.probabilities(),
        Evaluation::Shots { n_shots, seed } => {
            let counts = state.sample_counts(n_shots, derive_seed(seed, tags));
            counts.into_iter().map(|c| c as f64 / n_shots as f64).collect()
        }
    }
}

/// Estimate the cost of `circuit` at `params`.
pub fn evaluate_cost(
    circuit: &ParamCircuit,
    params: &[f64],
    qubo: &QuboData,
    covering: &Covering,
    config: &EstimatorConfig,
    eval: Evaluation,
    eta: f64,
) -> Result<CostReport, EstimatorError> {
    let state = run(circuit, params, Initial::Zero)?;
    check_state(&state, covering)?;
    if let Evaluation::Shots { n_shots: 0, .. } = eval {
        return Err(EstimatorError::NoShots);
    }
    let weights = outcome_weights(&state, eval, &[0]);
    let est = MarginalEstimates::from_tally(MarginalTally::from_weights(&weights, covering), covering, config);
    cost(&est, qubo, eta)
}

/// Derivative of a normalized tally along one parameter, as the same
/// linear combination of shifted-circuit tallies.
fn derivative_tally(
    circuit: &ParamCircuit,
    params: &[f64],
    covering: &Covering,
    slot: usize,
    eval: Evaluation,
) -> Result<MarginalTally, EstimatorError> {
    let mut dweights = vec![0.0; 1usize << circuit.n_qubits()];
    for gate_index in circuit.gates_for_param(slot) {
        for (k, (shift, coeff)) in shift_rule(&circuit.body[gate_index], gate_index)?.into_iter().enumerate() {
            let state = run_shifted(circuit, params, Initial::Zero, gate_index, shift)?;
            let w = outcome_weights(&state, eval, &[1, slot as u64, gate_index as u64, k as u64]);
            for (d, x) in dweights.iter_mut().zip(w) {
                *d += coeff * x;
            }
        }
    }
    let mut t = MarginalTally::from_weights(&dweights, covering);
    // Derivative weights sum to zero; keep the tally unnormalized.
    t.total = 1.0;
    Ok(t)
}

/// `Ĉ + R̂` and its gradient by the parameter-shift rule and the chain
/// rule through `p̂`, `q̂`, `ŝ` and `r̂`, holding `μ̂` constant.
///
/// With `fixed_denominators` the observation fractions are the constants
/// `n_i/N_r` and `n_ij/N_r`; otherwise numerator and denominator are
/// differentiated separately (quotient rule).
pub fn gradient(
    circuit: &ParamCircuit,
    params: &[f64],
    qubo: &QuboData,
    covering: &Covering,
    config: &EstimatorConfig,
    eval: Evaluation,
    eta: f64,
) -> Result<CostReport, EstimatorError> {
    let state = run(circuit, params, Initial::Zero)?;
    check_state(&state, covering)?;
    if covering.num_bits() != qubo.num_bits {
        return Err(EstimatorError::BitMismatch {
            covering: covering.num_bits(),
            qubo: qubo.num_bits,
        });
    }
    if let Evaluation::Shots { n_shots: 0, .. } = eval {
        return Err(EstimatorError::NoShots);
    }
    let weights = outcome_weights(&state, eval, &[0]);
    let est = MarginalEstimates::from_tally(MarginalTally::from_weights(&weights, covering), covering, config);
    let mut report = cost(&est, qubo, eta)?;

    let n = qubo.num_bits;
    let n_regs = covering.n_registers() as f64;
    let (b, _) = qubo.b_c_unchecked(&report.slack);
    let t = &est.tally;
    let active: Vec<bool> = report.slack.iter().map(|&s| s > 0.0).collect();

    let grad: Result<Vec<f64>, EstimatorError> = (0..circuit.param_count)
        .into_par_iter()
        .map(|slot| {
            let dt = derivative_tally(circuit, params, covering, slot, eval)?;
            let mut dp = vec![0.0; n];
            for i in 0..n {
                if est.p_fallback[i] {
                    continue;
                }
                dp[i] = if config.fixed_denominators {
                    dt.ones[i] * n_regs / covering.multiplicity(i) as f64
                } else {
                    (dt.ones[i] - est.p_hat[i] * dt.seen[i]) / t.seen[i]
                };
            }
            let mut d_cost = 0.0;
            for i in 0..n {
                d_cost += dp[i] * (qubo.a_entry(i, i) + b[i]);
                for j in 0..n {
                    let a = qubo.a_entry(i, j);
                    if i == j || a == 0.0 {
                        continue;
                    }
                    let k = i * n + j;
                    let dq = if est.q_constant[k] {
                        0.0
                    } else if config.fixed_denominators {
                        dt.pair_ones[k] * n_regs / covering.pair_multiplicity(i, j) as f64
                    } else {
                        (dt.pair_ones[k] - est.q_hat[k] * dt.pair_seen[k]) / t.pair_seen[k]
                    };
                    let mu = est.mu_hat[k];
                    let dpair = (1.0 - mu) * dq + mu * (est.p_hat[j] * dp[i] + est.p_hat[i] * dp[j]);
                    d_cost += dpair * a;
                }
            }
            // Slack terms: ∇_s b_i = −2λV_(i), ∇_s c = 2λ(s − d).
            let mut ds = vec![0.0; qubo.balance_len];
            for (i, &dpi) in dp.iter().enumerate() {
                if dpi != 0.0 {
                    for (l, v) in qubo.v_row(i).iter().enumerate() {
                        ds[l] += dpi * v;
                    }
                }
            }
            for (l, d) in ds.iter_mut().enumerate() {
                if !active[l] {
                    *d = 0.0;
                }
            }
            for (i, &p) in est.p_hat.iter().enumerate() {
                let dot: f64 = qubo.v_row(i).iter().zip(&ds).map(|(v, d)| v * d).sum();
                d_cost += p * (-2.0 * qubo.lambda) * dot;
            }
            for l in 0..qubo.balance_len {
                d_cost += 2.0 * qubo.lambda * (report.slack[l] - qubo.offsets[l]) * ds[l];
            }
            let target = 1.0 / n_regs;
            let d_reg: f64 = est
                .reg_freq
                .iter()
                .zip(&dt.registers)
                .map(|(r, dr)| 2.0 * eta * (r - target) * dr)
                .sum();
            Ok(d_cost + d_reg)
        })
        .collect();
    report.gradient = Some(grad?);
    Ok(report)
}

/// Fixed `μ` from covering multiplicities, as used by the diagonal
/// observable.
pub fn structural_mu(covering: &Covering, mode: MuMode) -> Vec<f64> {
    let n = covering.num_bits();
    let mut mu = vec![1.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                mu[i * n + j] = mu_value(
                    mode,
                    covering.multiplicity(i) as f64,
                    covering.multiplicity(j) as f64,
                    covering.pair_multiplicity(i, j) as f64,
                );
            }
        }
    }
    mu
}

/// The cost at fixed slack as a diagonal observable on two copies of the
/// register-uniform state:
///
/// ```text
/// C = Σ_{i≠j} A_ij [(1 − μ_ij) Q_ij ⊗ 𝟙 + μ_ij P_i ⊗ P_j] + Σ_i (A_ii + b_i(s)) P_i ⊗ 𝟙 + c(s)
/// ```
///
/// `P_i` and `Q_ij` are the projectors onto `x_i = 1` (and `x_j = 1`)
/// summed over the registers covering the bits, scaled by `N_r/n_i` and
/// `N_r/n_ij`. Only the `I` single-copy diagonals `P_i` and the pair
/// diagonals `Q_ij` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianCost {
    pub n_qubits: usize,
    pub num_bits: usize,
    pub p_diag: Vec<Vec<f64>>,
    /// `(i, j, diagonal)` for pairs sharing a register, `i ≠ j`.
    pub q_diag: Vec<(usize, usize, Vec<f64>)>,
    pub mu: Vec<f64>,
    pub a: Vec<f64>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

pub fn build_hermitian_cost(
    qubo: &QuboData,
    covering: &Covering,
    slack: &[f64],
    mu_mode: MuMode,
) -> Result<HermitianCost, EstimatorError> {
    let n_qubits = covering.n_ancilla() + covering.n_register();
    if n_qubits > MAX_HERMITIAN_QUBITS {
        return Err(EstimatorError::TooManyQubits(n_qubits));
    }
    if covering.num_bits() != qubo.num_bits {
        return Err(EstimatorError::BitMismatch {
            covering: covering.num_bits(),
            qubo: qubo.num_bits,
        });
    }
    if slack.len() != qubo.balance_len {
        return Err(EstimatorError::SlackLength {
            expected: qubo.balance_len,
            got: slack.len(),
        });
    }
    let n = qubo.num_bits;
    let n_a = covering.n_ancilla();
    let dim = 1usize << n_qubits;
    let n_regs = covering.n_registers() as f64;
    let mut p_diag = vec![vec![0.0; dim]; n];
    for (i, diag) in p_diag.iter_mut().enumerate() {
        let scale = n_regs / covering.multiplicity(i) as f64;
        for &(r, l) in covering.locations(i) {
            for anc in 0..1usize << n_a {
                if anc >> (l - 1) & 1 == 1 {
                    diag[(r << n_a) | anc] += scale;
                }
            }
        }
    }
    let mut q_diag = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let nij = covering.pair_multiplicity(i, j);
            if i == j || nij == 0 {
                continue;
            }
            let scale = n_regs / nij as f64;
            let mut diag = vec![0.0; dim];
            for &(r, li) in covering.locations(i) {
                if let Some(lj) = covering.position(r, j) {
                    for anc in 0..1usize << n_a {
                        if anc >> (li - 1) & 1 == 1 && anc >> (lj - 1) & 1 == 1 {
                            diag[(r << n_a) | anc] += scale;
                        }
                    }
                }
            }
            q_diag.push((i, j, diag));
        }
    }
    let (b, c) = qubo.b_c_unchecked(slack);
    let linear = (0..n).map(|i| qubo.a_entry(i, i) + b[i]).collect();
    Ok(HermitianCost {
        n_qubits,
        num_bits: n,
        p_diag,
        q_diag,
        mu: structural_mu(covering, mu_mode),
        a: qubo.a.clone(),
        linear,
        constant: c,
    })
}

impl HermitianCost {
    /// `⟨ψ⊗ψ|C|ψ⊗ψ⟩`, computed factor by factor.
    pub fn expectation(&self, state: &StateVector) -> Result<f64, EstimatorError> {
        if state.n_qubits() != self.n_qubits {
            return Err(EstimatorError::QubitMismatch {
                state: state.n_qubits(),
                covering: self.n_qubits,
            });
        }
        let probs = state.probabilities();
        let expect = |diag: &[f64]| diag.iter().zip(&probs).map(|(d, p)| d * p).sum::<f64>();
        let p: Vec<f64> = self.p_diag.iter().map(|d| expect(d)).collect();
        let n = self.num_bits;
        let mut total = self.constant;
        for i in 0..n {
            total += self.linear[i] * p[i];
            for j in 0..n {
                if i != j {
                    total += self.a[i * n + j] * self.mu[i * n + j] * p[i] * p[j];
                }
            }
        }
        for (i, j, diag) in &self.q_diag {
            let k = i * n + j;
            total += self.a[k] * (1.0 - self.mu[k]) * expect(diag);
        }
        Ok(total)
    }

    /// Full diagonal on `2·n_q` qubits; the first copy occupies the low
    /// bits. Intended for small checks only.
    pub fn materialize_doubled(&self) -> Vec<f64> {
        let dim = 1usize << self.n_qubits;
        let n = self.num_bits;
        let mut out = vec![self.constant; dim * dim];
        for hi in 0..dim {
            for lo in 0..dim {
                let v = &mut out[hi * dim + lo];
                for i in 0..n {
                    *v += self.linear[i] * self.p_diag[i][lo];
                    for j in 0..n {
                        if i != j {
                            *v += self.a[i * n + j] * self.mu[i * n + j] * self.p_diag[i][lo] * self.p_diag[j][hi];
                        }
                    }
                }
                for (i, j, diag) in &self.q_diag {
                    let k = i * n + j;
                    *v += self.a[k] * (1.0 - self.mu[k]) * diag[lo];
                }
            }
        }
        out
    }
}
