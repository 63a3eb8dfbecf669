//! Training loops and solution-quality evaluation.
//!
//! Compressed circuits are trained either by gradient descent on the
//! parameter-shift gradient of `Ĉ + R̂` or by a derivative-free
//! trust-region method that fits a linear model on a simplex of
//! evaluations. The QAOA baseline alternates between circuit parameters
//! and slack variables, since its cost layer depends on `s`.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::{build_qaoa, AnsatzError, ParamCircuit};
use crate::encoding::{Covering, EncodingError, GreedySampler};
use crate::estimator::{evaluate_cost, gradient, optimal_slack, EstimatorConfig, EstimatorError, Evaluation};
use crate::problem::QuboData;
use crate::rng::{derive_seed, seeded};
use crate::simulator::{run, Initial, SimError, MAX_QUBITS};
use crate::stats::{ecdf, mean, median, sample_variance};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} transactions exceed the simulator cap of {MAX_QUBITS} qubits")]
    TooManyQubits(usize),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Optimizer {
    #[serde(rename = "DESC")]
    Desc,
    #[serde(rename = "GFREE")]
    Gfree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// The learning rate is multiplied by `decay_factor` every
    /// `decay_every` iterations.
    pub decay_every: usize,
    pub decay_factor: f64,
    /// Gradient steps for DESC, cost evaluations for GFREE.
    pub max_iters: usize,
    pub n_shots: u64,
    pub seed: u64,
    pub eta: f64,
    pub exact_mode: bool,
    /// Initial and final trust radius of GFREE.
    pub rho_begin: f64,
    pub rho_end: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: Optimizer::Desc,
            learning_rate: 0.1,
            decay_every: 100,
            decay_factor: 0.5,
            max_iters: 200,
            n_shots: 20_000,
            seed: 0,
            eta: 0.0,
            exact_mode: false,
            rho_begin: 0.5,
            rho_end: 1e-3,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::InvalidConfig(m.to_string()));
        if self.optimizer == Optimizer::Desc && !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !self.exact_mode && self.n_shots == 0 {
            return bad("shot count must be positive");
        }
        if !(self.eta >= 0.0) {
            return bad("eta must be non-negative");
        }
        if self.optimizer == Optimizer::Gfree && !(self.rho_begin > self.rho_end && self.rho_end > 0.0) {
            return bad("trust radii must satisfy rho_begin > rho_end > 0");
        }
        Ok(())
    }

    fn evaluation(&self, tag: u64) -> Evaluation {
        if self.exact_mode {
            Evaluation::Exact
        } else {
            Evaluation::Shots {
                n_shots: self.n_shots,
                seed: derive_seed(self.seed, &[tag]),
            }
        }
    }

    pub fn learning_rate_at(&self, iter: usize) -> f64 {
        let steps = if self.decay_every == 0 { 0 } else { iter / self.decay_every };
        self.learning_rate * self.decay_factor.powi(steps as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub cost: f64,
    pub reg_penalty: f64,
    pub slack_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_norm: Option<f64>,
    pub wall_millis: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub entries: Vec<TraceEntry>,
    pub final_params: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform draws in `(−π, π)`.
pub fn initial_params(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect()
}

/// Derivative-free minimization with a linear model on a simplex of
/// `n + 1` points and a shrinking trust radius.
///
/// Each step moves from the best vertex by `ρ` against the model
/// gradient. A successful step replaces the worst vertex; a failed one
/// halves `ρ` and rebuilds the simplex around the best point. Stops at
/// `rho_end` or after `max_evals` evaluations. Returns the best point and
/// its value.
pub fn trust_region_minimize<F>(mut f: F, x0: &[f64], rho_begin: f64, rho_end: f64, max_evals: usize) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    if max_evals == 0 {
        return (x0.to_vec(), f64::NAN);
    }
    let mut best = (x0.to_vec(), eval(x0, &mut evals));
    if n == 0 {
        return best;
    }
    let mut rho = rho_begin;
    'outer: while rho >= rho_end && evals < max_evals {
        let mut simplex = vec![best.clone()];
        for k in 0..n {
            if evals >= max_evals {
                break 'outer;
            }
            let mut y = best.0.clone();
            y[k] += rho;
            let v = eval(&y, &mut evals);
            simplex.push((y, v));
        }
        loop {
            if evals >= max_evals {
                break 'outer;
            }
            let (bi, _) = simplex
                .iter()
                .enumerate()
                .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                .expect("nonempty simplex");
            let base = simplex[bi].clone();
            if base.1 < best.1 {
                best = base.clone();
            }
            let others: Vec<&(Vec<f64>, f64)> = simplex.iter().enumerate().filter(|(i, _)| *i != bi).map(|(_, p)| p).collect();
            let d = DMatrix::from_fn(n, n, |r, c| others[r].0[c] - base.0[c]);
            let rhs = DVector::from_fn(n, |r, _| others[r].1 - base.1);
            let Some(g) = d.lu().solve(&rhs) else {
                rho *= 0.5;
                continue 'outer;
            };
            let gnorm = g.norm();
            if !(gnorm > 0.0) || !gnorm.is_finite() {
                rho *= 0.5;
                continue 'outer;
            }
            let trial: Vec<f64> = base.0.iter().zip(g.iter()).map(|(x, gi)| x - rho * gi / gnorm).collect();
            let value = eval(&trial, &mut evals);
            if value < base.1 {
                let (wi, _) = simplex
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .expect("nonempty simplex");
                simplex[wi] = (trial, value);
                if value < best.1 {
                    best = simplex[wi].clone();
                }
            } else {
                rho *= 0.5;
                continue 'outer;
            }
        }
    }
    best
}

/// Train `circuit` on the compressed cost estimator.
pub fn train(
    circuit: &ParamCircuit,
    qubo: &QuboData,
    covering: &Covering,
    cfg: &TrainConfig,
) -> Result<(Vec<f64>, TrainTrace), OptimizeError> {
    train_from(circuit, qubo, covering, cfg, initial_params(circuit.param_count, derive_seed(cfg.seed, &[u64::MAX])))
}

/// [`train`] from given initial parameters.
pub fn train_from(
    circuit: &ParamCircuit,
    qubo: &QuboData,
    covering: &Covering,
    cfg: &TrainConfig,
    theta0: Vec<f64>,
) -> Result<(Vec<f64>, TrainTrace), OptimizeError> {
    cfg.validate()?;
    if theta0.len() != circuit.param_count {
        return Err(OptimizeError::InvalidConfig(format!(
            "{} initial parameters for {} slots",
            theta0.len(),
            circuit.param_count
        )));
    }
    let est_cfg = EstimatorConfig::for_circuit(circuit);
    let start = Instant::now();
    let mut entries = Vec::new();
    let params = match cfg.optimizer {
        Optimizer::Desc => {
            let mut theta = theta0;
            for iter in 0..cfg.max_iters {
                let report = gradient(circuit, &theta, qubo, covering, &est_cfg, cfg.evaluation(iter as u64), cfg.eta)?;
                let grad = report.gradient.as_ref().expect("gradient requested");
                entries.push(TraceEntry {
                    iter,
                    cost: report.cost,
                    reg_penalty: report.reg_penalty,
                    slack_norm: norm(&report.slack),
                    grad_norm: Some(norm(grad)),
                    wall_millis: start.elapsed().as_millis() as u64,
                });
                let lr = cfg.learning_rate_at(iter);
                for (t, g) in theta.iter_mut().zip(grad) {
                    *t -= lr * g;
                }
            }
            theta
        }
        Optimizer::Gfree => {
            let mut failure = None;
            let mut iter = 0;
            let objective = |theta: &[f64]| -> f64 {
                match evaluate_cost(circuit, theta, qubo, covering, &est_cfg, cfg.evaluation(iter as u64), cfg.eta) {
                    Ok(report) => {
                        entries.push(TraceEntry {
                            iter,
                            cost: report.cost,
                            reg_penalty: report.reg_penalty,
                            slack_norm: norm(&report.slack),
                            grad_norm: None,
                            wall_millis: start.elapsed().as_millis() as u64,
                        });
                        iter += 1;
                        report.total()
                    }
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                }
            };
            let (best, _) = trust_region_minimize(objective, &theta0, cfg.rho_begin, cfg.rho_end, cfg.max_iters);
            if let Some(e) = failure {
                return Err(e.into());
            }
            best
        }
    };
    Ok((
        params.clone(),
        TrainTrace {
            entries,
            final_params: params,
        },
    ))
}

/// Spread of the shot-based gradient estimator around random parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVariance {
    /// Mean over parameters of the variance across resamples, per `θ`.
    pub per_theta: Vec<f64>,
    pub median: f64,
}

/// Draw `theta_samples` parameter vectors uniformly, estimate the gradient
/// `resamples` times at each from fresh `n_shots`-shot batches, and
/// report the per-component variance averaged over components.
#[allow(clippy::too_many_arguments)]
pub fn gradient_variance(
    circuit: &ParamCircuit,
    qubo: &QuboData,
    covering: &Covering,
    eta: f64,
    theta_samples: usize,
    resamples: usize,
    n_shots: u64,
    seed: u64,
) -> Result<GradientVariance, OptimizeError> {
    if theta_samples == 0 || resamples < 2 || n_shots == 0 {
        return Err(OptimizeError::InvalidConfig(
            "need at least one parameter sample, two resamples and one shot".into(),
        ));
    }
    let cfg = EstimatorConfig::for_circuit(circuit);
    let mut per_theta = Vec::with_capacity(theta_samples);
    for t in 0..theta_samples as u64 {
        let theta = initial_params(circuit.param_count, derive_seed(seed, &[t]));
        let mut grads = Vec::with_capacity(resamples);
        for r in 0..resamples as u64 {
            let eval = Evaluation::Shots {
                n_shots,
                seed: derive_seed(seed, &[t, r + 1]),
            };
            let report = gradient(circuit, &theta, qubo, covering, &cfg, eval, eta)?;
            grads.push(report.gradient.expect("gradient requested"));
        }
        let variances: Vec<f64> = (0..circuit.param_count)
            .map(|k| sample_variance(&grads.iter().map(|g| g[k]).collect::<Vec<_>>()))
            .collect();
        per_theta.push(mean(&variances));
    }
    Ok(GradientVariance {
        median: median(&per_theta),
        per_theta,
    })
}

/// `xᵀ Q x` for every basis state `x`, bit `i` of the index being `x_i`.
pub fn quadratic_form_diagonal(qubo: &QuboData, slack: &[f64]) -> Result<Vec<f64>, OptimizeError> {
    let n = qubo.num_bits;
    if n > MAX_QUBITS {
        return Err(OptimizeError::TooManyQubits(n));
    }
    let q = qubo.q_matrix(slack).map_err(|e| OptimizeError::InvalidConfig(e.to_string()))?;
    let mut diag = vec![0.0; 1 << n];
    for x in 1usize..1 << n {
        // Add the lowest set bit to the value of the remaining bits.
        let i = x.trailing_zeros() as usize;
        let rest = x & (x - 1);
        let mut delta = q[i * n + i];
        let mut r = rest;
        while r != 0 {
            let j = r.trailing_zeros() as usize;
            delta += q[i * n + j] + q[j * n + i];
            r &= r - 1;
        }
        diag[x] = diag[rest] + delta;
    }
    Ok(diag)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaConfig {
    pub p_depth: usize,
    pub cycles: usize,
    pub inner_iters: usize,
    pub n_shots: u64,
    pub seed: u64,
    /// Initial angles are uniform in `(−init_scale, init_scale)`.
    pub init_scale: f64,
    pub rho_begin: f64,
    pub rho_end: f64,
}

impl Default for QaoaConfig {
    fn default() -> Self {
        QaoaConfig {
            p_depth: 1,
            cycles: 50,
            inner_iters: 1000,
            n_shots: 20_000,
            seed: 0,
            init_scale: 0.1,
            rho_begin: 0.1,
            rho_end: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaoaOutcome {
    pub params: Vec<f64>,
    pub slack: Vec<f64>,
    pub trace: TrainTrace,
}

/// Sampled mean of `xᵀQ(s)x + c(s)` and the sampled bit marginals.
fn qaoa_sample(
    circuit: &ParamCircuit,
    params: &[f64],
    diag: &[f64],
    constant: f64,
    n_shots: u64,
    seed: u64,
) -> Result<(f64, Vec<f64>), OptimizeError> {
    let state = run(circuit, params, Initial::Zero)?;
    let records = state.sample(n_shots as usize, seed, circuit.n_ancilla)?;
    let n = circuit.n_ancilla;
    let mut ones = vec![0.0; n];
    let mut total = 0.0;
    for r in &records {
        let idx = r.index(n);
        total += diag[idx];
        for (i, o) in ones.iter_mut().enumerate() {
            *o += (idx >> i & 1) as f64;
        }
    }
    let shots = records.len() as f64;
    Ok((total / shots + constant, ones.into_iter().map(|o| o / shots).collect()))
}

/// QAOA with one qubit per transaction, alternating gradient-free updates
/// of the angles at fixed slack with slack updates from sampled marginals.
pub fn qaoa_train(qubo: &QuboData, cfg: &QaoaConfig) -> Result<QaoaOutcome, OptimizeError> {
    let n = qubo.num_bits;
    if n > MAX_QUBITS {
        return Err(OptimizeError::TooManyQubits(n));
    }
    if cfg.n_shots == 0 || cfg.p_depth == 0 {
        return Err(OptimizeError::InvalidConfig("shots and depth must be positive".into()));
    }
    let start = Instant::now();
    let mut rng = seeded(derive_seed(cfg.seed, &[u64::MAX]));
    let mut params: Vec<f64> = (0..2 * cfg.p_depth)
        .map(|_| rng.random_range(-cfg.init_scale..cfg.init_scale))
        .collect();
    let mut slack = optimal_slack(&vec![0.5; n], qubo);
    let mut entries = Vec::new();
    let mut eval_counter = 0u64;
    for cycle in 0..cfg.cycles {
        let diag = Arc::new(quadratic_form_diagonal(qubo, &slack)?);
        let (_, constant) = qubo.b_c_unchecked(&slack);
        let circuit = build_qaoa(n, cfg.p_depth, Arc::clone(&diag))?;
        let mut failure = None;
        let objective = |theta: &[f64]| -> f64 {
            eval_counter += 1;
            match qaoa_sample(&circuit, theta, &diag, constant, cfg.n_shots, derive_seed(cfg.seed, &[0, eval_counter])) {
                Ok((value, _)) => value,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        };
        let (best, value) = trust_region_minimize(objective, &params, cfg.rho_begin, cfg.rho_end, cfg.inner_iters);
        if let Some(e) = failure {
            return Err(e);
        }
        params = best;
        let (_, p_hat) = qaoa_sample(&circuit, &params, &diag, constant, cfg.n_shots, derive_seed(cfg.seed, &[1, cycle as u64]))?;
        slack = optimal_slack(&p_hat, qubo);
        entries.push(TraceEntry {
            iter: cycle,
            cost: value,
            reg_penalty: 0.0,
            slack_norm: norm(&slack),
            grad_norm: None,
            wall_millis: start.elapsed().as_millis() as u64,
        });
    }
    Ok(QaoaOutcome {
        params: params.clone(),
        slack,
        trace: TrainTrace {
            entries,
            final_params: params,
        },
    })
}

/// The QAOA circuit for a trained slack.
pub fn qaoa_circuit(qubo: &QuboData, p_depth: usize, slack: &[f64]) -> Result<ParamCircuit, OptimizeError> {
    let diag = quadratic_form_diagonal(qubo, slack)?;
    Ok(build_qaoa(qubo.num_bits, p_depth, Arc::new(diag))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfReport {
    /// Per-vector optimal-slack costs in sampling order.
    pub costs: Vec<f64>,
    pub ecdf: Vec<(f64, f64)>,
    pub random_costs: Vec<f64>,
    pub random_ecdf: Vec<(f64, f64)>,
    pub best_vector: Vec<u8>,
    pub best_cost: f64,
    pub shots_used: usize,
}

/// Sample `n_vectors` bit-vectors greedily from batches of `n_shots`
/// measurements (drawing a new batch whenever one runs out), score each
/// at its own optimal slack, and compare with as many uniform random
/// vectors.
pub fn evaluate(
    params: &[f64],
    circuit: &ParamCircuit,
    covering: &Covering,
    qubo: &QuboData,
    n_vectors: usize,
    n_shots: usize,
    seed: u64,
) -> Result<EcdfReport, OptimizeError> {
    if n_shots == 0 {
        return Err(OptimizeError::InvalidConfig("shot count must be positive".into()));
    }
    if covering.num_bits() != qubo.num_bits {
        return Err(EstimatorError::BitMismatch {
            covering: covering.num_bits(),
            qubo: qubo.num_bits,
        }
        .into());
    }
    let state = run(circuit, params, Initial::Zero)?;
    let mut sampler = GreedySampler::new(covering);
    let mut vectors = Vec::with_capacity(n_vectors);
    let mut batch = 0u64;
    while vectors.len() < n_vectors {
        let records = state.sample(n_shots, derive_seed(seed, &[0, batch]), circuit.n_ancilla)?;
        let produced_before = vectors.len();
        let mut stream = records.into_iter();
        while vectors.len() < n_vectors {
            match sampler.next_vector(&mut stream) {
                Some(x) => vectors.push(x),
                None => break,
            }
        }
        batch += 1;
        if vectors.len() == produced_before && batch > 1000 {
            return Err(EncodingError::StreamExhausted { completed: vectors.len() }.into());
        }
    }
    let costs: Vec<f64> = vectors.iter().map(|x| qubo.cost_of_bitvector(x)).collect();
    let mut rng = seeded(derive_seed(seed, &[1]));
    let random_costs: Vec<f64> = (0..n_vectors)
        .map(|_| {
            let x: Vec<u8> = (0..qubo.num_bits).map(|_| rng.random_range(0..2u8)).collect();
            qubo.cost_of_bitvector(&x)
        })
        .collect();
    let (best_idx, _) = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| OptimizeError::InvalidConfig("no vectors requested".into()))?;
    Ok(EcdfReport {
        ecdf: ecdf(&costs),
        random_ecdf: ecdf(&random_costs),
        best_vector: vectors[best_idx].clone(),
        best_cost: costs[best_idx],
        costs,
        random_costs,
        shots_used: sampler.consumed(),
    })
}
