//! Dense statevector simulation.
//!
//! Qubit `q` is bit `q` of the basis index. In a compressed encoding the
//! `n_a` ancillas occupy the low bits and the register qubits the high
//! bits, so the register index of basis state `idx` is `idx >> n_a` and the
//! ancilla bit `b_l` (1-based `l`) is bit `l − 1`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ansatz::ParamCircuit;
use crate::rng::seeded;

pub const MAX_QUBITS: usize = 24;

/// Tolerance on `‖ψ‖² = 1` for states handed in from outside.
pub const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SimError {
    #[error("{0} qubits exceeds the simulator cap of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("qubit {qubit} out of range for {n_qubits} qubits")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },
    #[error("gate acts twice on qubit {0}")]
    RepeatedQubit(usize),
    #[error("expected {expected} parameters, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("parameter slot {slot} out of range for {count} parameters")]
    ParamOutOfRange { slot: usize, count: usize },
    #[error("amplitude vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state norm squared is {0}, expected 1")]
    NotNormalized(f64),
    #[error("gate {0} has no parameter-shift rule")]
    NonShiftable(usize),
    #[error("basis label {label} out of range for {n_qubits} qubits")]
    LabelOutOfRange { label: usize, n_qubits: usize },
    #[error("ancilla count {n_ancilla} exceeds qubit count {n_qubits}")]
    BadPartition { n_ancilla: usize, n_qubits: usize },
}

/// A rotation angle: a constant or a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Angle {
    Fixed(f64),
    Param(usize),
}

impl Angle {
    pub fn resolve(self, params: &[f64]) -> Result<f64, SimError> {
        match self {
            Angle::Fixed(v) => Ok(v),
            Angle::Param(slot) => params.get(slot).copied().ok_or(SimError::ParamOutOfRange {
                slot,
                count: params.len(),
            }),
        }
    }

    pub fn slot(self) -> Option<usize> {
        match self {
            Angle::Param(slot) => Some(slot),
            Angle::Fixed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    /// `exp(−iθY/2)`.
    Ry { qubit: usize, angle: Angle },
    /// RY on `target` applied when every `(qubit, value)` control matches.
    Cry { target: usize, controls: Vec<(usize, bool)>, angle: Angle },
    Cnot { control: usize, target: usize },
    Swap(usize, usize),
    /// `|x⟩ ↦ exp(−iθ·values[x])|x⟩` over the full basis.
    DiagonalPhase { values: Arc<Vec<f64>>, angle: Angle },
    /// `exp(−iθX)` on each listed qubit.
    RxSubset { qubits: Vec<usize>, angle: Angle },
}

impl Gate {
    pub fn angle(&self) -> Option<Angle> {
        match self {
            Gate::Ry { angle, .. }
            | Gate::Cry { angle, .. }
            | Gate::DiagonalPhase { angle, .. }
            | Gate::RxSubset { angle, .. } => Some(*angle),
            _ => None,
        }
    }

    /// Qubits the gate touches, targets first.
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::X(q) | Gate::Ry { qubit: q, .. } => vec![*q],
            Gate::Cry { target, controls, .. } => {
                std::iter::once(*target).chain(controls.iter().map(|c| c.0)).collect()
            }
            Gate::Cnot { control, target } => vec![*target, *control],
            Gate::Swap(a, b) => vec![*a, *b],
            Gate::DiagonalPhase { .. } => Vec::new(),
            Gate::RxSubset { qubits, .. } => qubits.clone(),
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<(), SimError> {
        let qubits = self.qubits();
        for (pos, &q) in qubits.iter().enumerate() {
            if q >= n_qubits {
                return Err(SimError::QubitOutOfRange { qubit: q, n_qubits });
            }
            if qubits[..pos].contains(&q) {
                return Err(SimError::RepeatedQubit(q));
            }
        }
        if let Gate::DiagonalPhase { values, .. } = self {
            if values.len() != 1 << n_qubits {
                return Err(SimError::DimensionMismatch {
                    expected: 1 << n_qubits,
                    got: values.len(),
                });
            }
        }
        Ok(())
    }
}

type Matrix2 = [[Complex64; 2]; 2];

fn real_matrix(m: [[f64; 2]; 2]) -> Matrix2 {
    m.map(|row| row.map(|v| Complex64::new(v, 0.0)))
}

fn ry_matrix(theta: f64) -> Matrix2 {
    let (s, c) = (theta / 2.0).sin_cos();
    real_matrix([[c, -s], [s, c]])
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(n_qubits: usize) -> Result<Self, SimError> {
        Self::basis(n_qubits, 0)
    }

    pub fn basis(n_qubits: usize, label: usize) -> Result<Self, SimError> {
        if n_qubits > MAX_QUBITS {
            return Err(SimError::TooManyQubits(n_qubits));
        }
        if label >= 1 << n_qubits {
            return Err(SimError::LabelOutOfRange { label, n_qubits });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[label] = Complex64::new(1.0, 0.0);
        Ok(StateVector { n_qubits, amplitudes })
    }

    /// Wrap amplitudes; rejects vectors whose norm is off by more than
    /// [`NORM_TOLERANCE`].
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self, SimError> {
        if n_qubits > MAX_QUBITS {
            return Err(SimError::TooManyQubits(n_qubits));
        }
        if amplitudes.len() != 1 << n_qubits {
            return Err(SimError::DimensionMismatch {
                expected: 1 << n_qubits,
                got: amplitudes.len(),
            });
        }
        let state = StateVector { n_qubits, amplitudes };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(SimError::NotNormalized(norm));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn max_imaginary(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }

    pub fn apply(&mut self, gate: &Gate, params: &[f64]) -> Result<(), SimError> {
        self.apply_shifted(gate, params, 0.0)
    }

    /// Apply `gate` with `shift` added to its angle (ignored for fixed gates).
    pub fn apply_shifted(&mut self, gate: &Gate, params: &[f64], shift: f64) -> Result<(), SimError> {
        gate.validate(self.n_qubits)?;
        match gate {
            Gate::H(q) => {
                let h = FRAC_1_SQRT_2;
                self.apply_1q(*q, real_matrix([[h, h], [h, -h]]), 0, 0);
            }
            Gate::X(q) => self.apply_1q(*q, real_matrix([[0.0, 1.0], [1.0, 0.0]]), 0, 0),
            Gate::Ry { qubit, angle } => {
                let theta = angle.resolve(params)? + shift;
                self.apply_1q(*qubit, ry_matrix(theta), 0, 0);
            }
            Gate::Cry { target, controls, angle } => {
                let theta = angle.resolve(params)? + shift;
                let (mask, value) = controls.iter().fold((0, 0), |(m, v), &(q, bit)| {
                    (m | 1 << q, if bit { v | 1 << q } else { v })
                });
                self.apply_1q(*target, ry_matrix(theta), mask, value);
            }
            Gate::Cnot { control, target } => {
                let bit = 1 << control;
                self.apply_1q(*target, real_matrix([[0.0, 1.0], [1.0, 0.0]]), bit, bit);
            }
            Gate::Swap(a, b) => {
                let (ba, bb) = (1usize << a, 1usize << b);
                for i in 0..self.amplitudes.len() {
                    if i & ba != 0 && i & bb == 0 {
                        self.amplitudes.swap(i, i ^ ba ^ bb);
                    }
                }
            }
            Gate::DiagonalPhase { values, angle } => {
                let theta = angle.resolve(params)? + shift;
                for (amp, v) in self.amplitudes.iter_mut().zip(values.iter()) {
                    *amp *= Complex64::from_polar(1.0, -theta * v);
                }
            }
            Gate::RxSubset { qubits, angle } => {
                let theta = angle.resolve(params)? + shift;
                let (s, c) = theta.sin_cos();
                let m = [
                    [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
                    [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
                ];
                for &q in qubits {
                    self.apply_1q(q, m, 0, 0);
                }
            }
        }
        Ok(())
    }

    fn apply_1q(&mut self, target: usize, m: Matrix2, control_mask: usize, control_value: usize) {
        let t = 1 << target;
        for i in 0..self.amplitudes.len() {
            if i & t == 0 && i & control_mask == control_value {
                let j = i | t;
                let (a, b) = (self.amplitudes[i], self.amplitudes[j]);
                self.amplitudes[i] = m[0][0] * a + m[0][1] * b;
                self.amplitudes[j] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    fn check_partition(&self, n_ancilla: usize) -> Result<(), SimError> {
        if n_ancilla > self.n_qubits {
            return Err(SimError::BadPartition {
                n_ancilla,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }

    /// `n_shots` i.i.d. computational-basis measurements, in draw order.
    pub fn sample(&self, n_shots: usize, seed: u64, n_ancilla: usize) -> Result<Vec<MeasurementRecord>, SimError> {
        self.check_partition(n_ancilla)?;
        let mut cdf = Vec::with_capacity(self.amplitudes.len());
        let mut acc = 0.0;
        for a in &self.amplitudes {
            acc += a.norm_sqr();
            cdf.push(acc);
        }
        let mut rng = seeded(seed);
        let last = cdf.len() - 1;
        Ok((0..n_shots)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                let idx = cdf.partition_point(|&c| c <= u).min(last);
                MeasurementRecord::from_index(idx, n_ancilla)
            })
            .collect())
    }

    /// Outcome counts per basis index for `n_shots` draws, generated as a
    /// multinomial by successive binomial splits.
    pub fn sample_counts(&self, n_shots: u64, seed: u64) -> Vec<u64> {
        let probs = self.probabilities();
        let mut rng = seeded(seed);
        let mut counts = vec![0; probs.len()];
        let mut remaining_shots = n_shots;
        let mut remaining_mass: f64 = probs.iter().sum();
        for (count, &p) in counts.iter_mut().zip(&probs) {
            if remaining_shots == 0 {
                break;
            }
            if p <= 0.0 {
                continue;
            }
            let frac = (p / remaining_mass).clamp(0.0, 1.0);
            let k = if frac >= 1.0 {
                remaining_shots
            } else {
                Binomial::new(remaining_shots, frac).expect("valid binomial").sample(&mut rng)
            };
            *count = k;
            remaining_shots -= k;
            remaining_mass -= p;
        }
        // Rounding can leave shots unassigned; give them to the last
        // outcome with mass.
        if remaining_shots > 0 {
            if let Some(last) = probs.iter().rposition(|&p| p > 0.0) {
                counts[last] += remaining_shots;
            }
        }
        counts
    }

    /// Diagonal of the register-reduced density matrix.
    pub fn exact_register_probs(&self, n_ancilla: usize) -> Result<Vec<f64>, SimError> {
        self.check_partition(n_ancilla)?;
        let mut probs = vec![0.0; 1 << (self.n_qubits - n_ancilla)];
        for (idx, a) in self.amplitudes.iter().enumerate() {
            probs[idx >> n_ancilla] += a.norm_sqr();
        }
        Ok(probs)
    }
}

/// One computational-basis outcome split into ancilla bits and register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MeasurementRecord {
    /// Bit `l − 1` holds ancilla bit `b_l`.
    pub ancilla_bits: u64,
    pub register: usize,
}

impl MeasurementRecord {
    pub fn from_index(idx: usize, n_ancilla: usize) -> Self {
        MeasurementRecord {
            ancilla_bits: (idx & ((1 << n_ancilla) - 1)) as u64,
            register: idx >> n_ancilla,
        }
    }

    /// Ancilla bit `b_l` for 1-based position `l`.
    pub fn bit(&self, l: usize) -> u8 {
        ((self.ancilla_bits >> (l - 1)) & 1) as u8
    }

    pub fn index(&self, n_ancilla: usize) -> usize {
        (self.register << n_ancilla) | self.ancilla_bits as usize
    }
}

/// Input of [`run`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    /// Preparation layer on `|0…0⟩`.
    Zero,
    /// Hadamards on the ancillas only, applied to register basis state `r`.
    RegisterSweep(usize),
}

fn check_arity(circuit: &ParamCircuit, params: &[f64]) -> Result<(), SimError> {
    if params.len() != circuit.param_count {
        return Err(SimError::ArityMismatch {
            expected: circuit.param_count,
            got: params.len(),
        });
    }
    Ok(())
}

fn initial_state(circuit: &ParamCircuit, initial: Initial) -> Result<StateVector, SimError> {
    let n = circuit.n_qubits();
    match initial {
        Initial::Zero => {
            let mut state = StateVector::zero(n)?;
            for g in &circuit.prep {
                state.apply(g, &[])?;
            }
            Ok(state)
        }
        Initial::RegisterSweep(r) => {
            let mut state = StateVector::basis(n, r << circuit.n_ancilla)?;
            for q in 0..circuit.n_ancilla {
                state.apply(&Gate::H(q), &[])?;
            }
            Ok(state)
        }
    }
}

/// Apply the circuit's parameterized body to an arbitrary state.
pub fn apply_body(state: &mut StateVector, circuit: &ParamCircuit, params: &[f64]) -> Result<(), SimError> {
    check_arity(circuit, params)?;
    for g in &circuit.body {
        state.apply(g, params)?;
    }
    Ok(())
}

pub fn run(circuit: &ParamCircuit, params: &[f64], initial: Initial) -> Result<StateVector, SimError> {
    check_arity(circuit, params)?;
    let mut state = initial_state(circuit, initial)?;
    for g in &circuit.body {
        state.apply(g, params)?;
    }
    Ok(state)
}

/// Run with `delta` added to the angle of body gate `gate_index` only.
pub fn run_shifted(
    circuit: &ParamCircuit,
    params: &[f64],
    initial: Initial,
    gate_index: usize,
    delta: f64,
) -> Result<StateVector, SimError> {
    check_arity(circuit, params)?;
    let mut state = initial_state(circuit, initial)?;
    for (idx, g) in circuit.body.iter().enumerate() {
        let shift = if idx == gate_index { delta } else { 0.0 };
        state.apply_shifted(g, params, shift)?;
    }
    Ok(state)
}

/// Parameter-shift rule for one gate occurrence: `(shift, coefficient)`
/// pairs with `∂f = Σ coefficient · f(θ + shift)`.
pub fn shift_rule(gate: &Gate, gate_index: usize) -> Result<Vec<(f64, f64)>, SimError> {
    use std::f64::consts::FRAC_PI_2;
    match gate {
        Gate::Ry { angle: Angle::Param(_), .. } => Ok(vec![(FRAC_PI_2, 0.5), (-FRAC_PI_2, -0.5)]),
        // The controlled rotation's generator has eigenvalues {0, ±1/2},
        // which needs the four-term rule.
        Gate::Cry { angle: Angle::Param(_), .. } => {
            let s2 = std::f64::consts::SQRT_2;
            let c1 = (s2 + 1.0) / (4.0 * s2);
            let c2 = (s2 - 1.0) / (4.0 * s2);
            Ok(vec![
                (FRAC_PI_2, c1),
                (-FRAC_PI_2, -c1),
                (3.0 * FRAC_PI_2, -c2),
                (-3.0 * FRAC_PI_2, c2),
            ])
        }
        _ => Err(SimError::NonShiftable(gate_index)),
    }
}
