//! Parameterized circuits: the hardware-efficient ansatz, the
//! register-preserving ansatz and the QAOA baseline, plus numerical checks
//! of register preservation.
//!
//! A state is register-uniform when every register index is measured with
//! probability `1/N_r`. The register-preserving ansatz only uses rotations
//! on ancillas conditioned on register qubits and CNOT permutations of the
//! register basis, so it maps register-uniform states to register-uniform
//! states.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;
use crate::simulator::{apply_body, Angle, Gate, SimError, StateVector, MAX_QUBITS};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AnsatzError {
    #[error("circuit needs at least one qubit")]
    ZeroQubits,
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("the register-preserving ansatz needs at least one register qubit")]
    NoRegister,
    #[error("{0} qubits exceeds the simulator cap of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("body gate {0} does not act as a tracked register permutation")]
    PermutationUntracked(usize),
    #[error("register permutation is not self-inverse")]
    NotSelfInverse,
    #[error("register permutation has length {got}, expected {expected}")]
    PermutationLength { expected: usize, got: usize },
    #[error("register {register} out of range 0..{count}")]
    RegisterOutOfRange { register: usize, count: usize },
    #[error("QAOA circuits depend on the instance; use build_qaoa")]
    NeedsInstance,
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnsatzKind {
    HardwareEfficient,
    RegisterPreserving,
    Qaoa,
}

/// Serializable shape of a circuit, enough to rebuild it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitDescriptor {
    pub kind: AnsatzKind,
    pub n_ancilla: usize,
    pub n_register: usize,
    pub depth: usize,
}

/// A gate program `body · prep` acting on `n_ancilla + n_register` qubits.
/// `prep` is parameter-free; only `body` carries parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCircuit {
    pub kind: AnsatzKind,
    pub n_ancilla: usize,
    pub n_register: usize,
    pub depth: usize,
    pub prep: Vec<Gate>,
    pub body: Vec<Gate>,
    pub param_count: usize,
}

fn hadamards(n: usize) -> Vec<Gate> {
    (0..n).map(Gate::H).collect()
}

fn check_size(n_qubits: usize) -> Result<(), AnsatzError> {
    if n_qubits == 0 {
        return Err(AnsatzError::ZeroQubits);
    }
    if n_qubits > MAX_QUBITS {
        return Err(AnsatzError::TooManyQubits(n_qubits));
    }
    Ok(())
}

/// Layers of RY on every qubit followed by a nearest-neighbour CNOT chain.
pub fn build_hwe(n_ancilla: usize, n_register: usize, depth: usize) -> Result<ParamCircuit, AnsatzError> {
    let n = n_ancilla + n_register;
    check_size(n)?;
    if depth == 0 {
        return Err(AnsatzError::ZeroDepth);
    }
    let mut body = Vec::new();
    let mut slot = 0;
    for _ in 0..depth {
        for q in 0..n {
            body.push(Gate::Ry { qubit: q, angle: Angle::Param(slot) });
            slot += 1;
        }
        for q in 0..n.saturating_sub(1) {
            body.push(Gate::Cnot { control: q, target: q + 1 });
        }
    }
    Ok(ParamCircuit {
        kind: AnsatzKind::HardwareEfficient,
        n_ancilla,
        n_register,
        depth,
        prep: hadamards(n),
        body,
        param_count: slot,
    })
}

/// An RY layer on the ancillas, then per layer one register-conditioned RY
/// for every (ancilla, register qubit) pair and, for `depth > 1`, a ring
/// of CNOTs permuting the register basis.
pub fn build_regpres(n_ancilla: usize, n_register: usize, depth: usize) -> Result<ParamCircuit, AnsatzError> {
    let n = n_ancilla + n_register;
    check_size(n)?;
    if depth == 0 {
        return Err(AnsatzError::ZeroDepth);
    }
    if n_register == 0 {
        return Err(AnsatzError::NoRegister);
    }
    let mut body = Vec::new();
    let mut slot = 0;
    for a in 0..n_ancilla {
        body.push(Gate::Ry { qubit: a, angle: Angle::Param(slot) });
        slot += 1;
    }
    for layer in 0..depth {
        for a in 0..n_ancilla {
            // Start the pairing at a different register qubit per ancilla
            // and per layer.
            for k in 0..n_register {
                let c = (a + layer + k) % n_register;
                body.push(Gate::Cry {
                    target: a,
                    controls: vec![(n_ancilla + c, true)],
                    angle: Angle::Param(slot),
                });
                slot += 1;
            }
        }
        if depth > 1 && n_register > 1 {
            for c in 0..n_register {
                body.push(Gate::Cnot {
                    control: n_ancilla + c,
                    target: n_ancilla + (c + 1) % n_register,
                });
            }
        }
    }
    Ok(ParamCircuit {
        kind: AnsatzKind::RegisterPreserving,
        n_ancilla,
        n_register,
        depth,
        prep: hadamards(n),
        body,
        param_count: slot,
    })
}

/// QAOA on one qubit per bit: `p` rounds of the cost phase
/// `exp(−iβ_l H_Q)` followed by the mixer `exp(−iγ_l Σ X)`. Slot `2l`
/// holds `β_l`, slot `2l + 1` holds `γ_l`.
pub fn build_qaoa(n_qubits: usize, p_depth: usize, cost_diagonal: Arc<Vec<f64>>) -> Result<ParamCircuit, AnsatzError> {
    check_size(n_qubits)?;
    if p_depth == 0 {
        return Err(AnsatzError::ZeroDepth);
    }
    if cost_diagonal.len() != 1 << n_qubits {
        return Err(SimError::DimensionMismatch {
            expected: 1 << n_qubits,
            got: cost_diagonal.len(),
        }
        .into());
    }
    let mut body = Vec::with_capacity(2 * p_depth);
    for l in 0..p_depth {
        body.push(Gate::DiagonalPhase {
            values: Arc::clone(&cost_diagonal),
            angle: Angle::Param(2 * l),
        });
        body.push(Gate::RxSubset {
            qubits: (0..n_qubits).collect(),
            angle: Angle::Param(2 * l + 1),
        });
    }
    Ok(ParamCircuit {
        kind: AnsatzKind::Qaoa,
        n_ancilla: n_qubits,
        n_register: 0,
        depth: p_depth,
        prep: hadamards(n_qubits),
        body,
        param_count: 2 * p_depth,
    })
}

pub fn build(descriptor: &CircuitDescriptor) -> Result<ParamCircuit, AnsatzError> {
    match descriptor.kind {
        AnsatzKind::HardwareEfficient => build_hwe(descriptor.n_ancilla, descriptor.n_register, descriptor.depth),
        AnsatzKind::RegisterPreserving => build_regpres(descriptor.n_ancilla, descriptor.n_register, descriptor.depth),
        AnsatzKind::Qaoa => Err(AnsatzError::NeedsInstance),
    }
}

impl ParamCircuit {
    pub fn n_qubits(&self) -> usize {
        self.n_ancilla + self.n_register
    }

    pub fn n_registers(&self) -> usize {
        1 << self.n_register
    }

    pub fn descriptor(&self) -> CircuitDescriptor {
        CircuitDescriptor {
            kind: self.kind,
            n_ancilla: self.n_ancilla,
            n_register: self.n_register,
            depth: self.depth,
        }
    }

    /// `other` applied after `self`; `other`'s parameters come after ours.
    pub fn concat(&self, other: &ParamCircuit) -> ParamCircuit {
        let offset = self.param_count;
        let shift = |a: Angle| match a {
            Angle::Param(s) => Angle::Param(s + offset),
            fixed => fixed,
        };
        let mut body = self.body.clone();
        body.extend(other.body.iter().map(|g| match g.clone() {
            Gate::Ry { qubit, angle } => Gate::Ry { qubit, angle: shift(angle) },
            Gate::Cry { target, controls, angle } => Gate::Cry {
                target,
                controls,
                angle: shift(angle),
            },
            Gate::DiagonalPhase { values, angle } => Gate::DiagonalPhase { values, angle: shift(angle) },
            Gate::RxSubset { qubits, angle } => Gate::RxSubset { qubits, angle: shift(angle) },
            fixed => fixed,
        }));
        ParamCircuit {
            depth: self.depth + other.depth,
            body,
            param_count: self.param_count + other.param_count,
            ..self.clone()
        }
    }

    /// Body gates that use parameter `slot`.
    pub fn gates_for_param(&self, slot: usize) -> Vec<usize> {
        self.body
            .iter()
            .enumerate()
            .filter(|(_, g)| g.angle().and_then(Angle::slot) == Some(slot))
            .map(|(i, _)| i)
            .collect()
    }

    /// Net map `f` on register labels implemented by the body, if every
    /// gate either acts on ancillas (possibly register-controlled) or
    /// permutes the register basis.
    pub fn register_permutation(&self) -> Result<Vec<usize>, AnsatzError> {
        let n_a = self.n_ancilla;
        let is_reg = |q: usize| q >= n_a;
        let mut f: Vec<usize> = (0..self.n_registers()).collect();
        for (idx, g) in self.body.iter().enumerate() {
            match g {
                Gate::H(q) | Gate::X(q) | Gate::Ry { qubit: q, .. } if !is_reg(*q) => {}
                Gate::Cry { target, .. } if !is_reg(*target) => {}
                Gate::Cnot { target, .. } if !is_reg(*target) => {}
                Gate::Cnot { control, target } if is_reg(*control) && is_reg(*target) => {
                    let (c, t) = (control - n_a, target - n_a);
                    for r in f.iter_mut() {
                        if *r >> c & 1 == 1 {
                            *r ^= 1 << t;
                        }
                    }
                }
                Gate::X(q) if is_reg(*q) => {
                    for r in f.iter_mut() {
                        *r ^= 1 << (q - n_a);
                    }
                }
                Gate::Swap(a, b) if is_reg(*a) && is_reg(*b) => {
                    let (a, b) = (a - n_a, b - n_a);
                    for r in f.iter_mut() {
                        if (*r >> a & 1) != (*r >> b & 1) {
                            *r ^= (1 << a) | (1 << b);
                        }
                    }
                }
                Gate::Swap(a, b) if !is_reg(*a) && !is_reg(*b) => {}
                _ => return Err(AnsatzError::PermutationUntracked(idx)),
            }
        }
        Ok(f)
    }
}

/// Register label `r₀` with `f(r₀) = r`: running the body on
/// `H^{⊗n_a}|0⟩ ⊗ |r₀⟩` always measures register `r`.
pub fn build_permuted_register_input(circuit: &ParamCircuit, register: usize) -> Result<usize, AnsatzError> {
    let count = circuit.n_registers();
    if register >= count {
        return Err(AnsatzError::RegisterOutOfRange { register, count });
    }
    let f = circuit.register_permutation()?;
    Ok(f.iter().position(|&img| img == register).expect("register map is a bijection"))
}

/// Random register-uniform state: an independent random ancilla state per
/// register, each with weight `1/N_r`. With `real` set, all amplitudes are
/// real.
pub fn random_register_uniform_state<R: Rng>(
    n_ancilla: usize,
    n_register: usize,
    real: bool,
    rng: &mut R,
) -> Result<StateVector, SimError> {
    let n_anc_states = 1usize << n_ancilla;
    let n_regs = 1usize << n_register;
    let mut amps = Vec::with_capacity(n_anc_states * n_regs);
    for _ in 0..n_regs {
        let block: Vec<Complex64> = (0..n_anc_states)
            .map(|_| {
                let re = rng.random_range(-1.0..1.0);
                let im = if real { 0.0 } else { rng.random_range(-1.0..1.0) };
                Complex64::new(re, im)
            })
            .collect();
        let norm = block.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let scale = 1.0 / (norm * (n_regs as f64).sqrt());
        amps.extend(block.into_iter().map(|a| a * scale));
    }
    StateVector::from_amplitudes(n_ancilla + n_register, amps)
}

/// Largest `|prob_r − 1/N_r|` over registers.
pub fn register_uniformity_deviation(state: &StateVector, n_ancilla: usize) -> Result<f64, SimError> {
    let probs = state.exact_register_probs(n_ancilla)?;
    let target = 1.0 / probs.len() as f64;
    Ok(probs.iter().map(|p| (p - target).abs()).fold(0.0, f64::max))
}

/// A register-uniform input and parameters for which the output is not
/// register-uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct PreservationWitness {
    pub trial: usize,
    pub params: Vec<f64>,
    pub input: StateVector,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreservationReport {
    pub preserved: bool,
    pub max_deviation: f64,
    pub witness: Option<PreservationWitness>,
}

/// Run the body at random parameters on random register-uniform inputs and
/// check the output register distribution stays uniform within `tol`.
pub fn is_register_preserving(
    circuit: &ParamCircuit,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<PreservationReport, AnsatzError> {
    let mut rng = seeded(seed);
    let mut max_deviation: f64 = 0.0;
    for trial in 0..trials.max(1) {
        let params: Vec<f64> = (0..circuit.param_count)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        let input = random_register_uniform_state(circuit.n_ancilla, circuit.n_register, false, &mut rng)?;
        let mut state = input.clone();
        apply_body(&mut state, circuit, &params)?;
        let deviation = register_uniformity_deviation(&state, circuit.n_ancilla)?;
        max_deviation = max_deviation.max(deviation);
        if deviation > tol {
            return Ok(PreservationReport {
                preserved: false,
                max_deviation,
                witness: Some(PreservationWitness {
                    trial,
                    params,
                    input,
                    deviation,
                }),
            });
        }
    }
    Ok(PreservationReport {
        preserved: true,
        max_deviation,
        witness: None,
    })
}

fn check_involution(perm: &[usize], n_register: usize) -> Result<(), AnsatzError> {
    let n = 1usize << n_register;
    if perm.len() != n {
        return Err(AnsatzError::PermutationLength {
            expected: n,
            got: perm.len(),
        });
    }
    if perm.iter().enumerate().any(|(r, &p)| p >= n || perm[p] != r) {
        return Err(AnsatzError::NotSelfInverse);
    }
    Ok(())
}

/// Apply `cos(θ/2)·𝟙 − i·sin(θ/2)·P` with `P` permuting the register basis
/// and return the output's deviation from register uniformity.
pub fn permutation_rotation_deviation(
    perm: &[usize],
    n_ancilla: usize,
    theta: f64,
    input: &StateVector,
) -> Result<f64, AnsatzError> {
    let n_register = input.n_qubits() - n_ancilla.min(input.n_qubits());
    check_involution(perm, n_register)?;
    let (s, c) = (theta / 2.0).sin_cos();
    let amps = input.amplitudes();
    let out: Vec<Complex64> = (0..amps.len())
        .map(|idx| {
            let (anc, reg) = (idx & ((1 << n_ancilla) - 1), idx >> n_ancilla);
            let partner = (perm[reg] << n_ancilla) | anc;
            amps[idx] * c + amps[partner] * Complex64::new(0.0, -s)
        })
        .collect();
    let state = StateVector::from_amplitudes(input.n_qubits(), out)?;
    Ok(register_uniformity_deviation(&state, n_ancilla)?)
}

/// Check on a random real register-uniform state that the rotation
/// generated by a self-inverse register permutation keeps it uniform to
/// within `1e−10`.
pub fn check_permutation_rotation(
    perm: &[usize],
    n_ancilla: usize,
    n_register: usize,
    theta: f64,
    seed: u64,
) -> Result<bool, AnsatzError> {
    check_involution(perm, n_register)?;
    let input = random_register_uniform_state(n_ancilla, n_register, true, &mut seeded(seed))?;
    Ok(permutation_rotation_deviation(perm, n_ancilla, theta, &input)? <= 1e-10)
}
