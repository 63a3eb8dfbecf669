//! Qubit-efficient encoding of bit-vectors.
//!
//! A covering assigns every register index `r` an ordered list `A_r` of
//! bit positions, each list empty or of length `n_a`. Measuring ancilla
//! bits `b_1…b_{n_a}` together with register `r` fixes `x_i = b_{l_r(i)}`
//! for every `i ∈ A_r`, where `l_r(i)` is the 1-based position of `i` in
//! `A_r`.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::SettlementProblem;
use crate::rng::seeded;
use crate::simulator::{MeasurementRecord, MAX_QUBITS};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum EncodingError {
    #[error("ancilla count must be at least 1")]
    NoAncilla,
    #[error("ancilla count {n_ancilla} exceeds bit count {num_bits}")]
    TooManyAncillas { n_ancilla: usize, num_bits: usize },
    #[error("encoding needs {0} qubits, more than the simulator cap of {MAX_QUBITS}")]
    TooManyQubits(usize),
    #[error("invalid covering: {0}")]
    InvalidCovering(String),
    #[error("record stream exhausted after {completed} complete bit-vectors")]
    StreamExhausted { completed: usize },
}

/// Register qubits for `I` bits on `n_a` ancillas with `n_rplus` extra
/// register qubits.
pub fn register_qubits(num_bits: usize, n_ancilla: usize, n_rplus: usize) -> Result<usize, EncodingError> {
    if n_ancilla == 0 {
        return Err(EncodingError::NoAncilla);
    }
    if n_ancilla > num_bits {
        return Err(EncodingError::TooManyAncillas { n_ancilla, num_bits });
    }
    let groups = num_bits.div_ceil(n_ancilla);
    let base = groups.next_power_of_two().trailing_zeros() as usize;
    Ok(base + n_rplus)
}

/// `n_a + ⌈log₂⌈I/n_a⌉⌉ + n_rplus`.
pub fn qubit_count(num_bits: usize, n_ancilla: usize, n_rplus: usize) -> Result<usize, EncodingError> {
    Ok(n_ancilla + register_qubits(num_bits, n_ancilla, n_rplus)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoveringSpec", into = "CoveringSpec")]
pub struct Covering {
    num_bits: usize,
    n_ancilla: usize,
    n_register: usize,
    sets: Vec<Vec<usize>>,
    /// Per register: bit → 1-based ancilla position (first occurrence).
    lmap: Vec<BTreeMap<usize, usize>>,
    /// Per bit: `(register, position)` pairs.
    locations: Vec<Vec<(usize, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct CoveringSpec {
    num_bits: usize,
    n_ancilla: usize,
    n_register: usize,
    sets: Vec<Vec<usize>>,
}

impl TryFrom<CoveringSpec> for Covering {
    type Error = EncodingError;

    fn try_from(spec: CoveringSpec) -> Result<Self, Self::Error> {
        Covering::new(spec.num_bits, spec.n_ancilla, spec.n_register, spec.sets)
    }
}

impl From<Covering> for CoveringSpec {
    fn from(c: Covering) -> Self {
        CoveringSpec {
            num_bits: c.num_bits,
            n_ancilla: c.n_ancilla,
            n_register: c.n_register,
            sets: c.sets,
        }
    }
}

impl Covering {
    pub fn new(num_bits: usize, n_ancilla: usize, n_register: usize, sets: Vec<Vec<usize>>) -> Result<Self, EncodingError> {
        let invalid = |m: String| Err(EncodingError::InvalidCovering(m));
        if n_ancilla == 0 {
            return Err(EncodingError::NoAncilla);
        }
        if n_ancilla + n_register > MAX_QUBITS {
            return Err(EncodingError::TooManyQubits(n_ancilla + n_register));
        }
        if sets.len() != 1 << n_register {
            return invalid(format!("{} sets for {} registers", sets.len(), 1usize << n_register));
        }
        let mut lmap = vec![BTreeMap::new(); sets.len()];
        let mut locations = vec![Vec::new(); num_bits];
        for (r, set) in sets.iter().enumerate() {
            if !set.is_empty() && set.len() != n_ancilla {
                return invalid(format!("set {r} has {} entries, expected 0 or {n_ancilla}", set.len()));
            }
            for (pos, &bit) in set.iter().enumerate() {
                if bit >= num_bits {
                    return invalid(format!("set {r} names bit {bit} >= {num_bits}"));
                }
                if !lmap[r].contains_key(&bit) {
                    lmap[r].insert(bit, pos + 1);
                    locations[bit].push((r, pos + 1));
                }
            }
        }
        if let Some(bit) = locations.iter().position(Vec::is_empty) {
            return invalid(format!("bit {bit} is not covered"));
        }
        Ok(Covering {
            num_bits,
            n_ancilla,
            n_register,
            sets,
            lmap,
            locations,
        })
    }

    /// One register holding all bits in order.
    pub fn full(num_bits: usize) -> Result<Self, EncodingError> {
        Covering::new(num_bits, num_bits, 0, vec![(0..num_bits).collect()])
    }

    /// Consecutive blocks of `n_a` bits; the last block is padded by
    /// cycling its own entries and surplus registers stay empty.
    pub fn sequential(num_bits: usize, n_ancilla: usize) -> Result<Self, EncodingError> {
        let n_register = register_qubits(num_bits, n_ancilla, 0)?;
        let blocks: Vec<Vec<usize>> = (0..num_bits).collect::<Vec<_>>().chunks(n_ancilla).map(<[usize]>::to_vec).collect();
        let mut sets: Vec<Vec<usize>> = blocks.into_iter().map(|b| pad(b, n_ancilla)).collect();
        sets.resize(1 << n_register, Vec::new());
        Covering::new(num_bits, n_ancilla, n_register, sets)
    }

    pub fn num_bits(&self) -> usize {
        self.num_bits
    }

    pub fn n_ancilla(&self) -> usize {
        self.n_ancilla
    }

    pub fn n_register(&self) -> usize {
        self.n_register
    }

    pub fn n_registers(&self) -> usize {
        self.sets.len()
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// 1-based ancilla position of `bit` in register `r`, if covered there.
    pub fn position(&self, register: usize, bit: usize) -> Option<usize> {
        self.lmap[register].get(&bit).copied()
    }

    /// Distinct bits of register `r` with their positions.
    pub fn register_bits(&self, register: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lmap[register].iter().map(|(&b, &l)| (b, l))
    }

    /// `(register, position)` pairs covering `bit`.
    pub fn locations(&self, bit: usize) -> &[(usize, usize)] {
        &self.locations[bit]
    }

    /// `n_i`: number of registers covering `bit`.
    pub fn multiplicity(&self, bit: usize) -> usize {
        self.locations[bit].len()
    }

    /// `n_ij`: number of registers covering both bits.
    pub fn pair_multiplicity(&self, i: usize, j: usize) -> usize {
        self.locations[i]
            .iter()
            .filter(|(r, _)| self.lmap[*r].contains_key(&j))
            .count()
    }

    /// Every bit lies in exactly one register and no set repeats a bit.
    pub fn is_disjoint(&self) -> bool {
        self.locations.iter().all(|l| l.len() == 1)
            && self.sets.iter().zip(&self.lmap).all(|(s, m)| s.len() == m.len())
    }

    /// The partial assignment `x̃` of one measurement.
    pub fn partial(&self, record: &MeasurementRecord) -> PartialAssignment {
        let mut bits = vec![-1i8; self.num_bits];
        for (bit, l) in self.register_bits(record.register) {
            bits[bit] = record.bit(l) as i8;
        }
        PartialAssignment { bits }
    }
}

fn pad(mut group: Vec<usize>, n_ancilla: usize) -> Vec<usize> {
    let distinct = group.len();
    let mut k = 0;
    while group.len() < n_ancilla {
        group.push(group[k % distinct]);
        k += 1;
    }
    group
}

/// Shortest-path distances between transactions, two transactions being
/// adjacent when they share a party. Unreachable pairs get `usize::MAX`.
pub fn transaction_distances(problem: &SettlementProblem) -> Vec<Vec<usize>> {
    let n = problem.num_transactions;
    let mut by_party = vec![Vec::new(); problem.num_parties];
    for (i, t) in problem.transactions.iter().enumerate() {
        by_party[t.sender].push(i);
        by_party[t.receiver].push(i);
    }
    (0..n)
        .map(|src| {
            let mut dist = vec![usize::MAX; n];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(e) = queue.pop_front() {
                let t = &problem.transactions[e];
                for &party in &[t.sender, t.receiver] {
                    for &nb in &by_party[party] {
                        if dist[nb] == usize::MAX {
                            dist[nb] = dist[e] + 1;
                            queue.push_back(nb);
                        }
                    }
                }
            }
            dist
        })
        .collect()
}

/// `n` unmarked transactions nearest to `seed` (seed first), ties by index.
fn nearest(dist: &[Vec<usize>], seed: usize, taken: &[bool], n: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..dist.len()).filter(|&i| !taken[i] || i == seed).collect();
    candidates.sort_by_key(|&i| (i != seed, dist[seed][i], i));
    candidates.truncate(n);
    candidates
}

/// Cluster transactions into groups of `n_a` that share parties.
///
/// The first group grows around a random transaction; each later group
/// grows around the unassigned transaction farthest from everything
/// assigned so far. With `n_rplus > 0` the spare registers get
/// overlapping groups around the most connected transactions; otherwise
/// they stay empty.
pub fn build_covering(
    problem: &SettlementProblem,
    n_ancilla: usize,
    n_rplus: usize,
    seed: u64,
) -> Result<Covering, EncodingError> {
    let num_bits = problem.num_transactions;
    let n_register = register_qubits(num_bits, n_ancilla, n_rplus)?;
    if n_ancilla + n_register > MAX_QUBITS {
        return Err(EncodingError::TooManyQubits(n_ancilla + n_register));
    }
    let dist = transaction_distances(problem);
    let mut rng = seeded(seed);
    let mut assigned = vec![false; num_bits];
    let mut sets = Vec::new();
    let mut remaining = num_bits;
    while remaining > 0 {
        let seed_bit = if sets.is_empty() {
            rng.random_range(0..num_bits)
        } else {
            (0..num_bits)
                .filter(|&i| !assigned[i])
                .max_by_key(|&i| {
                    let gap = (0..num_bits).filter(|&j| assigned[j]).map(|j| dist[j][i]).min().unwrap_or(0);
                    (gap, std::cmp::Reverse(i))
                })
                .expect("an unassigned transaction remains")
        };
        let group = nearest(&dist, seed_bit, &assigned, n_ancilla);
        for &i in &group {
            assigned[i] = true;
        }
        remaining -= group.len();
        sets.push(pad(group, n_ancilla));
    }

    let n_registers = 1usize << n_register;
    if n_rplus > 0 {
        let degree: Vec<usize> = (0..num_bits)
            .map(|i| (0..num_bits).filter(|&j| j != i && dist[i][j] == 1).count())
            .collect();
        let mut order: Vec<usize> = (0..num_bits).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(degree[i]), i));
        let none = vec![false; num_bits];
        let mut k = 0;
        while sets.len() < n_registers {
            let seed_bit = order[k % num_bits];
            sets.push(nearest(&dist, seed_bit, &none, n_ancilla));
            k += 1;
        }
    } else {
        sets.resize(n_registers, Vec::new());
    }
    Covering::new(num_bits, n_ancilla, n_register, sets)
}

/// `x̃ ∈ {−1, 0, 1}^I` from one measurement; `−1` marks unset bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialAssignment {
    pub bits: Vec<i8>,
}

impl PartialAssignment {
    pub fn is_complete(&self) -> bool {
        self.bits.iter().all(|&b| b >= 0)
    }
}

pub fn partials_from_records(records: &[MeasurementRecord], covering: &Covering) -> Vec<PartialAssignment> {
    records.iter().map(|r| covering.partial(r)).collect()
}

/// Greedy assembly of bit-vectors from a stream of measurements.
///
/// Each vector starts unset; every record fixes the still-unset bits of its
/// register. Records that fix nothing for the current vector are queued and
/// offered first to the next vector.
#[derive(Debug, Clone)]
pub struct GreedySampler<'a> {
    covering: &'a Covering,
    leftover: VecDeque<MeasurementRecord>,
    consumed: usize,
}

impl<'a> GreedySampler<'a> {
    pub fn new(covering: &'a Covering) -> Self {
        GreedySampler {
            covering,
            leftover: VecDeque::new(),
            consumed: 0,
        }
    }

    /// Records drawn from streams so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    fn absorb(&self, record: &MeasurementRecord, x: &mut [i8], unset: &mut usize) -> bool {
        let mut used = false;
        for (bit, l) in self.covering.register_bits(record.register) {
            if x[bit] < 0 {
                x[bit] = record.bit(l) as i8;
                *unset -= 1;
                used = true;
            }
        }
        used
    }

    /// Next complete vector, or `None` if the stream runs dry first. On
    /// `None` the partial progress is discarded but the records that fixed
    /// nothing stay queued.
    pub fn next_vector<I>(&mut self, stream: &mut I) -> Option<Vec<u8>>
    where
        I: Iterator<Item = MeasurementRecord>,
    {
        let mut x = vec![-1i8; self.covering.num_bits];
        let mut unset = x.len();
        let mut kept = VecDeque::new();
        while let Some(rec) = self.leftover.pop_front() {
            if unset == 0 || !self.absorb(&rec, &mut x, &mut unset) {
                kept.push_back(rec);
            }
        }
        self.leftover = kept;
        while unset > 0 {
            let rec = stream.next()?;
            self.consumed += 1;
            if !self.absorb(&rec, &mut x, &mut unset) {
                self.leftover.push_back(rec);
            }
        }
        Some(x.into_iter().map(|b| b as u8).collect())
    }
}

/// `count` bit-vectors from `records` and the number of records consumed.
pub fn greedy_sample_bitvectors(
    records: &[MeasurementRecord],
    covering: &Covering,
    count: usize,
) -> Result<(Vec<Vec<u8>>, usize), EncodingError> {
    let mut sampler = GreedySampler::new(covering);
    let mut stream = records.iter().copied();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        match sampler.next_vector(&mut stream) {
            Some(x) => out.push(x),
            None => return Err(EncodingError::StreamExhausted { completed: out.len() }),
        }
    }
    Ok((out, sampler.consumed()))
}
