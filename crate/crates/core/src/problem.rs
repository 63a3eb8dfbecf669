//! Transaction-settlement instances and their penalty-form QUBO data.
//!
//! A settlement instance has `K` parties, `J` assets (asset `0` is cash) and
//! `I` transactions. Transaction `i` changes the balance of party `k` by the
//! vector `v_ik`; the task is to settle as many transactions as possible
//! while every party stays above its limit:
//!
//! ```text
//! maximize  wᵀx   s.t.  Σ_i x_i v_ik + bal_k − lim_k ≥ 0  for all k
//! ```
//!
//! With slack `s ≥ 0` the constraints become a quadratic penalty, and the
//! problem is written as a minimization
//!
//! ```text
//! min_{x, s ≥ 0}  xᵀAx + b(s)ᵀx + c(s)
//! A = λ V Vᵀ,  b_i(s) = −w_i + 2λ Σ_l (d_l − s_l) V_il,  c(s) = λ ‖d − s‖²
//! ```
//!
//! where `V` is the `I × KJ` transfer matrix, `d = bal − lim` flattened with
//! `l = k·J + j`, and the objective equals `−wᵀx + λ‖Vᵀx + d − s‖²`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::seeded;

/// Absolute value below which a QUBO entry counts as zero.
pub const NONZERO_THRESHOLD: f64 = 1e-12;

/// CSV header of the trade-record input, in order.
pub const TRANSACTION_CSV_HEADER: [&str; 6] = [
    "PARTICIPANT",
    "COUNTERPARTY",
    "INSTRUMENT",
    "QUANTITY",
    "CONSIDERATION",
    "SETTLEMENT_TYPE",
];

#[derive(Error, Debug)]
pub enum ProblemError {
    #[error("transaction source is empty")]
    EmptySource,
    #[error("at least two parties are required, got {0}")]
    TooFewParties(usize),
    #[error("transaction count must be positive")]
    NoTransactions,
    #[error("extra transaction count {extra} exceeds total {total}")]
    ExtraExceedsTotal { extra: usize, total: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid transaction {index}: {reason}")]
    InvalidTransaction { index: usize, reason: String },
    #[error("slack entry {index} is negative ({value})")]
    NegativeSlack { index: usize, value: f64 },
    #[error("penalty weight must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error(transparent)]
    CsvFormat(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Delivery-versus-payment or free-of-payment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SettlementKind {
    #[serde(rename = "DVP")]
    Dvp,
    #[serde(rename = "FOP")]
    Fop,
}

impl std::str::FromStr for SettlementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "DVP" => Ok(SettlementKind::Dvp),
            "FOP" => Ok(SettlementKind::Fop),
            other => Err(format!("unknown SETTLEMENT_TYPE {other:?}")),
        }
    }
}

/// One settlement instruction. The security leg flows sender → receiver;
/// for DVP the cash leg (asset 0) flows receiver → sender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: usize,
    pub receiver: usize,
    pub security: usize,
    pub quantity: f64,
    pub consideration: f64,
    pub kind: SettlementKind,
}

impl Transaction {
    /// Consideration actually moved (zero for FOP).
    pub fn cash_amount(&self) -> f64 {
        match self.kind {
            SettlementKind::Dvp => self.consideration,
            SettlementKind::Fop => 0.0,
        }
    }

    /// Unscaled balance changes as `(party, asset, amount)` legs.
    pub fn legs(&self) -> impl Iterator<Item = (usize, usize, f64)> {
        let cash = self.cash_amount();
        let security = [
            (self.sender, self.security, -self.quantity),
            (self.receiver, self.security, self.quantity),
        ];
        let payment = [(self.receiver, 0, -cash), (self.sender, 0, cash)];
        let n_payment = if cash != 0.0 { 2 } else { 0 };
        security.into_iter().chain(payment.into_iter().take(n_payment))
    }

    fn check(&self, index: usize) -> Result<(), ProblemError> {
        let bad = |reason: &str| ProblemError::InvalidTransaction {
            index,
            reason: reason.to_string(),
        };
        if self.sender == self.receiver {
            return Err(bad("sender equals receiver"));
        }
        if !(self.quantity.is_finite() && self.quantity > 0.0) {
            return Err(bad("quantity must be finite and positive"));
        }
        if !(self.consideration.is_finite() && self.consideration >= 0.0) {
            return Err(bad("consideration must be finite and non-negative"));
        }
        Ok(())
    }
}

/// A settlement instance. Matrices are `K × J`, row-major by party.
///
/// `scales` is set by [`SettlementProblem::normalize`]: the effective
/// transfer of asset `j` for party `k` is the raw leg amount divided by
/// `scales[k][j]`. Balances and limits are stored already divided.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettlementProblem {
    #[serde(rename = "I")]
    pub num_transactions: usize,
    #[serde(rename = "K")]
    pub num_parties: usize,
    #[serde(rename = "J")]
    pub num_assets: usize,
    pub seed: u64,
    pub transactions: Vec<Transaction>,
    pub balances: Vec<Vec<f64>>,
    pub limits: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<Vec<f64>>>,
}

/// Inputs of [`generate_instance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateParams {
    pub transactions: usize,
    pub parties: usize,
    pub extra: usize,
    pub seed: u64,
    /// Map every drawn instrument onto a single security (asset 1), giving
    /// `J = 2`. Otherwise instruments get dense indices `1..J`.
    pub single_security: bool,
}

impl GenerateParams {
    pub fn new(transactions: usize, parties: usize, extra: usize, seed: u64) -> Self {
        GenerateParams {
            transactions,
            parties,
            extra,
            seed,
            single_security: true,
        }
    }
}

/// Build an instance from trade records.
///
/// The first `I − R` draws fix the balances: limits are zero and each
/// party gets the smallest non-negative balance that keeps it solvent when
/// all of them settle together. The remaining `R` draws are added without
/// touching balances, so at least `I − R` transactions are jointly
/// feasible.
pub fn generate_instance(
    source: &[Transaction],
    params: &GenerateParams,
) -> Result<SettlementProblem, ProblemError> {
    if source.is_empty() {
        return Err(ProblemError::EmptySource);
    }
    if params.parties < 2 {
        return Err(ProblemError::TooFewParties(params.parties));
    }
    if params.transactions == 0 {
        return Err(ProblemError::NoTransactions);
    }
    if params.extra > params.transactions {
        return Err(ProblemError::ExtraExceedsTotal {
            extra: params.extra,
            total: params.transactions,
        });
    }
    let mut rng = seeded(params.seed);
    let k = params.parties;
    let mut drawn = Vec::with_capacity(params.transactions);
    for _ in 0..params.transactions {
        let template = &source[rng.random_range(0..source.len())];
        let sender = rng.random_range(0..k);
        let mut receiver = rng.random_range(0..k);
        while receiver == sender {
            receiver = rng.random_range(0..k);
        }
        let mut t = template.clone();
        t.sender = sender;
        t.receiver = receiver;
        drawn.push(t);
    }

    // Dense security labels in order of first appearance.
    let mut labels: HashMap<usize, usize> = HashMap::new();
    for t in &mut drawn {
        let next = labels.len() + 1;
        let id = if params.single_security {
            1
        } else {
            *labels.entry(t.security).or_insert(next)
        };
        t.security = id;
    }
    let num_assets = if params.single_security {
        2
    } else {
        labels.len() + 1
    };

    let mut net = vec![vec![0.0; num_assets]; k];
    for t in &drawn[..params.transactions - params.extra] {
        for (party, asset, amount) in t.legs() {
            net[party][asset] += amount;
        }
    }
    let balances = net
        .iter()
        .map(|row| row.iter().map(|&n| (-n).max(0.0)).collect())
        .collect();

    let problem = SettlementProblem {
        num_transactions: params.transactions,
        num_parties: k,
        num_assets,
        seed: params.seed,
        transactions: drawn,
        balances,
        limits: vec![vec![0.0; num_assets]; k],
        weights: vec![1.0; params.transactions],
        scales: None,
    };
    problem.validate()?;
    Ok(problem)
}

impl SettlementProblem {
    /// Instance from explicit data with unit weights and no scaling.
    pub fn new(
        num_parties: usize,
        num_assets: usize,
        transactions: Vec<Transaction>,
        balances: Vec<Vec<f64>>,
        limits: Vec<Vec<f64>>,
    ) -> Result<Self, ProblemError> {
        let problem = SettlementProblem {
            num_transactions: transactions.len(),
            num_parties,
            num_assets,
            seed: 0,
            weights: vec![1.0; transactions.len()],
            transactions,
            balances,
            limits,
            scales: None,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        let mismatch = |what: String| Err(ProblemError::DimensionMismatch(what));
        if self.transactions.len() != self.num_transactions {
            return mismatch(format!(
                "I = {} but {} transactions",
                self.num_transactions,
                self.transactions.len()
            ));
        }
        if self.weights.len() != self.num_transactions {
            return mismatch(format!("{} weights for I = {}", self.weights.len(), self.num_transactions));
        }
        if let Some(i) = self.weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return mismatch(format!("weight {i} is not strictly positive"));
        }
        let check_matrix = |name: &str, m: &Vec<Vec<f64>>| -> Result<(), ProblemError> {
            if m.len() != self.num_parties || m.iter().any(|row| row.len() != self.num_assets) {
                return Err(ProblemError::DimensionMismatch(format!(
                    "{name} must be {} x {}",
                    self.num_parties, self.num_assets
                )));
            }
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ProblemError::DimensionMismatch(format!("{name} has non-finite entries")));
            }
            Ok(())
        };
        check_matrix("balances", &self.balances)?;
        check_matrix("limits", &self.limits)?;
        if let Some(scales) = &self.scales {
            check_matrix("scales", scales)?;
            if scales.iter().flatten().any(|&g| g <= 0.0) {
                return mismatch("scales must be positive".into());
            }
        }
        for (i, t) in self.transactions.iter().enumerate() {
            t.check(i)?;
            if t.sender >= self.num_parties || t.receiver >= self.num_parties {
                return Err(ProblemError::InvalidTransaction {
                    index: i,
                    reason: format!("party index out of range 0..{}", self.num_parties),
                });
            }
            if t.security >= self.num_assets {
                return Err(ProblemError::InvalidTransaction {
                    index: i,
                    reason: format!("asset index {} out of range 0..{}", t.security, self.num_assets),
                });
            }
        }
        Ok(())
    }

    /// Number of flattened balance entries `K·J`.
    pub fn balance_len(&self) -> usize {
        self.num_parties * self.num_assets
    }

    /// Flattened index of `(party, asset)`.
    pub fn flat_index(&self, party: usize, asset: usize) -> usize {
        party * self.num_assets + asset
    }

    fn scale(&self, party: usize, asset: usize) -> f64 {
        self.scales.as_ref().map_or(1.0, |s| s[party][asset])
    }

    /// Dense `I × KJ` transfer matrix, row-major.
    pub fn transfer_matrix(&self) -> Vec<f64> {
        let l = self.balance_len();
        let mut v = vec![0.0; self.num_transactions * l];
        for (i, t) in self.transactions.iter().enumerate() {
            for (party, asset, amount) in t.legs() {
                v[i * l + self.flat_index(party, asset)] += amount / self.scale(party, asset);
            }
        }
        v
    }

    /// `bal − lim`, flattened.
    pub fn offsets(&self) -> Vec<f64> {
        self.balances
            .iter()
            .zip(&self.limits)
            .flat_map(|(b, l)| b.iter().zip(l).map(|(b, l)| b - l))
            .collect()
    }

    /// Rescale every party/asset column by the mean non-zero transfer
    /// magnitude. The feasible set and the optimal solutions are unchanged.
    pub fn normalize(&self) -> SettlementProblem {
        let (k, j) = (self.num_parties, self.num_assets);
        let l = self.balance_len();
        let v = self.transfer_matrix();
        let mut gamma = vec![vec![1.0; j]; k];
        for party in 0..k {
            for asset in 0..j {
                let col = self.flat_index(party, asset);
                let nonzero: Vec<f64> = (0..self.num_transactions)
                    .map(|i| v[i * l + col].abs())
                    .filter(|&m| m != 0.0)
                    .collect();
                if !nonzero.is_empty() {
                    gamma[party][asset] = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
                }
            }
        }
        let divide = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter()
                .zip(&gamma)
                .map(|(row, g)| row.iter().zip(g).map(|(x, g)| x / g).collect())
                .collect()
        };
        let scales = (0..k)
            .map(|p| (0..j).map(|a| self.scale(p, a) * gamma[p][a]).collect())
            .collect();
        SettlementProblem {
            balances: divide(&self.balances),
            limits: divide(&self.limits),
            scales: Some(scales),
            ..self.clone()
        }
    }

    /// Whether settling exactly the transactions in `x` violates no balance.
    pub fn is_feasible(&self, x: &[u8]) -> bool {
        let l = self.balance_len();
        let v = self.transfer_matrix();
        let mut y = self.offsets();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0 {
                for (col, yc) in y.iter_mut().enumerate() {
                    *yc += v[i * l + col];
                }
            }
        }
        y.iter().all(|&val| val >= -1e-9)
    }

    /// Degree of every party in the transaction graph.
    pub fn party_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_parties];
        for t in &self.transactions {
            deg[t.sender] += 1;
            deg[t.receiver] += 1;
        }
        deg
    }

    pub fn to_json(&self) -> Result<String, ProblemError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let problem: SettlementProblem = serde_json::from_str(text)?;
        problem.validate()?;
        Ok(problem)
    }

    /// SHA-256 of the compact JSON encoding, hex encoded.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("problem serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

pub fn save_problem(problem: &SettlementProblem, path: impl AsRef<Path>) -> Result<(), ProblemError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(problem.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<SettlementProblem, ProblemError> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    SettlementProblem::from_json(&text)
}

/// Parse trade records. Participants and instruments are relabelled to
/// dense indices in order of first appearance (instruments start at 1;
/// asset 0 is cash).
pub fn read_transactions<R: Read>(reader: R) -> Result<Vec<Transaction>, ProblemError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header != TRANSACTION_CSV_HEADER {
        return Err(ProblemError::Csv {
            line: 1,
            reason: format!("expected header {}, got {}", TRANSACTION_CSV_HEADER.join(","), header.join(",")),
        });
    }
    let mut parties: HashMap<String, usize> = HashMap::new();
    let mut instruments: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let err = |reason: String| ProblemError::Csv { line, reason };
        if row.len() != TRANSACTION_CSV_HEADER.len() {
            return Err(err(format!("expected 6 fields, got {}", row.len())));
        }
        let number = |idx: usize| -> Result<f64, ProblemError> {
            row[idx]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{} is not a number: {:?}", TRANSACTION_CSV_HEADER[idx], &row[idx])))
        };
        let mut party = |label: &str| {
            let next = parties.len();
            *parties.entry(label.to_string()).or_insert(next)
        };
        let sender = party(&row[0]);
        let receiver = party(&row[1]);
        let next = instruments.len() + 1;
        let security = *instruments.entry(row[2].to_string()).or_insert(next);
        let quantity = number(3)?;
        let consideration = number(4)?;
        let kind: SettlementKind = row[5].parse().map_err(err)?;
        let t = Transaction {
            sender,
            receiver,
            security,
            quantity,
            consideration: if kind == SettlementKind::Fop { 0.0 } else { consideration },
            kind,
        };
        t.check(out.len()).map_err(|e| err(e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}

pub fn load_transactions(path: impl AsRef<Path>) -> Result<Vec<Transaction>, ProblemError> {
    read_transactions(BufReader::new(File::open(path)?))
}

/// Penalty-form QUBO data for fixed `λ`; see the module docs for the sign
/// convention. Matrices are dense row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuboData {
    pub num_bits: usize,
    pub balance_len: usize,
    /// `I × I`, equal to `λ V Vᵀ`.
    pub a: Vec<f64>,
    /// `I × KJ` transfer matrix.
    pub v: Vec<f64>,
    pub lambda: f64,
    /// Transaction weights `w`.
    pub weights: Vec<f64>,
    /// `bal − lim`, flattened.
    pub offsets: Vec<f64>,
}

pub fn build_qubo(problem: &SettlementProblem, lambda: f64) -> Result<QuboData, ProblemError> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ProblemError::InvalidLambda(lambda));
    }
    problem.validate()?;
    let n = problem.num_transactions;
    let l = problem.balance_len();
    let v = problem.transfer_matrix();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let dot: f64 = (0..l).map(|c| v[i * l + c] * v[j * l + c]).sum();
            a[i * n + j] = lambda * dot;
            a[j * n + i] = lambda * dot;
        }
    }
    Ok(QuboData {
        num_bits: n,
        balance_len: l,
        a,
        v,
        lambda,
        weights: problem.weights.clone(),
        offsets: problem.offsets(),
    })
}

impl QuboData {
    pub fn a_entry(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.num_bits + j]
    }

    /// Row `i` of the transfer matrix.
    pub fn v_row(&self, i: usize) -> &[f64] {
        &self.v[i * self.balance_len..(i + 1) * self.balance_len]
    }

    fn check_slack(&self, slack: &[f64]) -> Result<(), ProblemError> {
        if slack.len() != self.balance_len {
            return Err(ProblemError::DimensionMismatch(format!(
                "slack has {} entries, expected {}",
                slack.len(),
                self.balance_len
            )));
        }
        match slack.iter().position(|&s| !(s >= 0.0)) {
            Some(index) => Err(ProblemError::NegativeSlack {
                index,
                value: slack[index],
            }),
            None => Ok(()),
        }
    }

    /// Linear and constant terms `(b(s), c(s))`.
    pub fn eval_b_c(&self, slack: &[f64]) -> Result<(Vec<f64>, f64), ProblemError> {
        self.check_slack(slack)?;
        Ok(self.b_c_unchecked(slack))
    }

    pub(crate) fn b_c_unchecked(&self, slack: &[f64]) -> (Vec<f64>, f64) {
        let residual: Vec<f64> = self.offsets.iter().zip(slack).map(|(d, s)| d - s).collect();
        let b = (0..self.num_bits)
            .map(|i| {
                let dot: f64 = self.v_row(i).iter().zip(&residual).map(|(v, r)| v * r).sum();
                -self.weights[i] + 2.0 * self.lambda * dot
            })
            .collect();
        let c = self.lambda * residual.iter().map(|r| r * r).sum::<f64>();
        (b, c)
    }

    /// `Q(s) = A + Diag(b(s))`, row-major.
    pub fn q_matrix(&self, slack: &[f64]) -> Result<Vec<f64>, ProblemError> {
        let (b, _) = self.eval_b_c(slack)?;
        let n = self.num_bits;
        let mut q = self.a.clone();
        for i in 0..n {
            q[i * n + i] += b[i];
        }
        Ok(q)
    }

    /// `xᵀAx + b(s)ᵀx + c(s)`.
    pub fn objective(&self, x: &[u8], slack: &[f64]) -> Result<f64, ProblemError> {
        if x.len() != self.num_bits {
            return Err(ProblemError::DimensionMismatch(format!(
                "bit-vector has {} entries, expected {}",
                x.len(),
                self.num_bits
            )));
        }
        let (b, c) = self.eval_b_c(slack)?;
        Ok(self.quadratic(x) + x.iter().zip(&b).map(|(&xi, bi)| f64::from(xi) * bi).sum::<f64>() + c)
    }

    fn quadratic(&self, x: &[u8]) -> f64 {
        let n = self.num_bits;
        let ones: Vec<usize> = (0..n).filter(|&i| x[i] != 0).collect();
        ones.iter()
            .map(|&i| ones.iter().map(|&j| self.a[i * n + j]).sum::<f64>())
            .sum()
    }

    /// Slack minimizing the objective for a fixed bit-vector,
    /// `max(0, Vᵀx + d)`.
    pub fn slack_for_bitvector(&self, x: &[u8]) -> Vec<f64> {
        let mut y = self.offsets.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0 {
                for (yc, v) in y.iter_mut().zip(self.v_row(i)) {
                    *yc += v;
                }
            }
        }
        y.into_iter().map(|v| v.max(0.0)).collect()
    }

    /// Objective at the bit-vector's optimal slack; the score used for
    /// every reported bit-vector.
    pub fn cost_of_bitvector(&self, x: &[u8]) -> f64 {
        let slack = self.slack_for_bitvector(x);
        self.objective(x, &slack).expect("slack is non-negative and sized")
    }
}

/// Row-density statistics of `Q` against the degree bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityStats {
    pub avg_nonzeros_per_row: f64,
    pub bound: f64,
}

/// Average non-zeros per row of `Q(s) = A + Diag(b(s))` and the bound
/// `4I/K + (K/I)·Var_k[N_k] − 1` where `N_k` is the degree of party `k`.
pub fn connectivity_stats(
    qubo: &QuboData,
    problem: &SettlementProblem,
    slack: &[f64],
) -> Result<ConnectivityStats, ProblemError> {
    let q = qubo.q_matrix(slack)?;
    let n = qubo.num_bits;
    let nonzeros = q.iter().filter(|v| v.abs() > NONZERO_THRESHOLD).count();
    let degrees: Vec<f64> = problem.party_degrees().into_iter().map(|d| d as f64).collect();
    let k = degrees.len() as f64;
    let mean = degrees.iter().sum::<f64>() / k;
    let var = degrees.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k;
    let i = n as f64;
    Ok(ConnectivityStats {
        avg_nonzeros_per_row: nonzeros as f64 / i,
        bound: 4.0 * i / k + k / i * var - 1.0,
    })
}
