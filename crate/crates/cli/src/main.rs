//! `qsettle`: generate settlement instances, train compressed circuits or
//! the QAOA baseline, sample bit-vectors and run the brute-force oracle.

mod run_file;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use qubit_settle::ansatz::{build, build_hwe, build_regpres, AnsatzKind};
use qubit_settle::encoding::{build_covering, Covering};
use qubit_settle::estimator::default_eta;
use qubit_settle::optimize::{
    evaluate, gradient_variance, qaoa_circuit, qaoa_train, train, Optimizer, QaoaConfig, TrainConfig,
};
use qubit_settle::oracle::{brute_force, MAX_BRUTE_FORCE_BITS};
use qubit_settle::problem::{build_qubo, generate_instance, load_problem, load_transactions, save_problem, GenerateParams};

use run_file::{ecdf_csv, gradvar_csv, table_csv, RunConfig, RunFile};

/// Largest instance whose full cost table is written by `oracle`.
const MAX_TABLE_BITS: usize = 16;

#[derive(Parser)]
#[command(name = "qsettle", version, about = "Qubit-efficient variational settlement solver")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a settlement instance from trade records.
    Gen(GenArgs),
    /// Train a compressed circuit on the marginal cost estimator.
    Train(TrainArgs),
    /// Train the full-encoding QAOA baseline.
    Qaoa(QaoaArgs),
    /// Sample bit-vectors from a trained run and write their cost ECDF.
    Evaluate(EvaluateArgs),
    /// Enumerate every bit-vector of a small instance.
    Oracle(OracleArgs),
    /// Gradient-estimator variance of both ansätze over circuit depth.
    Gradvar(GradvarArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    transactions: usize,
    #[arg(long)]
    parties: usize,
    /// Extra transactions added after balances are fixed (default I/4).
    #[arg(long)]
    r_extra: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep raw volumes instead of normalizing per party and asset.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnsatzArg {
    Hwe,
    Regpres,
}

#[derive(Clone, Copy, ValueEnum)]
enum OptimizerArg {
    Desc,
    Gfree,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "regpres")]
    ansatz: AnsatzArg,
    #[arg(long, default_value_t = 1)]
    ancillas: usize,
    #[arg(long, default_value_t = 0)]
    extra_registers: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, value_enum, default_value = "desc")]
    optimizer: OptimizerArg,
    #[arg(long, default_value_t = 20_000)]
    shots: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Regularization weight (default 1 for hwe, 0 for regpres).
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    /// Use exact marginals instead of sampled shots.
    #[arg(long)]
    exact: bool,
    /// Bit-vectors sampled for the ECDF stored in the run file.
    #[arg(long, default_value_t = 500)]
    vectors: usize,
    #[arg(long, default_value_t = 24_000)]
    eval_shots: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QaoaArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 1)]
    p_depth: usize,
    #[arg(long, default_value_t = 50)]
    cycles: usize,
    #[arg(long, default_value_t = 1000)]
    inner_iters: usize,
    #[arg(long, default_value_t = 20_000)]
    shots: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    vectors: usize,
    #[arg(long, default_value_t = 24_000)]
    eval_shots: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 1000)]
    vectors: usize,
    #[arg(long, default_value_t = 24_000)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradvarArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Inclusive range `a..b`, or a comma-separated list.
    #[arg(long, default_value = "1..8")]
    depths: String,
    #[arg(long, default_value_t = 25)]
    theta_samples: usize,
    #[arg(long, default_value_t = 10)]
    resamples: usize,
    #[arg(long, default_value_t = 10_000)]
    shots: u64,
    #[arg(long, default_value_t = 4)]
    ancillas: usize,
    #[arg(long, default_value_t = 0)]
    extra_registers: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        anyhow::ensure!(jobs > 0, "--jobs must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Qaoa(a) => qaoa_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Oracle(a) => oracle_cmd(a),
        Command::Gradvar(a) => gradvar_cmd(a),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path) -> Result<qubit_settle::SettlementProblem> {
    load_problem(path).with_context(|| format!("loading {}", path.display()))
}

fn gen(a: GenArgs) -> Result<()> {
    let source = load_transactions(&a.source).with_context(|| format!("reading {}", a.source.display()))?;
    let extra = a.r_extra.unwrap_or(a.transactions / 4);
    let problem = generate_instance(&source, &GenerateParams::new(a.transactions, a.parties, extra, a.seed))?;
    let problem = if a.raw { problem } else { problem.normalize() };
    save_problem(&problem, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "{} transactions, {} parties, {} assets, hash {}",
        problem.num_transactions,
        problem.num_parties,
        problem.num_assets,
        problem.content_hash()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let problem = load(&a.problem)?;
    let qubo = build_qubo(&problem, a.lambda)?;
    let covering = build_covering(&problem, a.ancillas, a.extra_registers, a.seed)?;
    let circuit = match a.ansatz {
        AnsatzArg::Hwe => build_hwe(a.ancillas, covering.n_register(), a.depth)?,
        AnsatzArg::Regpres => build_regpres(a.ancillas, covering.n_register(), a.depth)?,
    };
    let eta = a.eta.unwrap_or_else(|| default_eta(circuit.kind));
    let optimizer = match a.optimizer {
        OptimizerArg::Desc => Optimizer::Desc,
        OptimizerArg::Gfree => Optimizer::Gfree,
    };
    let cfg = TrainConfig {
        optimizer,
        learning_rate: a.learning_rate,
        max_iters: a.iters,
        n_shots: a.shots,
        seed: a.seed,
        eta,
        exact_mode: a.exact,
        ..Default::default()
    };
    info!("training {} parameters on {} qubits", circuit.param_count, circuit.n_qubits());
    let (params, trace) = train(&circuit, &qubo, &covering, &cfg)?;
    let report = evaluate(&params, &circuit, &covering, &qubo, a.vectors, a.eval_shots, a.seed)?;
    if let Some(last) = trace.entries.last() {
        println!("final estimator cost {:.6}, best sampled cost {:.6}", last.cost, report.best_cost);
    }
    let run = RunFile {
        config: RunConfig::Compressed {
            ancillas: a.ancillas,
            extra_registers: a.extra_registers,
            depth: a.depth,
            optimizer,
            learning_rate: a.learning_rate,
            shots: a.shots,
            lambda: a.lambda,
            eta,
            seed: a.seed,
            iters: a.iters,
            exact: a.exact,
        },
        problem_hash: problem.content_hash(),
        circuit: circuit.descriptor(),
        problem,
        covering,
        slack: None,
        trace,
        final_params: params,
        ecdf: report.ecdf,
        best_vector: report.best_vector,
        best_cost: report.best_cost,
    };
    run.save(&a.out)
}

fn qaoa_cmd(a: QaoaArgs) -> Result<()> {
    let problem = load(&a.problem)?;
    let qubo = build_qubo(&problem, a.lambda)?;
    let cfg = QaoaConfig {
        p_depth: a.p_depth,
        cycles: a.cycles,
        inner_iters: a.inner_iters,
        n_shots: a.shots,
        seed: a.seed,
        ..Default::default()
    };
    let outcome = qaoa_train(&qubo, &cfg)?;
    let circuit = qaoa_circuit(&qubo, a.p_depth, &outcome.slack)?;
    let covering = Covering::full(qubo.num_bits)?;
    let report = evaluate(&outcome.params, &circuit, &covering, &qubo, a.vectors, a.eval_shots, a.seed)?;
    println!("best sampled cost {:.6}", report.best_cost);
    let run = RunFile {
        config: RunConfig::Qaoa {
            p_depth: a.p_depth,
            cycles: a.cycles,
            inner_iters: a.inner_iters,
            shots: a.shots,
            lambda: a.lambda,
            seed: a.seed,
        },
        problem_hash: problem.content_hash(),
        circuit: circuit.descriptor(),
        problem,
        covering,
        slack: Some(outcome.slack),
        trace: outcome.trace,
        final_params: outcome.params,
        ecdf: report.ecdf,
        best_vector: report.best_vector,
        best_cost: report.best_cost,
    };
    run.save(&a.out)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let run = RunFile::load(&a.run)?;
    let qubo = build_qubo(&run.problem, run.config.lambda())?;
    let circuit = match (run.circuit.kind, &run.slack) {
        (AnsatzKind::Qaoa, Some(slack)) => qaoa_circuit(&qubo, run.circuit.depth, slack)?,
        (AnsatzKind::Qaoa, None) => bail!("{}: QAOA run without slack", a.run.display()),
        _ => build(&run.circuit)?,
    };
    anyhow::ensure!(
        run.final_params.len() == circuit.param_count,
        "{}: {} parameters for a circuit with {}",
        a.run.display(),
        run.final_params.len(),
        circuit.param_count
    );
    let report = evaluate(&run.final_params, &circuit, &run.covering, &qubo, a.vectors, a.shots, a.seed)?;
    let header = format!(
        "problem {} vectors {} shots {} seed {} config {}",
        run.problem_hash,
        a.vectors,
        a.shots,
        a.seed,
        serde_json::to_string(&run.config)?
    );
    write(&a.out, &ecdf_csv(&header, &report))?;
    println!("best sampled cost {:.6} from {} shots", report.best_cost, report.shots_used);
    Ok(())
}

fn oracle_cmd(a: OracleArgs) -> Result<()> {
    let problem = load(&a.problem)?;
    let qubo = build_qubo(&problem, a.lambda)?;
    anyhow::ensure!(
        qubo.num_bits <= MAX_BRUTE_FORCE_BITS,
        "{} transactions exceed the enumeration cap of {MAX_BRUTE_FORCE_BITS}",
        qubo.num_bits
    );
    let keep = qubo.num_bits <= MAX_TABLE_BITS;
    let res = brute_force(&qubo, keep)?;
    let settled = res.x_opt.iter().filter(|&&b| b == 1).count();
    let bits: String = res.x_opt.iter().map(|b| b.to_string()).collect();
    let header = format!(
        "problem {} lambda {} optimum {} bits {bits}",
        problem.content_hash(),
        a.lambda,
        res.cost_opt
    );
    let text = match &res.table {
        Some(table) => table_csv(&header, table, qubo.num_bits),
        None => format!("# {header}\nbits,cost\n{bits},{}\n", res.cost_opt),
    };
    write(&a.out, &text)?;
    println!("optimum {:.6} settles {settled} of {} ({bits})", res.cost_opt, qubo.num_bits);
    Ok(())
}

/// `"1..8"` (inclusive), `"1..=8"`, `"3"` or `"1,2,4"`.
fn parse_depths(spec: &str) -> Result<Vec<usize>> {
    let spec = spec.trim();
    let depths: Vec<usize> = if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().with_context(|| format!("bad depth range {spec:?}"))?;
        let hi: usize = hi.trim().trim_start_matches('=').parse().with_context(|| format!("bad depth range {spec:?}"))?;
        (lo..=hi).collect()
    } else {
        spec.split(',')
            .map(|d| d.trim().parse::<usize>().with_context(|| format!("bad depth {d:?}")))
            .collect::<Result<_>>()?
    };
    if depths.is_empty() || depths.contains(&0) {
        bail!("depths must be a non-empty list of positive integers, got {spec:?}");
    }
    Ok(depths)
}

fn gradvar_cmd(a: GradvarArgs) -> Result<()> {
    let depths = parse_depths(&a.depths)?;
    let problem = load(&a.problem)?;
    let qubo = build_qubo(&problem, a.lambda)?;
    let covering = build_covering(&problem, a.ancillas, a.extra_registers, a.seed)?;
    let n_r = covering.n_register();
    let mut rows = Vec::with_capacity(depths.len());
    for depth in depths {
        let run = |c: qubit_settle::ParamCircuit| {
            gradient_variance(&c, &qubo, &covering, default_eta(c.kind), a.theta_samples, a.resamples, a.shots, a.seed)
        };
        let rp = run(build_regpres(a.ancillas, n_r, depth)?)?;
        let hwe = run(build_hwe(a.ancillas, n_r, depth)?)?;
        println!("depth {depth}: regpres {:.4e}, hwe {:.4e}", rp.median, hwe.median);
        rows.push((depth, rp, hwe));
    }
    let header = format!(
        "problem {} ancillas {} extra_registers {} lambda {} theta_samples {} resamples {} shots {} seed {}",
        problem.content_hash(),
        a.ancillas,
        a.extra_registers,
        a.lambda,
        a.theta_samples,
        a.resamples,
        a.shots,
        a.seed
    );
    write(&a.out, &gradvar_csv(&header, &rows))
}

#[cfg(test)]
mod tests {
    use super::parse_depths;

    #[test]
    fn depth_specs() {
        assert_eq!(parse_depths("1..8").unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(parse_depths("2..=3").unwrap(), vec![2, 3]);
        assert_eq!(parse_depths("1, 4").unwrap(), vec![1, 4]);
        assert!(parse_depths("0..2").is_err());
        assert!(parse_depths("a").is_err());
        assert!(parse_depths("5..2").is_err());
    }
}
