mod common;

use proptest::prelude::*;
use qubit_settle::ansatz::{build_hwe, build_regpres, random_register_uniform_state};
use qubit_settle::encoding::{build_covering, greedy_sample_bitvectors, Covering};
use qubit_settle::estimator::{
    build_hermitian_cost, cost, cost_at_slack, estimate_marginals, evaluate_cost, exact_marginals, gradient,
    optimal_slack, regularization, structural_mu, EstimatorConfig, Evaluation, MuMode,
};
use qubit_settle::optimize::initial_params;
use qubit_settle::oracle::exact_expectation;
use qubit_settle::problem::build_qubo;
use qubit_settle::rng::seeded;
use qubit_settle::simulator::{run, Initial};
use qubit_settle::{Gate, StateVector};
use rand::Rng;

#[test]
fn uniform_state_without_penalty_settles_half() {
    let p = common::instance(8, 5, 1);
    let q = build_qubo(&p, 0.0).unwrap();
    let c = build_regpres(2, 2, 2).unwrap();
    let cov = build_covering(&p, 2, 0, 0).unwrap();
    let cfg = EstimatorConfig::for_circuit(&c);
    let report = evaluate_cost(&c, &vec![0.0; c.param_count], &q, &cov, &cfg, Evaluation::Exact, 0.0).unwrap();
    assert!((report.cost + 4.0).abs() < 1e-12);
    assert_eq!(report.reg_penalty, 0.0);
}

#[test]
fn ancilla_in_one_sets_register_bits() {
    let cov = Covering::sequential(4, 2).unwrap();
    // Register qubit in |+⟩, both ancillas flipped.
    let mut s = StateVector::zero(3).unwrap();
    s.apply(&Gate::X(0), &[]).unwrap();
    s.apply(&Gate::X(1), &[]).unwrap();
    s.apply(&Gate::H(2), &[]).unwrap();
    let e = exact_marginals(&s, &cov, &EstimatorConfig::new(2)).unwrap();
    assert_eq!(e.p_hat, vec![1.0; 4]);
    assert_eq!(e.q_hat[1], 1.0);
}

#[test]
fn disjoint_pairs_get_structural_mu() {
    let p = common::instance(8, 5, 2);
    let cov = build_covering(&p, 2, 0, 1).unwrap();
    let c = build_regpres(2, 2, 2).unwrap();
    let s = run(&c, &initial_params(c.param_count, 4), Initial::Zero).unwrap();
    let e = exact_marginals(&s, &cov, &EstimatorConfig::new(4)).unwrap();
    for i in 0..8 {
        for j in 0..8 {
            if i == j {
                continue;
            }
            let same = cov.pair_multiplicity(i, j) > 0;
            let k = i * 8 + j;
            if same {
                assert_eq!(e.mu_hat[k], 0.0);
                assert!((e.p_pair(i, j) - e.q_hat[k]).abs() < 1e-15);
            } else {
                assert_eq!(e.mu_hat[k], 1.0);
                assert!((e.p_pair(i, j) - e.p_hat[i] * e.p_hat[j]).abs() < 1e-15);
            }
        }
    }
    let literal = exact_marginals(&s, &cov, &EstimatorConfig { mu_mode: MuMode::SharedSeen, ..EstimatorConfig::new(4) }).unwrap();
    let (i, j) = (cov.sets()[0][0], cov.sets()[0][1]);
    assert!((literal.mu_hat[i * 8 + j] - 0.5).abs() < 1e-12);
}

/// Register-preserving circuit on `(I = 8, n_a)` with a random instance,
/// disjoint covering and random angles.
fn random_config(n_a: usize, seed: u64) -> (qubit_settle::ParamCircuit, Covering, qubit_settle::QuboData, Vec<f64>) {
    let p = common::instance(8, 5, seed);
    let q = build_qubo(&p, 1.0).unwrap();
    let cov = build_covering(&p, n_a, 0, seed).unwrap();
    let c = build_regpres(n_a, cov.n_register(), 1 + (seed % 3) as usize).unwrap();
    let theta = initial_params(c.param_count, seed + 100);
    (c, cov, q, theta)
}

#[test]
fn shot_estimates_converge_to_exact_marginals() {
    let n_shots = 100_000;
    for k in 0..20u64 {
        let n_a = [1, 2, 4][(k % 3) as usize];
        let (c, cov, _, theta) = random_config(n_a, k);
        assert!(cov.is_disjoint());
        let cfg = EstimatorConfig::for_circuit(&c);
        let s = run(&c, &theta, Initial::Zero).unwrap();
        let exact = exact_marginals(&s, &cov, &cfg).unwrap();
        let shots = estimate_marginals(&s.sample(n_shots, k, n_a).unwrap(), &cov, &cfg).unwrap();
        let n_regs = cov.n_registers() as f64;
        let sigma = |p: f64| (p * (1.0 - p) * n_regs / n_shots as f64).sqrt().max(1.0 / n_shots as f64);
        for i in 0..8 {
            let (pe, ps) = (exact.p_hat[i], shots.p_hat[i]);
            assert!((pe - ps).abs() <= 5.0 * sigma(pe), "config {k} bit {i}: {pe} vs {ps}");
            for j in 0..8 {
                if i == j {
                    continue;
                }
                let (qe, qs) = (exact.p_pair(i, j), shots.p_pair(i, j));
                let bound = if cov.pair_multiplicity(i, j) > 0 {
                    5.0 * sigma(qe)
                } else {
                    5.0 * (sigma(exact.p_hat[i]) + sigma(exact.p_hat[j]))
                };
                assert!((qe - qs).abs() <= bound, "config {k} pair ({i},{j}): {qe} vs {qs}");
            }
        }
    }
}

#[test]
fn exact_expectation_equals_estimator_on_disjoint_coverings() {
    for k in 0..20u64 {
        let n_a = [1, 2, 4][(k % 3) as usize];
        let (c, cov, q, theta) = random_config(n_a, k);
        let cfg = EstimatorConfig::for_circuit(&c);
        let e = exact_expectation(&c, &theta, &q, &cov, &cfg).unwrap();
        assert!((e.expectation - e.estimator_cost).abs() < 1e-9, "config {k}: {e:?}");
        let direct = cost(&exact_marginals(&run(&c, &theta, Initial::Zero).unwrap(), &cov, &cfg).unwrap(), &q, 0.0).unwrap();
        assert!((direct.cost - e.expectation).abs() < 1e-9);
    }
}

#[test]
fn exact_expectation_matches_sampled_vectors() {
    let (c, cov, q, theta) = random_config(2, 5);
    let cfg = EstimatorConfig::for_circuit(&c);
    let e = exact_expectation(&c, &theta, &q, &cov, &cfg).unwrap();
    let s = run(&c, &theta, Initial::Zero).unwrap();
    let records = s.sample(2_000_000, 9, 2).unwrap();
    let (xs, _) = greedy_sample_bitvectors(&records, &cov, 200_000).unwrap();
    let values: Vec<f64> = xs.iter().map(|x| q.objective(x, &e.slack).unwrap()).collect();
    let mean = qubit_settle::stats::mean(&values);
    let se = (qubit_settle::stats::sample_variance(&values) / values.len() as f64).sqrt();
    assert!((mean - e.expectation).abs() < 5.0 * se, "{mean} vs {} (se {se})", e.expectation);
}

#[test]
fn full_encoding_is_the_plain_shot_mean() {
    let p = common::instance(6, 4, 3);
    let q = build_qubo(&p, 1.0).unwrap();
    let cov = Covering::full(6).unwrap();
    let c = build_hwe(6, 0, 2).unwrap();
    let s = run(&c, &initial_params(c.param_count, 8), Initial::Zero).unwrap();
    let records = s.sample(5000, 1, 6).unwrap();
    let est = estimate_marginals(&records, &cov, &EstimatorConfig::new(1)).unwrap();
    let mut rng = seeded(2);
    for _ in 0..5 {
        let slack: Vec<f64> = (0..q.balance_len).map(|_| rng.random_range(0.0..2.0)).collect();
        let c_hat = cost_at_slack(&est, &q, &slack, 0.0).unwrap().cost;
        let direct: f64 = records
            .iter()
            .map(|r| {
                let x: Vec<u8> = (0..6).map(|i| (r.ancilla_bits >> i & 1) as u8).collect();
                q.objective(&x, &slack).unwrap()
            })
            .sum::<f64>()
            / records.len() as f64;
        assert!((c_hat - direct).abs() < 1e-12 * direct.abs().max(1.0), "{c_hat} vs {direct}");
    }
}

#[test]
fn optimal_slack_beats_random_probes() {
    for k in 0..10u64 {
        let (c, cov, q, theta) = random_config([1, 2, 4][(k % 3) as usize], k + 50);
        let cfg = EstimatorConfig::for_circuit(&c);
        let s = run(&c, &theta, Initial::Zero).unwrap();
        let est = estimate_marginals(&s.sample(2000, k, c.n_ancilla).unwrap(), &cov, &cfg).unwrap();
        let best = cost(&est, &q, 0.0).unwrap();
        assert!(best.slack.iter().all(|&v| v >= 0.0));
        let mut rng = seeded(k);
        for _ in 0..1000 {
            let probe: Vec<f64> = best.slack.iter().map(|v| (v + rng.random_range(-2.0..2.0)).max(0.0)).collect();
            let other = cost_at_slack(&est, &q, &probe, 0.0).unwrap().cost;
            assert!(other - best.cost >= -1e-9);
        }
    }
}

#[test]
fn slack_clips_at_zero() {
    let p = common::instance(8, 5, 4);
    let q = build_qubo(&p, 1.0).unwrap();
    let zero = optimal_slack(&[0.0; 8], &q);
    for (s, d) in zero.iter().zip(&q.offsets) {
        assert_eq!(*s, d.max(0.0));
    }
    let ones = optimal_slack(&[1.0; 8], &q);
    assert_eq!(ones, q.slack_for_bitvector(&[1; 8]));
    assert!(ones.iter().all(|&v| v >= 0.0));
}

#[test]
fn hermitian_observable_matches_estimator() {
    // Four- and five-qubit layouts on six transactions.
    for (k, (n_a, n_r)) in [(1usize, 3usize), (2, 2), (3, 1), (1, 4), (2, 3), (3, 2), (4, 1)].into_iter().enumerate() {
        let i_bits = 6;
        let p = common::instance(i_bits, 4, k as u64);
        let q = build_qubo(&p, 1.0).unwrap();
        // Surplus register qubits exercise overlapping coverings.
        let base = qubit_settle::encoding::register_qubits(i_bits, n_a, 0).unwrap();
        let cov = build_covering(&p, n_a, n_r - base, k as u64).unwrap();
        assert_eq!(cov.n_register(), n_r);
        let mut rng = seeded(k as u64);
        let slack: Vec<f64> = (0..q.balance_len).map(|_| rng.random_range(0.0..1.5)).collect();
        for mode in [MuMode::CrossRegister, MuMode::SharedSeen] {
            let h = build_hermitian_cost(&q, &cov, &slack, mode).unwrap();
            for trial in 0..5 {
                let state = random_register_uniform_state(n_a, n_r, trial % 2 == 0, &mut rng).unwrap();
                let est = exact_marginals(&state, &cov, &EstimatorConfig::new(cov.n_registers()))
                    .unwrap()
                    .with_mu(&structural_mu(&cov, mode));
                let reference = cost_at_slack(&est, &q, &slack, 0.0).unwrap().cost;
                let value = h.expectation(&state).unwrap();
                assert!((value - reference).abs() < 1e-9, "({n_a},{n_r}) {mode:?}: {value} vs {reference}");
            }
        }
    }
}

#[test]
fn hermitian_observable_matches_doubled_contraction() {
    let p = common::instance(4, 3, 6);
    let q = build_qubo(&p, 1.0).unwrap();
    let cov = Covering::sequential(4, 2).unwrap();
    let slack = optimal_slack(&[0.5; 4], &q);
    let h = build_hermitian_cost(&q, &cov, &slack, MuMode::CrossRegister).unwrap();
    let state = random_register_uniform_state(2, 1, true, &mut seeded(3)).unwrap();
    let probs = state.probabilities();
    let doubled = h.materialize_doubled();
    let dim = probs.len();
    assert_eq!(doubled.len(), dim * dim);
    let mut contraction = 0.0;
    for hi in 0..dim {
        for lo in 0..dim {
            contraction += doubled[hi * dim + lo] * probs[lo] * probs[hi];
        }
    }
    assert!((contraction - h.expectation(&state).unwrap()).abs() < 1e-12);

    // Without the penalty the diagonal is Σ −w_i P_i ⊗ 𝟙 + const.
    let q0 = build_qubo(&p, 0.0).unwrap();
    let h0 = build_hermitian_cost(&q0, &cov, &slack, MuMode::CrossRegister).unwrap();
    let d0 = h0.materialize_doubled();
    for hi in 0..dim {
        for lo in 0..dim {
            let expected: f64 = (0..4).map(|i| -h0.p_diag[i][lo]).sum();
            assert!((d0[hi * dim + lo] - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn regularization_penalizes_non_uniform_registers() {
    let p = common::instance(8, 5, 1);
    let q = build_qubo(&p, 1.0).unwrap();
    let cov = build_covering(&p, 2, 0, 0).unwrap();
    let c = build_hwe(2, 2, 2).unwrap();
    let cfg = EstimatorConfig::for_circuit(&c);
    let theta = initial_params(c.param_count, 3);
    let r = evaluate_cost(&c, &theta, &q, &cov, &cfg, Evaluation::Exact, 2.0).unwrap();
    assert!(r.reg_penalty > 0.0);
    assert!((r.total() - r.cost - r.reg_penalty).abs() < 1e-15);
    // Register-preserving output: the penalty shrinks with the shot count.
    let rp = build_regpres(2, 2, 2).unwrap();
    let theta = initial_params(rp.param_count, 3);
    let small = evaluate_cost(&rp, &theta, &q, &cov, &cfg, Evaluation::Shots { n_shots: 100, seed: 1 }, 1.0).unwrap();
    let large = evaluate_cost(&rp, &theta, &q, &cov, &cfg, Evaluation::Shots { n_shots: 1_000_000, seed: 1 }, 1.0).unwrap();
    assert!(large.reg_penalty < small.reg_penalty);
    assert!(large.reg_penalty < 1e-5);
    assert_eq!(regularization(&[0.25; 4], 1.0), 0.0);
}

#[test]
fn shot_gradient_is_unbiased_around_exact() {
    let (c, cov, q, theta) = random_config(2, 3);
    let cfg = EstimatorConfig::for_circuit(&c);
    let exact = gradient(&c, &theta, &q, &cov, &cfg, Evaluation::Exact, 0.0).unwrap().gradient.unwrap();
    let sampled = gradient(&c, &theta, &q, &cov, &cfg, Evaluation::Shots { n_shots: 2_000_000, seed: 4 }, 0.0)
        .unwrap()
        .gradient
        .unwrap();
    let scale = exact.iter().map(|g| g.abs()).fold(1.0, f64::max);
    for (e, s) in exact.iter().zip(&sampled) {
        assert!((e - s).abs() < 0.05 * scale, "{e} vs {s}");
    }
}

#[test]
fn estimator_errors() {
    let p = common::instance(8, 5, 1);
    let q = build_qubo(&p, 1.0).unwrap();
    let cov = build_covering(&p, 2, 0, 0).unwrap();
    let c = build_regpres(2, 1, 1).unwrap();
    let cfg = EstimatorConfig::for_circuit(&c);
    assert!(evaluate_cost(&c, &vec![0.0; c.param_count], &q, &cov, &cfg, Evaluation::Exact, 0.0).is_err());
    let c = build_regpres(2, 2, 1).unwrap();
    assert!(evaluate_cost(&c, &vec![0.0; c.param_count], &q, &cov, &cfg, Evaluation::Shots { n_shots: 0, seed: 0 }, 0.0).is_err());
    let est = exact_marginals(&run(&c, &vec![0.0; c.param_count], Initial::Zero).unwrap(), &cov, &cfg).unwrap();
    assert!(cost_at_slack(&est, &q, &[0.0], 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn estimates_stay_in_unit_interval(seed in 0u64..10_000, shots in 1usize..400) {
        let (c, cov, q, theta) = random_config(2, seed % 40);
        let cfg = EstimatorConfig::for_circuit(&c);
        let s = run(&c, &theta, Initial::Zero).unwrap();
        let est = estimate_marginals(&s.sample(shots, seed, 2).unwrap(), &cov, &cfg).unwrap();
        for i in 0..8 {
            prop_assert!((0.0..=1.0).contains(&est.p_hat[i]));
            for j in 0..8 {
                let k = i * 8 + j;
                prop_assert!((0.0..=1.0).contains(&est.q_hat[k]));
                prop_assert!((0.0..=1.0).contains(&est.mu_hat[k]));
                if i != j && !est.q_constant[k] {
                    // Joint ones never exceed either single count.
                    prop_assert!(est.tally.pair_ones[k] <= est.tally.ones[i] + 1e-12);
                }
            }
        }
        prop_assert!((est.reg_freq.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let r = cost(&est, &q, 1.0).unwrap();
        prop_assert!(r.reg_penalty >= 0.0);
        prop_assert!(r.slack.iter().all(|&v| v >= 0.0));
    }
}
