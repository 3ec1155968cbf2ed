//! Runs every acceptance criterion at full size and prints one line each.
//! Exits nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::test_runner::{TestCaseError, TestRunner};
use tselab::experiments::{self, deescalate_quantity, eta_step, oracle_passed, ExperimentKind, ExperimentSpec, Table, GATE_SUMMARY};
use tselab::matrix::project_complement;
use tselab::rng::{sample_gaussian, RngStream};
use tselab::spectral::{delta, second_eigenvalue_modulus};
use tselab::transformer::softmax_rows;

use common::oracles::{jacobi_sigma_max, lambda2_modulus};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn timed(kind: ExperimentKind) -> (Table, Duration) {
    let spec = ExperimentSpec::defaults(kind);
    let start = Instant::now();
    let table = experiments::run(&spec).unwrap_or_else(|e| panic!("{kind} failed: {e}"));
    (table, start.elapsed())
}

fn series(t: &Table, step: &str, q: &str) -> Vec<(usize, f64)> {
    t.series(step, q).map(|r| (r.block, r.mean)).collect()
}

fn c1_oracle() -> Outcome {
    let (t, took) = timed(ExperimentKind::OracleExpectedXi);
    let cells: Vec<_> = t.rows.iter().filter(|r| r.quantity == "xi1" || r.quantity == "xi2").collect();
    let failed = cells.iter().filter(|r| r.flags != "pass").count();
    let worst_z = t.rows.iter().filter(|r| r.quantity.ends_with("_z")).map(|r| r.mean.abs()).fold(0.0, f64::max);
    outcome(
        oracle_passed(&t) && took < Duration::from_secs(120),
        format!("{} cells, {failed} outside 3 SE, max |z| {worst_z:.2}, {:.0?}", cells.len(), took),
    )
}

fn c2_escalation(t: &Table, took: Duration) -> Outcome {
    let t_sim_15 = t.mean(15, "out", "t_sim");
    let step1: Vec<f64> = (1..=5).map(|b| t.mean(b, "1", "xi_ratio")).collect();
    let step1_ok = step1.iter().all(|v| (1.6..=2.4).contains(v));
    let mut off = Vec::new();
    for step in ["2", "3", "4"] {
        for (b, v) in series(t, step, "xi_ratio") {
            if !(0.95..=1.05).contains(&v) {
                off.push(format!("step {step} block {b}: {v:.3}"));
            }
        }
    }
    let (d1, d15) = (t.mean(1, "attn", "delta"), t.mean(15, "attn", "delta"));
    let pass = t_sim_15 >= 0.99 && step1_ok && off.is_empty() && d1 < 0.5 && d15 < 0.05 && took < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "t_sim@15 {t_sim_15:.5}, step-1 ratios {:.2?}, delta {d1:.3}/{d15:.5}, steps 2-4 outside [0.95, 1.05]: {}, {:.0?}",
            step1,
            if off.is_empty() { "none".into() } else { off.join("; ") },
            took
        ),
    )
}

fn c3_fixed_input() -> Outcome {
    let (t, _) = timed(ExperimentKind::FixedInputFig3);
    let depth = ExperimentSpec::defaults(ExperimentKind::FixedInputFig3).depth;
    let (mut worst_gap, mut wins) = (0.0f64, 0);
    for b in 1..=depth {
        let curves = [t.mean(b, "1", "r"), t.mean(b, "1", "rate_estimate1"), t.mean(b, "1", "rate_estimate2")];
        for i in 0..3 {
            for j in i + 1..3 {
                worst_gap = worst_gap.max((curves[i] - curves[j]).abs());
            }
        }
        let m = t.mean(b, "1", "xi_ratio_minus_one");
        if (t.mean(b, "1", "estimate2") - m).abs() <= (t.mean(b, "1", "estimate1") - m).abs() {
            wins += 1;
        }
    }
    let share = wins as f64 / depth as f64;
    outcome(
        worst_gap <= 0.15 && share > 0.8,
        format!("max r-curve gap {worst_gap:.4}, estimate 2 closer in {wins}/{depth} blocks"),
    )
}

fn c4_gate() -> Outcome {
    let (t, took) = timed(ExperimentKind::TheoremGate);
    let summary = t.get(0, GATE_SUMMARY, "pass_fraction").expect("summary row");
    let wanted = ExperimentSpec::defaults(ExperimentKind::TheoremGate).extra.gate_instances;
    outcome(
        summary.mean >= 0.95 && summary.flags.contains(&format!("instances:{wanted}")),
        format!("pass fraction {:.3} ({}), {:.0?}", summary.mean, summary.flags, took),
    )
}

fn c5_asymptotic_rate(t: &Table) -> Outcome {
    let mut checked = Vec::new();
    for (b, r) in series(t, "1", "r") {
        if b > 1 && t.mean(b - 1, "out", "t_sim") > 0.9 {
            checked.push((b, r));
        }
    }
    let bad: Vec<_> = checked.iter().filter(|(_, r)| !(1.7..=2.3).contains(r)).collect();
    let range = checked.iter().map(|c| c.1).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    outcome(
        !checked.is_empty() && bad.is_empty(),
        format!("{} blocks with input t_sim > 0.9, step-1 rate in [{:.3}, {:.3}]", checked.len(), range.0, range.1),
    )
}

fn c6_prenorm() -> Outcome {
    let (t, _) = timed(ExperimentKind::PrenormFig4);
    let norm_x: Vec<f64> = series(&t, "norms", "norm_x").into_iter().map(|v| v.1).collect();
    let increasing = norm_x.windows(2).all(|w| w[1] > w[0]);
    let hat: Vec<f64> = series(&t, "norms", "norm_x_hat").into_iter().map(|v| v.1).collect();
    let mean_hat = hat.iter().sum::<f64>() / hat.len() as f64;
    let spread = hat.iter().map(|h| (h - mean_hat).abs() / mean_hat).fold(0.0, f64::max);
    let depth = norm_x.len();
    let (pre, post) = (t.mean(depth, "out", "t_sim"), t.mean(depth, "out", "t_sim_post_norm"));
    outcome(
        increasing && spread <= 0.02 && pre < post,
        format!(
            "||X|| {:.1} -> {:.1} (increasing: {increasing}), ||X_hat|| spread {:.3}%, t_sim pre {pre:.4} vs post {post:.6}",
            norm_x[0],
            norm_x[depth - 1],
            100.0 * spread
        ),
    )
}

fn c7_deescalate() -> Outcome {
    let (t, _) = timed(ExperimentKind::DeescalateFig5);
    let depth = ExperimentSpec::defaults(ExperimentKind::DeescalateFig5).depth;
    // Steady state: mean over the last five blocks.
    let steady = |tau: f64| {
        let q = deescalate_quantity(tau);
        (depth - 4..=depth).map(|b| t.mean(b, "out", &q)).sum::<f64>() / 5.0
    };
    let (a, b, c) = (steady(0.1), steady(0.5), steady(1.0));
    outcome(
        a < 0.1 && (0.4..=0.6).contains(&b) && c >= 1.0 - 1e-10,
        format!("steady t_div: tau 0.1 -> {a:.4}, tau 0.5 -> {b:.4}, tau 1 -> {c:.12}"),
    )
}

fn c8_eta() -> Outcome {
    let (t, _) = timed(ExperimentKind::EtaConcentrationFig6);
    let extra = ExperimentSpec::defaults(ExperimentKind::EtaConcentrationFig6).extra;
    let first_t = extra.t_grid.iter().position(|&v| (v - 0.1).abs() < 1e-12).expect("t = 0.1 in grid") + 1;
    let mut maxima = Vec::new();
    let mut at_small = Vec::new();
    for &d in &extra.eta_dims {
        let step = eta_step(d);
        maxima.push(series(&t, &step, "eta").iter().map(|v| v.1.abs()).fold(0.0, f64::max));
        at_small.push(t.mean(first_t, &step, "eta").abs());
    }
    let non_increasing = maxima.windows(2).all(|w| w[1] <= w[0]);
    let small_ok = at_small.iter().all(|v| *v < 0.05);
    outcome(
        non_increasing && small_ok,
        format!("d {:?}: max |mean eta| {:.3?}, |mean eta| at t=0.1 {:.3?}", extra.eta_dims, maxima, at_small),
    )
}

fn c9_spectral() -> Outcome {
    let mut rng = RngStream::new(9, 0);
    let (mut worst_l2, mut worst_delta) = (0.0f64, 0.0f64);
    for k in 0..100 {
        let n = 2 + k % 3;
        let logits = sample_gaussian(&mut rng, n, n, 2.0).unwrap();
        let p = softmax_rows(logits).unwrap();
        worst_l2 = worst_l2.max((second_eigenvalue_modulus(&p).unwrap() - lambda2_modulus(p.matrix())).abs());
        let m = 2 + k % 5;
        let q = softmax_rows(sample_gaussian(&mut rng, m, m, 2.0).unwrap()).unwrap();
        worst_delta = worst_delta.max((delta(&q).unwrap() - jacobi_sigma_max(&project_complement(q.matrix()))).abs());
    }
    outcome(
        worst_l2 <= 1e-7 && worst_delta <= 1e-8,
        format!("max |lambda2 - char-poly oracle| {worst_l2:.1e}, max |delta - Jacobi SVD| {worst_delta:.1e}"),
    )
}

fn report<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

fn c10_invariants() -> Outcome {
    use common::*;
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut run = |name: &str, result: Result<(), String>| {
        if let Err(e) = result {
            failures.push(format!("{name}: {e}"));
        }
    };
    let fail = |r: Result<(), String>| r.map_err(TestCaseError::fail);
    let runner = || TestRunner::new(config());

    run("pythagoras", report(runner().run(&token_matrix(1..9, 1..9), |x| fail(check_pythagoras(&x)))));
    run("idempotence", report(runner().run(&token_matrix(1..9, 1..9), |x| fail(check_idempotence(&x)))));
    run("rate identity", report(runner().run(&matrix_pair(), |(x, y)| fail(check_rate_identity(&x, &y)))));
    run("mu bounds", report(runner().run(&matrix_and_attention(), |(x, p)| fail(check_mu_bounds(&x, &p)))));
    run("sign coupling", report(runner().run(&matrix_pair(), |(x, y)| fail(check_sign_coupling(&x, &y)))));
    run("rank-one absorption", report(runner().run(&rank_one_case(), |(n, v, s)| fail(check_rank_one_absorption(n, &v, s)))));
    run("de-escalation", report(runner().run(&token_matrix(2..9, 1..9), |x| fail(check_deescalation(&x)))));
    run(
        "tail ordering",
        report(runner().run(&(matrix_and_attention(), proptest::prelude::any::<u64>()), |((x, p), s)| {
            fail(check_tail_ordering(&x, &p, s))
        })),
    );
    let took = start.elapsed();
    let pass = failures.is_empty() && took < Duration::from_secs(300);
    let detail = if failures.is_empty() {
        format!("8 suites x {} cases, no violations, {:.1?}", CASES, took)
    } else {
        failures.join(" | ")
    };
    outcome(pass, detail)
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |id: &str, name: &str, o: Outcome| {
        all_pass &= o.pass;
        println!("[{}] {id} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report("C1", "closed-form xi oracle", c1_oracle());
    let (escalation, took) = timed(ExperimentKind::EscalationFig2);
    report("C2", "escalation through post-norm stack", c2_escalation(&escalation, took));
    report("C3", "fixed-input rate estimates", c3_fixed_input());
    report("C4", "lower-bound gate", c4_gate());
    report("C5", "asymptotic step-1 rate", c5_asymptotic_rate(&escalation));
    report("C6", "pre-norm growth", c6_prenorm());
    report("C7", "de-escalation steady state", c7_deescalate());
    report("C8", "eta concentration", c8_eta());
    report("C9", "spectral oracles", c9_spectral());
    report("C10", "invariant suites", c10_invariants());
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
