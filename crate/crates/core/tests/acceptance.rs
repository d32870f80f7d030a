//! End-to-end acceptance run: one pass/fail line per criterion.

mod common;

use std::time::Instant;

use pepnet::agent::{build_agent_pep, verify_certificate, ConsensusMode};
use pepnet::algorithm::{build_consensus_only, build_dgd_constant, build_extra, unroll, AlgorithmSpec};
use pepnet::compact::{all_psd, build_compact_pep, psd_reformulation_gt, EquivalencePartition};
use pepnet::experiments::{fit_log_slope, run_experiment, ExperimentConfig, ExperimentKind, ExperimentRow};
use pepnet::function_class::FunctionClass;
use pepnet::matrix_class::{fixture_pair, nonconvexity_fixture, recover_averaging_matrix, MatrixClass};
use pepnet::metrics::{InitialCondition, InitialKind, Metric, PepSettings};
use pepnet::oracle::theoretical_bound;
use pepnet::solver::{SolveStatus, SolverOptions};
use pepnet::Result;
use rand::Rng;

type Outcome = Result<(bool, String)>;

fn opts() -> SolverOptions {
    SolverOptions::default().with_facial_reduction(true)
}

fn base_class() -> FunctionClass {
    FunctionClass::smooth_strongly_convex(0.1, 1.0).unwrap()
}

fn settings(metric: Metric, classes: usize) -> PepSettings {
    PepSettings {
        function_classes: vec![base_class(); classes],
        matrix_classes: vec![MatrixClass::symmetric(0.5, "W").unwrap()],
        metric,
        initial: InitialCondition::standard(1.0, 1.0),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

fn compact_value(spec: &AlgorithmSpec, metric: &Metric, n: usize) -> Result<(f64, SolveStatus, usize)> {
    let trace = unroll(spec, &metric.common_points(&spec.output))?;
    let part = EquivalencePartition::for_metric(metric, n)?;
    let pep = build_compact_pep(&trace, &part, &settings(metric.clone(), part.class_count()))?;
    let sol = pep.solve(&opts())?;
    Ok((sol.value, sol.status, pep.count_usage().len()))
}

fn rows_optimal(rows: &[ExperimentRow]) -> bool {
    rows.iter().all(|r| r.is_optimal())
}

fn nondecreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] >= w[0] * (1.0 - tol))
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for metric in ["e_x", "e_f_worst"] {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::EquivalenceCheck);
        cfg.metric = metric.into();
        cfg.alpha = Some(0.25);
        let rows = run_experiment(&cfg, &SolverOptions::default())?;
        ok &= rows.len() == 3 && rows_optimal(&rows);
        for r in &rows {
            worst = worst.max(rel(r.pep_value, r.reference_value.unwrap_or(f64::NAN)));
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    Ok((ok && worst < 0.01 && secs <= 60.0, format!("max relative gap {worst:.2e}, {secs:.1} s")))
}

fn criterion_2() -> Outcome {
    let cases: Vec<(&str, AlgorithmSpec)> = vec![("dgd", build_dgd_constant(3, 1.0)?), ("extra", build_extra(3, 0.25)?)];
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let mut usages = 0;
    for (_, spec) in &cases {
        for metric in [Metric::AvgFunctionGap, Metric::AvgIterateError] {
            let mut vals = Vec::new();
            for n in [2, 3, 5] {
                let (v, s, u) = compact_value(spec, &metric, n)?;
                ok &= s == SolveStatus::Optimal;
                usages += u;
                vals.push(v);
            }
            worst = worst.max(rel(vals[1], vals[0])).max(rel(vals[2], vals[0]));
        }
    }
    Ok((
        ok && worst < 1e-3 && usages == 0,
        format!("max relative spread {worst:.2e}, agent-count coefficients found: {usages}"),
    ))
}

fn criterion_3() -> Outcome {
    let spec = build_consensus_only(1)?;
    let metric = Metric::ConsensusSpread;
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let mut s = settings(metric, 1);
    s.initial = vec![InitialCondition::new(InitialKind::AvgSpread2, 1.0)];
    let pep = build_compact_pep(&trace, &EquivalencePartition::finite(&[3])?, &s)?;
    let compact = pep.solve(&opts())?;
    let agent = build_agent_pep(&trace, &[3], &s, &ConsensusMode::Relaxed)?.solve(&opts(), false)?;
    let err = (compact.value - 0.25).abs().max((agent.value - 0.25).abs());
    Ok((
        err <= 1e-6,
        format!("compact {:.9}, agent-dependent {:.9}", compact.value, agent.value),
    ))
}

fn criterion_4() -> Outcome {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::NSweep);
    cfg.metric = "e_f".into();
    cfg.alpha = Some(0.25);
    cfg.n_grid = vec![2];
    cfg.oracle_budget = 3000;
    cfg.oracle_dim = 2;
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    let r = &rows[0];
    let (theory, _, tau) = theoretical_bound(15, 1.0, 0.1, 0.5, 1.0, 1.0)?;
    let expected = (1.0 - 1.0 / 468.0f64).powi(15) * 4.0;
    let lower = r.oracle_lower.unwrap_or(f64::NAN);
    let ok = r.is_optimal()
        && (tau - 1.0 / 468.0).abs() < 1e-15
        && (theory - expected).abs() < 1e-12
        && r.theoretical_upper == Some(theory)
        && lower + 1e-3 <= r.pep_value
        && r.pep_value + 1e-3 <= theory;
    Ok((ok, format!("oracle {lower:.6} < PEP {:.6} < bound {theory:.6}", r.pep_value)))
}

fn criterion_5() -> Outcome {
    let mut slopes = Vec::new();
    let mut ok = true;
    let mut monotone = true;
    for metric in ["e_f_worst", "e_x_worst"] {
        let mut cfg = ExperimentConfig::preset(ExperimentKind::NSweep);
        cfg.metric = metric.into();
        let rows = run_experiment(&cfg, &SolverOptions::default())?;
        ok &= rows.len() == 6 && rows_optimal(&rows);
        let vals: Vec<f64> = rows.iter().map(|r| r.pep_value).collect();
        monotone &= nondecreasing(&vals, 1e-6);
        slopes.push(fit_log_slope(&rows, "n", "pep_value")?);
    }
    let reference = (slopes[0] - 0.92).abs() <= 0.10 && (slopes[1] - 0.82).abs() <= 0.10;
    let sublinear = slopes.iter().all(|&s| s > 0.0 && s < 1.0);
    let mode = if reference { "reference slopes reproduced" } else { "sublinearity only" };
    Ok((
        ok && monotone && sublinear,
        format!("slopes E_f,worst {:.3}, E_x,worst {:.3} ({mode})", slopes[0], slopes[1]),
    ))
}

fn criterion_6() -> Outcome {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::PercentileCurve);
    cfg.metric = "percentile_80".into();
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    let finite: Vec<f64> = rows.iter().filter(|r| r.n != "inf").map(|r| r.pep_value).collect();
    let limit = rows.iter().find(|r| r.n == "inf").map_or(f64::NAN, |r| r.pep_value);
    let at100 = rows.iter().find(|r| r.n == "100").map_or(f64::NAN, |r| r.pep_value);
    let gap = rel(at100, limit);
    let ok = rows_optimal(&rows) && finite.len() == 5 && nondecreasing(&finite, 1e-6) && gap <= 0.05;
    Ok((ok, format!("N=100 {at100:.6}, limit {limit:.6}, relative gap {gap:.3e}")))
}

fn criterion_7() -> Outcome {
    let mut cfg = ExperimentConfig::preset(ExperimentKind::Heterogeneity);
    cfg.n_grid = vec![5, 10, 20];
    cfg.theta_grid = vec![0.4];
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    let across: Vec<f64> = rows.iter().map(|r| r.pep_value).collect();
    let spread = across.iter().map(|v| rel(*v, across[0])).fold(0.0, f64::max);
    let part_a = rows_optimal(&rows) && spread < 1e-3;

    let cfg = ExperimentConfig::preset(ExperimentKind::Heterogeneity);
    let rows = run_experiment(&cfg, &SolverOptions::default())?;
    let w: Vec<f64> = rows.iter().map(|r| r.pep_value).collect();
    let (w0, w1) = (w[0], w[5]);
    let mut conj: f64 = 0.0;
    let mut ratios = Vec::new();
    for t in 1..5 {
        let th = t as f64 / 5.0;
        let g = w1.powf(th) * w0.powf(1.0 - th);
        conj = conj.max(rel(w[t], g));
    }
    for t in 1..6 {
        ratios.push(w[t - 1] / w[t]);
    }
    let part_b = rows_optimal(&rows) && conj <= 0.03;
    let part_c = ratios.iter().all(|r| (r - 0.9).abs() <= 0.05);
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    Ok((
        part_a && part_b && part_c,
        format!(
            "(a) spread {spread:.2e} {}, (b) conjecture error {conj:.2e} {}, (c) ratios {lo:.3}..{hi:.3} {}",
            pf(part_a),
            pf(part_b),
            pf(part_c)
        ),
    ))
}

fn criterion_8() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (lm, lp) in [(-0.5, 0.5), (0.0, 0.9)] {
        let n = 3;
        let fx = nonconvexity_fixture(n, lm, lp)?;
        let class = MatrixClass::new(lm, lp, "W")?;
        let mut got = Vec::new();
        for g in [&fx.g1, &fx.g2, &fx.g3] {
            let pair = fixture_pair(g, n, 1e-9);
            got.push(recover_averaging_matrix(&[pair], n, &class, 1e-6)?.feasible);
        }
        ok &= got == [true, true, false];
        notes.push(format!("({lm}, {lp}): {got:?}"));
    }
    Ok((ok, notes.join("; ")))
}

fn criterion_9() -> Outcome {
    let mut r = common::rng(2024);
    let mut fmin = f64::INFINITY;
    for i in 0..100 {
        let fc = if i % 10 == 0 {
            FunctionClass::convex()
        } else {
            let l = r.gen_range(0.5..5.0);
            FunctionClass::smooth_strongly_convex(r.gen_range(0.0..0.9) * l, l)?
        };
        let d = r.gen_range(1..=4);
        let m = r.gen_range(2..=5);
        fmin = fmin.min(common::quadratic_interpolation_slack(&mut r, &fc, d, m));
    }
    let mut cons: f64 = 0.0;
    let mut top: f64 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let (a, s, t) = common::consensus_residuals(&mut r);
        cons = cons.max(a).max(s);
        top = top.max(t);
    }
    let (mut agree, mut checked, mut feasible) = (0, 0, 0);
    while checked < 50 {
        let n = r.gen_range(2..=6);
        let u_count = r.gen_range(1..=n.min(3));
        let mut sizes = vec![1; u_count];
        for _ in u_count..n {
            let u = r.gen_range(0..u_count);
            sizes[u] += 1;
        }
        let p = r.gen_range(1..=3);
        let part = EquivalencePartition::finite(&sizes)?;
        let blocks = common::random_blocks(&mut r, &sizes, p);
        let (blockwise, dense) = common::block_vs_dense(&part, &blocks);
        if dense.abs() < 1e-6 {
            continue;
        }
        let mut same = blockwise == (dense > 0.0);
        if u_count == 1 && sizes[0] > 1 {
            let gt = all_psd(&psd_reformulation_gt(sizes[0], &blocks.ga[0], blocks.gr[0].as_ref().unwrap()), 1e-10);
            same &= gt == blockwise;
        }
        checked += 1;
        feasible += usize::from(dense > 0.0);
        agree += usize::from(same);
    }
    let ok = fmin >= -1e-10 && cons <= 1e-9 && top <= 1e-9 && agree == checked && feasible > 0 && feasible < checked;
    Ok((
        ok,
        format!(
            "interpolation min slack {fmin:.2e}; consensus residual {cons:.2e}, LMI top eigenvalue {top:.2e}; block PSD agrees {agree}/{checked} ({feasible} PSD)"
        ),
    ))
}

fn criterion_10() -> Outcome {
    let spec = build_extra(3, 0.25)?;
    let metric = Metric::AvgFunctionGap;
    let trace = unroll(&spec, &metric.common_points(&spec.output))?;
    let s = settings(metric, 1);
    let pep = build_agent_pep(&trace, &[3], &s, &ConsensusMode::Relaxed)?;
    let cert = pep.solve(&opts(), true)?;
    let rep = verify_certificate(&cert, &pep, &trace, &s, 1e-4)?;
    let ok = cert.status == SolveStatus::Optimal && rep.procrustes_residual <= 1e-5 && rep.value_spread <= 1e-8;
    Ok((
        ok,
        format!("Procrustes residual {:.2e}, value spread {:.2e}", rep.procrustes_residual, rep.value_spread),
    ))
}

fn pf(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("compact matches agent-dependent", criterion_1),
        ("value independent of N", criterion_2),
        ("pure consensus contraction", criterion_3),
        ("oracle <= PEP <= closed-form bound", criterion_4),
        ("worst-agent sublinear growth", criterion_5),
        ("percentile plateau", criterion_6),
        ("heterogeneity proportions", criterion_7),
        ("non-convexity fixture", criterion_8),
        ("property suites", criterion_9),
        ("certificate symmetry", criterion_10),
    ];
    let only: Option<Vec<usize>> = std::env::var("PEPNET_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {id:>2} {}: {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
