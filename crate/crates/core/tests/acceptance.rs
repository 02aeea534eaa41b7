//! Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use common::{ks_one_sample, normal_cdf};
use nbbm::engine::{build_engine, CoupledPair, Engine, EngineKind};
use nbbm::experiments::{exact_score_sum, recombination_candidates, run_scenario, OutputTable, ScenarioConfig};
use nbbm::kernels::{bridge_cross_prob, gauss_vec};
use nbbm::model::{make_initial, InitSpec, Params};
use nbbm::RngStream;

const KS_LEVEL: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config(name: &str) -> ScenarioConfig {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(format!("{name}.json"));
    ScenarioConfig::from_path(&p).unwrap()
}

fn json(s: &str) -> ScenarioConfig {
    ScenarioConfig::from_json_str(s).unwrap()
}

fn run(cfg: &ScenarioConfig) -> OutputTable {
    run_scenario(cfg).unwrap()
}

fn one(table: &OutputTable, metric: &str, n: usize) -> f64 {
    let v = table.values(metric, n);
    assert_eq!(v.len(), 1, "{metric} at n={n}: {v:?}");
    v[0]
}

fn at(table: &OutputTable, metric: &str, n: usize, t: f64) -> f64 {
    let v: Vec<f64> = table
        .metric(metric)
        .filter(|r| r.n == n && (r.t - t).abs() < 1e-9)
        .map(|r| r.value)
        .collect();
    assert_eq!(v.len(), 1, "{metric} at n={n}, t={t}: {v:?}");
    v[0]
}

/// Value of `metric` at the latest time recorded for `n`.
fn last(table: &OutputTable, metric: &str, n: usize) -> f64 {
    table
        .metric(metric)
        .filter(|r| r.n == n)
        .max_by(|a, b| a.t.total_cmp(&b.t))
        .unwrap_or_else(|| panic!("no {metric} rows at n={n}"))
        .value
}

// ------------------------------------------------------------------ 1

/// Probability that Brownian motion with drift `m` from `z0` stays below `b`
/// up to `t` and ends at `z1`, divided by the free transition density, by
/// explicit finite differences on the absorbed Fokker-Planck equation.
fn fd_no_cross(z0: f64, z1: f64, m: f64, t: f64, b: f64) -> f64 {
    let dx = 0.004;
    let lo = b - 8.0;
    let nx = ((b - lo) / dx).round() as usize;
    let t0 = 0.002;
    let dt = 0.4 * dx * dx;
    let steps = ((t - t0) / dt).ceil() as usize;
    let dt = (t - t0) / steps as f64;
    let y = |i: usize| lo + i as f64 * dx;
    let gauss = |x: f64, mean: f64, var: f64| {
        (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    };
    let mut p: Vec<f64> = (0..=nx).map(|i| gauss(y(i), z0 + m * t0, t0)).collect();
    p[0] = 0.0;
    p[nx] = 0.0;
    let mut q = p.clone();
    let (a, c) = (0.5 * dt / (dx * dx), m * dt / (2.0 * dx));
    for _ in 0..steps {
        for i in 1..nx {
            q[i] = p[i] + a * (p[i + 1] - 2.0 * p[i] + p[i - 1]) - c * (p[i + 1] - p[i - 1]);
        }
        std::mem::swap(&mut p, &mut q);
    }
    let f = (z1 - lo) / dx;
    let i = f.floor() as usize;
    let w = f - i as f64;
    let dens = (1.0 - w) * p[i] + w * p[i + 1];
    dens / gauss(z1, z0 + m * t, t)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst_p = 1.0f64;
    let mut worst = String::new();
    let mut notes = Vec::new();
    let mut s = RngStream::new(101, 0);
    let var = 2.0;
    let draws: Vec<Vec<f64>> = (0..10_000).map(|_| gauss_vec(&mut s, 3, var).unwrap()).collect();
    for k in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|v| v[k]).collect();
        let (_, p) = ks_one_sample(&xs, |x| normal_cdf(x / var.sqrt()));
        if p < worst_p {
            (worst_p, worst) = (p, format!("gauss_vec coordinate {k}"));
        }
    }
    for kind in [EngineKind::Dense, EngineKind::Lazy] {
        for &t in &[0.5, 2.0, 10.0] {
            let params = Params::one_dimensional(1).unwrap();
            let xs: Vec<f64> = (0..10_000u64)
                .map(|seed| {
                    let init = make_initial(&InitSpec::AllAtOrigin, &params, &mut RngStream::new(seed, 1)).unwrap();
                    let mut e = build_engine(&params, &init, RngStream::new(seed, 0), kind).unwrap();
                    e.run_until(t).unwrap().ranked_scores(&params.score)[0]
                })
                .collect();
            let (_, p) = ks_one_sample(&xs, |x| normal_cdf(x / t.sqrt()));
            if p < worst_p {
                (worst_p, worst) = (p, format!("{kind:?} N=1 at t={t}"));
            }
        }
    }
    notes.push(format!("min KS p = {worst_p:.4} ({worst})"));
    let mut worst_gap = 0.0f64;
    for (x0, x1, delta, a0, a1) in [(0.0, 0.0, 1.0, 1.0, 1.0), (0.0, 1.5, 1.0, 0.5, 3.5)] {
        let closed = bridge_cross_prob(x0, x1, delta, a0, a1).unwrap();
        assert!((closed - (-2.0f64).exp()).abs() < 1e-15);
        let slope = (a1 - a0) / delta;
        let oracle = 1.0 - fd_no_cross(x0, x1 - slope * delta, -slope, delta, a0);
        worst_gap = worst_gap.max((closed - oracle).abs());
    }
    notes.push(format!("bridge |closed - grid| = {worst_gap:.5}"));
    let secs = start.elapsed().as_secs_f64();
    notes.push(format!("{secs:.1} s"));
    outcome(
        worst_p >= KS_LEVEL && worst_gap <= 0.003 && secs < 60.0,
        notes.join(", "),
    )
}

// ------------------------------------------------------------------ 2, 3

fn criteria_2_3(table: &OutputTable) -> (Outcome, Outcome) {
    let m = one(table, "count_pooled_mean", 1);
    let se = one(table, "count_pooled_se", 1);
    let target = 0.21380;
    let c2 = outcome(
        (m - target).abs() <= 3.0 * se,
        format!("mean {m:.5} +- {se:.5} vs {target}"),
    );
    let p = one(table, "max_tail_pooled", 1);
    let pse = one(table, "max_tail_pooled_se", 1);
    let bound = 0.05910;
    let c3 = outcome(
        p <= bound + 3.0 * pse,
        format!("frequency {p:.5} +- {pse:.5}, bound {bound}"),
    );
    (c2, c3)
}

// ------------------------------------------------------------------ 4

fn criterion_4() -> Outcome {
    let n = 64;
    let mut violations = 0u64;
    let mut events = 0u64;
    for pair in 0..10u64 {
        let mut s = RngStream::new(400 + pair, 2);
        let mut lower: Vec<f64> = (0..n).map(|_| 3.0 * s.normal()).collect();
        lower.sort_by(|a, b| b.total_cmp(a));
        let mut upper: Vec<f64> = lower.iter().map(|&x| x + s.uniform() * (1.0 + pair as f64)).collect();
        upper.sort_by(|a, b| b.total_cmp(a));
        let mut cp = CoupledPair::new(&lower, &upper, 1.0, RngStream::new(400 + pair, 0)).unwrap();
        for _ in 0..100_000 {
            if cp.advance().is_err() {
                violations += 1;
                break;
            }
            events += 1;
            violations += cp.lower().iter().zip(cp.upper()).filter(|(a, b)| a > b).count() as u64;
        }
    }
    outcome(
        violations == 0 && events == 1_000_000,
        format!("{violations} violations in {events} events"),
    )
}

// ------------------------------------------------------------------ 5, 7

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let t = run(&config("speed_scaling"));
    let ns = [2usize, 10, 100, 1000];
    let means: Vec<f64> = ns.iter().map(|&n| one(&t, "speed_mean", n)).collect();
    let v = means[3];
    let inc = means.windows(2).all(|w| w[1] > w[0]);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (1.15..=1.42).contains(&v) && inc && secs < 600.0,
        format!("speeds {means:.4?}, N=1000 speed {v:.4}, {secs:.0} s"),
    )
}

fn criterion_7() -> Outcome {
    let t_d = 2.0 * 1000f64.ln();
    let cfg = json(&format!(
        r#"{{"scenario":"speed_scaling","n_grid":[1000],"replicas":50,"seed":71,
            "options":{{"window":[{},{}],"diam_factor":2.0}}}}"#,
        t_d / 2.0,
        t_d
    ));
    let t = run(&cfg);
    let f = one(&t, "diam_within_bound", 1000);
    let bound = one(&t, "diam_bound", 1000);
    let worst = t.values("diam", 1000).into_iter().fold(0.0f64, f64::max);
    outcome(
        f >= 0.95,
        format!("fraction {f:.2} within {bound:.2}, largest diameter {worst:.2}"),
    )
}

// ------------------------------------------------------------------ 6, 11

fn criteria_6_11() -> (Outcome, Outcome) {
    let cfg = config("walls_validation");
    let t = run(&cfg);
    let f = one(&t, "ceiling_fraction", 1000);
    let c6 = outcome(f >= 0.9, format!("fraction {f:.2} of {} replicas", cfg.replicas));
    let mut ok = true;
    let mut notes = Vec::new();
    for &s in &[0.5, 1.0, 2.0] {
        let m = at(&t, "supermartingale_mean", 1000, s);
        let se = at(&t, "supermartingale_se", 1000, s);
        let m0 = at(&t, "supermartingale_initial", 1000, s);
        ok &= m <= m0 + 3.0 * se;
        notes.push(format!("s={s}: {m:.3} +- {se:.3} vs {m0:.3}"));
    }
    let mm = one(&t, "martingale_mean", 1000);
    let mse = one(&t, "martingale_se", 1000);
    let m0 = one(&t, "martingale_initial", 1000);
    ok &= (mm - m0).abs() <= 3.0 * mse;
    notes.push(format!("martingale {mm:.3} +- {mse:.3} vs {m0:.3}"));
    (c6, outcome(ok, notes.join("; ")))
}

// ------------------------------------------------------------------ 8

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let t = run(&config("shape_scaling"));
    let a = last(&t, "median_diam_perp_over_log_n", 100);
    let b = last(&t, "median_diam_perp_over_log_n", 10_000);
    let r = b / a;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r >= 1.2 && secs < 1800.0,
        format!("{a:.3} -> {b:.3}, ratio {r:.3}, {secs:.0} s"),
    )
}

// ------------------------------------------------------------------ 9

fn criterion_9() -> Outcome {
    let desc = run(&json(
        r#"{"scenario":"mrca_scaling","n_grid":[1000],"replicas":100,"seed":91,
            "options":{"burn_in_factor":0.001,"interval_factor":0.0,"samples":1,"descendant_factor":0.02}}"#,
    ));
    let f = one(&desc, "descendant_fraction", 1000);
    let t = run(&config("mrca_scaling"));
    let a = one(&t, "median_tau", 100);
    let b = one(&t, "median_tau", 10_000);
    let cens = one(&t, "censored_fraction", 10_000);
    let r = b / a;
    outcome(
        f >= 0.9 && r >= 3.0,
        format!("descendant fraction {f:.2}; median tau {a:.1} -> {b:.1}, ratio {r:.2}, censored {cens:.2}"),
    )
}

// ------------------------------------------------------------------ 10

fn criterion_10() -> Outcome {
    let a = run(&config("direction_convergence"));
    let fa = one(&a, "spread_reduced_fraction", 100);
    let b = run(&json(
        r#"{"scenario":"direction_convergence","n_grid":[100],"d":2,
            "score":{"kind":"linear","direction":[1.0,1.0]},"replicas":50,"seed":105,
            "options":{"early":100.0,"late":400.0,"distance":0.2}}"#,
    ));
    let fb = one(&b, "theta_within_fraction", 100);
    outcome(
        fa >= 0.8 && fb >= 0.9,
        format!("spread halved in {fa:.2}, direction within 0.2 in {fb:.2}"),
    )
}

// ------------------------------------------------------------------ 12

fn criterion_12() -> Outcome {
    let mut s = RngStream::new(12, 2);
    let mut bad = 0;
    for _ in 0..100_000 {
        let d = 2 + s.index(7);
        let k = 1 + s.index(d - 1);
        let raw: Vec<f64> = (0..d).map(|_| s.normal()).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lambda: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let scale = (10.0f64).powi(s.index(9) as i32 - 4);
        let a: Vec<f64> = (0..d).map(|_| scale * s.normal()).collect();
        let b: Vec<f64> = (0..d).map(|_| scale * s.normal()).collect();
        let (c1, c2) = recombination_candidates(&a, &b, k);
        let lhs = exact_score_sum(&lambda, &[&c1, &c2]);
        let rhs = exact_score_sum(&lambda, &[&a, &b]);
        bad += (lhs != rhs) as u32;
    }
    outcome(bad == 0, format!("{bad} mismatches in 100000 pairs"))
}

// ------------------------------------------------------------------ 13

fn criterion_13() -> Outcome {
    let cfg = json(
        r#"{"scenario":"speed_scaling","n_grid":[10,100],"replicas":3,"seed":13,"threads":1,
            "options":{"window":[5.0,20.0]}}"#,
    );
    let one_thread = run(&cfg).to_csv_string().unwrap();
    let again = run(&cfg).to_csv_string().unwrap();
    let mut cfg2 = cfg.clone();
    cfg2.threads = Some(3);
    let three = run(&cfg2).to_csv_string().unwrap();
    let same = one_thread == again && one_thread == three;
    let params = Params::one_dimensional(10_000).unwrap().with_seed(13);
    let init = make_initial(&InitSpec::AllAtOrigin, &params, &mut RngStream::new(13, 1)).unwrap();
    let start = Instant::now();
    let mut e = build_engine(&params, &init, RngStream::new(13, 0), EngineKind::Lazy).unwrap();
    let c = e.run_until(500.0).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let front = c.ranked_scores(&params.score)[0];
    outcome(
        same && secs < 60.0,
        format!(
            "identical CSV: {same}; N=10000 to t=500: {} events in {secs:.1} s, front at {front:.1}",
            e.events()
        ),
    )
}

// ------------------------------------------------------------------ 14

fn report_14() -> String {
    let eq = run(&config("equilibrium_shape"));
    let sup = one(&eq, "sup_distance_of_mean", 10_000);
    let rc = run(&config("recombination"));
    let curve: Vec<String> = rc
        .metric("speed_mean")
        .map(|r| format!("r={}: {:.4}", r.x.unwrap_or(f64::NAN), r.value))
        .collect();
    format!(
        "sup |tail - W*| = {sup:.4}; speed by recombination rate [{}]",
        curve.join(", ")
    )
}

fn guarded<T>(f: impl FnOnce() -> T) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).map_err(|p| {
        p.downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into())
    })
}

fn main() {
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let want = |id: &str| only.is_empty() || only.iter().any(|o| o == id);
    let mut failed = 0;
    let mut report = |id: &str, r: Result<Outcome, String>| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as u32;
        println!("{} criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    };
    if want("1") {
        report("1", guarded(criterion_1));
    }
    if want("2") || want("3") {
        match guarded(|| run(&config("many_to_one_validation"))) {
            Ok(t) => {
                let (a, b) = criteria_2_3(&t);
                report("2", Ok(a));
                report("3", Ok(b));
            }
            Err(e) => {
                report("2", Err(e.clone()));
                report("3", Err(e));
            }
        }
    }
    if want("4") {
        report("4", guarded(criterion_4));
    }
    if want("5") {
        report("5", guarded(criterion_5));
    }
    let walls = if want("6") || want("11") {
        Some(match guarded(criteria_6_11) {
            Ok((a, b)) => (Ok(a), Ok(b)),
            Err(e) => (Err(e.clone()), Err(e)),
        })
    } else {
        None
    };
    let c11 = walls.map(|(c6, c11)| {
        report("6", c6);
        c11
    });
    if want("7") {
        report("7", guarded(criterion_7));
    }
    if want("8") {
        report("8", guarded(criterion_8));
    }
    if want("9") {
        report("9", guarded(criterion_9));
    }
    if want("10") {
        report("10", guarded(criterion_10));
    }
    if let Some(c) = c11 {
        report("11", c);
    }
    if want("12") {
        report("12", guarded(criterion_12));
    }
    if want("13") {
        report("13", guarded(criterion_13));
    }
    if want("14") {
        match guarded(report_14) {
            Ok(s) => println!("REPORT criterion 14: {s}"),
            Err(e) => println!("REPORT criterion 14: error: {e}"),
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
