mod common;

use std::time::Instant;

use common::{ks_one_sample, ks_two_sample, mean, normal_cdf, std_dev};
use nbbm::engine::{build_engine, DenseEngine, Engine, EngineKind, LinearEngine};
use nbbm::model::{make_initial, InitSpec, Params, ScoreFunction};
use nbbm::RngStream;

type Col = fn(&(f64, f64, f64)) -> f64;

fn summary(kind: EngineKind, n: usize, d: usize, t: f64, seed: u64, spec: &InitSpec) -> (f64, f64, f64) {
    let lambda = {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        v
    };
    let params = Params::new(n, d, ScoreFunction::linear(lambda).unwrap())
        .unwrap()
        .with_seed(seed);
    let mut init_rng = RngStream::new(seed, 1);
    let init = make_initial(spec, &params, &mut init_rng).unwrap();
    let mut e = build_engine(&params, &init, RngStream::new(seed, 0), kind).unwrap();
    let mut mid = e.run_until(t / 2.0).unwrap();
    assert_eq!(mid.len(), n);
    mid = e.run_until(t).unwrap();
    let s = mid.ranked_scores(&params.score);
    (s[0], s[n - 1], s[n / 2])
}

#[test]
fn lazy_and_dense_agree_in_law() {
    let reps = 800;
    for (n, t, spec) in [
        (12usize, 3.0, InitSpec::AllAtOrigin),
        (40, 2.0, InitSpec::IidTail { alpha: 1.0, direction: None }),
    ] {
        let run = |kind| -> Vec<(f64, f64, f64)> {
            (0..reps).map(|r| summary(kind, n, 1, t, 1000 + r as u64 * 7 + n as u64, &spec)).collect()
        };
        let a = run(EngineKind::Dense);
        let b = run(EngineKind::Lazy);
        let cols: [Col; 3] = [|x| x.0, |x| x.1, |x| x.2];
        for (c, f) in cols.iter().enumerate() {
            let xa: Vec<f64> = a.iter().map(f).collect();
            let xb: Vec<f64> = b.iter().map(f).collect();
            let (d, p) = ks_two_sample(&xa, &xb);
            assert!(p > 1e-3, "n={n} column {c}: D={d} p={p}");
        }
    }
}

#[test]
fn lazy_and_dense_agree_on_front_means() {
    let (n, t, reps) = (100, 10.0, 1500);
    let a: Vec<(f64, f64, f64)> =
        (0..reps).map(|r| summary(EngineKind::Dense, n, 1, t, 1 << 20 | r, &InitSpec::AllAtOrigin)).collect();
    let b: Vec<(f64, f64, f64)> =
        (0..reps).map(|r| summary(EngineKind::Lazy, n, 1, t, 1 << 30 | r, &InitSpec::AllAtOrigin)).collect();
    let cols: [Col; 3] = [|x| x.0, |x| x.1, |x| x.2];
    for (c, f) in cols.iter().enumerate() {
        let xa: Vec<f64> = a.iter().map(f).collect();
        let xb: Vec<f64> = b.iter().map(f).collect();
        let se = ((std_dev(&xa).powi(2) + std_dev(&xb).powi(2)) / reps as f64).sqrt();
        let z = (mean(&xa) - mean(&xb)) / se;
        assert!(z.abs() < 4.0, "column {c}: dense {} lazy {} z={z}", mean(&xa), mean(&xb));
    }
}

#[test]
fn lazy_single_particle_is_brownian() {
    let xs: Vec<f64> = (0..4000)
        .map(|r| summary(EngineKind::Lazy, 1, 1, 1.0, r, &InitSpec::AllAtOrigin).0)
        .collect();
    let (d, p) = ks_one_sample(&xs, normal_cdf);
    assert!(p > 0.01, "D={d} p={p}");
}

#[test]
fn lazy_projection_matches_one_dimensional_run() {
    let n = 30;
    let p1 = Params::new(n, 1, ScoreFunction::linear(vec![1.0]).unwrap()).unwrap();
    let p3 = Params::new(n, 3, ScoreFunction::linear(vec![1.0, 0.0, 0.0]).unwrap()).unwrap();
    let origin1 = make_initial(&InitSpec::AllAtOrigin, &p1, &mut RngStream::new(0, 0)).unwrap();
    let origin3 = make_initial(&InitSpec::AllAtOrigin, &p3, &mut RngStream::new(0, 0)).unwrap();
    let mut a = LinearEngine::new(&p1, &origin1, RngStream::new(77, 0)).unwrap();
    let mut b = LinearEngine::new(&p3, &origin3, RngStream::new(77, 0)).unwrap();
    let mut c = DenseEngine::new(&p1, &origin1, RngStream::new(77, 0)).unwrap();
    let mut d = DenseEngine::new(&p3, &origin3, RngStream::new(77, 0)).unwrap();
    for t in [0.5, 1.7, 4.0] {
        let sa = a.run_until(t).unwrap().ranked_scores(&p1.score);
        let sb = b.run_until(t).unwrap().ranked_scores(&p3.score);
        assert_eq!(sa, sb);
        let sc = c.run_until(t).unwrap().ranked_scores(&p1.score);
        let sd = d.run_until(t).unwrap().ranked_scores(&p3.score);
        assert_eq!(sc, sd);
    }
}

#[test]
#[ignore]
fn lazy_throughput() {
    let env = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let n = env("PROBE_N", 10_000.0) as usize;
    let horizon = env("PROBE_T", 50.0);
    let params = Params::one_dimensional(n).unwrap();
    let init = make_initial(&InitSpec::AllAtOrigin, &params, &mut RngStream::new(0, 0)).unwrap();
    let mut e = LinearEngine::new(&params, &init, RngStream::new(3, 0)).unwrap();
    let start = Instant::now();
    let mut t = 0.0;
    while t < horizon {
        t = (t + 10.0).min(horizon);
        let c = e.run_until(t).unwrap();
        let s = c.ranked_scores(&params.score);
        println!(
            "t={t} events={} elapsed={:?} min={:.3} max={:.3}",
            e.events(),
            start.elapsed(),
            s[n - 1],
            s[0]
        );
    }
}
