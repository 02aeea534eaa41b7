mod common;

use std::collections::HashMap;

use common::{mean, std_dev};
use nbbm::kernels::RngStream;
use nbbm::walls::*;

fn se(xs: &[f64]) -> f64 {
    std_dev(xs) / (xs.len() as f64).sqrt()
}

#[derive(Default, Clone, Copy)]
struct OracleCounts {
    delta_plus: f64,
    delta_minus: f64,
    killed_right: f64,
    w1: f64,
    w2: f64,
}

/// Free BBM on a fine time grid with a bridge crossing test per step,
/// levels checked in the fixed order right, left, absorb.
fn oracle_run(exp: &WallExperiment, rng: &mut RngStream, h: f64) -> OracleCounts {
    let right = exp.right.map(|w| w.offset);
    let left = exp.left.map(|w| w.offset).unwrap();
    let absorb = exp.absorb_level;
    let mut out = OracleCounts::default();
    // (t, y, marked, from_below)
    let mut stack: Vec<(f64, f64, bool, bool)> =
        exp.init.iter().map(|&x| (0.0, x, false, x < left)).collect();
    let crosses = |rng: &mut RngStream, y0: f64, y1: f64, dt: f64, level: f64| {
        let g = (y0 - level) * (y1 - level);
        g <= 0.0 || rng.uniform() < (-2.0 * g / dt).exp()
    };
    while let Some((t0, mut y, mut marked, below)) = stack.pop() {
        let end = (t0 + rng.exp1()).min(exp.horizon);
        let mut t = t0;
        let mut dead = false;
        while t < end && !dead {
            let dt = h.min(end - t);
            let y1 = y - exp.mu * dt + dt.sqrt() * rng.normal();
            if let Some(r) = right {
                if crosses(rng, y, y1, dt, r) {
                    out.killed_right += 1.0;
                    dead = true;
                }
            }
            if !dead && !marked && crosses(rng, y, y1, dt, left) {
                marked = true;
                if below {
                    out.delta_minus += 1.0;
                } else {
                    out.delta_plus += 1.0;
                }
            }
            if let Some(a) = absorb {
                if !dead && crosses(rng, y, y1, dt, a) {
                    dead = true;
                }
            }
            y = y1;
            t += dt;
        }
        if dead {
            continue;
        }
        if end < exp.horizon {
            stack.push((end, y, marked, below));
            stack.push((end, y, marked, below));
        } else if y >= 0.0 {
            if marked {
                out.w2 += 1.0;
            } else {
                out.w1 += 1.0;
            }
        }
    }
    out
}

#[test]
fn yule_mean_population() {
    let exp = WallExperiment::free(vec![0.0], 2.0);
    let mut rng = RngStream::new(11, 0);
    let sizes: Vec<f64> = (0..10_000)
        .map(|_| run_free_bbm(&exp, &mut rng).unwrap().population.len() as f64)
        .collect();
    let e2 = 2f64.exp();
    assert!((mean(&sizes) - e2).abs() < 3.0 * se(&sizes), "{} vs {e2}", mean(&sizes));
}

#[test]
fn close_walls_match_fine_grid_oracle() {
    // walls one unit apart so single lifetimes often reach both
    let exp = WallExperiment {
        mu: 0.5,
        right: Some(Wall {
            offset: 1.0,
            mode: WallMode::Kill,
        }),
        left: Some(Wall {
            offset: 0.0,
            mode: WallMode::Mark,
        }),
        absorb_level: Some(-1.0),
        horizon: 1.5,
        init: vec![0.5, -0.5],
        population_cap: 1_000_000,
        log_events: false,
    };
    let reps = 20_000;
    let mut rng = RngStream::new(5, 0);
    let mut eng: Vec<[f64; 5]> = Vec::with_capacity(reps);
    for _ in 0..reps {
        let c = run_free_bbm(&exp, &mut rng).unwrap().counters;
        eng.push([
            c.delta_plus as f64,
            c.delta_minus as f64,
            c.killed_right as f64,
            c.w1.unwrap() as f64,
            c.w2.unwrap() as f64,
        ]);
    }
    let mut rng = RngStream::new(6, 0);
    let orc: Vec<[f64; 5]> = (0..reps)
        .map(|_| {
            let o = oracle_run(&exp, &mut rng, 1e-3);
            [o.delta_plus, o.delta_minus, o.killed_right, o.w1, o.w2]
        })
        .collect();
    for k in 0..5 {
        let a: Vec<f64> = eng.iter().map(|r| r[k]).collect();
        let b: Vec<f64> = orc.iter().map(|r| r[k]).collect();
        let tol = 4.0 * (se(&a).powi(2) + se(&b).powi(2)).sqrt();
        assert!(
            (mean(&a) - mean(&b)).abs() < tol,
            "counter {k}: engine {} oracle {} tol {tol}",
            mean(&a),
            mean(&b)
        );
    }
}

/// Recount of W, W1 and W2 from the lifetime log alone.
fn recount(log: &[SegmentRecord], mu: f64, t: f64) -> (u64, u64, u64) {
    let by_id: HashMap<u64, &SegmentRecord> = log.iter().map(|r| (r.id, r)).collect();
    let (mut w1, mut w2) = (0, 0);
    for r in log.iter().filter(|r| r.outcome == Outcome::Horizon) {
        if r.y1 + mu * t < mu * t {
            continue;
        }
        let mut touched = false;
        let mut cur = Some(r.id);
        while let Some(id) = cur {
            let s = by_id[&id];
            touched |= s.first_left_touch;
            cur = s.parent;
        }
        if touched {
            w2 += 1;
        } else {
            w1 += 1;
        }
    }
    (w1 + w2, w1, w2)
}

#[test]
fn w_matches_log_recount() {
    let mut rng = RngStream::new(21, 0);
    for _ in 0..50 {
        let exp = WallExperiment {
            mu: 1.2,
            right: Some(Wall {
                offset: 3.0,
                mode: WallMode::Kill,
            }),
            left: Some(Wall {
                offset: 0.0,
                mode: WallMode::Mark,
            }),
            absorb_level: None,
            horizon: 3.0,
            init: vec![1.0, 0.2, -0.4, -1.5],
            population_cap: 1_000_000,
            log_events: true,
        };
        let run = run_free_bbm(&exp, &mut rng).unwrap();
        let c = &run.counters;
        let (w, w1, w2) = recount(run.log.as_ref().unwrap(), exp.mu, exp.horizon);
        assert_eq!((c.w, c.w1.unwrap(), c.w2.unwrap()), (w, w1, w2));
    }
}

#[test]
fn survival_increases_with_start_height() {
    let mut est = Vec::new();
    for (k, y) in [1.0, 2.0, 4.0].into_iter().enumerate() {
        let mut rng = RngStream::new(31, k as u64);
        est.push(survival_probability_estimate(y, 1.0, 10.0, 2000, &mut rng).unwrap());
    }
    for w in est.windows(2) {
        assert!(w[0].upper < w[1].lower, "{:?} then {:?}", w[0], w[1]);
    }
}

#[test]
fn martingale_without_stopping() {
    let mu = std::f64::consts::SQRT_2;
    let a = 2.0;
    let exp = WallExperiment {
        mu,
        absorb_level: Some(-a),
        ..WallExperiment::free(vec![-1.0], 1.0)
    };
    let m0 = supermartingale_value(&exp.init, 0.0, mu, a).unwrap();
    let mut rng = RngStream::new(41, 0);
    let ms: Vec<f64> = (0..10_000)
        .map(|_| {
            let run = run_free_bbm(&exp, &mut rng).unwrap();
            let ys: Vec<f64> = run.population.iter().map(|p| p.y).collect();
            supermartingale_value(&ys, 1.0, mu, a).unwrap()
        })
        .collect();
    assert!((mean(&ms) - m0).abs() < 3.0 * se(&ms), "{} vs {m0}", mean(&ms));
}

#[test]
fn delta_minus_below_bound() {
    let mu = 1.25949;
    let init = vec![-0.5, -1.0, -2.0, 0.5];
    let exp = WallExperiment {
        mu,
        right: None,
        left: Some(Wall {
            offset: 0.0,
            mode: WallMode::Mark,
        }),
        absorb_level: None,
        horizon: 2.0,
        init: init.clone(),
        population_cap: 1_000_000,
        log_events: false,
    };
    let mut rng = RngStream::new(51, 0);
    let mut dm = Vec::new();
    let mut dl = Vec::new();
    let mut w2 = Vec::new();
    for _ in 0..4000 {
        let c = run_free_bbm(&exp, &mut rng).unwrap().counters;
        dm.push(c.delta_minus as f64);
        dl.push(c.delta() as f64);
        w2.push(c.w2.unwrap() as f64);
    }
    let bound = delta_minus_bound(&init, mu, 2.0);
    assert!(mean(&dm) <= bound + 3.0 * se(&dm), "{} vs {bound}", mean(&dm));
    let eps = 2.0 - mu * mu;
    let rhs = (0.5 * eps * 2.0).exp() * mean(&dl);
    assert!(mean(&w2) <= rhs + 3.0 * se(&w2), "{} vs {rhs}", mean(&w2));
}

#[test]
fn many_to_one_matches_analytic() {
    let mut rng = RngStream::new(61, 0);
    let r = many_to_one_check(1.0, 2f64.sqrt(), 20_000, &mut rng).unwrap();
    assert!((r.analytic - 0.21380).abs() < 5e-5);
    assert!((r.monte_carlo.mean - r.analytic).abs() < 3.0 * r.monte_carlo.std_error);
}

/// Survival probability from the KPP equation
/// `u_t = u_yy / 2 - mu u_y + u - u^2`, `u(t, 0) = 0`, `u(0, y) = 1`,
/// by explicit finite differences.
fn kpp_survival(y: f64, mu: f64, horizon: f64) -> f64 {
    let dy = 0.02;
    let n = (25.0 / dy) as usize;
    let dt = 0.4 * dy * dy;
    let steps = (horizon / dt).ceil() as usize;
    let dt = horizon / steps as f64;
    let mut u = vec![1.0; n + 1];
    u[0] = 0.0;
    let mut next = u.clone();
    for _ in 0..steps {
        for i in 1..n {
            let lap = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dy * dy);
            let grad = (u[i + 1] - u[i - 1]) / (2.0 * dy);
            next[i] = u[i] + dt * (0.5 * lap - mu * grad + u[i] - u[i] * u[i]);
        }
        next[n] = 1.0;
        std::mem::swap(&mut u, &mut next);
    }
    let k = (y / dy).round() as usize;
    u[k]
}

#[test]
fn survival_matches_kpp_solution() {
    let pde = kpp_survival(4.0, 1.0, 30.0);
    let mut rng = RngStream::new(71, 0);
    let p = survival_probability_estimate(4.0, 1.0, 30.0, 10_000, &mut rng).unwrap();
    assert!(p.estimate >= 0.5);
    assert!(
        (p.estimate - pde).abs() < 3.0 * p.std_error() + 0.005,
        "monte carlo {} kpp {pde}",
        p.estimate
    );
}
