//! Brownian bridge segments that carry their exact minimum.
//!
//! A [`Piece`] is a Brownian path on `[t0, t1]` pinned at `x0` and `x1`
//! whose minimum `m` and its time `tau` have already been drawn. Given
//! `(m, tau)` the path splits into two independent Bessel(3) bridges hanging
//! from the minimum, so interior values can be sampled exactly without
//! rejection. Splitting on the side away from `tau` leaves a bridge
//! conditioned to stay above `m`, whose own minimum is again drawn exactly.

use crate::kernels::RngStream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Piece {
    pub t0: f64,
    pub x0: f64,
    pub t1: f64,
    pub x1: f64,
    /// Minimum of the path over `[t0, t1]`.
    pub m: f64,
    /// Time at which the minimum is attained, NaN until first needed.
    pub tau: f64,
}

/// Minimum of a bridge from `a` to `b` over `dt`, conditioned to exceed
/// `floor` (pass `-inf` for the free bridge).
pub(crate) fn bridge_min_above(a: f64, b: f64, dt: f64, floor: f64, rng: &mut RngStream) -> f64 {
    let hi = a.min(b);
    if dt <= 0.0 {
        return hi;
    }
    // -ln P(min <= y) = 2 (a - y)(b - y) / dt, inverted on (floor, hi]
    let q = if floor == f64::NEG_INFINITY {
        rng.exp1()
    } else {
        let k = 2.0 * (a - floor) * (b - floor) / dt;
        let escape = -(-k).exp_m1();
        -(-(1.0 - rng.uniform()) * escape).ln_1p()
    };
    let m = 0.5 * (a + b - ((a - b).powi(2) + 2.0 * q * dt).sqrt());
    m.clamp(floor, hi)
}

/// Inverse Gaussian draw (Michael, Schucany and Haas), arranged to avoid
/// cancellation when `mean / shape` is large.
fn inverse_gaussian(mean: f64, shape: f64, rng: &mut RngStream) -> f64 {
    let v = rng.normal();
    let y = mean * v * v;
    let r = (y * y + 4.0 * shape * y).sqrt();
    let x = mean * 4.0 * shape * y / ((r + y) * (r + y));
    if !(x > 0.0) {
        return mean;
    }
    if rng.uniform() * (mean + x) <= mean {
        x
    } else {
        mean * mean / x
    }
}

/// Time of the minimum of a bridge over `[t0, t1]` from `a` to `b` with
/// minimum `m`.
pub(crate) fn argmin_time(t0: f64, t1: f64, a: f64, b: f64, m: f64, rng: &mut RngStream) -> f64 {
    let dt = t1 - t0;
    let (da, db) = (a - m, b - m);
    if !(da > 0.0) || dt <= 0.0 {
        return t0;
    }
    if !(db > 0.0) {
        return t1;
    }
    // V = s / (dt - s) has density proportional to
    // (1 + V) V^{-3/2} exp(-c1 / V - c2 V), a mixture of an inverse Gaussian
    // and the reciprocal of another.
    let c1 = da * da / (2.0 * dt);
    let c2 = db * db / (2.0 * dt);
    let ratio = (c1 / c2).sqrt();
    let v = if rng.uniform() * (1.0 + ratio) < 1.0 {
        inverse_gaussian(ratio, 2.0 * c1, rng)
    } else {
        1.0 / inverse_gaussian(1.0 / ratio, 2.0 * c2, rng)
    };
    let s = if v.is_infinite() { dt } else { dt * v / (1.0 + v) };
    (t0 + s).clamp(t0, t1)
}

/// Value at offset `s` of a Bessel(3) bridge from `r` at 0 to 0 at `total`.
fn bessel_bridge(r: f64, s: f64, total: f64, rng: &mut RngStream) -> f64 {
    let w = (total - s) / total;
    let sd = (s * w).sqrt();
    let z1 = r * w + sd * rng.normal();
    let z2 = sd * rng.normal();
    let z3 = sd * rng.normal();
    (z1 * z1 + z2 * z2 + z3 * z3).sqrt()
}

impl Piece {
    /// Free bridge from `x0` to `x1` with a fresh minimum.
    pub fn free(t0: f64, x0: f64, t1: f64, x1: f64, rng: &mut RngStream) -> Self {
        Self::above(t0, x0, t1, x1, f64::NEG_INFINITY, rng)
    }

    /// Bridge conditioned to stay above `floor`.
    pub fn above(t0: f64, x0: f64, t1: f64, x1: f64, floor: f64, rng: &mut RngStream) -> Self {
        let m = bridge_min_above(x0, x1, t1 - t0, floor, rng);
        Self {
            t0,
            x0,
            t1,
            x1,
            m,
            tau: f64::NAN,
        }
    }

    /// Brownian path from `x0` at `t0` run until it first falls to `x0 - h`
    /// or until `dt` has elapsed, whichever comes first.
    pub fn until_drop(t0: f64, x0: f64, dt: f64, h: f64, rng: &mut RngStream) -> Self {
        let z = rng.normal();
        let hit = h * h / (z * z);
        let level = x0 - h;
        if hit < dt {
            return Self {
                t0,
                x0,
                t1: t0 + hit,
                x1: level,
                m: level,
                tau: t0 + hit,
            };
        }
        // endpoint of the path killed at the level, by rejection from the
        // free endpoint
        let sd = dt.sqrt();
        let x1 = loop {
            let y = x0 + sd * rng.normal();
            if y > level && rng.uniform() < -(-2.0 * h * (y - level) / dt).exp_m1() {
                break y;
            }
        };
        Self::above(t0, x0, t0 + dt, x1, level, rng)
    }

    /// Draws the time of the minimum if it has not been drawn yet.
    pub fn resolve_tau(&mut self, rng: &mut RngStream) -> f64 {
        if self.tau.is_nan() {
            self.tau = argmin_time(self.t0, self.t1, self.x0, self.x1, self.m, rng);
        }
        self.tau
    }

    /// Samples the path at `u` in `(t0, t1)` and returns the part after it.
    pub fn split_right(&self, u: f64, rng: &mut RngStream) -> Piece {
        debug_assert!(u > self.t0 && u < self.t1, "split time outside the piece");
        let mut p = *self;
        if u < p.resolve_tau(rng) {
            let x = p.m + bessel_bridge(p.x0 - p.m, u - p.t0, p.tau - p.t0, rng);
            Piece {
                t0: u,
                x0: x.max(p.m),
                ..p
            }
        } else {
            p.split_resolved(u, rng).1
        }
    }

    /// Samples the path at `u` in `(t0, t1)` and returns the two halves.
    pub fn split(&self, u: f64, rng: &mut RngStream) -> (Piece, Piece) {
        debug_assert!(u > self.t0 && u < self.t1, "split time outside the piece");
        let mut p = *self;
        p.resolve_tau(rng);
        p.split_resolved(u, rng)
    }

    fn split_resolved(&self, u: f64, rng: &mut RngStream) -> (Piece, Piece) {
        if u < self.tau {
            let x = self.m + bessel_bridge(self.x0 - self.m, u - self.t0, self.tau - self.t0, rng);
            let x = x.max(self.m);
            let left = Piece::above(self.t0, self.x0, u, x, self.m, rng);
            let right = Piece {
                t0: u,
                x0: x,
                ..*self
            };
            (left, right)
        } else if u > self.tau {
            let x = self.m + bessel_bridge(self.x1 - self.m, self.t1 - u, self.t1 - self.tau, rng);
            let x = x.max(self.m);
            let right = Piece::above(u, x, self.t1, self.x1, self.m, rng);
            let left = Piece {
                t1: u,
                x1: x,
                ..*self
            };
            (left, right)
        } else {
            (
                Piece {
                    t1: u,
                    x1: self.m,
                    ..*self
                },
                Piece {
                    t0: u,
                    x0: self.m,
                    ..*self
                },
            )
        }
    }
}
