//! Block recombination and a population model that mixes it with
//! branching and selection.
//!
//! A recombination event picks two distinct particles uniformly, forms a
//! child from the first `k` coordinates of one and the remaining
//! coordinates of the other (side by a fair coin) and replaces the least
//! fit particle with it. Recombination events arrive at rate `r N` on top
//! of the rate `N` branch events.

use crate::error::{arg, Error, Result};
use crate::kernels::{exp_gap, RngStream};
use crate::model::{dot, Configuration, ParticleId, ScoreFunction};

/// Child of `parent_a` and `parent_b` split after coordinate `k`.
pub fn recombine(
    config: &Configuration,
    parent_a: ParticleId,
    parent_b: ParticleId,
    k: usize,
    stream: &mut RngStream,
) -> Result<Vec<f64>> {
    let d = config.d;
    if d < 2 {
        return arg("recombination needs d >= 2");
    }
    if parent_a == parent_b {
        return arg(format!("parents must be distinct, got {parent_a} twice"));
    }
    let find = |id: ParticleId| {
        config
            .ids()
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| Error::Query(format!("no particle with id {id}")))
    };
    let a = config.position(find(parent_a)?);
    let b = config.position(find(parent_b)?);
    recombine_points(a, b, k, stream)
}

/// [`recombine`] on raw coordinates.
pub fn recombine_points(a: &[f64], b: &[f64], k: usize, stream: &mut RngStream) -> Result<Vec<f64>> {
    let d = a.len();
    if d < 2 {
        return arg("recombination needs d >= 2");
    }
    if b.len() != d {
        return arg("parents have different dimensions");
    }
    if k == 0 || k >= d {
        return arg(format!("block split must satisfy 1 <= k < d, got k={k} for d={d}"));
    }
    let (head, tail) = if stream.coin() { (a, b) } else { (b, a) };
    let mut child = head[..k].to_vec();
    child.extend_from_slice(&tail[k..]);
    Ok(child)
}

/// Both possible children, head of `a` first.
pub fn recombination_candidates(a: &[f64], b: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = a[..k].to_vec();
    c1.extend_from_slice(&b[k..]);
    let mut c2 = b[..k].to_vec();
    c2.extend_from_slice(&a[k..]);
    (c1, c2)
}

/// Correctly rounded `sum_p <lambda, p>` over `points`.
///
/// Products are split exactly with a fused multiply-add and summed with
/// Shewchuk's expansion, so the result depends only on the multiset of
/// coordinate products.
pub fn exact_score_sum(lambda: &[f64], points: &[&[f64]]) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for p in points {
        for (l, x) in lambda.iter().zip(p.iter()) {
            let hi = l * x;
            let lo = l.mul_add(*x, -hi);
            add_exact(&mut partials, hi);
            add_exact(&mut partials, lo);
        }
    }
    round_partials(&partials)
}

fn add_exact(partials: &mut Vec<f64>, mut x: f64) {
    let mut i = 0;
    for j in 0..partials.len() {
        let mut y = partials[j];
        if x.abs() < y.abs() {
            std::mem::swap(&mut x, &mut y);
        }
        let hi = x + y;
        let lo = y - (hi - x);
        if lo != 0.0 {
            partials[i] = lo;
            i += 1;
        }
        x = hi;
    }
    partials.truncate(i);
    partials.push(x);
}

fn round_partials(partials: &[f64]) -> f64 {
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let yr = x - hi;
        if y == yr {
            hi = x;
        }
    }
    hi
}

/// N-particle system with branching, recombination and selection under a
/// linear score. `O(N d)` per event.
pub struct RecombiningSystem {
    lambda: Vec<f64>,
    d: usize,
    k: usize,
    branch_rate: f64,
    recombination_rate: f64,
    time: f64,
    coords: Vec<f64>,
    rng: RngStream,
    child: Vec<f64>,
}

impl RecombiningSystem {
    pub fn new(
        init: &Configuration,
        score: &ScoreFunction,
        branch_rate: f64,
        recombination_rate: f64,
        k: usize,
        rng: RngStream,
    ) -> Result<Self> {
        let lambda = score
            .direction()
            .ok_or_else(|| Error::Argument("recombination runs need a linear score".into()))?
            .to_vec();
        let d = init.d;
        if d < 2 {
            return arg("recombination needs d >= 2");
        }
        if k == 0 || k >= d {
            return arg(format!("block split must satisfy 1 <= k < d, got k={k} for d={d}"));
        }
        if init.len() < 2 {
            return arg("recombination needs at least two particles");
        }
        if !(branch_rate > 0.0) || !(recombination_rate >= 0.0) {
            return arg("rates must be positive (branching) and nonnegative (recombination)");
        }
        Ok(Self {
            lambda,
            d,
            k,
            branch_rate,
            recombination_rate,
            time: init.time,
            coords: init.coords().to_vec(),
            rng,
            child: vec![0.0; d],
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.coords.chunks_exact(self.d).map(|x| dot(&self.lambda, x)).collect()
    }

    fn argmin(&self) -> usize {
        let mut best = 0;
        let mut low = f64::INFINITY;
        for (i, x) in self.coords.chunks_exact(self.d).enumerate() {
            let s = dot(&self.lambda, x);
            if s < low {
                low = s;
                best = i;
            }
        }
        best
    }

    fn diffuse(&mut self, dt: f64) {
        let sd = dt.sqrt();
        for c in &mut self.coords {
            *c += sd * self.rng.normal();
        }
    }

    /// Runs every event up to `t` and moves the particles to `t`.
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        if !(t >= self.time) {
            return arg(format!("requested time {t} precedes the current time {}", self.time));
        }
        let n = self.len();
        let total = n as f64 * (self.branch_rate + self.recombination_rate);
        let p_branch = self.branch_rate / (self.branch_rate + self.recombination_rate);
        let d = self.d;
        loop {
            let gap = exp_gap(&mut self.rng, total)?;
            if self.time + gap > t {
                let rest = t - self.time;
                self.diffuse(rest);
                self.time = t;
                return Ok(());
            }
            self.diffuse(gap);
            self.time += gap;
            if self.rng.uniform() < p_branch {
                let src = self.rng.index(n);
                self.child.copy_from_slice(&self.coords[src * d..(src + 1) * d]);
            } else {
                let a = self.rng.index(n);
                let mut b = self.rng.index(n - 1);
                if b >= a {
                    b += 1;
                }
                let head_from_a = self.rng.coin();
                let (h, tl) = if head_from_a { (a, b) } else { (b, a) };
                for j in 0..d {
                    let src = if j < self.k { h } else { tl };
                    self.child[j] = self.coords[src * d + j];
                }
            }
            let worst = self.argmin();
            self.coords[worst * d..(worst + 1) * d].copy_from_slice(&self.child);
        }
    }
}
