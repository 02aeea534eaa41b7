use crate::error::{Error, Result};
use crate::genealogy::GenealogyForest;
use crate::kernels::{exp_gap, RngStream};
use crate::model::{fitness_cmp, order_scores, Configuration, ParticleId, Params};

use super::bridge::Piece;
use super::heap::{ExpiryWheel, SlotHeap};
use super::{check_forward, check_init, orthogonal_stream, Engine, EventRecord, Frame};

/// Exact engine for linear scores with lazily resolved particles.
///
/// Each particle's score coordinate is a chain of bridge pieces with known
/// minima; the front piece certifies a lower bound until it expires. A heap
/// of bounds answers "who can be the least fit right now" and a calendar of
/// expiry times renews bounds as pieces run out. A fresh piece runs until
/// the path first drops by a set amount or a time matched to the gap above
/// the current minimum has passed, so particles deep in the bulk are touched
/// rarely.
///
/// Orthogonal coordinates are independent Brownian motions and are only
/// sampled when a position is needed (branching, death, snapshots).
pub struct LinearEngine {
    params: Params,
    frame: Frame,
    time: f64,
    next_event: f64,
    events: u64,
    ids: Vec<ParticleId>,
    /// Current piece of each slot.
    front: Vec<Piece>,
    /// Later pieces of each slot, last one first in time.
    rest: Vec<Vec<Piece>>,
    /// Orthogonal coordinates, `d - 1` per slot.
    orth: Vec<f64>,
    orth_time: Vec<f64>,
    bounds: SlotHeap,
    expiry: ExpiryWheel,
    expired: Vec<usize>,
    floor: f64,
    rng: RngStream,
    orth_rng: RngStream,
    forest: GenealogyForest,
    touched: Vec<usize>,
    mark: Vec<u64>,
    tuning: Tuning,
    pos: Vec<f64>,
    frame_buf: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Tuning {
    /// Drop that ends a fresh piece, in units of `sqrt(dt)`.
    spread: f64,
    /// Fraction of the gap to the minimum a piece may use up.
    margin: f64,
    speed: f64,
    dt_min: f64,
    dt_max: f64,
}

impl LinearEngine {
    pub fn new(params: &Params, init: &Configuration, mut rng: RngStream) -> Result<Self> {
        check_init(params, init)?;
        let lambda = params
            .score
            .direction()
            .ok_or_else(|| Error::Argument("the lazy engine needs a linear score".into()))?;
        let d = params.d;
        let n = params.n;
        let frame = Frame::new(lambda);
        let forest = GenealogyForest::with_roots(init.time, init.ids(), d, init.coords(), true)?;
        let orth_rng = orthogonal_stream(&rng);
        let rate = params.branch_rate;
        let next_event = init.time + exp_gap(&mut rng, n as f64 * rate)?;
        let tuning = Tuning {
            spread: 0.5,
            margin: 0.97,
            speed: (2.0 * rate).sqrt(),
            dt_min: 1.0 / (n as f64 * rate),
            dt_max: 4.0 / rate,
        };
        let mut y = vec![0.0; d];
        let mut score = Vec::with_capacity(n);
        let mut orth = Vec::with_capacity(n * (d - 1));
        for x in init.positions() {
            frame.to_frame(x, &mut y);
            score.push(y[0]);
            orth.extend_from_slice(&y[1..]);
        }
        let floor = score.iter().copied().fold(f64::INFINITY, f64::min);
        let mut eng = Self {
            params: params.clone(),
            frame,
            time: init.time,
            next_event,
            events: 0,
            ids: init.ids().to_vec(),
            front: Vec::with_capacity(n),
            rest: vec![Vec::new(); n],
            orth,
            orth_time: vec![init.time; n],
            bounds: SlotHeap::new(Vec::new()),
            expiry: ExpiryWheel::new(Vec::new(), init.time, 1.0, 1.0),
            expired: Vec::new(),
            floor,
            rng,
            orth_rng,
            forest,
            touched: Vec::new(),
            mark: vec![u64::MAX; n],
            tuning,
            pos: vec![0.0; d],
            frame_buf: vec![0.0; d],
        };
        for &x in &score {
            let piece = eng.fresh_piece(init.time, x);
            eng.front.push(piece);
        }
        eng.bounds = SlotHeap::new(eng.front.iter().map(|p| p.m).collect());
        eng.expiry = ExpiryWheel::new(
            eng.front.iter().map(|p| p.t1).collect(),
            init.time,
            tuning.dt_min,
            tuning.dt_max,
        );
        Ok(eng)
    }

    fn dt_for_gap(&self, gap: f64) -> f64 {
        let t = &self.tuning;
        if !(gap > 0.0) {
            return t.dt_min;
        }
        // largest s with spread * s + speed * s^2 <= margin * gap
        let c = t.spread;
        let s = (-c + (c * c + 4.0 * t.speed * t.margin * gap).sqrt()) / (2.0 * t.speed);
        (s * s).clamp(t.dt_min, t.dt_max)
    }

    /// Piece from `x` at `t`, stopped at the first drop by `spread * sqrt(dt)`.
    /// Its end is a stopping time of the path, so the next piece may start
    /// afresh.
    fn fresh_piece(&mut self, t: f64, x: f64) -> Piece {
        let gap = x - self.floor;
        let dt = self.dt_for_gap(gap);
        if !(gap > 0.0) {
            let x1 = x + dt.sqrt() * self.rng.normal();
            return Piece::free(t, x, t + dt, x1, &mut self.rng);
        }
        let h = self.tuning.spread * dt.sqrt();
        Piece::until_drop(t, x, dt, h, &mut self.rng)
    }

    /// Moves to the next piece of slot `s`, starting a new one if the chain
    /// runs out.
    fn advance_chain(&mut self, s: usize) {
        let done = self.front[s];
        self.front[s] = match self.rest[s].pop() {
            Some(p) => p,
            None => self.fresh_piece(done.t1, done.x1),
        };
    }

    /// Drops pieces ending before `u`, extending the chain if needed.
    fn cover(&mut self, s: usize, u: f64) {
        while self.front[s].t1 < u {
            self.advance_chain(s);
        }
    }

    /// Exact score coordinate of slot `s` at `u`; afterwards the front piece
    /// starts at `u`.
    fn value_at(&mut self, s: usize, u: f64) -> f64 {
        self.cover(s, u);
        let p = self.front[s];
        if u == p.t0 {
            p.x0
        } else if u == p.t1 {
            self.advance_chain(s);
            p.x1
        } else {
            let rest = p.split_right(u, &mut self.rng);
            self.front[s] = rest;
            rest.x0
        }
    }

    /// Cuts the front piece, which must cover `now`, to a length matched to
    /// its gap above the minimum so its certified minimum stays close to the
    /// current value.
    fn sharpen(&mut self, s: usize, now: f64) {
        let mut p = self.front[s];
        if p.m - self.floor >= self.tuning.speed * (p.t1 - now) {
            return;
        }
        let mut dt = self.dt_for_gap(p.x0 - self.floor);
        if p.m < self.floor && p.resolve_tau(&mut self.rng) > now {
            // stop short of a dip below the floor so the front gets a fresh,
            // higher minimum
            dt = dt.min((0.5 * (p.tau - now)).max(self.tuning.dt_min));
        }
        let cut = now + dt;
        if cut < p.t1 {
            let (a, b) = p.split(cut, &mut self.rng);
            self.rest[s].push(b);
            self.front[s] = a;
        } else {
            self.front[s] = p;
        }
    }

    fn rekey(&mut self, s: usize) {
        let (m, t1) = (self.front[s].m, self.front[s].t1);
        self.bounds.update(s, m);
        self.expiry.set(s, t1);
    }

    fn orth_at(&mut self, s: usize, u: f64) {
        let k = self.params.d - 1;
        if k == 0 || u <= self.orth_time[s] {
            return;
        }
        let sd = (u - self.orth_time[s]).sqrt();
        for c in &mut self.orth[s * k..(s + 1) * k] {
            *c += sd * self.orth_rng.normal();
        }
        self.orth_time[s] = u;
    }

    /// Writes the Cartesian position of slot `s` with score `score` into
    /// `self.pos`.
    fn cartesian(&mut self, s: usize, score: f64) {
        let k = self.params.d - 1;
        self.frame_buf[0] = score;
        self.frame_buf[1..].copy_from_slice(&self.orth[s * k..(s + 1) * k]);
        self.frame.to_cartesian(&self.frame_buf, &mut self.pos);
    }

    fn touch(&mut self, s: usize) {
        if self.mark[s] != self.events {
            self.mark[s] = self.events;
            self.touched.push(s);
        }
    }

    fn renew_expired(&mut self, now: f64) {
        let mut expired = std::mem::take(&mut self.expired);
        self.expiry.drain_before(now, &mut expired);
        for &s in &expired {
            self.cover(s, now);
            self.sharpen(s, now);
            self.rekey(s);
        }
        self.expired = expired;
    }

    /// Configuration at `t`, which must not lie past the next event.
    fn snapshot_at(&mut self, t: f64) -> Configuration {
        let d = self.params.d;
        let n = self.params.n;
        let mut coords = vec![0.0; n * d];
        let mut scores = Vec::with_capacity(n);
        for s in 0..n {
            let x = self.value_at(s, t);
            self.orth_at(s, t);
            self.rekey(s);
            self.cartesian(s, x);
            coords[s * d..(s + 1) * d].copy_from_slice(&self.pos);
            scores.push(x);
        }
        let order = order_scores(&scores, &self.ids).expect("finite scores");
        Configuration::from_parts(t, d, coords, self.ids.clone(), order)
    }
}

impl Engine for LinearEngine {
    fn params(&self) -> &Params {
        &self.params
    }

    fn time(&self) -> f64 {
        self.time
    }

    fn events(&self) -> u64 {
        self.events
    }

    fn next_event_time(&self) -> f64 {
        self.next_event
    }

    fn advance_one_event(&mut self) -> EventRecord {
        let n = self.params.n;
        let jump = self.next_event;
        self.renew_expired(jump);
        let k = self.rng.index(n);
        let xk = self.value_at(k, jump);
        self.touched.clear();
        self.touch(k);
        self.bounds.update(k, xk);
        let (mut worst, mut worst_x) = (k, xk);
        // resolved slots carry their exact value as key, so the loop stops
        // once every remaining bound is at least the current worst
        loop {
            let (s, key) = self.bounds.top();
            if key >= worst_x {
                break;
            }
            let x = self.value_at(s, jump);
            self.touch(s);
            self.bounds.update(s, x);
            if fitness_cmp(x, self.ids[s], worst_x, self.ids[worst]).is_gt() {
                worst = s;
                worst_x = x;
            }
        }
        let index = self.events;
        let parent = self.ids[k];
        self.floor = worst_x;
        let rec = if worst == k {
            EventRecord {
                index,
                time: jump,
                duplicated_id: parent,
                killed_id: parent,
                child_id: None,
                noop: true,
            }
        } else {
            self.orth_at(k, jump);
            self.cartesian(k, xk);
            let child = self
                .forest
                .record_branch(parent, jump, &self.pos)
                .expect("duplicated particle is alive");
            self.orth_at(worst, jump);
            self.cartesian(worst, worst_x);
            let killed = self.ids[worst];
            self.forest
                .record_death(killed, jump, &self.pos)
                .expect("killed particle is alive");
            let m = self.params.d - 1;
            self.orth.copy_within(k * m..(k + 1) * m, worst * m);
            self.orth_time[worst] = jump;
            self.ids[worst] = child;
            self.front[worst] = self.fresh_piece(jump, xk);
            self.rest[worst].clear();
            EventRecord {
                index,
                time: jump,
                duplicated_id: parent,
                killed_id: killed,
                child_id: Some(child),
                noop: false,
            }
        };
        for i in 0..self.touched.len() {
            let s = self.touched[i];
            if s == k {
                // the event time does not depend on this path, so the
                // duplicated particle restarts from its exact value
                self.front[s] = self.fresh_piece(jump, xk);
                self.rest[s].clear();
            } else if s != worst {
                self.sharpen(s, jump);
            }
            self.rekey(s);
        }
        self.events += 1;
        self.time = jump;
        self.next_event = jump
            + exp_gap(&mut self.rng, n as f64 * self.params.branch_rate).expect("validated rate");
        rec
    }

    fn run_until(&mut self, t: f64) -> Result<Configuration> {
        check_forward(self.time, t)?;
        while self.next_event <= t {
            self.advance_one_event();
        }
        self.time = t;
        Ok(self.snapshot_at(t))
    }

    fn forest(&self) -> &GenealogyForest {
        &self.forest
    }
}
