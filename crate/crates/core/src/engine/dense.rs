use crate::error::Result;
use crate::genealogy::GenealogyForest;
use crate::kernels::{exp_gap, RngStream};
use crate::model::{fitness_cmp, Configuration, ParticleId, Params, ScoreFunction};

use super::{check_forward, check_init, orthogonal_stream, Engine, EventRecord, Frame};

/// Literal construction: every particle moves at every event and the least
/// fit one is found by a linear scan.
///
/// For a linear score the coordinates are held in the score's orthonormal
/// frame, coordinate 0 being the score itself. The score coordinate draws
/// from the main stream and the orthogonal ones from a separate stream, so a
/// d-dimensional run projects bit-for-bit onto the one-dimensional run with
/// the same seed.
pub struct DenseEngine {
    params: Params,
    time: f64,
    next_event: f64,
    events: u64,
    coords: Vec<f64>,
    ids: Vec<ParticleId>,
    scores: Vec<f64>,
    frame: Option<Frame>,
    rng: RngStream,
    orth_rng: RngStream,
    forest: GenealogyForest,
    scratch: Vec<f64>,
}

impl DenseEngine {
    pub fn new(params: &Params, init: &Configuration, rng: RngStream) -> Result<Self> {
        Self::with_pruning(params, init, rng, true)
    }

    /// Same as [`DenseEngine::new`] with genealogy pruning switched on or
    /// off.
    pub fn with_pruning(
        params: &Params,
        init: &Configuration,
        mut rng: RngStream,
        prune: bool,
    ) -> Result<Self> {
        check_init(params, init)?;
        let d = params.d;
        let frame = params.score.direction().map(Frame::new);
        let mut coords = init.coords().to_vec();
        if let Some(f) = &frame {
            for (y, x) in coords.chunks_exact_mut(d).zip(init.positions()) {
                f.to_frame(x, y);
            }
        }
        let forest = GenealogyForest::with_roots(init.time, init.ids(), d, init.coords(), prune)?;
        let orth_rng = orthogonal_stream(&rng);
        let next_event = init.time + exp_gap(&mut rng, params.n as f64 * params.branch_rate)?;
        let mut eng = Self {
            params: params.clone(),
            time: init.time,
            next_event,
            events: 0,
            coords,
            ids: init.ids().to_vec(),
            scores: vec![0.0; params.n],
            frame,
            rng,
            orth_rng,
            forest,
            scratch: vec![0.0; d],
        };
        eng.rescore();
        Ok(eng)
    }

    fn rescore(&mut self) {
        let d = self.params.d;
        match (&self.frame, &self.params.score) {
            (Some(_), _) => {
                for (s, y) in self.scores.iter_mut().zip(self.coords.chunks_exact(d)) {
                    *s = y[0];
                }
            }
            (None, sf) => {
                for (s, x) in self.scores.iter_mut().zip(self.coords.chunks_exact(d)) {
                    *s = sf.eval_unchecked(x);
                }
            }
        }
    }

    fn displace_all(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let sd = dt.sqrt();
        let d = self.params.d;
        if self.frame.is_some() {
            for y in self.coords.chunks_exact_mut(d) {
                y[0] += sd * self.rng.normal();
            }
            if d > 1 {
                for y in self.coords.chunks_exact_mut(d) {
                    for c in &mut y[1..] {
                        *c += sd * self.orth_rng.normal();
                    }
                }
            }
        } else {
            for c in self.coords.iter_mut() {
                *c += sd * self.rng.normal();
            }
        }
        self.rescore();
    }

    fn cartesian(&self, i: usize, out: &mut [f64]) {
        let d = self.params.d;
        let y = &self.coords[i * d..(i + 1) * d];
        match &self.frame {
            Some(f) => f.to_cartesian(y, out),
            None => out.copy_from_slice(y),
        }
    }

    fn least_fit(&self) -> usize {
        let mut worst = 0;
        for i in 1..self.scores.len() {
            if fitness_cmp(self.scores[i], self.ids[i], self.scores[worst], self.ids[worst]).is_gt() {
                worst = i;
            }
        }
        worst
    }

    /// Configuration at the current time.
    pub fn snapshot(&self) -> Configuration {
        let d = self.params.d;
        let mut coords = vec![0.0; self.coords.len()];
        for (i, out) in coords.chunks_exact_mut(d).enumerate() {
            self.cartesian(i, out);
        }
        let order = crate::model::order_scores(&self.scores, &self.ids).expect("finite scores");
        Configuration::from_parts(self.time, d, coords, self.ids.clone(), order)
    }

    /// Scores in slot order at the current time.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn score_function(&self) -> &ScoreFunction {
        &self.params.score
    }
}

impl Engine for DenseEngine {
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
        self.displace_all(jump - self.time);
        self.time = jump;
        let k = self.rng.index(n);
        let worst = self.least_fit();
        let rec = if worst == k {
            EventRecord {
                index: self.events,
                time: jump,
                duplicated_id: self.ids[k],
                killed_id: self.ids[k],
                child_id: None,
                noop: true,
            }
        } else {
            let d = self.params.d;
            let mut pos = std::mem::take(&mut self.scratch);
            self.cartesian(k, &mut pos);
            let child = self
                .forest
                .record_branch(self.ids[k], jump, &pos)
                .expect("duplicated particle is alive");
            self.cartesian(worst, &mut pos);
            let killed = self.ids[worst];
            self.forest
                .record_death(killed, jump, &pos)
                .expect("killed particle is alive");
            self.scratch = pos;
            self.coords.copy_within(k * d..(k + 1) * d, worst * d);
            self.scores[worst] = self.scores[k];
            self.ids[worst] = child;
            EventRecord {
                index: self.events,
                time: jump,
                duplicated_id: self.ids[k],
                killed_id: killed,
                child_id: Some(child),
                noop: false,
            }
        };
        self.events += 1;
        self.next_event = jump
            + exp_gap(&mut self.rng, n as f64 * self.params.branch_rate).expect("validated rate");
        rec
    }

    fn run_until(&mut self, t: f64) -> Result<Configuration> {
        check_forward(self.time, t)?;
        while self.next_event <= t {
            self.advance_one_event();
        }
        self.displace_all(t - self.time);
        self.time = t;
        Ok(self.snapshot())
    }

    fn forest(&self) -> &GenealogyForest {
        &self.forest
    }
}
