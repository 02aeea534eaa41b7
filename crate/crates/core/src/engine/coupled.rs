use crate::error::{Error, Result};
use crate::kernels::{exp_gap, RngStream};
use crate::model::ParticleId;

use super::{check_forward, EventRecord};

/// Two one-dimensional systems of equal size driven by shared randomness.
///
/// Both systems use the same jump times, the same duplicated rank and the
/// same Brownian increment for the particle of each rank, so a system that
/// starts above the other rank by rank stays above it. Scores are kept sorted
/// in descending order; index 0 is the leader.
pub struct CoupledPair {
    lower: Side,
    upper: Side,
    time: f64,
    next_event: f64,
    events: u64,
    rate: f64,
    rng: RngStream,
    noise: Vec<f64>,
}

struct Side {
    scores: Vec<f64>,
    ids: Vec<ParticleId>,
    next_id: ParticleId,
}

impl Side {
    fn new(xs: &[f64]) -> Result<Self> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Argument("positions must be finite".into()));
        }
        let mut pairs: Vec<(f64, ParticleId)> =
            xs.iter().copied().zip(0..xs.len() as ParticleId).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(Self {
            scores: pairs.iter().map(|p| p.0).collect(),
            ids: pairs.iter().map(|p| p.1).collect(),
            next_id: xs.len() as ParticleId,
        })
    }

    fn displace(&mut self, noise: &[f64]) {
        for (x, z) in self.scores.iter_mut().zip(noise) {
            *x += z;
        }
        self.resort();
    }

    fn resort(&mut self) {
        let mut pairs: Vec<(f64, ParticleId)> =
            self.scores.iter().copied().zip(self.ids.iter().copied()).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (i, (x, id)) in pairs.into_iter().enumerate() {
            self.scores[i] = x;
            self.ids[i] = id;
        }
    }

    fn select(&mut self, k: usize, index: u64, time: f64) -> EventRecord {
        let last = self.scores.len() - 1;
        let parent = self.ids[k];
        if k == last {
            return EventRecord {
                index,
                time,
                duplicated_id: parent,
                killed_id: parent,
                child_id: None,
                noop: true,
            };
        }
        let killed = self.ids[last];
        let child = self.next_id;
        self.next_id += 1;
        let x = self.scores[k];
        // the copy sits right behind its parent
        self.scores.copy_within(k + 1..last, k + 2);
        self.ids.copy_within(k + 1..last, k + 2);
        self.scores[k + 1] = x;
        self.ids[k + 1] = child;
        EventRecord {
            index,
            time,
            duplicated_id: parent,
            killed_id: killed,
            child_id: Some(child),
            noop: false,
        }
    }
}

impl CoupledPair {
    /// `lower` must be dominated by `upper` rank by rank.
    pub fn new(lower: &[f64], upper: &[f64], branch_rate: f64, mut rng: RngStream) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Argument(format!(
                "coupled systems need the same positive size, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if !(branch_rate > 0.0 && branch_rate.is_finite()) {
            return Err(Error::Argument(format!("invalid branch rate {branch_rate}")));
        }
        let lower = Side::new(lower)?;
        let upper = Side::new(upper)?;
        if first_violation(&lower.scores, &upper.scores).is_some() {
            return Err(Error::Argument(
                "initial configurations are not ordered rank by rank".into(),
            ));
        }
        let n = lower.scores.len();
        let next_event = exp_gap(&mut rng, n as f64 * branch_rate)?;
        Ok(Self {
            lower,
            upper,
            time: 0.0,
            next_event,
            events: 0,
            rate: branch_rate,
            rng,
            noise: vec![0.0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.lower.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.scores.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Scores of the dominated system, best first.
    pub fn lower(&self) -> &[f64] {
        &self.lower.scores
    }

    /// Scores of the dominating system, best first.
    pub fn upper(&self) -> &[f64] {
        &self.upper.scores
    }

    fn shared_move(&mut self, dt: f64) {
        let sd = dt.sqrt();
        for z in self.noise.iter_mut() {
            *z = sd * self.rng.normal();
        }
        self.lower.displace(&self.noise);
        self.upper.displace(&self.noise);
    }

    fn check(&self) -> Result<()> {
        match first_violation(&self.lower.scores, &self.upper.scores) {
            None => Ok(()),
            Some(k) => Err(Error::Consistency(format!(
                "domination broken at rank {k} after event {}: {} > {}",
                self.events, self.lower.scores[k], self.upper.scores[k]
            ))),
        }
    }

    /// Advances both systems through the next shared event.
    pub fn advance(&mut self) -> Result<(EventRecord, EventRecord)> {
        let jump = self.next_event;
        self.shared_move(jump - self.time);
        let k = self.rng.index(self.len());
        let a = self.lower.select(k, self.events, jump);
        let b = self.upper.select(k, self.events, jump);
        self.events += 1;
        self.time = jump;
        let rate = self.len() as f64 * self.rate;
        self.next_event = jump + exp_gap(&mut self.rng, rate)?;
        self.check()?;
        Ok((a, b))
    }

    /// Runs both systems to `t` and returns their sorted scores.
    pub fn run_until(&mut self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        check_forward(self.time, t)?;
        while self.next_event <= t {
            self.advance()?;
        }
        self.shared_move(t - self.time);
        self.time = t;
        self.check()?;
        Ok((self.lower.scores.clone(), self.upper.scores.clone()))
    }
}

/// One shared event for a coupled pair.
pub fn coupled_pair_advance(pair: &mut CoupledPair) -> Result<(EventRecord, EventRecord)> {
    pair.advance()
}

fn first_violation(lower: &[f64], upper: &[f64]) -> Option<usize> {
    lower.iter().zip(upper).position(|(x, y)| x > y)
}
