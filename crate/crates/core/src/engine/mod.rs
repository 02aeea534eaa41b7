//! Event-driven N-particle engines.
//!
//! Both engines realise the same process exactly: branch events at the
//! jump times of a rate `N * branch_rate` Poisson clock, a uniformly chosen
//! particle duplicated, the least fit particle removed. Between events every
//! particle moves as an independent Brownian motion; nothing is discretised.
//!
//! * [`DenseEngine`] moves every particle at every event and scans for the
//!   minimum, `O(N)` per event. It accepts any score.
//! * [`LinearEngine`] handles linear scores. Particles are resolved lazily
//!   through Brownian bridges with exactly sampled minima, so the minimum is found by touching
//!   only particles whose certified lower bound could beat it.

mod coupled;
mod dense;
mod heap;
pub(crate) mod bridge;
mod lazy;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use coupled::{coupled_pair_advance, CoupledPair};
pub use dense::DenseEngine;
pub use lazy::LinearEngine;

use crate::error::{Error, Result};
use crate::genealogy::GenealogyForest;
use crate::kernels::RngStream;
use crate::model::{dot, orthonormal_complement, Configuration, ParticleId, Params, ScoreFunction};

/// One branch/selection event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRecord {
    pub index: u64,
    pub time: f64,
    pub duplicated_id: ParticleId,
    pub killed_id: ParticleId,
    /// Id handed to the duplicate; `None` for a no-op event.
    pub child_id: Option<ParticleId>,
    /// The duplicated particle was the least fit, so nothing changed.
    pub noop: bool,
}

pub trait Engine: Send {
    fn params(&self) -> &Params;

    /// Time of the most recent event or snapshot.
    fn time(&self) -> f64;

    /// Number of events processed so far.
    fn events(&self) -> u64;

    fn next_event_time(&self) -> f64;

    fn advance_one_event(&mut self) -> EventRecord;

    /// Processes every event up to `t` and returns the exact configuration
    /// at `t`.
    fn run_until(&mut self, t: f64) -> Result<Configuration>;

    fn forest(&self) -> &GenealogyForest;

    /// Processes events up to `t` without taking a snapshot.
    fn advance_events_to(&mut self, t: f64, mut on_event: impl FnMut(&EventRecord)) -> Result<()>
    where
        Self: Sized,
    {
        check_forward(self.time(), t)?;
        while self.next_event_time() <= t {
            let ev = self.advance_one_event();
            on_event(&ev);
        }
        Ok(())
    }
}

/// Engine selection for [`build_engine`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// Lazy engine for linear scores, dense otherwise.
    #[default]
    Auto,
    Dense,
    Lazy,
}

/// Either engine behind one type.
#[allow(clippy::large_enum_variant)]
pub enum AnyEngine {
    Dense(DenseEngine),
    Lazy(LinearEngine),
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            AnyEngine::Dense($e) => $body,
            AnyEngine::Lazy($e) => $body,
        }
    };
}

impl Engine for AnyEngine {
    fn params(&self) -> &Params {
        delegate!(self, e => e.params())
    }
    fn time(&self) -> f64 {
        delegate!(self, e => e.time())
    }
    fn events(&self) -> u64 {
        delegate!(self, e => e.events())
    }
    fn next_event_time(&self) -> f64 {
        delegate!(self, e => e.next_event_time())
    }
    fn advance_one_event(&mut self) -> EventRecord {
        delegate!(self, e => e.advance_one_event())
    }
    fn run_until(&mut self, t: f64) -> Result<Configuration> {
        delegate!(self, e => e.run_until(t))
    }
    fn forest(&self) -> &GenealogyForest {
        delegate!(self, e => e.forest())
    }
}

pub fn build_engine(
    params: &Params,
    init: &Configuration,
    rng: RngStream,
    kind: EngineKind,
) -> Result<AnyEngine> {
    let lazy = match kind {
        EngineKind::Auto => matches!(params.score, ScoreFunction::Linear(_)),
        EngineKind::Dense => false,
        EngineKind::Lazy => true,
    };
    Ok(if lazy {
        AnyEngine::Lazy(LinearEngine::new(params, init, rng)?)
    } else {
        AnyEngine::Dense(DenseEngine::new(params, init, rng)?)
    })
}

pub(crate) fn check_forward(now: f64, t: f64) -> Result<()> {
    if !(t >= now) {
        return Err(Error::Argument(format!(
            "requested time {t} precedes the current time {now}"
        )));
    }
    Ok(())
}

pub(crate) fn check_init(params: &Params, init: &Configuration) -> Result<()> {
    params.validate()?;
    if init.len() != params.n || init.d != params.d {
        return Err(Error::Argument(format!(
            "initial configuration has {} particles in d={}, expected {} in d={}",
            init.len(),
            init.d,
            params.n,
            params.d
        )));
    }
    Ok(())
}

/// Stream for the components orthogonal to a linear score direction, kept
/// apart so the score coordinate sees the same draws in every dimension.
pub(crate) fn orthogonal_stream(rng: &RngStream) -> RngStream {
    RngStream::new(rng.seed() ^ 0x9e37_79b9_7f4a_7c15, rng.stream_id())
}

/// Orthonormal frame `(lambda, e_2, .., e_d)` of a linear score.
#[derive(Clone, Debug)]
pub(crate) struct Frame {
    lambda: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(lambda: &[f64]) -> Self {
        Self {
            lambda: lambda.to_vec(),
            basis: orthonormal_complement(lambda),
        }
    }

    pub fn to_frame(&self, x: &[f64], out: &mut [f64]) {
        out[0] = dot(&self.lambda, x);
        for (o, e) in out[1..].iter_mut().zip(&self.basis) {
            *o = dot(e, x);
        }
    }

    pub fn to_cartesian(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[0] * self.lambda[i]
                + self
                    .basis
                    .iter()
                    .zip(&y[1..])
                    .map(|(e, c)| e[i] * c)
                    .sum::<f64>();
        }
    }
}

/// CSV event trace: `event_index,time,duplicated_id,killed_id,noop`.
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "event_index,time,duplicated_id,killed_id,noop").map_err(io)?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn write(&mut self, ev: &EventRecord) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{}",
            ev.index, ev.time, ev.duplicated_id, ev.killed_id, ev.noop
        )
        .map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}
