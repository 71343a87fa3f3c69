//! Materialised marked Poisson streams (the graphical construction).
//!
//! Each vertex owns a birth and a death stream and each directed edge an
//! infection stream. A stream of class `c` is a homogeneous Poisson process
//! of intensity `envelope(c)` on `[0, horizon]` with marks uniform on
//! `[0, envelope(c))`; thinning by the mark realises any rate up to the
//! envelope.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::rates::{InfectionRate, RateModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Birth,
    Death,
    Infection,
}

impl StreamKind {
    pub fn name(self) -> &'static str {
        match self {
            StreamKind::Birth => "birth",
            StreamKind::Death => "death",
            StreamKind::Infection => "infection",
        }
    }
}

/// Rate ceilings per stream class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelopes {
    pub birth: f64,
    pub death: f64,
    pub infection: f64,
}

impl Envelopes {
    /// Tight envelopes for a bounded-load model: maxima of `b`, `d`, `Λ`
    /// over the reachable loads `0..=max_load`.
    pub fn for_model(m: &RateModel, infection: &InfectionRate) -> Result<Self> {
        let top = m.max_load().ok_or_else(|| {
            Error::invalid(format!("{m} has unbounded loads; log replay needs a capped model"))
        })?;
        Ok(Envelopes {
            birth: m.max_birth_rate().unwrap_or(0.0),
            death: m.max_death_rate().unwrap_or(0.0),
            infection: infection.max_rate(top),
        })
    }

    pub fn get(&self, kind: StreamKind) -> f64 {
        match kind {
            StreamKind::Birth => self.birth,
            StreamKind::Death => self.death,
            StreamKind::Infection => self.infection,
        }
    }

    /// Componentwise maximum, for logs shared by several models.
    pub fn max(&self, other: &Envelopes) -> Envelopes {
        Envelopes {
            birth: self.birth.max(other.birth),
            death: self.death.max(other.death),
            infection: self.infection.max(other.infection),
        }
    }
}

/// One marked point. `index` is a vertex for birth/death streams and a
/// directed-edge id (see [`Graph::edge`]) for infection streams.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogEvent {
    pub time: f64,
    pub mark: f64,
    pub kind: StreamKind,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventLog {
    pub horizon: f64,
    pub envelopes: Envelopes,
    pub vertex_count: usize,
    pub edge_count: usize,
    /// All points of all streams, by increasing time.
    events: Vec<LogEvent>,
    /// Points whose time collided with another point and was re-drawn.
    pub tie_redraws: u64,
}

impl EventLog {
    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Points of a single stream, in time order.
    pub fn stream(&self, kind: StreamKind, index: usize) -> impl Iterator<Item = &LogEvent> + '_ {
        self.events.iter().filter(move |e| e.kind == kind && e.index as usize == index)
    }

    pub fn stream_count(&self, kind: StreamKind) -> usize {
        match kind {
            StreamKind::Birth | StreamKind::Death => self.vertex_count,
            StreamKind::Infection => self.edge_count,
        }
    }
}

fn push_stream<R: Rng + ?Sized>(
    out: &mut Vec<LogEvent>,
    kind: StreamKind,
    index: usize,
    rate: f64,
    horizon: f64,
    rng: &mut R,
) -> u64 {
    let mut redraws = 0;
    if rate <= 0.0 {
        return 0;
    }
    let mut t = 0.0f64;
    loop {
        let gap: f64 = Exp1.sample(rng);
        let mut next = t + gap / rate;
        while next <= t {
            redraws += 1;
            let gap: f64 = Exp1.sample(rng);
            next = t + gap / rate;
        }
        if next > horizon {
            return redraws;
        }
        t = next;
        out.push(LogEvent { time: t, mark: rng.random::<f64>() * rate, kind, index: index as u32 });
    }
}

/// Draw independent marked Poisson streams for every vertex and directed edge of `g`.
///
/// A zero envelope yields empty streams of that class.
pub fn generate_event_log<R: Rng + ?Sized>(g: &Graph, envelopes: Envelopes, horizon: f64, rng: &mut R) -> Result<EventLog> {
    for kind in [StreamKind::Birth, StreamKind::Death, StreamKind::Infection] {
        let e = envelopes.get(kind);
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::invalid(format!("{} envelope {e} must be finite and >= 0", kind.name())));
        }
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("log horizon {horizon} must be finite and >= 0")));
    }
    let n = g.vertex_count();
    let m = g.directed_edge_count();
    let mut events = Vec::new();
    let mut tie_redraws = 0;
    for v in 0..n {
        tie_redraws += push_stream(&mut events, StreamKind::Birth, v, envelopes.birth, horizon, rng);
        tie_redraws += push_stream(&mut events, StreamKind::Death, v, envelopes.death, horizon, rng);
    }
    for e in 0..m {
        tie_redraws += push_stream(&mut events, StreamKind::Infection, e, envelopes.infection, horizon, rng);
    }
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.kind.cmp(&b.kind)).then(a.index.cmp(&b.index)));

    // Cross-stream collisions have probability zero but floating point can
    // produce them; move the later point inside the gap to its successor.
    for i in 1..events.len() {
        if events[i].time <= events[i - 1].time {
            let lo = events[i - 1].time;
            let hi = events.get(i + 1).map_or(horizon, |e| e.time);
            let t = lo + rng.random::<f64>() * (hi - lo);
            events[i].time = if t > lo { t } else { lo.next_up().min(hi) };
            tie_redraws += 1;
        }
    }
    Ok(EventLog { horizon, envelopes, vertex_count: n, edge_count: m, events, tie_redraws })
}
