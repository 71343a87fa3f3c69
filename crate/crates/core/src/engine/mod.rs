//! Forward simulation of CPVL and CPLI.
//!
//! Two engines share the [`Configuration`] and [`Trajectory`] types:
//! next-event (Gillespie) simulation with unbounded rates, and replay of a
//! materialised marked Poisson [`EventLog`], which realises every coupling
//! used by the pathwise checks.

mod gillespie;
mod log;
mod replay;
pub mod sumtree;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graphs::{Graph, Vertex};
use crate::rates::Load;

pub use gillespie::{run_cpli_gillespie, run_cpvl_gillespie, CpliSimulator, CpvlSimulator, Step};
pub use log::{generate_event_log, Envelopes, EventLog, LogEvent, StreamKind};
pub use replay::{
    apply_cpli_event, apply_cpvl_event, check_additivity, check_domination, run_coupled_pair, run_cpli_from_log,
    run_cpvl_from_log, Change, CoupledRun, Direction,
};

/// Load (CPVL) or dormancy (CPLI) per vertex, with cached aggregates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Configuration {
    loads: Vec<Load>,
    infected: usize,
    total: u64,
}

impl Configuration {
    /// The all-zero configuration `𝟘`.
    pub fn zeros(n: usize) -> Self {
        Configuration { loads: vec![0; n], infected: 0, total: 0 }
    }

    pub fn from_loads(loads: Vec<Load>) -> Self {
        let infected = loads.iter().filter(|&&l| l > 0).count();
        let total = loads.iter().map(|&l| l as u64).sum();
        Configuration { loads, infected, total }
    }

    /// Constant configuration.
    pub fn uniform(n: usize, load: Load) -> Self {
        Self::from_loads(vec![load; n])
    }

    /// `load · δ_v`.
    pub fn point(n: usize, v: Vertex, load: Load) -> Self {
        let mut c = Self::zeros(n);
        c.set(v, load);
        c
    }

    pub fn len(&self) -> usize {
        self.loads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loads.is_empty()
    }

    #[inline]
    pub fn get(&self, v: Vertex) -> Load {
        self.loads[v]
    }

    #[inline]
    pub fn set(&mut self, v: Vertex, load: Load) {
        let old = self.loads[v];
        if old == load {
            return;
        }
        self.infected = self.infected + (load > 0) as usize - (old > 0) as usize;
        self.total = self.total + load as u64 - old as u64;
        self.loads[v] = load;
    }

    pub fn loads(&self) -> &[Load] {
        &self.loads
    }

    /// Number of vertices with positive value.
    pub fn infected_count(&self) -> usize {
        self.infected
    }

    /// `|η| = Σ_v η(v)`.
    pub fn total_load(&self) -> u64 {
        self.total
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0
    }

    pub fn max_load(&self) -> Load {
        self.loads.iter().copied().max().unwrap_or(0)
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &Configuration) -> bool {
        self.loads.len() == other.loads.len() && self.loads.iter().zip(&other.loads).all(|(a, b)| a <= b)
    }

    /// Pointwise maximum `self ∨ other`.
    pub fn join(&self, other: &Configuration) -> Configuration {
        Self::from_loads(self.loads.iter().zip(&other.loads).map(|(&a, &b)| a.max(b)).collect())
    }

    pub(crate) fn check_size(&self, g: &Graph) -> Result<()> {
        if self.len() != g.vertex_count() {
            return Err(Error::invalid(format!(
                "configuration has {} entries but the graph has {} vertices",
                self.len(),
                g.vertex_count()
            )));
        }
        Ok(())
    }
}

/// Options shared by the run functions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOptions {
    pub horizon: f64,
    /// Ascending times at which to record the configuration.
    pub snapshots: Vec<f64>,
}

impl RunOptions {
    pub fn horizon(horizon: f64) -> Self {
        RunOptions { horizon, snapshots: Vec::new() }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshots = times;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon {} must be finite and >= 0", self.horizon)));
        }
        if self.snapshots.windows(2).any(|w| w[0] > w[1]) || self.snapshots.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("snapshot times must be non-negative and ascending"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub config: Configuration,
}

/// Where a trajectory's randomness came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub replica: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub initial: Configuration,
    pub final_config: Configuration,
    /// Time at which the process entered a configuration with zero total
    /// rate (for CPVL exactly the time `|η|` hit 0).
    pub extinction_time: Option<f64>,
    pub events: u64,
    pub horizon: f64,
    pub snapshots: Vec<Snapshot>,
    pub provenance: Option<Provenance>,
}

impl Trajectory {
    pub fn extinct(&self) -> bool {
        self.extinction_time.is_some()
    }

    pub fn with_provenance(mut self, master_seed: u64, replica: u64) -> Self {
        self.provenance = Some(Provenance { master_seed, replica });
        self
    }
}

/// Records snapshots as simulated time passes them.
pub(crate) struct SnapshotRecorder<'a> {
    times: &'a [f64],
    next: usize,
    pub taken: Vec<Snapshot>,
}

impl<'a> SnapshotRecorder<'a> {
    pub fn new(times: &'a [f64]) -> Self {
        SnapshotRecorder { times, next: 0, taken: Vec::with_capacity(times.len()) }
    }

    /// Record `state` for every pending snapshot time strictly before `t`.
    pub fn advance(&mut self, t: f64, state: &Configuration) {
        while self.next < self.times.len() && self.times[self.next] < t {
            self.taken.push(Snapshot { time: self.times[self.next], config: state.clone() });
            self.next += 1;
        }
    }

    /// Record remaining snapshot times up to and including `horizon`.
    pub fn finish(mut self, horizon: f64, state: &Configuration) -> Vec<Snapshot> {
        while self.next < self.times.len() && self.times[self.next] <= horizon {
            self.taken.push(Snapshot { time: self.times[self.next], config: state.clone() });
            self.next += 1;
        }
        self.taken
    }
}
