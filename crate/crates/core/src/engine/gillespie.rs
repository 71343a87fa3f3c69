//! Next-event simulation with a per-vertex rate sum tree.
//!
//! Infection events that would hit an already infected (CPVL) or already
//! active (CPLI) vertex change nothing, so they are left out of the vertex
//! rates; this does not change the law of the process.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use super::sumtree::SumTree;
use super::{Configuration, RunOptions, SnapshotRecorder, Trajectory};
use crate::error::Result;
use crate::graphs::{Graph, Vertex};
use crate::rates::{InfectionRate, Load, RateModel};

/// Result of advancing a simulator by one event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    /// One transition at `vertex`, at simulated `time`.
    Event { time: f64, vertex: Vertex },
    /// The next event would fall after the horizon; the clock now reads the horizon.
    Horizon,
    /// Total rate is zero: nothing will ever happen again.
    Absorbed,
}

fn pick<R: Rng + ?Sized>(tree: &SumTree, rng: &mut R) -> Vertex {
    loop {
        if let Some(v) = tree.find(rng.random::<f64>() * tree.total()) {
            return v;
        }
    }
}

/// Incremental CPVL simulator.
pub struct CpvlSimulator<'a> {
    g: &'a Graph,
    m: &'a RateModel,
    infection: &'a InfectionRate,
    state: Configuration,
    /// `Σ_{y ∈ N_v} Λ(η(y)) 1{η(y) > 0}`, kept current for vertices with `η(v) = 0`.
    pressure: Vec<f64>,
    tree: SumTree,
    time: f64,
    events: u64,
}

impl<'a> CpvlSimulator<'a> {
    pub fn new(g: &'a Graph, m: &'a RateModel, infection: &'a InfectionRate, init: Configuration) -> Result<Self> {
        init.check_size(g)?;
        let n = g.vertex_count();
        let mut sim = CpvlSimulator {
            g,
            m,
            infection,
            state: init,
            pressure: vec![0.0; n],
            tree: SumTree::new(n),
            time: 0.0,
            events: 0,
        };
        let mut rates = vec![0.0; n];
        for (v, r) in rates.iter_mut().enumerate() {
            sim.pressure[v] = sim.compute_pressure(v);
            *r = sim.vertex_rate(v);
        }
        sim.tree = SumTree::from_weights(&rates);
        Ok(sim)
    }

    #[inline]
    fn weight(&self, load: Load) -> f64 {
        if load > 0 {
            self.infection.rate(load)
        } else {
            0.0
        }
    }

    fn compute_pressure(&self, v: Vertex) -> f64 {
        self.g.neighbors(v).iter().map(|&y| self.weight(self.state.get(y))).sum()
    }

    #[inline]
    fn vertex_rate(&self, v: Vertex) -> f64 {
        let n = self.state.get(v);
        if n == 0 {
            self.pressure[v]
        } else {
            self.m.birth(n) + self.m.death(n)
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn state(&self) -> &Configuration {
        &self.state
    }

    pub fn into_state(self) -> Configuration {
        self.state
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    pub fn step<R: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut R) -> Step {
        self.step_recording(horizon, rng, None)
    }

    pub(crate) fn step_recording<R: Rng + ?Sized>(
        &mut self,
        horizon: f64,
        rng: &mut R,
        recorder: Option<&mut SnapshotRecorder<'_>>,
    ) -> Step {
        let total = self.tree.total();
        if total <= 0.0 {
            return Step::Absorbed;
        }
        let dt: f64 = Exp1.sample(rng);
        let t = self.time + dt / total;
        if t > horizon {
            self.time = horizon;
            return Step::Horizon;
        }
        if let Some(r) = recorder {
            r.advance(t, &self.state);
        }
        self.time = t;
        self.events += 1;
        let v = pick(&self.tree, rng);
        let old = self.state.get(v);
        let new = if old == 0 {
            1
        } else {
            let (b, d) = (self.m.birth(old), self.m.death(old));
            if rng.random::<f64>() * (b + d) < b {
                old + 1
            } else {
                old - 1
            }
        };
        self.state.set(v, new);
        if new == 0 {
            self.pressure[v] = self.compute_pressure(v);
        }
        self.tree.set(v, self.vertex_rate(v));
        if self.weight(old) != self.weight(new) {
            for &w in self.g.neighbors(v) {
                if self.state.get(w) == 0 {
                    self.pressure[w] = self.compute_pressure(w);
                    self.tree.set(w, self.pressure[w]);
                }
            }
        }
        Step::Event { time: t, vertex: v }
    }
}

/// Incremental CPLI simulator.
pub struct CpliSimulator<'a> {
    g: &'a Graph,
    m: &'a RateModel,
    lambda: f64,
    state: Configuration,
    /// Number of active (`ξ = 0`) neighbours.
    active_neighbors: Vec<u32>,
    tree: SumTree,
    time: f64,
    events: u64,
}

impl<'a> CpliSimulator<'a> {
    pub fn new(g: &'a Graph, m: &'a RateModel, lambda: f64, init: Configuration) -> Result<Self> {
        init.check_size(g)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(crate::error::Error::invalid(format!("lambda={lambda} must be finite and >= 0")));
        }
        let n = g.vertex_count();
        let active_neighbors: Vec<u32> = (0..n)
            .map(|v| g.neighbors(v).iter().filter(|&&y| init.get(y) == 0).count() as u32)
            .collect();
        let mut sim = CpliSimulator {
            g,
            m,
            lambda,
            state: init,
            active_neighbors,
            tree: SumTree::new(n),
            time: 0.0,
            events: 0,
        };
        let rates: Vec<f64> = (0..n).map(|v| sim.vertex_rate(v)).collect();
        sim.tree = SumTree::from_weights(&rates);
        Ok(sim)
    }

    #[inline]
    fn vertex_rate(&self, v: Vertex) -> f64 {
        let n = self.state.get(v);
        let reset = if n > 0 { self.lambda * self.active_neighbors[v] as f64 } else { 0.0 };
        self.m.birth(n) + self.m.death(n + 1) + reset
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn state(&self) -> &Configuration {
        &self.state
    }

    pub fn into_state(self) -> Configuration {
        self.state
    }

    pub fn step<R: Rng + ?Sized>(&mut self, horizon: f64, rng: &mut R) -> Step {
        self.step_recording(horizon, rng, None)
    }

    pub(crate) fn step_recording<R: Rng + ?Sized>(
        &mut self,
        horizon: f64,
        rng: &mut R,
        recorder: Option<&mut SnapshotRecorder<'_>>,
    ) -> Step {
        let total = self.tree.total();
        if total <= 0.0 {
            return Step::Absorbed;
        }
        let dt: f64 = Exp1.sample(rng);
        let t = self.time + dt / total;
        if t > horizon {
            self.time = horizon;
            return Step::Horizon;
        }
        if let Some(r) = recorder {
            r.advance(t, &self.state);
        }
        self.time = t;
        self.events += 1;
        let v = pick(&self.tree, rng);
        let old = self.state.get(v);
        let down = self.m.birth(old);
        let up = self.m.death(old + 1);
        let u = rng.random::<f64>() * self.tree.get(v);
        let new = if u < down {
            old - 1
        } else if u < down + up {
            old + 1
        } else {
            0
        };
        self.state.set(v, new);
        self.tree.set(v, self.vertex_rate(v));
        if (old == 0) != (new == 0) {
            for &w in self.g.neighbors(v) {
                if new == 0 {
                    self.active_neighbors[w] += 1;
                } else {
                    self.active_neighbors[w] -= 1;
                }
                self.tree.set(w, self.vertex_rate(w));
            }
        }
        Step::Event { time: t, vertex: v }
    }
}

macro_rules! drive {
    ($sim:expr, $opts:expr, $rng:expr, $init:expr) => {{
        let mut recorder = SnapshotRecorder::new(&$opts.snapshots);
        let mut extinction_time = if $sim.tree.total() <= 0.0 { Some(0.0) } else { None };
        while extinction_time.is_none() {
            match $sim.step_recording($opts.horizon, $rng, Some(&mut recorder)) {
                Step::Event { time, .. } => {
                    if $sim.tree.total() <= 0.0 {
                        extinction_time = Some(time);
                    }
                }
                Step::Horizon | Step::Absorbed => break,
            }
        }
        let events = $sim.events;
        let final_config = $sim.into_state();
        let snapshots = recorder.finish($opts.horizon, &final_config);
        Ok(Trajectory {
            initial: $init,
            final_config,
            extinction_time,
            events,
            horizon: $opts.horizon,
            snapshots,
            provenance: None,
        })
    }};
}

/// Simulate CPVL from `init` until absorption or the horizon.
pub fn run_cpvl_gillespie<R: Rng + ?Sized>(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    init: &Configuration,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    opts.validate()?;
    let mut sim = CpvlSimulator::new(g, m, infection, init.clone())?;
    drive!(sim, opts, rng, init.clone())
}

/// Simulate CPLI from `init` until absorption or the horizon.
pub fn run_cpli_gillespie<R: Rng + ?Sized>(
    g: &Graph,
    m: &RateModel,
    lambda: f64,
    init: &Configuration,
    opts: &RunOptions,
    rng: &mut R,
) -> Result<Trajectory> {
    opts.validate()?;
    let mut sim = CpliSimulator::new(g, m, lambda, init.clone())?;
    drive!(sim, opts, rng, init.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphKind;
    use crate::seeding::replica_rng;

    fn cycle(n: usize) -> Graph {
        Graph::build(GraphKind::Cycle { n }).unwrap()
    }

    #[test]
    fn empty_start_is_extinct_at_zero() {
        let g = cycle(5);
        let m = RateModel::power_law(2.0).unwrap();
        let inf = InfectionRate::constant(1.0).unwrap();
        let tr = run_cpvl_gillespie(&g, &m, &inf, &Configuration::zeros(5), &RunOptions::horizon(10.0), &mut replica_rng(1, 0))
            .unwrap();
        assert_eq!(tr.extinction_time, Some(0.0));
        assert_eq!(tr.events, 0);
    }

    #[test]
    fn pressure_and_rates_stay_consistent() {
        let g = Graph::build(GraphKind::Torus { dim: 2, side: 4 }).unwrap();
        let m = RateModel::power_law(1.5).unwrap();
        let inf = InfectionRate::power(0.7, 0.5).unwrap();
        let mut sim = CpvlSimulator::new(&g, &m, &inf, Configuration::point(16, 0, 2)).unwrap();
        let mut rng = replica_rng(2, 0);
        for _ in 0..5000 {
            let before = sim.state().clone();
            match sim.step(50.0, &mut rng) {
                Step::Event { vertex, .. } => {
                    let (a, b) = (before.get(vertex), sim.state().get(vertex));
                    assert!(b == a + 1 || b + 1 == a || (a == 0 && b == 1));
                    let diff = before.loads().iter().zip(sim.state().loads()).filter(|(x, y)| x != y).count();
                    assert_eq!(diff, 1);
                }
                _ => break,
            }
            for v in 0..16 {
                let expect = if sim.state().get(v) == 0 { sim.compute_pressure(v) } else { sim.vertex_rate(v) };
                assert!((sim.tree.get(v) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cpli_active_counts_stay_consistent() {
        let g = cycle(12);
        let m = RateModel::power_law(2.0).unwrap().capped(3).unwrap();
        let mut sim = CpliSimulator::new(&g, &m, 1.3, Configuration::zeros(12)).unwrap();
        let mut rng = replica_rng(3, 0);
        for _ in 0..5000 {
            if !matches!(sim.step(100.0, &mut rng), Step::Event { .. }) {
                break;
            }
            for v in 0..12 {
                let a = g.neighbors(v).iter().filter(|&&y| sim.state().get(y) == 0).count() as u32;
                assert_eq!(sim.active_neighbors[v], a);
                assert!(sim.state().get(v) <= 4);
            }
        }
    }

    #[test]
    fn capped_cpli_top_state_is_absorbing() {
        let g = cycle(6);
        let m = RateModel::power_law(2.0).unwrap().capped(2).unwrap();
        let tr = run_cpli_gillespie(&g, &m, 0.0, &Configuration::uniform(6, 3), &RunOptions::horizon(10.0), &mut replica_rng(4, 0))
            .unwrap();
        assert_eq!(tr.events, 0);
        assert_eq!(tr.extinction_time, Some(0.0));
    }

    #[test]
    fn snapshots_are_recorded_in_order() {
        let g = cycle(8);
        let m = RateModel::power_law(2.0).unwrap();
        let inf = InfectionRate::constant(2.0).unwrap();
        let opts = RunOptions::horizon(5.0).with_snapshots(vec![0.0, 1.0, 2.5, 5.0, 7.0]);
        let tr = run_cpvl_gillespie(&g, &m, &inf, &Configuration::uniform(8, 1), &opts, &mut replica_rng(5, 0)).unwrap();
        let times: Vec<f64> = tr.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 1.0, 2.5, 5.0]);
        assert_eq!(tr.snapshots[0].config, tr.initial);
        if tr.extinction_time.is_none() {
            assert_eq!(tr.snapshots[3].config, tr.final_config);
        }
    }
}
