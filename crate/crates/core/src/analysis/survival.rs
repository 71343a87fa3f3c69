use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{apply_cpvl_event, generate_event_log, Configuration, CpvlSimulator, Envelopes, Step};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::rates::{InfectionRate, RateModel};
use crate::seeding::{domain, stream_rng};
use crate::stats::Proportion;

/// Finite-size stand-in for "survives forever".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "proxy", rename_all = "snake_case")]
pub enum SurvivalProxy {
    AliveAtHorizon,
    /// Some boundary vertex was ever infected, or alive at the horizon.
    ReachedBoundary,
    /// At least `threshold` vertices were ever infected simultaneously, or alive at the horizon.
    PopulationThreshold { threshold: usize },
}

impl SurvivalProxy {
    /// Tori have no boundary, so the boundary proxy is used only on tree balls.
    pub fn default_for(g: &Graph) -> Self {
        if g.boundary_vertices().is_empty() {
            SurvivalProxy::AliveAtHorizon
        } else {
            SurvivalProxy::ReachedBoundary
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SurvivalProxy::AliveAtHorizon => "alive-at-horizon",
            SurvivalProxy::ReachedBoundary => "reached-boundary",
            SurvivalProxy::PopulationThreshold { .. } => "population-threshold",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub lambda: f64,
    pub gamma: f64,
    pub proxy: SurvivalProxy,
    pub estimate: f64,
    pub stderr: f64,
    pub successes: u64,
    pub replicas: u64,
    pub horizon: f64,
    pub graph: String,
}

impl SurvivalEstimate {
    fn new(inf: &InfectionRate, proxy: SurvivalProxy, hits: u64, replicas: u64, horizon: f64, g: &Graph) -> Self {
        let p = Proportion::new(hits, replicas);
        SurvivalEstimate {
            lambda: inf.lambda(),
            gamma: inf.gamma(),
            proxy,
            estimate: p.estimate,
            stderr: p.stderr,
            successes: hits,
            replicas,
            horizon,
            graph: g.kind().to_string(),
        }
    }

    pub fn proportion(&self) -> Proportion {
        Proportion::new(self.successes, self.replicas)
    }
}

/// Early-exit tracker for the proxy event.
struct ProxyWatch<'a> {
    proxy: SurvivalProxy,
    g: &'a Graph,
    infected: usize,
    hit: bool,
}

impl<'a> ProxyWatch<'a> {
    fn new(proxy: SurvivalProxy, g: &'a Graph, init: &Configuration) -> Self {
        let mut w = ProxyWatch { proxy, g, infected: init.infected_count(), hit: false };
        for v in 0..init.len() {
            if init.get(v) > 0 {
                w.check_vertex(v);
            }
        }
        w.check_count();
        w
    }

    fn check_vertex(&mut self, v: usize) {
        if self.proxy == SurvivalProxy::ReachedBoundary && self.g.is_boundary(v) {
            self.hit = true;
        }
    }

    fn check_count(&mut self) {
        if let SurvivalProxy::PopulationThreshold { threshold } = self.proxy {
            if self.infected >= threshold {
                self.hit = true;
            }
        }
    }

    fn update(&mut self, v: usize, old: u32, new: u32) {
        match (old > 0, new > 0) {
            (false, true) => {
                self.infected += 1;
                self.check_vertex(v);
                self.check_count();
            }
            (true, false) => self.infected -= 1,
            _ => {}
        }
    }
}

fn check_init(g: &Graph, init: &Configuration, horizon: f64) -> Result<()> {
    if init.len() != g.vertex_count() {
        return Err(Error::invalid("initial configuration does not match the graph"));
    }
    if init.is_zero() {
        return Err(Error::invalid("survival needs a nonzero initial configuration"));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon {horizon} must be finite and >= 0")));
    }
    Ok(())
}

/// Binomial estimate of the proxy event, replica `r` drawing from stream `(seed, CPVL, r)`.
pub fn estimate_survival(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    init: &Configuration,
    horizon: f64,
    replicas: u64,
    proxy: SurvivalProxy,
    seed: u64,
) -> Result<SurvivalEstimate> {
    check_init(g, init, horizon)?;
    let hits: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| -> Result<u64> {
            let mut rng = stream_rng(seed, domain::CPVL, r);
            let mut sim = CpvlSimulator::new(g, m, infection, init.clone())?;
            let mut watch = ProxyWatch::new(proxy, g, init);
            if watch.hit {
                return Ok(1);
            }
            loop {
                let before = sim.state().infected_count();
                match sim.step(horizon, &mut rng) {
                    Step::Event { vertex, .. } => {
                        let after = sim.state().infected_count();
                        if after != before {
                            let (old, new) = if after > before { (0, 1) } else { (1, 0) };
                            watch.update(vertex, old, new);
                            if watch.hit {
                                return Ok(1);
                            }
                        }
                    }
                    Step::Horizon => return Ok(!sim.state().is_zero() as u64),
                    Step::Absorbed => return Ok(0),
                }
            }
        })
        .sum::<Result<u64>>()?;
    Ok(SurvivalEstimate::new(infection, proxy, hits, replicas, horizon, g))
}

/// Survival for several `(Λ, init)` points on one shared event log per replica.
///
/// Needs a capped model. Under the monotone coupling the estimates are
/// exactly ordered whenever the points are (larger `Λ`, larger init).
pub fn estimate_survival_shared(
    g: &Graph,
    m: &RateModel,
    points: &[(InfectionRate, Configuration)],
    horizon: f64,
    replicas: u64,
    proxy: SurvivalProxy,
    seed: u64,
) -> Result<Vec<SurvivalEstimate>> {
    let top = m
        .max_load()
        .ok_or_else(|| Error::invalid(format!("{m} has unbounded loads; shared logs need a capped model")))?;
    let mut env: Option<Envelopes> = None;
    for (inf, init) in points {
        check_init(g, init, horizon)?;
        if init.max_load() > top {
            return Err(Error::invalid(format!("initial load {} exceeds the cap {top}", init.max_load())));
        }
        let e = Envelopes::for_model(m, inf)?;
        env = Some(env.map_or(e, |a| a.max(&e)));
    }
    let Some(env) = env else { return Ok(Vec::new()) };
    let per_replica: Vec<Vec<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let log = generate_event_log(g, env, horizon, &mut stream_rng(seed, domain::EVENT_LOG, r))?;
            points
                .iter()
                .map(|(inf, init)| {
                    let mut state = init.clone();
                    let mut watch = ProxyWatch::new(proxy, g, init);
                    for ev in log.events() {
                        if watch.hit || state.is_zero() {
                            break;
                        }
                        if let Some(c) = apply_cpvl_event(g, m, inf, &log, &mut state, ev)? {
                            watch.update(c.vertex, c.old, c.new);
                        }
                    }
                    Ok(watch.hit || !state.is_zero())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, (inf, _))| {
            let hits = per_replica.iter().filter(|v| v[i]).count() as u64;
            SurvivalEstimate::new(inf, proxy, hits, replicas, horizon, g)
        })
        .collect())
}
