//! Deterministic replay of CPVL and CPLI from a shared [`EventLog`].
//!
//! CPVL reads a point `(t, α)` as follows: on the birth stream of `x`,
//! `η(x) += 1` iff `α < b(η(x))`; on the death stream, `η(x) -= 1` iff
//! `α < d(η(x))`; on the infection stream of `(y, x)`, `η(x) ∨= 1` iff
//! `η(y) > 0` and `α < Λ(η(y))`.
//!
//! CPLI reads the same points with roles swapped: the birth stream of `x`
//! lowers `ξ(x)` iff `α < b(ξ(x))`, the death stream raises it iff
//! `α < d(ξ(x) + 1)`, and the infection stream of `(y, x)` resets `ξ(y)` to
//! 0 iff `ξ(x) = 0` and `α < λ`. Run backwards in time this is the dual of
//! the forward CPVL reading.

use serde::Serialize;

use super::log::{EventLog, LogEvent, StreamKind};
use super::{Configuration, SnapshotRecorder, Trajectory};
use crate::error::{Error, Result};
use crate::graphs::{Graph, Vertex};
use crate::rates::{InfectionRate, Load, RateModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    /// Points are read from the horizon down to 0; trajectory time is `horizon - t`.
    Reverse,
}

/// A single-vertex state change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Change {
    pub vertex: Vertex,
    pub old: Load,
    pub new: Load,
}

fn envelope_check(ev: &LogEvent, rate: f64, log: &EventLog) -> Result<()> {
    let envelope = log.envelopes.get(ev.kind);
    if rate > envelope {
        return Err(Error::Envelope { stream: ev.kind.name(), index: ev.index as usize, rate, envelope });
    }
    Ok(())
}

/// Apply one log point to a CPVL state.
pub fn apply_cpvl_event(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    log: &EventLog,
    state: &mut Configuration,
    ev: &LogEvent,
) -> Result<Option<Change>> {
    let (x, new) = match ev.kind {
        StreamKind::Birth => {
            let x = ev.index as usize;
            let n = state.get(x);
            let rate = m.birth(n);
            envelope_check(ev, rate, log)?;
            (x, if ev.mark < rate { n + 1 } else { n })
        }
        StreamKind::Death => {
            let x = ev.index as usize;
            let n = state.get(x);
            let rate = m.death(n);
            envelope_check(ev, rate, log)?;
            (x, if ev.mark < rate { n - 1 } else { n })
        }
        StreamKind::Infection => {
            let (y, x) = g.edge(ev.index as usize);
            let src = state.get(y);
            if src == 0 {
                return Ok(None);
            }
            let rate = infection.rate(src);
            envelope_check(ev, rate, log)?;
            let n = state.get(x);
            (x, if ev.mark < rate { n.max(1) } else { n })
        }
    };
    let old = state.get(x);
    if new == old {
        return Ok(None);
    }
    state.set(x, new);
    Ok(Some(Change { vertex: x, old, new }))
}

/// Apply one log point to a CPLI state (role-swapped reading).
pub fn apply_cpli_event(
    g: &Graph,
    m: &RateModel,
    lambda: f64,
    log: &EventLog,
    state: &mut Configuration,
    ev: &LogEvent,
) -> Result<Option<Change>> {
    let (v, new) = match ev.kind {
        StreamKind::Birth => {
            let x = ev.index as usize;
            let n = state.get(x);
            let rate = m.birth(n);
            envelope_check(ev, rate, log)?;
            (x, if ev.mark < rate { n - 1 } else { n })
        }
        StreamKind::Death => {
            let x = ev.index as usize;
            let n = state.get(x);
            let rate = m.death(n + 1);
            envelope_check(ev, rate, log)?;
            (x, if ev.mark < rate { n + 1 } else { n })
        }
        StreamKind::Infection => {
            let (y, x) = g.edge(ev.index as usize);
            if state.get(x) != 0 || state.get(y) == 0 {
                return Ok(None);
            }
            envelope_check(ev, lambda, log)?;
            (y, if ev.mark < lambda { 0 } else { state.get(y) })
        }
    };
    let old = state.get(v);
    if new == old {
        return Ok(None);
    }
    state.set(v, new);
    Ok(Some(Change { vertex: v, old, new }))
}

fn check_log_fits(g: &Graph, log: &EventLog) -> Result<()> {
    if log.vertex_count != g.vertex_count() || log.edge_count != g.directed_edge_count() {
        return Err(Error::invalid("event log was generated for a different graph"));
    }
    Ok(())
}

/// Every reachable rate must lie below its stream envelope.
fn check_model_envelopes(m: &RateModel, infection: Option<&InfectionRate>, lambda: Option<f64>, log: &EventLog) -> Result<Load> {
    let top = m
        .max_load()
        .ok_or_else(|| Error::invalid(format!("{m} has unbounded loads; log replay needs a capped model")))?;
    let env = &log.envelopes;
    for n in 0..=top {
        if m.birth(n) > env.birth {
            return Err(Error::Envelope { stream: "birth", index: n as usize, rate: m.birth(n), envelope: env.birth });
        }
        if m.death(n) > env.death {
            return Err(Error::Envelope { stream: "death", index: n as usize, rate: m.death(n), envelope: env.death });
        }
    }
    if let Some(inf) = infection {
        let rate = inf.max_rate(top);
        if rate > env.infection {
            return Err(Error::Envelope { stream: "infection", index: top as usize, rate, envelope: env.infection });
        }
    }
    if let Some(lambda) = lambda {
        if lambda > env.infection {
            return Err(Error::Envelope { stream: "infection", index: 0, rate: lambda, envelope: env.infection });
        }
    }
    Ok(top)
}

fn check_init(init: &Configuration, g: &Graph, top: Load) -> Result<()> {
    init.check_size(g)?;
    if let Some(v) = init.loads().iter().position(|&l| l > top) {
        return Err(Error::invalid(format!(
            "initial value {} at vertex {v} exceeds the reachable maximum {top}",
            init.get(v)
        )));
    }
    Ok(())
}

fn replay(
    init: &Configuration,
    log: &EventLog,
    direction: Direction,
    snapshots: &[f64],
    mut apply: impl FnMut(&mut Configuration, &LogEvent) -> Result<Option<Change>>,
    mut absorbed: impl FnMut(&Configuration, Option<&Change>) -> bool,
) -> Result<Trajectory> {
    let mut state = init.clone();
    let mut recorder = SnapshotRecorder::new(snapshots);
    let mut extinction_time = absorbed(&state, None).then_some(0.0);
    let mut events = 0;
    let horizon = log.horizon;
    let points: Box<dyn Iterator<Item = &LogEvent>> = match direction {
        Direction::Forward => Box::new(log.events().iter()),
        Direction::Reverse => Box::new(log.events().iter().rev()),
    };
    if extinction_time.is_none() {
        for ev in points {
            let t = match direction {
                Direction::Forward => ev.time,
                Direction::Reverse => horizon - ev.time,
            };
            recorder.advance(t, &state);
            if let Some(c) = apply(&mut state, ev)? {
                events += 1;
                if absorbed(&state, Some(&c)) {
                    extinction_time = Some(t);
                    break;
                }
            }
        }
    }
    let snapshots = recorder.finish(horizon, &state);
    Ok(Trajectory {
        initial: init.clone(),
        final_config: state,
        extinction_time,
        events,
        horizon,
        snapshots,
        provenance: None,
    })
}

/// Replay CPVL over the whole log.
pub fn run_cpvl_from_log(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    init: &Configuration,
    log: &EventLog,
    snapshots: &[f64],
) -> Result<Trajectory> {
    check_log_fits(g, log)?;
    let top = check_model_envelopes(m, Some(infection), None, log)?;
    check_init(init, g, top)?;
    replay(
        init,
        log,
        Direction::Forward,
        snapshots,
        |s, ev| apply_cpvl_event(g, m, infection, log, s, ev),
        |s, _| s.is_zero(),
    )
}

/// Replay CPLI over the whole log in the given direction.
pub fn run_cpli_from_log(
    g: &Graph,
    m: &RateModel,
    lambda: f64,
    init: &Configuration,
    log: &EventLog,
    direction: Direction,
    snapshots: &[f64],
) -> Result<Trajectory> {
    check_log_fits(g, log)?;
    let top = check_model_envelopes(m, None, Some(lambda), log)?;
    check_init(init, g, top)?;
    // absorbed iff every vertex is frozen: b(ξ) = 0 and d(ξ+1) = 0 (then no vertex is active)
    let frozen = |n: Load| m.birth(n) == 0.0 && m.death(n + 1) == 0.0;
    let mut frozen_count = init.loads().iter().filter(|&&n| frozen(n)).count();
    let n = g.vertex_count();
    replay(
        init,
        log,
        direction,
        snapshots,
        |s, ev| apply_cpli_event(g, m, lambda, log, s, ev),
        |_, change| {
            if let Some(c) = change {
                frozen_count = frozen_count + frozen(c.new) as usize - frozen(c.old) as usize;
            }
            frozen_count == n
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoupledRun {
    pub lo: Trajectory,
    pub hi: Trajectory,
    /// Number of (event, vertex) pairs at which `lo > hi`.
    pub ordering_violations: u64,
}

/// Replay two CPVL models from one log and count violations of `lo <= hi`.
///
/// Requires `Λ_hi >= Λ_lo`, `b_hi >= b_lo`, `d_hi <= d_lo` on reachable loads
/// and `init_lo <= init_hi`.
pub fn run_coupled_pair(
    g: &Graph,
    lo: (&RateModel, &InfectionRate),
    hi: (&RateModel, &InfectionRate),
    init_lo: &Configuration,
    init_hi: &Configuration,
    log: &EventLog,
) -> Result<CoupledRun> {
    check_log_fits(g, log)?;
    let top_lo = check_model_envelopes(lo.0, Some(lo.1), None, log)?;
    let top_hi = check_model_envelopes(hi.0, Some(hi.1), None, log)?;
    check_init(init_lo, g, top_lo)?;
    check_init(init_hi, g, top_hi)?;
    for n in 0..=top_lo.max(top_hi) + 1 {
        if hi.0.birth(n) < lo.0.birth(n) {
            return Err(Error::Ordering(format!("b_hi({n}) < b_lo({n})")));
        }
        if hi.0.death(n) > lo.0.death(n) {
            return Err(Error::Ordering(format!("d_hi({n}) > d_lo({n})")));
        }
        if n > 0 && hi.1.rate(n) < lo.1.rate(n) {
            return Err(Error::Ordering(format!("Λ_hi({n}) < Λ_lo({n})")));
        }
    }
    if !init_lo.le(init_hi) {
        return Err(Error::Ordering("initial configurations are not ordered".into()));
    }
    let mut a = init_lo.clone();
    let mut b = init_hi.clone();
    let (mut ea, mut eb) = (0u64, 0u64);
    let (mut ta, mut tb) = (None, None);
    let mut violations = 0;
    for ev in log.events() {
        let ca = apply_cpvl_event(g, lo.0, lo.1, log, &mut a, ev)?;
        let cb = apply_cpvl_event(g, hi.0, hi.1, log, &mut b, ev)?;
        if ca.is_some() {
            ea += 1;
            if ta.is_none() && a.is_zero() {
                ta = Some(ev.time);
            }
        }
        if cb.is_some() {
            eb += 1;
            if tb.is_none() && b.is_zero() {
                tb = Some(ev.time);
            }
        }
        for c in [ca, cb].into_iter().flatten() {
            if a.get(c.vertex) > b.get(c.vertex) {
                violations += 1;
                break;
            }
        }
    }
    let traj = |init: &Configuration, fin: Configuration, ext: Option<f64>, events| Trajectory {
        initial: init.clone(),
        extinction_time: if init.is_zero() { Some(0.0) } else { ext },
        final_config: fin,
        events,
        horizon: log.horizon,
        snapshots: Vec::new(),
        provenance: None,
    };
    Ok(CoupledRun { lo: traj(init_lo, a, ta, ea), hi: traj(init_hi, b, tb, eb), ordering_violations: violations })
}

/// Largest `|η^{η₁∨η₂}(v) − (η^{η₁} ∨ η^{η₂})(v)|` over all times and vertices.
pub fn check_additivity(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    eta1: &Configuration,
    eta2: &Configuration,
    log: &EventLog,
) -> Result<Load> {
    check_log_fits(g, log)?;
    let top = check_model_envelopes(m, Some(infection), None, log)?;
    check_init(eta1, g, top)?;
    check_init(eta2, g, top)?;
    let mut s1 = eta1.clone();
    let mut s2 = eta2.clone();
    let mut s12 = eta1.join(eta2);
    let dev = |a: &Configuration, b: &Configuration, c: &Configuration, v: Vertex| c.get(v).abs_diff(a.get(v).max(b.get(v)));
    let mut worst = 0;
    for ev in log.events() {
        let c1 = apply_cpvl_event(g, m, infection, log, &mut s1, ev)?;
        let c2 = apply_cpvl_event(g, m, infection, log, &mut s2, ev)?;
        let c12 = apply_cpvl_event(g, m, infection, log, &mut s12, ev)?;
        for c in [c1, c2, c12].into_iter().flatten() {
            worst = worst.max(dev(&s1, &s2, &s12, c.vertex));
        }
    }
    Ok(worst)
}

/// Replay CPVL next to independent birth-death chains `Z` that ignore
/// infections and cannot die below 1, started from `init ∨ 1`. Returns the
/// number of events after which `η(x) > Z(x)` at the touched vertex.
pub fn check_domination(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    init: &Configuration,
    log: &EventLog,
) -> Result<u64> {
    check_log_fits(g, log)?;
    let top = check_model_envelopes(m, Some(infection), None, log)?;
    check_init(init, g, top)?;
    let mut eta = init.clone();
    let mut z: Vec<Load> = init.loads().iter().map(|&l| l.max(1)).collect();
    let mut violations = 0;
    for ev in log.events() {
        apply_cpvl_event(g, m, infection, log, &mut eta, ev)?;
        let x = match ev.kind {
            StreamKind::Birth => {
                let x = ev.index as usize;
                if ev.mark < m.birth(z[x]) {
                    z[x] += 1;
                }
                x
            }
            StreamKind::Death => {
                let x = ev.index as usize;
                if z[x] >= 2 && ev.mark < m.death(z[x]) {
                    z[x] -= 1;
                }
                x
            }
            StreamKind::Infection => g.edge(ev.index as usize).1,
        };
        if eta.get(x) > z[x] {
            violations += 1;
        }
    }
    Ok(violations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::log::{generate_event_log, Envelopes};
    use crate::graphs::GraphKind;
    use crate::seeding::replica_rng;

    fn setup(n: usize, k: Load, lambda: f64) -> (Graph, RateModel, InfectionRate) {
        let g = Graph::build(GraphKind::Cycle { n }).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(k).unwrap();
        (g, m, InfectionRate::constant(lambda).unwrap())
    }

    #[test]
    fn replay_is_a_pure_function_of_the_log() {
        let (g, m, inf) = setup(6, 2, 1.0);
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 5.0, &mut replica_rng(1, 0)).unwrap();
        let init = Configuration::point(6, 0, 2);
        let a = run_cpvl_from_log(&g, &m, &inf, &init, &log, &[1.0, 2.0]).unwrap();
        let b = run_cpvl_from_log(&g, &m, &inf, &init, &log, &[1.0, 2.0]).unwrap();
        assert_eq!(a, b);
        assert!(a.final_config.max_load() <= 3);
    }

    #[test]
    fn envelope_violation_names_the_stream() {
        let (g, m, inf) = setup(4, 2, 1.0);
        let env = Envelopes { birth: 1.0, death: 10.0, infection: 10.0 };
        let log = generate_event_log(&g, env, 1.0, &mut replica_rng(1, 0)).unwrap();
        match run_cpvl_from_log(&g, &m, &inf, &Configuration::zeros(4), &log, &[]) {
            Err(Error::Envelope { stream, .. }) => assert_eq!(stream, "birth"),
            other => panic!("{other:?}"),
        }
        let unbounded = RateModel::power_law(2.0).unwrap();
        assert!(run_cpvl_from_log(&g, &unbounded, &inf, &Configuration::zeros(4), &log, &[]).is_err());
    }

    #[test]
    fn reverse_replay_of_empty_log_is_identity() {
        let (g, m, _) = setup(5, 2, 1.0);
        let env = Envelopes { birth: 2.0, death: 4.0, infection: 1.0 };
        let log = generate_event_log(&g, env, 0.0, &mut replica_rng(1, 0)).unwrap();
        let init = Configuration::from_loads(vec![0, 1, 3, 2, 0]);
        let tr = run_cpli_from_log(&g, &m, 1.0, &init, &log, Direction::Reverse, &[]).unwrap();
        assert_eq!(tr.final_config, init);
    }

    #[test]
    fn swapped_roles_read_the_same_threshold() {
        let (g, m, inf) = setup(3, 3, 1.0);
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 1.0, &mut replica_rng(1, 0)).unwrap();
        for n in 0..=3 {
            for mark in [0.1, 2.9, 3.5, 4.9] {
                let ev = LogEvent { time: 0.5, mark, kind: StreamKind::Death, index: 0 };
                let mut eta = Configuration::point(3, 0, n + 1);
                let mut xi = Configuration::point(3, 0, n);
                let a = apply_cpvl_event(&g, &m, &inf, &log, &mut eta, &ev).unwrap().is_some();
                let b = apply_cpli_event(&g, &m, 1.0, &log, &mut xi, &ev).unwrap().is_some();
                assert_eq!(a, b, "n={n} mark={mark}");
            }
        }
    }

    #[test]
    fn identical_models_have_identical_paths() {
        let (g, m, inf) = setup(8, 3, 1.0);
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 10.0, &mut replica_rng(2, 0)).unwrap();
        let init = Configuration::point(8, 0, 1);
        let run = run_coupled_pair(&g, (&m, &inf), (&m, &inf), &init, &init, &log).unwrap();
        assert_eq!(run.lo, run.hi);
        assert_eq!(run.ordering_violations, 0);
    }

    #[test]
    fn coupling_preconditions_are_enforced() {
        let (g, m, inf) = setup(4, 2, 1.0);
        let weak = InfectionRate::constant(0.5).unwrap();
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 1.0, &mut replica_rng(1, 0)).unwrap();
        let z = Configuration::zeros(4);
        assert!(matches!(run_coupled_pair(&g, (&m, &inf), (&m, &weak), &z, &z, &log), Err(Error::Ordering(_))));
        let one = Configuration::point(4, 1, 1);
        assert!(matches!(run_coupled_pair(&g, (&m, &inf), (&m, &inf), &one, &z, &log), Err(Error::Ordering(_))));
    }

    #[test]
    fn additivity_trivial_cases() {
        let (g, m, inf) = setup(10, 3, 1.0);
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 5.0, &mut replica_rng(3, 0)).unwrap();
        let eta = Configuration::from_loads(vec![1, 0, 2, 0, 0, 4, 0, 0, 1, 0]);
        assert_eq!(check_additivity(&g, &m, &inf, &eta, &Configuration::zeros(10), &log).unwrap(), 0);
        assert_eq!(check_additivity(&g, &m, &inf, &eta, &eta, &log).unwrap(), 0);
    }

    #[test]
    fn domination_by_independent_chains() {
        let (g, m, inf) = setup(10, 3, 2.0);
        let env = Envelopes::for_model(&m, &inf).unwrap();
        for r in 0..50 {
            let log = generate_event_log(&g, env, 5.0, &mut replica_rng(4, r)).unwrap();
            assert_eq!(check_domination(&g, &m, &inf, &Configuration::point(10, 0, 2), &log).unwrap(), 0);
        }
    }
}
