//! Siegmund duality between CPVL with constant `Λ ≡ λ` and CPLI.
//!
//! Pathwise: on one event log over `[0, t]`, run `η` forward from `η₀` and
//! the dual `ξ` backward from `ξ₀` at time `t`. The indicator
//! `1{η_s ≤ ξ_{t−s}}` must be constant in `s`. At an event time the forward
//! process is taken just after the event and the dual just after it in
//! forward time, i.e. covering only later events.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{
    apply_cpli_event, apply_cpvl_event, run_cpli_gillespie, run_cpvl_gillespie, Change, Configuration, EventLog,
    RunOptions,
};
use crate::error::{Error, Result};
use crate::graphs::{Graph, Vertex};
use crate::rates::{InfectionRate, RateModel};
use crate::seeding::{domain, stream_rng};
use crate::stats::Proportion;

/// Place where the duality indicator changed value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Flip {
    pub time: f64,
    pub vertex: Vertex,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualRunReport {
    pub horizon: f64,
    pub checkpoints: Vec<f64>,
    /// `1{η_s ≤ ξ_{t−s}}` at each checkpoint `s`.
    pub indicators: Vec<bool>,
    pub initial_indicator: bool,
    pub final_indicator: bool,
    /// Number of evaluations along the path (one per log point plus the start).
    pub evaluations: usize,
    /// True iff the indicator never changed.
    pub constant: bool,
    pub flips: Vec<Flip>,
}

fn constant_lambda(infection: &InfectionRate) -> Result<f64> {
    infection
        .as_constant()
        .ok_or_else(|| Error::invalid("duality holds only for constant infection rates Λ ≡ λ"))
}

fn check_bounded(m: &RateModel, g: &Graph, cfgs: [&Configuration; 2]) -> Result<()> {
    let top = m
        .max_load()
        .ok_or_else(|| Error::invalid(format!("{m} has unbounded loads; pathwise duality needs a capped model")))?;
    for c in cfgs {
        if c.len() != g.vertex_count() {
            return Err(Error::invalid("configuration size does not match the graph"));
        }
        if c.max_load() > top {
            return Err(Error::invalid(format!("initial value {} exceeds the cap {top}", c.max_load())));
        }
    }
    Ok(())
}

/// Pathwise duality on a shared log; only points with time `<= t` are used.
pub fn pathwise_duality_check(
    g: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    eta0: &Configuration,
    xi0: &Configuration,
    t: f64,
    log: &EventLog,
    checkpoints: &[f64],
) -> Result<DualRunReport> {
    let lambda = constant_lambda(infection)?;
    check_bounded(m, g, [eta0, xi0])?;
    if !(t >= 0.0 && t <= log.horizon) {
        return Err(Error::invalid(format!("t = {t} must lie in [0, {}]", log.horizon)));
    }
    if checkpoints.windows(2).any(|w| w[0] > w[1]) || checkpoints.iter().any(|&s| !(0.0..=t).contains(&s)) {
        return Err(Error::invalid("checkpoints must be ascending and inside [0, t]"));
    }
    let events = &log.events()[..log.events().partition_point(|e| e.time <= t)];

    // backward pass: dual from ξ₀ at time t down to time 0
    let mut xi = xi0.clone();
    let mut dual_changes: Vec<Option<Change>> = vec![None; events.len()];
    for (i, ev) in events.iter().enumerate().rev() {
        dual_changes[i] = apply_cpli_event(g, m, lambda, log, &mut xi, ev)?;
    }

    let mut eta = eta0.clone();
    let n = g.vertex_count();
    let mut above = (0..n).filter(|&v| eta.get(v) > xi.get(v)).count();
    let initial_indicator = above == 0;
    let mut current = initial_indicator;
    let mut flips = Vec::new();
    let mut indicators = Vec::with_capacity(checkpoints.len());
    let mut next_cp = 0;
    let mut record_checkpoints = |upto: f64, inclusive: bool, value: bool, indicators: &mut Vec<bool>| {
        while next_cp < checkpoints.len() && (checkpoints[next_cp] < upto || (inclusive && checkpoints[next_cp] <= upto)) {
            indicators.push(value);
            next_cp += 1;
        }
    };

    for (i, ev) in events.iter().enumerate() {
        record_checkpoints(ev.time, false, current, &mut indicators);
        let fwd = apply_cpvl_event(g, m, infection, log, &mut eta, ev)?;
        // the dual change at this point leaves the window (s, t] as s passes it
        let dual = dual_changes[i];
        let mut touched = [fwd.map(|c| c.vertex), dual.map(|c| c.vertex)];
        if touched[0] == touched[1] {
            touched[1] = None;
        }
        for &v in touched.iter().flatten() {
            let eta_old = match fwd {
                Some(c) if c.vertex == v => c.old,
                _ => eta.get(v),
            };
            above -= (eta_old > xi.get(v)) as usize;
        }
        if let Some(c) = dual {
            xi.set(c.vertex, c.old);
        }
        for &v in touched.iter().flatten() {
            above += (eta.get(v) > xi.get(v)) as usize;
        }
        let value = above == 0;
        if value != current {
            let vertex = touched.into_iter().flatten().next().unwrap_or(0);
            flips.push(Flip { time: ev.time, vertex });
            current = value;
        }
    }
    record_checkpoints(t, true, current, &mut indicators);

    Ok(DualRunReport {
        horizon: t,
        checkpoints: checkpoints.to_vec(),
        indicators,
        initial_indicator,
        final_indicator: current,
        evaluations: events.len() + 1,
        constant: flips.is_empty(),
        flips,
    })
}

/// Independent Monte Carlo estimates of `P(η_t ≤ ξ₀)` and `P(ξ_t ≥ η₀)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McDuality {
    pub lhs: Proportion,
    pub rhs: Proportion,
    pub difference: f64,
    pub combined_stderr: f64,
}

impl McDuality {
    /// `|lhs − rhs| <= z · combined_stderr`, with a floor for degenerate (0/1) estimates.
    pub fn agrees(&self, z: f64) -> bool {
        let floor = 1.0 / (self.lhs.trials.min(self.rhs.trials).max(1) as f64);
        self.difference.abs() <= z * self.combined_stderr.max(floor)
    }
}

pub fn mc_duality_check(
    g: &Graph,
    m: &RateModel,
    lambda: f64,
    eta0: &Configuration,
    xi0: &Configuration,
    t: f64,
    replicas: u64,
    seed: u64,
) -> Result<McDuality> {
    let infection = InfectionRate::constant(lambda)?;
    let opts = RunOptions::horizon(t);
    let lhs_hits = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let tr = run_cpvl_gillespie(g, m, &infection, eta0, &opts, &mut stream_rng(seed, domain::CPVL, r))?;
            Ok(tr.final_config.le(xi0) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .iter()
        .sum();
    let rhs_hits = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let tr = run_cpli_gillespie(g, m, lambda, xi0, &opts, &mut stream_rng(seed, domain::CPLI, r))?;
            Ok(eta0.le(&tr.final_config) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .iter()
        .sum();
    let lhs = Proportion::new(lhs_hits, replicas);
    let rhs = Proportion::new(rhs_hits, replicas);
    Ok(McDuality {
        difference: lhs.estimate - rhs.estimate,
        combined_stderr: (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt(),
        lhs,
        rhs,
    })
}

/// Finite-horizon proxies for both sides of
/// `P(|η^{δ_x}| dies out) = lim_t P(ξ_t^𝟘(x) > 0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalDuality {
    pub lambda: f64,
    pub horizon: f64,
    /// CPVL from `δ_x` extinct by the horizon.
    pub extinction: Proportion,
    /// CPLI from `𝟘` has `ξ(x) > 0` at the horizon.
    pub dormant: Proportion,
}

pub fn survival_via_duality(
    g: &Graph,
    m: &RateModel,
    lambda: f64,
    x: Vertex,
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<SurvivalDuality> {
    if x >= g.vertex_count() {
        return Err(Error::invalid(format!("vertex {x} is not in the graph")));
    }
    let infection = InfectionRate::constant(lambda)?;
    let opts = RunOptions::horizon(horizon);
    let n = g.vertex_count();
    let start = Configuration::point(n, x, 1);
    let zero = Configuration::zeros(n);
    let extinct: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let tr = run_cpvl_gillespie(g, m, &infection, &start, &opts, &mut stream_rng(seed, domain::CPVL, r))?;
            Ok(tr.extinct() as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .iter()
        .sum();
    let dormant: u64 = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let tr = run_cpli_gillespie(g, m, lambda, &zero, &opts, &mut stream_rng(seed, domain::CPLI, r))?;
            Ok((tr.final_config.get(x) > 0) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .iter()
        .sum();
    Ok(SurvivalDuality {
        lambda,
        horizon,
        extinction: Proportion::new(extinct, replicas),
        dormant: Proportion::new(dormant, replicas),
    })
}

/// `P(ξ_horizon^𝟘(x) > 0)` for several `λ` on shared logs (capped models).
///
/// Every replica reuses one log for all `λ`, so the estimates are exactly
/// non-increasing in `λ`.
pub fn dormancy_shared(
    g: &Graph,
    m: &RateModel,
    lambdas: &[f64],
    x: Vertex,
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<Vec<Proportion>> {
    use crate::engine::{generate_event_log, run_cpli_from_log, Direction, Envelopes};
    let top_lambda = lambdas.iter().copied().fold(0.0, f64::max);
    let env = Envelopes::for_model(m, &InfectionRate::constant(top_lambda)?)?;
    let zero = Configuration::zeros(g.vertex_count());
    let per_replica: Vec<Vec<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let log = generate_event_log(g, env, horizon, &mut stream_rng(seed, domain::EVENT_LOG, r))?;
            lambdas
                .iter()
                .map(|&l| {
                    let tr = run_cpli_from_log(g, m, l, &zero, &log, Direction::Forward, &[])?;
                    Ok(tr.final_config.get(x) > 0)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..lambdas.len())
        .map(|i| Proportion::new(per_replica.iter().filter(|v| v[i]).count() as u64, replicas))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{generate_event_log, Envelopes};
    use crate::graphs::GraphKind;
    use crate::seeding::replica_rng;
    use rand::Rng;

    fn setup() -> (Graph, RateModel, InfectionRate) {
        let g = Graph::build(GraphKind::Cycle { n: 8 }).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(2).unwrap();
        (g, m, InfectionRate::constant(1.0).unwrap())
    }

    #[test]
    fn zero_start_is_always_below() {
        let (g, m, inf) = setup();
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 5.0, &mut replica_rng(4, 0)).unwrap();
        let xi0 = Configuration::uniform(8, 1);
        let rep =
            pathwise_duality_check(&g, &m, &inf, &Configuration::zeros(8), &xi0, 5.0, &log, &[0.0, 2.5, 5.0]).unwrap();
        assert!(rep.constant && rep.initial_indicator);
        assert_eq!(rep.indicators, vec![true; 3]);
    }

    #[test]
    fn random_cases_are_constant() {
        let (g, m, inf) = setup();
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let mut seen = [0usize; 2];
        for r in 0..200 {
            let mut rng = replica_rng(9, r);
            let log = generate_event_log(&g, env, 5.0, &mut rng).unwrap();
            let eta0 = Configuration::from_loads((0..8).map(|_| rng.random_range(0..=3)).collect());
            let xi0 = Configuration::from_loads((0..8).map(|_| rng.random_range(0..=3)).collect());
            let rep = pathwise_duality_check(&g, &m, &inf, &eta0, &xi0, 5.0, &log, &[1.0, 4.0]).unwrap();
            assert!(rep.constant, "replica {r}: {:?}", rep.flips);
            seen[rep.initial_indicator as usize] += 1;
        }
        assert!(seen[0] > 0 && seen[1] > 0 || seen[0] + seen[1] == 200);
    }

    #[test]
    fn rejects_unsupported_inputs() {
        let (g, m, _) = setup();
        let inf = InfectionRate::power(1.0, 1.0).unwrap();
        let env = Envelopes::for_model(&m, &inf).unwrap();
        let log = generate_event_log(&g, env, 1.0, &mut replica_rng(1, 0)).unwrap();
        let z = Configuration::zeros(8);
        assert!(pathwise_duality_check(&g, &m, &inf, &z, &z, 1.0, &log, &[]).is_err());
        let c = InfectionRate::constant(1.0).unwrap();
        assert!(pathwise_duality_check(&g, &m, &c, &z, &z, 2.0, &log, &[]).is_err());
        let free = RateModel::power_law(2.0).unwrap();
        assert!(pathwise_duality_check(&g, &free, &c, &z, &z, 1.0, &log, &[]).is_err());
    }

    #[test]
    fn monte_carlo_sides_agree() {
        let g = Graph::build(GraphKind::EdgePair).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(1).unwrap();
        let mc = mc_duality_check(
            &g,
            &m,
            1.0,
            &Configuration::point(2, 0, 1),
            &Configuration::from_loads(vec![1, 0]),
            1.0,
            4000,
            11,
        )
        .unwrap();
        assert!(mc.agrees(4.0), "{mc:?}");
    }

    #[test]
    fn shared_dormancy_is_monotone() {
        let g = Graph::build(GraphKind::Cycle { n: 6 }).unwrap();
        let m = RateModel::power_law(2.0).unwrap().capped(2).unwrap();
        let p = dormancy_shared(&g, &m, &[0.0, 0.5, 1.0, 2.0], 0, 5.0, 200, 3).unwrap();
        assert!(p.windows(2).all(|w| w[0].estimate >= w[1].estimate));
    }
}
