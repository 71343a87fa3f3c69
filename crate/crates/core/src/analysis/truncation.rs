use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{run_cpvl_gillespie, Configuration, RunOptions};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::rates::{InfectionRate, Load, RateModel};
use crate::seeding::{domain, stream_rng};
use crate::stats::{empirical_pmf, total_variation};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationReport {
    /// Empirical TV distance between the laws of `η_horizon(o)` on the two graphs.
    pub tv: f64,
    /// Expected TV between two independent samples of the pooled law.
    pub noise_floor: f64,
    pub pmf_small: Vec<f64>,
    pub pmf_large: Vec<f64>,
    /// Graph distance from the origin to the nearest place where the two graphs differ.
    pub distance: usize,
    /// `min(1, (D Λ_max t)^d / d!)`: expected number of infection paths that
    /// could carry a difference to the origin; `None` for unbounded `Λ`.
    pub influence_bound: Option<f64>,
    /// `tv <= 3 · noise_floor`.
    pub within_noise: bool,
    pub replicas: u64,
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn origin_loads(g: &Graph, m: &RateModel, inf: &InfectionRate, load: Load, horizon: f64, replicas: u64, seed: u64) -> Result<Vec<usize>> {
    let init = Configuration::point(g.vertex_count(), g.origin(), load);
    let opts = RunOptions::horizon(horizon);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let tr = run_cpvl_gillespie(g, m, inf, &init, &opts, &mut stream_rng(seed, domain::CPVL, r))?;
            Ok(tr.final_config.get(g.origin()) as usize)
        })
        .collect()
}

/// Compare `η_horizon(o)` on a small and a large graph from `load · δ_o`.
///
/// The two graphs have unrelated vertex indexings, so the replicas are
/// independent (distinct seeds) and the distance carries sampling noise,
/// reported as `noise_floor`.
pub fn truncation_diagnostic(
    g_small: &Graph,
    g_large: &Graph,
    m: &RateModel,
    infection: &InfectionRate,
    load: Load,
    horizon: f64,
    replicas: u64,
    seed: u64,
) -> Result<TruncationReport> {
    if g_small.vertex_count() > g_large.vertex_count() || g_small.degree() != g_large.degree() {
        return Err(Error::invalid("the small graph must embed in the large one"));
    }
    if load == 0 || replicas == 0 {
        return Err(Error::invalid("need a positive initial load and replicas > 0"));
    }
    let a = origin_loads(g_small, m, infection, load, horizon, replicas, seed)?;
    let b = origin_loads(g_large, m, infection, load, horizon, replicas, seed.wrapping_add(1))?;
    let support = a.iter().chain(&b).copied().max().unwrap_or(0) + 1;
    let pmf_small = empirical_pmf(&a, support);
    let pmf_large = empirical_pmf(&b, support);
    let tv = total_variation(&pmf_small, &pmf_large);
    let n = replicas as f64;
    // E|p̂ − q̂| ≈ sqrt(2/π) sqrt(2 p (1−p) / n) per cell when p = q
    let noise_floor = 0.5
        * pmf_small
            .iter()
            .zip(&pmf_large)
            .map(|(p, q)| {
                let r = 0.5 * (p + q);
                (2.0 / std::f64::consts::PI).sqrt() * (2.0 * r * (1.0 - r) / n).sqrt()
            })
            .sum::<f64>();
    // on a torus the first difference sits half way around; on tree balls at the boundary
    let distance = if g_small.boundary_vertices().is_empty() {
        g_small.radius() + 1
    } else {
        g_small.radius()
    };
    let influence_bound = match infection {
        InfectionRate::Constant { lambda } => {
            let rate = g_small.degree() as f64 * lambda * horizon;
            if rate == 0.0 {
                Some(0.0)
            } else {
                Some((distance as f64 * rate.ln() - ln_factorial(distance)).exp().min(1.0))
            }
        }
        _ => None,
    };
    Ok(TruncationReport {
        tv,
        noise_floor,
        pmf_small,
        pmf_large,
        distance,
        influence_bound,
        within_noise: tv <= 3.0 * noise_floor,
        replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::GraphKind;

    #[test]
    fn short_horizon_is_within_noise() {
        let small = Graph::build(GraphKind::Torus { dim: 1, side: 40 }).unwrap();
        let large = Graph::build(GraphKind::Torus { dim: 1, side: 80 }).unwrap();
        let m = RateModel::power_law(2.0).unwrap();
        let inf = InfectionRate::constant(1.0).unwrap();
        let r = truncation_diagnostic(&small, &large, &m, &inf, 1, 2.0, 2000, 9).unwrap();
        assert!(r.within_noise, "{r:?}");
        assert!(r.influence_bound.unwrap() < 1e-6);
        assert!((r.pmf_small.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
