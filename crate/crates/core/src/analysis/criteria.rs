use serde::Serialize;

use super::survival::{estimate_survival, SurvivalEstimate, SurvivalProxy};
use crate::bd::{expected_integral_lambda, SeriesValue};
use crate::engine::Configuration;
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::rates::{BirthDeathFamily, InfectionRate, RateModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtinctionVerdict {
    GuaranteedExtinction,
    NoConclusion,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtinctionCriterion {
    pub degree: usize,
    /// `D · E[∫_0^{τ_rec} Λ(X_s) ds]`, when the series converged.
    pub value: Option<f64>,
    pub verdict: ExtinctionVerdict,
    pub divergent: bool,
    pub series: SeriesValue,
}

/// One-sided sufficient condition: value `<= 1` guarantees extinction.
pub fn extinction_criterion(degree: usize, m: &RateModel, infection: &InfectionRate) -> Result<ExtinctionCriterion> {
    if degree == 0 {
        return Err(Error::invalid("degree must be >= 1"));
    }
    let series = expected_integral_lambda(m, infection, 1e-10);
    let value = series.value().map(|v| degree as f64 * v);
    let verdict = match value {
        Some(v) if v <= 1.0 => ExtinctionVerdict::GuaranteedExtinction,
        _ => ExtinctionVerdict::NoConclusion,
    };
    Ok(ExtinctionCriterion { degree, value, verdict, divergent: series.is_divergent(), series })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub family: String,
    pub gamma: f64,
    /// `Some(true)` converges, `Some(false)` diverges, `None` undecided.
    pub converges: Option<bool>,
    /// Analytic prediction: `γ < a − 1` for power laws, always for linear families.
    pub predicted: Option<bool>,
    /// Convergence is sufficient for `λ_c(γ) > 0`.
    pub lambda_c_positive: bool,
    pub series: SeriesValue,
}

impl RegimeVerdict {
    pub fn agrees(&self) -> bool {
        self.predicted.is_some() && self.converges == self.predicted
    }
}

/// Convergence of `E[∫ X_s^γ ds]` for the given family.
pub fn corollary_regimes(m: &RateModel, gamma: f64) -> Result<RegimeVerdict> {
    let inf = InfectionRate::power(1.0, gamma)?;
    let series = expected_integral_lambda(m, &inf, 1e-8);
    let converges = match &series {
        SeriesValue::Converged { .. } => Some(true),
        SeriesValue::Divergent { .. } => Some(false),
        SeriesValue::Inconclusive { .. } => None,
    };
    let predicted = match (m.family(), m.cap()) {
        (_, Some(_)) => Some(true),
        (BirthDeathFamily::PowerLaw { a }, None) => Some(gamma < a - 1.0),
        (BirthDeathFamily::Linear { alpha, beta }, None) => Some(alpha < beta),
        (BirthDeathFamily::Table { .. }, None) => None,
    };
    Ok(RegimeVerdict {
        family: m.tag(),
        gamma,
        converges,
        predicted,
        lambda_c_positive: converges == Some(true),
        series,
    })
}

/// Knobs of the bisection for `λ_c`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaCSearch {
    pub gamma: f64,
    pub horizon: f64,
    pub replicas: u64,
    /// Replica count may be doubled up to this budget near the threshold.
    pub max_replicas: u64,
    pub threshold: f64,
    pub bracket: (f64, f64),
    pub resolution: f64,
    pub proxy: SurvivalProxy,
    pub seed: u64,
}

impl LambdaCSearch {
    pub fn new(horizon: f64, replicas: u64, seed: u64) -> Self {
        LambdaCSearch {
            gamma: 0.0,
            horizon,
            replicas,
            max_replicas: replicas * 4,
            threshold: 0.5,
            bracket: (0.5, 4.0),
            resolution: 0.05,
            proxy: SurvivalProxy::AliveAtHorizon,
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStatus {
    Separated,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub estimate: SurvivalEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaCReport {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
    /// Survival stderr mapped through the local slope of the proxy curve.
    pub lambda_stderr: f64,
    pub status: SearchStatus,
    pub evaluations: Vec<SweepPoint>,
    pub finite_size_caveat: &'static str,
}

impl LambdaCReport {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lambda_lo + self.lambda_hi)
    }
}

enum Side {
    Below,
    Above,
    Unresolved,
}

/// Bisection of the survival proxy around `threshold` from `δ_o`.
///
/// Every evaluation reuses the same replica streams (common random numbers).
pub fn estimate_lambda_c(g: &Graph, m: &RateModel, search: &LambdaCSearch) -> Result<LambdaCReport> {
    let (mut lo, mut hi) = search.bracket;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid(format!("bracket ({lo}, {hi}) must satisfy 0 <= lo < hi")));
    }
    if !(search.threshold > 0.0 && search.threshold < 1.0) || !(search.resolution > 0.0) || search.replicas == 0 {
        return Err(Error::invalid("threshold must lie in (0,1), resolution > 0, replicas > 0"));
    }
    let init = Configuration::point(g.vertex_count(), g.origin(), 1);
    let mut evaluations = Vec::new();
    let mut eval = |lambda: f64| -> Result<(Side, SurvivalEstimate)> {
        let inf = InfectionRate::power(lambda, search.gamma)?;
        let mut replicas = search.replicas;
        loop {
            let est = estimate_survival(g, m, &inf, &init, search.horizon, replicas, search.proxy, search.seed)?;
            evaluations.push(SweepPoint { lambda, estimate: est.clone() });
            let margin = 2.0 * est.stderr;
            let side = if est.estimate + margin < search.threshold {
                Side::Below
            } else if est.estimate - margin > search.threshold {
                Side::Above
            } else {
                Side::Unresolved
            };
            if !matches!(side, Side::Unresolved) || replicas * 2 > search.max_replicas {
                return Ok((side, est));
            }
            replicas *= 2;
        }
    };
    let mut status = SearchStatus::Separated;

    let (mut s_lo, mut e_lo) = eval(lo)?;
    let mut expansions = 0;
    while !matches!(s_lo, Side::Below) {
        if lo < 1e-3 || expansions >= 8 {
            status = SearchStatus::Inconclusive;
            break;
        }
        hi = lo;
        lo *= 0.5;
        expansions += 1;
        (s_lo, e_lo) = eval(lo)?;
    }
    let (mut s_hi, mut e_hi) = eval(hi)?;
    expansions = 0;
    while !matches!(s_hi, Side::Above) {
        if expansions >= 6 {
            status = SearchStatus::Inconclusive;
            break;
        }
        lo = hi;
        e_lo = e_hi.clone();
        hi *= 2.0;
        expansions += 1;
        (s_hi, e_hi) = eval(hi)?;
    }

    while status == SearchStatus::Separated && hi - lo > search.resolution {
        let mid = 0.5 * (lo + hi);
        let (side, est) = eval(mid)?;
        match side {
            Side::Below => (lo, e_lo) = (mid, est),
            Side::Above => (hi, e_hi) = (mid, est),
            Side::Unresolved => {
                status = SearchStatus::Inconclusive;
            }
        }
    }

    let slope = (e_hi.estimate - e_lo.estimate) / (hi - lo);
    let se = e_hi.stderr.max(e_lo.stderr);
    let lambda_stderr = if slope > 0.0 { (se / slope).max(0.0) } else { f64::INFINITY };
    Ok(LambdaCReport {
        lambda_lo: lo,
        lambda_hi: hi,
        p_lo: e_lo.estimate,
        p_hi: e_hi.estimate,
        lambda_stderr,
        status,
        evaluations,
        finite_size_caveat: "finite-size, finite-horizon proxy; not the infinite-volume critical value",
    })
}
