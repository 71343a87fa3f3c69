//! Single-site birth-death chain: sampling, occupation series and tails.
//!
//! The chain jumps `n -> n+1` at rate `b(n)` and `n -> n-1` at rate `d(n)`;
//! 0 is absorbing. `τ_rec` is the absorption time from 1.

pub mod series;
pub mod tail;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rates::{InfectionRate, Load, RateModel};

pub use series::{sum_log_series, SeriesValue, SummationMethod};
pub use tail::{classify_tail, estimate_tail, MIN_SAMPLES, TailClassification, TailEstimate, TailModel};

/// A recorded birth-death path; `states[i + 1]` is the state after `times[i]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BDPath {
    pub times: Vec<f64>,
    pub states: Vec<Load>,
    pub absorbed: bool,
    pub tau_rec: Option<f64>,
}

impl BDPath {
    pub fn initial(&self) -> Load {
        self.states[0]
    }

    pub fn final_state(&self) -> Load {
        *self.states.last().expect("path has an initial state")
    }
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

/// Exact next-event simulation up to absorption or `horizon`.
pub fn simulate_bd<R: Rng + ?Sized>(m: &RateModel, x0: Load, horizon: f64, rng: &mut R) -> BDPath {
    let mut path = BDPath { times: Vec::new(), states: vec![x0], absorbed: false, tau_rec: None };
    if x0 == 0 {
        path.absorbed = true;
        path.tau_rec = Some(0.0);
        return path;
    }
    let mut t = 0.0;
    let mut n = x0;
    loop {
        let (b, d) = (m.birth(n), m.death(n));
        let total = b + d;
        if total <= 0.0 {
            break;
        }
        t += exp1(rng) / total;
        if t > horizon {
            break;
        }
        n = if rng.random::<f64>() * total < b { n + 1 } else { n - 1 };
        path.times.push(t);
        path.states.push(n);
        if n == 0 {
            path.absorbed = true;
            path.tau_rec = Some(t);
            break;
        }
    }
    path
}

/// Absorption time from `x0`, or `None` if the chain is still alive at `horizon`.
///
/// Same law as [`simulate_bd`] without recording the path.
pub fn absorption_time<R: Rng + ?Sized>(m: &RateModel, x0: Load, horizon: f64, rng: &mut R) -> Option<f64> {
    let mut t = 0.0;
    let mut n = x0;
    while n > 0 {
        let (b, d) = (m.birth(n), m.death(n));
        let total = b + d;
        if total <= 0.0 {
            return None;
        }
        t += exp1(rng) / total;
        if t > horizon {
            return None;
        }
        if rng.random::<f64>() * total < b {
            n += 1;
        } else {
            n -= 1;
        }
    }
    Some(t)
}

/// Outcome of the infection clock raced against the load of a fresh infection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", content = "time", rename_all = "snake_case")]
pub enum FirstInfection {
    /// The clock rang at this time while the load was positive.
    Ring(f64),
    /// The load hit 0 first, at this time.
    Absorbed(f64),
    /// Neither happened before the horizon.
    Horizon,
}

impl FirstInfection {
    pub fn ring_time(&self) -> Option<f64> {
        match *self {
            FirstInfection::Ring(t) => Some(t),
            _ => None,
        }
    }
}

/// First ring of a clock with intensity `Λ(X_t)` while `X_t > 0`, `X_0 = 1`.
///
/// The clock is switched off after absorption: a recovered vertex infects nobody.
pub fn sample_first_infection_time<R: Rng + ?Sized>(
    m: &RateModel,
    infection: &InfectionRate,
    horizon: f64,
    rng: &mut R,
) -> FirstInfection {
    let threshold = exp1(rng);
    let mut hazard = 0.0;
    let mut t = 0.0;
    let mut n: Load = 1;
    loop {
        let (b, d) = (m.birth(n), m.death(n));
        let total = b + d;
        let hold = if total > 0.0 { exp1(rng) / total } else { f64::INFINITY };
        let lam = infection.rate(n);
        let end = (t + hold).min(horizon);
        if lam > 0.0 && hazard + lam * (end - t) >= threshold {
            return FirstInfection::Ring(t + (threshold - hazard) / lam);
        }
        hazard += lam * (end - t);
        if t + hold > horizon {
            return FirstInfection::Horizon;
        }
        t += hold;
        if rng.random::<f64>() * total < b {
            n += 1;
        } else {
            n -= 1;
        }
        if n == 0 {
            return FirstInfection::Absorbed(t);
        }
    }
}

/// `Σ_{n>=1} (w(n)/d(n)) Π_{j<n} b(j)/d(j)`: expected `∫ w(X_s) ds` before absorption from 1.
pub fn occupation_series(m: &RateModel, weight: impl Fn(Load) -> f64, tol: f64) -> SeriesValue {
    let mut log_prod = 0.0f64;
    sum_log_series(
        |n| {
            let n = Load::try_from(n).unwrap_or(Load::MAX);
            if n > 1 {
                let b = m.birth(n - 1);
                if b <= 0.0 {
                    return None;
                }
                log_prod += b.ln() - m.death(n - 1).ln();
            }
            let d = m.death(n);
            if d <= 0.0 {
                // the chain gets stuck above 0 with positive probability
                return Some(f64::INFINITY);
            }
            Some(log_prod + weight(n).ln() - d.ln())
        },
        tol,
    )
}

/// `E[τ_rec]` from the hitting-time series.
pub fn mean_tau_rec(m: &RateModel, tol: f64) -> SeriesValue {
    occupation_series(m, |_| 1.0, tol)
}

/// `E[∫_0^{τ_rec} Λ(X_s) ds]`.
pub fn expected_integral_lambda(m: &RateModel, infection: &InfectionRate, tol: f64) -> SeriesValue {
    if infection.lambda() == 0.0 {
        return SeriesValue::Converged { value: 0.0, error_estimate: 0.0, terms: 0, method: SummationMethod::Finite };
    }
    match infection.as_constant() {
        Some(lambda) => mean_tau_rec(m, tol).scaled(lambda),
        None => occupation_series(m, |n| infection.rate(n), tol),
    }
}

/// Stationary law `π(n)`, `n >= 1`, of the chain reflected at 1.
///
/// `π(k) ∝ Π_{i=1}^{k-1} b(i)/d(i+1)`.
pub fn reflected_stationary(m: &RateModel, n: Load, tol: f64) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let normalizer = reflected_normalizer(m, tol)?;
    let mut log_w = 0.0;
    for i in 1..n {
        let (b, d) = (m.birth(i), m.death(i + 1));
        if b <= 0.0 {
            return Ok(0.0);
        }
        log_w += b.ln() - d.ln();
    }
    Ok(log_w.exp() / normalizer)
}

/// `1 + Σ_{n>=1} Π_{i=1}^n b(i)/d(i+1)`.
pub fn reflected_normalizer(m: &RateModel, tol: f64) -> Result<f64> {
    let mut log_prod = 0.0f64;
    let s = sum_log_series(
        |n| {
            let n = Load::try_from(n).unwrap_or(Load::MAX);
            let b = m.birth(n);
            if b <= 0.0 {
                return None;
            }
            let d = m.death(n + 1);
            if d <= 0.0 {
                return Some(f64::INFINITY);
            }
            log_prod += b.ln() - d.ln();
            Some(log_prod)
        },
        tol,
    );
    match s {
        SeriesValue::Converged { value, .. } => Ok(1.0 + value),
        SeriesValue::Divergent { .. } => {
            Err(Error::Estimation("reflected chain is not positive recurrent (normalizer diverges)".into()))
        }
        SeriesValue::Inconclusive { .. } => {
            Err(Error::Estimation("reflected-chain normalizer could not be classified".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::replica_rng;
    use crate::stats::mean_stderr;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn zero_start_is_absorbed_immediately() {
        let m = RateModel::power_law(2.0).unwrap();
        let p = simulate_bd(&m, 0, 10.0, &mut replica_rng(1, 0));
        assert!(p.absorbed && p.times.is_empty());
        assert_eq!(p.tau_rec, Some(0.0));
    }

    #[test]
    fn path_steps_are_unit() {
        let m = RateModel::power_law(0.7).unwrap();
        for r in 0..50 {
            let p = simulate_bd(&m, 3, 20.0, &mut replica_rng(2, r));
            assert_eq!(p.states.len(), p.times.len() + 1);
            assert!(p.states.windows(2).all(|w| w[0].abs_diff(w[1]) == 1));
            assert!(p.times.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(p.absorbed, p.final_state() == 0);
        }
    }

    #[test]
    fn linear_chain_dies_out() {
        let m = RateModel::linear(1.0, 2.0).unwrap();
        let alive = (0..10_000).filter(|&r| absorption_time(&m, 1, 50.0, &mut replica_rng(3, r)).is_none()).count();
        assert_eq!(alive, 0);
    }

    #[test]
    fn series_reference_values() {
        let v = mean_tau_rec(&RateModel::power_law(2.0).unwrap(), 1e-10).value().unwrap();
        assert!(rel(v, 1.0) < 1e-8, "{v}");
        let v = mean_tau_rec(&RateModel::linear(1.0, 2.0).unwrap(), 1e-10).value().unwrap();
        assert!(rel(v, std::f64::consts::LN_2) < 1e-8, "{v}");
        let one = InfectionRate::constant(1.0).unwrap();
        let v = expected_integral_lambda(&RateModel::power_law(3.0).unwrap(), &one, 1e-10).value().unwrap();
        assert!(rel(v, 0.5) < 1e-8, "{v}");
        // closed form -(1/α) ln(1 - α/β)
        let v = mean_tau_rec(&RateModel::linear(1.0, 3.0).unwrap(), 1e-10).value().unwrap();
        assert!(rel(v, -(1.0f64 - 1.0 / 3.0).ln()) < 1e-8);
    }

    #[test]
    fn divergent_series_detected() {
        assert!(mean_tau_rec(&RateModel::power_law(0.5).unwrap(), 1e-10).is_divergent());
        assert!(mean_tau_rec(&RateModel::power_law(1.0).unwrap(), 1e-10).is_divergent());
        let lin = InfectionRate::power(1.0, 1.0).unwrap();
        assert!(expected_integral_lambda(&RateModel::power_law(2.0).unwrap(), &lin, 1e-10).is_divergent());
    }

    #[test]
    fn constant_lambda_factors_out() {
        let m = RateModel::power_law(2.0).unwrap();
        let base = mean_tau_rec(&m, 1e-10).value().unwrap();
        for lam in [0.0, 0.4, 1.7] {
            let v = expected_integral_lambda(&m, &InfectionRate::constant(lam).unwrap(), 1e-10).value().unwrap();
            assert!((v - lam * base).abs() <= 1e-10 * lam * base);
        }
    }

    #[test]
    fn capped_series_is_finite_sum() {
        // K = 1: loads {0,1,2}; E[τ] = 1/d(1) + b(1)/(d(1) d(2))
        let m = RateModel::power_law(2.0).unwrap().capped(1).unwrap();
        let s = mean_tau_rec(&m, 1e-10);
        assert!(matches!(s, SeriesValue::Converged { method: SummationMethod::Finite, .. }));
        assert!((s.value().unwrap() - (0.5 + 1.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn reflected_law() {
        let m = RateModel::power_law(2.0).unwrap();
        assert!((reflected_stationary(&m, 1, 1e-12).unwrap() - 0.5).abs() < 1e-9);
        assert!((reflected_stationary(&m, 2, 1e-12).unwrap() - 1.0 / 6.0).abs() < 1e-9);
        let lin = RateModel::linear(1.0, 2.0).unwrap();
        let total: f64 = (1..200).map(|n| reflected_stationary(&lin, n, 1e-12).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-8);
        assert!(reflected_stationary(&RateModel::power_law(0.5).unwrap(), 1, 1e-10).is_err());
    }

    #[test]
    fn first_infection_constant_rate_race() {
        let m = RateModel::power_law(2.0).unwrap();
        let lam = 0.8;
        let inf = InfectionRate::constant(lam).unwrap();
        let n = 40_000u64;
        let t = 1.0;
        let survive: Vec<f64> = (0..n)
            .map(|r| match sample_first_infection_time(&m, &inf, 100.0, &mut replica_rng(5, r)) {
                FirstInfection::Ring(s) if s <= t => 0.0,
                _ => 1.0,
            })
            .collect();
        let reference: Vec<f64> = (0..n)
            .map(|r| {
                let tau = absorption_time(&m, 1, 100.0, &mut replica_rng(6, r)).unwrap_or(100.0);
                (-lam * tau.min(t)).exp()
            })
            .collect();
        let (a, sa) = mean_stderr(&survive);
        let (b, sb) = mean_stderr(&reference);
        assert!((a - b).abs() < 3.0 * (sa * sa + sb * sb).sqrt(), "{a} vs {b}");
    }

    #[test]
    fn zero_infection_always_censored() {
        let m = RateModel::power_law(2.0).unwrap();
        let inf = InfectionRate::constant(0.0).unwrap();
        for r in 0..200 {
            let out = sample_first_infection_time(&m, &inf, 1e6, &mut replica_rng(7, r));
            assert!(matches!(out, FirstInfection::Absorbed(_)));
        }
    }
}
