//! Tail estimation for right-censored positive samples.
//!
//! Samples at or beyond the censoring horizon count as censored. The
//! power-law exponent uses a censored Pareto maximum-likelihood (Hill-type)
//! estimator over the top `k` uncensored order statistics; the exponential
//! rate is the slope of the log empirical survival function.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats::{linear_fit, LinearFit};

pub const MIN_SAMPLES: usize = 1000;
const GRID_POINTS: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TailModel {
    PowerLaw,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub model: TailModel,
    /// `a` in `t^{-a}` or `B` in `exp(-B t)`.
    pub exponent: f64,
    pub stderr: f64,
    pub samples: usize,
    pub censored: usize,
    pub fit_range: (f64, f64),
    /// Power mode only: exponent from the log-log survival regression.
    pub regression_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailClassification {
    pub preferred: TailModel,
    /// Residual sums of squares of `ln S` on a common grid.
    pub power_rss: f64,
    pub exponential_rss: f64,
    pub power: TailEstimate,
    pub exponential: TailEstimate,
}

struct Prepared {
    /// Uncensored values, ascending.
    exact: Vec<f64>,
    censored: usize,
    horizon: f64,
    n: usize,
}

fn prepare(samples: &[f64], horizon: f64) -> Result<Prepared> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::Estimation(format!(
            "tail estimation needs at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(x) = samples.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Estimation(format!("sample {x} is not a non-negative time")));
    }
    let mut exact: Vec<f64> = samples.iter().copied().filter(|&x| x < horizon).collect();
    let censored = samples.len() - exact.len();
    if exact.is_empty() {
        return Err(Error::Estimation("all samples are censored".into()));
    }
    exact.sort_by(f64::total_cmp);
    if censored == 0 && exact[0] == exact[exact.len() - 1] {
        return Err(Error::Estimation("degenerate sample: all values are equal".into()));
    }
    Ok(Prepared { exact, censored, horizon, n: samples.len() })
}

impl Prepared {
    /// Empirical survival `P(X > t)`.
    fn survival(&self, t: f64) -> f64 {
        let above_exact = self.exact.len() - self.exact.partition_point(|&x| x <= t);
        let above = above_exact + if t < self.horizon { self.censored } else { 0 };
        above as f64 / self.n as f64
    }

    fn median(&self) -> f64 {
        let mid = self.n / 2;
        if mid < self.exact.len() {
            self.exact[mid]
        } else {
            self.horizon
        }
    }

    /// Largest time below the horizon with at least `⌊√N⌋` samples above it,
    /// so that `ln S` is not dominated by counting noise at the far end.
    fn upper_cutoff(&self) -> f64 {
        let needed = ((self.n as f64).sqrt() as usize).saturating_sub(self.censored);
        if needed == 0 {
            return self.exact[self.exact.len() - 1];
        }
        let idx = self.exact.len().saturating_sub(needed + 1);
        self.exact[idx]
    }

    fn grid(&self, log_spaced: bool) -> Vec<f64> {
        let lo = self.median().max(f64::MIN_POSITIVE);
        let hi = self.upper_cutoff();
        if hi <= lo {
            return Vec::new();
        }
        (0..GRID_POINTS)
            .map(|i| {
                let f = i as f64 / (GRID_POINTS - 1) as f64;
                if log_spaced {
                    (lo.ln() + f * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + f * (hi - lo)
                }
            })
            .collect()
    }

    fn log_survival_fit(&self, grid: &[f64], log_x: bool) -> Option<LinearFit> {
        let pts: Vec<(f64, f64)> = grid
            .iter()
            .filter_map(|&t| {
                let s = self.survival(t);
                (s > 0.0 && t > 0.0).then(|| (if log_x { t.ln() } else { t }, s.ln()))
            })
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        linear_fit(&x, &y)
    }
}

/// Fit the tail of `samples` under the given model. `k` defaults to `⌊√N⌋`.
pub fn estimate_tail(samples: &[f64], horizon: f64, model: TailModel, k: Option<usize>) -> Result<TailEstimate> {
    let p = prepare(samples, horizon)?;
    match model {
        TailModel::PowerLaw => power_estimate(&p, k),
        TailModel::Exponential => exponential_estimate(&p),
    }
}

fn power_estimate(p: &Prepared, k: Option<usize>) -> Result<TailEstimate> {
    let k = k.unwrap_or((p.n as f64).sqrt() as usize).max(2);
    if p.exact.len() <= k {
        return Err(Error::Estimation(format!(
            "only {} uncensored samples, need more than k = {k}",
            p.exact.len()
        )));
    }
    let u = p.exact[p.exact.len() - 1 - k];
    if u <= 0.0 {
        return Err(Error::Estimation("tail threshold is zero".into()));
    }
    let top = &p.exact[p.exact.len() - k..];
    let exceed = top.iter().filter(|&&x| x > u).count();
    let mut log_excess: f64 = top.iter().map(|x| (x / u).ln()).sum();
    if p.censored > 0 {
        log_excess += p.censored as f64 * (p.horizon / u).ln();
    }
    if exceed == 0 || log_excess <= 0.0 {
        return Err(Error::Estimation("degenerate tail: no spread above threshold".into()));
    }
    let a = exceed as f64 / log_excess;
    let regression_exponent = p.log_survival_fit(&p.grid(true), true).map(|f| -f.slope);
    Ok(TailEstimate {
        model: TailModel::PowerLaw,
        exponent: a,
        stderr: a / (exceed as f64).sqrt(),
        samples: p.n,
        censored: p.censored,
        fit_range: (u, top[top.len() - 1]),
        regression_exponent,
    })
}

fn exponential_estimate(p: &Prepared) -> Result<TailEstimate> {
    let grid = p.grid(false);
    let fit = p
        .log_survival_fit(&grid, false)
        .ok_or_else(|| Error::Estimation("too few distinct survival points for a regression".into()))?;
    Ok(TailEstimate {
        model: TailModel::Exponential,
        exponent: -fit.slope,
        stderr: fit.slope_stderr,
        samples: p.n,
        censored: p.censored,
        fit_range: (grid[0], grid[grid.len() - 1]),
        regression_exponent: None,
    })
}

/// Fit both models and prefer the one whose `ln S` regression has the smaller
/// residual sum of squares on a shared grid between the median and the cutoff.
pub fn classify_tail(samples: &[f64], horizon: f64) -> Result<TailClassification> {
    let p = prepare(samples, horizon)?;
    let grid = p.grid(true);
    let power_fit = p.log_survival_fit(&grid, true);
    let exp_fit = p.log_survival_fit(&grid, false);
    let (Some(pf), Some(ef)) = (power_fit, exp_fit) else {
        return Err(Error::Estimation("too few distinct survival points to compare tails".into()));
    };
    let power = power_estimate(&p, None)?;
    let exponential = exponential_estimate(&p)?;
    Ok(TailClassification {
        preferred: if pf.rss <= ef.rss { TailModel::PowerLaw } else { TailModel::Exponential },
        power_rss: pf.rss,
        exponential_rss: ef.rss,
        power,
        exponential,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::seeding::replica_rng;

    fn pareto(a: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = replica_rng(seed, 0);
        (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / a)).collect()
    }

    #[test]
    fn pareto_exponent_recovered() {
        let s = pareto(0.5, 100_000, 1);
        let est = estimate_tail(&s, f64::INFINITY, TailModel::PowerLaw, None).unwrap();
        assert!((est.exponent - 0.5).abs() < 4.0 * est.stderr, "{est:?}");
        let reg = est.regression_exponent.unwrap();
        assert!((reg - 0.5).abs() < 0.05, "{reg}");
    }

    #[test]
    fn censoring_is_accounted_for() {
        let h = 1000.0;
        let s: Vec<f64> = pareto(0.5, 100_000, 2).into_iter().map(|x| x.min(h)).collect();
        let est = estimate_tail(&s, h, TailModel::PowerLaw, None).unwrap();
        assert!(est.censored > 2000);
        assert!((est.exponent - 0.5).abs() < 4.0 * est.stderr, "{est:?}");
    }

    #[test]
    fn exponential_classified() {
        let mut rng = replica_rng(3, 0);
        let s: Vec<f64> = (0..20_000).map(|_| -(1.0 - rng.random::<f64>()).ln() / 2.0).collect();
        let c = classify_tail(&s, f64::INFINITY).unwrap();
        assert_eq!(c.preferred, TailModel::Exponential);
        assert!((c.exponential.exponent - 2.0).abs() < 0.1, "{c:?}");
        let c = classify_tail(&pareto(1.5, 20_000, 4), f64::INFINITY).unwrap();
        assert_eq!(c.preferred, TailModel::PowerLaw);
    }

    #[test]
    fn input_errors() {
        assert!(estimate_tail(&[1.0; 10], 5.0, TailModel::PowerLaw, None).is_err());
        assert!(estimate_tail(&vec![2.0; 5000], 5.0, TailModel::PowerLaw, None).is_err());
        assert!(estimate_tail(&vec![9.0; 5000], 5.0, TailModel::Exponential, None).is_err());
    }
}
