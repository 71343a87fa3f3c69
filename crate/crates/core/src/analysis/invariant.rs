use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Configuration, CpliSimulator, Step};
use crate::error::{Error, Result};
use crate::graphs::Graph;
use crate::rates::RateModel;
use crate::seeding::{domain, stream_rng};
use crate::stats::{linear_fit, median, LinearFit};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantSampling {
    pub burn_in: f64,
    pub horizon: f64,
    /// Gap between recorded times.
    pub spacing: f64,
    pub replicas: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TightnessVerdict {
    /// Median dormancy is flat over the second half.
    Tight,
    /// Median dormancy keeps growing.
    Growing,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantReport {
    pub lambda: f64,
    pub times: Vec<f64>,
    /// Median over replicas of `ξ_t(o)` at each recorded time.
    pub medians: Vec<f64>,
    /// Pooled law of `ξ(o)` over the recorded times after burn-in.
    pub histogram: Vec<f64>,
    /// Least-squares fit of the medians against time, second half of the run only.
    pub fit: Option<LinearFit>,
    pub verdict: TightnessVerdict,
    pub heuristic: bool,
}

/// Flat: `|slope| <= 3 se` or `|slope| < 0.01`; growing: `slope > 3 se` and `slope > 0.5`.
fn classify(fit: Option<&LinearFit>) -> TightnessVerdict {
    let Some(f) = fit else { return TightnessVerdict::Undetermined };
    let se = if f.slope_stderr.is_finite() { f.slope_stderr } else { 0.0 };
    if f.slope.abs() <= 3.0 * se || f.slope.abs() < 0.01 {
        TightnessVerdict::Tight
    } else if f.slope > 3.0 * se && f.slope > 0.5 {
        TightnessVerdict::Growing
    } else {
        TightnessVerdict::Undetermined
    }
}

/// CPLI from `𝟘`, recording `ξ(o)` on a time grid.
pub fn sample_upper_invariant_cpli(g: &Graph, m: &RateModel, lambda: f64, cfg: &InvariantSampling) -> Result<InvariantReport> {
    if !(cfg.spacing > 0.0 && cfg.burn_in >= 0.0 && cfg.horizon >= cfg.burn_in && cfg.horizon.is_finite()) {
        return Err(Error::invalid("need spacing > 0 and 0 <= burn_in <= horizon < ∞"));
    }
    let steps = (cfg.horizon / cfg.spacing).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * cfg.spacing).collect();
    let o = g.origin();
    let zero = Configuration::zeros(g.vertex_count());
    let paths: Vec<Vec<u32>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<u32>> {
            let mut rng = stream_rng(cfg.seed, domain::CPLI, r);
            let mut sim = CpliSimulator::new(g, m, lambda, zero.clone())?;
            let mut out = Vec::with_capacity(times.len());
            loop {
                let before = sim.state().get(o);
                match sim.step(cfg.horizon, &mut rng) {
                    Step::Event { time, .. } => {
                        while out.len() < times.len() && times[out.len()] < time {
                            out.push(before);
                        }
                    }
                    Step::Horizon | Step::Absorbed => break,
                }
            }
            let last = sim.state().get(o);
            out.resize(times.len(), last);
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let medians: Vec<f64> = (0..times.len())
        .map(|k| median(&paths.iter().map(|p| p[k] as f64).collect::<Vec<_>>()))
        .collect();
    let mut histogram = Vec::new();
    let mut pooled = 0u64;
    for p in &paths {
        for (k, &x) in p.iter().enumerate() {
            if times[k] >= cfg.burn_in {
                if histogram.len() <= x as usize {
                    histogram.resize(x as usize + 1, 0.0);
                }
                histogram[x as usize] += 1.0;
                pooled += 1;
            }
        }
    }
    histogram.iter_mut().for_each(|h| *h /= pooled.max(1) as f64);
    let half = cfg.horizon / 2.0;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        times.iter().zip(&medians).filter(|(t, _)| **t >= half).map(|(t, m)| (*t, *m)).unzip();
    let fit = if xs.len() >= 3 { linear_fit(&xs, &ys) } else { None };
    Ok(InvariantReport { lambda, verdict: classify(fit.as_ref()), times, medians, histogram, fit, heuristic: true })
}
