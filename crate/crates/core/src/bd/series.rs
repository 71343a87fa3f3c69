//! Summation of positive series with convergence classification.
//!
//! Terms are supplied in log form so that products of rate ratios neither
//! underflow nor overflow. Three regimes are recognised:
//!
//! * terms vanish identically from some index on (capped models): exact sum;
//! * geometric decay: direct summation with a geometric tail bound;
//! * algebraic decay `t_n ~ C n^{-p}`: the exponent is estimated from term
//!   ratios at large `n`; `p > 1` is summed with the Levin u-transform,
//!   `p <= 1` is reported divergent (Raabe/Bertrand tests at the margin).
//!   If the transform does not settle the value falls back to the partial
//!   sum plus an integral tail, flagged by [`SummationMethod::TailIntegral`].

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SummationMethod {
    Finite,
    Geometric,
    Levin,
    /// Levin did not settle; partial sum plus the integral of the fitted power tail.
    TailIntegral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SeriesValue {
    Converged {
        value: f64,
        error_estimate: f64,
        terms: usize,
        method: SummationMethod,
    },
    Divergent {
        terms: usize,
        reason: &'static str,
    },
    Inconclusive {
        partial_sum: f64,
        terms: usize,
        decay_exponent: f64,
    },
}

impl SeriesValue {
    pub fn value(&self) -> Option<f64> {
        match *self {
            SeriesValue::Converged { value, .. } => Some(value),
            _ => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, SeriesValue::Divergent { .. })
    }

    /// Multiply a converged value by a non-negative constant.
    pub fn scaled(self, c: f64) -> Self {
        match self {
            SeriesValue::Converged { value, error_estimate, terms, method } => SeriesValue::Converged {
                value: value * c,
                error_estimate: error_estimate * c,
                terms,
                method,
            },
            SeriesValue::Inconclusive { partial_sum, terms, decay_exponent } => {
                SeriesValue::Inconclusive { partial_sum: partial_sum * c, terms, decay_exponent }
            }
            other => other,
        }
    }
}

/// Terms computed before the algebraic-decay analysis kicks in.
const ALGEBRAIC_TERMS: usize = 1 << 16;
/// Divergence rule: term ratio >= 1 for this many consecutive terms past this index.
const NONDECREASING_RUN: usize = 1000;
const NONDECREASING_START: usize = 1000;
const GEOMETRIC_WINDOW: usize = 10;
const LEVIN_MAX_ORDER: usize = 40;

/// Sum `Σ_{n>=1} exp(log_term(n))`.
///
/// `log_term(n)` is called for `n = 1, 2, ...` in order and returns `None`
/// once all remaining terms are zero.
pub fn sum_log_series(mut log_term: impl FnMut(usize) -> Option<f64>, tol: f64) -> SeriesValue {
    let mut logs: Vec<f64> = Vec::with_capacity(1024);
    let mut sum = 0.0f64;
    let mut nondecreasing = 0usize;

    for n in 1..=ALGEBRAIC_TERMS {
        let Some(lt) = log_term(n) else {
            return SeriesValue::Converged {
                value: sum,
                error_estimate: 0.0,
                terms: n - 1,
                method: SummationMethod::Finite,
            };
        };
        if lt.is_nan() {
            return SeriesValue::Inconclusive { partial_sum: sum, terms: n - 1, decay_exponent: f64::NAN };
        }
        if lt > 700.0 {
            return SeriesValue::Divergent { terms: n, reason: "terms overflow" };
        }
        sum += lt.exp();
        logs.push(lt);

        if n >= 2 {
            let lr = lt - logs[n - 2];
            if n > NONDECREASING_START && lr >= 0.0 {
                nondecreasing += 1;
                if nondecreasing >= NONDECREASING_RUN {
                    return SeriesValue::Divergent { terms: n, reason: "term ratio >= 1 persistently" };
                }
            } else {
                nondecreasing = 0;
            }
        }

        if n > GEOMETRIC_WINDOW {
            let window = &logs[n - GEOMETRIC_WINDOW - 1..n];
            let max_lr = window
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max);
            if max_lr <= (1.0 - 1e-3f64).ln() {
                let r = max_lr.exp();
                let tail = lt.exp() * r / (1.0 - r);
                if tail <= 1e-2 * tol * sum || lt == f64::NEG_INFINITY {
                    return SeriesValue::Converged {
                        value: sum,
                        error_estimate: tail,
                        terms: n,
                        method: SummationMethod::Geometric,
                    };
                }
            }
        }
    }

    algebraic_regime(&logs, sum, tol)
}

fn algebraic_regime(logs: &[f64], partial: f64, tol: f64) -> SeriesValue {
    let n_terms = logs.len();
    let at = |n: usize| logs[n - 1];
    let ln2 = std::f64::consts::LN_2;
    let n2 = n_terms / 2;
    let n1 = n2 / 2;
    let p_hat = |n: usize| (at(n) - at(2 * n)) / ln2;
    // the 1/n bias of the doubling estimate cancels in this combination
    let p = 2.0 * p_hat(n2) - p_hat(n1);

    if p < 0.95 {
        return SeriesValue::Divergent { terms: n_terms, reason: "algebraic decay with exponent < 1" };
    }
    if p <= 1.05 {
        let n = n_terms - 1;
        let raabe = n as f64 * ((at(n) - at(n + 1)).exp() - 1.0);
        let bertrand = (n as f64).ln() * (raabe - 1.0);
        if bertrand < 0.05 {
            return SeriesValue::Divergent { terms: n_terms, reason: "harmonic-type decay (Bertrand test)" };
        }
        return SeriesValue::Inconclusive { partial_sum: partial, terms: n_terms, decay_exponent: p };
    }

    let terms: Vec<f64> = logs.iter().take(LEVIN_MAX_ORDER + 2).map(|l| l.exp()).collect();
    let integral_tail = at(n_terms).exp() * n_terms as f64 / (p - 1.0);
    let rough = partial + integral_tail;

    match levin_u_best(&terms) {
        Some((value, err)) if err <= tol * value.abs() && (value - rough).abs() <= 1e-3 * value.abs() + 10.0 * integral_tail => {
            SeriesValue::Converged { value, error_estimate: err, terms: n_terms, method: SummationMethod::Levin }
        }
        levin => SeriesValue::Converged {
            value: rough,
            error_estimate: levin.map_or(integral_tail, |(v, _)| (v - rough).abs().max(1e-3 * integral_tail)),
            terms: n_terms,
            method: SummationMethod::TailIntegral,
        },
    }
}

/// Levin u-transform `L_k^{(0)}` with `β = 1`, for `k = 1..`; returns the
/// estimate whose difference to its predecessor is smallest, with that difference.
pub fn levin_u_best(terms: &[f64]) -> Option<(f64, f64)> {
    let max_k = terms.len().saturating_sub(1).min(LEVIN_MAX_ORDER);
    if max_k < 3 {
        return None;
    }
    let mut partial = Vec::with_capacity(terms.len());
    let mut s = 0.0;
    for &t in terms {
        s += t;
        partial.push(s);
    }
    let mut prev: Option<f64> = None;
    let mut best: Option<(f64, f64)> = None;
    for k in 2..=max_k {
        let est = levin_u(&partial, terms, k)?;
        if let Some(p) = prev {
            let diff = (est - p).abs();
            if best.is_none_or(|(_, d)| diff < d) {
                best = Some((est, diff));
            }
        }
        prev = Some(est);
    }
    best
}

fn levin_u(partial: &[f64], terms: &[f64], k: usize) -> Option<f64> {
    const BETA: f64 = 1.0;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut binom = 1.0;
    let scale = BETA + k as f64;
    for j in 0..=k {
        let omega = (BETA + j as f64) * terms[j];
        if omega == 0.0 {
            return None;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let c = sign * binom * ((BETA + j as f64) / scale).powi(k as i32 - 1);
        num += c * partial[j] / omega;
        den += c / omega;
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    let v = num / den;
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_series(p: f64) -> impl FnMut(usize) -> Option<f64> {
        move |n| Some(-p * (n as f64).ln())
    }

    #[test]
    fn telescoping_series() {
        let v = sum_log_series(|n| Some(-((n * (n + 1)) as f64).ln()), 1e-12);
        let SeriesValue::Converged { value, method, .. } = v else { panic!("{v:?}") };
        assert_eq!(method, SummationMethod::Levin);
        assert!((value - 1.0).abs() < 1e-10, "{value}");
    }

    #[test]
    fn zeta_values() {
        let z2 = sum_log_series(power_series(2.0), 1e-10).value().unwrap();
        assert!((z2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-9, "{z2}");
        let z15 = sum_log_series(power_series(1.5), 1e-9).value().unwrap();
        assert!((z15 - 2.612_375_348_685_488).abs() < 1e-8, "{z15}");
    }

    #[test]
    fn geometric_series() {
        // Σ (1/n) 2^{-n} = ln 2
        let v = sum_log_series(|n| Some(-(n as f64).ln() - n as f64 * std::f64::consts::LN_2), 1e-12);
        let SeriesValue::Converged { value, method, .. } = v else { panic!() };
        assert_eq!(method, SummationMethod::Geometric);
        assert!((value - std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn divergent_series() {
        assert!(sum_log_series(power_series(1.0), 1e-10).is_divergent());
        assert!(sum_log_series(power_series(0.5), 1e-10).is_divergent());
        assert!(sum_log_series(|n| Some(-((n + 1) as f64).ln()), 1e-10).is_divergent());
        assert!(sum_log_series(|n| Some(n as f64 * 0.01), 1e-10).is_divergent());
    }

    #[test]
    fn finite_series() {
        let v = sum_log_series(|n| (n <= 3).then(|| (n as f64).ln()), 1e-10);
        assert_eq!(v.value(), Some(6.0));
    }
}
