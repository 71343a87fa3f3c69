//! Birth, death and infection rate functions.
//!
//! A [`RateModel`] holds the on-site birth-death rates `b`, `d`; the
//! infection rate `Λ` is the separate [`InfectionRate`]. Rates are cheap
//! closed forms (or table lookups), so they are evaluated on demand.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Viral load or dormancy level of one vertex.
pub type Load = u32;

/// Default probe range for table-driven checks.
pub const DEFAULT_PROBE: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BirthDeathFamily {
    /// `b(n) = n + (1-a)_+`, `d(n) = n + (a-1)_+` for `n > 0`; recovery tail `t^{-a}`.
    PowerLaw { a: f64 },
    /// `b(n) = alpha n`, `d(n) = beta n`; exponential recovery tail.
    Linear { alpha: f64, beta: f64 },
    /// Explicit values; entries past the end are zero.
    Table { birth: Vec<f64>, death: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    family: BirthDeathFamily,
    cap: Option<Load>,
    growth_bound: f64,
    allow_degenerate: bool,
}

impl RateModel {
    pub fn power_law(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("power-law exponent a={a} must be > 0")));
        }
        Ok(RateModel {
            family: BirthDeathFamily::PowerLaw { a },
            cap: None,
            growth_bound: 1.0 + (1.0 - a).abs(),
            allow_degenerate: false,
        })
    }

    /// `alpha = 0` is accepted and yields a pure-death model with `d(n) = 0` for `n >= 2`.
    pub fn linear(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::invalid(format!("linear rates need 0 <= alpha, got alpha={alpha}")));
        }
        if alpha >= beta {
            return Err(Error::invalid(format!(
                "linear rates need alpha < beta, got alpha={alpha}, beta={beta}"
            )));
        }
        Ok(RateModel {
            family: BirthDeathFamily::Linear { alpha, beta },
            cap: None,
            growth_bound: beta,
            allow_degenerate: alpha == 0.0,
        })
    }

    /// Table model; `birth[0]` and `death[0]` must be zero.
    pub fn table(birth: Vec<f64>, death: Vec<f64>) -> Result<Self> {
        for (name, v) in [("birth", &birth), ("death", &death)] {
            if let Some((i, x)) = v.iter().enumerate().find(|(_, x)| !(x.is_finite() && **x >= 0.0)) {
                return Err(Error::invalid(format!("{name} table entry {i} = {x} is not a finite rate")));
            }
            if v.first().is_some_and(|&x| x != 0.0) {
                return Err(Error::invalid(format!("{name} rate at load 0 must be 0")));
            }
        }
        let growth_bound = table_growth(&birth).max(table_growth(&death));
        Ok(RateModel {
            family: BirthDeathFamily::Table { birth, death },
            cap: None,
            growth_bound,
            allow_degenerate: false,
        })
    }

    /// Classical contact process: `b = 0`, `d(1) = recovery`, loads stay in `{0, 1}`.
    pub fn classical_contact(recovery: f64) -> Result<Self> {
        if !(recovery > 0.0 && recovery.is_finite()) {
            return Err(Error::invalid("recovery rate must be positive"));
        }
        Ok(Self::table(vec![0.0], vec![0.0, recovery])?.with_degenerate(true))
    }

    /// Permit constant `b` (e.g. `b = 0`) in [`validate_assumption`].
    pub fn with_degenerate(mut self, allow: bool) -> Self {
        self.allow_degenerate = allow;
        self
    }

    /// Births switched off above `cap`: `b(n) = 0` for `n > cap`, `d(n) = 0`
    /// for `n > cap + 1`. Loads started at most `cap + 1` stay there.
    pub fn capped(&self, cap: Load) -> Result<Self> {
        if cap < 1 {
            return Err(Error::invalid("capacity K must be at least 1"));
        }
        if self.cap.is_some() {
            return Err(Error::invalid("model is already capped"));
        }
        let unbounded_births = match self.family {
            BirthDeathFamily::PowerLaw { .. } => true,
            BirthDeathFamily::Linear { alpha, .. } => alpha > 0.0,
            BirthDeathFamily::Table { .. } => false,
        };
        if !unbounded_births {
            return Err(Error::invalid("capping requires a birth rate supported on all n >= 1"));
        }
        let mut m = self.clone();
        m.cap = Some(cap);
        Ok(m)
    }

    pub fn family(&self) -> &BirthDeathFamily {
        &self.family
    }

    pub fn cap(&self) -> Option<Load> {
        self.cap
    }

    pub fn allows_degenerate(&self) -> bool {
        self.allow_degenerate
    }

    /// Constant `C` with `b(n), d(n) <= C n`.
    pub fn growth_bound(&self) -> f64 {
        self.growth_bound
    }

    pub fn birth(&self, n: Load) -> f64 {
        if n == 0 || self.cap.is_some_and(|k| n > k) {
            return 0.0;
        }
        let x = n as f64;
        match &self.family {
            BirthDeathFamily::PowerLaw { a } => x + (1.0 - a).max(0.0),
            BirthDeathFamily::Linear { alpha, .. } => alpha * x,
            BirthDeathFamily::Table { birth, .. } => birth.get(n as usize).copied().unwrap_or(0.0),
        }
    }

    pub fn death(&self, n: Load) -> f64 {
        if n == 0 || self.cap.is_some_and(|k| n > k + 1) {
            return 0.0;
        }
        let x = n as f64;
        match &self.family {
            BirthDeathFamily::PowerLaw { a } => x + (a - 1.0).max(0.0),
            // pure death never leaves {0, 1}; d is cut there so the support condition holds
            BirthDeathFamily::Linear { alpha, .. } if *alpha == 0.0 && n > 1 => 0.0,
            BirthDeathFamily::Linear { beta, .. } => beta * x,
            BirthDeathFamily::Table { death, .. } => death.get(n as usize).copied().unwrap_or(0.0),
        }
    }

    /// True when `b` vanishes identically.
    pub fn is_pure_death(&self) -> bool {
        match &self.family {
            BirthDeathFamily::PowerLaw { .. } => false,
            BirthDeathFamily::Linear { alpha, .. } => *alpha == 0.0,
            BirthDeathFamily::Table { birth, .. } => birth.iter().all(|&x| x == 0.0),
        }
    }

    /// Largest load reachable from loads in `{0, 1}`, if finite.
    ///
    /// This is the first `n >= 1` with `b(n) = 0`.
    pub fn max_load(&self) -> Option<Load> {
        if let Some(k) = self.cap {
            return Some(k + 1);
        }
        match &self.family {
            BirthDeathFamily::PowerLaw { .. } => None,
            BirthDeathFamily::Linear { alpha, .. } => (*alpha == 0.0).then_some(1),
            BirthDeathFamily::Table { birth, .. } => {
                let mut n: Load = 1;
                while (n as usize) < birth.len() && birth[n as usize] > 0.0 {
                    n += 1;
                }
                Some(n)
            }
        }
    }

    /// `max b(n)` over loads `0..=max_load`.
    pub fn max_birth_rate(&self) -> Option<f64> {
        let top = self.max_load()?;
        Some((0..=top).map(|n| self.birth(n)).fold(0.0, f64::max))
    }

    /// `max d(n)` over loads `0..=max_load`.
    pub fn max_death_rate(&self) -> Option<f64> {
        let top = self.max_load()?;
        Some((0..=top).map(|n| self.death(n)).fold(0.0, f64::max))
    }

    /// Short human-readable family tag.
    pub fn tag(&self) -> String {
        let base = match &self.family {
            BirthDeathFamily::PowerLaw { a } => format!("power_law(a={a})"),
            BirthDeathFamily::Linear { alpha, beta } => format!("linear(alpha={alpha},beta={beta})"),
            BirthDeathFamily::Table { birth, death } => format!("table(b={birth:?},d={death:?})"),
        };
        match self.cap {
            Some(k) => format!("capped({base},K={k})"),
            None => base,
        }
    }
}

impl fmt::Display for RateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

fn table_growth(v: &[f64]) -> f64 {
    v.iter()
        .enumerate()
        .skip(1)
        .map(|(n, &x)| x / n as f64)
        .fold(0.0, f64::max)
}

/// Infection rate `Λ` as a function of the source load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InfectionRate {
    Constant { lambda: f64 },
    /// `lambda * n^gamma`.
    Power { lambda: f64, gamma: f64 },
}

impl InfectionRate {
    pub fn constant(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("infection rate lambda={lambda} must be >= 0")));
        }
        Ok(InfectionRate::Constant { lambda })
    }

    pub fn power(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("infection rate lambda={lambda} must be >= 0")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!("infection exponent gamma={gamma} must be >= 0")));
        }
        Ok(InfectionRate::Power { lambda, gamma })
    }

    /// `Λ(n)`. The engines never read `Λ(0)`.
    pub fn rate(&self, n: Load) -> f64 {
        match *self {
            InfectionRate::Constant { lambda } => lambda,
            InfectionRate::Power { lambda, gamma } => {
                if gamma == 0.0 {
                    lambda
                } else {
                    lambda * (n as f64).powf(gamma)
                }
            }
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            InfectionRate::Constant { lambda } | InfectionRate::Power { lambda, .. } => lambda,
        }
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            InfectionRate::Constant { .. } => 0.0,
            InfectionRate::Power { gamma, .. } => gamma,
        }
    }

    /// Same family with `lambda` replaced.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        match *self {
            InfectionRate::Constant { .. } => InfectionRate::Constant { lambda },
            InfectionRate::Power { gamma, .. } => InfectionRate::Power { lambda, gamma },
        }
    }

    /// `Some(lambda)` if `Λ` does not depend on the load (for `n >= 1`).
    pub fn as_constant(&self) -> Option<f64> {
        match *self {
            InfectionRate::Constant { lambda } => Some(lambda),
            InfectionRate::Power { lambda, gamma } => (gamma == 0.0).then_some(lambda),
        }
    }

    /// `max Λ(n)` over `1..=top` (monotone, so `Λ(top)`).
    pub fn max_rate(&self, top: Load) -> f64 {
        self.rate(top.max(1))
    }
}

/// Outcome of one bullet of the standing rate assumption.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BulletCheck {
    pub passed: bool,
    pub first_violation: Option<u64>,
    pub detail: String,
}

impl BulletCheck {
    fn pass(detail: impl Into<String>) -> Self {
        BulletCheck { passed: true, first_violation: None, detail: detail.into() }
    }

    fn fail(n: u64, detail: impl Into<String>) -> Self {
        BulletCheck { passed: false, first_violation: Some(n), detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub probe_range: u64,
    pub zero_at_zero: BulletCheck,
    /// `supp(d(.+1)) = supp(b) ∪ {0}` and `supp(b)` is `{1..K}` or all of `N`.
    pub support: BulletCheck,
    pub linear_growth: BulletCheck,
    pub monotone_infection: BulletCheck,
    /// `b`, `d` (and `Λ`) are non-constant, unless degenerate models are allowed.
    pub non_constant: BulletCheck,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        [
            &self.zero_at_zero,
            &self.support,
            &self.linear_growth,
            &self.monotone_infection,
            &self.non_constant,
        ]
        .iter()
        .all(|b| b.passed)
    }
}

/// Check the standing assumptions on `(b, d, Λ)` over `n <= probe`.
///
/// Closed-form families are additionally covered by their analytic growth
/// constant; for tables the probe is the whole story, so the growth check
/// there is heuristic beyond the table length.
pub fn validate_assumption(
    m: &RateModel,
    infection: Option<&InfectionRate>,
    probe: u64,
) -> AssumptionReport {
    let probe_load = probe.min(Load::MAX as u64 - 2) as Load;

    let zero_at_zero = if m.birth(0) == 0.0 && m.death(0) == 0.0 {
        BulletCheck::pass("b(0) = d(0) = 0")
    } else {
        BulletCheck::fail(0, "b(0) or d(0) is nonzero")
    };

    let support = check_support(m, probe_load);

    let c = m.growth_bound();
    let mut linear_growth = BulletCheck::pass(format!("b(n), d(n) <= {c} n"));
    for n in 1..=probe_load {
        let bound = c * n as f64 * (1.0 + 1e-12);
        if m.birth(n) > bound || m.death(n) > bound {
            linear_growth = BulletCheck::fail(n as u64, format!("rate exceeds {c} n"));
            break;
        }
    }

    let monotone_infection = match infection {
        None => BulletCheck::pass("no infection rate supplied"),
        Some(inf) => {
            let analytic_ok = inf.lambda() >= 0.0 && inf.gamma() >= 0.0;
            let mut check = if analytic_ok {
                BulletCheck::pass("lambda, gamma >= 0: non-decreasing")
            } else {
                BulletCheck::fail(0, "negative lambda or gamma")
            };
            if check.passed {
                let mut prev = inf.rate(0);
                for n in 1..=probe_load.min(10_000) {
                    let cur = inf.rate(n);
                    if cur < prev {
                        check = BulletCheck::fail(n as u64, "infection rate decreases");
                        break;
                    }
                    prev = cur;
                }
            }
            check
        }
    };

    let constant_b = (1..=probe_load.min(10_000)).all(|n| m.birth(n) == m.birth(0));
    let constant_d = (1..=probe_load.min(10_000)).all(|n| m.death(n) == m.death(0));
    let non_constant = if !(constant_b || constant_d) {
        BulletCheck::pass("b and d are non-constant")
    } else if m.allows_degenerate() {
        BulletCheck::pass("constant rate function permitted (degenerate model)")
    } else {
        BulletCheck::fail(0, "b or d is constant; enable degenerate models to allow this")
    };

    AssumptionReport {
        probe_range: probe_load as u64,
        zero_at_zero,
        support,
        linear_growth,
        monotone_infection,
        non_constant,
    }
}

fn check_support(m: &RateModel, probe: Load) -> BulletCheck {
    // supp(d(.+1)) must contain 0
    if m.death(1) <= 0.0 {
        return BulletCheck::fail(0, "d(1) = 0, so 0 is not in supp(d(.+1))");
    }
    let mut births_ended = false;
    for n in 1..probe {
        let b_pos = m.birth(n) > 0.0;
        let d_next_pos = m.death(n + 1) > 0.0;
        if b_pos != d_next_pos {
            return BulletCheck::fail(n as u64, format!("b({n}) > 0 is {b_pos} but d({}) > 0 is {d_next_pos}", n + 1));
        }
        if b_pos && births_ended {
            return BulletCheck::fail(n as u64, "supp(b) is not of the form {1..K}");
        }
        if !b_pos {
            births_ended = true;
        }
    }
    BulletCheck::pass(match m.max_load() {
        Some(top) if top > 1 => format!("supp(b) = {{1..{}}}", top - 1),
        Some(_) => "supp(b) is empty".to_string(),
        None => "supp(b) = N".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_examples() {
        let m = RateModel::power_law(1.5).unwrap();
        for n in 1..20 {
            assert_eq!(m.birth(n), n as f64);
            assert_eq!(m.death(n), n as f64 + 0.5);
        }
        let m = RateModel::power_law(1.0).unwrap();
        assert_eq!((m.birth(7), m.death(7)), (7.0, 7.0));
        let m = RateModel::power_law(2.0).unwrap();
        assert_eq!((m.birth(7), m.death(7)), (7.0, 8.0));
        assert_eq!((m.birth(0), m.death(0)), (0.0, 0.0));
        assert!(RateModel::power_law(0.0).is_err());
        assert!(RateModel::power_law(-1.0).is_err());
    }

    #[test]
    fn power_law_drift_is_one_minus_a() {
        for a in [0.25, 0.5, 1.0, 1.5, 2.0, 3.7] {
            let m = RateModel::power_law(a).unwrap();
            for n in 1..100 {
                assert!((m.birth(n) - m.death(n) - (1.0 - a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_examples() {
        let m = RateModel::linear(1.0, 2.0).unwrap();
        assert_eq!((m.birth(3), m.death(3)), (3.0, 6.0));
        let pd = RateModel::linear(0.0, 1.0).unwrap();
        assert!(pd.is_pure_death());
        assert_eq!(pd.max_load(), Some(1));
        assert!(RateModel::linear(2.0, 2.0).is_err());
        assert!(RateModel::linear(3.0, 2.0).is_err());
    }

    #[test]
    fn families_pass_validation() {
        let lam = InfectionRate::power(0.7, 1.3).unwrap();
        for m in [
            RateModel::power_law(2.0).unwrap(),
            RateModel::power_law(0.5).unwrap(),
            RateModel::linear(1.0, 2.0).unwrap(),
            RateModel::linear(0.0, 1.0).unwrap(),
            RateModel::power_law(2.0).unwrap().capped(2).unwrap(),
            RateModel::linear(1.0, 3.0).unwrap().capped(5).unwrap(),
            RateModel::classical_contact(1.0).unwrap(),
        ] {
            let r = validate_assumption(&m, Some(&lam), 10_000);
            assert!(r.all_passed(), "{m}: {r:?}");
        }
    }

    #[test]
    fn mismatched_table_fails_support() {
        let m = RateModel::table(vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let r = validate_assumption(&m, None, 1000);
        assert!(!r.support.passed);
        assert_eq!(r.support.first_violation, Some(2));
    }

    #[test]
    fn constant_birth_needs_permission() {
        let m = RateModel::table(vec![0.0], vec![0.0, 1.0]).unwrap();
        assert!(!validate_assumption(&m, None, 100).non_constant.passed);
        assert!(validate_assumption(&m.with_degenerate(true), None, 100).all_passed());
    }

    #[test]
    fn capped_power_law() {
        let m = RateModel::power_law(2.0).unwrap().capped(2).unwrap();
        let b: Vec<f64> = (0..6).map(|n| m.birth(n)).collect();
        assert_eq!(b, vec![0.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
        let d: Vec<f64> = (0..6).map(|n| m.death(n)).collect();
        assert_eq!(d, vec![0.0, 2.0, 3.0, 4.0, 0.0, 0.0]);
        assert_eq!(m.max_load(), Some(3));
        assert!(validate_assumption(&m, None, 1000).all_passed());
        assert!(RateModel::power_law(2.0).unwrap().capped(0).is_err());
        assert!(RateModel::classical_contact(1.0).unwrap().capped(2).is_err());
    }

    #[test]
    fn infection_families() {
        let c = InfectionRate::constant(1.5).unwrap();
        let p = InfectionRate::power(1.5, 0.0).unwrap();
        for n in 1..50 {
            assert_eq!(c.rate(n), p.rate(n));
        }
        let q = InfectionRate::power(2.0, 1.5).unwrap();
        assert!((q.rate(4) - 16.0).abs() < 1e-12);
        assert_eq!(q.max_rate(4), q.rate(4));
        assert!(InfectionRate::power(1.0, -0.5).is_err());
        let r = validate_assumption(&RateModel::power_law(2.0).unwrap(), Some(&q), 1000);
        assert!(r.monotone_infection.passed);
    }

    #[test]
    fn growth_witness() {
        assert_eq!(RateModel::power_law(3.0).unwrap().growth_bound(), 3.0);
        assert_eq!(RateModel::linear(1.0, 2.0).unwrap().growth_bound(), 2.0);
        let t = RateModel::table(vec![0.0, 3.0], vec![0.0, 1.0, 5.0]).unwrap();
        assert_eq!(t.growth_bound(), 3.0);
    }
}
