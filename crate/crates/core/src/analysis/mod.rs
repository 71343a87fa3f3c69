//! Phase-transition experiments and the closed-form extinction criteria.
//!
//! Every estimator here is a finite-volume, finite-horizon proxy; reports
//! carry the proxy definition so that callers can label verdicts.

mod criteria;
mod invariant;
mod survival;
mod truncation;

pub use criteria::{
    corollary_regimes, estimate_lambda_c, extinction_criterion, ExtinctionCriterion, ExtinctionVerdict,
    LambdaCReport, LambdaCSearch, RegimeVerdict, SearchStatus, SweepPoint,
};
pub use invariant::{sample_upper_invariant_cpli, InvariantReport, InvariantSampling, TightnessVerdict};
pub use survival::{estimate_survival, estimate_survival_shared, SurvivalEstimate, SurvivalProxy};
pub use truncation::{truncation_diagnostic, TruncationReport};
