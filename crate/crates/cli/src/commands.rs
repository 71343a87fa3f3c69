//! Subcommand bodies. Each writes its artifacts and returns a status.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use vlcp_core::analysis::{
    corollary_regimes, estimate_lambda_c, estimate_survival, estimate_survival_shared, extinction_criterion,
    sample_upper_invariant_cpli, truncation_diagnostic, InvariantSampling, LambdaCSearch, SearchStatus,
    TightnessVerdict,
};
use vlcp_core::bd::{absorption_time, classify_tail, mean_tau_rec};
use vlcp_core::duality::{mc_duality_check, pathwise_duality_check};
use vlcp_core::engine::{
    generate_event_log, run_cpli_gillespie, run_cpvl_gillespie, Configuration, Envelopes, RunOptions,
};
use vlcp_core::oracle::{build_generator, transient_distribution, GeneratorModel, ProcessTag};
use vlcp_core::seeding::{domain, stream_rng};
use vlcp_core::stats::Proportion;
use vlcp_core::{Graph, GraphKind, InfectionRate, Load, RateModel};

use crate::config::{DualityMode, InitKind, Process, RunConfig};
use crate::output::{num, Artifacts};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    Inconclusive(String),
}

/// Raised for inputs that are well-formed but unusable by the chosen subcommand.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn constant_lambda(cfg: &RunConfig, what: &str) -> Result<f64> {
    cfg.infection
        .as_constant()
        .ok_or_else(|| usage(format!("{what} needs a constant infection rate (infection.gamma = 0)")))
}

fn cap_of(m: &RateModel, what: &str) -> Result<Load> {
    m.max_load().ok_or_else(|| usage(format!("{what} needs bounded loads; set rates.cap")))
}

fn initial(cfg: &RunConfig, g: &Graph) -> Configuration {
    let n = g.vertex_count();
    match cfg.run.init {
        InitKind::Origin => Configuration::point(n, g.origin(), cfg.run.init_load),
        InitKind::All => Configuration::uniform(n, cfg.run.init_load),
        InitKind::Zero => Configuration::zeros(n),
    }
}

fn loads_str(c: &Configuration) -> String {
    c.loads().iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

fn random_config<R: Rng>(n: usize, top: Load, rng: &mut R) -> Configuration {
    Configuration::from_loads((0..n).map(|_| rng.random_range(0..=top)).collect())
}

/// Snapshot rows, extinction time, event count and final infected count of one replica.
type ReplicaRows = (Vec<Vec<String>>, Option<f64>, u64, usize);

pub fn simulate(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    let init = initial(cfg, &g);
    let h = cfg.run.horizon;
    let mut times: Vec<f64> = cfg.run.snapshots.iter().copied().filter(|&t| t <= h).collect();
    if times.is_empty() {
        times.push(h);
    }
    let opts = RunOptions::horizon(h).with_snapshots(times);
    let lambda = match cfg.run.process {
        Process::Cpli => constant_lambda(cfg, "CPLI")?,
        Process::Cpvl => cfg.infection.lambda(),
    };
    let o = g.origin();
    let runs: Vec<ReplicaRows> = (0..cfg.run.replicas)
        .into_par_iter()
        .map(|r| -> Result<_> {
            let tr = match cfg.run.process {
                Process::Cpvl => run_cpvl_gillespie(
                    &g,
                    &cfg.rates,
                    &cfg.infection,
                    &init,
                    &opts,
                    &mut stream_rng(cfg.run.seed, domain::CPVL, r),
                )?,
                Process::Cpli => run_cpli_gillespie(
                    &g,
                    &cfg.rates,
                    lambda,
                    &init,
                    &opts,
                    &mut stream_rng(cfg.run.seed, domain::CPLI, r),
                )?,
            };
            let rows = tr
                .snapshots
                .iter()
                .map(|s| {
                    vec![
                        r.to_string(),
                        num(s.time),
                        s.config.infected_count().to_string(),
                        s.config.total_load().to_string(),
                        s.config.get(o).to_string(),
                    ]
                })
                .collect();
            Ok((rows, tr.extinction_time, tr.events, tr.final_config.infected_count()))
        })
        .collect::<Result<_>>()?;
    art.csv(
        "simulate.csv",
        &["replica", "time", "occupied", "total", "origin"],
        runs.iter().flat_map(|(rows, ..)| rows.iter().cloned()),
    )?;
    let absorbed: Vec<f64> = runs.iter().filter_map(|r| r.1).collect();
    let n = runs.len().max(1) as f64;
    art.json(
        "simulate.json",
        &json!({
            "process": cfg.run.process,
            "replicas": cfg.run.replicas,
            "absorbed": Proportion::new(absorbed.len() as u64, cfg.run.replicas),
            "mean_absorption_time": if absorbed.is_empty() { None } else { Some(absorbed.iter().sum::<f64>() / absorbed.len() as f64) },
            "mean_events": runs.iter().map(|r| r.2 as f64).sum::<f64>() / n,
            "mean_final_occupied": runs.iter().map(|r| r.3 as f64).sum::<f64>() / n,
        }),
    )?;
    Ok(Status::Done)
}

pub fn survival(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    let init = initial(cfg, &g);
    if init.is_zero() {
        return Err(usage("survival needs a nonzero initial configuration (run.init)"));
    }
    let s = &cfg.survival;
    let infs: Vec<InfectionRate> = s.lambdas.iter().map(|&l| cfg.infection.with_lambda(l)).collect();
    let estimates = if s.shared {
        cap_of(&cfg.rates, "survival.shared")?;
        let points: Vec<_> = infs.iter().map(|i| (*i, init.clone())).collect();
        estimate_survival_shared(&g, &cfg.rates, &points, cfg.run.horizon, cfg.run.replicas, s.proxy, cfg.run.seed)?
    } else {
        infs.iter()
            .map(|inf| {
                estimate_survival(&g, &cfg.rates, inf, &init, cfg.run.horizon, cfg.run.replicas, s.proxy, cfg.run.seed)
            })
            .collect::<vlcp_core::Result<_>>()?
    };
    art.csv(
        "survival.csv",
        &["lambda", "gamma", "proxy", "estimate", "stderr", "successes", "replicas", "horizon"],
        estimates.iter().map(|e| {
            vec![
                num(e.lambda),
                num(e.gamma),
                e.proxy.name().to_string(),
                num(e.estimate),
                num(e.stderr),
                e.successes.to_string(),
                e.replicas.to_string(),
                num(e.horizon),
            ]
        }),
    )?;
    art.json(
        "survival.json",
        &json!({
            "shared_logs": s.shared,
            "estimates": estimates,
            "caveat": "finite-size, finite-horizon proxy",
        }),
    )?;
    Ok(Status::Done)
}

#[derive(Serialize)]
struct Sandwich {
    lower_bound: Option<f64>,
    upper_bound: Option<f64>,
    upper_stderr: Option<f64>,
    lower_consistent: Option<bool>,
    upper_consistent: Option<bool>,
}

pub fn sweep(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    let sw = &cfg.sweep;
    let mut search = LambdaCSearch::new(cfg.run.horizon, cfg.run.replicas, cfg.run.seed);
    search.gamma = cfg.infection.gamma();
    search.max_replicas = sw.max_replicas;
    search.threshold = sw.threshold;
    search.bracket = sw.bracket;
    search.resolution = sw.resolution;
    search.proxy = sw.proxy;
    let report = estimate_lambda_c(&g, &cfg.rates, &search)?;

    // a CP with recovery d(1) at horizon H is the unit-recovery CP at λ/d(1) and horizon d(1)·H
    let d1 = cfg.rates.death(1);
    let cp = if sw.cp_reference && d1 > 0.0 && search.gamma == 0.0 {
        let mut cp_search = search.clone();
        cp_search.horizon = d1 * cfg.run.horizon;
        Some(estimate_lambda_c(&g, &RateModel::classical_contact(1.0)?, &cp_search)?)
    } else {
        None
    };
    let lower = if search.gamma == 0.0 {
        mean_tau_rec(&cfg.rates, 1e-10).value().map(|e| 1.0 / (cfg.criteria.degree as f64 * e))
    } else {
        None
    };
    let upper = cp.as_ref().map(|c| d1 * c.midpoint());
    let upper_se = cp.as_ref().map(|c| (report.lambda_stderr.powi(2) + (d1 * c.lambda_stderr).powi(2)).sqrt());
    let sandwich = Sandwich {
        lower_bound: lower,
        upper_bound: upper,
        upper_stderr: upper_se,
        lower_consistent: lower.map(|l| report.lambda_lo >= l - 2.0 * report.lambda_stderr),
        upper_consistent: upper.zip(upper_se).map(|(u, se)| report.lambda_hi <= u + 2.0 * se),
    };

    let mut rows = Vec::new();
    for (label, r) in std::iter::once(("cpvl", &report)).chain(cp.as_ref().map(|c| ("cp", c))) {
        for p in &r.evaluations {
            rows.push(vec![
                label.to_string(),
                num(p.lambda),
                num(p.estimate.estimate),
                num(p.estimate.stderr),
                p.estimate.replicas.to_string(),
                num(p.estimate.horizon),
            ]);
        }
    }
    art.csv("sweep.csv", &["process", "lambda", "estimate", "stderr", "replicas", "horizon"], rows)?;
    art.json("sweep.json", &json!({ "cpvl": report, "cp_reference": cp, "sandwich": sandwich }))?;
    let inconclusive = report.status == SearchStatus::Inconclusive
        || cp.as_ref().is_some_and(|c| c.status == SearchStatus::Inconclusive);
    Ok(if inconclusive {
        Status::Inconclusive("bisection could not separate the threshold within the replica budget".into())
    } else {
        Status::Done
    })
}

pub fn duality(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    match cfg.duality.mode {
        DualityMode::Pathwise => duality_pathwise(cfg, art),
        DualityMode::Exact => duality_exact(cfg, art),
        DualityMode::Mc => duality_mc(cfg, art),
    }
}

fn duality_pathwise(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    constant_lambda(cfg, "duality")?;
    let top = cap_of(&cfg.rates, "pathwise duality")?;
    let d = &cfg.duality;
    let env = Envelopes::for_model(&cfg.rates, &cfg.infection)?;
    let k = d.checkpoints.max(2);
    let checkpoints: Vec<f64> = (0..k).map(|i| d.t * i as f64 / (k - 1) as f64).collect();
    let n = g.vertex_count();
    let cases: Vec<_> = (0..d.cases)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let mut rng = stream_rng(cfg.run.seed, domain::INIT, c);
            let eta0 = random_config(n, top, &mut rng);
            let xi0 = random_config(n, top, &mut rng);
            let log = generate_event_log(&g, env, d.t, &mut stream_rng(cfg.run.seed, domain::EVENT_LOG, c))?;
            let rep = pathwise_duality_check(&g, &cfg.rates, &cfg.infection, &eta0, &xi0, d.t, &log, &checkpoints)?;
            Ok((c, eta0, xi0, rep))
        })
        .collect::<Result<_>>()?;
    art.csv(
        "duality.csv",
        &["case", "eta0", "xi0", "initial_indicator", "final_indicator", "evaluations", "flips", "constant_flag"],
        cases.iter().map(|(c, e, x, r)| {
            vec![
                c.to_string(),
                loads_str(e),
                loads_str(x),
                r.initial_indicator.to_string(),
                r.final_indicator.to_string(),
                r.evaluations.to_string(),
                r.flips.len().to_string(),
                r.constant.to_string(),
            ]
        }),
    )?;
    let broken: Vec<u64> = cases.iter().filter(|c| !c.3.constant).map(|c| c.0).collect();
    let per_case: Vec<_> = cases
        .iter()
        .map(|(c, e, x, r)| {
            json!({
                "case": c,
                "eta0": e.loads(),
                "xi0": x.loads(),
                "constant_flag": r.constant,
                "initial_indicator": r.initial_indicator,
                "evaluations": r.evaluations,
                "flips": r.flips,
            })
        })
        .collect();
    art.json(
        "duality.json",
        &json!({ "mode": "pathwise", "t": d.t, "all_constant": broken.is_empty(), "cases": per_case }),
    )?;
    if !broken.is_empty() {
        bail!("duality indicator changed along {} path(s): cases {:?}", broken.len(), broken);
    }
    Ok(Status::Done)
}

fn transient_from(gen: &GeneratorModel, c: &Configuration, t: f64, tol: f64) -> Result<Vec<f64>> {
    Ok(transient_distribution(gen, &gen.delta(c)?, t, tol)?)
}

fn duality_exact(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    const TOLERANCE: f64 = 1e-8;
    let g = cfg.build_graph()?;
    let d = &cfg.duality;
    let tol = cfg.oracle.tol;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut worst = 0.0f64;
    for &lambda in &d.lambdas {
        let inf = InfectionRate::constant(lambda)?;
        let fwd = build_generator(&g, &cfg.rates, &inf, ProcessTag::Cpvl)?;
        let dual = build_generator(&g, &cfg.rates, &inf, ProcessTag::Cpli)?;
        let states = fwd.states;
        let pairs: Vec<(usize, usize)> = if states <= 256 {
            (0..states).flat_map(|i| (0..states).map(move |j| (i, j))).collect()
        } else {
            let mut rng = stream_rng(cfg.run.seed, domain::INIT, 0);
            (0..d.cases).map(|_| (rng.random_range(0..states), rng.random_range(0..states))).collect()
        };
        for &t in &d.times {
            let mut fwd_cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut dual_cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut max_gap = 0.0f64;
            for &(i, j) in &pairs {
                let (eta0, xi0) = (fwd.decode(i), dual.decode(j));
                if let Entry::Vacant(e) = fwd_cache.entry(i) {
                    e.insert(transient_from(&fwd, &eta0, t, tol)?);
                }
                if let Entry::Vacant(e) = dual_cache.entry(j) {
                    e.insert(transient_from(&dual, &xi0, t, tol)?);
                }
                let p = &fwd_cache[&i];
                let r = &dual_cache[&j];
                let lhs: f64 = (0..states).filter(|&s| fwd.decode(s).le(&xi0)).map(|s| p[s]).sum();
                let rhs: f64 = (0..states).filter(|&s| eta0.le(&dual.decode(s))).map(|s| r[s]).sum();
                let gap = (lhs - rhs).abs();
                max_gap = max_gap.max(gap);
                rows.push(vec![num(lambda), num(t), loads_str(&eta0), loads_str(&xi0), num(lhs), num(rhs), num(gap)]);
            }
            worst = worst.max(max_gap);
            summary.push(json!({ "lambda": lambda, "t": t, "pairs": pairs.len(), "max_gap": max_gap }));
        }
    }
    art.csv("duality.csv", &["lambda", "t", "eta0", "xi0", "lhs", "rhs", "gap"], rows)?;
    art.json(
        "duality.json",
        &json!({ "mode": "exact", "tolerance": TOLERANCE, "max_gap": worst, "pass": worst <= TOLERANCE, "points": summary }),
    )?;
    if worst > TOLERANCE {
        bail!("exact duality gap {worst:e} exceeds {TOLERANCE:e}");
    }
    Ok(Status::Done)
}

fn duality_mc(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    let lambda = constant_lambda(cfg, "duality")?;
    let top = cfg.rates.max_load().unwrap_or(3);
    let d = &cfg.duality;
    let n = g.vertex_count();
    let mut results = Vec::new();
    for c in 0..d.cases {
        let mut rng = stream_rng(cfg.run.seed, domain::INIT, c);
        let eta0 = random_config(n, top, &mut rng);
        let xi0 = random_config(n, top, &mut rng);
        let mc = mc_duality_check(&g, &cfg.rates, lambda, &eta0, &xi0, d.t, cfg.run.replicas, cfg.run.seed.wrapping_add(c))?;
        results.push((c, eta0, xi0, mc));
    }
    art.csv(
        "duality.csv",
        &["case", "eta0", "xi0", "lhs", "rhs", "difference", "stderr", "agrees"],
        results.iter().map(|(c, e, x, m)| {
            vec![
                c.to_string(),
                loads_str(e),
                loads_str(x),
                num(m.lhs.estimate),
                num(m.rhs.estimate),
                num(m.difference),
                num(m.combined_stderr),
                m.agrees(3.0).to_string(),
            ]
        }),
    )?;
    let disagreements = results.iter().filter(|r| !r.3.agrees(3.0)).count();
    art.json(
        "duality.json",
        &json!({
            "mode": "mc",
            "t": d.t,
            "cases": results.len(),
            "disagreements_at_3se": disagreements,
            "results": results.iter().map(|r| &r.3).collect::<Vec<_>>(),
        }),
    )?;
    Ok(Status::Done)
}

pub fn oracle(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    let tag = match cfg.run.process {
        Process::Cpvl => ProcessTag::Cpvl,
        Process::Cpli => {
            constant_lambda(cfg, "the CPLI oracle")?;
            ProcessTag::Cpli
        }
    };
    cap_of(&cfg.rates, "the oracle")?;
    let gen = build_generator(&g, &cfg.rates, &cfg.infection, tag)?;
    let init = initial(cfg, &g);
    let p = transient_from(&gen, &init, cfg.oracle.t, cfg.oracle.tol)?;
    art.csv(
        "oracle.csv",
        &["state", "configuration", "probability"],
        p.iter().enumerate().map(|(i, pi)| vec![i.to_string(), loads_str(&gen.decode(i)), num(*pi)]),
    )?;
    art.json(
        "oracle.json",
        &json!({
            "process": cfg.run.process,
            "t": cfg.oracle.t,
            "states": gen.states,
            "nonzeros": gen.nonzeros(),
            "max_row_sum_error": gen.max_row_sum_error(),
            "total_mass": p.iter().sum::<f64>(),
            "mass_at_zero": p[0],
            "origin_marginal": gen.vertex_marginal(&p, g.origin()),
        }),
    )?;
    Ok(Status::Done)
}

pub fn tail(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let h = cfg.tail.horizon;
    let samples: Vec<f64> = (0..cfg.tail.samples)
        .into_par_iter()
        .map(|r| absorption_time(&cfg.rates, 1, h, &mut stream_rng(cfg.run.seed, domain::BD, r)).unwrap_or(h))
        .collect();
    let class = classify_tail(&samples, h)?;
    art.csv(
        "tail.csv",
        &["model", "exponent", "stderr", "rss", "preferred"],
        [(&class.power, class.power_rss), (&class.exponential, class.exponential_rss)].into_iter().map(|(e, rss)| {
            vec![
                format!("{:?}", e.model).to_lowercase(),
                num(e.exponent),
                num(e.stderr),
                num(rss),
                (e.model == class.preferred).to_string(),
            ]
        }),
    )?;
    art.json(
        "tail.json",
        &json!({
            "family": cfg.rates.tag(),
            "horizon": h,
            "analytic_mean_tau_rec": mean_tau_rec(&cfg.rates, 1e-10),
            "classification": class,
        }),
    )?;
    Ok(Status::Done)
}

pub fn criteria(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let crit = extinction_criterion(cfg.criteria.degree, &cfg.rates, &cfg.infection)?;
    let mut regimes = Vec::new();
    for &a in &cfg.criteria.a_grid {
        let m = RateModel::power_law(a)?;
        for &gamma in &cfg.criteria.gamma_grid {
            regimes.push(corollary_regimes(&m, gamma)?);
        }
    }
    for &gamma in &cfg.criteria.gamma_grid {
        if !matches!(cfg.rates.family(), vlcp_core::rates::BirthDeathFamily::PowerLaw { .. }) || cfg.rates.cap().is_some() {
            regimes.push(corollary_regimes(&cfg.rates, gamma)?);
        }
    }
    art.csv(
        "criteria.csv",
        &["family", "gamma", "converges", "predicted", "agrees"],
        regimes.iter().map(|r| {
            let show = |b: Option<bool>| b.map_or("undecided".to_string(), |b| b.to_string());
            vec![r.family.clone(), num(r.gamma), show(r.converges), show(r.predicted), r.agrees().to_string()]
        }),
    )?;
    art.json("criteria.json", &json!({ "extinction_criterion": crit, "regimes": regimes }))?;
    Ok(if regimes.iter().any(|r| r.converges.is_none()) {
        Status::Inconclusive("some series could not be classified".into())
    } else {
        Status::Done
    })
}

pub fn invariant(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let g = cfg.build_graph()?;
    let lambda = constant_lambda(cfg, "CPLI")?;
    let sampling = InvariantSampling {
        burn_in: cfg.invariant.burn_in,
        horizon: cfg.run.horizon,
        spacing: cfg.invariant.spacing,
        replicas: cfg.run.replicas,
        seed: cfg.run.seed,
    };
    let rep = sample_upper_invariant_cpli(&g, &cfg.rates, lambda, &sampling)?;
    art.csv(
        "invariant.csv",
        &["time", "median_origin_dormancy"],
        rep.times.iter().zip(&rep.medians).map(|(t, m)| vec![num(*t), num(*m)]),
    )?;
    art.csv(
        "invariant_histogram.csv",
        &["level", "probability"],
        rep.histogram.iter().enumerate().map(|(k, p)| vec![k.to_string(), num(*p)]),
    )?;
    art.json("invariant.json", &rep)?;
    Ok(match rep.verdict {
        TightnessVerdict::Undetermined => Status::Inconclusive("median dormancy neither flat nor growing".into()),
        _ => Status::Done,
    })
}

fn enlarge(kind: GraphKind, factor: usize) -> Result<GraphKind> {
    Ok(match kind {
        GraphKind::Torus { dim, side } => GraphKind::Torus { dim, side: side * factor },
        GraphKind::Cycle { n } => GraphKind::Cycle { n: n * factor },
        GraphKind::TreeBall { degree, depth } => GraphKind::TreeBall { degree, depth: depth + factor - 1 },
        other => return Err(usage(format!("truncation needs a torus, cycle or tree ball, not {other}"))),
    })
}

pub fn truncation(cfg: &RunConfig, art: &mut Artifacts) -> Result<Status> {
    let small = cfg.build_graph()?;
    let large = Graph::build(enlarge(cfg.graph, cfg.truncation.factor)?)?;
    let rep = truncation_diagnostic(
        &small,
        &large,
        &cfg.rates,
        &cfg.infection,
        cfg.run.init_load,
        cfg.run.horizon,
        cfg.run.replicas,
        cfg.run.seed,
    )?;
    art.csv(
        "truncation.csv",
        &["load", "small", "large"],
        rep.pmf_small.iter().zip(&rep.pmf_large).enumerate().map(|(k, (a, b))| vec![k.to_string(), num(*a), num(*b)]),
    )?;
    art.json("truncation.json", &json!({ "large_graph": large.kind(), "report": rep }))?;
    Ok(Status::Done)
}
