//! Run configuration: TOML schema, `--set` overrides and validation.
//!
//! Parsing walks the whole document and reports every problem at once.
//! Unknown keys are errors, with a spelling suggestion when one is close.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use toml::{Table, Value};
use vlcp_core::analysis::SurvivalProxy;
use vlcp_core::{Graph, GraphKind, InfectionRate, Load, RateModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Float,
    Int,
    Str,
    Bool,
    Floats,
}

impl Ty {
    fn name(self) -> &'static str {
        match self {
            Ty::Float => "a number",
            Ty::Int => "an integer",
            Ty::Str => "a string",
            Ty::Bool => "a boolean",
            Ty::Floats => "a list of numbers",
        }
    }
}

use Ty::*;

const SCHEMA: &[(&str, &[(&str, Ty)])] = &[
    ("graph", &[("kind", Str), ("n", Int), ("dim", Int), ("side", Int), ("degree", Int), ("depth", Int)]),
    (
        "rates",
        &[
            ("family", Str),
            ("a", Float),
            ("alpha", Float),
            ("beta", Float),
            ("recovery", Float),
            ("birth", Floats),
            ("death", Floats),
            ("cap", Int),
        ],
    ),
    ("infection", &[("lambda", Float), ("gamma", Float)]),
    (
        "run",
        &[
            ("horizon", Float),
            ("replicas", Int),
            ("seed", Int),
            ("snapshots", Floats),
            ("process", Str),
            ("init", Str),
            ("init_load", Int),
        ],
    ),
    ("survival", &[("proxy", Str), ("population_threshold", Int), ("lambdas", Floats), ("shared", Bool)]),
    (
        "sweep",
        &[
            ("threshold", Float),
            ("bracket", Floats),
            ("resolution", Float),
            ("max_replicas", Int),
            ("proxy", Str),
            ("population_threshold", Int),
            ("cp_reference", Bool),
        ],
    ),
    (
        "duality",
        &[("mode", Str), ("t", Float), ("cases", Int), ("checkpoints", Int), ("lambdas", Floats), ("times", Floats)],
    ),
    ("oracle", &[("t", Float), ("tol", Float)]),
    ("tail", &[("samples", Int), ("horizon", Float)]),
    ("criteria", &[("degree", Int), ("a_grid", Floats), ("gamma_grid", Floats)]),
    ("invariant", &[("burn_in", Float), ("spacing", Float)]),
    ("truncation", &[("factor", Int)]),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Every problem found in one configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    Cpvl,
    Cpli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// `init_load · δ_o`.
    Origin,
    /// `init_load` everywhere.
    All,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DualityMode {
    Pathwise,
    Exact,
    Mc,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSection {
    pub horizon: f64,
    pub replicas: u64,
    pub seed: u64,
    pub snapshots: Vec<f64>,
    pub process: Process,
    pub init: InitKind,
    pub init_load: Load,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalSection {
    pub proxy: SurvivalProxy,
    pub lambdas: Vec<f64>,
    pub shared: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSection {
    pub threshold: f64,
    pub bracket: (f64, f64),
    pub resolution: f64,
    pub max_replicas: u64,
    pub proxy: SurvivalProxy,
    pub cp_reference: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualitySection {
    pub mode: DualityMode,
    pub t: f64,
    pub cases: u64,
    pub checkpoints: usize,
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSection {
    pub t: f64,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailSection {
    pub samples: u64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriteriaSection {
    pub degree: usize,
    pub a_grid: Vec<f64>,
    pub gamma_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvariantSection {
    pub burn_in: f64,
    pub spacing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationSection {
    pub factor: usize,
}

/// Fully validated configuration. Serialized (JSON) it is also the input of the config hash.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub graph: GraphKind,
    pub rates: RateModel,
    pub infection: InfectionRate,
    pub run: RunSection,
    pub survival: SurvivalSection,
    pub sweep: SweepSection,
    pub duality: DualitySection,
    pub oracle: OracleSection,
    pub tail: TailSection,
    pub criteria: CriteriaSection,
    pub invariant: InvariantSection,
    pub truncation: TruncationSection,
}

impl RunConfig {
    pub fn build_graph(&self) -> vlcp_core::Result<Graph> {
        Graph::build(self.graph)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    parse_with_overrides(text, &[])
}

/// Parse `text`, then apply dotted `section.key = value` overrides, then validate.
pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, ConfigErrors> {
    let mut table: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigError { path: "<config>".into(), message: e.message().trim().to_string() }])
    })?;
    let mut errors = Vec::new();
    for (path, raw) in overrides {
        if let Err(e) = apply_override(&mut table, path, raw) {
            errors.push(e);
        }
    }
    let flat = check_schema(&table, &mut errors);
    let mut b = Builder { flat, errors };
    let cfg = b.build();
    match cfg {
        Some(c) if b.errors.is_empty() => Ok(c),
        _ => Err(ConfigErrors(b.errors)),
    }
}

/// Split `key=value` as given to `--set`.
pub fn split_override(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("override `{s}` is not of the form key=value"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn apply_override(table: &mut Table, path: &str, raw: &str) -> Result<(), ConfigError> {
    let err = |m: String| ConfigError { path: path.to_string(), message: m };
    let (section, key) = path
        .split_once('.')
        .filter(|(s, k)| !s.is_empty() && !k.is_empty() && !k.contains('.'))
        .ok_or_else(|| err("override keys have the form section.key".into()))?;
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let entry = table.entry(section.to_string()).or_insert_with(|| Value::Table(Table::new()));
    match entry {
        Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(err(format!("`{section}` is not a section"))),
    }
}

fn all_paths() -> Vec<String> {
    SCHEMA.iter().flat_map(|(s, keys)| keys.iter().map(move |(k, _)| format!("{s}.{k}"))).collect()
}

fn suggest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    let limit = (word.len() / 3).max(2);
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, _)| *d <= limit)
        .min()
        .map(|(_, c)| c)
}

fn unknown(path: String, candidates: &[String]) -> ConfigError {
    let hint = suggest(&path, candidates.iter().map(String::as_str))
        .map(|s| format!("; did you mean `{s}`?"))
        .unwrap_or_default();
    ConfigError { path, message: format!("unknown key{hint}") }
}

fn check_schema(table: &Table, errors: &mut Vec<ConfigError>) -> BTreeMap<String, Value> {
    let paths = all_paths();
    let mut flat = BTreeMap::new();
    for (section, value) in table {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == section) else {
            match value {
                Value::Table(t) if !t.is_empty() => {
                    for k in t.keys() {
                        errors.push(unknown(format!("{section}.{k}"), &paths));
                    }
                }
                _ => {
                    let sections: Vec<String> = SCHEMA.iter().map(|(s, _)| s.to_string()).collect();
                    errors.push(unknown(section.clone(), &sections));
                }
            }
            continue;
        };
        let Value::Table(t) = value else {
            errors.push(ConfigError { path: section.clone(), message: "expected a section (table)".into() });
            continue;
        };
        for (k, v) in t {
            let path = format!("{section}.{k}");
            let Some((_, ty)) = keys.iter().find(|(name, _)| name == k) else {
                errors.push(unknown(path, &paths));
                continue;
            };
            match coerce(v, *ty) {
                Some(v) => {
                    flat.insert(path, v);
                }
                None => errors.push(ConfigError {
                    path,
                    message: format!("expected {}, found {}", ty.name(), v.type_str()),
                }),
            }
        }
    }
    flat
}

fn coerce(v: &Value, ty: Ty) -> Option<Value> {
    match (ty, v) {
        (Float, Value::Float(_)) | (Int, Value::Integer(_)) | (Str, Value::String(_)) | (Bool, Value::Boolean(_)) => {
            Some(v.clone())
        }
        (Float, Value::Integer(i)) => Some(Value::Float(*i as f64)),
        (Floats, Value::Array(items)) => items
            .iter()
            .map(|x| match x {
                Value::Float(f) => Some(Value::Float(*f)),
                Value::Integer(i) => Some(Value::Float(*i as f64)),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(Value::Array),
        _ => None,
    }
}

struct Builder {
    flat: BTreeMap<String, Value>,
    errors: Vec<ConfigError>,
}

impl Builder {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigError { path: path.to_string(), message: message.into() });
    }

    fn float(&self, path: &str) -> Option<f64> {
        self.flat.get(path).and_then(Value::as_float)
    }

    fn int(&mut self, path: &str) -> Option<u64> {
        let i = self.flat.get(path).and_then(Value::as_integer)?;
        if i < 0 {
            self.fail(path, format!("must be >= 0, got {i}"));
            return None;
        }
        Some(i as u64)
    }

    fn string(&self, path: &str) -> Option<String> {
        self.flat.get(path).and_then(Value::as_str).map(str::to_string)
    }

    fn boolean(&self, path: &str) -> Option<bool> {
        self.flat.get(path).and_then(Value::as_bool)
    }

    fn floats(&self, path: &str) -> Option<Vec<f64>> {
        self.flat
            .get(path)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_float).collect())
    }

    fn required<T>(&mut self, path: &str, v: Option<T>) -> Option<T> {
        if v.is_none() && !self.flat.contains_key(path) {
            self.fail(path, "missing required key");
        }
        v
    }

    fn positive(&mut self, path: &str, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            self.fail(path, format!("must be finite and > 0, got {v}"));
        }
        v
    }

    fn choice<T: Copy>(&mut self, path: &str, default: T, options: &[(&str, T)]) -> T {
        let Some(s) = self.string(path) else { return default };
        match options.iter().find(|(name, _)| *name == s) {
            Some((_, v)) => *v,
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.fail(path, format!("`{s}` is not one of {}", names.join(", ")));
                default
            }
        }
    }

    fn graph(&mut self) -> Option<GraphKind> {
        let kind = self.string("graph.kind");
        let kind = self.required("graph.kind", kind)?;
        let need = |b: &mut Builder, key: &str| {
            let path = format!("graph.{key}");
            let v = b.int(&path);
            b.required(&path, v).map(|v| v as usize)
        };
        let g = match kind.as_str() {
            "cycle" => GraphKind::Cycle { n: need(self, "n")? },
            "complete" => GraphKind::Complete { n: need(self, "n")? },
            "torus" => {
                let dim = self.int("graph.dim").unwrap_or(1) as usize;
                GraphKind::Torus { dim, side: need(self, "side")? }
            }
            "tree_ball" => {
                let degree = need(self, "degree");
                let depth = need(self, "depth");
                GraphKind::TreeBall { degree: degree?, depth: depth? }
            }
            "edge_pair" => GraphKind::EdgePair,
            other => {
                let hint = suggest(other, ["cycle", "complete", "torus", "tree_ball", "edge_pair"])
                    .map(|s| format!("; did you mean `{s}`?"))
                    .unwrap_or_default();
                self.fail("graph.kind", format!("unknown graph kind `{other}`{hint}"));
                return None;
            }
        };
        match Graph::build(g) {
            Ok(_) => Some(g),
            Err(e) => {
                self.fail("graph", e.to_string());
                None
            }
        }
    }

    fn rates(&mut self) -> Option<RateModel> {
        let family = self.string("rates.family");
        let family = self.required("rates.family", family)?;
        let model = match family.as_str() {
            "power_law" => {
                let a = self.float("rates.a");
                RateModel::power_law(self.required("rates.a", a)?)
            }
            "linear" => {
                let alpha = self.float("rates.alpha");
                let beta = self.float("rates.beta");
                let alpha = self.required("rates.alpha", alpha);
                let beta = self.required("rates.beta", beta);
                RateModel::linear(alpha?, beta?)
            }
            "classical" => RateModel::classical_contact(self.float("rates.recovery").unwrap_or(1.0)),
            "table" => {
                let birth = self.floats("rates.birth");
                let death = self.floats("rates.death");
                let birth = self.required("rates.birth", birth);
                let death = self.required("rates.death", death);
                RateModel::table(birth?, death?)
            }
            other => {
                self.fail("rates.family", format!("`{other}` is not one of power_law, linear, classical, table"));
                return None;
            }
        };
        let model = match (model, self.int("rates.cap")) {
            (Ok(m), Some(k)) => m.capped(k as Load),
            (m, None) => m,
            (Err(e), Some(_)) => Err(e),
        };
        match model {
            Ok(m) => Some(m),
            Err(e) => {
                self.fail("rates", e.to_string());
                None
            }
        }
    }

    fn infection(&mut self) -> Option<InfectionRate> {
        let lambda = self.float("infection.lambda");
        let lambda = self.required("infection.lambda", lambda)?;
        let gamma = self.float("infection.gamma").unwrap_or(0.0);
        let inf = if gamma == 0.0 { InfectionRate::constant(lambda) } else { InfectionRate::power(lambda, gamma) };
        match inf {
            Ok(i) => Some(i),
            Err(e) => {
                self.fail("infection", e.to_string());
                None
            }
        }
    }

    fn proxy(&mut self, section: &str, default: SurvivalProxy) -> SurvivalProxy {
        let path = format!("{section}.proxy");
        let threshold = self.int(&format!("{section}.population_threshold")).unwrap_or(0) as usize;
        match self.string(&path).as_deref() {
            None => default,
            Some("alive") => SurvivalProxy::AliveAtHorizon,
            Some("boundary") => SurvivalProxy::ReachedBoundary,
            Some("population") => {
                if threshold == 0 {
                    self.fail(&format!("{section}.population_threshold"), "required (>= 1) with proxy = population");
                }
                SurvivalProxy::PopulationThreshold { threshold }
            }
            Some(other) => {
                self.fail(&path, format!("`{other}` is not one of alive, boundary, population"));
                default
            }
        }
    }

    fn build(&mut self) -> Option<RunConfig> {
        let graph = self.graph();
        let rates = self.rates();
        let infection = self.infection();

        let horizon = self.float("run.horizon");
        let horizon = self.required("run.horizon", horizon).map(|h| self.positive("run.horizon", h));
        let replicas = self.int("run.replicas").unwrap_or(1000);
        if replicas == 0 {
            self.fail("run.replicas", "must be >= 1");
        }
        let seed = self.int("run.seed").unwrap_or(0);
        let snapshots = self.floats("run.snapshots").unwrap_or_default();
        if snapshots.windows(2).any(|w| w[0] > w[1]) || snapshots.iter().any(|t| !(*t >= 0.0)) {
            self.fail("run.snapshots", "snapshot times must be non-negative and ascending");
        }
        let process = self.choice("run.process", Process::Cpvl, &[("cpvl", Process::Cpvl), ("cpli", Process::Cpli)]);
        let init = self.choice(
            "run.init",
            InitKind::Origin,
            &[("origin", InitKind::Origin), ("all", InitKind::All), ("zero", InitKind::Zero)],
        );
        let init_load = self.int("run.init_load").unwrap_or(1);
        if init_load == 0 || init_load > Load::MAX as u64 {
            self.fail("run.init_load", "must be between 1 and 2^32 - 1");
        }
        if let (Some(m), Some(top)) = (&rates, rates.as_ref().and_then(|m| m.max_load())) {
            if init_load > top as u64 {
                let msg = format!("exceeds the largest load {top} of {m}");
                self.fail("run.init_load", msg);
            }
        }

        let default_proxy = graph
            .and_then(|g| Graph::build(g).ok())
            .map_or(SurvivalProxy::AliveAtHorizon, |g| SurvivalProxy::default_for(&g));
        let lambda = infection.map(|i| i.lambda()).unwrap_or(0.0);
        let survival = SurvivalSection {
            proxy: self.proxy("survival", default_proxy),
            lambdas: self.floats("survival.lambdas").unwrap_or_else(|| vec![lambda]),
            shared: self.boolean("survival.shared").unwrap_or(false),
        };
        if survival.lambdas.is_empty() || survival.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            self.fail("survival.lambdas", "need at least one finite rate >= 0");
        }

        let bracket = self.floats("sweep.bracket").unwrap_or_else(|| vec![0.25, 4.0]);
        let bracket = match bracket[..] {
            [lo, hi] if lo >= 0.0 && hi > lo && hi.is_finite() => (lo, hi),
            _ => {
                self.fail("sweep.bracket", "expected [lo, hi] with 0 <= lo < hi");
                (0.25, 4.0)
            }
        };
        let threshold = self.float("sweep.threshold").unwrap_or(0.5);
        if !(threshold > 0.0 && threshold < 1.0) {
            self.fail("sweep.threshold", "must lie in (0, 1)");
        }
        let resolution = self.float("sweep.resolution").unwrap_or(0.05);
        let resolution = self.positive("sweep.resolution", resolution);
        let sweep = SweepSection {
            threshold,
            bracket,
            resolution,
            max_replicas: self.int("sweep.max_replicas").unwrap_or(replicas * 4).max(replicas),
            proxy: self.proxy("sweep", default_proxy),
            cp_reference: self.boolean("sweep.cp_reference").unwrap_or(true),
        };

        let mode = self.choice(
            "duality.mode",
            DualityMode::Pathwise,
            &[("pathwise", DualityMode::Pathwise), ("exact", DualityMode::Exact), ("mc", DualityMode::Mc)],
        );
        let dual_t = self.float("duality.t").unwrap_or(5.0);
        let dual_t = self.positive("duality.t", dual_t);
        let duality = DualitySection {
            mode,
            t: dual_t,
            cases: self.int("duality.cases").unwrap_or(100),
            checkpoints: self.int("duality.checkpoints").unwrap_or(10) as usize,
            lambdas: self.floats("duality.lambdas").unwrap_or_else(|| vec![lambda]),
            times: self.floats("duality.times").unwrap_or_else(|| vec![dual_t]),
        };
        if duality.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            self.fail("duality.times", "times must be finite and >= 0");
        }

        let oracle_t = self.float("oracle.t").unwrap_or(1.0);
        let tol = self.float("oracle.tol").unwrap_or(1e-10);
        let oracle = OracleSection { t: self.positive("oracle.t", oracle_t), tol: self.positive("oracle.tol", tol) };

        let tail_h = self.float("tail.horizon").or(horizon).unwrap_or(1.0);
        let tail = TailSection {
            samples: self.int("tail.samples").unwrap_or(20_000),
            horizon: self.positive("tail.horizon", tail_h),
        };
        if tail.samples < vlcp_core::bd::MIN_SAMPLES as u64 {
            self.fail("tail.samples", format!("must be >= {}", vlcp_core::bd::MIN_SAMPLES));
        }

        let default_degree = graph.and_then(|g| Graph::build(g).ok()).map_or(1, |g| g.degree());
        let criteria = CriteriaSection {
            degree: self.int("criteria.degree").map_or(default_degree, |d| d as usize),
            a_grid: self.floats("criteria.a_grid").unwrap_or_default(),
            gamma_grid: self.floats("criteria.gamma_grid").unwrap_or_default(),
        };
        if criteria.degree == 0 {
            self.fail("criteria.degree", "must be >= 1");
        }

        let h = horizon.unwrap_or(1.0);
        let burn_in = self.float("invariant.burn_in").unwrap_or(h / 4.0);
        if !(0.0..=h).contains(&burn_in) {
            self.fail("invariant.burn_in", format!("must lie in [0, run.horizon = {h}]"));
        }
        let spacing = self.float("invariant.spacing").unwrap_or(h / 40.0);
        let invariant = InvariantSection { burn_in, spacing: self.positive("invariant.spacing", spacing) };

        let factor = self.int("truncation.factor").unwrap_or(2) as usize;
        if factor < 2 {
            self.fail("truncation.factor", "must be >= 2");
        }

        Some(RunConfig {
            graph: graph?,
            rates: rates?,
            infection: infection?,
            run: RunSection { horizon: horizon?, replicas, seed, snapshots, process, init, init_load: init_load as Load },
            survival,
            sweep,
            duality,
            oracle,
            tail,
            criteria,
            invariant,
            truncation: TruncationSection { factor },
        })
    }
}
