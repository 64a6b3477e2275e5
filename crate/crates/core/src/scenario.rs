//! Scenario configs: parsing, schema validation and preparation of the
//! library objects each kind runs on.
//!
//! A config is a JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "kind": "temporal",
//!   "seed": 7,
//!   "output_dir": "out/temporal",
//!   "format": "csv",
//!   "params": { "structures": ["a", "b"], "entropies": [0.2, 0.9], "lambda": 0.5 }
//! }
//! ```
//!
//! Validation never stops at the first problem; every violation is reported
//! with the line of the offending key.

mod run;

use std::fmt;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::agents::{AgentInit, EmergenceConfig, GameParams};
use crate::dynamics::{HalfCycle, Regularizer, UpdateSpec};
use crate::error::{Error, Result};
use crate::hierarchy::{redundant_bit_tower, Hierarchy};
use crate::ib::{default_beta_grid, geometric_grid};
use crate::prob::{Alphabet, Dist, Embedding, Joint, Kernel};
use crate::transport::{CostMatrix, DEFAULT_REG, EXACT_MAX_SIDE};

pub use run::{fmt_float, run_scenario, RunReport, SeedReport};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Temporal,
    Inverted,
    HalfCycle,
    Hierarchy,
    Emergence,
    Oscillator,
    IbCurve,
    OtCheck,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Temporal,
        Kind::Inverted,
        Kind::HalfCycle,
        Kind::Hierarchy,
        Kind::Emergence,
        Kind::Oscillator,
        Kind::IbCurve,
        Kind::OtCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Temporal => "temporal",
            Kind::Inverted => "inverted",
            Kind::HalfCycle => "half_cycle",
            Kind::Hierarchy => "hierarchy",
            Kind::Emergence => "emergence",
            Kind::Oscillator => "oscillator",
            Kind::IbCurve => "ib_curve",
            Kind::OtCheck => "ot_check",
        }
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    fn schema(self) -> Vec<FieldSpec> {
        use Ty::*;
        match self {
            Kind::Temporal => vec![
                req("structures", Texts),
                req("entropies", Numbers),
                req("lambda", Positive),
                opt("max_t", Count),
                opt("start", Numbers),
                opt("embedding", Matrix),
            ],
            Kind::Inverted => vec![
                req("candidates", Texts),
                req("contexts", Texts),
                req("kernel", Matrix),
                req("lambda", NonNegative),
                opt("regularizer", Text),
                opt("ot_reg", Positive),
                opt("starts", Texts),
                opt("max_t", Count),
            ],
            Kind::HalfCycle => vec![
                req("contents", Texts),
                req("latents", Texts),
                req("contexts", Texts),
                opt("recognition_latents", Texts),
                req("z_given_phi", Matrix),
                req("psi_given_z", Matrix),
                req("z_given_psi", Matrix),
                req("phi_given_z", Matrix),
                req("start", Text),
                opt("mode", Text),
                opt("max_t", Count),
            ],
            Kind::Hierarchy => vec![
                req("noise", Numbers),
                req("lambda", NonNegative),
                opt("regularizer", Text),
                opt("ot_reg", Positive),
                opt("starts", Texts),
                opt("max_t", Count),
            ],
            Kind::Emergence => vec![
                req("factors", TextMatrix),
                req("vocab", Counts),
                req("rounds", Count),
                req("lambda", NonNegative),
                opt("n_agents", Count),
                opt("eta", Positive),
                opt("alpha", Positive),
                opt("inhibition", Fraction),
                opt("eps_start", Fraction),
                opt("eps_end", Fraction),
                opt("init", Text),
                opt("init_weight", Positive),
                opt("window", Count),
                opt("threshold", Fraction),
                opt("metrics_every", Count),
            ],
            Kind::Oscillator => vec![
                opt("matrix", Matrix),
                opt("radius", NonNegative),
                opt("omega", Number),
                opt("damping", Positive),
                opt("v0", Numbers),
                opt("max_t", Count),
                opt("tol", Positive),
            ],
            Kind::IbCurve => vec![
                req("joint", Matrix),
                req("z_size", Count),
                opt("betas", Numbers),
                opt("beta_min", Positive),
                opt("beta_max", Positive),
                opt("beta_points", Count),
            ],
            Kind::OtCheck => vec![
                opt("instances", Count),
                opt("max_side", Count),
                opt("reg", Positive),
                opt("tolerance", Positive),
            ],
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ty {
    Number,
    Positive,
    NonNegative,
    /// Number in `[0, 1]`.
    Fraction,
    /// Integer ≥ 1.
    Count,
    Text,
    Texts,
    Numbers,
    Counts,
    Matrix,
    TextMatrix,
}

impl Ty {
    fn describe(self) -> &'static str {
        match self {
            Ty::Number => "a finite number",
            Ty::Positive => "a positive number",
            Ty::NonNegative => "a non-negative number",
            Ty::Fraction => "a number in [0, 1]",
            Ty::Count => "a positive integer",
            Ty::Text => "a string",
            Ty::Texts => "a non-empty list of strings",
            Ty::Numbers => "a non-empty list of numbers",
            Ty::Counts => "a non-empty list of positive integers",
            Ty::Matrix => "a non-empty list of non-empty number lists",
            Ty::TextMatrix => "a non-empty list of non-empty string lists",
        }
    }

    fn accepts(self, v: &Value) -> bool {
        let num = |v: &Value| v.as_f64().filter(|x| x.is_finite());
        let count = |v: &Value| v.as_u64().is_some_and(|n| n >= 1);
        let list = |v: &Value, f: &dyn Fn(&Value) -> bool| v.as_array().is_some_and(|a| !a.is_empty() && a.iter().all(f));
        match self {
            Ty::Number => num(v).is_some(),
            Ty::Positive => num(v).is_some_and(|x| x > 0.0),
            Ty::NonNegative => num(v).is_some_and(|x| x >= 0.0),
            Ty::Fraction => num(v).is_some_and(|x| (0.0..=1.0).contains(&x)),
            Ty::Count => count(v),
            Ty::Text => v.is_string(),
            Ty::Texts => list(v, &Value::is_string),
            Ty::Numbers => list(v, &|x| num(x).is_some()),
            Ty::Counts => list(v, &count),
            Ty::Matrix => list(v, &|r| list(r, &|x| num(x).is_some())),
            Ty::TextMatrix => list(v, &|r| list(r, &Value::is_string)),
        }
    }
}

struct FieldSpec {
    name: &'static str,
    ty: Ty,
    required: bool,
}

const fn req(name: &'static str, ty: Ty) -> FieldSpec {
    FieldSpec { name, ty, required: true }
}

const fn opt(name: &'static str, ty: Ty) -> FieldSpec {
    FieldSpec { name, ty, required: false }
}

/// One schema or consistency violation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.message),
            None => write!(f, "{}: {}", self.path, self.message),
        }
    }
}

fn issues_error(issues: &[ConfigIssue]) -> Error {
    Error::Config(issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))
}

/// Line of the last key in `path`, searching each key after its parent.
fn line_of(text: &str, path: &[&str]) -> Option<usize> {
    let mut pos = None;
    let mut from = 0;
    for key in path {
        let pat = format!("\"{key}\"");
        loop {
            let i = text[from..].find(&pat)? + from;
            from = i + pat.len();
            if text[from..].trim_start().starts_with(':') {
                pos = Some(i);
                break;
            }
        }
    }
    pos.map(|p| text[..p].matches('\n').count() + 1)
}

struct Issues<'a> {
    text: &'a str,
    list: Vec<ConfigIssue>,
}

impl Issues<'_> {
    fn push(&mut self, path: &[&str], message: impl Into<String>) {
        self.list.push(ConfigIssue { line: line_of(self.text, path), path: path.join("."), message: message.into() });
    }

    /// A missing key is reported at the line of its parent.
    fn missing(&mut self, parent: &[&str], key: &str, message: impl Into<String>) {
        let mut path = parent.to_vec();
        path.push(key);
        self.list.push(ConfigIssue { line: line_of(self.text, parent), path: path.join("."), message: message.into() });
    }
}

/// Values the command line may substitute before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Overrides {
    fn is_empty(&self) -> bool {
        self.seeds.is_none() && self.output_dir.is_none() && self.format.is_none()
    }

    fn apply(&self, root: &mut Map<String, Value>) {
        if let Some(seeds) = &self.seeds {
            root.remove("seed");
            root.remove("seeds");
            match seeds.as_slice() {
                [one] => root.insert("seed".into(), Value::from(*one)),
                many => root.insert("seeds".into(), Value::from(many.to_vec())),
            };
        }
        if let Some(dir) = &self.output_dir {
            root.insert("output_dir".into(), Value::from(dir.to_string_lossy().into_owned()));
        }
        if let Some(f) = self.format {
            root.insert("format".into(), Value::from(f.name()));
        }
    }
}

/// Parses `A..B` (inclusive) or a single integer.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("seed range {s:?} is not A..B with A <= B"));
    match s.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

/// Objects a validated config runs on.
#[derive(Clone, Debug)]
pub enum Plan {
    Temporal {
        alphabet: Alphabet,
        /// `None` draws a seeded start.
        start: Option<Dist>,
        entropies: Vec<f64>,
        lambda: f64,
        max_t: usize,
        embedding: Embedding,
    },
    Inverted {
        kernel: Kernel,
        spec: UpdateSpec,
        starts: Vec<String>,
        max_t: usize,
    },
    HalfCycle {
        cycle: HalfCycle,
        start: String,
        sampled: bool,
        max_t: usize,
    },
    Hierarchy {
        tower: Hierarchy,
        starts: Vec<String>,
        max_t: usize,
    },
    Emergence(EmergenceConfig),
    Oscillator {
        matrix: Vec<Vec<f64>>,
        /// `None` draws a seeded start.
        v0: Option<Vec<f64>>,
        max_t: usize,
        tol: f64,
    },
    IbCurve {
        joint: Joint,
        z_size: usize,
        betas: Vec<f64>,
    },
    OtCheck {
        instances: usize,
        max_side: usize,
        reg: f64,
        tolerance: f64,
    },
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub kind: Kind,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub format: Format,
    pub plan: Plan,
    /// Effective config text, copied verbatim into the output directory.
    pub source: String,
    /// Effective config as parsed, echoed into the manifest.
    pub value: Value,
}

/// Reads and validates a config file, returning every violation found.
pub fn validate_config(path: &Path) -> Result<Vec<ConfigIssue>> {
    let text = std::fs::read_to_string(path)?;
    Ok(match parse_config(&text, &Overrides::default()) {
        Ok(_) => Vec::new(),
        Err(issues) => issues,
    })
}

/// Reads, overrides and validates a config file.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, overrides).map_err(|i| issues_error(&i))
}

pub fn parse_config(text: &str, overrides: &Overrides) -> std::result::Result<ScenarioConfig, Vec<ConfigIssue>> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| {
        vec![ConfigIssue { line: Some(e.line()), path: "<document>".into(), message: format!("invalid JSON: {e}") }]
    })?;
    let Some(root) = value.as_object_mut() else {
        return Err(vec![ConfigIssue { line: Some(1), path: "<document>".into(), message: "config must be a JSON object".into() }]);
    };
    overrides.apply(root);
    let root = &*root;
    let mut iss = Issues { text, list: Vec::new() };

    const TOP: [&str; 7] = ["schema_version", "kind", "seed", "seeds", "output_dir", "format", "params"];
    for key in root.keys().filter(|k| !TOP.contains(&k.as_str())) {
        iss.push(&[key], format!("unknown field; expected one of {}", TOP.join(", ")));
    }
    match root.get("schema_version").map(Value::as_u64) {
        None => iss.missing(&[], "schema_version", "missing required field"),
        Some(Some(SCHEMA_VERSION)) => {}
        Some(_) => iss.push(&["schema_version"], format!("unsupported schema version; this build reads {SCHEMA_VERSION}")),
    }
    let names: Vec<&str> = Kind::ALL.iter().map(|k| k.name()).collect();
    let kind = match root.get("kind") {
        None => {
            iss.missing(&[], "kind", format!("missing required field; one of {}", names.join(", ")));
            None
        }
        Some(v) => {
            let k = v.as_str().and_then(Kind::parse);
            if k.is_none() {
                iss.push(&["kind"], format!("unknown kind {v}; one of {}", names.join(", ")));
            }
            k
        }
    };
    let seeds = parse_seeds(root, &mut iss);
    let output_dir = match root.get("output_dir") {
        None => {
            iss.missing(&[], "output_dir", "missing required field");
            None
        }
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(_) => {
            iss.push(&["output_dir"], "must be a non-empty string");
            None
        }
    };
    let format = match root.get("format") {
        None => Some(Format::Csv),
        Some(v) => {
            let f = v.as_str().and_then(Format::parse);
            if f.is_none() {
                iss.push(&["format"], "must be \"csv\" or \"json\"");
            }
            f
        }
    };
    let params = match root.get("params") {
        None => {
            iss.missing(&[], "params", "missing required field");
            None
        }
        Some(Value::Object(p)) => Some(p),
        Some(_) => {
            iss.push(&["params"], "must be an object");
            None
        }
    };
    let plan = match (kind, params) {
        (Some(kind), Some(params)) => {
            let before = iss.list.len();
            check_schema(kind, params, &mut iss);
            if iss.list.len() == before {
                prepare(kind, params, &mut iss)
            } else {
                None
            }
        }
        _ => None,
    };
    match (iss.list.is_empty(), kind, seeds, output_dir, format, plan) {
        (true, Some(kind), Some(seeds), Some(output_dir), Some(format), Some(plan)) => {
            let source = if overrides.is_empty() {
                text.to_string()
            } else {
                serde_json::to_string_pretty(&value).expect("a parsed value serializes") + "\n"
            };
            Ok(ScenarioConfig { kind, seeds, output_dir, format, plan, source, value })
        }
        _ => Err(iss.list),
    }
}

fn parse_seeds(root: &Map<String, Value>, iss: &mut Issues) -> Option<Vec<u64>> {
    match (root.get("seed"), root.get("seeds")) {
        (None, None) => {
            iss.missing(&[], "seed", "seeds must be explicit: give \"seed\" or \"seeds\"");
            None
        }
        (Some(_), Some(_)) => {
            iss.push(&["seeds"], "give either \"seed\" or \"seeds\", not both");
            None
        }
        (Some(v), None) => {
            let s = v.as_u64();
            if s.is_none() {
                iss.push(&["seed"], "must be a non-negative integer");
            }
            s.map(|s| vec![s])
        }
        (None, Some(v)) => {
            let parsed = match v {
                Value::String(s) => parse_seed_range(s).ok(),
                Value::Array(a) if !a.is_empty() => a.iter().map(Value::as_u64).collect(),
                _ => None,
            };
            if parsed.is_none() {
                iss.push(&["seeds"], "must be a non-empty list of non-negative integers or an inclusive range \"A..B\"");
            }
            parsed
        }
    }
}

fn check_schema(kind: Kind, params: &Map<String, Value>, iss: &mut Issues) {
    let schema = kind.schema();
    for f in &schema {
        match params.get(f.name) {
            None if f.required => iss.missing(&["params"], f.name, format!("missing required field for kind '{kind}'")),
            Some(v) if !f.ty.accepts(v) => iss.push(&["params", f.name], format!("must be {}", f.ty.describe())),
            _ => {}
        }
    }
    for key in params.keys() {
        if !schema.iter().any(|f| f.name == key) {
            let known: Vec<&str> = schema.iter().map(|f| f.name).collect();
            iss.push(&["params", key], format!("unknown field for kind '{kind}'; expected one of {}", known.join(", ")));
        }
    }
}

fn num(p: &Map<String, Value>, key: &str) -> Option<f64> {
    p.get(key).and_then(Value::as_f64)
}

fn count(p: &Map<String, Value>, key: &str) -> Option<usize> {
    p.get(key).and_then(Value::as_u64).map(|n| n as usize)
}

fn text<'a>(p: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    p.get(key).and_then(Value::as_str)
}

fn texts(p: &Map<String, Value>, key: &str) -> Option<Vec<String>> {
    p.get(key)?.as_array()?.iter().map(|v| v.as_str().map(str::to_string)).collect()
}

fn numbers(p: &Map<String, Value>, key: &str) -> Option<Vec<f64>> {
    p.get(key)?.as_array()?.iter().map(Value::as_f64).collect()
}

fn matrix(p: &Map<String, Value>, key: &str) -> Option<Vec<Vec<f64>>> {
    p.get(key)?
        .as_array()?
        .iter()
        .map(|r| r.as_array()?.iter().map(Value::as_f64).collect())
        .collect()
}

fn alphabet(p: &Map<String, Value>, key: &str, iss: &mut Issues) -> Option<Alphabet> {
    Alphabet::new(texts(p, key)?).map_err(|e| iss.push(&["params", key], e.to_string())).ok()
}

/// Checks that the matrix at `key` is `rows × cols`, naming the fields that
/// declared each size.
fn check_shape(
    m: &[Vec<f64>],
    key: &str,
    (rows, row_src): (usize, &str),
    (cols, col_src): (usize, &str),
    iss: &mut Issues,
) -> bool {
    let mut ok = true;
    if m.len() != rows {
        iss.push(&["params", key], format!("has {} rows but params.{row_src} declares {rows}", m.len()));
        ok = false;
    }
    for (i, r) in m.iter().enumerate() {
        if r.len() != cols {
            iss.push(&["params", key], format!("row {i} has {} entries but params.{col_src} declares {cols}", r.len()));
            ok = false;
        }
    }
    ok
}

fn kernel(p: &Map<String, Value>, key: &str, from: (&Alphabet, &str), to: (&Alphabet, &str), iss: &mut Issues) -> Option<Kernel> {
    let m = matrix(p, key)?;
    if !check_shape(&m, key, (from.0.size(), from.1), (to.0.size(), to.1), iss) {
        return None;
    }
    Kernel::new(from.0.clone(), to.0.clone(), m).map_err(|e| iss.push(&["params", key], e.to_string())).ok()
}

fn regularizer(p: &Map<String, Value>, contexts: &Alphabet, iss: &mut Issues) -> Option<Regularizer> {
    match text(p, "regularizer").unwrap_or("kl") {
        "kl" => Some(Regularizer::KlProx),
        "ot" => Some(Regularizer::OtProx {
            cost: CostMatrix::zero_one(contexts),
            reg: num(p, "ot_reg").unwrap_or(DEFAULT_REG),
        }),
        other => {
            iss.push(&["params", "regularizer"], format!("unknown regularizer {other:?}; \"kl\" or \"ot\""));
            None
        }
    }
}

fn labels_within(p: &Map<String, Value>, key: &str, within: &Alphabet, iss: &mut Issues) -> bool {
    let mut ok = true;
    for l in texts(p, key).unwrap_or_default() {
        if within.index_of(&l).is_none() {
            iss.push(&["params", key], format!("label {l:?} is not in {:?}", within.labels()));
            ok = false;
        }
    }
    ok
}

fn prepare(kind: Kind, p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    match kind {
        Kind::Temporal => prepare_temporal(p, iss),
        Kind::Inverted => prepare_inverted(p, iss),
        Kind::HalfCycle => prepare_half_cycle(p, iss),
        Kind::Hierarchy => prepare_hierarchy(p, iss),
        Kind::Emergence => prepare_emergence(p, iss),
        Kind::Oscillator => prepare_oscillator(p, iss),
        Kind::IbCurve => prepare_ib_curve(p, iss),
        Kind::OtCheck => prepare_ot_check(p, iss),
    }
}

fn prepare_temporal(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let alphabet = alphabet(p, "structures", iss)?;
    let n = alphabet.size();
    let entropies = numbers(p, "entropies")?;
    let mut ok = true;
    if entropies.len() != n {
        iss.push(&["params", "entropies"], format!("has {} entries but params.structures declares {n}", entropies.len()));
        ok = false;
    }
    if entropies.iter().any(|h| *h < 0.0) {
        iss.push(&["params", "entropies"], "conditional entropies must be non-negative");
        ok = false;
    }
    let start = match numbers(p, "start") {
        None => None,
        Some(v) if v.len() != n => {
            iss.push(&["params", "start"], format!("has {} entries but params.structures declares {n}", v.len()));
            ok = false;
            None
        }
        Some(v) => match Dist::new(alphabet.clone(), v) {
            Ok(d) => Some(d),
            Err(e) => {
                iss.push(&["params", "start"], e.to_string());
                ok = false;
                None
            }
        },
    };
    let embedding = match matrix(p, "embedding") {
        None => Embedding::indices(&alphabet),
        Some(rows) => {
            if rows.len() != n {
                iss.push(&["params", "embedding"], format!("has {} rows but params.structures declares {n}", rows.len()));
                return None;
            }
            let map = alphabet.labels().iter().cloned().zip(rows).collect();
            Embedding::new(map).map_err(|e| iss.push(&["params", "embedding"], e.to_string())).ok()?
        }
    };
    ok.then(|| Plan::Temporal {
        alphabet,
        start,
        entropies,
        lambda: num(p, "lambda").unwrap_or(1.0),
        max_t: count(p, "max_t").unwrap_or(500),
        embedding,
    })
}

fn prepare_inverted(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let candidates = alphabet(p, "candidates", iss);
    let contexts = alphabet(p, "contexts", iss);
    let (candidates, contexts) = (candidates?, contexts?);
    let kernel = kernel(p, "kernel", (&candidates, "candidates"), (&contexts, "contexts"), iss);
    let reg = regularizer(p, &contexts, iss);
    let starts_ok = labels_within(p, "starts", &candidates, iss);
    let spec = UpdateSpec::new(candidates.clone(), num(p, "lambda")?, reg?)
        .map_err(|e| iss.push(&["params", "lambda"], e.to_string()))
        .ok()?;
    let starts = texts(p, "starts").unwrap_or_else(|| candidates.labels().to_vec());
    (starts_ok).then_some(Plan::Inverted { kernel: kernel?, spec, starts, max_t: count(p, "max_t").unwrap_or(100) })
}

fn prepare_half_cycle(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let contents = alphabet(p, "contents", iss);
    let latents = alphabet(p, "latents", iss);
    let contexts = alphabet(p, "contexts", iss);
    let recog = if p.contains_key("recognition_latents") {
        alphabet(p, "recognition_latents", iss)
    } else {
        latents.clone()
    };
    let (contents, latents, contexts, recog) = (contents?, latents?, contexts?, recog?);
    let recog_src = if p.contains_key("recognition_latents") { "recognition_latents" } else { "latents" };
    let a = kernel(p, "z_given_phi", (&contents, "contents"), (&latents, "latents"), iss);
    let b = kernel(p, "psi_given_z", (&latents, "latents"), (&contexts, "contexts"), iss);
    let c = kernel(p, "z_given_psi", (&contexts, "contexts"), (&recog, recog_src), iss);
    let d = kernel(p, "phi_given_z", (&recog, recog_src), (&contents, "contents"), iss);
    let start = text(p, "start")?.to_string();
    let mut ok = true;
    if contents.index_of(&start).is_none() {
        iss.push(&["params", "start"], format!("label {start:?} is not in params.contents"));
        ok = false;
    }
    let sampled = match text(p, "mode").unwrap_or("expected") {
        "expected" => false,
        "sampled" => true,
        other => {
            iss.push(&["params", "mode"], format!("unknown mode {other:?}; \"expected\" or \"sampled\""));
            ok = false;
            false
        }
    };
    let cycle = HalfCycle::new(a?, b?, c?, d?).map_err(|e| iss.push(&["params"], e.to_string())).ok()?;
    ok.then(|| Plan::HalfCycle { cycle, start, sampled, max_t: count(p, "max_t").unwrap_or(100) })
}

fn prepare_hierarchy(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let noise = numbers(p, "noise")?;
    if noise.len() != 2 || noise.iter().any(|e| !(0.0..=1.0).contains(e)) {
        iss.push(&["params", "noise"], "must hold two flip rates in [0, 1], one per bit value");
        return None;
    }
    let bits = Alphabet::new(["0", "1"]).expect("static labels");
    let reg = regularizer(p, &bits, iss)?;
    let starts = texts(p, "starts").unwrap_or_else(|| vec!["0".into(), "0".into()]);
    let mut ok = labels_within(p, "starts", &bits, iss);
    if starts.len() != 2 {
        iss.push(&["params", "starts"], format!("has {} entries but the tower has 2 units", starts.len()));
        ok = false;
    }
    let tower = redundant_bit_tower([noise[0], noise[1]], num(p, "lambda")?, reg)
        .map_err(|e| iss.push(&["params"], e.to_string()))
        .ok()?;
    ok.then(|| Plan::Hierarchy { tower, starts, max_t: count(p, "max_t").unwrap_or(50) })
}

fn prepare_emergence(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let factors: Vec<Vec<String>> = p
        .get("factors")?
        .as_array()?
        .iter()
        .map(|f| f.as_array().map(|a| a.iter().filter_map(|s| s.as_str().map(str::to_string)).collect()))
        .collect::<Option<_>>()?;
    let vocab: Vec<usize> = p.get("vocab")?.as_array()?.iter().map(|v| v.as_u64().map(|n| n as usize)).collect::<Option<_>>()?;
    if vocab.len() != factors.len() {
        iss.push(&["params", "vocab"], format!("has {} entries but params.factors declares {}", vocab.len(), factors.len()));
        return None;
    }
    let d = GameParams::default();
    let init = match text(p, "init").unwrap_or("fresh") {
        "fresh" => AgentInit::Fresh,
        "solved" => AgentInit::Solved { weight: num(p, "init_weight").unwrap_or(10.0) },
        other => {
            iss.push(&["params", "init"], format!("unknown init {other:?}; \"fresh\" or \"solved\""));
            return None;
        }
    };
    let cfg = EmergenceConfig {
        factors,
        vocab,
        n_agents: count(p, "n_agents").unwrap_or(2),
        rounds: count(p, "rounds")?,
        params: GameParams {
            lambda: num(p, "lambda")?,
            eta: num(p, "eta").unwrap_or(d.eta),
            alpha: num(p, "alpha").unwrap_or(d.alpha),
            inhibition: num(p, "inhibition").unwrap_or(d.inhibition),
            eps_start: num(p, "eps_start").unwrap_or(d.eps_start),
            eps_end: num(p, "eps_end").unwrap_or(d.eps_end),
        },
        init,
        window: count(p, "window").unwrap_or(500),
        threshold: num(p, "threshold").unwrap_or(0.99),
        metrics_every: count(p, "metrics_every").unwrap_or(100),
    };
    cfg.validate().map_err(|e| iss.push(&["params"], e.to_string())).ok()?;
    Some(Plan::Emergence(cfg))
}

fn prepare_oscillator(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let base = match (matrix(p, "matrix"), num(p, "radius")) {
        (Some(_), Some(_)) => {
            iss.push(&["params", "radius"], "give either params.matrix or params.radius, not both");
            return None;
        }
        (None, None) => {
            iss.missing(&["params"], "radius", "missing required field for kind 'oscillator' (or give params.matrix)");
            return None;
        }
        (Some(m), None) => {
            if m.iter().any(|r| r.len() != m.len()) {
                iss.push(&["params", "matrix"], format!("must be square; it has {} rows", m.len()));
                return None;
            }
            m
        }
        (None, Some(r)) => crate::dynamics::scaled_rotation(r, num(p, "omega").unwrap_or(0.0)),
    };
    let damping = num(p, "damping").unwrap_or(1.0);
    let matrix: Vec<Vec<f64>> = base.into_iter().map(|r| r.into_iter().map(|x| damping * x).collect()).collect();
    let v0 = numbers(p, "v0");
    if let Some(v) = &v0 {
        if v.len() != matrix.len() {
            iss.push(&["params", "v0"], format!("has {} entries but the operator acts on dimension {}", v.len(), matrix.len()));
            return None;
        }
    }
    Some(Plan::Oscillator { matrix, v0, max_t: count(p, "max_t").unwrap_or(500), tol: num(p, "tol").unwrap_or(1e-9) })
}

fn prepare_ib_curve(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let rows = matrix(p, "joint")?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        iss.push(&["params", "joint"], format!("rows must all have {cols} entries, as row 0 does"));
        return None;
    }
    let joint = Alphabet::indexed("x", rows.len())
        .and_then(|x| Joint::from_rows(x, Alphabet::indexed("y", cols)?, rows))
        .map_err(|e| iss.push(&["params", "joint"], e.to_string()))
        .ok()?;
    let betas = match numbers(p, "betas") {
        Some(b) => {
            if b.iter().any(|x| *x <= 0.0) {
                iss.push(&["params", "betas"], "every beta must be positive");
                return None;
            }
            b
        }
        None if ["beta_min", "beta_max", "beta_points"].iter().any(|k| p.contains_key(*k)) => {
            let (lo, hi) = (num(p, "beta_min").unwrap_or(1e-3), num(p, "beta_max").unwrap_or(1e3));
            if lo > hi {
                iss.push(&["params", "beta_min"], format!("beta_min {lo} exceeds beta_max {hi}"));
                return None;
            }
            geometric_grid(lo, hi, count(p, "beta_points").unwrap_or(24))
        }
        None => default_beta_grid(),
    };
    Some(Plan::IbCurve { joint, z_size: count(p, "z_size")?, betas })
}

fn prepare_ot_check(p: &Map<String, Value>, iss: &mut Issues) -> Option<Plan> {
    let max_side = count(p, "max_side").unwrap_or(8);
    if !(2..=EXACT_MAX_SIDE).contains(&max_side) {
        iss.push(&["params", "max_side"], format!("must lie in 2..={EXACT_MAX_SIDE}"));
        return None;
    }
    Some(Plan::OtCheck {
        instances: count(p, "instances").unwrap_or(100),
        max_side,
        reg: num(p, "reg").unwrap_or(0.01),
        tolerance: num(p, "tolerance").unwrap_or(0.02),
    })
}

/// Config text for the `ib-curve` and `ot-check` shortcuts when no file is given.
pub fn default_config_text(kind: Kind, seed: u64, output_dir: &Path) -> Option<String> {
    let params = match kind {
        Kind::IbCurve => serde_json::json!({ "joint": [[0.4, 0.1], [0.1, 0.4]], "z_size": 2 }),
        Kind::OtCheck => serde_json::json!({ "instances": 100, "max_side": 8, "reg": 0.01, "tolerance": 0.02 }),
        _ => return None,
    };
    let v = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "kind": kind.name(),
        "seed": seed,
        "output_dir": output_dir.to_string_lossy(),
        "format": "csv",
        "params": params,
    });
    Some(serde_json::to_string_pretty(&v).expect("static json") + "\n")
}
