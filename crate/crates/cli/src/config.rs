//! Experiment configuration: TOML parsing, defaults, static validation and
//! cost estimates.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use stochlab::estimators::Strategy;
use stochlab::field::FieldLaw;
use stochlab::Tensor2;
use stochlab_msfem::{build_perforations, Method, PerforationSpec, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Homogenize,
    VrCompare,
    Msfem,
    MsfemRobustness,
}

impl Kind {
    pub fn is_msfem(self) -> bool {
        matches!(self, Kind::Msfem | Kind::MsfemRobustness)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub strict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<LawConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msfem: Option<MsfemConfig>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    /// `checkerboard` or `perturbed`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_per: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_per: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_sizes")]
    pub n: Vec<usize>,
    #[serde(default = "default_r")]
    pub r: usize,
    /// Samples per strategy (pairs for the antithetic strategy, kept
    /// configurations for SQS).
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    #[serde(default = "default_pool")]
    pub sqs_pool: usize,
    #[serde(default = "default_cell_tol")]
    pub tolerance: f64,
    /// `fft` or `jacobi`.
    #[serde(default = "default_preconditioner")]
    pub preconditioner: String,
    /// Write the two correctors of the first realization at each size.
    #[serde(default)]
    pub dump_correctors: bool,
}

fn default_sizes() -> Vec<usize> {
    vec![5, 10, 20]
}
fn default_r() -> usize {
    8
}
fn default_m() -> usize {
    100
}
fn default_strategies() -> Vec<String> {
    vec!["MC".into(), "Antithetic".into()]
}
fn default_pool() -> usize {
    2000
}
fn default_cell_tol() -> f64 {
    1e-9
}
fn default_preconditioner() -> String {
    "fft".into()
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            n: default_sizes(),
            r: default_r(),
            m: default_m(),
            strategies: default_strategies(),
            sqs_pool: default_pool(),
            tolerance: default_cell_tol(),
            preconditioner: default_preconditioner(),
            dump_correctors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// `none`, `periodic-discs`, `shifted-discs` or `random-rectangles`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsfemConfig {
    /// Coarse mesh sizes; each must be `1/k` for an integer `k`.
    #[serde(rename = "H", default = "default_h")]
    pub h: Vec<f64>,
    /// Global fine grid shared by the reference and the local problems.
    #[serde(default = "default_fine_n")]
    pub fine_n: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_bubbles")]
    pub bubbles: Vec<bool>,
    /// `one` or `sine`.
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default = "default_penalty")]
    pub penalty_scale: f64,
    #[serde(default = "default_fine_tol")]
    pub tolerance: f64,
}

fn default_h() -> Vec<f64> {
    vec![0.125]
}
fn default_fine_n() -> usize {
    512
}
fn default_methods() -> Vec<String> {
    vec!["CR".into(), "MsFEMLinear".into()]
}
fn default_bubbles() -> Vec<bool> {
    vec![false, true]
}
fn default_source() -> String {
    "one".into()
}
fn default_penalty() -> f64 {
    1e8
}
fn default_fine_tol() -> f64 {
    1e-10
}

impl Default for MsfemConfig {
    fn default() -> Self {
        MsfemConfig {
            h: default_h(),
            fine_n: default_fine_n(),
            methods: default_methods(),
            bubbles: default_bubbles(),
            source: default_source(),
            penalty_scale: default_penalty(),
            tolerance: default_fine_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Error,
    Warning,
}

/// One validation finding, tied to a configuration key.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub level: Level,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lvl = match self.level {
            Level::Error => "error",
            Level::Warning => "warning",
        };
        write!(f, "{lvl}: {}: {}", self.key, self.message)
    }
}

/// Parses TOML text; the error message carries line and column.
pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
    toml::from_str::<ExperimentConfig>(text).map_err(|e| e.to_string())
}

fn matrix(m: [[f64; 2]; 2]) -> Tensor2 {
    Tensor2(m)
}

impl ExperimentConfig {
    /// Fills every omitted section and key relevant to `kind` with its default,
    /// so that the archived snapshot is self-describing.
    pub fn with_defaults(mut self) -> Self {
        match self.kind {
            Kind::Homogenize | Kind::VrCompare => {
                let law = self.law.get_or_insert_with(|| LawConfig {
                    kind: "checkerboard".into(),
                    alpha: None,
                    beta: None,
                    a_per: None,
                    c_per: None,
                    eta: None,
                });
                match law.kind.as_str() {
                    "checkerboard" => {
                        law.alpha.get_or_insert(3.0);
                        law.beta.get_or_insert(20.0);
                    }
                    "perturbed" => {
                        law.a_per.get_or_insert([[3.0, 0.0], [0.0, 3.0]]);
                        law.c_per.get_or_insert([[17.0, 0.0], [0.0, 17.0]]);
                        law.eta.get_or_insert(0.5);
                    }
                    _ => {}
                }
                self.estimation.get_or_insert_with(EstimationConfig::default);
            }
            Kind::Msfem | Kind::MsfemRobustness => {
                let g = self.geometry.get_or_insert_with(|| GeometryConfig {
                    kind: if self.kind == Kind::Msfem { "none" } else { "periodic-discs" }.into(),
                    epsilon: None,
                    radius_factor: None,
                    shift: None,
                    count: None,
                    width: None,
                    height: None,
                    seed: None,
                });
                match g.kind.as_str() {
                    "periodic-discs" => {
                        g.epsilon.get_or_insert(0.1);
                        g.radius_factor.get_or_insert(0.2);
                    }
                    "shifted-discs" => {
                        let eps = *g.epsilon.get_or_insert(0.1);
                        g.radius_factor.get_or_insert(0.2);
                        g.shift.get_or_insert([0.5 * eps, 0.5 * eps]);
                    }
                    "random-rectangles" => {
                        g.count.get_or_insert(100);
                        g.width.get_or_insert([0.02, 0.05]);
                        g.height.get_or_insert([0.02, 0.05]);
                        g.seed.get_or_insert(self.seed);
                    }
                    _ => {}
                }
                self.msfem.get_or_insert_with(MsfemConfig::default);
            }
        }
        self
    }

    pub fn law(&self) -> Option<FieldLaw> {
        let l = self.law.as_ref()?;
        match l.kind.as_str() {
            "checkerboard" => Some(FieldLaw::checkerboard(l.alpha?, l.beta?)),
            "perturbed" => Some(FieldLaw::perturbed(matrix(l.a_per?), matrix(l.c_per?), l.eta?)),
            _ => None,
        }
    }

    pub fn perforation_spec(&self) -> Option<PerforationSpec> {
        let g = self.geometry.as_ref()?;
        Some(match g.kind.as_str() {
            "none" => PerforationSpec::None,
            "periodic-discs" => PerforationSpec::PeriodicDiscs {
                epsilon: g.epsilon?,
                radius_factor: g.radius_factor?,
            },
            "shifted-discs" => PerforationSpec::ShiftedPeriodicDiscs {
                epsilon: g.epsilon?,
                radius_factor: g.radius_factor?,
                shift: g.shift?,
            },
            "random-rectangles" => PerforationSpec::RandomRectangles {
                count: g.count?,
                width: g.width?,
                height: g.height?,
                seed: g.seed?,
            },
            _ => return None,
        })
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.estimation
            .as_ref()
            .map(|e| e.strategies.iter().filter_map(|s| Strategy::parse(s)).collect())
            .unwrap_or_default()
    }

    pub fn methods(&self) -> Vec<Method> {
        self.msfem
            .as_ref()
            .map(|m| m.methods.iter().filter_map(|s| Method::parse(s)).collect())
            .unwrap_or_default()
    }

    pub fn source(&self) -> Option<Source> {
        match self.msfem.as_ref()?.source.as_str() {
            "one" => Some(Source::Constant(1.0)),
            "sine" => Some(Source::SineHalfPi),
            _ => None,
        }
    }

    /// Coarse element counts `1/H`.
    pub fn coarse_counts(&self) -> Vec<usize> {
        self.msfem
            .as_ref()
            .map(|m| m.h.iter().map(|h| (1.0 / h).round() as usize).collect())
            .unwrap_or_default()
    }
}

/// Static validation of a defaulted configuration. No solves are performed.
pub fn validate(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |key: &str, msg: String| {
        out.push(Diagnostic {
            level: Level::Error,
            key: key.into(),
            message: msg,
        })
    };
    match cfg.kind {
        Kind::Homogenize | Kind::VrCompare => {
            if cfg.geometry.is_some() || cfg.msfem.is_some() {
                err("kind", "geometry and msfem sections belong to msfem experiments".into());
            }
            let Some(l) = &cfg.law else {
                err("law", "missing section".into());
                return out;
            };
            match l.kind.as_str() {
                "checkerboard" => {
                    for (k, v) in [("law.alpha", l.alpha), ("law.beta", l.beta)] {
                        match v {
                            Some(v) if v > 0.0 && v.is_finite() => {}
                            Some(v) => err(k, format!("must be positive, got {v}")),
                            None => err(k, "required for a checkerboard law".into()),
                        }
                    }
                    for (k, present) in [("law.a_per", l.a_per.is_some()), ("law.c_per", l.c_per.is_some()), ("law.eta", l.eta.is_some())] {
                        if present {
                            err(k, "only used by perturbed laws".into());
                        }
                    }
                }
                "perturbed" => {
                    match l.eta {
                        Some(e) if (0.0..=1.0).contains(&e) => {}
                        Some(e) => err("law.eta", format!("must lie in [0, 1], got {e}")),
                        None => err("law.eta", "required for a perturbed law".into()),
                    }
                    for (k, m) in [("law.a_per", l.a_per), ("law.c_per", l.c_per)] {
                        match m {
                            None => err(k, "required for a perturbed law".into()),
                            Some(m) if !matrix(m).is_symmetric(1e-12) => err(k, "must be symmetric".into()),
                            _ => {}
                        }
                    }
                    if let (Some(a), Some(c)) = (l.a_per, l.c_per) {
                        let a = matrix(a);
                        for (k, m) in [("law.a_per", a), ("law.c_per", a + matrix(c))] {
                            if m.is_symmetric(1e-12) && !(m.sym_eigenvalues()[0] > 0.0) {
                                err(k, format!("{m} makes the field lose ellipticity"));
                            }
                        }
                    }
                    for (k, present) in [("law.alpha", l.alpha.is_some()), ("law.beta", l.beta.is_some())] {
                        if present {
                            err(k, "only used by checkerboard laws".into());
                        }
                    }
                }
                other => err("law.type", format!("unknown law `{other}`, expected checkerboard or perturbed")),
            }
            let Some(e) = &cfg.estimation else {
                err("estimation", "missing section".into());
                return out;
            };
            if e.n.is_empty() || e.n.contains(&0) {
                err("estimation.n", "need a nonempty list of positive sizes".into());
            }
            if e.r == 0 {
                err("estimation.r", "must be positive".into());
            }
            if e.m < 2 {
                err("estimation.m", format!("need at least 2 samples, got {}", e.m));
            }
            if !(e.tolerance > 0.0 && e.tolerance < 1.0) {
                err("estimation.tolerance", format!("must lie in (0, 1), got {}", e.tolerance));
            }
            if !matches!(e.preconditioner.as_str(), "fft" | "jacobi") {
                err("estimation.preconditioner", format!("unknown `{}`, expected fft or jacobi", e.preconditioner));
            }
            if e.strategies.is_empty() {
                err("estimation.strategies", "need at least one strategy".into());
            }
            let perturbed = l.kind == "perturbed";
            for s in &e.strategies {
                match Strategy::parse(s) {
                    None => err(
                        "estimation.strategies",
                        format!("unknown strategy `{s}`, expected MC, Antithetic, CV1, CV2, SQS1 or SQS2"),
                    ),
                    Some(Strategy::ControlVariate1 | Strategy::ControlVariate2) if !perturbed => {
                        err("estimation.strategies", format!("{s} needs a perturbed law"))
                    }
                    Some(Strategy::ControlVariate1 | Strategy::ControlVariate2) if e.n.iter().any(|&n| n < 2) => {
                        err("estimation.n", format!("{s} needs n >= 2"))
                    }
                    Some(Strategy::Sqs1 | Strategy::Sqs2) => {
                        let p = cfg.law().map(|l| l.probability()).unwrap_or(0.5);
                        for &n in &e.n {
                            let target = p * (n * n) as f64;
                            if (target - target.round()).abs() > 1e-9 {
                                err("estimation.n", format!("{s} needs p·n² integral, got {target} at n = {n}"));
                            }
                        }
                        if e.sqs_pool < e.m {
                            err("estimation.sqs_pool", format!("pool {} smaller than m = {}", e.sqs_pool, e.m));
                        }
                    }
                    _ => {}
                }
            }
            if cfg.kind == Kind::VrCompare && !e.strategies.iter().any(|s| Strategy::parse(s) == Some(Strategy::MC)) {
                err("estimation.strategies", "vr-compare needs MC as the reference strategy".into());
            }
        }
        Kind::Msfem | Kind::MsfemRobustness => {
            if cfg.law.is_some() || cfg.estimation.is_some() {
                err("kind", "law and estimation sections belong to estimation experiments".into());
            }
            let Some(g) = &cfg.geometry else {
                err("geometry", "missing section".into());
                return out;
            };
            if cfg.kind == Kind::MsfemRobustness && g.kind != "periodic-discs" {
                err("geometry.type", "msfem-robustness shifts a periodic-discs geometry".into());
            }
            let allowed: &[&str] = match g.kind.as_str() {
                "none" => &[],
                "periodic-discs" => &["epsilon", "radius_factor"],
                "shifted-discs" => &["epsilon", "radius_factor", "shift"],
                "random-rectangles" => &["count", "width", "height", "seed"],
                other => {
                    err(
                        "geometry.type",
                        format!("unknown `{other}`, expected none, periodic-discs, shifted-discs or random-rectangles"),
                    );
                    &[]
                }
            };
            for (k, present) in [
                ("epsilon", g.epsilon.is_some()),
                ("radius_factor", g.radius_factor.is_some()),
                ("shift", g.shift.is_some()),
                ("count", g.count.is_some()),
                ("width", g.width.is_some()),
                ("height", g.height.is_some()),
                ("seed", g.seed.is_some()),
            ] {
                if present && !allowed.contains(&k) {
                    err(&format!("geometry.{k}"), format!("not used by `{}`", g.kind));
                }
            }
            if let Some(e) = g.epsilon {
                if !(e > 0.0 && e.is_finite()) {
                    err("geometry.epsilon", format!("must be positive, got {e}"));
                }
            }
            if let Some(r) = g.radius_factor {
                if !(r > 0.0 && r < 0.5) {
                    err("geometry.radius_factor", format!("must lie in (0, 0.5), got {r}"));
                }
            }
            for (k, r) in [("geometry.width", g.width), ("geometry.height", g.height)] {
                if let Some(r) = r {
                    if !(r[0] > 0.0 && r[0] <= r[1] && r[1] < 1.0) {
                        err(k, format!("range {r:?} must satisfy 0 < lo <= hi < 1"));
                    }
                }
            }
            let Some(m) = &cfg.msfem else {
                err("msfem", "missing section".into());
                return out;
            };
            if m.fine_n < 2 {
                err("msfem.fine_n", "must be at least 2".into());
            }
            if m.h.is_empty() {
                err("msfem.H", "need at least one coarse size".into());
            }
            for &h in &m.h {
                let k = (1.0 / h).round();
                if !(h > 0.0 && h <= 1.0) || (1.0 / h - k).abs() > 1e-9 * k.max(1.0) {
                    err("msfem.H", format!("{h} is not 1/k for an integer k"));
                } else if m.fine_n % (k as usize) != 0 {
                    err("msfem.fine_n", format!("{} is not a multiple of 1/H = {k}", m.fine_n));
                }
            }
            if m.methods.is_empty() {
                err("msfem.methods", "need at least one method".into());
            }
            for s in &m.methods {
                if Method::parse(s).is_none() {
                    err("msfem.methods", format!("unknown method `{s}`, expected CR, MsFEMLinear or CoarseQ1"));
                }
            }
            if m.bubbles.is_empty() {
                err("msfem.bubbles", "need at least one of true/false".into());
            }
            if !matches!(m.source.as_str(), "one" | "sine") {
                err("msfem.source", format!("unknown `{}`, expected one or sine", m.source));
            }
            if !(m.penalty_scale > 0.0) {
                err("msfem.penalty_scale", "must be positive".into());
            }
            if !(m.tolerance > 0.0 && m.tolerance < 1.0) {
                err("msfem.tolerance", format!("must lie in (0, 1), got {}", m.tolerance));
            }
        }
    }
    if !out.iter().any(|d| d.level == Level::Error) {
        out.extend(warnings(cfg));
    }
    out
}

/// Checks run once a configuration is free of errors: perforations spanning
/// fewer than four fine cells (an error in strict mode) and coarse elements
/// with fewer than 32 cells across.
pub fn warnings(cfg: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let (Some(spec), Some(m)) = (cfg.perforation_spec(), cfg.msfem.as_ref()) else {
        return out;
    };
    let mut specs = vec![spec];
    if cfg.kind == Kind::MsfemRobustness {
        if let PerforationSpec::PeriodicDiscs { epsilon, radius_factor } = specs[0] {
            specs.push(PerforationSpec::ShiftedPeriodicDiscs {
                epsilon,
                radius_factor,
                shift: [0.5 * epsilon, 0.5 * epsilon],
            });
        }
    }
    for s in &specs {
        match build_perforations(s) {
            Ok(p) => {
                if let Some(w) = p.resolution_warning(1.0 / m.fine_n as f64) {
                    out.push(Diagnostic {
                        level: if cfg.strict { Level::Error } else { Level::Warning },
                        key: "msfem.fine_n".into(),
                        message: w,
                    });
                    break;
                }
            }
            Err(e) => out.push(Diagnostic {
                level: Level::Error,
                key: "geometry".into(),
                message: e.to_string(),
            }),
        }
    }
    for nc in cfg.coarse_counts() {
        let c = m.fine_n / nc;
        if c < 32 {
            out.push(Diagnostic {
                level: Level::Warning,
                key: "msfem.fine_n".into(),
                message: format!("only {c} fine cells per coarse element at H = 1/{nc}"),
            });
        }
    }
    out
}

/// Static cost estimate of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    /// Linear solves (corrector problems, or fine-grid local and reference problems).
    pub solves: usize,
    /// Peak working memory in bytes, order of magnitude only.
    pub memory_bytes: usize,
}

impl fmt::Display for CostEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "about {} solves, about {:.1} MiB peak memory",
            self.solves,
            self.memory_bytes as f64 / (1024.0 * 1024.0)
        )
    }
}

fn pair_orbits(n: usize) -> usize {
    let r = n as f64 / 2.0;
    let k = n as i64 / 2;
    let mut count = 0usize;
    for dx in -k..=k {
        for dy in -k..=k {
            if (dx, dy) != (0, 0) && ((dx * dx + dy * dy) as f64).sqrt() <= r + 1e-12 {
                count += 1;
            }
        }
    }
    count.div_ceil(8)
}

pub fn estimate_cost(cfg: &ExperimentConfig) -> CostEstimate {
    let mut solves = 0;
    let mut memory = 0;
    if let Some(e) = &cfg.estimation {
        let strategies = if cfg.kind == Kind::Homogenize {
            vec![Strategy::MC]
        } else {
            cfg.strategies()
        };
        for &n in &e.n {
            let dofs = (n * e.r).pow(2);
            // a dozen work vectors per concurrent solve, one per thread
            memory = memory.max(12 * 8 * dofs * rayon::current_num_threads());
            for s in &strategies {
                solves += match s {
                    Strategy::MC | Strategy::Sqs1 => 2 * e.m,
                    Strategy::Antithetic => 4 * e.m,
                    Strategy::ControlVariate1 => 2 * e.m + 4,
                    Strategy::ControlVariate2 => 2 * e.m + 4 + 2 * pair_orbits(n),
                    Strategy::Sqs2 => 2 * e.m + 4,
                };
            }
        }
    }
    if let Some(m) = &cfg.msfem {
        let runs = if cfg.kind == Kind::MsfemRobustness { 2 } else { 1 };
        let nodes = (m.fine_n + 1).pow(2);
        for nc in cfg.coarse_counts() {
            for method in cfg.methods() {
                for &b in &m.bubbles {
                    let per_element = match method {
                        Method::CrouzeixRaviart => 4,
                        Method::MsFEMLinear => 4,
                        Method::CoarseQ1 => 0,
                    } + usize::from(b);
                    solves += runs * per_element * nc * nc;
                }
            }
        }
        solves += runs;
        // reference solution and work vectors, plus every stored basis function
        memory = 10 * 8 * nodes + 6 * 8 * nodes;
    }
    CostEstimate {
        solves,
        memory_bytes: memory,
    }
}
