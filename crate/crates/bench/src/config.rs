//! Experiment configuration: a sectioned TOML file.
//!
//! ```toml
//! seed = 0
//!
//! [problem]
//! name = "singular-lstsq"
//! d_y = 6
//!
//! [solver]
//! alpha = [0.1, 0.3]      # any solver field may be a list; sweeps take the cross-product
//! beta = 1.0
//! rho = 0.1
//! t_inner = 50
//! k_outer = 1000
//! w_variant = "pl"
//!
//! [init]
//! box = { lo = -3.0, hi = 3.0, count = 4 }
//!
//! [diagnostics]
//! record_b_k = true
//! lyapunov_c = 1.0
//!
//! [output]
//! dir = "out"
//! format = "csv"
//! ```

use std::fmt;
use std::ops::Range;
use std::path::PathBuf;

use galet_core::linalg::Vector;
use galet_core::problems::{
    HypercleanParams, LstsqParams, ProblemKind, ProblemParams, ScQuadParams, PROBLEM_NAMES,
};
use galet_core::{rng, GaletConfig, WVariant};
use serde::Deserialize;
use toml::Spanned;

/// A validation failure, with the 1-based line it points at when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// Every solver field as a list of candidate values.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverGrid {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub rho: Vec<f64>,
    pub n_inner: Vec<usize>,
    pub t_inner: Vec<usize>,
    pub k_outer: Vec<usize>,
    pub w_variant: Vec<WVariant>,
    pub w_warm_start: Vec<bool>,
    pub stop_tol: Option<f64>,
}

impl SolverGrid {
    pub fn single(c: &GaletConfig) -> Self {
        Self {
            alpha: vec![c.alpha],
            beta: vec![c.beta],
            rho: vec![c.rho],
            n_inner: vec![c.n_inner],
            t_inner: vec![c.t_inner],
            k_outer: vec![c.k_outer],
            w_variant: vec![c.w_variant],
            w_warm_start: vec![c.w_warm_start],
            stop_tol: c.stop_tol,
        }
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
            * self.beta.len()
            * self.rho.len()
            * self.n_inner.len()
            * self.t_inner.len()
            * self.k_outer.len()
            * self.w_variant.len()
            * self.w_warm_start.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cross-product in field order, the last field varying fastest.
    pub fn expand(&self) -> Vec<GaletConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &alpha in &self.alpha {
            for &beta in &self.beta {
                for &rho in &self.rho {
                    for &n_inner in &self.n_inner {
                        for &t_inner in &self.t_inner {
                            for &k_outer in &self.k_outer {
                                for &w_variant in &self.w_variant {
                                    for &w_warm_start in &self.w_warm_start {
                                        out.push(GaletConfig {
                                            alpha,
                                            beta,
                                            rho,
                                            n_inner,
                                            t_inner,
                                            k_outer,
                                            w_variant,
                                            w_warm_start,
                                            stop_tol: self.stop_tol,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Explicit `(x, y)` points, each written as one flat list `[x..., y...]`.
    Points(Vec<Vec<f64>>),
    /// `count` points uniform in `[lo, hi]^(dim_x + dim_y)`.
    Box { lo: f64, hi: f64, count: usize },
    /// The single point `x = 0, y = 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub record_b_k: bool,
    pub record_post_update: bool,
    pub lyapunov_c: Option<f64>,
    /// Compare the final `w` against the pseudoinverse solution.
    pub dense_checks: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub problem: ProblemParams,
    pub solver: SolverGrid,
    pub init: InitSpec,
    pub diagnostics: Diagnostics,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

pub const DEFAULT_OUT_DIR: &str = "galet-out";

/// Starting points used for Example 1 when `[init]` is absent.
pub const EXAMPLE1_DEFAULT_INITS: [[f64; 3]; 2] = [[-3.0, 2.0, 1.0], [2.0, -2.0, -1.0]];

impl ExperimentConfig {
    /// A config with default solver settings and the problem's default starts.
    pub fn new(problem: ProblemParams) -> Self {
        let init = default_init(problem.kind());
        Self {
            seed: 0,
            problem,
            solver: SolverGrid::single(&GaletConfig::default()),
            init,
            diagnostics: Diagnostics::default(),
            out_dir: PathBuf::from(DEFAULT_OUT_DIR),
            format: OutputFormat::Csv,
        }
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of(src, s.start)),
            message: e.message().trim().to_string(),
        })?;
        Lowering { src }.config(raw)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&src)
    }

    /// Sets the seed and reseeds the problem generator to match.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        match &mut self.problem {
            ProblemParams::Example1 => {}
            ProblemParams::SingularLstsq(p) => p.seed = seed,
            ProblemParams::ScQuad(p) => p.seed = seed,
            ProblemParams::HypercleanSyn(p) => p.seed = seed,
        }
    }

    /// Concrete starting points for a problem of the given dimensions. Box
    /// samples use a stream seeded with `seed + 1`, distinct from the
    /// problem generator's.
    pub fn init_points(&self, dim_x: usize, dim_y: usize) -> Result<Vec<(Vector, Vector)>, ConfigError> {
        match &self.init {
            InitSpec::Points(pts) => pts
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if p.len() != dim_x + dim_y {
                        return Err(ConfigError {
                            line: None,
                            message: format!(
                                "init point {i} has {} entries, the problem needs dim_x + dim_y = {}",
                                p.len(),
                                dim_x + dim_y
                            ),
                        });
                    }
                    Ok((Vector::from_slice(&p[..dim_x]), Vector::from_slice(&p[dim_x..])))
                })
                .collect(),
            InitSpec::Box { lo, hi, count } => {
                let mut r = rng::seeded(self.seed.wrapping_add(1));
                Ok((0..*count)
                    .map(|_| {
                        let x = rng::uniform_vector(&mut r, dim_x, *lo, *hi);
                        let y = rng::uniform_vector(&mut r, dim_y, *lo, *hi);
                        (x, y)
                    })
                    .collect())
            }
            InitSpec::Zero => Ok(vec![(Vector::zeros(dim_x), Vector::zeros(dim_y))]),
        }
    }
}

fn default_init(kind: ProblemKind) -> InitSpec {
    match kind {
        ProblemKind::Example1 => {
            InitSpec::Points(EXAMPLE1_DEFAULT_INITS.iter().map(|p| p.to_vec()).collect())
        }
        ProblemKind::HypercleanSyn => InitSpec::Zero,
        ProblemKind::SingularLstsq | ProblemKind::ScQuad => InitSpec::Box {
            lo: -3.0,
            hi: 3.0,
            count: 2,
        },
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())]
        .bytes()
        .filter(|&b| b == b'\n')
        .count()
        + 1
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v],
            Self::Many(v) => v,
        }
    }
}

type Field<T> = Option<Spanned<T>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Field<u64>,
    problem: Spanned<RawProblem>,
    solver: Option<RawSolver>,
    init: Option<Spanned<RawInit>>,
    diagnostics: Option<RawDiagnostics>,
    output: Option<RawOutput>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: Spanned<String>,
    m_rows: Field<usize>,
    d_x: Field<usize>,
    d_y: Field<usize>,
    sv_lo: Field<f64>,
    sv_hi: Field<f64>,
    eig_lo: Field<f64>,
    eig_hi: Field<f64>,
    n_tr: Field<usize>,
    n_val: Field<usize>,
    p: Field<usize>,
    p_c: Field<f64>,
    separation: Field<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    alpha: Field<OneOrMany<f64>>,
    beta: Field<OneOrMany<f64>>,
    rho: Field<OneOrMany<f64>>,
    n_inner: Field<OneOrMany<usize>>,
    t_inner: Field<OneOrMany<usize>>,
    k_outer: Field<OneOrMany<usize>>,
    w_variant: Field<OneOrMany<String>>,
    w_warm_start: Field<OneOrMany<bool>>,
    stop_tol: Field<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lo: f64,
    hi: f64,
    count: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    points: Field<Vec<Vec<f64>>>,
    #[serde(rename = "box")]
    sampler: Field<RawBox>,
    zero: Field<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiagnostics {
    record_b_k: Option<bool>,
    record_post_update: Option<bool>,
    lyapunov_c: Field<f64>,
    dense_checks: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    format: Field<String>,
}

struct Lowering<'a> {
    src: &'a str,
}

impl Lowering<'_> {
    fn err(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: Some(line_of(self.src, span.start)),
            message: message.into(),
        }
    }

    fn config(&self, raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
        let seed = raw.seed.map_or(0, |s| *s.get_ref());
        let mut cfg = ExperimentConfig::new(self.problem(raw.problem)?);
        cfg.set_seed(seed);
        if let Some(s) = raw.solver {
            cfg.solver = self.solver(s)?;
        }
        if let Some(init) = raw.init {
            cfg.init = self.init(init)?;
        }
        if let Some(d) = raw.diagnostics {
            if let Some(c) = &d.lyapunov_c {
                if !(*c.get_ref() >= 0.0 && c.get_ref().is_finite()) {
                    return Err(self.err(c.span(), "lyapunov_c must be a nonnegative finite number"));
                }
            }
            cfg.diagnostics = Diagnostics {
                record_b_k: d.record_b_k.unwrap_or(false),
                record_post_update: d.record_post_update.unwrap_or(false),
                lyapunov_c: d.lyapunov_c.map(Spanned::into_inner),
                dense_checks: d.dense_checks.unwrap_or(false),
            };
        }
        if let Some(o) = raw.output {
            if let Some(dir) = o.dir {
                cfg.out_dir = PathBuf::from(dir);
            }
            if let Some(f) = o.format {
                cfg.format = OutputFormat::from_name(f.get_ref()).ok_or_else(|| {
                    self.err(
                        f.span(),
                        format!("unknown format {:?}; expected \"csv\" or \"json\"", f.get_ref()),
                    )
                })?;
            }
        }
        Ok(cfg)
    }

    fn problem(&self, raw: Spanned<RawProblem>) -> Result<ProblemParams, ConfigError> {
        let raw = raw.into_inner();
        let name = &raw.name;
        let kind = ProblemKind::from_name(name.get_ref()).ok_or_else(|| {
            self.err(
                name.span(),
                format!(
                    "unknown problem {:?}; expected one of {}",
                    name.get_ref(),
                    PROBLEM_NAMES.join(", ")
                ),
            )
        })?;
        let keys: [(&str, Option<Range<usize>>); 12] = [
            ("m_rows", raw.m_rows.as_ref().map(Spanned::span)),
            ("d_x", raw.d_x.as_ref().map(Spanned::span)),
            ("d_y", raw.d_y.as_ref().map(Spanned::span)),
            ("sv_lo", raw.sv_lo.as_ref().map(Spanned::span)),
            ("sv_hi", raw.sv_hi.as_ref().map(Spanned::span)),
            ("eig_lo", raw.eig_lo.as_ref().map(Spanned::span)),
            ("eig_hi", raw.eig_hi.as_ref().map(Spanned::span)),
            ("n_tr", raw.n_tr.as_ref().map(Spanned::span)),
            ("n_val", raw.n_val.as_ref().map(Spanned::span)),
            ("p", raw.p.as_ref().map(Spanned::span)),
            ("p_c", raw.p_c.as_ref().map(Spanned::span)),
            ("separation", raw.separation.as_ref().map(Spanned::span)),
        ];
        let allowed: &[&str] = match kind {
            ProblemKind::Example1 => &[],
            ProblemKind::SingularLstsq => &["m_rows", "d_x", "d_y", "sv_lo", "sv_hi"],
            ProblemKind::ScQuad => &["d_x", "d_y", "eig_lo", "eig_hi"],
            ProblemKind::HypercleanSyn => &["n_tr", "n_val", "p", "p_c", "separation"],
        };
        for (key, span) in keys {
            if let Some(span) = span {
                if !allowed.contains(&key) {
                    return Err(self.err(span, format!("`{key}` does not apply to problem {}", kind.name())));
                }
            }
        }
        let get = |f: &Field<usize>, d: usize| f.as_ref().map_or(d, |s| *s.get_ref());
        let getf = |f: &Field<f64>, d: f64| f.as_ref().map_or(d, |s| *s.get_ref());
        let params = match kind {
            ProblemKind::Example1 => ProblemParams::Example1,
            ProblemKind::SingularLstsq => {
                let d = LstsqParams::default();
                ProblemParams::SingularLstsq(LstsqParams {
                    m_rows: get(&raw.m_rows, d.m_rows),
                    d_x: get(&raw.d_x, d.d_x),
                    d_y: get(&raw.d_y, d.d_y),
                    sv_lo: getf(&raw.sv_lo, d.sv_lo),
                    sv_hi: getf(&raw.sv_hi, d.sv_hi),
                    seed: 0,
                })
            }
            ProblemKind::ScQuad => {
                let d = ScQuadParams::default();
                ProblemParams::ScQuad(ScQuadParams {
                    d_x: get(&raw.d_x, d.d_x),
                    d_y: get(&raw.d_y, d.d_y),
                    eig_lo: getf(&raw.eig_lo, d.eig_lo),
                    eig_hi: getf(&raw.eig_hi, d.eig_hi),
                    seed: 0,
                })
            }
            ProblemKind::HypercleanSyn => {
                let d = HypercleanParams::default();
                ProblemParams::HypercleanSyn(HypercleanParams {
                    n_tr: get(&raw.n_tr, d.n_tr),
                    n_val: get(&raw.n_val, d.n_val),
                    p: get(&raw.p, d.p),
                    p_c: getf(&raw.p_c, d.p_c),
                    separation: getf(&raw.separation, d.separation),
                    seed: 0,
                })
            }
        };
        // let the generator reject bad shapes, blaming the name line
        params.build().map_err(|e| {
            self.err(
                name.span(),
                format!("invalid parameters for {}: {e}", kind.name()),
            )
        })?;
        Ok(params)
    }

    fn list<T>(
        &self,
        field: Field<OneOrMany<T>>,
        name: &str,
        default: T,
    ) -> Result<(Vec<T>, Option<Range<usize>>), ConfigError> {
        match field {
            None => Ok((vec![default], None)),
            Some(s) => {
                let span = s.span();
                let v = s.into_inner().into_vec();
                if v.is_empty() {
                    return Err(self.err(span, format!("`{name}` is an empty list")));
                }
                Ok((v, Some(span)))
            }
        }
    }

    fn solver(&self, raw: RawSolver) -> Result<SolverGrid, ConfigError> {
        let d = GaletConfig::default();
        let mut steps = Vec::new();
        let (alpha, s) = self.list(raw.alpha, "alpha", d.alpha)?;
        steps.push(("alpha", &alpha, s));
        let (beta, s) = self.list(raw.beta, "beta", d.beta)?;
        steps.push(("beta", &beta, s));
        let (rho, s) = self.list(raw.rho, "rho", d.rho)?;
        steps.push(("rho", &rho, s));
        for (name, values, span) in steps {
            if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                let span = span.unwrap_or(0..0);
                return Err(self.err(span, format!("`{name}` must be positive and finite, got {bad}")));
            }
        }
        let mut counts = Vec::new();
        let (n_inner, s) = self.list(raw.n_inner, "n_inner", d.n_inner)?;
        counts.push(("n_inner", &n_inner, s));
        let (t_inner, s) = self.list(raw.t_inner, "t_inner", d.t_inner)?;
        counts.push(("t_inner", &t_inner, s));
        for (name, values, span) in counts {
            if values.contains(&0) {
                return Err(self.err(span.unwrap_or(0..0), format!("`{name}` must be at least 1")));
            }
        }
        let (k_outer, _) = self.list(raw.k_outer, "k_outer", d.k_outer)?;
        let (names, span) = self.list(raw.w_variant, "w_variant", String::from("pl"))?;
        let w_variant = names
            .iter()
            .map(|n| {
                WVariant::from_name(n).ok_or_else(|| {
                    self.err(
                        span.clone().unwrap_or(0..0),
                        format!("unknown w_variant {n:?}; expected \"pl\" or \"sc\""),
                    )
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let (w_warm_start, _) = self.list(raw.w_warm_start, "w_warm_start", false)?;
        let stop_tol = match raw.stop_tol {
            Some(t) if t.get_ref().is_nan() || *t.get_ref() < 0.0 => {
                return Err(self.err(t.span(), "`stop_tol` must be nonnegative"));
            }
            t => t.map(Spanned::into_inner),
        };
        Ok(SolverGrid {
            alpha,
            beta,
            rho,
            n_inner,
            t_inner,
            k_outer,
            w_variant,
            w_warm_start,
            stop_tol,
        })
    }

    fn init(&self, raw: Spanned<RawInit>) -> Result<InitSpec, ConfigError> {
        let span = raw.span();
        let raw = raw.into_inner();
        let given = raw.points.is_some() as u8 + raw.sampler.is_some() as u8 + raw.zero.is_some() as u8;
        if given != 1 {
            return Err(self.err(span, "[init] needs exactly one of `points`, `box` or `zero`"));
        }
        if let Some(p) = raw.points {
            if p.get_ref().is_empty() {
                return Err(self.err(p.span(), "`points` is an empty list"));
            }
            if p.get_ref().iter().flatten().any(|v| !v.is_finite()) {
                return Err(self.err(p.span(), "`points` must be finite"));
            }
            return Ok(InitSpec::Points(p.into_inner()));
        }
        if let Some(b) = raw.sampler {
            let RawBox { lo, hi, count } = *b.get_ref();
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(self.err(b.span(), "`box` needs finite lo < hi"));
            }
            if count == 0 {
                return Err(self.err(b.span(), "`box.count` must be at least 1"));
            }
            return Ok(InitSpec::Box { lo, hi, count });
        }
        match raw.zero {
            Some(z) if !*z.get_ref() => Err(self.err(z.span(), "`zero` can only be true")),
            _ => Ok(InitSpec::Zero),
        }
    }
}
