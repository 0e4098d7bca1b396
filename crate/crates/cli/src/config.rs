//! Run-configuration files: a small sectioned `key = value` format.
//!
//! A config is plain text. `[section]` headers group `key = value` lines;
//! `#` or `;` starts a comment (full line, or after whitespace following a
//! value). Keys are validated against a fixed schema, so typos are reported
//! with their line number before any computation starts. The full schema is
//! documented in the repository README.
//!
//! Parsing is split in two stages:
//!
//! 1. [`RawConfig::parse`] checks syntax and schema membership only.
//! 2. [`RunConfig::from_raw`] resolves types, defaults, and the
//!    algorithm-specific requirements, rejecting keys that do not apply to
//!    the chosen algorithm.
//!
//! The second stage consumes keys one by one; anything left over afterwards
//! is reported as an error rather than silently ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

/// A configuration error, already formatted with `path:line:` context where
/// a source line is known.
#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

/// Known sections and keys. The flag marks numeric keys, which are the ones
/// the `sweep` command may vary.
const SCHEMA: &[(&str, &[(&str, bool)])] = &[
    ("run", &[("algorithm", false), ("output_dir", false)]),
    (
        "domain",
        &[
            ("kind", false),
            ("width", true),
            ("height", true),
            ("spacing", true),
            ("points_file", false),
            ("k", true),
            ("sigma", true),
        ],
    ),
    ("functional", &[("kind", false), ("h_kind", false)]),
    (
        "operator",
        &[
            ("kind", false),
            ("prox_t", true),
            ("window", true),
            ("matrix_file", false),
            ("command", false),
            ("q", false),
            ("c", true),
        ],
    ),
    (
        "init",
        &[
            ("kind", false),
            ("seed", true),
            ("amplitude", true),
            ("x0", true),
            ("y0", true),
            ("rect_width", true),
            ("rect_height", true),
            ("center_x", true),
            ("center_y", true),
            ("width", true),
            ("file", false),
        ],
    ),
    (
        "numeric",
        &[
            ("dt", true),
            ("epsilon", true),
            ("max_iter", true),
            ("theta_stop", true),
            ("prox_tol", true),
            ("prox_max_inner", true),
        ],
    ),
];

fn schema_section(section: &str) -> Option<&'static [(&'static str, bool)]> {
    SCHEMA
        .iter()
        .find(|(name, _)| *name == section)
        .map(|(_, keys)| *keys)
}

/// True when `section.key` exists in the schema and is numeric (sweepable).
pub fn is_numeric_key(section: &str, key: &str) -> bool {
    schema_section(section)
        .map(|keys| keys.iter().any(|(k, num)| *k == key && *num))
        .unwrap_or(false)
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    /// 1-based source line; 0 means the value came from the command line.
    line: usize,
}

/// Syntax-checked but untyped config: `(section, key) -> value`.
#[derive(Debug, Clone)]
pub struct RawConfig {
    path: String,
    entries: BTreeMap<(String, String), Entry>,
}

impl RawConfig {
    pub fn parse(text: &str, path: &str) -> CResult<RawConfig> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = strip_comment(raw_line).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| err_at(
                    path,
                    lineno,
                    "section header must look like [name]",
                ))?;
                let name = name.trim().to_ascii_lowercase();
                if schema_section(&name).is_none() {
                    return Err(err_at(
                        path,
                        lineno,
                        &format!("unknown section [{name}]"),
                    ));
                }
                section = Some(name);
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                err_at(path, lineno, "expected `key = value` or a [section] header")
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            let section = section.clone().ok_or_else(|| {
                err_at(path, lineno, "key appears before any [section] header")
            })?;
            let keys = schema_section(&section).expect("section was validated");
            if !keys.iter().any(|(k, _)| *k == key) {
                return Err(err_at(
                    path,
                    lineno,
                    &format!("unknown key '{key}' in [{section}]"),
                ));
            }
            if value.is_empty() {
                return Err(err_at(path, lineno, &format!("key '{key}' has an empty value")));
            }
            if entries
                .insert((section.clone(), key.clone()), Entry { value, line: lineno })
                .is_some()
            {
                return Err(err_at(
                    path,
                    lineno,
                    &format!("duplicate key '{key}' in [{section}]"),
                ));
            }
        }
        Ok(RawConfig {
            path: path.to_string(),
            entries,
        })
    }

    /// Insert or replace a value as if it had been given on the command
    /// line. The key must exist in the schema and be numeric.
    pub fn set_numeric(&mut self, section: &str, key: &str, value: &str) -> CResult<()> {
        if !is_numeric_key(section, key) {
            return Err(ConfigError {
                message: format!(
                    "'{section}.{key}' is not a numeric config key; \
                     sweepable keys are numeric entries such as numeric.dt or init.seed"
                ),
            });
        }
        self.entries.insert(
            (section.to_string(), key.to_string()),
            Entry {
                value: value.to_string(),
                line: 0,
            },
        );
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    // An inline comment must be preceded by whitespace so that values may
    // contain '#' when glued to non-space characters.
    let bytes = line.as_bytes();
    for i in 1..bytes.len() {
        if (bytes[i] == b'#' || bytes[i] == b';') && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

fn err_at(path: &str, line: usize, message: &str) -> ConfigError {
    if line == 0 {
        ConfigError {
            message: format!("{path} (command line): {message}"),
        }
    } else {
        ConfigError {
            message: format!("{path}:{line}: {message}"),
        }
    }
}

// ---------------------------------------------------------------------------
// Typed configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ng,
    Agp,
    Fagp,
    Cg,
    Bhpg,
    LinearPower,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ng => "ng",
            Algorithm::Agp => "agp",
            Algorithm::Fagp => "fagp",
            Algorithm::Cg => "cg",
            Algorithm::Bhpg => "bhpg",
            Algorithm::LinearPower => "linear_power",
        }
    }

    fn parse(s: &str) -> Option<Algorithm> {
        match s {
            "ng" => Some(Algorithm::Ng),
            "agp" => Some(Algorithm::Agp),
            "fagp" => Some(Algorithm::Fagp),
            "cg" => Some(Algorithm::Cg),
            "bhpg" => Some(Algorithm::Bhpg),
            "linear_power" => Some(Algorithm::LinearPower),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum DomainSpec {
    Grid {
        width: usize,
        height: usize,
        spacing: f64,
    },
    PointCloud {
        points_file: PathBuf,
        k: usize,
        sigma: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    TvAniso,
    TvIso,
    L1,
    Dirichlet,
}

impl FunctionalKind {
    pub fn name(self) -> &'static str {
        match self {
            FunctionalKind::TvAniso => "tv_aniso",
            FunctionalKind::TvIso => "tv_iso",
            FunctionalKind::L1 => "l1",
            FunctionalKind::Dirichlet => "dirichlet",
        }
    }

    fn parse(s: &str) -> Option<FunctionalKind> {
        match s {
            "tv_aniso" => Some(FunctionalKind::TvAniso),
            "tv_iso" => Some(FunctionalKind::TvIso),
            "l1" => Some(FunctionalKind::L1),
            "dirichlet" => Some(FunctionalKind::Dirichlet),
            _ => None,
        }
    }

    fn is_one_homogeneous(self) -> bool {
        self != FunctionalKind::Dirichlet
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QKind {
    Kdv,
    CubicSchrodinger,
}

impl QKind {
    pub fn name(self) -> &'static str {
        match self {
            QKind::Kdv => "kdv",
            QKind::CubicSchrodinger => "cubic_schrodinger",
        }
    }
}

/// The operator `T` driving `bhpg` / `linear_power`.
#[derive(Debug, Clone)]
pub enum OperatorChoice {
    Prox { functional: FunctionalKind, t: f64 },
    Median { window: usize },
    Matrix { file: PathBuf },
    Subprocess { command: String },
}

#[derive(Debug, Clone)]
pub enum InitSpec {
    Noise { seed: u64, amplitude: f64 },
    Rectangle { x0: usize, y0: usize, width: usize, height: usize, amplitude: f64 },
    GaussianBump { center_x: f64, center_y: f64, width: f64, amplitude: f64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct NumericParams {
    pub dt: Option<f64>,
    pub epsilon: f64,
    pub max_iter: usize,
    pub theta_stop: Option<f64>,
    pub prox_tol: f64,
    pub prox_max_inner: usize,
}

impl Default for NumericParams {
    fn default() -> Self {
        NumericParams {
            dt: None,
            epsilon: 1e-6,
            max_iter: 500,
            theta_stop: None,
            prox_tol: 1e-10,
            prox_max_inner: 200_000,
        }
    }
}

/// A fully resolved run description. Everything an algorithm needs is
/// validated here, before any file is opened or number crunched.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub output_dir: PathBuf,
    pub domain: DomainSpec,
    /// Objective `J` (flows) or `dirichlet` (cg). `None` when the algorithm
    /// takes no functional (`bhpg` with a non-prox operator, `linear_power`).
    pub functional: Option<FunctionalKind>,
    /// Denominator functional `H` (fagp only).
    pub h_kind: Option<FunctionalKind>,
    /// Operator `T` (bhpg, linear_power).
    pub operator: Option<OperatorChoice>,
    /// Pointwise nonlinearity for cg: kind and wave speed.
    pub q: Option<(QKind, f64)>,
    pub init: InitSpec,
    pub numeric: NumericParams,
}

/// Key-consuming view over a [`RawConfig`] used during typing.
struct Cursor {
    path: String,
    entries: BTreeMap<(String, String), Entry>,
}

impl Cursor {
    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.entries.remove(&(section.to_string(), key.to_string()))
    }

    fn take_str(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.take(section, key).map(|e| (e.value, e.line))
    }

    fn take_f64(&mut self, section: &str, key: &str) -> CResult<Option<(f64, usize)>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(e) => {
                let v: f64 = e.value.parse().map_err(|_| {
                    err_at(
                        &self.path,
                        e.line,
                        &format!("'{key}' must be a number, got '{}'", e.value),
                    )
                })?;
                if !v.is_finite() {
                    return Err(err_at(&self.path, e.line, &format!("'{key}' must be finite")));
                }
                Ok(Some((v, e.line)))
            }
        }
    }

    fn take_usize(&mut self, section: &str, key: &str) -> CResult<Option<(usize, usize)>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(e) => {
                let v: usize = e.value.parse().map_err(|_| {
                    err_at(
                        &self.path,
                        e.line,
                        &format!("'{key}' must be a non-negative integer, got '{}'", e.value),
                    )
                })?;
                Ok(Some((v, e.line)))
            }
        }
    }

    fn take_u64(&mut self, section: &str, key: &str) -> CResult<Option<(u64, usize)>> {
        match self.take(section, key) {
            None => Ok(None),
            Some(e) => {
                let v: u64 = e.value.parse().map_err(|_| {
                    err_at(
                        &self.path,
                        e.line,
                        &format!("'{key}' must be a non-negative integer, got '{}'", e.value),
                    )
                })?;
                Ok(Some((v, e.line)))
            }
        }
    }

    fn err(&self, line: usize, message: &str) -> ConfigError {
        err_at(&self.path, line, message)
    }

    fn err_missing(&self, section: &str, key: &str, why: &str) -> ConfigError {
        ConfigError {
            message: format!("{}: missing [{section}] {key}: {why}", self.path),
        }
    }

    /// Error out if any key is still unconsumed.
    fn finish(self) -> CResult<()> {
        if let Some(((section, key), entry)) = self.entries.into_iter().next() {
            return Err(err_at(
                &self.path,
                entry.line,
                &format!("key '{key}' in [{section}] does not apply to this run"),
            ));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> CResult<RunConfig> {
        let mut cur = Cursor {
            path: raw.path.clone(),
            entries: raw.entries.clone(),
        };

        // [run]
        let algorithm = match cur.take_str("run", "algorithm") {
            None => return Err(cur.err_missing("run", "algorithm", "choose one of ng, agp, fagp, cg, bhpg, linear_power")),
            Some((v, line)) => Algorithm::parse(&v).ok_or_else(|| {
                cur.err(
                    line,
                    &format!("unknown algorithm '{v}'; expected ng, agp, fagp, cg, bhpg or linear_power"),
                )
            })?,
        };
        let output_dir = cur
            .take_str("run", "output_dir")
            .map(|(v, _)| PathBuf::from(v))
            .unwrap_or_else(|| PathBuf::from("runs"));

        let domain = parse_domain(&mut cur)?;
        let numeric = parse_numeric(&mut cur)?;
        let init = parse_init(&mut cur, &domain)?;

        let functional = match cur.take_str("functional", "kind") {
            None => None,
            Some((v, line)) => Some((
                FunctionalKind::parse(&v).ok_or_else(|| {
                    cur.err(
                        line,
                        &format!("unknown functional '{v}'; expected tv_aniso, tv_iso, l1 or dirichlet"),
                    )
                })?,
                line,
            )),
        };
        let h_kind = match cur.take_str("functional", "h_kind") {
            None => None,
            Some((v, line)) => Some((
                FunctionalKind::parse(&v).ok_or_else(|| {
                    cur.err(
                        line,
                        &format!("unknown functional '{v}'; expected tv_aniso, tv_iso or l1"),
                    )
                })?,
                line,
            )),
        };

        let mut cfg = RunConfig {
            algorithm,
            output_dir,
            domain,
            functional: None,
            h_kind: None,
            operator: None,
            q: None,
            init,
            numeric,
        };

        match algorithm {
            Algorithm::Ng | Algorithm::Agp | Algorithm::Fagp => {
                let (kind, line) = functional.ok_or_else(|| {
                    cur.err_missing(
                        "functional",
                        "kind",
                        &format!("{} minimizes a one-homogeneous functional; choose tv_aniso, tv_iso or l1", algorithm.name()),
                    )
                })?;
                if !kind.is_one_homogeneous() {
                    return Err(cur.err(
                        line,
                        &format!(
                            "functional '{}' is not one-homogeneous; {} needs tv_aniso, tv_iso or l1",
                            kind.name(),
                            algorithm.name()
                        ),
                    ));
                }
                cfg.functional = Some(kind);
                if algorithm == Algorithm::Fagp {
                    let h = match h_kind {
                        None => FunctionalKind::L1,
                        Some((h, hline)) => {
                            if !h.is_one_homogeneous() {
                                return Err(cur.err(
                                    hline,
                                    "h_kind must be one-homogeneous: tv_aniso, tv_iso or l1",
                                ));
                            }
                            h
                        }
                    };
                    cfg.h_kind = Some(h);
                } else if let Some((_, hline)) = h_kind {
                    return Err(cur.err(hline, "h_kind applies only to algorithm fagp"));
                }
            }
            Algorithm::Cg => {
                if let Some((kind, line)) = functional {
                    if kind != FunctionalKind::Dirichlet {
                        return Err(cur.err(
                            line,
                            "cg minimizes the dirichlet energy; remove [functional] or set kind = dirichlet",
                        ));
                    }
                }
                if let Some((_, hline)) = h_kind {
                    return Err(cur.err(hline, "h_kind applies only to algorithm fagp"));
                }
                cfg.functional = Some(FunctionalKind::Dirichlet);
                if !matches!(cfg.domain, DomainSpec::Grid { .. }) {
                    return Err(ConfigError {
                        message: format!("{}: cg runs on grid domains only", raw.path),
                    });
                }
                let (q, qline) = match cur.take_str("operator", "q") {
                    None => {
                        return Err(cur.err_missing(
                            "operator",
                            "q",
                            "cg needs a pointwise nonlinearity: kdv or cubic_schrodinger",
                        ))
                    }
                    Some((v, line)) => match v.as_str() {
                        "kdv" => (QKind::Kdv, line),
                        "cubic_schrodinger" => (QKind::CubicSchrodinger, line),
                        _ => {
                            return Err(cur.err(
                                line,
                                &format!("unknown q '{v}'; expected kdv or cubic_schrodinger"),
                            ))
                        }
                    },
                };
                let c = match cur.take_f64("operator", "c")? {
                    None => 1.0,
                    Some((c, cline)) => {
                        if q != QKind::Kdv {
                            return Err(cur.err(cline, "c applies only to q = kdv"));
                        }
                        if !(c > 0.0) {
                            return Err(cur.err(cline, &format!("wave speed c must be positive, got {c}")));
                        }
                        c
                    }
                };
                let _ = qline;
                cfg.q = Some((q, c));
            }
            Algorithm::Bhpg | Algorithm::LinearPower => {
                if let Some((_, hline)) = h_kind {
                    return Err(cur.err(hline, "h_kind applies only to algorithm fagp"));
                }
                let (kind, kline) = match cur.take_str("operator", "kind") {
                    None => {
                        return Err(cur.err_missing(
                            "operator",
                            "kind",
                            &format!(
                                "{} applies an operator each iteration; choose prox, median, matrix or subprocess",
                                algorithm.name()
                            ),
                        ))
                    }
                    Some(v) => v,
                };
                let choice = match kind.as_str() {
                    "prox" => {
                        let (f, fline) = functional.ok_or_else(|| {
                            cur.err_missing(
                                "functional",
                                "kind",
                                "operator prox denoises with a one-homogeneous functional; choose tv_aniso, tv_iso or l1",
                            )
                        })?;
                        if !f.is_one_homogeneous() {
                            return Err(cur.err(
                                fline,
                                "the prox operator needs a one-homogeneous functional: tv_aniso, tv_iso or l1",
                            ));
                        }
                        cfg.functional = Some(f);
                        let (t, tline) = cur.take_f64("operator", "prox_t")?.ok_or_else(|| {
                            cur.err_missing("operator", "prox_t", "time step of the denoising step")
                        })?;
                        if !(t > 0.0) {
                            return Err(cur.err(tline, &format!("prox_t must be positive, got {t}")));
                        }
                        OperatorChoice::Prox { functional: f, t }
                    }
                    "median" => {
                        if let Some((f, fline)) = functional {
                            let _ = f;
                            return Err(cur.err(fline, "operator median takes no functional"));
                        }
                        if !matches!(cfg.domain, DomainSpec::Grid { .. }) {
                            return Err(ConfigError {
                                message: format!("{}: operator median runs on grid domains only", raw.path),
                            });
                        }
                        let (w, wline) = cur.take_usize("operator", "window")?.ok_or_else(|| {
                            cur.err_missing("operator", "window", "odd window size of the median filter")
                        })?;
                        if w == 0 {
                            return Err(cur.err(wline, "window must be at least 1"));
                        }
                        OperatorChoice::Median { window: w }
                    }
                    "matrix" => {
                        if let Some((_, fline)) = functional {
                            return Err(cur.err(fline, "operator matrix takes no functional"));
                        }
                        let (file, _) = cur.take_str("operator", "matrix_file").ok_or_else(|| {
                            cur.err_missing("operator", "matrix_file", "CSV file holding the square matrix")
                        })?;
                        OperatorChoice::Matrix { file: PathBuf::from(file) }
                    }
                    "subprocess" => {
                        if let Some((_, fline)) = functional {
                            return Err(cur.err(fline, "operator subprocess takes no functional"));
                        }
                        let (command, cline) = cur.take_str("operator", "command").ok_or_else(|| {
                            cur.err_missing("operator", "command", "program (and arguments) to pipe signals through")
                        })?;
                        if command.split_whitespace().next().is_none() {
                            return Err(cur.err(cline, "command must name a program"));
                        }
                        OperatorChoice::Subprocess { command }
                    }
                    other => {
                        return Err(cur.err(
                            kline,
                            &format!("unknown operator '{other}'; expected prox, median, matrix or subprocess"),
                        ))
                    }
                };
                if algorithm == Algorithm::LinearPower
                    && !matches!(choice, OperatorChoice::Matrix { .. })
                {
                    return Err(cur.err(
                        kline,
                        "linear_power iterates a stored matrix; set [operator] kind = matrix",
                    ));
                }
                cfg.operator = Some(choice);
            }
        }

        cur.finish()?;
        Ok(cfg)
    }

    /// Replace the noise seed (the `--seed` flag). Errors when the init is
    /// not noise, because no other init consumes randomness.
    pub fn override_seed(&mut self, seed: u64) -> CResult<()> {
        match &mut self.init {
            InitSpec::Noise { seed: s, .. } => {
                *s = seed;
                Ok(())
            }
            _ => Err(ConfigError {
                message: "--seed applies only to runs with [init] kind = noise".to_string(),
            }),
        }
    }

    /// Canonical rendering: fixed section and key order, resolved defaults.
    /// Equal configurations render identically, so this string doubles as
    /// the hash input for run-directory names.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        s.push_str("[run]\n");
        s.push_str(&format!("algorithm = {}\n", self.algorithm.name()));
        s.push_str(&format!("output_dir = {}\n", self.output_dir.display()));
        s.push_str("\n[domain]\n");
        match &self.domain {
            DomainSpec::Grid { width, height, spacing } => {
                s.push_str("kind = grid\n");
                s.push_str(&format!("width = {width}\nheight = {height}\nspacing = {spacing}\n"));
            }
            DomainSpec::PointCloud { points_file, k, sigma } => {
                s.push_str("kind = point_cloud\n");
                s.push_str(&format!("points_file = {}\nk = {k}\n", points_file.display()));
                if let Some(sig) = sigma {
                    s.push_str(&format!("sigma = {sig}\n"));
                }
            }
        }
        if self.functional.is_some() || self.h_kind.is_some() {
            s.push_str("\n[functional]\n");
            if let Some(f) = self.functional {
                s.push_str(&format!("kind = {}\n", f.name()));
            }
            if let Some(h) = self.h_kind {
                s.push_str(&format!("h_kind = {}\n", h.name()));
            }
        }
        let mut op_lines = String::new();
        match &self.operator {
            Some(OperatorChoice::Prox { t, .. }) => {
                op_lines.push_str(&format!("kind = prox\nprox_t = {t}\n"));
            }
            Some(OperatorChoice::Median { window }) => {
                op_lines.push_str(&format!("kind = median\nwindow = {window}\n"));
            }
            Some(OperatorChoice::Matrix { file }) => {
                op_lines.push_str(&format!("kind = matrix\nmatrix_file = {}\n", file.display()));
            }
            Some(OperatorChoice::Subprocess { command }) => {
                op_lines.push_str(&format!("kind = subprocess\ncommand = {command}\n"));
            }
            None => {}
        }
        if let Some((q, c)) = self.q {
            op_lines.push_str(&format!("q = {}\n", q.name()));
            if q == QKind::Kdv {
                op_lines.push_str(&format!("c = {c}\n"));
            }
        }
        if !op_lines.is_empty() {
            s.push_str("\n[operator]\n");
            s.push_str(&op_lines);
        }
        s.push_str("\n[init]\n");
        match &self.init {
            InitSpec::Noise { seed, amplitude } => {
                s.push_str(&format!("kind = noise\nseed = {seed}\namplitude = {amplitude}\n"));
            }
            InitSpec::Rectangle { x0, y0, width, height, amplitude } => {
                s.push_str(&format!(
                    "kind = rectangle\nx0 = {x0}\ny0 = {y0}\nrect_width = {width}\nrect_height = {height}\namplitude = {amplitude}\n"
                ));
            }
            InitSpec::GaussianBump { center_x, center_y, width, amplitude } => {
                s.push_str(&format!(
                    "kind = gaussian_bump\ncenter_x = {center_x}\ncenter_y = {center_y}\nwidth = {width}\namplitude = {amplitude}\n"
                ));
            }
            InitSpec::File { path } => {
                s.push_str(&format!("kind = file\nfile = {}\n", path.display()));
            }
        }
        s.push_str("\n[numeric]\n");
        if let Some(dt) = self.numeric.dt {
            s.push_str(&format!("dt = {dt}\n"));
        }
        s.push_str(&format!("epsilon = {}\n", self.numeric.epsilon));
        s.push_str(&format!("max_iter = {}\n", self.numeric.max_iter));
        if let Some(th) = self.numeric.theta_stop {
            s.push_str(&format!("theta_stop = {th}\n"));
        }
        s.push_str(&format!("prox_tol = {}\n", self.numeric.prox_tol));
        s.push_str(&format!("prox_max_inner = {}\n", self.numeric.prox_max_inner));
        s
    }
}

fn parse_domain(cur: &mut Cursor) -> CResult<DomainSpec> {
    let kind = cur.take_str("domain", "kind");
    match kind.as_ref().map(|(v, _)| v.as_str()) {
        Some("grid") | None => {
            let (width, _) = cur.take_usize("domain", "width")?.ok_or_else(|| {
                cur.err_missing("domain", "width", "number of grid cells along x")
            })?;
            let height = cur.take_usize("domain", "height")?.map(|(v, _)| v).unwrap_or(1);
            let spacing = match cur.take_f64("domain", "spacing")? {
                None => 1.0,
                Some((v, line)) => {
                    if !(v > 0.0) {
                        return Err(cur.err(line, &format!("spacing must be positive, got {v}")));
                    }
                    v
                }
            };
            if width == 0 || height == 0 {
                return Err(ConfigError {
                    message: format!("{}: grid dimensions must be at least 1", cur.path),
                });
            }
            Ok(DomainSpec::Grid { width, height, spacing })
        }
        Some("point_cloud") => {
            let (points_file, _) = cur.take_str("domain", "points_file").ok_or_else(|| {
                cur.err_missing("domain", "points_file", "CSV file with one point per row")
            })?;
            let k = match cur.take_usize("domain", "k")? {
                None => 8,
                Some((v, line)) => {
                    if v == 0 {
                        return Err(cur.err(line, "k must be at least 1"));
                    }
                    v
                }
            };
            let sigma = match cur.take_f64("domain", "sigma")? {
                None => None,
                Some((v, line)) => {
                    if !(v > 0.0) {
                        return Err(cur.err(line, &format!("sigma must be positive, got {v}")));
                    }
                    Some(v)
                }
            };
            Ok(DomainSpec::PointCloud {
                points_file: PathBuf::from(points_file),
                k,
                sigma,
            })
        }
        Some(other) => {
            let line = kind.as_ref().map(|(_, l)| *l).unwrap_or(0);
            let message = format!("unknown domain kind '{other}'; expected grid or point_cloud");
            Err(cur.err(line, &message))
        }
    }
}

fn parse_numeric(cur: &mut Cursor) -> CResult<NumericParams> {
    let mut p = NumericParams::default();
    if let Some((dt, line)) = cur.take_f64("numeric", "dt")? {
        if !(dt > 0.0) {
            return Err(cur.err(line, &format!("dt must be positive, got {dt}")));
        }
        p.dt = Some(dt);
    }
    if let Some((eps, line)) = cur.take_f64("numeric", "epsilon")? {
        if !(eps > 0.0) {
            return Err(cur.err(line, &format!("epsilon must be positive, got {eps}")));
        }
        p.epsilon = eps;
    }
    if let Some((mi, line)) = cur.take_usize("numeric", "max_iter")? {
        if mi == 0 {
            return Err(cur.err(line, "max_iter must be at least 1"));
        }
        p.max_iter = mi;
    }
    if let Some((th, line)) = cur.take_f64("numeric", "theta_stop")? {
        if !(th > 0.0 && th < std::f64::consts::PI) {
            return Err(cur.err(line, &format!("theta_stop must lie in (0, pi), got {th}")));
        }
        p.theta_stop = Some(th);
    }
    if let Some((tol, line)) = cur.take_f64("numeric", "prox_tol")? {
        if !(tol > 0.0) {
            return Err(cur.err(line, &format!("prox_tol must be positive, got {tol}")));
        }
        p.prox_tol = tol;
    }
    if let Some((mi, line)) = cur.take_usize("numeric", "prox_max_inner")? {
        if mi == 0 {
            return Err(cur.err(line, "prox_max_inner must be at least 1"));
        }
        p.prox_max_inner = mi;
    }
    Ok(p)
}

fn parse_init(cur: &mut Cursor, domain: &DomainSpec) -> CResult<InitSpec> {
    let amplitude = match cur.take_f64("init", "amplitude")? {
        None => 1.0,
        Some((a, line)) => {
            if !(a > 0.0) {
                return Err(cur.err(line, &format!("amplitude must be positive, got {a}")));
            }
            a
        }
    };
    let kind = cur.take_str("init", "kind");
    let kind_name = kind.as_ref().map(|(v, _)| v.as_str()).unwrap_or("noise");
    let kind_line = kind.as_ref().map(|(_, l)| *l).unwrap_or(0);
    match kind_name {
        "noise" => {
            let seed = cur.take_u64("init", "seed")?.map(|(v, _)| v).unwrap_or(0);
            Ok(InitSpec::Noise { seed, amplitude })
        }
        "rectangle" => {
            let (gw, gh) = grid_dims(cur, domain, "rectangle")?;
            let x0 = cur.take_usize("init", "x0")?.map(|(v, _)| v).unwrap_or(gw / 3);
            let y0 = cur.take_usize("init", "y0")?.map(|(v, _)| v).unwrap_or(gh / 3);
            let width = cur
                .take_usize("init", "rect_width")?
                .map(|(v, _)| v)
                .unwrap_or((gw / 3).max(1));
            let height = cur
                .take_usize("init", "rect_height")?
                .map(|(v, _)| v)
                .unwrap_or((gh / 3).max(1));
            if width == 0 || height == 0 {
                return Err(ConfigError {
                    message: format!("{}: rectangle dimensions must be at least 1", cur.path),
                });
            }
            if x0 + width > gw || y0 + height > gh {
                return Err(ConfigError {
                    message: format!(
                        "{}: rectangle [{x0}, {}) x [{y0}, {}) does not fit the {gw} x {gh} grid",
                        cur.path,
                        x0 + width,
                        y0 + height,
                    ),
                });
            }
            Ok(InitSpec::Rectangle { x0, y0, width, height, amplitude })
        }
        "gaussian_bump" => {
            let (gw, gh) = grid_dims(cur, domain, "gaussian_bump")?;
            let spacing = match domain {
                DomainSpec::Grid { spacing, .. } => *spacing,
                DomainSpec::PointCloud { .. } => unreachable!("grid_dims checked"),
            };
            let center_x = cur
                .take_f64("init", "center_x")?
                .map(|(v, _)| v)
                .unwrap_or(0.5 * spacing * gw as f64);
            let center_y = cur
                .take_f64("init", "center_y")?
                .map(|(v, _)| v)
                .unwrap_or(0.5 * spacing * gh as f64);
            let width = match cur.take_f64("init", "width")? {
                None => 0.25 * spacing * gw.min(gh) as f64,
                Some((v, line)) => {
                    if !(v > 0.0) {
                        return Err(cur.err(line, &format!("width must be positive, got {v}")));
                    }
                    v
                }
            };
            Ok(InitSpec::GaussianBump { center_x, center_y, width, amplitude })
        }
        "file" => {
            let (path, _) = cur.take_str("init", "file").ok_or_else(|| {
                cur.err_missing("init", "file", "CSV file with one value per row")
            })?;
            Ok(InitSpec::File { path: PathBuf::from(path) })
        }
        other => Err(cur.err(
            kind_line,
            &format!("unknown init '{other}'; expected noise, rectangle, gaussian_bump or file"),
        )),
    }
}

fn grid_dims(cur: &Cursor, domain: &DomainSpec, init_name: &str) -> CResult<(usize, usize)> {
    match domain {
        DomainSpec::Grid { width, height, .. } => Ok((*width, *height)),
        DomainSpec::PointCloud { .. } => Err(ConfigError {
            message: format!("{}: init {init_name} needs a grid domain", cur.path),
        }),
    }
}
