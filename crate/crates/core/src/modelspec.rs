//! Parser for the experiment description format.
//!
//! The format is line oriented: `[section]` headers, `key = value` lines,
//! `#` comments, bare numeric rows for grid atoms and detector settings.
//! Sections: `[measure]`, `[measure.grid]`, `[model]`, `[job]`,
//! `[job.settings]`. Angles are radians unless the job sets
//! `degrees = true`.
//!
//! Correlator-form models are declared as expressions over the dot
//! products `ua` and `vb` with numeric literals, `+ - * /`, `abs()`,
//! `min()` and `max()`. The loader reconstructs the joint
//! `(1 + sigma ua + tau vb + sigma tau C)/4` and rejects expressions that
//! turn any of the four probabilities negative on a validation grid.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::models::{CorrelatorExpr, Outcome, OutcomeModel};
use crate::Result;
use crate::{measures::GridAtom, measures::VectorPairMeasure, Error, Resolution};

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureSpec {
    ProductUniform,
    AlignedUniform { sign: i8 },
    /// Raw atoms exactly as written; units resolve against the job's
    /// `degrees` flag and weights normalize when the measure is built.
    CustomGrid { atoms: Vec<GridAtom> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Builtin(OutcomeModel),
    Correlator(CorrelatorExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    Check,
    Curve,
    Bounds,
    MaxViolation,
    Simulate,
    Scan,
}

impl JobKind {
    pub fn name(&self) -> &'static str {
        match self {
            JobKind::Check => "check",
            JobKind::Curve => "curve",
            JobKind::Bounds => "bounds",
            JobKind::MaxViolation => "max-violation",
            JobKind::Simulate => "simulate",
            JobKind::Scan => "scan",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub kind: JobKind,
    pub degrees: bool,
    pub seed: u64,
    pub theta: usize,
    pub azimuthal: usize,
    pub xi: usize,
    pub plane: [f64; 3],
    pub plane2: [f64; 3],
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_steps: usize,
    pub grid_steps: usize,
    pub scan_resolution: usize,
    pub n: u64,
    pub chsh_samples: usize,
    /// Detector azimuth pairs for simulation jobs, in file units.
    pub settings: Vec<(f64, f64)>,
    pub out: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub measure: MeasureSpec,
    pub model: ModelSpec,
    pub job: JobSpec,
}

/// Parse result: the configuration plus non-fatal notices (for example
/// grid weights that needed normalization).
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub config: ExperimentConfig,
    pub notices: Vec<String>,
}

impl ExperimentConfig {
    fn angle(&self, raw: f64) -> f64 {
        if self.job.degrees {
            raw.to_radians()
        } else {
            raw
        }
    }

    pub fn build_measure(&self) -> Result<VectorPairMeasure> {
        match &self.measure {
            MeasureSpec::ProductUniform => Ok(VectorPairMeasure::product_uniform()),
            MeasureSpec::AlignedUniform { sign } => VectorPairMeasure::aligned_uniform(*sign),
            MeasureSpec::CustomGrid { atoms } => {
                let converted: Vec<GridAtom> = atoms
                    .iter()
                    .map(|a| GridAtom {
                        theta_u: self.angle(a.theta_u),
                        phi_u: self.angle(a.phi_u),
                        theta_v: self.angle(a.theta_v),
                        phi_v: self.angle(a.phi_v),
                        weight: a.weight,
                    })
                    .collect();
                VectorPairMeasure::custom_grid(&converted)
            }
        }
    }

    pub fn build_model(&self) -> OutcomeModel {
        match &self.model {
            ModelSpec::Builtin(m) => m.clone(),
            ModelSpec::Correlator(expr) => OutcomeModel::CorrelatorForm(expr.clone()),
        }
    }

    pub fn resolution(&self) -> Resolution {
        Resolution::new(self.job.theta, self.job.azimuthal, self.job.xi)
    }

    pub fn phi_range(&self) -> (f64, f64) {
        (self.angle(self.job.phi_min), self.angle(self.job.phi_max))
    }

    /// Detector settings for simulation jobs as in-plane azimuth pairs,
    /// in radians.
    pub fn settings_radians(&self) -> Vec<(f64, f64)> {
        self.job
            .settings
            .iter()
            .map(|(a, b)| (self.angle(*a), self.angle(*b)))
            .collect()
    }

    pub fn plane_vector(&self) -> Result<crate::geometry::UnitVector> {
        crate::geometry::UnitVector::new(self.job.plane[0], self.job.plane[1], self.job.plane[2])
            .ok_or_else(|| Error::invalid("plane vector must be nonzero"))
    }

    pub fn plane2_vector(&self) -> Result<crate::geometry::UnitVector> {
        crate::geometry::UnitVector::new(
            self.job.plane2[0],
            self.job.plane2[1],
            self.job.plane2[2],
        )
        .ok_or_else(|| Error::invalid("plane2 vector must be nonzero"))
    }

    /// Canonical text form; parsing it again yields an identical config.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        s.push_str("[measure]\n");
        match &self.measure {
            MeasureSpec::ProductUniform => s.push_str("kind = product_uniform\n"),
            MeasureSpec::AlignedUniform { sign } => {
                s.push_str("kind = aligned_uniform\n");
                let _ = writeln!(s, "sign = {sign}");
            }
            MeasureSpec::CustomGrid { atoms } => {
                s.push_str("kind = custom_grid\n\n[measure.grid]\n");
                for a in atoms {
                    let _ = writeln!(
                        s,
                        "{} {} {} {} {}",
                        a.theta_u, a.phi_u, a.theta_v, a.phi_v, a.weight
                    );
                }
            }
        }
        s.push_str("\n[model]\n");
        match &self.model {
            ModelSpec::Builtin(m) => {
                let _ = writeln!(s, "builtin = {}", m.name());
            }
            ModelSpec::Correlator(expr) => {
                let _ = writeln!(s, "correlator = {expr}");
            }
        }
        let j = &self.job;
        s.push_str("\n[job]\n");
        let _ = writeln!(s, "type = {}", j.kind.name());
        let _ = writeln!(s, "degrees = {}", j.degrees);
        let _ = writeln!(s, "seed = {}", j.seed);
        let _ = writeln!(s, "theta = {}", j.theta);
        let _ = writeln!(s, "azimuthal = {}", j.azimuthal);
        let _ = writeln!(s, "xi = {}", j.xi);
        let _ = writeln!(s, "plane = {} {} {}", j.plane[0], j.plane[1], j.plane[2]);
        let _ = writeln!(s, "plane2 = {} {} {}", j.plane2[0], j.plane2[1], j.plane2[2]);
        let _ = writeln!(s, "phi_min = {}", j.phi_min);
        let _ = writeln!(s, "phi_max = {}", j.phi_max);
        let _ = writeln!(s, "phi_steps = {}", j.phi_steps);
        let _ = writeln!(s, "grid_steps = {}", j.grid_steps);
        let _ = writeln!(s, "scan_resolution = {}", j.scan_resolution);
        let _ = writeln!(s, "n = {}", j.n);
        let _ = writeln!(s, "chsh_samples = {}", j.chsh_samples);
        if let Some(out) = &j.out {
            let _ = writeln!(s, "out = {out}");
        }
        if !j.settings.is_empty() {
            s.push_str("\n[job.settings]\n");
            for (a, b) in &j.settings {
                let _ = writeln!(s, "{a} {b}");
            }
        }
        s
    }
}

/// Joint-probability validation of a correlator expression over a grid of
/// `(ua, vb)` values and all four outcome pairs.
#[derive(Debug, Clone, Copy)]
pub struct ExprValidation {
    pub min_probability: f64,
    pub worst_ua: f64,
    pub worst_vb: f64,
    pub worst_sigma: Outcome,
    pub worst_tau: Outcome,
    pub valid: bool,
}

/// Evaluates `(1 + sigma ua + tau vb + sigma tau C)/4` on a 64 x 64 grid
/// over `[-1, 1]^2` and reports the minimum probability with the corner
/// that attains it.
pub fn validate_expression(expr: &CorrelatorExpr) -> ExprValidation {
    let n = 64;
    let mut out = ExprValidation {
        min_probability: f64::INFINITY,
        worst_ua: 0.0,
        worst_vb: 0.0,
        worst_sigma: Outcome::Plus,
        worst_tau: Outcome::Plus,
        valid: true,
    };
    for i in 0..n {
        for j in 0..n {
            let ua = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
            let vb = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            let c = expr.eval(ua, vb);
            for sigma in Outcome::BOTH {
                for tau in Outcome::BOTH {
                    let s = sigma.value();
                    let t = tau.value();
                    let p = 0.25 * (1.0 + s * ua + t * vb + s * t * c);
                    if p < out.min_probability {
                        out.min_probability = p;
                        out.worst_ua = ua;
                        out.worst_vb = vb;
                        out.worst_sigma = sigma;
                        out.worst_tau = tau;
                    }
                }
            }
        }
    }
    out.valid = out.min_probability >= -1e-12;
    out
}

// ---------------------------------------------------------------------------
// Line parser

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Measure,
    MeasureGrid,
    Model,
    Job,
    JobSettings,
}

struct RawKey {
    line: usize,
    column: usize,
    value: String,
}

#[derive(Default)]
struct RawConfig {
    measure: std::collections::BTreeMap<&'static str, RawKey>,
    model: std::collections::BTreeMap<&'static str, RawKey>,
    job: std::collections::BTreeMap<&'static str, RawKey>,
    atoms: Vec<(usize, GridAtom)>,
    settings: Vec<(f64, f64)>,
    saw_measure: bool,
    saw_model: bool,
    saw_job: bool,
}

const MEASURE_KEYS: &[&str] = &["kind", "sign"];
const MODEL_KEYS: &[&str] = &["builtin", "correlator"];
const JOB_KEYS: &[&str] = &[
    "type",
    "degrees",
    "seed",
    "theta",
    "azimuthal",
    "xi",
    "plane",
    "plane2",
    "phi_min",
    "phi_max",
    "phi_steps",
    "grid_steps",
    "scan_resolution",
    "n",
    "chsh_samples",
    "out",
];

/// Parses configuration text into an [`ExperimentConfig`].
///
/// Every rejection carries the 1-based line (and column) of the offending
/// input.
pub fn parse(text: &str) -> Result<ParseOutcome> {
    let mut raw = RawConfig::default();
    let mut section = Section::None;
    let mut last_line = 0;

    for (idx, full_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let content = match full_line.find('#') {
            Some(pos) => &full_line[..pos],
            None => full_line,
        };
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(inner) = trimmed.strip_prefix('[') {
            let name = inner.strip_suffix(']').ok_or_else(|| {
                Error::parse(lineno, 1, "unterminated section header")
            })?;
            section = match name {
                "measure" => {
                    raw.saw_measure = true;
                    Section::Measure
                }
                "measure.grid" => Section::MeasureGrid,
                "model" => {
                    raw.saw_model = true;
                    Section::Model
                }
                "job" => {
                    raw.saw_job = true;
                    Section::Job
                }
                "job.settings" => Section::JobSettings,
                other => {
                    return Err(Error::parse(
                        lineno,
                        1,
                        format!("unknown section [{other}]"),
                    ))
                }
            };
            continue;
        }
        match section {
            Section::None => {
                return Err(Error::parse(
                    lineno,
                    1,
                    "content before the first [section] header",
                ))
            }
            Section::MeasureGrid => {
                let nums = parse_numbers(content, lineno)?;
                if nums.len() != 5 {
                    return Err(Error::parse(
                        lineno,
                        1,
                        format!("grid atom needs 5 numbers, got {}", nums.len()),
                    ));
                }
                if nums[4] < 0.0 {
                    return Err(Error::parse(lineno, 1, "negative atom weight"));
                }
                raw.atoms.push((
                    lineno,
                    GridAtom {
                        theta_u: nums[0],
                        phi_u: nums[1],
                        theta_v: nums[2],
                        phi_v: nums[3],
                        weight: nums[4],
                    },
                ));
            }
            Section::JobSettings => {
                let nums = parse_numbers(content, lineno)?;
                if nums.len() != 2 {
                    return Err(Error::parse(
                        lineno,
                        1,
                        format!("setting row needs 2 azimuths, got {}", nums.len()),
                    ));
                }
                raw.settings.push((nums[0], nums[1]));
            }
            Section::Measure | Section::Model | Section::Job => {
                let eq = content.find('=').ok_or_else(|| {
                    Error::parse(lineno, 1, "expected `key = value`")
                })?;
                let key = content[..eq].trim();
                let value_col = eq + 2 + content[eq + 1..].len()
                    - content[eq + 1..].trim_start().len();
                let value = content[eq + 1..].trim().to_string();
                if value.is_empty() {
                    return Err(Error::parse(lineno, value_col, format!("empty value for `{key}`")));
                }
                let (map, allowed) = match section {
                    Section::Measure => (&mut raw.measure, MEASURE_KEYS),
                    Section::Model => (&mut raw.model, MODEL_KEYS),
                    Section::Job => (&mut raw.job, JOB_KEYS),
                    _ => unreachable!(),
                };
                let canonical = allowed.iter().find(|k| **k == key).ok_or_else(|| {
                    Error::parse(lineno, 1, format!("unknown key `{key}`"))
                })?;
                if map
                    .insert(
                        canonical,
                        RawKey {
                            line: lineno,
                            column: value_col,
                            value,
                        },
                    )
                    .is_some()
                {
                    return Err(Error::parse(lineno, 1, format!("duplicate key `{key}`")));
                }
            }
        }
    }

    build_config(raw, last_line + 1)
}

fn parse_numbers(content: &str, lineno: usize) -> Result<Vec<f64>> {
    content
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(lineno, 1, format!("unparseable number `{tok}`")))
        })
        .collect()
}

fn build_config(raw: RawConfig, eof_line: usize) -> Result<ParseOutcome> {
    let mut notices = Vec::new();

    if !raw.saw_measure {
        return Err(Error::parse(eof_line, 1, "missing [measure] section"));
    }
    if !raw.saw_model {
        return Err(Error::parse(eof_line, 1, "missing [model] section"));
    }
    if !raw.saw_job {
        return Err(Error::parse(eof_line, 1, "missing [job] section"));
    }

    // Measure.
    let kind = raw
        .measure
        .get("kind")
        .ok_or_else(|| Error::parse(eof_line, 1, "missing `kind` in [measure]"))?;
    let measure = match kind.value.as_str() {
        "product_uniform" => {
            if let Some(sign) = raw.measure.get("sign") {
                return Err(Error::parse(
                    sign.line,
                    1,
                    "`sign` only applies to aligned_uniform",
                ));
            }
            if let Some((line, _)) = raw.atoms.first() {
                return Err(Error::parse(*line, 1, "grid atoms only apply to custom_grid"));
            }
            MeasureSpec::ProductUniform
        }
        "aligned_uniform" => {
            let sign_key = raw.measure.get("sign").ok_or_else(|| {
                Error::parse(kind.line, 1, "aligned_uniform needs `sign = 1` or `sign = -1`")
            })?;
            let sign: i8 = sign_key.value.parse().map_err(|_| {
                Error::parse(sign_key.line, sign_key.column, "sign must be 1 or -1")
            })?;
            if sign != 1 && sign != -1 {
                return Err(Error::parse(
                    sign_key.line,
                    sign_key.column,
                    "sign must be 1 or -1",
                ));
            }
            if let Some((line, _)) = raw.atoms.first() {
                return Err(Error::parse(*line, 1, "grid atoms only apply to custom_grid"));
            }
            MeasureSpec::AlignedUniform { sign }
        }
        "custom_grid" => {
            if raw.atoms.is_empty() {
                return Err(Error::parse(
                    kind.line,
                    1,
                    "custom_grid needs at least one atom in [measure.grid]",
                ));
            }
            let total: f64 = raw.atoms.iter().map(|(_, a)| a.weight).sum();
            if !(total > 0.0) {
                return Err(Error::parse(
                    raw.atoms[0].0,
                    1,
                    "grid atom weights must have positive total",
                ));
            }
            if (total - 1.0).abs() > 1e-9 {
                notices.push(format!(
                    "grid atom weights sum to {total}; they are normalized when the measure is built"
                ));
            }
            MeasureSpec::CustomGrid {
                atoms: raw.atoms.iter().map(|(_, a)| *a).collect(),
            }
        }
        other => {
            return Err(Error::parse(
                kind.line,
                kind.column,
                format!("unknown measure kind `{other}`"),
            ))
        }
    };

    // Model.
    let model = match (raw.model.get("builtin"), raw.model.get("correlator")) {
        (Some(_), Some(c)) => {
            return Err(Error::parse(
                c.line,
                1,
                "give either `builtin` or `correlator`, not both",
            ))
        }
        (None, None) => {
            return Err(Error::parse(
                eof_line,
                1,
                "missing `builtin` or `correlator` in [model]",
            ))
        }
        (Some(b), None) => {
            let m = match b.value.as_str() {
                "product_malus" => OutcomeModel::ProductMalus,
                "comonotone_malus" => OutcomeModel::ComonotoneMalus,
                "antitone_malus" => OutcomeModel::AntitoneMalus,
                "deterministic_malus" => OutcomeModel::DeterministicMalus,
                "qm_singlet" => OutcomeModel::QmSinglet,
                other => {
                    return Err(Error::parse(
                        b.line,
                        b.column,
                        format!("unknown builtin model `{other}`"),
                    ))
                }
            };
            ModelSpec::Builtin(m)
        }
        (None, Some(c)) => {
            let expr = parse_expression(&c.value, c.line, c.column)?;
            let v = validate_expression(&expr);
            if !v.valid {
                return Err(Error::parse(
                    c.line,
                    c.column,
                    format!(
                        "correlator gives negative probability {:.3e} at ua = {:.4}, vb = {:.4}, sigma = {:+}, tau = {:+}",
                        v.min_probability,
                        v.worst_ua,
                        v.worst_vb,
                        v.worst_sigma.value() as i8,
                        v.worst_tau.value() as i8,
                    ),
                ));
            }
            ModelSpec::Correlator(expr)
        }
    };

    // Job.
    let type_key = raw
        .job
        .get("type")
        .ok_or_else(|| Error::parse(eof_line, 1, "missing `type` in [job]"))?;
    let kind = match type_key.value.as_str() {
        "check" => JobKind::Check,
        "curve" => JobKind::Curve,
        "bounds" => JobKind::Bounds,
        "max-violation" => JobKind::MaxViolation,
        "simulate" => JobKind::Simulate,
        "scan" => JobKind::Scan,
        other => {
            return Err(Error::parse(
                type_key.line,
                type_key.column,
                format!("unknown job type `{other}`"),
            ))
        }
    };

    let degrees = match raw.job.get("degrees") {
        None => false,
        Some(k) => k.value.parse::<bool>().map_err(|_| {
            Error::parse(k.line, k.column, "degrees must be true or false")
        })?,
    };

    let parse_num = |key: &str, default: u64, min: u64| -> Result<u64> {
        match raw.job.get(key) {
            None => Ok(default),
            Some(k) => {
                let v: u64 = k.value.parse().map_err(|_| {
                    Error::parse(k.line, k.column, format!("`{key}` must be a nonnegative integer"))
                })?;
                if v < min {
                    return Err(Error::parse(
                        k.line,
                        k.column,
                        format!("`{key}` must be at least {min}"),
                    ));
                }
                Ok(v)
            }
        }
    };
    let parse_f = |key: &str, default: f64| -> Result<f64> {
        match raw.job.get(key) {
            None => Ok(default),
            Some(k) => k.value.parse::<f64>().map_err(|_| {
                Error::parse(k.line, k.column, format!("unparseable number for `{key}`"))
            }),
        }
    };
    let parse_vec3 = |key: &str, default: [f64; 3]| -> Result<[f64; 3]> {
        match raw.job.get(key) {
            None => Ok(default),
            Some(k) => {
                let nums = parse_numbers(&k.value, k.line)?;
                if nums.len() != 3 {
                    return Err(Error::parse(
                        k.line,
                        k.column,
                        format!("`{key}` needs 3 components"),
                    ));
                }
                if nums.iter().all(|c| c.abs() < 1e-300) {
                    return Err(Error::parse(k.line, k.column, format!("`{key}` must be nonzero")));
                }
                Ok([nums[0], nums[1], nums[2]])
            }
        }
    };

    let half_turn = if degrees { 180.0 } else { PI };
    let default_settings: Vec<(f64, f64)> = [0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| (0.0, f * half_turn))
        .collect();

    let job = JobSpec {
        kind,
        degrees,
        seed: parse_num("seed", 42, 0)?,
        theta: parse_num("theta", 64, 2)? as usize,
        azimuthal: parse_num("azimuthal", 256, 8)? as usize,
        xi: parse_num("xi", 128, 8)? as usize,
        plane: parse_vec3("plane", [0.0, 0.0, 1.0])?,
        plane2: parse_vec3("plane2", [1.0, 0.0, 0.0])?,
        phi_min: parse_f("phi_min", -half_turn)?,
        phi_max: parse_f("phi_max", half_turn)?,
        phi_steps: parse_num("phi_steps", 65, 2)? as usize,
        grid_steps: parse_num("grid_steps", 16, 2)? as usize,
        scan_resolution: parse_num("scan_resolution", 100_000, 1000)? as usize,
        n: parse_num("n", 100_000, 1)?,
        chsh_samples: parse_num("chsh_samples", 1000, 1)? as usize,
        settings: if raw.settings.is_empty() {
            default_settings
        } else {
            raw.settings
        },
        out: raw.job.get("out").map(|k| k.value.clone()),
    };

    Ok(ParseOutcome {
        config: ExperimentConfig {
            measure,
            model,
            job,
        },
        notices,
    })
}

// ---------------------------------------------------------------------------
// Expression parser: LL(1) recursive descent with standard precedence.

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    col_offset: usize,
}

impl<'a> Lexer<'a> {
    fn tokenize(src: &'a str, line: usize, col_offset: usize) -> Result<Vec<(Token, usize)>> {
        let mut lx = Lexer {
            src: src.as_bytes(),
            pos: 0,
            line,
            col_offset,
        };
        let mut tokens = Vec::new();
        while let Some((tok, col)) = lx.next_token()? {
            tokens.push((tok, col));
        }
        Ok(tokens)
    }

    fn column(&self) -> usize {
        self.col_offset + self.pos
    }

    fn next_token(&mut self) -> Result<Option<(Token, usize)>> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let col = self.column();
        let c = self.src[self.pos];
        let simple = match c {
            b'+' => Some(Token::Plus),
            b'-' => Some(Token::Minus),
            b'*' => Some(Token::Star),
            b'/' => Some(Token::Slash),
            b'(' => Some(Token::LParen),
            b')' => Some(Token::RParen),
            b',' => Some(Token::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            self.pos += 1;
            return Ok(Some((tok, col)));
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
            {
                self.pos += 1;
            }
            if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
                self.pos += 1;
                if self.pos < self.src.len()
                    && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                {
                    self.pos += 1;
                }
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            let value: f64 = text.parse().map_err(|_| {
                Error::parse(self.line, col, format!("unparseable number `{text}`"))
            })?;
            return Ok(Some((Token::Num(value), col)));
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
            return Ok(Some((Token::Ident(text.to_string()), col)));
        }
        Err(Error::parse(
            self.line,
            col,
            format!("unexpected character `{}`", c as char),
        ))
    }
}

struct ExprParser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

/// Parses a correlator expression; `line` and `col_offset` locate the
/// expression inside its configuration line for error reporting.
pub fn parse_expression(src: &str, line: usize, col_offset: usize) -> Result<CorrelatorExpr> {
    let tokens = Lexer::tokenize(src, line, col_offset)?;
    let end_col = col_offset + src.len();
    let mut p = ExprParser {
        tokens,
        pos: 0,
        line,
        end_col,
    };
    let expr = p.expr()?;
    if let Some((tok, col)) = p.peek_with_col() {
        return Err(Error::parse(
            line,
            col,
            format!("unexpected trailing token {tok:?}"),
        ));
    }
    Ok(expr)
}

impl ExprParser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn peek_with_col(&self) -> Option<(&Token, usize)> {
        self.tokens.get(self.pos).map(|(t, c)| (t, *c))
    }

    fn bump(&mut self) -> Option<(Token, usize)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.end_col)
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<()> {
        match self.bump() {
            Some((tok, _)) if tok == want => Ok(()),
            Some((tok, col)) => Err(Error::parse(
                self.line,
                col,
                format!("expected {what}, found {tok:?}"),
            )),
            None => Err(Error::parse(
                self.line,
                self.end_col,
                format!("expected {what}, found end of expression"),
            )),
        }
    }

    fn expr(&mut self) -> Result<CorrelatorExpr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = CorrelatorExpr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = CorrelatorExpr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<CorrelatorExpr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = CorrelatorExpr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = CorrelatorExpr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<CorrelatorExpr> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(CorrelatorExpr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<CorrelatorExpr> {
        let col = self.here();
        match self.bump() {
            Some((Token::Num(v), _)) => Ok(CorrelatorExpr::Num(v)),
            Some((Token::Ident(name), col)) => match name.as_str() {
                "ua" => Ok(CorrelatorExpr::DotUA),
                "vb" => Ok(CorrelatorExpr::DotVB),
                "abs" => {
                    self.expect(Token::LParen, "`(`")?;
                    let inner = self.expr()?;
                    self.expect(Token::RParen, "`)`")?;
                    Ok(CorrelatorExpr::Abs(Box::new(inner)))
                }
                "min" | "max" => {
                    self.expect(Token::LParen, "`(`")?;
                    let first = self.expr()?;
                    self.expect(Token::Comma, "`,`")?;
                    let second = self.expr()?;
                    self.expect(Token::RParen, "`)`")?;
                    Ok(if name == "min" {
                        CorrelatorExpr::Min(Box::new(first), Box::new(second))
                    } else {
                        CorrelatorExpr::Max(Box::new(first), Box::new(second))
                    })
                }
                other => Err(Error::parse(
                    self.line,
                    col,
                    format!("unknown identifier `{other}` (expected ua, vb, abs, min, max)"),
                )),
            },
            Some((Token::LParen, _)) => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Some((tok, col)) => Err(Error::parse(
                self.line,
                col,
                format!("unexpected token {tok:?}"),
            )),
            None => Err(Error::parse(
                self.line,
                col,
                "unexpected end of expression",
            )),
        }
    }
}
