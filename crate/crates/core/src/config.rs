//! Sectioned key-value configuration.
//!
//! ```text
//! # comment
//! [scenario]
//! M = 2
//! N_s = 2
//! N_c = 2
//! T = 4
//! P_T = 1
//! sigma_s2 = 1
//! sigma_c2 = 1
//! k = 1
//! R_h = identity
//!
//! [schemes]
//! names = gaussian_iid, gaussian_colored, haar, deterministic
//! colored_R = diag(0.75, 0.25)
//! haar_R = 0.5, 0.1+0.2i; 0.1-0.2i, 0.5
//! psk_order = 4
//!
//! [run]
//! seed = 7
//! trials = 10000
//! points = 11
//! out = results/curve.csv
//! ```
//!
//! Matrix values are one of `identity`, `diag(a, b, ...)`, inline rows
//! (entries `a+bi` separated by `,`, rows by `;`) or `file:PATH`, a CSV
//! whose rows hold interleaved `real,imag` pairs. Relative paths resolve
//! against the config file's directory. Unknown sections or keys and
//! repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{DrtError, Result};
use crate::model::{Scenario, SignalScheme, DEFAULT_PSK_ORDER};
use crate::numkit::{cr, CMat, Hermitian, C64};

pub const DEFAULT_TRIALS: usize = 10_000;
pub const DEFAULT_POINTS: usize = 11;

pub const SCHEME_NAMES: [&str; 5] = ["gaussian_iid", "gaussian_colored", "psk", "haar", "deterministic"];

const SCENARIO_KEYS: [&str; 9] = ["M", "N_s", "N_c", "T", "P_T", "sigma_s2", "sigma_c2", "k", "R_h"];
const SCHEME_KEYS: [&str; 5] = ["names", "colored_R", "haar_R", "x0", "psk_order"];
const RUN_KEYS: [&str; 4] = ["seed", "trials", "points", "out"];

#[derive(Debug, Clone, PartialEq)]
pub struct SchemesConfig {
    pub names: Vec<String>,
    pub colored_r: Option<Hermitian>,
    pub haar_r: Option<Hermitian>,
    pub x0: Option<CMat>,
    pub psk_order: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub points: usize,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub scenario: Scenario,
    pub schemes: SchemesConfig,
    pub run: RunConfig,
}

type Section = BTreeMap<String, (usize, String)>;

fn err(line: usize, msg: impl std::fmt::Display) -> DrtError {
    DrtError::config(format!("line {line}: {msg}"))
}

fn split_sections(text: &str) -> Result<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !["scenario", "schemes", "run"].contains(&name) {
                return Err(err(line_no, format!("unknown section [{name}]")));
            }
            if sections.contains_key(name) {
                return Err(err(line_no, format!("section [{name}] repeated")));
            }
            sections.insert(name.to_string(), Section::new());
            current = Some(name.to_string());
            continue;
        }
        let Some(section) = current.as_ref() else {
            return Err(err(line_no, "key outside of a section"));
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let allowed: &[&str] = match section.as_str() {
            "scenario" => &SCENARIO_KEYS,
            "schemes" => &SCHEME_KEYS,
            _ => &RUN_KEYS,
        };
        if !allowed.contains(&key) {
            return Err(err(line_no, format!("unknown key `{key}` in [{section}]")));
        }
        let entries = sections.get_mut(section).expect("section exists");
        if entries.insert(key.to_string(), (line_no, value.to_string())).is_some() {
            return Err(err(line_no, format!("key `{key}` repeated")));
        }
    }
    Ok(sections)
}

fn parse_num<T: std::str::FromStr>(section: &Section, key: &str) -> Result<Option<T>> {
    match section.get(key) {
        None => Ok(None),
        Some((line, v)) => v
            .parse()
            .map(Some)
            .map_err(|_| err(*line, format!("`{key}`: cannot parse `{v}`"))),
    }
}

fn require<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| DrtError::config(format!("missing required key `{key}` in [scenario]")))
}

fn parse_complex(s: &str) -> Option<C64> {
    s.trim().replace(' ', "").parse().ok()
}

fn parse_rows(text: &str) -> Option<CMat> {
    let rows: Vec<Vec<C64>> = text
        .split(';')
        .map(|row| row.split(',').map(parse_complex).collect::<Option<Vec<_>>>())
        .collect::<Option<_>>()?;
    let cols = rows.first()?.len();
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return None;
    }
    Some(CMat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn read_matrix_csv(path: &Path) -> Result<CMat> {
    let text = fs::read_to_string(path).map_err(|e| DrtError::config(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| DrtError::config(format!("{}: bad number in `{line}`", path.display())))?;
        if !vals.len().is_multiple_of(2) {
            return Err(DrtError::config(format!("{}: odd number of values in `{line}`", path.display())));
        }
        rows.push(vals.chunks(2).map(|p| C64::new(p[0], p[1])).collect::<Vec<_>>());
    }
    let cols = rows.first().map_or(0, Vec::len);
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(DrtError::config(format!("{}: rows must be non-empty and equally long", path.display())));
    }
    Ok(CMat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Parses a matrix value; `dim` sizes `identity`.
fn parse_matrix(value: &str, line: usize, dim: usize, base: &Path) -> Result<CMat> {
    let v = value.trim();
    if v == "identity" {
        return Ok(CMat::identity(dim, dim));
    }
    if let Some(inner) = v.strip_prefix("diag(").and_then(|s| s.strip_suffix(')')) {
        let d: Vec<C64> = inner
            .split(',')
            .map(parse_complex)
            .collect::<Option<_>>()
            .ok_or_else(|| err(line, format!("bad diagonal `{v}`")))?;
        let n = d.len();
        return Ok(CMat::from_fn(n, n, |i, j| if i == j { d[i] } else { cr(0.0) }));
    }
    if let Some(path) = v.strip_prefix("file:") {
        return read_matrix_csv(&base.join(path.trim()));
    }
    parse_rows(v).ok_or_else(|| err(line, format!("bad matrix `{v}`")))
}

fn parse_hermitian(section: &Section, key: &str, dim: usize, base: &Path) -> Result<Option<Hermitian>> {
    let Some((line, v)) = section.get(key) else {
        return Ok(None);
    };
    let m = parse_matrix(v, *line, dim, base)?;
    if m.shape() != (dim, dim) {
        return Err(err(*line, format!("`{key}` must be {dim}x{dim}, got {}x{}", m.nrows(), m.ncols())));
    }
    Hermitian::new(m).map(Some).map_err(|e| err(*line, format!("`{key}`: {e}")))
}

impl CliConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| DrtError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        CliConfig::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let sections = split_sections(text)?;
        let empty = Section::new();
        let sc = sections.get("scenario").ok_or_else(|| DrtError::config("missing [scenario] section"))?;
        let m: usize = require(parse_num(sc, "M")?, "M")?;
        let n_s: usize = require(parse_num(sc, "N_s")?, "N_s")?;
        let t: usize = require(parse_num(sc, "T")?, "T")?;
        let p_t: f64 = require(parse_num(sc, "P_T")?, "P_T")?;
        let sigma_s2: f64 = require(parse_num(sc, "sigma_s2")?, "sigma_s2")?;
        let r_h = parse_hermitian(sc, "R_h", n_s * m, base)?.unwrap_or_else(|| Hermitian::identity(n_s * m));
        let scenario = Scenario {
            m,
            n_s,
            n_c: parse_num(sc, "N_c")?.unwrap_or(1),
            t,
            p_t,
            sigma_s2,
            sigma_c2: parse_num(sc, "sigma_c2")?.unwrap_or(1.0),
            r_h,
            k_coherence: parse_num(sc, "k")?.unwrap_or(1),
        }
        .validated()?;

        let sch = sections.get("schemes").unwrap_or(&empty);
        let names = match sch.get("names") {
            None => vec!["gaussian_iid".to_string()],
            Some((line, v)) => {
                let names: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                if let Some(bad) = names.iter().find(|n| !SCHEME_NAMES.contains(&n.as_str())) {
                    return Err(err(*line, format!("unknown scheme `{bad}` (known: {})", SCHEME_NAMES.join(", "))));
                }
                names
            }
        };
        let x0 = match sch.get("x0") {
            None => None,
            Some((line, v)) => Some(parse_matrix(v, *line, m, base)?),
        };
        let schemes = SchemesConfig {
            names,
            colored_r: parse_hermitian(sch, "colored_R", m, base)?,
            haar_r: parse_hermitian(sch, "haar_R", m, base)?,
            x0,
            psk_order: parse_num(sch, "psk_order")?.unwrap_or(DEFAULT_PSK_ORDER),
        };

        let rn = sections.get("run").unwrap_or(&empty);
        let run = RunConfig {
            seed: parse_num(rn, "seed")?.unwrap_or(0),
            trials: parse_num(rn, "trials")?.unwrap_or(DEFAULT_TRIALS),
            points: parse_num(rn, "points")?.unwrap_or(DEFAULT_POINTS),
            out: rn.get("out").map(|(_, v)| PathBuf::from(v)),
        };
        let cfg = CliConfig { scenario, schemes, run };
        cfg.schemes()?;
        Ok(cfg)
    }

    /// Builds and validates one scheme by name.
    pub fn scheme(&self, name: &str) -> Result<SignalScheme> {
        let scn = &self.scenario;
        let uniform = || Hermitian::identity(scn.m).scale(scn.p_t / scn.m as f64);
        let scheme = match name {
            "gaussian_iid" => SignalScheme::GaussianIid,
            "gaussian_colored" => SignalScheme::GaussianColored { r: self.schemes.colored_r.clone().unwrap_or_else(uniform) },
            "haar" => SignalScheme::HaarFixedCovariance { r: self.schemes.haar_r.clone().unwrap_or_else(uniform) },
            "psk" => SignalScheme::ConstantModulusPsk { order: self.schemes.psk_order },
            "deterministic" => {
                let x0 = match &self.schemes.x0 {
                    Some(x) => x.clone(),
                    None if scn.t >= scn.m => {
                        let amp = (scn.p_t * scn.t as f64 / scn.m as f64).sqrt();
                        CMat::from_fn(scn.m, scn.t, |i, j| if i == j { cr(amp) } else { cr(0.0) })
                    }
                    None => return Err(DrtError::config("deterministic scheme needs `x0` when T < M")),
                };
                SignalScheme::Deterministic { x0 }
            }
            other => return Err(DrtError::config(format!("unknown scheme `{other}` (known: {})", SCHEME_NAMES.join(", ")))),
        };
        scheme.validate(scn)?;
        Ok(scheme)
    }

    pub fn schemes(&self) -> Result<Vec<SignalScheme>> {
        self.schemes.names.iter().map(|n| self.scheme(n)).collect()
    }

    /// Text that [`CliConfig::parse`] maps back to `self`. Matrices are
    /// written inline.
    pub fn to_config_string(&self) -> String {
        let s = &self.scenario;
        let mut out = String::from("[scenario]\n");
        for (k, v) in [
            ("M", s.m.to_string()),
            ("N_s", s.n_s.to_string()),
            ("N_c", s.n_c.to_string()),
            ("T", s.t.to_string()),
            ("P_T", s.p_t.to_string()),
            ("sigma_s2", s.sigma_s2.to_string()),
            ("sigma_c2", s.sigma_c2.to_string()),
            ("k", s.k_coherence.to_string()),
            ("R_h", format_matrix(s.r_h.matrix())),
        ] {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push_str("\n[schemes]\n");
        let _ = writeln!(out, "names = {}", self.schemes.names.join(", "));
        if let Some(r) = &self.schemes.colored_r {
            let _ = writeln!(out, "colored_R = {}", format_matrix(r.matrix()));
        }
        if let Some(r) = &self.schemes.haar_r {
            let _ = writeln!(out, "haar_R = {}", format_matrix(r.matrix()));
        }
        if let Some(x) = &self.schemes.x0 {
            let _ = writeln!(out, "x0 = {}", format_matrix(x));
        }
        let _ = writeln!(out, "psk_order = {}", self.schemes.psk_order);
        out.push_str("\n[run]\n");
        let _ = writeln!(out, "seed = {}", self.run.seed);
        let _ = writeln!(out, "trials = {}", self.run.trials);
        let _ = writeln!(out, "points = {}", self.run.points);
        if let Some(p) = &self.run.out {
            let _ = writeln!(out, "out = {}", p.display());
        }
        out
    }
}

pub fn format_complex(z: C64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", z.re, sign, z.im.abs())
}

/// Inline row syntax.
pub fn format_matrix(m: &CMat) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect::<Vec<_>>().join(", "))
        .collect::<Vec<_>>()
        .join("; ")
}

/// CSV with interleaved `real,imag` columns, one matrix row per line.
pub fn matrix_csv(m: &CMat) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [m[(i, j)].re.to_string(), m[(i, j)].im.to_string()])
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
