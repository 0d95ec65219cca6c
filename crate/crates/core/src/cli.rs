//! Convergence study driver behind the `nondiv` binary.
//!
//! A run solves one manufactured problem on a sequence of uniform meshes of
//! the unit square, measures the error in L2, H1 and broken H2, optionally
//! probes stability, and compares observed orders against the expected ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::{problem_by_name, CatalogParams, ManufacturedProblem};
use crate::error::{Error, Result};
use crate::fe_space::FESpace;
use crate::mesh::{unit_square_mesh, Mesh};
use crate::norms::{error_norms, ErrorTriple};
use crate::operator::DgConfig;
use crate::probe::{stability_probe_with, ProbeMethod, ProbeOptions, StabilityReport};
use crate::solver::{discrete_operator, solve_with, Method};

/// Errors at or below this value are treated as exact reproduction.
pub const ERROR_FLOOR: f64 = 1e-13;
/// Largest accepted relative residual of a linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
/// Observed orders may fall this far below the expected one.
pub const EOC_BELOW: f64 = 0.2;
/// Observed orders may exceed the expected one by this much (C0 only).
pub const EOC_ABOVE: f64 = 0.3;

pub const CSV_HEADER: &str = "n,h,dofs,l2,h1,h2_broken,eoc_l2,eoc_h1,eoc_h2,sigma_h1,sigma_h2,time_ms";

pub const DEFAULT_LEVELS: [usize; 4] = [8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: String,
    pub degree: usize,
    /// `None` selects the C0 method.
    pub dg: Option<DgConfig>,
    pub levels: Vec<usize>,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
    pub probe: bool,
    pub seed: u64,
    pub params: CatalogParams,
    pub dump_mesh: Option<PathBuf>,
    pub dump_matrix: Option<PathBuf>,
    pub dump_solution: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "identity-sin".into(),
            degree: 2,
            dg: None,
            levels: DEFAULT_LEVELS.to_vec(),
            format: OutputFormat::Csv,
            out: None,
            probe: false,
            seed: 0,
            params: CatalogParams::default(),
            dump_mesh: None,
            dump_matrix: None,
            dump_solution: None,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

/// Parses a flat `key = value` text. Blank lines and lines starting with `#`
/// are skipped; later keys override earlier ones.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return config_err(format!("line {}: expected key = value", no + 1));
        };
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Builds a configuration from `key = value` pairs on top of the defaults.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut method = "c0".to_string();
        let mut epsilon = None;
        let mut gamma0 = None;
        let (mut a11, mut a12, mut a22) = cfg.params.constant;
        for (key, value) in pairs {
            let v = value.as_str();
            match key.as_str() {
                "problem" => cfg.problem = v.to_string(),
                "degree" => cfg.degree = parse_value(key, v)?,
                "method" => method = v.to_ascii_lowercase(),
                "epsilon" => epsilon = Some(parse_value::<i32>(key, v)?),
                "gamma0" => gamma0 = Some(parse_value::<f64>(key, v)?),
                "levels" => {
                    cfg.levels = v
                        .split(',')
                        .map(|s| parse_value(key, s))
                        .collect::<Result<Vec<usize>>>()?
                }
                "format" => {
                    cfg.format = match v.to_ascii_lowercase().as_str() {
                        "csv" => OutputFormat::Csv,
                        "json" => OutputFormat::Json,
                        other => return config_err(format!("unknown format {other:?}")),
                    }
                }
                "out" => cfg.out = Some(PathBuf::from(v)),
                "probe" => cfg.probe = parse_value(key, v)?,
                "seed" => cfg.seed = parse_value(key, v)?,
                "alpha" => cfg.params.alpha = parse_value(key, v)?,
                "beta" => cfg.params.beta = parse_value(key, v)?,
                "a11" => a11 = parse_value(key, v)?,
                "a12" => a12 = parse_value(key, v)?,
                "a22" => a22 = parse_value(key, v)?,
                "dump_mesh" => cfg.dump_mesh = Some(PathBuf::from(v)),
                "dump_matrix" => cfg.dump_matrix = Some(PathBuf::from(v)),
                "dump_solution" => cfg.dump_solution = Some(PathBuf::from(v)),
                other => return config_err(format!("unknown key {other:?}")),
            }
        }
        cfg.params.constant = (a11, a12, a22);
        cfg.dg = match method.as_str() {
            "c0" => {
                if epsilon.is_some() || gamma0.is_some() {
                    return config_err("epsilon and gamma0 apply to method = dg only");
                }
                None
            }
            "dg" => {
                let d = DgConfig::default();
                Some(DgConfig::new(epsilon.unwrap_or(d.epsilon), gamma0.unwrap_or(d.gamma0))?)
            }
            other => return config_err(format!("unknown method {other:?}")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.degree) {
            return config_err(format!("degree must be 1, 2 or 3, got {}", self.degree));
        }
        if self.levels.is_empty() {
            return config_err("no levels given");
        }
        if self.levels.contains(&0) {
            return config_err("levels must be positive");
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return config_err("levels must be strictly increasing");
        }
        if let Some(dg) = &self.dg {
            dg.validate()?;
            if self.probe {
                return config_err("the stability probe is defined for the C0 method only");
            }
        }
        problem_by_name(&self.problem, &self.params)?;
        Ok(())
    }

    pub fn method(&self) -> Method {
        self.dg.map_or(Method::C0, Method::Dg)
    }
}

/// Observed order of one pair of levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eoc {
    Value(f64),
    /// At least one of the two errors is at the floating-point floor.
    Exact,
}

impl Serialize for Eoc {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Eoc::Value(v) => s.serialize_f64(*v),
            Eoc::Exact => s.serialize_str("exact"),
        }
    }
}

impl<'de> Deserialize<'de> for Eoc {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Eoc::Value(v)),
            Raw::Text(t) if t == "exact" => Ok(Eoc::Exact),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad order {t:?}"))),
        }
    }
}

impl std::fmt::Display for Eoc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Eoc::Value(v) => write!(f, "{v:.4}"),
            Eoc::Exact => f.write_str("exact"),
        }
    }
}

/// `log(e_k / e_{k+1}) / log(h_k / h_{k+1})` for consecutive pairs.
pub fn eoc(errors: &[f64], hs: &[f64]) -> Result<Vec<Eoc>> {
    if errors.len() != hs.len() || errors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need two or more matching errors and mesh sizes, got {} and {}",
            errors.len(),
            hs.len()
        )));
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(Error::InvalidArgument("errors must be finite and non-negative".into()));
    }
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::InvalidArgument("mesh sizes must be positive".into()));
    }
    let mut out = Vec::with_capacity(errors.len() - 1);
    for k in 0..errors.len() - 1 {
        if errors[k] <= ERROR_FLOOR || errors[k + 1] <= ERROR_FLOOR {
            out.push(Eoc::Exact);
            continue;
        }
        if hs[k] == hs[k + 1] {
            return Err(Error::InvalidArgument("consecutive mesh sizes coincide".into()));
        }
        out.push(Eoc::Value((errors[k] / errors[k + 1]).ln() / (hs[k] / hs[k + 1]).ln()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: usize,
    pub h: f64,
    pub dofs: usize,
    pub errors: Option<ErrorTriple>,
    pub residual: Option<f64>,
    pub stability: Option<StabilityReport>,
    pub time_ms: f64,
    pub failure: Option<LevelFailure>,
}

/// Expected orders of convergence for a problem with regularity `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedOrders {
    /// Sobolev regularity of the exact solution; `None` when smooth.
    pub s: Option<f64>,
    /// `min(r + 1, s) - 1`, used by the verdicts.
    pub h1: f64,
    /// `min(r + 1, s)`, reported alongside for comparison.
    pub h1_literal: f64,
    /// `min(r + 1, s) - 2` for degree two and up.
    pub h2: Option<f64>,
}

impl ExpectedOrders {
    pub fn new(degree: usize, s: f64) -> Self {
        let l = ((degree + 1) as f64).min(s);
        ExpectedOrders {
            s: s.is_finite().then_some(s),
            h1: l - 1.0,
            h1_literal: l,
            h2: (degree >= 2).then_some(l - 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub observed: Option<Eoc>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: RunConfig,
    pub expected: ExpectedOrders,
    pub rows: Vec<LevelRow>,
    /// Entry `k` belongs to levels `k` and `k + 1`; `None` when either failed.
    pub eoc_l2: Vec<Option<Eoc>>,
    pub eoc_h1: Vec<Option<Eoc>>,
    pub eoc_h2: Vec<Option<Eoc>>,
    pub verdicts: Vec<Verdict>,
}

impl ConvergenceReport {
    pub fn any_failure(&self) -> bool {
        self.rows.iter().any(|r| r.failure.is_some())
    }

    pub fn all_verdicts_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    /// 0 when everything passes, 3 after a solver or probe failure, 2 after a
    /// failed verdict.
    pub fn exit_code(&self) -> i32 {
        if self.any_failure() {
            3
        } else if !self.all_verdicts_pass() {
            2
        } else {
            0
        }
    }

    pub fn finest_eoc_h1(&self) -> Option<Eoc> {
        self.eoc_h1.last().copied().flatten()
    }

    pub fn finest_eoc_h2(&self) -> Option<Eoc> {
        self.eoc_h2.last().copied().flatten()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(CSV_HEADER);
        s.push('\n');
        let num = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        let order = |v: Option<&Option<Eoc>>| match v.copied().flatten() {
            Some(Eoc::Value(x)) => format!("{x:.6}"),
            Some(Eoc::Exact) => "exact".into(),
            None => String::new(),
        };
        for (k, row) in self.rows.iter().enumerate() {
            let e = row.errors;
            let pair = k.checked_sub(1);
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{:.3}",
                row.n,
                num(Some(row.h)),
                row.dofs,
                num(e.map(|e| e.l2)),
                num(e.map(|e| e.h1)),
                num(e.map(|e| e.h2_broken)),
                order(pair.and_then(|p| self.eoc_l2.get(p))),
                order(pair.and_then(|p| self.eoc_h1.get(p))),
                order(pair.and_then(|p| self.eoc_h2.get(p))),
                num(row.stability.map(|r| r.sigma_h1)),
                num(row.stability.and_then(|r| r.sigma_h2)),
                row.time_ms,
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Evaluation(e.to_string()))
    }
}

fn pair_orders(rows: &[LevelRow], pick: impl Fn(&ErrorTriple) -> f64) -> Vec<Option<Eoc>> {
    rows.windows(2)
        .map(|w| match (w[0].errors, w[1].errors) {
            (Some(a), Some(b)) => eoc(&[pick(&a), pick(&b)], &[w[0].h, w[1].h]).ok().map(|v| v[0]),
            _ => None,
        })
        .collect()
}

fn window_verdict(name: &str, observed: Option<Eoc>, lower: f64, upper: Option<f64>) -> Verdict {
    let pass = match observed {
        Some(Eoc::Exact) => true,
        Some(Eoc::Value(v)) => v >= lower && upper.is_none_or(|u| v <= u),
        None => false,
    };
    Verdict {
        name: name.into(),
        observed,
        lower: Some(lower),
        upper,
        pass,
    }
}

/// Verdicts from the rows alone. A single-level run has no rate verdicts.
pub fn evaluate_verdicts(config: &RunConfig, expected: &ExpectedOrders, rows: &[LevelRow]) -> Vec<Verdict> {
    let mut out = Vec::new();
    for row in rows {
        if let Some(r) = row.residual {
            out.push(Verdict {
                name: format!("residual n={}", row.n),
                observed: None,
                lower: None,
                upper: Some(RESIDUAL_TOLERANCE),
                pass: r <= RESIDUAL_TOLERANCE,
            });
        }
    }
    if rows.len() < 2 {
        return out;
    }
    let h1 = pair_orders(rows, |e| e.h1).last().copied().flatten();
    let is_dg = config.dg.is_some();
    let upper = (!is_dg).then_some(expected.h1 + EOC_ABOVE);
    out.push(window_verdict("eoc_h1", h1, expected.h1 - EOC_BELOW, upper));
    if let (false, Some(e2)) = (is_dg, expected.h2) {
        let h2 = pair_orders(rows, |e| e.h2_broken).last().copied().flatten();
        out.push(window_verdict("eoc_h2", h2, e2 - EOC_BELOW, Some(e2 + EOC_ABOVE)));
    }
    out
}

fn run_level(config: &RunConfig, problem: &ManufacturedProblem, n: usize, finest: bool) -> LevelRow {
    let start = Instant::now();
    let mut row = LevelRow {
        n,
        h: 0.0,
        dofs: 0,
        errors: None,
        residual: None,
        stability: None,
        time_ms: 0.0,
        failure: None,
    };
    let fail = |row: &mut LevelRow, stage: &str, e: Error| {
        row.failure = Some(LevelFailure {
            stage: stage.into(),
            message: e.to_string(),
        });
    };
    let result = (|| -> std::result::Result<(), (&'static str, Error)> {
        let mesh = Arc::new(unit_square_mesh(n).map_err(|e| ("mesh", e))?);
        row.h = mesh.h_max();
        let space = match config.dg {
            None => FESpace::new(mesh.clone(), config.degree),
            Some(_) => FESpace::discontinuous(mesh.clone(), config.degree),
        }
        .map_err(|e| ("space", e))?;
        row.dofs = space.n_free();
        let solved = solve_with(problem, &space, config.method()).map_err(|e| ("solve", e))?;
        row.residual = Some(solved.residual_norm);
        let uh = solved.solution(&space).map_err(|e| ("solve", e))?;
        row.errors = Some(error_norms(&problem.exact, &uh));
        if config.probe {
            let opts = ProbeOptions {
                method: ProbeMethod::Auto,
                seed: config.seed,
            };
            row.stability = Some(stability_probe_with(&space, &problem.coefficient, opts).map_err(|e| ("probe", e))?);
        }
        if finest {
            write_dumps(config, problem, &mesh, &space, &uh).map_err(|e| ("dump", e))?;
        }
        Ok(())
    })();
    if let Err((stage, e)) = result {
        fail(&mut row, stage, e);
    }
    row.time_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

fn write_dumps(
    config: &RunConfig,
    problem: &ManufacturedProblem,
    mesh: &Mesh,
    space: &FESpace,
    uh: &crate::fe_space::FEFunction,
) -> Result<()> {
    if let Some(p) = &config.dump_mesh {
        mesh.write_text(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &config.dump_matrix {
        let op = discrete_operator(space, &problem.coefficient, config.method())?;
        op.matrix.write_coordinate(BufWriter::new(File::create(p)?))?;
    }
    if let Some(p) = &config.dump_solution {
        uh.write_nodal(BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

/// Runs every level (in parallel) and assembles the report in level order.
pub fn run(config: &RunConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let problem = problem_by_name(&config.problem, &config.params)?;
    let last = *config.levels.last().expect("validated");
    let mut rows: Vec<LevelRow> = config
        .levels
        .par_iter()
        .map(|&n| run_level(config, &problem, n, n == last))
        .collect();
    rows.sort_by_key(|r| r.n);
    let expected = ExpectedOrders::new(config.degree, problem.regularity_s);
    let verdicts = evaluate_verdicts(config, &expected, &rows);
    Ok(ConvergenceReport {
        config: config.clone(),
        expected,
        eoc_l2: pair_orders(&rows, |e| e.l2),
        eoc_h1: pair_orders(&rows, |e| e.h1),
        eoc_h2: pair_orders(&rows, |e| e.h2_broken),
        rows,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> BTreeMap<String, String> {
        parse_pairs(text).unwrap()
    }

    #[test]
    fn eoc_examples() {
        assert_eq!(eoc(&[1.0, 0.25], &[1.0, 0.5]).unwrap(), vec![Eoc::Value(2.0)]);
        assert_eq!(
            eoc(&[1.0, 0.5, 0.25], &[1.0, 0.5, 0.25]).unwrap(),
            vec![Eoc::Value(1.0), Eoc::Value(1.0)]
        );
        assert_eq!(eoc(&[1e-15, 1e-15], &[1.0, 0.5]).unwrap(), vec![Eoc::Exact]);
    }

    #[test]
    fn eoc_rejects_bad_input() {
        assert!(eoc(&[1.0], &[1.0]).is_err());
        assert!(eoc(&[1.0, 0.5], &[1.0]).is_err());
        assert!(eoc(&[1.0, f64::NAN], &[1.0, 0.5]).is_err());
        assert!(eoc(&[1.0, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn eoc_serializes_sentinel() {
        let v = vec![Eoc::Value(1.5), Eoc::Exact];
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"[1.5,"exact"]"#);
        assert_eq!(serde_json::from_str::<Vec<Eoc>>(&s).unwrap(), v);
    }

    #[test]
    fn config_parsing() {
        let cfg = RunConfig::from_pairs(&pairs(
            "# comment\nproblem = smooth-poly\ndegree=3\nlevels = 4, 8\nmethod = dg\nepsilon = -1\n",
        ))
        .unwrap();
        assert_eq!(cfg.degree, 3);
        assert_eq!(cfg.levels, vec![4, 8]);
        assert_eq!(
            cfg.dg,
            Some(DgConfig {
                epsilon: -1,
                gamma0: 10.0
            })
        );
        assert_eq!(
            cfg.method(),
            Method::Dg(DgConfig {
                epsilon: -1,
                gamma0: 10.0
            })
        );
    }

    #[test]
    fn config_rejections() {
        for text in [
            "levels = 8, 8",
            "levels = 16, 8",
            "degree = 4",
            "epsilon = 1",
            "method = dg\nepsilon = 2",
            "method = dg\ngamma0 = 0",
            "problem = nope-sin",
            "colour = red",
            "just text",
            "method = dg\nprobe = true",
        ] {
            let r = parse_pairs(text).and_then(|p| RunConfig::from_pairs(&p));
            assert!(
                matches!(r, Err(Error::Config(_)) | Err(Error::InvalidArgument(_))),
                "{text}: {r:?}"
            );
        }
    }

    #[test]
    fn expected_orders() {
        let e = ExpectedOrders::new(2, f64::INFINITY);
        assert_eq!((e.h1, e.h1_literal, e.h2), (2.0, 3.0, Some(1.0)));
        let e = ExpectedOrders::new(3, 2.25);
        assert_eq!((e.h1, e.h2), (1.25, Some(0.25)));
        assert_eq!(ExpectedOrders::new(1, f64::INFINITY).h2, None);
    }

    #[test]
    fn single_level_has_no_orders() {
        let cfg = RunConfig {
            levels: vec![4],
            degree: 1,
            ..Default::default()
        };
        let rep = run(&cfg).unwrap();
        assert!(rep.eoc_h1.is_empty());
        assert_eq!(rep.exit_code(), 0);
        assert_eq!(rep.to_csv().lines().count(), 2);
    }

    #[test]
    fn verdicts_are_reproducible_from_rows() {
        let cfg = RunConfig {
            levels: vec![4, 8],
            degree: 2,
            ..Default::default()
        };
        let rep = run(&cfg).unwrap();
        assert_eq!(evaluate_verdicts(&rep.config, &rep.expected, &rep.rows), rep.verdicts);
        let back: ConvergenceReport = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(
            evaluate_verdicts(&back.config, &back.expected, &back.rows),
            rep.verdicts
        );
    }

    #[test]
    fn window_logic() {
        assert!(window_verdict("x", Some(Eoc::Value(1.9)), 1.8, Some(2.3)).pass);
        assert!(!window_verdict("x", Some(Eoc::Value(2.4)), 1.8, Some(2.3)).pass);
        assert!(window_verdict("x", Some(Eoc::Value(2.4)), 1.8, None).pass);
        assert!(window_verdict("x", Some(Eoc::Exact), 1.8, Some(2.3)).pass);
        assert!(!window_verdict("x", None, 1.8, None).pass);
    }
}
