//! Experiment configuration: one TOML file per experiment, overridable by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use parabolic_obstacle::heatsolve::{Case, CASE_IDS};
use parabolic_obstacle::obstacle::LcpOptions;
use parabolic_obstacle::verify::Calibration;
use parabolic_obstacle::{Grid, GridSpec, Ladder, SpaceTimePoint};
use serde::{Deserialize, Serialize};

/// A configuration problem. The message names the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(field: &str, msg: impl fmt::Display) -> anyhow::Error {
    Invalid(format!("{field}: {msg}")).into()
}

pub const CHECKS: &[&str] = &[
    "bmo",
    "vmo",
    "taylor",
    "quadratic-growth",
    "nondegeneracy",
    "weak-nondegeneracy",
    "decay-dichotomy",
    "regular-point",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub radius: f64,
    pub depth: f64,
    pub h: f64,
    pub dt: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 1,
            radius: 1.0,
            depth: 1.0,
            h: 0.05,
            dt: 0.0025,
        }
    }
}

impl GridSection {
    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.n, self.radius, self.depth, self.h, self.dt)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseSection {
    pub id: String,
    pub params: BTreeMap<String, f64>,
}

impl Default for CaseSection {
    fn default() -> Self {
        Self {
            id: "traveling-wave".into(),
            params: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolveKind {
    /// Use the manufactured pair as is.
    None,
    Heat,
    Obstacle,
}

impl SolveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveKind::None => "none",
            SolveKind::Heat => "heat",
            SolveKind::Obstacle => "obstacle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub kind: SolveKind,
    /// `case`, `zero`, `const:<v>` or `file:<path>`.
    pub f: String,
    /// `case`, `zero` or `file:<path>`: lateral and initial values.
    pub data: String,
    pub lcp: LcpOptions,
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            kind: SolveKind::None,
            f: "case".into(),
            data: "case".into(),
            lcp: LcpOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Each center is `x₁..xₙ` or `x₁..xₙ, t`.
    pub centers: Vec<Vec<f64>>,
    pub p: f64,
    /// `log:<rmin>:<rmax>:<ppd>`; empty means `log:4h:min(R, √T)/2:24`.
    pub ladder: String,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            centers: Vec::new(),
            p: 2.0,
            ladder: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakSection {
    /// `f_m = 1 + x₁/m` for each `m`.
    pub m: Vec<f64>,
    /// Box corners of the region K; empty means `[-0.8, -0.5] × [-0.5, 0.5]^{n-1}`.
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Default for WeakSection {
    fn default() -> Self {
        Self {
            m: vec![4.0, 8.0, 16.0, 32.0],
            lo: Vec::new(),
            hi: Vec::new(),
            t_lo: -0.5,
            t_hi: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<String>,
    /// Points for the non-degeneracy check; empty means the analysis centers.
    pub points: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    pub weak: WeakSection,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            checks: vec![
                "bmo".into(),
                "quadratic-growth".into(),
                "decay-dichotomy".into(),
                "regular-point".into(),
            ],
            points: Vec::new(),
            distances: vec![0.1, 0.2],
            weak: WeakSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Positivity threshold; absent means `h²/4`.
    pub eps_pos: Option<f64>,
    /// Axis the graph diagnostic solves for.
    pub axis: usize,
    /// Keep every `stride`-th time slice of the cloud for classification.
    pub stride: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            eps_pos: None,
            axis: 0,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output: PathBuf,
    /// Recorded for provenance. Every scan order in the pipeline is fixed, so
    /// no step currently draws from it.
    pub seed: u64,
    pub grid: GridSection,
    pub case: CaseSection,
    pub solve: SolveSection,
    pub analysis: AnalysisSection,
    pub calibration: Calibration,
    pub verify: VerifySection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("pobs-out"),
            seed: 0,
            grid: GridSection::default(),
            case: CaseSection::default(),
            solve: SolveSection::default(),
            analysis: AnalysisSection::default(),
            calibration: Calibration::default(),
            verify: VerifySection::default(),
            sweep: SweepSection::default(),
        }
    }
}

/// The validated objects a command works with.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub grid: Grid,
    pub case: Case,
    pub centers: Vec<SpaceTimePoint>,
    pub ladder: Ladder,
    pub radii: Vec<f64>,
    pub points: Vec<SpaceTimePoint>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| invalid(&path.display().to_string(), e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is serialisable")
    }

    /// Fills in the dimension-dependent defaults so the provenance copy records them.
    pub fn with_defaults(mut self) -> Self {
        let n = self.grid.n;
        if (1..=3).contains(&n) {
            if self.analysis.centers.is_empty() {
                self.analysis.centers = vec![vec![0.0; n]];
            }
            let w = &mut self.verify.weak;
            if w.lo.is_empty() && w.hi.is_empty() {
                w.lo = std::iter::once(-0.8).chain(std::iter::repeat_n(-0.5, n - 1)).collect();
                w.hi = std::iter::once(-0.5).chain(std::iter::repeat_n(0.5, n - 1)).collect();
            }
        }
        if self.analysis.ladder.trim().is_empty() {
            let g = &self.grid;
            let r_max = 0.5 * g.radius.min(g.depth.sqrt());
            self.analysis.ladder = format!("log:{}:{}:24", 4.0 * g.h, r_max);
        }
        self
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let grid = Grid::new(self.grid.spec()).map_err(|e| invalid("grid", e))?;
        let n = grid.n();
        let h = grid.h();
        if !CASE_IDS.contains(&self.case.id.as_str()) {
            return Err(invalid(
                "case.id",
                format!("`{}` is not one of {}", self.case.id, CASE_IDS.join(", ")),
            ));
        }
        let case = Case::parse(&self.case.id, n, &self.case.params).map_err(|e| invalid("case.params", e))?;
        if !(self.analysis.p > 1.0 && self.analysis.p.is_finite()) {
            return Err(invalid("analysis.p", format!("{} must lie in (1, ∞)", self.analysis.p)));
        }
        let ladder: Ladder = self.analysis.ladder.parse().map_err(|e| invalid("analysis.ladder", e))?;
        let floor = 4.0 * h * (1.0 - 1e-9);
        if ladder.r_min < floor {
            return Err(invalid(
                "analysis.ladder",
                format!("r_min = {} is below 4h = {}", ladder.r_min, 4.0 * h),
            ));
        }
        self.calibration.validate().map_err(|e| invalid("calibration", e))?;
        if self.calibration.r0 < floor {
            return Err(invalid("calibration.r0", format!("{} is below 4h", self.calibration.r0)));
        }
        if self.analysis.centers.is_empty() {
            return Err(invalid("analysis.centers", "at least one center is needed"));
        }
        let centers = self
            .analysis
            .centers
            .iter()
            .enumerate()
            .map(|(i, c)| parse_point(c, n).map_err(|e| invalid(&format!("analysis.centers[{i}]"), e)))
            .collect::<Result<Vec<_>>>()?;
        let points = if self.verify.points.is_empty() {
            centers.clone()
        } else {
            self.verify
                .points
                .iter()
                .enumerate()
                .map(|(i, c)| parse_point(c, n).map_err(|e| invalid(&format!("verify.points[{i}]"), e)))
                .collect::<Result<Vec<_>>>()?
        };
        for (i, d) in self.verify.distances.iter().enumerate() {
            if !(*d >= 2.0 * h * (1.0 - 1e-9)) {
                return Err(invalid(&format!("verify.distances[{i}]"), format!("{d} is below 2h")));
            }
        }
        for (i, c) in self.verify.checks.iter().enumerate() {
            if !CHECKS.contains(&c.as_str()) {
                return Err(invalid(
                    &format!("verify.checks[{i}]"),
                    format!("`{c}` is not one of {}", CHECKS.join(", ")),
                ));
            }
        }
        let w = &self.verify.weak;
        if w.m.iter().any(|m| !(*m > 0.0)) {
            return Err(invalid("verify.weak.m", "every m must be positive"));
        }
        if w.lo.len() != n || w.hi.len() != n {
            return Err(invalid("verify.weak", format!("lo and hi need {n} entries")));
        }
        if self.sweep.axis >= n {
            return Err(invalid("sweep.axis", format!("{} is not below n = {n}", self.sweep.axis)));
        }
        if self.sweep.stride == 0 {
            return Err(invalid("sweep.stride", "must be positive"));
        }
        if let Some(e) = self.sweep.eps_pos {
            if !(e > 0.0) {
                return Err(invalid("sweep.eps_pos", "must be positive"));
            }
        }
        self.solve.lcp.validate().map_err(|e| invalid("solve.lcp", e))?;
        parse_source(&self.solve.f, true).map_err(|e| invalid("solve.f", e))?;
        parse_source(&self.solve.data, false).map_err(|e| invalid("solve.data", e))?;
        let radii = ladder.radii();
        Ok(Resolved {
            grid,
            case,
            centers,
            ladder,
            radii,
            points,
        })
    }
}

/// `x₁..xₙ` at `t = 0`, or `x₁..xₙ, t`.
pub fn parse_point(c: &[f64], n: usize) -> std::result::Result<SpaceTimePoint, String> {
    if c.iter().any(|v| !v.is_finite()) {
        return Err("coordinates must be finite".into());
    }
    match c.len() {
        l if l == n => Ok(SpaceTimePoint::new(c, 0.0)),
        l if l == n + 1 => Ok(SpaceTimePoint::new(&c[..n], c[n])),
        l => Err(format!("{l} coordinates given, expected {n} or {}", n + 1)),
    }
}

/// Comma-separated numbers, as given on the command line.
pub fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Case,
    Zero,
    Const(f64),
    File(PathBuf),
}

pub fn parse_source(s: &str, allow_const: bool) -> std::result::Result<Source, String> {
    match s.trim() {
        "case" => Ok(Source::Case),
        "zero" => Ok(Source::Zero),
        t if t.starts_with("const:") && allow_const => t[6..]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(Source::Const)
            .ok_or_else(|| format!("`{t}` needs a finite number after const:")),
        t if t.starts_with("file:") && t.len() > 5 => Ok(Source::File(PathBuf::from(&t[5..]))),
        t => Err(format!(
            "`{t}` is not one of case, zero{}, file:<path>",
            if allow_const { ", const:<v>" } else { "" }
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::default().with_defaults();
        let r = c.resolve().unwrap();
        assert_eq!(r.radii[0], 0.2);
        assert_eq!(c.analysis.ladder, "log:0.2:0.5:24");

        let mut c = ExperimentConfig::default();
        c.grid.n = 2;
        let c = c.with_defaults();
        let r = c.resolve().unwrap();
        assert_eq!(r.centers.len(), 1);
        assert_eq!(c.verify.weak.lo, [-0.8, -0.5]);
        assert_eq!(c.verify.weak.hi, [-0.5, 0.5]);
    }

    #[test]
    fn toml_roundtrip() {
        let c = ExperimentConfig::default().with_defaults();
        let back: ExperimentConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let mut c = ExperimentConfig::default().with_defaults();
        c.analysis.ladder = "log:0.01:0.5:24".into();
        let e = c.resolve().unwrap_err().to_string();
        assert!(e.contains("analysis.ladder"), "{e}");

        let mut c = ExperimentConfig::default().with_defaults();
        c.calibration.lambda = 1.5;
        assert!(c.resolve().unwrap_err().to_string().contains("calibration"));

        let mut c = ExperimentConfig::default().with_defaults();
        c.case.id = "nope".into();
        assert!(c.resolve().unwrap_err().to_string().contains("case.id"));

        let mut c = ExperimentConfig::default().with_defaults();
        c.analysis.centers = vec![vec![0.0, 0.0, 0.0]];
        assert!(c.resolve().unwrap_err().to_string().contains("analysis.centers[0]"));
    }

    #[test]
    fn points_and_sources() {
        let p = parse_point(&[0.3, -0.5], 1).unwrap();
        assert_eq!((p.x[0], p.t), (0.3, -0.5));
        let p = parse_point(&[0.1, 0.2], 2).unwrap();
        assert_eq!((p.x[1], p.t), (0.2, 0.0));
        assert_eq!(parse_source("const:1", true), Ok(Source::Const(1.0)));
        assert!(parse_source("const:1", false).is_err());
        assert_eq!(parse_source("file:a.prfd", false), Ok(Source::File("a.prfd".into())));
        assert_eq!(parse_list("0, 1.5").unwrap(), vec![0.0, 1.5]);
    }
}
