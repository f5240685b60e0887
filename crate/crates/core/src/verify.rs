//! Empirical checks of pointwise estimates, producing self-contained reports.
//!
//! A report records the numbers it was judged on. Hard assertions are
//! reserved for constant-free statements; anything involving an existential
//! constant is reported as a ratio or slope.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{lp_average, Cylinder, ScalarField, SpaceTimePoint, MAX_DIM};
use crate::heatsolve::Poly2;
use crate::io;
use crate::regularity::{
    self, admissible_radii, analysis_cylinder, decay_exponent, dini_bound, Constraint, CurveKind,
    HalfSpaceProfile, ModulusCurve,
};

/// Named stand-ins for the existential constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub lambda: f64,
    pub mu: f64,
    pub c0: f64,
    pub m0: f64,
    pub r0: f64,
    /// Values of `M` at or below this count as zero in the decay dichotomy.
    pub zero_floor: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            mu: 0.75,
            c0: 10.0,
            m0: 0.05,
            r0: 0.25,
            zero_floor: 1e-9,
        }
    }
}

impl Calibration {
    pub fn validate(&self) -> Result<()> {
        decay_exponent(self.lambda, self.mu)?;
        for (name, v) in [("c0", self.c0), ("m0", self.m0), ("r0", self.r0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("calibration {name} = {v} must be positive")));
            }
        }
        if !(self.zero_floor >= 0.0) {
            return Err(Error::Config("calibration zero_floor must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.mu.ln() / self.lambda.ln()
    }
}

/// Where and how a check looks at a field.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckContext {
    pub center: SpaceTimePoint,
    pub p: f64,
    pub radii: Vec<f64>,
    pub cal: Calibration,
}

impl CheckContext {
    pub fn new(center: SpaceTimePoint, p: f64, radii: Vec<f64>, cal: Calibration) -> Result<Self> {
        crate::grid::check_exponent(p)?;
        cal.validate()?;
        if radii.is_empty() {
            return Err(Error::Config("empty radius ladder".into()));
        }
        Ok(Self { center, p, radii, cal })
    }

    fn admissible(&self, field: &ScalarField) -> Result<Vec<f64>> {
        let r = admissible_radii(field, &self.radii);
        if r.is_empty() {
            return Err(Error::Domain("no ladder radius at or above 4h".into()));
        }
        Ok(r)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Lt,
    Ge,
}

/// `measured <relation> bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub measured: f64,
    pub relation: Relation,
    pub bound: f64,
}

impl Assertion {
    pub fn holds(&self) -> bool {
        match self.relation {
            Relation::Le => self.measured <= self.bound,
            Relation::Lt => self.measured < self.bound,
            Relation::Ge => self.measured >= self.bound,
        }
    }

    pub fn ratio(&self) -> f64 {
        safe_ratio(self.measured, self.bound)
    }
}

fn safe_ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else if b == 0.0 {
        f64::MAX.copysign(a)
    } else {
        a / b
    }
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else if v.is_nan() {
        0.0
    } else {
        f64::MAX.copysign(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check: String,
    pub target: String,
    pub inputs_digest: String,
    pub status: Status,
    pub applicable: bool,
    pub note: String,
    pub ladder: Vec<f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub metrics: BTreeMap<String, f64>,
    pub assertions: Vec<Assertion>,
}

impl VerificationReport {
    pub fn new(check: &str, target: String, inputs_digest: String) -> Self {
        Self {
            check: check.to_string(),
            target,
            inputs_digest,
            status: Status::Pass,
            applicable: true,
            note: String::new(),
            ladder: Vec::new(),
            series: BTreeMap::new(),
            metrics: BTreeMap::new(),
            assertions: Vec::new(),
        }
    }

    /// Non-finite entries are clamped so that the record stays finite.
    pub fn set_series(&mut self, name: &str, values: &[f64]) {
        self.series.insert(name.into(), values.iter().map(|v| finite(*v)).collect());
    }

    pub fn set_metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.into(), finite(value));
    }

    pub fn assert(&mut self, name: &str, measured: f64, relation: Relation, bound: f64) {
        self.assertions.push(Assertion {
            name: name.into(),
            measured: finite(measured),
            relation,
            bound: finite(bound),
        });
    }

    pub fn not_applicable(&mut self, why: &str) {
        self.applicable = false;
        self.push_note(why);
    }

    pub fn push_note(&mut self, text: &str) {
        if !self.note.is_empty() {
            self.note.push_str("; ");
        }
        self.note.push_str(text);
    }

    /// Status implied by the recorded assertions.
    pub fn recompute_status(&self) -> Status {
        if !self.applicable {
            Status::NotApplicable
        } else if self.assertions.iter().all(Assertion::holds) {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn finish(mut self) -> Self {
        self.status = self.recompute_status();
        self
    }

    pub fn failed(&self) -> bool {
        self.status == Status::Fail
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serialisable") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report JSON: {e}")))
    }

    /// One summary row per assertion, or a single row when not applicable.
    pub fn summary_rows(&self) -> Vec<String> {
        if self.assertions.is_empty() || !self.applicable {
            return vec![format!("{},{},,,,{}", self.check, csv_field(&self.target), self.status.as_str())];
        }
        self.assertions
            .iter()
            .map(|a| {
                format!(
                    "{}:{},{},{:e},{:e},{:e},{}",
                    self.check,
                    a.name,
                    csv_field(&self.target),
                    a.measured,
                    a.bound,
                    a.ratio(),
                    if a.holds() { "pass" } else { "fail" }
                )
            })
            .collect()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const SUMMARY_HEADER: &str = "check,target,measured,bound,ratio,pass";

pub fn summary_csv(reports: &[VerificationReport]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in reports {
        for row in r.summary_rows() {
            out.push_str(&row);
            out.push('\n');
        }
    }
    out
}

/// SHA-256 over the encoded fields followed by a parameter string.
pub fn inputs_digest(fields: &[&ScalarField], params: &str) -> String {
    let mut h = Sha256::new();
    for f in fields {
        h.update(io::encode_field(f));
    }
    h.update(params.as_bytes());
    let mut s = String::with_capacity(64);
    for b in h.finalize().iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn describe_point(p: &SpaceTimePoint, n: usize) -> String {
    let xs: Vec<String> = p.x[..n].iter().map(|v| format!("{v}")).collect();
    format!("x=({}) t={}", xs.join(" "), p.t)
}

fn digest_for(fields: &[&ScalarField], ctx: &CheckContext, extra: &str) -> String {
    let params = format!(
        "center={:?};p={};radii={:?};cal={:?};{extra}",
        ctx.center, ctx.p, ctx.radii, ctx.cal
    );
    inputs_digest(fields, &params)
}

fn curve_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// Least-squares slope of `ln value` against `ln r`, over positive values.
pub fn loglog_slope(radii: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(values)
        .filter(|(r, v)| **r > 0.0 && **v > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Index range of the middle two quartiles of a ladder of length `len`.
pub fn middle_quartiles(len: usize) -> std::ops::Range<usize> {
    if len < 4 {
        return 0..len;
    }
    len / 4..len - len / 4
}

/// Slope over the middle two quartiles.
pub fn quartile_slope(radii: &[f64], values: &[f64]) -> Option<f64> {
    let q = middle_quartiles(radii.len());
    loglog_slope(&radii[q.clone()], &values[q])
}

/// Mean over the smallest quartile of the ladder (at least one point).
pub fn small_tail_mean(values: &[f64]) -> f64 {
    let k = values.len().div_ceil(4).max(1).min(values.len());
    values[..k].iter().sum::<f64>() / k as f64
}

/// Relative change of a metric between two resolutions.
pub fn refinement_change(coarse: &VerificationReport, fine: &VerificationReport, metric: &str) -> Option<f64> {
    let (a, b) = (coarse.metric(metric)?, fine.metric(metric)?);
    let scale = a.abs().max(b.abs());
    Some(if scale == 0.0 { 0.0 } else { (a - b).abs() / scale })
}

/// `sup_r Ñ(u,r)` against `‖u‖_p + ‖f‖_p + sup_r ω̃(r)`, plus `Ñ ≤ N̂`.
pub fn check_bmo(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<VerificationReport> {
    u.check_same_grid(f)?;
    let radii = ctx.admissible(u)?;
    let mut rep = VerificationReport::new(
        "bmo",
        describe_point(&ctx.center, u.grid().n()),
        digest_for(&[u, f], ctx, "bmo"),
    );
    let nt = regularity::n_tilde_curve(u, &ctx.center, ctx.p, &radii)?;
    let nh = regularity::n_hat_curve(u, f, &ctx.center, ctx.p, &radii)?;
    let (ot, consts) = regularity::omega_tilde_curve(f, &ctx.center, ctx.p, &radii)?;
    let top = Cylinder::new(ctx.center, *radii.last().unwrap());
    let u_norm = lp_average(u, &top, ctx.p)?;
    let f_norm = lp_average(f, &top, ctx.p)?;
    let sup_nt = curve_max(&nt.values);
    let sup_ot = curve_max(&ot.values);
    let bracket = u_norm + f_norm + sup_ot;
    rep.ladder = radii;
    rep.set_series("n_tilde", &nt.values);
    rep.set_series("n_hat", &nh.values);
    rep.set_series("omega_tilde", &ot.values);
    rep.set_series("c_r", &consts);
    rep.set_metric("sup_n_tilde", sup_nt);
    rep.set_metric("u_norm", u_norm);
    rep.set_metric("f_norm", f_norm);
    rep.set_metric("sup_omega_tilde", sup_ot);
    rep.set_metric("bracket", bracket);
    rep.set_metric("ratio", safe_ratio(sup_nt, bracket));
    let gap = nt
        .values
        .iter()
        .zip(&nh.values)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max);
    rep.assert(
        "n_tilde_le_n_hat",
        gap,
        Relation::Le,
        1e-7 * curve_max(&nh.values) + 1e-12,
    );
    Ok(rep.finish())
}

/// Vanishing `ω̃` along the ladder should force vanishing `Ñ`; both judged by
/// the mean over the smallest quartile against 10% of the curve maximum.
pub fn check_vmo(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<VerificationReport> {
    u.check_same_grid(f)?;
    let radii = ctx.admissible(u)?;
    let mut rep = VerificationReport::new(
        "vmo",
        describe_point(&ctx.center, u.grid().n()),
        digest_for(&[u, f], ctx, "vmo"),
    );
    let nt = regularity::n_tilde_curve(u, &ctx.center, ctx.p, &radii)?;
    let (ot, _) = regularity::omega_tilde_curve(f, &ctx.center, ctx.p, &radii)?;
    let (ot_tail, ot_max) = (small_tail_mean(&ot.values), curve_max(&ot.values));
    let (nt_tail, nt_max) = (small_tail_mean(&nt.values), curve_max(&nt.values));
    rep.ladder = radii;
    rep.set_series("n_tilde", &nt.values);
    rep.set_series("omega_tilde", &ot.values);
    rep.set_metric("omega_tilde_tail", ot_tail);
    rep.set_metric("omega_tilde_max", ot_max);
    rep.set_metric("n_tilde_tail", nt_tail);
    rep.set_metric("n_tilde_max", nt_max);
    if ot_tail > 0.1 * ot_max {
        rep.not_applicable("omega_tilde does not vanish along the ladder");
    }
    rep.assert("n_tilde_tail_vanishes", nt_tail, Relation::Le, 0.1 * nt_max);
    Ok(rep.finish())
}

/// `u − f(x₀,t₀)·P*(· − x₀)`, reducing to a right-hand side vanishing at the centre.
fn subtract_center_pstar(u: &ScalarField, f0: f64, center: &SpaceTimePoint) -> Result<ScalarField> {
    if f0 == 0.0 {
        return Ok(u.clone());
    }
    let n = u.grid().n();
    let ps = ScalarField::from_fn(u.grid(), |x, _| {
        let r2: f64 = (0..n).map(|d| (x[d] - center.x[d]).powi(2)).sum();
        r2 / (2.0 * n as f64)
    })?;
    u.axpy(-f0, &ps)
}

/// `e(r)`: scaled `L^p` distance from `u` to a fixed polynomial on `Q_r^−`.
pub fn poly_error_curve(u: &ScalarField, center: &SpaceTimePoint, poly: &Poly2, p: f64, radii: &[f64]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| {
            let s = u.samples(&analysis_cylinder(u, center, r)?)?;
            let it = s
                .coords
                .iter()
                .zip(&s.values)
                .map(|(c, v)| v - s.cell_mean(c, |q| poly.eval(&q[..s.n], q[MAX_DIM])));
            Ok(crate::grid::lp_mean(it, s.len(), p) / (r * r))
        })
        .collect()
}

/// Caloric Taylor expansion: `P₀` fitted at the smallest radius, `e(r)`
/// compared in shape with the Dini bound built from `ω̃`.
pub fn check_taylor(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<VerificationReport> {
    u.check_same_grid(f)?;
    let radii = ctx.admissible(u)?;
    let mut rep = VerificationReport::new(
        "taylor",
        describe_point(&ctx.center, u.grid().n()),
        digest_for(&[u, f], ctx, "taylor"),
    );
    let f0 = f.evaluate(&ctx.center)?;
    let v = subtract_center_pstar(u, f0, &ctx.center)?;
    if f0 != 0.0 {
        rep.push_note("f(center)·P* subtracted from u");
    }
    let fit = regularity::fit_poly2(&v, &ctx.center, radii[0], ctx.p, Constraint::Caloric)?;
    let e = poly_error_curve(&v, &ctx.center, &fit.poly, ctx.p, &radii)?;
    let (ot, _) = regularity::omega_tilde_curve(f, &ctx.center, ctx.p, &radii)?;
    let r_top = *radii.last().unwrap();
    let n1 = regularity::n_tilde(&v, &ctx.center, r_top, ctx.p)?;
    let (lambda, mu) = (ctx.cal.lambda, ctx.cal.mu);
    let bounds: Vec<f64> = radii
        .iter()
        .map(|&r| dini_bound(n1, &ot, r, lambda, mu, 1.0))
        .collect::<Result<_>>()?;
    let non_dini = bounds.iter().any(|b| b.is_infinite());
    let ratios: Vec<f64> = e.iter().zip(&bounds).map(|(a, b)| safe_ratio(*a, *b)).collect();
    let floor = 8.0 * u.grid().h();
    let band: Vec<f64> = radii
        .iter()
        .zip(&ratios)
        .filter(|(r, x)| **r >= floor * (1.0 - 1e-9) && **x > 0.0)
        .map(|(_, x)| *x)
        .collect();
    let band_ratio = if band.is_empty() {
        0.0
    } else {
        band.iter().copied().fold(0.0, f64::max) / band.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let slope_e = quartile_slope(&radii, &e).unwrap_or(0.0);
    let slope_ot = quartile_slope(&ot.radii, &ot.values).unwrap_or(0.0);
    let alpha = ctx.cal.alpha();

    rep.ladder = radii;
    rep.set_series("e", &e);
    rep.set_series("omega_tilde", &ot.values);
    if !non_dini {
        rep.set_series("dini_bound", &bounds);
        rep.set_series("ratio", &ratios);
    } else {
        rep.push_note("omega_tilde flagged non-Dini; bound is infinite");
    }
    rep.set_metric("f_center", f0);
    rep.set_metric("m_tilde0", fit.poly.coefficient_norm());
    rep.set_metric("n1", n1);
    rep.set_metric("alpha", alpha);
    rep.set_metric("slope_e", slope_e);
    rep.set_metric("slope_omega_tilde", slope_ot);
    rep.set_metric("expected_slope", slope_ot.min(alpha));
    rep.set_metric("ratio_band", band_ratio);
    rep.set_metric("non_dini", if non_dini { 1.0 } else { 0.0 });
    rep.set_metric("p0_a", fit.poly.a);
    rep.set_metric("p0_m", fit.poly.m);
    rep.assert("caloric_constraint", fit.poly.heat().abs(), Relation::Le, 1e-12);
    Ok(rep.finish())
}

/// Empirical growth constants `sup_ρ ‖u‖_{L^p(Q_ρ)}/ρ²` and `sup_ρ sup_{Q_ρ} u/ρ²`.
pub fn check_quadratic_growth(u: &ScalarField, ctx: &CheckContext) -> Result<VerificationReport> {
    let radii = ctx.admissible(u)?;
    let mut rep = VerificationReport::new(
        "quadratic_growth",
        describe_point(&ctx.center, u.grid().n()),
        digest_for(&[u], ctx, "quadratic_growth"),
    );
    let mut mean = Vec::with_capacity(radii.len());
    let mut sup = Vec::with_capacity(radii.len());
    for &r in &radii {
        let cyl = analysis_cylinder(u, &ctx.center, r)?;
        mean.push(lp_average(u, &cyl, ctx.p)? / (r * r));
        sup.push(u.sup_on_cylinder(&cyl)?.max(0.0) / (r * r));
    }
    let (c_mean, c_sup) = (curve_max(&mean), curve_max(&sup));
    rep.ladder = radii;
    rep.set_series("mean_over_r2", &mean);
    rep.set_series("sup_over_r2", &sup);
    rep.set_metric("c1_mean", c_mean);
    rep.set_metric("c1_sup", c_sup);
    rep.assert("c1_sup_finite", c_sup, Relation::Lt, f64::MAX);
    Ok(rep.finish())
}

/// Largest `R` with `Q_R^−(point)` inside the domain.
fn largest_cylinder(field: &ScalarField, point: &SpaceTimePoint) -> f64 {
    let g = field.grid();
    let lateral = (0..g.n())
        .map(|d| g.radius() - point.x[d].abs())
        .fold(f64::INFINITY, f64::min);
    lateral.min((point.t - g.t_start()).max(0.0).sqrt())
}

fn node_range(field: &ScalarField, cyl: &Cylinder) -> Result<(f64, f64)> {
    Ok(field
        .grid()
        .cylinder_nodes(cyl)?
        .into_iter()
        .map(|(s, k)| field.at(s, k))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v))))
}

/// If `u(x₀,t₀) > 2λ`, the parabolic-boundary sup on `Q_d^−` is at least
/// `inf_{Q_d^−} f · d²/(2n+1)`.
pub fn check_nondegeneracy(
    u: &ScalarField,
    f: &ScalarField,
    point: &SpaceTimePoint,
    d: f64,
    ctx: &CheckContext,
) -> Result<VerificationReport> {
    u.check_same_grid(f)?;
    let g = u.grid();
    let n = g.n();
    let cyl = Cylinder::new(*point, d);
    g.check_cylinder(&cyl)?;
    let mut rep = VerificationReport::new(
        "nondegeneracy",
        format!("{} d={d}", describe_point(point, n)),
        digest_for(&[u, f], ctx, &format!("point={point:?};d={d}")),
    );
    let big_r = largest_cylinder(u, point);
    let (f_lo, f_hi) = node_range(f, &Cylinder::new(*point, big_r))?;
    let osc = f_hi - f_lo;
    let q = (n as f64 + 2.0) / ctx.p;
    let lambda = ctx.cal.c0 * big_r.powf(q) * d.powf(2.0 - q) * osc;
    let u0 = u.evaluate(point)?;
    let sup = u.sup_on_parabolic_boundary(&cyl)?;
    let f_inf = node_range(f, &cyl)?.0.max(0.0);
    let bound = f_inf * d * d / (2.0 * n as f64 + 1.0);
    rep.ladder = vec![d];
    rep.set_metric("R", big_r);
    rep.set_metric("f_oscillation", osc);
    rep.set_metric("lambda", lambda);
    rep.set_metric("u_point", u0);
    rep.set_metric("f_inf", f_inf);
    if !(u0 > 2.0 * lambda) {
        rep.not_applicable("premise u(point) > 2λ fails");
    }
    rep.assert("boundary_sup_ge_bound", sup, Relation::Ge, bound);
    Ok(rep.finish())
}

/// Space-time box `K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Region {
    fn nodes(&self, field: &ScalarField) -> Result<Vec<(usize, usize)>> {
        let g = field.grid();
        if self.lo.len() != g.n() || self.hi.len() != g.n() {
            return Err(Error::Config("region dimension differs from the grid".into()));
        }
        let tol = 1e-9 * g.h();
        let mut out = Vec::new();
        for k in 0..g.n_time() {
            let t = g.time(k);
            if t < self.t_lo - tol || t > self.t_hi + tol {
                continue;
            }
            for s in 0..g.n_space() {
                let x = g.node_x(s);
                if (0..g.n()).all(|d| x[d] >= self.lo[d] - tol && x[d] <= self.hi[d] + tol) {
                    out.push((s, k));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Domain("region K contains no grid nodes".into()));
        }
        Ok(out)
    }
}

fn grid_oscillation(f: &ScalarField) -> f64 {
    let (lo, hi) = f
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    hi - lo
}

/// `sup_K u_m` against `τ_m = osc f_m` for a family of runs whose limit
/// vanishes on `K`.
pub fn check_weak_nondegeneracy(
    runs: &[(ScalarField, ScalarField)],
    u_limit: &ScalarField,
    region: &Region,
) -> Result<VerificationReport> {
    if runs.is_empty() {
        return Err(Error::Config("weak non-degeneracy needs at least one run".into()));
    }
    let k_nodes = region.nodes(u_limit)?;
    let worst = k_nodes.iter().map(|&(s, k)| u_limit.at(s, k)).fold(0.0, f64::max);
    if worst > 1e-12 {
        return Err(Error::Precondition(format!(
            "K meets the positivity set of the limit (u = {worst})"
        )));
    }
    let mut fields: Vec<&ScalarField> = vec![u_limit];
    for (u, f) in runs {
        u.check_same_grid(f)?;
        fields.push(u);
        fields.push(f);
    }
    let mut rep = VerificationReport::new(
        "weak_nondegeneracy",
        format!("K=[{:?}, {:?}]×[{}, {}]", region.lo, region.hi, region.t_lo, region.t_hi),
        inputs_digest(&fields, &format!("{region:?}")),
    );
    let mut taus = Vec::new();
    let mut sups = Vec::new();
    for (u, f) in runs {
        let nodes = region.nodes(u)?;
        taus.push(grid_oscillation(f));
        sups.push(nodes.iter().map(|&(s, k)| u.at(s, k)).fold(0.0, f64::max));
    }
    let ratios: Vec<f64> = sups.iter().zip(&taus).map(|(s, t)| safe_ratio(*s, *t)).collect();
    rep.set_series("tau", &taus);
    rep.set_series("sup_k", &sups);
    rep.set_series("ratio", &ratios);
    rep.set_metric("ratio_max", curve_max(&ratios));
    if let Some(slope) = loglog_slope(&taus, &sups) {
        rep.set_metric("slope", slope);
    }
    let zero_runs: Vec<f64> = taus
        .iter()
        .zip(&sups)
        .filter(|(t, _)| **t == 0.0)
        .map(|(_, s)| *s)
        .collect();
    if !zero_runs.is_empty() {
        rep.assert("zero_oscillation_zero_sup", curve_max(&zero_runs), Relation::Le, 1e-12);
    }
    Ok(rep.finish())
}

/// Per-radius disjunction `M(λr) < μM(r)` or `M(r) < C₀σ(r)`, with `λr`
/// interpolated on the ladder and `M(r) ≤ zero_floor` counting as contraction.
pub fn check_decay_dichotomy(
    m_curve: &ModulusCurve,
    sigma_curve: &ModulusCurve,
    cal: &Calibration,
    r_floor: f64,
) -> Result<VerificationReport> {
    cal.validate()?;
    let mut rep = VerificationReport::new(
        "decay_dichotomy",
        format!("r>={r_floor}"),
        {
            let mut h = Sha256::new();
            h.update(serde_json::to_vec(&(m_curve, sigma_curve, cal, r_floor)).unwrap_or_default());
            h.finalize().iter().map(|b| format!("{b:02x}")).collect()
        },
    );
    let r_low = m_curve.radii[0];
    let mut radii = Vec::new();
    let (mut m_r, mut m_lr, mut sig, mut b1, mut b2, mut holds) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (&r, &m) in m_curve.radii.iter().zip(&m_curve.values) {
        if r < r_floor * (1.0 - 1e-9) || cal.lambda * r < r_low * (1.0 - 1e-12) {
            continue;
        }
        let Some(s) = sigma_curve.value_at(r) else { continue };
        let ml = m_curve.value_at(cal.lambda * r).unwrap_or(m);
        let first = m <= cal.zero_floor || ml < cal.mu * m;
        let second = m < cal.c0 * s;
        radii.push(r);
        m_r.push(m);
        m_lr.push(ml);
        sig.push(s);
        b1.push(f64::from(u8::from(first)));
        b2.push(f64::from(u8::from(second)));
        holds.push(f64::from(u8::from(first || second)));
    }
    if radii.is_empty() {
        rep.not_applicable("no ladder radius with λr on the ladder");
        return Ok(rep.finish());
    }
    let m_top = *m_curve.values.last().unwrap();
    let fraction = holds.iter().sum::<f64>() / holds.len() as f64;
    rep.ladder = radii;
    rep.set_series("m", &m_r);
    rep.set_series("m_lambda_r", &m_lr);
    rep.set_series("sigma", &sig);
    rep.set_series("contracts", &b1);
    rep.set_series("data_dominated", &b2);
    rep.set_series("holds", &holds);
    rep.set_metric("pass_fraction", fraction);
    rep.set_metric("m_r0", m_top);
    rep.set_metric("m0", cal.m0);
    if m_top > cal.m0 {
        rep.not_applicable("premise M(r0) <= M0 not met");
    }
    rep.assert("disjunction_every_radius", fraction, Relation::Ge, 1.0);
    Ok(rep.finish())
}

/// `M` and `σ` curves for the dichotomy, normalised by `f(center)`.
pub fn dichotomy_curves(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<(ModulusCurve, ModulusCurve)> {
    let kappa = f.evaluate(&ctx.center)?;
    if !(kappa > 0.0) {
        return Err(Error::Precondition(format!("f(center) = {kappa} must be positive")));
    }
    let radii = ctx.admissible(u)?;
    let m = regularity::m_reg(&u.scaled(1.0 / kappa), &ctx.center, ctx.p, 1.0, &radii)?;
    let s = regularity::sigma(&f.scaled(1.0 / kappa), &ctx.center, ctx.p, &radii)?;
    Ok((m, s))
}

/// Outcome of the regular-point test at one centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularPoint {
    pub kappa: f64,
    pub m_reg_r0: f64,
    pub regular: bool,
    pub nu: [f64; MAX_DIM],
    pub radii: Vec<f64>,
    pub m_reg: Vec<f64>,
}

/// Regularity classification: `f(center) > 0` and `M_reg(u/f(center), r₀) ≤ M₀`;
/// the normal comes from the fit at the smallest radius.
/// `None` when `f(center) ≤ 0`.
pub fn classify_regular(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<Option<RegularPoint>> {
    let kappa = f.evaluate(&ctx.center)?;
    if !(kappa > 0.0) {
        return Ok(None);
    }
    let radii: Vec<f64> = ctx
        .admissible(u)?
        .into_iter()
        .filter(|&r| r <= ctx.cal.r0 * (1.0 + 1e-12))
        .collect();
    if radii.is_empty() {
        return Err(Error::Domain(format!("no ladder radius in [4h, r0 = {}]", ctx.cal.r0)));
    }
    let v = u.scaled(1.0 / kappa);
    let (curve, fits) = regularity::n_reg_curve(&v, &ctx.center, ctx.p, 1.0, &radii)?;
    let m = curve.running_sup(CurveKind::MReg);
    let m_reg_r0 = *m.values.last().unwrap();
    Ok(Some(RegularPoint {
        kappa,
        m_reg_r0,
        regular: m_reg_r0 <= ctx.cal.m0,
        nu: fits[0].nu,
        radii: m.radii,
        m_reg: m.values,
    }))
}

/// Regular-point check: classification, then the half-space error curve
/// at the fitted normal compared in shape with the Dini-type bound.
pub fn check_regular_point(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<VerificationReport> {
    u.check_same_grid(f)?;
    let n = u.grid().n();
    let mut rep = VerificationReport::new(
        "regular_point",
        describe_point(&ctx.center, n),
        digest_for(&[u, f], ctx, "regular_point"),
    );
    let Some(cls) = classify_regular(u, f, ctx)? else {
        rep.not_applicable("f(center) <= 0");
        return Ok(rep.finish());
    };
    let radii = ctx.admissible(u)?;
    let v = u.scaled(1.0 / cls.kappa);
    let profile = HalfSpaceProfile::new(&cls.nu[..n], 1.0)?;
    let e: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let s = v.samples(&analysis_cylinder(&v, &ctx.center, r)?)?;
            regularity::halfspace_residual(&s, &profile, ctx.p)
        })
        .collect::<Result<_>>()?;
    let sig = regularity::sigma(&f.scaled(1.0 / cls.kappa), &ctx.center, ctx.p, &radii)?;
    let bounds: Vec<f64> = radii
        .iter()
        .map(|&r| dini_bound(cls.m_reg_r0, &sig, r, ctx.cal.lambda, ctx.cal.mu, 1.0))
        .collect::<Result<_>>()?;
    rep.ladder = radii.clone();
    rep.set_series("m_reg", &cls.m_reg);
    rep.set_series("e", &e);
    rep.set_series("sigma", &sig.values);
    if bounds.iter().all(|b| b.is_finite()) {
        let ratios: Vec<f64> = e.iter().zip(&bounds).map(|(a, b)| safe_ratio(*a, *b)).collect();
        rep.set_series("dini_bound", &bounds);
        rep.set_series("ratio", &ratios);
    } else {
        rep.push_note("sigma flagged non-Dini; bound is infinite");
    }
    rep.set_metric("kappa", cls.kappa);
    rep.set_metric("m_reg_r0", cls.m_reg_r0);
    rep.set_metric("m0", ctx.cal.m0);
    rep.set_metric("regular", if cls.regular { 1.0 } else { 0.0 });
    rep.set_metric("slope_e", quartile_slope(&radii, &e).unwrap_or(0.0));
    for d in 0..n {
        rep.set_metric(&format!("nu{}", d + 1), cls.nu[d]);
    }
    if !cls.regular {
        rep.push_note("not regular: M_reg(r0) > M0");
    }
    let drop = cls
        .m_reg
        .windows(2)
        .map(|w| w[0] - w[1])
        .fold(0.0, f64::max);
    rep.assert("m_reg_nondecreasing", drop, Relation::Le, 0.0);
    let norm = cls.nu[..n].iter().map(|x| x * x).sum::<f64>().sqrt();
    rep.assert("normal_unit_length", (norm - 1.0).abs(), Relation::Le, 1e-12);
    Ok(rep.finish())
}
