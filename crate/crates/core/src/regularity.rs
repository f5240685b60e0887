//! Pointwise regularity functionals on backward cylinders.
//!
//! All quadratic-fit residuals use the scaled mean convention
//!
//! ```text
//! N(u, r) = (1/|Q_r^−| ∫_{Q_r^−} |u − P|^p)^{1/p} / r²
//! ```
//!
//! which differs from the `r^{−(n+2+2p)}` normalisation only by the constant
//! `|Q_1^−|^{1/p}`. Polynomials returned by the fits are expressed in
//! coordinates relative to the cylinder centre.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{check_exponent, lp_mean, Cylinder, CylinderSamples, ScalarField, SpaceTimePoint, MAX_DIM};
use crate::heatsolve::Poly2;
use crate::io;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Omega,
    Sigma,
    OmegaTilde,
    NTilde,
    NHat,
    NReg,
    MReg,
    /// Any derived curve, e.g. a Taylor error.
    Derived,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Omega => "omega",
            CurveKind::Sigma => "sigma",
            CurveKind::OmegaTilde => "omega_tilde",
            CurveKind::NTilde => "n_tilde",
            CurveKind::NHat => "n_hat",
            CurveKind::NReg => "n_reg",
            CurveKind::MReg => "m_reg",
            CurveKind::Derived => "derived",
        }
    }
}

/// Functional values along an increasing radius ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusCurve {
    pub kind: CurveKind,
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl ModulusCurve {
    pub fn new(kind: CurveKind, radii: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if radii.len() != values.len() || radii.is_empty() {
            return Err(Error::Config("curve needs matching, nonempty radii and values".into()));
        }
        if radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("curve radii must be positive and strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("curve values must be finite and nonnegative".into()));
        }
        Ok(Self { kind, radii, values })
    }

    /// `r ↦ sup_{ρ ≤ r} value(ρ)` over the ladder.
    pub fn running_sup(&self, kind: CurveKind) -> Self {
        let mut acc = 0.0f64;
        let values = self
            .values
            .iter()
            .map(|&v| {
                acc = acc.max(v);
                acc
            })
            .collect();
        Self {
            kind,
            radii: self.radii.clone(),
            values,
        }
    }

    /// Linear interpolation in `ln r`; `None` outside the ladder.
    pub fn value_at(&self, r: f64) -> Option<f64> {
        interp_log(&self.radii, &self.values, r)
    }

    pub fn to_csv(&self) -> String {
        io::curve_csv(&self.radii, &self.values)
    }

    pub fn from_csv(kind: CurveKind, text: &str) -> Result<Self> {
        let (r, v) = io::parse_curve_csv(text)?;
        Self::new(kind, r, v)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}

fn interp_log(radii: &[f64], values: &[f64], r: f64) -> Option<f64> {
    let tol = 1e-12;
    let first = *radii.first()?;
    let last = *radii.last()?;
    if r < first * (1.0 - tol) || r > last * (1.0 + tol) {
        return None;
    }
    let r = r.clamp(first, last);
    let i = radii.partition_point(|&x| x < r);
    if i == 0 {
        return Some(values[0]);
    }
    if radii[i.min(radii.len() - 1)] == r {
        return Some(values[i]);
    }
    let (r0, r1) = (radii[i - 1], radii[i]);
    let w = (r / r0).ln() / (r1 / r0).ln();
    Some(values[i - 1] * (1.0 - w) + values[i] * w)
}

/// Cylinder for an analysis radius, enforcing `r ≥ 4h`.
pub fn analysis_cylinder(field: &ScalarField, center: &SpaceTimePoint, r: f64) -> Result<Cylinder> {
    let r_min = field.grid().r_min();
    if r < r_min * (1.0 - 1e-9) {
        return Err(Error::Domain(format!(
            "radius {r} is below the resolution floor 4h = {r_min}"
        )));
    }
    let cyl = Cylinder::new(*center, r);
    field.grid().check_cylinder(&cyl)?;
    Ok(cyl)
}

/// Ladder radii at or above `4h`.
pub fn admissible_radii(field: &ScalarField, radii: &[f64]) -> Vec<f64> {
    let r_min = field.grid().r_min() * (1.0 - 1e-9);
    radii.iter().copied().filter(|&r| r >= r_min).collect()
}

fn nonempty(radii: Vec<f64>) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(Error::Domain("no ladder radius at or above 4h".into()));
    }
    Ok(radii)
}

/// `ω(ρ) = (mean_{Q_ρ^−} |f − f(x₀,t₀)|^p)^{1/p}`.
pub fn omega(f: &ScalarField, center: &SpaceTimePoint, rho: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let f0 = f.evaluate(center)?;
    let s = f.samples(&analysis_cylinder(f, center, rho)?)?;
    Ok(lp_mean(s.values.iter().map(|v| v - f0), s.len(), p))
}

pub fn omega_curve(f: &ScalarField, center: &SpaceTimePoint, p: f64, radii: &[f64]) -> Result<ModulusCurve> {
    let radii = nonempty(admissible_radii(f, radii))?;
    let values: Result<Vec<f64>> = par::map_collect(&radii, |&r| omega(f, center, r, p))
        .into_iter()
        .collect();
    ModulusCurve::new(CurveKind::Omega, radii, values?)
}

/// `σ(r) = sup_{ρ ≤ r} ω(ρ)` over the ladder, truncated below at `4h`.
pub fn sigma(f: &ScalarField, center: &SpaceTimePoint, p: f64, radii: &[f64]) -> Result<ModulusCurve> {
    Ok(omega_curve(f, center, p, radii)?.running_sup(CurveKind::Sigma))
}

/// Minimiser of `c ↦ Σ|v_i − c|^p`.
pub fn best_constant(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    if p == 2.0 {
        return values.iter().sum::<f64>() / values.len() as f64;
    }
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo <= 0.0 {
        return lo;
    }
    // φ(c) = Σ sgn(v − c)|v − c|^{p−1} decreases strictly; find its root.
    let scale = hi - lo;
    let phi = |c: f64| -> f64 {
        values
            .iter()
            .map(|&v| {
                let d = (v - c) / scale;
                d.signum() * d.abs().powf(p - 1.0)
            })
            .sum()
    };
    let (mut flo, mut fhi) = (phi(lo), phi(hi));
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= 1e-15 * scale.max(lo.abs().max(hi.abs())) {
            break;
        }
        // Illinois regula falsi, bisection when the secant stalls at an end
        let mut c = (lo * fhi - hi * flo) / (fhi - flo);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let fc = phi(c);
        if fc == 0.0 {
            return c;
        }
        if fc > 0.0 {
            lo = c;
            flo = fc;
            if side == 1 {
                fhi *= 0.5;
            }
            side = 1;
        } else {
            hi = c;
            fhi = fc;
            if side == -1 {
                flo *= 0.5;
            }
            side = -1;
        }
    }
    0.5 * (lo + hi)
}

/// `ω̃(r) = inf_c (mean_{Q_r^−}|f − c|^p)^{1/p}`, returned with its minimiser `c_r`.
pub fn omega_tilde(f: &ScalarField, center: &SpaceTimePoint, r: f64, p: f64) -> Result<(f64, f64)> {
    check_exponent(p)?;
    let s = f.samples(&analysis_cylinder(f, center, r)?)?;
    let c = best_constant(&s.values, p);
    Ok((lp_mean(s.values.iter().map(|v| v - c), s.len(), p), c))
}

pub fn omega_tilde_curve(
    f: &ScalarField,
    center: &SpaceTimePoint,
    p: f64,
    radii: &[f64],
) -> Result<(ModulusCurve, Vec<f64>)> {
    let radii = nonempty(admissible_radii(f, radii))?;
    let pairs: Result<Vec<(f64, f64)>> = par::map_collect(&radii, |&r| omega_tilde(f, center, r, p))
        .into_iter()
        .collect();
    let (values, consts): (Vec<f64>, Vec<f64>) = pairs?.into_iter().unzip();
    Ok((ModulusCurve::new(CurveKind::OmegaTilde, radii, values)?, consts))
}

/// Search space of a quadratic fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Constraint {
    /// All of `P̃₂`.
    Free,
    /// `tr(c) − m = value`, i.e. `P ∈ value·P* + P₂`.
    HeatEquals(f64),
    /// `tr(c) = m`.
    Caloric,
}

impl Constraint {
    fn heat_value(&self) -> Option<f64> {
        match self {
            Constraint::Free => None,
            Constraint::HeatEquals(c) => Some(*c),
            Constraint::Caloric => Some(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly2Fit {
    pub poly: Poly2,
    pub residual: f64,
    pub constraint: Constraint,
    pub iterations: usize,
}

impl Poly2Fit {
    pub fn constraint_satisfied(&self, tol: f64) -> bool {
        match self.constraint.heat_value() {
            None => true,
            Some(c) => (self.poly.heat() - c).abs() <= tol,
        }
    }
}

/// Basis for fits in scaled coordinates `y = x/r`, `s = t/r²`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct QuadBasis {
    n: usize,
    constrained: bool,
}

impl QuadBasis {
    pub fn new(n: usize, constrained: bool) -> Self {
        Self { n, constrained }
    }

    pub fn len(&self) -> usize {
        let n = self.n;
        1 + n + n + n * (n - 1) / 2 + usize::from(!self.constrained)
    }

    /// Free: `1, y_i, y_i²/2, y_i y_j (i<j), s`.
    /// Constrained: `1, y_i, y_i²/2 + s, y_i y_j (i<j)`.
    pub fn eval(&self, y: &[f64], s: f64, out: &mut [f64]) {
        let n = self.n;
        out[0] = 1.0;
        let mut k = 1;
        for i in 0..n {
            out[k] = y[i];
            k += 1;
        }
        for i in 0..n {
            out[k] = 0.5 * y[i] * y[i] + if self.constrained { s } else { 0.0 };
            k += 1;
        }
        for i in 0..n {
            for j in i + 1..n {
                out[k] = y[i] * y[j];
                k += 1;
            }
        }
        if !self.constrained {
            out[k] = s;
        }
    }

    /// Polynomial in unscaled relative coordinates from scaled coefficients.
    pub fn to_poly(&self, beta: &[f64], r: f64, heat: Option<f64>) -> Poly2 {
        let n = self.n;
        let mut p = Poly2::zero(n);
        p.a = beta[0] * r * r;
        for i in 0..n {
            p.b[i] = beta[1 + i] * r;
            p.c[i][i] = beta[1 + n + i];
        }
        let mut k = 1 + 2 * n;
        for i in 0..n {
            for j in i + 1..n {
                p.c[i][j] = beta[k];
                p.c[j][i] = beta[k];
                k += 1;
            }
        }
        p.m = match heat {
            Some(h) => p.trace() - h,
            None => beta[k],
        };
        p
    }
}

/// Scaled design data shared by the p = 2 and IRLS paths.
struct Design {
    basis: QuadBasis,
    rows: Vec<[f64; 12]>,
    target: Vec<f64>,
}

impl Design {
    fn new(samples: &CylinderSamples, heat: Option<f64>) -> Self {
        let n = samples.n;
        let r = samples.r;
        let basis = QuadBasis::new(n, heat.is_some());
        let inv_r2 = 1.0 / (r * r);
        let mut rows = Vec::with_capacity(samples.len());
        let mut target = Vec::with_capacity(samples.len());
        // corner means of the basis: only the pure squares pick up a constant
        let mut sq_shift = [0.0; MAX_DIM];
        for d in 0..n {
            sq_shift[d] = 0.5 * (samples.half_cell[d] / r).powi(2);
        }
        for (c, &v) in samples.coords.iter().zip(&samples.values) {
            let mut y = [0.0; MAX_DIM];
            for d in 0..n {
                y[d] = c[d] / r;
            }
            let s = c[MAX_DIM] * inv_r2;
            let mut row = [0.0; 12];
            basis.eval(&y[..n], s, &mut row);
            for d in 0..n {
                row[1 + n + d] += sq_shift[d];
            }
            rows.push(row);
            target.push(v * inv_r2 + heat.unwrap_or(0.0) * s);
        }
        Self { basis, rows, target }
    }

    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        let k = self.basis.len();
        self.rows
            .iter()
            .zip(&self.target)
            .map(|(row, t)| t - row[..k].iter().zip(beta).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }

    fn weighted_solve(&self, weights: Option<&[f64]>) -> Vec<f64> {
        let k = self.basis.len();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        for (i, (row, t)) in self.rows.iter().zip(&self.target).enumerate() {
            let w = weights.map_or(1.0, |w| w[i]);
            for a in 0..k {
                let wa = w * row[a];
                rhs[a] += wa * t;
                for b in a..k {
                    gram[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        match gram.clone().cholesky() {
            Some(ch) => ch.solve(&rhs).iter().copied().collect(),
            None => gram
                .svd(true, true)
                .solve(&rhs, 1e-13)
                .map(|v| v.iter().copied().collect())
                .unwrap_or_else(|_| vec![0.0; k]),
        }
    }
}

fn lp_objective(res: &[f64], p: f64) -> f64 {
    res.iter().map(|r| r.abs().powf(p)).sum()
}

pub(crate) const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 2000;

/// Minimises `Σ|target − Gβ|^p` over β. `p = 2` is one exact solve; other
/// exponents use IRLS with a backtracking line search on the objective.
fn lp_regression(design: &Design, p: f64) -> Result<(Vec<f64>, usize)> {
    let mut beta = design.weighted_solve(None);
    if p == 2.0 {
        return Ok((beta, 0));
    }
    let scale = design.target.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let floor = 1e-9 * scale;
    let mut res = design.residuals(&beta);
    let mut obj = lp_objective(&res, p);
    let mut last_step = f64::INFINITY;
    let mut last_gain = f64::INFINITY;
    for it in 1..=IRLS_MAX_ITER {
        let w: Vec<f64> = res.iter().map(|r| r.abs().max(floor).powf(p - 2.0)).collect();
        let cand = design.weighted_solve(Some(&w));
        let dir: Vec<f64> = cand.iter().zip(&beta).map(|(c, b)| c - b).collect();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = beta.iter().zip(&dir).map(|(b, d)| b + t * d).collect();
            let r = design.residuals(&trial);
            let o = lp_objective(&r, p);
            if o <= obj {
                accepted = Some((trial, r, o));
                break;
            }
            t *= 0.5;
        }
        let bnorm = beta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let Some((trial, r, o)) = accepted else {
            // no descent at any step length: the iterate is optimal to rounding
            return Ok((beta, it));
        };
        last_step = dir.iter().fold(0.0f64, |a, d| a.max((t * d).abs()));
        last_gain = obj - o;
        beta = trial;
        res = r;
        obj = o;
        if last_step <= IRLS_TOL * (1.0 + bnorm) {
            return Ok((beta, it));
        }
    }
    Err(Error::IrlsStagnation {
        iterations: IRLS_MAX_ITER,
        last_step,
        gap_bound: last_gain,
        last_iterate: beta,
    })
}

pub fn fit_poly2_samples(samples: &CylinderSamples, p: f64, constraint: Constraint) -> Result<Poly2Fit> {
    check_exponent(p)?;
    let heat = constraint.heat_value();
    let design = Design::new(samples, heat);
    let (beta, iterations) = lp_regression(&design, p)?;
    let res = design.residuals(&beta);
    Ok(Poly2Fit {
        poly: design.basis.to_poly(&beta, samples.r, heat),
        residual: lp_mean(res.into_iter(), samples.len(), p),
        constraint,
        iterations,
    })
}

/// Best `P` in the constrained family on `Q_r^−(center)` with the scaled residual.
pub fn fit_poly2(
    u: &ScalarField,
    center: &SpaceTimePoint,
    r: f64,
    p: f64,
    constraint: Constraint,
) -> Result<Poly2Fit> {
    let s = u.samples(&analysis_cylinder(u, center, r)?)?;
    fit_poly2_samples(&s, p, constraint)
}

/// `Ñ(u, r)`: distance to all of `P̃₂`.
pub fn n_tilde(u: &ScalarField, center: &SpaceTimePoint, r: f64, p: f64) -> Result<f64> {
    Ok(fit_poly2(u, center, r, p, Constraint::Free)?.residual)
}

/// `N̂(u, r)`: distance to `c_r P* + P₂` with `c_r` the `ω̃` minimiser of `f`.
pub fn n_hat(u: &ScalarField, f: &ScalarField, center: &SpaceTimePoint, r: f64, p: f64) -> Result<f64> {
    let (_, c_r) = omega_tilde(f, center, r, p)?;
    Ok(fit_poly2(u, center, r, p, Constraint::HeatEquals(c_r))?.residual)
}

pub fn n_tilde_curve(u: &ScalarField, center: &SpaceTimePoint, p: f64, radii: &[f64]) -> Result<ModulusCurve> {
    let radii = nonempty(admissible_radii(u, radii))?;
    let values: Result<Vec<f64>> = par::map_collect(&radii, |&r| n_tilde(u, center, r, p))
        .into_iter()
        .collect();
    ModulusCurve::new(CurveKind::NTilde, radii, values?)
}

pub fn n_hat_curve(
    u: &ScalarField,
    f: &ScalarField,
    center: &SpaceTimePoint,
    p: f64,
    radii: &[f64],
) -> Result<ModulusCurve> {
    let radii = nonempty(admissible_radii(u, radii))?;
    let values: Result<Vec<f64>> = par::map_collect(&radii, |&r| n_hat(u, f, center, r, p))
        .into_iter()
        .collect();
    ModulusCurve::new(CurveKind::NHat, radii, values?)
}

/// `κ·½(max(0, x·ν))²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceProfile {
    pub nu: [f64; MAX_DIM],
    pub kappa: f64,
}

impl HalfSpaceProfile {
    pub fn new(nu: &[f64], kappa: f64) -> Result<Self> {
        let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::Config("half-space profile needs ν ≠ 0 and κ ≥ 0".into()));
        }
        let mut out = [0.0; MAX_DIM];
        for (o, v) in out.iter_mut().zip(nu) {
            *o = v / norm;
        }
        Ok(Self { nu: out, kappa })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d: f64 = x.iter().zip(&self.nu).map(|(a, b)| a * b).sum();
        0.5 * self.kappa * d.max(0.0).powi(2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceFit {
    pub value: f64,
    pub nu: [f64; MAX_DIM],
    /// Set when the objective is flat over the direction scan.
    pub degenerate: bool,
}

/// Scaled cylinder data for half-space objectives: `y = x/ρ`, `v/ρ²`.
pub struct HalfSpaceProblem {
    n: usize,
    y: Vec<[f64; MAX_DIM]>,
    /// Scaled spatial corner offsets of a cell.
    corners: Vec<[f64; MAX_DIM]>,
    v: Vec<f64>,
    p: f64,
    kappa: f64,
}

impl HalfSpaceProblem {
    pub fn new(samples: &CylinderSamples, p: f64, kappa: f64) -> Result<Self> {
        check_exponent(p)?;
        let r = samples.r;
        let inv_r2 = 1.0 / (r * r);
        let n = samples.n;
        let y = samples
            .coords
            .iter()
            .map(|c| {
                let mut y = [0.0; MAX_DIM];
                for d in 0..n {
                    y[d] = c[d] / r;
                }
                y
            })
            .collect();
        let v = samples.values.iter().map(|v| v * inv_r2).collect();
        let corners = (0..1usize << n)
            .map(|c| {
                let mut o = [0.0; MAX_DIM];
                for d in 0..n {
                    let sign = if c >> d & 1 == 1 { 1.0 } else { -1.0 };
                    o[d] = sign * samples.half_cell[d] / r;
                }
                o
            })
            .collect();
        Ok(Self {
            n,
            y,
            corners,
            v,
            p,
            kappa,
        })
    }

    /// Corner means of `½(y·ν)₊²` for unit `ν`, one per sample.
    fn profile_means<'a>(&'a self, nu: &[f64; MAX_DIM]) -> impl Iterator<Item = f64> + 'a {
        let norm = nu[..self.n].iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut unit = [0.0; MAX_DIM];
        for i in 0..self.n {
            unit[i] = nu[i] / norm;
        }
        let shifts: Vec<f64> = self
            .corners
            .iter()
            .map(|o| (0..self.n).map(|i| o[i] * unit[i]).sum())
            .collect();
        let w = 0.5 / shifts.len() as f64;
        self.y.iter().map(move |y| {
            let d: f64 = (0..self.n).map(|i| y[i] * unit[i]).sum();
            w * shifts.iter().map(|s| (d + s).max(0.0).powi(2)).sum::<f64>()
        })
    }

    /// Scaled residual of `κ·½(y·ν)₊²`; `ν` need not be normalised.
    pub fn objective(&self, nu: &[f64; MAX_DIM]) -> f64 {
        let k = self.kappa;
        let it = self.profile_means(nu).zip(&self.v).map(|(phi, v)| v - k * phi);
        lp_mean(it, self.v.len(), self.p)
    }

    fn scan_directions(&self) -> Vec<[f64; MAX_DIM]> {
        match self.n {
            1 => vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
            2 => (0..256)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / 256.0;
                    [th.cos(), th.sin(), 0.0]
                })
                .collect(),
            _ => fibonacci_sphere(512),
        }
    }

    /// Global direction scan followed by local refinement.
    pub fn minimize(&self) -> HalfSpaceFit {
        let dirs = self.scan_directions();
        let vals: Vec<f64> = par::map_collect(&dirs, |d| self.objective(d));
        let (mut best, mut best_v) = (0usize, f64::INFINITY);
        let mut worst_v = f64::NEG_INFINITY;
        for (i, &v) in vals.iter().enumerate() {
            if v < best_v {
                best = i;
                best_v = v;
            }
            worst_v = worst_v.max(v);
        }
        if worst_v - best_v <= 1e-9 * (1.0 + best_v) {
            return HalfSpaceFit {
                value: best_v,
                nu: dirs[best],
                degenerate: true,
            };
        }
        let (nu, v) = match self.n {
            1 => (dirs[best], best_v),
            2 => self.refine_angle(2.0 * std::f64::consts::PI * best as f64 / 256.0),
            _ => self.refine_sphere(dirs[best]),
        };
        if v < best_v {
            HalfSpaceFit {
                value: v,
                nu,
                degenerate: false,
            }
        } else {
            HalfSpaceFit {
                value: best_v,
                nu: dirs[best],
                degenerate: false,
            }
        }
    }

    fn refine_angle(&self, theta: f64) -> ([f64; MAX_DIM], f64) {
        let dir = |th: f64| [th.cos(), th.sin(), 0.0];
        let step = 2.0 * std::f64::consts::PI / 256.0;
        let th = golden_section(|th| self.objective(&dir(th)), theta - step, theta + step, 1e-10);
        (dir(th), self.objective(&dir(th)))
    }

    fn refine_sphere(&self, start: [f64; MAX_DIM]) -> ([f64; MAX_DIM], f64) {
        let (e1, e2) = tangent_basis(&start);
        let chart = |a: f64, b: f64| {
            let mut v = [0.0; MAX_DIM];
            for i in 0..MAX_DIM {
                v[i] = start[i] + a * e1[i] + b * e2[i];
            }
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= nrm);
            v
        };
        let (a, b) = nelder_mead_2d(|a, b| self.objective(&chart(a, b)), 0.1);
        let nu = chart(a, b);
        (nu, self.objective(&nu))
    }
}

fn fibonacci_sphere(count: usize) -> Vec<[f64; MAX_DIM]> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

fn tangent_basis(nu: &[f64; MAX_DIM]) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
    // pick the axis least aligned with ν
    let mut k = 0;
    for i in 1..MAX_DIM {
        if nu[i].abs() < nu[k].abs() {
            k = i;
        }
    }
    let mut a = [0.0; MAX_DIM];
    a[k] = 1.0;
    let d: f64 = (0..MAX_DIM).map(|i| a[i] * nu[i]).sum();
    for i in 0..MAX_DIM {
        a[i] -= d * nu[i];
    }
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    a.iter_mut().for_each(|x| *x /= na);
    let b = [
        nu[1] * a[2] - nu[2] * a[1],
        nu[2] * a[0] - nu[0] * a[2],
        nu[0] * a[1] - nu[1] * a[0],
    ];
    (a, b)
}

/// Golden-section minimisation on `[a, b]` to bracket width `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn nelder_mead_2d(f: impl Fn(f64, f64) -> f64, size: f64) -> (f64, f64) {
    let mut pts = [[0.0, 0.0], [size, 0.0], [0.0, size]];
    let mut vals = pts.map(|p| f(p[0], p[1]));
    for _ in 0..2000 {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        let [b, m, w] = idx;
        let diam = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| ((pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        if vals[w] - vals[b] <= 1e-14 * (1.0 + vals[b].abs()) && diam <= 1e-9 {
            break;
        }
        let cen = [(pts[b][0] + pts[m][0]) / 2.0, (pts[b][1] + pts[m][1]) / 2.0];
        let along = |t: f64| [cen[0] + t * (pts[w][0] - cen[0]), cen[1] + t * (pts[w][1] - cen[1])];
        let r = along(-1.0);
        let fr = f(r[0], r[1]);
        if fr < vals[b] {
            let e = along(-2.0);
            let fe = f(e[0], e[1]);
            if fe < fr {
                pts[w] = e;
                vals[w] = fe;
            } else {
                pts[w] = r;
                vals[w] = fr;
            }
        } else if fr < vals[m] {
            pts[w] = r;
            vals[w] = fr;
        } else {
            let c = if fr < vals[w] { along(-0.5) } else { along(0.5) };
            let fc = f(c[0], c[1]);
            if fc < vals[w].min(fr) {
                pts[w] = c;
                vals[w] = fc;
            } else {
                for i in [m, w] {
                    pts[i] = [
                        pts[b][0] + 0.5 * (pts[i][0] - pts[b][0]),
                        pts[b][1] + 0.5 * (pts[i][1] - pts[b][1]),
                    ];
                    vals[i] = f(pts[i][0], pts[i][1]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap();
    (pts[best][0], pts[best][1])
}

/// `inf_ν` scaled residual of `u − κ·½(x·ν)₊²` on `Q_ρ^−(center)`.
pub fn n_reg(u: &ScalarField, center: &SpaceTimePoint, rho: f64, p: f64, kappa: f64) -> Result<HalfSpaceFit> {
    let s = u.samples(&analysis_cylinder(u, center, rho)?)?;
    Ok(HalfSpaceProblem::new(&s, p, kappa)?.minimize())
}

/// `n_reg` along the ladder together with the minimising normals.
pub fn n_reg_curve(
    u: &ScalarField,
    center: &SpaceTimePoint,
    p: f64,
    kappa: f64,
    radii: &[f64],
) -> Result<(ModulusCurve, Vec<HalfSpaceFit>)> {
    let radii = nonempty(admissible_radii(u, radii))?;
    let fits: Result<Vec<HalfSpaceFit>> = radii
        .iter()
        .map(|&r| n_reg(u, center, r, p, kappa))
        .collect();
    let fits = fits?;
    let values = fits.iter().map(|f| f.value).collect();
    Ok((ModulusCurve::new(CurveKind::NReg, radii, values)?, fits))
}

/// `M_reg(u, r) = sup_{ρ ≤ r} n_reg(u, ρ)` over the ladder, truncated at `4h`.
pub fn m_reg(
    u: &ScalarField,
    center: &SpaceTimePoint,
    p: f64,
    kappa: f64,
    radii: &[f64],
) -> Result<ModulusCurve> {
    Ok(n_reg_curve(u, center, p, kappa, radii)?.0.running_sup(CurveKind::MReg))
}

/// Residual of a fixed profile, with the same scaling as `n_reg`.
pub fn halfspace_residual(samples: &CylinderSamples, profile: &HalfSpaceProfile, p: f64) -> Result<f64> {
    Ok(HalfSpaceProblem::new(samples, p, profile.kappa)?.objective(&profile.nu))
}

/// Least-squares amplitude `κ ≥ 0` at a fixed normal (`p = 2`), with its residual.
pub fn fit_halfspace_amplitude(samples: &CylinderSamples, nu: &[f64]) -> Result<(f64, f64)> {
    let prob = HalfSpaceProblem::new(samples, 2.0, 1.0)?;
    let mut dir = [0.0; MAX_DIM];
    dir[..nu.len()].copy_from_slice(nu);
    if dir.iter().all(|v| *v == 0.0) {
        return Err(Error::Config("half-space normal must be nonzero".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (phi, v) in prob.profile_means(&dir).zip(&prob.v) {
        num += v * phi;
        den += phi * phi;
    }
    let kappa = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    let fit = HalfSpaceProblem { kappa, ..prob };
    Ok((kappa, fit.objective(&dir)))
}

/// How the part of a Dini integral below the smallest radius was estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum TailModel {
    /// The lowest ladder values vanish.
    Zero,
    /// `σ ≈ A s^γ`.
    Power { amplitude: f64, exponent: f64 },
    /// `σ ≈ B ln(e/s)^{−q}`.
    LogPower { amplitude: f64, exponent: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniIntegral {
    /// Ladder trapezoid plus the extrapolated tail (tail omitted when non-Dini).
    pub value: f64,
    pub tail: f64,
    pub model: TailModel,
    pub non_dini: bool,
}

/// Trapezoid rule for `∫_a^b g(s) ds/s` in the variable `ln s`, with `g`
/// interpolated linearly in `ln s` at the end points.
pub fn log_trapezoid(radii: &[f64], values: &[f64], a: f64, b: f64) -> Result<f64> {
    if b < a {
        return Err(Error::Domain(format!("integration bounds reversed: {a} > {b}")));
    }
    let ga = interp_log(radii, values, a)
        .ok_or_else(|| Error::Domain(format!("{a} outside the ladder")))?;
    let gb = interp_log(radii, values, b)
        .ok_or_else(|| Error::Domain(format!("{b} outside the ladder")))?;
    let mut pts = vec![(a, ga)];
    pts.extend(
        radii
            .iter()
            .zip(values)
            .filter(|(r, _)| **r > a && **r < b)
            .map(|(r, v)| (*r, *v)),
    );
    pts.push((b, gb));
    Ok(pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 / w[0].0).ln())
        .sum())
}

const NON_DINI_GAMMA: f64 = 0.01;

fn line_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let rss = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum::<f64>()
        .sqrt();
    (slope, icpt, rss)
}

/// Fits the lowest three ladder points to a power law and to a power of
/// `1/ln(e/s)`, keeping the log model only when it fits clearly better.
pub fn tail_model(radii: &[f64], values: &[f64]) -> TailModel {
    let k = radii.len().min(3);
    let (rs, vs) = (&radii[..k], &values[..k]);
    if vs.iter().all(|&v| v <= 0.0) {
        return TailModel::Zero;
    }
    let pos: Vec<(f64, f64)> = rs.iter().zip(vs).filter(|(_, v)| **v > 0.0).map(|(r, v)| (*r, *v)).collect();
    if pos.len() < 2 {
        // single positive point: treat as constant
        return TailModel::Power {
            amplitude: pos[0].1,
            exponent: 0.0,
        };
    }
    let ln_s: Vec<f64> = pos.iter().map(|p| p.0.ln()).collect();
    let ln_v: Vec<f64> = pos.iter().map(|p| p.1.ln()).collect();
    let (gamma, ln_a, rss_pow) = line_fit(&ln_s, &ln_v);
    let power = TailModel::Power {
        amplitude: ln_a.exp(),
        exponent: gamma,
    };
    if pos.iter().any(|p| p.0 >= std::f64::consts::E) {
        return power;
    }
    let lnln: Vec<f64> = pos.iter().map(|p| (std::f64::consts::E / p.0).ln().ln()).collect();
    let (neg_q, ln_b, rss_log) = line_fit(&lnln, &ln_v);
    let floor = 1e-12 * (1.0 + ln_v.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    if rss_log < 0.5 * rss_pow && rss_pow > floor {
        TailModel::LogPower {
            amplitude: ln_b.exp(),
            exponent: -neg_q,
        }
    } else {
        power
    }
}

/// `∫_0^r σ(s)/s ds` from a ladder curve. Below the smallest radius the
/// integrand is extrapolated with [`tail_model`]; a power exponent at most
/// 0.01 or a log exponent at most 1 raises the non-Dini flag.
pub fn dini_integral(curve: &ModulusCurve, r: f64) -> Result<DiniIntegral> {
    let r0 = curve.radii[0];
    let last = *curve.radii.last().unwrap();
    if r > last * (1.0 + 1e-12) || !(r > 0.0) {
        return Err(Error::Domain(format!("r = {r} outside (0, {last}]")));
    }
    let model = tail_model(&curve.radii, &curve.values);
    let upper = r.min(r0);
    let (tail, non_dini) = match model {
        TailModel::Zero => (0.0, false),
        TailModel::Power { amplitude, exponent } => {
            if exponent > NON_DINI_GAMMA {
                (amplitude * upper.powf(exponent) / exponent, false)
            } else {
                (f64::INFINITY, true)
            }
        }
        TailModel::LogPower { amplitude, exponent } => {
            if exponent > 1.0 + NON_DINI_GAMMA {
                let l = (std::f64::consts::E / upper).ln();
                (amplitude * l.powf(1.0 - exponent) / (exponent - 1.0), false)
            } else {
                (f64::INFINITY, true)
            }
        }
    };
    let body = if r > r0 {
        log_trapezoid(&curve.radii, &curve.values, r0, r)?
    } else {
        0.0
    };
    Ok(DiniIntegral {
        value: if non_dini { body } else { body + tail },
        tail: if non_dini { 0.0 } else { tail },
        model,
        non_dini,
    })
}

/// `α = ln μ / ln λ`.
pub fn decay_exponent(lambda: f64, mu: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0 && mu > 0.0 && mu < 1.0) {
        return Err(Error::Config(format!("λ = {lambda}, μ = {mu} must lie in (0, 1)")));
    }
    Ok(mu.ln() / lambda.ln())
}

/// `C₀′{N(1)ρ^α + ∫_0^ρ ω/r dr + ρ^α ∫_ρ^1 ω/r^{1+α} dr}` with `α = ln μ/ln λ`.
/// The outer integral stops at the ladder's largest radius when that is
/// below 1. Returns `+∞` when `ω` is flagged non-Dini.
pub fn dini_bound(
    n1: f64,
    omega: &ModulusCurve,
    rho: f64,
    lambda: f64,
    mu: f64,
    c0_prime: f64,
) -> Result<f64> {
    let alpha = decay_exponent(lambda, mu)?;
    let inner = dini_integral(omega, rho)?;
    if inner.non_dini {
        return Ok(f64::INFINITY);
    }
    if rho < omega.radii[0] * (1.0 - 1e-12) {
        return Err(Error::Domain(format!("ρ = {rho} below the ladder")));
    }
    let top = omega.radii.last().unwrap().min(1.0);
    let outer = if rho < top {
        let weighted: Vec<f64> = omega
            .radii
            .iter()
            .zip(&omega.values)
            .map(|(r, v)| v * r.powf(-alpha))
            .collect();
        log_trapezoid(&omega.radii, &weighted, rho, top)?
    } else {
        0.0
    };
    let ra = rho.powf(alpha);
    Ok(c0_prime * (n1 * ra + inner.value + ra * outer))
}
