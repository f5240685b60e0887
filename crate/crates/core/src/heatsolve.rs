//! Discrete heat operator `H = Δ − ∂_t`, an implicit Euler heat solver, and
//! manufactured `(u, f)` pairs.

use std::collections::BTreeMap;
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, MAX_DIM};

/// `P(x, t) = a + b·x + ½ xᵀ c x + m t` with `c` symmetric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly2 {
    pub n: usize,
    pub a: f64,
    pub b: [f64; MAX_DIM],
    pub c: [[f64; MAX_DIM]; MAX_DIM],
    pub m: f64,
}

impl Poly2 {
    pub fn new(
        n: usize,
        a: f64,
        b: [f64; MAX_DIM],
        c: [[f64; MAX_DIM]; MAX_DIM],
        m: f64,
    ) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&n) {
            return Err(Error::Config(format!("Poly2 dimension {n} out of range")));
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                let outside = i >= n || j >= n;
                if (outside && c[i][j] != 0.0) || c[i][j] != c[j][i] {
                    return Err(Error::Config("Poly2 Hessian must be symmetric n×n".into()));
                }
            }
            if i >= n && b[i] != 0.0 {
                return Err(Error::Config("Poly2 gradient has entries beyond n".into()));
            }
        }
        Ok(Self { n, a, b, c, m })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            a: 0.0,
            b: [0.0; MAX_DIM],
            c: [[0.0; MAX_DIM]; MAX_DIM],
            m: 0.0,
        }
    }

    /// `P*(x) = |x|²/(2n)`, the stationary polynomial with `H P* = 1`.
    pub fn pstar(n: usize) -> Self {
        let mut p = Self::zero(n);
        for i in 0..n {
            p.c[i][i] = 1.0 / n as f64;
        }
        p
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.c[i][i]).sum()
    }

    /// `H P = tr(c) − m`.
    pub fn heat(&self) -> f64 {
        self.trace() - self.m
    }

    pub fn is_caloric(&self, tol: f64) -> bool {
        self.heat().abs() <= tol
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let n = self.n;
        let mut v = self.a + self.m * t;
        for i in 0..n {
            v += self.b[i] * x[i];
            let mut cx = 0.0;
            for j in 0..n {
                cx += self.c[i][j] * x[j];
            }
            v += 0.5 * x[i] * cx;
        }
        v
    }

    /// `|a| + Σ|b_i| + Σ|c_ij| + |m|`.
    pub fn coefficient_norm(&self) -> f64 {
        let mut s = self.a.abs() + self.m.abs();
        for i in 0..self.n {
            s += self.b[i].abs();
            for j in 0..self.n {
                s += self.c[i][j].abs();
            }
        }
        s
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut p = self.clone();
        p.a *= k;
        p.m *= k;
        for i in 0..MAX_DIM {
            p.b[i] *= k;
            for j in 0..MAX_DIM {
                p.c[i][j] *= k;
            }
        }
        p
    }

    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        if grid.n() != self.n {
            return Err(Error::Config("Poly2 and grid dimensions differ".into()));
        }
        ScalarField::from_fn(grid, |x, t| self.eval(x, t))
    }
}

/// Matrix-free pieces of the 2n+1 point Laplacian on a grid.
#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub interior: Vec<usize>,
    pub strides: Vec<usize>,
    pub inv_h2: f64,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        Self {
            interior: grid.interior_nodes(),
            strides: grid.strides().to_vec(),
            inv_h2: 1.0 / (grid.h() * grid.h()),
        }
    }

    #[inline]
    pub fn laplacian(&self, v: &[f64], s: usize) -> f64 {
        let mut acc = 0.0;
        for &st in &self.strides {
            acc += v[s + st] - 2.0 * v[s] + v[s - st];
        }
        acc * self.inv_h2
    }

    #[inline]
    pub fn neighbour_sum(&self, v: &[f64], s: usize) -> f64 {
        let mut acc = 0.0;
        for &st in &self.strides {
            acc += v[s + st] + v[s - st];
        }
        acc
    }
}

/// `Hu = Δ_h u − (u^k − u^{k−1})/dt` at interior nodes of slices `k ≥ 1`;
/// zero elsewhere. Exact on polynomials quadratic in space and linear in time.
pub fn apply_heat(field: &ScalarField) -> ScalarField {
    let grid = field.grid();
    let st = Stencil::new(grid);
    let inv_dt = 1.0 / grid.dt();
    let mut out = ScalarField::zeros(grid);
    for k in 1..grid.n_time() {
        let (prev, cur) = (field.slice(k - 1), field.slice(k));
        let dst = out.slice_mut(k);
        for &s in &st.interior {
            dst[s] = st.laplacian(cur, s) - (cur[s] - prev[s]) * inv_dt;
        }
    }
    out
}

/// Interior node mask of [`apply_heat`]'s domain of definition.
pub fn heat_defined(grid: &Grid, s: usize, k: usize) -> bool {
    k >= 1 && !grid.is_boundary(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSolverOptions {
    /// Absolute `∞`-norm tolerance on `Hu − f`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HeatSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HeatSolution {
    pub u: ScalarField,
    pub iterations: Vec<usize>,
    pub max_residual: f64,
}

/// Solves `Hu = f` by implicit Euler. The first slice and the box faces of
/// every slice are copied from `data`; only those values of `data` are read.
pub fn solve_heat(f: &ScalarField, data: &ScalarField) -> Result<ScalarField> {
    Ok(solve_heat_with(f, data, &HeatSolverOptions::default())?.u)
}

pub fn solve_heat_with(
    f: &ScalarField,
    data: &ScalarField,
    opts: &HeatSolverOptions,
) -> Result<HeatSolution> {
    f.check_same_grid(data)?;
    let grid = f.grid();
    let st = Stencil::new(grid);
    let inv_dt = 1.0 / grid.dt();
    let diag = inv_dt + 2.0 * grid.n() as f64 * st.inv_h2;
    let ns = grid.n_space();

    let mut u = data.clone();
    let mut iterations = Vec::with_capacity(grid.n_time());
    let mut max_residual: f64 = 0.0;
    let mut r = vec![0.0; ns];
    let mut z = vec![0.0; ns];
    let mut p = vec![0.0; ns];
    let mut ap = vec![0.0; ns];

    for k in 1..grid.n_time() {
        let prev = u.slice(k - 1).to_vec();
        let fk = f.slice(k);
        let cur = u.slice_mut(k);
        for &s in &st.interior {
            cur[s] = prev[s];
        }
        let true_residual = |cur: &[f64], r: &mut [f64]| {
            let mut worst: f64 = 0.0;
            for &s in &st.interior {
                r[s] = st.laplacian(cur, s) - (cur[s] - prev[s]) * inv_dt - fk[s];
                worst = worst.max(r[s].abs());
            }
            worst
        };

        let mut it = 0;
        let mut res = true_residual(cur, &mut r);
        'outer: while res > opts.tol {
            // Preconditioned CG on the correction; restarted from the true
            // residual so recurrence drift cannot fake convergence.
            for &s in &st.interior {
                z[s] = r[s] / diag;
                p[s] = z[s];
            }
            let mut rz: f64 = st.interior.iter().map(|&s| r[s] * z[s]).sum();
            for _ in 0..200 {
                if it >= opts.max_iter {
                    break 'outer;
                }
                it += 1;
                for &s in &st.interior {
                    ap[s] = diag * p[s] - st.inv_h2 * st.neighbour_sum(&p, s);
                }
                let pap: f64 = st.interior.iter().map(|&s| p[s] * ap[s]).sum();
                if pap <= 0.0 {
                    break;
                }
                let alpha = rz / pap;
                let mut worst: f64 = 0.0;
                for &s in &st.interior {
                    cur[s] += alpha * p[s];
                    r[s] -= alpha * ap[s];
                    worst = worst.max(r[s].abs());
                }
                if worst <= 0.5 * opts.tol {
                    break;
                }
                let mut rz_new = 0.0;
                for &s in &st.interior {
                    z[s] = r[s] / diag;
                    rz_new += r[s] * z[s];
                }
                let beta = rz_new / rz;
                rz = rz_new;
                for &s in &st.interior {
                    p[s] = z[s] + beta * p[s];
                }
            }
            res = true_residual(cur, &mut r);
        }
        if res > opts.tol {
            return Err(Error::NonConvergence {
                solver: "heat CG",
                step: k,
                iterations: it,
                residual: res,
            });
        }
        max_residual = max_residual.max(res);
        iterations.push(it);
    }
    Ok(HeatSolution {
        u,
        iterations,
        max_residual,
    })
}

/// Manufactured test problems.
#[derive(Clone, Debug, PartialEq)]
pub enum Case {
    /// `u` a caloric quadratic, `f = 0`.
    CaloricPoly(Poly2),
    /// `u = κ P*`, `f = κ`.
    Pstar { kappa: f64 },
    /// `f = κ|x|^β`; `u = κ|x|^{2+β}/((2+β)(n+β))` is a stationary solution.
    HoelderRhs { kappa: f64, beta: f64 },
    /// `f = κ/ln²(e/|x|)`: Dini but not Hölder; `u` solved with zero data.
    DiniRhs { kappa: f64 },
    /// `f = κ/ln(e/|x|)`: continuous, not Dini; `u` solved with zero data.
    NonDiniRhs { kappa: f64 },
    /// `f = κ·sgn(sin(π log₂|x|))` on dyadic shells; `u` solved with zero data.
    OscillatingRhs { kappa: f64 },
    /// `u = ½(x₁ − a t)₊²`, `f = 1 + a(x₁ − a t)`.
    TravelingWave { a: f64 },
    /// `u = κ·½(x·ν)₊²`, `f = κ`.
    HalfSpace { nu: [f64; MAX_DIM], kappa: f64 },
}

pub const CASE_IDS: &[&str] = &[
    "caloric-poly",
    "pstar",
    "hoelder-rhs",
    "dini-rhs",
    "nondini-rhs",
    "oscillating-rhs",
    "traveling-wave",
    "half-space",
];

impl Case {
    pub fn id(&self) -> &'static str {
        match self {
            Case::CaloricPoly(_) => "caloric-poly",
            Case::Pstar { .. } => "pstar",
            Case::HoelderRhs { .. } => "hoelder-rhs",
            Case::DiniRhs { .. } => "dini-rhs",
            Case::NonDiniRhs { .. } => "nondini-rhs",
            Case::OscillatingRhs { .. } => "oscillating-rhs",
            Case::TravelingWave { .. } => "traveling-wave",
            Case::HalfSpace { .. } => "half-space",
        }
    }

    /// Builds a case from its id and named parameters. Missing parameters take
    /// defaults (`kappa = 1`, `beta = 0.5`, `a = 0.3`, `nu = e₁`, caloric
    /// polynomial `c = 2I`, `m = 2n`).
    pub fn parse(id: &str, n: usize, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
        let kappa = get("kappa", 1.0);
        let case = match id {
            "caloric-poly" => {
                let mut b = [0.0; MAX_DIM];
                let mut c = [[0.0; MAX_DIM]; MAX_DIM];
                for i in 0..n {
                    b[i] = get(&format!("b{}", i + 1), 0.0);
                    for j in i..n {
                        let d = if i == j { 2.0 } else { 0.0 };
                        let v = get(&format!("c{}{}", i + 1, j + 1), d);
                        c[i][j] = v;
                        c[j][i] = v;
                    }
                }
                let mut p = Poly2::new(n, get("a", 0.0), b, c, 0.0)?;
                p.m = p.trace();
                Case::CaloricPoly(p)
            }
            "pstar" => Case::Pstar { kappa },
            "hoelder-rhs" => Case::HoelderRhs {
                kappa,
                beta: get("beta", 0.5),
            },
            "dini-rhs" => Case::DiniRhs { kappa },
            "nondini-rhs" => Case::NonDiniRhs { kappa },
            "oscillating-rhs" => Case::OscillatingRhs { kappa },
            "traveling-wave" => Case::TravelingWave { a: get("a", 0.3) },
            "half-space" => {
                let mut nu = [0.0; MAX_DIM];
                for (i, v) in nu.iter_mut().enumerate().take(n) {
                    *v = get(&format!("nu{}", i + 1), if i == 0 { 1.0 } else { 0.0 });
                }
                let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::Config("half-space normal must be nonzero".into()));
                }
                nu.iter_mut().for_each(|v| *v /= norm);
                Case::HalfSpace { nu, kappa }
            }
            other => return Err(Error::UnknownCase(other.to_string())),
        };
        case.validate(n)?;
        Ok(case)
    }

    fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            Case::CaloricPoly(p) if p.n != n => bad("polynomial dimension differs from grid".into()),
            Case::CaloricPoly(p) if !p.is_caloric(1e-12) => bad("polynomial is not caloric".into()),
            Case::HoelderRhs { beta, .. } if !(*beta > 0.0 && *beta <= 1.0) => {
                bad(format!("beta = {beta} must lie in (0, 1]"))
            }
            Case::TravelingWave { a } if !a.is_finite() => bad("a must be finite".into()),
            Case::Pstar { kappa }
            | Case::DiniRhs { kappa }
            | Case::NonDiniRhs { kappa }
            | Case::OscillatingRhs { kappa }
            | Case::HoelderRhs { kappa, .. }
            | Case::HalfSpace { kappa, .. }
                if !kappa.is_finite() =>
            {
                bad("kappa must be finite".into())
            }
            _ => Ok(()),
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self {
            Case::CaloricPoly(p) => {
                m.insert("a".into(), p.a);
                for i in 0..p.n {
                    m.insert(format!("b{}", i + 1), p.b[i]);
                    for j in i..p.n {
                        m.insert(format!("c{}{}", i + 1, j + 1), p.c[i][j]);
                    }
                }
                m.insert("m".into(), p.m);
            }
            Case::Pstar { kappa }
            | Case::DiniRhs { kappa }
            | Case::NonDiniRhs { kappa }
            | Case::OscillatingRhs { kappa } => {
                m.insert("kappa".into(), *kappa);
            }
            Case::HoelderRhs { kappa, beta } => {
                m.insert("kappa".into(), *kappa);
                m.insert("beta".into(), *beta);
            }
            Case::TravelingWave { a } => {
                m.insert("a".into(), *a);
            }
            Case::HalfSpace { nu, kappa } => {
                m.insert("kappa".into(), *kappa);
                for (i, v) in nu.iter().enumerate() {
                    m.insert(format!("nu{}", i + 1), *v);
                }
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetadata {
    pub case: String,
    pub params: BTreeMap<String, f64>,
    /// Radius below which a singular right-hand side was smoothed.
    pub mollification_radius: Option<f64>,
    /// `closed-form` or `solve_heat` (zero lateral and initial data).
    pub u_source: String,
}

#[derive(Clone, Debug)]
pub struct Manufactured {
    pub u: ScalarField,
    pub f: ScalarField,
    pub meta: CaseMetadata,
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn manufacture(case: &Case, grid: &Grid) -> Result<Manufactured> {
    let n = grid.n();
    case.validate(n)?;
    let h = grid.h();
    let mut mollification_radius = None;
    let closed = |u: ScalarField, f: ScalarField| (u, f, "closed-form");

    let max_norm = grid.radius() * (n as f64).sqrt();
    let log_rhs = |power: i32| -> Result<ScalarField> {
        if max_norm >= E {
            return Err(Error::Config(format!(
                "logarithmic right-hand sides need |x| < e on the grid (max |x| = {max_norm})"
            )));
        }
        let g = move |r: f64| 1.0 / (E / r).ln().powi(power);
        ScalarField::from_fn(grid, |x, _| {
            let r = norm(x);
            if r < h {
                g(h) * r / h
            } else {
                g(r)
            }
        })
    };

    let (u, f, source) = match case {
        Case::CaloricPoly(p) => closed(p.sample(grid)?, ScalarField::zeros(grid)),
        Case::Pstar { kappa } => closed(
            Poly2::pstar(n).scaled(*kappa).sample(grid)?,
            ScalarField::constant(grid, *kappa),
        ),
        Case::HoelderRhs { kappa, beta } => {
            let q = 2.0 + beta;
            let denom = q * (n as f64 + beta);
            closed(
                ScalarField::from_fn(grid, |x, _| kappa * norm(x).powf(q) / denom)?,
                ScalarField::from_fn(grid, |x, _| kappa * norm(x).powf(*beta))?,
            )
        }
        Case::DiniRhs { kappa } | Case::NonDiniRhs { kappa } => {
            let power = if matches!(case, Case::DiniRhs { .. }) { 2 } else { 1 };
            mollification_radius = Some(h);
            let f = log_rhs(power)?.scaled(*kappa);
            let u = solve_heat(&f, &ScalarField::zeros(grid))?;
            (u, f, "solve_heat")
        }
        Case::OscillatingRhs { kappa } => {
            mollification_radius = Some(h);
            let f = ScalarField::from_fn(grid, |x, _| {
                let r = norm(x);
                if r < h {
                    0.0
                } else {
                    let s = (std::f64::consts::PI * r.log2()).sin();
                    kappa * if s > 0.0 { 1.0 } else if s < 0.0 { -1.0 } else { 0.0 }
                }
            })?;
            let u = solve_heat(&f, &ScalarField::zeros(grid))?;
            (u, f, "solve_heat")
        }
        Case::TravelingWave { a } => closed(
            ScalarField::from_fn(grid, |x, t| 0.5 * (x[0] - a * t).max(0.0).powi(2))?,
            ScalarField::from_fn(grid, |x, t| 1.0 + a * (x[0] - a * t))?,
        ),
        Case::HalfSpace { nu, kappa } => closed(
            ScalarField::from_fn(grid, |x, _| {
                let d: f64 = x.iter().zip(nu).map(|(a, b)| a * b).sum();
                kappa * 0.5 * d.max(0.0).powi(2)
            })?,
            ScalarField::constant(grid, *kappa),
        ),
    };
    Ok(Manufactured {
        u,
        f,
        meta: CaseMetadata {
            case: case.id().to_string(),
            params: case.params(),
            mollification_radius,
            u_source: source.to_string(),
        },
    })
}
