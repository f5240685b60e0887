//! Uniform space-time grids over backward cylinders.
//!
//! A grid covers the box `[-R, R]^n × [t_final − T, t_final]` with spatial
//! step `h` and time step `dt`. Nodes sit at `x_i = (i − half)·h` so the
//! spatial origin is always a node, and at `t_k = t_final − (K − k)·dt`.
//!
//! Field values are stored one time slice after another; inside a slice the
//! first axis varies fastest.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Smallest admissible analysis radius, in units of `h`.
pub const R_MIN_CELLS: f64 = 4.0;

const RATIO_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension, 1 to 3.
    pub n: usize,
    /// Half-width of the spatial box.
    pub radius: f64,
    /// Time depth `T`.
    pub depth: f64,
    pub h: f64,
    pub dt: f64,
}

impl GridSpec {
    pub fn new(n: usize, radius: f64, depth: f64, h: f64, dt: f64) -> Self {
        Self {
            n,
            radius,
            depth,
            h,
            dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_DIM).contains(&self.n) {
            return Err(Error::Config(format!("n = {} must be 1, 2 or 3", self.n)));
        }
        for (name, v) in [
            ("radius", self.radius),
            ("depth", self.depth),
            ("h", self.h),
            ("dt", self.dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        integral_ratio("radius/h", self.radius, self.h)?;
        integral_ratio("depth/dt", self.depth, self.dt)?;
        if self.dt > self.h * self.h * (1.0 + RATIO_TOL) {
            return Err(Error::Config(format!(
                "dt = {} exceeds h² = {}",
                self.dt,
                self.h * self.h
            )));
        }
        Ok(())
    }

    /// `4h`, below which cylinder functionals are not evaluated.
    pub fn r_min(&self) -> f64 {
        R_MIN_CELLS * self.h
    }
}

fn integral_ratio(name: &str, num: f64, den: f64) -> Result<usize> {
    let ratio = num / den;
    let rounded = ratio.round();
    if (ratio - rounded).abs() > RATIO_TOL || rounded < 1.0 {
        return Err(Error::Config(format!("{name} = {ratio} is not a positive integer")));
    }
    Ok(rounded as usize)
}

/// A point `(x, t)`; coordinates beyond the grid dimension are zero.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub x: [f64; MAX_DIM],
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: &[f64], t: f64) -> Self {
        let mut p = Self { x: [0.0; MAX_DIM], t };
        p.x[..x.len()].copy_from_slice(x);
        p
    }

    pub fn origin() -> Self {
        Self::default()
    }
}

/// Backward cylinder `B_r(x₀) × (t₀ − r², t₀]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub center: SpaceTimePoint,
    pub r: f64,
}

impl Cylinder {
    pub fn new(center: SpaceTimePoint, r: f64) -> Self {
        Self { center, r }
    }

    pub fn at_origin(r: f64) -> Self {
        Self::new(SpaceTimePoint::origin(), r)
    }

    /// `|Q_r^−| = |B_r|·r²`.
    pub fn measure(&self, n: usize) -> f64 {
        unit_ball_volume(n) * self.r.powi(n as i32) * self.r * self.r
    }
}

pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => f64::NAN,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    t_final: f64,
    per_axis: usize,
    half: f64,
    n_space: usize,
    n_time: usize,
    strides: [usize; MAX_DIM],
}

impl Grid {
    /// Grid whose last time slice is `t = 0`.
    pub fn new(spec: GridSpec) -> Result<Self> {
        Self::with_t_final(spec, 0.0)
    }

    pub fn with_t_final(spec: GridSpec, t_final: f64) -> Result<Self> {
        spec.validate()?;
        if !t_final.is_finite() {
            return Err(Error::Config("t_final must be finite".into()));
        }
        let cells = integral_ratio("radius/h", spec.radius, spec.h)?;
        let steps = integral_ratio("depth/dt", spec.depth, spec.dt)?;
        let per_axis = 2 * cells + 1;
        let mut strides = [0usize; MAX_DIM];
        let mut stride = 1;
        for s in strides.iter_mut().take(spec.n) {
            *s = stride;
            stride *= per_axis;
        }
        Ok(Self {
            spec,
            t_final,
            per_axis,
            half: cells as f64,
            n_space: stride,
            n_time: steps + 1,
            strides,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn n(&self) -> usize {
        self.spec.n
    }
    pub fn h(&self) -> f64 {
        self.spec.h
    }
    pub fn dt(&self) -> f64 {
        self.spec.dt
    }
    pub fn radius(&self) -> f64 {
        self.spec.radius
    }
    pub fn t_final(&self) -> f64 {
        self.t_final
    }
    pub fn t_start(&self) -> f64 {
        self.time(0)
    }
    pub fn per_axis(&self) -> usize {
        self.per_axis
    }
    pub fn n_space(&self) -> usize {
        self.n_space
    }
    pub fn n_time(&self) -> usize {
        self.n_time
    }
    pub fn len(&self) -> usize {
        self.n_space * self.n_time
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn strides(&self) -> &[usize] {
        &self.strides[..self.spec.n]
    }
    pub fn r_min(&self) -> f64 {
        self.spec.r_min()
    }

    /// Coordinate of node `i` along any axis.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.half) * self.spec.h
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_final - (self.n_time - 1 - k) as f64 * self.spec.dt
    }

    pub fn index(&self, s: usize, k: usize) -> usize {
        k * self.n_space + s
    }

    pub fn multi_index(&self, s: usize) -> [usize; MAX_DIM] {
        let mut out = [0usize; MAX_DIM];
        let mut rest = s;
        for d in 0..self.spec.n {
            out[d] = rest % self.per_axis;
            rest /= self.per_axis;
        }
        out
    }

    pub fn spatial_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(self.strides())
            .map(|(i, st)| i * st)
            .sum()
    }

    pub fn node_x(&self, s: usize) -> [f64; MAX_DIM] {
        let m = self.multi_index(s);
        let mut x = [0.0; MAX_DIM];
        for d in 0..self.spec.n {
            x[d] = self.coord(m[d]);
        }
        x
    }

    /// Nearest node index along an axis, clamped to the grid.
    pub fn nearest_axis_index(&self, x: f64) -> usize {
        let u = (x / self.spec.h + self.half).round();
        u.clamp(0.0, (self.per_axis - 1) as f64) as usize
    }

    pub fn nearest_time_index(&self, t: f64) -> usize {
        let v = ((t - self.t_start()) / self.spec.dt).round();
        v.clamp(0.0, (self.n_time - 1) as f64) as usize
    }

    pub fn is_boundary(&self, s: usize) -> bool {
        let m = self.multi_index(s);
        m[..self.spec.n]
            .iter()
            .any(|&i| i == 0 || i == self.per_axis - 1)
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_space).filter(|&s| !self.is_boundary(s)).collect()
    }

    /// Nodes with `|x| ≤ R`.
    pub fn ball_mask(&self) -> Vec<bool> {
        let r2 = self.spec.radius * self.spec.radius * (1.0 + RATIO_TOL);
        (0..self.n_space)
            .map(|s| norm2(&self.node_x(s)) <= r2)
            .collect()
    }

    fn tol(&self) -> f64 {
        RATIO_TOL * self.spec.radius.max(1.0)
    }

    pub fn check_point(&self, p: &SpaceTimePoint) -> Result<()> {
        let tol = self.tol();
        for d in 0..self.spec.n {
            if !(p.x[d].abs() <= self.spec.radius + tol) {
                return Err(Error::Domain(format!(
                    "x[{d}] = {} outside [-{r}, {r}]",
                    p.x[d],
                    r = self.spec.radius
                )));
            }
        }
        if !(p.t >= self.t_start() - tol && p.t <= self.t_final + tol) {
            return Err(Error::Domain(format!(
                "t = {} outside [{}, {}]",
                p.t,
                self.t_start(),
                self.t_final
            )));
        }
        Ok(())
    }

    pub fn check_cylinder(&self, cyl: &Cylinder) -> Result<()> {
        if !(cyl.r.is_finite() && cyl.r > 0.0) {
            return Err(Error::Domain(format!("cylinder radius {} must be positive", cyl.r)));
        }
        let tol = self.tol();
        for d in 0..self.spec.n {
            if cyl.center.x[d].abs() + cyl.r > self.spec.radius + tol {
                return Err(Error::Domain(format!(
                    "cylinder of radius {} at x[{d}] = {} leaves the box of radius {}",
                    cyl.r, cyl.center.x[d], self.spec.radius
                )));
            }
        }
        let bottom = cyl.center.t - cyl.r * cyl.r;
        if cyl.center.t > self.t_final + tol || bottom < self.t_start() - tol {
            return Err(Error::Domain(format!(
                "cylinder time span [{bottom}, {}] leaves [{}, {}]",
                cyl.center.t,
                self.t_start(),
                self.t_final
            )));
        }
        Ok(())
    }

    /// Quadrature cells of a cylinder: cells whose centre lies in
    /// `B_r(x₀) × (t₀ − r², t₀]`.
    pub fn cylinder_cells(&self, cyl: &Cylinder) -> Result<CellSet> {
        self.check_cylinder(cyl)?;
        let n = self.spec.n;
        let h = self.spec.h;
        let cells_per_axis = self.per_axis - 1;
        let r2 = cyl.r * cyl.r * (1.0 + 1e-12);

        // Candidate range per axis keeps the scan local to the cylinder.
        let mut lo = [0usize; MAX_DIM];
        let mut hi = [0usize; MAX_DIM];
        for d in 0..n {
            let a = ((cyl.center.x[d] - cyl.r) / h + self.half - 1.0).floor().max(0.0) as usize;
            let b = ((cyl.center.x[d] + cyl.r) / h + self.half + 1.0).ceil() as usize;
            lo[d] = a.min(cells_per_axis);
            hi[d] = b.min(cells_per_axis);
        }
        let mut spatial = Vec::new();
        let mut c = lo;
        loop {
            let mut rel = [0.0; MAX_DIM];
            for d in 0..n {
                rel[d] = self.coord(c[d]) + 0.5 * h - cyl.center.x[d];
            }
            if norm2(&rel) <= r2 {
                spatial.push((self.spatial_index(&c[..n]), rel));
            }
            // odometer over [lo, hi)
            let mut d = 0;
            loop {
                if d == n {
                    break;
                }
                c[d] += 1;
                if c[d] < hi[d] {
                    break;
                }
                c[d] = lo[d];
                d += 1;
            }
            if d == n {
                break;
            }
        }

        let bottom = cyl.center.t - cyl.r * cyl.r;
        let ttol = 1e-12 * self.spec.dt;
        let temporal: Vec<(usize, f64)> = (0..self.n_time - 1)
            .filter_map(|k| {
                let tc = self.time(k) + 0.5 * self.spec.dt;
                (tc > bottom + ttol && tc <= cyl.center.t + ttol).then(|| (k, tc - cyl.center.t))
            })
            .collect();
        if spatial.is_empty() || temporal.is_empty() {
            return Err(Error::Domain(format!(
                "cylinder of radius {} contains no grid cells",
                cyl.r
            )));
        }
        Ok(CellSet {
            spatial,
            temporal,
            cell_volume: h.powi(n as i32) * self.spec.dt,
        })
    }

    fn ball_nodes(&self, cyl: &Cylinder) -> Vec<usize> {
        let r2 = cyl.r * cyl.r * (1.0 + RATIO_TOL) + self.tol();
        (0..self.n_space)
            .filter(|&s| dist2(&self.node_x(s), &cyl.center.x, self.spec.n) <= r2)
            .collect()
    }

    fn cylinder_slices(&self, cyl: &Cylinder) -> Vec<usize> {
        let tol = 1e-9 * self.spec.dt;
        let bottom = cyl.center.t - cyl.r * cyl.r;
        (0..self.n_time)
            .filter(|&k| {
                let t = self.time(k);
                t >= bottom - tol && t <= cyl.center.t + tol
            })
            .collect()
    }

    /// Nodes of `B_r(x₀)` with an axis neighbour outside the ball.
    fn shell_nodes(&self, ball: &[usize]) -> Vec<usize> {
        let inside: BTreeSet<usize> = ball.iter().copied().collect();
        ball.iter()
            .copied()
            .filter(|&s| {
                let m = self.multi_index(s);
                (0..self.spec.n).any(|d| {
                    let st = self.strides[d];
                    let below = m[d] == 0 || !inside.contains(&(s - st));
                    let above = m[d] + 1 == self.per_axis || !inside.contains(&(s + st));
                    below || above
                })
            })
            .collect()
    }

    /// Discrete parabolic boundary `∂_p Q_r^−(x₀, t₀)`: the one-cell lateral
    /// shell over all cylinder slices plus the bottom slice of the ball.
    /// Returned as sorted `(spatial, time)` index pairs.
    pub fn parabolic_boundary_nodes(&self, cyl: &Cylinder) -> Result<Vec<(usize, usize)>> {
        self.check_cylinder(cyl)?;
        let ball = self.ball_nodes(cyl);
        let slices = self.cylinder_slices(cyl);
        if ball.is_empty() || slices.is_empty() {
            return Err(Error::Domain("cylinder contains no nodes".into()));
        }
        let shell = self.shell_nodes(&ball);
        let mut out = BTreeSet::new();
        for &k in &slices {
            for &s in &shell {
                out.insert((s, k));
            }
        }
        for &s in &ball {
            out.insert((s, slices[0]));
        }
        Ok(out.into_iter().collect())
    }

    /// Cylinder nodes not on the discrete parabolic boundary.
    pub fn strict_interior_nodes(&self, cyl: &Cylinder) -> Result<Vec<(usize, usize)>> {
        let boundary: BTreeSet<(usize, usize)> =
            self.parabolic_boundary_nodes(cyl)?.into_iter().collect();
        Ok(self
            .cylinder_nodes(cyl)?
            .into_iter()
            .filter(|p| !boundary.contains(p))
            .collect())
    }

    /// All nodes in `B_r(x₀) × [t₀ − r², t₀]`.
    pub fn cylinder_nodes(&self, cyl: &Cylinder) -> Result<Vec<(usize, usize)>> {
        self.check_cylinder(cyl)?;
        let ball = self.ball_nodes(cyl);
        let slices = self.cylinder_slices(cyl);
        Ok(slices
            .iter()
            .flat_map(|&k| ball.iter().map(move |&s| (s, k)))
            .collect())
    }
}

fn norm2(x: &[f64; MAX_DIM]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dist2(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], n: usize) -> f64 {
    (0..n).map(|d| (a[d] - b[d]) * (a[d] - b[d])).sum()
}

/// Quadrature cells of a cylinder, as a product of spatial and temporal cells.
#[derive(Clone, Debug)]
pub struct CellSet {
    /// Lower-corner spatial node and cell centre relative to `x₀`.
    pub spatial: Vec<(usize, [f64; MAX_DIM])>,
    /// Lower time index and cell centre relative to `t₀`.
    pub temporal: Vec<(usize, f64)>,
    pub cell_volume: f64,
}

impl CellSet {
    pub fn len(&self) -> usize {
        self.spatial.len() * self.temporal.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cell-centre samples of a field on a cylinder, in coordinates relative to
/// the cylinder centre. Every cell carries the same weight, so averages are
/// plain means.
#[derive(Clone, Debug)]
pub struct CylinderSamples {
    pub n: usize,
    pub r: f64,
    pub center: SpaceTimePoint,
    /// `h/2` per axis, then `dt/2`.
    pub half_cell: [f64; MAX_DIM + 1],
    pub coords: Vec<[f64; MAX_DIM + 1]>,
    pub values: Vec<f64>,
}

impl CylinderSamples {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(mean |v|^p)^{1/p}`.
    pub fn lp_mean(&self, p: f64) -> f64 {
        lp_mean(self.values.iter().copied(), self.values.len(), p)
    }

    /// Corner mean of `model` over the cell centred at `c`, i.e. the same
    /// quadrature rule that produced the field values.
    pub fn cell_mean(&self, c: &[f64; MAX_DIM + 1], model: impl Fn(&[f64; MAX_DIM + 1]) -> f64) -> f64 {
        let corners = 2usize << self.n;
        let mut acc = 0.0;
        for corner in 0..corners {
            let mut q = *c;
            for d in 0..self.n {
                q[d] += if corner >> d & 1 == 1 { self.half_cell[d] } else { -self.half_cell[d] };
            }
            q[MAX_DIM] += if corner >> self.n & 1 == 1 {
                self.half_cell[MAX_DIM]
            } else {
                -self.half_cell[MAX_DIM]
            };
            acc += model(&q);
        }
        acc / corners as f64
    }

    pub fn map(&self, f: impl Fn(&[f64; MAX_DIM + 1], f64) -> f64) -> Self {
        let values = self
            .coords
            .iter()
            .zip(&self.values)
            .map(|(c, &v)| f(c, v))
            .collect();
        Self {
            values,
            coords: self.coords.clone(),
            ..*self
        }
    }
}

pub(crate) fn lp_mean(values: impl Iterator<Item = f64>, count: usize, p: f64) -> f64 {
    if count == 0 {
        return 0.0;
    }
    if p == 2.0 {
        let s: f64 = values.map(|v| v * v).sum();
        return (s / count as f64).sqrt();
    }
    // Factor out the largest magnitude so |v|^p cannot overflow or underflow.
    let vals: Vec<f64> = values.map(f64::abs).collect();
    let scale = vals.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = vals.iter().map(|v| (v / scale).powf(p)).sum();
    scale * (s / count as f64).powf(1.0 / p)
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("exponent p = {p} must lie in (1, ∞)")))
    }
}

/// A real function sampled on every node of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Format(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite field value at index {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64], f64) -> f64) -> Result<Self> {
        let n = grid.n();
        let xs: Vec<[f64; MAX_DIM]> = (0..grid.n_space()).map(|s| grid.node_x(s)).collect();
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.n_time() {
            let t = grid.time(k);
            values.extend(xs.iter().map(|x| f(&x[..n], t)));
        }
        Self::from_values(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    /// Time of the final slice.
    pub fn center_time(&self) -> f64 {
        self.grid.t_final()
    }

    pub fn at(&self, s: usize, k: usize) -> f64 {
        self.values[self.grid.index(s, k)]
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let ns = self.grid.n_space();
        &self.values[k * ns..(k + 1) * ns]
    }

    pub(crate) fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let ns = self.grid.n_space();
        &mut self.values[k * ns..(k + 1) * ns]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Pointwise `self + c·other` on a matching grid.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> Result<Self> {
        self.check_same_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Config("fields live on different grids".into()));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Multilinear interpolation in space and time.
    pub fn evaluate(&self, p: &SpaceTimePoint) -> Result<f64> {
        self.grid.check_point(p)?;
        let g = &self.grid;
        let n = g.n();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for d in 0..n {
            let (i, w) = locate(p.x[d] / g.h() + g.half, g.per_axis - 1);
            base[d] = i;
            frac[d] = w;
        }
        let (k, wt) = locate((p.t - g.t_start()) / g.dt(), g.n_time - 1);
        let s0 = g.spatial_index(&base[..n]);
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut s = s0;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    w *= frac[d];
                    s += g.strides[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            if w == 0.0 {
                continue;
            }
            let lo = self.values[g.index(s, k)];
            let v = if wt > 0.0 {
                lo * (1.0 - wt) + self.values[g.index(s, k + 1)] * wt
            } else {
                lo
            };
            acc += w * v;
        }
        Ok(acc)
    }

    /// Mean of the `2^{n+1}` corner values of the cell with lower corner `(s, k)`;
    /// equal to the multilinear interpolant at the cell centre.
    pub fn cell_value(&self, s: usize, k: usize) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut sc = s;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    sc += g.strides[d];
                }
            }
            acc += self.values[g.index(sc, k)] + self.values[g.index(sc, k + 1)];
        }
        acc / (2usize << n) as f64
    }

    pub fn samples(&self, cyl: &Cylinder) -> Result<CylinderSamples> {
        let cells = self.grid.cylinder_cells(cyl)?;
        Ok(self.samples_from_cells(cyl, &cells))
    }

    pub fn samples_from_cells(&self, cyl: &Cylinder, cells: &CellSet) -> CylinderSamples {
        let mut coords = Vec::with_capacity(cells.len());
        let mut values = Vec::with_capacity(cells.len());
        for &(k, tr) in &cells.temporal {
            for &(s, xr) in &cells.spatial {
                coords.push([xr[0], xr[1], xr[2], tr]);
                values.push(self.cell_value(s, k));
            }
        }
        let (hh, ht) = (0.5 * self.grid.h(), 0.5 * self.grid.dt());
        let mut half_cell = [0.0; MAX_DIM + 1];
        half_cell[..self.grid.n()].fill(hh);
        half_cell[MAX_DIM] = ht;
        CylinderSamples {
            n: self.grid.n(),
            r: cyl.r,
            center: cyl.center,
            half_cell,
            coords,
            values,
        }
    }

    /// Largest node value over `B_r(x₀) × [t₀ − r², t₀]`.
    pub fn sup_on_cylinder(&self, cyl: &Cylinder) -> Result<f64> {
        Ok(self
            .grid
            .cylinder_nodes(cyl)?
            .into_iter()
            .map(|(s, k)| self.at(s, k))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Largest node value over the discrete parabolic boundary.
    pub fn sup_on_parabolic_boundary(&self, cyl: &Cylinder) -> Result<f64> {
        Ok(self
            .grid
            .parabolic_boundary_nodes(cyl)?
            .into_iter()
            .map(|(s, k)| self.at(s, k))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Cell index and fractional offset for a position in index units.
fn locate(u: f64, cells: usize) -> (usize, f64) {
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        let i = r as usize;
        return if i >= cells { (cells - 1, 1.0) } else { (i, 0.0) };
    }
    let i = (u.floor().max(0.0) as usize).min(cells - 1);
    (i, (u - i as f64).clamp(0.0, 1.0))
}

/// `(1/|Q|∫_Q |g|^p)^{1/p}` by cell-centre quadrature.
pub fn lp_average(field: &ScalarField, cyl: &Cylinder, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(field.samples(cyl)?.lp_mean(p))
}

/// `x, t ↦ field(x₀ + ρx, t₀ + ρ²t)/ρ²` on the unit grid with the same steps.
pub fn rescale(field: &ScalarField, center: &SpaceTimePoint, rho: f64) -> Result<ScalarField> {
    let g = field.grid().spec();
    let unit = GridSpec::new(g.n, 1.0, 1.0, g.h, g.dt);
    rescale_onto(field, center, rho, &unit)
}

/// Parabolic blow-up of `field` at `center`, sampled on `target`.
/// The target box must map inside the source domain.
pub fn rescale_onto(
    field: &ScalarField,
    center: &SpaceTimePoint,
    rho: f64,
    target: &GridSpec,
) -> Result<ScalarField> {
    if target.n != field.grid().n() {
        return Err(Error::Config("rescale target has a different dimension".into()));
    }
    let out = Grid::new(*target)?;
    let reach = target.radius.max(target.depth.sqrt());
    field
        .grid()
        .check_cylinder(&Cylinder::new(*center, rho * reach))?;
    let n = target.n;
    let inv = 1.0 / (rho * rho);
    let mut values = Vec::with_capacity(out.len());
    for k in 0..out.n_time() {
        let t = center.t + rho * rho * out.time(k);
        for s in 0..out.n_space() {
            let y = out.node_x(s);
            let mut p = SpaceTimePoint { x: [0.0; MAX_DIM], t };
            for d in 0..n {
                p.x[d] = center.x[d] + rho * y[d];
            }
            values.push(field.evaluate(&p)? * inv);
        }
    }
    ScalarField::from_values(out, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid1() -> Grid {
        Grid::new(GridSpec::new(1, 1.0, 1.0, 0.05, 0.0025)).unwrap()
    }

    #[test]
    fn node_counts() {
        let g = grid1();
        assert_eq!(g.per_axis(), 41);
        assert_eq!(g.n_time(), 401);
        assert_eq!(g.coord(20), 0.0);
        assert_eq!(g.time(400), 0.0);
        let g2 = Grid::new(GridSpec::new(2, 1.0, 1.0, 0.05, 0.0025)).unwrap();
        assert_eq!(g2.n_space(), 41 * 41);
        let mask = g2.ball_mask();
        for s in 0..g2.n_space() {
            let x = g2.node_x(s);
            assert_eq!(mask[s], x[0] * x[0] + x[1] * x[1] <= 1.0 + 1e-9);
        }
        assert!(mask[g2.spatial_index(&[40, 20])]);
        assert!(!mask[g2.spatial_index(&[40, 40])]);
    }

    #[test]
    fn bad_step_is_config_error() {
        let err = Grid::new(GridSpec::new(1, 1.0, 1.0, 0.3, 0.01)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(Grid::new(GridSpec::new(4, 1.0, 1.0, 0.5, 0.25)).is_err());
        assert!(Grid::new(GridSpec::new(1, 1.0, 1.0, 0.1, 0.02)).is_err());
    }

    #[test]
    fn evaluate_linear_exact() {
        let g = Grid::new(GridSpec::new(2, 1.0, 1.0, 0.1, 0.01)).unwrap();
        let f = ScalarField::from_fn(&g, |x, t| 1.0 + 2.0 * x[0] - x[1] + 3.0 * t + x[0] * t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let t = rng.random_range(-1.0..0.0);
            let v = f.evaluate(&SpaceTimePoint::new(&x, t)).unwrap();
            let exact = 1.0 + 2.0 * x[0] - x[1] + 3.0 * t + x[0] * t;
            assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        }
        // nodes and edge midpoints
        let s = g.spatial_index(&[3, 17]);
        let x = g.node_x(s);
        assert_eq!(f.evaluate(&SpaceTimePoint::new(&x[..2], g.time(5))).unwrap(), f.at(s, 5));
        let mid = SpaceTimePoint::new(&[x[0] + 0.05, x[1]], g.time(5));
        let exact = 1.0 + 2.0 * mid.x[0] - mid.x[1] + 3.0 * mid.t + mid.x[0] * mid.t;
        assert!((f.evaluate(&mid).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn evaluate_quadratic_error_bound() {
        let g = grid1();
        let f = ScalarField::from_fn(&g, |x, _| x[0] * x[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // sup|g''| = 2
        let bound = g.h() * g.h() * 2.0 / 8.0;
        for _ in 0..100 {
            let x = rng.random_range(-1.0..1.0);
            let t = rng.random_range(-1.0..0.0);
            let v = f.evaluate(&SpaceTimePoint::new(&[x], t)).unwrap();
            assert!((v - x * x).abs() <= bound + 1e-15);
        }
    }

    #[test]
    fn evaluate_outside_is_domain_error() {
        let f = ScalarField::zeros(&grid1());
        assert!(matches!(
            f.evaluate(&SpaceTimePoint::new(&[1.2], -0.5)),
            Err(Error::Domain(_))
        ));
        assert!(f.evaluate(&SpaceTimePoint::new(&[0.2], 0.1)).is_err());
    }

    #[test]
    fn lp_average_examples() {
        let g = grid1();
        let three = ScalarField::constant(&g, 3.0);
        let cyl = Cylinder::at_origin(0.5);
        assert!((lp_average(&three, &cyl, 2.0).unwrap() - 3.0).abs() < 1e-12);
        let x = ScalarField::from_fn(&g, |x, _| x[0]).unwrap();
        let q1 = Cylinder::at_origin(1.0);
        let v = lp_average(&x, &q1, 2.0).unwrap();
        // midpoint rule on x² loses h²/12
        assert!((v - (1.0f64 / 3.0).sqrt()).abs() < 1e-3, "{v}");
        let a = lp_average(&x, &q1, 1.5).unwrap();
        let b = lp_average(&x, &q1, 3.0).unwrap();
        assert!(a <= v && v <= b);
        assert!(lp_average(&x, &q1, 1.0).is_err());
        assert!(lp_average(&x, &Cylinder::at_origin(1.1), 2.0).is_err());
    }

    #[test]
    fn cylinder_measure_matches_cells() {
        let g = Grid::new(GridSpec::new(2, 1.0, 1.0, 0.025, 0.000625)).unwrap();
        let cyl = Cylinder::at_origin(0.5);
        let cells = g.cylinder_cells(&cyl).unwrap();
        let m = cells.len() as f64 * cells.cell_volume;
        assert!((m / cyl.measure(2) - 1.0).abs() < 4.0 * g.h() / cyl.r);
    }

    #[test]
    fn parabolic_boundary_counts() {
        let g = grid1();
        let cyl = Cylinder::at_origin(0.2);
        let nodes = g.parabolic_boundary_nodes(&cyl).unwrap();
        let lateral: Vec<_> = nodes
            .iter()
            .filter(|(s, _)| (g.node_x(*s)[0].abs() - 0.2).abs() < 1e-12)
            .collect();
        assert_eq!(lateral.len(), 2 * 17);
        let k_bottom = nodes.iter().map(|p| p.1).min().unwrap();
        assert_eq!(g.time(k_bottom), -0.04);
        assert_eq!(nodes.iter().filter(|p| p.1 == k_bottom).count(), 9);
        assert_eq!(nodes.len(), 34 + 7);

        let interior = g.strict_interior_nodes(&cyl).unwrap();
        assert!(interior.iter().all(|p| !nodes.contains(p)));
        assert_eq!(interior.len() + nodes.len(), g.cylinder_nodes(&cyl).unwrap().len());

        for r in [0.1, 0.05, 0.03] {
            assert!(!g.parabolic_boundary_nodes(&Cylinder::at_origin(r)).unwrap().is_empty());
        }
    }

    #[test]
    fn rescale_fixes_homogeneous_profiles() {
        let g = Grid::new(GridSpec::new(2, 1.0, 1.0, 0.05, 0.0025)).unwrap();
        let pstar = ScalarField::from_fn(&g, |x, _| (x[0] * x[0] + x[1] * x[1]) / 4.0).unwrap();
        let v = rescale(&pstar, &SpaceTimePoint::origin(), 0.5).unwrap();
        let again = ScalarField::from_fn(v.grid(), |x, _| (x[0] * x[0] + x[1] * x[1]) / 4.0).unwrap();
        // sample points hit nodes or edge midpoints; the error is divided by ρ²
        assert!(v.max_abs_diff(&again).unwrap() <= g.h() * g.h() / 8.0 / 0.25 + 1e-14);

        let g1 = grid1();
        let half = ScalarField::from_fn(&g1, |x, _| 0.5 * x[0].max(0.0).powi(2)).unwrap();
        let w = rescale(&half, &SpaceTimePoint::origin(), 0.5).unwrap();
        let exact = ScalarField::from_fn(w.grid(), |x, _| 0.5 * x[0].max(0.0).powi(2)).unwrap();
        assert!(w.max_abs_diff(&exact).unwrap() <= g1.h() * g1.h() / 8.0 / 0.25 + 1e-14);
    }

    #[test]
    fn rescale_traveling_profile() {
        let g = Grid::new(GridSpec::new(1, 1.0, 1.0, 0.01, 0.0001)).unwrap();
        let a = 0.3;
        let u = ScalarField::from_fn(&g, |x, t| 0.5 * (x[0] - a * t).max(0.0).powi(2)).unwrap();
        let rho = 0.1;
        let v = rescale(&u, &SpaceTimePoint::origin(), rho).unwrap();
        let exact =
            ScalarField::from_fn(v.grid(), |x, t| 0.5 * (x[0] - a * rho * t).max(0.0).powi(2)).unwrap();
        // bilinear error along the direction (h, a·dt), amplified by 1/ρ²
        let tol = (g.h() + a * g.dt()).powi(2) / 8.0 / (rho * rho);
        assert!(v.max_abs_diff(&exact).unwrap() <= tol, "{}", v.max_abs_diff(&exact).unwrap());
    }

    #[test]
    fn rescale_outside_domain() {
        let f = ScalarField::zeros(&grid1());
        assert!(rescale(&f, &SpaceTimePoint::new(&[0.8], 0.0), 0.5).is_err());
    }
}
