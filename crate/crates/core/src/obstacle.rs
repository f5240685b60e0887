//! Parabolic obstacle problem `Δu − u_t = f·χ{u>0}`, `u ≥ 0`.
//!
//! Each implicit Euler step is the linear complementarity problem
//!
//! ```text
//! u ≥ 0,   A u − q ≥ 0,   u·(A u − q) = 0,
//! A = I/dt − Δ_h,   q = u_prev/dt − f(t_new)
//! ```
//!
//! solved by projected SOR. `A u − q = f − Hu`, so complementarity is exactly
//! the discrete form of the obstacle problem when `f ≥ 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::heatsolve::Stencil;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcpOptions {
    /// Over-relaxation factor in (1, 2).
    pub theta: f64,
    /// Tolerance on `‖min(Au − q, u)‖_∞`.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LcpOptions {
    fn default() -> Self {
        Self {
            theta: 1.5,
            tol: 1e-10,
            max_sweeps: 20_000,
        }
    }
}

impl LcpOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 2.0) {
            return Err(Error::Config(format!("theta = {} must lie in (0, 2)", self.theta)));
        }
        if !(self.tol > 0.0) || self.max_sweeps == 0 {
            return Err(Error::Config("tolerance and sweep cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub sweeps: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct ObstacleSolution {
    pub u: ScalarField,
    pub history: Vec<StepStats>,
    pub warnings: Vec<String>,
}

impl ObstacleSolution {
    pub fn max_residual(&self) -> f64 {
        self.history.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

/// One time step of the complementarity problem on a fixed grid.
struct LcpStep<'a> {
    st: &'a Stencil,
    inv_dt: f64,
    diag: f64,
}

impl LcpStep<'_> {
    #[inline]
    fn a_minus_q(&self, u: &[f64], prev: &[f64], f: &[f64], s: usize) -> f64 {
        // (u − u_prev)/dt − Δu + f
        (u[s] - prev[s]) * self.inv_dt - self.st.laplacian(u, s) + f[s]
    }

    fn residual(&self, u: &[f64], prev: &[f64], f: &[f64]) -> f64 {
        self.st
            .interior
            .iter()
            .map(|&s| self.a_minus_q(u, prev, f, s).min(u[s]).abs())
            .fold(0.0, f64::max)
    }

    fn sweep(&self, u: &mut [f64], prev: &[f64], f: &[f64], theta: f64) {
        let off = self.st.inv_h2;
        for &s in &self.st.interior {
            let q = prev[s] * self.inv_dt - f[s];
            let gs = (q + off * self.st.neighbour_sum(u, s)) / self.diag;
            u[s] = (u[s] + theta * (gs - u[s])).max(0.0);
        }
    }
}

/// Marches the obstacle problem from the first slice to the last. The first
/// slice and the box faces are copied from `data`, which must be nonnegative
/// there.
pub fn solve_obstacle(f: &ScalarField, data: &ScalarField, opts: &LcpOptions) -> Result<ObstacleSolution> {
    opts.validate()?;
    f.check_same_grid(data)?;
    let grid = f.grid();
    for k in 0..grid.n_time() {
        for s in 0..grid.n_space() {
            if k == 0 || grid.is_boundary(s) {
                let v = data.at(s, k);
                if v < 0.0 {
                    return Err(Error::NegativeData {
                        node: grid.index(s, k),
                        value: v,
                    });
                }
            }
        }
    }
    let st = Stencil::new(grid);
    let inv_dt = 1.0 / grid.dt();
    let step = LcpStep {
        st: &st,
        inv_dt,
        diag: inv_dt + 2.0 * grid.n() as f64 * st.inv_h2,
    };

    let mut u = data.clone();
    let mut history = Vec::with_capacity(grid.n_time() - 1);
    let mut worst_negative_f = 0.0f64;
    for k in 1..grid.n_time() {
        let prev = u.slice(k - 1).to_vec();
        let fk = f.slice(k);
        let cur = u.slice_mut(k);
        for &s in &st.interior {
            cur[s] = prev[s].max(0.0);
        }
        let mut sweeps = 0;
        let mut res = step.residual(cur, &prev, fk);
        while res > opts.tol {
            if sweeps == opts.max_sweeps {
                return Err(Error::NonConvergence {
                    solver: "projected SOR",
                    step: k,
                    iterations: sweeps,
                    residual: res,
                });
            }
            step.sweep(cur, &prev, fk, opts.theta);
            sweeps += 1;
            res = step.residual(cur, &prev, fk);
        }
        for &s in &st.interior {
            if cur[s] > 0.0 && fk[s] < worst_negative_f {
                worst_negative_f = fk[s];
            }
        }
        history.push(StepStats {
            step: k,
            sweeps,
            residual: res,
        });
    }
    let mut warnings = Vec::new();
    if worst_negative_f < 0.0 {
        let msg = format!(
            "f reaches {worst_negative_f:.3e} < 0 on the positivity set; the complementarity form assumes f ≥ 0"
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(ObstacleSolution { u, history, warnings })
}

/// `max |min((Au − q)_i, u_i)|` over interior nodes of slices `k ≥ 1`.
pub fn lcp_residual(u: &ScalarField, f: &ScalarField) -> Result<f64> {
    u.check_same_grid(f)?;
    let grid = u.grid();
    let st = Stencil::new(grid);
    let inv_dt = 1.0 / grid.dt();
    let step = LcpStep {
        st: &st,
        inv_dt,
        diag: inv_dt + 2.0 * grid.n() as f64 * st.inv_h2,
    };
    Ok((1..grid.n_time())
        .map(|k| step.residual(u.slice(k), u.slice(k - 1), f.slice(k)))
        .fold(0.0, f64::max))
}

/// Discrete contact set `{u ≤ ε_pos}`, one flag per node.
pub fn contact_set(u: &ScalarField, eps_pos: f64) -> Result<Vec<bool>> {
    if !(eps_pos > 0.0) {
        return Err(Error::Config(format!("eps_pos = {eps_pos} must be positive")));
    }
    Ok(u.values().iter().map(|&v| v <= eps_pos).collect())
}

/// Default positivity threshold `h²/4`, below the value `h²/2` that
/// quadratic growth gives one cell into the positivity set.
pub fn default_eps_pos(u: &ScalarField) -> f64 {
    0.25 * u.grid().h() * u.grid().h()
}
