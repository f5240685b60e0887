//! Browser front end for the laboratory. Each exported function takes plain
//! numbers or strings and returns a JSON string, so the page needs nothing
//! beyond the generated bindings. The `*_json` functions hold the logic and
//! are what the native tests call.

use std::collections::BTreeMap;

use parabolic_obstacle::freeboundary::{classify_points, extract_free_boundary};
use parabolic_obstacle::heatsolve::{manufacture, Case};
use parabolic_obstacle::obstacle::{default_eps_pos, solve_obstacle, LcpOptions};
use parabolic_obstacle::regularity::{
    analysis_cylinder, dini_integral, n_reg_curve, n_tilde_curve, omega_curve, CurveKind, DiniIntegral, ModulusCurve,
};
use parabolic_obstacle::verify::{Calibration, CheckContext};
use parabolic_obstacle::{Grid, GridSpec, Ladder, ScalarField, SpaceTimePoint};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Coarsest and finest spacing the page accepts; finer grids stall the tab.
const H_RANGE: (f64, f64) = (0.0125, 0.1);

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parse_params(params: &str) -> Result<BTreeMap<String, f64>, String> {
    if params.trim().is_empty() {
        return Ok(BTreeMap::new());
    }
    serde_json::from_str(params).map_err(|e| format!("params: {e}"))
}

/// One-dimensional `(u, f)` on `[-1, 1] × [-1, 0]` with `dt = h²`, either
/// manufactured or re-solved from the case's data.
fn fields(case: &str, params: &str, h: f64, solve: bool) -> Result<(ScalarField, ScalarField, Option<f64>), String> {
    if !(H_RANGE.0..=H_RANGE.1).contains(&h) {
        return Err(format!("h = {h} outside [{}, {}]", H_RANGE.0, H_RANGE.1));
    }
    let grid = Grid::new(GridSpec::new(1, 1.0, 1.0, h, h * h)).map_err(err)?;
    let case = Case::parse(case, 1, &parse_params(params)?).map_err(err)?;
    let m = manufacture(&case, &grid).map_err(err)?;
    if !solve {
        return Ok((m.u, m.f, None));
    }
    let sol = solve_obstacle(&m.f, &m.u, &LcpOptions::default()).map_err(err)?;
    let res = sol.max_residual();
    Ok((sol.u, m.f, Some(res)))
}

#[derive(Serialize)]
struct SweepOut {
    t: Vec<f64>,
    x: Vec<f64>,
    regular: Vec<bool>,
    nu: Vec<Option<f64>>,
    lcp_residual: Option<f64>,
}

pub fn sweep_json(case: &str, params: &str, h: f64, solve: bool) -> Result<String, String> {
    let (u, f, lcp_residual) = fields(case, params, h, solve)?;
    let cloud = extract_free_boundary(&u, default_eps_pos(&u)).map_err(err)?;
    let radii = Ladder::new(4.0 * h, 0.5, 24).map_err(err)?.radii();
    let ctx = CheckContext::new(SpaceTimePoint::origin(), 2.0, radii, Calibration::default()).map_err(err)?;
    let cloud = classify_points(&u, &f, &cloud, &ctx).map_err(err)?;
    let out = SweepOut {
        t: cloud.points.iter().map(|p| p.t).collect(),
        x: cloud.points.iter().map(|p| p.x[0]).collect(),
        regular: cloud.points.iter().map(|p| p.regular).collect(),
        nu: cloud.points.iter().map(|p| p.nu.map(|v| v[0])).collect(),
        lcp_residual,
    };
    serde_json::to_string(&out).map_err(err)
}

#[derive(Serialize)]
struct CurvesOut {
    radii: Vec<f64>,
    kappa: f64,
    sigma: Vec<f64>,
    n_tilde: Vec<f64>,
    n_reg: Vec<f64>,
    m_reg: Vec<f64>,
    dini_sigma: DiniIntegral,
}

pub fn curves_json(case: &str, params: &str, h: f64, x: f64, t: f64) -> Result<String, String> {
    let (u, f, _) = fields(case, params, h, false)?;
    let center = SpaceTimePoint::new(&[x], t);
    let radii: Vec<f64> = Ladder::new(4.0 * h, 0.5, 24)
        .map_err(err)?
        .radii()
        .into_iter()
        .filter(|&r| analysis_cylinder(&u, &center, r).is_ok())
        .collect();
    if radii.is_empty() {
        return Err(format!("no radius in [4h, 0.5] fits the domain at ({x}, {t})"));
    }
    let kappa = f.evaluate(&center).map_err(err)?;
    let scale = if kappa > 0.0 { kappa } else { 1.0 };
    let sigma = omega_curve(&f, &center, 2.0, &radii).map_err(err)?.running_sup(CurveKind::Sigma);
    let n_tilde = n_tilde_curve(&u, &center, 2.0, &radii).map_err(err)?;
    let (n_reg, _) = n_reg_curve(&u.scaled(1.0 / scale), &center, 2.0, 1.0, &radii).map_err(err)?;
    let m_reg = n_reg.running_sup(CurveKind::MReg);
    let dini_sigma = dini_integral(&sigma, *radii.last().unwrap()).map_err(err)?;
    let out = CurvesOut {
        radii,
        kappa,
        sigma: sigma.values,
        n_tilde: n_tilde.values,
        n_reg: n_reg.values,
        m_reg: m_reg.values,
        dini_sigma,
    };
    serde_json::to_string(&out).map_err(err)
}

/// `radii` and `values` are whitespace or comma separated lists.
pub fn dini_json(radii: &str, values: &str) -> Result<String, String> {
    let list = |s: &str, what: &str| -> Result<Vec<f64>, String> {
        s.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|w| !w.is_empty())
            .map(|w| w.parse::<f64>().map_err(|_| format!("{what}: `{w}` is not a number")))
            .collect()
    };
    let curve = ModulusCurve::new(CurveKind::Derived, list(radii, "radii")?, list(values, "values")?).map_err(err)?;
    let top = *curve.radii.last().unwrap();
    serde_json::to_string(&dini_integral(&curve, top).map_err(err)?).map_err(err)
}

/// Free-boundary points of a 1-D case with their regular-point classification.
#[wasm_bindgen]
pub fn sweep(case: &str, params: &str, h: f64, solve: bool) -> Result<String, JsError> {
    sweep_json(case, params, h, solve).map_err(|e| JsError::new(&e))
}

/// σ, Ñ, n_reg and M_reg along a radius ladder at `(x, t)`.
#[wasm_bindgen]
pub fn curves(case: &str, params: &str, h: f64, x: f64, t: f64) -> Result<String, JsError> {
    curves_json(case, params, h, x, t).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn dini(radii: &str, values: &str) -> Result<String, JsError> {
    dini_json(radii, values).map_err(|e| JsError::new(&e))
}
