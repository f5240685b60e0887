//! The six pipelines. Every command writes the resolved configuration next to
//! its outputs, and nothing depends on wall-clock time or unseeded randomness.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use parabolic_obstacle::freeboundary::{classify_points, extract_free_boundary, graph_diagnostic, FreeBoundaryCloud};
use parabolic_obstacle::heatsolve::{manufacture, solve_heat_with, CaseMetadata, HeatSolverOptions};
use parabolic_obstacle::io::{read_field, write_field};
use parabolic_obstacle::obstacle::{default_eps_pos, solve_obstacle, StepStats};
use parabolic_obstacle::regularity::{
    self, analysis_cylinder, dini_integral, CurveKind, ModulusCurve,
};
use parabolic_obstacle::verify::{
    self, check_decay_dichotomy, describe_point, dichotomy_curves, inputs_digest, summary_csv, CheckContext,
    Region, Relation, Status, VerificationReport,
};
use parabolic_obstacle::{Error, ScalarField, SpaceTimePoint};
use serde::Serialize;

use crate::config::{parse_source, ExperimentConfig, Invalid, Resolved, SolveKind, Source};

pub const U_FILE: &str = "u.prfd";
pub const F_FILE: &str = "f.prfd";

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output.join(name)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn record_config(cfg: &ExperimentConfig) -> Result<()> {
    write_text(&out_path(cfg, "config.toml"), &cfg.to_toml())
}

#[derive(Serialize)]
struct SolveManifest<'a> {
    kind: SolveKind,
    f: &'a str,
    data: &'a str,
    theta: Option<f64>,
    tolerance: f64,
    max_residual: f64,
    /// Sweeps (obstacle) or iterations (heat) per time step.
    iterations: Vec<usize>,
    /// Per-step complementarity residual (obstacle only).
    residual_history: Vec<f64>,
    warnings: Vec<String>,
}

fn load_source(src: &Source, case_field: &ScalarField, r: &Resolved) -> Result<ScalarField> {
    Ok(match src {
        Source::Case => case_field.clone(),
        Source::Zero => ScalarField::zeros(&r.grid),
        Source::Const(v) => ScalarField::constant(&r.grid, *v),
        Source::File(p) => {
            let field = read_field(p).with_context(|| format!("reading {}", p.display()))?;
            if field.grid() != &r.grid {
                return Err(Invalid(format!("{}: grid differs from the configured grid", p.display())).into());
            }
            field
        }
    })
}

/// The `(u, f)` pair the configuration describes, plus the case metadata.
pub fn produce_fields(cfg: &ExperimentConfig, r: &Resolved) -> Result<(ScalarField, ScalarField, CaseMetadata)> {
    let m = manufacture(&r.case, &r.grid).context("manufacturing case")?;
    if cfg.solve.kind == SolveKind::None {
        return Ok((m.u, m.f, m.meta));
    }
    let f = load_source(&parse_source(&cfg.solve.f, true).map_err(Invalid)?, &m.f, r)?;
    let data = load_source(&parse_source(&cfg.solve.data, false).map_err(Invalid)?, &m.u, r)?;
    let manifest;
    let u = match cfg.solve.kind {
        SolveKind::Heat => {
            let opts = HeatSolverOptions::default();
            let sol = solve_heat_with(&f, &data, &opts).context("heat solve")?;
            manifest = SolveManifest {
                kind: SolveKind::Heat,
                f: &cfg.solve.f,
                data: &cfg.solve.data,
                theta: None,
                tolerance: opts.tol,
                max_residual: sol.max_residual,
                iterations: sol.iterations,
                residual_history: Vec::new(),
                warnings: Vec::new(),
            };
            sol.u
        }
        _ => {
            let sol = solve_obstacle(&f, &data, &cfg.solve.lcp).context("obstacle solve")?;
            for w in &sol.warnings {
                log::warn!("{w}");
            }
            manifest = SolveManifest {
                kind: SolveKind::Obstacle,
                f: &cfg.solve.f,
                data: &cfg.solve.data,
                theta: Some(cfg.solve.lcp.theta),
                tolerance: cfg.solve.lcp.tol,
                max_residual: sol.max_residual(),
                iterations: sol.history.iter().map(|s: &StepStats| s.sweeps).collect(),
                residual_history: sol.history.iter().map(|s| s.residual).collect(),
                warnings: sol.warnings.clone(),
            };
            sol.u
        }
    };
    write_json(&out_path(cfg, "solve.json"), &manifest)?;
    Ok((u, f, m.meta))
}

fn store_fields(cfg: &ExperimentConfig, u: &ScalarField, f: &ScalarField, meta: &CaseMetadata) -> Result<()> {
    fs::create_dir_all(&cfg.output).with_context(|| format!("creating {}", cfg.output.display()))?;
    write_field(out_path(cfg, U_FILE), u).context("writing u")?;
    write_field(out_path(cfg, F_FILE), f).context("writing f")?;
    write_json(&out_path(cfg, "case.json"), meta)
}

/// Reads `u` and `f` from the output directory, producing them first when absent.
pub fn fields(cfg: &ExperimentConfig, r: &Resolved) -> Result<(ScalarField, ScalarField)> {
    let (up, fp) = (out_path(cfg, U_FILE), out_path(cfg, F_FILE));
    if up.exists() && fp.exists() {
        let u = read_field(&up).with_context(|| format!("reading {}", up.display()))?;
        let f = read_field(&fp).with_context(|| format!("reading {}", fp.display()))?;
        let meta_path = out_path(cfg, "case.json");
        if let Ok(text) = fs::read_to_string(&meta_path) {
            let meta: CaseMetadata = serde_json::from_str(&text).with_context(|| format!("reading {}", meta_path.display()))?;
            if meta.case != cfg.case.id {
                return Err(Invalid(format!(
                    "case.id: fields in {} belong to case `{}`; rerun manufacture or solve",
                    cfg.output.display(),
                    meta.case
                ))
                .into());
            }
        }
        if u.grid() != &r.grid || f.grid() != &r.grid {
            return Err(Invalid(format!(
                "fields in {} were written on a different grid; rerun manufacture or solve",
                cfg.output.display()
            ))
            .into());
        }
        return Ok((u, f));
    }
    let (u, f, meta) = produce_fields(cfg, r)?;
    store_fields(cfg, &u, &f, &meta)?;
    Ok((u, f))
}

pub fn cmd_manufacture(cfg: &ExperimentConfig, r: &Resolved) -> Result<()> {
    record_config(cfg)?;
    let m = manufacture(&r.case, &r.grid).context("manufacturing case")?;
    store_fields(cfg, &m.u, &m.f, &m.meta)
}

pub fn cmd_solve(cfg: &ExperimentConfig, r: &Resolved) -> Result<()> {
    record_config(cfg)?;
    let (u, f, meta) = produce_fields(cfg, r)?;
    store_fields(cfg, &u, &f, &meta)
}

/// Ladder radii whose cylinder around `center` fits in the domain.
fn radii_at(u: &ScalarField, center: &SpaceTimePoint, radii: &[f64]) -> Vec<f64> {
    radii
        .iter()
        .copied()
        .filter(|&rr| analysis_cylinder(u, center, rr).is_ok())
        .collect()
}

#[derive(Serialize)]
struct CenterSummary {
    center: String,
    radii: usize,
    kappa: f64,
    dini_sigma: f64,
    non_dini: bool,
    slope_n_tilde: Option<f64>,
    slope_n_reg: Option<f64>,
}

pub fn cmd_analyze(cfg: &ExperimentConfig, r: &Resolved) -> Result<()> {
    record_config(cfg)?;
    let (u, f) = fields(cfg, r)?;
    let p = cfg.analysis.p;
    let mut summaries = Vec::new();
    for (i, c) in r.centers.iter().enumerate() {
        let here = describe_point(c, r.grid.n());
        let radii = radii_at(&u, c, &r.radii);
        if radii.is_empty() {
            return Err(Invalid(format!("analysis.centers[{i}]: no ladder radius fits the domain at {here}")).into());
        }
        let ctx = || format!("analysing {here}");
        let kappa = f.evaluate(c).with_context(ctx)?;
        let scale = if kappa > 0.0 { kappa } else { 1.0 };
        let omega = regularity::omega_curve(&f, c, p, &radii).with_context(ctx)?;
        let sigma = omega.running_sup(CurveKind::Sigma);
        let (omega_tilde, _) = regularity::omega_tilde_curve(&f, c, p, &radii).with_context(ctx)?;
        let n_tilde = regularity::n_tilde_curve(&u, c, p, &radii).with_context(ctx)?;
        let n_hat = regularity::n_hat_curve(&u, &f, c, p, &radii).with_context(ctx)?;
        let (n_reg, _) = regularity::n_reg_curve(&u.scaled(1.0 / scale), c, p, 1.0, &radii).with_context(ctx)?;
        let m_reg = n_reg.running_sup(CurveKind::MReg);
        let curves: [&ModulusCurve; 7] = [&omega, &sigma, &omega_tilde, &n_tilde, &n_hat, &n_reg, &m_reg];
        for curve in curves {
            let name = format!("curves/c{i}_{}.csv", curve.kind.name());
            write_text(&out_path(cfg, &name), &curve.to_csv())?;
        }
        let top = *radii.last().expect("nonempty");
        let dini = dini_integral(&sigma, top).with_context(ctx)?;
        summaries.push(CenterSummary {
            center: here,
            radii: radii.len(),
            kappa,
            dini_sigma: dini.value,
            non_dini: dini.non_dini,
            slope_n_tilde: verify::quartile_slope(&n_tilde.radii, &n_tilde.values),
            slope_n_reg: verify::quartile_slope(&n_reg.radii, &n_reg.values),
        });
    }
    write_json(&out_path(cfg, "analysis.json"), &summaries)
}

fn context_for(cfg: &ExperimentConfig, r: &Resolved, center: SpaceTimePoint) -> Result<CheckContext> {
    Ok(CheckContext::new(center, cfg.analysis.p, r.radii.clone(), cfg.calibration).map_err(|e| Invalid(e.to_string()))?)
}

fn dichotomy_report(u: &ScalarField, f: &ScalarField, ctx: &CheckContext) -> Result<VerificationReport> {
    let r_floor = 8.0 * u.grid().h();
    match dichotomy_curves(u, f, ctx) {
        Ok((m, s)) => Ok(check_decay_dichotomy(&m, &s, &ctx.cal, r_floor)?),
        Err(Error::Precondition(why)) => {
            let target = describe_point(&ctx.center, u.grid().n());
            let digest = inputs_digest(&[u, f], &format!("{:?};{}", ctx.center, ctx.p));
            let mut rep = VerificationReport::new("decay_dichotomy", target, digest);
            rep.not_applicable(&why);
            Ok(rep.finish())
        }
        Err(e) => Err(e.into()),
    }
}

fn weak_report(cfg: &ExperimentConfig, r: &Resolved) -> Result<VerificationReport> {
    let m = manufacture(&r.case, &r.grid).context("manufacturing case")?;
    let data = load_source(&parse_source(&cfg.solve.data, false).map_err(Invalid)?, &m.u, r)?;
    let one = ScalarField::constant(&r.grid, 1.0);
    let limit = solve_obstacle(&one, &data, &cfg.solve.lcp).context("limit solve")?.u;
    let mut runs = Vec::new();
    for &mm in &cfg.verify.weak.m {
        let f = ScalarField::from_fn(&r.grid, |x, _| (1.0 + x[0] / mm).max(0.0))?;
        let u = solve_obstacle(&f, &data, &cfg.solve.lcp)
            .with_context(|| format!("solve for m = {mm}"))?
            .u;
        runs.push((u, f));
    }
    let w = &cfg.verify.weak;
    let region = Region {
        lo: w.lo.clone(),
        hi: w.hi.clone(),
        t_lo: w.t_lo,
        t_hi: w.t_hi,
    };
    match verify::check_weak_nondegeneracy(&runs, &limit, &region) {
        Err(Error::Precondition(why)) => Err(Invalid(format!("verify.weak: {why}")).into()),
        other => Ok(other?),
    }
}

/// Runs the configured checks in a fixed order: per center, per check.
pub fn run_checks(
    cfg: &ExperimentConfig,
    r: &Resolved,
    u: &ScalarField,
    f: &ScalarField,
) -> Result<Vec<VerificationReport>> {
    let n = r.grid.n();
    let mut reports = Vec::new();
    let wants = |c: &str| cfg.verify.checks.iter().any(|x| x == c);
    for c in &r.centers {
        let ctx = context_for(cfg, r, *c)?;
        let here = describe_point(c, n);
        for check in &cfg.verify.checks {
            let rep = match check.as_str() {
                "bmo" => verify::check_bmo(u, f, &ctx)?,
                "vmo" => verify::check_vmo(u, f, &ctx)?,
                "taylor" => verify::check_taylor(u, f, &ctx)?,
                "quadratic-growth" => verify::check_quadratic_growth(u, &ctx)?,
                "decay-dichotomy" => dichotomy_report(u, f, &ctx)?,
                "regular-point" => verify::check_regular_point(u, f, &ctx)?,
                _ => continue,
            };
            log::info!("{check} at {here}: {}", rep.status.as_str());
            reports.push(rep);
        }
    }
    if wants("nondegeneracy") {
        let ctx = context_for(cfg, r, SpaceTimePoint::origin())?;
        for pt in &r.points {
            for &d in &cfg.verify.distances {
                let rep = verify::check_nondegeneracy(u, f, pt, d, &ctx)
                    .with_context(|| format!("non-degeneracy at {} with d = {d}", describe_point(pt, n)))?;
                reports.push(rep);
            }
        }
    }
    if wants("weak-nondegeneracy") {
        reports.push(weak_report(cfg, r)?);
    }
    Ok(reports)
}

fn write_reports(cfg: &ExperimentConfig, reports: &[VerificationReport]) -> Result<()> {
    let dir = out_path(cfg, "reports");
    if dir.exists() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                fs::remove_file(&path)?;
            }
        }
    }
    for (i, rep) in reports.iter().enumerate() {
        write_text(&dir.join(format!("{:03}_{}.json", i + 1, rep.check)), &rep.to_json())?;
    }
    write_text(&out_path(cfg, "summary.csv"), &summary_csv(reports))
}

pub fn cmd_verify(cfg: &ExperimentConfig, r: &Resolved) -> Result<Vec<VerificationReport>> {
    record_config(cfg)?;
    let (u, f) = fields(cfg, r)?;
    let reports = run_checks(cfg, r, &u, &f)?;
    write_reports(cfg, &reports)?;
    Ok(reports)
}

pub fn cmd_sweep(cfg: &ExperimentConfig, r: &Resolved) -> Result<FreeBoundaryCloud> {
    record_config(cfg)?;
    let (u, f) = fields(cfg, r)?;
    let eps = cfg.sweep.eps_pos.unwrap_or_else(|| default_eps_pos(&u));
    let cloud = extract_free_boundary(&u, eps).context("extracting free boundary")?;
    let graph = graph_diagnostic(&cloud, cfg.sweep.axis, r.grid.h(), r.grid.dt()).context("graph diagnostic")?;
    let stride = cfg.sweep.stride;
    let picked = FreeBoundaryCloud {
        n: cloud.n,
        points: cloud.points.iter().filter(|p| p.time_index % stride == 0).cloned().collect(),
    };
    let template = context_for(cfg, r, SpaceTimePoint::origin())?;
    let classified = classify_points(&u, &f, &picked, &template).context("classifying points")?;
    write_text(&out_path(cfg, "cloud.csv"), &classified.to_csv())?;
    write_json(&out_path(cfg, "graph.json"), &graph)?;
    Ok(classified)
}

fn relation_symbol(r: Relation) -> &'static str {
    match r {
        Relation::Le => "<=",
        Relation::Lt => "<",
        Relation::Ge => ">=",
    }
}

/// Plain-text digest of a report set.
pub fn digest_text(cfg: &ExperimentConfig, u: &ScalarField, f: &ScalarField, reports: &[VerificationReport]) -> String {
    let count = |s: Status| reports.iter().filter(|r| r.status == s).count();
    let g = &cfg.grid;
    let params: Vec<String> = cfg.case.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let mut out = String::new();
    let _ = writeln!(out, "case     {} {}", cfg.case.id, params.join(" "));
    let _ = writeln!(out, "grid     n={} R={} T={} h={} dt={}", g.n, g.radius, g.depth, g.h, g.dt);
    let _ = writeln!(out, "solve    {} f={} data={}", cfg.solve.kind.as_str(), cfg.solve.f, cfg.solve.data);
    let _ = writeln!(out, "ladder   {} p={}", cfg.analysis.ladder, cfg.analysis.p);
    let _ = writeln!(out, "u sha256 {}", inputs_digest(&[u], ""));
    let _ = writeln!(out, "f sha256 {}", inputs_digest(&[f], ""));
    let _ = writeln!(
        out,
        "checks   {} pass, {} fail, {} not applicable",
        count(Status::Pass),
        count(Status::Fail),
        count(Status::NotApplicable)
    );
    for (i, rep) in reports.iter().enumerate() {
        let _ = writeln!(out);
        let _ = writeln!(out, "[{:03}] {} at {}: {}", i + 1, rep.check, rep.target, rep.status.as_str());
        for a in &rep.assertions {
            let _ = writeln!(
                out,
                "      {} {:.6e} {} {:.6e} ({})",
                a.name,
                a.measured,
                relation_symbol(a.relation),
                a.bound,
                if a.holds() { "holds" } else { "violated" }
            );
        }
        for (k, v) in &rep.metrics {
            let _ = writeln!(out, "      {k} = {v:.6e}");
        }
        if !rep.note.is_empty() {
            let _ = writeln!(out, "      note: {}", rep.note);
        }
    }
    out
}

/// Regenerates the fields from the configuration, runs the checks and writes
/// `summary.csv` plus `digest.txt`.
pub fn cmd_report(cfg: &ExperimentConfig, r: &Resolved) -> Result<Vec<VerificationReport>> {
    record_config(cfg)?;
    let (u, f, meta) = produce_fields(cfg, r)?;
    store_fields(cfg, &u, &f, &meta)?;
    let reports = run_checks(cfg, r, &u, &f)?;
    write_reports(cfg, &reports)?;
    write_text(&out_path(cfg, "digest.txt"), &digest_text(cfg, &u, &f, &reports))?;
    Ok(reports)
}
