//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use parabolic_obstacle::freeboundary::extract_free_boundary;
use parabolic_obstacle::heatsolve::{apply_heat, heat_defined, manufacture, Case, Poly2};
use parabolic_obstacle::obstacle::{default_eps_pos, solve_obstacle, LcpOptions};
use parabolic_obstacle::regularity::{
    dini_integral, fit_halfspace_amplitude, fit_poly2, halfspace_residual, m_reg, n_hat_curve, n_reg_curve,
    n_tilde_curve, omega_tilde, sigma, Constraint, CurveKind, HalfSpaceProfile, ModulusCurve,
};
use parabolic_obstacle::verify::{
    check_decay_dichotomy, check_nondegeneracy, check_regular_point, check_taylor, dichotomy_curves, loglog_slope,
    Calibration, CheckContext, Status,
};
use parabolic_obstacle::{Cylinder, Grid, GridSpec, Ladder, ScalarField, SpaceTimePoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|x| x.to_string())
}

fn grid(n: usize, radius: f64, depth: f64, h: f64, dt: f64) -> Result<Grid, String> {
    e(Grid::new(GridSpec::new(n, radius, depth, h, dt)))
}

fn ctx(center: SpaceTimePoint, ladder: &str) -> Result<CheckContext, String> {
    let l: Ladder = e(ladder.parse())?;
    e(CheckContext::new(center, 2.0, l.radii(), Calibration::default()))
}

fn case(id: &str, n: usize, params: &[(&str, f64)]) -> Result<Case, String> {
    let p: BTreeMap<String, f64> = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    e(Case::parse(id, n, &p))
}

fn half_space_exact(x: &[f64]) -> f64 {
    0.5 * x[0].max(0.0).powi(2)
}

/// Sup of `|u − exact|` over the nodes, and of `|I_h u − exact|` over the
/// nodes and the centres of all space-time cells.
fn half_space_errors(u: &ScalarField) -> Result<(f64, f64), String> {
    let g = u.grid();
    let n = g.n();
    let mut node: f64 = 0.0;
    for k in 0..g.n_time() {
        for s in 0..g.n_space() {
            node = node.max((u.at(s, k) - half_space_exact(&g.node_x(s)[..n])).abs());
        }
    }
    let mut err = node;
    let per = g.per_axis();
    let (h, dt) = (g.h(), g.dt());
    for k in 0..g.n_time() - 1 {
        let t = g.time(k) + 0.5 * dt;
        for s in 0..g.n_space() {
            let m = g.multi_index(s);
            if (0..n).any(|d| m[d] + 1 == per) {
                continue;
            }
            let mut x = g.node_x(s);
            x.iter_mut().take(n).for_each(|v| *v += 0.5 * h);
            let v = e(u.evaluate(&SpaceTimePoint::new(&x[..n], t)))?;
            err = err.max((v - half_space_exact(&x[..n])).abs());
        }
    }
    Ok((node, err))
}

fn c1_exact_solution() -> Outcome {
    let run = |h: f64, dt: f64| -> Result<(f64, f64, f64, f64), String> {
        let g = grid(2, 1.0, 1.0, h, dt)?;
        let f = ScalarField::constant(&g, 1.0);
        let data = e(ScalarField::from_fn(&g, |x, _| half_space_exact(x)))?;
        let start = Instant::now();
        let sol = e(solve_obstacle(&f, &data, &LcpOptions::default()))?;
        let secs = start.elapsed().as_secs_f64();
        ensure(sol.u.values().iter().all(|&v| v >= 0.0), "negative solution value")?;
        let (node, err) = half_space_errors(&sol.u)?;
        Ok((err, node, 2.0 * (h * h + dt), secs))
    };
    let (err0, node0, tol0, secs0) = run(0.05, 0.0025)?;
    // dt ≤ h² on every grid, so the refined run takes dt = h²
    let (err1, node1, tol1, _) = run(0.025, 0.000625)?;
    let ratio = err0 / err1;
    let detail = format!(
        "sup error {err0:.3e} (≤ {tol0:.3e}) → {err1:.3e} (≤ {tol1:.3e}), reduction {ratio:.2}×, node-only {:.1e}, base solve {secs0:.1}s",
        node0.max(node1)
    );
    ensure(err0 <= tol0 && err1 <= tol1, format!("error above 2(h²+dt): {detail}"))?;
    ensure(ratio >= 3.0, format!("refinement gain below 3×: {detail}"))?;
    ensure(secs0 <= 30.0, format!("base solve too slow: {detail}"))?;
    Ok(detail)
}

fn c2_traveling_wave() -> Outcome {
    let a = 0.3;
    // fine n = 1 solve: free-boundary location and the n_reg slope
    let h = 0.0125;
    let g = grid(1, 1.0, 1.0, h, h * h)?;
    let m = e(manufacture(&case("traveling-wave", 1, &[("a", a)])?, &g))?;
    let u = e(solve_obstacle(&m.f, &m.u, &LcpOptions::default()))?.u;
    let cloud = e(extract_free_boundary(&u, default_eps_pos(&u)))?;
    let mut slices = vec![0usize; g.n_time()];
    let mut worst: f64 = 0.0;
    for p in &cloud.points {
        slices[p.time_index] += 1;
        worst = worst.max((p.x[0] - a * p.t).abs());
    }
    ensure(slices.iter().all(|&c| c == 1), "a time slice without exactly one interface point")?;
    ensure(worst <= h, format!("free boundary off by {worst:.3e} > h = {h}"))?;

    let radii = e("log:0.1:0.4:24".parse::<Ladder>())?.radii();
    let (nreg, _) = e(n_reg_curve(&u, &SpaceTimePoint::origin(), 2.0, 1.0, &radii))?;
    let slope = loglog_slope(&nreg.radii, &nreg.values).ok_or("degenerate n_reg curve")?;
    ensure((slope - 1.0).abs() <= 0.2, format!("n_reg slope {slope:.3} outside 1 ± 0.2"))?;

    // normals from the regular-point check, in one and two dimensions
    let mut nu_err: f64 = 0.0;
    let rep = e(check_regular_point(&u, &m.f, &ctx(SpaceTimePoint::origin(), "log:0.05:0.4:24")?))?;
    ensure(rep.status == Status::Pass && rep.metric("regular") == Some(1.0), "n=1 origin not regular")?;
    nu_err = nu_err.max((rep.metric("nu1").unwrap_or(0.0) - 1.0).abs());
    let g2 = grid(2, 1.0, 1.0, 0.05, 0.0025)?;
    let m2 = e(manufacture(&case("traveling-wave", 2, &[("a", a)])?, &g2))?;
    let u2 = e(solve_obstacle(&m2.f, &m2.u, &LcpOptions::default()))?.u;
    let rep2 = e(check_regular_point(&u2, &m2.f, &ctx(SpaceTimePoint::origin(), "log:0.2:0.4:24")?))?;
    ensure(rep2.metric("regular") == Some(1.0), "n=2 origin not regular")?;
    let nu2 = [rep2.metric("nu1").unwrap_or(0.0), rep2.metric("nu2").unwrap_or(1.0)];
    nu_err = nu_err.max(((nu2[0] - 1.0).powi(2) + nu2[1].powi(2)).sqrt());
    ensure(nu_err <= 1e-3, format!("|ν − e₁| = {nu_err:.3e}"))?;
    Ok(format!(
        "interface within {:.2}h on {} slices, |ν − e₁| ≤ {nu_err:.1e}, n_reg slope {slope:.3}",
        worst / h,
        slices.len()
    ))
}

fn c3_constant_free() -> Outcome {
    let mut counted = BTreeMap::<&str, usize>::new();
    let mut bump = |k: &'static str| *counted.entry(k).or_default() += 1;

    // positivity of obstacle output
    let g1 = grid(1, 1.0, 1.0, 0.025, 0.000625)?;
    let g2 = grid(2, 1.0, 0.5, 0.05, 0.0025)?;
    let tw = e(manufacture(&case("traveling-wave", 1, &[("a", 0.3)])?, &g1))?;
    let hs = e(manufacture(&case("half-space", 2, &[("nu1", 1.0), ("nu2", 1.0)])?, &g2))?;
    let mut solved = Vec::new();
    for (f, data) in [(&tw.f, &tw.u), (&hs.f, &hs.u)] {
        let u = e(solve_obstacle(f, data, &LcpOptions::default()))?.u;
        ensure(u.values().iter().all(|&v| v >= 0.0), "obstacle output below zero")?;
        bump("u>=0");
        solved.push((u, f.clone()));
    }
    let zero = ScalarField::zeros(&g1);
    let u = e(solve_obstacle(&ScalarField::constant(&g1, 1.0), &zero, &LcpOptions::default()))?.u;
    ensure(u.values().iter().all(|&v| v == 0.0), "zero data, f ≡ 1 does not give u ≡ 0")?;
    bump("u>=0");

    // Ñ ≤ N̂, σ and M_reg monotone, on manufactured and solved fields
    let gh = grid(1, 1.0, 1.0, 0.01, 0.0001)?;
    let mut fields: Vec<(ScalarField, ScalarField)> = solved;
    for (id, params) in [
        ("hoelder-rhs", vec![("beta", 0.5)]),
        ("pstar", vec![("kappa", 2.0)]),
        ("dini-rhs", vec![]),
        ("traveling-wave", vec![("a", 0.3)]),
    ] {
        let m = e(manufacture(&case(id, 1, &params)?, &gh))?;
        fields.push((m.u, m.f));
    }
    let radii = e("log:0.04:0.5:24".parse::<Ladder>())?.radii();
    for (u, f) in &fields {
        let o = SpaceTimePoint::origin();
        let rr: Vec<f64> = radii.iter().copied().filter(|&r| r >= 4.0 * u.grid().h()).collect();
        let nt = e(n_tilde_curve(u, &o, 2.0, &rr))?;
        let nh = e(n_hat_curve(u, f, &o, 2.0, &rr))?;
        // rounding floor: both fits of an exactly representable field sit at machine zero
        let scale = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for ((a, b), r) in nt.values.iter().zip(&nh.values).zip(&nt.radii) {
            let floor = 1e-12 * (1.0 + scale) / (r * r);
            ensure(*a <= b * (1.0 + 1e-9) + floor, format!("Ñ = {a} > N̂ = {b} at r = {r}"))?;
            bump("Ñ<=N̂");
        }
        ensure(e(sigma(f, &o, 2.0, &rr))?.is_nondecreasing(), "σ decreases")?;
        ensure(e(m_reg(u, &o, 2.0, 1.0, &rr))?.is_nondecreasing(), "M_reg decreases")?;
        bump("monotone");
    }

    // non-degeneracy with λ = 0: κP* and half-space members
    for n in [1usize, 2] {
        let g = grid(n, 1.0, 1.0, 0.05, 0.0025)?;
        for kappa in [0.5, 1.0, 3.0] {
            let m = e(manufacture(&case("pstar", n, &[("kappa", kappa)])?, &g))?;
            let hs = e(manufacture(&case("half-space", n, &[("kappa", kappa)])?, &g))?;
            for (u, f) in [(&m.u, &m.f), (&hs.u, &hs.f)] {
                for x in [0.3f64, -0.4, 0.5] {
                    for t in [-0.5, -0.2] {
                        let mut xs = vec![x; n];
                        xs[0] = x.abs();
                        let pt = SpaceTimePoint::new(&xs, t);
                        for d in [0.1, 0.2, 0.4] {
                            let rep = e(check_nondegeneracy(u, f, &pt, d, &ctx(pt, "log:0.2:0.4:24")?))?;
                            ensure(rep.metric("lambda") == Some(0.0), "λ ≠ 0 for constant f")?;
                            ensure(rep.status == Status::Pass, format!("non-degeneracy fails at {xs:?},{t} d={d}"))?;
                            bump("nondegeneracy");
                        }
                    }
                }
            }
        }
    }

    // HP* = 1 and the caloric constraint
    for n in 1..=3usize {
        let g = grid(n, 0.5, 0.25, 0.05, 0.0025)?;
        let hp = apply_heat(&e(Poly2::pstar(n).sample(&g))?);
        for k in 0..g.n_time() {
            for s in 0..g.n_space() {
                if heat_defined(&g, s, k) {
                    ensure((hp.at(s, k) - 1.0).abs() <= 1e-12, format!("HP* = {} at n={n}", hp.at(s, k)))?;
                }
            }
        }
        bump("HP*=1");
    }
    for (u, _) in &fields {
        let fit = e(fit_poly2(u, &SpaceTimePoint::origin(), 0.2, 2.0, Constraint::Caloric))?;
        ensure((fit.poly.trace() - fit.poly.m).abs() <= 1e-12, "caloric fit violates tr(c) = m")?;
        bump("tr c = m");
    }
    let parts: Vec<String> = counted.iter().map(|(k, v)| format!("{k} ×{v}")).collect();
    Ok(parts.join(", "))
}

/// Dense least-squares oracle over cells found by brute force.
mod oracle {
    use super::*;

    pub type Cell = Vec<([f64; 3], f64, f64)>;

    pub fn cells(u: &ScalarField, c: &SpaceTimePoint, r: f64) -> Vec<Cell> {
        let g = u.grid();
        let n = g.n();
        let (h, dt) = (g.h(), g.dt());
        let mut out = Vec::new();
        for k in 0..g.n_time() - 1 {
            let tc = g.time(k) + 0.5 * dt;
            if tc <= c.t - r * r || tc > c.t {
                continue;
            }
            for s in 0..g.n_space() {
                let m = g.multi_index(s);
                if (0..n).any(|d| m[d] + 1 == g.per_axis()) {
                    continue;
                }
                let x = g.node_x(s);
                if (0..n).map(|d| (x[d] + 0.5 * h - c.x[d]).powi(2)).sum::<f64>() > r * r {
                    continue;
                }
                let mut cell = Vec::new();
                for corner in 0..(1usize << n) {
                    let sc = s + (0..n).filter(|d| corner >> d & 1 == 1).map(|d| g.strides()[d]).sum::<usize>();
                    let xc = g.node_x(sc);
                    let rel = [xc[0] - c.x[0], xc[1] - c.x[1], xc[2] - c.x[2]];
                    for kk in [k, k + 1] {
                        cell.push((rel, g.time(kk) - c.t, u.at(sc, kk)));
                    }
                }
                out.push(cell);
            }
        }
        out
    }

    /// Columns `1, x_i, x_i², x_i x_j, t`, corner-averaged per cell.
    fn design(n: usize, cells: &[Cell]) -> (DMatrix<f64>, DVector<f64>) {
        let mono = |x: &[f64; 3], t: f64| {
            let mut v = vec![1.0];
            v.extend((0..n).map(|i| x[i]));
            v.extend((0..n).map(|i| x[i] * x[i]));
            for i in 0..n {
                for j in i + 1..n {
                    v.push(x[i] * x[j]);
                }
            }
            v.push(t);
            v
        };
        let k = mono(&[0.0; 3], 0.0).len();
        let mut a = DMatrix::zeros(cells.len(), k);
        let mut b = DVector::zeros(cells.len());
        for (row, cell) in cells.iter().enumerate() {
            let w = 1.0 / cell.len() as f64;
            for (x, t, v) in cell {
                for (j, m) in mono(x, *t).into_iter().enumerate() {
                    a[(row, j)] += w * m;
                }
                b[row] += w * v;
            }
        }
        (a, b)
    }

    fn rms(r: &DVector<f64>) -> f64 {
        (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
    }

    /// Residual of the best fit; with `Some(κ)` the `t` coefficient is eliminated
    /// through `Σ 2β_{x_i²} − β_t = κ`.
    pub fn poly_residual(n: usize, cells: &[Cell], r: f64, heat: Option<f64>) -> f64 {
        let (a, b) = design(n, cells);
        let k = a.ncols();
        let Some(kappa) = heat else {
            let beta = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
            return rms(&(&a * beta - &b)) / (r * r);
        };
        let at = a.column(k - 1).into_owned();
        let mut reduced = a.columns(0, k - 1).into_owned();
        for i in 0..n {
            let col = reduced.column(1 + n + i) + &at * 2.0;
            reduced.set_column(1 + n + i, &col);
        }
        let rhs = &b + &at * kappa;
        let beta = reduced.clone().svd(true, true).solve(&rhs, 1e-14).unwrap();
        rms(&(&reduced * beta - rhs)) / (r * r)
    }

    pub fn halfspace(cells: &[Cell], n: usize, r: f64, nu: &[f64]) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        let mut pairs = Vec::new();
        for cell in cells {
            let w = 1.0 / cell.len() as f64;
            let phi: f64 = cell
                .iter()
                .map(|(x, _, _)| 0.5 * (0..n).map(|i| x[i] * nu[i]).sum::<f64>().max(0.0).powi(2) * w)
                .sum();
            let v: f64 = cell.iter().map(|e| e.2 * w).sum();
            num += phi * v;
            den += phi * phi;
            pairs.push((phi, v));
        }
        let kappa = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        let res = DVector::from_iterator(pairs.len(), pairs.iter().map(|(p, v)| v - kappa * p));
        (kappa, rms(&res) / (r * r))
    }

    pub fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        while b - a > 1e-13 * (1.0 + a.abs().max(b.abs())) {
            let (c, d) = (b - g * (b - a), a + g * (b - a));
            if f(c) <= f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        0.5 * (a + b)
    }
}

fn random_instance(rng: &mut ChaCha8Rng, idx: usize) -> Result<(ScalarField, SpaceTimePoint, f64), String> {
    let n = 1 + idx % 3;
    let (radius, depth, h, dt) = match n {
        1 => (1.0, 0.5, 0.1, 0.01),
        2 => (0.6, 0.3, 0.1, 0.01),
        _ => (0.3, 0.1, 0.05, 0.0025),
    };
    let g = grid(n, radius, depth, h, dt)?;
    let r = rng.random_range(4.0 * h..(0.9 * radius).min(0.95 * depth.sqrt()));
    let x: Vec<f64> = (0..n)
        .map(|_| if radius - r > 1e-9 { rng.random_range(-(radius - r)..radius - r) } else { 0.0 })
        .collect();
    let t = rng.random_range(-depth + r * r..0.0);
    let coef: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut vals = Vec::with_capacity(g.len());
    for k in 0..g.n_time() {
        for s in 0..g.n_space() {
            let xs = g.node_x(s);
            let smooth = coef[0] + coef[1] * xs[0] * xs[0] + coef[2] * g.time(k) + coef[3] * xs[1] * xs[2]
                + coef[4] * (2.0 * xs[0]).cos();
            vals.push(smooth + rng.random_range(-0.5..0.5));
        }
    }
    Ok((e(ScalarField::from_values(g, vals))?, SpaceTimePoint::new(&x, t), r))
}

fn c4_oracle_equivalence() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-8 * b.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let instances = 24;
    let mut worst: f64 = 0.0;
    for idx in 0..instances {
        let (u, c, r) = random_instance(&mut rng, idx)?;
        let n = u.grid().n();
        let cells = oracle::cells(&u, &c, r);
        let kappa = rng.random_range(-1.0..2.0);
        for (constraint, heat) in [
            (Constraint::Free, None),
            (Constraint::HeatEquals(kappa), Some(kappa)),
            (Constraint::Caloric, Some(0.0)),
        ] {
            let lib = e(fit_poly2(&u, &c, r, 2.0, constraint))?.residual;
            let or = oracle::poly_residual(n, &cells, r, heat);
            worst = worst.max((lib - or).abs() / or.abs().max(1.0));
            ensure(close(lib, or), format!("#{idx} {constraint:?}: {lib} vs oracle {or}"))?;
        }
        let mut nu: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
        nu.iter_mut().for_each(|v| *v /= norm);
        let samples = e(u.samples(&Cylinder::new(c, r)))?;
        let (_, lib) = e(fit_halfspace_amplitude(&samples, &nu))?;
        let (k_or, or) = oracle::halfspace(&cells, n, r, &nu);
        ensure(close(lib, or), format!("#{idx} half-space: {lib} vs oracle {or}"))?;
        let fixed = e(halfspace_residual(&samples, &e(HalfSpaceProfile::new(&nu, k_or))?, 2.0))?;
        ensure(close(fixed, or), format!("#{idx} half-space at oracle κ: {fixed} vs {or}"))?;
        worst = worst.max((lib - or).abs() / or.abs().max(1.0));

        let vals: Vec<f64> = cells.iter().map(|c| c.iter().map(|e| e.2).sum::<f64>() / c.len() as f64).collect();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for p in [1.5, 3.0] {
            let j = |k: f64| (vals.iter().map(|v| (v - k).abs().powf(p)).sum::<f64>() / vals.len() as f64).powf(1.0 / p);
            let best = j(oracle::golden(j, lo, hi));
            let (lib, _) = e(omega_tilde(&u, &c, r, p))?;
            ensure((lib - best).abs() <= 1e-6, format!("#{idx} ω̃ p={p}: {lib} vs golden {best}"))?;
        }
    }
    Ok(format!("{instances} instances, worst relative gap {worst:.1e}; ω̃ within 1e-6 for p = 1.5, 3"))
}

fn c5_taylor_shape() -> Outcome {
    let g = grid(1, 1.0, 1.0, 0.01, 0.0001)?;
    let o = SpaceTimePoint::origin();
    let mut slopes = Vec::new();
    for beta in [0.3, 0.5, 0.8] {
        let m = e(manufacture(&case("hoelder-rhs", 1, &[("beta", beta)])?, &g))?;
        let rep = e(check_taylor(&m.u, &m.f, &ctx(o, "log:0.04:0.8:24")?))?;
        let slope = rep.metric("slope_e").ok_or("no slope")?;
        slopes.push(format!("β={beta}: {slope:.3}"));
        ensure((slope - beta).abs() <= 0.15, format!("e(r) slope {slope:.3} for β = {beta}"))?;
    }
    let m = e(manufacture(&case("dini-rhs", 1, &[])?, &g))?;
    let rep = e(check_taylor(&m.u, &m.f, &ctx(o, "log:0.04:0.25:24")?))?;
    let ev = &rep.series["e"];
    // three-point moving average of ln e along the ladder
    let smooth: Vec<f64> = (0..ev.len())
        .map(|i| {
            let w = &ev[i.saturating_sub(1)..(i + 2).min(ev.len())];
            w.iter().map(|v| v.ln()).sum::<f64>() / w.len() as f64
        })
        .collect();
    ensure(smooth.windows(2).all(|w| w[1] >= w[0]), "smoothed e(r) is not monotone in r")?;
    ensure(rep.metric("non_dini") == Some(0.0), "Dini right-hand side flagged non-Dini")?;
    let band = rep.metric("ratio_band").ok_or("no band")?;
    ensure(band <= 3.0, format!("e/dini_bound spans a factor {band:.2} over [8h, 0.25]"))?;
    Ok(format!("slopes {}; Dini case monotone, ratio band {band:.2}", slopes.join(", ")))
}

fn c6_dichotomy() -> Outcome {
    let g = grid(1, 1.0, 1.0, 0.01, 0.0001)?;
    let o = SpaceTimePoint::origin();
    let cx = ctx(o, "log:0.04:0.5:24")?;
    let mut fractions = Vec::new();
    for (id, params) in [("traveling-wave", vec![("a", 0.3)]), ("half-space", vec![])] {
        let m = e(manufacture(&case(id, 1, &params)?, &g))?;
        let (mc, sc) = e(dichotomy_curves(&m.u, &m.f, &cx))?;
        let rep = e(check_decay_dichotomy(&mc, &sc, &cx.cal, 8.0 * g.h()))?;
        let frac = rep.metric("pass_fraction").unwrap_or(0.0);
        ensure(rep.applicable, format!("{id}: premise M ≤ M₀ fails"))?;
        ensure(frac == 1.0 && rep.status == Status::Pass, format!("{id}: disjunction holds at {frac:.3}"))?;
        fractions.push(format!("{id} {:.0}% of {}", 100.0 * frac, rep.ladder.len()));
    }
    let m = e(manufacture(&case("pstar", 1, &[])?, &g))?;
    let (mc, sc) = e(dichotomy_curves(&m.u, &m.f, &cx))?;
    let rep = e(check_decay_dichotomy(&mc, &sc, &cx.cal, 8.0 * g.h()))?;
    ensure(
        !rep.applicable && rep.status == Status::NotApplicable,
        "P* not flagged as failing the M₀ premise",
    )?;
    Ok(format!("{}; P* flagged (M = {:.3} > M₀)", fractions.join(", "), mc.values.last().unwrap()))
}

fn c7_dini_quadrature() -> Outcome {
    let radii = e("log:0.001:1:24".parse::<Ladder>())?.radii();
    let mut worst: f64 = 0.0;
    for beta in [0.3, 0.5, 1.0] {
        let values: Vec<f64> = radii.iter().map(|s| s.powf(beta)).collect();
        let curve = e(ModulusCurve::new(CurveKind::Sigma, radii.clone(), values))?;
        for r in [0.1, 0.5, 1.0] {
            let got = e(dini_integral(&curve, r))?;
            let exact = r.powf(beta) / beta;
            ensure(!got.non_dini, format!("s^{beta} flagged non-Dini"))?;
            worst = worst.max((got.value - exact).abs());
            ensure((got.value - exact).abs() <= 1e-3, format!("β={beta}, r={r}: {} vs {exact}", got.value))?;
        }
    }
    let values: Vec<f64> = radii.iter().map(|s| 1.0 / (std::f64::consts::E / s).ln()).collect();
    let curve = e(ModulusCurve::new(CurveKind::Sigma, radii, values))?;
    ensure(e(dini_integral(&curve, 1.0))?.non_dini, "1/ln(e/s) not flagged")?;
    Ok(format!("max error {worst:.1e}; 1/ln(e/s) flagged non-Dini"))
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c8_determinism() -> Outcome {
    let tmp = e(tempfile::tempdir())?;
    let out = tmp.path().join("out");
    let config = tmp.path().join("experiment.toml");
    let text = format!(
        r#"output = "{}"

[grid]
n = 1
h = 0.025
dt = 0.000625

[case]
id = "traveling-wave"
params = {{ a = 0.3 }}

[solve]
kind = "obstacle"

[analysis]
centers = [[0.0], [0.1, -0.1]]
ladder = "log:0.1:0.45:24"

[verify]
checks = ["bmo", "vmo", "taylor", "quadratic-growth", "nondegeneracy", "decay-dichotomy", "regular-point"]
points = [[0.3, -0.2]]
"#,
        out.display()
    );
    e(std::fs::write(&config, text))?;
    let run = |threads: &str| -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
        let status = e(Command::new(env!("CARGO_BIN_EXE_pobs"))
            .args(["report", "--config"])
            .arg(&config)
            .env("POBS_THREADS", threads)
            .output())?;
        ensure(
            status.status.code() == Some(0),
            format!("report exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)),
        )?;
        Ok(snapshot(&out))
    };
    let first = run("4")?;
    let second = run("4")?;
    let single = run("1")?;
    ensure(first.contains_key(Path::new("digest.txt")), "no digest written")?;
    ensure(first.contains_key(Path::new("summary.csv")), "no summary written")?;
    for (name, other) in [("second run", &second), ("single-thread run", &single)] {
        let differing: Vec<String> = first
            .iter()
            .filter(|(k, v)| other.get(*k) != Some(*v))
            .map(|(k, _)| k.display().to_string())
            .collect();
        ensure(first.len() == other.len() && differing.is_empty(), format!("{name} differs in {differing:?}"))?;
    }
    Ok(format!("{} files byte-identical across two runs and across thread counts", first.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "exact-solution reproduction", c1_exact_solution),
        (2, "manufactured moving boundary", c2_traveling_wave),
        (3, "constant-free inequalities", c3_constant_free),
        (4, "oracle equivalence", c4_oracle_equivalence),
        (5, "Taylor-expansion shape", c5_taylor_shape),
        (6, "decay dichotomy", c6_dichotomy),
        (7, "Dini quadrature", c7_dini_quadrature),
        (8, "determinism", c8_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter
            .iter()
            .any(|f| name.contains(f.as_str()) || *f == id.to_string() || f.eq_ignore_ascii_case(&format!("C{id}"))) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  C{id} {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  C{id} {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
