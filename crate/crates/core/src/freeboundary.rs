//! Free-boundary extraction, regular-point classification and the graph
//! diagnostic.
//!
//! Interface points are located on grid lines between a contact node
//! (`u ≤ ε_pos`) and a positive neighbour. Off the boundary `u` grows
//! quadratically, so `√u` is close to linear there; the location is the zero
//! of the line through `√u` at the first two positive nodes, clamped to
//! within one cell of the sign change. This is a heuristic with O(h) accuracy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, SpaceTimePoint, MAX_DIM};
use crate::par;
use crate::verify::{classify_regular, CheckContext};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub x: [f64; MAX_DIM],
    pub t: f64,
    /// Grid axis of the line the crossing was found on.
    pub axis: usize,
    pub time_index: usize,
    /// Contact-side and positive-side spatial nodes.
    pub contact_node: usize,
    pub positive_node: usize,
    pub regular: bool,
    pub nu: Option<[f64; MAX_DIM]>,
}

impl CloudPoint {
    pub fn point(&self) -> SpaceTimePoint {
        SpaceTimePoint { x: self.x, t: self.t }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundaryCloud {
    pub n: usize,
    pub points: Vec<CloudPoint>,
}

impl FreeBoundaryCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `t,x1..xn,regular,nu1..nun`; normals are left blank when absent.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut out = String::from("t");
        for d in 1..=n {
            out.push_str(&format!(",x{d}"));
        }
        out.push_str(",regular");
        for d in 1..=n {
            out.push_str(&format!(",nu{d}"));
        }
        out.push('\n');
        for p in &self.points {
            out.push_str(&format!("{}", p.t));
            for d in 0..n {
                out.push_str(&format!(",{}", p.x[d]));
            }
            out.push_str(if p.regular { ",1" } else { ",0" });
            for d in 0..n {
                match p.nu {
                    Some(nu) => out.push_str(&format!(",{}", nu[d])),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// A row of the cloud CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub regular: bool,
    pub nu: Option<Vec<f64>>,
}

pub fn parse_cloud_csv(text: &str) -> Result<Vec<CloudRow>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("empty cloud CSV".into()))?
        .split(',')
        .collect();
    let n = (header.len().saturating_sub(2)) / 2;
    let mut expect = vec!["t".to_string()];
    expect.extend((1..=n).map(|d| format!("x{d}")));
    expect.push("regular".into());
    expect.extend((1..=n).map(|d| format!("nu{d}")));
    if n == 0 || header != expect {
        return Err(Error::Format(format!("unexpected cloud header {header:?}")));
    }
    let num = |s: &str, i: usize| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Format(format!("row {i}: bad number `{s}`")))
    };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 + 2 * n {
            return Err(Error::Format(format!("row {}: expected {} columns", i + 1, 2 + 2 * n)));
        }
        let t = num(cols[0], i + 1)?;
        let x = cols[1..=n].iter().map(|c| num(c, i + 1)).collect::<Result<Vec<_>>>()?;
        let regular = match cols[n + 1] {
            "1" => true,
            "0" => false,
            other => return Err(Error::Format(format!("row {}: regular flag `{other}`", i + 1))),
        };
        let nu_cols = &cols[n + 2..];
        let nu = if nu_cols.iter().all(|c| c.is_empty()) {
            None
        } else {
            Some(nu_cols.iter().map(|c| num(c, i + 1)).collect::<Result<Vec<_>>>()?)
        };
        rows.push(CloudRow { t, x, regular, nu });
    }
    Ok(rows)
}

/// Interface points on every grid line of every time slice.
pub fn extract_free_boundary(u: &ScalarField, eps_pos: f64) -> Result<FreeBoundaryCloud> {
    if !(eps_pos > 0.0) {
        return Err(Error::Config(format!("eps_pos = {eps_pos} must be positive")));
    }
    let g = u.grid();
    let n = g.n();
    let h = g.h();
    let strides = g.strides();
    let per_axis = g.per_axis();
    let slices: Vec<usize> = (0..g.n_time()).collect();
    let per_slice = par::map_collect(&slices, |&k| {
        let mut pts = Vec::new();
        for d in 0..n {
            let st = strides[d];
            for s in 0..g.n_space() {
                let i = g.multi_index(s)[d];
                if i + 1 >= per_axis {
                    continue;
                }
                let (a, b) = (u.at(s, k), u.at(s + st, k));
                let (ca, cb) = (a <= eps_pos, b <= eps_pos);
                if ca == cb {
                    continue;
                }
                // direction from the contact node towards the positive one
                let (c, p, dir) = if ca { (s, s + st, 1isize) } else { (s + st, s, -1isize) };
                let ip = g.multi_index(p)[d] as isize;
                let next = ip + dir;
                let up = u.at(p, k).sqrt();
                let mut offset = 0.5 * h;
                if next >= 0 && (next as usize) < per_axis {
                    let q = if dir > 0 { p + st } else { p - st };
                    let uq = u.at(q, k);
                    if uq > eps_pos {
                        let slope = (uq.sqrt() - up) / h;
                        if slope > 0.0 {
                            offset = up / slope;
                        }
                    }
                }
                // the root may sit up to one cell beyond the contact node
                let offset = offset.clamp(0.0, 2.0 * h);
                let mut x = g.node_x(p);
                x[d] -= dir as f64 * offset;
                pts.push(CloudPoint {
                    x,
                    t: g.time(k),
                    axis: d,
                    time_index: k,
                    contact_node: c,
                    positive_node: p,
                    regular: false,
                    nu: None,
                });
            }
        }
        pts
    });
    Ok(FreeBoundaryCloud {
        n,
        points: per_slice.into_iter().flatten().collect(),
    })
}

/// Runs the regular-point test at every cloud point. Points whose test
/// cannot run (cylinder leaves the domain, `f ≤ 0`) stay unclassified.
pub fn classify_points(
    u: &ScalarField,
    f: &ScalarField,
    cloud: &FreeBoundaryCloud,
    template: &CheckContext,
) -> Result<FreeBoundaryCloud> {
    u.check_same_grid(f)?;
    let results = par::map_collect(&cloud.points, |pt| {
        let mut ctx = template.clone();
        ctx.center = pt.point();
        let outcome = classify_regular(u, f, &ctx);
        let mut out = pt.clone();
        out.regular = false;
        out.nu = None;
        match outcome {
            Ok(Some(cls)) => {
                out.nu = Some(cls.nu);
                out.regular = cls.regular;
                Ok(out)
            }
            Ok(None) | Err(Error::Domain(_)) => Ok(out),
            Err(e) => Err(e),
        }
    });
    Ok(FreeBoundaryCloud {
        n: cloud.n,
        points: results.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    /// Parabolic size `√(|h'|² + |k|)` of the neighbourhood.
    pub scale: f64,
    pub count: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDiagnostic {
    pub axis: usize,
    pub samples: usize,
    pub rows: Vec<ScaleRow>,
}

/// Treats the cloud as a graph `x_axis = g(x', t)` and reports the remainder
/// `|g(x'+h', t−k) − g(x',t) − h'·D_{x'}g| / √(|h'|² + k)` over neighbourhoods
/// with `|h'| = jh` and `k ≈ (jh)²`, for `j = 1, 2, 4, …`.
pub fn graph_diagnostic(cloud: &FreeBoundaryCloud, axis: usize, h: f64, dt: f64) -> Result<GraphDiagnostic> {
    let n = cloud.n;
    if axis >= n {
        return Err(Error::Config(format!("axis {axis} out of range for n = {n}")));
    }
    if !(h > 0.0 && dt > 0.0) {
        return Err(Error::Config("graph diagnostic needs positive steps".into()));
    }
    let others: Vec<usize> = (0..n).filter(|&d| d != axis).collect();
    // key: transverse node indices and time index; lines with several crossings are dropped
    let mut map: BTreeMap<(Vec<i64>, usize), Option<f64>> = BTreeMap::new();
    for p in cloud.points.iter().filter(|p| p.axis == axis) {
        let key: Vec<i64> = others.iter().map(|&d| (p.x[d] / h).round() as i64).collect();
        map.entry((key, p.time_index))
            .and_modify(|v| *v = None)
            .or_insert(Some(p.x[axis]));
    }
    let g: BTreeMap<(Vec<i64>, usize), f64> =
        map.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect();
    let lookup = |key: &[i64], k: usize| g.get(&(key.to_vec(), k)).copied();
    let slope = |key: &[i64], k: usize| -> Option<Vec<f64>> {
        (0..others.len())
            .map(|i| {
                let mut lo = key.to_vec();
                let mut hi = key.to_vec();
                lo[i] -= 1;
                hi[i] += 1;
                Some((lookup(&hi, k)? - lookup(&lo, k)?) / (2.0 * h))
            })
            .collect()
    };
    let max_key = g.keys().map(|(_, k)| *k).max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut j: i64 = 1;
    loop {
        let steps = (((j as f64 * h).powi(2) / dt).round() as usize).max(1);
        if steps > max_key {
            break;
        }
        let mut ratios = Vec::new();
        let shifts: Vec<Vec<i64>> = if others.is_empty() {
            vec![Vec::new()]
        } else {
            let m = others.len();
            (0..m)
                .flat_map(|i| {
                    [-j, j].into_iter().map(move |s| {
                        let mut v = vec![0i64; m];
                        v[i] = s;
                        v
                    })
                })
                .collect()
        };
        for ((key, k), &g0) in &g {
            if *k < steps {
                continue;
            }
            let Some(dg) = slope(key, *k) else { continue };
            for sh in &shifts {
                let moved: Vec<i64> = key.iter().zip(sh).map(|(a, b)| a + b).collect();
                let Some(g1) = lookup(&moved, k - steps) else { continue };
                let hp: Vec<f64> = sh.iter().map(|&s| s as f64 * h).collect();
                let lin: f64 = hp.iter().zip(&dg).map(|(a, b)| a * b).sum();
                let dist = (hp.iter().map(|v| v * v).sum::<f64>() + steps as f64 * dt).sqrt();
                ratios.push((g1 - g0 - lin).abs() / dist);
            }
        }
        if !ratios.is_empty() {
            ratios.sort_by(f64::total_cmp);
            let hp2 = if others.is_empty() { 0.0 } else { (j as f64 * h).powi(2) };
            rows.push(ScaleRow {
                scale: (hp2 + steps as f64 * dt).sqrt(),
                count: ratios.len(),
                max_ratio: *ratios.last().unwrap(),
                median_ratio: ratios[ratios.len() / 2],
            });
        }
        j *= 2;
    }
    Ok(GraphDiagnostic {
        axis,
        samples: g.len(),
        rows,
    })
}
