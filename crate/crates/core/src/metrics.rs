//! Hausdorff distances, volume gaps, diameters, Sobolev chart errors and
//! measured characteristics of the approximating domains, collected into a
//! per-m convergence report.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defining::{
    extract_nodes, margin_floor, midpoint_grid, solve_implicit, sup_bound, Approximation, DefiningFunction,
    ExtractedChart, M0Report,
};
use crate::error::{Error, Result};
use crate::geometry::atlas::{DomainAtlas, LipschitzCharacteristic};
use crate::geometry::frame::{Point, Tangent};
use crate::geometry::index::PointIndex;
use crate::geometry::shapes::BoundaryModel;
use crate::mollify::Side;
use crate::numeric::{bracketed_root, hermite3, hermite_bicubic};
use crate::partition::BumpFamily;

/// A distance with an additive sampling-error bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Symmetric max-min distance between two point samplings. `sampling_error`
/// is added to the reported error.
pub fn hausdorff_boundaries(a: &[Point], b: &[Point], dim: usize, sampling_error: f64) -> Result<Estimate> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let ia = PointIndex::new(a, dim);
    let ib = PointIndex::new(b, dim);
    let ab = a.par_iter().map(|p| ib.nearest(p).1).reduce(|| 0.0, f64::max);
    let ba = b.par_iter().map(|p| ia.nearest(p).1).reduce(|| 0.0, f64::max);
    Ok(Estimate { value: ab.max(ba), error: sampling_error })
}

/// Dense samples of an implicit boundary {F_m = 0} over all charts.
#[derive(Clone, Debug, Default)]
pub struct BoundarySamples {
    pub points: Vec<Point>,
    /// Tangential spacing of the dense samples.
    pub spacing: f64,
    /// Largest distance from a point of the surface to its nearest sample.
    pub cover_radius: f64,
    /// Largest difference between interpolated and solved chart values at checkpoints.
    pub interpolation_error: f64,
    pub max_gradient: f64,
    pub min_margin: f64,
}

/// Densification factor between solved nodes and emitted samples.
const DENSIFY: usize = 4;

/// Samples every implicit chart over the square [-w, w]^{n-1} at tangential
/// spacing at most `target`. Charts are solved on a lattice four times
/// coarser and filled in by cubic (n = 2) or bicubic (n = 3) Hermite
/// interpolation of the implicit values and derivatives; every fifth cell
/// midpoint is solved directly to measure the interpolation error.
pub fn implicit_boundary_samples(df: &DefiningFunction, window: f64, target: f64) -> Result<BoundarySamples> {
    let dim = df.dim();
    let cells = ((2.0 * window / (DENSIFY as f64 * target)).ceil() as usize).max(1);
    let coarse = 2.0 * window / cells as f64;
    let fine = coarse / DENSIFY as f64;
    let floor = margin_floor(df.atlas.lipschitz());
    let per: Vec<Result<BoundarySamples>> = (0..df.atlas.len())
        .into_par_iter()
        .map(|i| {
            let frame = &df.atlas.charts[i].frame;
            let at = |k: usize| -window + k as f64 * coarse;
            let mut out = BoundarySamples { min_margin: f64::INFINITY, ..Default::default() };
            let order = if dim == 2 { 1 } else { 2 };
            let mut solved = Vec::new();
            let rows = if dim == 2 { 1 } else { cells + 1 };
            for j in 0..rows {
                for k in 0..=cells {
                    let y = Tangent::new(at(k), if dim == 2 { 0.0 } else { at(j) });
                    let p = solve_implicit(df, i, &y, order)?;
                    out.min_margin = out.min_margin.min(p.margin);
                    out.max_gradient = out.max_gradient.max(p.grad.norm());
                    solved.push(p);
                }
            }
            if out.min_margin < floor - 1e-9 {
                return Err(Error::Margin { chart: i, margin: out.min_margin, floor });
            }
            let check = |y: Tangent, v: f64, out: &mut BoundarySamples| -> Result<()> {
                let p = solve_implicit(df, i, &y, 0)?;
                out.interpolation_error = out.interpolation_error.max((p.value - v).abs());
                Ok(())
            };
            if dim == 2 {
                for k in 0..cells {
                    let (a, b) = (&solved[k], &solved[k + 1]);
                    for s in 0..DENSIFY {
                        let u = s as f64 / DENSIFY as f64;
                        let (v, _) = hermite3(a.value, a.grad.x, b.value, b.grad.x, coarse, u);
                        out.points.push(frame.to_world(&Tangent::new(at(k) + u * coarse, 0.0), v));
                    }
                    if k % 5 == 2 {
                        let (v, _) = hermite3(a.value, a.grad.x, b.value, b.grad.x, coarse, 0.5);
                        check(Tangent::new(at(k) + 0.5 * coarse, 0.0), v, &mut out)?;
                    }
                }
                let last = &solved[cells];
                out.points.push(frame.to_world(&Tangent::new(window, 0.0), last.value));
            } else {
                let w = cells + 1;
                let corner = |k: usize, j: usize| {
                    let p = &solved[j * w + k];
                    let h = p.hess.unwrap_or_else(crate::geometry::frame::TangentMatrix::zeros);
                    [p.value, p.grad.x, p.grad.y, h[(0, 1)]]
                };
                for j in 0..cells {
                    for k in 0..cells {
                        let c = [corner(k, j), corner(k + 1, j), corner(k, j + 1), corner(k + 1, j + 1)];
                        let (s_max, t_max) = (
                            if k + 1 == cells { DENSIFY + 1 } else { DENSIFY },
                            if j + 1 == cells { DENSIFY + 1 } else { DENSIFY },
                        );
                        for t in 0..t_max {
                            for s in 0..s_max {
                                let (u, v) = (s as f64 / DENSIFY as f64, t as f64 / DENSIFY as f64);
                                let (val, _, _) = hermite_bicubic(&c, coarse, coarse, u, v);
                                let y = Tangent::new(at(k) + u * coarse, at(j) + v * coarse);
                                out.points.push(frame.to_world(&y, val));
                            }
                        }
                        if (j * cells + k) % 5 == 2 {
                            let (val, _, _) = hermite_bicubic(&c, coarse, coarse, 0.5, 0.5);
                            check(Tangent::new(at(k) + 0.5 * coarse, at(j) + 0.5 * coarse), val, &mut out)?;
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut all = BoundarySamples { spacing: fine, min_margin: f64::INFINITY, ..Default::default() };
    for r in per {
        let s = r?;
        all.points.extend(s.points);
        all.interpolation_error = all.interpolation_error.max(s.interpolation_error);
        all.max_gradient = all.max_gradient.max(s.max_gradient);
        all.min_margin = all.min_margin.min(s.min_margin);
    }
    let half_cell = if dim == 2 { 0.5 * fine } else { fine / 2f64.sqrt() };
    all.cover_radius = half_cell * (1.0 + all.max_gradient * all.max_gradient).sqrt();
    Ok(all)
}

/// Hausdorff distance between an implicit boundary and the exact boundary of
/// the model. Distances from the implicit samples use the exact signed
/// distance; the other direction uses boundary samples at `omega_spacing`.
pub fn hausdorff_to_domain(model: &dyn BoundaryModel, samples: &BoundarySamples, omega_spacing: f64) -> Result<Estimate> {
    if samples.points.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let dim = model.dim();
    let forward = samples.points.par_iter().map(|p| model.depth(p).abs()).reduce(|| 0.0, f64::max);
    let omega: Vec<Point> = model.sample_boundary(omega_spacing).into_iter().map(|(p, _)| p).collect();
    if omega.is_empty() {
        return Err(Error::InvalidParameter("empty sample set".into()));
    }
    let index = PointIndex::new(&samples.points, dim);
    let backward = omega.par_iter().map(|q| index.nearest(q).1).reduce(|| 0.0, f64::max);
    let omega_cover = if dim == 2 { 0.5 * omega_spacing } else { omega_spacing };
    Ok(Estimate {
        value: forward.max(backward),
        error: samples.cover_radius.max(omega_cover) + samples.interpolation_error,
    })
}

/// Bound 12 L sqrt(1+L^2) / m on the sum of the two Hausdorff distances.
pub fn hausdorff_bound(lipschitz: f64, m: f64) -> f64 {
    2.0 * sup_bound(lipschitz, m)
}

/// Measures of the two gaps Omega_m \ Omega and Omega \ omega_m.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VolumeGap {
    pub outer: Estimate,
    pub inner: Estimate,
    /// Crossings of the boundary where the sandwich ordering failed.
    pub violations: usize,
    pub spacing: f64,
    pub columns: usize,
}

/// |Omega_m \ Omega| and |Omega \ omega_m| by integration along grid columns
/// parallel to the last axis, with columns spaced `spacing` apart. Along each
/// column the boundary crossings are found by sphere tracing the signed
/// distance; from every crossing the column is followed across the gap until
/// the approximating boundary is met. The error is the difference to the
/// estimate from every other column.
pub fn lebesgue_gap(ap: &Approximation, spacing: f64) -> Result<VolumeGap> {
    let atlas = &ap.atlas;
    let model = atlas.model.as_ref();
    let dim = atlas.dim;
    let l = atlas.lipschitz();
    if !(spacing > 0.0) || spacing > 3.0 * l / ap.m {
        return Err(Error::InvalidParameter(format!(
            "volume spacing {spacing} is coarser than the band width 3L/m = {}",
            3.0 * l / ap.m
        )));
    }
    let reach = 2.0 * sup_bound(l, ap.m);
    let (lo, hi) = model.bbox();
    let lo = lo.map(|v| v - reach);
    let hi = hi.map(|v| v + reach);
    let axis = dim - 1;
    let count = |a: usize| ((hi[a] - lo[a]) / spacing).ceil() as usize;
    let (nx, ny) = (count(0), if dim == 3 { count(1) } else { 1 });
    let columns: Vec<(usize, usize)> = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).collect();
    let per: Vec<(f64, f64, usize)> = columns
        .par_iter()
        .map(|&(i, j)| {
            let mut base = Point::zeros();
            base[0] = lo[0] + (i as f64 + 0.5) * spacing;
            if dim == 3 {
                base[1] = lo[1] + (j as f64 + 0.5) * spacing;
            }
            let at = |t: f64| {
                let mut x = base;
                x[axis] = t;
                x
            };
            let mut gap = (0.0, 0.0, 0);
            for (c, exit) in crossings(model, &at, lo[axis], hi[axis], spacing) {
                // exit: depth decreases along +t
                let out_dir = if exit { 1.0 } else { -1.0 };
                for side in [Side::Outer, Side::Inner] {
                    let f = |t: f64| -> f64 {
                        let x = at(t);
                        match ap.side(side).eval(&x) {
                            Ok(v) => v,
                            Err(_) => -model.depth(&x),
                        }
                    };
                    // the approximating boundary lies outward (outer) or inward (inner)
                    let dir = match side {
                        Side::Outer => out_dir,
                        Side::Inner => -out_dir,
                    };
                    let start = f(c);
                    let ordered = match side {
                        Side::Outer => start < 0.0,
                        Side::Inner => start > 0.0,
                    };
                    if !ordered {
                        gap.2 += 1;
                        continue;
                    }
                    let len = follow(&f, c, dir, reach, start > 0.0);
                    match side {
                        Side::Outer => gap.0 += len,
                        Side::Inner => gap.1 += len,
                    }
                }
            }
            gap
        })
        .collect();
    let cell = spacing.powi(dim as i32 - 1);
    let mut fine = (0.0, 0.0);
    let mut coarse = (0.0, 0.0);
    let mut violations = 0;
    for (&(i, j), g) in columns.iter().zip(&per) {
        fine.0 += g.0 * cell;
        fine.1 += g.1 * cell;
        violations += g.2;
        if i % 2 == 0 && j % 2 == 0 {
            let c2 = cell * 2f64.powi(dim as i32 - 1);
            coarse.0 += g.0 * c2;
            coarse.1 += g.1 * c2;
        }
    }
    Ok(VolumeGap {
        outer: Estimate { value: fine.0, error: (fine.0 - coarse.0).abs() },
        inner: Estimate { value: fine.1, error: (fine.1 - coarse.1).abs() },
        violations,
        spacing,
        columns: columns.len(),
    })
}

/// Boundary crossings of the column t -> at(t) on [a, b]; the flag is true when
/// the column leaves the domain there.
fn crossings(model: &dyn BoundaryModel, at: &impl Fn(f64) -> Point, a: f64, b: f64, scale: f64) -> Vec<(f64, bool)> {
    let min_step = 1e-3 * scale;
    let mut out = Vec::new();
    let mut t = a;
    let mut d = model.depth(&at(t));
    while t < b {
        let step = (0.9 * d.abs()).max(min_step);
        let t1 = (t + step).min(b);
        let d1 = model.depth(&at(t1));
        if (d > 0.0) != (d1 > 0.0) {
            // orient so that the function is negative at the lower end
            let exit = d > 0.0;
            let g = |s: f64, _: bool| {
                let v = model.depth(&at(s));
                (if exit { v } else { -v }, f64::NAN)
            };
            let r = bracketed_root(g, t, t1, 1e-14 * scale.max(1.0), 1e-14 * scale.max(1.0));
            out.push((r, exit));
        }
        t = t1;
        d = d1;
    }
    out
}

/// Distance along the column from c in direction dir until f changes sign
/// (f starts positive when `positive` is true), capped at 4 * reach.
fn follow(f: &impl Fn(f64) -> f64, c: f64, dir: f64, reach: f64, positive: bool) -> f64 {
    let step = reach / 8.0;
    let mut s0 = 0.0;
    let mut s = step;
    while s <= 4.0 * reach {
        let v = f(c + dir * s);
        if (v > 0.0) != positive {
            let g = |u: f64, _: bool| {
                let w = f(c + dir * u);
                (if positive { -w } else { w }, f64::NAN)
            };
            return bracketed_root(g, s0, s, 1e-13 * reach, 1e-13 * reach);
        }
        s0 = s;
        s += step;
    }
    4.0 * reach
}

/// Largest spread of the points over many directions: 720 in the plane,
/// 4000 on a Fibonacci sphere in three dimensions.
pub fn diameter(points: &[Point], dim: usize) -> f64 {
    let dirs: Vec<Point> = if dim == 2 {
        (0..720)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / 720.0;
                Point::new(a.cos(), a.sin(), 0.0)
            })
            .collect()
    } else {
        let n = 4000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        (0..n)
            .map(|k| {
                let z = 1.0 - (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * k as f64;
                Point::new(r * a.cos(), r * a.sin(), z)
            })
            .collect()
    };
    dirs.par_iter()
        .map(|u| {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for p in points {
                let s = p.dot(u);
                lo = lo.min(s);
                hi = hi.max(s);
            }
            hi - lo
        })
        .reduce(|| 0.0, f64::max)
}

/// ||psi - phi|| in W^{k,p} over the midpoint nodes of an extracted chart:
/// (sum of ||D^a (psi - phi)||_p^p over |a| <= k)^{1/p}, derivatives of psi from
/// the implicit formulas.
pub fn sobolev_error(chart: &ExtractedChart, k: usize, p: f64) -> Result<f64> {
    if !(1..=2).contains(&k) || !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("W^{{{k},{p}}} is not supported")));
    }
    if chart.values.len() != chart.phi.len() || chart.values.is_empty() {
        return Err(Error::InvalidParameter("grid mismatch between psi and phi".into()));
    }
    let cell = chart.spacing.powi(chart.dim as i32 - 1);
    let mut s = 0.0;
    for n in 0..chart.values.len() {
        s += (chart.values[n] - chart.phi[n]).abs().powf(p);
        s += (chart.grads[n] - chart.phi_grads[n]).norm().powf(p);
        if k == 2 {
            let h = chart.phi_hess[n].ok_or_else(|| {
                Error::Unsupported(format!("chart {} has no second derivatives", chart.chart))
            })?;
            s += (chart.hess[n] - h).norm().powf(p);
        }
    }
    Ok((s * cell).powf(1.0 / p))
}

/// Measured Lipschitz characteristic of the extracted charts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCharacteristic {
    /// max |grad psi| over charts and nodes.
    pub lipschitz: f64,
    /// Common window radius on which every chart was extracted.
    pub radius: f64,
}

pub fn measure_characteristic(charts: &[ExtractedChart]) -> MeasuredCharacteristic {
    MeasuredCharacteristic {
        lipschitz: charts.iter().map(|c| c.max_gradient()).fold(0.0, f64::max),
        radius: charts.iter().map(|c| c.radius).fold(f64::INFINITY, f64::min),
    }
}

/// Midpoint extraction of every chart over B'_{R - 2 eps0} with `cells` cells per axis.
pub fn extract_midpoints(df: &DefiningFunction, cells: usize) -> Result<Vec<ExtractedChart>> {
    let r = df.atlas.radius() - 2.0 * df.atlas.epsilon0;
    let h = 2.0 * r / cells as f64;
    let nodes = midpoint_grid(df.dim(), r, cells);
    let per: Vec<Result<ExtractedChart>> =
        (0..df.atlas.len()).into_par_iter().map(|i| extract_nodes(df, i, nodes.clone(), r, h)).collect();
    per.into_iter().collect()
}

/// Constants the bounds are instantiated with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnedConstants {
    /// d_{Omega_m} <= c d_Omega.
    pub diameter_factor: f64,
    /// L_m <= c (1 + L^2).
    pub lipschitz_factor: f64,
    /// R_m >= R / (c (1 + L^2)).
    pub radius_factor: f64,
    /// dist_H sum <= c L sqrt(1+L^2) / m.
    pub hausdorff_factor: f64,
    /// |psi_m - phi| <= c L sqrt(1+L^2) / m.
    pub sup_factor: f64,
}

impl Default for PinnedConstants {
    fn default() -> Self {
        Self { diameter_factor: 2.0, lipschitz_factor: 8.0, radius_factor: 8.0, hausdorff_factor: 12.0, sup_factor: 6.0 }
    }
}

/// Resolutions of the metric computations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    /// Midpoint cells per axis across the Sobolev window.
    pub chart_res: usize,
    /// Volume columns per band width 3L/m.
    pub vol_res: f64,
    /// Boundary samples per 1/m along each chart.
    pub hausdorff_res: f64,
    /// (k, p) pairs of the Sobolev errors.
    pub sobolev: Vec<(usize, f64)>,
}

impl MetricsConfig {
    pub fn defaults(dim: usize) -> Self {
        Self {
            chart_res: if dim == 2 { 256 } else { 24 },
            vol_res: 2.0,
            hausdorff_res: 4.0,
            sobolev: vec![(1, 2.0), (1, 4.0), (2, 1.0), (2, 2.0)],
        }
    }
}

/// Sobolev errors of one (k, p) pair; the maximum over charts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SobolevEntry {
    pub k: usize,
    pub p: f64,
    pub outer: Option<f64>,
    pub inner: Option<f64>,
}

/// Measurements at one m.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub m: f64,
    pub below_m0: bool,
    /// "ok" or the first failure.
    pub status: String,
    pub hausdorff_outer: Option<Estimate>,
    pub hausdorff_inner: Option<Estimate>,
    pub hausdorff: Option<f64>,
    pub hausdorff_error: Option<f64>,
    pub hausdorff_bound: f64,
    pub volume: Option<VolumeGap>,
    pub sup_error: Option<f64>,
    pub sup_bound: f64,
    pub min_margin: Option<f64>,
    pub margin_floor: f64,
    pub sobolev: Vec<SobolevEntry>,
    pub diameter_outer: Option<f64>,
    pub diameter_inner: Option<f64>,
    pub diameter_bound: f64,
    pub measured: Option<MeasuredCharacteristic>,
    pub lipschitz_bound: f64,
    pub radius_bound: f64,
}

/// Report over an m schedule.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub shape: String,
    pub dim: usize,
    pub characteristic: LipschitzCharacteristic,
    pub epsilon0: f64,
    pub charts: usize,
    pub m0: Option<f64>,
    pub m0_log: M0Report,
    pub config: MetricsConfig,
    pub constants: PinnedConstants,
    pub rows: Vec<ConvergenceRow>,
}

/// Computes one row. Failures are recorded in `status`, not returned.
pub fn convergence_row(
    atlas: &Arc<DomainAtlas>,
    bumps: &Arc<BumpFamily>,
    m: f64,
    m0: Option<f64>,
    config: &MetricsConfig,
    constants: &PinnedConstants,
) -> ConvergenceRow {
    let ch = atlas.characteristic;
    let (l, w) = (ch.lipschitz, (1.0 + ch.lipschitz * ch.lipschitz));
    let mut row = ConvergenceRow {
        m,
        below_m0: m0.map_or(true, |m0| m < m0),
        status: "ok".into(),
        hausdorff_bound: constants.hausdorff_factor * l * w.sqrt() / m,
        sup_bound: constants.sup_factor * l * w.sqrt() / m,
        margin_floor: margin_floor(l),
        diameter_bound: constants.diameter_factor * ch.diameter,
        lipschitz_bound: constants.lipschitz_factor * w,
        radius_bound: ch.radius / (constants.radius_factor * w),
        sobolev: config.sobolev.iter().map(|&(k, p)| SobolevEntry { k, p, outer: None, inner: None }).collect(),
        ..Default::default()
    };
    let ap = match Approximation::new(atlas.clone(), bumps.clone(), m) {
        Ok(ap) => ap,
        Err(e) => {
            row.status = e.to_string();
            return row;
        }
    };
    let fail = |row: &mut ConvergenceRow, e: Error| {
        if row.status == "ok" {
            row.status = e.to_string();
        }
    };
    // Hausdorff and diameters
    let window = atlas.radius() / 4.0;
    let target = 1.0 / (config.hausdorff_res * m);
    let mut h_sum = Some((0.0, 0.0f64));
    for side in [Side::Outer, Side::Inner] {
        let est = implicit_boundary_samples(ap.side(side), window, target).and_then(|s| {
            let d = diameter(&s.points, atlas.dim);
            hausdorff_to_domain(atlas.model.as_ref(), &s, target / 4.0).map(|h| (h, d))
        });
        match est {
            Ok((h, d)) => {
                h_sum = h_sum.map(|(v, e)| (v + h.value, e.max(h.error)));
                match side {
                    Side::Outer => {
                        row.hausdorff_outer = Some(h);
                        row.diameter_outer = Some(d);
                    }
                    Side::Inner => {
                        row.hausdorff_inner = Some(h);
                        row.diameter_inner = Some(d);
                    }
                }
            }
            Err(e) => {
                h_sum = None;
                fail(&mut row, e);
            }
        }
    }
    if let Some((v, e)) = h_sum {
        row.hausdorff = Some(v);
        row.hausdorff_error = Some(2.0 * e);
    }
    // volume gaps
    match lebesgue_gap(&ap, 3.0 * l / (m * config.vol_res.max(1.0))) {
        Ok(v) => row.volume = Some(v),
        Err(e) => fail(&mut row, e),
    }
    // chart errors
    let mut sup: Option<f64> = Some(0.0);
    let mut margin: Option<f64> = Some(f64::INFINITY);
    let mut measured: Option<MeasuredCharacteristic> = None;
    for side in [Side::Outer, Side::Inner] {
        match extract_midpoints(ap.side(side), config.chart_res) {
            Ok(charts) => {
                sup = sup.map(|s| charts.iter().map(|c| c.sup_error()).fold(s, f64::max));
                margin = margin.map(|s| charts.iter().map(|c| c.vertical_margin).fold(s, f64::min));
                let mc = measure_characteristic(&charts);
                measured = Some(match measured {
                    None => mc,
                    Some(a) => MeasuredCharacteristic {
                        lipschitz: a.lipschitz.max(mc.lipschitz),
                        radius: a.radius.min(mc.radius),
                    },
                });
                for entry in row.sobolev.iter_mut() {
                    let v: Result<Vec<f64>> = charts.iter().map(|c| sobolev_error(c, entry.k, entry.p)).collect();
                    let v = v.ok().map(|v| v.into_iter().fold(0.0, f64::max));
                    match side {
                        Side::Outer => entry.outer = v,
                        Side::Inner => entry.inner = v,
                    }
                }
            }
            Err(e) => {
                sup = None;
                margin = None;
                fail(&mut row, e);
            }
        }
    }
    row.sup_error = sup;
    row.min_margin = margin;
    row.measured = measured;
    row
}

/// Runs [`convergence_row`] for every m of the schedule.
pub fn convergence_report(
    atlas: &Arc<DomainAtlas>,
    bumps: &Arc<BumpFamily>,
    schedule: &[f64],
    m0_log: M0Report,
    config: &MetricsConfig,
    constants: &PinnedConstants,
) -> ConvergenceReport {
    let rows = schedule.iter().map(|&m| convergence_row(atlas, bumps, m, m0_log.m0, config, constants)).collect();
    ConvergenceReport {
        shape: atlas.name.clone(),
        dim: atlas.dim,
        characteristic: atlas.characteristic,
        epsilon0: atlas.epsilon0,
        charts: atlas.len(),
        m0: m0_log.m0,
        m0_log,
        config: config.clone(),
        constants: constants.clone(),
        rows,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ConvergenceReport {
    /// One row per m.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "m",
            "below_m0",
            "status",
            "hausdorff",
            "hausdorff_error",
            "hausdorff_bound",
            "hausdorff_outer",
            "hausdorff_inner",
            "lebesgue_outer",
            "lebesgue_outer_error",
            "lebesgue_inner",
            "lebesgue_inner_error",
            "sup_error",
            "sup_bound",
            "min_margin",
            "margin_floor",
            "diameter_outer",
            "diameter_inner",
            "diameter_bound",
            "lipschitz_m",
            "lipschitz_bound",
            "radius_m",
            "radius_bound",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for s in &self.config.sobolev {
            header.push(format!("w{}_{}_outer", s.0, s.1));
            header.push(format!("w{}_{}_inner", s.0, s.1));
        }
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.m.to_string(),
                r.below_m0.to_string(),
                r.status.clone(),
                opt(r.hausdorff),
                opt(r.hausdorff_error),
                r.hausdorff_bound.to_string(),
                opt(r.hausdorff_outer.map(|h| h.value)),
                opt(r.hausdorff_inner.map(|h| h.value)),
                opt(r.volume.map(|v| v.outer.value)),
                opt(r.volume.map(|v| v.outer.error)),
                opt(r.volume.map(|v| v.inner.value)),
                opt(r.volume.map(|v| v.inner.error)),
                opt(r.sup_error),
                r.sup_bound.to_string(),
                opt(r.min_margin),
                r.margin_floor.to_string(),
                opt(r.diameter_outer),
                opt(r.diameter_inner),
                r.diameter_bound.to_string(),
                opt(r.measured.map(|c| c.lipschitz)),
                r.lipschitz_bound.to_string(),
                opt(r.measured.map(|c| c.radius)),
                r.radius_bound.to_string(),
            ];
            for s in &r.sobolev {
                rec.push(opt(s.outer));
                rec.push(opt(s.inner));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::atlas::make_shape;
    use crate::geometry::shapes::ShapeParams;

    fn circle(r: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Point::new(r * a.cos(), r * a.sin(), 0.0)
            })
            .collect()
    }

    #[test]
    fn hausdorff_of_identical_and_concentric_samplings() {
        let a = circle(1.0, 2000);
        assert_eq!(hausdorff_boundaries(&a, &a, 2, 0.0).unwrap().value, 0.0);
        let delta = 0.05;
        let b = circle(1.0 + delta, 2000);
        // chord sag of the coarser sampling bounds the sampling error
        let h = hausdorff_boundaries(&a, &b, 2, 0.0).unwrap().value;
        let spacing = 2.0 * std::f64::consts::PI * 1.05 / 2000.0;
        assert!((h - delta).abs() <= spacing, "{h}");
        assert!(hausdorff_boundaries(&a, &[], 2, 0.0).is_err());
    }

    #[test]
    fn diameters_of_simple_sets() {
        let d = diameter(&circle(2.0, 720), 2);
        assert!((d - 4.0).abs() < 1e-9);
        let cube: Vec<Point> = (0..8)
            .map(|k| Point::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64))
            .collect();
        let d = diameter(&cube, 3);
        assert!(d <= 3f64.sqrt() + 1e-12 && d > 3f64.sqrt() * 0.999);
    }

    fn disk() -> (Arc<DomainAtlas>, Arc<BumpFamily>) {
        let atlas = Arc::new(make_shape("disk", &ShapeParams::default().with("radius", 4.0).with("lipschitz", 0.2)).unwrap());
        let bumps = Arc::new(BumpFamily::build_with_spacing(&atlas, atlas.radius() / 256.0).unwrap());
        (atlas, bumps)
    }

    #[test]
    fn disk_gaps_lie_in_the_band() {
        let (atlas, bumps) = disk();
        let m = 64.0;
        let l = atlas.lipschitz();
        let ap = Approximation::new(atlas.clone(), bumps, m).unwrap();
        let gap = lebesgue_gap(&ap, 3.0 * l / (2.0 * m)).unwrap();
        assert_eq!(gap.violations, 0);
        // the gaps are normal offsets between L/m and 3L/m (up to the slope factor)
        let perimeter = 2.0 * std::f64::consts::PI * 4.0;
        let w = (1.0 + l * l).sqrt();
        for g in [gap.outer, gap.inner] {
            assert!(g.value >= perimeter * l / m / w * 0.95, "{:?}", g);
            assert!(g.value <= perimeter * 3.0 * l / m * 1.05, "{:?}", g);
            assert!(g.error < 0.05 * g.value);
        }
        assert!(lebesgue_gap(&ap, 1.0).is_err());
    }

    #[test]
    fn disk_hausdorff_within_bound() {
        let (atlas, bumps) = disk();
        let m = 64.0;
        let ap = Approximation::new(atlas.clone(), bumps, m).unwrap();
        let target = 1.0 / (4.0 * m);
        let s = implicit_boundary_samples(&ap.outer, atlas.radius() / 4.0, target).unwrap();
        assert!(s.spacing <= target);
        assert!(s.interpolation_error < 1e-6);
        let h = hausdorff_to_domain(atlas.model.as_ref(), &s, target / 4.0).unwrap();
        assert!(h.value > 0.0 && h.value <= sup_bound(atlas.lipschitz(), m) + h.error, "{:?}", h);
        // concentric offsets agree with the generic symmetric distance
        let omega: Vec<Point> = atlas.model.sample_boundary(target).into_iter().map(|(p, _)| p).collect();
        let g = hausdorff_boundaries(&s.points, &omega, 2, 0.0).unwrap();
        assert!((g.value - h.value).abs() <= h.error + target);
    }

    #[test]
    fn sobolev_error_vanishes_for_identical_charts() {
        let (atlas, bumps) = disk();
        let ap = Approximation::new(atlas.clone(), bumps, 32.0).unwrap();
        let r = atlas.radius() / 2.0;
        let mut c = extract_nodes(&ap.outer, 0, midpoint_grid(2, r, 16), r, r / 8.0).unwrap();
        assert!(sobolev_error(&c, 2, 2.0).unwrap() > 0.0);
        c.values = c.phi.clone();
        c.grads = c.phi_grads.clone();
        c.hess = c.phi_hess.iter().map(|h| h.unwrap()).collect();
        for (k, p) in [(1, 2.0), (1, 4.0), (2, 1.0), (2, 2.0)] {
            assert_eq!(sobolev_error(&c, k, p).unwrap(), 0.0);
        }
        assert!(sobolev_error(&c, 3, 2.0).is_err());
        assert!(sobolev_error(&c, 1, 0.5).is_err());
    }
}
