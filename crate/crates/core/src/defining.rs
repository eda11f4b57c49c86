//! Boundary defining functions F, F_m and F~_m, point classification and
//! extraction of the implicit charts of the approximating boundaries.

use std::sync::{Arc, OnceLock};

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::atlas::DomainAtlas;
use crate::geometry::chart::{implicit_derivatives, tangent_grid, ChartJet};
use crate::geometry::frame::{join, Point, Tangent, TangentMatrix};
use crate::mollify::{MollifiedChart, Side};
use crate::numeric::bracketed_root;
use crate::partition::{BumpFamily, BumpJet};

/// Which defining function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Exact,
    Outer,
    Inner,
}

impl Variant {
    pub fn side(self) -> Option<Side> {
        match self {
            Variant::Exact => None,
            Variant::Outer => Some(Side::Outer),
            Variant::Inner => Some(Side::Inner),
        }
    }
}

/// Value, gradient and optional Hessian of a defining function in world coordinates.
#[derive(Clone, Copy, Debug)]
pub struct FieldJet {
    pub value: f64,
    pub grad: Point,
    pub hess: Option<Matrix3<f64>>,
}

/// F = sum_j f^j xi_j - c0 xi_0 for one of the three chart families.
///
/// The interior weight is c0 = 1 for F, 1 + 2L/m for F_m and 1 - 2L/m for
/// F~_m, which keeps the offsets F - F_m and F~_m - F inside [L/m, 3L/m]
/// also where the interior bump is active.
pub struct DefiningFunction {
    pub atlas: Arc<DomainAtlas>,
    pub bumps: Arc<BumpFamily>,
    pub variant: Variant,
    pub m: Option<f64>,
    mollified: Vec<OnceLock<MollifiedChart>>,
}

impl std::fmt::Debug for DefiningFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DefiningFunction")
            .field("variant", &self.variant)
            .field("m", &self.m)
            .field("charts", &self.atlas.len())
            .finish()
    }
}

impl DefiningFunction {
    pub fn exact(atlas: Arc<DomainAtlas>, bumps: Arc<BumpFamily>) -> Self {
        Self { atlas, bumps, variant: Variant::Exact, m: None, mollified: Vec::new() }
    }

    pub fn regularized(atlas: Arc<DomainAtlas>, bumps: Arc<BumpFamily>, variant: Variant, m: f64) -> Result<Self> {
        if variant == Variant::Exact {
            return Self::exact(atlas, bumps).into_ok();
        }
        if !(m >= 1.0) {
            return Err(Error::InvalidParameter(format!("m must be >= 1, got {m}")));
        }
        if 1.0 / m >= atlas.radius() - bumps.chart_support() {
            return Err(Error::InvalidParameter(format!(
                "m = {m} too small: 1/m must stay below R - 7R/32"
            )));
        }
        let mollified = (0..atlas.len()).map(|_| OnceLock::new()).collect();
        Ok(Self { atlas, bumps, variant, m: Some(m), mollified })
    }

    fn into_ok(self) -> Result<Self> {
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.atlas.dim
    }

    /// Interior weight c0.
    pub fn interior_weight(&self) -> f64 {
        let l = self.atlas.lipschitz();
        match (self.variant, self.m) {
            (Variant::Outer, Some(m)) => 1.0 + 2.0 * l / m,
            (Variant::Inner, Some(m)) => 1.0 - 2.0 * l / m,
            _ => 1.0,
        }
    }

    /// The mollified chart j, built on first use.
    pub fn mollified(&self, j: usize) -> Option<&MollifiedChart> {
        let m = self.m?;
        Some(self.mollified[j].get_or_init(|| MollifiedChart::new(self.atlas.charts[j].clone(), m)))
    }

    /// The chart function used for term j at tangential point y.
    pub fn chart_jet(&self, j: usize, y: &Tangent, order: usize) -> Result<ChartJet> {
        let chart = &self.atlas.charts[j];
        match self.variant.side() {
            None => {
                if y.norm() > chart.radius {
                    return Err(Error::Geometry { chart: j, message: format!("|z'| = {:.4} > R", y.norm()) });
                }
                Ok(if order == 0 {
                    ChartJet { value: chart.eval(y), grad: Tangent::zeros(), hess: None }
                } else {
                    chart.jet(y, order)
                })
            }
            Some(side) => {
                let mc = self.mollified(j).expect("regularized variant");
                if y.norm() > mc.domain_radius() {
                    return Err(Error::Geometry {
                        chart: j,
                        message: format!("|z'| = {:.4} exceeds R - 1/m = {:.4}", y.norm(), mc.domain_radius()),
                    });
                }
                Ok(if order == 0 {
                    ChartJet { value: mc.side_value(side, y), grad: Tangent::zeros(), hess: None }
                } else {
                    mc.side_jet(side, y, order)
                })
            }
        }
    }

    /// f^j(x) = z_n - phi^j(z') with world gradient and Hessian.
    pub fn chart_term(&self, j: usize, x: &Point, order: usize) -> Result<FieldJet> {
        let frame = &self.atlas.charts[j].frame;
        let dim = self.dim();
        let (y, yn) = frame.to_local(x);
        let jet = self.chart_jet(j, &y, order)?;
        let value = yn - jet.value;
        if order == 0 {
            return Ok(FieldJet { value, grad: Point::zeros(), hess: None });
        }
        let rt = frame.rotation().transpose();
        let grad = rt * join(&(-jet.grad), 1.0, dim);
        let hess = jet.hess.filter(|_| order >= 2).map(|h| {
            let mut loc = Matrix3::zeros();
            for a in 0..dim - 1 {
                for b in 0..dim - 1 {
                    loc[(a, b)] = -h[(a, b)];
                }
            }
            rt * loc * rt.transpose()
        });
        Ok(FieldJet { value, grad, hess })
    }

    /// F(x) with derivatives up to `order` (0, 1 or 2).
    pub fn eval_jet(&self, x: &Point, order: usize) -> Result<FieldJet> {
        let b = self.bumps.values(x);
        let s = b.sum.value;
        if s <= 0.0 {
            return Err(Error::OutsideW);
        }
        let c0 = self.interior_weight();
        let mut num = BumpJet { value: -c0 * b.interior.value, grad: -c0 * b.interior.grad, hess: -c0 * b.interior.hess };
        for (j, eta) in &b.charts {
            let f = self.chart_term(*j, x, order)?;
            num.value += f.value * eta.value;
            if order >= 1 {
                num.grad += f.grad * eta.value + f.value * eta.grad;
            }
            if order >= 2 {
                let fh = f.hess.unwrap_or_else(Matrix3::zeros);
                num.hess += fh * eta.value
                    + f.grad * eta.grad.transpose()
                    + eta.grad * f.grad.transpose()
                    + f.value * eta.hess;
            }
        }
        let value = num.value / s;
        if order == 0 {
            return Ok(FieldJet { value, grad: Point::zeros(), hess: None });
        }
        let grad = (num.grad - value * b.sum.grad) / s;
        let hess = (order >= 2).then(|| {
            (num.hess - grad * b.sum.grad.transpose() - b.sum.grad * grad.transpose() - value * b.sum.hess) / s
        });
        Ok(FieldJet { value, grad, hess })
    }

    pub fn eval(&self, x: &Point) -> Result<f64> {
        Ok(self.eval_jet(x, 0)?.value)
    }
}

/// Position of a point relative to omega_m, Omega and Omega_m.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    /// In omega_m.
    Inner,
    /// In Omega but not in the closure of omega_m.
    OmegaMinusInner,
    /// In Omega_m but not in the closure of Omega.
    OuterMinusOmega,
    /// Outside the closure of Omega_m.
    Outside,
    /// On one of the three zero sets.
    OnBoundary,
}

/// Region plus whether the point lies in the band F_m < 0 < F~_m.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classification {
    pub region: Region,
    pub band: bool,
}

/// The triple (F~_m, F, F_m) for one m.
#[derive(Debug)]
pub struct Approximation {
    pub atlas: Arc<DomainAtlas>,
    pub bumps: Arc<BumpFamily>,
    pub m: f64,
    pub exact: DefiningFunction,
    pub outer: DefiningFunction,
    pub inner: DefiningFunction,
}

/// Values of the three defining functions at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triple {
    pub inner: f64,
    pub exact: f64,
    pub outer: f64,
}

impl Approximation {
    pub fn new(atlas: Arc<DomainAtlas>, bumps: Arc<BumpFamily>, m: f64) -> Result<Self> {
        Ok(Self {
            exact: DefiningFunction::exact(atlas.clone(), bumps.clone()),
            outer: DefiningFunction::regularized(atlas.clone(), bumps.clone(), Variant::Outer, m)?,
            inner: DefiningFunction::regularized(atlas.clone(), bumps.clone(), Variant::Inner, m)?,
            atlas,
            bumps,
            m,
        })
    }

    pub fn side(&self, side: Side) -> &DefiningFunction {
        match side {
            Side::Outer => &self.outer,
            Side::Inner => &self.inner,
        }
    }

    pub fn triple(&self, x: &Point) -> Result<Triple> {
        Ok(Triple { inner: self.inner.eval(x)?, exact: self.exact.eval(x)?, outer: self.outer.eval(x)? })
    }

    /// Classifies x. Points outside W are classified by the sign of the depth.
    pub fn classify(&self, x: &Point) -> Classification {
        match self.triple(x) {
            Ok(t) => {
                let band = t.outer < 0.0 && t.inner > 0.0;
                let region = if t.inner < 0.0 {
                    Region::Inner
                } else if t.exact < 0.0 && t.inner > 0.0 {
                    Region::OmegaMinusInner
                } else if t.outer < 0.0 && t.exact > 0.0 {
                    Region::OuterMinusOmega
                } else if t.outer > 0.0 {
                    Region::Outside
                } else {
                    Region::OnBoundary
                };
                Classification { region, band }
            }
            Err(_) => {
                let region = if self.atlas.model.depth(x) > 0.0 { Region::Inner } else { Region::Outside };
                Classification { region, band: false }
            }
        }
    }

    /// Membership in Omega_m (outer) or omega_m (inner) by sign.
    pub fn contains(&self, side: Side, x: &Point) -> bool {
        match self.side(side).eval(x) {
            Ok(v) => v < 0.0,
            Err(_) => self.atlas.model.depth(x) > 0.0,
        }
    }
}

/// Upper bound 6 L sqrt(1+L^2) / m on |psi_m - phi|.
pub fn sup_bound(lipschitz: f64, m: f64) -> f64 {
    6.0 * lipschitz * (1.0 + lipschitz * lipschitz).sqrt() / m
}

/// Lower bound 1/(2 sqrt(1+L^2)) on the vertical derivative along the zero set.
pub fn margin_floor(lipschitz: f64) -> f64 {
    0.5 / (1.0 + lipschitz * lipschitz).sqrt()
}

/// Implicit chart value and derivatives at one tangential point.
#[derive(Clone, Copy, Debug)]
pub struct ImplicitPoint {
    pub value: f64,
    pub grad: Tangent,
    pub hess: Option<TangentMatrix>,
    /// dF/dy_n at the root.
    pub margin: f64,
}

/// Solves F_m(T_i^{-1}(y', t)) = 0 for t near phi^i(y').
pub fn solve_implicit(df: &DefiningFunction, i: usize, y: &Tangent, order: usize) -> Result<ImplicitPoint> {
    let side = df.variant.side().ok_or_else(|| Error::InvalidParameter("extraction needs F_m or F~_m".into()))?;
    let m = df.m.expect("regularized");
    let chart = &df.atlas.charts[i];
    let ell = chart.ell();
    let dim = df.dim();
    let frame = &chart.frame;
    let vert = frame.vertical();
    let phi = chart.eval(y);
    let reach = 1.05 * sup_bound(chart.lipschitz, m);
    let (lo, hi) = match side {
        Side::Outer => (phi, (phi + reach).min(ell)),
        Side::Inner => ((phi - reach).max(-ell), phi),
    };
    let mut failure: Option<Error> = None;
    let g = |t: f64| -> Result<FieldJet> { df.eval_jet(&frame.to_world(y, t), 1) };
    let f_lo = g(lo)?.value;
    let f_hi = g(hi)?.value;
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::BelowM0(format!(
            "chart {i}, m = {m}: no sign change in [{lo:.5}, {hi:.5}] ({f_lo:.3e}, {f_hi:.3e})"
        )));
    }
    let t = bracketed_root(
        |t, slope| match df.eval_jet(&frame.to_world(y, t), if slope { 1 } else { 0 }) {
            Ok(j) => (j.value, j.grad.dot(&vert)),
            Err(e) => {
                failure.get_or_insert(e);
                (f64::NAN, f64::NAN)
            }
        },
        lo,
        hi,
        1e-3 * ell,
        1e-12 * ell,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let j = df.eval_jet(&frame.to_world(y, t), order.max(1))?;
    let gl = frame.rotation() * j.grad;
    let hl = j.hess.map(|h| frame.hess_to_local(&h));
    let (grad, hess) = implicit_derivatives(&gl, hl.as_ref(), dim);
    Ok(ImplicitPoint { value: t, grad, hess, margin: gl[dim - 1] })
}

/// Extracted implicit chart of the outer or inner boundary on a lattice over B'_r.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtractedChart {
    pub chart: usize,
    pub m: f64,
    pub side: Side,
    pub dim: usize,
    /// Window radius.
    pub radius: f64,
    /// Node spacing.
    pub spacing: f64,
    pub nodes: Vec<Tangent>,
    pub values: Vec<f64>,
    pub grads: Vec<Tangent>,
    pub hess: Vec<TangentMatrix>,
    /// phi^i at the nodes.
    pub phi: Vec<f64>,
    pub phi_grads: Vec<Tangent>,
    pub phi_hess: Vec<Option<TangentMatrix>>,
    /// Smallest vertical derivative of F_m along the zero set.
    pub vertical_margin: f64,
}

impl ExtractedChart {
    /// max |psi - phi| over the nodes.
    pub fn sup_error(&self) -> f64 {
        self.values.iter().zip(&self.phi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max_gradient(&self) -> f64 {
        self.grads.iter().map(|g| g.norm()).fold(0.0, f64::max)
    }

    pub fn max_hessian(&self) -> f64 {
        self.hess.iter().map(|h| h.norm()).fold(0.0, f64::max)
    }

    /// World points of the extracted graph.
    pub fn world_points(&self, atlas: &DomainAtlas) -> Vec<Point> {
        let frame = &atlas.charts[self.chart].frame;
        self.nodes.iter().zip(&self.values).map(|(y, v)| frame.to_world(y, *v)).collect()
    }
}

/// Extracts the implicit chart i of {F_m = 0} (or {F~_m = 0}) on the lattice
/// over B'_{R - 2 eps0} with `per_axis` points per axis.
pub fn extract_chart(df: &DefiningFunction, i: usize, per_axis: usize) -> Result<ExtractedChart> {
    extract_chart_window(df, i, per_axis, df.atlas.radius() - 2.0 * df.atlas.epsilon0)
}

pub fn extract_chart_window(df: &DefiningFunction, i: usize, per_axis: usize, radius: f64) -> Result<ExtractedChart> {
    let nodes = tangent_grid(df.dim(), radius, per_axis);
    extract_nodes(df, i, nodes, radius, 2.0 * radius / (per_axis.max(2) - 1) as f64)
}

/// Cell centres of a uniform grid with `cells` cells per axis over [-r, r]^{n-1},
/// restricted to B'_r.
pub fn midpoint_grid(dim: usize, r: f64, cells: usize) -> Vec<Tangent> {
    let h = 2.0 * r / cells as f64;
    let c = |k: usize| -r + (k as f64 + 0.5) * h;
    if dim == 2 {
        (0..cells).map(|i| Tangent::new(c(i), 0.0)).collect()
    } else {
        let mut out = Vec::new();
        for j in 0..cells {
            for i in 0..cells {
                let y = Tangent::new(c(i), c(j));
                if y.norm() <= r {
                    out.push(y);
                }
            }
        }
        out
    }
}

/// Extracts chart i at the given tangential nodes.
pub fn extract_nodes(
    df: &DefiningFunction,
    i: usize,
    nodes: Vec<Tangent>,
    radius: f64,
    spacing: f64,
) -> Result<ExtractedChart> {
    let side = df.variant.side().ok_or_else(|| Error::InvalidParameter("extraction needs F_m or F~_m".into()))?;
    let m = df.m.expect("regularized");
    let chart = &df.atlas.charts[i];
    let solved: Vec<Result<ImplicitPoint>> = nodes.iter().map(|y| solve_implicit(df, i, y, 2)).collect();
    let floor = margin_floor(df.atlas.lipschitz());
    let n = nodes.len();
    let mut out = ExtractedChart {
        chart: i,
        m,
        side,
        dim: df.dim(),
        radius,
        spacing,
        nodes: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        grads: Vec::with_capacity(n),
        hess: Vec::with_capacity(n),
        phi: Vec::with_capacity(n),
        phi_grads: Vec::with_capacity(n),
        phi_hess: Vec::with_capacity(n),
        vertical_margin: f64::INFINITY,
    };
    for (y, s) in nodes.into_iter().zip(solved) {
        let p = s?;
        out.vertical_margin = out.vertical_margin.min(p.margin);
        out.values.push(p.value);
        out.grads.push(p.grad);
        out.hess.push(p.hess.unwrap_or_else(TangentMatrix::zeros));
        let j = chart.jet(&y, 2);
        out.phi.push(j.value);
        out.phi_grads.push(j.grad);
        out.phi_hess.push(j.hess);
        out.nodes.push(y);
    }
    if out.vertical_margin < floor - 1e-9 {
        return Err(Error::Margin { chart: i, margin: out.vertical_margin, floor });
    }
    Ok(out)
}

/// Extracts every chart, in parallel over charts.
pub fn extract_all(df: &DefiningFunction, per_axis: usize) -> Result<Vec<ExtractedChart>> {
    let r: Vec<Result<ExtractedChart>> = (0..df.atlas.len()).into_par_iter().map(|i| extract_chart(df, i, per_axis)).collect();
    r.into_iter().collect()
}

/// Result of the band containment check.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub samples: usize,
    /// Band points farther than R/8 from every centre.
    pub outside_cover: usize,
    /// Band points where the interior bump is positive.
    pub interior_overlap: usize,
}

impl BandReport {
    pub fn violations(&self) -> usize {
        self.outside_cover + self.interior_overlap
    }
}

/// Samples {|F| <= 3L/m} along boundary normals and checks that it lies in the
/// union of the balls B_{R/8}(x^i) and misses the support of the interior bump.
pub fn band_check(exact: &DefiningFunction, m: f64, spacing: f64, per_normal: usize) -> BandReport {
    let atlas = &exact.atlas;
    let l = atlas.lipschitz();
    let level = 3.0 * l / m;
    let reach = 2.0 * level * (1.0 + l * l).sqrt();
    let r8 = atlas.radius() / 8.0;
    let samples = atlas.model.sample_boundary(spacing);
    let reports: Vec<BandReport> = samples
        .par_iter()
        .map(|(p, n)| {
            let mut rep = BandReport::default();
            for k in 0..per_normal {
                let s = -reach + 2.0 * reach * k as f64 / (per_normal - 1).max(1) as f64;
                let x = p + n * s;
                let Ok(v) = exact.eval(&x) else { continue };
                if v.abs() > level {
                    continue;
                }
                rep.samples += 1;
                if atlas.nearest_center(&x).1 >= r8 {
                    rep.outside_cover += 1;
                }
                if exact.bumps.eta_interior(&x) > 0.0 {
                    rep.interior_overlap += 1;
                }
            }
            rep
        })
        .collect();
    reports.iter().fold(BandReport::default(), |a, r| BandReport {
        samples: a.samples + r.samples,
        outside_cover: a.outside_cover + r.outside_cover,
        interior_overlap: a.interior_overlap + r.interior_overlap,
    })
}

/// Outcome of the m0 search for one m.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct M0Entry {
    pub m: f64,
    pub ok: bool,
    pub message: String,
    pub min_margin: f64,
    pub band_violations: usize,
}

/// Log of the m0 search.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct M0Report {
    pub m0: Option<f64>,
    pub entries: Vec<M0Entry>,
}

/// Checks band containment and extraction of every chart on both sides for
/// each m of `schedule` (ascending). m0 is the smallest m from which every
/// later m also passes.
pub fn detect_m0(
    atlas: &Arc<DomainAtlas>,
    bumps: &Arc<BumpFamily>,
    schedule: &[f64],
    per_axis: usize,
) -> M0Report {
    let exact = DefiningFunction::exact(atlas.clone(), bumps.clone());
    let spacing = atlas.radius() / 16.0;
    let mut rep = M0Report::default();
    for &m in schedule {
        let band = band_check(&exact, m, spacing, 33);
        let mut entry = M0Entry { m, ok: band.violations() == 0, message: String::new(), min_margin: f64::INFINITY, band_violations: band.violations() };
        if !entry.ok {
            entry.message = format!("{} band samples outside the cover or in the interior bump", band.violations());
        } else {
            match Approximation::new(atlas.clone(), bumps.clone(), m) {
                Err(e) => {
                    entry.ok = false;
                    entry.message = e.to_string();
                }
                Ok(ap) => {
                    'sides: for side in [Side::Outer, Side::Inner] {
                        for i in 0..atlas.len() {
                            match extract_chart(ap.side(side), i, per_axis) {
                                Ok(c) => entry.min_margin = entry.min_margin.min(c.vertical_margin),
                                Err(e) => {
                                    entry.ok = false;
                                    entry.message = format!("{}: {e}", side.name());
                                    break 'sides;
                                }
                            }
                        }
                    }
                }
            }
        }
        rep.entries.push(entry);
    }
    let mut m0 = None;
    for e in rep.entries.iter().rev() {
        if e.ok {
            m0 = Some(e.m);
        } else {
            break;
        }
    }
    rep.m0 = m0;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::atlas::make_shape;
    use crate::geometry::shapes::ShapeParams;

    fn setup(name: &str, p: ShapeParams) -> (Arc<DomainAtlas>, Arc<BumpFamily>) {
        let atlas = Arc::new(make_shape(name, &p).unwrap());
        let bumps = Arc::new(BumpFamily::build_with_spacing(&atlas, atlas.radius() / 256.0).unwrap());
        (atlas, bumps)
    }

    fn disk() -> (Arc<DomainAtlas>, Arc<BumpFamily>) {
        setup("disk", ShapeParams::default().with("radius", 4.0).with("lipschitz", 0.2))
    }

    #[test]
    fn exact_function_vanishes_on_boundary_and_is_minus_one_inside() {
        let (atlas, bumps) = disk();
        let f = DefiningFunction::exact(atlas.clone(), bumps);
        for (p, _) in atlas.model.sample_boundary(0.37) {
            assert!(f.eval(&p).unwrap().abs() < 1e-9);
        }
        assert_eq!(f.eval(&Point::zeros()).unwrap(), -1.0);
    }

    #[test]
    fn sandwich_offsets() {
        let (atlas, bumps) = disk();
        let ap = Approximation::new(atlas.clone(), bumps.clone(), 32.0).unwrap();
        let l = atlas.lipschitz();
        for x in bumps.sample_w(atlas.model.as_ref(), 300, 3) {
            let t = ap.triple(&x).unwrap();
            let lo = t.exact - t.outer;
            let hi = t.inner - t.exact;
            assert!(lo >= l / 32.0 - 1e-12 && lo <= 3.0 * l / 32.0 + 1e-12, "{lo}");
            assert!(hi >= l / 32.0 - 1e-12 && hi <= 3.0 * l / 32.0 + 1e-12, "{hi}");
        }
        let deep = ap.classify(&Point::zeros());
        assert_eq!(deep.region, Region::Inner);
        let c = ap.classify(&atlas.centers[0]);
        assert!(c.band);
        assert_eq!(c.region, Region::OmegaMinusInner);
        assert_eq!(ap.classify(&Point::new(9.0, 0.0, 0.0)).region, Region::Outside);
    }

    #[test]
    fn jets_match_differences() {
        let (atlas, bumps) = disk();
        let ap = Approximation::new(atlas.clone(), bumps, 32.0).unwrap();
        let x = atlas.centers[2] * 0.985 + Point::new(0.01, 0.02, 0.0);
        for f in [&ap.exact, &ap.outer] {
            let j = f.eval_jet(&x, 2).unwrap();
            let (_, g, h) = crate::geometry::shapes::fd_jet(|p| f.eval(p).unwrap(), &x, 2, 0.05);
            assert!((j.grad - g).norm() < 1e-5, "{} vs {}", j.grad, g);
            assert!((j.hess.unwrap() - h).amax() < 1e-2 * j.hess.unwrap().amax().max(1.0));
        }
    }

    #[test]
    fn disk_extraction_bounds() {
        let (atlas, bumps) = disk();
        let m = 32.0;
        let ap = Approximation::new(atlas.clone(), bumps, m).unwrap();
        let l = atlas.lipschitz();
        for side in [Side::Outer, Side::Inner] {
            let c = extract_chart(ap.side(side), 5, 65).unwrap();
            assert!(c.sup_error() <= sup_bound(l, m) + 1e-9);
            assert!(c.vertical_margin >= margin_floor(l));
            for (v, p) in c.values.iter().zip(&c.phi) {
                match side {
                    Side::Outer => assert!(v > p),
                    Side::Inner => assert!(v < p),
                }
            }
            // implicit gradient against centred differences of extracted values
            let h = c.spacing;
            for k in 1..c.nodes.len() - 1 {
                let fd = (c.values[k + 1] - c.values[k - 1]) / (2.0 * h);
                assert!((fd - c.grads[k].x).abs() < 1e-3, "{fd} {}", c.grads[k].x);
            }
        }
    }

    #[test]
    fn single_flat_chart_reduces_to_mollified_chart() {
        let (atlas, bumps) = setup("square", ShapeParams::default().with("side", 8.0));
        let m = 64.0;
        let ap = Approximation::new(atlas.clone(), bumps, m).unwrap();
        // a chart centred in the middle of a face
        let i = atlas.nearest_center(&Point::new(0.0, -4.0, 0.0)).0;
        let y = Tangent::new(0.05, 0.0);
        let p = solve_implicit(&ap.outer, i, &y, 1).unwrap();
        let mc = ap.outer.mollified(i).unwrap();
        assert!((p.value - mc.side_value(Side::Outer, &y)).abs() < 1e-10);
    }

    #[test]
    fn small_m_is_rejected() {
        let (atlas, bumps) = disk();
        assert!(Approximation::new(atlas, bumps, 1.0).is_err());
    }
}
