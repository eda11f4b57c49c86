//! Variational capacity of balls relative to balls on a grid, the
//! curvature-weighted isocapacitary function K(r) and its comparison between
//! a domain and its approximations.

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curvature::{weak_curvature, Surface};
use crate::defining::solve_implicit;
use crate::error::{Error, Result};
use crate::geometry::atlas::DomainAtlas;
use crate::geometry::frame::{Point, Tangent, TangentMatrix};
use crate::partition::{BumpFamily, Piece};

/// Uniform node grid with `n` nodes per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub origin: Point,
    pub spacing: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn coords(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx % n, (idx / n) % n, if self.dim == 3 { idx / (n * n) } else { 0 }]
    }

    fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n * (c[1] + self.n * c[2])
    }

    pub fn node(&self, idx: usize) -> Point {
        let c = self.coords(idx);
        let mut p = self.origin;
        for a in 0..self.dim {
            p[a] += c[a] as f64 * self.spacing;
        }
        p
    }

    /// Multilinear interpolation of node values; 0 outside the grid.
    pub fn interpolate(&self, values: &[f64], x: &Point) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..self.dim {
            let t = (x[a] - self.origin[a]) / self.spacing;
            if !(t >= 0.0 && t <= (self.n - 1) as f64) {
                return 0.0;
            }
            let i = (t.floor() as usize).min(self.n - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut v = 0.0;
        for corner in 0..(1 << self.dim) {
            let mut c = base;
            let mut w = 1.0;
            for a in 0..self.dim {
                if corner >> a & 1 == 1 {
                    c[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                v += w * values[self.index(c)];
            }
        }
        v
    }
}

/// cap(E, B_r(center)) for the closed ball E = B_s(set_center) on a grid of spacing h.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityProblem {
    pub dim: usize,
    pub center: Point,
    pub radius: f64,
    pub set_center: Point,
    pub set_radius: f64,
    pub spacing: f64,
}

impl CapacityProblem {
    /// E = B_s and B_r concentric at the origin.
    pub fn concentric(dim: usize, r: f64, s: f64, h: f64) -> Self {
        Self { dim, center: Point::zeros(), radius: r, set_center: Point::zeros(), set_radius: s, spacing: h }
    }

    pub fn validate(&self) -> Result<()> {
        let (r, s, h) = (self.radius, self.set_radius, self.spacing);
        if !(self.dim == 2 || self.dim == 3) {
            return Err(Error::InvalidParameter(format!("dimension {} is not supported", self.dim)));
        }
        if !(h > 0.0 && h <= r / 64.0 * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!("grid spacing {h} must be at most r/64 = {}", r / 64.0)));
        }
        if !(s > 0.0) {
            return Err(Error::InvalidParameter("E is empty".into()));
        }
        if (self.set_center - self.center).norm() + s > r - h {
            return Err(Error::InvalidParameter("E touches the boundary of B_r".into()));
        }
        Ok(())
    }
}

/// Discrete equilibrium potential and its energy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CapacityResult {
    /// Dirichlet energy of the potential.
    pub value: f64,
    /// Largest residual of the discrete equations off E.
    pub residual: f64,
    pub iterations: usize,
    pub grid: Grid,
    /// Node values: 1 on E, 0 outside B_r.
    pub potential: Vec<f64>,
}

const NONE: u32 = u32::MAX;
const THETA_MIN: f64 = 1e-2;

/// Fraction t in (0, 1] at which a + t (b - a) leaves (outward) or enters the sphere.
fn sphere_fraction(a: &Point, b: &Point, c: &Point, rho: f64) -> f64 {
    let d = b - a;
    let f = a - c;
    let qa = d.norm_squared();
    let qb = 2.0 * f.dot(&d);
    let qc = f.norm_squared() - rho * rho;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let t1 = (-qb - disc) / (2.0 * qa);
    let t2 = (-qb + disc) / (2.0 * qa);
    let t = if t1 > 0.0 && t1 <= 1.0 { t1 } else { t2 };
    t.clamp(THETA_MIN, 1.0)
}

/// Solves the discrete Dirichlet problem by conjugate gradients preconditioned
/// with symmetric SOR. Edges cut by either sphere get the weight 1/theta,
/// theta being the fraction of the edge inside the free region, so the
/// boundary positions enter to second order.
pub fn solve_capacity(p: &CapacityProblem) -> Result<CapacityResult> {
    p.validate()?;
    let dim = p.dim;
    let h = p.spacing;
    let half = (p.radius / h).ceil() as usize + 1;
    let n = 2 * half + 1;
    let mut origin = p.center;
    for a in 0..dim {
        origin[a] -= half as f64 * h;
    }
    let grid = Grid { dim, n, origin, spacing: h };
    let total = grid.len();
    // 0 free, 1 in E, 2 outside B_r
    let class: Vec<u8> = (0..total)
        .into_par_iter()
        .map(|k| {
            let x = grid.node(k);
            if (x - p.center).norm() >= p.radius {
                2
            } else if (x - p.set_center).norm() <= p.set_radius {
                1
            } else {
                0
            }
        })
        .collect();
    if !class.iter().any(|&c| c == 1) {
        return Err(Error::InvalidParameter("E contains no grid node".into()));
    }
    let mut id = vec![NONE; total];
    let mut nodes = Vec::new();
    for k in 0..total {
        if class[k] == 0 {
            id[k] = nodes.len() as u32;
            nodes.push(k);
        }
    }
    let unknowns = nodes.len();
    let stride = [1usize, n, n * n];
    let deg = 2 * dim;
    // neighbour unknowns, diagonal and right-hand side
    let assembled: Vec<(Vec<u32>, f64, f64)> = nodes
        .par_iter()
        .map(|&k| {
            let c = grid.coords(k);
            let x = grid.node(k);
            let mut nb = vec![NONE; deg];
            let (mut diag, mut rhs) = (0.0, 0.0);
            for a in 0..dim {
                for (s, dir) in [(0usize, -1i64), (1, 1)] {
                    let ok = if dir < 0 { c[a] > 0 } else { c[a] + 1 < n };
                    if !ok {
                        continue;
                    }
                    let j = if dir < 0 { k - stride[a] } else { k + stride[a] };
                    match class[j] {
                        0 => {
                            nb[2 * a + s] = id[j];
                            diag += 1.0;
                        }
                        1 => {
                            let t = sphere_fraction(&x, &grid.node(j), &p.set_center, p.set_radius);
                            diag += 1.0 / t;
                            rhs += 1.0 / t;
                        }
                        _ => {
                            let t = sphere_fraction(&x, &grid.node(j), &p.center, p.radius);
                            diag += 1.0 / t;
                        }
                    }
                }
            }
            (nb, diag, rhs)
        })
        .collect();
    let mut nbr = vec![NONE; unknowns * deg];
    let mut diag = vec![0.0; unknowns];
    let mut b = vec![0.0; unknowns];
    for (u, (nb, d, r)) in assembled.into_iter().enumerate() {
        nbr[u * deg..(u + 1) * deg].copy_from_slice(&nb);
        diag[u] = d;
        b[u] = r;
    }
    let apply = |x: &[f64], y: &mut [f64]| {
        y.par_iter_mut().enumerate().for_each(|(u, yu)| {
            let mut s = diag[u] * x[u];
            for &v in &nbr[u * deg..(u + 1) * deg] {
                if v != NONE {
                    s -= x[v as usize];
                }
            }
            *yu = s;
        });
    };
    let omega = 1.6;
    // z = M^{-1} r with M the SSOR matrix, up to a constant factor
    let precondition = |r: &[f64], z: &mut [f64]| {
        for u in 0..unknowns {
            let mut s = r[u];
            for &v in &nbr[u * deg..(u + 1) * deg] {
                if v != NONE && (v as usize) < u {
                    s += z[v as usize];
                }
            }
            z[u] = s * omega / diag[u];
        }
        for u in 0..unknowns {
            z[u] *= diag[u] / omega;
        }
        for u in (0..unknowns).rev() {
            let mut s = z[u];
            for &v in &nbr[u * deg..(u + 1) * deg] {
                if v != NONE && (v as usize) > u {
                    s += z[v as usize];
                }
            }
            z[u] = s * omega / diag[u];
        }
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let mut x = vec![0.0; unknowns];
    let mut r = b.clone();
    let mut z = vec![0.0; unknowns];
    precondition(&r, &mut z);
    let mut dir = z.clone();
    let mut q = vec![0.0; unknowns];
    let mut rz = dot(&r, &z);
    let bnorm = dot(&b, &b).sqrt();
    let tol = 1e-10 * bnorm;
    let budget = 20 * n + 1000;
    let mut iterations = 0;
    while dot(&r, &r).sqrt() > tol {
        if iterations >= budget {
            return Err(Error::NoConvergence(format!(
                "capacity CG: relative residual {:.3e} after {iterations} iterations",
                dot(&r, &r).sqrt() / bnorm
            )));
        }
        apply(&dir, &mut q);
        let alpha = rz / dot(&dir, &q);
        for u in 0..unknowns {
            x[u] += alpha * dir[u];
            r[u] -= alpha * q[u];
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for u in 0..unknowns {
            dir[u] = z[u] + beta * dir[u];
        }
        iterations += 1;
    }
    apply(&x, &mut q);
    let residual = q.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    let mut potential: Vec<f64> = class.iter().map(|&c| if c == 1 { 1.0 } else { 0.0 }).collect();
    for (u, &k) in nodes.iter().enumerate() {
        potential[k] = x[u];
    }
    // energy: free-free edges once, cut edges from the free side
    let energy: f64 = nodes
        .par_iter()
        .map(|&k| {
            let c = grid.coords(k);
            let xk = grid.node(k);
            let vk = potential[k];
            let mut e = 0.0;
            for a in 0..dim {
                for dir in [-1i64, 1] {
                    let ok = if dir < 0 { c[a] > 0 } else { c[a] + 1 < n };
                    if !ok {
                        continue;
                    }
                    let j = if dir < 0 { k - stride[a] } else { k + stride[a] };
                    match class[j] {
                        0 => {
                            if dir > 0 {
                                e += (vk - potential[j]).powi(2);
                            }
                        }
                        1 => e += (vk - 1.0).powi(2) / sphere_fraction(&xk, &grid.node(j), &p.set_center, p.set_radius),
                        _ => e += vk * vk / sphere_fraction(&xk, &grid.node(j), &p.center, p.radius),
                    }
                }
            }
            e
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(CapacityResult { value: energy * h.powi(dim as i32 - 2), residual, iterations, grid, potential })
}

/// 2 pi / ln(r/s) in the plane, 4 pi s r / (r - s) in space.
pub fn concentric_capacity(dim: usize, r: f64, s: f64) -> f64 {
    if dim == 2 {
        2.0 * std::f64::consts::PI / (r / s).ln()
    } else {
        4.0 * std::f64::consts::PI * s * r / (r - s)
    }
}

/// Integrals of the form int_{boundary within a ball} f |B|^q dH^{n-1} over
/// the exact or an implicit boundary, assembled chart by chart with the
/// partition weights xi_i.
pub struct CurvatureMeasure<'a> {
    pub atlas: &'a DomainAtlas,
    pub bumps: &'a BumpFamily,
    pub surface: Surface<'a>,
    pub q: f64,
    /// Quadrature cells per ball radius.
    pub per_radius: usize,
}

impl<'a> CurvatureMeasure<'a> {
    pub fn new(atlas: &'a DomainAtlas, bumps: &'a BumpFamily, surface: Surface<'a>) -> Self {
        Self { atlas, bumps, surface, q: 1.0, per_radius: 48 }
    }

    fn jet(&self, i: usize, y: &Tangent) -> Result<(f64, Tangent, TangentMatrix)> {
        match self.surface {
            Surface::Exact => {
                let j = self.atlas.charts[i].jet(y, 2);
                Ok((j.value, j.grad, j.hess.unwrap_or_else(TangentMatrix::zeros)))
            }
            Surface::Implicit(df) => {
                let p = solve_implicit(df, i, y, 2)?;
                Ok((p.value, p.grad, p.hess.unwrap_or_else(TangentMatrix::zeros)))
            }
        }
    }

    /// int over the boundary inside B_s(c) of f |B|^q dH^{n-1}, midpoint rule
    /// with `per_radius` cells per s in every chart.
    pub fn ball_integral(&self, c: &Point, s: f64, f: &(dyn Fn(&Point) -> f64 + Sync)) -> Result<f64> {
        let dim = self.atlas.dim;
        let support = self.bumps.chart_support();
        let h = s / self.per_radius as f64;
        let cells = 2 * self.per_radius;
        let cell = h.powi(dim as i32 - 1);
        let mut total = 0.0;
        for i in self.atlas.centers_within(c, s + support) {
            let frame = &self.atlas.charts[i].frame;
            let yc = frame.forward(c);
            let mut sum = 0.0;
            for jy in 0..(if dim == 2 { 1 } else { cells }) {
                for jx in 0..cells {
                    let y = Tangent::new(
                        yc.x - s + (jx as f64 + 0.5) * h,
                        if dim == 2 { 0.0 } else { yc.y - s + (jy as f64 + 0.5) * h },
                    );
                    if y.norm() >= support {
                        continue;
                    }
                    // the graph point is within s of c only if its projection is
                    let mut d2 = (y.x - yc.x).powi(2);
                    if dim == 3 {
                        d2 += (y.y - yc.y).powi(2);
                    }
                    if d2 > s * s {
                        continue;
                    }
                    let (v, g, hm) = self.jet(i, &y)?;
                    let x = frame.to_world(&y, v);
                    if (x - c).norm() > s {
                        continue;
                    }
                    let xi = self.bumps.xi(Piece::Chart(i), &x)?;
                    if xi == 0.0 {
                        continue;
                    }
                    let b = weak_curvature(&g, &hm).norm;
                    if b == 0.0 {
                        continue;
                    }
                    sum += xi * b.powf(self.q) * (1.0 + g.norm_squared()).sqrt() * f(&x);
                }
            }
            total += sum * cell;
        }
        Ok(total)
    }
}

/// int_{boundary cap E} |B|^q dH^{n-1} for the ball E = B_s(c).
pub fn weighted_boundary_mass(measure: &CurvatureMeasure<'_>, c: &Point, s: f64) -> Result<f64> {
    measure.ball_integral(c, s, &|_| 1.0)
}

/// Capacities of concentric balls, cached by (dim, r, sigma, cells).
#[derive(Default)]
pub struct CapacityCache {
    solved: Mutex<BTreeMap<(usize, u64, u64, usize), std::sync::Arc<CapacityResult>>>,
}

impl CapacityCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// cap(B_{sigma r}, B_r) with r / cells grid spacing.
    pub fn get(&self, dim: usize, r: f64, sigma: f64, cells: usize) -> Result<std::sync::Arc<CapacityResult>> {
        let key = (dim, r.to_bits(), sigma.to_bits(), cells);
        if let Some(v) = self.solved.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let res = std::sync::Arc::new(solve_capacity(&CapacityProblem::concentric(dim, r, sigma * r, r / cells as f64))?);
        self.solved.lock().unwrap().insert(key, res.clone());
        Ok(res)
    }
}

/// Settings of the K(r) estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsocapConfig {
    /// Radii of the candidate sets E = B_{sigma r}, as fractions of r.
    pub family: Vec<f64>,
    /// Capacity grid cells per r.
    pub cap_res: usize,
    /// Boundary quadrature cells per radius of E.
    pub quad_res: usize,
    /// Number of ball centres, spread over the charts.
    pub centers: usize,
    /// C(n) in r0 = R / (C(n) (1 + L^2)).
    pub r0_constant: f64,
    /// The constant c(n) of the comparison chain.
    pub chain_constant: f64,
}

impl Default for IsocapConfig {
    fn default() -> Self {
        Self {
            family: vec![1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0],
            cap_res: 64,
            quad_res: 48,
            centers: 16,
            r0_constant: 16.0,
            chain_constant: 1.0,
        }
    }
}

/// One candidate of the K(r) supremum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub center: usize,
    pub sigma: f64,
    pub mass: f64,
    pub capacity: f64,
}

/// Lower estimate of K(r) over the candidate family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub r: f64,
    pub value: f64,
    pub best: Option<KCandidate>,
}

/// r0 = R / (C(n) (1 + L^2)).
pub fn r0(atlas: &DomainAtlas, config: &IsocapConfig) -> f64 {
    let l = atlas.lipschitz();
    atlas.radius() / (config.r0_constant * (1.0 + l * l))
}

/// Evenly spread chart indices.
pub fn spread_charts(count: usize, n: usize) -> Vec<usize> {
    let count = count.clamp(1, n);
    let mut v: Vec<usize> = (0..count).map(|k| k * n / count).collect();
    v.dedup();
    v
}

/// Ball centres on the boundary of the surface: the graph points over the
/// origin of the selected charts.
pub fn boundary_centers(measure: &CurvatureMeasure<'_>, charts: &[usize]) -> Result<Vec<Point>> {
    charts
        .iter()
        .map(|&i| {
            let (v, _, _) = measure.jet(i, &Tangent::zeros())?;
            Ok(measure.atlas.charts[i].frame.to_world(&Tangent::zeros(), v))
        })
        .collect()
}

/// max over centres and sigma of mass(B_{sigma r}(x)) / cap(B_{sigma r}, B_r).
/// A lower bound for the supremum over all compact sets.
pub fn estimate_k(
    measure: &CurvatureMeasure<'_>,
    centers: &[Point],
    r: f64,
    family: &[f64],
    cap_res: usize,
    cache: &CapacityCache,
) -> Result<KEstimate> {
    if family.is_empty() {
        return Err(Error::InvalidParameter("empty candidate family".into()));
    }
    let dim = measure.atlas.dim;
    let caps: Vec<f64> = family.iter().map(|&s| cache.get(dim, r, s, cap_res).map(|c| c.value)).collect::<Result<_>>()?;
    let masses: Vec<Result<Vec<KCandidate>>> = centers
        .par_iter()
        .enumerate()
        .map(|(ci, c)| {
            family
                .iter()
                .zip(&caps)
                .map(|(&s, &cap)| {
                    Ok(KCandidate { center: ci, sigma: s, mass: weighted_boundary_mass(measure, c, s * r)?, capacity: cap })
                })
                .collect()
        })
        .collect();
    let mut best: Option<KCandidate> = None;
    let mut value = 0.0;
    for cands in masses {
        for k in cands? {
            let ratio = k.mass / k.capacity;
            if best.is_none() || ratio > value {
                value = ratio;
                best = Some(k);
            }
        }
    }
    Ok(KEstimate { r, value, best })
}

/// Explicit factors of the comparison K_{Omega_m}(r) <= A K_Omega(s (r + 1/m)) + B g(r)
/// with the pinned constant c.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinnedChain {
    pub c: f64,
    pub r0_constant: f64,
    pub r0: f64,
    /// c (1 + L^{n+8}) d^n / R^n.
    pub a: f64,
    /// c (1 + L^3).
    pub s: f64,
    /// c (1 + L^25) d^n / R^{n+1} for n >= 3, c (1 + L^31) d^n / R^{n+1} for n = 2.
    pub b: f64,
    /// max(a, s, b).
    pub c_hat: f64,
}

impl PinnedChain {
    pub fn new(atlas: &DomainAtlas, config: &IsocapConfig) -> Self {
        let ch = atlas.characteristic;
        let (l, r, d) = (ch.lipschitz, ch.radius, ch.diameter);
        let n = atlas.dim as i32;
        let c = config.chain_constant;
        let a = c * (1.0 + l.powi(n + 8)) * (d / r).powi(n);
        let s = c * (1.0 + l.powi(3));
        let b = c * (1.0 + l.powi(if n == 2 { 31 } else { 25 })) * (d / r).powi(n) / r;
        Self { c, r0_constant: config.r0_constant, r0: r0(atlas, config), a, s, b, c_hat: a.max(s).max(b) }
    }

    /// r log(1 + 1/r) in the plane, r otherwise.
    pub fn gauge(&self, dim: usize, r: f64) -> f64 {
        if dim == 2 {
            r * (1.0 + 1.0 / r).ln()
        } else {
            r
        }
    }
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsocapRow {
    pub m: f64,
    pub r: f64,
    pub k_outer: f64,
    pub k_inner: f64,
    /// s (r + 1/m).
    pub omega_radius: f64,
    pub k_omega: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Tabulates K_{Omega_m}(r), K_{omega_m}(r) against the pinned right-hand side.
pub fn isocap_compare(
    atlas: &DomainAtlas,
    bumps: &BumpFamily,
    approximation: &crate::defining::Approximation,
    radii: &[f64],
    config: &IsocapConfig,
    cache: &CapacityCache,
) -> Result<Vec<IsocapRow>> {
    if !atlas.smooth {
        return Err(Error::Unsupported(format!(
            "{} has no integrable curvature; curvature-weighted K needs a W^{{2,1}} boundary",
            atlas.name
        )));
    }
    let chain = PinnedChain::new(atlas, config);
    let charts = spread_charts(config.centers, atlas.len());
    let exact = CurvatureMeasure { q: 1.0, per_radius: config.quad_res, ..CurvatureMeasure::new(atlas, bumps, Surface::Exact) };
    let omega_centers = boundary_centers(&exact, &charts)?;
    let m = approximation.m;
    let mut rows = Vec::new();
    for &r in radii {
        if r > chain.r0 {
            return Err(Error::RadiusTooLarge { r, r0: chain.r0 });
        }
        let mut k = [0.0; 2];
        for (slot, df) in [&approximation.outer, &approximation.inner].into_iter().enumerate() {
            let meas = CurvatureMeasure { per_radius: config.quad_res, ..CurvatureMeasure::new(atlas, bumps, Surface::Implicit(df)) };
            let centers = boundary_centers(&meas, &charts)?;
            k[slot] = estimate_k(&meas, &centers, r, &config.family, config.cap_res, cache)?.value;
        }
        let omega_radius = chain.s * (r + 1.0 / m);
        let k_omega = estimate_k(&exact, &omega_centers, omega_radius, &config.family, config.cap_res, cache)?.value;
        let rhs = chain.a * k_omega + chain.b * chain.gauge(atlas.dim, r);
        rows.push(IsocapRow { m, r, k_outer: k[0], k_inner: k[1], omega_radius, k_omega, rhs, holds: k[0] <= rhs && k[1] <= rhs });
    }
    Ok(rows)
}

/// Q and Rq of the capacity/Poincare-quotient comparison at one ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazyaCheck {
    pub q: f64,
    pub rq: f64,
    pub tolerance: f64,
    pub holds: bool,
}

/// Q = max over the candidate family of mass(E) / cap(E, B_r(x)), and
/// Rq = max over the test functions of int v^2 |B| dH / int |grad v|^2, the
/// dictionary being the discrete equilibrium potentials of the candidates and
/// the radial tents equal to 1 on them and 0 at |y - x| = r.
pub fn mazya_spot_check(
    measure: &CurvatureMeasure<'_>,
    center: &Point,
    r: f64,
    family: &[f64],
    cap_res: usize,
    cache: &CapacityCache,
) -> Result<MazyaCheck> {
    let dim = measure.atlas.dim;
    let tolerance = 0.05;
    let mut q = 0.0f64;
    let mut rq = 0.0f64;
    for &s in family {
        let cap = cache.get(dim, r, s, cap_res)?;
        let mass = weighted_boundary_mass(measure, center, s * r)?;
        q = q.max(mass / cap.value);
        let grid = &cap.grid;
        let pot = &cap.potential;
        let shift = *center;
        let v2 = |x: &Point| grid.interpolate(pot, &(x - shift)).powi(2);
        rq = rq.max(measure.ball_integral(center, r, &v2)? / cap.value);
        // tent: 1 on B_{sr}, linear to 0 at r
        let tent = |x: &Point| {
            let d = (x - center).norm();
            ((r - d) / (r - s * r)).clamp(0.0, 1.0).powi(2)
        };
        let energy = tent_energy(dim, r, s * r);
        rq = rq.max(measure.ball_integral(center, r, &tent)? / energy);
    }
    let holds = q <= rq * (1.0 + tolerance) && rq <= 4.0 * q * (1.0 + tolerance);
    Ok(MazyaCheck { q, rq, tolerance, holds })
}

/// Dirichlet energy of the radial tent equal to 1 on B_s and 0 outside B_r.
pub fn tent_energy(dim: usize, r: f64, s: f64) -> f64 {
    let slope2 = 1.0 / ((r - s) * (r - s));
    if dim == 2 {
        std::f64::consts::PI * (r * r - s * s) * slope2
    } else {
        4.0 / 3.0 * std::f64::consts::PI * (r.powi(3) - s.powi(3)) * slope2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::atlas::make_shape;
    use crate::geometry::shapes::ShapeParams;

    #[test]
    fn concentric_planar_capacity() {
        let p = CapacityProblem::concentric(2, 1.0, 0.25, 1.0 / 128.0);
        let c = solve_capacity(&p).unwrap();
        let exact = concentric_capacity(2, 1.0, 0.25);
        assert!((c.value - exact).abs() < 0.02 * exact, "{} vs {exact}", c.value);
        assert!(c.potential.iter().all(|v| (-1e-9..=1.0 + 1e-9).contains(v)));
    }

    #[test]
    fn capacity_is_monotone() {
        let h = 1.0 / 96.0;
        let mut last = 0.0;
        for s in [0.1, 0.2, 0.3, 0.4] {
            let c = solve_capacity(&CapacityProblem::concentric(2, 1.0, s, h)).unwrap().value;
            assert!(c > last);
            last = c;
        }
        // larger B_r, same E
        let a = solve_capacity(&CapacityProblem::concentric(2, 1.0, 0.2, h)).unwrap().value;
        let b = solve_capacity(&CapacityProblem::concentric(2, 1.5, 0.2, h)).unwrap().value;
        assert!(b < a);
    }

    #[test]
    fn invalid_problems() {
        assert!(solve_capacity(&CapacityProblem::concentric(2, 1.0, 0.25, 0.1)).is_err());
        assert!(solve_capacity(&CapacityProblem::concentric(2, 1.0, 0.999, 1.0 / 64.0)).is_err());
        assert!(solve_capacity(&CapacityProblem::concentric(2, 1.0, 0.0, 1.0 / 64.0)).is_err());
    }

    #[test]
    fn grid_interpolation_is_exact_on_bilinear() {
        let g = Grid { dim: 2, n: 5, origin: Point::new(-1.0, -1.0, 0.0), spacing: 0.5 };
        let vals: Vec<f64> = (0..g.len()).map(|k| {
            let p = g.node(k);
            1.0 + 2.0 * p.x - p.y + 0.5 * p.x * p.y
        }).collect();
        let x = Point::new(0.3, -0.7, 0.0);
        assert!((g.interpolate(&vals, &x) - (1.0 + 0.6 + 0.7 - 0.105)).abs() < 1e-12);
        assert_eq!(g.interpolate(&vals, &Point::new(3.0, 0.0, 0.0)), 0.0);
    }

    fn unit_disk() -> (DomainAtlas, BumpFamily) {
        let atlas = make_shape("disk", &ShapeParams::default().with("radius", 1.0).with("lipschitz", 0.2)).unwrap();
        let bumps = BumpFamily::build_with_spacing(&atlas, atlas.radius() / 128.0).unwrap();
        (atlas, bumps)
    }

    #[test]
    fn disk_mass_is_arc_length() {
        let (atlas, bumps) = unit_disk();
        let meas = CurvatureMeasure { per_radius: 200, ..CurvatureMeasure::new(&atlas, &bumps, Surface::Exact) };
        let c = atlas.centers[3];
        for s in [0.01, 0.05] {
            // arc of the unit circle inside B_s(c)
            let arc = 4.0 * (s / 2.0f64).asin();
            let v = weighted_boundary_mass(&meas, &c, s).unwrap();
            assert!((v - arc).abs() < 0.01 * arc, "{v} vs {arc}");
        }
        let far = Point::new(0.0, 0.0, 0.0);
        assert_eq!(weighted_boundary_mass(&meas, &far, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn refinement_of_the_family_does_not_decrease_k() {
        let (atlas, bumps) = unit_disk();
        let meas = CurvatureMeasure::new(&atlas, &bumps, Surface::Exact);
        let config = IsocapConfig::default();
        let r = r0(&atlas, &config);
        let centers = boundary_centers(&meas, &spread_charts(4, atlas.len())).unwrap();
        let cache = CapacityCache::new();
        let full = estimate_k(&meas, &centers, r, &config.family, 64, &cache).unwrap().value;
        let half = estimate_k(&meas, &centers, r, &config.family[2..], 64, &cache).unwrap().value;
        assert!(full > 0.0 && half <= full);
    }

    #[test]
    fn flat_faces_have_no_weight() {
        let atlas = make_shape("square", &ShapeParams::default().with("side", 8.0)).unwrap();
        let bumps = BumpFamily::build_with_spacing(&atlas, atlas.radius() / 128.0).unwrap();
        let meas = CurvatureMeasure::new(&atlas, &bumps, Surface::Exact);
        let c = Point::new(0.0, -4.0, 0.0);
        let m = mazya_spot_check(&meas, &c, 0.02, &[0.25, 0.5], 64, &CapacityCache::new()).unwrap();
        assert_eq!((m.q, m.rq), (0.0, 0.0));
        assert!(m.holds);
    }
}
