//! Smooth partition of unity subordinate to the chart covering.
//!
//! Boundary bumps are mollified ball indicators, tabulated once as a radial
//! profile. The interior bump is a mollified indicator of the eroded domain
//! computed by discrete convolution on a lattice and interpolated
//! multilinearly.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::atlas::DomainAtlas;
use crate::geometry::frame::Point;
use crate::geometry::index::PointIndex;
use crate::geometry::shapes::BoundaryModel;
use crate::mollify::MollifierKernel;
use crate::numeric::{gauss_legendre, hermite5};

/// Ball radius of the boundary bumps over the mollifier scale.
pub const BALL_OVER_SCALE: f64 = 6.0;
/// Intervals in the tabulated radial profile.
const PROFILE_INTERVALS: usize = 1024;
/// Implementation constants in |grad^k xi| <= C_k / R^k.
pub const C1: f64 = 64.0;
pub const C2: f64 = 4096.0;

/// Radial profile Q(t) of the unit-scale kernel convolved with the indicator
/// of the ball of radius 6, for t in units of the mollifier scale.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub dim: usize,
    lo: f64,
    hi: f64,
    step: f64,
    table: Vec<[f64; 3]>,
}

/// Q'(t) and Q''(t) as boundary integrals over the sphere of radius a.
fn profile_derivatives(dim: usize, t: f64) -> (f64, f64) {
    let k = MollifierKernel::cached(dim);
    let a = BALL_OVER_SCALE;
    let c0 = (t * t + a * a - 1.0) / (2.0 * t * a);
    if c0 >= 1.0 {
        return (0.0, 0.0);
    }
    let rule = gauss_legendre(64);
    let dist = |u: f64| (t * t + a * a - 2.0 * t * a * u).max(0.0).sqrt();
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    if dim == 2 {
        let amax = c0.max(-1.0).acos();
        for &(x, w) in &rule {
            let al = 0.5 * amax * (x + 1.0);
            let u = al.cos();
            let d = dist(u);
            let ww = 0.5 * amax * w;
            d1 += ww * k.profile(d) * u;
            if d > 0.0 {
                d2 += ww * k.profile_derivative(d) * (t - a * u) / d * u;
            }
        }
        (-2.0 * a * d1, -2.0 * a * d2)
    } else {
        let lo = c0.max(-1.0);
        for &(x, w) in &rule {
            let u = lo + 0.5 * (1.0 - lo) * (x + 1.0);
            let d = dist(u);
            let ww = 0.5 * (1.0 - lo) * w;
            d1 += ww * k.profile(d) * u;
            if d > 0.0 {
                d2 += ww * k.profile_derivative(d) * (t - a * u) / d * u;
            }
        }
        let s = 2.0 * std::f64::consts::PI * a * a;
        (-s * d1, -s * d2)
    }
}

impl RadialProfile {
    pub fn build(dim: usize) -> Self {
        let lo = BALL_OVER_SCALE - 1.0;
        let hi = BALL_OVER_SCALE + 1.0;
        let step = (hi - lo) / PROFILE_INTERVALS as f64;
        let nodes: Vec<f64> = (0..=PROFILE_INTERVALS).map(|i| lo + i as f64 * step).collect();
        let ders: Vec<(f64, f64)> = nodes.iter().map(|&t| profile_derivatives(dim, t)).collect();
        let rule = gauss_legendre(8);
        let mut vals = vec![0.0; nodes.len()];
        for i in (0..PROFILE_INTERVALS).rev() {
            let piece: f64 = rule
                .iter()
                .map(|&(x, w)| {
                    let s = nodes[i] + 0.5 * step * (x + 1.0);
                    -0.5 * step * w * profile_derivatives(dim, s).0
                })
                .sum();
            vals[i] = vals[i + 1] + piece;
        }
        let table = (0..nodes.len()).map(|i| [vals[i], ders[i].0, ders[i].1]).collect();
        Self { dim, lo, hi, step, table }
    }

    /// Cached profile for dimension 2 or 3.
    pub fn cached(dim: usize) -> &'static RadialProfile {
        static P: [OnceLock<RadialProfile>; 2] = [OnceLock::new(), OnceLock::new()];
        P[dim - 2].get_or_init(|| RadialProfile::build(dim))
    }

    /// Q(lo) before clamping; equals the kernel mass up to quadrature error.
    pub fn plateau(&self) -> f64 {
        self.table[0][0]
    }

    /// (Q, Q', Q'') at t.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        if t <= self.lo {
            return (1.0, 0.0, 0.0);
        }
        if t >= self.hi {
            return (0.0, 0.0, 0.0);
        }
        let s = (t - self.lo) / self.step;
        let i = (s.floor() as usize).min(PROFILE_INTERVALS - 1);
        let u = s - i as f64;
        let a = &self.table[i];
        let b = &self.table[i + 1];
        let (v, d, dd) = hermite5(a[0], a[1], a[2], b[0], b[1], b[2], self.step, u);
        (v.clamp(0.0, 1.0), d, dd)
    }
}

/// Value, gradient and Hessian of a bump at a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpJet {
    pub value: f64,
    pub grad: Point,
    pub hess: Matrix3<f64>,
}

impl BumpJet {
    pub fn zero() -> Self {
        Self { value: 0.0, grad: Point::zeros(), hess: Matrix3::zeros() }
    }

    pub fn constant(v: f64) -> Self {
        Self { value: v, ..Self::zero() }
    }
}

/// Mollified indicator of the eroded domain {depth > t}, sampled on a lattice.
pub struct InteriorBump {
    model: Arc<dyn BoundaryModel>,
    dim: usize,
    /// Lattice spacing.
    pub spacing: f64,
    /// Mollifier scale.
    pub scale: f64,
    /// Erosion depth.
    pub depth: f64,
    offsets: Vec<([i64; 3], f64)>,
    cache: Mutex<HashMap<[i64; 3], f64>>,
}

impl std::fmt::Debug for InteriorBump {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InteriorBump")
            .field("spacing", &self.spacing)
            .field("scale", &self.scale)
            .field("depth", &self.depth)
            .finish()
    }
}

impl InteriorBump {
    pub fn new(model: Arc<dyn BoundaryModel>, scale: f64, depth: f64, spacing: f64) -> Self {
        let dim = model.dim();
        let k = MollifierKernel::cached(dim);
        let reach = (scale / spacing).ceil() as i64;
        let zr = if dim == 3 { reach } else { 0 };
        let mut offsets = Vec::new();
        for i in -reach..=reach {
            for j in -reach..=reach {
                for l in -zr..=zr {
                    let r = spacing * ((i * i + j * j + l * l) as f64).sqrt();
                    let w = k.profile(r / scale);
                    if w > 0.0 {
                        offsets.push(([i, j, l], w));
                    }
                }
            }
        }
        let total: f64 = offsets.iter().map(|o| o.1).sum();
        for o in &mut offsets {
            o.1 /= total;
        }
        Self { model, dim, spacing, scale, depth, offsets, cache: Mutex::new(HashMap::new()) }
    }

    fn node_point(&self, idx: &[i64; 3]) -> Point {
        Point::new(idx[0] as f64, idx[1] as f64, idx[2] as f64) * self.spacing
    }

    fn node_value(&self, idx: [i64; 3]) -> f64 {
        let x = self.node_point(&idx);
        let d = self.model.depth(&x);
        if d > self.depth + self.scale {
            return 1.0;
        }
        if d <= self.depth - self.scale {
            return 0.0;
        }
        if let Some(v) = self.cache.lock().unwrap().get(&idx) {
            return *v;
        }
        let mut v = 0.0;
        for (o, w) in &self.offsets {
            let q = [idx[0] + o[0], idx[1] + o[1], idx[2] + o[2]];
            if self.model.depth(&self.node_point(&q)) > self.depth {
                v += w;
            }
        }
        self.cache.lock().unwrap().insert(idx, v);
        v
    }

    /// Multilinear interpolant with its gradient and (mixed-only) Hessian.
    pub fn jet(&self, x: &Point) -> BumpJet {
        let margin = self.scale + self.spacing * (self.dim as f64).sqrt();
        let d = self.model.depth(x);
        if d >= self.depth + margin {
            return BumpJet::constant(1.0);
        }
        if d <= self.depth - margin {
            return BumpJet::zero();
        }
        let h = self.spacing;
        let mut base = [0i64; 3];
        let mut u = [0.0; 3];
        for a in 0..self.dim {
            let s = x[a] / h;
            base[a] = s.floor() as i64;
            u[a] = s - base[a] as f64;
        }
        let mut out = BumpJet::zero();
        for corner in 0..(1usize << self.dim) {
            let mut idx = base;
            let mut f = [0.0; 3];
            let mut df = [0.0; 3];
            for a in 0..self.dim {
                let bit = (corner >> a) & 1;
                idx[a] += bit as i64;
                if bit == 1 {
                    f[a] = u[a];
                    df[a] = 1.0 / h;
                } else {
                    f[a] = 1.0 - u[a];
                    df[a] = -1.0 / h;
                }
            }
            let v = self.node_value(idx);
            if v == 0.0 {
                continue;
            }
            let prod = |skip: &[usize]| -> f64 {
                (0..self.dim).filter(|a| !skip.contains(a)).map(|a| f[a]).product()
            };
            out.value += v * prod(&[]);
            for a in 0..self.dim {
                out.grad[a] += v * df[a] * prod(&[a]);
                for b in 0..self.dim {
                    if a != b {
                        out.hess[(a, b)] += v * df[a] * df[b] * prod(&[a, b]);
                    }
                }
            }
        }
        out
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.jet(x).value
    }
}

/// Summary of measured derivative sizes of the partition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBoundReport {
    /// max |grad xi_i| R.
    pub c1: f64,
    /// max second difference of xi_i times R^2.
    pub c2: f64,
    pub samples: usize,
}

impl DerivativeBoundReport {
    pub fn within_constants(&self) -> bool {
        self.c1 <= C1 && self.c2 <= C2
    }
}

/// Nonzero bump values at a point.
#[derive(Clone, Debug)]
pub struct BumpValues {
    /// (chart index, eta jet) for charts whose bump is positive.
    pub charts: Vec<(usize, BumpJet)>,
    pub interior: BumpJet,
    /// Sum of all etas with derivatives.
    pub sum: BumpJet,
}

/// Partition index: the interior bump or a chart bump.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Piece {
    Interior,
    Chart(usize),
}

/// The bumps eta_0, ..., eta_N and the normalized partition xi_i = eta_i / sum eta.
#[derive(Debug)]
pub struct BumpFamily {
    pub dim: usize,
    pub radius: f64,
    pub centers: Vec<Point>,
    /// Ball radius of the chart bumps before mollification.
    pub ball_radius: f64,
    /// Mollifier scale of the chart bumps.
    pub chart_scale: f64,
    pub interior: InteriorBump,
    profile: &'static RadialProfile,
    index: PointIndex,
}

impl BumpFamily {
    /// Builds the bumps for an atlas. The covering is checked and the eroded
    /// domain must be nonempty.
    pub fn build(atlas: &DomainAtlas) -> Result<Self> {
        Self::build_with_spacing(atlas, atlas.radius() / 512.0)
    }

    pub fn build_with_spacing(atlas: &DomainAtlas, spacing: f64) -> Result<Self> {
        atlas.check_covering()?;
        let r = atlas.radius();
        let dim = atlas.dim;
        let model = atlas.model.clone();
        check_erosion(model.as_ref(), r / 16.0)?;
        let interior = InteriorBump::new(model, r / 64.0, 3.0 * r / 64.0, spacing);
        let chart_scale = r / 32.0;
        Ok(Self {
            dim,
            radius: r,
            centers: atlas.centers.clone(),
            ball_radius: BALL_OVER_SCALE * chart_scale,
            chart_scale,
            interior,
            profile: RadialProfile::cached(dim),
            index: PointIndex::new(&atlas.centers, dim),
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Radius outside of which a chart bump vanishes.
    pub fn chart_support(&self) -> f64 {
        self.ball_radius + self.chart_scale
    }

    /// Charts whose bump may be positive at x.
    pub fn charts_near(&self, x: &Point) -> Vec<usize> {
        self.index.within(x, self.chart_support())
    }

    pub fn eta_chart(&self, j: usize, x: &Point) -> f64 {
        let r = (x - self.centers[j]).norm();
        self.profile.eval(r / self.chart_scale).0
    }

    pub fn eta_chart_jet(&self, j: usize, x: &Point) -> BumpJet {
        let dx = x - self.centers[j];
        let r = dx.norm();
        let e = self.chart_scale;
        let (v, d, dd) = self.profile.eval(r / e);
        if d == 0.0 && dd == 0.0 {
            return BumpJet::constant(v);
        }
        let n = dx / r;
        let (d, dd) = (d / e, dd / (e * e));
        let mut proj = Matrix3::identity() - n * n.transpose();
        for k in self.dim..3 {
            proj[(k, k)] = 0.0;
        }
        BumpJet { value: v, grad: d * n, hess: dd * n * n.transpose() + d / r * proj }
    }

    pub fn eta_interior(&self, x: &Point) -> f64 {
        self.interior.value(x)
    }

    /// All positive bumps at x with their derivatives.
    pub fn values(&self, x: &Point) -> BumpValues {
        let interior = self.interior.jet(x);
        let mut sum = interior;
        let mut charts = Vec::new();
        for j in self.charts_near(x) {
            let b = self.eta_chart_jet(j, x);
            if b.value > 0.0 {
                sum.value += b.value;
                sum.grad += b.grad;
                sum.hess += b.hess;
                charts.push((j, b));
            }
        }
        BumpValues { charts, interior, sum }
    }

    /// xi_piece(x).
    pub fn xi(&self, piece: Piece, x: &Point) -> Result<f64> {
        let b = self.values(x);
        if b.sum.value <= 0.0 {
            return Err(Error::OutsideW);
        }
        let eta = match piece {
            Piece::Interior => b.interior.value,
            Piece::Chart(j) => b.charts.iter().find(|c| c.0 == j).map_or(0.0, |c| c.1.value),
        };
        Ok(eta / b.sum.value)
    }

    /// All nonzero xi at x, interior first, then charts in index order.
    pub fn xi_all(&self, x: &Point) -> Result<Vec<(Piece, f64)>> {
        let b = self.values(x);
        let s = b.sum.value;
        if s <= 0.0 {
            return Err(Error::OutsideW);
        }
        let mut out = Vec::with_capacity(b.charts.len() + 1);
        if b.interior.value > 0.0 {
            out.push((Piece::Interior, b.interior.value / s));
        }
        out.extend(b.charts.iter().map(|(j, c)| (Piece::Chart(*j), c.value / s)));
        Ok(out)
    }

    /// Whether x lies in W, the set where some bump is positive.
    pub fn in_w(&self, x: &Point) -> bool {
        self.values(x).sum.value > 0.0
    }

    /// Random points of W: half near chart centres, half in the eroded interior.
    pub fn sample_w(&self, model: &dyn BoundaryModel, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let (lo, hi) = model.bbox();
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count && tries < 200 * count.max(1) {
            tries += 1;
            let x = if out.len() % 2 == 0 {
                let c = self.centers[rng.gen_range(0..self.centers.len())];
                let mut v = Point::zeros();
                for a in 0..self.dim {
                    v[a] = rng.gen_range(-1.0..1.0);
                }
                c + v * self.chart_support()
            } else {
                let mut p = Point::zeros();
                for a in 0..self.dim {
                    p[a] = rng.gen_range(lo[a]..hi[a]);
                }
                p
            };
            if self.in_w(&x) {
                out.push(x);
            }
        }
        out
    }

    /// Measures max |grad xi_i| R and the largest directional second
    /// difference of xi_i at spacing R/256, times R^2.
    pub fn derivative_bounds(&self, samples: &[Point]) -> DerivativeBoundReport {
        let r = self.radius;
        let h = r / 256.0;
        let mut dirs = Vec::new();
        for a in 0..self.dim {
            let mut e = Point::zeros();
            e[a] = 1.0;
            dirs.push(e);
            for b in 0..a {
                let mut p = Point::zeros();
                p[a] = 1.0;
                p[b] = 1.0;
                dirs.push(p / 2f64.sqrt());
                p[b] = -1.0;
                dirs.push(p / 2f64.sqrt());
            }
        }
        let mut rep = DerivativeBoundReport { samples: samples.len(), ..Default::default() };
        for x in samples {
            let b = self.values(x);
            let s = b.sum.value;
            if s <= 0.0 {
                continue;
            }
            let mut pieces: Vec<(Piece, BumpJet)> = b.charts.iter().map(|(j, c)| (Piece::Chart(*j), *c)).collect();
            pieces.push((Piece::Interior, b.interior));
            for (piece, eta) in &pieces {
                let xi = eta.value / s;
                let g = (eta.grad - xi * b.sum.grad) / s;
                rep.c1 = rep.c1.max(g.norm() * r);
                for d in &dirs {
                    let fwd = self.xi(*piece, &(x + d * h));
                    let bwd = self.xi(*piece, &(x - d * h));
                    if let (Ok(f), Ok(bk)) = (fwd, bwd) {
                        let sd = (f - 2.0 * xi + bk) / (h * h);
                        rep.c2 = rep.c2.max(sd.abs() * r * r);
                    }
                }
            }
        }
        rep
    }
}

/// Errors when no lattice point of the bounding box has depth above `t`.
fn check_erosion(model: &dyn BoundaryModel, t: f64) -> Result<()> {
    let (lo, hi) = model.bbox();
    let k = if model.dim() == 2 { 96 } else { 32 };
    let zk = if model.dim() == 3 { k } else { 1 };
    for i in 0..=k {
        for j in 0..=k {
            for l in 0..=zk {
                let mut p = Point::zeros();
                let f = [i as f64 / k as f64, j as f64 / k as f64, l as f64 / zk.max(1) as f64];
                for a in 0..model.dim() {
                    p[a] = lo[a] + f[a] * (hi[a] - lo[a]);
                }
                if model.depth(&p) > t {
                    return Ok(());
                }
            }
        }
    }
    Err(Error::InvalidParameter(format!("eroded domain at depth {t:.4} is empty")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::atlas::make_shape;
    use crate::geometry::shapes::ShapeParams;
    use std::f64::consts::PI;

    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    /// Q(t) by integrating the kernel over the part of each sphere of radius s
    /// around x that falls inside the ball.
    fn profile_oracle(dim: usize, t: f64) -> f64 {
        let k = MollifierKernel::new(dim);
        let a = BALL_OVER_SCALE;
        let f = |s: f64| {
            if s == 0.0 {
                return 0.0;
            }
            let c = ((a * a - t * t - s * s) / (2.0 * t * s)).clamp(-1.0, 1.0);
            if dim == 2 {
                k.profile(s) * s * 2.0 * (PI - c.acos())
            } else {
                k.profile(s) * s * s * 2.0 * PI * (1.0 + c)
            }
        };
        // the shell fraction has a square-root kink at s0 = |a - t|
        let s0 = (a - t).abs().min(1.0);
        let tail = |v: f64| 2.0 * v * (1.0 - s0) * f(s0 + (1.0 - s0) * v * v);
        simpson(&f, 0.0, s0, 4000) + simpson(&tail, 0.0, 1.0, 4000)
    }

    #[test]
    fn profile_matches_spherical_shell_oracle() {
        for dim in [2, 3] {
            let p = RadialProfile::cached(dim);
            assert!((p.plateau() - 1.0).abs() < 1e-10, "plateau {}", p.plateau());
            for t in [5.2, 5.5, 5.9, 6.0, 6.3, 6.8] {
                let o = profile_oracle(dim, t);
                assert!((p.eval(t).0 - o).abs() < 1e-8, "dim {dim} t {t}: {} vs {o}", p.eval(t).0);
            }
        }
    }

    #[test]
    fn profile_at_ball_radius_is_near_one_half() {
        for dim in [2, 3] {
            let v = RadialProfile::cached(dim).eval(BALL_OVER_SCALE).0;
            assert!((v - 0.5).abs() < 0.05, "{v}");
            // the outside of the ball is larger by curvature: less than one half
            assert!(v < 0.5);
        }
    }

    #[test]
    fn profile_derivatives_match_differences() {
        let p = RadialProfile::cached(2);
        let h = 1e-5;
        for t in [5.3, 6.0, 6.6] {
            let (_, d, dd) = p.eval(t);
            let fd = (p.eval(t + h).0 - p.eval(t - h).0) / (2.0 * h);
            let fdd = (p.eval(t + h).1 - p.eval(t - h).1) / (2.0 * h);
            assert!((d - fd).abs() < 1e-6);
            assert!((dd - fdd).abs() < 1e-4);
        }
    }

    fn disk() -> DomainAtlas {
        make_shape("disk", &ShapeParams::default().with("radius", 1.0).with("lipschitz", 0.5)).unwrap()
    }

    #[test]
    fn bump_support_and_plateau() {
        let atlas = disk();
        let b = BumpFamily::build_with_spacing(&atlas, atlas.radius() / 256.0).unwrap();
        let r = atlas.radius();
        let c = atlas.centers[0];
        let dir = c / c.norm();
        assert_eq!(b.eta_chart(0, &(c + dir * (r / 8.0 - 1e-9))), 1.0);
        assert_eq!(b.eta_chart(0, &(c + dir * (r / 4.0 + 1e-9))), 0.0);
        // interior bump: one deep inside, zero near the boundary
        assert_eq!(b.eta_interior(&Point::zeros()), 1.0);
        assert_eq!(b.eta_interior(&(c * (1.0 - r / 64.0))), 0.0);
        assert_eq!(b.eta_interior(&(c * (1.0 - r / 16.0 - r / 64.0))), 1.0);
    }

    #[test]
    fn partition_sums_to_one() {
        let atlas = disk();
        let b = BumpFamily::build_with_spacing(&atlas, atlas.radius() / 256.0).unwrap();
        let pts = b.sample_w(atlas.model.as_ref(), 2000, 7);
        assert_eq!(pts.len(), 2000);
        for x in &pts {
            let s: f64 = b.xi_all(x).unwrap().iter().map(|p| p.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(b.xi(Piece::Interior, &Point::zeros()).unwrap(), 1.0);
        assert!(matches!(b.xi(Piece::Interior, &Point::new(10.0, 0.0, 0.0)), Err(Error::OutsideW)));
    }

    #[test]
    fn two_equal_bumps_split_evenly() {
        let atlas = disk();
        let b = BumpFamily::build_with_spacing(&atlas, atlas.radius() / 256.0).unwrap();
        let p = atlas.centers[0];
        let k = *atlas.centers_within(&p, atlas.radius() / 4.0).iter().find(|&&k| k != 0).unwrap();
        let mid = 0.5 * (p + atlas.centers[k]);
        let xs = b.xi_all(&mid).unwrap();
        let xp = xs.iter().find(|e| e.0 == Piece::Chart(0)).unwrap().1;
        let xq = xs.iter().find(|e| e.0 == Piece::Chart(k)).unwrap().1;
        assert!((xp - xq).abs() < 1e-12);
    }

    #[test]
    fn chart_bump_jet_matches_differences() {
        let atlas = disk();
        let b = BumpFamily::build_with_spacing(&atlas, atlas.radius() / 256.0).unwrap();
        let c = atlas.centers[3];
        let x = c + Point::new(0.7, -0.4, 0.0) * (0.18 * atlas.radius());
        let j = b.eta_chart_jet(3, &x);
        let (_, g, h) = crate::geometry::shapes::fd_jet(|p| b.eta_chart(3, p), &x, 2, atlas.radius() * 0.01);
        assert!((j.grad - g).norm() < 1e-4 * j.grad.norm().max(1.0));
        assert!((j.hess - h).amax() < 1e-2 * j.hess.amax().max(1.0));
    }

    #[test]
    fn erosion_empty_is_an_error() {
        let atlas = make_shape("square", &ShapeParams::default()).unwrap();
        assert!(check_erosion(atlas.model.as_ref(), 100.0).is_err());
        assert!(check_erosion(atlas.model.as_ref(), atlas.radius() / 16.0).is_ok());
    }
}
