use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector2};

use super::chart::{ChartFn, CircleArc, ConvexChart, ImplicitChart, LevelSet, LipschitzChart, SphereCap};
use super::frame::{Point, ReferenceFrame};
use super::index::PointIndex;
use crate::error::{Error, Result};

/// Geometric model of a bounded domain: inside test, distance to the
/// boundary, boundary sampling, and local charts.
pub trait BoundaryModel: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    /// Signed distance to the boundary, positive inside.
    fn depth(&self, x: &Point) -> f64;

    /// Depth with gradient and Hessian. The default uses central differences.
    fn depth_jet(&self, x: &Point) -> (f64, Point, Matrix3<f64>) {
        fd_jet(|p| self.depth(p), x, self.dim(), self.length_scale())
    }

    /// Boundary samples with outward unit normals at spacing about `spacing`.
    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)>;

    /// Chart centred at the boundary point `p`.
    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart>;

    /// Axis-aligned bounding box.
    fn bbox(&self) -> (Point, Point);

    fn diameter(&self) -> f64;

    /// Typical size used to pick finite-difference steps.
    fn length_scale(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi - lo).amax()
    }
}

/// Central-difference gradient and Hessian of a scalar field.
pub fn fd_jet(f: impl Fn(&Point) -> f64, x: &Point, dim: usize, scale: f64) -> (f64, Point, Matrix3<f64>) {
    let h1 = 1e-6 * scale.max(1e-3);
    let h2 = 1e-4 * scale.max(1e-3);
    let v = f(x);
    let mut g = Point::zeros();
    let mut hm = Matrix3::zeros();
    for a in 0..dim {
        let mut e = Point::zeros();
        e[a] = h1;
        g[a] = (f(&(x + e)) - f(&(x - e))) / (2.0 * h1);
        let mut ea = Point::zeros();
        ea[a] = h2;
        hm[(a, a)] = (f(&(x + ea)) - 2.0 * v + f(&(x - ea))) / (h2 * h2);
        for b in 0..a {
            let mut eb = Point::zeros();
            eb[b] = h2;
            let d = (f(&(x + ea + eb)) - f(&(x + ea - eb)) - f(&(x - ea + eb)) + f(&(x - ea - eb)))
                / (4.0 * h2 * h2);
            hm[(a, b)] = d;
            hm[(b, a)] = d;
        }
    }
    (v, g, hm)
}

/// Named shape parameters, e.g. `disk:radius=4,lipschitz=0.2`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShapeParams(pub BTreeMap<String, f64>);

impl ShapeParams {
    pub fn get(&self, key: &str, default: f64) -> f64 {
        self.0.get(key).copied().unwrap_or(default)
    }

    pub fn opt(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.0.insert(key.to_string(), v);
        self
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for k in self.0.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter `{k}` (allowed: {})",
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Parses `name` or `name:key=value,key=value`.
pub fn parse_shape_arg(s: &str) -> Result<(String, ShapeParams)> {
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n.trim(), r),
        None => (s.trim(), ""),
    };
    let mut params = ShapeParams::default();
    for kv in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got `{kv}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("`{v}` is not a number")))?;
        params.0.insert(k.trim().to_string(), v);
    }
    Ok((name.to_string(), params))
}

fn check_radius(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "chart radius R = {r} must lie in (0, 1); adjust the size or lipschitz parameter"
        )));
    }
    Ok(())
}

/// Result of instantiating a library shape.
#[derive(Debug, Clone)]
pub struct ShapeSpec {
    pub name: String,
    pub model: Arc<dyn BoundaryModel>,
    pub lipschitz: f64,
    pub radius: f64,
    /// True when the boundary is C^{1,1} or better, so curvature is a function.
    pub smooth: bool,
}

/// Instantiates a library shape with its analytically known (L, R).
pub fn shape_spec(name: &str, p: &ShapeParams) -> Result<ShapeSpec> {
    match name {
        "disk" | "sphere" => {
            p.check_keys(&["radius", "lipschitz", "chart_radius"])?;
            let dim = if name == "disk" { 2 } else { 3 };
            let rho = p.get("radius", 1.0);
            if rho <= 0.0 {
                return Err(Error::InvalidParameter("radius must be positive".into()));
            }
            let (l, r) = match p.opt("chart_radius") {
                Some(r) => {
                    if r >= rho {
                        return Err(Error::InvalidParameter("chart_radius must be below radius".into()));
                    }
                    (r / (rho * rho - r * r).sqrt(), r)
                }
                None => {
                    let l = p.get("lipschitz", if dim == 2 { 0.2 } else { 0.75 });
                    (l, rho * l / (1.0 + l * l).sqrt())
                }
            };
            check_radius(r)?;
            let model = Arc::new(Ball { center: Point::zeros(), rho, dim });
            Ok(ShapeSpec { name: name.into(), model, lipschitz: l, radius: r, smooth: true })
        }
        "square" | "regular_polygon" => {
            let (k, circ) = if name == "square" {
                p.check_keys(&["side", "chart_radius"])?;
                let side = p.get("side", 2.0);
                (4usize, side / 2f64.sqrt())
            } else {
                p.check_keys(&["sides", "radius", "chart_radius"])?;
                let k = p.get("sides", 6.0);
                if k < 3.0 || k.fract() != 0.0 {
                    return Err(Error::InvalidParameter("sides must be an integer >= 3".into()));
                }
                (k as usize, p.get("radius", 1.0))
            };
            if circ <= 0.0 {
                return Err(Error::InvalidParameter("size must be positive".into()));
            }
            let side = 2.0 * circ * (PI / k as f64).sin();
            let r = p.get("chart_radius", (side / 8.0).min(0.9));
            if r > side / 6.0 {
                return Err(Error::InvalidParameter(format!(
                    "chart_radius {r} too large for side {side}; must be <= side/6"
                )));
            }
            check_radius(r)?;
            let offset = if k == 4 { PI / 4.0 } else { PI / 2.0 };
            let poly = Polygon::regular(k, circ, offset);
            let l = if k == 4 { 1.0 } else { (PI / k as f64).tan() };
            Ok(ShapeSpec { name: name.into(), model: Arc::new(poly), lipschitz: l, radius: r, smooth: false })
        }
        "cube" => {
            p.check_keys(&["half", "chart_radius"])?;
            let half = p.get("half", 1.0);
            let r = p.get("chart_radius", (half / 5.0).min(0.9));
            if r > half / 3.0 {
                return Err(Error::InvalidParameter("chart_radius must be <= half/3".into()));
            }
            check_radius(r)?;
            Ok(ShapeSpec {
                name: name.into(),
                model: Arc::new(Cube { half }),
                lipschitz: 2f64.sqrt(),
                radius: r,
                smooth: false,
            })
        }
        "cylinder" => {
            p.check_keys(&["radius", "half_height", "chart_radius", "lipschitz"])?;
            let rho = p.get("radius", 1.0);
            let h = p.get("half_height", 1.0);
            let r = p.get("chart_radius", (rho.min(h) / 5.0).min(0.9));
            if r > rho.min(h) / 3.0 {
                return Err(Error::InvalidParameter("chart_radius must be <= min(radius, half_height)/3".into()));
            }
            check_radius(r)?;
            // rim frames see the lateral surface tilt sideways by up to about R/rho
            let tilt = (1.6 * r / rho).tan();
            let l = p.get("lipschitz", (1.0 + 2.0 * tilt * tilt).sqrt());
            Ok(ShapeSpec {
                name: name.into(),
                model: Arc::new(Cylinder { rho, half: h }),
                lipschitz: l,
                radius: r,
                smooth: false,
            })
        }
        "star" => {
            p.check_keys(&["radius", "amplitude", "lobes", "lipschitz", "chart_radius"])?;
            let r0 = p.get("radius", 1.0);
            let amp = p.get("amplitude", 0.1);
            let lobes = p.get("lobes", 5.0);
            if !(0.0..1.0).contains(&amp) || lobes < 1.0 || lobes.fract() != 0.0 || r0 <= 0.0 {
                return Err(Error::InvalidParameter("need radius > 0, 0 <= amplitude < 1, integer lobes".into()));
            }
            let l = p.get("lipschitz", 1.0);
            let r = p.get("chart_radius", 0.1 * r0);
            check_radius(r)?;
            let star = Star::new(r0, amp, lobes);
            star.validate(r, l)?;
            Ok(ShapeSpec { name: name.into(), model: Arc::new(star), lipschitz: l, radius: r, smooth: true })
        }
        other => Err(Error::UnknownShape(other.to_string())),
    }
}

// ---------------------------------------------------------------- ball

#[derive(Debug, Clone)]
pub struct Ball {
    pub center: Point,
    pub rho: f64,
    pub dim: usize,
}

impl LevelSet for Ball {
    fn level(&self, x: &Point) -> f64 {
        (x - self.center).norm() - self.rho
    }
    fn level_grad(&self, x: &Point) -> Point {
        (x - self.center).normalize()
    }
    fn level_hess(&self, x: &Point) -> Matrix3<f64> {
        let d = x - self.center;
        let r = d.norm();
        let e = d / r;
        let mut id = Matrix3::identity();
        if self.dim == 2 {
            id[(2, 2)] = 0.0;
        }
        (id - e * e.transpose()) / r
    }
}

impl BoundaryModel for Ball {
    fn dim(&self) -> usize {
        self.dim
    }

    fn depth(&self, x: &Point) -> f64 {
        self.rho - (x - self.center).norm()
    }

    fn depth_jet(&self, x: &Point) -> (f64, Point, Matrix3<f64>) {
        (self.depth(x), -self.level_grad(x), -self.level_hess(x))
    }

    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        if self.dim == 2 {
            let n = ((2.0 * PI * self.rho / spacing).ceil() as usize).max(8);
            for k in 0..n {
                let t = 2.0 * PI * k as f64 / n as f64;
                let e = Point::new(t.cos(), t.sin(), 0.0);
                out.push((self.center + self.rho * e, e));
            }
        } else {
            let n = ((4.0 * PI * self.rho * self.rho / (spacing * spacing)).ceil() as usize).max(32);
            let golden = PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let s = (1.0 - z * z).sqrt();
                let t = golden * k as f64;
                let e = Point::new(s * t.cos(), s * t.sin(), z);
                out.push((self.center + self.rho * e, e));
            }
        }
        out
    }

    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart> {
        let e = (p - self.center).normalize();
        let base = self.center + self.rho * e;
        let frame = ReferenceFrame::from_normal(&e, base, self.dim);
        let func: Arc<dyn ChartFn> = if self.dim == 2 {
            Arc::new(CircleArc { rho: self.rho })
        } else {
            Arc::new(SphereCap { rho: self.rho })
        };
        Ok(LipschitzChart { frame, radius, lipschitz, func })
    }

    fn bbox(&self) -> (Point, Point) {
        let mut r = Point::repeat(self.rho);
        if self.dim == 2 {
            r.z = 0.0;
        }
        (self.center - r, self.center + r)
    }

    fn diameter(&self) -> f64 {
        2.0 * self.rho
    }
}

// ---------------------------------------------------------------- polygon

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone)]
pub struct Polygon {
    pub vertices: Vec<Vector2<f64>>,
    normals: Vec<Vector2<f64>>,
    offsets: Vec<f64>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vector2<f64>>) -> Self {
        let k = vertices.len();
        let mut normals = Vec::with_capacity(k);
        let mut offsets = Vec::with_capacity(k);
        for i in 0..k {
            let a = vertices[i];
            let b = vertices[(i + 1) % k];
            let d = b - a;
            let n = Vector2::new(d.y, -d.x).normalize();
            normals.push(n);
            offsets.push(n.dot(&a));
        }
        Self { vertices, normals, offsets }
    }

    pub fn regular(k: usize, circumradius: f64, offset: f64) -> Self {
        let v = (0..k)
            .map(|i| {
                let t = offset + 2.0 * PI * i as f64 / k as f64;
                Vector2::new(circumradius * t.cos(), circumradius * t.sin())
            })
            .collect();
        Self::new(v)
    }

    fn xy(x: &Point) -> Vector2<f64> {
        Vector2::new(x.x, x.y)
    }

    fn active(&self, x: &Point) -> usize {
        let q = Self::xy(x);
        let mut best = 0;
        let mut bv = f64::NEG_INFINITY;
        for (i, (n, c)) in self.normals.iter().zip(&self.offsets).enumerate() {
            let v = n.dot(&q) - c;
            if v > bv {
                bv = v;
                best = i;
            }
        }
        best
    }

    fn segment_distance(&self, q: &Vector2<f64>, i: usize) -> f64 {
        let a = self.vertices[i];
        let b = self.vertices[(i + 1) % self.vertices.len()];
        let d = b - a;
        let t = ((q - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
        (q - (a + t * d)).norm()
    }

    fn centroid(&self) -> Vector2<f64> {
        self.vertices.iter().sum::<Vector2<f64>>() / self.vertices.len() as f64
    }
}

impl LevelSet for Polygon {
    fn level(&self, x: &Point) -> f64 {
        let i = self.active(x);
        self.normals[i].dot(&Self::xy(x)) - self.offsets[i]
    }
    fn level_grad(&self, x: &Point) -> Point {
        let n = self.normals[self.active(x)];
        Point::new(n.x, n.y, 0.0)
    }
    fn level_hess(&self, _x: &Point) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

impl BoundaryModel for Polygon {
    fn dim(&self) -> usize {
        2
    }

    fn depth(&self, x: &Point) -> f64 {
        let q = Self::xy(x);
        let inside = self
            .normals
            .iter()
            .zip(&self.offsets)
            .map(|(n, c)| c - n.dot(&q))
            .fold(f64::INFINITY, f64::min);
        if inside > 0.0 {
            inside
        } else {
            -(0..self.vertices.len())
                .map(|i| self.segment_distance(&q, i))
                .fold(f64::INFINITY, f64::min)
        }
    }

    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)> {
        let k = self.vertices.len();
        let mut out = Vec::new();
        for i in 0..k {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % k];
            let n = self.normals[i];
            let np = self.normals[(i + k - 1) % k];
            let nv = (n + np).normalize();
            out.push((Point::new(a.x, a.y, 0.0), Point::new(nv.x, nv.y, 0.0)));
            let cnt = ((b - a).norm() / spacing).ceil() as usize;
            for j in 1..cnt {
                let p = a + (b - a) * (j as f64 / cnt as f64);
                out.push((Point::new(p.x, p.y, 0.0), Point::new(n.x, n.y, 0.0)));
            }
        }
        out
    }

    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart> {
        let q = Self::xy(p);
        let c = self.centroid();
        let (iv, dv) = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (i, (v - q).norm()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let normal = if dv < 1.25 * radius {
            (self.vertices[iv] - c).normalize()
        } else {
            self.normals[self.active(p)]
        };
        let frame = ReferenceFrame::from_normal(&Point::new(normal.x, normal.y, 0.0), *p, 2);
        let halfspaces: Vec<(Point, f64)> =
            self.normals.iter().zip(&self.offsets).map(|(n, o)| (Point::new(n.x, n.y, 0.0), *o)).collect();
        let func = Arc::new(ConvexChart::new(&frame, &halfspaces));
        Ok(LipschitzChart { frame, radius, lipschitz, func })
    }

    fn bbox(&self) -> (Point, Point) {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        lo.z = 0.0;
        hi.z = 0.0;
        (lo, hi)
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max((a - b).norm());
            }
        }
        d
    }
}

// ---------------------------------------------------------------- cube

/// Axis-aligned cube [-half, half]^3.
#[derive(Debug, Clone)]
pub struct Cube {
    pub half: f64,
}

impl LevelSet for Cube {
    fn level(&self, x: &Point) -> f64 {
        x.abs().max() - self.half
    }
    fn level_grad(&self, x: &Point) -> Point {
        let a = x.abs();
        let i = a.imax();
        let mut g = Point::zeros();
        g[i] = x[i].signum();
        g
    }
    fn level_hess(&self, _x: &Point) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

impl BoundaryModel for Cube {
    fn dim(&self) -> usize {
        3
    }

    fn depth(&self, x: &Point) -> f64 {
        let q = x.abs() - Point::repeat(self.half);
        let outside = q.map(|v| v.max(0.0)).norm();
        -(outside + q.max().min(0.0))
    }

    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)> {
        let s = self.half;
        let k = ((2.0 * s / spacing).ceil() as usize).max(2);
        let mut out = Vec::new();
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                for i in 0..=k {
                    for j in 0..=k {
                        let u = -s + 2.0 * s * i as f64 / k as f64;
                        let v = -s + 2.0 * s * j as f64 / k as f64;
                        let mut p = Point::zeros();
                        p[axis] = sign * s;
                        p[(axis + 1) % 3] = u;
                        p[(axis + 2) % 3] = v;
                        let mut n = Point::zeros();
                        for a in 0..3 {
                            if (p[a].abs() - s).abs() < 1e-12 {
                                n[a] = p[a].signum();
                            }
                        }
                        out.push((p, n.normalize()));
                    }
                }
            }
        }
        out
    }

    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart> {
        let s = self.half;
        // distance from p to the faces it is not on, per axis
        let gaps = p.map(|v| s - v.abs());
        let mut near: Vec<usize> = (0..3).filter(|&a| gaps[a] < 1e-9).collect();
        if near.is_empty() {
            return Err(Error::InvalidParameter("point not on the cube surface".into()));
        }
        let face = near[0];
        let mut others: Vec<usize> = (0..3).filter(|&a| a != face).collect();
        others.sort_by(|&a, &b| gaps[a].partial_cmp(&gaps[b]).unwrap());
        let de = gaps[others[0]];
        let dv = (gaps[others[0]].powi(2) + gaps[others[1]].powi(2)).sqrt();
        near.clear();
        near.push(face);
        if dv < 2.0 * radius {
            near.extend_from_slice(&others);
        } else if de < 1.25 * radius {
            near.push(others[0]);
        }
        let mut n = Point::zeros();
        for &a in &near {
            n[a] = if p[a] >= 0.0 { 1.0 } else { -1.0 };
        }
        let frame = ReferenceFrame::from_normal(&n, *p, 3);
        let mut halfspaces = Vec::with_capacity(6);
        for a in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut e = Point::zeros();
                e[a] = sign;
                halfspaces.push((e, s));
            }
        }
        let func = Arc::new(ConvexChart::new(&frame, &halfspaces));
        Ok(LipschitzChart { frame, radius, lipschitz, func })
    }

    fn bbox(&self) -> (Point, Point) {
        (Point::repeat(-self.half), Point::repeat(self.half))
    }

    fn diameter(&self) -> f64 {
        2.0 * self.half * 3f64.sqrt()
    }
}

// ---------------------------------------------------------------- cylinder

/// Solid cylinder of radius `rho` around the z axis with |z| < half.
#[derive(Debug, Clone)]
pub struct Cylinder {
    pub rho: f64,
    pub half: f64,
}

impl Cylinder {
    fn parts(&self, x: &Point) -> (f64, f64) {
        ((x.x * x.x + x.y * x.y).sqrt() - self.rho, x.z.abs() - self.half)
    }
}

impl LevelSet for Cylinder {
    fn level(&self, x: &Point) -> f64 {
        let (a, b) = self.parts(x);
        a.max(b)
    }
    fn level_grad(&self, x: &Point) -> Point {
        let (a, b) = self.parts(x);
        if a >= b {
            let r = (x.x * x.x + x.y * x.y).sqrt();
            Point::new(x.x / r, x.y / r, 0.0)
        } else {
            Point::new(0.0, 0.0, x.z.signum())
        }
    }
    fn level_hess(&self, x: &Point) -> Matrix3<f64> {
        let (a, b) = self.parts(x);
        if a >= b {
            let r = (x.x * x.x + x.y * x.y).sqrt();
            let (ex, ey) = (x.x / r, x.y / r);
            Matrix3::new(1.0 - ex * ex, -ex * ey, 0.0, -ex * ey, 1.0 - ey * ey, 0.0, 0.0, 0.0, 0.0) / r
        } else {
            Matrix3::zeros()
        }
    }
}

impl BoundaryModel for Cylinder {
    fn dim(&self) -> usize {
        3
    }

    fn depth(&self, x: &Point) -> f64 {
        let (a, b) = self.parts(x);
        let outside = (a.max(0.0).powi(2) + b.max(0.0).powi(2)).sqrt();
        -(a.max(b).min(0.0) + outside)
    }

    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)> {
        let mut out = Vec::new();
        let nt = ((2.0 * PI * self.rho / spacing).ceil() as usize).max(8);
        let nz = ((2.0 * self.half / spacing).ceil() as usize).max(2);
        for i in 0..nt {
            let t = 2.0 * PI * i as f64 / nt as f64;
            let (s, c) = t.sin_cos();
            for j in 0..=nz {
                let z = -self.half + 2.0 * self.half * j as f64 / nz as f64;
                let mut n = Point::new(c, s, 0.0);
                if j == 0 || j == nz {
                    n.z = z.signum();
                    n = n.normalize();
                }
                out.push((Point::new(self.rho * c, self.rho * s, z), n));
            }
        }
        let k = ((2.0 * self.rho / spacing).ceil() as usize).max(2);
        for sign in [-1.0, 1.0] {
            for i in 0..=k {
                for j in 0..=k {
                    let x = -self.rho + 2.0 * self.rho * i as f64 / k as f64;
                    let y = -self.rho + 2.0 * self.rho * j as f64 / k as f64;
                    if (x * x + y * y).sqrt() < self.rho - 0.5 * spacing {
                        out.push((Point::new(x, y, sign * self.half), Point::new(0.0, 0.0, sign)));
                    }
                }
            }
        }
        out
    }

    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart> {
        let r = (p.x * p.x + p.y * p.y).sqrt();
        let rim_gap = (self.rho - r).max(0.0).max(self.half - p.z.abs());
        let on_cap = (p.z.abs() - self.half).abs() < 1e-9;
        let radial = if r > 1e-12 { Point::new(p.x / r, p.y / r, 0.0) } else { Point::x() };
        let n = if rim_gap < 1.25 * radius {
            (radial + Point::new(0.0, 0.0, p.z.signum())).normalize()
        } else if on_cap {
            Point::new(0.0, 0.0, p.z.signum())
        } else {
            radial
        };
        let frame = ReferenceFrame::from_normal(&n, *p, 3);
        let ell = radius * (1.0 + lipschitz);
        let func = Arc::new(ImplicitChart { level: Arc::new(self.clone()), frame: frame.clone(), ell });
        Ok(LipschitzChart { frame, radius, lipschitz, func })
    }

    fn bbox(&self) -> (Point, Point) {
        (
            Point::new(-self.rho, -self.rho, -self.half),
            Point::new(self.rho, self.rho, self.half),
        )
    }

    fn diameter(&self) -> f64 {
        (4.0 * self.rho * self.rho + 4.0 * self.half * self.half).sqrt()
    }
}

// ---------------------------------------------------------------- star

/// Star-shaped planar domain r(theta) = r0 (1 + a cos(k theta)).
#[derive(Debug, Clone)]
pub struct Star {
    pub r0: f64,
    pub amp: f64,
    pub lobes: f64,
    samples: Arc<SampledBoundary>,
}

impl Star {
    pub fn new(r0: f64, amp: f64, lobes: f64) -> Self {
        let mut s = Self { r0, amp, lobes, samples: Arc::new(SampledBoundary::empty()) };
        let n = 40_000;
        let pts = (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64;
                (s.point(t), s.normal(t))
            })
            .collect();
        s.samples = Arc::new(SampledBoundary::new(pts, 2));
        s
    }

    fn r(&self, t: f64) -> (f64, f64, f64) {
        let k = self.lobes;
        (
            self.r0 * (1.0 + self.amp * (k * t).cos()),
            -self.r0 * self.amp * k * (k * t).sin(),
            -self.r0 * self.amp * k * k * (k * t).cos(),
        )
    }

    fn point(&self, t: f64) -> Point {
        let (r, _, _) = self.r(t);
        Point::new(r * t.cos(), r * t.sin(), 0.0)
    }

    fn normal(&self, t: f64) -> Point {
        let (r, dr, _) = self.r(t);
        let er = Point::new(t.cos(), t.sin(), 0.0);
        let et = Point::new(-t.sin(), t.cos(), 0.0);
        (er - et * (dr / r)).normalize()
    }

    fn validate(&self, radius: f64, lipschitz: f64) -> Result<()> {
        let m = 96;
        for i in 0..m {
            let t = 2.0 * PI * i as f64 / m as f64;
            let chart = self.chart_at(&self.point(t), radius, lipschitz)?;
            let ell = chart.ell();
            for y in chart.sample_grid(radius * 0.999, 65) {
                let lo = chart.frame.to_world(&y, -ell);
                let hi = chart.frame.to_world(&y, ell);
                if self.level(&lo) >= 0.0 || self.level(&hi) <= 0.0 {
                    return Err(Error::NotGraphical(format!(
                        "star boundary leaves the chart cylinder at theta = {t:.3}"
                    )));
                }
                let j = chart.jet(&y, 1);
                if j.grad.norm() > lipschitz {
                    return Err(Error::InvalidParameter(format!(
                        "star slope {:.3} exceeds requested lipschitz {lipschitz}",
                        j.grad.norm()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl LevelSet for Star {
    fn level(&self, x: &Point) -> f64 {
        let t = x.y.atan2(x.x);
        (x.x * x.x + x.y * x.y).sqrt() - self.r(t).0
    }
    fn level_grad(&self, x: &Point) -> Point {
        let rho = (x.x * x.x + x.y * x.y).sqrt();
        let t = x.y.atan2(x.x);
        let (_, dr, _) = self.r(t);
        let er = Point::new(t.cos(), t.sin(), 0.0);
        let et = Point::new(-t.sin(), t.cos(), 0.0);
        er - et * (dr / rho)
    }
    fn level_hess(&self, x: &Point) -> Matrix3<f64> {
        let rho = (x.x * x.x + x.y * x.y).sqrt();
        let t = x.y.atan2(x.x);
        let (_, dr, ddr) = self.r(t);
        let er = Point::new(t.cos(), t.sin(), 0.0);
        let et = Point::new(-t.sin(), t.cos(), 0.0);
        // g = rho - r(theta): g_rr = 0, mixed = r'/rho^2, tangential = 1/rho - r''/rho^2
        let h_rt = dr / (rho * rho);
        let h_tt = 1.0 / rho - ddr / (rho * rho);
        h_rt * (er * et.transpose() + et * er.transpose()) + h_tt * et * et.transpose()
    }
}

impl BoundaryModel for Star {
    fn dim(&self) -> usize {
        2
    }

    fn depth(&self, x: &Point) -> f64 {
        let d = self.samples.distance(x);
        if self.level(x) < 0.0 {
            d
        } else {
            -d
        }
    }

    fn sample_boundary(&self, spacing: f64) -> Vec<(Point, Point)> {
        // arc length parametrisation by accumulating a fine polyline
        let fine = 20_000;
        let mut out = Vec::new();
        let mut acc = 0.0;
        let mut prev = self.point(0.0);
        out.push((prev, self.normal(0.0)));
        for i in 1..fine {
            let t = 2.0 * PI * i as f64 / fine as f64;
            let p = self.point(t);
            acc += (p - prev).norm();
            prev = p;
            if acc >= spacing {
                out.push((p, self.normal(t)));
                acc = 0.0;
            }
        }
        out
    }

    fn chart_at(&self, p: &Point, radius: f64, lipschitz: f64) -> Result<LipschitzChart> {
        let n = self.level_grad(p).normalize();
        let frame = ReferenceFrame::from_normal(&n, *p, 2);
        let ell = radius * (1.0 + lipschitz);
        let func = Arc::new(ImplicitChart { level: Arc::new(self.clone()), frame: frame.clone(), ell });
        Ok(LipschitzChart { frame, radius, lipschitz, func })
    }

    fn bbox(&self) -> (Point, Point) {
        let r = self.r0 * (1.0 + self.amp);
        (Point::new(-r, -r, 0.0), Point::new(r, r, 0.0))
    }

    fn diameter(&self) -> f64 {
        let pts: Vec<Point> = (0..720).map(|i| self.point(2.0 * PI * i as f64 / 720.0)).collect();
        let mut d: f64 = 0.0;
        for a in &pts {
            for b in &pts {
                d = d.max((a - b).norm());
            }
        }
        d
    }
}

// ---------------------------------------------------------------- sampled boundary

/// Dense boundary samples with outward normals and a kd-tree for nearest queries.
#[derive(Debug)]
pub struct SampledBoundary {
    pub points: Vec<Point>,
    pub normals: Vec<Point>,
    index: Option<PointIndex>,
}

impl SampledBoundary {
    pub fn empty() -> Self {
        Self { points: vec![], normals: vec![], index: None }
    }

    pub fn new(samples: Vec<(Point, Point)>, dim: usize) -> Self {
        let (points, normals): (Vec<Point>, Vec<Point>) = samples.into_iter().unzip();
        let index = Some(PointIndex::new(&points, dim));
        Self { points, normals, index }
    }

    /// Index of and distance to the nearest sample.
    pub fn nearest(&self, x: &Point) -> (usize, f64) {
        self.index.as_ref().expect("non-empty sample set").nearest(x)
    }

    pub fn distance(&self, x: &Point) -> f64 {
        self.nearest(x).1
    }

    /// Signed distance using the normal at the nearest sample for the sign.
    pub fn signed_depth(&self, x: &Point) -> f64 {
        let (i, d) = self.nearest(x);
        if (x - self.points[i]).dot(&self.normals[i]) > 0.0 {
            -d
        } else {
            d
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frame::Tangent;

    #[test]
    fn parse_params() {
        let (n, p) = parse_shape_arg("disk:radius=4, lipschitz=0.2").unwrap();
        assert_eq!(n, "disk");
        assert_eq!(p.get("radius", 0.0), 4.0);
        assert!(parse_shape_arg("disk:radius").is_err());
        assert!(parse_shape_arg("disk:radius=x").is_err());
    }

    #[test]
    fn unknown_shape_and_bad_params() {
        assert!(matches!(shape_spec("blob", &ShapeParams::default()), Err(Error::UnknownShape(_))));
        let p = ShapeParams::default().with("radius", 20.0);
        assert!(shape_spec("disk", &p).is_err(), "R >= 1 must be rejected");
        let p = ShapeParams::default().with("amplitude", 0.6).with("lobes", 9.0);
        assert!(shape_spec("star", &p).is_err(), "spiky star must be rejected");
    }

    #[test]
    fn square_has_unit_lipschitz() {
        let s = shape_spec("square", &ShapeParams::default()).unwrap();
        assert_eq!(s.lipschitz, 1.0);
        assert!((s.model.diameter() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn polygon_depth_matches_square_formula() {
        let s = Polygon::regular(4, 2f64.sqrt(), PI / 4.0);
        assert!((s.depth(&Point::new(0.2, 0.5, 0.0)) - 0.5).abs() < 1e-12);
        assert!((s.depth(&Point::new(2.0, 2.0, 0.0)) + 2f64.sqrt()).abs() < 1e-12);
        assert!((s.depth(&Point::new(1.5, 0.0, 0.0)) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn box_and_cylinder_depths() {
        let c = Cube { half: 1.0 };
        assert!((c.depth(&Point::new(0.5, 0.0, 0.2)) - 0.5).abs() < 1e-12);
        assert!((c.depth(&Point::new(2.0, 2.0, 0.0)) + 2f64.sqrt()).abs() < 1e-12);
        let y = Cylinder { rho: 1.0, half: 2.0 };
        assert!((y.depth(&Point::new(0.0, 0.5, 0.0)) - 0.5).abs() < 1e-12);
        assert!((y.depth(&Point::new(0.0, 0.0, 2.5)) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn star_level_derivatives_match_differences() {
        let s = Star::new(1.0, 0.1, 5.0);
        let x = Point::new(0.7, 0.5, 0.0);
        let (_, g, h) = fd_jet(|p| s.level(p), &x, 2, 1.0);
        assert!((g - s.level_grad(&x)).norm() < 1e-7);
        assert!((h - s.level_hess(&x)).amax() < 1e-4);
    }

    #[test]
    fn cylinder_chart_slopes_within_lipschitz() {
        let spec = shape_spec("cylinder", &ShapeParams::default()).unwrap();
        let r = spec.radius;
        for p in [Point::new(1.0, 0.0, 1.0), Point::new(0.0, 1.0, 0.9), Point::new(0.3, 0.2, 1.0)] {
            let c = spec.model.chart_at(&p, r, spec.lipschitz).unwrap();
            assert!(c.eval(&Tangent::zeros()).abs() < 1e-12);
            for y in c.sample_grid(r * 0.999, 21) {
                assert!(c.jet(&y, 1).grad.norm() <= spec.lipschitz + 1e-9);
            }
        }
    }

    #[test]
    fn cylinder_charts_lie_on_the_cylinder() {
        let spec = shape_spec("cylinder", &ShapeParams::default().with("radius", 1.5)).unwrap();
        let r = spec.radius;
        for p in [Point::new(1.5, 0.0, 1.0), Point::new(0.0, 1.5, 0.2), Point::new(0.3, 0.2, -1.0), Point::new(1.5, 0.0, 0.85)] {
            let c = spec.model.chart_at(&p, r, spec.lipschitz).unwrap();
            for y in c.sample_grid(r * 0.999, 15) {
                assert!(spec.model.depth(&c.graph_point(&y)).abs() < 1e-9, "{p:?} {y:?}");
            }
        }
    }

    #[test]
    fn convex_charts_match_level_set_roots() {
        let sq = Polygon::regular(4, 2f64.sqrt(), PI / 4.0);
        for p in [Point::new(1.0, 0.3, 0.0), Point::new(1.0, 0.95, 0.0), Point::new(-0.2, -1.0, 0.0)] {
            let c = sq.chart_at(&p, 0.2, 1.0).unwrap();
            let imp = ImplicitChart { level: Arc::new(sq.clone()), frame: c.frame.clone(), ell: c.ell() };
            for y in c.sample_grid(0.2, 41) {
                assert!((c.eval(&y) - imp.value(&y)).abs() < 1e-12);
            }
        }
        let cube = Cube { half: 1.0 };
        let p = Point::new(1.0, 0.9, -0.95);
        let c = cube.chart_at(&p, 0.1, 2f64.sqrt()).unwrap();
        let imp = ImplicitChart { level: Arc::new(cube.clone()), frame: c.frame.clone(), ell: c.ell() };
        for y in c.sample_grid(0.1, 15) {
            assert!((c.eval(&y) - imp.value(&y)).abs() < 1e-12);
        }
    }

}
