use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix3;

use super::frame::{join, Point, ReferenceFrame, Tangent, TangentMatrix};
use crate::numeric::bracketed_root;

/// Value and derivatives of a chart at a point. `hess` is `None` when the
/// chart has no second derivatives available.
#[derive(Clone, Copy, Debug)]
pub struct ChartJet {
    pub value: f64,
    pub grad: Tangent,
    pub hess: Option<TangentMatrix>,
}

/// A scalar function of the tangential variables.
pub trait ChartFn: Send + Sync + fmt::Debug {
    fn value(&self, y: &Tangent) -> f64;
    /// `order` is 1 or 2; order 2 fills `hess` when available.
    fn jet(&self, y: &Tangent, order: usize) -> ChartJet;
}

/// A scalar level function in world coordinates, negative inside the domain.
pub trait LevelSet: Send + Sync + fmt::Debug {
    fn level(&self, x: &Point) -> f64;
    fn level_grad(&self, x: &Point) -> Point;
    fn level_hess(&self, x: &Point) -> Matrix3<f64>;
}

/// An L-Lipschitz graph over B'_R in a reference frame; the domain lies below it.
#[derive(Clone)]
pub struct LipschitzChart {
    pub frame: ReferenceFrame,
    pub radius: f64,
    pub lipschitz: f64,
    pub func: Arc<dyn ChartFn>,
}

impl fmt::Debug for LipschitzChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzChart")
            .field("base", self.frame.base())
            .field("radius", &self.radius)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

impl LipschitzChart {
    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn ell(&self) -> f64 {
        self.radius * (1.0 + self.lipschitz)
    }

    pub fn eval(&self, y: &Tangent) -> f64 {
        self.func.value(y)
    }

    pub fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        self.func.jet(y, order)
    }

    /// World point on the graph above y'.
    pub fn graph_point(&self, y: &Tangent) -> Point {
        self.frame.to_world(y, self.eval(y))
    }

    /// Whether world x lies in the open cylinder B'_R x (-ell, ell).
    pub fn in_cylinder(&self, x: &Point) -> bool {
        let (y, yn) = self.frame.to_local(x);
        y.norm() < self.radius && yn.abs() < self.ell()
    }

    /// Tangential sample points on a uniform grid clipped to B'_r.
    pub fn sample_grid(&self, r: f64, per_axis: usize) -> Vec<Tangent> {
        tangent_grid(self.dim(), r, per_axis)
    }
}

/// Nodes of a uniform grid over [-r, r]^{n-1} restricted to the closed ball B'_r.
pub fn tangent_grid(dim: usize, r: f64, per_axis: usize) -> Vec<Tangent> {
    let k = per_axis.max(2);
    let h = 2.0 * r / (k - 1) as f64;
    let mut out = Vec::new();
    if dim == 2 {
        for i in 0..k {
            out.push(Tangent::new(-r + i as f64 * h, 0.0));
        }
    } else {
        for j in 0..k {
            for i in 0..k {
                let y = Tangent::new(-r + i as f64 * h, -r + j as f64 * h);
                if y.norm() <= r * (1.0 + 1e-12) {
                    out.push(y);
                }
            }
        }
    }
    out
}

/// Gradient and Hessian of an implicitly defined graph {G(y', psi(y')) = 0}
/// from the local gradient and Hessian of G (vertical index `dim - 1`).
pub fn implicit_derivatives(
    grad: &Point,
    hess: Option<&Matrix3<f64>>,
    dim: usize,
) -> (Tangent, Option<TangentMatrix>) {
    let vn = dim - 1;
    let gn = grad[vn];
    let mut psi = Tangent::zeros();
    for a in 0..vn {
        psi[a] = -grad[a] / gn;
    }
    let h = hess.map(|h| {
        let mut out = TangentMatrix::zeros();
        for a in 0..vn {
            for b in 0..vn {
                out[(a, b)] = -(h[(a, b)]
                    + h[(a, vn)] * psi[b]
                    + h[(b, vn)] * psi[a]
                    + h[(vn, vn)] * psi[a] * psi[b])
                    / gn;
            }
        }
        out
    });
    (psi, h)
}

/// Sphere cap of radius `rho` seen from its outward normal:
/// phi(y') = sqrt(rho^2 - |y'|^2) - rho.
#[derive(Clone, Debug)]
pub struct SphereCap {
    pub rho: f64,
}

impl ChartFn for SphereCap {
    fn value(&self, y: &Tangent) -> f64 {
        (self.rho * self.rho - y.norm_squared()).max(0.0).sqrt() - self.rho
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let s = (self.rho * self.rho - y.norm_squared()).max(1e-300).sqrt();
        let grad = -y / s;
        let hess = (order >= 2)
            .then(|| -TangentMatrix::identity() / s - y * y.transpose() / (s * s * s));
        ChartJet { value: s - self.rho, grad, hess }
    }
}

/// Circle arc, the planar counterpart of [`SphereCap`].
#[derive(Clone, Debug)]
pub struct CircleArc {
    pub rho: f64,
}

impl ChartFn for CircleArc {
    fn value(&self, y: &Tangent) -> f64 {
        (self.rho * self.rho - y.x * y.x).max(0.0).sqrt() - self.rho
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let s = (self.rho * self.rho - y.x * y.x).max(1e-300).sqrt();
        let grad = Tangent::new(-y.x / s, 0.0);
        let hess = (order >= 2).then(|| {
            let mut h = TangentMatrix::zeros();
            h[(0, 0)] = -self.rho * self.rho / (s * s * s);
            h
        });
        ChartJet { value: s - self.rho, grad, hess }
    }
}

/// Graph of a level set along the frame's vertical, found by root finding in (-ell, ell).
#[derive(Debug, Clone)]
pub struct ImplicitChart {
    pub level: Arc<dyn LevelSet>,
    pub frame: ReferenceFrame,
    pub ell: f64,
}

impl ImplicitChart {
    fn root(&self, y: &Tangent) -> f64 {
        let dim = self.frame.dim();
        let vert = self.frame.vertical();
        let at = |t: f64| self.frame.inverse(&join(y, t, dim));
        let f = |t: f64, slope: bool| {
            let x = at(t);
            let v = self.level.level(&x);
            let d = if slope { self.level.level_grad(&x).dot(&vert) } else { 0.0 };
            (v, d)
        };
        let (lo, hi) = (-self.ell, self.ell);
        if self.level.level(&at(lo)) >= 0.0 {
            return lo;
        }
        if self.level.level(&at(hi)) <= 0.0 {
            return hi;
        }
        bracketed_root(f, lo, hi, 1e-3 * self.ell, 1e-15 * self.ell.max(1.0))
    }
}

impl ChartFn for ImplicitChart {
    fn value(&self, y: &Tangent) -> f64 {
        self.root(y)
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let dim = self.frame.dim();
        let t = self.root(y);
        let x = self.frame.inverse(&join(y, t, dim));
        let g = self.frame.rotation() * self.level.level_grad(&x);
        let h = (order >= 2).then(|| self.frame.hess_to_local(&self.level.level_hess(&x)));
        let (grad, hess) = implicit_derivatives(&g, h.as_ref(), dim);
        ChartJet { value: t, grad, hess }
    }
}

/// Upper boundary of a convex polytope {n_k . x < o_k} seen in a frame:
/// phi(y') = min over upward faces of (b_k - a_k . y').
#[derive(Debug, Clone)]
pub struct ConvexChart {
    faces: Vec<(Tangent, f64)>,
}

impl ConvexChart {
    /// `halfspaces` are (outward unit normal, offset) pairs in world coordinates.
    pub fn new(frame: &ReferenceFrame, halfspaces: &[(Point, f64)]) -> Self {
        let dim = frame.dim();
        let faces = halfspaces
            .iter()
            .filter_map(|(n, o)| {
                let u = frame.rotation() * n;
                let un = u[dim - 1];
                (un > 1e-12).then(|| {
                    let (ut, _) = super::frame::split(&u, dim);
                    (ut / un, (o - n.dot(frame.base())) / un)
                })
            })
            .collect();
        Self { faces }
    }

    fn active(&self, y: &Tangent) -> (f64, Tangent) {
        self.faces
            .iter()
            .map(|(a, b)| (b - a.dot(y), -a))
            .fold((f64::INFINITY, Tangent::zeros()), |acc, c| if c.0 < acc.0 { c } else { acc })
    }
}

impl ChartFn for ConvexChart {
    fn value(&self, y: &Tangent) -> f64 {
        self.active(y).0
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let (value, grad) = self.active(y);
        ChartJet { value, grad, hess: (order >= 2).then(TangentMatrix::zeros) }
    }
}

/// phi(y') = psi(y' + a') - psi(a'): re-centres a chart at the graph point above a'.
#[derive(Debug, Clone)]
pub struct ShiftedChart {
    pub inner: Arc<dyn ChartFn>,
    pub shift: Tangent,
    pub offset: f64,
}

impl ShiftedChart {
    pub fn new(inner: Arc<dyn ChartFn>, shift: Tangent) -> Self {
        let offset = inner.value(&shift);
        Self { inner, shift, offset }
    }
}

impl ChartFn for ShiftedChart {
    fn value(&self, y: &Tangent) -> f64 {
        self.inner.value(&(y + self.shift)) - self.offset
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let mut j = self.inner.jet(&(y + self.shift), order);
        j.value -= self.offset;
        j
    }
}

/// Affine chart phi(y') = s . y'. Mostly useful in tests.
#[derive(Debug, Clone)]
pub struct AffineChart {
    pub slope: Tangent,
}

impl ChartFn for AffineChart {
    fn value(&self, y: &Tangent) -> f64 {
        self.slope.dot(y)
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        ChartJet {
            value: self.value(y),
            grad: self.slope,
            hess: (order >= 2).then(TangentMatrix::zeros),
        }
    }
}

/// Closure-backed chart for tests and ad-hoc profiles. Derivatives are
/// taken by central differences.
pub struct FnChart<F: Fn(&Tangent) -> f64 + Send + Sync> {
    pub f: F,
    pub dim: usize,
    pub step: f64,
}

impl<F: Fn(&Tangent) -> f64 + Send + Sync> fmt::Debug for FnChart<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnChart(dim={})", self.dim)
    }
}

impl<F: Fn(&Tangent) -> f64 + Send + Sync> ChartFn for FnChart<F> {
    fn value(&self, y: &Tangent) -> f64 {
        (self.f)(y)
    }

    fn jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let h = self.step;
        let k = self.dim - 1;
        let mut grad = Tangent::zeros();
        for a in 0..k {
            let mut e = Tangent::zeros();
            e[a] = h;
            grad[a] = ((self.f)(&(y + e)) - (self.f)(&(y - e))) / (2.0 * h);
        }
        let hess = (order >= 2).then(|| {
            let h2 = self.step.sqrt() * 1e-2;
            let mut m = TangentMatrix::zeros();
            for a in 0..k {
                for b in 0..k {
                    let mut ea = Tangent::zeros();
                    ea[a] = h2;
                    let mut eb = Tangent::zeros();
                    eb[b] = h2;
                    m[(a, b)] = ((self.f)(&(y + ea + eb)) - (self.f)(&(y + ea - eb))
                        - (self.f)(&(y - ea + eb))
                        + (self.f)(&(y - ea - eb)))
                        / (4.0 * h2 * h2);
                }
            }
            m
        });
        ChartJet { value: (self.f)(y), grad, hess }
    }
}
