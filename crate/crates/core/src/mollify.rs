//! The mollifier kernel, the chart mollification operator M_m, the slab
//! operator acting on the first n-1 variables, and regularized charts.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::chart::{ChartJet, LipschitzChart};
use crate::geometry::frame::{Point, Tangent, TangentMatrix};
use crate::numeric::gauss_legendre;

/// Radial nodes of the planar quadrature rule.
pub const POLAR_RADIAL_NODES: usize = 32;
/// Angular nodes of the planar quadrature rule.
pub const POLAR_ANGULAR_NODES: usize = 32;

/// The kernel c exp(-1/(1-|x|^2)) on the unit ball of R^dim, normalized to unit mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifierKernel {
    pub dim: usize,
    pub c: f64,
}

fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => panic!("dimension {dim} not supported"),
    }
}

impl MollifierKernel {
    pub fn new(dim: usize) -> Self {
        let rule = gauss_legendre(200);
        let radial: f64 = rule
            .iter()
            .map(|&(x, w)| {
                let s = 0.5 * (x + 1.0);
                0.5 * w * (-1.0 / (1.0 - s * s)).exp() * s.powi(dim as i32 - 1)
            })
            .sum();
        Self { dim, c: 1.0 / (sphere_area(dim) * radial) }
    }

    /// Cached kernel for `dim` in 1..=3.
    pub fn cached(dim: usize) -> &'static MollifierKernel {
        static K: [OnceLock<MollifierKernel>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
        K[dim - 1].get_or_init(|| MollifierKernel::new(dim))
    }

    /// Radial profile rho(s) for s = |x|.
    pub fn profile(&self, s: f64) -> f64 {
        if s >= 1.0 {
            0.0
        } else {
            self.c * (-1.0 / (1.0 - s * s)).exp()
        }
    }

    /// d rho / ds.
    pub fn profile_derivative(&self, s: f64) -> f64 {
        if s >= 1.0 {
            0.0
        } else {
            let q = 1.0 - s * s;
            -2.0 * s / (q * q) * self.profile(s)
        }
    }

    /// d^2 rho / ds^2.
    pub fn profile_second(&self, s: f64) -> f64 {
        if s >= 1.0 {
            0.0
        } else {
            let q = 1.0 - s * s;
            let du = -2.0 * s / (q * q);
            let ddu = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
            self.profile(s) * (du * du + ddu)
        }
    }

    /// rho_m(x) = m^dim rho(m x); `r` is |x|.
    pub fn eval(&self, m: f64, r: f64) -> f64 {
        m.powi(self.dim as i32) * self.profile(m * r)
    }
}

/// Quadrature nodes s_k in the unit (n-1)-ball with kernel-weighted weights.
#[derive(Clone, Debug)]
pub struct KernelRule {
    pub nodes: Vec<Tangent>,
    /// rho(s_k) times the quadrature weight, normalized to sum 1.
    pub weights: Vec<f64>,
    /// grad rho(s_k) times the quadrature weight (same normalization).
    pub grad_weights: Vec<Tangent>,
    /// Hessian of rho at s_k times the quadrature weight (same normalization).
    pub hess_weights: Vec<TangentMatrix>,
    /// Discrete mass before normalization.
    pub raw_mass: f64,
}

impl KernelRule {
    /// Rule for charts in ambient dimension `n` (kernel dimension n-1).
    pub fn for_ambient(n: usize) -> &'static KernelRule {
        static R: [OnceLock<KernelRule>; 2] = [OnceLock::new(), OnceLock::new()];
        R[n - 2].get_or_init(|| KernelRule::build(n - 1))
    }

    fn build(kdim: usize) -> Self {
        let k = MollifierKernel::cached(kdim);
        let mut raw: Vec<(Tangent, f64)> = Vec::new();
        if kdim == 1 {
            // two halves so that a kink at the centre is integrated exactly
            for &(x, w) in &gauss_legendre(32) {
                let t = 0.5 * (x + 1.0);
                raw.push((Tangent::new(t, 0.0), 0.5 * w));
                raw.push((Tangent::new(-t, 0.0), 0.5 * w));
            }
        } else {
            let radial = gauss_legendre(POLAR_RADIAL_NODES);
            for &(x, w) in &radial {
                let r = 0.5 * (x + 1.0);
                for j in 0..POLAR_ANGULAR_NODES {
                    let t = 2.0 * PI * (j as f64 + 0.5) / POLAR_ANGULAR_NODES as f64;
                    let wt = 0.5 * w * r * 2.0 * PI / POLAR_ANGULAR_NODES as f64;
                    raw.push((Tangent::new(r * t.cos(), r * t.sin()), wt));
                }
            }
        }
        let mut nodes = Vec::with_capacity(raw.len());
        let mut weights = Vec::with_capacity(raw.len());
        let mut grad_weights = Vec::with_capacity(raw.len());
        let mut hess_weights = Vec::with_capacity(raw.len());
        for (s, w) in &raw {
            let r = s.norm();
            let rho = k.profile(r);
            let q = 1.0 - r * r;
            let du = -2.0 / (q * q) * s;
            let mut ddu = -2.0 / (q * q) * TangentMatrix::identity() - 8.0 / (q * q * q) * s * s.transpose();
            if kdim == 1 {
                ddu[(1, 1)] = 0.0;
            }
            nodes.push(*s);
            weights.push(w * rho);
            grad_weights.push(w * rho * du);
            hess_weights.push(w * rho * (du * du.transpose() + ddu));
        }
        let raw_mass: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= raw_mass;
        }
        for g in &mut grad_weights {
            *g /= raw_mass;
        }
        // Make the derivative weights exact on affine and quadratic data:
        // sum grad_w = 0, sum grad_w s^T = -I, sum hess_w = 0, sum hess_w s_a^2 = 2.
        let gm: f64 = grad_weights.iter().zip(&nodes).map(|(g, s)| g.x * s.x).sum();
        for g in &mut grad_weights {
            *g /= -gm;
        }
        let hs: TangentMatrix = hess_weights.iter().sum::<TangentMatrix>() / raw_mass;
        for (h, w) in hess_weights.iter_mut().zip(&weights) {
            *h = *h / raw_mass - hs * *w;
        }
        let q: f64 = hess_weights.iter().zip(&nodes).map(|(h, s)| h[(0, 0)] * s.x * s.x).sum();
        for h in &mut hess_weights {
            *h *= 2.0 / q;
        }
        Self { nodes, weights, grad_weights, hess_weights, raw_mass }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// M_m(phi)(y) for a scalar function of the tangential variables.
pub fn mollify(phi: impl Fn(&Tangent) -> f64, n: usize, m: f64, y: &Tangent) -> f64 {
    let rule = KernelRule::for_ambient(n);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(s, w)| w * phi(&(y - s / m)))
        .sum()
}

/// Gradient and Hessian of M_m(phi) with the derivatives falling on the kernel.
pub fn mollify_derivatives(
    phi: impl Fn(&Tangent) -> f64,
    n: usize,
    m: f64,
    y: &Tangent,
) -> (Tangent, TangentMatrix) {
    let rule = KernelRule::for_ambient(n);
    let mut g = Tangent::zeros();
    let mut h = TangentMatrix::zeros();
    for k in 0..rule.len() {
        let v = phi(&(y - rule.nodes[k] / m));
        g += rule.grad_weights[k] * v;
        h += rule.hess_weights[k] * v;
    }
    (g * m, h * (m * m))
}

/// Checks that y is far enough from the edge of B'_R for the kernel support.
pub fn check_query(radius: f64, m: f64, y: &Tangent) -> Result<()> {
    if y.norm() > radius - 1.0 / m + 1e-12 {
        return Err(Error::OutsideDomain(format!(
            "|y'| = {:.6} exceeds R - 1/m = {:.6}",
            y.norm(),
            radius - 1.0 / m
        )));
    }
    Ok(())
}

/// Which side of the domain a regularized chart approximates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    /// phi_m = M_m phi + c_m + L/m, used for Omega_m.
    Outer,
    /// phi~_m = M_m phi - c_m - L/m, used for omega_m.
    Inner,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Outer => 1.0,
            Side::Inner => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Outer => "outer",
            Side::Inner => "inner",
        }
    }
}

/// M_m(phi) for one chart together with the offset c_m.
#[derive(Debug)]
pub struct MollifiedChart {
    pub base: LipschitzChart,
    pub m: f64,
    c_m: OnceLock<f64>,
}

impl MollifiedChart {
    pub fn new(base: LipschitzChart, m: f64) -> Self {
        Self { base, m, c_m: OnceLock::new() }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Radius of the domain B'_{R-1/m} of the mollified chart.
    pub fn domain_radius(&self) -> f64 {
        self.base.radius - 1.0 / self.m
    }

    /// M_m(phi)(y).
    pub fn smooth_value(&self, y: &Tangent) -> f64 {
        let f = &self.base.func;
        mollify(|z| f.value(z), self.dim(), self.m, y)
    }

    /// Value, gradient and (for order 2) Hessian of M_m(phi). The gradient is
    /// the kernel average of the chart gradient, the Hessian puts one
    /// derivative on the kernel and one on the chart.
    pub fn smooth_jet(&self, y: &Tangent, order: usize) -> ChartJet {
        let rule = KernelRule::for_ambient(self.dim());
        let m = self.m;
        let mut v = 0.0;
        let mut g = Tangent::zeros();
        let mut h = TangentMatrix::zeros();
        for k in 0..rule.len() {
            let j = self.base.jet(&(y - rule.nodes[k] / m), 1);
            v += rule.weights[k] * j.value;
            g += rule.weights[k] * j.grad;
            if order >= 2 {
                h += rule.grad_weights[k] * j.grad.transpose();
            }
        }
        let hess = (order >= 2).then(|| {
            let hm = h * m;
            0.5 * (hm + hm.transpose())
        });
        ChartJet { value: v, grad: g, hess }
    }

    /// c_m = sup over B'_{R-1/m} of |M_m phi - phi|, computed once.
    pub fn c_m(&self) -> f64 {
        *self.c_m.get_or_init(|| self.compute_c_m())
    }

    fn compute_c_m(&self) -> f64 {
        let r = self.domain_radius();
        let per_axis = if self.dim() == 2 { 2049 } else { 65 };
        let gap = |y: &Tangent| (self.smooth_value(y) - self.base.eval(y)).abs();
        let mut samples: Vec<(f64, Tangent)> = crate::geometry::chart::tangent_grid(self.dim(), r, per_axis)
            .into_iter()
            .map(|y| (gap(&y), y))
            .collect();
        samples.sort_by(|a, b| b.0.total_cmp(&a.0));
        let h0 = 2.0 * r / (per_axis - 1) as f64;
        let mut best = samples[0].0;
        // compass search around the largest samples
        for &(v0, y0) in samples.iter().take(8) {
            let (mut v, mut y, mut h) = (v0, y0, h0);
            let dirs: &[Tangent] = if self.dim() == 2 {
                &[Tangent::new(1.0, 0.0), Tangent::new(-1.0, 0.0)]
            } else {
                &[
                    Tangent::new(1.0, 0.0),
                    Tangent::new(-1.0, 0.0),
                    Tangent::new(0.0, 1.0),
                    Tangent::new(0.0, -1.0),
                ]
            };
            while h > 1e-12 * r.max(1e-3) {
                let mut moved = false;
                for d in dirs {
                    let c = y + d * h;
                    if c.norm() > r {
                        continue;
                    }
                    let vc = gap(&c);
                    if vc > v {
                        v = vc;
                        y = c;
                        moved = true;
                    }
                }
                if !moved {
                    h *= 0.5;
                }
            }
            best = best.max(v);
        }
        best
    }

    /// Offset c_m + L/m added (outer) or subtracted (inner).
    pub fn shift(&self) -> f64 {
        self.c_m() + self.base.lipschitz / self.m
    }

    /// phi_m (outer) or phi~_m (inner).
    pub fn side_value(&self, side: Side, y: &Tangent) -> f64 {
        self.smooth_value(y) + side.sign() * self.shift()
    }

    pub fn side_jet(&self, side: Side, y: &Tangent, order: usize) -> ChartJet {
        let mut j = self.smooth_jet(y, order);
        j.value += side.sign() * self.shift();
        j
    }
}

/// Embeds tangential offsets into world coordinates (first n-1 axes).
fn slab_offset(s: &Tangent, n: usize) -> Point {
    if n == 2 {
        Point::new(s.x, 0.0, 0.0)
    } else {
        Point::new(s.x, s.y, 0.0)
    }
}

/// Convolution in the first n-1 variables only: M~_m(v)(z', z_n).
pub fn slab_mollify(v: impl Fn(&Point) -> f64, n: usize, m: f64, x: &Point) -> f64 {
    let rule = KernelRule::for_ambient(n);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .map(|(s, w)| w * v(&(x - slab_offset(s, n) / m)))
        .sum()
}

/// sqrt(M~_m(v^2)) and its gradient M~_m(v grad v)/sqrt(M~_m(v^2)).
pub fn sqrt_slab(
    v: impl Fn(&Point) -> (f64, Point),
    n: usize,
    m: f64,
    x: &Point,
) -> Result<(f64, Point)> {
    let rule = KernelRule::for_ambient(n);
    let mut sq = 0.0;
    let mut g = Point::zeros();
    for (s, w) in rule.nodes.iter().zip(&rule.weights) {
        let (val, grad) = v(&(x - slab_offset(s, n) / m));
        sq += w * val * val;
        g += w * val * grad;
    }
    if sq < -1e-14 {
        return Err(Error::NoConvergence(format!("negative slab average {sq:e}")));
    }
    let root = sq.max(0.0).sqrt();
    if root == 0.0 {
        return Ok((0.0, Point::zeros()));
    }
    Ok((root, g / root))
}

/// sqrt(M~_m(|grad v|^2)), the right side of the slab gradient bound.
pub fn slab_gradient_bound(v: impl Fn(&Point) -> (f64, Point), n: usize, m: f64, x: &Point) -> f64 {
    slab_mollify(|p| v(p).1.norm_squared(), n, m, x).sqrt()
}

/// L^p distance over `samples` between M_m(phi) o Psi_m and phi o Psi, a
/// numerical check that mollification commutes with bi-Lipschitz
/// reparametrisations in the limit.
pub fn composition_error(
    chart: &LipschitzChart,
    psi: impl Fn(&Tangent) -> Tangent,
    psi_m: impl Fn(&Tangent) -> Tangent,
    m: f64,
    p: f64,
    samples: &[Tangent],
) -> f64 {
    let f = &chart.func;
    let sum: f64 = samples
        .iter()
        .map(|y| {
            let a = mollify(|z| f.value(z), chart.dim(), m, &psi_m(y));
            let b = f.value(&psi(y));
            (a - b).abs().powf(p)
        })
        .sum();
    (sum / samples.len() as f64).powf(1.0 / p)
}

/// Shared handle used by the defining functions.
pub type MollifiedHandle = Arc<MollifiedChart>;

/// Hessian of the kernel rho at x in R^dim, used by tests as a closed form.
pub fn kernel_hessian(kernel: &MollifierKernel, x: &Point, dim: usize) -> Matrix3<f64> {
    let r2 = x.norm_squared();
    if r2 >= 1.0 {
        return Matrix3::zeros();
    }
    let q = 1.0 - r2;
    let du = -2.0 / (q * q) * x;
    let mut id = Matrix3::identity();
    for k in dim..3 {
        id[(k, k)] = 0.0;
    }
    let ddu = -2.0 / (q * q) * id - 8.0 / (q * q * q) * x * x.transpose();
    kernel.profile(r2.sqrt()) * (du * du.transpose() + ddu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::{AffineChart, CircleArc, FnChart};
    use crate::geometry::frame::ReferenceFrame;

    /// Adaptive Simpson quadrature, independent of the Gauss-Legendre rules.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth > 40 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 0)
    }

    fn bump(t: f64) -> f64 {
        if t.abs() >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t * t)).exp()
        }
    }

    #[test]
    fn normalization_matches_simpson_oracle() {
        let oracle_1d = simpson(&bump, -1.0, 1.0, 1e-15);
        let k1 = MollifierKernel::new(1);
        assert!((k1.c * oracle_1d - 1.0).abs() < 1e-11);
        let oracle_2d = 2.0 * PI * simpson(&|s: f64| bump(s) * s, 0.0, 1.0, 1e-15);
        let k2 = MollifierKernel::new(2);
        assert!((k2.c * oracle_2d - 1.0).abs() < 1e-11);
        let oracle_3d = 4.0 * PI * simpson(&|s: f64| bump(s) * s * s, 0.0, 1.0, 1e-15);
        let k3 = MollifierKernel::new(3);
        assert!((k3.c * oracle_3d - 1.0).abs() < 1e-11);
        // value at the origin for m = 1 in one variable
        assert!((k1.eval(1.0, 0.0) - (-1f64).exp() / oracle_1d).abs() < 1e-12);
    }

    #[test]
    fn scaled_kernel_has_unit_mass() {
        let k = MollifierKernel::cached(1);
        for m in [1.0, 7.0, 64.0, 256.0] {
            let mass = simpson(&|t: f64| k.eval(m, t.abs()), -1.0 / m, 1.0 / m, 1e-14);
            assert!((mass - 1.0).abs() < 1e-10, "m = {m}: {mass}");
            assert_eq!(k.eval(m, 1.0 / m), 0.0);
            assert_eq!(k.eval(m, 2.0 / m), 0.0);
        }
        // the discrete rules are accurate before normalization
        assert!((KernelRule::for_ambient(2).raw_mass - 1.0).abs() < 1e-8);
        assert!((KernelRule::for_ambient(3).raw_mass - 1.0).abs() < 1e-6);
    }

    fn chart2(f: impl Fn(&Tangent) -> f64 + Send + Sync + 'static, l: f64) -> LipschitzChart {
        LipschitzChart {
            frame: ReferenceFrame::identity(2),
            radius: 1.0,
            lipschitz: l,
            func: Arc::new(FnChart { f, dim: 2, step: 1e-7 }),
        }
    }

    #[test]
    fn constants_and_linear_functions_are_fixed() {
        for n in [2, 3] {
            let y = Tangent::new(0.1, if n == 3 { -0.2 } else { 0.0 });
            assert!((mollify(|_| 3.5, n, 10.0, &y) - 3.5).abs() < 1e-12);
            let lin = |z: &Tangent| 0.3 * z.x - 0.7 * z.y + 0.1;
            assert!((mollify(lin, n, 10.0, &y) - lin(&y)).abs() < 1e-12);
            let (g, h) = mollify_derivatives(lin, n, 10.0, &y);
            assert!((g.x - 0.3).abs() < 1e-9);
            if n == 3 {
                assert!((g.y + 0.7).abs() < 1e-9);
            }
            assert!(h.amax() < 1e-7);
        }
    }

    #[test]
    fn absolute_value_moments_match_oracle() {
        let k = MollifierKernel::cached(1);
        // alpha = integral |t| rho(t) dt, beta = 2 rho(0)
        let alpha = simpson(&|t: f64| t.abs() * k.profile(t.abs()), -1.0, 1.0, 1e-15);
        let beta = -simpson(&|t: f64| t.signum() * k.profile_derivative(t.abs()) * t.signum(), -1.0, 1.0, 1e-15);
        let m = 10.0;
        let abs = |z: &Tangent| z.x.abs();
        let y0 = Tangent::zeros();
        assert!((mollify(abs, 2, m, &y0) - alpha / m).abs() < 1e-6 / m);
        let (g, h) = mollify_derivatives(abs, 2, m, &y0);
        assert!(g.x.abs() < 1e-12);
        // the kink sits on a node-free point, so the rule converges slowly; allow 1e-3 relative
        assert!((h[(0, 0)] - beta * m).abs() < 1e-3 * beta * m, "{} vs {}", h[(0, 0)], beta * m);
        assert!((beta - 2.0 * k.profile(0.0)).abs() < 1e-10);
    }

    #[test]
    fn regularized_chart_bounds() {
        let l = 1.0;
        let chart = chart2(|z: &Tangent| -z.x.abs(), l);
        for m in [4.0, 16.0, 64.0] {
            let mc = MollifiedChart::new(chart.clone(), m);
            assert!(mc.c_m() <= l / m + 1e-15);
            for y in crate::geometry::chart::tangent_grid(2, mc.domain_radius(), 201) {
                let d = mc.side_value(Side::Outer, &y) - chart.eval(&y);
                assert!(d >= l / m - 1e-12 && d <= 3.0 * l / m + 1e-12);
                let d = chart.eval(&y) - mc.side_value(Side::Inner, &y);
                assert!(d >= l / m - 1e-12 && d <= 3.0 * l / m + 1e-12);
            }
        }
    }

    #[test]
    fn chart_and_kernel_derivative_routes_agree_on_smooth_charts() {
        let chart = LipschitzChart {
            frame: ReferenceFrame::identity(2),
            radius: 0.5,
            lipschitz: 0.2,
            func: Arc::new(CircleArc { rho: 2.0 }),
        };
        let mc = MollifiedChart::new(chart.clone(), 32.0);
        let f = &chart.func;
        for t in [-0.3, 0.0, 0.17] {
            let y = Tangent::new(t, 0.0);
            let j = mc.smooth_jet(&y, 2);
            let (g, h) = mollify_derivatives(|z| f.value(z), 2, 32.0, &y);
            assert!((j.grad - g).norm() < 1e-10);
            assert!((j.hess.unwrap() - h).amax() < 1e-7);
        }
    }

    #[test]
    fn slab_examples() {
        let n = 3;
        let x = Point::new(0.1, -0.2, 0.3);
        let v = |p: &Point| (p.z * 2.0).sin();
        assert!((slab_mollify(v, n, 8.0, &x) - v(&x)).abs() < 1e-12);
        let sep = |p: &Point| (p.z + 1.0) * (p.x * p.x + p.y);
        let h = |z: &Tangent| z.x * z.x + z.y;
        let expect = (x.z + 1.0) * mollify(h, n, 8.0, &Tangent::new(x.x, x.y));
        assert!((slab_mollify(sep, n, 8.0, &x) - expect).abs() < 1e-12);
        let gauss = |p: &Point| (-p.norm_squared() * 20.0).exp();
        let at = |m: f64| slab_mollify(gauss, n, m, &Point::zeros());
        assert!(at(2.0) < at(4.0) && at(4.0) < at(8.0) && at(8.0) < gauss(&Point::zeros()));
    }

    #[test]
    fn sqrt_slab_examples() {
        let n = 2;
        let zero = |_: &Point| (0.0, Point::zeros());
        assert_eq!(sqrt_slab(zero, n, 4.0, &Point::new(0.1, 0.1, 0.0)).unwrap().0, 0.0);
        let vert = |p: &Point| (p.y * p.y + 0.5, Point::new(0.0, 2.0 * p.y, 0.0));
        let x = Point::new(0.3, 0.4, 0.0);
        assert!((sqrt_slab(vert, n, 4.0, &x).unwrap().0 - vert(&x).0).abs() < 1e-12);
    }

    #[test]
    fn composition_error_decays() {
        let chart = chart2(|z: &Tangent| -z.x.abs() * 0.8, 0.8);
        let k_pert = 2.0;
        let psi = |y: &Tangent| Tangent::new(0.5 * y.x + 0.1 * y.x.sin(), 0.0);
        let samples: Vec<Tangent> = (0..400).map(|i| Tangent::new(-0.8 + 1.6 * i as f64 / 399.0, 0.0)).collect();
        let err = |m: f64| {
            let psi_m = move |y: &Tangent| {
                let b = psi(y);
                Tangent::new(b.x + k_pert / m * (3.0 * y.x).cos(), 0.0)
            };
            composition_error(&chart, psi, psi_m, m, 2.0, &samples)
        };
        assert!(err(128.0) < 0.5 * err(16.0));
    }

    #[test]
    fn affine_chart_is_unchanged() {
        let chart = LipschitzChart {
            frame: ReferenceFrame::identity(3),
            radius: 0.5,
            lipschitz: 0.5,
            func: Arc::new(AffineChart { slope: Tangent::new(0.3, -0.4) }),
        };
        let mc = MollifiedChart::new(chart.clone(), 16.0);
        let y = Tangent::new(0.1, 0.2);
        assert!((mc.smooth_value(&y) - chart.eval(&y)).abs() < 1e-13);
        assert!(mc.c_m() < 1e-12);
    }

    #[test]
    fn kernel_hessian_matches_differences() {
        let k = MollifierKernel::cached(2);
        let x = Point::new(0.3, -0.2, 0.0);
        let f = |p: &Point| k.profile(p.norm());
        let (_, _, h) = crate::geometry::shapes::fd_jet(f, &x, 2, 1.0);
        assert!((h - kernel_hessian(k, &x, 2)).amax() < 1e-4);
    }
}
