//! Small numerical helpers shared by the modules: Gauss-Legendre rules,
//! bracketed root finding and Hermite interpolation.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(n)
        .expect("degree >= 2")
        .into_node_weight_pairs()
}

/// Cached 64-point rule.
pub fn gl64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

/// Integrates `f` over [a, b] with the cached 64-point rule.
pub fn integrate(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gl64().iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Integrates `f` over [a, b] with a caller-supplied rule on [-1, 1].
pub fn integrate_with(rule: &[(f64, f64)], a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.iter().map(|&(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

/// Root of an increasing function on a bracket with `f(lo) < 0 < f(hi)`.
///
/// Bisects until the bracket is narrower than `switch`, then polishes with
/// Newton steps that fall back to bisection when they leave the bracket.
/// `f` returns the value and, when `want_slope` is true, the slope.
pub fn bracketed_root(
    mut f: impl FnMut(f64, bool) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    switch: f64,
    tol: f64,
) -> f64 {
    while hi - lo > switch {
        let mid = 0.5 * (lo + hi);
        let (v, _) = f(mid, false);
        if v == 0.0 {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..100 {
        let (v, d) = f(x, true);
        if v == 0.0 {
            return x;
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = if d > 0.0 { x - v / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol || hi - lo <= tol {
            break;
        }
    }
    x
}

/// Cubic Hermite interpolation on [0, 1] scaled by interval width `h`.
/// Returns value and first derivative.
pub fn hermite3(f0: f64, d0: f64, f1: f64, d1: f64, h: f64, t: f64) -> (f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -6.0 * t2 + 6.0 * t;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let d = (dh00 * f0 + dh01 * f1) / h + dh10 * d0 + dh11 * d1;
    (v, d)
}

/// Quintic Hermite interpolation using values, first and second derivatives
/// at both ends. Returns value, first and second derivative.
#[allow(clippy::too_many_arguments)]
pub fn hermite5(
    f0: f64,
    d0: f64,
    s0: f64,
    f1: f64,
    d1: f64,
    s1: f64,
    h: f64,
    t: f64,
) -> (f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    // basis functions and their derivatives in t
    let b = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
    ];
    let db = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        1.5 * t2 - 4.0 * t3 + 2.5 * t4,
    ];
    let ddb = [
        -60.0 * t + 180.0 * t2 - 120.0 * t3,
        -36.0 * t + 96.0 * t2 - 60.0 * t3,
        1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
        60.0 * t - 180.0 * t2 + 120.0 * t3,
        -24.0 * t + 84.0 * t2 - 60.0 * t3,
        3.0 * t - 12.0 * t2 + 10.0 * t3,
    ];
    let c = [f0, h * d0, h * h * s0, f1, h * d1, h * h * s1];
    let mut v = 0.0;
    let mut d = 0.0;
    let mut s = 0.0;
    for k in 0..6 {
        v += b[k] * c[k];
        d += db[k] * c[k];
        s += ddb[k] * c[k];
    }
    (v, d / h, s / (h * h))
}

/// Bicubic Hermite patch on the unit square scaled to cell size (hx, hy).
/// Corner data order: (0,0), (1,0), (0,1), (1,1); each corner gives
/// (f, f_x, f_y, f_xy). Returns value and gradient.
pub fn hermite_bicubic(corners: &[[f64; 4]; 4], hx: f64, hy: f64, u: f64, v: f64) -> (f64, f64, f64) {
    let basis = |t: f64| -> ([f64; 4], [f64; 4]) {
        let t2 = t * t;
        let t3 = t2 * t;
        (
            [2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2],
            [6.0 * t2 - 6.0 * t, 3.0 * t2 - 4.0 * t + 1.0, -6.0 * t2 + 6.0 * t, 3.0 * t2 - 2.0 * t],
        )
    };
    let (bu, dbu) = basis(u);
    let (bv, dbv) = basis(v);
    // index: corner (i in x, j in y)
    let mut val = 0.0;
    let mut gx = 0.0;
    let mut gy = 0.0;
    for (ci, c) in corners.iter().enumerate() {
        let i = ci % 2;
        let j = ci / 2;
        // value/derivative basis slots for x and y directions
        let (ux0, ux1) = (bu[2 * i], bu[2 * i + 1] * hx);
        let (dux0, dux1) = (dbu[2 * i] / hx, dbu[2 * i + 1]);
        let (vy0, vy1) = (bv[2 * j], bv[2 * j + 1] * hy);
        let (dvy0, dvy1) = (dbv[2 * j] / hy, dbv[2 * j + 1]);
        let [f, fx, fy, fxy] = *c;
        val += f * ux0 * vy0 + fx * ux1 * vy0 + fy * ux0 * vy1 + fxy * ux1 * vy1;
        gx += f * dux0 * vy0 + fx * dux1 * vy0 + fy * dux0 * vy1 + fxy * dux1 * vy1;
        gy += f * ux0 * dvy0 + fx * ux1 * dvy0 + fy * ux0 * dvy1 + fxy * ux1 * dvy1;
    }
    (val, gx, gy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials() {
        let v = integrate(0.0, 2.0, |x| x.powi(7));
        assert!((v - 32.0).abs() < 1e-12);
    }

    #[test]
    fn root_of_cubic() {
        let f = |x: f64, _: bool| (x * x * x - 2.0, 3.0 * x * x);
        let r = bracketed_root(f, 0.0, 2.0, 1e-3, 1e-14);
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn hermite_reproduces_cubic_and_quintic() {
        let p = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x * x * x;
        let dp = |x: f64| 2.0 - 2.0 * x + 1.5 * x * x;
        let (a, b, h) = (0.3, 0.8, 0.5);
        let (v, d) = hermite3(p(a), dp(a), p(b), dp(b), h, 0.37);
        let x = a + 0.37 * h;
        assert!((v - p(x)).abs() < 1e-13 && (d - dp(x)).abs() < 1e-12);

        let q = |x: f64| x.powi(5) - 2.0 * x.powi(3) + x;
        let dq = |x: f64| 5.0 * x.powi(4) - 6.0 * x * x + 1.0;
        let sq = |x: f64| 20.0 * x.powi(3) - 12.0 * x;
        let (v, d, s) = hermite5(q(a), dq(a), sq(a), q(b), dq(b), sq(b), h, 0.61);
        let x = a + 0.61 * h;
        assert!((v - q(x)).abs() < 1e-12);
        assert!((d - dq(x)).abs() < 1e-11);
        assert!((s - sq(x)).abs() < 1e-9);
    }

    #[test]
    fn bicubic_reproduces_bilinear_times_cubic() {
        let f = |x: f64, y: f64| (x * x * x - x) * (1.0 + 2.0 * y);
        let fx = |x: f64, y: f64| (3.0 * x * x - 1.0) * (1.0 + 2.0 * y);
        let fy = |x: f64, _y: f64| (x * x * x - x) * 2.0;
        let fxy = |x: f64, _y: f64| (3.0 * x * x - 1.0) * 2.0;
        let (x0, y0, hx, hy) = (0.2, -0.4, 0.3, 0.25);
        let corner = |i: usize, j: usize| {
            let x = x0 + i as f64 * hx;
            let y = y0 + j as f64 * hy;
            [f(x, y), fx(x, y), fy(x, y), fxy(x, y)]
        };
        let c = [corner(0, 0), corner(1, 0), corner(0, 1), corner(1, 1)];
        let (v, gx, gy) = hermite_bicubic(&c, hx, hy, 0.3, 0.7);
        let (x, y) = (x0 + 0.3 * hx, y0 + 0.7 * hy);
        assert!((v - f(x, y)).abs() < 1e-13);
        assert!((gx - fx(x, y)).abs() < 1e-12);
        assert!((gy - fy(x, y)).abs() < 1e-12);
    }
}
