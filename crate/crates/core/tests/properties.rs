use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use lipsmooth::capacity::{solve_capacity, CapacityProblem};
use lipsmooth::curvature::bbb_holds;
use lipsmooth::defining::Approximation;
use lipsmooth::geometry::specfile::parse_expr;
use lipsmooth::geometry::{make_shape, parse_shape_arg, DomainAtlas, Point, ReferenceFrame, Tangent, TangentMatrix};
use lipsmooth::mollify::mollify;
use lipsmooth::partition::BumpFamily;

struct Disk {
    atlas: Arc<DomainAtlas>,
    bumps: Arc<BumpFamily>,
    ap: Approximation,
}

fn disk() -> &'static Disk {
    static D: OnceLock<Disk> = OnceLock::new();
    D.get_or_init(|| {
        let (n, p) = parse_shape_arg("disk:radius=4,lipschitz=0.2").unwrap();
        let atlas = Arc::new(make_shape(&n, &p).unwrap());
        let bumps = Arc::new(BumpFamily::build(&atlas).unwrap());
        let ap = Approximation::new(atlas.clone(), bumps.clone(), 32.0).unwrap();
        Disk { atlas, bumps, ap }
    })
}

fn polar(r: f64, t: f64) -> Point {
    Point::new(r * t.cos(), r * t.sin(), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expression_jets_match_differences(
        a in -2.0..2.0f64, b in -2.0..2.0f64, c in 0.1..3.0f64,
        y1 in -0.8..0.8f64, y2 in -0.8..0.8f64,
    ) {
        let src = format!("{a}*y1^2 + sin({b}*y1)*cos(y2) + sqrt({c} + y1*y1 + y2*y2) - max(y1, -1)/({c}+1)");
        let e = parse_expr(&src, 2, 1, 1).unwrap();
        let y = Tangent::new(y1, y2);
        let j = e.jet(&y);
        prop_assert!((j.v - e.eval(&y)).abs() < 1e-14);
        let h = 1e-5;
        for k in 0..2 {
            let mut d = Tangent::zeros();
            d[k] = h;
            let fd = (e.eval(&(y + d)) - e.eval(&(y - d))) / (2.0 * h);
            prop_assert!((j.g[k] - fd).abs() < 1e-7, "d/dy{} {} vs {}", k + 1, j.g[k], fd);
            let g = |p: Tangent| e.jet(&p).g;
            let col = (g(y + d) - g(y - d)) / (2.0 * h);
            for i in 0..2 {
                prop_assert!((j.h[(i, k)] - col[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn frames_roundtrip(nx in -1.0..1.0f64, ny in -1.0..1.0f64, nz in -1.0..1.0f64, x in prop::array::uniform3(-5.0..5.0f64)) {
        let n = Point::new(nx, ny, nz);
        prop_assume!(n.norm() > 0.1);
        let f = ReferenceFrame::from_normal(&(n / n.norm()), Point::new(0.3, -0.2, 0.1), 3);
        let x = Point::from(x);
        let (y, yn) = f.to_local(&x);
        prop_assert!((f.to_world(&y, yn) - x).norm() < 1e-12);
        prop_assert!((f.vertical().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mollifier_keeps_mass_and_contracts(
        m in 4.0..128.0f64, l in 0.05..2.0f64, c in -1.0..1.0f64, slope in -1.0..1.0f64,
        y1 in -1.0..1.0f64, y2 in -1.0..1.0f64,
    ) {
        for n in [2, 3] {
            let y = Tangent::new(y1, if n == 3 { y2 } else { 0.0 });
            prop_assert!((mollify(|_| 1.0, n, m, &y) - 1.0).abs() < 1e-10);
            // an L-Lipschitz kinked function
            let phi = |p: &Tangent| l * (slope * p[0] + (1.0 - slope.abs()) * (p[0] - c).abs() - 0.3 * (p[1] - c).abs().min(0.5) * slope.signum());
            let lip = l * (1.0 + 0.3);
            prop_assert!((mollify(phi, n, m, &y) - phi(&y)).abs() <= lip / m * (1.0 + 1e-9));
        }
    }

    #[test]
    fn curvature_norm_is_sandwiched(g in prop::array::uniform2(-3.0..3.0f64), h in prop::array::uniform3(-5.0..5.0f64), two_d: bool) {
        let (grad, hess) = if two_d {
            (Tangent::new(g[0], 0.0), TangentMatrix::new(h[0], 0.0, 0.0, 0.0))
        } else {
            (Tangent::from(g), TangentMatrix::new(h[0], h[1], h[1], h[2]))
        };
        prop_assert!(bbb_holds(&grad, &hess, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partition_sums_to_one(r in 2.0..4.15f64, t in 0.0..std::f64::consts::TAU) {
        let d = disk();
        let x = polar(r, t);
        let xi = d.bumps.xi_all(&x).unwrap();
        let s: f64 = xi.iter().map(|p| p.1).sum();
        prop_assert!((s - 1.0).abs() < 1e-10, "sum {s}");
        prop_assert!(xi.iter().all(|p| p.1 >= 0.0));
    }

    #[test]
    fn approximations_sandwich_the_domain(r in 3.85..4.15f64, t in 0.0..std::f64::consts::TAU) {
        let d = disk();
        let x = polar(r, t);
        let v = d.ap.triple(&x).unwrap();
        prop_assert!(v.outer < v.exact && v.exact < v.inner, "{v:?} at r={r}");
        if d.ap.contains(lipsmooth::mollify::Side::Inner, &x) {
            prop_assert!(r < 4.0);
        }
        if r < 4.0 {
            prop_assert!(d.ap.contains(lipsmooth::mollify::Side::Outer, &x));
        }
    }

    #[test]
    fn charts_are_lipschitz(k in 0usize..1000, a in prop::array::uniform2(-1.0..1.0f64), b in prop::array::uniform2(-1.0..1.0f64)) {
        let d = disk();
        let c = &d.atlas.charts[k % d.atlas.len()];
        let scale = c.radius;
        let (a, b) = (Tangent::new(a[0] * scale, 0.0), Tangent::new(b[0] * scale, 0.0));
        prop_assume!(a.norm() < c.radius && b.norm() < c.radius);
        prop_assert!((c.eval(&a) - c.eval(&b)).abs() <= c.lipschitz * (a - b).norm() * (1.0 + 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn capacity_is_monotone(s in 0.1..0.3f64, grow in 1.1..1.6f64, shift in 0.0..0.2f64) {
        let h = 1.0 / 64.0;
        let cap = |r: f64, s: f64| {
            let mut p = CapacityProblem::concentric(2, r, s, h);
            p.set_center = Point::new(shift, 0.0, 0.0);
            solve_capacity(&p).unwrap().value
        };
        let base = cap(1.0, s);
        // larger set, same ball
        prop_assert!(cap(1.0, s * grow) >= base);
        // same set, larger ball
        prop_assert!(cap(grow, s) <= base);
    }
}

#[test]
fn sphere_and_square_charts_are_lipschitz() {
    for shape in ["sphere:radius=1", "square:side=8"] {
        let (n, p) = parse_shape_arg(shape).unwrap();
        let atlas = make_shape(&n, &p).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut next = || rng.gen_range(-1.0..1.0);
        for c in atlas.charts.iter().step_by(7) {
            for _ in 0..50 {
                let mut a = Tangent::new(next(), next()) * c.radius * 0.7;
                let mut b = Tangent::new(next(), next()) * c.radius * 0.7;
                if atlas.dim == 2 {
                    a[1] = 0.0;
                    b[1] = 0.0;
                }
                assert!((c.eval(&a) - c.eval(&b)).abs() <= c.lipschitz * (a - b).norm() * (1.0 + 1e-9), "{shape}");
            }
        }
    }
}
