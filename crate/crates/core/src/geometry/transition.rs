use std::sync::Arc;

use super::atlas::DomainAtlas;
use super::chart::{implicit_derivatives, ChartFn, ChartJet, LipschitzChart};
use super::frame::{join, Point, ReferenceFrame, Tangent};
use crate::error::{Error, Result};
use crate::numeric::bracketed_root;

/// Minimum over grid samples of n . nu, where nu = (-grad phi, 1)/sqrt(1+|grad phi|^2)
/// is the chart's upward unit normal expressed in the chart frame.
pub fn transversality_margin(chart: &LipschitzChart, direction: &Point, per_axis: usize) -> Result<f64> {
    let norm = direction.norm();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("zero-length direction".into()));
    }
    if per_axis < 3 {
        return Err(Error::InvalidParameter("need at least 3 samples per axis".into()));
    }
    let n = direction / norm;
    let dim = chart.dim();
    let mut worst = f64::INFINITY;
    for y in chart.sample_grid(chart.radius * (1.0 - 1e-9), per_axis) {
        let g = chart.jet(&y, 1).grad;
        let nu = join(&(-g), 1.0, dim) / (1.0 + g.norm_squared()).sqrt();
        worst = worst.min(n.dot(&nu));
    }
    Ok(worst)
}

/// Chart obtained by re-expressing the graph of `source` in another frame.
#[derive(Debug, Clone)]
pub struct RegraphedChart {
    source: LipschitzChart,
    target: ReferenceFrame,
    half_height: f64,
}

impl RegraphedChart {
    /// f(w', t) = z_n - phi(z') where z = T_source T_target^{-1}(w', t).
    fn defining(&self, w: &Tangent, t: f64, order: usize) -> (f64, Point, Option<nalgebra::Matrix3<f64>>) {
        let dim = self.target.dim();
        let x = self.target.inverse(&join(w, t, dim));
        let (z, zn) = self.source.frame.to_local(&x);
        let j = self.source.jet(&z, order);
        let value = zn - j.value;
        // gradient in source-local coordinates, then rotate into target-local
        let gs = join(&(-j.grad), 1.0, dim);
        let rot = self.target.rotation() * self.source.frame.rotation().transpose();
        let g = rot * gs;
        let h = j.hess.filter(|_| order >= 2).map(|hs| {
            let mut m = nalgebra::Matrix3::zeros();
            let k = dim - 1;
            for a in 0..k {
                for b in 0..k {
                    m[(a, b)] = -hs[(a, b)];
                }
            }
            rot * m * rot.transpose()
        });
        (value, g, h)
    }

    fn root(&self, w: &Tangent) -> f64 {
        let f = |t: f64, slope: bool| {
            let (v, g, _) = self.defining(w, t, if slope { 1 } else { 0 });
            (v, g[self.target.dim() - 1])
        };
        let h = self.half_height;
        bracketed_root(f, -h, h, 1e-3 * h, 1e-15 * h.max(1.0))
    }
}

impl ChartFn for RegraphedChart {
    fn value(&self, w: &Tangent) -> f64 {
        self.root(w)
    }

    fn jet(&self, w: &Tangent, order: usize) -> ChartJet {
        let t = self.root(w);
        let (_, g, h) = self.defining(w, t, order.max(1));
        let (grad, hess) = implicit_derivatives(&g, h.as_ref(), self.target.dim());
        ChartJet { value: t, grad, hess }
    }
}

/// Re-expresses the graph of `chart` over the window B'_window of `target`.
///
/// The target vertical must be transversal to the graph; the returned chart
/// has Lipschitz constant sqrt(1 - k^2)/k where k is the measured margin.
pub fn regraph(chart: &LipschitzChart, target: &ReferenceFrame, window: f64) -> Result<LipschitzChart> {
    let dim = chart.dim();
    let vertical_in_source = chart.frame.rotation() * target.vertical();
    let kappa = transversality_margin(chart, &vertical_in_source, 33)?;
    if kappa <= 0.0 {
        return Err(Error::NotGraphical(format!("margin {kappa:.3e} <= 0")));
    }
    let half_height = chart.ell() + window + (chart.frame.base() - target.base()).norm();
    let rc = RegraphedChart { source: chart.clone(), target: target.clone(), half_height };
    // every window point must map back into the source domain
    for w in crate::geometry::chart::tangent_grid(dim, window, 17) {
        let t = rc.root(&w);
        let x = target.to_world(&w, t);
        let (z, zn) = chart.frame.to_local(&x);
        if z.norm() > chart.radius || zn.abs() > chart.ell() {
            return Err(Error::OutsideDomain("regraph window exits the source cylinder".into()));
        }
    }
    let lipschitz = (1.0 - kappa * kappa).sqrt() / kappa;
    Ok(LipschitzChart { frame: target.clone(), radius: window, lipschitz, func: Arc::new(rc) })
}

/// Transition map between two charts of an atlas together with its inverse.
#[derive(Debug, Clone, Copy)]
pub struct TransitionMap<'a> {
    pub atlas: &'a DomainAtlas,
    pub source: usize,
    pub target: usize,
}

impl<'a> TransitionMap<'a> {
    pub fn new(atlas: &'a DomainAtlas, source: usize, target: usize) -> Self {
        Self { atlas, source, target }
    }

    pub fn forward(&self, y: &Tangent) -> Result<Tangent> {
        self.atlas.transition_eval(self.source, self.target, y)
    }

    pub fn inverse(&self, z: &Tangent) -> Result<Tangent> {
        self.atlas.transition_eval(self.target, self.source, z)
    }

    /// Largest sampled difference quotient of the forward map over points of
    /// chart `source` whose images stay in the shared window.
    pub fn lipschitz_estimate(&self, samples: &[Tangent]) -> f64 {
        let imgs: Vec<(Tangent, Tangent)> = samples
            .iter()
            .filter_map(|y| self.forward(y).ok().map(|z| (*y, z)))
            .collect();
        let mut worst: f64 = 0.0;
        for w in imgs.windows(2) {
            let dy = (w[1].0 - w[0].0).norm();
            if dy > 0.0 {
                worst = worst.max((w[1].1 - w[0].1).norm() / dy);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::{AffineChart, CircleArc, FnChart};
    use crate::geometry::frame::rotation2;

    fn chart(func: Arc<dyn ChartFn>, l: f64) -> LipschitzChart {
        LipschitzChart { frame: ReferenceFrame::identity(2), radius: 1.0, lipschitz: l, func }
    }

    #[test]
    fn margin_examples() {
        let flat = chart(Arc::new(AffineChart { slope: Tangent::zeros() }), 1.0);
        let m = transversality_margin(&flat, &Point::y(), 11).unwrap();
        assert!((m - 1.0).abs() < 1e-15);
        let ramp = chart(Arc::new(AffineChart { slope: Tangent::new(1.0, 0.0) }), 1.0);
        let m = transversality_margin(&ramp, &Point::y(), 11).unwrap();
        assert!((m - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(transversality_margin(&ramp, &Point::zeros(), 11).is_err());
        assert!(transversality_margin(&ramp, &Point::y(), 2).is_err());
    }

    #[test]
    fn regraph_identity_of_flat_chart() {
        let flat = chart(Arc::new(AffineChart { slope: Tangent::zeros() }), 0.5);
        let r = regraph(&flat, &ReferenceFrame::identity(2), 0.5).unwrap();
        for y in r.sample_grid(0.5, 11) {
            assert!(r.eval(&y).abs() < 1e-14);
        }
    }

    #[test]
    fn regraph_corner_rotated() {
        let corner = chart(
            Arc::new(FnChart { f: |y: &Tangent| y.x.abs(), dim: 2, step: 1e-7 }),
            1.0,
        );
        let target = ReferenceFrame::new(rotation2(std::f64::consts::PI / 6.0), Point::zeros(), 2).unwrap();
        let r = regraph(&corner, &target, 0.3).unwrap();
        let mut worst: f64 = 0.0;
        let ys = r.sample_grid(0.3, 301);
        for w in ys.windows(2) {
            worst = worst.max((r.eval(&w[1]) - r.eval(&w[0])).abs() / (w[1] - w[0]).norm());
        }
        assert!(worst <= r.lipschitz * (1.0 + 1e-9));
        assert!(r.eval(&Tangent::zeros()).abs() < 1e-12);
    }

    #[test]
    fn regraph_circle_rotated() {
        let rho = 2.0;
        let frame = ReferenceFrame::identity(2);
        let circle = LipschitzChart {
            frame,
            radius: 1.5,
            lipschitz: 1.2,
            func: Arc::new(CircleArc { rho }),
        };
        // rotate by 30 degrees about the circle centre (0, -rho)
        let ang = std::f64::consts::PI / 6.0;
        let center = Point::new(0.0, -rho, 0.0);
        let normal = Point::new(-ang.sin(), ang.cos(), 0.0);
        let base = center + rho * normal;
        let target = ReferenceFrame::from_normal(&normal, base, 2);
        let r = regraph(&circle, &target, 0.2).unwrap();
        for y in r.sample_grid(0.2, 21) {
            let exact = (rho * rho - y.x * y.x).sqrt() - rho;
            assert!((r.eval(&y) - exact).abs() < 1e-8);
            let j = r.jet(&y, 2);
            let s = (rho * rho - y.x * y.x).sqrt();
            assert!((j.grad.x + y.x / s).abs() < 1e-8);
        }
    }
}
