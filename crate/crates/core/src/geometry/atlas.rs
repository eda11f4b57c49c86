use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::chart::LipschitzChart;
use super::frame::{Point, Tangent};
use super::index::PointIndex;
use super::shapes::{shape_spec, BoundaryModel, ShapeParams};
use crate::error::{Error, Result};

/// Covering radius of the chart centres, as a fraction of R.
pub const COVER_FRACTION: f64 = 1.0 / 12.0;
/// Implementation constant c(n) in the chart count bound N <= c (d/R)^n.
pub const CARDINALITY_CONSTANT: f64 = 64.0;

/// (L, R, ell, d) of a uniformly Lipschitz domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzCharacteristic {
    pub lipschitz: f64,
    pub radius: f64,
    pub ell: f64,
    pub diameter: f64,
}

impl LipschitzCharacteristic {
    pub fn new(lipschitz: f64, radius: f64, diameter: f64) -> Result<Self> {
        if !(lipschitz > 0.0) || !(radius > 0.0 && radius < 1.0) || !(diameter > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need L > 0, R in (0,1), d > 0; got L={lipschitz}, R={radius}, d={diameter}"
            )));
        }
        Ok(Self { lipschitz, radius, ell: radius * (1.0 + lipschitz), diameter })
    }
}

/// Charts covering the boundary of a Lipschitz domain.
#[derive(Debug)]
pub struct DomainAtlas {
    pub name: String,
    pub dim: usize,
    pub model: Arc<dyn BoundaryModel>,
    pub charts: Vec<LipschitzChart>,
    pub centers: Vec<Point>,
    pub characteristic: LipschitzCharacteristic,
    pub epsilon0: f64,
    /// Largest distance from a boundary sample to its nearest centre.
    pub covering_radius: f64,
    /// Whether curvature is a function (C^{1,1} or better boundary).
    pub smooth: bool,
    center_index: PointIndex,
}

/// Spacing of the fine boundary sampling used for the covering.
pub fn covering_spacing(dim: usize, radius: f64) -> f64 {
    if dim == 2 {
        radius / 128.0
    } else {
        radius / 24.0
    }
}

impl DomainAtlas {
    /// Builds the atlas from a boundary model by greedy farthest-point covering.
    pub fn from_model(
        name: &str,
        model: Arc<dyn BoundaryModel>,
        lipschitz: f64,
        radius: f64,
        smooth: bool,
    ) -> Result<Self> {
        let dim = model.dim();
        let characteristic = LipschitzCharacteristic::new(lipschitz, radius, model.diameter())?;
        let samples: Vec<Point> = model
            .sample_boundary(covering_spacing(dim, radius))
            .into_iter()
            .map(|(p, _)| p)
            .collect();
        let (centers, cover) = farthest_point_cover(&samples, dim, COVER_FRACTION * radius);
        let charts = centers
            .iter()
            .map(|c| model.chart_at(c, radius, lipschitz))
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(name, model, charts, characteristic, cover, smooth)
    }

    /// Builds an atlas from explicit charts; centres are the chart base points.
    pub fn assemble(
        name: &str,
        model: Arc<dyn BoundaryModel>,
        charts: Vec<LipschitzChart>,
        characteristic: LipschitzCharacteristic,
        covering_radius: f64,
        smooth: bool,
    ) -> Result<Self> {
        if charts.is_empty() {
            return Err(Error::Covering("atlas has no charts".into()));
        }
        let dim = model.dim();
        let centers: Vec<Point> = charts.iter().map(|c| *c.frame.base()).collect();
        let center_index = PointIndex::new(&centers, dim);
        Ok(Self {
            name: name.to_string(),
            dim,
            model,
            charts,
            centers,
            characteristic,
            epsilon0: characteristic.radius / 8.0,
            covering_radius,
            smooth,
            center_index,
        })
    }

    /// Overrides the extraction margin; must lie in (0, R/4).
    pub fn set_epsilon0(&mut self, e: f64) -> Result<()> {
        let r = self.characteristic.radius;
        if !(e > 0.0 && e < r / 4.0) {
            return Err(Error::InvalidParameter(format!("eps0 = {e} must lie in (0, R/4) with R = {r}")));
        }
        self.epsilon0 = e;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn lipschitz(&self) -> f64 {
        self.characteristic.lipschitz
    }

    pub fn radius(&self) -> f64 {
        self.characteristic.radius
    }

    /// Indices of centres within distance `r` of x.
    pub fn centers_within(&self, x: &Point, r: f64) -> Vec<usize> {
        self.center_index.within(x, r)
    }

    pub fn nearest_center(&self, x: &Point) -> (usize, f64) {
        self.center_index.nearest(x)
    }

    /// The pinned cardinality bound c(n) (d/R)^n.
    pub fn cardinality_bound(&self) -> f64 {
        let c = &self.characteristic;
        CARDINALITY_CONSTANT * (c.diameter / c.radius).powi(self.dim as i32)
    }

    /// Transition map y' -> Pi T^j (T^i)^{-1}(y', phi^i(y')).
    pub fn transition_eval(&self, i: usize, j: usize, y: &Tangent) -> Result<Tangent> {
        let ci = &self.charts[i];
        if y.norm() >= ci.radius {
            return Err(Error::OutsideDomain(format!("|y'| = {} >= R in chart {i}", y.norm())));
        }
        if i == j {
            return Ok(*y);
        }
        let x = ci.graph_point(y);
        let cj = &self.charts[j];
        let (z, zn) = cj.frame.to_local(&x);
        if z.norm() >= cj.radius || zn.abs() >= cj.ell() {
            return Err(Error::OutsideDomain(format!("image leaves the cylinder of chart {j}")));
        }
        Ok(z)
    }

    /// Checks that every boundary sample lies within R/8 of some centre.
    pub fn check_covering(&self) -> Result<f64> {
        let spacing = covering_spacing(self.dim, self.radius());
        let mut worst: f64 = 0.0;
        for (p, _) in self.model.sample_boundary(spacing) {
            let (_, d) = self.nearest_center(&p);
            worst = worst.max(d);
        }
        if worst >= self.radius() / 8.0 {
            return Err(Error::Covering(format!(
                "boundary sample at distance {worst:.4} from all centres (R/8 = {:.4})",
                self.radius() / 8.0
            )));
        }
        Ok(worst)
    }
}

/// Library constructor: `make_shape("disk", params)`.
pub fn make_shape(name: &str, params: &ShapeParams) -> Result<DomainAtlas> {
    let spec = shape_spec(name, params)?;
    DomainAtlas::from_model(name, spec.model, spec.lipschitz, spec.radius, spec.smooth)
}

#[derive(PartialEq)]
struct Far(f64, usize);

impl Eq for Far {}

impl PartialOrd for Far {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Far {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Greedy farthest-point selection until every sample is within `radius` of a
/// centre. Returns the centres and the achieved covering radius.
pub fn farthest_point_cover(samples: &[Point], dim: usize, radius: f64) -> (Vec<Point>, f64) {
    if samples.is_empty() {
        return (vec![], 0.0);
    }
    let index = PointIndex::new(samples, dim);
    let mut dist = vec![f64::INFINITY; samples.len()];
    let mut heap = BinaryHeap::new();
    let mut centers = Vec::new();
    let mut next = 0usize;
    let mut reach = f64::INFINITY;
    loop {
        let c = samples[next];
        centers.push(c);
        dist[next] = 0.0;
        let candidates = if reach.is_finite() {
            index.within(&c, reach)
        } else {
            (0..samples.len()).collect()
        };
        for k in candidates {
            let d = (samples[k] - c).norm();
            if d < dist[k] {
                dist[k] = d;
                heap.push(Far(d, k));
            }
        }
        // discard stale heap entries
        let top = loop {
            match heap.peek() {
                Some(Far(d, k)) if *d != dist[*k] => {
                    heap.pop();
                }
                Some(Far(d, k)) => break Some((*d, *k)),
                None => break None,
            }
        };
        match top {
            Some((d, k)) if d > radius => {
                reach = d;
                next = k;
            }
            Some((d, _)) => return (centers, d),
            None => return (centers, 0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::frame::Tangent;

    #[test]
    fn fps_covers_samples() {
        let pts: Vec<Point> = (0..2000)
            .map(|i| {
                let t = i as f64 / 2000.0 * std::f64::consts::TAU;
                Point::new(t.cos(), t.sin(), 0.0)
            })
            .collect();
        let (c, r) = farthest_point_cover(&pts, 2, 0.05);
        assert!(r <= 0.05);
        for p in &pts {
            let d = c.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
            assert!(d <= 0.05 + 1e-12);
        }
        // centres are pairwise separated by at least the covering radius
        for a in 0..c.len() {
            for b in 0..a {
                assert!((c[a] - c[b]).norm() > 0.05 - 1e-12);
            }
        }
    }

    #[test]
    fn disk_atlas_invariants() {
        let p = ShapeParams::default().with("radius", 1.0).with("lipschitz", 0.2);
        let atlas = make_shape("disk", &p).unwrap();
        let l = atlas.lipschitz();
        assert!(atlas.check_covering().unwrap() < atlas.radius() / 8.0);
        for c in atlas.charts.iter().step_by(7) {
            assert!(c.eval(&Tangent::zeros()).abs() < 1e-12);
            for y in c.sample_grid(c.radius, 41) {
                assert!(c.eval(&y).abs() <= l * y.norm() * (1.0 + 1e-9) + 1e-15);
            }
        }
        assert!((atlas.len() as f64) <= atlas.cardinality_bound());
    }

    #[test]
    fn transition_identity_and_round_trip() {
        let atlas = make_shape("square", &ShapeParams::default()).unwrap();
        let y = Tangent::new(0.01, 0.0);
        assert_eq!(atlas.transition_eval(3, 3, &y).unwrap(), y);
        let (j, _) = {
            let x = atlas.centers[3];
            let near = atlas.centers_within(&x, atlas.radius() / 4.0);
            let j = *near.iter().find(|&&k| k != 3).unwrap();
            (j, 0)
        };
        let z = atlas.transition_eval(3, j, &y).unwrap();
        let back = atlas.transition_eval(j, 3, &z).unwrap();
        assert!((back - y).norm() < 1e-8);
    }
}
