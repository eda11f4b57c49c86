use std::fmt;

use rstar::primitives::GeomWithData;
use rstar::RTree;

use super::frame::Point;

type Item2 = GeomWithData<[f64; 2], usize>;
type Item3 = GeomWithData<[f64; 3], usize>;

/// Static spatial index over points in two or three dimensions.
pub struct PointIndex {
    dim: usize,
    len: usize,
    tree2: Option<RTree<Item2>>,
    tree3: Option<RTree<Item3>>,
}

impl fmt::Debug for PointIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PointIndex(dim={}, len={})", self.dim, self.len)
    }
}

impl PointIndex {
    pub fn new(points: &[Point], dim: usize) -> Self {
        let mut s = Self { dim, len: points.len(), tree2: None, tree3: None };
        if dim == 2 {
            let a = points.iter().enumerate().map(|(i, p)| Item2::new([p.x, p.y], i)).collect();
            s.tree2 = Some(RTree::bulk_load(a));
        } else {
            let a = points.iter().enumerate().map(|(i, p)| Item3::new([p.x, p.y, p.z], i)).collect();
            s.tree3 = Some(RTree::bulk_load(a));
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of and distance to the nearest point.
    pub fn nearest(&self, x: &Point) -> (usize, f64) {
        match (&self.tree2, &self.tree3) {
            (Some(t), _) => {
                let n = t.nearest_neighbor(&[x.x, x.y]).expect("non-empty index");
                let g = n.geom();
                (n.data, ((g[0] - x.x).powi(2) + (g[1] - x.y).powi(2)).sqrt())
            }
            (_, Some(t)) => {
                let n = t.nearest_neighbor(&[x.x, x.y, x.z]).expect("non-empty index");
                let g = n.geom();
                (n.data, (Point::new(g[0], g[1], g[2]) - x).norm())
            }
            _ => unreachable!(),
        }
    }

    /// Indices of all points within distance `r`, in ascending index order.
    pub fn within(&self, x: &Point, r: f64) -> Vec<usize> {
        let r2 = r * r;
        let mut out: Vec<usize> = match (&self.tree2, &self.tree3) {
            (Some(t), _) => t.locate_within_distance([x.x, x.y], r2).map(|n| n.data).collect(),
            (_, Some(t)) => t.locate_within_distance([x.x, x.y, x.z], r2).map(|n| n.data).collect(),
            _ => unreachable!(),
        };
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_and_within_agree_with_brute_force() {
        let pts: Vec<Point> = (0..500)
            .map(|i| {
                let t = i as f64 * 0.7;
                Point::new(t.sin() * 2.0, (1.3 * t).cos(), (0.37 * t).sin())
            })
            .collect();
        let idx = PointIndex::new(&pts, 3);
        let q = Point::new(0.1, 0.2, -0.3);
        let brute = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p - q).norm()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        let (i, d) = idx.nearest(&q);
        assert!((d - brute.1).abs() < 1e-12);
        assert_eq!(i, brute.0);
        let mut w = idx.within(&q, 0.5);
        w.sort();
        let bw: Vec<usize> = (0..pts.len()).filter(|&i| (pts[i] - q).norm() <= 0.5).collect();
        assert_eq!(w, bw);
    }
}
