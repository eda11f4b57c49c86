use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// World point. In two dimensions the third entry is zero.
pub type Point = Vector3<f64>;
/// Tangential coordinates y'. In two dimensions the second entry is zero.
pub type Tangent = Vector2<f64>;
/// Hessian in tangential coordinates.
pub type TangentMatrix = Matrix2<f64>;

/// Rigid motion z = R (x - x0). Rows of `rotation` are the tangent axes
/// followed by the vertical axis (the first `dim` rows are used).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    rotation: Matrix3<f64>,
    base: Point,
    dim: usize,
}

impl ReferenceFrame {
    pub fn new(rotation: Matrix3<f64>, base: Point, dim: usize) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in {{2,3}}")));
        }
        let mut r = rotation;
        if dim == 2 {
            if r[(0, 2)].abs() > 1e-12 || r[(1, 2)].abs() > 1e-12 {
                return Err(Error::InvalidParameter("2D rotation has z entries".into()));
            }
            r[(2, 0)] = 0.0;
            r[(2, 1)] = 0.0;
            r[(2, 2)] = 1.0;
        }
        let err = (r.transpose() * r - Matrix3::identity()).amax();
        if err > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "rotation is not orthogonal (deviation {err:.2e})"
            )));
        }
        Ok(Self { rotation: r, base, dim })
    }

    /// Frame whose vertical axis is `normal`, centred at `base`.
    pub fn from_normal(normal: &Point, base: Point, dim: usize) -> Self {
        let n = normal.normalize();
        let r = if dim == 2 {
            // tangent is the normal rotated clockwise so that (t, n) is positively oriented
            Matrix3::new(n.y, -n.x, 0.0, n.x, n.y, 0.0, 0.0, 0.0, 1.0)
        } else {
            let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let t1 = (helper - n * n.dot(&helper)).normalize();
            let t2 = n.cross(&t1);
            Matrix3::from_rows(&[t1.transpose(), t2.transpose(), n.transpose()])
        };
        Self { rotation: r, base, dim }
    }

    pub fn identity(dim: usize) -> Self {
        Self { rotation: Matrix3::identity(), base: Point::zeros(), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    /// z = R (x - x0) in raw 3-vector form.
    pub fn forward(&self, x: &Point) -> Point {
        self.rotation * (x - self.base)
    }

    /// x = R^T z + x0.
    pub fn inverse(&self, z: &Point) -> Point {
        self.rotation.transpose() * z + self.base
    }

    /// Splits world x into (y', y_n).
    pub fn to_local(&self, x: &Point) -> (Tangent, f64) {
        let z = self.forward(x);
        split(&z, self.dim)
    }

    pub fn to_world(&self, y: &Tangent, yn: f64) -> Point {
        self.inverse(&join(y, yn, self.dim))
    }

    /// World direction of the vertical axis.
    pub fn vertical(&self) -> Point {
        self.rotation.row(self.dim - 1).transpose()
    }

    /// Gradient of a scalar field expressed in world coordinates, mapped to local (y', y_n).
    pub fn grad_to_local(&self, g: &Point) -> (Tangent, f64) {
        split(&(self.rotation * g), self.dim)
    }

    /// World Hessian mapped to local coordinates: R H R^T.
    pub fn hess_to_local(&self, h: &Matrix3<f64>) -> Matrix3<f64> {
        self.rotation * h * self.rotation.transpose()
    }

    /// Index of the vertical coordinate in the raw 3-vector.
    pub fn vindex(&self) -> usize {
        self.dim - 1
    }
}

pub fn split(z: &Point, dim: usize) -> (Tangent, f64) {
    if dim == 2 {
        (Tangent::new(z.x, 0.0), z.y)
    } else {
        (Tangent::new(z.x, z.y), z.z)
    }
}

pub fn join(y: &Tangent, yn: f64, dim: usize) -> Point {
    if dim == 2 {
        Point::new(y.x, yn, 0.0)
    } else {
        Point::new(y.x, y.y, yn)
    }
}

/// Rotation by angle `theta` in the plane, embedded as a 3x3 matrix.
pub fn rotation2(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_frame_has_vertical_normal() {
        let n = Point::new(1.0, 2.0, -0.5).normalize();
        let f = ReferenceFrame::from_normal(&n, Point::new(0.3, 0.1, 0.2), 3);
        assert!((f.vertical() - n).norm() < 1e-14);
        assert!((f.rotation().transpose() * f.rotation() - Matrix3::identity()).amax() < 1e-14);
        assert!(f.rotation().determinant() > 0.0);
        let f2 = ReferenceFrame::from_normal(&Point::new(0.6, 0.8, 0.0), Point::zeros(), 2);
        assert!((f2.vertical() - Point::new(0.6, 0.8, 0.0)).norm() < 1e-14);
        assert!(f2.rotation().determinant() > 0.0);
    }

    #[test]
    fn round_trip() {
        let f = ReferenceFrame::new(rotation2(0.7), Point::new(1.0, -2.0, 0.0), 2).unwrap();
        let x = Point::new(0.3, 0.4, 0.0);
        let (y, yn) = f.to_local(&x);
        assert!((f.to_world(&y, yn) - x).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_orthogonal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(ReferenceFrame::new(m, Point::zeros(), 2).is_err());
    }
}
