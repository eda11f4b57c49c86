//! First fundamental form, weak second fundamental form of graphs and
//! curvature integrals over charts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::defining::{solve_implicit, DefiningFunction};
use crate::error::{Error, Result};
use crate::geometry::atlas::DomainAtlas;
use crate::geometry::chart::tangent_grid;
use crate::geometry::frame::{Tangent, TangentMatrix};
use crate::partition::{BumpFamily, Piece};

/// g = I + grad grad^T and its inverse. In two dimensions only the (0, 0)
/// entry is active and the unused diagonal entry is 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FundamentalForms {
    pub g: TangentMatrix,
    pub g_inv: TangentMatrix,
}

pub fn forms(grad: &Tangent) -> FundamentalForms {
    let g = TangentMatrix::identity() + grad * grad.transpose();
    let g_inv = TangentMatrix::identity() - grad * grad.transpose() / (1.0 + grad.norm_squared());
    FundamentalForms { g, g_inv }
}

/// B_ij = phi_ij / sqrt(1 + |grad phi|^2) and its norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureField {
    pub b: TangentMatrix,
    pub norm: f64,
}

/// |B|^2 = trace((g^{-1} H)^2) / (1 + |grad|^2).
pub fn weak_curvature(grad: &Tangent, hess: &TangentMatrix) -> CurvatureField {
    let w = 1.0 + grad.norm_squared();
    let a = forms(grad).g_inv * hess;
    let t = (a * a).trace();
    CurvatureField { b: hess / w.sqrt(), norm: (t.max(0.0) / w).sqrt() }
}

/// Checks |H| / (1+L^2)^{3/2} <= |B| <= |H| with L = |grad| (Frobenius norms).
pub fn bbb_holds(grad: &Tangent, hess: &TangentMatrix, tol: f64) -> bool {
    let b = weak_curvature(grad, hess).norm;
    let h = hess.norm();
    let w = 1.0 + grad.norm_squared();
    b <= h * (1.0 + tol) + tol && b >= h / w.powf(1.5) * (1.0 - tol) - tol
}

/// Integral of |B|^q sqrt(1 + |grad|^2) weight over given nodes with cell area `cell`.
pub fn weighted_sum(
    grads: &[Tangent],
    hess: &[TangentMatrix],
    weights: &[f64],
    q: f64,
    cell: f64,
) -> f64 {
    grads
        .iter()
        .zip(hess)
        .zip(weights)
        .map(|((g, h), w)| w * weak_curvature(g, h).norm.powf(q) * (1.0 + g.norm_squared()).sqrt())
        .sum::<f64>()
        * cell
}

/// Integral of |B|^q over a single chart window B'_r, no partition weights.
pub fn curvature_integral(
    jet: impl Fn(&Tangent) -> (Tangent, TangentMatrix),
    dim: usize,
    q: f64,
    r: f64,
    domain_radius: f64,
    per_axis: usize,
) -> Result<f64> {
    if q < 1.0 {
        return Err(Error::InvalidParameter(format!("q = {q} < 1")));
    }
    if r > domain_radius {
        return Err(Error::OutsideDomain(format!("window {r} exceeds chart radius {domain_radius}")));
    }
    let (nodes, cell, ends) = trapezoid_nodes(dim, r, per_axis);
    let mut total = 0.0;
    for (y, e) in nodes.iter().zip(&ends) {
        let (g, h) = jet(y);
        total += e * weak_curvature(&g, &h).norm.powf(q) * (1.0 + g.norm_squared()).sqrt();
    }
    Ok(total * cell)
}

/// Lattice nodes of B'_r with trapezoid end weights (1/2 at the segment ends in 2D).
fn trapezoid_nodes(dim: usize, r: f64, per_axis: usize) -> (Vec<Tangent>, f64, Vec<f64>) {
    let nodes = tangent_grid(dim, r, per_axis);
    let h = 2.0 * r / (per_axis.max(2) - 1) as f64;
    let ends = if dim == 2 {
        (0..nodes.len()).map(|k| if k == 0 || k + 1 == nodes.len() { 0.5 } else { 1.0 }).collect()
    } else {
        vec![1.0; nodes.len()]
    };
    let cell = if dim == 2 { h } else { h * h };
    (nodes, cell, ends)
}

/// Which boundary to integrate over.
#[derive(Clone, Copy, Debug)]
pub enum Surface<'a> {
    /// The original boundary through its charts phi^i.
    Exact,
    /// The zero set of F_m or F~_m through the implicit charts.
    Implicit(&'a DefiningFunction),
}

/// Per-chart contribution and total of the curvature integral.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CurvatureTotal {
    pub total: f64,
    pub per_chart: Vec<f64>,
    pub spacing: f64,
}

/// sum_i int |B|^q xi_i sqrt(1+|grad|^2) dy' over |y'| < 7R/32, the union
/// of chart bump supports, so that overlaps are not counted twice.
pub fn total_curvature(
    atlas: &DomainAtlas,
    bumps: &BumpFamily,
    surface: Surface<'_>,
    q: f64,
    spacing: f64,
) -> Result<CurvatureTotal> {
    let r = bumps.chart_support();
    let per_axis = (2.0 * r / spacing).ceil() as usize + 1;
    let (nodes, cell, ends) = trapezoid_nodes(atlas.dim, r, per_axis);
    let per_chart: Vec<Result<f64>> = (0..atlas.len())
        .into_par_iter()
        .map(|i| {
            let chart = &atlas.charts[i];
            let mut s = 0.0;
            for (y, e) in nodes.iter().zip(&ends) {
                let (value, g, h) = match surface {
                    Surface::Exact => {
                        let j = chart.jet(y, 2);
                        (j.value, j.grad, j.hess.unwrap_or_else(TangentMatrix::zeros))
                    }
                    Surface::Implicit(df) => {
                        let p = solve_implicit(df, i, y, 2)?;
                        (p.value, p.grad, p.hess.unwrap_or_else(TangentMatrix::zeros))
                    }
                };
                let x = chart.frame.to_world(y, value);
                let xi = bumps.xi(Piece::Chart(i), &x)?;
                if xi == 0.0 {
                    continue;
                }
                s += e * xi * weak_curvature(&g, &h).norm.powf(q) * (1.0 + g.norm_squared()).sqrt();
            }
            Ok(s * cell)
        })
        .collect();
    let per_chart = per_chart.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(CurvatureTotal { total: per_chart.iter().sum(), per_chart, spacing: 2.0 * r / (per_axis - 1) as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::{ChartFn, CircleArc, SphereCap};
    use nalgebra::SymmetricEigen;

    #[test]
    fn flat_forms_are_identity() {
        let f = forms(&Tangent::zeros());
        assert_eq!(f.g, TangentMatrix::identity());
        assert_eq!(f.g_inv, TangentMatrix::identity());
        let f = forms(&Tangent::new(1.0, 0.0));
        assert_eq!(f.g[(0, 0)], 2.0);
        assert_eq!(f.g_inv[(0, 0)], 0.5);
    }

    #[test]
    fn inverse_and_eigenvalue_range() {
        let l: f64 = 1.5;
        for k in 0..50 {
            let t = k as f64 * 0.37;
            let grad = Tangent::new(t.cos(), t.sin()) * (l * (k as f64 / 49.0));
            let f = forms(&grad);
            assert!((f.g * f.g_inv - TangentMatrix::identity()).amax() < 1e-12);
            let e = SymmetricEigen::new(f.g_inv).eigenvalues;
            for v in e.iter() {
                assert!(*v >= 1.0 / (1.0 + l * l) - 1e-12 && *v <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn circle_and_sphere_curvature() {
        let rho = 2.5;
        let c = CircleArc { rho };
        let j = c.jet(&Tangent::zeros(), 2);
        assert!((weak_curvature(&j.grad, &j.hess.unwrap()).norm - 1.0 / rho).abs() < 1e-12);
        let j = c.jet(&Tangent::new(1.3, 0.0), 2);
        assert!((weak_curvature(&j.grad, &j.hess.unwrap()).norm - 1.0 / rho).abs() < 1e-12);
        let s = SphereCap { rho };
        for y in [Tangent::zeros(), Tangent::new(0.4, -1.1)] {
            let j = s.jet(&y, 2);
            let b = weak_curvature(&j.grad, &j.hess.unwrap()).norm;
            assert!((b - 2f64.sqrt() / rho).abs() < 1e-12);
            assert!(bbb_holds(&j.grad, &j.hess.unwrap(), 1e-12));
        }
        assert_eq!(weak_curvature(&Tangent::new(0.3, 0.1), &TangentMatrix::zeros()).norm, 0.0);
    }

    #[test]
    fn trace_formula_matches_shape_operator() {
        let grad = Tangent::new(0.4, -0.7);
        let hess = TangentMatrix::new(1.2, 0.3, 0.3, -0.5);
        let f = forms(&grad);
        let w = (1.0 + grad.norm_squared()).sqrt();
        let shape = f.g_inv * hess / w;
        let direct = (shape * shape).trace().sqrt();
        assert!((weak_curvature(&grad, &hess).norm - direct).abs() < 1e-12);
        assert!(bbb_holds(&grad, &hess, 1e-12));
    }

    #[test]
    fn single_chart_integrals() {
        let c = CircleArc { rho: 1.0 };
        let jet = |y: &Tangent| {
            let j = c.jet(y, 2);
            (j.grad, j.hess.unwrap())
        };
        // arc over |t| < 0.5 has angle 2 asin(0.5) and |B| = 1
        let v = curvature_integral(jet, 2, 1.0, 0.5, 0.9, 2001).unwrap();
        assert!((v - 2.0 * 0.5f64.asin()).abs() < 1e-6);
        assert!(curvature_integral(jet, 2, 1.0, 1.0, 0.9, 11).is_err());
        assert!(curvature_integral(jet, 2, 0.5, 0.1, 0.9, 11).is_err());
        let flat = |_: &Tangent| (Tangent::new(0.2, 0.0), TangentMatrix::zeros());
        assert_eq!(curvature_integral(flat, 3, 1.0, 0.3, 0.5, 31).unwrap(), 0.0);
    }
}
