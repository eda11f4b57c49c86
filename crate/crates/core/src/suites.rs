//! Named verification suites. Each returns checks of a measured value against
//! a bound; `verify` runs the requested ones.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    boundary_centers, concentric_capacity, estimate_k, isocap_compare, mazya_spot_check, r0, solve_capacity,
    spread_charts, CapacityCache, CapacityProblem, CurvatureMeasure, IsocapConfig,
};
use crate::curvature::{bbb_holds, total_curvature, weak_curvature, Surface};
use crate::defining::{detect_m0, solve_implicit, Approximation, M0Report};
use crate::error::Result;
use crate::geometry::chart::{tangent_grid, ChartFn, CircleArc, SphereCap};
use crate::geometry::{DomainAtlas, Point, Tangent};
use crate::metrics::{convergence_report, extract_midpoints, ConvergenceReport, MetricsConfig, PinnedConstants};
use crate::mollify::{MollifiedChart, MollifierKernel, Side};
use crate::numeric::gauss_legendre;
use crate::partition::BumpFamily;

pub const SUITES: &[&str] = &[
    "hausdorff",
    "sandwich",
    "sup",
    "transversality",
    "mollifier",
    "curvature",
    "curvature_convergence",
    "sobolev",
    "capacity",
    "isocap",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

/// measured `relation` bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub measured: Option<f64>,
    pub relation: String,
    pub bound: Option<f64>,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    pub fn le(suite: &str, name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::cmp(suite, name, measured, "<=", bound, measured <= bound)
    }

    pub fn ge(suite: &str, name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self::cmp(suite, name, measured, ">=", bound, measured >= bound)
    }

    fn cmp(suite: &str, name: impl Into<String>, measured: f64, rel: &str, bound: f64, ok: bool) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            measured: Some(measured),
            relation: rel.into(),
            bound: Some(bound),
            status: if ok && measured.is_finite() { Status::Pass } else { Status::Fail },
            note: None,
        }
    }

    pub fn fail(suite: &str, name: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            measured: None,
            relation: String::new(),
            bound: None,
            status: Status::Fail,
            note: Some(note.into()),
        }
    }

    pub fn skip(suite: &str, name: impl Into<String>, note: impl Into<String>) -> Self {
        Self { status: Status::Skip, ..Self::fail(suite, name, note) }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

/// Shared inputs; the m0 log and the convergence report are computed once.
pub struct Context {
    pub atlas: Arc<DomainAtlas>,
    pub bumps: Arc<BumpFamily>,
    pub schedule: Vec<f64>,
    pub metrics: MetricsConfig,
    pub constants: PinnedConstants,
    pub isocap: IsocapConfig,
    /// Nodes per axis of the extraction grids.
    pub extract_res: usize,
    /// Random points of the sandwich suite.
    pub sandwich_points: usize,
    pub seed: u64,
    m0: OnceLock<M0Report>,
    report: OnceLock<ConvergenceReport>,
    cache: CapacityCache,
}

impl Context {
    pub fn new(atlas: Arc<DomainAtlas>, bumps: Arc<BumpFamily>, schedule: Vec<f64>) -> Self {
        let dim = atlas.dim;
        Self {
            atlas,
            bumps,
            schedule,
            metrics: MetricsConfig::defaults(dim),
            constants: PinnedConstants::default(),
            isocap: IsocapConfig::default(),
            extract_res: if dim == 2 { 65 } else { 17 },
            sandwich_points: 100_000,
            seed: 1,
            m0: OnceLock::new(),
            report: OnceLock::new(),
            cache: CapacityCache::new(),
        }
    }

    pub fn m0(&self) -> &M0Report {
        self.m0.get_or_init(|| detect_m0(&self.atlas, &self.bumps, &self.schedule, self.extract_res))
    }

    pub fn report(&self) -> &ConvergenceReport {
        self.report.get_or_init(|| {
            convergence_report(&self.atlas, &self.bumps, &self.schedule, self.m0().clone(), &self.metrics, &self.constants)
        })
    }

    /// Schedule entries at or above m0.
    pub fn checked_schedule(&self) -> Vec<f64> {
        match self.m0().m0 {
            Some(m0) => self.schedule.iter().copied().filter(|&m| m >= m0).collect(),
            None => vec![],
        }
    }

    pub fn run(&self, suite: &str) -> Vec<Check> {
        match suite {
            "hausdorff" => hausdorff(self),
            "sandwich" => sandwich(self),
            "sup" => sup(self),
            "transversality" => transversality(self),
            "mollifier" => mollifier(self),
            "curvature" => curvature(self),
            "curvature_convergence" => curvature_convergence(self),
            "sobolev" => sobolev(self),
            "capacity" => capacity(self),
            "isocap" => isocap(self),
            other => vec![Check::fail(other, "unknown", "no such suite")],
        }
    }
}

fn no_m0(suite: &str, ctx: &Context) -> Option<Check> {
    ctx.checked_schedule().is_empty().then(|| Check::fail(suite, "m0", format!("no m of {:?} is at or above m0", ctx.schedule)))
}

fn label(m: f64) -> String {
    format!("m{m}")
}

pub fn hausdorff(ctx: &Context) -> Vec<Check> {
    const S: &str = "hausdorff";
    if let Some(c) = no_m0(S, ctx) {
        return vec![c];
    }
    let mut out = Vec::new();
    let rows: Vec<_> = ctx.report().rows.iter().filter(|r| !r.below_m0).collect();
    for r in &rows {
        match (r.hausdorff, r.hausdorff_error) {
            (Some(h), Some(e)) => out.push(
                Check::le(S, format!("{}.bound", label(r.m)), h, r.hausdorff_bound + e)
                    .with_note(format!("bound {} plus sampling error {e}", r.hausdorff_bound)),
            ),
            _ => out.push(Check::fail(S, format!("{}.bound", label(r.m)), r.status.clone())),
        }
    }
    for w in rows.windows(2) {
        if (w[1].m - 2.0 * w[0].m).abs() > 1e-12 {
            continue;
        }
        if let (Some(a), Some(b)) = (w[0].hausdorff, w[1].hausdorff) {
            out.push(Check::le(S, format!("{}.ratio", label(w[1].m)), b / a, 0.7));
        }
    }
    out
}

pub fn sup(ctx: &Context) -> Vec<Check> {
    const S: &str = "sup";
    if let Some(c) = no_m0(S, ctx) {
        return vec![c];
    }
    ctx.report()
        .rows
        .iter()
        .filter(|r| !r.below_m0)
        .map(|r| match r.sup_error {
            Some(v) => Check::le(S, label(r.m), v, r.sup_bound + 1e-9),
            None => Check::fail(S, label(r.m), r.status.clone()),
        })
        .collect()
}

pub fn transversality(ctx: &Context) -> Vec<Check> {
    const S: &str = "transversality";
    if let Some(c) = no_m0(S, ctx) {
        return vec![c];
    }
    ctx.report()
        .rows
        .iter()
        .filter(|r| !r.below_m0)
        .map(|r| match r.min_margin {
            Some(v) => Check::ge(S, label(r.m), v, r.margin_floor - 1e-9),
            None => Check::fail(S, label(r.m), r.status.clone()),
        })
        .collect()
}

/// Sandwich F_m < F < F~_m and omega_m in Omega in Omega_m at random points,
/// half drawn from W and half from the inflated bounding box.
pub fn sandwich(ctx: &Context) -> Vec<Check> {
    const S: &str = "sandwich";
    if let Some(c) = no_m0(S, ctx) {
        return vec![c];
    }
    let atlas = &ctx.atlas;
    let mut points = ctx.bumps.sample_w(atlas.model.as_ref(), ctx.sandwich_points / 2, ctx.seed);
    let (lo, hi) = atlas.model.bbox();
    let pad = atlas.radius();
    let mut rng = rand::rngs::StdRng::seed_from_u64(ctx.seed.wrapping_add(1));
    while points.len() < ctx.sandwich_points {
        let mut p = Point::zeros();
        for a in 0..atlas.dim {
            p[a] = rng.gen_range(lo[a] - pad..hi[a] + pad);
        }
        points.push(p);
    }
    let mut out = Vec::new();
    for m in ctx.checked_schedule() {
        let ap = match Approximation::new(atlas.clone(), ctx.bumps.clone(), m) {
            Ok(ap) => ap,
            Err(e) => {
                out.push(Check::fail(S, label(m), e.to_string()));
                continue;
            }
        };
        let (order, contain) = points
            .par_iter()
            .map(|x| {
                let order = match ap.triple(x) {
                    Ok(t) => usize::from(!(t.outer < t.exact && t.exact < t.inner)),
                    Err(_) => 0,
                };
                let inner = ap.contains(Side::Inner, x);
                let omega = atlas.model.depth(x) > 0.0;
                let outer = ap.contains(Side::Outer, x);
                (order, usize::from((inner && !omega) || (omega && !outer)))
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = points.len();
        out.push(Check::le(S, format!("{}.order", label(m)), order as f64, 0.0).with_note(format!("{n} points")));
        out.push(Check::le(S, format!("{}.containment", label(m)), contain as f64, 0.0).with_note(format!("{n} points")));
    }
    out
}

pub const MOLLIFIER_SCHEDULE: [f64; 6] = [4.0, 8.0, 16.0, 32.0, 64.0, 128.0];

/// Unit mass of rho_m, |M_m phi - phi| <= L/m and Lipschitz preservation on
/// every chart.
pub fn mollifier(ctx: &Context) -> Vec<Check> {
    mollifier_checks(&ctx.atlas, 1)
}

/// The mollifier checks on every `stride`-th chart; they need only the atlas.
/// An m with 1/m >= R leaves no point where M_m(phi) is defined and is skipped.
pub fn mollifier_checks(atlas: &DomainAtlas, stride: usize) -> Vec<Check> {
    const S: &str = "mollifier";
    let k = MollifierKernel::cached(atlas.dim - 1);
    // a different rule from the one that normalized the kernel
    let rule = gauss_legendre(151);
    let l = atlas.lipschitz();
    let mut out = Vec::new();
    for m in MOLLIFIER_SCHEDULE {
        // radial integral over |t| < 1/m
        let radial: f64 = rule
            .iter()
            .map(|&(x, w)| {
                let s = 0.5 * (x + 1.0) / m;
                0.5 / m * w * k.eval(m, s) * if atlas.dim == 2 { 2.0 } else { 2.0 * PI * s }
            })
            .sum();
        out.push(Check::le(S, format!("{}.mass", label(m)), (radial - 1.0).abs(), 1e-10));
        if 1.0 / m >= atlas.radius() {
            out.push(Check::skip(S, label(m), format!("1/m >= R = {}", atlas.radius())));
            continue;
        }
        let per = if atlas.dim == 2 { 33 } else { 9 };
        let stats: Vec<(f64, f64)> = atlas
            .charts
            .par_iter()
            .step_by(stride.max(1))
            .map(|c| {
                let mc = MollifiedChart::new(c.clone(), m);
                let mut dev = 0.0f64;
                let mut lip = 0.0f64;
                for y in tangent_grid(atlas.dim, mc.domain_radius(), per) {
                    let j = mc.smooth_jet(&y, 1);
                    dev = dev.max((j.value - c.eval(&y)).abs());
                    lip = lip.max(j.grad.norm());
                }
                (dev, lip)
            })
            .collect();
        let dev = stats.iter().map(|s| s.0).fold(0.0, f64::max);
        let lip = stats.iter().map(|s| s.1).fold(0.0, f64::max);
        out.push(Check::le(S, format!("{}.deviation", label(m)), dev, l / m));
        out.push(Check::le(S, format!("{}.lipschitz", label(m)), lip, l * (1.0 + 1e-9)));
    }
    out
}

/// Analytic circle and sphere curvature, the |H|/(1+L^2)^{3/2} <= |B| <= |H|
/// sandwich at every extraction node, and implicit derivatives against
/// centred differences at the first m >= m0.
pub fn curvature(ctx: &Context) -> Vec<Check> {
    const S: &str = "curvature";
    let mut out = Vec::new();
    let rho = 4.0;
    let (mut e2, mut e3) = (0.0f64, 0.0f64);
    for t in [-0.9, -0.5, 0.0, 0.3, 0.8] {
        let j = CircleArc { rho }.jet(&Tangent::new(t, 0.0), 2);
        e2 = e2.max((weak_curvature(&j.grad, &j.hess.unwrap()).norm - 1.0 / rho).abs());
        let j = SphereCap { rho }.jet(&Tangent::new(t, -0.4 * t), 2);
        e3 = e3.max((weak_curvature(&j.grad, &j.hess.unwrap()).norm - 2f64.sqrt() / rho).abs());
    }
    out.push(Check::le(S, "circle", e2, 1e-6));
    out.push(Check::le(S, "sphere", e3, 1e-6));
    let schedule = ctx.checked_schedule();
    let Some(&m) = schedule.first() else {
        out.push(no_m0(S, ctx).unwrap());
        return out;
    };
    let ap = match Approximation::new(ctx.atlas.clone(), ctx.bumps.clone(), m) {
        Ok(ap) => ap,
        Err(e) => {
            out.push(Check::fail(S, label(m), e.to_string()));
            return out;
        }
    };
    for side in [Side::Outer, Side::Inner] {
        let name = format!("{}.{}.bbb", label(m), side.name());
        match extract_midpoints(ap.side(side), ctx.metrics.chart_res) {
            Ok(charts) => {
                let bad = charts
                    .iter()
                    .flat_map(|c| c.grads.iter().zip(&c.hess))
                    .filter(|(g, h)| !bbb_holds(g, h, 1e-9))
                    .count();
                out.push(Check::le(S, name, bad as f64, 0.0));
            }
            Err(e) => out.push(Check::fail(S, name, e.to_string())),
        }
    }
    // implicit derivatives against differences
    let df = ap.side(Side::Outer);
    let (hg, hh) = (1e-3, 1e-3);
    let r = ctx.atlas.radius() / 4.0;
    let mut eg = 0.0f64;
    let mut eh = 0.0f64;
    let dim = ctx.atlas.dim;
    let mut fd = || -> Result<()> {
        for i in spread_charts(4, ctx.atlas.len()) {
            for y in tangent_grid(dim, r, if dim == 2 { 9 } else { 3 }) {
                let p = solve_implicit(df, i, &y, 2)?;
                let v = |z: Tangent| solve_implicit(df, i, &z, 0).map(|p| p.value);
                for a in 0..dim - 1 {
                    let mut d = Tangent::zeros();
                    d[a] = 1.0;
                    let g = (v(y + d * hg)? - v(y - d * hg)?) / (2.0 * hg);
                    eg = eg.max((g - p.grad[a]).abs());
                    for b in 0..dim - 1 {
                        let mut e = Tangent::zeros();
                        e[b] = 1.0;
                        let h = (v(y + d * hh + e * hh)? - v(y + d * hh - e * hh)? - v(y - d * hh + e * hh)?
                            + v(y - d * hh - e * hh)?)
                            / (4.0 * hh * hh);
                        eh = eh.max((h - p.hess.unwrap()[(a, b)]).abs());
                    }
                }
            }
        }
        Ok(())
    };
    match fd() {
        Ok(()) => {
            out.push(Check::le(S, format!("{}.fd_gradient", label(m)), eg, 1e-6));
            out.push(Check::le(S, format!("{}.fd_hessian", label(m)), eh, 1e-4));
        }
        Err(e) => out.push(Check::fail(S, format!("{}.fd", label(m)), e.to_string())),
    }
    out
}

/// Relative error of the total curvature (q = 1) of the outer boundary
/// against the original one: at most 2% at the last m, and decreasing
/// along the schedule up to 5% of the first error.
pub fn curvature_convergence(ctx: &Context) -> Vec<Check> {
    const S: &str = "curvature_convergence";
    let atlas = &ctx.atlas;
    if !atlas.smooth {
        return vec![Check::skip(S, "total", format!("{} has no integrable curvature", atlas.name))];
    }
    let spacing = atlas.radius() / 256.0;
    let exact = match total_curvature(atlas, &ctx.bumps, Surface::Exact, 1.0, spacing) {
        Ok(t) => t.total,
        Err(e) => return vec![Check::fail(S, "exact", e.to_string())],
    };
    let mut errs = Vec::new();
    let mut out = Vec::new();
    for &m in &ctx.schedule {
        let total = Approximation::new(atlas.clone(), ctx.bumps.clone(), m)
            .and_then(|ap| total_curvature(atlas, &ctx.bumps, Surface::Implicit(&ap.outer), 1.0, spacing));
        match total {
            Ok(t) => errs.push((m, ((t.total - exact) / exact).abs())),
            Err(e) => out.push(Check::fail(S, label(m), e.to_string())),
        }
    }
    if let Some(&(m, e)) = errs.last() {
        out.push(Check::le(S, format!("{}.relative", label(m)), e, 0.02).with_note(format!("reference {exact}")));
        let noise = 0.05 * errs[0].1;
        for w in errs.windows(2) {
            out.push(Check::le(S, format!("{}.monotone", label(w[1].0)), w[1].1, w[0].1 + noise));
        }
    }
    out
}

/// error(last m) <= error(first m) / 2 for every (k, p) and side.
pub fn sobolev(ctx: &Context) -> Vec<Check> {
    const S: &str = "sobolev";
    let rows = &ctx.report().rows;
    let mut out = Vec::new();
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
        return vec![Check::fail(S, "schedule", "empty schedule")];
    };
    for (a, b) in first.sobolev.iter().zip(&last.sobolev) {
        for (side, x, y) in [("outer", a.outer, b.outer), ("inner", a.inner, b.inner)] {
            let name = format!("w{}_{}.{side}", a.k, a.p);
            if a.k == 2 && !ctx.atlas.smooth {
                out.push(Check::skip(S, name, "second derivatives are not integrable"));
                continue;
            }
            match (x, y) {
                (Some(x), Some(y)) => out.push(
                    Check::le(S, name, y, 0.5 * x).with_note(format!("m {} against m {}", last.m, first.m)),
                ),
                _ => out.push(Check::fail(S, name, format!("missing value ({}; {})", first.status, last.status))),
            }
        }
    }
    out
}

/// Concentric-ball capacities against 2 pi / ln(r/s) and 4 pi s r / (r - s).
pub fn capacity_self_test() -> Vec<Check> {
    const S: &str = "capacity";
    let mut out = Vec::new();
    for (dim, h, tol) in [(2usize, 1.0 / 256.0, 0.02), (3, 1.0 / 96.0, 0.03)] {
        let exact = concentric_capacity(dim, 1.0, 0.25);
        let name = format!("concentric{dim}d");
        match solve_capacity(&CapacityProblem::concentric(dim, 1.0, 0.25, h)) {
            Ok(c) => out.push(
                Check::le(S, name, ((c.value - exact) / exact).abs(), tol)
                    .with_note(format!("numeric {} analytic {exact}", c.value)),
            ),
            Err(e) => out.push(Check::fail(S, name, e.to_string())),
        }
    }
    out
}

pub fn capacity(_ctx: &Context) -> Vec<Check> {
    capacity_self_test()
}

/// K under family refinement, the uniform bound max_m K_{Omega_m}(r0/2) <=
/// 3 K_Omega(r0), the Maz'ya quotient check at r0/2 and r0, and the verdict
/// of the pinned comparison chain.
pub fn isocap(ctx: &Context) -> Vec<Check> {
    const S: &str = "isocap";
    let atlas = &ctx.atlas;
    if !atlas.smooth {
        return vec![Check::skip(S, "all", format!("{} has no integrable curvature", atlas.name))];
    }
    let cfg = &ctx.isocap;
    let r0v = r0(atlas, cfg);
    let r = r0v / 2.0;
    let mut out = Vec::new();
    let run = |out: &mut Vec<Check>| -> Result<()> {
        let charts = spread_charts(cfg.centers, atlas.len());
        let exact = CurvatureMeasure { per_radius: cfg.quad_res, ..CurvatureMeasure::new(atlas, &ctx.bumps, Surface::Exact) };
        let centers = boundary_centers(&exact, &charts)?;
        let fine = estimate_k(&exact, &centers, r, &cfg.family, cfg.cap_res, &ctx.cache)?.value;
        let coarse: Vec<f64> = cfg.family.iter().copied().skip(cfg.family.len() / 2).collect();
        let coarse = estimate_k(&exact, &centers, r, &coarse, cfg.cap_res, &ctx.cache)?.value;
        out.push(Check::ge(S, "refinement", fine, coarse));
        let k2r = estimate_k(&exact, &centers, 2.0 * r, &cfg.family, cfg.cap_res, &ctx.cache)?.value;
        let mut worst = 0.0f64;
        for &m in &ctx.schedule {
            let ap = Approximation::new(atlas.clone(), ctx.bumps.clone(), m)?;
            for df in [&ap.outer, &ap.inner] {
                let meas = CurvatureMeasure { per_radius: cfg.quad_res, ..CurvatureMeasure::new(atlas, &ctx.bumps, Surface::Implicit(df)) };
                let c = boundary_centers(&meas, &charts)?;
                worst = worst.max(estimate_k(&meas, &c, r, &cfg.family, cfg.cap_res, &ctx.cache)?.value);
            }
            let rows = isocap_compare(atlas, &ctx.bumps, &ap, &[r], cfg, &ctx.cache)?;
            for row in rows {
                let ok = if row.holds { 0.0 } else { 1.0 };
                out.push(
                    Check::le(S, format!("{}.chain", label(m)), ok, 0.0)
                        .with_note(format!("K outer {} inner {} <= rhs {}", row.k_outer, row.k_inner, row.rhs)),
                );
            }
        }
        out.push(Check::le(S, "uniform", worst, 3.0 * k2r).with_note(format!("r = r0/2 = {r}")));
        for (name, rr) in [("mazya.half", r), ("mazya.r0", r0v)] {
            let mz = mazya_spot_check(&exact, &centers[0], rr, &cfg.family, cfg.cap_res, &ctx.cache)?;
            let ratio = if mz.q > 0.0 { mz.rq / mz.q } else { f64::NAN };
            out.push(Check::ge(S, format!("{name}.lower"), mz.rq * (1.0 + mz.tolerance), mz.q).with_note(format!("Rq/Q = {ratio}")));
            out.push(Check::le(S, format!("{name}.upper"), mz.rq, 4.0 * mz.q * (1.0 + mz.tolerance)));
        }
        Ok(())
    };
    if let Err(e) = run(&mut out) {
        out.push(Check::fail(S, "error", e.to_string()));
    }
    out
}

/// psi at the given nodes, for comparing stored charts with a fresh solve.
pub fn recompute_chart(ap: &Approximation, side: Side, chart: usize, nodes: &[Tangent]) -> Result<Vec<f64>> {
    nodes.iter().map(|y| solve_implicit(ap.side(side), chart, y, 0).map(|p| p.value)).collect()
}
