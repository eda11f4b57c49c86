use std::fs;

use serde::Serialize;

use lipsmooth::capacity::{isocap_compare, r0, CapacityCache, IsocapConfig, IsocapRow, PinnedChain};
use lipsmooth::defining::Approximation;
use lipsmooth::suites::capacity_self_test;
use lipsmooth::Error;

use super::{load_atlas, parse_radii, setup, usage, write_json, Failure, RunArgs, EXIT_FAIL, EXIT_OK};

#[derive(Serialize)]
struct CapacityReport<'a> {
    shape: &'a str,
    config: &'a IsocapConfig,
    chain: PinnedChain,
    radii: Vec<f64>,
    rows: Vec<IsocapRow>,
}

pub fn run(args: &RunArgs, radii: Option<&str>, self_test: bool) -> Result<i32, Failure> {
    if self_test {
        let checks = capacity_self_test();
        if args.json {
            println!("{}", serde_json::to_string_pretty(&checks).map_err(Error::from)?);
        } else {
            for c in &checks {
                println!(
                    "{} relative error {:.3e} (limit {}) {}: {}",
                    c.name,
                    c.measured.unwrap_or(f64::NAN),
                    c.bound.unwrap_or(f64::NAN),
                    c.note.as_deref().unwrap_or(""),
                    if c.passed() { "pass" } else { "FAIL" }
                );
            }
        }
        return Ok(if checks.iter().all(|c| c.passed()) { EXIT_OK } else { EXIT_FAIL });
    }
    // fail fast on shapes without curvature before building the partition
    let atlas = load_atlas(args)?;
    if !atlas.smooth {
        return Err(usage(format!(
            "{}: the curvature-weighted capacity comparison needs a W^{{2,1}} boundary; this boundary has corners, \
             so |B| is a measure rather than a function",
            atlas.name
        )));
    }
    let s = setup(args, "128")?;
    let ctx = &s.ctx;
    let atlas = &ctx.atlas;
    let r0v = r0(atlas, &ctx.isocap);
    let radii = match radii {
        Some(list) => parse_radii(list)?,
        None => [0.25, 0.5, 0.75, 1.0].iter().map(|f| f * r0v).collect(),
    };
    if let Some(&r) = radii.iter().find(|&&r| r > r0v) {
        return Err(Error::RadiusTooLarge { r, r0: r0v }.into());
    }
    let cache = CapacityCache::new();
    let mut rows = Vec::new();
    for &m in &s.config.schedule {
        let ap = Approximation::new(atlas.clone(), ctx.bumps.clone(), m)?;
        rows.extend(isocap_compare(atlas, &ctx.bumps, &ap, &radii, &ctx.isocap, &cache)?);
    }
    let report = CapacityReport { shape: &atlas.name, config: &ctx.isocap, chain: PinnedChain::new(atlas, &ctx.isocap), radii, rows };
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("capacity.json"), &report)?;
    let mut w = csv::Writer::from_path(args.out.join("capacity.csv")).map_err(|e| usage(e.to_string()))?;
    for row in &report.rows {
        w.serialize(row).map_err(|e| usage(e.to_string()))?;
    }
    w.flush()?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    } else {
        println!("r0 = {r0v}");
        println!("{:>6} {:>12} {:>12} {:>12} {:>12} {:>12} holds", "m", "r", "K_outer", "K_inner", "K_omega", "rhs");
        for r in &report.rows {
            println!(
                "{:>6} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e} {}",
                r.m, r.r, r.k_outer, r.k_inner, r.k_omega, r.rhs, r.holds
            );
        }
    }
    Ok(if report.rows.iter().all(|r| r.holds) { EXIT_OK } else { EXIT_FAIL })
}
