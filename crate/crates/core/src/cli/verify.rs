use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use lipsmooth::defining::Approximation;
use lipsmooth::grid_io::StoredChart;
use lipsmooth::suites::{recompute_chart, Check, Context, Status, SUITES};

use super::{setup, usage, write_json, Failure, RunArgs, RunConfig, EXIT_FAIL, EXIT_OK};

const CHARTS: &str = "charts";

#[derive(Serialize)]
struct VerifyReport<'a> {
    config: &'a RunConfig,
    suites: Vec<String>,
    passed: bool,
    checks: &'a [Check],
}

pub fn run(args: &RunArgs, only: Option<&str>) -> Result<i32, Failure> {
    let charts_dir = args.out.join(CHARTS);
    let have_charts = charts_dir.join("index.json").is_file();
    let suites: Vec<String> = match only {
        Some(list) => {
            let v: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
            for s in &v {
                if !SUITES.contains(&s.as_str()) && s != CHARTS {
                    return Err(usage(format!("--only: unknown suite `{s}` (known: {}, {CHARTS})", SUITES.join(", "))));
                }
            }
            if v.is_empty() {
                return Err(usage("--only: no suites given"));
            }
            v
        }
        None => {
            let mut v: Vec<String> = SUITES.iter().map(|s| s.to_string()).collect();
            if have_charts {
                v.push(CHARTS.into());
            }
            v
        }
    };
    if suites.iter().any(|s| s == CHARTS) && !have_charts {
        return Err(usage(format!("missing artifacts: {} has no chart index; run `approximate` first", charts_dir.display())));
    }
    let s = setup(args, "16,32,64,128")?;
    let mut checks = Vec::new();
    for suite in &suites {
        let found = if suite == CHARTS { stored_charts(&s.ctx, &charts_dir)? } else { s.ctx.run(suite) };
        if !args.json {
            // stored charts are many; list only the failures
            let chart_suite = suite == CHARTS;
            for c in found.iter().filter(|c| !chart_suite || !c.passed()) {
                println!("{}", line(c));
            }
            if chart_suite {
                let bad = found.iter().filter(|c| !c.passed()).count();
                println!("{} {CHARTS}: {} stored charts, {bad} failed", if bad == 0 { "PASS" } else { "FAIL" }, found.len());
            }
        }
        checks.extend(found);
    }
    let passed = checks.iter().all(Check::passed);
    fs::create_dir_all(&args.out)?;
    let report = VerifyReport { config: &s.config, suites, passed, checks: &checks };
    write_json(&args.out.join("verify.json"), &report)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(lipsmooth::Error::from)?);
    } else {
        let failed = checks.iter().filter(|c| !c.passed()).count();
        println!("{} checks, {} failed", checks.len(), failed);
    }
    Ok(if passed { EXIT_OK } else { EXIT_FAIL })
}

fn line(c: &Check) -> String {
    let tag = match c.status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    let mut s = format!("{tag} {}.{}", c.suite, c.name);
    if let (Some(m), Some(b)) = (c.measured, c.bound) {
        s += &format!(" {m:.6e} {} {b:.6e}", c.relation);
    }
    if let Some(n) = &c.note {
        s += &format!(" ({n})");
    }
    s
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    v.sort();
    Ok(v)
}

/// Re-solves every stored chart at its nodes and compares with the file.
fn stored_charts(ctx: &Context, dir: &Path) -> Result<Vec<Check>, Failure> {
    const S: &str = CHARTS;
    let mut stems = Vec::new();
    for sub in sorted_entries(dir)?.into_iter().filter(|p| p.is_dir()) {
        for f in sorted_entries(&sub)? {
            if f.extension().is_some_and(|e| e == "json") {
                stems.push(f.with_extension(""));
            }
        }
    }
    let mut out = Vec::new();
    let mut by_m: BTreeMap<u64, Vec<(String, StoredChart)>> = BTreeMap::new();
    for stem in &stems {
        let name = stem
            .strip_prefix(dir)
            .map(|p| p.to_string_lossy().replace(std::path::MAIN_SEPARATOR, "."))
            .unwrap_or_default();
        match StoredChart::read(stem) {
            Ok(c) if c.meta.chart < ctx.atlas.len() => by_m.entry(c.meta.m.to_bits()).or_default().push((name, c)),
            Ok(c) => out.push(Check::fail(S, name, format!("chart {} is not in the atlas", c.meta.chart))),
            Err(e) => out.push(Check::fail(S, name, e.to_string())),
        }
    }
    for (bits, charts) in by_m {
        let m = f64::from_bits(bits);
        let ap = match Approximation::new(ctx.atlas.clone(), ctx.bumps.clone(), m) {
            Ok(ap) => ap,
            Err(e) => {
                out.push(Check::fail(S, format!("m{m}"), e.to_string()));
                continue;
            }
        };
        let found: Vec<Check> = charts
            .par_iter()
            .map(|(name, c)| match recompute_chart(&ap, c.meta.side, c.meta.chart, &c.nodes) {
                Ok(v) => {
                    let chart = &ctx.atlas.charts[c.meta.chart];
                    let exact = c.nodes.iter().map(|y| chart.eval(y));
                    let gap = |(a, b): (f64, &f64)| if b.is_finite() { (a - b).abs() } else { f64::INFINITY };
                    let d = v.iter().copied().zip(&c.psi).map(gap).chain(exact.zip(&c.phi).map(gap)).fold(0.0, f64::max);
                    Check::le(S, name.clone(), d, 1e-9)
                }
                Err(e) => Check::fail(S, name.clone(), e.to_string()),
            })
            .collect();
        out.extend(found);
    }
    if out.is_empty() {
        out.push(Check::fail(S, "index", "no stored charts"));
    }
    Ok(out)
}
