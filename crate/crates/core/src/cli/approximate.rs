use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;

use rayon::prelude::*;
use serde::Serialize;

use lipsmooth::defining::{extract_chart, Approximation};
use lipsmooth::grid_io::write_chart;
use lipsmooth::metrics::convergence_report;
use lipsmooth::mollify::Side;

use super::{setup, write_json, Failure, RunArgs, EXIT_OK};

/// Per-m outcome of the chart extraction.
#[derive(Debug, Default, Serialize)]
struct ChartSet {
    written: usize,
    /// chart index -> error, per side.
    failed: BTreeMap<String, BTreeMap<usize, String>>,
}

pub fn run(args: &RunArgs) -> Result<i32, Failure> {
    let s = setup(args, "16,32,64,128")?;
    let ctx = &s.ctx;
    let out = &args.out;
    fs::create_dir_all(out)?;
    write_json(&out.join("run.json"), &s.config)?;

    let m0 = ctx.m0().clone();
    let mut log = String::new();
    for e in &m0.entries {
        let margin = if e.min_margin.is_finite() { e.min_margin.to_string() } else { "-".into() };
        let _ = writeln!(
            log,
            "m={} ok={} min_margin={} band_violations={}{}",
            e.m,
            e.ok,
            margin,
            e.band_violations,
            if e.message.is_empty() { String::new() } else { format!(" message={}", e.message) }
        );
    }
    let _ = writeln!(log, "m0={}", m0.m0.map_or("none".to_string(), |m| m.to_string()));
    fs::write(out.join("m0.log"), &log)?;

    // replace chart sets of an earlier run, recognised by their index
    let charts_dir = out.join("charts");
    if charts_dir.join("index.json").is_file() {
        fs::remove_dir_all(&charts_dir)?;
    }
    let atlas = &ctx.atlas;
    let mut sets = BTreeMap::new();
    for &m in &s.config.schedule {
        let mut set = ChartSet::default();
        match Approximation::new(atlas.clone(), ctx.bumps.clone(), m) {
            Err(e) => {
                set.failed.entry("all".into()).or_default().insert(0, e.to_string());
            }
            Ok(ap) => {
                for side in [Side::Outer, Side::Inner] {
                    let results: Vec<_> =
                        (0..atlas.len()).into_par_iter().map(|i| extract_chart(ap.side(side), i, s.config.extract_res)).collect();
                    for (i, r) in results.into_iter().enumerate() {
                        match r.and_then(|c| write_chart(&charts_dir, &c, atlas).map(|_| ())) {
                            Ok(()) => set.written += 1,
                            Err(e) => {
                                set.failed.entry(side.name().into()).or_default().insert(i, e.to_string());
                            }
                        }
                    }
                }
            }
        }
        sets.insert(format!("m{m}"), set);
    }
    fs::create_dir_all(&charts_dir)?;
    write_json(&charts_dir.join("index.json"), &sets)?;

    let report = convergence_report(atlas, &ctx.bumps, &s.config.schedule, m0, &ctx.metrics, &ctx.constants);
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(out.join("report.csv"), &csv)?;
    fs::write(out.join("report.json"), report.to_json()? + "\n")?;

    if args.json {
        println!("{}", report.to_json()?);
    } else {
        println!("{} ({} charts, L = {}, R = {})", atlas.name, atlas.len(), atlas.lipschitz(), atlas.radius());
        print!("{log}");
        for r in &report.rows {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
            println!(
                "m={:<5} {:<9} hausdorff={} (bound {:.4e}) sup={} (bound {:.4e}) margin={} charts={}",
                r.m,
                if r.below_m0 { "below-m0" } else { "checked" },
                f(r.hausdorff),
                r.hausdorff_bound,
                f(r.sup_error),
                r.sup_bound,
                f(r.min_margin),
                sets[&format!("m{}", r.m)].written,
            );
        }
        println!("wrote {}", out.display());
    }
    Ok(EXIT_OK)
}
