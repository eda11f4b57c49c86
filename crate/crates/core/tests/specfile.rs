use std::path::PathBuf;

use lipsmooth::geometry::{load_spec, load_spec_file, make_shape, parse_shape_arg, Point};
use lipsmooth::Error;
use rand::{Rng, SeedableRng};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn corner_records_reproduce_the_square() {
    let atlas = load_spec_file(&fixture("corner.dom")).unwrap();
    let (name, params) = parse_shape_arg("square:side=8").unwrap();
    let square = make_shape(&name, &params).unwrap();
    assert_eq!(atlas.dim, 2);
    assert!((atlas.characteristic.diameter - square.characteristic.diameter).abs() < 1e-6);
    assert!(atlas.check_covering().is_ok());
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    for _ in 0..2000 {
        let x = Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), 0.0);
        let (a, b) = (atlas.model.depth(&x), square.model.depth(&x));
        assert!((a - b).abs() < 1e-9, "{x:?}: {a} vs {b}");
    }
    for c in &atlas.charts {
        let y = lipsmooth::geometry::Tangent::new(0.37 * c.radius, 0.0);
        assert!(square.model.depth(&c.graph_point(&y)).abs() < 1e-9);
    }
}

#[test]
fn shape_records_match_expression_records() {
    let text = std::fs::read_to_string(fixture("corner.dom")).unwrap();
    let shaped: String = text
        .lines()
        .map(|l| if l.trim_start().starts_with("expr") { "  shape square side=8" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let a = load_spec(&shaped).unwrap();
    let b = load_spec(&text).unwrap();
    for ca in &a.charts {
        let cb = b.model.chart_at(ca.frame.base(), ca.radius, ca.lipschitz).unwrap();
        for t in [-0.8, -0.3, 0.0, 0.45, 0.8] {
            let y = lipsmooth::geometry::Tangent::new(t * ca.radius, 0.0);
            assert!((ca.eval(&y) - cb.eval(&y)).abs() < 1e-9, "{:?} {t}: {} {}", ca.frame.base(), ca.eval(&y), cb.eval(&y));
        }
    }
}

#[test]
fn bad_token_reports_location() {
    let text = std::fs::read_to_string(fixture("corner.dom")).unwrap().replacen("expr -abs(y1)", "expr -abs(y1 ?)", 1);
    match load_spec(&text) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (10, 16)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn windows_must_reach_the_atlas_radius() {
    let text = std::fs::read_to_string(fixture("corner.dom")).unwrap().replace("radius 2.5", "radius 1.2");
    assert!(matches!(load_spec(&text), Err(Error::Covering(_))));
}
