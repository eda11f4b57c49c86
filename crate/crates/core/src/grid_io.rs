//! Flat binary grids with a JSON header.
//!
//! A grid `stem` is stored as `stem.json` and `stem.bin`. The binary file holds
//! each field in turn as little-endian f64 values, first axis fastest. Nodes
//! outside the sampled region (the closed tangential ball in three
//! dimensions) hold NaN.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capacity::Grid;
use crate::defining::ExtractedChart;
use crate::error::{Error, Result};
use crate::geometry::{DomainAtlas, Tangent};
use crate::mollify::Side;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
    pub fields: Vec<String>,
    pub dtype: String,
    pub byte_order: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl GridHeader {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, fields: Vec<String>) -> Self {
        Self { dims, spacing, origin, fields, dtype: "f64".into(), byte_order: "little".into(), meta: serde_json::Value::Null }
    }

    pub fn nodes(&self) -> usize {
        self.dims.iter().product()
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn write_grid(stem: &Path, header: &GridHeader, fields: &[Vec<f64>]) -> Result<()> {
    let n = header.nodes();
    if fields.len() != header.fields.len() || fields.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidParameter("field count or length does not match the grid header".into()));
    }
    let mut bytes = Vec::with_capacity(8 * n * fields.len());
    for f in fields {
        for v in f {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(with_ext(stem, "json"), serde_json::to_string_pretty(header)? + "\n")?;
    fs::write(with_ext(stem, "bin"), bytes)?;
    Ok(())
}

pub fn read_grid(stem: &Path) -> Result<(GridHeader, Vec<Vec<f64>>)> {
    let header: GridHeader = serde_json::from_str(&fs::read_to_string(with_ext(stem, "json"))?)?;
    if header.dtype != "f64" || header.byte_order != "little" {
        return Err(Error::Unsupported(format!("grid encoding {}/{}", header.dtype, header.byte_order)));
    }
    let bytes = fs::read(with_ext(stem, "bin"))?;
    let n = header.nodes();
    if bytes.len() != 8 * n * header.fields.len() {
        return Err(Error::InvalidParameter(format!(
            "{}: expected {} bytes, found {}",
            with_ext(stem, "bin").display(),
            8 * n * header.fields.len(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let fields = values.chunks(n.max(1)).take(header.fields.len()).map(<[f64]>::to_vec).collect();
    Ok((header, fields))
}

/// Metadata stored with an extracted chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartMeta {
    pub chart: usize,
    pub m: f64,
    pub side: Side,
    pub radius: f64,
    pub vertical_margin: f64,
    /// Row-major frame rotation, tangents then vertical.
    pub rotation: Vec<f64>,
    pub base: Vec<f64>,
}

fn chart_fields(dim: usize) -> Vec<String> {
    let mut f = vec!["psi".to_string(), "phi".to_string()];
    for a in 1..dim {
        f.push(format!("psi_y{a}"));
    }
    f
}

/// Converts an extracted chart on a `tangent_grid` node set to a grid.
pub fn chart_to_grid(chart: &ExtractedChart, atlas: &DomainAtlas) -> Result<(GridHeader, Vec<Vec<f64>>)> {
    let t = chart.dim - 1;
    let h = chart.spacing;
    let k = (2.0 * chart.radius / h).round() as usize + 1;
    let dims = vec![k; t];
    let n: usize = dims.iter().product();
    let names = chart_fields(chart.dim);
    let mut fields = vec![vec![f64::NAN; n]; names.len()];
    for (j, y) in chart.nodes.iter().enumerate() {
        let mut idx = 0;
        let mut stride = 1;
        for a in 0..t {
            let c = ((y[a] + chart.radius) / h).round();
            if c < 0.0 || c as usize >= k || ((y[a] + chart.radius) / h - c).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!("chart {} nodes are not on a uniform grid", chart.chart)));
            }
            idx += c as usize * stride;
            stride *= k;
        }
        fields[0][idx] = chart.values[j];
        fields[1][idx] = chart.phi[j];
        for a in 0..t {
            fields[2 + a][idx] = chart.grads[j][a];
        }
    }
    let frame = &atlas.charts[chart.chart].frame;
    let d = chart.dim;
    let rot = frame.rotation();
    let meta = ChartMeta {
        chart: chart.chart,
        m: chart.m,
        side: chart.side,
        radius: chart.radius,
        vertical_margin: chart.vertical_margin,
        rotation: (0..d).flat_map(|r| (0..d).map(move |c| rot[(r, c)])).collect(),
        base: frame.base().iter().take(d).copied().collect(),
    };
    let mut header = GridHeader::new(dims, vec![h; t], vec![-chart.radius; t], names);
    header.meta = serde_json::to_value(meta)?;
    Ok((header, fields))
}

/// A chart grid read back from disk.
#[derive(Clone, Debug)]
pub struct StoredChart {
    pub meta: ChartMeta,
    pub nodes: Vec<Tangent>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
}

impl StoredChart {
    pub fn read(stem: &Path) -> Result<Self> {
        let (header, fields) = read_grid(stem)?;
        let meta: ChartMeta = serde_json::from_value(header.meta.clone())?;
        if fields.len() < 2 || header.dims.is_empty() || header.dims.len() > 2 {
            return Err(Error::InvalidParameter(format!("{}: not a chart grid", stem.display())));
        }
        let t = header.dims.len();
        let k = header.dims[0];
        let mut out = Self { meta, nodes: vec![], psi: vec![], phi: vec![] };
        for idx in 0..header.nodes() {
            let (psi, phi) = (fields[0][idx], fields[1][idx]);
            if phi.is_nan() {
                continue;
            }
            let c = [idx % k, idx / k];
            let mut y = Tangent::zeros();
            for a in 0..t {
                y[a] = header.origin[a] + c[a] as f64 * header.spacing[a];
            }
            out.nodes.push(y);
            out.psi.push(psi);
            out.phi.push(phi);
        }
        Ok(out)
    }

    /// max |psi - phi|; NaN values count as infinite.
    pub fn sup_error(&self) -> f64 {
        self.psi
            .iter()
            .zip(&self.phi)
            .map(|(a, b)| if a.is_finite() { (a - b).abs() } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// File stem of chart i on a side at parameter m inside `dir`.
pub fn chart_stem(dir: &Path, m: f64, side: Side, chart: usize) -> PathBuf {
    dir.join(format!("m{}", m)).join(format!("{}_{:04}", side.name(), chart))
}

pub fn write_chart(dir: &Path, chart: &ExtractedChart, atlas: &DomainAtlas) -> Result<PathBuf> {
    let stem = chart_stem(dir, chart.m, chart.side, chart.chart);
    if let Some(p) = stem.parent() {
        fs::create_dir_all(p)?;
    }
    let (header, fields) = chart_to_grid(chart, atlas)?;
    write_grid(&stem, &header, &fields)?;
    Ok(stem)
}

/// A capacity potential as a grid.
pub fn potential_to_grid(grid: &Grid, potential: &[f64]) -> (GridHeader, Vec<Vec<f64>>) {
    let d = grid.dim;
    let header = GridHeader::new(
        vec![grid.n; d],
        vec![grid.spacing; d],
        grid.origin.iter().take(d).copied().collect(),
        vec!["potential".into()],
    );
    (header, vec![potential.to_vec()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = std::env::temp_dir().join(format!("lipsmooth-grid-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("g");
        let mut h = GridHeader::new(vec![3, 2], vec![0.5, 0.25], vec![-1.0, 0.0], vec!["a".into(), "b".into()]);
        h.meta = serde_json::json!({"note": 1});
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.1).collect();
        let b = vec![f64::NAN, 1.0, -2.0, 3.5, 1e-300, f64::MAX];
        write_grid(&stem, &h, &[a.clone(), b.clone()]).unwrap();
        let (h2, f) = read_grid(&stem).unwrap();
        assert_eq!(h, h2);
        assert_eq!(f[0], a);
        assert!(f[1][0].is_nan());
        assert_eq!(f[1][1..], b[1..]);
        fs::write(with_ext(&stem, "bin"), [0u8; 12]).unwrap();
        assert!(read_grid(&stem).is_err());
        assert!(write_grid(&stem, &h, &[a]).is_err());
        fs::remove_dir_all(&dir).unwrap();
    }
}
