//! Field snapshots: a CSV with one line per collocation node and a JSON
//! sidecar carrying manifold, resolution, grid and time stamp.
//!
//! Numbers are written with 17 significant digits so that text artifacts can
//! be compared bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Grid, Resolution, VectorFieldSpec};
use crate::GeometryError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub manifold: String,
    pub resolution: Resolution,
    pub grid: serde_json::Value,
    pub time: f64,
}

/// Formats a float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// CSV text of `field` sampled on `grid`.
pub fn snapshot_csv(field: &VectorFieldSpec, grid: &Grid) -> String {
    let mut out = String::new();
    match grid {
        Grid::Torus { .. } => {
            out.push_str("x,y,vx,vy\n");
            for p in grid.points() {
                let c = p.coords();
                let v = field.eval_point(&p);
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    fmt17(c.x),
                    fmt17(c.y),
                    fmt17(v.x),
                    fmt17(v.y)
                ));
            }
        }
        Grid::Sphere(g) => {
            out.push_str("lon,lat,x,y,z,vx,vy,vz\n");
            for i in 0..g.len() {
                let (lon, lat, x) = g.node(i);
                let p = grid.point(i);
                let v = field.eval_point(&p);
                let cols = [lon, lat, x.x, x.y, x.z, v.x, v.y, v.z];
                let line: Vec<String> = cols.iter().map(|c| fmt17(*c)).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
        }
    }
    out
}

/// Writes `<path>` and its `.json` sidecar.
pub fn write_snapshot(
    path: &Path,
    field: &VectorFieldSpec,
    grid: &Grid,
    time: f64,
) -> Result<(), GeometryError> {
    if field.kind() != grid.kind() {
        return Err(GeometryError::ManifoldMismatch);
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(snapshot_csv(field, grid).as_bytes())?;
    let meta = SnapshotMeta {
        manifold: field.kind().name().to_string(),
        resolution: field.resolution(),
        grid: grid.describe(),
        time,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| GeometryError::Io(e.to_string()))?;
    fs::write(sidecar_path(path), json)?;
    Ok(())
}

/// Reads the vector columns back from a snapshot CSV.
pub fn read_snapshot_vectors(path: &Path) -> Result<Vec<Vector3<f64>>, GeometryError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| GeometryError::Io("empty snapshot".into()))?;
    let sphere = header.starts_with("lon");
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let cols: Result<Vec<f64>, _> = line.split(',').map(str::parse::<f64>).collect();
        let cols = cols.map_err(|e| GeometryError::Io(format!("line {}: {e}", n + 2)))?;
        let v = if sphere {
            Vector3::new(cols[5], cols[6], cols[7])
        } else {
            Vector3::new(cols[2], cols[3], 0.0)
        };
        out.push(v);
    }
    Ok(out)
}

pub fn read_meta(csv: &Path) -> Result<SnapshotMeta, GeometryError> {
    let text = fs::read_to_string(sidecar_path(csv))?;
    serde_json::from_str(&text).map_err(|e| GeometryError::Io(e.to_string()))
}
