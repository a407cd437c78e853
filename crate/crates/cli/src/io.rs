//! Artifact formats: legacy ASCII VTK, CSV traces, and the observation
//! container.
//!
//! The observation container is little-endian:
//!
//! ```text
//! magic        8 bytes  "SRECOBS1"
//! snapshots    u64
//! vertices     u64      (2 * vertices values per snapshot)
//! dt           f64
//! h            f64
//! body         snapshots * 2 * vertices f64, snapshot-major, interleaved (ux, uy)
//! ```
//!
//! A JSON sidecar next to it records where the data came from.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stokes_recon::{Mesh, TimeSeries, VectorField};

use crate::error::CliError;

pub const OBS_MAGIC: &[u8; 8] = b"SRECOBS1";

/// Mesh with optional point data, as an unstructured grid of triangles.
pub fn write_vtk(
    path: &Path,
    title: &str,
    mesh: &Mesh,
    vectors: &[(&str, &VectorField)],
    scalars: &[(&str, &[f64])],
) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_vertices())?;
    for p in &mesh.vertices {
        writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
    }
    let nt = mesh.num_triangles();
    writeln!(w, "CELLS {nt} {}", 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(w, "5")?;
    }
    if !vectors.is_empty() || !scalars.is_empty() {
        writeln!(w, "POINT_DATA {}", mesh.num_vertices())?;
    }
    for (name, field) in vectors {
        writeln!(w, "VECTORS {name} double")?;
        for v in 0..mesh.num_vertices() {
            let u = field.get(v);
            writeln!(w, "{:e} {:e} 0", u[0], u[1])?;
        }
    }
    for (name, values) in scalars {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for x in values.iter() {
            writeln!(w, "{x:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV file with a header and numeric rows.
pub fn write_csv<const N: usize>(path: &Path, header: [&str; N], rows: &[[String; N]]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Provenance of an observation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMeta {
    /// Benchmark that generated the data, if any.
    pub example_id: Option<u32>,
    pub delta: f64,
    pub seed: u64,
    pub snapshots: usize,
    pub vertices: usize,
    pub dt: f64,
    pub h: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_observations(path: &Path, series: &TimeSeries, meta: &ObservationMeta) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(OBS_MAGIC)?;
    w.write_all(&(series.len() as u64).to_le_bytes())?;
    w.write_all(&(meta.vertices as u64).to_le_bytes())?;
    w.write_all(&series.dt.to_le_bytes())?;
    w.write_all(&meta.h.to_le_bytes())?;
    for snap in &series.velocity {
        for x in snap.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    write_json(&sidecar_path(path), meta)
}

/// Reads a container and its sidecar; the header must agree with the sidecar.
pub fn read_observations(path: &Path) -> Result<(TimeSeries, ObservationMeta), CliError> {
    let bad = |m: &str| CliError::Config(format!("{}: {m}", path.display()));
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| bad(&format!("cannot read observations: {e}")))?;
    let sidecar = fs::read_to_string(sidecar_path(path)).map_err(|e| bad(&format!("cannot read sidecar: {e}")))?;
    let meta: ObservationMeta = serde_json::from_str(&sidecar).map_err(|e| bad(&format!("invalid sidecar: {e}")))?;
    if bytes.len() < 40 || &bytes[..8] != OBS_MAGIC {
        return Err(bad("not an observation file"));
    }
    let word = |i: usize| -> [u8; 8] { bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap() };
    let snapshots = u64::from_le_bytes(word(0)) as usize;
    let vertices = u64::from_le_bytes(word(1)) as usize;
    let dt = f64::from_le_bytes(word(2));
    let h = f64::from_le_bytes(word(3));
    if snapshots != meta.snapshots || vertices != meta.vertices || dt != meta.dt || h != meta.h {
        return Err(bad("header does not match the sidecar"));
    }
    let per = 2 * vertices;
    let expected = snapshots.checked_mul(per).and_then(|n| n.checked_mul(8)).map(|n| n + 40);
    if expected != Some(bytes.len()) {
        return Err(bad("body size does not match the header"));
    }
    let body = &bytes[40..];
    let velocity = (0..snapshots)
        .map(|s| {
            VectorField(
                (0..per)
                    .map(|i| {
                        let o = 8 * (s * per + i);
                        f64::from_le_bytes(body[o..o + 8].try_into().unwrap())
                    })
                    .collect(),
            )
        })
        .collect();
    Ok((TimeSeries::velocity_only(dt, velocity), meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use stokes_recon::{build_rect_mesh, BoxRegion};

    #[test]
    fn observations_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.bin");
        let series = TimeSeries::velocity_only(
            0.07,
            (0..3).map(|s| VectorField((0..8).map(|i| (s * 8 + i) as f64 * 0.1 - 1.0 / 3.0).collect())).collect(),
        );
        let meta = ObservationMeta { example_id: Some(2), delta: 0.01, seed: 42, snapshots: 3, vertices: 4, dt: 0.07, h: 0.5 };
        write_observations(&path, &series, &meta).unwrap();
        let (back, m) = read_observations(&path).unwrap();
        assert_eq!(m, meta);
        assert_eq!(back.velocity, series.velocity);
        assert_eq!(back.dt, series.dt);
    }

    #[test]
    fn corrupt_observations_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.bin");
        let series = TimeSeries::velocity_only(0.1, vec![VectorField(vec![0.0; 4]); 2]);
        let meta = ObservationMeta { example_id: None, delta: 0.0, seed: 1, snapshots: 2, vertices: 2, dt: 0.1, h: 1.0 };
        write_observations(&path, &series, &meta).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_observations(&path), Err(CliError::Config(_))));
        fs::write(&path, b"garbage").unwrap();
        assert!(matches!(read_observations(&path), Err(CliError::Config(_))));
    }

    #[test]
    fn vtk_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        let mesh = build_rect_mesh(BoxRegion::square(0.0, 1.0), 0.5).unwrap();
        let u = VectorField::zeros(mesh.num_vertices());
        let p = vec![1.0; mesh.num_vertices()];
        write_vtk(&path, "t", &mesh, &[("velocity", &u)], &[("pressure", &p)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 9 double"));
        assert!(text.contains("CELLS 8 32"));
        assert!(text.contains("CELL_TYPES 8"));
        assert!(text.contains("POINT_DATA 9\nVECTORS velocity double"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 8);
    }
}
