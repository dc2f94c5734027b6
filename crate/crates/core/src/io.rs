//! On-disk formats: the binary field container, CSV schemas, and small
//! read/write helpers shared by the checkpoint code.
//!
//! Binary field container ("SVDA"): little-endian throughout.
//!
//! ```text
//! offset size  field
//! 0      4     magic "SVDA"
//! 4      4     u32 format version (1)
//! 8      8     u64 node count per record
//! 16     8     u64 record count
//! 24     ...   record_count * node_count f64 values
//! ```
//!
//! CSV schemas:
//! * field snapshot: `node,x,y,value`
//! * observation series: `k,t,l_1,...,l_M` (also the training-data
//!   interchange file)
//! * POD eigenvalues: `mode,eigenvalue`

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{Mesh, NodalField, Trajectory};
use crate::observation::ObservationSeries;

pub const FIELD_MAGIC: &[u8; 4] = b"SVDA";
pub const FIELD_VERSION: u32 = 1;

pub(crate) fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Write nodal records (trajectory snapshots, POD modes, estimates).
pub fn write_field_records<'a>(
    path: &Path,
    node_count: usize,
    records: impl ExactSizeIterator<Item = &'a [f64]>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FIELD_MAGIC)?;
    write_u32(&mut w, FIELD_VERSION)?;
    write_u64(&mut w, node_count as u64)?;
    write_u64(&mut w, records.len() as u64)?;
    for rec in records {
        if rec.len() != node_count {
            return Err(Error::Format(format!(
                "record length {} does not match node count {node_count}",
                rec.len()
            )));
        }
        for &v in rec {
            write_f64(&mut w, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a field container back: (node count, records).
pub fn read_field_records(path: &Path) -> Result<(usize, Vec<Vec<f64>>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != FIELD_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    let node_count = read_u64(&mut r)? as usize;
    let records = read_u64(&mut r)? as usize;
    let mut out = Vec::with_capacity(records);
    for _ in 0..records {
        let mut rec = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            rec.push(read_f64(&mut r)?);
        }
        out.push(rec);
    }
    Ok((node_count, out))
}

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let n = trajectory.fields.first().map_or(0, NodalField::len);
    write_field_records(path, n, trajectory.fields.iter().map(NodalField::as_slice))
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (_, records) = read_field_records(path)?;
    Ok(Trajectory {
        fields: records.into_iter().map(NodalField::from_vec).collect(),
    })
}

/// Column-oriented snapshot CSV: node index, coordinates, value.
pub fn field_csv(mesh: &Mesh, field: &NodalField) -> String {
    let mut s = String::from("node,x,y,value\n");
    for (i, p) in mesh.nodes.iter().enumerate() {
        s.push_str(&format!("{i},{},{},{}\n", p[0], p[1], field.as_slice()[i]));
    }
    s
}

/// Mesh-only CSV (the same layout without the value column).
pub fn mesh_csv(mesh: &Mesh) -> String {
    let mut s = String::from("node,x,y\n");
    for (i, p) in mesh.nodes.iter().enumerate() {
        s.push_str(&format!("{i},{},{}\n", p[0], p[1]));
    }
    s
}

/// Observation series CSV, also the training-data interchange format.
pub fn observation_series_csv(series: &ObservationSeries) -> String {
    let m = series.sensor_count();
    let mut s = String::from("k,t");
    for i in 1..=m {
        s.push_str(&format!(",l_{i}"));
    }
    s.push('\n');
    for (k, row) in series.rows.iter().enumerate() {
        s.push_str(&format!("{k},{}", series.times[k]));
        for &v in row.as_slice() {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

/// Parse an observation series CSV produced by [`observation_series_csv`].
pub fn parse_observation_series(text: &str) -> Result<ObservationSeries> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty observation CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "k" || cols[1] != "t" {
        return Err(Error::Format(format!(
            "unexpected observation header: {header}"
        )));
    }
    for (i, name) in cols[2..].iter().enumerate() {
        if *name != format!("l_{}", i + 1) {
            return Err(Error::Format(format!(
                "unexpected observation column {name}"
            )));
        }
    }
    let m = cols.len() - 2;
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != m + 2 {
            return Err(Error::Format(format!(
                "observation row {} has {} fields, expected {}",
                lineno + 2,
                parts.len(),
                m + 2
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad number {s:?} on row {}", lineno + 2)))
        };
        times.push(parse(parts[1])?);
        let mut row = DVector::zeros(m);
        for i in 0..m {
            row[i] = parse(parts[i + 2])?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("observation CSV has no data rows".into()));
    }
    Ok(ObservationSeries { times, rows })
}

pub fn eigenvalues_csv(eigenvalues: &[f64]) -> String {
    let mut s = String::from("mode,eigenvalue\n");
    for (i, v) in eigenvalues.iter().enumerate() {
        s.push_str(&format!("{},{v}\n", i + 1));
    }
    s
}

/// Extract named numeric columns from a CSV with a header row.
pub fn read_csv_columns(text: &str, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let mut indices = Vec::with_capacity(names.len());
    for name in names {
        let idx = cols
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("missing CSV column {name}")))?;
        indices.push(idx);
    }
    let mut out = vec![Vec::new(); names.len()];
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        for (slot, &idx) in indices.iter().enumerate() {
            let cell = parts.get(idx).ok_or_else(|| {
                Error::Format(format!(
                    "row {} too short for column {}",
                    lineno + 2,
                    names[slot]
                ))
            })?;
            out[slot].push(cell.parse::<f64>().map_err(|_| {
                Error::Format(format!("bad number {cell:?} in column {}", names[slot]))
            })?);
        }
    }
    if out[0].is_empty() {
        return Err(Error::Format("CSV has no data rows".into()));
    }
    Ok(out)
}
