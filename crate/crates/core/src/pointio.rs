//! Point set export and import.
//!
//! * ASCII XYZ: one `x y z` triple per line, each coordinate printed in
//!   scientific notation with 9 significant digits (`{:.8e}`), `\n` line
//!   endings, no header.
//! * Binary: raw little-endian `f64` triples, 24 bytes per point, no header.

use std::io::{self, BufRead, Read, Write};

use thiserror::Error;

use crate::geometry::{Point3, PointSet};

#[derive(Debug, Error)]
pub enum PointIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("binary payload of {0} bytes is not a multiple of 24")]
    Truncated(usize),
}

pub fn write_xyz<W: Write>(points: &PointSet, mut out: W) -> io::Result<()> {
    for p in points.iter() {
        writeln!(out, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?;
    }
    Ok(())
}

pub fn to_xyz_string(points: &PointSet) -> String {
    let mut buf = Vec::new();
    write_xyz(points, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}

pub fn read_xyz<R: BufRead>(input: R) -> Result<PointSet, PointIoError> {
    let mut points = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = trimmed.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| PointIoError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if vals.len() != 3 || vals.iter().any(|v| !v.is_finite()) {
            return Err(PointIoError::Parse {
                line: i + 1,
                message: format!("expected 3 finite coordinates, got {trimmed:?}"),
            });
        }
        points.push(Point3::new(vals[0], vals[1], vals[2]));
    }
    Ok(PointSet::new(points))
}

pub fn encode_binary(points: &PointSet) -> Vec<u8> {
    let mut buf = Vec::with_capacity(points.len() * 24);
    for p in points.iter() {
        for v in [p.x, p.y, p.z] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

pub fn decode_binary(bytes: &[u8]) -> Result<PointSet, PointIoError> {
    if bytes.len() % 24 != 0 {
        return Err(PointIoError::Truncated(bytes.len()));
    }
    Ok(bytes
        .chunks_exact(24)
        .map(|c| {
            let f = |o: usize| f64::from_le_bytes(c[o..o + 8].try_into().expect("8 bytes"));
            Point3::new(f(0), f(8), f(16))
        })
        .collect())
}

pub fn write_binary<W: Write>(points: &PointSet, mut out: W) -> io::Result<()> {
    out.write_all(&encode_binary(points))
}

pub fn read_binary<R: Read>(mut input: R) -> Result<PointSet, PointIoError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    decode_binary(&bytes)
}
