//! Plain-text and binary artifact formats.
//!
//! Everything here converts between in-memory values and strings or byte
//! buffers. Writing to disk is left to callers.
//!
//! PGM images are written top row first with the top row being the grid's
//! northmost row (largest y), so the image reads like a map.

use std::fmt::Write as _;

use nalgebra::Vector3;
use thiserror::Error;

use crate::ddto::DdtoSolution;
use crate::mapping::{GridGeometry, SafetyMap, ScalarGrid, UncertaintyMap};
use crate::sites::LandingSite;
use crate::terrain::PointCloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("input contains no points")]
    Empty,
    #[error("malformed PGM: {0}")]
    Pgm(String),
}

/// Parses `x y z` lines. Blank lines and lines starting with `#` are skipped;
/// commas are accepted as separators too.
pub fn parse_xyz(text: &str) -> Result<PointCloud, IoError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| IoError::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 3 {
            return Err(err(format!(
                "expected 3 numbers, found {} fields",
                fields.len()
            )));
        }
        let mut p = [0.0; 3];
        for (slot, f) in p.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| err(format!("not a number: {f:?}")))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite value: {f:?}")));
            }
        }
        points.push(Vector3::from(p));
    }
    if points.is_empty() {
        return Err(IoError::Empty);
    }
    Ok(PointCloud::new(points))
}

pub fn format_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud.iter() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

fn pgm(geometry: &GridGeometry, pixel: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", geometry.cols, geometry.rows).into_bytes();
    out.reserve(geometry.len());
    for row in (0..geometry.rows).rev() {
        for col in 0..geometry.cols {
            out.push(pixel(geometry.index(row, col)));
        }
    }
    out
}

/// 255 = safe, 0 = unsafe.
pub fn safety_pgm(map: &SafetyMap) -> Vec<u8> {
    pgm(&map.geometry, |i| if map.safe[i] { 255 } else { 0 })
}

/// Uncertainty in `[0, 1]` scaled to `0..=255`.
pub fn uncertainty_pgm(map: &UncertaintyMap) -> Vec<u8> {
    pgm(&map.geometry, |i| {
        (map.values[i].clamp(0.0, 1.0) * 255.0).round() as u8
    })
}

/// Decoded 8-bit PGM, rows in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Reads binary (P5) 8-bit PGM without comments.
pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm, IoError> {
    let mut pos = 0;
    let mut token = || -> Result<String, IoError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(IoError::Pgm("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(IoError::Pgm("missing P5 magic".into()));
    }
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|_| IoError::Pgm(format!("bad header field {s:?}")))
    };
    let width = num(token()?)?;
    let height = num(token()?)?;
    if num(token()?)? != 255 {
        return Err(IoError::Pgm("only maxval 255 is supported".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    if data.len() != width * height {
        return Err(IoError::Pgm(format!(
            "expected {} pixels, found {}",
            width * height,
            data.len()
        )));
    }
    Ok(Pgm {
        width,
        height,
        pixels: data.to_vec(),
    })
}

/// Three header lines (`origin,x,y`, `cell_size,c`, `dims,rows,cols`) then
/// one line per grid row, row 0 first. Invalid cells are written as `nan`.
pub fn grid_csv(geometry: &GridGeometry, value: impl Fn(usize) -> Option<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "origin,{},{}", geometry.origin.x, geometry.origin.y);
    let _ = writeln!(out, "cell_size,{}", geometry.cell_size);
    let _ = writeln!(out, "dims,{},{}", geometry.rows, geometry.cols);
    for row in 0..geometry.rows {
        let line: Vec<String> = (0..geometry.cols)
            .map(|col| {
                value(geometry.index(row, col)).map_or_else(|| "nan".to_string(), |v| v.to_string())
            })
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn scalar_grid_csv(grid: &ScalarGrid) -> String {
    grid_csv(&grid.geometry, |i| grid.valid[i].then(|| grid.values[i]))
}

pub fn safety_csv(map: &SafetyMap) -> String {
    grid_csv(&map.geometry, |i| Some(if map.safe[i] { 1.0 } else { 0.0 }))
}

pub fn sites_jsonl(sites: &[LandingSite]) -> String {
    let mut out = String::new();
    for s in sites {
        out.push_str(&serde_json::to_string(s).expect("sites serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_sites_jsonl(text: &str) -> Result<Vec<LandingSite>, IoError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IoError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn ddto_json(sol: &DdtoSolution) -> String {
    serde_json::to_string_pretty(sol).expect("solution serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn xyz_round_trip() {
        let cloud = PointCloud::new(vec![
            Vector3::new(1.5, -2.0, 0.25),
            Vector3::new(1e-9, 3.0, 1e6),
        ]);
        assert_eq!(parse_xyz(&format_xyz(&cloud)).unwrap(), cloud);
    }

    #[test]
    fn xyz_errors_name_the_line() {
        assert_eq!(
            parse_xyz("# header\n\n1 2 3\n4 five 6\n"),
            Err(IoError::Parse {
                line: 4,
                message: "not a number: \"five\"".into()
            })
        );
        assert!(matches!(
            parse_xyz("1 2\n"),
            Err(IoError::Parse { line: 1, .. })
        ));
        assert_eq!(parse_xyz("\n# nothing\n"), Err(IoError::Empty));
        assert_eq!(parse_xyz("1,2,3").unwrap().len(), 1);
    }

    #[test]
    fn pgm_layout_is_north_up() {
        let g = GridGeometry::new(Vector2::zeros(), 1.0, 2, 3);
        let mut map = SafetyMap::all(g, true);
        map.safe[g.index(0, 0)] = false;
        let img = parse_pgm(&safety_pgm(&map)).unwrap();
        assert_eq!((img.width, img.height), (3, 2));
        assert_eq!(img.pixels, vec![255, 255, 255, 0, 255, 255]);
    }

    #[test]
    fn csv_header_and_shape() {
        let g = GridGeometry::new(Vector2::new(-1.0, 2.0), 0.5, 2, 2);
        let csv = grid_csv(&g, |i| (i != 3).then_some(i as f64));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines,
            vec!["origin,-1,2", "cell_size,0.5", "dims,2,2", "0,1", "2,nan"]
        );
    }

    #[test]
    fn sites_round_trip() {
        let sites = vec![LandingSite::new(3, Vector2::new(1.0, 2.0), 4.0)];
        let text = sites_jsonl(&sites);
        assert!(text.contains("\"c_des\""));
        assert_eq!(parse_sites_jsonl(&text).unwrap(), sites);
    }
}
