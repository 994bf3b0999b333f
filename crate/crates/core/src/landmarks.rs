//! Landmark file readers and writers.
//!
//! * `.pts` files (`version: 1`, `n_points: N`, `{ x y ... }`), coordinates taken as-is.
//! * Per-sentence CSV tracks: a header `frame,x1,y1,...,xN,yN,confidence` followed by one
//!   row per frame.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::shape::Shape;

/// 68-point markup index groups (0-based).
pub mod markup {
    pub const N_POINTS: usize = 68;
    pub const JAW: std::ops::Range<usize> = 0..17;
    pub const MOUTH: std::ops::Range<usize> = 48..68;
    /// Upper/lower inner-lip pairs used for the lip-opening measure.
    pub const INNER_LIP_PAIRS: [(usize, usize); 3] = [(61, 67), (62, 66), (63, 65)];

    pub fn lips() -> Vec<usize> {
        MOUTH.collect()
    }

    pub fn chin() -> Vec<usize> {
        JAW.chain(MOUTH).collect()
    }

    pub fn face() -> Vec<usize> {
        (0..N_POINTS).collect()
    }
}

/// One tracked frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedFrame {
    pub frame: usize,
    pub shape: Shape,
    pub confidence: f64,
}

pub fn read_pts(path: &Path) -> Result<Shape> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    parse_pts(&text).map_err(|e| e.at_path(path))
}

pub fn parse_pts(text: &str) -> Result<Shape> {
    let mut expected = None;
    let mut inside = false;
    let mut coords = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(n) = line.strip_prefix("n_points:") {
            expected = Some(
                n.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::format("pts", e.to_string()))?,
            );
        } else if line == "{" {
            inside = true;
        } else if line == "}" {
            inside = false;
        } else if inside {
            for tok in line.split_whitespace() {
                coords.push(tok.parse::<f64>().map_err(|e| Error::format("pts", e.to_string()))?);
            }
        }
    }
    let n = expected.ok_or_else(|| Error::format("pts", "missing n_points"))?;
    if coords.len() != 2 * n {
        return Err(Error::format("pts", format!("expected {} coordinates, found {}", 2 * n, coords.len())));
    }
    Shape::new(coords)
}

pub fn write_pts(path: &Path, shape: &Shape) -> Result<()> {
    let mut out = format!("version: 1\nn_points: {}\n{{\n", shape.n_points());
    for (x, y) in shape.points() {
        out.push_str(&format!("{x} {y}\n"));
    }
    out.push_str("}\n");
    fs::write(path, out).map_err(|e| Error::from(e).at_path(path))
}

pub fn read_track_csv(path: &Path) -> Result<Vec<TrackedFrame>> {
    read_track_inner(path).map_err(|e| e.at_path(path))
}

fn read_track_inner(path: &Path) -> Result<Vec<TrackedFrame>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 4 || (rec.len() - 2) % 2 != 0 {
            return Err(Error::format("landmark csv", format!("row has {} fields", rec.len())));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::format("landmark csv", e.to_string()));
        let frame = rec[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::format("landmark csv", e.to_string()))?;
        let coords = (1..rec.len() - 1).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
        let confidence = parse(&rec[rec.len() - 1])?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::format("landmark csv", format!("confidence {confidence} outside [0, 1]")));
        }
        out.push(TrackedFrame {
            frame,
            shape: Shape::new(coords)?,
            confidence,
        });
    }
    Ok(out)
}

pub fn write_track_csv(path: &Path, frames: &[TrackedFrame]) -> Result<()> {
    let n = frames.first().map(|f| f.shape.n_points()).unwrap_or(markup::N_POINTS);
    let mut out = String::from("frame");
    for i in 1..=n {
        out.push_str(&format!(",x{i},y{i}"));
    }
    out.push_str(",confidence\n");
    for f in frames {
        out.push_str(&f.frame.to_string());
        for v in f.shape.coords() {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", f.confidence));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::from(e).at_path(path))?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pts_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pts");
        let s = Shape::new(vec![1.5, 2.0, 3.25, -4.0, 0.0, 7.125]).unwrap();
        write_pts(&p, &s).unwrap();
        assert_eq!(read_pts(&p).unwrap(), s);
        assert!(parse_pts("version: 1\nn_points: 2\n{\n1 2\n}\n").is_err());
    }

    #[test]
    fn track_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let frames: Vec<TrackedFrame> = (0..3)
            .map(|i| TrackedFrame {
                frame: i,
                shape: Shape::new(vec![i as f64, 0.5, 1.0 / 3.0, 2.0]).unwrap(),
                confidence: 0.25 * i as f64,
            })
            .collect();
        write_track_csv(&p, &frames).unwrap();
        assert_eq!(read_track_csv(&p).unwrap(), frames);
    }

    #[test]
    fn markup_groups() {
        assert_eq!(markup::lips().len(), 20);
        assert_eq!(markup::chin().len(), 37);
        assert_eq!(markup::lips()[0], 48);
    }
}
