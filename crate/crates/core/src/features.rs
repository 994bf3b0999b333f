//! Per-frame feature matrices shared by both front-ends and the recognizer.
//!
//! On disk a sequence is a matrix file (`.bin`: little-endian `f64`, row-major, one row
//! per frame; or `.csv`: one comma-separated row per frame) plus a sidecar text header
//! `<file>.hdr`:
//!
//! ```text
//! visemekit-features 1
//! kind=dct
//! dim=132
//! frames=57
//! frame_rate=30
//! encoding=binary
//! ```

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};

pub const FEATURE_FORMAT_VERSION: u32 = 1;
const HEADER_MAGIC: &str = "visemekit-features";

/// Composition of AAM parameter features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AamVariant {
    /// Non-rigid shape parameters.
    Shape,
    /// Appearance parameters.
    Appearance,
    /// Shape then appearance.
    ShapeAppearance,
    /// First derivative of the appearance parameters.
    DeltaAppearance,
    /// Shape, appearance and appearance derivative.
    ShapeAppearanceDelta,
}

impl AamVariant {
    pub const ALL: [AamVariant; 5] = [
        AamVariant::Shape,
        AamVariant::Appearance,
        AamVariant::ShapeAppearance,
        AamVariant::DeltaAppearance,
        AamVariant::ShapeAppearanceDelta,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AamVariant::Shape => "s",
            AamVariant::Appearance => "a",
            AamVariant::ShapeAppearance => "s+a",
            AamVariant::DeltaAppearance => "da",
            AamVariant::ShapeAppearanceDelta => "s+a+da",
        }
    }
}

impl FromStr for AamVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AamVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown AAM feature variant '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Dct,
    Aam(AamVariant),
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Dct => write!(f, "dct"),
            FeatureKind::Aam(v) => write!(f, "aam:{}", v.as_str()),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "dct" {
            return Ok(FeatureKind::Dct);
        }
        match s.strip_prefix("aam:") {
            Some(v) => Ok(FeatureKind::Aam(v.parse()?)),
            None => Err(Error::invalid(format!("unknown feature kind '{s}'"))),
        }
    }
}

/// Ordered per-frame vectors of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    frames: Vec<Vec<f64>>,
    dim: usize,
    frame_rate: f64,
    kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(frames: Vec<Vec<f64>>, frame_rate: f64, kind: FeatureKind) -> Result<Self> {
        let dim = frames.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::invalid("feature sequence needs at least one non-empty frame"));
        }
        if let Some(bad) = frames.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("feature sequence contains non-finite values".into()));
        }
        Ok(Self {
            frames,
            dim,
            frame_rate,
            kind,
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Writes the matrix and its `.hdr` sidecar. Encoding follows the extension
    /// (`.csv` for text, anything else binary).
    pub fn save(&self, path: &Path) -> Result<()> {
        let csv = is_csv(path);
        let file = fs::File::create(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut w = BufWriter::new(file);
        if csv {
            for row in &self.frames {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(w, "{}", line.join(","))?;
            }
        } else {
            let mut buf = [0u8; 8];
            for v in self.frames.iter().flatten() {
                LittleEndian::write_f64(&mut buf, *v);
                w.write_all(&buf)?;
            }
        }
        w.flush()?;
        let header = format!(
            "{HEADER_MAGIC} {FEATURE_FORMAT_VERSION}\nkind={}\ndim={}\nframes={}\nframe_rate={}\nencoding={}\n",
            self.kind,
            self.dim,
            self.frames.len(),
            self.frame_rate,
            if csv { "csv" } else { "binary" }
        );
        let hdr = header_path(path);
        fs::write(&hdr, header).map_err(|e| Error::from(e).at_path(&hdr))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_inner(path).map_err(|e| e.at_path(path))
    }

    fn load_inner(path: &Path) -> Result<Self> {
        let hdr_text = fs::read_to_string(header_path(path))?;
        let mut lines = hdr_text.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(HEADER_MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::format("feature header", "missing magic line"))?;
        if version != FEATURE_FORMAT_VERSION.to_string() {
            return Err(Error::format("feature header", format!("unsupported version {version}")));
        }
        let mut kind = None;
        let mut dim = None;
        let mut frames = None;
        let mut rate = None;
        let mut encoding = None;
        for line in lines {
            let Some((k, v)) = line.split_once('=') else { continue };
            match k.trim() {
                "kind" => kind = Some(v.trim().parse::<FeatureKind>()?),
                "dim" => dim = v.trim().parse::<usize>().ok(),
                "frames" => frames = v.trim().parse::<usize>().ok(),
                "frame_rate" => rate = v.trim().parse::<f64>().ok(),
                "encoding" => encoding = Some(v.trim().to_string()),
                _ => {}
            }
        }
        let missing = |f: &str| Error::format("feature header", format!("missing '{f}'"));
        let kind = kind.ok_or_else(|| missing("kind"))?;
        let dim = dim.ok_or_else(|| missing("dim"))?;
        let n = frames.ok_or_else(|| missing("frames"))?;
        let rate = rate.ok_or_else(|| missing("frame_rate"))?;
        let encoding = encoding.ok_or_else(|| missing("encoding"))?;

        let rows: Vec<Vec<f64>> = match encoding.as_str() {
            "binary" => {
                let bytes = fs::read(path)?;
                if bytes.len() != n * dim * 8 {
                    return Err(Error::format(
                        "feature matrix",
                        format!("expected {} bytes, found {}", n * dim * 8, bytes.len()),
                    ));
                }
                bytes
                    .chunks_exact(dim * 8)
                    .map(|row| row.chunks_exact(8).map(LittleEndian::read_f64).collect())
                    .collect()
            }
            "csv" => {
                let text = fs::read_to_string(path)?;
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| {
                        l.split(',')
                            .map(|t| {
                                t.trim()
                                    .parse::<f64>()
                                    .map_err(|e| Error::format("feature matrix", e.to_string()))
                            })
                            .collect::<Result<Vec<f64>>>()
                    })
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::format("feature header", format!("unknown encoding '{other}'"))),
        };
        if rows.len() != n {
            return Err(Error::format(
                "feature matrix",
                format!("header says {n} frames, file has {}", rows.len()),
            ));
        }
        let seq = FeatureSequence::new(rows, rate, kind)?;
        if seq.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: seq.dim,
            });
        }
        Ok(seq)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("csv")
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq() -> FeatureSequence {
        let frames = (0..6).map(|i| vec![i as f64 * 0.25, -1.0 / (i + 1) as f64, 1e-300]).collect();
        FeatureSequence::new(frames, 29.97, FeatureKind::Aam(AamVariant::ShapeAppearanceDelta)).unwrap()
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["f.bin", "f.csv"] {
            let p = dir.path().join(name);
            seq().save(&p).unwrap();
            assert_eq!(FeatureSequence::load(&p).unwrap(), seq());
        }
    }

    #[test]
    fn rejects_ragged_frames() {
        let bad = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(FeatureSequence::new(bad, 30.0, FeatureKind::Dct).is_err());
        assert!(FeatureSequence::new(vec![], 30.0, FeatureKind::Dct).is_err());
    }

    #[test]
    fn kind_strings() {
        for v in AamVariant::ALL {
            let k = FeatureKind::Aam(v);
            assert_eq!(k.to_string().parse::<FeatureKind>().unwrap(), k);
        }
        assert_eq!("dct".parse::<FeatureKind>().unwrap(), FeatureKind::Dct);
        assert!("mfcc".parse::<FeatureKind>().is_err());
    }
}
