//! Dataset manifest: one CSV row per sentence.
//!
//! ```text
//! speaker,sentence,frames,landmarks,transcript,split
//! s01,s01_000,s01/s01_000,s01/s01_000/landmarks.csv,sil pbm aa sil,train
//! ```
//! Relative paths resolve against the manifest's directory. `landmarks` may be empty.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::format("manifest", format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub speaker: String,
    pub sentence: String,
    pub frames: String,
    pub landmarks: Option<String>,
    pub transcript: String,
    pub split: Split,
}

impl ManifestEntry {
    pub fn labels(&self) -> Vec<String> {
        self.transcript.split_whitespace().map(str::to_string).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
}

const HEADER: [&str; 6] = ["speaker", "sentence", "frames", "landmarks", "transcript", "split"];

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self {
            entries,
            base_dir: base_dir.into(),
        };
        m.check_disjoint()?;
        Ok(m)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.entries.iter().map(|e| e.speaker.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert((e.speaker.as_str(), e.sentence.as_str())) {
                return Err(Error::format(
                    "manifest",
                    format!("sentence {}/{} listed more than once", e.speaker, e.sentence),
                ));
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(HEADER)?;
        for e in &self.entries {
            let split = e.split.to_string();
            w.write_record([
                e.speaker.as_str(),
                e.sentence.as_str(),
                e.frames.as_str(),
                e.landmarks.as_deref().unwrap_or(""),
                e.transcript.as_str(),
                split.as_str(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("manifest", e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::format("manifest", e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()?).map_err(|e| Error::from(e).at_path(path))
    }

    /// Reads and validates a manifest; every referenced path must exist.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_inner(path).map_err(|e| e.at_path(path))
    }

    fn load_inner(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, base)?;
        for e in &m.entries {
            let dir = m.resolve(&e.frames);
            if !dir.is_dir() {
                return Err(Error::format("manifest", format!("frame directory {} does not exist", dir.display())));
            }
            if let Some(l) = &e.landmarks {
                let f = m.resolve(l);
                if !f.is_file() {
                    return Err(Error::format("manifest", format!("landmark file {} does not exist", f.display())));
                }
            }
        }
        Ok(m)
    }

    /// Parses manifest text without touching the filesystem.
    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(Error::format("manifest", format!("expected header {}", HEADER.join(","))));
        }
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != HEADER.len() {
                return Err(Error::format("manifest", format!("row has {} fields", rec.len())));
            }
            let labels: Vec<&str> = rec[4].split_whitespace().collect();
            if labels.is_empty() {
                return Err(Error::format("manifest", format!("empty transcript for {}", &rec[1])));
            }
            entries.push(ManifestEntry {
                speaker: rec[0].to_string(),
                sentence: rec[1].to_string(),
                frames: rec[2].to_string(),
                landmarks: (!rec[3].is_empty()).then(|| rec[3].to_string()),
                transcript: rec[4].to_string(),
                split: rec[5].parse()?,
            });
        }
        Manifest::new(entries, base_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        let e = |spk: &str, s: &str, split| ManifestEntry {
            speaker: spk.into(),
            sentence: s.into(),
            frames: format!("{spk}/{s}"),
            landmarks: (s != "b").then(|| format!("{spk}/{s}/landmarks.csv")),
            transcript: "sil aa, \"x\" sil".into(),
            split,
        };
        Manifest::new(vec![e("p1", "a", Split::Train), e("p1", "b", Split::Test)], "/tmp").unwrap()
    }

    #[test]
    fn text_round_trip_is_byte_identical() {
        let m = sample();
        let text = m.to_csv_string().unwrap();
        let back = Manifest::parse(&text, "/tmp".into()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_csv_string().unwrap(), text);
    }

    #[test]
    fn duplicates_rejected() {
        let mut m = sample();
        m.entries[1].sentence = "a".into();
        assert!(Manifest::new(m.entries, "/tmp").is_err());
    }

    #[test]
    fn missing_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        sample().save(&p).unwrap();
        assert!(Manifest::load(&p).is_err());
    }
}
