//! Output layout, corpus loading and the fit file format.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::aam::FitResult;
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::landmarks::{read_track_csv, TrackedFrame};
use crate::manifest::{Manifest, ManifestEntry};
use crate::shape::Shape;
use crate::synth::TRUTH_FILE;

/// Directory tree written by the pipeline under one output root.
///
/// ```text
/// <out>/config.toml
/// <out>/features/<speaker>/<sentence>.bin (+ .hdr)
/// <out>/fits/<speaker>/<sentence>.csv
/// <out>/models/aam.bin, aam-face.bin, hmm.txt
/// <out>/reports/*.csv, *.svg, hypotheses.txt
/// ```
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config_file(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn feature_file(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join("features").join(&e.speaker).join(format!("{}.bin", e.sentence))
    }

    pub fn fit_file(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join("fits").join(&e.speaker).join(format!("{}.csv", e.sentence))
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn aam_file(&self) -> PathBuf {
        self.models().join("aam.bin")
    }

    pub fn face_aam_file(&self) -> PathBuf {
        self.models().join("aam-face.bin")
    }

    pub fn hmm_file(&self) -> PathBuf {
        self.models().join("hmm.txt")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.reports().join(name)
    }
}

/// Sentence key used in transcript and report files.
pub fn entry_key(e: &ManifestEntry) -> String {
    format!("{}/{}", e.speaker, e.sentence)
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(|e| Error::from(e).at_path(path))
}

fn is_frame_file(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "ppm" | "pgm" | "pnm")
    )
}

/// Image files of a sentence directory in name order.
pub fn frame_paths(manifest: &Manifest, e: &ManifestEntry) -> Result<Vec<PathBuf>> {
    let dir = manifest.resolve(&e.frames);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|err| Error::from(err).at_path(&dir))?
        .filter_map(|d| d.ok().map(|d| d.path()))
        .filter(|p| is_frame_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format("sentence", "no frame images").at_path(dir));
    }
    Ok(paths)
}

pub fn load_frames(manifest: &Manifest, e: &ManifestEntry) -> Result<Vec<RgbImage>> {
    frame_paths(manifest, e)?.par_iter().map(|p| RgbImage::load(p)).collect()
}

/// Loads only the listed frame indices.
pub fn load_selected_frames(manifest: &Manifest, e: &ManifestEntry, frames: &[usize]) -> Result<Vec<RgbImage>> {
    let paths = frame_paths(manifest, e)?;
    frames
        .par_iter()
        .map(|&i| {
            let p = paths.get(i).ok_or_else(|| Error::Frame {
                frame: i,
                reason: format!("sentence {} has only {} frames", entry_key(e), paths.len()),
            })?;
            RgbImage::load(p)
        })
        .collect()
}

fn check_track(track: Vec<TrackedFrame>, n_frames: Option<usize>, path: &Path) -> Result<Vec<TrackedFrame>> {
    if let Some(bad) = track.iter().enumerate().find(|(i, t)| t.frame != *i) {
        return Err(Error::format("landmark csv", format!("row {} is frame {}, expected {}", bad.0, bad.1.frame, bad.0)).at_path(path));
    }
    if let Some(n) = n_frames {
        if track.len() != n {
            return Err(Error::format("landmark csv", format!("{} rows for {n} frames", track.len())).at_path(path));
        }
    }
    Ok(track)
}

/// Tracked landmarks of a sentence, one row per frame in order.
pub fn load_track(manifest: &Manifest, e: &ManifestEntry, n_frames: Option<usize>) -> Result<Vec<TrackedFrame>> {
    let rel = e
        .landmarks
        .as_ref()
        .ok_or_else(|| Error::invalid(format!("sentence {} has no landmark file", entry_key(e))))?;
    let path = manifest.resolve(rel);
    check_track(read_track_csv(&path)?, n_frames, &path)
}

/// Exact landmarks stored next to the frames, when present.
pub fn load_ground_truth(manifest: &Manifest, e: &ManifestEntry, n_frames: usize) -> Result<Option<Vec<Shape>>> {
    let path = manifest.resolve(&e.frames).join(TRUTH_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let track = check_track(read_track_csv(&path)?, Some(n_frames), &path)?;
    Ok(Some(track.into_iter().map(|t| t.shape).collect()))
}

const FIT_HEADER: &str = "frame,model,converged,final_cost,shape,p_sim,p,c";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

/// One row per frame; vector fields are space-separated inside their cell.
pub fn fits_to_csv(fits: &[FitResult]) -> String {
    let mut out = String::from(FIT_HEADER);
    out.push('\n');
    for (i, f) in fits.iter().enumerate() {
        out.push_str(&format!(
            "{i},{:016x},{},{:e},{},{},{},{}\n",
            f.model_id,
            f.converged,
            f.final_cost(),
            join(f.shape.coords()),
            join(&f.p_sim),
            join(&f.p),
            join(&f.c)
        ));
    }
    out
}

/// Reads fits back; per-scale cost traces are reduced to the final cost.
pub fn fits_from_csv(text: &str) -> Result<Vec<FitResult>> {
    let bad = |m: String| Error::format("fit file", m);
    let mut lines = text.lines();
    if lines.next() != Some(FIT_HEADER) {
        return Err(bad(format!("expected header '{FIT_HEADER}'")));
    }
    let nums = |s: &str| -> Result<Vec<f64>> {
        s.split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number '{t}'"))))
            .collect()
    };
    let mut out = Vec::new();
    for (i, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 8 {
            return Err(bad(format!("row {i} has {} fields", cells.len())));
        }
        if cells[0].parse::<usize>().ok() != Some(i) {
            return Err(bad(format!("row {i} is labeled frame '{}'", cells[0])));
        }
        let model_id = u64::from_str_radix(cells[1], 16).map_err(|_| bad(format!("bad model id '{}'", cells[1])))?;
        let converged = cells[2].parse::<bool>().map_err(|_| bad(format!("bad flag '{}'", cells[2])))?;
        let cost = cells[3].parse::<f64>().map_err(|_| bad(format!("bad cost '{}'", cells[3])))?;
        out.push(FitResult {
            shape: Shape::new(nums(cells[4])?)?,
            p_sim: nums(cells[5])?,
            p: nums(cells[6])?,
            c: nums(cells[7])?,
            costs: vec![vec![cost]],
            converged,
            model_id,
        });
    }
    Ok(out)
}

pub fn save_fits(path: &Path, fits: &[FitResult]) -> Result<()> {
    write_file(path, fits_to_csv(fits))
}

pub fn load_fits(path: &Path) -> Result<Vec<FitResult>> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
    fits_from_csv(&text).map_err(|e| e.at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_csv_round_trip() {
        let f = FitResult {
            shape: Shape::new(vec![1.5, -2.0, 1.0 / 3.0, 4e10]).unwrap(),
            p_sim: vec![0.1, 0.2, 0.3, 0.4],
            p: vec![],
            c: vec![-1.0, 2.5e-300],
            costs: vec![vec![9.0, 3.25]],
            converged: true,
            model_id: 0xdead_beef_0123_4567,
        };
        let text = fits_to_csv(&[f.clone(), f.clone()]);
        let back = fits_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].shape, f.shape);
        assert_eq!(back[1].c, f.c);
        assert!(back[1].p.is_empty());
        assert_eq!(back[1].final_cost(), 3.25);
        assert_eq!(back[1].model_id, f.model_id);
        assert_eq!(fits_to_csv(&back), text);
        assert!(fits_from_csv(&text.replace("\n1,", "\n5,")).is_err());
        assert!(fits_from_csv("frame\n").is_err());
    }
}
