//! Training-frame selection: confidence filter, per-speaker sentence subset, and even
//! sampling over the lip-opening order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::landmarks::markup;
use crate::shape::Shape;

pub const DEFAULT_CONFIDENCE: f64 = 0.94;
pub const DEFAULT_FRACTION: f64 = 0.05;
pub const DEFAULT_SENTENCES_PER_SPEAKER: usize = 5;

/// One tracked frame with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub frame: usize,
    pub landmarks: Shape,
    pub confidence: f64,
    pub sentence: String,
    pub speaker: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub confidence: f64,
    pub fraction: f64,
    pub sentences_per_speaker: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            confidence: DEFAULT_CONFIDENCE,
            fraction: DEFAULT_FRACTION,
            sentences_per_speaker: DEFAULT_SENTENCES_PER_SPEAKER,
            seed: 0,
        }
    }
}

/// Mean vertical gap between the inner-lip landmark pairs of a 68-point shape.
pub fn lip_opening(shape: &Shape) -> Result<f64> {
    if shape.n_points() != markup::N_POINTS {
        return Err(Error::invalid(format!(
            "lip opening needs {}-point shapes, got {}",
            markup::N_POINTS,
            shape.n_points()
        )));
    }
    let sum: f64 = markup::INNER_LIP_PAIRS
        .iter()
        .map(|&(u, l)| (shape.point(l).1 - shape.point(u).1).abs())
        .sum();
    Ok(sum / markup::INNER_LIP_PAIRS.len() as f64)
}

/// `ceil(fraction * n)` ranks evenly spread over `0..n`.
pub fn even_ranks(n: usize, fraction: f64) -> Vec<usize> {
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n.max(1));
    if n == 0 {
        return vec![];
    }
    (0..m).map(|i| i * n / m).collect()
}

pub fn sample_training_frames(records: &[FrameRecord], cfg: &SamplerConfig) -> Result<Vec<FrameRecord>> {
    if records.is_empty() {
        return Err(Error::invalid("no frame records to sample from"));
    }
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(Error::invalid(format!("sampling fraction {} outside (0, 1]", cfg.fraction)));
    }
    let confident: Vec<&FrameRecord> = records.iter().filter(|r| r.confidence >= cfg.confidence).collect();
    if confident.is_empty() {
        return Err(Error::invalid(format!(
            "no frame reaches confidence {} ({} records, best {:.4})",
            cfg.confidence,
            records.len(),
            records.iter().map(|r| r.confidence).fold(f64::MIN, f64::max)
        )));
    }

    // sentences per speaker in order of first appearance
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in records {
        let list = by_speaker.entry(r.speaker.as_str()).or_default();
        if !list.contains(&r.sentence.as_str()) {
            list.push(r.sentence.as_str());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut chosen: Vec<(&str, &str)> = Vec::new();
    for (speaker, sentences) in &by_speaker {
        let mut picked = sentences.clone();
        if picked.len() > cfg.sentences_per_speaker {
            picked.shuffle(&mut rng);
            picked.truncate(cfg.sentences_per_speaker);
        }
        chosen.extend(picked.into_iter().map(|s| (*speaker, s)));
    }

    let mut survivors: Vec<(f64, &FrameRecord)> = confident
        .into_iter()
        .filter(|r| chosen.contains(&(r.speaker.as_str(), r.sentence.as_str())))
        .map(|r| lip_opening(&r.landmarks).map(|o| (o, r)))
        .collect::<Result<_>>()?;
    if survivors.is_empty() {
        return Err(Error::invalid("no confident frames in the selected sentences"));
    }
    survivors.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(even_ranks(survivors.len(), cfg.fraction)
        .into_iter()
        .map(|i| survivors[i].1.clone())
        .collect())
}
