//! The pipeline stages. Each one reads what earlier stages left in memory or under the
//! output root, and writes its own artifacts there.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use rayon::prelude::*;

use super::config::{FrontEnd, PipelineConfig, RoiSource};
use super::data::*;
use crate::aam::{
    fit_frames, init_from_bbox, init_part_from_face, sample_training_frames, train_aam_with_reference, Aam, AamConfig, BBox, FitResult, FrameRecord, Part,
};
use crate::dct::{extract_dct_sequence, landmark_roi};
use crate::error::{Error, Result};
use crate::eval::{
    align, ced_curve, ced_csv, fit_log_csv, landmark_error, line_plot_svg, linear_thresholds, scores_csv, stats_of, AlignmentStats, CedCurve, FitRow, ScoreRow, Series,
    SubstitutionTable,
};
use crate::features::FeatureSequence;
use crate::hmm::{collect_labels, decode_all, read_transcripts, train_hmms, write_transcripts, HmmSet, Transcript, Utterance};
use crate::image::{ncc_match, GrayImage, RgbImage};
use crate::landmarks::markup;
use crate::manifest::{Manifest, ManifestEntry, Split};
use crate::shape::Shape;
use crate::synth::synth_generate;

/// Row label of the all-speaker score line.
pub const POOLED: &str = "pooled";

/// Runs `f` as stage `name`: logs timing and tags errors with the stage.
pub fn stage<T>(name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    info!("[{name}] start");
    let out = f().map_err(|e| e.in_stage(name))?;
    info!("[{name}] done in {:.2}s", start.elapsed().as_secs_f64());
    Ok(out)
}

fn in_entry(manifest: &Manifest, e: &ManifestEntry) -> impl Fn(Error) -> Error {
    let dir = manifest.resolve(&e.frames);
    move |err| err.at_path(dir.clone())
}

/// Renders the synthetic corpus under `cfg.out` (or the given directory).
pub fn synth_gen(cfg: &PipelineConfig, out: &std::path::Path) -> Result<Manifest> {
    stage("synth-gen", || synth_generate(&cfg.synth_config(), out))
}

fn template(cfg: &PipelineConfig) -> Result<Option<GrayImage>> {
    match (cfg.features.roi, &cfg.features.template) {
        (RoiSource::Template, Some(p)) => Ok(Some(RgbImage::load(p)?.to_grayscale())),
        _ => Ok(None),
    }
}

fn dct_sentence(cfg: &PipelineConfig, manifest: &Manifest, e: &ManifestEntry, tmpl: Option<&GrayImage>) -> Result<FeatureSequence> {
    let frames = load_frames(manifest, e)?;
    let rois = match tmpl {
        Some(t) => frames
            .par_iter()
            .map(|f| ncc_match(&f.to_grayscale(), t).map(|(r, _)| r))
            .collect::<Result<Vec<_>>>()?,
        None => {
            let track = load_track(manifest, e, Some(frames.len()))?;
            let lips = markup::lips();
            track
                .iter()
                .zip(&frames)
                .map(|(t, f)| {
                    let r = landmark_roi(&t.shape, &lips, cfg.features.roi_margin)?;
                    r.clamp_to(f.width(), f.height()).ok_or_else(|| Error::Frame {
                        frame: t.frame,
                        reason: "lip region lies outside the frame".into(),
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    extract_dct_sequence(&frames, &rois, cfg.features.window, cfg.frame_rate)
}

/// DCT features of every sentence, in manifest order, saved under `features/`.
pub fn dct_extract(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout) -> Result<Vec<FeatureSequence>> {
    stage("dct-extract", || {
        let tmpl = template(cfg)?;
        manifest
            .entries
            .iter()
            .map(|e| {
                let seq = dct_sentence(cfg, manifest, e, tmpl.as_ref()).map_err(in_entry(manifest, e))?;
                let path = layout.feature_file(e);
                ensure_parent(&path)?;
                seq.save(&path)?;
                Ok(seq)
            })
            .collect()
    })
}

/// The recognition model and, for chin or lips models, the face model that places it.
#[derive(Clone, Debug)]
pub struct AamModels {
    pub model: Aam,
    pub face: Option<Aam>,
}

impl AamModels {
    pub fn load(layout: &Layout) -> Result<Self> {
        let model = Aam::load(&layout.aam_file())?;
        let face_path = layout.face_aam_file();
        let face = if model.config.part != Part::Face {
            Some(Aam::load(&face_path)?)
        } else {
            None
        };
        Ok(Self { model, face })
    }
}

fn mean_shape(shapes: &[Shape]) -> Result<Shape> {
    let n = shapes.len() as f64;
    let mut acc = vec![0.0; shapes[0].coords().len()];
    for s in shapes {
        for (a, v) in acc.iter_mut().zip(s.coords()) {
            *a += v;
        }
    }
    Shape::new(acc.into_iter().map(|a| a / n).collect())
}

fn train_one(images: &[RgbImage], shapes: &[Shape], first_video: &[Shape], config: &AamConfig) -> Result<Aam> {
    let part = crate::aam::part_shapes(first_video, config)?;
    let reference = mean_shape(&part)?;
    let aam = train_aam_with_reference(images, shapes, &reference, config)?;
    for row in aam.variance_report() {
        info!(
            "{} scale {}: {} shape components ({:.4} kept), {} appearance components ({:.4} kept)",
            config.name(),
            row.scale,
            row.shape_components,
            row.shape_kept,
            row.appearance_components,
            row.appearance_kept
        );
    }
    Ok(aam)
}

fn variance_csv(models: &[&Aam]) -> String {
    let mut out = String::from("model,scale,shape_components,shape_kept,appearance_dim,appearance_components,appearance_kept\n");
    for m in models {
        for r in m.variance_report() {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{},{},{:.6}",
                m.config.name(),
                r.scale,
                r.shape_components,
                r.shape_kept,
                r.appearance_dim,
                r.appearance_components,
                r.appearance_kept
            );
        }
    }
    out
}

/// Samples training frames from the training split and trains the configured model
/// (plus a face model for chin or lips). The normalization reference is the mean shape
/// of the selected frames of the first training sentence that contributed any.
pub fn aam_train(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout) -> Result<AamModels> {
    stage("aam-train", || {
        let train: Vec<&ManifestEntry> = manifest.split(Split::Train).collect();
        let mut records = Vec::new();
        for e in &train {
            let track = load_track(manifest, e, None)?;
            records.extend(track.into_iter().map(|t| FrameRecord {
                frame: t.frame,
                landmarks: t.shape,
                confidence: t.confidence,
                sentence: e.sentence.clone(),
                speaker: e.speaker.clone(),
            }));
        }
        let selected = sample_training_frames(&records, &cfg.sampler_config()?)?;
        info!("selected {} of {} training frames", selected.len(), records.len());

        let mut images: Vec<Option<RgbImage>> = vec![None; selected.len()];
        let mut first_video: Option<Vec<Shape>> = None;
        for e in &train {
            let picks: Vec<usize> = (0..selected.len())
                .filter(|&i| selected[i].speaker == e.speaker && selected[i].sentence == e.sentence)
                .collect();
            if picks.is_empty() {
                continue;
            }
            let frames: Vec<usize> = picks.iter().map(|&i| selected[i].frame).collect();
            let loaded = load_selected_frames(manifest, e, &frames).map_err(in_entry(manifest, e))?;
            for (i, img) in picks.iter().zip(loaded) {
                images[*i] = Some(img);
            }
            if first_video.is_none() {
                first_video = Some(picks.iter().map(|&i| selected[i].landmarks.clone()).collect());
            }
        }
        let images: Vec<RgbImage> = images.into_iter().map(|i| i.expect("every selected frame loaded")).collect();
        let shapes: Vec<Shape> = selected.iter().map(|r| r.landmarks.clone()).collect();
        let first_video = first_video.expect("at least one sentence contributed");

        let config = cfg.aam_config()?;
        let model = train_one(&images, &shapes, &first_video, &config)?;
        let face = match cfg.face_config()? {
            Some(fc) => Some(train_one(&images, &shapes, &first_video, &fc)?),
            None => None,
        };
        ensure_parent(&layout.aam_file())?;
        model.save(&layout.aam_file())?;
        let mut all = vec![&model];
        if let Some(f) = &face {
            f.save(&layout.face_aam_file())?;
            all.push(f);
        }
        write_file(&layout.report("variance.csv"), variance_csv(&all))?;
        Ok(AamModels { model, face })
    })
}

fn mean_of(aam: &Aam) -> &Shape {
    &aam.levels.last().expect("at least one level").shape_model.mean
}

fn collect_fits(results: Vec<Result<FitResult>>) -> Result<Vec<FitResult>> {
    results
        .into_iter()
        .enumerate()
        .map(|(t, r)| {
            r.map_err(|e| Error::Frame {
                frame: t,
                reason: format!("fit failed: {e}"),
            })
        })
        .collect()
}

fn fit_sentence(models: &AamModels, manifest: &Manifest, e: &ManifestEntry) -> Result<Vec<FitResult>> {
    let frames = load_frames(manifest, e)?;
    let track = load_track(manifest, e, Some(frames.len()))?;
    let refs: Vec<&RgbImage> = frames.iter().collect();
    let first = models.face.as_ref().unwrap_or(&models.model);
    let inits = track
        .iter()
        .map(|t| init_from_bbox(mean_of(first), &BBox::of_shape(&t.shape)))
        .collect::<Result<Vec<_>>>()?;
    let fits = collect_fits(fit_frames(first, &refs, &inits)?)?;
    if models.face.is_none() {
        return Ok(fits);
    }
    let part = models.model.config.part;
    let inits = fits.iter().map(|f| init_part_from_face(f, part)).collect::<Result<Vec<_>>>()?;
    collect_fits(fit_frames(&models.model, &refs, &inits)?)
}

/// Fits every sentence from boxes around its tracked landmarks; saves `fits/`.
pub fn aam_fit(manifest: &Manifest, layout: &Layout, models: &AamModels) -> Result<Vec<Vec<FitResult>>> {
    stage("aam-fit", || {
        manifest
            .entries
            .iter()
            .map(|e| {
                let fits = fit_sentence(models, manifest, e).map_err(in_entry(manifest, e))?;
                save_fits(&layout.fit_file(e), &fits)?;
                Ok(fits)
            })
            .collect()
    })
}

pub fn load_all_fits(manifest: &Manifest, layout: &Layout) -> Result<Vec<Vec<FitResult>>> {
    manifest.entries.iter().map(|e| load_fits(&layout.fit_file(e))).collect()
}

/// AAM parameter features of every sentence; saved under `features/`.
pub fn aam_features(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout, fits: &[Vec<FitResult>]) -> Result<Vec<FeatureSequence>> {
    stage("aam-features", || {
        let variant = cfg.aam_variant()?;
        manifest
            .entries
            .iter()
            .zip(fits)
            .map(|(e, f)| {
                let seq = crate::aam::extract_aam_features(f, variant, cfg.frame_rate).map_err(in_entry(manifest, e))?;
                let path = layout.feature_file(e);
                ensure_parent(&path)?;
                seq.save(&path)?;
                Ok(seq)
            })
            .collect()
    })
}

/// Landmark error summary over every fitted frame with ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub model: String,
    pub frames: usize,
    pub ced: CedCurve,
    pub threshold: f64,
    /// Proportion of frames with error at or below `threshold`.
    pub rate: f64,
}

/// Compares fits against ground truth stored next to the frames; writes the fit log,
/// the cumulative error table and its plot. `None` when no sentence has ground truth.
pub fn fit_eval(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout, fits: &[Vec<FitResult>]) -> Result<Option<FitSummary>> {
    stage("fit-eval", || {
        let config = cfg.aam_config()?;
        let model = config.name();
        let idx = config.part.indices(markup::N_POINTS)?;
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for (e, f) in manifest.entries.iter().zip(fits) {
            let truth = load_ground_truth(manifest, e, f.len()).map_err(in_entry(manifest, e))?;
            for (t, fit) in f.iter().enumerate() {
                let error = match &truth {
                    Some(gt) => {
                        let gt = if gt[t].n_points() == fit.shape.n_points() { gt[t].clone() } else { gt[t].subset(&idx)? };
                        Some(landmark_error(&fit.shape, &gt)?)
                    }
                    None => None,
                };
                errors.extend(error);
                rows.push(FitRow {
                    model: model.clone(),
                    sentence: entry_key(e),
                    frame: t,
                    final_cost: fit.final_cost(),
                    converged: fit.converged,
                    error,
                });
            }
        }
        write_file(&layout.report("fit_log.csv"), fit_log_csv(&rows))?;
        if errors.is_empty() {
            return Ok(None);
        }
        let fe = &cfg.fit_eval;
        let ced = ced_curve(&errors, &linear_thresholds(fe.max_error, fe.points))?;
        write_file(&layout.report("ced.csv"), ced_csv(&[(model.clone(), ced.clone())]))?;
        let series = Series {
            name: model.clone(),
            points: ced.thresholds.iter().copied().zip(ced.proportions.iter().copied()).collect(),
        };
        write_file(
            &layout.report("ced.svg"),
            line_plot_svg("Cumulative error distribution", "normalized point-to-point error", "proportion of frames", &[series]),
        )?;
        let rate = errors.iter().filter(|&&x| x <= fe.threshold).count() as f64 / errors.len() as f64;
        info!("{model}: {:.2}% of {} frames at error <= {}", 100.0 * rate, errors.len(), fe.threshold);
        Ok(Some(FitSummary {
            model,
            frames: errors.len(),
            ced,
            threshold: fe.threshold,
            rate,
        }))
    })
}

pub fn load_features(manifest: &Manifest, layout: &Layout) -> Result<Vec<FeatureSequence>> {
    manifest.entries.iter().map(|e| FeatureSequence::load(&layout.feature_file(e))).collect()
}

fn transcript_of(e: &ManifestEntry) -> Transcript {
    Transcript::new(e.labels())
}

fn ll_csv(set: &HmmSet) -> String {
    let mut out = String::from("components,run,log_likelihood\n");
    for (k, lls) in &set.ll_history {
        for (r, ll) in lls.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{ll:e}", r + 1);
        }
    }
    out
}

/// Trains the recognizer on the training split; saves `models/hmm.txt`.
pub fn hmm_train(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout, features: &[FeatureSequence]) -> Result<HmmSet> {
    stage("hmm-train", || {
        let corpus: Vec<Utterance> = manifest
            .entries
            .iter()
            .zip(features)
            .filter(|(e, _)| e.split == Split::Train)
            .map(|(e, f)| Utterance {
                id: entry_key(e),
                features: f.clone(),
                transcript: transcript_of(e),
            })
            .collect();
        let hc = cfg.hmm_config();
        let labels = collect_labels(&corpus, hc.silence.as_deref());
        info!("{} training sentences, {} classes", corpus.len(), labels.len());
        let set = train_hmms(&corpus, &labels, &hc)?;
        ensure_parent(&layout.hmm_file())?;
        set.save(&layout.hmm_file())?;
        write_file(&layout.report("ll_history.csv"), ll_csv(&set))?;
        Ok(set)
    })
}

/// Decodes the test split; writes `reports/hypotheses.txt`.
pub fn decode(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout, set: &HmmSet, features: &[FeatureSequence]) -> Result<Vec<(String, Transcript)>> {
    stage("decode", || {
        let (keys, seqs): (Vec<String>, Vec<FeatureSequence>) = manifest
            .entries
            .iter()
            .zip(features)
            .filter(|(e, _)| e.split == Split::Test)
            .map(|(e, f)| (entry_key(e), f.clone()))
            .unzip();
        let hyps = decode_all(set, &seqs, cfg.hmm.insertion_penalty)?;
        let out: Vec<(String, Transcript)> = keys.into_iter().zip(hyps).collect();
        let path = layout.report("hypotheses.txt");
        ensure_parent(&path)?;
        write_transcripts(&path, &out)?;
        Ok(out)
    })
}

pub fn load_hypotheses(layout: &Layout) -> Result<Vec<(String, Transcript)>> {
    read_transcripts(&layout.report("hypotheses.txt"))
}

/// Scores hypotheses against the manifest transcripts: one row per speaker, then the
/// pooled row. Writes `scores.csv`, `sentence_scores.csv` and `substitutions.csv`.
pub fn score(cfg: &PipelineConfig, manifest: &Manifest, layout: &Layout, hyps: &[(String, Transcript)]) -> Result<Vec<ScoreRow>> {
    stage("score", || {
        let by_key: BTreeMap<&str, &Transcript> = hyps.iter().map(|(k, t)| (k.as_str(), t)).collect();
        let costs = cfg.edit_costs();
        let mut per_speaker: BTreeMap<String, AlignmentStats> = BTreeMap::new();
        let mut pooled = AlignmentStats::default();
        let mut table = SubstitutionTable::default();
        let mut sentences = Vec::new();
        for e in manifest.split(Split::Test) {
            let key = entry_key(e);
            let hyp = by_key
                .get(key.as_str())
                .ok_or_else(|| Error::invalid(format!("no hypothesis for {key}")))?;
            let reference = transcript_of(e);
            let ops = align(&reference, hyp, &costs);
            let stats = stats_of(&ops);
            table.add(&ops);
            *per_speaker.entry(e.speaker.clone()).or_default() += stats;
            pooled += stats;
            sentences.push(ScoreRow { group: key, stats });
        }
        if pooled.n == 0 {
            return Err(Error::invalid("the test split is empty"));
        }
        let mut rows: Vec<ScoreRow> = per_speaker.into_iter().map(|(group, stats)| ScoreRow { group, stats }).collect();
        rows.push(ScoreRow {
            group: POOLED.into(),
            stats: pooled,
        });
        write_file(&layout.report("scores.csv"), scores_csv(&rows))?;
        write_file(&layout.report("sentence_scores.csv"), scores_csv(&sentences))?;
        write_file(&layout.report("substitutions.csv"), table.to_csv())?;
        info!("pooled: correctness {:.2}%, accuracy {:.2}%", pooled.correctness(), pooled.accuracy());
        Ok(rows)
    })
}

/// Everything a full run reports.
#[derive(Clone, Debug)]
pub struct Reports {
    pub scores: Vec<ScoreRow>,
    pub fit: Option<FitSummary>,
}

impl Reports {
    pub fn pooled(&self) -> &AlignmentStats {
        &self.scores.last().expect("pooled row present").stats
    }
}

/// The whole chain for the configured front-end, inside a pool of `cfg.jobs` workers.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: &Manifest) -> Result<Reports> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")).in_stage("config"))?;
    pool.install(|| {
        let layout = Layout::new(&cfg.out);
        write_file(&layout.config_file(), cfg.to_toml_string()).map_err(|e| e.in_stage("config"))?;
        let (features, fit) = match cfg.features.kind {
            FrontEnd::Dct => (dct_extract(cfg, manifest, &layout)?, None),
            FrontEnd::Aam => {
                let models = aam_train(cfg, manifest, &layout)?;
                let fits = aam_fit(manifest, &layout, &models)?;
                let summary = fit_eval(cfg, manifest, &layout, &fits)?;
                (aam_features(cfg, manifest, &layout, &fits)?, summary)
            }
        };
        let set = hmm_train(cfg, manifest, &layout, &features)?;
        let hyps = decode(cfg, manifest, &layout, &set, &features)?;
        let scores = score(cfg, manifest, &layout, &hyps)?;
        Ok(Reports { scores, fit })
    })
}
