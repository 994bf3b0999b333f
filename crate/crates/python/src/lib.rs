//! Python bindings: AAM training and fitting, DCT features, the HMM recognizer, scoring
//! and the end-to-end pipeline.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use visemekit::aam::{self, AamConfig, BBox};
use visemekit::dct;
use visemekit::eval::{self, EditCosts};
use visemekit::features::{FeatureKind, FeatureSequence};
use visemekit::hmm::{self, HmmConfig, Transcript, Utterance};
use visemekit::image::{GrayImage, Rect, RgbImage};
use visemekit::manifest::Manifest;
use visemekit::pipeline::{self, PipelineConfig};
use visemekit::shape::Shape;

fn err(e: visemekit::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn shape_of(points: &[(f64, f64)]) -> PyResult<Shape> {
    Shape::from_points(points).map_err(err)
}

fn points_of(s: &Shape) -> Vec<(f64, f64)> {
    s.points().collect()
}

fn load_images(paths: &[PathBuf]) -> PyResult<Vec<RgbImage>> {
    paths.iter().map(|p| RgbImage::load(p).map_err(err)).collect()
}

/// Substitution, deletion and insertion counts of an alignment.
#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct AlignmentStats {
    n: usize,
    substitutions: usize,
    deletions: usize,
    insertions: usize,
}

#[pymethods]
impl AlignmentStats {
    fn hits(&self) -> usize {
        self.n - self.deletions - self.substitutions
    }

    /// Correctness in percent.
    fn correctness(&self) -> f64 {
        self.inner().correctness()
    }

    /// Accuracy in percent.
    fn accuracy(&self) -> f64 {
        self.inner().accuracy()
    }

    fn __repr__(&self) -> String {
        format!(
            "AlignmentStats(n={}, S={}, D={}, I={})",
            self.n, self.substitutions, self.deletions, self.insertions
        )
    }
}

impl AlignmentStats {
    fn inner(&self) -> eval::AlignmentStats {
        eval::AlignmentStats {
            n: self.n,
            substitutions: self.substitutions,
            deletions: self.deletions,
            insertions: self.insertions,
        }
    }
}

impl From<eval::AlignmentStats> for AlignmentStats {
    fn from(s: eval::AlignmentStats) -> Self {
        Self {
            n: s.n,
            substitutions: s.substitutions,
            deletions: s.deletions,
            insertions: s.insertions,
        }
    }
}

/// Result of fitting an AAM to one image.
#[pyclass(frozen, get_all)]
struct FitResult {
    shape: Vec<(f64, f64)>,
    p_sim: Vec<f64>,
    p: Vec<f64>,
    c: Vec<f64>,
    costs: Vec<Vec<f64>>,
    converged: bool,
}

#[pymethods]
impl FitResult {
    #[getter]
    fn final_cost(&self) -> f64 {
        self.costs.last().and_then(|c| c.last()).copied().unwrap_or(f64::NAN)
    }
}

impl From<aam::FitResult> for FitResult {
    fn from(f: aam::FitResult) -> Self {
        Self {
            shape: points_of(&f.shape),
            p_sim: f.p_sim,
            p: f.p,
            c: f.c,
            costs: f.costs,
            converged: f.converged,
        }
    }
}

/// Active appearance model.
#[pyclass]
struct Aam {
    inner: aam::Aam,
}

#[pymethods]
impl Aam {
    /// Trains from image files and their landmarks.
    #[staticmethod]
    #[pyo3(signature = (images, shapes, warp = "patch", descriptor = "sift", part = "face"))]
    fn train(images: Vec<PathBuf>, shapes: Vec<Vec<(f64, f64)>>, warp: &str, descriptor: &str, part: &str) -> PyResult<Self> {
        let config = AamConfig::new(warp.parse().map_err(err)?, descriptor.parse().map_err(err)?, part.parse().map_err(err)?);
        let imgs = load_images(&images)?;
        let shapes = shapes.iter().map(|s| shape_of(s)).collect::<PyResult<Vec<_>>>()?;
        let inner = aam::train_aam(&imgs, &shapes, &config).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: aam::Aam::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.config.name()
    }

    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }

    /// Mean shape at full resolution.
    #[getter]
    fn mean_shape(&self) -> Vec<(f64, f64)> {
        points_of(&self.inner.levels.last().expect("at least one level").shape_model.mean)
    }

    /// Fits from an initial shape in image coordinates.
    fn fit(&self, image: PathBuf, init: Vec<(f64, f64)>) -> PyResult<FitResult> {
        let img = RgbImage::load(&image).map_err(err)?;
        let fit = aam::fit_wic(&self.inner, &img, &shape_of(&init)?).map_err(err)?;
        Ok(fit.into())
    }

    /// Fits from the mean shape placed in the box `[x0, x1] x [y0, y1]`.
    fn fit_bbox(&self, image: PathBuf, x0: f64, y0: f64, x1: f64, y1: f64) -> PyResult<FitResult> {
        let init = aam::init_from_bbox(&self.inner.levels.last().expect("at least one level").shape_model.mean, &BBox { x0, y0, x1, y1 }).map_err(err)?;
        let img = RgbImage::load(&image).map_err(err)?;
        Ok(aam::fit_wic(&self.inner, &img, &init).map_err(err)?.into())
    }

    /// Per scale: (scale, shape components, shape kept, appearance dim, appearance
    /// components, appearance kept).
    fn variance_report(&self) -> Vec<(f64, usize, f64, usize, usize, f64)> {
        self.inner
            .variance_report()
            .into_iter()
            .map(|r| (r.scale, r.shape_components, r.shape_kept, r.appearance_dim, r.appearance_components, r.appearance_kept))
            .collect()
    }
}

/// Trained viseme recognizer.
#[pyclass]
struct HmmSet {
    inner: hmm::HmmSet,
}

#[pymethods]
impl HmmSet {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: hmm::HmmSet::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().into_iter().map(str::to_string).collect()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    /// Log-likelihood of every training run, grouped by mixture size.
    #[getter]
    fn ll_history(&self) -> Vec<(usize, Vec<f64>)> {
        self.inner.ll_history.clone()
    }

    /// Most likely label sequence for a `frames x dim` feature matrix.
    #[pyo3(signature = (features, insertion_penalty = 0.0))]
    fn decode(&self, features: Vec<Vec<f64>>, insertion_penalty: f64) -> PyResult<Vec<String>> {
        let seq = FeatureSequence::new(features, 30.0, FeatureKind::Dct).map_err(err)?;
        Ok(hmm::viterbi_decode(&self.inner, &seq, insertion_penalty).map_err(err)?.labels)
    }
}

/// Flat start followed by the mixture schedule of embedded re-estimation.
#[pyfunction]
#[pyo3(signature = (features, transcripts, states = 3, schedule = None, runs = 5, silence = Some("sil".to_string())))]
fn train_hmms(
    features: Vec<Vec<Vec<f64>>>,
    transcripts: Vec<String>,
    states: usize,
    schedule: Option<Vec<usize>>,
    runs: usize,
    silence: Option<String>,
) -> PyResult<HmmSet> {
    if features.len() != transcripts.len() {
        return Err(PyValueError::new_err("one transcript per feature matrix is required"));
    }
    let corpus = features
        .into_iter()
        .zip(transcripts)
        .enumerate()
        .map(|(i, (f, t))| {
            Ok(Utterance {
                id: i.to_string(),
                features: FeatureSequence::new(f, 30.0, FeatureKind::Dct).map_err(err)?,
                transcript: t.parse::<Transcript>().map_err(err)?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let mut config = HmmConfig {
        n_states: states,
        runs,
        silence,
        ..HmmConfig::default()
    };
    if let Some(s) = schedule {
        config.schedule = s;
    }
    let labels = hmm::collect_labels(&corpus, config.silence.as_deref());
    Ok(HmmSet {
        inner: hmm::train_hmms(&corpus, &labels, &config).map_err(err)?,
    })
}

/// 132-dimensional DCT features (statics, first and second derivatives) of image files,
/// one `(x, y, w, h)` region per frame.
#[pyfunction]
#[pyo3(signature = (images, rois, window = 36, frame_rate = 30.0))]
fn dct_features(images: Vec<PathBuf>, rois: Vec<(i64, i64, usize, usize)>, window: usize, frame_rate: f64) -> PyResult<Vec<Vec<f64>>> {
    let frames = load_images(&images)?;
    let rects = rois
        .into_iter()
        .map(|(x, y, w, h)| Rect::new(x, y, w, h).map_err(err))
        .collect::<PyResult<Vec<_>>>()?;
    let seq = dct::extract_dct_sequence(&frames, &rects, window, frame_rate).map_err(err)?;
    Ok(seq.frames().to_vec())
}

/// Orthonormal 2-D DCT of a square image given as rows.
#[pyfunction]
fn dct2(image: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let h = image.len();
    let w = image.first().map(Vec::len).unwrap_or(0);
    let img = GrayImage::new(w, h, image.into_iter().flatten().collect()).map_err(err)?;
    let c = dct::dct2(&img).map_err(err)?;
    Ok(c.data.chunks(c.n).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
fn zigzag_order(n: usize) -> Vec<(usize, usize)> {
    dct::zigzag_order(n)
}

/// Aligns two space-separated label strings (`costs` is "unit" or "htk").
#[pyfunction]
#[pyo3(signature = (reference, hypothesis, costs = "unit"))]
fn align_score(reference: &str, hypothesis: &str, costs: &str) -> PyResult<AlignmentStats> {
    let costs = match costs {
        "unit" => EditCosts::UNIT,
        "htk" => EditCosts::HTK,
        other => return Err(PyValueError::new_err(format!("unknown cost set '{other}'"))),
    };
    let r: Transcript = reference.parse().map_err(err)?;
    let h: Transcript = hypothesis.parse().map_err(err)?;
    Ok(eval::align_score_with(&r, &h, &costs).map_err(err)?.into())
}

/// Mean landmark distance over the ground-truth bounding-box diagonal.
#[pyfunction]
fn landmark_error(pred: Vec<(f64, f64)>, gt: Vec<(f64, f64)>) -> PyResult<f64> {
    eval::landmark_error(&shape_of(&pred)?, &shape_of(&gt)?).map_err(err)
}

/// Reads a feature file: `(frames, frame_rate, kind)`.
#[pyfunction]
fn load_features(path: PathBuf) -> PyResult<(Vec<Vec<f64>>, f64, String)> {
    let seq = FeatureSequence::load(&path).map_err(err)?;
    Ok((seq.frames().to_vec(), seq.frame_rate(), seq.kind().to_string()))
}

/// Renders the synthetic corpus into `out_dir`; returns the manifest path. `config` is
/// pipeline TOML text (its `seed` and `[synth]` section apply).
#[pyfunction]
#[pyo3(signature = (out_dir, config = ""))]
fn synth_generate(out_dir: PathBuf, config: &str) -> PyResult<PathBuf> {
    let cfg = PipelineConfig::from_toml_str(config).map_err(err)?;
    visemekit::synth::synth_generate(&cfg.synth_config(), &out_dir).map_err(err)?;
    Ok(out_dir.join("manifest.csv"))
}

/// Runs the configured chain. Returns `(scores, fit_rate)`: one `(group, stats)` row per
/// speaker then the pooled row, and the fraction of fitted frames within the fit
/// threshold (AAM chain with ground truth only).
#[pyfunction]
#[pyo3(signature = (manifest, config = "", out = None))]
fn run_pipeline(manifest: PathBuf, config: &str, out: Option<PathBuf>) -> PyResult<(Vec<(String, AlignmentStats)>, Option<f64>)> {
    let mut cfg = PipelineConfig::from_toml_str(config).map_err(err)?;
    if let Some(o) = out {
        cfg.out = o;
    }
    let m = Manifest::load(&manifest).map_err(err)?;
    let reports = pipeline::run_pipeline(&cfg, &m).map_err(err)?;
    let scores = reports.scores.into_iter().map(|r| (r.group, r.stats.into())).collect();
    Ok((scores, reports.fit.map(|f| f.rate)))
}

#[pymodule]
#[pyo3(name = "visemekit")]
fn visemekit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<AlignmentStats>()?;
    m.add_class::<FitResult>()?;
    m.add_class::<Aam>()?;
    m.add_class::<HmmSet>()?;
    m.add_function(wrap_pyfunction!(train_hmms, m)?)?;
    m.add_function(wrap_pyfunction!(dct_features, m)?)?;
    m.add_function(wrap_pyfunction!(dct2, m)?)?;
    m.add_function(wrap_pyfunction!(zigzag_order, m)?)?;
    m.add_function(wrap_pyfunction!(align_score, m)?)?;
    m.add_function(wrap_pyfunction!(landmark_error, m)?)?;
    m.add_function(wrap_pyfunction!(load_features, m)?)?;
    m.add_function(wrap_pyfunction!(synth_generate, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
