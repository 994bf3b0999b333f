use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{AamConfig, ColorMode, Descriptor, WarpKind};
use crate::appearance::mesh::{delaunay, TriMesh};
use crate::appearance::patch::patch_extract_into;
use crate::appearance::sift::dense_sift;
use crate::appearance::warp::{pa_warp_into, WarpMap};
use crate::error::{Error, Result};
use crate::image::{scaled_extent, Raster, RgbImage};
use crate::pca::pca_fit;
use crate::shape::{align_pair, gpa, LinearShapeModel, Shape};

/// Offset of the reference shape from the reference-frame origin, in pixels.
pub(crate) const FRAME_MARGIN: f64 = 1.0;

/// PCA appearance model: `A(x) = mean + components * c`.
#[derive(Clone, Debug)]
pub struct AppearanceModel {
    pub mean: Vec<f64>,
    /// `D x m`, orthonormal columns.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
    pub kept_variance_ratio: f64,
}

impl AppearanceModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Closed-form appearance step: the weights `c = A^T (x - mean)` minimizing
    /// `|x - mean - A c|`, the residual `e = x - mean` and the project-out cost
    /// `|e|^2 - |c|^2`.
    pub fn project_out(&self, sample: &[f64]) -> (DVector<f64>, Vec<f64>, f64) {
        let e = DVector::from_iterator(sample.len(), sample.iter().zip(&self.mean).map(|(v, m)| v - m));
        let c = self.components.tr_mul(&e);
        let cost = e.norm_squared() - c.norm_squared();
        (e, c.iter().copied().collect(), cost)
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }
}

/// Quantities derived from a level once and reused by every fit.
#[derive(Clone, Debug)]
pub(crate) struct FitCache {
    /// `[Q | S]`, `2N x P`.
    pub basis: DMatrix<f64>,
    /// `H^-1 SD^T` with the appearance subspace projected out, `P x D`.
    pub update: DMatrix<f64>,
}

/// Everything needed at one pyramid level.
#[derive(Clone, Debug)]
pub struct AamLevel {
    pub scale: f64,
    pub shape_model: LinearShapeModel,
    /// Mean shape placed in the level's reference frame.
    pub reference: Shape,
    pub warpmap: Option<WarpMap>,
    pub appearance: AppearanceModel,
    pub(crate) cache: FitCache,
}

impl AamLevel {
    pub fn n_params(&self) -> usize {
        self.shape_model.n_params()
    }

    /// Parameters `[q, p]` of `shape` relative to the reference placement.
    pub fn project(&self, shape: &Shape) -> Vec<f64> {
        let b = &self.cache.basis;
        let diff = DVector::from_iterator(
            shape.coords().len(),
            shape.coords().iter().zip(self.reference.coords()).map(|(a, r)| a - r),
        );
        (b.tr_mul(&diff)).iter().copied().collect()
    }

    pub fn reconstruct(&self, params: &[f64]) -> Shape {
        let b = &self.cache.basis;
        let v = b * DVector::from_column_slice(params);
        let coords = self.reference.coords().iter().zip(v.iter()).map(|(r, d)| r + d).collect();
        Shape::new(coords).expect("finite reconstruction")
    }
}

/// A trained multi-scale model.
#[derive(Clone, Debug)]
pub struct Aam {
    pub config: AamConfig,
    /// Normalization target: centered, bounding-box diagonal equal to `config.diagonal`.
    pub reference: Shape,
    pub mesh: Option<TriMesh>,
    /// Coarse to fine, matching `config.scales`.
    pub levels: Vec<AamLevel>,
    pub(crate) id: u64,
}

/// One row of the kept-variance report.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceRow {
    pub scale: f64,
    pub shape_components: usize,
    pub shape_kept: f64,
    pub appearance_dim: usize,
    pub appearance_components: usize,
    pub appearance_kept: f64,
}

impl Aam {
    pub fn n_points(&self) -> usize {
        self.reference.n_points()
    }

    /// Fingerprint of the serialized model; fits carry it to detect mixing.
    pub fn id(&self) -> u64 {
        self.id
    }

    /// Appearance vector of `shape` (image coordinates) at pyramid level `level`.
    pub fn sample_level(&self, level: usize, image: &RgbImage, shape: &Shape) -> Result<Vec<f64>> {
        let lv = self
            .levels
            .get(level)
            .ok_or_else(|| Error::invalid(format!("level {level} out of range ({} levels)", self.levels.len())))?;
        if shape.n_points() != self.n_points() {
            return Err(Error::DimensionMismatch {
                expected: self.n_points(),
                actual: shape.n_points(),
            });
        }
        let f = normalizing_scale(shape, &self.reference)?;
        let (limg, kx, ky) = level_image(image, f * lv.scale)?;
        let desc = descriptor_image(&self.config, &limg);
        let mut out = vec![0.0; lv.appearance.dim()];
        sample_appearance(&self.config, lv, self.mesh.as_ref(), &desc, &rescale_shape(shape, kx, ky), &mut out);
        Ok(out)
    }

    pub fn variance_report(&self) -> Vec<VarianceRow> {
        self.levels
            .iter()
            .map(|l| VarianceRow {
                scale: l.scale,
                shape_components: l.shape_model.n_components(),
                shape_kept: l.shape_model.kept_variance_ratio,
                appearance_dim: l.appearance.dim(),
                appearance_components: l.appearance.n_components(),
                appearance_kept: l.appearance.kept_variance_ratio,
            })
            .collect()
    }
}

pub(crate) fn rescale_shape(s: &Shape, kx: f64, ky: f64) -> Shape {
    let coords = s
        .coords()
        .chunks_exact(2)
        .flat_map(|p| [(p[0] + 0.5) * kx - 0.5, (p[1] + 0.5) * ky - 0.5])
        .collect();
    Shape::new(coords).expect("finite rescale")
}

pub(crate) fn unscale_shape(s: &Shape, kx: f64, ky: f64) -> Shape {
    rescale_shape(s, 1.0 / kx, 1.0 / ky)
}

/// Resizes by `k` and returns the realized per-axis factors.
pub(crate) fn level_image(img: &RgbImage, k: f64) -> Result<(RgbImage, f64, f64)> {
    if (k - 1.0).abs() < 1e-12 {
        return Ok((img.clone(), 1.0, 1.0));
    }
    let (w, h) = scaled_extent(img.width(), img.height(), k);
    let out = img.resize_cubic(w, h)?;
    Ok((out, w as f64 / img.width() as f64, h as f64 / img.height() as f64))
}

pub(crate) fn descriptor_image(config: &AamConfig, img: &RgbImage) -> Raster {
    match (config.descriptor, config.color) {
        (Descriptor::Sift, _) => dense_sift(&img.to_grayscale()),
        (Descriptor::NoOp, ColorMode::Rgb) => img.raster().clone(),
        (Descriptor::NoOp, ColorMode::Gray) => img.to_grayscale().into_raster(),
    }
}

pub(crate) fn appearance_dim(config: &AamConfig, n_points: usize, warpmap: Option<&WarpMap>) -> usize {
    let ch = config.channels();
    match config.warp {
        WarpKind::Holistic => warpmap.map(|w| w.len()).unwrap_or(0) * ch,
        WarpKind::Patch => n_points * config.patch * config.patch * ch,
    }
}

/// Samples the appearance vector of `shape` (level coordinates) from a descriptor image.
pub(crate) fn sample_appearance(config: &AamConfig, level: &AamLevel, mesh: Option<&TriMesh>, desc: &Raster, shape: &Shape, out: &mut [f64]) {
    match (config.warp, mesh, &level.warpmap) {
        (WarpKind::Holistic, Some(mesh), Some(wm)) => pa_warp_into(desc, shape, mesh, wm, out),
        _ => patch_extract_into(desc, shape, config.patch, out),
    }
}

/// Scale bringing `shape` to the size of `reference`.
pub(crate) fn normalizing_scale(shape: &Shape, reference: &Shape) -> Result<f64> {
    Ok(align_pair(shape, reference)?.scale)
}

pub(crate) fn place_reference(mean: &Shape) -> Shape {
    let (x0, y0, _, _) = mean.bounds();
    mean.translated(FRAME_MARGIN - x0, FRAME_MARGIN - y0)
}

/// Trains with the GPA mean of all shapes as the normalization reference.
pub fn train_aam(images: &[RgbImage], shapes: &[Shape], config: &AamConfig) -> Result<Aam> {
    let part = part_shapes(shapes, config)?;
    let reference = gpa(&part)?.mean;
    train_inner(images, part, &reference, config)
}

/// Trains with an explicit normalization reference (for example the mean shape of the
/// first training video). `reference` must have the part's landmark count.
pub fn train_aam_with_reference(images: &[RgbImage], shapes: &[Shape], reference: &Shape, config: &AamConfig) -> Result<Aam> {
    let part = part_shapes(shapes, config)?;
    train_inner(images, part, reference, config)
}

/// Restricts training shapes to the configured part. Shapes that already have the
/// part's landmark count are taken as-is.
pub fn part_shapes(shapes: &[Shape], config: &AamConfig) -> Result<Vec<Shape>> {
    let Some(first) = shapes.first() else {
        return Err(Error::invalid("no training shapes"));
    };
    let n = first.n_points();
    if let Some(bad) = shapes.iter().find(|s| s.n_points() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: bad.n_points(),
        });
    }
    if config.part == super::config::Part::Face || n != crate::landmarks::markup::N_POINTS {
        if config.part != super::config::Part::Face {
            // already a subset: check the count
            let want = config.part.indices(crate::landmarks::markup::N_POINTS)?.len();
            if n != want {
                return Err(Error::DimensionMismatch { expected: want, actual: n });
            }
        }
        return Ok(shapes.to_vec());
    }
    let idx = config.part.indices(n)?;
    shapes.iter().map(|s| s.subset(&idx)).collect()
}

fn train_inner(images: &[RgbImage], shapes: Vec<Shape>, reference: &Shape, config: &AamConfig) -> Result<Aam> {
    config.validate()?;
    if images.len() != shapes.len() {
        return Err(Error::DimensionMismatch {
            expected: images.len(),
            actual: shapes.len(),
        });
    }
    if shapes.len() < 2 {
        return Err(Error::invalid(format!("AAM training needs at least 2 samples, got {}", shapes.len())));
    }
    if reference.n_points() != shapes[0].n_points() {
        return Err(Error::DimensionMismatch {
            expected: shapes[0].n_points(),
            actual: reference.n_points(),
        });
    }
    let diag = reference.bbox_diagonal();
    if !(diag > 0.0) {
        return Err(Error::Degenerate("reference shape has zero extent".into()));
    }
    let reference = reference.centered().scaled(config.diagonal / diag);

    let factors: Vec<f64> = shapes.iter().map(|s| normalizing_scale(s, &reference)).collect::<Result<_>>()?;
    let normalized: Vec<Shape> = shapes.iter().zip(&factors).map(|(s, &f)| s.rescaled_for_image(f)).collect();
    let shape_model = LinearShapeModel::train(&normalized, config.n_shape - 4)?;

    let mesh = match config.warp {
        WarpKind::Holistic => Some(delaunay(&place_reference(&shape_model.mean))?),
        WarpKind::Patch => None,
    };

    let mut levels = Vec::with_capacity(config.scales.len());
    for &scale in &config.scales {
        let level_shapes = shape_model.scaled(scale);
        let placed = place_reference(&level_shapes.mean);
        let warpmap = match &mesh {
            Some(m) => Some(WarpMap::build(&placed, m)?),
            None => None,
        };
        let stub = AamLevel {
            scale,
            shape_model: level_shapes,
            reference: placed,
            warpmap,
            appearance: AppearanceModel {
                mean: vec![],
                components: DMatrix::zeros(0, 0),
                eigenvalues: vec![],
                total_variance: 0.0,
                kept_variance_ratio: 0.0,
            },
            cache: FitCache {
                basis: DMatrix::zeros(0, 0),
                update: DMatrix::zeros(0, 0),
            },
        };
        let dim = appearance_dim(config, stub.reference.n_points(), stub.warpmap.as_ref());
        let vectors: Vec<Vec<f64>> = images
            .par_iter()
            .zip(shapes.par_iter())
            .zip(factors.par_iter())
            .map(|((img, s), &f)| {
                let (limg, kx, ky) = level_image(img, f * scale)?;
                let desc = descriptor_image(config, &limg);
                let ls = rescale_shape(s, kx, ky);
                let mut v = vec![0.0; dim];
                sample_appearance(config, &stub, mesh.as_ref(), &desc, &ls, &mut v);
                Ok(v)
            })
            .collect::<Result<_>>()?;
        let pca = pca_fit(&vectors, config.n_appearance, 1.0)?;
        if pca.degenerate || pca.n_components() == 0 {
            return Err(Error::Degenerate(format!(
                "appearance at scale {scale} has no variance across {} training frames",
                vectors.len()
            )));
        }
        drop(vectors);
        let mut level = stub;
        level.appearance = AppearanceModel {
            mean: pca.mean,
            components: pca.components,
            eigenvalues: pca.eigenvalues,
            total_variance: pca.total_variance,
            kept_variance_ratio: pca.kept_variance_ratio,
        };
        level.cache = build_cache(config, &level, mesh.as_ref())?;
        levels.push(level);
    }
    let mut aam = Aam {
        config: config.clone(),
        reference,
        mesh,
        levels,
        id: 0,
    };
    aam.id = super::io::fingerprint(&aam);
    Ok(aam)
}

/// Gradient of one channel of a sampled template by central differences, one-sided
/// where a neighbour is missing.
fn gradient(center: f64, next: Option<f64>, prev: Option<f64>) -> f64 {
    match (next, prev) {
        (Some(a), Some(b)) => 0.5 * (a - b),
        (Some(a), None) => a - center,
        (None, Some(b)) => center - b,
        (None, None) => 0.0,
    }
}

/// Template gradients `(gx, gy)`, each `D` long in the appearance layout.
fn template_gradients(config: &AamConfig, level: &AamLevel) -> (Vec<f64>, Vec<f64>) {
    let ch = config.channels();
    let mean = &level.appearance.mean;
    let mut gx = vec![0.0; mean.len()];
    let mut gy = vec![0.0; mean.len()];
    match (config.warp, &level.warpmap) {
        (WarpKind::Holistic, Some(wm)) => {
            let at = |x: i64, y: i64, c: usize| -> Option<f64> {
                if x < 0 || y < 0 || x as usize >= wm.width || y as usize >= wm.height {
                    return None;
                }
                let idx = wm.index[y as usize * wm.width + x as usize];
                (idx != usize::MAX).then(|| mean[idx * ch + c])
            };
            for (j, px) in wm.pixels.iter().enumerate() {
                let (x, y) = (px.x as i64, px.y as i64);
                for c in 0..ch {
                    let v = mean[j * ch + c];
                    gx[j * ch + c] = gradient(v, at(x + 1, y, c), at(x - 1, y, c));
                    gy[j * ch + c] = gradient(v, at(x, y + 1, c), at(x, y - 1, c));
                }
            }
        }
        _ => {
            let p = config.patch as i64;
            let n = level.reference.n_points();
            for l in 0..n {
                let base = l * config.patch * config.patch;
                let at = |r: i64, col: i64, c: usize| -> Option<f64> {
                    (r >= 0 && r < p && col >= 0 && col < p).then(|| mean[(base + (r * p + col) as usize) * ch + c])
                };
                for r in 0..p {
                    for col in 0..p {
                        for c in 0..ch {
                            let i = (base + (r * p + col) as usize) * ch + c;
                            gx[i] = gradient(mean[i], at(r, col + 1, c), at(r, col - 1, c));
                            gy[i] = gradient(mean[i], at(r + 1, col, c), at(r - 1, col, c));
                        }
                    }
                }
            }
        }
    }
    (gx, gy)
}

pub(crate) fn build_cache(config: &AamConfig, level: &AamLevel, mesh: Option<&TriMesh>) -> Result<FitCache> {
    let basis = level.shape_model.full_basis();
    let np = basis.ncols();
    let ch = config.channels();
    let dim = level.appearance.dim();
    let (gx, gy) = template_gradients(config, level);

    // steepest-descent images, D x P
    let mut sd = DMatrix::<f64>::zeros(dim, np);
    let mut jx = vec![0.0; np];
    let mut jy = vec![0.0; np];
    let n_pix = dim / ch;
    for j in 0..n_pix {
        jx.iter_mut().for_each(|v| *v = 0.0);
        jy.iter_mut().for_each(|v| *v = 0.0);
        match (config.warp, &level.warpmap, mesh) {
            (WarpKind::Holistic, Some(wm), Some(mesh)) => {
                let px = wm.pixels[j];
                let t = mesh.triangles[px.triangle];
                for k in 0..3 {
                    for q in 0..np {
                        jx[q] += px.bary[k] * basis[(2 * t[k], q)];
                        jy[q] += px.bary[k] * basis[(2 * t[k] + 1, q)];
                    }
                }
            }
            _ => {
                let l = j / (config.patch * config.patch);
                for q in 0..np {
                    jx[q] = basis[(2 * l, q)];
                    jy[q] = basis[(2 * l + 1, q)];
                }
            }
        }
        for c in 0..ch {
            let r = j * ch + c;
            for q in 0..np {
                sd[(r, q)] = gx[r] * jx[q] + gy[r] * jy[q];
            }
        }
    }
    let a = &level.appearance.components;
    let proj = a * a.tr_mul(&sd);
    sd -= proj;
    let h = sd.tr_mul(&sd);
    let chol = h
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("fitting Hessian at scale {} is not positive definite", level.scale)))?;
    let update = chol.solve(&sd.transpose());

    Ok(FitCache { basis, update })
}
