//! Project-out inverse-compositional Gauss-Newton fitting with a closed-form
//! appearance solve at every iteration.
//!
//! Per iteration, with `e = I(W(p)) - mean`:
//! `c = A^T e`, cost `|e|^2 - |c|^2`, `dp = H^-1 SD^T e` where `SD` already has the
//! appearance subspace projected out. Patch models compose to first order (`s - B dp`);
//! holistic models invert the increment through the piecewise-affine warp. The result
//! is projected back onto the shape model. No damping.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{Part, WarpKind};
use super::model::{descriptor_image, level_image, normalizing_scale, rescale_shape, sample_appearance, unscale_shape, Aam};
use crate::appearance::mesh::orient;
use crate::appearance::TriMesh;
use crate::error::{ensure_dim, Error, Result};
use crate::image::{Raster, RgbImage};
use crate::shape::Shape;

/// Relative cost change below which a fit counts as settled.
pub const CONVERGENCE_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Final landmarks in image coordinates.
    pub shape: Shape,
    /// Similarity parameters at the finest scale.
    pub p_sim: Vec<f64>,
    /// Non-rigid shape parameters at the finest scale.
    pub p: Vec<f64>,
    /// Appearance parameters of the final shape.
    pub c: Vec<f64>,
    /// Per scale, coarse to fine: the cost before each iteration followed by the cost
    /// of the shape leaving the scale.
    pub costs: Vec<Vec<f64>>,
    pub converged: bool,
    pub model_id: u64,
}

impl FitResult {
    /// Iterations executed at each scale.
    pub fn iterations(&self) -> Vec<usize> {
        self.costs.iter().map(|c| c.len().saturating_sub(1)).collect()
    }

    pub fn final_cost(&self) -> f64 {
        self.costs.last().and_then(|c| c.last()).copied().unwrap_or(f64::NAN)
    }
}

/// Inverse composition through the piecewise-affine warp: each reference landmark moved
/// by `-delta` is located in the reference mesh (the triangle where its smallest
/// barycentric coordinate is largest, so points just outside the hull extrapolate from
/// the nearest triangle) and mapped through the same triangle of `current`.
fn compose_piecewise(reference: &Shape, mesh: &TriMesh, current: &Shape, delta: &[f64]) -> Result<Shape> {
    let mut coords = Vec::with_capacity(delta.len());
    for i in 0..reference.n_points() {
        let r = reference.point(i);
        let q = (r.0 - delta[2 * i], r.1 - delta[2 * i + 1]);
        let mut best = (f64::NEG_INFINITY, 0, [0.0; 3]);
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let (a, b, c) = (reference.point(t[0]), reference.point(t[1]), reference.point(t[2]));
            let area = orient(a, b, c);
            let l0 = orient(b, c, q) / area;
            let l1 = orient(c, a, q) / area;
            let l = [l0, l1, 1.0 - l0 - l1];
            let m = l[0].min(l[1]).min(l[2]);
            if m > best.0 {
                best = (m, ti, l);
            }
        }
        let t = mesh.triangles[best.1];
        let (mut x, mut y) = (0.0, 0.0);
        for k in 0..3 {
            let v = current.point(t[k]);
            x += best.2[k] * v.0;
            y += best.2[k] * v.1;
        }
        coords.push(x);
        coords.push(y);
    }
    Shape::new(coords)
}

/// Frames fitted together; each iteration's products become matrix-matrix products.
pub const FIT_BATCH: usize = 16;

/// Fits `aam` to `image` coarse to fine, starting from `init` (image coordinates).
pub fn fit_wic(aam: &Aam, image: &RgbImage, init: &Shape) -> Result<FitResult> {
    fit_with_iterations(aam, image, init, &aam.config.iterations)
}

pub fn fit_with_iterations(aam: &Aam, image: &RgbImage, init: &Shape, iterations: &[usize]) -> Result<FitResult> {
    fit_batch_with_iterations(aam, &[image], std::slice::from_ref(init), iterations)?
        .pop()
        .expect("one result per frame")
}

/// Fits several frames in lockstep. The outer error covers invalid arguments; each
/// frame carries its own outcome.
pub fn fit_batch(aam: &Aam, images: &[&RgbImage], inits: &[Shape]) -> Result<Vec<Result<FitResult>>> {
    fit_batch_with_iterations(aam, images, inits, &aam.config.iterations)
}

struct Track {
    f: f64,
    /// Image coordinates between scales, level coordinates within one.
    shape: Shape,
    params: Vec<f64>,
    c: Vec<f64>,
    costs: Vec<Vec<f64>>,
    failed: Option<Error>,
    desc: Option<Raster>,
    kx: f64,
    ky: f64,
}

impl Track {
    fn start(aam: &Aam, init: &Shape) -> Self {
        let mut t = Track {
            f: 1.0,
            shape: init.clone(),
            params: vec![],
            c: vec![],
            costs: Vec::with_capacity(aam.levels.len()),
            failed: None,
            desc: None,
            kx: 1.0,
            ky: 1.0,
        };
        if init.n_points() != aam.n_points() {
            t.failed = Some(Error::DimensionMismatch {
                expected: aam.n_points(),
                actual: init.n_points(),
            });
            return t;
        }
        match normalizing_scale(init, &aam.reference) {
            Ok(f) => t.f = f,
            Err(e) => t.failed = Some(e),
        }
        t
    }

    fn finish(self, model_id: u64) -> Result<FitResult> {
        if let Some(e) = self.failed {
            return Err(e);
        }
        let trace = self.costs.last().expect("at least one level");
        let first = trace[0];
        let end = *trace.last().unwrap();
        let prev = if trace.len() > 1 { trace[trace.len() - 2] } else { first };
        let settled = (prev - end).abs() <= CONVERGENCE_TOL * prev.abs().max(f64::MIN_POSITIVE);
        Ok(FitResult {
            shape: self.shape,
            p_sim: self.params[..4].to_vec(),
            p: self.params[4..].to_vec(),
            c: self.c,
            converged: end <= first && settled,
            costs: self.costs,
            model_id,
        })
    }
}

pub fn fit_batch_with_iterations(aam: &Aam, images: &[&RgbImage], inits: &[Shape], iterations: &[usize]) -> Result<Vec<Result<FitResult>>> {
    ensure_dim(images.len(), inits.len())?;
    ensure_dim(aam.levels.len(), iterations.len())?;
    let mut tracks: Vec<Track> = inits.iter().map(|init| Track::start(aam, init)).collect();

    for (level, &n_iter) in aam.levels.iter().zip(iterations) {
        for (t, img) in tracks.iter_mut().zip(images) {
            if t.failed.is_some() {
                continue;
            }
            match level_image(img, t.f * level.scale) {
                Ok((limg, kx, ky)) => {
                    t.desc = Some(descriptor_image(&aam.config, &limg));
                    (t.kx, t.ky) = (kx, ky);
                    t.params = level.project(&rescale_shape(&t.shape, kx, ky));
                    t.shape = level.reconstruct(&t.params);
                    t.costs.push(Vec::with_capacity(n_iter + 1));
                }
                Err(e) => t.failed = Some(e),
            }
        }
        let dim = level.appearance.dim();
        for it in 0..=n_iter {
            let live: Vec<usize> = (0..tracks.len()).filter(|&k| tracks[k].failed.is_none()).collect();
            if live.is_empty() {
                break;
            }
            let mut e = DMatrix::<f64>::zeros(dim, live.len());
            for (col, &k) in live.iter().enumerate() {
                let t = &tracks[k];
                let buf = &mut e.as_mut_slice()[col * dim..(col + 1) * dim];
                sample_appearance(&aam.config, level, aam.mesh.as_ref(), t.desc.as_ref().unwrap(), &t.shape, buf);
                for (v, m) in buf.iter_mut().zip(level.appearance.mean.iter()) {
                    *v -= m;
                }
            }
            let c = (e.transpose() * &level.appearance.components).transpose();
            let last = it == n_iter;
            let dp = (!last).then(|| &level.cache.update * &e);
            for (col, &k) in live.iter().enumerate() {
                let t = &mut tracks[k];
                let cost = e.column(col).norm_squared() - c.column(col).norm_squared();
                if !cost.is_finite() {
                    t.failed = Some(Error::Numerical(format!(
                        "fitting cost became non-finite at scale {} iteration {it}",
                        level.scale
                    )));
                    continue;
                }
                t.costs.last_mut().unwrap().push(cost);
                let Some(dp) = dp.as_ref() else {
                    t.c = c.column(col).iter().copied().collect();
                    continue;
                };
                let delta = &level.cache.basis * dp.column(col);
                let composed = match (aam.config.warp, aam.mesh.as_ref()) {
                    (WarpKind::Holistic, Some(mesh)) => compose_piecewise(&level.reference, mesh, &t.shape, delta.as_slice()),
                    _ => Shape::new(t.shape.coords().iter().zip(delta.iter()).map(|(s, d)| s - d).collect()),
                };
                match composed {
                    Ok(s) => {
                        t.params = level.project(&s);
                        t.shape = level.reconstruct(&t.params);
                    }
                    Err(err) => t.failed = Some(err),
                }
            }
        }
        for t in tracks.iter_mut().filter(|t| t.failed.is_none()) {
            t.shape = unscale_shape(&t.shape, t.kx, t.ky);
            t.desc = None;
        }
    }
    let model_id = aam.id();
    Ok(tracks.into_iter().map(|t| t.finish(model_id)).collect())
}

/// Fits many frames in fixed batches of [`FIT_BATCH`] taken in input order, with the
/// batches spread over the rayon pool. Results do not depend on the number of workers.
pub fn fit_frames(aam: &Aam, images: &[&RgbImage], inits: &[Shape]) -> Result<Vec<Result<FitResult>>> {
    ensure_dim(images.len(), inits.len())?;
    let batches: Vec<Vec<Result<FitResult>>> = images
        .par_chunks(FIT_BATCH)
        .zip(inits.par_chunks(FIT_BATCH))
        .map(|(imgs, ins)| fit_batch(aam, imgs, ins))
        .collect::<Result<_>>()?;
    Ok(batches.into_iter().flatten().collect())
}

/// Face fit followed by a part fit initialized from the face result.
pub fn fit_cascade(face: &Aam, part: &Aam, image: &RgbImage, init: &Shape) -> Result<(FitResult, FitResult)> {
    let face_fit = fit_wic(face, image, init)?;
    let part_init = init_part_from_face(&face_fit, part.config.part)?;
    let part_fit = fit_wic(part, image, &part_init)?;
    Ok((face_fit, part_fit))
}

/// Axis-aligned box `[x0, x1] x [y0, y1]` in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub fn of_shape(s: &Shape) -> BBox {
        let (x0, y0, x1, y1) = s.bounds();
        BBox { x0, y0, x1, y1 }
    }

    pub fn from_rect(r: &crate::image::Rect) -> BBox {
        BBox {
            x0: r.x as f64,
            y0: r.y as f64,
            x1: (r.x + r.w as i64 - 1) as f64,
            y1: (r.y + r.h as i64 - 1) as f64,
        }
    }

    pub fn diagonal(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }
}

/// Places `mean` in `bbox`: matched box centers, scale from the diagonals.
pub fn init_from_bbox(mean: &Shape, bbox: &BBox) -> Result<Shape> {
    if !(bbox.x1 > bbox.x0 && bbox.y1 > bbox.y0) {
        return Err(Error::invalid(format!("empty box {bbox:?}")));
    }
    let own = BBox::of_shape(mean);
    let d = own.diagonal();
    if !(d > 0.0) {
        return Err(Error::Degenerate("mean shape has zero extent".into()));
    }
    let k = bbox.diagonal() / d;
    let (cx, cy) = (0.5 * (own.x0 + own.x1), 0.5 * (own.y0 + own.y1));
    let (tx, ty) = (0.5 * (bbox.x0 + bbox.x1), 0.5 * (bbox.y0 + bbox.y1));
    let coords = mean
        .coords()
        .chunks_exact(2)
        .flat_map(|p| [tx + k * (p[0] - cx), ty + k * (p[1] - cy)])
        .collect();
    Shape::new(coords)
}

/// The part's landmark subset of a face fit.
pub fn init_part_from_face(face_fit: &FitResult, part: Part) -> Result<Shape> {
    let idx = part.indices(face_fit.shape.n_points())?;
    face_fit.shape.subset(&idx)
}
