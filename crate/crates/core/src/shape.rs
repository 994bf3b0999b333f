//! Landmark shapes, similarity alignment, Generalized Procrustes Analysis and the linear
//! point-distribution model.

use nalgebra::DMatrix;

use crate::error::{ensure_dim, Error, Result};
use crate::pca::pca_fit;

/// `N` landmarks stored as `[x1, y1, ..., xN, yN]` in pixel-index coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    coords: Vec<f64>,
}

impl Shape {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "shape needs an even, non-zero coordinate count, got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("shape has non-finite coordinates"));
        }
        Ok(Self { coords })
    }

    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        Self::new(points.iter().flat_map(|&(x, y)| [x, y]).collect())
    }

    pub fn n_points(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.coords[2 * i], self.coords[2 * i + 1])
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.coords.chunks_exact(2).map(|p| (p[0], p[1]))
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.n_points() as f64;
        let (sx, sy) = self.points().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        (sx / n, sy / n)
    }

    pub fn centered(&self) -> Shape {
        let (cx, cy) = self.centroid();
        self.translated(-cx, -cy)
    }

    /// Frobenius norm of the centered coordinates.
    pub fn centered_norm(&self) -> f64 {
        let (cx, cy) = self.centroid();
        self.points()
            .map(|(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Shape {
        Shape {
            coords: self
                .coords
                .chunks_exact(2)
                .flat_map(|p| [p[0] + dx, p[1] + dy])
                .collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Shape {
        Shape {
            coords: self.coords.iter().map(|v| v * k).collect(),
        }
    }

    /// Maps every point through a uniform image rescale by `k` (see [`crate::image::rescale_coord`]).
    pub fn rescaled_for_image(&self, k: f64) -> Shape {
        Shape {
            coords: self.coords.iter().map(|&v| crate::image::rescale_coord(v, k)).collect(),
        }
    }

    /// `(min_x, min_y, max_x, max_y)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.points().fold(
            (f64::MAX, f64::MAX, f64::MIN, f64::MIN),
            |(a, b, c, d), (x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
        )
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (x0, y0, x1, y1) = self.bounds();
        ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Shape> {
        let n = self.n_points();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::invalid(format!("landmark index {bad} out of range for {n} points")));
        }
        Shape::new(indices.iter().flat_map(|&i| [self.coords[2 * i], self.coords[2 * i + 1]]).collect())
    }

    pub fn sq_distance(&self, other: &Shape) -> f64 {
        self.coords.iter().zip(&other.coords).map(|(a, b)| (a - b) * (a - b)).sum()
    }
}

/// `x -> scale * R(rotation) * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            translation: (0.0, 0.0),
        }
    }

    pub fn new(scale: f64, rotation: f64, translation: (f64, f64)) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::invalid(format!("similarity scale must be positive, got {scale}")));
        }
        Ok(Self {
            scale,
            rotation,
            translation,
        })
    }

    #[inline]
    pub fn apply_point(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (
            self.scale * (c * x - s * y) + self.translation.0,
            self.scale * (s * x + c * y) + self.translation.1,
        )
    }

    /// Applies only the linear (scale-rotation) part.
    #[inline]
    pub fn apply_vector(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (self.scale * (c * x - s * y), self.scale * (s * x + c * y))
    }

    pub fn apply(&self, shape: &Shape) -> Shape {
        Shape {
            coords: shape
                .points()
                .flat_map(|(x, y)| {
                    let (u, v) = self.apply_point(x, y);
                    [u, v]
                })
                .collect(),
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv = SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: -self.rotation,
            translation: (0.0, 0.0),
        };
        let (tx, ty) = inv.apply_vector(self.translation.0, self.translation.1);
        SimilarityTransform {
            translation: (-tx, -ty),
            ..inv
        }
    }
}

/// Least-squares similarity taking `src` onto `dst`.
pub fn align_pair(src: &Shape, dst: &Shape) -> Result<SimilarityTransform> {
    ensure_dim(src.coords.len(), dst.coords.len())?;
    let (sx, sy) = src.centroid();
    let (dx, dy) = dst.centroid();
    let mut norm = 0.0;
    let mut a = 0.0;
    let mut b = 0.0;
    for ((x, y), (u, v)) in src.points().zip(dst.points()) {
        let (x, y, u, v) = (x - sx, y - sy, u - dx, v - dy);
        norm += x * x + y * y;
        a += x * u + y * v;
        b += x * v - y * u;
    }
    if norm < 1e-20 {
        return Err(Error::Degenerate("source shape has zero centered norm".into()));
    }
    a /= norm;
    b /= norm;
    let scale = (a * a + b * b).sqrt();
    if scale < 1e-300 {
        return Err(Error::Degenerate("target shape has zero centered norm".into()));
    }
    let rotation = b.atan2(a);
    let partial = SimilarityTransform {
        scale,
        rotation,
        translation: (0.0, 0.0),
    };
    let (rx, ry) = partial.apply_vector(sx, sy);
    Ok(SimilarityTransform {
        translation: (dx - rx, dy - ry),
        ..partial
    })
}

pub const GPA_TOLERANCE: f64 = 1e-7;
pub const GPA_MAX_ITERS: usize = 100;

#[derive(Clone, Debug)]
pub struct GpaResult {
    /// Centered, unit Frobenius norm.
    pub mean: Shape,
    /// Inputs aligned to `mean`.
    pub aligned: Vec<Shape>,
    /// `sum ||aligned_i - mean||^2` at the start of each iteration, plus the final value.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Generalized Procrustes Analysis.
///
/// Alternates aligning every shape to a unit-norm mean and replacing the mean with the
/// normalized average of the aligned set until the mean moves less than [`GPA_TOLERANCE`].
/// Degenerate shapes (zero centered norm) are skipped; at least one must be usable.
pub fn gpa(shapes: &[Shape]) -> Result<GpaResult> {
    if shapes.len() < 2 {
        return Err(Error::invalid(format!("GPA needs at least 2 shapes, got {}", shapes.len())));
    }
    let n = shapes[0].coords.len();
    for s in shapes {
        ensure_dim(n, s.coords.len())?;
    }
    let seed = shapes
        .iter()
        .find(|s| s.centered_norm() > 1e-10)
        .ok_or_else(|| Error::Degenerate("every shape collapses to a point".into()))?;
    let c = seed.centered();
    let mut mean = c.scaled(1.0 / c.centered_norm());

    let align_all = |mean: &Shape| -> Vec<Shape> {
        shapes
            .iter()
            .map(|s| match align_pair(s, mean) {
                Ok(t) => t.apply(s),
                Err(_) => mean.clone(),
            })
            .collect()
    };
    let objective = |aligned: &[Shape], mean: &Shape| aligned.iter().map(|a| a.sq_distance(mean)).sum::<f64>();

    let mut aligned = align_all(&mean);
    let mut residuals = vec![objective(&aligned, &mean)];
    let mut iterations = 0;
    while iterations < GPA_MAX_ITERS {
        iterations += 1;
        let mut avg = vec![0.0; n];
        for a in &aligned {
            for (m, v) in avg.iter_mut().zip(&a.coords) {
                *m += v;
            }
        }
        let avg = Shape { coords: avg }.centered();
        let norm = avg.centered_norm();
        if norm < 1e-20 {
            return Err(Error::Degenerate("GPA mean collapsed".into()));
        }
        let next = avg.scaled(1.0 / norm);
        let moved = next.sq_distance(&mean).sqrt();
        mean = next;
        aligned = align_all(&mean);
        residuals.push(objective(&aligned, &mean));
        if moved < GPA_TOLERANCE {
            break;
        }
    }
    Ok(GpaResult {
        mean,
        aligned,
        residuals,
        iterations,
    })
}

/// `s = mean + Q q + S p` with `[Q | S]` orthonormal. `Q` spans the similarity
/// transforms of the mean (scale-rotation pair, then x and y translation).
#[derive(Clone, Debug)]
pub struct LinearShapeModel {
    pub mean: Shape,
    /// `2N x 4`.
    pub similarity_basis: DMatrix<f64>,
    /// `2N x n`.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub kept_variance_ratio: f64,
}

impl LinearShapeModel {
    /// Builds the model from training shapes. The mean keeps the average size of the
    /// inputs and sits at the origin.
    pub fn train(shapes: &[Shape], max_components: usize) -> Result<Self> {
        let g = gpa(shapes)?;
        let avg_norm = shapes.iter().map(Shape::centered_norm).sum::<f64>() / shapes.len() as f64;
        let target = g.mean.scaled(avg_norm);
        let aligned: Vec<Shape> = shapes
            .iter()
            .map(|s| align_pair(s, &target).map(|t| t.apply(s)).unwrap_or_else(|_| target.clone()))
            .collect();
        let dim = target.coords.len();
        let mut mean = vec![0.0; dim];
        for a in &aligned {
            for (m, v) in mean.iter_mut().zip(&a.coords) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= aligned.len() as f64);
        let mean = Shape { coords: mean }.centered();
        let q = similarity_basis(&mean)?;
        let residuals: Vec<Vec<f64>> = aligned
            .iter()
            .map(|a| {
                let r = DMatrix::from_fn(dim, 1, |i, _| a.coords[i] - mean.coords[i]);
                let proj = &q * (q.transpose() * &r);
                (r - proj).iter().copied().collect()
            })
            .collect();
        let pca = pca_fit(&residuals, max_components, 1.0)?;
        let mut components = pca.components;
        // re-orthogonalize against Q to remove rounding drift
        let proj = &q * (q.transpose() * &components);
        components -= proj;
        for j in 0..components.ncols() {
            let nrm = components.column(j).norm();
            components.column_mut(j).scale_mut(1.0 / nrm);
        }
        Ok(Self {
            mean,
            similarity_basis: q,
            components,
            eigenvalues: pca.eigenvalues,
            kept_variance_ratio: if pca.degenerate { 1.0 } else { pca.kept_variance_ratio },
        })
    }

    pub fn n_points(&self) -> usize {
        self.mean.n_points()
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    /// Total parameter count: 4 similarity + non-rigid components.
    pub fn n_params(&self) -> usize {
        4 + self.n_components()
    }

    /// `[Q | S]` as a single `2N x (4 + n)` matrix.
    pub fn full_basis(&self) -> DMatrix<f64> {
        let dim = self.mean.coords.len();
        let n = self.n_components();
        DMatrix::from_fn(dim, 4 + n, |r, c| {
            if c < 4 {
                self.similarity_basis[(r, c)]
            } else {
                self.components[(r, c - 4)]
            }
        })
    }

    pub fn shape_to_params(&self, shape: &Shape) -> Result<(Vec<f64>, Vec<f64>)> {
        ensure_dim(self.mean.coords.len(), shape.coords.len())?;
        let diff: Vec<f64> = shape.coords.iter().zip(&self.mean.coords).map(|(a, b)| a - b).collect();
        let dot = |m: &DMatrix<f64>, j: usize| m.column(j).iter().zip(&diff).map(|(a, b)| a * b).sum();
        let q = (0..4).map(|j| dot(&self.similarity_basis, j)).collect();
        let p = (0..self.n_components()).map(|j| dot(&self.components, j)).collect();
        Ok((q, p))
    }

    pub fn params_to_shape(&self, q: &[f64], p: &[f64]) -> Result<Shape> {
        ensure_dim(4, q.len())?;
        ensure_dim(self.n_components(), p.len())?;
        let mut coords = self.mean.coords.clone();
        for (j, &w) in q.iter().enumerate() {
            for (c, b) in coords.iter_mut().zip(self.similarity_basis.column(j).iter()) {
                *c += w * b;
            }
        }
        for (j, &w) in p.iter().enumerate() {
            for (c, b) in coords.iter_mut().zip(self.components.column(j).iter()) {
                *c += w * b;
            }
        }
        Ok(Shape { coords })
    }

    /// Stacked `[q, p]` parameter vector.
    pub fn project(&self, shape: &Shape) -> Result<Vec<f64>> {
        let (mut q, p) = self.shape_to_params(shape)?;
        q.extend(p);
        Ok(q)
    }

    pub fn reconstruct(&self, params: &[f64]) -> Result<Shape> {
        ensure_dim(self.n_params(), params.len())?;
        self.params_to_shape(&params[..4], &params[4..])
    }

    /// Same model with every coordinate scaled by `k` (means, and eigenvalues by `k^2`).
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            mean: self.mean.scaled(k),
            similarity_basis: self.similarity_basis.clone(),
            components: self.components.clone(),
            eigenvalues: self.eigenvalues.iter().map(|l| l * k * k).collect(),
            kept_variance_ratio: self.kept_variance_ratio,
        }
    }
}

/// Orthonormal basis of the infinitesimal similarity transforms of a centered shape.
pub fn similarity_basis(mean: &Shape) -> Result<DMatrix<f64>> {
    let c = mean.centered();
    let norm = c.centered_norm();
    if norm < 1e-12 {
        return Err(Error::Degenerate("mean shape has zero extent".into()));
    }
    let n = c.n_points();
    let tn = 1.0 / (n as f64).sqrt();
    Ok(DMatrix::from_fn(2 * n, 4, |r, col| {
        let i = r / 2;
        let is_x = r % 2 == 0;
        let (x, y) = c.point(i);
        match col {
            0 => (if is_x { x } else { y }) / norm,
            1 => (if is_x { -y } else { x }) / norm,
            2 => {
                if is_x {
                    tn
                } else {
                    0.0
                }
            }
            _ => {
                if is_x {
                    0.0
                } else {
                    tn
                }
            }
        }
    }))
}
