//! Piecewise-affine warping from an image into a reference frame.

use crate::appearance::mesh::{orient, TriMesh};
use crate::error::{ensure_dim, Error, Result};
use crate::image::Raster;
use crate::shape::Shape;

/// A reference-frame pixel covered by the mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskPixel {
    pub x: usize,
    pub y: usize,
    pub triangle: usize,
    pub bary: [f64; 3],
}

/// Reference-frame sampling structure: every grid pixel inside the mesh, row-major,
/// with its triangle and barycentric coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<MaskPixel>,
    /// `height x width` lookup into `pixels`, `usize::MAX` outside the mask.
    pub index: Vec<usize>,
}

impl WarpMap {
    /// Builds the mask for `reference` (already placed in non-negative coordinates).
    pub fn build(reference: &Shape, mesh: &TriMesh) -> Result<WarpMap> {
        mesh.validate(reference)?;
        let (_, _, x1, y1) = reference.bounds();
        let width = x1.ceil().max(1.0) as usize + 1;
        let height = y1.ceil().max(1.0) as usize + 1;
        let mut owner: Vec<Option<(usize, [f64; 3])>> = vec![None; width * height];
        for (ti, t) in mesh.triangles.iter().enumerate() {
            let (a, b, c) = (reference.point(t[0]), reference.point(t[1]), reference.point(t[2]));
            let area = orient(a, b, c);
            let xs = [a.0, b.0, c.0];
            let ys = [a.1, b.1, c.1];
            let lo_x = xs.iter().cloned().fold(f64::MAX, f64::min).floor().max(0.0) as usize;
            let hi_x = (xs.iter().cloned().fold(f64::MIN, f64::max).ceil() as usize).min(width - 1);
            let lo_y = ys.iter().cloned().fold(f64::MAX, f64::min).floor().max(0.0) as usize;
            let hi_y = (ys.iter().cloned().fold(f64::MIN, f64::max).ceil() as usize).min(height - 1);
            for y in lo_y..=hi_y {
                for x in lo_x..=hi_x {
                    let p = (x as f64, y as f64);
                    let l0 = orient(b, c, p) / area;
                    let l1 = orient(c, a, p) / area;
                    let l2 = 1.0 - l0 - l1;
                    if l0 >= -1e-9 && l1 >= -1e-9 && l2 >= -1e-9 && owner[y * width + x].is_none() {
                        let mut l = [l0.clamp(0.0, 1.0), l1.clamp(0.0, 1.0), l2.clamp(0.0, 1.0)];
                        let s = l[0] + l[1] + l[2];
                        l.iter_mut().for_each(|v| *v /= s);
                        owner[y * width + x] = Some((ti, l));
                    }
                }
            }
        }
        let mut pixels = Vec::new();
        let mut index = vec![usize::MAX; width * height];
        for y in 0..height {
            for x in 0..width {
                if let Some((triangle, bary)) = owner[y * width + x] {
                    index[y * width + x] = pixels.len();
                    pixels.push(MaskPixel { x, y, triangle, bary });
                }
            }
        }
        if pixels.is_empty() {
            return Err(Error::Degenerate("reference mesh covers no pixels".into()));
        }
        Ok(WarpMap {
            width,
            height,
            pixels,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Source-image position of every mask pixel for landmarks `src`.
    pub fn source_points(&self, src: &Shape, mesh: &TriMesh) -> Vec<(f64, f64)> {
        self.pixels
            .iter()
            .map(|px| {
                let t = mesh.triangles[px.triangle];
                let mut x = 0.0;
                let mut y = 0.0;
                for k in 0..3 {
                    let (vx, vy) = src.point(t[k]);
                    x += px.bary[k] * vx;
                    y += px.bary[k] * vy;
                }
                (x, y)
            })
            .collect()
    }
}

/// Warps `img` from landmarks `src` into the reference frame described by `warpmap`.
/// Output is pixel-major, channel-minor.
pub fn pa_warp(img: &Raster, src: &Shape, reference: &Shape, mesh: &TriMesh, warpmap: &WarpMap) -> Result<Vec<f64>> {
    ensure_dim(reference.n_points(), src.n_points())?;
    let mut out = vec![0.0; warpmap.len() * img.channels()];
    pa_warp_into(img, src, mesh, warpmap, &mut out);
    Ok(out)
}

pub(crate) fn pa_warp_into(img: &Raster, src: &Shape, mesh: &TriMesh, warpmap: &WarpMap, out: &mut [f64]) {
    let ch = img.channels();
    for (i, px) in warpmap.pixels.iter().enumerate() {
        let t = mesh.triangles[px.triangle];
        let (a, b, c) = (src.point(t[0]), src.point(t[1]), src.point(t[2]));
        let x = px.bary[0] * a.0 + px.bary[1] * b.0 + px.bary[2] * c.0;
        let y = px.bary[0] * a.1 + px.bary[1] * b.1 + px.bary[2] * c.1;
        img.sample_bilinear(x, y, &mut out[i * ch..(i + 1) * ch]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::appearance::mesh::delaunay;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> Shape {
        Shape::new(vec![
            2.0, 2.0, 30.0, 3.0, 33.0, 25.0, 15.0, 31.0, 1.5, 20.0, 16.0, 14.0, 24.0, 9.0,
        ])
        .unwrap()
    }

    fn ramp(w: usize, h: usize) -> Raster {
        let data = (0..h)
            .flat_map(|y| (0..w).map(move |x| (0.3 + 0.004 * x as f64 + 0.007 * y as f64).min(1.0)))
            .collect();
        Raster::new(w, h, 1, data).unwrap()
    }

    #[test]
    fn identity_warp_samples_mask_pixels() {
        let r = reference();
        let mesh = delaunay(&r).unwrap();
        let wm = WarpMap::build(&r, &mesh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Raster::new(40, 40, 2, (0..3200).map(|_| rng.random()).collect()).unwrap();
        let out = pa_warp(&img, &r, &r, &mesh, &wm).unwrap();
        for (i, px) in wm.pixels.iter().enumerate() {
            for c in 0..2 {
                assert!((out[i * 2 + c] - img.get(px.x, px.y, c)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn barycentric_reconstruction() {
        let r = reference();
        let mesh = delaunay(&r).unwrap();
        let wm = WarpMap::build(&r, &mesh).unwrap();
        for (px, (x, y)) in wm.pixels.iter().zip(wm.source_points(&r, &mesh)) {
            assert!((x - px.x as f64).abs() < 1e-9 && (y - px.y as f64).abs() < 1e-9);
            assert!(px.bary.iter().all(|b| (0.0..=1.0).contains(b)));
            assert!((px.bary.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn translated_source_samples_shifted_image() {
        let r = reference();
        let mesh = delaunay(&r).unwrap();
        let wm = WarpMap::build(&r, &mesh).unwrap();
        let img = ramp(60, 60);
        let src = r.translated(3.0, 5.0);
        let out = pa_warp(&img, &src, &r, &mesh, &wm).unwrap();
        for (i, px) in wm.pixels.iter().enumerate() {
            let expected = 0.3 + 0.004 * (px.x + 3) as f64 + 0.007 * (px.y + 5) as f64;
            assert!((out[i] - expected).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_image_and_mismatch() {
        let r = reference();
        let mesh = delaunay(&r).unwrap();
        let wm = WarpMap::build(&r, &mesh).unwrap();
        let img = Raster::filled(50, 50, 3, 0.25);
        let out = pa_warp(&img, &r.translated(1.3, 0.2), &r, &mesh, &wm).unwrap();
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-12));
        let short = Shape::new(vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(pa_warp(&img, &short, &r, &mesh, &wm).is_err());
    }
}
