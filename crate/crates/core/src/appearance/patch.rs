//! Fixed-size windows sampled around landmarks.

use crate::error::{Error, Result};
use crate::image::Raster;
use crate::shape::Shape;

pub const DEFAULT_PATCH: usize = 17;

/// Samples a `patch x patch` window centered on every landmark.
/// Layout: landmark-major, then row-major within the patch, channel-minor.
pub fn patch_extract(img: &Raster, shape: &Shape, patch: usize) -> Result<Vec<f64>> {
    if patch % 2 == 0 {
        return Err(Error::invalid(format!("patch size must be odd, got {patch}")));
    }
    let mut out = vec![0.0; shape.n_points() * patch * patch * img.channels()];
    patch_extract_into(img, shape, patch, &mut out);
    Ok(out)
}

pub(crate) fn patch_extract_into(img: &Raster, shape: &Shape, patch: usize, out: &mut [f64]) {
    let ch = img.channels();
    let (w, h) = (img.width(), img.height());
    let half = (patch / 2) as f64;
    let step = patch * patch * ch;
    for ((cx, cy), dst) in shape.points().zip(out.chunks_exact_mut(step)) {
        let (x0, y0) = ((cx - half).floor(), (cy - half).floor());
        let inside = x0 >= 0.0 && y0 >= 0.0 && x0 + patch as f64 + 1.0 < w as f64 && y0 + patch as f64 + 1.0 < h as f64;
        if !inside {
            let mut i = 0;
            for r in 0..patch {
                let y = cy + r as f64 - half;
                for c in 0..patch {
                    img.sample_bilinear(cx + c as f64 - half, y, &mut dst[i..i + ch]);
                    i += ch;
                }
            }
            continue;
        }
        let (fx, fy) = (cx - half - x0, cy - half - y0);
        let wts = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let data = img.data();
        let row = w * ch;
        let (x0, y0) = (x0 as usize, y0 as usize);
        let mut i = 0;
        for r in 0..patch {
            let base = ((y0 + r) * w + x0) * ch;
            for k in 0..patch * ch {
                let a = base + k;
                dst[i] = wts[0] * data[a] + wts[1] * data[a + ch] + wts[2] * data[a + row] + wts[3] * data[a + row + ch];
                i += 1;
            }
        }
    }
}
