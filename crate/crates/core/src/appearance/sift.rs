//! Dense per-pixel orientation descriptors (simplified dense SIFT).

use std::f64::consts::PI;

use crate::image::{GrayImage, Raster};

pub const SIFT_BINS: usize = 8;
pub const SIFT_SIGMA: f64 = 2.5;
pub const SIFT_EPS: f64 = 1e-8;

/// 8-channel descriptor image: gradient magnitude soft-binned by orientation, pooled
/// with a Gaussian window of width [`SIFT_SIGMA`], unit-L2 per pixel (zero when the
/// pooled histogram is below [`SIFT_EPS`]).
///
/// Bin `k` is centered at orientation `(k + 0.5) * pi / 4`, so a purely horizontal
/// gradient splits evenly between bins 7 and 0.
pub fn dense_sift(img: &GrayImage) -> Raster {
    dense_sift_with(img, SIFT_SIGMA)
}

pub fn dense_sift_with(img: &GrayImage, sigma: f64) -> Raster {
    let (w, h) = (img.width(), img.height());
    let mut hist = vec![0.0; w * h * SIFT_BINS];
    let step = PI / 4.0;
    for y in 0..h {
        for x in 0..w {
            let gx = (img.at((x + 1).min(w - 1), y) - img.at(x.saturating_sub(1), y)) / 2.0;
            let gy = (img.at(x, (y + 1).min(h - 1)) - img.at(x, y.saturating_sub(1))) / 2.0;
            let m = (gx * gx + gy * gy).sqrt();
            if m == 0.0 {
                continue;
            }
            let theta = gy.atan2(gx).rem_euclid(2.0 * PI);
            let pos = theta / step - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as i64).rem_euclid(SIFT_BINS as i64) as usize;
            let hi = (lo + 1) % SIFT_BINS;
            let base = (y * w + x) * SIFT_BINS;
            hist[base + lo] += m * (1.0 - frac);
            hist[base + hi] += m * frac;
        }
    }
    let pooled = gaussian_blur(&hist, w, h, SIFT_BINS, sigma);
    let mut out = pooled;
    for px in out.chunks_exact_mut(SIFT_BINS) {
        let norm = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < SIFT_EPS {
            px.iter_mut().for_each(|v| *v = 0.0);
        } else {
            px.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Raster::new(w, h, SIFT_BINS, out).expect("descriptor raster has consistent extent")
}

/// Separable Gaussian blur with clamped borders over an interleaved buffer.
pub fn gaussian_blur(data: &[f64], w: usize, h: usize, ch: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= s);

    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            let dst = (y * w + x) * ch;
            for (k, &kw) in kernel.iter().enumerate() {
                let sx = (x as i64 + k as i64 - radius).clamp(0, w as i64 - 1) as usize;
                let src = (y * w + sx) * ch;
                for c in 0..ch {
                    tmp[dst + c] += kw * data[src + c];
                }
            }
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y as i64 + k as i64 - radius).clamp(0, h as i64 - 1) as usize;
            let src_row = &tmp[sy * w * ch..(sy + 1) * w * ch];
            let dst_row = &mut out[y * w * ch..(y + 1) * w * ch];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kw * s;
            }
        }
    }
    out
}
