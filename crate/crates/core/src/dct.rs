//! Mouth-ROI DCT features: orthonormal 2D DCT-II, zig-zag coefficient selection and
//! fourth-order finite-difference dynamics.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSequence};
use crate::image::{GrayImage, Rect, RgbImage};
use crate::shape::Shape;

/// Number of static coefficients kept per frame.
pub const DCT_COEFFS: usize = 44;
/// Static + first + second derivative.
pub const DCT_FEATURE_DIM: usize = 3 * DCT_COEFFS;
pub const DEFAULT_WINDOW: usize = 36;

/// Square coefficient matrix, row-major (`row = vertical frequency`).
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl CoeffMatrix {
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }
}

/// One frame's feature split into its three blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct DctFeature {
    pub stat: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta2: Vec<f64>,
}

impl DctFeature {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.stat.len() * 3);
        v.extend_from_slice(&self.stat);
        v.extend_from_slice(&self.delta);
        v.extend_from_slice(&self.delta2);
        v
    }
}

fn dct_basis(n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    let a0 = (1.0 / n as f64).sqrt();
    let a = (2.0 / n as f64).sqrt();
    for k in 0..n {
        let alpha = if k == 0 { a0 } else { a };
        for i in 0..n {
            c[k * n + i] = alpha * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    c
}

/// `out = left * m * right^T` for square row-major matrices.
fn sandwich(left: &[f64], m: &[f64], n: usize, transpose_left: bool) -> Vec<f64> {
    let l = |i: usize, j: usize| {
        if transpose_left {
            left[j * n + i]
        } else {
            left[i * n + j]
        }
    };
    let mut tmp = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let lik = l(i, k);
            if lik == 0.0 {
                continue;
            }
            for j in 0..n {
                tmp[i * n + j] += lik * m[k * n + j];
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += tmp[i * n + k] * l(j, k);
            }
            out[i * n + j] = s;
        }
    }
    out
}

/// Orthonormal 2D DCT-II of a square image.
pub fn dct2(img: &GrayImage) -> Result<CoeffMatrix> {
    let n = img.width();
    if img.height() != n {
        return Err(Error::invalid(format!(
            "dct2 needs a square image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    if n < 2 {
        return Err(Error::invalid("dct2 needs N >= 2"));
    }
    let c = dct_basis(n);
    Ok(CoeffMatrix {
        n,
        data: sandwich(&c, img.data(), n, false),
    })
}

/// Inverse of [`dct2`]. Output is not clamped.
pub fn idct2(coeffs: &CoeffMatrix) -> Vec<f64> {
    let c = dct_basis(coeffs.n);
    sandwich(&c, &coeffs.data, coeffs.n, true)
}

/// JPEG zig-zag traversal of an `n x n` grid as `(row, col)` pairs, DC first.
pub fn zigzag_order(n: usize) -> Vec<(usize, usize)> {
    let mut order = Vec::with_capacity(n * n);
    for s in 0..(2 * n - 1) {
        let lo = s.saturating_sub(n - 1);
        let hi = s.min(n - 1);
        if s % 2 == 1 {
            for r in lo..=hi {
                order.push((r, s - r));
            }
        } else {
            for r in (lo..=hi).rev() {
                order.push((r, s - r));
            }
        }
    }
    order
}

/// First `k` AC coefficients in zig-zag order (the DC entry is skipped).
pub fn zigzag_select(coeffs: &CoeffMatrix, k: usize) -> Result<Vec<f64>> {
    let n = coeffs.n;
    if k > n * n - 1 {
        return Err(Error::invalid(format!(
            "cannot select {k} AC coefficients from a {n}x{n} block"
        )));
    }
    Ok(zigzag_order(n)
        .into_iter()
        .skip(1)
        .take(k)
        .map(|(r, c)| coeffs.at(r, c))
        .collect())
}

const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const FORWARD0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const FORWARD1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];

/// Fourth-order first derivative along the sequence, unit spacing.
///
/// Interior points use the 5-point central stencil; the first and last two samples use
/// 5-point one-sided stencils of the same order.
pub fn fd_first(seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = seq.len();
    if n < 5 {
        return Err(Error::invalid(format!(
            "finite differences need at least 5 frames, got {n}"
        )));
    }
    let dim = seq[0].len();
    if let Some(bad) = seq.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let apply = |base: usize, w: &[f64; 5], sign: f64, reversed: bool| {
        let mut out = vec![0.0; dim];
        for (j, &wj) in w.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            let idx = if reversed { base - j } else { base + j };
            for (o, v) in out.iter_mut().zip(&seq[idx]) {
                *o += sign * wj * v;
            }
        }
        out.iter_mut().for_each(|o| *o /= 12.0);
        out
    };
    let mut d = Vec::with_capacity(n);
    d.push(apply(0, &FORWARD0, 1.0, false));
    d.push(apply(0, &FORWARD1, 1.0, false));
    for i in 2..n - 2 {
        d.push(apply(i - 2, &CENTRAL, 1.0, false));
    }
    // backward stencils mirror the forward ones with a sign flip
    d.push(apply(n - 1, &FORWARD1, -1.0, true));
    d.push(apply(n - 1, &FORWARD0, -1.0, true));
    Ok(d)
}

/// First and second derivative sequences; the second is the first applied twice.
pub fn fd_derivatives(seq: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let d1 = fd_first(seq)?;
    let d2 = fd_first(&d1)?;
    Ok((d1, d2))
}

/// Bounding box of a set of landmarks, grown by `margin` of its size on each side.
pub fn landmark_roi(shape: &Shape, indices: &[usize], margin: f64) -> Result<Rect> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &i in indices {
        let (x, y) = shape.point(i);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let (w, h) = (x1 - x0, y1 - y0);
    let (mx, my) = (w * margin, h * margin);
    let left = (x0 - mx).floor();
    let top = (y0 - my).floor();
    let right = (x1 + mx).ceil();
    let bottom = (y1 + my).ceil();
    Rect::new(
        left as i64,
        top as i64,
        (right - left).max(1.0) as usize + 1,
        (bottom - top).max(1.0) as usize + 1,
    )
}

/// Static coefficients for a single frame.
pub fn frame_coefficients(frame: &RgbImage, roi: &Rect, window: usize, frame_idx: usize) -> Result<Vec<f64>> {
    let crop = frame.crop(roi).ok_or_else(|| Error::Frame {
        frame: frame_idx,
        reason: format!("ROI {roi:?} lies outside the {}x{} frame", frame.width(), frame.height()),
    })?;
    let gray = crop.to_grayscale().resize_cubic(window, window)?;
    let coeffs = dct2(&gray)?;
    zigzag_select(&coeffs, DCT_COEFFS)
}

/// Full DCT pipeline: crop, grayscale, resize, DCT, zig-zag, then dynamics.
pub fn extract_dct_sequence(
    frames: &[RgbImage],
    rois: &[Rect],
    window: usize,
    frame_rate: f64,
) -> Result<FeatureSequence> {
    if frames.len() != rois.len() {
        return Err(Error::DimensionMismatch {
            expected: frames.len(),
            actual: rois.len(),
        });
    }
    if window < 8 {
        return Err(Error::invalid(format!("DCT window {window} below 8 pixels")));
    }
    let statics = frames
        .par_iter()
        .zip(rois.par_iter())
        .enumerate()
        .map(|(i, (f, r))| frame_coefficients(f, r, window, i))
        .collect::<Result<Vec<_>>>()?;
    assemble_dct(statics, frame_rate)
}

/// Attach derivative blocks to per-frame static coefficients.
pub fn assemble_dct(statics: Vec<Vec<f64>>, frame_rate: f64) -> Result<FeatureSequence> {
    let (d1, d2) = fd_derivatives(&statics)?;
    let frames = statics
        .into_iter()
        .zip(d1)
        .zip(d2)
        .map(|((s, a), b)| {
            DctFeature {
                stat: s,
                delta: a,
                delta2: b,
            }
            .to_vec()
        })
        .collect();
    FeatureSequence::new(frames, frame_rate, FeatureKind::Dct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dct(img: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for u in 0..n {
            for v in 0..n {
                let au = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                let av = if v == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                let mut s = 0.0;
                for y in 0..n {
                    for x in 0..n {
                        s += img[y * n + x]
                            * (PI * (2 * y + 1) as f64 * u as f64 / (2 * n) as f64).cos()
                            * (PI * (2 * x + 1) as f64 * v as f64 / (2 * n) as f64).cos();
                    }
                }
                out[u * n + v] = au * av * s;
            }
        }
        out
    }

    #[test]
    fn constant_image_is_dc_only() {
        let img = GrayImage::filled(36, 36, 0.6);
        let c = dct2(&img).unwrap();
        assert!((c.at(0, 0) - 36.0 * 0.6).abs() < 1e-9);
        for (i, v) in c.data.iter().enumerate().skip(1) {
            assert!(v.abs() < 1e-9, "entry {i} = {v}");
        }
    }

    #[test]
    fn impulse_matches_naive_transform() {
        let mut px = vec![0.0; 16];
        px[0] = 1.0;
        let img = GrayImage::new(4, 4, px.clone()).unwrap();
        let c = dct2(&img).unwrap();
        let oracle = naive_dct(&px, 4);
        for (a, b) in c.data.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_matches_naive_and_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 8;
        let px: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
        let img = GrayImage::new(n, n, px.clone()).unwrap();
        let c = dct2(&img).unwrap();
        for (a, b) in c.data.iter().zip(naive_dct(&px, n)) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in idct2(&c).iter().zip(&px) {
            assert!((a - b).abs() < 1e-10);
        }
        let e1: f64 = px.iter().map(|v| v * v).sum();
        let e2: f64 = c.data.iter().map(|v| v * v).sum();
        assert!((e1 - e2).abs() < 1e-9);
    }

    #[test]
    fn dct_rejects_non_square() {
        assert!(dct2(&GrayImage::filled(4, 5, 0.0)).is_err());
    }

    #[test]
    fn zigzag_first_five() {
        let order = zigzag_order(4);
        assert_eq!(&order[1..6], &[(0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]);
        let m = CoeffMatrix {
            n: 4,
            data: (0..16).map(|v| v as f64).collect(),
        };
        assert_eq!(zigzag_select(&m, 5).unwrap(), vec![1.0, 4.0, 8.0, 5.0, 2.0]);
        assert!(zigzag_select(&m, 0).unwrap().is_empty());
        assert_eq!(zigzag_select(&m, 15).unwrap().len(), 15);
        assert!(zigzag_select(&m, 16).is_err());
    }

    #[test]
    fn derivative_of_square_at_three() {
        let seq: Vec<Vec<f64>> = (0..7).map(|i| vec![(i * i) as f64]).collect();
        let d = fd_first(&seq).unwrap();
        assert_eq!(d[3][0], 6.0);
    }

    #[test]
    fn derivatives_of_constant_vanish() {
        let seq = vec![vec![2.5, -1.0]; 6];
        let (d1, d2) = fd_derivatives(&seq).unwrap();
        assert!(d1.iter().chain(&d2).flatten().all(|v| v.abs() < 1e-12));
        assert!(fd_derivatives(&seq[..4]).is_err());
    }

    #[test]
    fn constant_frames_give_zero_features() {
        let frames = vec![RgbImage::filled(60, 50, [0.3, 0.5, 0.7]); 6];
        let rois = vec![Rect::new(10, 10, 30, 20).unwrap(); 6];
        let seq = extract_dct_sequence(&frames, &rois, 36, 30.0).unwrap();
        assert_eq!(seq.dim(), DCT_FEATURE_DIM);
        assert!(seq.frames().iter().flatten().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn roi_outside_frame_names_frame() {
        let frames = vec![RgbImage::filled(20, 20, [0.5; 3]); 5];
        let mut rois = vec![Rect::new(0, 0, 10, 10).unwrap(); 5];
        rois[3] = Rect::new(100, 100, 5, 5).unwrap();
        match extract_dct_sequence(&frames, &rois, 36, 30.0) {
            Err(Error::Frame { frame, .. }) => assert_eq!(frame, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
