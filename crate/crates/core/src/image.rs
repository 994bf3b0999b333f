//! Rasters, color conversion, cubic resampling, template matching and pyramids.
//!
//! Intensities are `f64` in `[0, 1]`. Channels are stored interleaved (channel-minor).
//!
//! Point coordinates (landmarks, warp targets) are expressed in pixel-index space: the
//! center of pixel `(i, j)` sits at `(i, j)` and the raster covers `[-0.5, w - 0.5]`.
//! Rescaling by a factor `k` therefore maps a point `x` to `(x + 0.5) * k - 0.5`, which
//! is the same grid alignment the resampler uses.

use std::path::Path;

use crate::error::{Error, Result};

/// Multi-channel raster. Used directly for descriptor images (8 channels for dense SIFT).
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::invalid(format!(
                "raster extent must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("raster contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinear sample at a pixel-index coordinate, clamping outside the raster.
    /// Writes `channels` values into `out`.
    #[inline]
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let maxx = (self.width - 1) as f64;
        let maxy = (self.height - 1) as f64;
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, maxx) };
        let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, maxy) };
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let ch = self.channels;
        let i00 = (y0 * self.width + x0) * ch;
        let i10 = (y0 * self.width + x1) * ch;
        let i01 = (y1 * self.width + x0) * ch;
        let i11 = (y1 * self.width + x1) * ch;
        for c in 0..ch {
            out[c] = w00 * self.data[i00 + c]
                + w10 * self.data[i10 + c]
                + w01 * self.data[i01 + c]
                + w11 * self.data[i11 + c];
        }
    }

    /// Separable Catmull-Rom resampling to `out_w x out_h`, output clamped to `[0, 1]`.
    ///
    /// When shrinking, the kernel is stretched by the inverse scale so that every source
    /// pixel contributes (area-style prefilter); weights are renormalized per tap set.
    pub fn resize_cubic(&self, out_w: usize, out_h: usize) -> Result<Raster> {
        if out_w < 2 || out_h < 2 {
            return Err(Error::invalid(format!(
                "resize target must be at least 2x2, got {out_w}x{out_h}"
            )));
        }
        let ch = self.channels;
        let xtaps = resample_taps(self.width, out_w);
        let ytaps = resample_taps(self.height, out_h);

        // horizontal pass: height x out_w
        let mut tmp = vec![0.0; self.height * out_w * ch];
        for y in 0..self.height {
            let row = &self.data[y * self.width * ch..(y + 1) * self.width * ch];
            for (ox, taps) in xtaps.iter().enumerate() {
                let dst = &mut tmp[(y * out_w + ox) * ch..(y * out_w + ox + 1) * ch];
                for &(sx, w) in taps {
                    let src = &row[sx * ch..(sx + 1) * ch];
                    for c in 0..ch {
                        dst[c] += w * src[c];
                    }
                }
            }
        }
        let mut out = vec![0.0; out_h * out_w * ch];
        for (oy, taps) in ytaps.iter().enumerate() {
            let dst = &mut out[oy * out_w * ch..(oy + 1) * out_w * ch];
            for &(sy, w) in taps {
                let src = &tmp[sy * out_w * ch..(sy + 1) * out_w * ch];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        for v in &mut out {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Raster {
            width: out_w,
            height: out_h,
            channels: ch,
            data: out,
        })
    }

    /// One raster per relative scale factor. A factor of exactly 1 returns a copy.
    pub fn pyramid(&self, scales: &[f64]) -> Result<Vec<Raster>> {
        if scales.is_empty() {
            return Err(Error::invalid("pyramid needs at least one scale"));
        }
        scales
            .iter()
            .map(|&f| {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid(format!("pyramid scale {f} outside (0, 1]")));
                }
                if f == 1.0 {
                    return Ok(self.clone());
                }
                let (w, h) = scaled_extent(self.width, self.height, f);
                self.resize_cubic(w, h)
            })
            .collect()
    }

    /// Extract the sub-raster covered by `rect` after clamping to the raster bounds.
    pub fn crop(&self, rect: &Rect) -> Option<Raster> {
        let r = rect.clamp_to(self.width, self.height)?;
        let ch = self.channels;
        let mut data = Vec::with_capacity(r.w * r.h * ch);
        for y in r.y as usize..r.y as usize + r.h {
            let start = (y * self.width + r.x as usize) * ch;
            data.extend_from_slice(&self.data[start..start + r.w * ch]);
        }
        Some(Raster {
            width: r.w,
            height: r.h,
            channels: ch,
            data,
        })
    }
}

/// Dimensions of a pyramid level: `round(factor * dim)`, at least 2.
pub fn scaled_extent(width: usize, height: usize, factor: f64) -> (usize, usize) {
    let w = ((width as f64 * factor).round() as usize).max(2);
    let h = ((height as f64 * factor).round() as usize).max(2);
    (w, h)
}

/// Maps a pixel-index coordinate through a uniform rescale by `k`.
#[inline]
pub fn rescale_coord(v: f64, k: f64) -> f64 {
    (v + 0.5) * k - 0.5
}

fn catmull_rom(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        1.5 * t * t * t - 2.5 * t * t + 1.0
    } else if t < 2.0 {
        -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0
    } else {
        0.0
    }
}

fn resample_taps(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let k = n_out as f64 / n_in as f64;
    let stretch = if k < 1.0 { k } else { 1.0 };
    let support = 2.0 / stretch;
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) / k - 0.5;
            let lo = (center - support).floor() as i64;
            let hi = (center + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for i in lo..=hi {
                let w = catmull_rom((i as f64 - center) * stretch);
                if w == 0.0 {
                    continue;
                }
                let idx = i.clamp(0, n_in as i64 - 1) as usize;
                total += w;
                match taps.iter_mut().find(|(j, _)| *j == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Axis-aligned pixel rectangle. `x, y` may be negative; clamped on use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(Error::invalid(format!("empty rectangle {w}x{h}")));
        }
        Ok(Self { x, y, w, h })
    }

    /// Intersection with `[0, width) x [0, height)`, `None` when empty.
    pub fn clamp_to(&self, width: usize, height: usize) -> Option<Rect> {
        let x0 = self.x.max(0);
        let y0 = self.y.max(0);
        let x1 = (self.x + self.w as i64).min(width as i64);
        let y1 = (self.y + self.h as i64).min(height as i64);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(Rect {
            x: x0,
            y: y0,
            w: (x1 - x0) as usize,
            h: (y1 - y0) as usize,
        })
    }
}

/// Single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage(Raster);

/// Three-channel (R, G, B) image.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage(Raster);

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_unit_range(&data)?;
        Ok(Self(Raster::new(width, height, 1, data)?))
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self(Raster::filled(width, height, 1, value))
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.0.data[y * self.0.width + x]
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn resize_cubic(&self, out_w: usize, out_h: usize) -> Result<GrayImage> {
        self.0.resize_cubic(out_w, out_h).map(GrayImage)
    }

    pub fn pyramid(&self, scales: &[f64]) -> Result<Vec<GrayImage>> {
        Ok(self.0.pyramid(scales)?.into_iter().map(GrayImage).collect())
    }

    pub fn crop(&self, rect: &Rect) -> Option<GrayImage> {
        self.0.crop(rect).map(GrayImage)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.0.data.iter().map(|&v| to_u8(v)).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width() as u32,
            self.height() as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::from(e).at_path(path))
    }
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_unit_range(&data)?;
        Ok(Self(Raster::new(width, height, 3, data)?))
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self(Raster {
            width,
            height,
            channels: 3,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn raster(&self) -> &Raster {
        &self.0
    }

    pub fn into_raster(self) -> Raster {
        self.0
    }

    pub fn resize_cubic(&self, out_w: usize, out_h: usize) -> Result<RgbImage> {
        self.0.resize_cubic(out_w, out_h).map(RgbImage)
    }

    pub fn pyramid(&self, scales: &[f64]) -> Result<Vec<RgbImage>> {
        Ok(self.0.pyramid(scales)?.into_iter().map(RgbImage).collect())
    }

    pub fn crop(&self, rect: &Rect) -> Option<RgbImage> {
        self.0.crop(rect).map(RgbImage)
    }

    /// Rec.601 luma.
    pub fn to_grayscale(&self) -> GrayImage {
        let data = self
            .0
            .data
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
            .collect();
        GrayImage(Raster {
            width: self.0.width,
            height: self.0.height,
            channels: 1,
            data,
        })
    }

    /// Reads an 8-bit PNG/PGM/PPM; gray files are replicated into three channels.
    pub fn load(path: &Path) -> Result<RgbImage> {
        let img = image::open(path).map_err(|e| Error::from(e).at_path(path))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.into_raw().into_iter().map(|b| b as f64 / 255.0).collect();
        Ok(RgbImage(Raster {
            width: w as usize,
            height: h as usize,
            channels: 3,
            data,
        }))
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.0.data.iter().map(|&v| to_u8(v)).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width() as u32,
            self.height() as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::from(e).at_path(path))
    }
}

impl From<GrayImage> for RgbImage {
    fn from(g: GrayImage) -> Self {
        let data = g.0.data.iter().flat_map(|&v| [v, v, v]).collect();
        RgbImage(Raster {
            width: g.0.width,
            height: g.0.height,
            channels: 3,
            data,
        })
    }
}

pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    img.to_grayscale()
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_unit_range(data: &[f64]) -> Result<()> {
    match data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::invalid(format!("intensity {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Zero-normalized cross-correlation template search.
///
/// Returns the placement with the highest score; ties go to the smallest `(y, x)`.
/// Windows with zero variance score 0.
pub fn ncc_match(img: &GrayImage, template: &GrayImage) -> Result<(Rect, f64)> {
    let (iw, ih) = (img.width(), img.height());
    let (tw, th) = (template.width(), template.height());
    if tw > iw || th > ih {
        return Err(Error::invalid(format!(
            "template {tw}x{th} larger than image {iw}x{ih}"
        )));
    }
    let n = (tw * th) as f64;
    let tmean = template.data().iter().sum::<f64>() / n;
    let tcentered: Vec<f64> = template.data().iter().map(|v| v - tmean).collect();
    let tnorm = tcentered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if tnorm < 1e-12 {
        return Err(Error::Degenerate(
            "template has zero variance; correlation undefined".into(),
        ));
    }

    // summed-area tables for window mean and energy
    let sw = iw + 1;
    let mut sum = vec![0.0; sw * (ih + 1)];
    let mut sq = vec![0.0; sw * (ih + 1)];
    for y in 0..ih {
        for x in 0..iw {
            let v = img.at(x, y);
            sum[(y + 1) * sw + x + 1] = v + sum[y * sw + x + 1] + sum[(y + 1) * sw + x] - sum[y * sw + x];
            sq[(y + 1) * sw + x + 1] =
                v * v + sq[y * sw + x + 1] + sq[(y + 1) * sw + x] - sq[y * sw + x];
        }
    }
    let window = |t: &[f64], x: usize, y: usize| {
        t[(y + th) * sw + x + tw] - t[y * sw + x + tw] - t[(y + th) * sw + x] + t[y * sw + x]
    };

    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for y in 0..=ih - th {
        for x in 0..=iw - tw {
            let s = window(&sum, x, y);
            let ss = window(&sq, x, y);
            let var = ss - s * s / n;
            let score = if var <= 1e-12 {
                0.0
            } else {
                let mut cross = 0.0;
                for ty in 0..th {
                    let irow = &img.data()[(y + ty) * iw + x..(y + ty) * iw + x + tw];
                    let trow = &tcentered[ty * tw..(ty + 1) * tw];
                    for (a, b) in irow.iter().zip(trow) {
                        cross += a * b;
                    }
                }
                (cross / (var.sqrt() * tnorm)).clamp(-1.0, 1.0)
            };
            if score > best.2 {
                best = (x, y, score);
            }
        }
    }
    Ok((
        Rect {
            x: best.0 as i64,
            y: best.1 as i64,
            w: tw,
            h: th,
        },
        best.2,
    ))
}

/// Zero-normalized cross-correlation of `template` against the window at `(x, y)`.
pub fn zncc_at(img: &GrayImage, template: &GrayImage, x: usize, y: usize) -> f64 {
    let (tw, th) = (template.width(), template.height());
    let n = (tw * th) as f64;
    let mut wm = 0.0;
    for ty in 0..th {
        for tx in 0..tw {
            wm += img.at(x + tx, y + ty);
        }
    }
    wm /= n;
    let tm = template.data().iter().sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for ty in 0..th {
        for tx in 0..tw {
            let a = img.at(x + tx, y + ty) - wm;
            let b = template.at(tx, ty) - tm;
            num += a * b;
            da += a * a;
            db += b * b;
        }
    }
    if da < 1e-12 || db < 1e-12 {
        0.0
    } else {
        num / (da.sqrt() * db.sqrt())
    }
}
