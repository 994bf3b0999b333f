//! Synthetic talking-face corpus.
//!
//! Each frame is a 160x160 RGB render of a cartoon face whose mouth follows a hidden
//! viseme sequence: every class has a target mouth pose (opening, width, rounding, lip
//! press, teeth and tongue visibility), targets are blended across neighbouring
//! frames, and a small head-pose random walk moves the whole face. Speakers differ in
//! geometry, colors and skin texture. Landmarks follow the 68-point markup.
//!
//! On disk, every sentence gets a directory `<speaker>/<sentence>/` with
//! `frame_NNNN.png`, `landmarks.csv` (tracker-style, a fraction of frames corrupted
//! with low confidence) and `groundtruth.csv` (exact landmarks, confidence 1).

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::landmarks::{write_track_csv, TrackedFrame};
use crate::manifest::{Manifest, ManifestEntry, Split};
use crate::shape::Shape;

/// The 12 classes, silence first.
pub const VISEMES: [&str; 12] = ["sil", "pbm", "fv", "th", "tdsz", "kg", "chj", "wuw", "aa", "eh", "iy", "ow"];
pub const SILENCE: &str = "sil";
pub const TRUTH_FILE: &str = "groundtruth.csv";
pub const TRACK_FILE: &str = "landmarks.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_speakers: usize,
    pub sentences_per_speaker: usize,
    /// Held-out sentences per speaker (the last ones).
    pub test_per_speaker: usize,
    /// Mean frames per viseme.
    pub frames_per_viseme: usize,
    /// Viseme count per sentence, silence excluded.
    pub min_labels: usize,
    pub max_labels: usize,
    pub width: usize,
    pub height: usize,
    /// Fraction of tracker frames replaced by noisy low-confidence landmarks.
    pub corrupt_fraction: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise: f64,
    pub frame_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_speakers: 4,
            sentences_per_speaker: 20,
            test_per_speaker: 4,
            frames_per_viseme: 6,
            min_labels: 8,
            max_labels: 12,
            width: 160,
            height: 160,
            corrupt_fraction: 0.1,
            noise: 0.01,
            frame_rate: 30.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0 || self.sentences_per_speaker == 0 || self.frames_per_viseme == 0 {
            return Err(Error::invalid("speaker, sentence and frame counts must be at least 1"));
        }
        if self.test_per_speaker > self.sentences_per_speaker {
            return Err(Error::invalid("more test sentences than sentences per speaker"));
        }
        if self.min_labels == 0 || self.min_labels > self.max_labels {
            return Err(Error::invalid("label count range must satisfy 1 <= min <= max"));
        }
        if self.width < 64 || self.height < 64 {
            return Err(Error::invalid("frames must be at least 64x64"));
        }
        if !(0.0..=1.0).contains(&self.corrupt_fraction) {
            return Err(Error::invalid("corrupt fraction outside [0, 1]"));
        }
        Ok(())
    }

    pub fn speaker_id(&self, s: usize) -> String {
        format!("s{:02}", s + 1)
    }

    pub fn sentence_id(&self, s: usize, k: usize) -> String {
        format!("{}_{:03}", self.speaker_id(s), k)
    }

    pub fn split_of(&self, k: usize) -> Split {
        if k >= self.sentences_per_speaker - self.test_per_speaker {
            Split::Test
        } else {
            Split::Train
        }
    }
}

/// Target mouth configuration of a viseme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MouthPose {
    /// Inner-lip gap at the center, canonical pixels.
    pub opening: f64,
    /// Relative mouth width.
    pub width: f64,
    /// Lip rounding/protrusion in [0, 1].
    pub rounding: f64,
    /// Lip compression in [0, 1].
    pub press: f64,
    pub teeth: f64,
    pub tongue: f64,
}

impl MouthPose {
    fn lerp_add(&mut self, o: &MouthPose, w: f64) {
        self.opening += w * o.opening;
        self.width += w * o.width;
        self.rounding += w * o.rounding;
        self.press += w * o.press;
        self.teeth += w * o.teeth;
        self.tongue += w * o.tongue;
    }

    fn zero() -> Self {
        MouthPose {
            opening: 0.0,
            width: 0.0,
            rounding: 0.0,
            press: 0.0,
            teeth: 0.0,
            tongue: 0.0,
        }
    }
}

pub fn viseme_pose(label: &str) -> Option<MouthPose> {
    let p = |opening, width, rounding, press, teeth, tongue| MouthPose {
        opening,
        width,
        rounding,
        press,
        teeth,
        tongue,
    };
    Some(match label {
        "sil" => p(0.0, 1.0, 0.0, 0.0, 0.0, 0.0),
        "pbm" => p(0.0, 0.94, 0.0, 1.0, 0.0, 0.0),
        "fv" => p(2.0, 1.0, 0.0, 0.3, 1.0, 0.0),
        "th" => p(4.0, 1.02, 0.0, 0.0, 0.5, 1.0),
        "tdsz" => p(3.0, 1.08, 0.0, 0.0, 1.0, 0.0),
        "kg" => p(6.5, 1.0, 0.1, 0.0, 0.2, 0.4),
        "chj" => p(4.5, 0.85, 0.6, 0.0, 0.9, 0.0),
        "wuw" => p(3.0, 0.66, 1.0, 0.0, 0.0, 0.0),
        "aa" => p(14.0, 1.0, 0.0, 0.0, 0.4, 0.3),
        "eh" => p(8.5, 1.1, 0.0, 0.0, 0.7, 0.1),
        "iy" => p(3.5, 1.22, 0.0, 0.0, 1.0, 0.0),
        "ow" => p(10.0, 0.76, 0.8, 0.0, 0.1, 0.0),
        _ => return None,
    })
}

/// Per-speaker geometry and colors.
#[derive(Clone, Debug, PartialEq)]
pub struct Speaker {
    pub face_w: f64,
    pub jaw_h: f64,
    pub eye_dx: f64,
    pub mouth_y: f64,
    pub mouth_w: f64,
    pub lip_u: f64,
    pub lip_l: f64,
    pub scale: f64,
    pub skin: [f64; 3],
    pub lip: [f64; 3],
    pub hair: [f64; 3],
    pub iris: [f64; 3],
    pub background: [f64; 3],
    pub texture: [f64; 4],
    pub light: f64,
}

fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn speaker_params(seed: u64, speaker: usize) -> Speaker {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, speaker as u64 + 1, 0));
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let skin_tone = u(0.45, 0.85);
    let skin = [skin_tone, skin_tone * u(0.72, 0.82), skin_tone * u(0.58, 0.7)];
    let lip = [u(0.55, 0.75), u(0.2, 0.32), u(0.25, 0.35)];
    let hair_v = u(0.08, 0.3);
    let hair = [hair_v, hair_v * 0.8, hair_v * 0.6];
    let iris = [u(0.1, 0.35), u(0.15, 0.4), u(0.1, 0.45)];
    let background = [u(0.2, 0.6), u(0.2, 0.6), u(0.3, 0.7)];
    Speaker {
        face_w: u(44.0, 50.0),
        jaw_h: u(52.0, 58.0),
        eye_dx: u(19.0, 23.0),
        mouth_y: u(28.0, 32.0),
        mouth_w: u(15.5, 18.5),
        lip_u: u(3.0, 4.0),
        lip_l: u(4.0, 5.2),
        scale: u(1.1, 1.2),
        skin,
        lip,
        hair,
        iris,
        background,
        texture: [u(0.15, 0.35), u(0.15, 0.35), u(0.0, 6.28), u(0.0, 6.28)],
        light: u(-1.0, 1.0),
    }
}

/// 68 canonical landmarks (face-centered, y down) for a speaker and mouth pose.
pub fn face_landmarks(sp: &Speaker, m: &MouthPose) -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(68);
    // jaw 0..17
    for k in 0..17 {
        let s = k as f64 / 16.0;
        let a = std::f64::consts::PI + 0.12 - (std::f64::consts::PI + 0.24) * s;
        let drop = 0.45 * m.opening * a.sin().max(0.0).powi(2);
        pts.push((sp.face_w * a.cos(), -8.0 + sp.jaw_h * a.sin() + drop));
    }
    // brows 17..27
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let u = i as f64 / 4.0;
            let u = if side < 0.0 { u } else { 1.0 - u };
            let x = side * (38.0 - 28.0 * u);
            let arc = (std::f64::consts::PI * u).sin();
            pts.push((x, -32.0 - 4.0 * arc));
        }
    }
    // nose 27..36
    for i in 0..4 {
        pts.push((0.0, -22.0 + 8.0 * i as f64));
    }
    for i in 0..5 {
        let x = -8.0 + 4.0 * i as f64;
        pts.push((x, 8.0 + 1.5 * (1.0 - x.abs() / 8.0)));
    }
    // eyes 36..48
    for side in [-1.0, 1.0] {
        let cx = side * sp.eye_dx;
        let ring = [(-9.0, 0.0), (-3.0, -3.5), (3.0, -3.5), (9.0, 0.0), (3.0, 3.5), (-3.0, 3.5)];
        for (dx, dy) in ring {
            pts.push((cx + dx, -18.0 + dy));
        }
    }
    // mouth 48..68
    let my = sp.mouth_y;
    let w = sp.mouth_w * m.width;
    let wi = w * (0.82 - 0.12 * m.rounding);
    let thick = 1.0 + 0.35 * m.rounding - 0.3 * m.press;
    let (tu, tl) = (sp.lip_u * thick, sp.lip_l * thick);
    let half_open = 0.5 * m.opening;
    let gap = |x: f64| half_open * (1.0 - (x / wi).powi(2)).max(0.0).sqrt();
    let outer_top = |u: f64| {
        let x = u * w;
        let bow = if u.abs() < 0.1 { 0.8 } else { 0.0 };
        (x, my - gap(x) - tu * (0.35 + 0.65 * (1.0 - u * u).sqrt()) + bow)
    };
    let outer_bottom = |u: f64| {
        let x = u * w;
        (x, my + gap(x) + tl * (0.35 + 0.65 * (1.0 - u * u).sqrt()))
    };
    pts.push((-w, my));
    for u in [-0.66, -0.33, 0.0, 0.33, 0.66] {
        pts.push(outer_top(u));
    }
    pts.push((w, my));
    for u in [0.66, 0.33, 0.0, -0.33, -0.66] {
        pts.push(outer_bottom(u));
    }
    pts.push((-wi, my));
    for u in [-0.5, 0.0, 0.5] {
        let x = u * wi;
        pts.push((x, my - gap(x)));
    }
    pts.push((wi, my));
    for u in [0.5, 0.0, -0.5] {
        let x = u * wi;
        pts.push((x, my + gap(x)));
    }
    pts
}

/// Head placement: `p = center + scale * R(theta) * q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadPose {
    pub theta: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
}

impl HeadPose {
    fn apply(&self, q: (f64, f64)) -> (f64, f64) {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        (self.tx + self.scale * (c * q.0 - s * q.1), self.ty + self.scale * (s * q.0 + c * q.1))
    }

    fn invert(&self, p: (f64, f64)) -> (f64, f64) {
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let (dx, dy) = ((p.0 - self.tx) / self.scale, (p.1 - self.ty) / self.scale);
        (c * dx + s * dy, -s * dx + c * dy)
    }
}

struct Poly {
    pts: Vec<(f64, f64)>,
    lo: (f64, f64),
    hi: (f64, f64),
}

impl Poly {
    fn new(pts: Vec<(f64, f64)>) -> Self {
        let lo = pts.iter().fold((f64::MAX, f64::MAX), |a, p| (a.0.min(p.0), a.1.min(p.1)));
        let hi = pts.iter().fold((f64::MIN, f64::MIN), |a, p| (a.0.max(p.0), a.1.max(p.1)));
        Poly { pts, lo, hi }
    }

    fn near(&self, q: (f64, f64), margin: f64) -> bool {
        q.0 >= self.lo.0 - margin && q.0 <= self.hi.0 + margin && q.1 >= self.lo.1 - margin && q.1 <= self.hi.1 + margin
    }

    /// Sorted x positions where the horizontal line at `y` crosses the outline.
    fn crossings(&self, y: f64) -> Vec<f64> {
        let n = self.pts.len();
        let mut xs = Vec::new();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.pts[i], self.pts[j]);
            if (a.1 > y) != (b.1 > y) {
                xs.push((b.0 - a.0) * (y - a.1) / (b.1 - a.1) + a.0);
            }
            j = i;
        }
        xs.sort_by(f64::total_cmp);
        xs
    }

    fn contains(&self, q: (f64, f64)) -> bool {
        if q.0 < self.lo.0 || q.0 > self.hi.0 || q.1 < self.lo.1 || q.1 > self.hi.1 {
            return false;
        }
        let mut inside = false;
        let n = self.pts.len();
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (self.pts[i], self.pts[j]);
            if (a.1 > q.1) != (b.1 > q.1) && q.0 < (b.0 - a.0) * (q.1 - a.1) / (b.1 - a.1) + a.0 {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

fn seg_dist(q: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let t = (((q.0 - a.0) * vx + (q.1 - a.1) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
    (q.0 - a.0 - t * vx).hypot(q.1 - a.1 - t * vy)
}

fn polyline_dist(q: (f64, f64), pts: &[(f64, f64)]) -> f64 {
    pts.windows(2).map(|w| seg_dist(q, w[0], w[1])).fold(f64::MAX, f64::min)
}

struct Scene<'a> {
    sp: &'a Speaker,
    head: Poly,
    outer_lip: Poly,
    inner_lip: Poly,
    eyes: [Poly; 2],
    eye_centers: [(f64, f64); 2],
    brows: [Vec<(f64, f64)>; 2],
    brow_boxes: [Poly; 2],
    nose: Vec<(f64, f64)>,
    nose_box: Poly,
    bridge: Vec<(f64, f64)>,
    mouth: MouthPose,
    upper_inner: Vec<(f64, f64)>,
    lower_inner: Vec<(f64, f64)>,
}

impl<'a> Scene<'a> {
    fn new(sp: &'a Speaker, lm: &[(f64, f64)], mouth: MouthPose) -> Self {
        let mut head: Vec<(f64, f64)> = lm[..17].to_vec();
        // forehead arc from the right temple back to the left
        let top = lm[16].1;
        for i in 1..20 {
            let t = std::f64::consts::PI * i as f64 / 20.0;
            head.push((sp.face_w * 1.02 * t.cos(), top - 62.0 * t.sin()));
        }
        let upper_inner = vec![lm[60], lm[61], lm[62], lm[63], lm[64]];
        let lower_inner = vec![lm[60], lm[67], lm[66], lm[65], lm[64]];
        Scene {
            sp,
            head: Poly::new(head),
            outer_lip: Poly::new(lm[48..60].to_vec()),
            inner_lip: Poly::new(lm[60..68].to_vec()),
            eyes: [Poly::new(lm[36..42].to_vec()), Poly::new(lm[42..48].to_vec())],
            eye_centers: [(-sp.eye_dx, -18.0), (sp.eye_dx, -18.0)],
            brows: [lm[17..22].to_vec(), lm[22..27].to_vec()],
            brow_boxes: [Poly::new(lm[17..22].to_vec()), Poly::new(lm[22..27].to_vec())],
            nose: lm[31..36].to_vec(),
            nose_box: Poly::new(lm[27..36].to_vec()),
            bridge: lm[27..31].to_vec(),
            mouth,
            upper_inner,
            lower_inner,
        }
    }

    /// Color of the face layer at canonical `q`, known to lie inside the head.
    fn face(&self, q: (f64, f64)) -> [f64; 3] {
        let sp = self.sp;
        let tex = 1.0
            + 0.05 * (sp.texture[0] * q.0 + sp.texture[2]).sin() * (sp.texture[1] * q.1 + sp.texture[3]).sin()
            + 0.06 * sp.light * q.0 / sp.face_w
            - 0.08 * (q.0 / sp.face_w).powi(4);
        let mut c = sp.skin.map(|v| v * tex);

        for (b, bb) in self.brows.iter().zip(&self.brow_boxes) {
            if bb.near(q, 2.0) && polyline_dist(q, b) < 2.0 {
                return sp.hair;
            }
        }
        for (eye, &(cx, cy)) in self.eyes.iter().zip(&self.eye_centers) {
            if eye.contains(q) {
                let r = (q.0 - cx).hypot(q.1 - cy);
                return if r < 1.3 {
                    [0.03, 0.03, 0.03]
                } else if r < 3.4 {
                    sp.iris
                } else {
                    [0.92, 0.92, 0.88]
                };
            }
        }
        if self.nose_box.near(q, 1.5) {
            if polyline_dist(q, &self.nose) < 1.3 {
                c = c.map(|v| v * 0.62);
            } else if polyline_dist(q, &self.bridge) < 1.5 {
                c = c.map(|v| v * 0.9);
            }
        }
        if self.outer_lip.contains(q) {
            if self.mouth.opening > 0.05 && self.inner_lip.contains(q) {
                return self.cavity(q);
            }
            let shade = 1.0 - 0.25 * self.mouth.press;
            return sp.lip.map(|v| v * shade);
        }
        c
    }

    fn cavity(&self, q: (f64, f64)) -> [f64; 3] {
        let m = &self.mouth;
        let upper = interp_y(&self.upper_inner, q.0);
        let lower = interp_y(&self.lower_inner, q.0);
        let teeth_h = 2.6 * m.teeth;
        if q.1 - upper < teeth_h {
            return [0.93, 0.92, 0.86];
        }
        if lower - q.1 < 1.8 * m.teeth * 0.6 {
            return [0.85, 0.84, 0.78];
        }
        if m.tongue > 0.0 {
            let cy = lower - 1.5;
            let r = ((q.0 / (0.6 * self.sp.mouth_w)).powi(2) + ((q.1 - cy) / 3.0).powi(2)).sqrt();
            if r < m.tongue {
                return [0.78, 0.36, 0.4];
            }
        }
        [0.16, 0.05, 0.06]
    }
}

fn interp_y(pts: &[(f64, f64)], x: f64) -> f64 {
    if x <= pts[0].0 {
        return pts[0].1;
    }
    for w in pts.windows(2) {
        if x <= w[1].0 {
            let t = (x - w[0].0) / (w[1].0 - w[0].0).max(1e-12);
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    pts[pts.len() - 1].1
}

/// Renders one frame (2x2 supersampled). Returns the image and image-space landmarks.
pub fn render_frame(sp: &Speaker, mouth: &MouthPose, pose: &HeadPose, width: usize, height: usize) -> (Vec<f64>, Vec<(f64, f64)>) {
    let canon = face_landmarks(sp, mouth);
    let scene = Scene::new(sp, &canon, *mouth);
    let head = Poly::new(scene.head.pts.iter().map(|&q| pose.apply(q)).collect());
    let mut data = vec![0.0; width * height * 3];
    let offs = [-0.25, 0.25];
    for y in 0..height {
        let rows = offs.map(|oy| head.crossings(y as f64 + oy));
        for x in 0..width {
            let mut acc = [0.0; 3];
            for (&oy, cross) in offs.iter().zip(&rows) {
                for &ox in &offs {
                    let p = (x as f64 + ox, y as f64 + oy);
                    let inside = cross.iter().filter(|&&cx| cx < p.0).count() % 2 == 1;
                    let c = if inside {
                        scene.face(pose.invert(p))
                    } else {
                        let g = 1.0 + 0.15 * (p.1 / height as f64 - 0.5) + 0.04 * (0.11 * p.0).sin() * (0.07 * p.1).cos();
                        sp.background.map(|v| v * g)
                    };
                    for k in 0..3 {
                        acc[k] += 0.25 * c[k];
                    }
                }
            }
            data[(y * width + x) * 3..(y * width + x + 1) * 3].copy_from_slice(&acc);
        }
    }
    let lm = canon.iter().map(|&q| pose.apply(q)).collect();
    (data, lm)
}

/// One rendered sentence held in memory.
#[derive(Clone, Debug)]
pub struct SynthSentence {
    pub speaker: String,
    pub sentence: String,
    pub split: Split,
    pub labels: Vec<String>,
    /// Index into `labels` for every frame.
    pub frame_labels: Vec<usize>,
    pub truth: Vec<Shape>,
    pub tracked: Vec<TrackedFrame>,
    pub frames: Vec<RgbImage>,
}

fn label_sequence(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let n = rng.random_range(cfg.min_labels..=cfg.max_labels);
    let mut out = vec![SILENCE];
    for _ in 0..n {
        loop {
            let v = VISEMES[rng.random_range(1..VISEMES.len())];
            if *out.last().unwrap() != v {
                out.push(v);
                break;
            }
        }
    }
    out.push(SILENCE);
    out
}

/// Generates sentence `k` of speaker `s`; fully determined by `cfg.seed`, `s`, `k`.
pub fn generate_sentence(cfg: &SynthConfig, s: usize, k: usize) -> Result<SynthSentence> {
    cfg.validate()?;
    let sp = speaker_params(cfg.seed, s);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, s as u64 + 1, k as u64 + 1));
    let labels = label_sequence(cfg, &mut rng);
    let mut frame_labels = Vec::new();
    let fpv = cfg.frames_per_viseme as i64;
    for (i, l) in labels.iter().enumerate() {
        let d = if *l == SILENCE {
            fpv + 2
        } else {
            (fpv + rng.random_range(-2..=2)).max(3)
        };
        frame_labels.extend(std::iter::repeat_n(i, d as usize));
    }
    let n = frame_labels.len();

    // co-articulated mouth trajectory
    let targets: Vec<MouthPose> = frame_labels.iter().map(|&i| viseme_pose(labels[i]).unwrap()).collect();
    let kernel: Vec<f64> = (-3i64..=3).map(|d| (-(d * d) as f64 / 2.0).exp()).collect();
    let ksum: f64 = kernel.iter().sum();
    let mouths: Vec<MouthPose> = (0..n)
        .map(|t| {
            let mut m = MouthPose::zero();
            for (j, w) in kernel.iter().enumerate() {
                let src = (t as i64 + j as i64 - 3).clamp(0, n as i64 - 1) as usize;
                m.lerp_add(&targets[src], w / ksum);
            }
            m
        })
        .collect();
    let jitter = Normal::new(0.0, 1.0).unwrap();
    let mouths: Vec<MouthPose> = mouths
        .into_iter()
        .map(|mut m| {
            m.opening = (m.opening * (1.0 + 0.05 * jitter.sample(&mut rng))).max(0.0);
            m.width *= 1.0 + 0.015 * jitter.sample(&mut rng);
            m
        })
        .collect();

    // head pose random walk
    let (cx, cy) = (cfg.width as f64 / 2.0, cfg.height as f64 / 2.0 + 6.0 * cfg.height as f64 / 160.0);
    let size = cfg.width.min(cfg.height) as f64 / 160.0;
    let mut state = [0.0f64; 4];
    let steps = [0.006, 0.004, 0.5, 0.5];
    let mut poses = Vec::with_capacity(n);
    for _ in 0..n {
        for (v, st) in state.iter_mut().zip(steps) {
            *v = 0.9 * *v + st * jitter.sample(&mut rng);
        }
        poses.push(HeadPose {
            theta: state[0],
            scale: sp.scale * size * (1.0 + state[1]),
            tx: cx + state[2],
            ty: cy + state[3],
        });
    }
    let noise: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let corrupt: Vec<Option<(f64, u64)>> = (0..n)
        .map(|_| {
            (rng.random::<f64>() < cfg.corrupt_fraction).then(|| (rng.random_range(0.5..0.93), rng.random()))
        })
        .collect();

    let rendered: Vec<(RgbImage, Shape)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let (mut data, lm) = render_frame(&sp, &mouths[t], &poses[t], cfg.width, cfg.height);
            let mut nr = ChaCha8Rng::seed_from_u64(noise[t]);
            let normal = Normal::new(0.0, cfg.noise.max(0.0)).unwrap();
            for v in &mut data {
                let noisy = if cfg.noise > 0.0 { *v + normal.sample(&mut nr) } else { *v };
                *v = (noisy.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            }
            let img = RgbImage::new(cfg.width, cfg.height, data)?;
            Ok((img, Shape::from_points(&lm)?))
        })
        .collect::<Result<_>>()?;
    let (frames, truth): (Vec<RgbImage>, Vec<Shape>) = rendered.into_iter().unzip();

    let tracked = truth
        .iter()
        .zip(&corrupt)
        .enumerate()
        .map(|(t, (s, c))| {
            Ok(match c {
                None => TrackedFrame {
                    frame: t,
                    shape: s.clone(),
                    confidence: 1.0,
                },
                Some((conf, seed)) => {
                    let mut nr = ChaCha8Rng::seed_from_u64(*seed);
                    let noisy = Normal::new(0.0, 4.0 * size).unwrap();
                    let coords = s.coords().iter().map(|v| v + noisy.sample(&mut nr)).collect();
                    TrackedFrame {
                        frame: t,
                        shape: Shape::new(coords)?,
                        confidence: *conf,
                    }
                }
            })
        })
        .collect::<Result<_>>()?;

    Ok(SynthSentence {
        speaker: cfg.speaker_id(s),
        sentence: cfg.sentence_id(s, k),
        split: cfg.split_of(k),
        labels: labels.iter().map(|l| l.to_string()).collect(),
        frame_labels,
        truth,
        tracked,
        frames,
    })
}

pub fn frame_file_name(t: usize) -> String {
    format!("frame_{t:04}.png")
}

/// Writes the corpus under `out_dir` and returns its manifest (also saved as
/// `out_dir/manifest.csv`).
pub fn synth_generate(cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::from(e).at_path(out_dir))?;
    let mut entries = Vec::new();
    for s in 0..cfg.n_speakers {
        for k in 0..cfg.sentences_per_speaker {
            let sent = generate_sentence(cfg, s, k)?;
            let rel = format!("{}/{}", sent.speaker, sent.sentence);
            let dir = out_dir.join(&rel);
            fs::create_dir_all(&dir).map_err(|e| Error::from(e).at_path(&dir))?;
            sent.frames
                .par_iter()
                .enumerate()
                .map(|(t, f)| f.save_png(&dir.join(frame_file_name(t))))
                .collect::<Result<Vec<()>>>()?;
            write_track_csv(&dir.join(TRACK_FILE), &sent.tracked)?;
            let truth: Vec<TrackedFrame> = sent
                .truth
                .iter()
                .enumerate()
                .map(|(t, s)| TrackedFrame {
                    frame: t,
                    shape: s.clone(),
                    confidence: 1.0,
                })
                .collect();
            write_track_csv(&dir.join(TRUTH_FILE), &truth)?;
            entries.push(ManifestEntry {
                speaker: sent.speaker.clone(),
                sentence: sent.sentence.clone(),
                frames: rel.clone(),
                landmarks: Some(format!("{rel}/{TRACK_FILE}")),
                transcript: sent.labels.join(" "),
                split: sent.split,
            });
        }
    }
    let manifest = Manifest::new(entries, out_dir)?;
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
