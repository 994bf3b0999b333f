use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::landmarks::markup;

/// How appearance is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WarpKind {
    /// Piecewise-affine warp of the whole landmark hull into the reference frame.
    Holistic,
    /// Fixed windows around each landmark.
    Patch,
}

/// Per-pixel feature applied before sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Descriptor {
    NoOp,
    Sift,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Part {
    Face,
    Chin,
    Lips,
}

/// Channels used by the no-op descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColorMode {
    Rgb,
    Gray,
}

macro_rules! string_enum {
    ($ty:ident, $what:literal, $($var:ident => [$($s:literal),+]),+) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self {
                    $($ty::$var => string_enum!(@first $($s),+),)+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($($s)|+ => Ok($ty::$var),)+
                    other => Err(Error::invalid(format!(concat!("unknown ", $what, " '{}'"), other))),
                }
            }
        }
    };
    (@first $s:literal $(, $rest:literal)*) => { $s };
}

string_enum!(WarpKind, "warp kind", Holistic => ["holistic"], Patch => ["patch"]);
string_enum!(Descriptor, "descriptor", NoOp => ["noop", "no-op"], Sift => ["sift"]);
string_enum!(Part, "part", Face => ["face"], Chin => ["chin"], Lips => ["lips"]);
string_enum!(ColorMode, "color mode", Rgb => ["rgb"], Gray => ["gray", "grey"]);

impl Part {
    /// Landmark indices of this part within a shape of `n_points`. `Face` keeps every
    /// point; the other parts need the 68-point markup.
    pub fn indices(self, n_points: usize) -> Result<Vec<usize>> {
        match self {
            Part::Face => Ok((0..n_points).collect()),
            _ if n_points != markup::N_POINTS => Err(Error::invalid(format!(
                "part '{self}' needs {}-point shapes, got {n_points}",
                markup::N_POINTS
            ))),
            Part::Chin => Ok(markup::chin()),
            Part::Lips => Ok(markup::lips()),
        }
    }

    pub fn default_scales(self) -> Vec<f64> {
        match self {
            Part::Lips => vec![0.5, 1.0],
            _ => vec![0.25, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AamConfig {
    pub warp: WarpKind,
    pub descriptor: Descriptor,
    pub part: Part,
    /// Ascending relative resolutions, the last one 1.0.
    pub scales: Vec<f64>,
    /// Fitting iterations per scale, coarse to fine.
    pub iterations: Vec<usize>,
    /// Shape parameters including the four similarity parameters.
    pub n_shape: usize,
    pub n_appearance: usize,
    /// Bounding-box diagonal of the reference shape at full resolution, in pixels.
    pub diagonal: f64,
    pub patch: usize,
    pub color: ColorMode,
}

impl AamConfig {
    pub fn new(warp: WarpKind, descriptor: Descriptor, part: Part) -> Self {
        let scales = part.default_scales();
        let base = [10usize, 10, 5];
        let mut iterations: Vec<usize> = base[base.len() - scales.len()..].to_vec();
        if warp == WarpKind::Holistic && descriptor == Descriptor::NoOp {
            iterations[0] = 20;
        }
        Self {
            warp,
            descriptor,
            part,
            scales,
            iterations,
            n_shape: 40,
            n_appearance: 150,
            diagonal: 150.0,
            patch: 17,
            color: ColorMode::Rgb,
        }
    }

    /// Iteration schedule for a part model initialized from a face fit.
    pub fn cascaded(mut self) -> Self {
        self.iterations.iter_mut().for_each(|n| *n += 10);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::invalid("AAM needs at least one scale"));
        }
        if self.scales.windows(2).any(|w| w[0] >= w[1]) || self.scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::invalid(format!("scales {:?} must ascend within (0, 1]", self.scales)));
        }
        if *self.scales.last().unwrap() != 1.0 {
            return Err(Error::invalid("the last scale must be 1.0"));
        }
        if self.iterations.len() != self.scales.len() {
            return Err(Error::DimensionMismatch {
                expected: self.scales.len(),
                actual: self.iterations.len(),
            });
        }
        if self.n_shape < 4 {
            return Err(Error::invalid("n_shape counts the 4 similarity parameters and must be >= 4"));
        }
        if self.n_appearance == 0 {
            return Err(Error::invalid("n_appearance must be positive"));
        }
        if !(self.diagonal > 0.0) {
            return Err(Error::invalid("diagonal must be positive"));
        }
        if self.patch % 2 == 0 {
            return Err(Error::invalid(format!("patch size must be odd, got {}", self.patch)));
        }
        Ok(())
    }

    /// Channels per sampled pixel.
    pub fn channels(&self) -> usize {
        match (self.descriptor, self.color) {
            (Descriptor::Sift, _) => crate::appearance::sift::SIFT_BINS,
            (Descriptor::NoOp, ColorMode::Rgb) => 3,
            (Descriptor::NoOp, ColorMode::Gray) => 1,
        }
    }

    /// Short name such as `patch-sift-face`.
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.warp, self.descriptor, self.part)
    }
}
