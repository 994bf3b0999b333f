//! Visual speech front-ends (mouth-ROI DCT and active appearance models) feeding a
//! GMM-HMM viseme recognizer, with fitting and recognition scoring.

pub mod aam;
pub mod appearance;
pub mod dct;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod image;
pub mod landmarks;
pub mod manifest;
pub mod pca;
pub mod pipeline;
pub mod shape;
pub mod synth;

pub use error::{Error, Result};
