//! Active appearance models: training-frame sampling, multi-scale training over the
//! holistic/patch and no-op/SIFT variants, fitting, and parameter features.

pub mod config;
pub mod features;
pub mod fit;
pub mod io;
pub mod model;
pub mod sampling;

pub use config::{AamConfig, ColorMode, Descriptor, Part, WarpKind};
pub use features::extract_aam_features;
pub use fit::{fit_batch, fit_batch_with_iterations, fit_cascade, fit_frames, fit_wic, fit_with_iterations, FIT_BATCH, init_from_bbox, init_part_from_face, BBox, FitResult};
pub use model::{part_shapes, train_aam, train_aam_with_reference, Aam, AamLevel, AppearanceModel, VarianceRow};
pub use sampling::{lip_opening, sample_training_frames, FrameRecord, SamplerConfig};
