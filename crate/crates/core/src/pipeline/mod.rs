//! End-to-end experiment plumbing: configuration, output layout and the stages that
//! chain feature extraction, recognizer training, decoding and scoring.

pub mod config;
pub mod data;
pub mod stages;

pub use config::{CostKind, FrontEnd, PipelineConfig, RoiSource};
pub use data::{entry_key, frame_paths, load_fits, load_frames, load_ground_truth, load_selected_frames, load_track, save_fits, Layout};
pub use stages::{
    aam_features, aam_fit, aam_train, dct_extract, decode, fit_eval, hmm_train, load_all_fits, load_features, load_hypotheses, run_pipeline, score, stage, synth_gen, AamModels,
    FitSummary, Reports, POOLED,
};
