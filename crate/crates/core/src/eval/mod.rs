//! Recognition scoring (correctness and accuracy from edit-distance alignment),
//! normalized landmark error, cumulative error curves and report emitters.

pub mod align;
pub mod fitting;
pub mod report;

pub use align::{align, align_score, align_score_with, stats_of, AlignOp, AlignmentStats, EditCosts, SubstitutionTable};
pub use fitting::{ced_curve, landmark_error, linear_thresholds, CedCurve};
pub use report::{ced_csv, fit_log_csv, line_plot_svg, scores_csv, FitRow, ScoreRow, Series};
