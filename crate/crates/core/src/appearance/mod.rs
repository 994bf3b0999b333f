//! Reference-frame appearance extraction: triangulation, piecewise-affine warping, dense
//! descriptors and landmark patches.

pub mod mesh;
pub mod patch;
pub mod sift;
pub mod warp;

pub use mesh::{delaunay, TriMesh};
pub use patch::patch_extract;
pub use sift::dense_sift;
pub use warp::{pa_warp, WarpMap};
