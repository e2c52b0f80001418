//! Fixtures shared by the benchmarks.

use iwz_core::{GaussianMixtureParams, JointSourceModel};

/// The classification mixture quantized to `levels` points on `[-10, 10]`.
pub fn mixture(levels: usize) -> JointSourceModel {
    let p = GaussianMixtureParams::classification_default().with_grid(levels, -10.0, 10.0);
    JointSourceModel::gaussian_mixture(&p).expect("valid mixture")
}
