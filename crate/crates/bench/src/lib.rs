//! Shared fixtures for the benchmarks.

use fatfront_core::discretization::{
    sample_initial_condition, ConvolutionOptions, ConvolutionPlan, Field, Grid1D, InitialShape,
};
use fatfront_core::kernels::{catalog, KernelSpec};

pub fn stretched_kernel() -> KernelSpec {
    KernelSpec::new(catalog::STRETCHED_SQRT).expect("catalog kernel")
}

/// Plan on `[-L, L]` with `n` points; `far_weight_ceiling = 0` forces the
/// direct sum, `1` sends almost every offset through the FFT.
pub fn plan(n: usize, half_width: f64, far_weight_ceiling: f64) -> ConvolutionPlan {
    let grid = Grid1D::new(half_width, n).expect("grid");
    let options = ConvolutionOptions { deficit_max: 1.0, far_weight_ceiling };
    ConvolutionPlan::new(grid, &stretched_kernel(), options).expect("plan")
}

pub fn bump_field(grid: Grid1D) -> Field {
    sample_initial_condition(grid, &InitialShape::Bump { radius: 10.0 }).expect("bump")
}
