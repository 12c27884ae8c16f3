//! Uniform symmetric grids, sampled fields and the linear (zero-padded)
//! convolution `J∗u` used by the time stepper.
//!
//! Kernel weights are cell integrals `w_m = ∫ J` over `[(m-½)dx, (m+½)dx]`,
//! so `Σ w_m ≤ 1` for every kernel and the deficit `1 - Σ w_m` is exactly the
//! kernel mass beyond the padded stencil.
//!
//! The convolution is split by weight size. Offsets whose weight exceeds
//! `far_weight_ceiling · w_0` are summed directly, which keeps every output
//! relatively accurate because all terms are nonnegative. The remaining small
//! weights go through one FFT of length `≥ 2n - 1`. FFT round-off is absolute
//! (about `1e-16` times the largest far contribution), and the reaction term
//! amplifies it like `e^{t}`; bounding the far weights keeps that noise below
//! the range tolerance over the whole run.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{KernelError, KernelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("initial condition support radius {support} does not fit in the domain half-width {half_width}")]
    SupportExceedsDomain { support: f64, half_width: f64 },
    #[error("invalid initial condition: {0}")]
    InvalidShape(String),
    #[error("field grid does not match the convolution plan grid")]
    GridMismatch,
    #[error("kernel deficit {deficit:e} exceeds the allowed maximum {max:e}; enlarge the domain")]
    DeficitTooLarge { deficit: f64, max: f64 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    half_width: f64,
    n: usize,
    dx: f64,
}

impl Grid1D {
    pub fn new(half_width: f64, n: usize) -> Result<Self, DiscretizationError> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(DiscretizationError::InvalidGrid(format!("half-width must be positive, got {half_width}")));
        }
        if n < 16 || n % 2 != 0 {
            return Err(DiscretizationError::InvalidGrid(format!("n must be even and at least 16, got {n}")));
        }
        Ok(Grid1D { half_width, n, dx: 2.0 * half_width / (n - 1) as f64 })
    }

    /// Smallest even point count whose spacing does not exceed `dx`.
    pub fn with_spacing(half_width: f64, dx: f64) -> Result<Self, DiscretizationError> {
        if !(dx.is_finite() && dx > 0.0) {
            return Err(DiscretizationError::InvalidGrid(format!("dx must be positive, got {dx}")));
        }
        let cells = (2.0 * half_width / dx - 1e-9).ceil().max(1.0) as usize;
        let mut n = cells + 1;
        if n % 2 == 1 {
            n += 1;
        }
        Grid1D::new(half_width, n.max(16))
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        // mirrored evaluation keeps the grid exactly symmetric
        if 2 * i < self.n {
            -self.half_width + i as f64 * self.dx
        } else {
            self.half_width - (self.n - 1 - i) as f64 * self.dx
        }
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.coordinate(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid1D,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: Grid1D, values: Vec<f64>, time: f64) -> Result<Self, DiscretizationError> {
        if values.len() != grid.n() {
            return Err(DiscretizationError::GridMismatch);
        }
        Ok(Field { grid, values, time })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Field { grid, values: vec![0.0; grid.n()], time: 0.0 }
    }

    /// `Σ u dx`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|u|` on the outer band `|x| ≥ L - buffer`.
    pub fn boundary_egress(&self, buffer: f64) -> f64 {
        let edge = self.grid.half_width() - buffer;
        let mut worst: f64 = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            if self.grid.coordinate(i).abs() >= edge {
                worst = worst.max(v.abs());
            }
        }
        worst
    }

    /// Linear interpolation of the grid values, zero outside the domain.
    pub fn interpolate(&self, x: f64) -> f64 {
        let s = (x + self.grid.half_width()) / self.grid.dx();
        if !(s >= 0.0) || s > (self.grid.n() - 1) as f64 {
            return 0.0;
        }
        let i = (s.floor() as usize).min(self.grid.n() - 2);
        let frac = s - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialShape {
    /// `max(1 - (x/radius)^2, 0)`
    Bump { radius: f64 },
    /// `1` on `|x| < radius`, `0` elsewhere.
    Indicator { radius: f64 },
    /// Piecewise-linear table, zero outside `[x_0, x_last]`.
    Custom { x: Vec<f64>, u: Vec<f64> },
}

impl InitialShape {
    pub fn validate(&self) -> Result<(), DiscretizationError> {
        let bad = |m: String| Err(DiscretizationError::InvalidShape(m));
        match self {
            InitialShape::Bump { radius } | InitialShape::Indicator { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return bad(format!("radius must be positive, got {radius}"));
                }
            }
            InitialShape::Custom { x, u } => {
                if x.len() != u.len() || x.len() < 2 {
                    return bad("custom table needs matching x and u columns with at least two rows".into());
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
                    return bad("custom x values must be finite and strictly increasing".into());
                }
                if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("custom u values must lie in [0, 1]".into());
                }
                if u[0] != 0.0 || u[u.len() - 1] != 0.0 {
                    return bad("custom u must vanish at both ends of the table".into());
                }
                if u.iter().all(|v| *v == 0.0) {
                    return bad("custom u is identically zero".into());
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            InitialShape::Bump { radius } => {
                let q = x / radius;
                (1.0 - q * q).max(0.0)
            }
            InitialShape::Indicator { radius } => {
                if x.abs() < *radius {
                    1.0
                } else {
                    0.0
                }
            }
            InitialShape::Custom { x: xs, u } => {
                if x <= xs[0] || x >= xs[xs.len() - 1] {
                    return 0.0;
                }
                let j = xs.partition_point(|v| *v <= x);
                let (x0, x1) = (xs[j - 1], xs[j]);
                let t = (x - x0) / (x1 - x0);
                u[j - 1] * (1.0 - t) + u[j] * t
            }
        }
    }

    /// Smallest `R` with `u0 = 0` on `|x| ≥ R`.
    pub fn support_radius(&self) -> f64 {
        match self {
            InitialShape::Bump { radius } | InitialShape::Indicator { radius } => *radius,
            InitialShape::Custom { x, .. } => x[0].abs().max(x[x.len() - 1].abs()),
        }
    }

    /// Points where the profile is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            InitialShape::Bump { radius } | InitialShape::Indicator { radius } => vec![-radius, *radius],
            InitialShape::Custom { x, .. } => x.clone(),
        }
    }

    /// `∫ u0`.
    pub fn mass(&self) -> f64 {
        match self {
            InitialShape::Bump { radius } => 4.0 * radius / 3.0,
            InitialShape::Indicator { radius } => 2.0 * radius,
            InitialShape::Custom { x, u } => {
                x.windows(2).zip(u.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
            }
        }
    }
}

/// Samples an initial condition on the grid.
pub fn sample_initial_condition(grid: Grid1D, shape: &InitialShape) -> Result<Field, DiscretizationError> {
    shape.validate()?;
    let support = shape.support_radius();
    if support >= grid.half_width() {
        return Err(DiscretizationError::SupportExceedsDomain { support, half_width: grid.half_width() });
    }
    let values = (0..grid.n()).map(|i| shape.value(grid.coordinate(i))).collect();
    Ok(Field { grid, values, time: 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvolutionOptions {
    /// Largest tolerated kernel mass outside the stencil.
    pub deficit_max: f64,
    /// Offsets with `w_m ≤ far_weight_ceiling · w_0` use the FFT path.
    /// Zero forces the direct sum everywhere.
    pub far_weight_ceiling: f64,
}

impl Default for ConvolutionOptions {
    fn default() -> Self {
        ConvolutionOptions { deficit_max: 1e-3, far_weight_ceiling: 1e-12 }
    }
}

/// Absolute noise a run may accumulate from the FFT path.
pub const FAR_NOISE_BUDGET: f64 = 1e-10;

impl ConvolutionOptions {
    /// Ceiling that keeps FFT round-off, grown at `growth_rate` for `t_max`,
    /// below [`FAR_NOISE_BUDGET`].
    pub fn for_horizon(deficit_max: f64, growth_rate: f64, t_max: f64, n: usize) -> Self {
        let ceiling = FAR_NOISE_BUDGET * (-growth_rate.max(0.0) * t_max).exp() / (f64::EPSILON * (n as f64).sqrt());
        ConvolutionOptions { deficit_max, far_weight_ceiling: ceiling.min(1.0) }
    }
}

struct FarTransform {
    len: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
pub struct ConvolutionPlan {
    grid: Grid1D,
    weights: Vec<f64>,
    deficit: f64,
    near_radius: usize,
    far: Option<Arc<FarTransform>>,
}

impl fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("grid", &self.grid)
            .field("deficit", &self.deficit)
            .field("near_radius", &self.near_radius)
            .field("fft_len", &self.far.as_ref().map(|t| t.len))
            .finish()
    }
}

const BLOCK: usize = 2048;

impl ConvolutionPlan {
    pub fn new(grid: Grid1D, kernel: &KernelSpec, options: ConvolutionOptions) -> Result<Self, DiscretizationError> {
        let n = grid.n();
        let dx = grid.dx();
        let mut weights = Vec::with_capacity(n);
        weights.push(2.0 * kernel.interval_mass(0.0, 0.5 * dx)?);
        for m in 1..n {
            let a = (m as f64 - 0.5) * dx;
            weights.push(kernel.interval_mass(a, a + dx)?);
        }
        let deficit = 2.0 * kernel.tail_mass((n as f64 - 0.5) * dx)?;
        if deficit > options.deficit_max {
            return Err(DiscretizationError::DeficitTooLarge { deficit, max: options.deficit_max });
        }
        let threshold = options.far_weight_ceiling * weights[0];
        let near_radius = if options.far_weight_ceiling <= 0.0 {
            n - 1
        } else {
            weights.iter().rposition(|w| *w > threshold).unwrap_or(0)
        };
        let far = if near_radius + 1 < n && weights[near_radius + 1..].iter().any(|w| *w > 0.0) {
            let len = (2 * n - 1).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(len);
            let inverse = planner.plan_fft_inverse(len);
            let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
            for (m, w) in weights.iter().enumerate().skip(near_radius + 1) {
                spectrum[m].re = *w;
                spectrum[len - m].re = *w;
            }
            forward.process(&mut spectrum);
            let scale = 1.0 / len as f64;
            for c in spectrum.iter_mut() {
                *c *= scale;
            }
            Some(Arc::new(FarTransform { len, spectrum, forward, inverse }))
        } else {
            None
        };
        Ok(ConvolutionPlan { grid, weights, deficit, near_radius, far })
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    /// `w_m` for `m = 0 … n-1`; the stencil is symmetric.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Full symmetric stencil for offsets `-(n-1) … n-1`.
    pub fn kernel_samples(&self) -> Vec<f64> {
        let n = self.weights.len();
        let mut out = Vec::with_capacity(2 * n - 1);
        out.extend(self.weights[1..].iter().rev());
        out.extend(self.weights.iter());
        out
    }

    /// Kernel mass not represented by the stencil.
    pub fn deficit(&self) -> f64 {
        self.deficit
    }

    /// Largest offset summed directly.
    pub fn near_radius(&self) -> usize {
        self.near_radius
    }

    pub fn uses_fft(&self) -> bool {
        self.far.is_some()
    }

    pub fn convolve(&self, field: &Field) -> Result<Field, DiscretizationError> {
        if field.grid != self.grid {
            return Err(DiscretizationError::GridMismatch);
        }
        let mut out = vec![0.0; self.grid.n()];
        self.convolve_into(&field.values, &mut out);
        Ok(Field { grid: self.grid, values: out, time: field.time })
    }

    /// `J∗u - u`.
    pub fn nonlocal_operator(&self, field: &Field) -> Result<Field, DiscretizationError> {
        let mut out = self.convolve(field)?;
        for (o, u) in out.values.iter_mut().zip(&field.values) {
            *o -= u;
        }
        Ok(out)
    }

    /// Writes `J∗u` into `out`. Both slices must have the grid length.
    pub fn convolve_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.n();
        assert_eq!(u.len(), n, "field length does not match the plan grid");
        assert_eq!(out.len(), n, "output length does not match the plan grid");
        let r = self.near_radius;
        let mut padded = vec![0.0; n + 2 * r];
        padded[r..r + n].copy_from_slice(u);
        let w = &self.weights;
        out.par_chunks_mut(BLOCK).enumerate().for_each(|(b, chunk)| {
            let start = b * BLOCK;
            let len = chunk.len();
            for (i, o) in chunk.iter_mut().enumerate() {
                *o = w[0] * u[start + i];
            }
            for m in 1..=r {
                let wm = w[m];
                let lo = &padded[start + r - m..start + r - m + len];
                let hi = &padded[start + r + m..start + r + m + len];
                for ((o, a), c) in chunk.iter_mut().zip(lo).zip(hi) {
                    *o += wm * (a + c);
                }
            }
        });
        if let Some(far) = &self.far {
            let mut buf = vec![Complex64::new(0.0, 0.0); far.len];
            for (b, v) in buf.iter_mut().zip(u) {
                b.re = *v;
            }
            far.forward.process(&mut buf);
            for (b, s) in buf.iter_mut().zip(&far.spectrum) {
                *b *= s;
            }
            far.inverse.process(&mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b.re;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::catalog::*;
    use crate::quadrature::{integrate, Tolerance};
    use approx::assert_relative_eq;

    fn plan(kind: crate::kernels::KernelFamily, l: f64, n: usize, ceiling: f64) -> ConvolutionPlan {
        let k = KernelSpec::new(kind).unwrap();
        let opts = ConvolutionOptions { deficit_max: 1.0, far_weight_ceiling: ceiling };
        ConvolutionPlan::new(Grid1D::new(l, n).unwrap(), &k, opts).unwrap()
    }

    #[test]
    fn grid_is_symmetric() {
        let g = Grid1D::new(7.3, 64).unwrap();
        for i in 0..g.n() {
            assert_eq!(g.coordinate(i), -g.coordinate(g.n() - 1 - i));
        }
        assert_eq!(g.coordinate(0), -7.3);
        assert!(Grid1D::new(1.0, 15).is_err());
        assert!(Grid1D::new(1.0, 17).is_err());
        assert!(Grid1D::new(0.0, 32).is_err());
    }

    #[test]
    fn spacing_constructor_respects_target() {
        let g = Grid1D::with_spacing(2500.0, 0.5).unwrap();
        assert!(g.dx() <= 0.5 && g.n() % 2 == 0);
        assert!(Grid1D::with_spacing(2500.0, 0.5 * 1.0001).unwrap().n() <= g.n());
    }

    #[test]
    fn bump_examples() {
        let b = InitialShape::Bump { radius: 10.0 };
        assert_eq!(b.value(0.0), 1.0);
        assert_eq!(b.value(10.0), 0.0);
        assert_eq!(b.value(5.0), 0.75);
        let g = Grid1D::new(5.0, 32).unwrap();
        assert!(matches!(sample_initial_condition(g, &b), Err(DiscretizationError::SupportExceedsDomain { .. })));
    }

    #[test]
    fn custom_shape_interpolates() {
        let s = InitialShape::Custom { x: vec![-1.0, 0.0, 2.0], u: vec![0.0, 1.0, 0.0] };
        s.validate().unwrap();
        assert_eq!(s.value(1.0), 0.5);
        assert_eq!(s.value(-0.5), 0.5);
        assert_eq!(s.value(3.0), 0.0);
        assert_relative_eq!(s.mass(), 1.5);
        let bad = InitialShape::Custom { x: vec![0.0, 1.0], u: vec![0.5, 0.0] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn weights_and_deficit_sum_to_one() {
        for (kind, l) in
            [(LAPLACE_UNIT, 20.0), (STRETCHED_SQRT, 200.0), (ALGEBRAIC_CUBIC, 300.0), (LOG_SUBLINEAR_UNIT, 100.0)]
        {
            let p = plan(kind, l, 400, 1e-12);
            let s: f64 = p.kernel_samples().iter().sum();
            assert!(p.deficit() >= 0.0);
            assert!((s + p.deficit() - 1.0).abs() < 1e-12, "{kind:?}: {}", s + p.deficit() - 1.0);
            let ks = p.kernel_samples();
            for i in 0..ks.len() {
                assert_eq!(ks[i], ks[ks.len() - 1 - i]);
            }
        }
    }

    #[test]
    fn deficit_guard() {
        let k = KernelSpec::new(ALGEBRAIC_CUBIC).unwrap();
        let g = Grid1D::new(5.0, 32).unwrap();
        let e = ConvolutionPlan::new(g, &k, ConvolutionOptions::default()).unwrap_err();
        assert!(matches!(e, DiscretizationError::DeficitTooLarge { .. }));
    }

    #[test]
    fn constant_field_center_sees_one_minus_deficit() {
        let p = plan(LAPLACE_UNIT, 50.0, 1000, 1e-6);
        let g = p.grid();
        let out = p.convolve(&Field::new(g, vec![1.0; g.n()], 0.0).unwrap()).unwrap();
        let mid = g.n() / 2;
        assert!((out.values[mid] - (1.0 - p.deficit())).abs() < 1e-12);
        let op = p.nonlocal_operator(&Field::new(g, vec![0.3; g.n()], 0.0).unwrap()).unwrap();
        assert!(op.values[mid].abs() < 1e-12);
    }

    #[test]
    fn spike_reproduces_stencil() {
        let p = plan(STRETCHED_SQRT, 40.0, 256, 1e-8);
        let g = p.grid();
        let c = g.n() / 2;
        let mut v = vec![0.0; g.n()];
        v[c] = 1.0 / g.dx();
        let out = p.convolve(&Field::new(g, v, 0.0).unwrap()).unwrap();
        for i in 0..g.n() {
            let m = (i as isize - c as isize).unsigned_abs();
            let expect = p.weights()[m] / g.dx();
            assert!((out.values[i] - expect).abs() < 1e-14 * p.weights()[0] / g.dx() + 1e-12 * expect);
        }
    }

    #[test]
    fn bump_against_quadrature_oracle() {
        // ∫ (1/2)e^{-|y|} (1 - (y/10)^2)_+ dy at x = 0
        let exact = 2.0
            * integrate(|y: f64| 0.5 * (-y).exp() * (1.0 - y * y / 100.0), 0.0, 10.0, Tolerance::default())
                .unwrap()
                .value;
        let k = KernelSpec::new(LAPLACE_UNIT).unwrap();
        let g = Grid1D::with_spacing(60.0, 0.01).unwrap();
        let p = ConvolutionPlan::new(g, &k, ConvolutionOptions::default()).unwrap();
        let u0 = sample_initial_condition(g, &InitialShape::Bump { radius: 10.0 }).unwrap();
        let out = p.convolve(&u0).unwrap();
        assert!((out.interpolate(0.0) - exact).abs() < 1e-6);
    }

    #[test]
    fn split_matches_direct_only_path() {
        let direct = plan(ALGEBRAIC_CUBIC, 200.0, 800, 0.0);
        let split = plan(ALGEBRAIC_CUBIC, 200.0, 800, 1e-4);
        assert!(split.uses_fft() && !direct.uses_fft());
        let g = direct.grid();
        let u: Vec<f64> = (0..g.n()).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
        let f = Field::new(g, u, 0.0).unwrap();
        let a = direct.convolve(&f).unwrap();
        let b = split.convolve(&f).unwrap();
        let scale = a.max();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let p = plan(LAPLACE_UNIT, 20.0, 64, 1e-12);
        let other = Field::zeros(Grid1D::new(20.0, 66).unwrap());
        assert!(matches!(p.convolve(&other), Err(DiscretizationError::GridMismatch)));
    }

    #[test]
    fn egress_examples() {
        let g = Grid1D::new(100.0, 400).unwrap();
        let u0 = sample_initial_condition(g, &InitialShape::Bump { radius: 10.0 }).unwrap();
        assert_eq!(u0.boundary_egress(10.0), 0.0);
        assert_eq!(Field::new(g, vec![1.0; g.n()], 0.0).unwrap().boundary_egress(10.0), 1.0);
    }

    #[test]
    fn horizon_ceiling_shrinks_with_time() {
        let a = ConvolutionOptions::for_horizon(1e-3, 1.0, 10.0, 1000).far_weight_ceiling;
        let b = ConvolutionOptions::for_horizon(1e-3, 1.0, 30.0, 1000).far_weight_ceiling;
        assert!(b < a && a <= 1.0);
    }
}
