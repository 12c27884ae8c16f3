//! Explicit method-of-lines stepping of `u_t = J∗u - u + f(u)` with range
//! guards, egress monitoring and snapshots at the nearest step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretization::{ConvolutionOptions, ConvolutionPlan, DiscretizationError, Field};
use crate::kernels::KernelSpec;
use crate::reaction::ReactionSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error("value {value:e} at x = {x} left [-{tol:e}, 1 + {tol:e}] at t = {time}")]
    RangeViolation { time: f64, x: f64, value: f64, tol: f64 },
    #[error("non-finite value at x = {x}, t = {time}")]
    NonFinite { time: f64, x: f64 },
    #[error("at t = {time}: {source}")]
    Discretization {
        time: f64,
        #[source]
        source: DiscretizationError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub scheme: Scheme,
    pub dt: f64,
    pub safety: f64,
    pub t_max: f64,
    pub snapshot_times: Vec<f64>,
    pub range_tol: f64,
    /// Width of the outer band, as a fraction of `L`, watched for egress.
    pub egress_buffer_fraction: f64,
    /// Runs stop once the egress exceeds this value.
    pub egress_threshold: f64,
    pub deficit_max: f64,
}

impl StepperConfig {
    /// Defaults with `dt` from [`stable_dt`] at safety 0.25.
    pub fn new(reaction: Option<&ReactionSpec>, t_max: f64, snapshot_times: Vec<f64>) -> Self {
        let safety = 0.25;
        StepperConfig {
            scheme: Scheme::Rk4,
            dt: stable_dt_for(reaction, safety),
            safety,
            t_max,
            snapshot_times,
            range_tol: 1e-8,
            egress_buffer_fraction: 0.1,
            egress_threshold: 1e-4,
            deficit_max: 1e-3,
        }
    }

    /// Number of steps and the step actually used: `dt` is shrunk so that an
    /// integer number of steps lands on `t_max`.
    pub fn step_count(&self) -> (usize, f64) {
        if self.t_max == 0.0 {
            return (0, self.dt);
        }
        let steps = (self.t_max / self.dt - 1e-9).ceil().max(1.0) as usize;
        (steps, self.t_max / steps as f64)
    }

    fn validate(&self, reaction: Option<&ReactionSpec>) -> Result<(), IntegratorError> {
        let bad = |m: String| Err(IntegratorError::InvalidConfig(m));
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return bad(format!("safety must lie in (0, 1], got {}", self.safety));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return bad(format!("t_max must be finite and nonnegative, got {}", self.t_max));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        let limit = stable_dt_for(reaction, self.safety);
        if self.dt > limit * (1.0 + 1e-12) {
            return bad(format!("dt = {} exceeds the stability bound {limit}", self.dt));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return bad("snapshot times must be sorted".into());
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_max * (1.0 + 1e-12))) {
            return bad(format!("snapshot times must lie in [0, {}]", self.t_max));
        }
        if !(self.egress_buffer_fraction > 0.0 && self.egress_buffer_fraction < 1.0) {
            return bad("egress buffer fraction must lie in (0, 1)".into());
        }
        Ok(())
    }
}

/// `safety · 2 / (1 + max|f'|)`.
pub fn stable_dt(reaction: &ReactionSpec, safety: f64) -> f64 {
    safety * 2.0 / (1.0 + reaction.max_abs_fprime())
}

fn stable_dt_for(reaction: Option<&ReactionSpec>, safety: f64) -> f64 {
    match reaction {
        Some(r) => stable_dt(r, safety),
        None => safety * 2.0,
    }
}

fn rhs(plan: &ConvolutionPlan, reaction: Option<&ReactionSpec>, u: &[f64], out: &mut [f64]) {
    plan.convolve_into(u, out);
    match reaction {
        Some(r) => {
            for (o, v) in out.iter_mut().zip(u) {
                *o += r.f(*v) - v;
            }
        }
        None => {
            for (o, v) in out.iter_mut().zip(u) {
                *o -= v;
            }
        }
    }
}

/// Advances one step of `du/dt = (J∗u - u) + f(u)`. `reaction = None` is the
/// linear problem `f ≡ 0`.
pub fn step(
    state: &Field,
    plan: &ConvolutionPlan,
    reaction: Option<&ReactionSpec>,
    dt: f64,
    scheme: Scheme,
    range_tol: f64,
) -> Result<Field, IntegratorError> {
    if state.grid != plan.grid() {
        return Err(IntegratorError::Discretization { time: state.time, source: DiscretizationError::GridMismatch });
    }
    let n = state.values.len();
    let u = &state.values;
    let mut next = vec![0.0; n];
    match scheme {
        Scheme::Euler => {
            rhs(plan, reaction, u, &mut next);
            for (v, u0) in next.iter_mut().zip(u) {
                *v = u0 + dt * *v;
            }
        }
        Scheme::Rk4 => {
            let mut k1 = vec![0.0; n];
            let mut k2 = vec![0.0; n];
            let mut k3 = vec![0.0; n];
            let mut k4 = vec![0.0; n];
            let mut tmp = vec![0.0; n];
            rhs(plan, reaction, u, &mut k1);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k1[i];
            }
            rhs(plan, reaction, &tmp, &mut k2);
            for i in 0..n {
                tmp[i] = u[i] + 0.5 * dt * k2[i];
            }
            rhs(plan, reaction, &tmp, &mut k3);
            for i in 0..n {
                tmp[i] = u[i] + dt * k3[i];
            }
            rhs(plan, reaction, &tmp, &mut k4);
            for i in 0..n {
                next[i] = u[i] + dt / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
            }
        }
    }
    let time = state.time + dt;
    for (i, v) in next.iter().enumerate() {
        if !v.is_finite() {
            return Err(IntegratorError::NonFinite { time, x: state.grid.coordinate(i) });
        }
        if *v < -range_tol || *v > 1.0 + range_tol {
            return Err(IntegratorError::RangeViolation {
                time,
                x: state.grid.coordinate(i),
                value: *v,
                tol: range_tol,
            });
        }
    }
    Ok(Field { grid: state.grid, values: next, time })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub mass: f64,
    pub egress: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgressAbort {
    pub time: f64,
    pub egress: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub kernel: KernelSpec,
    pub reaction: Option<ReactionSpec>,
    pub config: StepperConfig,
    /// Step actually used (see [`StepperConfig::step_count`]).
    pub dt: f64,
    pub deficit: f64,
    pub near_radius: usize,
    pub snapshots: Vec<Field>,
    pub diagnostics: Vec<Diagnostics>,
    /// Set when the run stopped early on the egress guard.
    pub aborted: Option<EgressAbort>,
}

impl SimulationRun {
    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Field> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.time - t).abs().total_cmp(&(b.time - t).abs()))
            .filter(|f| (f.time - t).abs() <= 0.5 * self.dt + 1e-12)
    }
}

fn diagnose(field: &Field, buffer: f64) -> Diagnostics {
    Diagnostics {
        t: field.time,
        min_u: field.min(),
        max_u: field.max(),
        mass: field.mass(),
        egress: field.boundary_egress(buffer),
    }
}

/// Integrates from `initial` to `t_max`, building a convolution plan whose
/// FFT share is sized for the run length.
pub fn run(
    kernel: &KernelSpec,
    reaction: Option<&ReactionSpec>,
    initial: Field,
    config: &StepperConfig,
) -> Result<SimulationRun, IntegratorError> {
    config.validate(reaction)?;
    let grid = initial.grid;
    let growth = reaction.map_or(0.0, |r| r.max_abs_fprime());
    let options = ConvolutionOptions::for_horizon(config.deficit_max, growth, config.t_max, grid.n());
    let plan = ConvolutionPlan::new(grid, kernel, options)
        .map_err(|source| IntegratorError::Discretization { time: 0.0, source })?;
    run_with_plan(kernel, reaction, initial, config, &plan)
}

/// As [`run`], with a caller-supplied plan.
pub fn run_with_plan(
    kernel: &KernelSpec,
    reaction: Option<&ReactionSpec>,
    initial: Field,
    config: &StepperConfig,
    plan: &ConvolutionPlan,
) -> Result<SimulationRun, IntegratorError> {
    config.validate(reaction)?;
    let (steps, dt) = config.step_count();
    let buffer = config.egress_buffer_fraction * initial.grid.half_width();
    // step index for every requested snapshot
    let targets: Vec<usize> = config.snapshot_times.iter().map(|t| ((t / dt).round() as usize).min(steps)).collect();
    let mut out = SimulationRun {
        kernel: *kernel,
        reaction: reaction.copied(),
        config: config.clone(),
        dt,
        deficit: plan.deficit(),
        near_radius: plan.near_radius(),
        snapshots: Vec::with_capacity(targets.len()),
        diagnostics: Vec::with_capacity(steps + 1),
        aborted: None,
    };
    let mut state = Field { time: 0.0, ..initial };
    let mut next_target = 0;
    let record = |state: &Field, k: usize, next_target: &mut usize, out: &mut SimulationRun| {
        while *next_target < targets.len() && targets[*next_target] == k {
            out.snapshots.push(state.clone());
            *next_target += 1;
        }
    };
    out.diagnostics.push(diagnose(&state, buffer));
    record(&state, 0, &mut next_target, &mut out);
    for k in 1..=steps {
        let mut next = step(&state, plan, reaction, dt, config.scheme, config.range_tol)?;
        next.time = k as f64 * dt;
        state = next;
        let d = diagnose(&state, buffer);
        out.diagnostics.push(d);
        record(&state, k, &mut next_target, &mut out);
        if d.egress > config.egress_threshold {
            out.aborted = Some(EgressAbort { time: state.time, egress: d.egress, threshold: config.egress_threshold });
            break;
        }
    }
    Ok(out)
}
