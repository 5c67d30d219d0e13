//! Numerical characteristics of ẋ = a(x) for smooth fields.
//!
//! The integrator is the classical 4th-order one-step method with a fixed
//! base step; every step is monitored by comparing one full step against two
//! half steps (Richardson), halving until the local error estimate meets the
//! tolerance. The step policy is deterministic, so trajectories are
//! bit-reproducible. Rough fields are rejected: the construction for rough
//! coefficients goes through mollified approximations only.
//!
//! Because the right-hand side is bounded by N = ‖a‖_∞, every trajectory
//! satisfies |x(t) − x(t₀)| ≤ N·|t − t₀| up to integrator tolerance, and the
//! backward source map y(t, x) = x(0; t, x) obeys the group law
//! y(t+s, x) = y(s, y(t, x)).

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::grid::{fmt_f64, BoxDomain};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Step-size policy for the characteristic integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControl {
    /// Largest step the integrator will take.
    pub base_step: f64,
    /// Local (per-step) error bound enforced by Richardson comparison.
    pub tolerance: f64,
    /// Halvings allowed per step before reporting step underflow.
    pub max_halvings: u32,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            base_step: 1.0 / 64.0,
            tolerance: 1e-10,
            max_halvings: 30,
        }
    }
}

impl StepControl {
    pub fn new(base_step: f64, tolerance: f64) -> Self {
        StepControl {
            base_step,
            tolerance,
            ..Default::default()
        }
    }

    /// Crude global-error scale for a horizon: steps × local tolerance.
    pub fn global_tolerance(&self, horizon: f64) -> f64 {
        (horizon.abs() / self.base_step).ceil().max(1.0) * self.tolerance
    }
}

fn rk4_step(field: &VectorField, x: &[f64], h: f64, out: &mut [f64], scratch: &mut Scratch) {
    let dim = x.len();
    let Scratch { k1, k2, k3, k4, tmp } = scratch;
    field.eval_into(x, k1);
    for i in 0..dim {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    field.eval_into(tmp, k2);
    for i in 0..dim {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    field.eval_into(tmp, k3);
    for i in 0..dim {
        tmp[i] = x[i] + h * k3[i];
    }
    field.eval_into(tmp, k4);
    for i in 0..dim {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

/// Integrates ẋ = a(x) from (t0, x0) to time t1 with adaptive halving.
pub fn integrate(
    field: &VectorField,
    t0: f64,
    x0: &[f64],
    t1: f64,
    control: &StepControl,
) -> Result<Vec<f64>> {
    integrate_observed(field, t0, x0, t1, control, |_, _| {})
}

/// Like [`integrate`] but reports every accepted state to `observer`.
pub fn integrate_observed(
    field: &VectorField,
    t0: f64,
    x0: &[f64],
    t1: f64,
    control: &StepControl,
    mut observer: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    if !field.is_smooth() {
        return Err(Error::RoughField(field.name().to_string()));
    }
    let dim = x0.len();
    let mut scratch = Scratch::new(dim);
    let mut x = x0.to_vec();
    let mut full = vec![0.0; dim];
    let mut half = vec![0.0; dim];
    let mut half2 = vec![0.0; dim];
    let mut t = t0;
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(x);
    }
    let dir = span.signum();
    observer(t, &x);
    while (t1 - t) * dir > 0.0 {
        let remaining = (t1 - t).abs();
        let mut h = control.base_step.min(remaining) * dir;
        let mut halvings = 0u32;
        loop {
            rk4_step(field, &x, h, &mut full, &mut scratch);
            rk4_step(field, &x, 0.5 * h, &mut half, &mut scratch);
            rk4_step(field, &half, 0.5 * h, &mut half2, &mut scratch);
            // 4th-order Richardson estimate of the half-step result's error.
            let err = full
                .iter()
                .zip(&half2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max)
                / 15.0;
            if err <= control.tolerance {
                break;
            }
            halvings += 1;
            if halvings > control.max_halvings {
                return Err(Error::StepUnderflow {
                    t,
                    x: x.clone(),
                    tolerance: control.tolerance,
                });
            }
            h *= 0.5;
        }
        x.copy_from_slice(&half2);
        t += h;
        observer(t, &x);
    }
    Ok(x)
}

/// Fixed-step integration (n uniform steps, no adaptivity). Used where the
/// result must depend smoothly on the starting point, e.g. finite-difference
/// Jacobian stencils.
pub fn integrate_fixed(
    field: &VectorField,
    t0: f64,
    x0: &[f64],
    t1: f64,
    n_steps: usize,
) -> Result<Vec<f64>> {
    if !field.is_smooth() {
        return Err(Error::RoughField(field.name().to_string()));
    }
    let dim = x0.len();
    let mut scratch = Scratch::new(dim);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; dim];
    let h = (t1 - t0) / n_steps as f64;
    for _ in 0..n_steps {
        rk4_step(field, &x, h, &mut next, &mut scratch);
        x.copy_from_slice(&next);
    }
    Ok(x)
}

/// The backward source map y(t, x) = x(0; t, x).
pub fn backward_map(
    field: &VectorField,
    t: f64,
    x: &[f64],
    control: &StepControl,
) -> Result<Vec<f64>> {
    integrate(field, t, x, 0.0, control)
}

/// Numerical realization of the backward source map of a smooth field over
/// a fixed horizon.
#[derive(Debug, Clone)]
pub struct FlowMap {
    field: VectorField,
    horizon: f64,
    control: StepControl,
}

impl FlowMap {
    pub fn new(field: VectorField, horizon: f64, control: StepControl) -> Result<Self> {
        if !field.is_smooth() {
            return Err(Error::RoughField(field.name().to_string()));
        }
        Ok(FlowMap {
            field,
            horizon,
            control,
        })
    }

    pub fn field(&self) -> &VectorField {
        &self.field
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// y(t, x), for |t| within the horizon.
    pub fn backward(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        if t.abs() > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "time {t} exceeds the flow horizon {}",
                self.horizon
            )));
        }
        backward_map(&self.field, t, x, &self.control)
    }

    /// x(t; 0, x₀), the forward characteristic.
    pub fn forward(&self, t: f64, x0: &[f64]) -> Result<Vec<f64>> {
        if t.abs() > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "time {t} exceeds the flow horizon {}",
                self.horizon
            )));
        }
        integrate(&self.field, 0.0, x0, t, &self.control)
    }

    /// Crude global displacement tolerance for this horizon.
    pub fn tolerance(&self) -> f64 {
        self.control.global_tolerance(self.horizon)
    }
}

/// Result of [`measure_preservation_check`].
#[derive(Debug, Clone, Serialize)]
pub struct MeasureReport {
    /// max over sample points of |det J − 1| for the backward-map Jacobian.
    pub max_jacobian_defect: f64,
    /// Monte-Carlo estimate of m(y(t,·)⁻¹(A)) / m(A) for a central cell A.
    pub cell_count_ratio: f64,
    /// Stencil spacing used for the central differences.
    pub stencil: f64,
    pub samples: usize,
}

/// Default finite-difference spacing: max(1e-5, Δt²).
pub fn default_jacobian_stencil(control: &StepControl) -> f64 {
    (control.base_step * control.base_step).max(1e-5)
}

/// Estimates the measure-preservation defect of x ↦ y(t, x) on `region`.
///
/// Jacobians come from central differences with spacing `stencil` around a
/// deterministic lattice of about `n_samples` points. All stencil corners
/// use the same fixed step count so the integration error is a smooth
/// function of the starting point and cancels in the differences.
pub fn measure_preservation_check(
    field: &VectorField,
    t: f64,
    region: &BoxDomain,
    n_samples: usize,
    stencil: f64,
    control: &StepControl,
) -> Result<MeasureReport> {
    let dim = region.dim();
    let per_axis = (n_samples as f64).powf(1.0 / dim as f64).round().max(2.0) as usize;
    let n_steps = (t.abs() / control.base_step).ceil().max(1.0) as usize;
    let lattice = BoxDomain::new(
        region.lower.clone(),
        region.upper.clone(),
        vec![per_axis; dim],
    )?;
    let mut max_defect = 0.0f64;
    let mut jac = vec![vec![0.0; dim]; dim];
    for i in 0..lattice.num_nodes() {
        let x = lattice.node(i);
        for k in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += stencil;
            xm[k] -= stencil;
            let yp = integrate_fixed(field, t, &xp, 0.0, n_steps)?;
            let ym = integrate_fixed(field, t, &xm, 0.0, n_steps)?;
            for r in 0..dim {
                jac[r][k] = (yp[r] - ym[r]) / (2.0 * stencil);
            }
        }
        let det = determinant(&mut jac.clone());
        max_defect = max_defect.max((det - 1.0).abs());
    }
    // Cell-count estimate: A is the central box of 1/4 linear size.
    let center: Vec<f64> = (0..dim)
        .map(|k| 0.5 * (region.lower[k] + region.upper[k]))
        .collect();
    let half: Vec<f64> = (0..dim)
        .map(|k| 0.125 * (region.upper[k] - region.lower[k]))
        .collect();
    let cell_measure: f64 = half.iter().map(|h| 2.0 * h).product();
    let count_axis = (4 * per_axis).min(128);
    let fine = BoxDomain::new(
        region.lower.clone(),
        region.upper.clone(),
        vec![count_axis; dim],
    )?;
    let mut hits = 0usize;
    for i in 0..fine.num_nodes() {
        let y = integrate_fixed(field, t, &fine.node(i), 0.0, n_steps)?;
        if (0..dim).all(|k| (y[k] - center[k]).abs() <= half[k]) {
            hits += 1;
        }
    }
    let region_volume: f64 = (0..dim).map(|k| region.upper[k] - region.lower[k]).product();
    let preimage = hits as f64 / fine.num_nodes() as f64 * region_volume;
    Ok(MeasureReport {
        max_jacobian_defect: max_defect,
        cell_count_ratio: preimage / cell_measure,
        stencil,
        samples: lattice.num_nodes(),
    })
}

#[allow(clippy::needless_range_loop)]
fn determinant(m: &mut [Vec<f64>]) -> f64 {
    let n = m.len();
    let mut det = 1.0;
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if m[row][col].abs() > m[pivot][col].abs() {
                pivot = row;
            }
        }
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(pivot, col);
            det = -det;
        }
        det *= m[col][col];
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    det
}

/// Writes a trajectory as CSV rows `t, x₁, …, x_n` at every accepted step.
pub fn write_trajectory_csv<W: Write>(
    field: &VectorField,
    t0: f64,
    x0: &[f64],
    t1: f64,
    control: &StepControl,
    mut w: W,
) -> Result<Vec<f64>> {
    let mut rows = Vec::new();
    let end = integrate_observed(field, t0, x0, t1, control, |t, x| {
        let mut row = fmt_f64(t);
        for v in x {
            row.push(',');
            row.push_str(&fmt_f64(*v));
        }
        rows.push(row);
    })?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    Ok(end)
}
