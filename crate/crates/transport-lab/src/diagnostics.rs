//! Quantitative checks of the transport-equation properties.
//!
//! Every inequality check produces a [`CheckRecord`] carrying the measured
//! value, the bound it is tested against, the slack `bound − measured`, and
//! the tolerance below which a negative slack counts as failure. Identities
//! are checked as two-sided inequalities on the defect. Reports serialize to
//! JSON and to a one-row-per-check CSV summary.
//!
//! The checks cover: the mass estimates for nonnegative solutions (inner and
//! outer ball masses controlled by the initial masses over balls enlarged or
//! shrunk by N·t), Lᵖ-norm histories with an isometry/contraction/irregular
//! classification, the modulus of continuity ‖u(t+h) − u(t)‖_p ≤
//! N·‖∇u₀‖_∞·(2 m(A_{u₀}))^{1/p}·|h| for C¹ data, renormalization defects of
//! compositions g(u), the stationary identity div(a·g(w)) = 0 for stationary
//! w, and Cauchy/oracle convergence tables for mollified sequences.

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::flow::StepControl;
use crate::grid::{fmt_f64, BoxDomain, GridFunction};
use crate::solver::{solve_smooth, InitialData, RadialBump, SolutionSequence};
use crate::weakform::{residual_report, weighted_divergence_weak, SpaceBump, TestBank};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::sync::Arc;

/// Short hex digest of any serializable inputs summary.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("serializable digest input");
    let hash = Sha256::digest(&json);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// One inequality (or identity-defect) check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub inputs_digest: String,
    pub measured: f64,
    pub bound: f64,
    /// bound − measured; negative means the bound was exceeded.
    pub slack: f64,
    /// Check passes iff slack ≥ −tolerance.
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new<T: Serialize>(
        name: impl Into<String>,
        inputs: &T,
        measured: f64,
        bound: f64,
        tolerance: f64,
    ) -> Self {
        let slack = bound - measured;
        CheckRecord {
            name: name.into(),
            inputs_digest: digest_of(inputs),
            measured,
            bound,
            slack,
            tolerance,
            pass: slack >= -tolerance,
        }
    }
}

/// Structured verification record: named checks plus run metadata.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub metadata: serde_json::Value,
    pub checks: Vec<CheckRecord>,
}

impl DiagnosticsReport {
    pub fn new(metadata: serde_json::Value) -> Self {
        DiagnosticsReport {
            metadata,
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, record: CheckRecord) {
        self.checks.push(record);
    }

    pub fn extend(&mut self, other: DiagnosticsReport) {
        self.checks.extend(other.checks);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&CheckRecord> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per check: name, measured, bound, slack, tolerance, pass.
    pub fn write_csv_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "name,measured,bound,slack,tolerance,pass")?;
        for c in &self.checks {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                c.name,
                fmt_f64(c.measured),
                fmt_f64(c.bound),
                fmt_f64(c.slack),
                fmt_f64(c.tolerance),
                c.pass
            )?;
        }
        Ok(())
    }
}

fn ball_mass(u: &GridFunction, radius: f64, inside: bool) -> f64 {
    let domain = &u.domain;
    let r2 = radius * radius;
    let mut acc = 0.0;
    for (i, &v) in u.values.iter().enumerate() {
        let x = domain.node(i);
        let d2: f64 = x.iter().map(|c| c * c).sum();
        if (d2 < r2) == inside {
            acc += v;
        }
    }
    acc * domain.cell_volume()
}

/// Boundary-layer quadrature tolerance for center-in-ball classification:
/// cells within √n·Δx of either sphere can be misassigned on either side, so
/// the tolerance is the sup of the integrand times both annulus areas.
fn ball_tolerance(dim: usize, dx: f64, radius_u: f64, sup_u: f64, radius_u0: f64, sup_u0: f64) -> f64 {
    let layer = (dim as f64).sqrt() * dx;
    let annulus = |r: f64| 2.0 * std::f64::consts::PI * (r + layer) * 2.0 * layer;
    sup_u * annulus(radius_u) + sup_u0 * annulus(radius_u0)
}

/// Mass estimates for nonnegative solutions: for each slice with t > 0 and
/// each R, the inner mass over |x| < R is checked against the initial mass
/// over |x| < R + Nt, and the outer mass over |x| > R + Nt against the
/// initial mass over |x| > R. Negative solutions are replaced by |u|
/// (legitimate, since |u| solves the same problem), noted in check names.
pub fn apriori_check(
    u: &[GridFunction],
    u0: &GridFunction,
    n_sup: f64,
    radii: &[f64],
) -> Result<DiagnosticsReport> {
    let domain = &u0.domain;
    let dx = domain.spacing().iter().cloned().fold(0.0f64, f64::max);
    let needs_abs = u
        .iter()
        .chain(std::iter::once(u0))
        .any(|g| g.values.iter().any(|&v| v < 0.0));
    let tag = if needs_abs { "abs(u)" } else { "u" };
    let u0w = if needs_abs { u0.map(f64::abs) } else { u0.clone() };
    let sup_u0 = u0w.lp_norm(f64::INFINITY);
    let mut report = DiagnosticsReport::new(serde_json::json!({
        "check": "apriori",
        "applied_to": tag,
        "n_sup": n_sup,
        "radii": radii,
    }));
    for slice in u.iter().filter(|s| s.time > 0.0) {
        let t = slice.time;
        let sw = if needs_abs { slice.map(f64::abs) } else { slice.clone() };
        let sup_ut = sw.lp_norm(f64::INFINITY);
        for &radius in radii {
            let grown = radius + n_sup * t;
            let half_extent = (0..domain.dim())
                .map(|k| domain.upper[k].min(-domain.lower[k]))
                .fold(f64::INFINITY, f64::min);
            if grown > half_extent {
                return Err(Error::DomainTooSmall(format!(
                    "ball of radius R + N*t = {grown:.4} exceeds the domain half-extent {half_extent:.4}"
                )));
            }
            let inputs = (tag, t, radius, n_sup, &domain.shape);
            let tol = ball_tolerance(domain.dim(), dx, radius, sup_ut, grown, sup_u0);
            let inner = ball_mass(&sw, radius, true);
            let inner_bound = ball_mass(&u0w, grown, true);
            report.push(CheckRecord::new(
                format!("apriori_inner[{tag}] t={t} R={radius}"),
                &inputs,
                inner,
                inner_bound,
                tol,
            ));
            let outer = ball_mass(&sw, grown, false);
            let outer_bound = ball_mass(&u0w, radius, false);
            report.push(CheckRecord::new(
                format!("apriori_outer[{tag}] t={t} R={radius}"),
                &inputs,
                outer,
                outer_bound,
                tol,
            ));
        }
    }
    Ok(report)
}

/// Three-way classification of a norm history. This is an observable proxy
/// only: isometry is consistent with (not proof of) conservative dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormBehavior {
    Isometric,
    Contractive,
    Irregular,
}

#[derive(Debug, Clone, Serialize)]
pub struct NormHistory {
    pub p: f64,
    pub entries: Vec<(f64, f64)>,
    pub behavior: NormBehavior,
    pub rel_tolerance: f64,
    /// max relative drift |‖u(t)‖ − ‖u(0)‖| / ‖u(0)‖ over the history.
    pub max_drift: f64,
}

pub fn norm_history(u: &[GridFunction], p: f64, rel_tolerance: f64) -> NormHistory {
    let entries: Vec<(f64, f64)> = u.iter().map(|s| (s.time, s.lp_norm(p))).collect();
    let base = entries.first().map_or(0.0, |e| e.1);
    let scale = base.max(f64::MIN_POSITIVE);
    let max_drift = entries
        .iter()
        .map(|&(_, n)| (n - base).abs() / scale)
        .fold(0.0f64, f64::max);
    let behavior = if max_drift <= rel_tolerance {
        NormBehavior::Isometric
    } else if entries
        .windows(2)
        .all(|w| w[1].1 <= w[0].1 * (1.0 + rel_tolerance))
    {
        NormBehavior::Contractive
    } else {
        NormBehavior::Irregular
    };
    NormHistory {
        p,
        entries,
        behavior,
        rel_tolerance,
        max_drift,
    }
}

/// Modulus-of-continuity check: the initial datum itself is the C¹ witness,
/// so ‖u(t+h) − u(t)‖_p ≤ N·‖∇u₀‖_∞·(2 m(A_{u₀}))^{1/p}·|h| must hold up to
/// discretization tolerance. The support measure is computed by quadrature
/// on the sampled datum; `tolerance` absorbs flow and quadrature noise.
#[allow(clippy::too_many_arguments)]
pub fn modulus_check(
    field: &VectorField,
    bump: &RadialBump,
    domain: &BoxDomain,
    base_time: f64,
    increments: &[f64],
    p: f64,
    control: &StepControl,
    tolerance: f64,
) -> Result<DiagnosticsReport> {
    if !domain.contains_expanded(&bump.center, bump.r_support, 0.0) {
        return Err(Error::DomainTooSmall(
            "initial datum not compactly supported inside the domain".into(),
        ));
    }
    let u0 = InitialData::from_bump(bump);
    let sampled = u0.sampled(domain);
    let nonzero = sampled.values.iter().filter(|v| **v != 0.0).count();
    let measure_quad = nonzero as f64 * domain.cell_volume();
    let grad_sup = bump.gradient_sup();
    let n_sup = field.sup_norm();
    let mut times = vec![base_time];
    times.extend(increments.iter().map(|h| base_time + h));
    let u = solve_smooth(field, &u0, domain, &times, control)?;
    let mut report = DiagnosticsReport::new(serde_json::json!({
        "check": "modulus",
        "field": field.name(),
        "p": p,
        "base_time": base_time,
        "grad_sup": grad_sup,
        "support_measure_quadrature": measure_quad,
    }));
    for (h, slice) in increments.iter().zip(&u[1..]) {
        let diff = GridFunction {
            domain: domain.clone(),
            time: slice.time,
            values: slice
                .values
                .iter()
                .zip(&u[0].values)
                .map(|(a, b)| a - b)
                .collect(),
        };
        let measured = diff.lp_norm(p);
        let bound = n_sup * grad_sup * (2.0 * measure_quad).powf(1.0 / p) * h.abs();
        report.push(CheckRecord::new(
            format!("modulus[p={p}] t={base_time} h={h}"),
            &(field.name(), p, base_time, h),
            measured,
            bound,
            tolerance,
        ));
    }
    Ok(report)
}

/// A composition g applied nodewise in renormalization checks.
#[derive(Clone)]
pub enum Renormalization {
    Identity,
    Square,
    Abs,
    /// (|u| − r)⁺
    ShiftedPositive(f64),
    /// max(−k, min(g(u), k))
    Cutoff { inner: Box<Renormalization>, k: f64 },
    Custom {
        g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        label: String,
    },
}

impl Renormalization {
    pub fn eval(&self, v: f64) -> f64 {
        match self {
            Renormalization::Identity => v,
            Renormalization::Square => v * v,
            Renormalization::Abs => v.abs(),
            Renormalization::ShiftedPositive(r) => (v.abs() - r).max(0.0),
            Renormalization::Cutoff { inner, k } => inner.eval(v).clamp(-k, *k),
            Renormalization::Custom { g, .. } => g(v),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Renormalization::Identity => "identity".into(),
            Renormalization::Square => "square".into(),
            Renormalization::Abs => "abs".into(),
            Renormalization::ShiftedPositive(r) => format!("shifted_positive[r={r}]"),
            Renormalization::Cutoff { inner, k } => format!("cutoff[{}, k={k}]", inner.label()),
            Renormalization::Custom { label, .. } => label.clone(),
        }
    }

    /// The standard family: u², |u|, (|u| − r)⁺ over the given shifts.
    pub fn standard_family(shifts: &[f64]) -> Vec<Renormalization> {
        let mut family = vec![Renormalization::Square, Renormalization::Abs];
        family.extend(shifts.iter().map(|&r| Renormalization::ShiftedPositive(r)));
        family
    }
}

impl std::fmt::Debug for Renormalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Renormalization::{}", self.label())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormDefect {
    pub g: String,
    /// max |weak residual| of g(u) with initial data g(u₀) over the bank.
    pub defect: f64,
    pub mean_abs: f64,
}

/// Applies g nodewise to the solution and its initial data and measures the
/// weak residual of the composed pair over the bank.
pub fn renorm_defect(
    u: &[GridFunction],
    u0: &GridFunction,
    field: &VectorField,
    g: &Renormalization,
    bank: &TestBank,
) -> Result<RenormDefect> {
    let gu: Vec<GridFunction> = u.iter().map(|s| s.map(|v| g.eval(v))).collect();
    let gu0 = u0.map(|v| g.eval(v));
    let report = residual_report(&gu, &gu0, field, bank)?;
    Ok(RenormDefect {
        g: g.label(),
        defect: report.max_abs,
        mean_abs: report.mean_abs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryRenormReport {
    /// max |∫ u_stat a·∇φ| over the bank: the stationarity precondition.
    pub precondition_residual: f64,
    pub precondition_pass: bool,
    /// max |∫ g(u_stat) a·∇φ| over the bank.
    pub residual: f64,
    pub g: String,
}

/// Checks div(a·g(w)) = 0 weakly for a stationary w (div(a·w) = 0 weakly).
/// If the precondition fails beyond `pre_tolerance` the report still carries
/// the measured residual of w itself.
pub fn stationary_renorm_check(
    u_stat: &GridFunction,
    field: &VectorField,
    g: &Renormalization,
    bank: &[SpaceBump],
    pre_tolerance: f64,
) -> StationaryRenormReport {
    let domain = &u_stat.domain;
    let pre = bank
        .iter()
        .map(|phi| weighted_divergence_weak(field, Some(u_stat), phi, domain).abs())
        .fold(0.0f64, f64::max);
    let gu = u_stat.map(|v| g.eval(v));
    let residual = bank
        .iter()
        .map(|phi| weighted_divergence_weak(field, Some(&gu), phi, domain).abs())
        .fold(0.0f64, f64::max);
    StationaryRenormReport {
        precondition_residual: pre,
        precondition_pass: pre <= pre_tolerance,
        residual,
        g: g.label(),
    }
}

/// Convergence table of a mollified sequence: consecutive L² distances and,
/// when an oracle is supplied, distances to it, with per-time decay rates
/// fitted as log-log slopes against ν.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub nus: Vec<u32>,
    pub times: Vec<f64>,
    /// consecutive[k][j] = ‖u_{ν_{k+1}}(t_j) − u_{ν_k}(t_j)‖₂
    pub consecutive: Vec<Vec<f64>>,
    /// oracle_distances[k][j] = ‖u_{ν_k}(t_j) − oracle(t_j)‖₂
    pub oracle_distances: Option<Vec<Vec<f64>>>,
    /// Fitted slope of ln(distance) vs ln(ν) per output time, from oracle
    /// distances when available, otherwise from consecutive distances.
    pub fitted_rates: Vec<f64>,
}

/// Exact reference solution (t, x) ↦ u(t, x) for convergence tables.
pub type OracleFn<'a> = &'a dyn Fn(f64, &[f64]) -> f64;

pub fn convergence_study(seq: &SolutionSequence, oracle: Option<OracleFn>) -> ConvergenceStudy {
    let oracle_distances = oracle.map(|f| {
        seq.solutions
            .iter()
            .map(|per_time| {
                per_time
                    .iter()
                    .map(|s| {
                        let exact = GridFunction::sample(&s.domain, s.time, |x| f(s.time, x));
                        s.l2_distance(&exact)
                    })
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    let n_times = seq.times.len();
    let mut fitted_rates = Vec::with_capacity(n_times);
    for j in 0..n_times {
        let series: Vec<(f64, f64)> = match &oracle_distances {
            Some(table) => seq
                .nus
                .iter()
                .zip(table)
                .map(|(&nu, row)| (nu as f64, row[j]))
                .collect(),
            None => seq
                .nus
                .iter()
                .skip(1)
                .zip(&seq.cauchy_table)
                .map(|(&nu, row)| (nu as f64, row[j]))
                .collect(),
        };
        fitted_rates.push(log_log_slope(&series));
    }
    ConvergenceStudy {
        nus: seq.nus.clone(),
        times: seq.times.clone(),
        consecutive: seq.cauchy_table.clone(),
        oracle_distances,
        fitted_rates,
    }
}

/// Least-squares slope of ln(y) against ln(x), ignoring non-positive y.
pub fn log_log_slope(series: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Writes the convergence table as CSV: one row per (ν, time).
pub fn write_convergence_csv<W: Write>(study: &ConvergenceStudy, mut w: W) -> Result<()> {
    writeln!(w, "nu,time,consecutive_distance,oracle_distance")?;
    for (k, &nu) in study.nus.iter().enumerate() {
        for (j, &t) in study.times.iter().enumerate() {
            let consecutive = if k + 1 < study.nus.len() {
                fmt_f64(study.consecutive[k][j])
            } else {
                String::new()
            };
            let oracle = study
                .oracle_distances
                .as_ref()
                .map(|table| fmt_f64(table[k][j]))
                .unwrap_or_default();
            writeln!(w, "{nu},{},{consecutive},{oracle}", fmt_f64(t))?;
        }
    }
    Ok(())
}
