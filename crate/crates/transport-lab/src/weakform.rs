//! Weak-identity residuals against a bank of compactly supported test
//! functions.
//!
//! A candidate solution u with initial datum u₀ is tested through the
//! quadrature value of
//!
//! ```text
//! R(f) = ∫∫ u·(∂_t f + a·∇f) dt dx + ∫ u₀(x) f(0, x) dx,
//! ```
//!
//! which vanishes for exact generalized solutions. Space is integrated by the
//! composite midpoint rule on the solution grid, time by the trapezoid rule
//! on the uniform output partition; the test function and its derivatives
//! are evaluated analytically. Test functions are tensor products of scaled,
//! centered copies of the kernel bump, so all evaluations factor per axis.
//!
//! The bank is a finite, seeded surrogate for "for all f": centers uniform
//! over the space-time box, support widths log-uniform between four cells
//! and a quarter of the domain (eight slices and half the horizon in time).

use crate::bump::{beta, beta_deriv, beta_max};
use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::grid::{BoxDomain, GridFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Centered unit bump ψ with support [-1/2, 1/2], normalized to peak 1.
fn psi(xi: f64) -> f64 {
    beta(xi + 0.5) / beta_max()
}

fn psi_deriv(xi: f64) -> f64 {
    beta_deriv(xi + 0.5) / beta_max()
}

/// Tensor-product spatial bump: φ(x) = ∏ ψ((x_k − c_k)/w_k), supported on
/// the box |x_k − c_k| ≤ w_k/2.
#[derive(Debug, Clone, Serialize)]
pub struct SpaceBump {
    pub center: Vec<f64>,
    /// Full support width per axis.
    pub widths: Vec<f64>,
}

impl SpaceBump {
    pub fn new(center: Vec<f64>, widths: Vec<f64>) -> Self {
        assert_eq!(center.len(), widths.len());
        assert!(widths.iter().all(|w| *w > 0.0));
        SpaceBump { center, widths }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v = 1.0;
        for ((xk, ck), wk) in x.iter().zip(&self.center).zip(&self.widths) {
            v *= psi((xk - ck) / wk);
            if v == 0.0 {
                return 0.0;
            }
        }
        v
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let dim = x.len();
        let factors: Vec<f64> = (0..dim)
            .map(|k| psi((x[k] - self.center[k]) / self.widths[k]))
            .collect();
        (0..dim)
            .map(|k| {
                let mut g = psi_deriv((x[k] - self.center[k]) / self.widths[k]) / self.widths[k];
                for (j, fac) in factors.iter().enumerate() {
                    if j != k {
                        g *= fac;
                    }
                }
                g
            })
            .collect()
    }

    /// Index range [lo, hi) of grid nodes inside the support along an axis.
    fn axis_range(&self, domain: &BoxDomain, axis: usize) -> (usize, usize) {
        let dx = domain.spacing()[axis];
        let lo_x = self.center[axis] - 0.5 * self.widths[axis];
        let hi_x = self.center[axis] + 0.5 * self.widths[axis];
        let lo = (((lo_x - domain.lower[axis]) / dx - 0.5).ceil().max(0.0)) as usize;
        let hi = ((((hi_x - domain.lower[axis]) / dx - 0.5).floor()) as isize + 1)
            .clamp(0, domain.shape[axis] as isize) as usize;
        (lo.min(domain.shape[axis]), hi)
    }

    /// Per-axis tables of ψ and ψ′/w at the node coordinates in the support.
    fn axis_tables(&self, domain: &BoxDomain) -> Vec<AxisTable> {
        (0..domain.dim())
            .map(|k| {
                let (lo, hi) = self.axis_range(domain, k);
                let mut values = Vec::with_capacity(hi.saturating_sub(lo));
                let mut derivs = Vec::with_capacity(hi.saturating_sub(lo));
                for i in lo..hi {
                    let xi = (domain.axis_coord(k, i) - self.center[k]) / self.widths[k];
                    values.push(psi(xi));
                    derivs.push(psi_deriv(xi) / self.widths[k]);
                }
                AxisTable { lo, values, derivs }
            })
            .collect()
    }
}

struct AxisTable {
    lo: usize,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

/// Compactly supported C¹ test function f(t, x) on [0, T) × domain interior.
///
/// The time factor is the same centered bump; its support may clip at t = 0,
/// in which case the initial-data term of the weak identity is active.
#[derive(Debug, Clone, Serialize)]
pub struct TestFunction {
    pub t_center: f64,
    /// Full temporal support width.
    pub t_width: f64,
    pub space: SpaceBump,
}

impl TestFunction {
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        psi((t - self.t_center) / self.t_width) * self.space.value(x)
    }

    pub fn dt(&self, t: f64, x: &[f64]) -> f64 {
        psi_deriv((t - self.t_center) / self.t_width) / self.t_width * self.space.value(x)
    }

    pub fn grad_x(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let tv = psi((t - self.t_center) / self.t_width);
        self.space.gradient(x).into_iter().map(|g| tv * g).collect()
    }

    fn time_factor(&self, t: f64) -> (f64, f64) {
        let xi = (t - self.t_center) / self.t_width;
        (psi(xi), psi_deriv(xi) / self.t_width)
    }
}

/// Seeded, reproducible collection of test functions.
#[derive(Debug, Clone, Serialize)]
pub struct TestBank {
    pub seed: u64,
    pub members: Vec<TestFunction>,
}

impl TestBank {
    /// Draws `size` test functions for a solve on `domain` × [0, horizon]
    /// whose time partition has `time_slices` intervals. Spatial widths are
    /// log-uniform in [4Δx, extent/4], temporal widths in [8Δt, horizon/2];
    /// centers are uniform over the admissible region, where supports stay
    /// inside [0, horizon) × interior. Identical seeds give identical banks.
    pub fn generate(
        seed: u64,
        size: usize,
        domain: &BoxDomain,
        horizon: f64,
        time_slices: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = horizon / time_slices as f64;
        let spacing = domain.spacing();
        let mut members = Vec::with_capacity(size);
        for _ in 0..size {
            let mut center = Vec::with_capacity(domain.dim());
            let mut widths = Vec::with_capacity(domain.dim());
            for (k, &dx) in spacing.iter().enumerate() {
                let extent = domain.upper[k] - domain.lower[k];
                let w_min = 4.0 * dx;
                let w_max = (extent / 4.0).max(w_min * (1.0 + 1e-9));
                let w = log_uniform(&mut rng, w_min, w_max);
                // keep the support one cell inside the boundary
                let margin = 0.5 * w + dx;
                let c = rng.gen_range(domain.lower[k] + margin..domain.upper[k] - margin);
                center.push(c);
                widths.push(w);
            }
            let t_min = 8.0 * dt;
            let t_max = (0.5 * horizon).max(t_min * (1.0 + 1e-9));
            let t_width = log_uniform(&mut rng, t_min, t_max);
            // t_center may sit below t_width/2: the support then clips at
            // t = 0 and the initial-data term becomes active.
            let t_center = rng.gen_range(0.0..(horizon - 0.5 * t_width - dt).max(dt));
            members.push(TestFunction {
                t_center,
                t_width,
                space: SpaceBump::new(center, widths),
            });
        }
        TestBank { seed, members }
    }

    /// Spatial-only bank for single-slice (stationary) checks.
    pub fn spatial(seed: u64, size: usize, domain: &BoxDomain) -> Vec<SpaceBump> {
        TestBank::generate(seed, size, domain, 1.0, 16)
            .members
            .into_iter()
            .map(|f| f.space)
            .collect()
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// Field values cached at every grid node (component-major per node).
pub struct FieldGridCache {
    dim: usize,
    values: Vec<f64>,
}

impl FieldGridCache {
    pub fn build(field: &VectorField, domain: &BoxDomain) -> Self {
        let dim = domain.dim();
        let n = domain.num_nodes();
        let values: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut out = vec![0.0; dim];
                field.eval_into(&domain.node(i), &mut out);
                out
            })
            .collect();
        FieldGridCache { dim, values }
    }

    #[inline]
    fn get(&self, node: usize) -> &[f64] {
        &self.values[node * self.dim..(node + 1) * self.dim]
    }
}

fn validate_times(u: &[GridFunction]) -> Result<f64> {
    if u.len() < 2 {
        return Err(Error::UnresolvedTestFunction(
            "need at least two time slices".into(),
        ));
    }
    let t0 = u[0].time;
    if t0.abs() > 1e-12 {
        return Err(Error::UnresolvedTestFunction(format!(
            "time partition must start at 0, found {t0}"
        )));
    }
    let dt = u[1].time - u[0].time;
    for w in u.windows(2) {
        if ((w[1].time - w[0].time) - dt).abs() > 1e-10 * dt.abs().max(1.0) {
            return Err(Error::UnresolvedTestFunction(
                "time partition is not uniform".into(),
            ));
        }
    }
    Ok(dt)
}

/// Quadrature of the weak identity for one test function.
pub fn weak_residual(
    u: &[GridFunction],
    u0: &GridFunction,
    field: &VectorField,
    f: &TestFunction,
) -> Result<f64> {
    let cache = FieldGridCache::build(field, &u[0].domain);
    weak_residual_cached(u, u0, f, &cache)
}

/// Same as [`weak_residual`] with a prebuilt field cache (used by reports).
pub fn weak_residual_cached(
    u: &[GridFunction],
    u0: &GridFunction,
    f: &TestFunction,
    cache: &FieldGridCache,
) -> Result<f64> {
    let domain = &u[0].domain;
    let dt = validate_times(u)?;
    if f.t_width < 8.0 * dt - 1e-12 {
        return Err(Error::UnresolvedTestFunction(format!(
            "temporal support {} spans fewer than 8 slices of dt = {dt}",
            f.t_width
        )));
    }
    let dv = domain.cell_volume();
    let tables = f.space.axis_tables(domain);
    if tables.iter().any(|t| t.values.is_empty()) {
        // support falls between nodes; the quadrature sees nothing
        return Ok(0.0);
    }
    let dim = domain.dim();
    let mut acc = 0.0;
    for (k, slice) in u.iter().enumerate() {
        let (tf, tdf) = f.time_factor(slice.time);
        if tf == 0.0 && tdf == 0.0 {
            continue;
        }
        let w_t = if k == 0 || k == u.len() - 1 { 0.5 } else { 1.0 };
        let s = support_sum(slice, cache, &tables, dim, tf, tdf);
        acc += w_t * dt * s * dv;
    }
    // initial-data term
    let (tf0, _) = f.time_factor(0.0);
    if tf0 != 0.0 {
        let s0 = support_sum_values_only(u0, &tables, dim);
        acc += tf0 * s0 * dv;
    }
    Ok(acc)
}

/// Σ over the support box of u·(T′·φ + T·a·∇φ) at one time slice.
fn support_sum(
    slice: &GridFunction,
    cache: &FieldGridCache,
    tables: &[AxisTable],
    dim: usize,
    tf: f64,
    tdf: f64,
) -> f64 {
    let domain = &slice.domain;
    let mut idx = vec![0usize; dim];
    let counts: Vec<usize> = tables.iter().map(|t| t.values.len()).collect();
    let mut acc = 0.0;
    'outer: loop {
        // φ and its per-axis derivative products at this node
        let mut phi = 1.0;
        for k in 0..dim {
            phi *= tables[k].values[idx[k]];
        }
        let mut flat = 0usize;
        for k in 0..dim {
            flat = flat * domain.shape[k] + (tables[k].lo + idx[k]);
        }
        let uv = slice.values[flat];
        if uv != 0.0 {
            let mut advect = 0.0;
            if tf != 0.0 {
                let a = cache.get(flat);
                for k in 0..dim {
                    let mut gk = tables[k].derivs[idx[k]];
                    for j in 0..dim {
                        if j != k {
                            gk *= tables[j].values[idx[j]];
                        }
                    }
                    advect += a[k] * gk;
                }
            }
            acc += uv * (tdf * phi + tf * advect);
        }
        // odometer increment
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                continue 'outer;
            }
            idx[k] = 0;
            if k == 0 {
                break 'outer;
            }
        }
    }
    acc
}

fn support_sum_values_only(u0: &GridFunction, tables: &[AxisTable], dim: usize) -> f64 {
    let domain = &u0.domain;
    let counts: Vec<usize> = tables.iter().map(|t| t.values.len()).collect();
    let mut idx = vec![0usize; dim];
    let mut acc = 0.0;
    'outer: loop {
        let mut phi = 1.0;
        for k in 0..dim {
            phi *= tables[k].values[idx[k]];
        }
        let mut flat = 0usize;
        for k in 0..dim {
            flat = flat * domain.shape[k] + (tables[k].lo + idx[k]);
        }
        acc += u0.values[flat] * phi;
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                continue 'outer;
            }
            idx[k] = 0;
            if k == 0 {
                break 'outer;
            }
        }
    }
    acc
}

/// Midpoint quadrature of ∫ a·∇φ dx, the weak-divergence pairing.
pub fn divergence_weak(field: &VectorField, phi: &SpaceBump, domain: &BoxDomain) -> f64 {
    weighted_divergence_weak(field, None, phi, domain)
}

/// Midpoint quadrature of ∫ w·(a·∇φ) dx; with `w = g(u_stat)` this is the
/// distributional divergence of a·g(u_stat) tested against φ.
pub fn weighted_divergence_weak(
    field: &VectorField,
    weight: Option<&GridFunction>,
    phi: &SpaceBump,
    domain: &BoxDomain,
) -> f64 {
    let dim = domain.dim();
    let tables = phi.axis_tables(domain);
    if tables.iter().any(|t| t.values.is_empty()) {
        return 0.0;
    }
    let counts: Vec<usize> = tables.iter().map(|t| t.values.len()).collect();
    let mut idx = vec![0usize; dim];
    let mut a = vec![0.0; dim];
    let mut acc = 0.0;
    'outer: loop {
        let mut flat = 0usize;
        let mut node = Vec::with_capacity(dim);
        for k in 0..dim {
            let i = tables[k].lo + idx[k];
            flat = flat * domain.shape[k] + i;
            node.push(domain.axis_coord(k, i));
        }
        field.eval_into(&node, &mut a);
        let mut advect = 0.0;
        for k in 0..dim {
            let mut gk = tables[k].derivs[idx[k]];
            for j in 0..dim {
                if j != k {
                    gk *= tables[j].values[idx[j]];
                }
            }
            advect += a[k] * gk;
        }
        let w = weight.map_or(1.0, |g| g.values[flat]);
        acc += w * advect;
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                continue 'outer;
            }
            idx[k] = 0;
            if k == 0 {
                break 'outer;
            }
        }
    }
    acc * domain.cell_volume()
}

/// Aggregate residuals over a bank.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    pub seed: u64,
    pub max_abs: f64,
    pub mean_abs: f64,
    pub per_function: Vec<f64>,
}

/// Evaluates the whole bank; members run in parallel, aggregation order is
/// the bank order, so the report is deterministic.
pub fn residual_report(
    u: &[GridFunction],
    u0: &GridFunction,
    field: &VectorField,
    bank: &TestBank,
) -> Result<ResidualReport> {
    let cache = FieldGridCache::build(field, &u[0].domain);
    let per_function: Result<Vec<f64>> = bank
        .members
        .par_iter()
        .map(|f| weak_residual_cached(u, u0, f, &cache))
        .collect();
    let per_function = per_function?;
    let max_abs = per_function.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let mean_abs = if per_function.is_empty() {
        0.0
    } else {
        per_function.iter().map(|r| r.abs()).sum::<f64>() / per_function.len() as f64
    };
    Ok(ResidualReport {
        seed: bank.seed,
        max_abs,
        mean_abs,
        per_function,
    })
}
