//! Bounded solenoidal velocity fields and their mollification.
//!
//! A [`VectorField`] is an everywhere-evaluable map a: ℝⁿ → ℝⁿ together with
//! a sup-norm bound N, a smoothness tag, and optional analytic oracles (exact
//! backward flow map, exact divergence). Discontinuous fields are permitted;
//! values exactly on the discontinuity set follow a fixed convention
//! (`sign(0) = 0`) so that sampling is deterministic.
//!
//! Mollification convolves the field with the tensor kernel
//! `γ_ν(ξ) = νⁿ ∏ β(νξ_i)`, whose support is the cube [0, 1/ν]ⁿ, so a
//! mollified value at x depends only on the field restricted to x − [0,1/ν]ⁿ.
//! The convolution is realized as a tensor-product Gauss–Legendre sum with
//! per-axis weights normalized to unit mass; the weights are then a convex
//! combination, which makes three postconditions exact rather than
//! approximate: constants are reproduced, the sup-norm never expands, and
//! the result equals the field wherever the field is constant on the
//! footprint. The sign shear profile is mollified in closed form through the
//! kernel CDF instead of by quadrature, which keeps the result genuinely
//! smooth across the smoothing band.

use crate::bump::{beta, beta_cdf, beta_deriv, gauss_legendre_unit, smooth_step};
use crate::error::{Error, Result};
use crate::grid::BoxDomain;
use std::fmt;
use std::path::Path;
use std::sync::{Arc, LazyLock};

/// Supremum of r·g(r) for the rotation cutoff g(r) = smooth_step(2 - r).
static ROTATION_SUP: LazyLock<f64> = LazyLock::new(|| {
    let mut sup: f64 = 1.0;
    for k in 0..=200_000 {
        let r = 2.0 * k as f64 / 200_000.0;
        sup = sup.max(r * rotation_cutoff(r));
    }
    sup
});

fn rotation_cutoff(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else {
        smooth_step(2.0 - r)
    }
}

/// Smoothness tag; the characteristic integrator accepts only smooth fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Smooth,
    Rough,
}

/// One-dimensional profile of a shear field a(x₁, x₂) = (f(x₂), 0).
#[derive(Clone)]
pub enum ShearProfile {
    /// f(s) = sign(s), with the convention sign(0) = 0.
    Sign,
    /// C^∞ ramp from -1 to +1 across [-half_width, half_width].
    SmoothStep { half_width: f64 },
    /// Exact mollification of `Sign`: f(s) = 2·B(νs) − 1 on (0, 1/ν).
    MollifiedSign { nu: u32 },
    /// User-supplied profile with a declared bound sup |f| ≤ bound.
    Custom {
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        bound: f64,
        smooth: bool,
        label: String,
    },
}

impl ShearProfile {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ShearProfile::Sign => {
                if s > 0.0 {
                    1.0
                } else if s < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ShearProfile::SmoothStep { half_width } => {
                2.0 * smooth_step((s + half_width) / (2.0 * half_width)) - 1.0
            }
            ShearProfile::MollifiedSign { nu } => 2.0 * beta_cdf(*nu as f64 * s) - 1.0,
            ShearProfile::Custom { f, .. } => f(s),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            ShearProfile::Sign
            | ShearProfile::SmoothStep { .. }
            | ShearProfile::MollifiedSign { .. } => 1.0,
            ShearProfile::Custom { bound, .. } => *bound,
        }
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            ShearProfile::Sign => false,
            ShearProfile::SmoothStep { .. } | ShearProfile::MollifiedSign { .. } => true,
            ShearProfile::Custom { smooth, .. } => *smooth,
        }
    }

    fn label(&self) -> String {
        match self {
            ShearProfile::Sign => "sign".into(),
            ShearProfile::SmoothStep { half_width } => format!("smooth_step({half_width})"),
            ShearProfile::MollifiedSign { nu } => format!("mollified_sign(nu={nu})"),
            ShearProfile::Custom { label, .. } => label.clone(),
        }
    }
}

impl fmt::Debug for ShearProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ShearProfile::{}", self.label())
    }
}

/// Vector field sampled on a uniform grid, evaluated by multilinear
/// interpolation clamped to the sample box.
#[derive(Debug, Clone)]
pub struct SampledField {
    pub domain: BoxDomain,
    /// One value array per component, row-major node order.
    pub components: Vec<Vec<f64>>,
}

impl SampledField {
    fn eval_component(&self, comp: usize, x: &[f64]) -> f64 {
        let dim = self.domain.dim();
        let spacing = self.domain.spacing();
        let mut acc = 0.0;
        let mut base = [0isize; 8];
        let mut frac = [0.0f64; 8];
        for k in 0..dim {
            let mut s = (x[k] - self.domain.lower[k]) / spacing[k] - 0.5;
            let max_idx = (self.domain.shape[k] - 1) as f64;
            s = s.clamp(0.0, max_idx);
            let f = s.floor().min(max_idx - 1.0).max(0.0);
            base[k] = f as isize;
            frac[k] = s - f;
        }
        let values = &self.components[comp];
        for corner in 0..(1usize << dim) {
            let mut weight = 1.0;
            let mut flat = 0usize;
            for k in 0..dim {
                let up = (corner >> k) & 1 == 1;
                let idx = (base[k] + if up { 1 } else { 0 }) as usize;
                weight *= if up { frac[k] } else { 1.0 - frac[k] };
                flat = flat * self.domain.shape[k] + idx.min(self.domain.shape[k] - 1);
            }
            acc += weight * values[flat];
        }
        acc
    }
}

#[derive(Debug, Clone)]
enum FieldKind {
    Constant(Vec<f64>),
    Shear(ShearProfile),
    Rotation,
    Sampled(Arc<SampledField>),
    /// Tensor-quadrature mollification of an arbitrary base field.
    Mollified {
        base: Arc<VectorField>,
        /// Offsets ξ_J inside [0, 1/ν]ⁿ and matching convex weights.
        offsets: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

/// Exact backward flow oracle: (t, x) ↦ y(t, x).
pub type AnalyticFlow = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Exact divergence oracle; must be identically zero when present.
pub type AnalyticDivergence = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A bounded solenoidal velocity field.
#[derive(Clone)]
pub struct VectorField {
    name: String,
    dim: usize,
    sup_norm: f64,
    smoothness: Smoothness,
    kind: FieldKind,
    analytic_flow: Option<AnalyticFlow>,
    analytic_divergence: Option<AnalyticDivergence>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sup_norm", &self.sup_norm)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl VectorField {
    /// a(x) ≡ c. Backward flow: y(t, x) = x − t·c.
    pub fn constant(c: Vec<f64>) -> Self {
        let dim = c.len();
        let sup_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        let flow_c = c.clone();
        VectorField {
            name: format!("constant{c:?}"),
            dim,
            sup_norm,
            smoothness: Smoothness::Smooth,
            kind: FieldKind::Constant(c),
            analytic_flow: Some(Arc::new(move |t, x| {
                x.iter().zip(&flow_c).map(|(xi, ci)| xi - t * ci).collect()
            })),
            analytic_divergence: Some(Arc::new(|_| 0.0)),
        }
    }

    /// a(x₁, x₂) = (f(x₂), 0); solenoidal for any profile f.
    /// Backward flow: y(t, x) = (x₁ − t·f(x₂), x₂), which for discontinuous
    /// profiles is the almost-everywhere oracle.
    pub fn shear(profile: ShearProfile) -> Self {
        let sup_norm = profile.bound();
        let smoothness = if profile.is_smooth() {
            Smoothness::Smooth
        } else {
            Smoothness::Rough
        };
        let name = format!("shear[{}]", profile.label());
        let flow_profile = profile.clone();
        VectorField {
            name,
            dim: 2,
            sup_norm,
            smoothness,
            kind: FieldKind::Shear(profile),
            analytic_flow: Some(Arc::new(move |t, x| {
                vec![x[0] - t * flow_profile.eval(x[1]), x[1]]
            })),
            analytic_divergence: Some(Arc::new(|_| 0.0)),
        }
    }

    /// a(x) = (−x₂, x₁)·g(|x|) with g ≡ 1 on the unit disk and a smooth decay
    /// to 0 on 1 ≤ |x| ≤ 2. Inside the unit disk the backward flow is the
    /// rigid rotation by angle −t; the attached oracle is valid only there.
    pub fn rotation() -> Self {
        VectorField {
            name: "rotation".into(),
            dim: 2,
            sup_norm: *ROTATION_SUP,
            smoothness: Smoothness::Smooth,
            kind: FieldKind::Rotation,
            analytic_flow: Some(Arc::new(|t, x| {
                let (s, c) = (-t).sin_cos();
                vec![c * x[0] - s * x[1], s * x[0] + c * x[1]]
            })),
            analytic_divergence: Some(Arc::new(|_| 0.0)),
        }
    }

    /// Field interpolated from samples on a uniform grid. Tagged rough
    /// (interpolation is Lipschitz but not C¹); mollify before integrating
    /// characteristics. `declared_sup_norm`, when given, must dominate the
    /// sample maxima and becomes the field's N.
    pub fn from_samples(
        sampled: SampledField,
        declared_sup_norm: Option<f64>,
        name: impl Into<String>,
    ) -> Result<Self> {
        let dim = sampled.domain.dim();
        if sampled.components.len() != dim {
            return Err(Error::InvalidField(format!(
                "{} components for a {}-dimensional field",
                sampled.components.len(),
                dim
            )));
        }
        let mut max_norm = 0.0f64;
        for i in 0..sampled.domain.num_nodes() {
            let sq: f64 = sampled.components.iter().map(|c| c[i] * c[i]).sum();
            max_norm = max_norm.max(sq.sqrt());
        }
        if !max_norm.is_finite() {
            return Err(Error::InvalidField("non-finite sample".into()));
        }
        let sup_norm = match declared_sup_norm {
            Some(n) if n + 1e-12 < max_norm => {
                return Err(Error::InvalidField(format!(
                    "declared sup_norm {n} is below the sample maximum {max_norm}"
                )));
            }
            Some(n) => n,
            None => max_norm,
        };
        Ok(VectorField {
            name: name.into(),
            dim,
            sup_norm,
            smoothness: Smoothness::Rough,
            kind: FieldKind::Sampled(Arc::new(sampled)),
            analytic_flow: None,
            analytic_divergence: None,
        })
    }

    /// Reads a sampled field from CSV rows `x₁,…,x_n,a₁,…,a_n` on a uniform
    /// grid (any row order). The weak-solenoidality check is run by the
    /// caller (see [`crate::weakform::divergence_weak`]); construction here
    /// validates only grid structure and boundedness.
    pub fn from_csv(path: &Path, declared_sup_norm: Option<f64>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(false)
            .from_path(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row: std::result::Result<Vec<f64>, _> =
                record.iter().map(|s| s.parse::<f64>()).collect();
            rows.push(row.map_err(|_| Error::InvalidField("non-numeric CSV entry".into()))?);
        }
        if rows.is_empty() {
            return Err(Error::InvalidField("empty field CSV".into()));
        }
        let ncols = rows[0].len();
        if !ncols.is_multiple_of(2) || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::InvalidField(
                "field CSV must have 2n numeric columns (coordinates then components)".into(),
            ));
        }
        let dim = ncols / 2;
        // Distinct sorted coordinates per axis define the grid.
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for row in &rows {
            for k in 0..dim {
                let v = row[k];
                if !axes[k].iter().any(|&a| (a - v).abs() < 1e-12) {
                    axes[k].push(v);
                }
            }
        }
        for axis in axes.iter_mut() {
            axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
        let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
        let expected: usize = shape.iter().product();
        if expected != rows.len() {
            return Err(Error::InvalidField(format!(
                "expected {expected} rows for shape {shape:?}, found {}",
                rows.len()
            )));
        }
        let mut spacing = vec![0.0; dim];
        for k in 0..dim {
            if shape[k] < 2 {
                return Err(Error::InvalidField(format!("axis {k} has fewer than 2 samples")));
            }
            let d = axes[k][1] - axes[k][0];
            for w in axes[k].windows(2) {
                if ((w[1] - w[0]) - d).abs() > 1e-9 * d.abs().max(1.0) {
                    return Err(Error::InvalidField(format!("axis {k} is not uniform")));
                }
            }
            spacing[k] = d;
        }
        // Samples are node values of a cell-centered grid.
        let lower: Vec<f64> = (0..dim).map(|k| axes[k][0] - 0.5 * spacing[k]).collect();
        let upper: Vec<f64> = (0..dim)
            .map(|k| axes[k][shape[k] - 1] + 0.5 * spacing[k])
            .collect();
        let domain = BoxDomain::new(lower, upper, shape.clone())?;
        let mut components = vec![vec![0.0; expected]; dim];
        for row in &rows {
            let mut flat = 0usize;
            for k in 0..dim {
                let idx = axes[k]
                    .iter()
                    .position(|&a| (a - row[k]).abs() < 1e-12)
                    .expect("coordinate present by construction");
                flat = flat * shape[k] + idx;
            }
            for c in 0..dim {
                components[c][flat] = row[dim + c];
            }
        }
        let name = format!("sampled[{}]", path.display());
        VectorField::from_samples(SampledField { domain, components }, declared_sup_norm, name)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The bound N = ‖a‖_∞ used in all estimates.
    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn is_smooth(&self) -> bool {
        self.smoothness == Smoothness::Smooth
    }

    /// Exact backward map oracle, when one exists (a.e. oracle for rough
    /// shears; valid only inside the unit disk for the rotation field).
    pub fn analytic_flow(&self) -> Option<&AnalyticFlow> {
        self.analytic_flow.as_ref()
    }

    /// Exact divergence; identically zero for every built-in field.
    pub fn analytic_divergence(&self, x: &[f64]) -> Option<f64> {
        self.analytic_divergence.as_ref().map(|f| f(x))
    }

    /// Evaluates a(x) into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(out.len(), self.dim);
        match &self.kind {
            FieldKind::Constant(c) => out.copy_from_slice(c),
            FieldKind::Shear(profile) => {
                out[0] = profile.eval(x[1]);
                out[1] = 0.0;
            }
            FieldKind::Rotation => {
                let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                let g = rotation_cutoff(r);
                out[0] = -x[1] * g;
                out[1] = x[0] * g;
            }
            FieldKind::Sampled(s) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = s.eval_component(k, x);
                }
            }
            FieldKind::Mollified {
                base,
                offsets,
                weights,
            } => {
                // Accumulate in difference form around the first sample:
                // a₀ + Σ wⱼ (aⱼ − a₀). With Σ wⱼ = 1 this equals the convex
                // combination and reproduces locally constant fields exactly.
                let mut shifted = [0.0f64; 8];
                let mut value = [0.0f64; 8];
                let mut first = [0.0f64; 8];
                for k in 0..self.dim {
                    shifted[k] = x[k] - offsets[0][k];
                }
                base.eval_into(&shifted[..self.dim], &mut first[..self.dim]);
                out.copy_from_slice(&first[..self.dim]);
                for (offset, &w) in offsets.iter().zip(weights).skip(1) {
                    for k in 0..self.dim {
                        shifted[k] = x[k] - offset[k];
                    }
                    base.eval_into(&shifted[..self.dim], &mut value[..self.dim]);
                    for k in 0..self.dim {
                        out[k] += w * (value[k] - first[k]);
                    }
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out);
        out
    }

    /// Bounds of the sample box for fields built from grid samples.
    pub fn sample_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            FieldKind::Sampled(s) => Some((s.domain.lower.clone(), s.domain.upper.clone())),
            _ => None,
        }
    }

    /// Maximum Euclidean norm of the field over the nodes of a grid.
    pub fn max_norm_on_grid(&self, domain: &BoxDomain) -> f64 {
        let mut out = vec![0.0; self.dim];
        let mut max = 0.0f64;
        for i in 0..domain.num_nodes() {
            self.eval_into(&domain.node(i), &mut out);
            let sq: f64 = out.iter().map(|v| v * v).sum();
            max = max.max(sq.sqrt());
        }
        max
    }
}

/// The averaging kernel: the 1D profile β together with the per-axis
/// quadrature order used to realize the convolution.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    /// Points per axis of the tensor Gauss–Legendre rule (default 16).
    pub quad_points: usize,
}

impl Default for MollifierKernel {
    fn default() -> Self {
        MollifierKernel { quad_points: 16 }
    }
}

impl MollifierKernel {
    pub fn new(quad_points: usize) -> Self {
        assert!(quad_points >= 2, "kernel quadrature needs at least 2 points");
        MollifierKernel { quad_points }
    }

    /// The 1D profile β (unit mass, support [0,1], nonnegative).
    pub fn profile(&self, s: f64) -> f64 {
        beta(s)
    }

    pub fn profile_deriv(&self, s: f64) -> f64 {
        beta_deriv(s)
    }

    /// 1D quadrature nodes in (0,1) and convex weights w_j ∝ GL_j·β(σ_j),
    /// normalized to Σw = 1 so constants are averaged exactly.
    pub fn nodes_and_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let (nodes, gl_weights) = gauss_legendre_unit(self.quad_points);
        let mut weights: Vec<f64> = nodes
            .iter()
            .zip(&gl_weights)
            .map(|(&s, &w)| w * beta(s))
            .collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        (nodes, weights)
    }
}

/// Mollifies `field` with the scaled kernel γ_ν, producing a smooth field
/// with the same (or smaller) sup-norm bound.
///
/// `sample_domain` is the region on which the mollified field will be used;
/// for sampled base fields the convolution footprint must stay inside the
/// region where samples exist.
pub fn mollify(
    field: &VectorField,
    kernel: &MollifierKernel,
    nu: u32,
    sample_domain: &BoxDomain,
) -> Result<VectorField> {
    assert!(nu >= 1, "mollification index must be positive");
    let h = 1.0 / nu as f64;
    if let FieldKind::Sampled(s) = &field.kind {
        for k in 0..field.dim {
            if sample_domain.lower[k] - h < s.domain.lower[k]
                || sample_domain.upper[k] > s.domain.upper[k]
            {
                return Err(Error::DomainTooSmall(format!(
                    "mollification footprint [{}, {}] on axis {k} leaves the sampled region [{}, {}]",
                    sample_domain.lower[k] - h,
                    sample_domain.upper[k],
                    s.domain.lower[k],
                    s.domain.upper[k]
                )));
            }
        }
    }
    let name = format!("mollified[{}, nu={nu}]", field.name);
    match &field.kind {
        // Averaging a constant with a unit-mass kernel reproduces it.
        FieldKind::Constant(_) => {
            let mut out = field.clone();
            out.name = name;
            Ok(out)
        }
        FieldKind::Shear(profile) => {
            // Tensor kernel integrates out the x₁ direction exactly, so the
            // mollification reduces to the 1D smoothing of the profile.
            let smoothed = match profile {
                ShearProfile::Sign => ShearProfile::MollifiedSign { nu },
                other => {
                    let (nodes, weights) = kernel.nodes_and_weights();
                    let base = other.clone();
                    let bound = base.bound();
                    let label = format!("mollified[{}, nu={nu}]", base.label());
                    ShearProfile::Custom {
                        f: Arc::new(move |s| {
                            let first = base.eval(s - nodes[0] * h);
                            nodes
                                .iter()
                                .zip(&weights)
                                .skip(1)
                                .map(|(&sigma, &w)| w * (base.eval(s - sigma * h) - first))
                                .sum::<f64>()
                                + first
                        }),
                        bound,
                        smooth: true,
                        label,
                    }
                }
            };
            let mut out = VectorField::shear(smoothed);
            out.name = name;
            out.sup_norm = field.sup_norm;
            Ok(out)
        }
        _ => {
            let (nodes, weights_1d) = kernel.nodes_and_weights();
            let dim = field.dim;
            let m = nodes.len();
            let count = m.pow(dim as u32);
            let mut offsets = Vec::with_capacity(count);
            let mut weights = Vec::with_capacity(count);
            for flat in 0..count {
                let mut idx = flat;
                let mut offset = vec![0.0; dim];
                let mut w = 1.0;
                for k in (0..dim).rev() {
                    let j = idx % m;
                    idx /= m;
                    offset[k] = nodes[j] * h;
                    w *= weights_1d[j];
                }
                offsets.push(offset);
                weights.push(w);
            }
            Ok(VectorField {
                name,
                dim,
                sup_norm: field.sup_norm,
                smoothness: Smoothness::Smooth,
                kind: FieldKind::Mollified {
                    base: Arc::new(field.clone()),
                    offsets,
                    weights,
                },
                analytic_flow: None,
                analytic_divergence: field.analytic_divergence.clone(),
            })
        }
    }
}

/// Gallery entries for the CLI.
pub fn gallery() -> Vec<(&'static str, &'static str)> {
    vec![
        ("constant", "a(x) = c; exact flow y(t,x) = x - t c"),
        (
            "shear",
            "a(x) = (f(x2), 0); profiles: sign (rough), smooth_step, custom samples",
        ),
        (
            "rotation",
            "a(x) = (-x2, x1) g(|x|); rigid rotation inside the unit disk, smooth cutoff on 1 <= |x| <= 2",
        ),
        (
            "custom-sampled",
            "CSV samples on a uniform grid; slot for user-supplied candidate fields (e.g. non-uniqueness candidates); weak solenoidality is checked, nothing else is asserted",
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_translation_oracle() {
        let f = VectorField::constant(vec![1.0, 0.0]);
        assert_eq!(f.sup_norm(), 1.0);
        let y = (f.analytic_flow().unwrap())(2.0, &[0.0, 0.0]);
        assert_eq!(y, vec![-2.0, 0.0]);
        assert_eq!(f.eval(&[3.0, -1.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn sign_shear_is_rough_with_unit_bound() {
        let f = VectorField::shear(ShearProfile::Sign);
        assert_eq!(f.smoothness(), Smoothness::Rough);
        assert_eq!(f.sup_norm(), 1.0);
        assert_eq!(f.eval(&[0.3, 0.5]), vec![1.0, 0.0]);
        assert_eq!(f.eval(&[0.3, -0.5]), vec![-1.0, 0.0]);
        // fixed convention on the null set
        assert_eq!(f.eval(&[0.3, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn rotation_is_rigid_inside_unit_disk() {
        let f = VectorField::rotation();
        assert_eq!(f.eval(&[0.5, 0.0]), vec![0.0, 0.5]);
        assert_eq!(f.eval(&[3.0, 0.0]), vec![0.0, 0.0]);
        let y = (f.analytic_flow().unwrap())(std::f64::consts::FRAC_PI_2, &[0.5, 0.0]);
        assert!((y[0] - 0.0).abs() < 1e-15);
        assert!((y[1] + 0.5).abs() < 1e-15);
        assert!(f.sup_norm() >= 1.0 && f.sup_norm() <= 2.0);
    }

    #[test]
    fn kernel_weights_are_convex() {
        let kernel = MollifierKernel::default();
        let (nodes, weights) = kernel.nodes_and_weights();
        assert_eq!(nodes.len(), 16);
        assert!(weights.iter().all(|&w| w >= 0.0));
        let sum: f64 = weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert!(nodes.iter().all(|&s| s > 0.0 && s < 1.0));
    }

    #[test]
    fn mollifying_a_constant_is_exact() {
        let domain = BoxDomain::square(2.0, 32);
        let f = VectorField::constant(vec![0.7, -0.3]);
        let g = mollify(&f, &MollifierKernel::default(), 5, &domain).unwrap();
        for i in 0..domain.num_nodes() {
            assert_eq!(g.eval(&domain.node(i)), vec![0.7, -0.3]);
        }
    }

    #[test]
    fn mollified_sign_shear_is_exact_outside_the_band() {
        let domain = BoxDomain::square(2.0, 16);
        let f = VectorField::shear(ShearProfile::Sign);
        let g = mollify(&f, &MollifierKernel::default(), 8, &domain).unwrap();
        assert_eq!(g.smoothness(), Smoothness::Smooth);
        // footprint [0, 1/8]² keeps x2 - xi2 > 0 whenever x2 >= 1/8
        assert_eq!(g.eval(&[0.4, 1.0]), vec![1.0, 0.0]);
        assert_eq!(g.eval(&[0.4, 0.125]), vec![1.0, 0.0]);
        assert_eq!(g.eval(&[0.4, -0.001]), vec![-1.0, 0.0]);
        // strictly inside the band the value interpolates
        let v = g.eval(&[0.0, 0.0625]);
        assert!(v[0] > -1.0 && v[0] < 1.0);
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn mollified_sign_matches_quadrature_realization_of_sign() {
        // The closed-form smoothing and the generic quadrature path must
        // agree up to the quadrature error of a bounded integrand.
        let kernel = MollifierKernel::new(48);
        let (nodes, weights) = kernel.nodes_and_weights();
        let nu = 8u32;
        let exact = ShearProfile::MollifiedSign { nu };
        let sign = ShearProfile::Sign;
        for k in 0..=40 {
            let s = -0.05 + 0.2 * k as f64 / 40.0;
            let quad: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&sigma, &w)| w * sign.eval(s - sigma / nu as f64))
                .sum();
            // staircase quadrature of a jump is only ~1/m accurate; the
            // closed form must sit inside the staircase envelope
            assert!(
                (quad - exact.eval(s)).abs() < 0.1,
                "s={s}: quad={quad} exact={}",
                exact.eval(s)
            );
        }
    }

    #[test]
    fn sup_norm_never_expands_under_mollification() {
        let domain = BoxDomain::square(2.0, 128);
        for (field, nu) in [
            (VectorField::shear(ShearProfile::Sign), 8u32),
            (VectorField::rotation(), 4),
        ] {
            let g = mollify(&field, &MollifierKernel::default(), nu, &domain).unwrap();
            let max_m = g.max_norm_on_grid(&domain);
            let max_b = field.max_norm_on_grid(&domain);
            assert!(
                max_m <= max_b + 1e-12,
                "{}: {max_m} > {max_b}",
                field.name()
            );
            assert!(max_m <= field.sup_norm() + 1e-12);
        }
    }

    #[test]
    fn mollified_shear_pointwise_sup_on_fine_grid_is_bounded() {
        let domain = BoxDomain::square(2.0, 128);
        let f = VectorField::shear(ShearProfile::Sign);
        let g = mollify(&f, &MollifierKernel::default(), 8, &domain).unwrap();
        assert!(g.max_norm_on_grid(&domain) <= 1.0);
    }

    #[test]
    fn mollification_is_identity_where_field_is_locally_constant() {
        // Generic quadrature path: custom rough profile, evaluated away from
        // its jump so the footprint sees a constant.
        let profile = ShearProfile::Custom {
            f: Arc::new(|s| if s > 0.0 { 0.25 } else { -0.75 }),
            bound: 0.75,
            smooth: false,
            label: "step".into(),
        };
        let field = VectorField::shear(profile);
        let domain = BoxDomain::square(2.0, 8);
        let g = mollify(&field, &MollifierKernel::default(), 4, &domain).unwrap();
        assert_eq!(g.eval(&[0.0, 1.0]), vec![0.25, 0.0]);
        assert_eq!(g.eval(&[0.0, -0.5]), vec![-0.75, 0.0]);
    }

    #[test]
    fn remollification_uses_generic_quadrature_and_stays_bounded() {
        let domain = BoxDomain::square(2.0, 16);
        let f = VectorField::shear(ShearProfile::Sign);
        let g = mollify(&f, &MollifierKernel::default(), 8, &domain).unwrap();
        let gg = mollify(&g, &MollifierKernel::default(), 16, &domain).unwrap();
        assert!(gg.max_norm_on_grid(&domain) <= 1.0 + 1e-12);
        assert_eq!(gg.eval(&[0.0, 1.0])[0], 1.0);
    }

    #[test]
    fn sampled_field_round_trip_and_bound_validation() {
        let domain = BoxDomain::square(1.0, 8);
        let nodes: Vec<Vec<f64>> = (0..domain.num_nodes()).map(|i| domain.node(i)).collect();
        let components = vec![
            nodes.iter().map(|x| -x[1]).collect(),
            nodes.iter().map(|x| x[0]).collect(),
        ];
        let sampled = SampledField {
            domain: domain.clone(),
            components,
        };
        let field = VectorField::from_samples(sampled.clone(), None, "samples").unwrap();
        // interpolation reproduces the linear field exactly inside the hull
        let v = field.eval(&[0.25, -0.5]);
        assert!((v[0] - 0.5).abs() < 1e-13 && (v[1] - 0.25).abs() < 1e-13);
        assert!(VectorField::from_samples(sampled, Some(0.1), "samples").is_err());
    }

    #[test]
    fn mollify_rejects_footprint_leaving_sampled_region() {
        let domain = BoxDomain::square(1.0, 8);
        let components = vec![vec![0.0; 64], vec![0.0; 64]];
        let field = VectorField::from_samples(
            SampledField {
                domain: domain.clone(),
                components,
            },
            None,
            "zeros",
        )
        .unwrap();
        let err = mollify(&field, &MollifierKernel::default(), 2, &domain);
        assert!(matches!(err, Err(Error::DomainTooSmall(_))));
        let inner = BoxDomain::new(vec![-0.4, -0.4], vec![0.9, 0.9], vec![4, 4]).unwrap();
        assert!(mollify(&field, &MollifierKernel::default(), 2, &inner).is_ok());
    }
}
