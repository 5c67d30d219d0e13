//! Construction of solutions by backward characteristic tracing.
//!
//! For a smooth field the unique solution of u_t + a·∇u = 0, u(0,·) = u₀ is
//! the transport of the initial data along characteristics:
//! u(t, x) = u₀(y(t, x)) with y the backward source map. Each output time is
//! evaluated independently from t = 0 at every grid node, which avoids the
//! accumulation of grid-transfer diffusion entirely. For rough fields the
//! same construction runs on the mollified approximations a_ν and the
//! resulting sequence u_ν is returned together with its Cauchy table; the
//! finest member is designated the numerical solution.

use crate::bump::{beta, beta_cdf, beta_deriv, beta_max};
use crate::error::{Error, Result};
use crate::fields::{mollify, MollifierKernel, VectorField};
use crate::flow::{backward_map, StepControl};
use crate::grid::{BoxDomain, GridFunction};
use rayon::prelude::*;
use std::sync::Arc;

/// C^∞ radial profile, constant at `amplitude` inside `r_plateau`, vanishing
/// outside `r_support`. With `r_plateau = 0` it is the classic radial bump.
#[derive(Debug, Clone)]
pub struct RadialBump {
    pub center: Vec<f64>,
    pub r_plateau: f64,
    pub r_support: f64,
    pub amplitude: f64,
}

impl RadialBump {
    pub fn new(center: Vec<f64>, r_plateau: f64, r_support: f64, amplitude: f64) -> Self {
        assert!(r_support > r_plateau && r_plateau >= 0.0 && amplitude != 0.0);
        RadialBump {
            center,
            r_plateau,
            r_support,
            amplitude,
        }
    }

    fn radius(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
            .sqrt()
    }

    fn width(&self) -> f64 {
        self.r_support - self.r_plateau
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let r = self.radius(x);
        self.amplitude * beta_cdf((self.r_support - r) / self.width())
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.radius(x);
        let dim = x.len();
        if r == 0.0 {
            return vec![0.0; dim];
        }
        let dvdr = -self.amplitude * beta((self.r_support - r) / self.width()) / self.width();
        x.iter()
            .zip(&self.center)
            .map(|(a, c)| dvdr * (a - c) / r)
            .collect()
    }

    /// Exact sup of |∇u|: |amplitude|·max β / width.
    pub fn gradient_sup(&self) -> f64 {
        self.amplitude.abs() * beta_max() / self.width()
    }

    /// Exact Lebesgue measure of {u ≠ 0}: the open ball of radius r_support.
    pub fn support_measure(&self, dim: usize) -> f64 {
        unit_ball_volume(dim) * self.r_support.powi(dim as i32)
    }

    /// Upper bound on |∂ᵢᵢu| summed over axes, by a dense radial scan of
    /// |u_rr| + |u_r|/r. Deterministic; used to pin interpolation-error
    /// bounds in tests.
    pub fn second_derivative_bound(&self) -> f64 {
        let w = self.width();
        let mut bound = 0.0f64;
        for k in 1..20_000 {
            let r = self.r_support * k as f64 / 20_000.0;
            if r <= self.r_plateau {
                continue;
            }
            let tau = (self.r_support - r) / w;
            let u_r = self.amplitude.abs() * beta(tau) / w;
            let u_rr = self.amplitude.abs() * beta_deriv(tau).abs() / (w * w);
            bound = bound.max(u_rr + u_r / r);
        }
        bound
    }

    pub fn support_ball(&self) -> (Vec<f64>, f64) {
        (self.center.clone(), self.r_support)
    }
}

/// Volume of the n-dimensional unit ball.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        n => unit_ball_volume(n - 2) * 2.0 * std::f64::consts::PI / n as f64,
    }
}

/// Indicator of the open ball |x − center| < radius.
#[derive(Debug, Clone)]
pub struct IndicatorBall {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl IndicatorBall {
    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        if r2 < self.radius * self.radius {
            1.0
        } else {
            0.0
        }
    }
}

type Callable = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Initial datum: either node samples (evaluated by multilinear
/// interpolation with zero extension) or an exact callable.
#[derive(Clone)]
pub enum InitialData {
    Grid(GridFunction),
    Callable {
        f: Callable,
        /// Ball containing the support, when known; enables the
        /// finite-speed domain validation.
        support: Option<(Vec<f64>, f64)>,
    },
}

impl InitialData {
    pub fn from_bump(bump: &RadialBump) -> Self {
        let b = bump.clone();
        InitialData::Callable {
            f: Arc::new(move |x| b.value(x)),
            support: Some(bump.support_ball()),
        }
    }

    pub fn from_indicator(ind: &IndicatorBall) -> Self {
        let i = ind.clone();
        InitialData::Callable {
            f: Arc::new(move |x| i.value(x)),
            support: Some((ind.center.clone(), ind.radius)),
        }
    }

    pub fn from_callable(f: Callable, support: Option<(Vec<f64>, f64)>) -> Self {
        InitialData::Callable { f, support }
    }

    /// Samples onto a grid (the realistic input path of the runner).
    pub fn sampled(&self, domain: &BoxDomain) -> GridFunction {
        GridFunction::sample(domain, 0.0, |x| self.eval(x))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            InitialData::Grid(g) => g.interpolate(x),
            InitialData::Callable { f, .. } => f(x),
        }
    }

    /// Applies g nodewise / pointwise, keeping the representation.
    pub fn compose(&self, g: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Self {
        match self {
            InitialData::Grid(grid) => InitialData::Grid(grid.map(|v| g(v))),
            InitialData::Callable { f, support } => {
                let f = f.clone();
                InitialData::Callable {
                    f: Arc::new(move |x| g(f(x))),
                    support: support.clone(),
                }
            }
        }
    }

    /// Validates the finite-speed expansion: support(u₀) grown by N·T must
    /// stay inside the solve domain.
    pub fn validate_expansion(&self, domain: &BoxDomain, sup_norm: f64, horizon: f64) -> Result<()> {
        let margin = sup_norm * horizon.abs();
        match self {
            InitialData::Grid(g) => {
                // the constraint applies to the actual nonzero support, plus
                // one interpolation cell on each side
                let Some((lower, upper)) = g.support_box() else {
                    return Ok(());
                };
                let spacing = g.domain.spacing();
                for k in 0..domain.dim() {
                    if lower[k] - spacing[k] - margin < domain.lower[k]
                        || upper[k] + spacing[k] + margin > domain.upper[k]
                    {
                        return Err(Error::DomainTooSmall(format!(
                            "axis {k}: initial support [{}, {}] expanded by N*T = {margin:.6} leaves the domain [{}, {}]",
                            lower[k], upper[k], domain.lower[k], domain.upper[k]
                        )));
                    }
                }
                Ok(())
            }
            InitialData::Callable {
                support: Some((center, radius)),
                ..
            } => {
                if !domain.contains_expanded(center, *radius, margin) {
                    return Err(Error::DomainTooSmall(format!(
                        "support ball (center {center:?}, radius {radius}) expanded by N*T = {margin:.6} leaves the domain"
                    )));
                }
                Ok(())
            }
            InitialData::Callable { support: None, .. } => Ok(()),
        }
    }
}

/// Transports the initial datum along backward characteristics of a smooth
/// field, returning one grid function per output time.
pub fn solve_smooth(
    field: &VectorField,
    u0: &InitialData,
    domain: &BoxDomain,
    times: &[f64],
    control: &StepControl,
) -> Result<Vec<GridFunction>> {
    if !field.is_smooth() {
        return Err(Error::RoughField(field.name().to_string()));
    }
    let horizon = times.iter().cloned().fold(0.0f64, f64::max);
    u0.validate_expansion(domain, field.sup_norm(), horizon)?;
    let n = domain.num_nodes();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let values: Result<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = domain.node(i);
                if t == 0.0 {
                    return Ok(u0.eval(&x));
                }
                let y = backward_map(field, t, &x, control)?;
                Ok(u0.eval(&y))
            })
            .collect();
        out.push(GridFunction {
            domain: domain.clone(),
            time: t,
            values: values?,
        });
    }
    Ok(out)
}

/// The mollified approximation sequence u_ν for a rough (or smooth) field.
#[derive(Debug, Clone)]
pub struct SolutionSequence {
    pub nus: Vec<u32>,
    pub times: Vec<f64>,
    /// solutions[k][j] is u_{ν_k} at times[j].
    pub solutions: Vec<Vec<GridFunction>>,
    /// cauchy_table[k][j] = ‖u_{ν_{k+1}}(t_j) − u_{ν_k}(t_j)‖₂.
    pub cauchy_table: Vec<Vec<f64>>,
}

impl SolutionSequence {
    /// The finest-ν member, designated the numerical generalized solution.
    pub fn designated(&self) -> &[GridFunction] {
        self.solutions.last().expect("nonempty sequence")
    }
}

/// Solves the regularized problems u_t + a_ν·∇u = 0 for every ν and records
/// pairwise L² distances between consecutive members.
pub fn solve_rough(
    field: &VectorField,
    u0: &InitialData,
    domain: &BoxDomain,
    times: &[f64],
    nus: &[u32],
    kernel: &MollifierKernel,
    control: &StepControl,
) -> Result<SolutionSequence> {
    if nus.is_empty() || nus.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "mollification indices must be strictly increasing".into(),
        ));
    }
    let mut solutions = Vec::with_capacity(nus.len());
    for &nu in nus {
        let smooth = mollify(field, kernel, nu, domain)?;
        solutions.push(solve_smooth(&smooth, u0, domain, times, control)?);
    }
    let mut cauchy_table = Vec::new();
    for pair in solutions.windows(2) {
        let row: Vec<f64> = pair[0]
            .iter()
            .zip(&pair[1])
            .map(|(a, b)| a.l2_distance(b))
            .collect();
        cauchy_table.push(row);
    }
    Ok(SolutionSequence {
        nus: nus.to_vec(),
        times: times.to_vec(),
        solutions,
        cauchy_table,
    })
}

/// Composite-midpoint Lᵖ norm of a grid function (p = ∞ gives the node max).
pub fn lp_norm(u: &GridFunction, p: f64) -> f64 {
    u.lp_norm(p)
}

/// Uniform output times 0 = t₀ < … < t_K = horizon.
pub fn uniform_times(horizon: f64, slices: usize) -> Vec<f64> {
    (0..=slices)
        .map(|k| horizon * k as f64 / slices as f64)
        .collect()
}
