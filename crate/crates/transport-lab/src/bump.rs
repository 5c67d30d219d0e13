//! The smooth bump profile `β` and quadrature helpers built on it.
//!
//! Everything in the crate that needs a compactly supported smooth function
//! derives it from the same one-dimensional profile
//!
//! ```text
//! β(s) = Z⁻¹ exp(-1/(s(1-s)))   on (0,1),    β(s) = 0 elsewhere,
//! ```
//!
//! normalized so that ∫β = 1. The profile feeds the mollification kernel,
//! the radial initial data, the rotation cutoff and the test-function bank.

use std::sync::LazyLock;

/// Number of panels in the precomputed CDF table.
const CDF_PANELS: usize = 4096;

fn bump_raw(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

fn bump_raw_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let q = s * (1.0 - s);
        // d/ds exp(-1/q) = exp(-1/q) * q' / q², q' = 1 - 2s
        bump_raw(s) * (1.0 - 2.0 * s) / (q * q)
    }
}

/// Normalization constant Z = ∫₀¹ exp(-1/(s(1-s))) ds and the cumulative
/// table of the normalized profile, computed once per process.
struct BumpTable {
    mass_raw: f64,
    /// cdf[k] = ∫₀^{k/CDF_PANELS} β(s) ds, with cdf[CDF_PANELS] == 1 exactly.
    cdf: Vec<f64>,
}

static TABLE: LazyLock<BumpTable> = LazyLock::new(|| {
    let mut cdf = Vec::with_capacity(CDF_PANELS + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    let h = 1.0 / CDF_PANELS as f64;
    let (nodes, weights) = gauss_legendre(16);
    for k in 0..CDF_PANELS {
        let a = k as f64 * h;
        let mut panel = 0.0;
        for (&x, &w) in nodes.iter().zip(&weights) {
            // map [-1,1] -> [a, a+h]
            panel += w * bump_raw(a + 0.5 * h * (x + 1.0));
        }
        acc += 0.5 * h * panel;
        cdf.push(acc);
    }
    let mass_raw = acc;
    for v in cdf.iter_mut() {
        *v /= mass_raw;
    }
    cdf[CDF_PANELS] = 1.0;
    BumpTable { mass_raw, cdf }
});

/// The normalized bump: nonnegative, supported on [0,1], unit mass.
pub fn beta(s: f64) -> f64 {
    bump_raw(s) / TABLE.mass_raw
}

/// Derivative β′ of the normalized bump.
pub fn beta_deriv(s: f64) -> f64 {
    bump_raw_deriv(s) / TABLE.mass_raw
}

/// Peak value of β, attained at s = 1/2.
pub fn beta_max() -> f64 {
    beta(0.5)
}

/// Cumulative distribution B(s) = ∫₀ˢ β. Smooth, monotone, B(0)=0, B(1)=1.
///
/// Evaluated from a cubic Hermite interpolant of the precomputed table; the
/// interpolant's slopes are the exact β values, so the error is far below
/// 1e-12 across the whole interval.
pub fn beta_cdf(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let table = &TABLE;
    let h = 1.0 / CDF_PANELS as f64;
    let pos = s * CDF_PANELS as f64;
    let k = (pos.floor() as usize).min(CDF_PANELS - 1);
    let t = pos - k as f64;
    let s0 = k as f64 * h;
    let (y0, y1) = (table.cdf[k], table.cdf[k + 1]);
    let (d0, d1) = (beta(s0) * h, beta(s0 + h) * h);
    // cubic Hermite basis; clamp to [0,1] so the interpolant never
    // undershoots the monotone limits in the flat tails
    let t2 = t * t;
    let t3 = t2 * t;
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * d0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * d1;
    v.clamp(0.0, 1.0)
}

/// C^∞ step: 0 for τ ≤ 0, 1 for τ ≥ 1, strictly increasing in between.
pub fn smooth_step(tau: f64) -> f64 {
    beta_cdf(tau)
}

/// Nodes and weights of the m-point Gauss–Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the Legendre recurrence; deterministic
/// and accurate to machine precision for the orders used here (m ≤ 64).
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1, "quadrature order must be positive");
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let n = m as f64;
    for i in 0..m.div_ceil(2) {
        // Chebyshev-based initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_m(x) and its derivative by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

/// m-point Gauss–Legendre rule mapped to [0, 1].
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(m);
    (
        nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights.iter().map(|w| 0.5 * w).collect(),
    )
}
