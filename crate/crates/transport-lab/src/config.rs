//! Versioned experiment configuration.
//!
//! Configurations are JSON with schema version 1; unknown keys are rejected
//! so a config never silently means something else than it says. A config
//! pins everything a run needs: field, initial datum, grid, horizon and
//! output partition, mollification indices, kernel order, step control,
//! test-bank seed and size, and the list of checks with their thresholds
//! and assert flags.

use crate::error::{Error, Result};
use crate::fields::{MollifierKernel, ShearProfile, VectorField};
use crate::flow::StepControl;
use crate::grid::{BoxDomain, GridFunction};
use crate::solver::{IndicatorBall, InitialData, RadialBump};
use crate::weakform::{divergence_weak, TestBank};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub field: FieldSpec,
    pub initial: InitialSpec,
    pub domain: DomainSpec,
    /// Time horizon T; output times are the uniform partition of [0, T].
    pub horizon: f64,
    pub output_slices: usize,
    /// Mollification indices; empty means solve the field directly (it must
    /// then be smooth).
    #[serde(default)]
    pub nus: Vec<u32>,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub step_control: StepControl,
    #[serde(default)]
    pub bank: BankSpec,
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_norm: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantParams {
    velocity: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "profile", rename_all = "snake_case")]
enum ShearParams {
    Sign {},
    SmoothStep { half_width: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampledParams {
    path: String,
    /// Weak-solenoidality gate: every |∫a·∇φ| / ‖∇φ‖_L¹ must stay below
    /// this fraction of the sup norm. Interpolation of resolved solenoidal
    /// samples lands well under 0.01·N; an O(1) divergence lands near N/4.
    #[serde(default = "default_div_rel_tolerance")]
    divergence_rel_tolerance: f64,
}

fn default_div_rel_tolerance() -> f64 {
    0.02
}

impl FieldSpec {
    pub fn build(&self, base_dir: &Path) -> Result<VectorField> {
        let params = self.params.clone();
        match self.name.as_str() {
            "constant" => {
                let p: ConstantParams = serde_json::from_value(params)?;
                if p.velocity.is_empty() {
                    return Err(Error::InvalidField("empty velocity".into()));
                }
                Ok(VectorField::constant(p.velocity))
            }
            "shear" => {
                let p: ShearParams = serde_json::from_value(params)?;
                let profile = match p {
                    ShearParams::Sign {} => ShearProfile::Sign,
                    ShearParams::SmoothStep { half_width } => {
                        if half_width <= 0.0 {
                            return Err(Error::InvalidField("half_width must be positive".into()));
                        }
                        ShearProfile::SmoothStep { half_width }
                    }
                };
                Ok(VectorField::shear(profile))
            }
            "rotation" => {
                if !params.is_null() && params != serde_json::json!({}) {
                    return Err(Error::InvalidField("rotation takes no params".into()));
                }
                Ok(VectorField::rotation())
            }
            "custom-sampled" => {
                let p: SampledParams = serde_json::from_value(params)?;
                let path = base_dir.join(&p.path);
                let field = VectorField::from_csv(&path, self.sup_norm)?;
                let worst = sampled_divergence_defect(&field)?;
                let tol = p.divergence_rel_tolerance * field.sup_norm().max(1e-12);
                if worst > tol {
                    return Err(Error::InvalidField(format!(
                        "sampled field fails weak solenoidality: normalized residual {worst:.3e} > {tol:.3e}"
                    )));
                }
                Ok(field)
            }
            other => Err(Error::UnknownField(other.to_string())),
        }
    }
}

/// max over a fixed spatial bank of |∫a·∇φ| / ‖∇φ‖_L¹, the velocity-scale
/// weak-divergence defect. The probe grid sits inside the sample box so the
/// check never reads clamped boundary values, and the bank is drawn wide
/// enough (≥ 16 probe cells) that quadrature noise stays far below the gate.
fn sampled_divergence_defect(field: &VectorField) -> Result<f64> {
    let dim = field.dim();
    let (lo, hi) = field
        .sample_bounds()
        .expect("sampled field has bounds");
    let mut lower = vec![0.0; dim];
    let mut upper = vec![0.0; dim];
    for k in 0..dim {
        let margin = 0.05 * (hi[k] - lo[k]);
        lower[k] = lo[k] + margin;
        upper[k] = hi[k] - margin;
    }
    let probe = BoxDomain::new(lower.clone(), upper.clone(), vec![96; dim])?;
    let wide = BoxDomain::new(lower, upper, vec![24; dim])?;
    let bank = TestBank::spatial(0, 16, &wide);
    let dv = probe.cell_volume();
    let mut worst = 0.0f64;
    for phi in &bank {
        let residual = divergence_weak(field, phi, &probe).abs();
        let grad_mass: f64 = (0..probe.num_nodes())
            .map(|i| {
                phi.gradient(&probe.node(i))
                    .iter()
                    .map(|g| g.abs())
                    .sum::<f64>()
            })
            .sum::<f64>()
            * dv;
        if grad_mass > 0.0 {
            worst = worst.max(residual / grad_mass);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    RadialBump {
        center: Vec<f64>,
        r_plateau: f64,
        r_support: f64,
        amplitude: f64,
    },
    IndicatorBall {
        center: Vec<f64>,
        radius: f64,
    },
    GridCsv {
        path: String,
    },
}

impl InitialSpec {
    /// Builds the exact datum plus, when it is the smooth bump, its analytic
    /// handle for modulus checks.
    pub fn build(&self, base_dir: &Path) -> Result<(InitialData, Option<RadialBump>)> {
        match self {
            InitialSpec::RadialBump {
                center,
                r_plateau,
                r_support,
                amplitude,
            } => {
                if !(r_support > r_plateau && *r_plateau >= 0.0) {
                    return Err(Error::Config(
                        "need 0 <= r_plateau < r_support in radial_bump".into(),
                    ));
                }
                let bump = RadialBump::new(center.clone(), *r_plateau, *r_support, *amplitude);
                Ok((InitialData::from_bump(&bump), Some(bump)))
            }
            InitialSpec::IndicatorBall { center, radius } => {
                if *radius <= 0.0 {
                    return Err(Error::Config("indicator radius must be positive".into()));
                }
                let ind = IndicatorBall {
                    center: center.clone(),
                    radius: *radius,
                };
                Ok((InitialData::from_indicator(&ind), None))
            }
            InitialSpec::GridCsv { path } => {
                let file = fs::File::open(base_dir.join(path))?;
                let grid = GridFunction::read_csv(BufReader::new(file))?;
                Ok((InitialData::Grid(grid), None))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub shape: Vec<usize>,
}

impl DomainSpec {
    pub fn build(&self) -> Result<BoxDomain> {
        BoxDomain::new(self.lower.clone(), self.upper.clone(), self.shape.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub quad_points: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec { quad_points: 16 }
    }
}

impl KernelSpec {
    pub fn build(&self) -> Result<MollifierKernel> {
        if self.quad_points < 2 {
            return Err(Error::Config("kernel quad_points must be at least 2".into()));
        }
        Ok(MollifierKernel::new(self.quad_points))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankSpec {
    pub seed: u64,
    pub size: usize,
}

impl Default for BankSpec {
    fn default() -> Self {
        BankSpec { seed: 7, size: 64 }
    }
}

/// Lᵖ exponent that also accepts the string "inf" in JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Number(f64),
    Name(String2),
}

/// Only "inf" is accepted as a named exponent.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum String2 {
    #[serde(rename = "inf")]
    Inf,
}

impl PValue {
    pub fn as_f64(&self) -> Result<f64> {
        match self {
            PValue::Number(p) if *p >= 1.0 => Ok(*p),
            PValue::Number(p) => Err(Error::Config(format!("p must be >= 1, got {p}"))),
            PValue::Name(String2::Inf) => Ok(f64::INFINITY),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "check", rename_all = "snake_case")]
pub enum CheckSpec {
    /// Lᵖ-norm history of the designated solution; asserts the isometry
    /// proxy when `assert` is set.
    NormHistory {
        p_values: Vec<PValue>,
        rel_tolerance: f64,
        assert: bool,
    },
    /// Inner/outer mass estimates at the given radii and slice times.
    Apriori {
        radii: Vec<f64>,
        times: Vec<f64>,
        assert: bool,
    },
    /// Weak-residual report over the bank. With a threshold and `assert`,
    /// the max residual must stay below it; otherwise report-only.
    ResidualReport {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        threshold: Option<f64>,
        assert: bool,
    },
    /// Renormalization defects for the standard family; each defect must
    /// stay within `factor` times the plain residual, and the cutoff above
    /// the sup norm must vanish identically.
    Renorm {
        shifts: Vec<f64>,
        factor: f64,
        assert: bool,
    },
    /// Convergence of the mollified sequence: the Cauchy table must be
    /// non-increasing along refinement; with `strict_oracle_decrease` the
    /// oracle distances must strictly decrease, and with `min_final_ratio`
    /// the first distance must exceed the last by that factor.
    Convergence {
        #[serde(default)]
        strict_oracle_decrease: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_final_ratio: Option<f64>,
        assert: bool,
    },
    /// Modulus of continuity against the C¹ bound from the initial bump.
    Modulus {
        base_time: f64,
        increments: Vec<f64>,
        p: PValue,
        tolerance: f64,
        assert: bool,
    },
    /// Jacobian-determinant defect of the backward map.
    MeasurePreservation {
        time: f64,
        region_half_extent: f64,
        samples: usize,
        bound: f64,
        assert: bool,
    },
    /// Flow group law y(t+s, x) = y(s, y(t, x)) on sampled points.
    GroupLaw {
        t_first: f64,
        t_second: f64,
        region_half_extent: f64,
        samples: usize,
        bound: f64,
        assert: bool,
    },
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural validation beyond what parsing enforces. Returns every
    /// problem found, not just the first.
    pub fn validate(&self, base_dir: &Path) -> Vec<String> {
        let mut problems = Vec::new();
        if self.version != SCHEMA_VERSION {
            problems.push(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.version
            ));
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            problems.push("horizon must be positive".into());
        }
        if self.output_slices == 0 {
            problems.push("output_slices must be positive".into());
        }
        if self.bank.size == 0 {
            problems.push("bank size must be positive".into());
        }
        if !self.nus.is_empty() && self.nus.windows(2).any(|w| w[0] >= w[1]) {
            problems.push("nus must be strictly increasing".into());
        }
        if self.step_control.base_step <= 0.0 || self.step_control.tolerance <= 0.0 {
            problems.push("step_control entries must be positive".into());
        }
        let domain = match self.domain.build() {
            Ok(d) => Some(d),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        };
        match (self.field.build(base_dir), &domain) {
            (Ok(field), Some(domain)) => {
                if field.dim() != domain.dim() {
                    problems.push(format!(
                        "field dimension {} does not match domain dimension {}",
                        field.dim(),
                        domain.dim()
                    ));
                }
                if !field.is_smooth() && self.nus.is_empty() {
                    problems.push(format!(
                        "field `{}` is rough; provide mollification indices",
                        field.name()
                    ));
                }
                match self.initial.build(base_dir) {
                    Ok((initial, _)) => {
                        let sampled = initial.sampled(domain);
                        let as_grid = InitialData::Grid(sampled);
                        if let Err(e) =
                            as_grid.validate_expansion(domain, field.sup_norm(), self.horizon)
                        {
                            problems.push(e.to_string());
                        }
                    }
                    Err(e) => problems.push(e.to_string()),
                }
            }
            (Err(e), _) => problems.push(e.to_string()),
            _ => {}
        }
        problems
    }
}

/// Bundled configurations, addressable by name from the CLI.
pub fn builtin_config(name: &str) -> Option<&'static str> {
    match name {
        "constant_translation" => Some(include_str!("../../../configs/constant_translation.json")),
        "shear_sign_benchmark" => Some(include_str!("../../../configs/shear_sign_benchmark.json")),
        "shear_sign_straddle" => Some(include_str!("../../../configs/shear_sign_straddle.json")),
        "rotation_norms" => Some(include_str!("../../../configs/rotation_norms.json")),
        _ => None,
    }
}

pub fn builtin_config_names() -> &'static [&'static str] {
    &[
        "constant_translation",
        "shear_sign_benchmark",
        "shear_sign_straddle",
        "rotation_norms",
    ]
}

/// Resolves a `--config` argument: an existing path wins, otherwise a
/// bundled name.
pub fn resolve_config(arg: &str) -> Result<(ExperimentConfig, PathBuf)> {
    let path = Path::new(arg);
    if path.exists() {
        let config = ExperimentConfig::from_path(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        return Ok((config, base));
    }
    if let Some(text) = builtin_config(arg) {
        let config = ExperimentConfig::from_json(text)?;
        return Ok((config, PathBuf::from(".")));
    }
    Err(Error::Config(format!(
        "`{arg}` is neither a config file nor a bundled config ({})",
        builtin_config_names().join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "version": 1,
            "field": {"name": "constant", "params": {"velocity": [1.0, 0.0]}},
            "initial": {"kind": "radial_bump", "center": [0.0, 0.0],
                        "r_plateau": 0.0, "r_support": 0.3, "amplitude": 1.0},
            "domain": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0], "shape": [32, 32]},
            "horizon": 1.0,
            "output_slices": 16,
            "checks": []
        })
    }

    #[test]
    fn minimal_config_parses_and_validates() {
        let config = ExperimentConfig::from_json(&minimal_json().to_string()).unwrap();
        assert!(config.validate(Path::new(".")).is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal_json();
        v["surprise"] = serde_json::json!(true);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn wrong_version_is_reported() {
        let mut v = minimal_json();
        v["version"] = serde_json::json!(2);
        let config = ExperimentConfig::from_json(&v.to_string()).unwrap();
        let problems = config.validate(Path::new("."));
        assert!(problems.iter().any(|p| p.contains("schema version")));
    }

    #[test]
    fn undersized_domain_is_reported_with_the_expansion() {
        let mut v = minimal_json();
        v["domain"] = serde_json::json!({
            "lower": [-1.0, -1.0], "upper": [1.0, 1.0], "shape": [32, 32]
        });
        let config = ExperimentConfig::from_json(&v.to_string()).unwrap();
        let problems = config.validate(Path::new("."));
        assert!(
            problems.iter().any(|p| p.contains("N*T")),
            "problems: {problems:?}"
        );
    }

    #[test]
    fn rough_field_without_nus_is_reported() {
        let mut v = minimal_json();
        v["field"] = serde_json::json!({"name": "shear", "params": {"profile": "sign"}});
        let config = ExperimentConfig::from_json(&v.to_string()).unwrap();
        let problems = config.validate(Path::new("."));
        assert!(problems.iter().any(|p| p.contains("rough")));
    }

    #[test]
    fn unknown_field_name_fails() {
        let spec = FieldSpec {
            name: "vortex".into(),
            params: serde_json::Value::Null,
            sup_norm: None,
        };
        assert!(matches!(
            spec.build(Path::new(".")),
            Err(Error::UnknownField(_))
        ));
    }

    #[test]
    fn sampled_fields_pass_or_fail_the_solenoidality_gate() {
        use crate::grid::fmt_f64;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let write_field = |name: &str, f: &dyn Fn(f64, f64) -> (f64, f64)| {
            let path = dir.path().join(name);
            let mut file = std::fs::File::create(&path).unwrap();
            let n = 33usize;
            for i in 0..n {
                for j in 0..n {
                    let x = -2.0 + 4.0 * i as f64 / (n - 1) as f64;
                    let y = -2.0 + 4.0 * j as f64 / (n - 1) as f64;
                    let (a1, a2) = f(x, y);
                    writeln!(
                        file,
                        "{},{},{},{}",
                        fmt_f64(x),
                        fmt_f64(y),
                        fmt_f64(a1),
                        fmt_f64(a2)
                    )
                    .unwrap();
                }
            }
            path
        };
        // solenoidal samples: rigid rotation
        write_field("rot.csv", &|x, y| (-y, x));
        let spec = FieldSpec {
            name: "custom-sampled".into(),
            params: serde_json::json!({"path": "rot.csv"}),
            sup_norm: None,
        };
        let field = spec.build(dir.path()).unwrap();
        assert!(!field.is_smooth());

        // strongly divergent samples: a = x, fails the gate
        write_field("div.csv", &|x, y| (x, y));
        let spec = FieldSpec {
            name: "custom-sampled".into(),
            params: serde_json::json!({"path": "div.csv"}),
            sup_norm: None,
        };
        let err = spec.build(dir.path());
        assert!(
            matches!(&err, Err(Error::InvalidField(msg)) if msg.contains("solenoidality")),
            "{err:?}"
        );
    }

    #[test]
    fn builtin_configs_parse_and_validate() {
        for name in builtin_config_names() {
            let (config, base) = resolve_config(name).unwrap();
            let problems = config.validate(&base);
            assert!(problems.is_empty(), "{name}: {problems:?}");
        }
    }

    #[test]
    fn p_value_accepts_inf() {
        let p: Vec<PValue> = serde_json::from_str(r#"[1.0, 2.0, "inf"]"#).unwrap();
        assert_eq!(p[0].as_f64().unwrap(), 1.0);
        assert_eq!(p[2].as_f64().unwrap(), f64::INFINITY);
        let bad: std::result::Result<PValue, _> = serde_json::from_str(r#""sup""#);
        assert!(bad.is_err());
    }
}
