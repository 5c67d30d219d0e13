//! Configuration-driven experiment runner.
//!
//! `run` ties the pipeline together: build field and initial datum, solve
//! (directly for smooth fields, through the mollified sequence otherwise),
//! evaluate the configured checks, and write reproducible artifacts:
//! solution CSVs, a diagnostics JSON, a per-check CSV summary, a convergence
//! table, and a manifest with the config digest and tool version. Identical
//! configs and seeds produce byte-identical artifacts.
//!
//! Exit codes: 0 all asserted checks pass, 1 an asserted check failed
//! (the failing slacks are listed), 2 the config failed to parse or
//! validate.

use crate::config::{builtin_config_names, resolve_config, CheckSpec};
use crate::diagnostics::{
    apriori_check, convergence_study, digest_of, modulus_check, norm_history, renorm_defect,
    write_convergence_csv, CheckRecord, ConvergenceStudy, NormHistory, Renormalization,
};
use crate::error::{Error, Result};
use crate::fields::{gallery, mollify, VectorField};
use crate::flow::{backward_map, default_jacobian_stencil, measure_preservation_check};
use crate::grid::{BoxDomain, GridFunction};
use crate::solver::{solve_rough, solve_smooth, uniform_times, SolutionSequence};
use crate::weakform::{residual_report, ResidualReport, TestBank};
use clap::{Parser, Subcommand};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "transport-lab",
    version,
    about = "Numerical laboratory for transport equations with rough solenoidal coefficients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a config file or bundled config name.
    Run {
        #[arg(long)]
        config: String,
        /// Output directory for artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the test-bank seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run only the mollified-sequence convergence study.
    Convergence {
        #[arg(long)]
        config: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List the built-in field gallery.
    ListFields,
    /// Explain a diagnostic check and the guide statement it verifies.
    DescribeCheck { name: String },
}

/// Entry point used by the binary; returns the process exit code.
pub fn run_cli() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            jobs,
        } => {
            configure_jobs(jobs);
            run_experiment(&config, &out, seed, false)
        }
        Command::Convergence {
            config,
            out,
            seed,
            jobs,
        } => {
            configure_jobs(jobs);
            run_experiment(&config, &out, seed, true)
        }
        Command::ListFields => {
            for (name, summary) in gallery() {
                println!("{name:16} {summary}");
            }
            println!("\nbundled configs: {}", builtin_config_names().join(", "));
            Ok(0)
        }
        Command::DescribeCheck { name } => describe_check(&name),
    }
}

fn configure_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
}

fn describe_check(name: &str) -> Result<i32> {
    let text = match name {
        "apriori" => {
            "apriori: inner/outer mass estimates for nonnegative solutions.\n\
             Verifies Prop 1.1 of the guide: mass over |x| < R at time t is\n\
             bounded by the initial mass over |x| < R + Nt, and mass over\n\
             |x| > R + Nt by the initial mass over |x| > R, with a documented\n\
             boundary-layer quadrature tolerance."
        }
        "norm_history" | "norm" => {
            "norm_history: Lp norms of the solution along the output times.\n\
             Verifies the conservation statement of Prop 2.1(iv) of the guide\n\
             for smooth transport, and classifies the history as isometric,\n\
             contractive, or irregular (the observable shadow of Thm 6.1's\n\
             contraction semigroup dichotomy)."
        }
        "group_law" | "group" => {
            "group_law: composition consistency of the backward flow map,\n\
             y(t+s, x) = y(s, y(t, x)), from Prop 2.1(iii) of the guide."
        }
        "measure_preservation" | "measure" => {
            "measure_preservation: Jacobian determinant of x -> y(t, x) must\n\
             equal 1 for solenoidal fields (guide, section on characteristics);\n\
             estimated by central differences plus a cell-count ratio."
        }
        "residual_report" | "residual" => {
            "residual_report: quadrature of the weak identity of Def 1.1 of\n\
             the guide against a seeded bank of test functions; zero for exact\n\
             generalized solutions."
        }
        "renorm" => {
            "renorm: weak residual of g(u) with initial data g(u0) for the\n\
             standard family g in {u^2, |u|, (|u|-r)+}. Verifies the\n\
             renormalized-solution property of Def 1.2 / Thm 5.1 of the guide;\n\
             the cutoff above the initial sup norm must vanish identically\n\
             (maximum principle)."
        }
        "stationary_renorm" | "stationary" => {
            "stationary_renorm: weak divergence of a(x) g(w(x)) for stationary\n\
             w, the identity div(a g(w)) = 0 of Thm 4.1 of the guide."
        }
        "convergence" => {
            "convergence: Cauchy table and oracle distances of the mollified\n\
             approximation sequence u_nu (guide, Prop 4.1: strong L2\n\
             convergence of the approximations)."
        }
        "modulus" => {
            "modulus: time modulus of continuity. Verifies the bound\n\
             |u(t+h) - u(t)|_p <= N |grad u0|_inf (2 m(A))^{1/p} |h| from\n\
             Prop 2.1(iv), eq. (2.3)/(2.5) of the guide, with the initial\n\
             datum as the C1 witness."
        }
        other => {
            eprintln!("unknown check `{other}`");
            eprintln!(
                "available: apriori, norm_history, group_law, measure_preservation,\n\
                 residual_report, renorm, stationary_renorm, convergence, modulus"
            );
            return Ok(2);
        }
    };
    println!("{text}");
    Ok(0)
}

/// One evaluated check plus whether it gates the exit code.
#[derive(Debug, Clone, Serialize)]
struct RunCheck {
    #[serde(flatten)]
    record: CheckRecord,
    asserted: bool,
}

#[derive(Serialize)]
struct RunReport {
    tool_version: &'static str,
    config_digest: String,
    seed: u64,
    field: String,
    checks: Vec<RunCheck>,
    norm_histories: Vec<NormHistory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_report: Option<ResidualReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    convergence: Option<ConvergenceStudy>,
}

fn run_experiment(
    config_arg: &str,
    out_dir: &Path,
    seed_override: Option<u64>,
    convergence_only: bool,
) -> Result<i32> {
    let (mut config, base_dir) = resolve_config(config_arg)?;
    if let Some(seed) = seed_override {
        config.bank.seed = seed;
    }
    let problems = config.validate(&base_dir);
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("config error: {p}");
        }
        return Ok(2);
    }
    if convergence_only && config.nus.is_empty() {
        eprintln!("config error: convergence study requires mollification indices");
        return Ok(2);
    }

    let field = config.field.build(&base_dir)?;
    let (exact_initial, bump) = config.initial.build(&base_dir)?;
    let domain = config.domain.build()?;
    let kernel = config.kernel.build()?;
    let times = uniform_times(config.horizon, config.output_slices);
    let control = config.step_control;

    // solve with the exact datum; the sampled grid feeds the quadrature
    // terms (nodal u0 values are the same either way)
    let u0_grid = exact_initial.sampled(&domain);
    let solve_initial = exact_initial.clone();

    let sequence: Option<SolutionSequence>;
    let designated_field: VectorField;
    let designated: Vec<GridFunction>;
    if config.nus.is_empty() {
        sequence = None;
        designated_field = field.clone();
        designated = solve_smooth(&field, &solve_initial, &domain, &times, &control)?;
    } else {
        let seq = solve_rough(
            &field,
            &solve_initial,
            &domain,
            &times,
            &config.nus,
            &kernel,
            &control,
        )?;
        designated_field = mollify(&field, &kernel, *config.nus.last().unwrap(), &domain)?;
        designated = seq.designated().to_vec();
        sequence = Some(seq);
    }

    let bank = TestBank::generate(
        config.bank.seed,
        config.bank.size,
        &domain,
        config.horizon,
        config.output_slices,
    );

    // the oracle transports the exact datum along the exact backward map
    let oracle_flow = field.analytic_flow().cloned();
    let oracle = oracle_flow.map(|flow| {
        let initial = exact_initial.clone();
        move |t: f64, x: &[f64]| initial.eval(&flow(t, x))
    });

    let mut checks: Vec<RunCheck> = Vec::new();
    let mut norm_histories = Vec::new();
    let mut residual: Option<ResidualReport> = None;
    let mut convergence: Option<ConvergenceStudy> = None;

    let check_specs: Vec<&CheckSpec> = if convergence_only {
        config
            .checks
            .iter()
            .filter(|c| matches!(c, CheckSpec::Convergence { .. }))
            .collect()
    } else {
        config.checks.iter().collect()
    };

    for spec in check_specs {
        match spec {
            CheckSpec::NormHistory {
                p_values,
                rel_tolerance,
                assert,
            } => {
                for p in p_values {
                    let p = p.as_f64()?;
                    let history = norm_history(&designated, p, *rel_tolerance);
                    checks.push(RunCheck {
                        record: CheckRecord::new(
                            format!("norm_history[p={p}]"),
                            &(field.name(), p),
                            history.max_drift,
                            *rel_tolerance,
                            0.0,
                        ),
                        asserted: *assert,
                    });
                    norm_histories.push(history);
                }
            }
            CheckSpec::Apriori {
                radii,
                times: check_times,
                assert,
            } => {
                let slices: Vec<GridFunction> = designated
                    .iter()
                    .filter(|s| {
                        check_times
                            .iter()
                            .any(|t| (s.time - t).abs() < 1e-9 * config.horizon.max(1.0))
                    })
                    .cloned()
                    .collect();
                if slices.len() != check_times.len() {
                    return Err(Error::Config(format!(
                        "apriori times {check_times:?} are not all output times"
                    )));
                }
                let report = apriori_check(&slices, &u0_grid, field.sup_norm(), radii)?;
                checks.extend(report.checks.into_iter().map(|record| RunCheck {
                    record,
                    asserted: *assert,
                }));
            }
            CheckSpec::ResidualReport { threshold, assert } => {
                let report = residual_report(&designated, &u0_grid, &field, &bank)?;
                if let Some(bound) = threshold {
                    checks.push(RunCheck {
                        record: CheckRecord::new(
                            "weak_residual_max",
                            &(field.name(), bank.seed),
                            report.max_abs,
                            *bound,
                            0.0,
                        ),
                        asserted: *assert,
                    });
                }
                residual = Some(report);
            }
            CheckSpec::Renorm {
                shifts,
                factor,
                assert,
            } => {
                let plain = residual_report(&designated, &u0_grid, &field, &bank)?;
                for g in Renormalization::standard_family(shifts) {
                    let defect = renorm_defect(&designated, &u0_grid, &field, &g, &bank)?;
                    checks.push(RunCheck {
                        record: CheckRecord::new(
                            format!("renorm_defect[{}]", defect.g),
                            &(field.name(), defect.g.clone()),
                            defect.defect,
                            factor * plain.max_abs,
                            0.0,
                        ),
                        asserted: *assert,
                    });
                }
                // cutoff above the initial sup norm must vanish identically
                let m = u0_grid.lp_norm(f64::INFINITY);
                let g = Renormalization::ShiftedPositive(m);
                let defect = renorm_defect(&designated, &u0_grid, &field, &g, &bank)?;
                checks.push(RunCheck {
                    record: CheckRecord::new(
                        format!("renorm_defect_above_sup[{}]", defect.g),
                        &(field.name(), m),
                        defect.defect,
                        0.0,
                        0.0,
                    ),
                    asserted: *assert,
                });
            }
            CheckSpec::Convergence {
                strict_oracle_decrease,
                min_final_ratio,
                assert,
            } => {
                let Some(seq) = &sequence else {
                    return Err(Error::Config(
                        "convergence check requires mollification indices".into(),
                    ));
                };
                let study = match &oracle {
                    Some(f) => convergence_study(seq, Some(f)),
                    None => convergence_study(seq, None),
                };
                let worst_increase = study
                    .consecutive
                    .windows(2)
                    .flat_map(|pair| pair[0].iter().zip(&pair[1]).map(|(a, b)| b - a))
                    .fold(0.0f64, f64::max);
                let scale = study
                    .consecutive
                    .iter()
                    .flatten()
                    .fold(0.0f64, |m, &v| m.max(v));
                checks.push(RunCheck {
                    record: CheckRecord::new(
                        "cauchy_nonincreasing",
                        &(field.name(), &seq.nus),
                        worst_increase,
                        0.0,
                        1e-12 * (1.0 + scale),
                    ),
                    asserted: *assert,
                });
                if let Some(table) = &study.oracle_distances {
                    let final_idx = study.times.len() - 1;
                    if *strict_oracle_decrease {
                        let worst = table
                            .windows(2)
                            .map(|pair| pair[1][final_idx] - pair[0][final_idx])
                            .fold(f64::NEG_INFINITY, f64::max);
                        // strictly decreasing: every consecutive difference < 0
                        checks.push(RunCheck {
                            record: CheckRecord::new(
                                "oracle_strict_decrease",
                                &(field.name(), &seq.nus),
                                worst,
                                0.0,
                                0.0,
                            ),
                            asserted: *assert,
                        });
                    }
                    if let Some(ratio) = min_final_ratio {
                        let first = table.first().map_or(0.0, |row| row[final_idx]);
                        let last = table.last().map_or(0.0, |row| row[final_idx]);
                        checks.push(RunCheck {
                            record: CheckRecord::new(
                                format!("oracle_final_ratio[>={ratio}]"),
                                &(field.name(), &seq.nus),
                                last,
                                first / ratio,
                                0.0,
                            ),
                            asserted: *assert,
                        });
                    }
                } else if *strict_oracle_decrease || min_final_ratio.is_some() {
                    return Err(Error::Config(
                        "oracle-based convergence clauses need a field with an exact flow oracle"
                            .into(),
                    ));
                }
                convergence = Some(study);
            }
            CheckSpec::Modulus {
                base_time,
                increments,
                p,
                tolerance,
                assert,
            } => {
                let Some(bump) = &bump else {
                    return Err(Error::Config(
                        "modulus check requires a radial_bump initial datum".into(),
                    ));
                };
                let report = modulus_check(
                    &designated_field,
                    bump,
                    &domain,
                    *base_time,
                    increments,
                    p.as_f64()?,
                    &control,
                    *tolerance,
                )?;
                checks.extend(report.checks.into_iter().map(|record| RunCheck {
                    record,
                    asserted: *assert,
                }));
            }
            CheckSpec::MeasurePreservation {
                time,
                region_half_extent,
                samples,
                bound,
                assert,
            } => {
                let region = BoxDomain::new(
                    vec![-region_half_extent; domain.dim()],
                    vec![*region_half_extent; domain.dim()],
                    vec![1; domain.dim()],
                )?;
                let report = measure_preservation_check(
                    &designated_field,
                    *time,
                    &region,
                    *samples,
                    default_jacobian_stencil(&control),
                    &control,
                )?;
                checks.push(RunCheck {
                    record: CheckRecord::new(
                        format!("measure_preservation[{}] t={time}", designated_field.name()),
                        &(designated_field.name(), time, samples),
                        report.max_jacobian_defect,
                        *bound,
                        0.0,
                    ),
                    asserted: *assert,
                });
            }
            CheckSpec::GroupLaw {
                t_first,
                t_second,
                region_half_extent,
                samples,
                bound,
                assert,
            } => {
                let per_axis = (*samples as f64)
                    .powf(1.0 / domain.dim() as f64)
                    .round()
                    .max(2.0) as usize;
                let lattice = BoxDomain::new(
                    vec![-region_half_extent; domain.dim()],
                    vec![*region_half_extent; domain.dim()],
                    vec![per_axis; domain.dim()],
                )?;
                let mut worst = 0.0f64;
                for i in 0..lattice.num_nodes() {
                    let x = lattice.node(i);
                    let direct = backward_map(&designated_field, t_first + t_second, &x, &control)?;
                    let stage = backward_map(&designated_field, *t_first, &x, &control)?;
                    let composed = backward_map(&designated_field, *t_second, &stage, &control)?;
                    let defect = direct
                        .iter()
                        .zip(&composed)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(defect);
                }
                checks.push(RunCheck {
                    record: CheckRecord::new(
                        format!(
                            "group_law[{}] t={t_first} s={t_second}",
                            designated_field.name()
                        ),
                        &(designated_field.name(), t_first, t_second, samples),
                        worst,
                        *bound,
                        0.0,
                    ),
                    asserted: *assert,
                });
            }
        }
    }

    // --- artifacts ---
    fs::create_dir_all(out_dir)?;
    let config_digest = digest_of(&config);
    let report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION"),
        config_digest: config_digest.clone(),
        seed: config.bank.seed,
        field: field.name().to_string(),
        checks,
        norm_histories,
        residual_report: residual,
        convergence,
    };

    let manifest = serde_json::json!({
        "tool_version": report.tool_version,
        "config_digest": config_digest,
        "seed": config.bank.seed,
        "config": config,
    });
    fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;

    let mut f = fs::File::create(out_dir.join("u0.csv"))?;
    u0_grid.write_csv(&mut f)?;
    if let Some(seq) = &report.convergence {
        let mut f = fs::File::create(out_dir.join("convergence.csv"))?;
        write_convergence_csv(seq, &mut f)?;
    }
    let sidecar = |nu: Option<u32>, time: f64| {
        serde_json::json!({
            "field": config.field,
            "nu": nu,
            "time": time,
            "step_control": control,
            "config_digest": config_digest,
        })
    };
    if let Some(seq) = &sequence {
        for (k, per_time) in seq.solutions.iter().enumerate() {
            let last = per_time.last().expect("output times nonempty");
            let stem = format!("solution_nu{:04}_final", seq.nus[k]);
            let mut f = fs::File::create(out_dir.join(format!("{stem}.csv")))?;
            last.write_csv(&mut f)?;
            fs::write(
                out_dir.join(format!("{stem}.meta.json")),
                serde_json::to_string_pretty(&sidecar(Some(seq.nus[k]), last.time))?,
            )?;
        }
    } else if let Some(last) = designated.last() {
        let mut f = fs::File::create(out_dir.join("solution_final.csv"))?;
        last.write_csv(&mut f)?;
        fs::write(
            out_dir.join("solution_final.meta.json"),
            serde_json::to_string_pretty(&sidecar(None, last.time))?,
        )?;
    }
    fs::write(
        out_dir.join("diagnostics.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    {
        let mut f = fs::File::create(out_dir.join("summary.csv"))?;
        use std::io::Write;
        writeln!(f, "name,measured,bound,slack,tolerance,pass,asserted")?;
        for c in &report.checks {
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                c.record.name,
                crate::grid::fmt_f64(c.record.measured),
                crate::grid::fmt_f64(c.record.bound),
                crate::grid::fmt_f64(c.record.slack),
                crate::grid::fmt_f64(c.record.tolerance),
                c.record.pass,
                c.asserted
            )?;
        }
    }

    let failing: Vec<&RunCheck> = report
        .checks
        .iter()
        .filter(|c| c.asserted && !c.record.pass)
        .collect();
    if failing.is_empty() {
        println!(
            "ok: {} checks ({} asserted), artifacts in {}",
            report.checks.len(),
            report.checks.iter().filter(|c| c.asserted).count(),
            out_dir.display()
        );
        Ok(0)
    } else {
        for c in &failing {
            println!(
                "FAILED {}: measured = {:.6e}, bound = {:.6e}, slack = {:.6e}",
                c.record.name, c.record.measured, c.record.bound, c.record.slack
            );
        }
        Ok(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn describe_check_cites_guide_statements() {
        // exercised end to end in the CLI tests; here just the text table
        assert!(matches!(describe_check("apriori"), Ok(0)));
        assert!(matches!(describe_check("renorm"), Ok(0)));
        assert!(matches!(describe_check("nonsense"), Ok(2)));
    }
}
