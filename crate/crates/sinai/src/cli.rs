//! Batch front-end: subcommands `env`, `valleys`, `simulate`, `localize`,
//! `renewal`, `check`. One JSON config document; CLI flags override config
//! keys; the effective config is embedded in every report. Exit codes:
//! 0 success, 1 usage/config error, 2 scan incomplete, 3 check failure.

use crate::acceptance::{run_all, Scale};
use crate::config::{ExperimentConfig, Overrides};
use crate::env::EnvKind;
use crate::error::{Result, SinaiError};
use crate::experiments::{
    collect_nf_samples, env_snapshot, run_localization, run_renewal, run_theorem_trials,
};
use crate::observables::nf_statistics;
use crate::report::{self, fmt_f64, Csv};
use crate::valleys::{construct_cover, GammaParams, ValleyDecomposition};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "sinai",
    about = "Simulate independent random walks in random environment from a Poisson field and verify their deep-valley localization",
    version
)]
pub struct Cli {
    /// JSON config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Time horizon override.
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Trial count override.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Also emit SVG plots where supported.
    #[arg(long, global = true)]
    pub svg: bool,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Args, Debug, Default)]
pub struct ValleyFlags {
    /// Depth correction exponent (Gamma_t = log t + gamma log log t).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Support half-width K in rescaled units.
    #[arg(long = "K")]
    pub k: Option<f64>,
    /// Environment law: two_point_symmetric | uniform_symmetric.
    #[arg(long)]
    pub dist: Option<String>,
    /// Ellipticity parameter of the law.
    #[arg(long)]
    pub rho0: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the environment and potential snapshot as CSV.
    Env,
    /// Build the deep-valley cover and export it as JSON/CSV.
    Valleys(ValleyFlags),
    /// Run the empirical-vs-predicted functional comparison over trials.
    Simulate,
    /// Exact-law localization masses per valley.
    Localize,
    /// Renewal statistics of the potential's Gamma-extrema.
    Renewal,
    /// Run the acceptance checks and write a combined report.
    Check {
        /// Reduced workload (statistical checks indicative only).
        #[arg(long)]
        quick: bool,
    },
}

fn parse_kind(s: &str) -> Result<EnvKind> {
    match s {
        "two_point_symmetric" | "two_point" => Ok(EnvKind::TwoPointSymmetric),
        "uniform_symmetric" | "uniform" => Ok(EnvKind::UniformSymmetric),
        other => Err(SinaiError::config(format!(
            "unknown distribution kind {other:?} (expected two_point_symmetric or uniform_symmetric)"
        ))),
    }
}

/// Resolve config file + flag overrides into an effective config.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    let mut ov = Overrides {
        seed: cli.seed,
        t: cli.t,
        trials: cli.trials,
        out_dir: cli.out.clone(),
        ..Default::default()
    };
    if let Command::Valleys(flags) = &cli.cmd {
        ov.gamma = flags.gamma;
        ov.k_support = flags.k;
        ov.rho0 = flags.rho0;
        if let Some(s) = &flags.dist {
            ov.kind = Some(parse_kind(s)?);
        }
    }
    if let Command::Check { quick } = &cli.cmd {
        ov.quick = Some(*quick);
    }
    ov.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = effective_config(cli)?;
    let out_dir = PathBuf::from(&cfg.output.dir);
    report::ensure_dir(&out_dir)?;
    match &cli.cmd {
        Command::Env => cmd_env(&cfg, &out_dir).map(|_| 0),
        Command::Valleys(_) => cmd_valleys(&cfg, &out_dir, cli.svg).map(|_| 0),
        Command::Simulate => cmd_simulate(&cfg, &out_dir).map(|_| 0),
        Command::Localize => cmd_localize(&cfg, &out_dir).map(|_| 0),
        Command::Renewal => cmd_renewal(&cfg, &out_dir, cli.svg).map(|_| 0),
        Command::Check { .. } => cmd_check(&cfg, &out_dir),
    }
}

/// `env.csv` with columns index,alpha,S at 17 significant digits.
pub fn cmd_env(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let dist = cfg.distribution()?;
    let (env, pot) = env_snapshot(&dist, cfg.env.seed, cfg.env.half_width)?;
    let mut csv = Csv::new();
    csv.row(["index", "alpha", "S"]);
    for i in env.lo()..=env.hi() {
        csv.row([i.to_string(), fmt_f64(env.alpha(i)), fmt_f64(pot.s(i))]);
    }
    let path = report::write_csv(out_dir, "env.csv", csv)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

#[derive(Serialize)]
struct DecompositionExport<'a> {
    t: f64,
    gamma: f64,
    #[serde(rename = "K")]
    k: f64,
    n_f: usize,
    #[serde(rename = "case_At")]
    case_at: bool,
    #[serde(rename = "M")]
    summits: &'a [i64],
    #[serde(rename = "m")]
    bottoms: &'a [i64],
    #[serde(rename = "U")]
    u_sets: &'a [(i64, i64)],
}

fn decomposition_json(cfg: &ExperimentConfig, d: &ValleyDecomposition) -> serde_json::Value {
    json!({
        "config": cfg,
        "decomposition": DecompositionExport {
            t: d.params.t,
            gamma: d.params.gamma,
            k: d.k,
            n_f: d.n_f,
            case_at: d.case_at,
            summits: &d.m_upper,
            bottoms: &d.m_lower,
            u_sets: &d.u_sets,
        },
    })
}

pub fn cmd_valleys(cfg: &ExperimentConfig, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let dist = cfg.distribution()?;
    let params = GammaParams::new(cfg.sim.t, cfg.valleys.gamma)?;
    let limits = crate::valleys::ScanLimits::for_params(&params);
    let bound = params.support_bound(cfg.valleys.k_support).ceil() as i64;
    let mut env =
        crate::env::sample_environment(&dist, -(bound + limits.chunk), bound + limits.chunk, cfg.env.seed)?;
    let d = construct_cover(&mut env, &params, cfg.valleys.k_support)?;
    let pot = crate::env::compute_potential(&env);
    let mut paths = Vec::new();
    paths.push(report::write_json(
        out_dir,
        "valleys.json",
        &decomposition_json(cfg, &d),
    )?);
    let mut csv = Csv::new();
    csv.row(["kind", "index", "S"]);
    let mut markers: Vec<(&str, i64)> = d.m_upper.iter().map(|&p| ("M", p)).collect();
    markers.extend(d.m_lower.iter().map(|&p| ("m", p)));
    markers.sort_by_key(|&(_, p)| p);
    for (kind, p) in markers {
        csv.row([kind.to_string(), p.to_string(), fmt_f64(pot.s(p))]);
    }
    paths.push(report::write_csv(out_dir, "valleys.csv", csv)?);
    if svg {
        let path = out_dir.join("potential.svg");
        report::write_bytes(&path, &report::potential_svg(&pot, &d))?;
        paths.push(path);
    }
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(paths)
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dist = cfg.distribution()?;
    let f = cfg.function_spec()?;
    let out = run_theorem_trials(
        &dist,
        cfg.env.seed,
        cfg.sim.t,
        cfg.valleys.gamma,
        cfg.valleys.k_support,
        cfg.sim.lambda,
        &f,
        cfg.sim.engine,
        cfg.sim.window_margin,
        cfg.sim.trials,
    )?;
    let mut paths = Vec::new();
    paths.push(report::write_json(
        out_dir,
        "simulate.json",
        &json!({
            "config": cfg,
            "theorem1": {
                "t": out.t,
                "median_abs_err": out.median_abs_err,
                "q25_abs_err": out.q25_abs_err,
                "q75_abs_err": out.q75_abs_err,
                "failed": out.failed,
            },
            "trials": out.trials,
        }),
    )?);
    let mut csv = Csv::new();
    csv.row([
        "trial", "env_seed", "n_f", "case_At", "F_emp", "F_pred", "abs_err", "rel_err",
    ]);
    for r in &out.trials {
        csv.row([
            r.trial.to_string(),
            r.env_seed.to_string(),
            r.n_f.to_string(),
            r.case_at.to_string(),
            fmt_f64(r.f_emp),
            fmt_f64(r.f_pred),
            fmt_f64(r.abs_err),
            r.rel_err.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    paths.push(report::write_csv(out_dir, "simulate.csv", csv)?);
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(paths)
}

pub fn cmd_localize(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dist = cfg.distribution()?;
    let out = run_localization(
        &dist,
        cfg.env.seed,
        cfg.sim.t,
        cfg.valleys.gamma,
        cfg.valleys.k_support,
        cfg.observables.cte,
        cfg.localize.envs,
        cfg.localize.starts_per_valley,
    )?;
    let frac = |ms: &[f64]| {
        if ms.is_empty() {
            0.0
        } else {
            ms.iter().filter(|&&m| m >= 0.9).count() as f64 / ms.len() as f64
        }
    };
    let mut paths = Vec::new();
    paths.push(report::write_json(
        out_dir,
        "localize.json",
        &json!({
            "config": cfg,
            "localization": {
                "t": out.t,
                "cte": out.cte,
                "bottom_fraction_at_0.9": frac(&out.bottom_masses),
                "start_fraction_at_0.9": frac(&out.start_masses),
                "envs_failed": out.envs_failed,
                "environments": out.reports,
            },
        }),
    )?);
    let mut csv = Csv::new();
    csv.row(["env_seed", "valley", "bottom", "start", "mass"]);
    for (seed, rep) in &out.reports {
        for v in &rep.valleys {
            csv.row([
                seed.to_string(),
                v.valley_index.to_string(),
                v.bottom.to_string(),
                v.bottom.to_string(),
                fmt_f64(v.bottom_mass),
            ]);
            for s in &v.starts {
                csv.row([
                    seed.to_string(),
                    v.valley_index.to_string(),
                    v.bottom.to_string(),
                    s.start.to_string(),
                    fmt_f64(s.mass),
                ]);
            }
        }
    }
    paths.push(report::write_csv(out_dir, "localize.csv", csv)?);
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(paths)
}

pub fn cmd_renewal(cfg: &ExperimentConfig, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let dist = cfg.renewal_distribution()?;
    let out = run_renewal(
        &dist,
        cfg.renewal.depth,
        cfg.renewal.envs,
        cfg.renewal.target_extrema,
        cfg.env.seed,
        &cfg.observables.lambdas,
    )?;
    let nf_dist = cfg.distribution()?;
    let mut nf_sample = collect_nf_samples(
        &nf_dist,
        cfg.env.seed,
        cfg.renewal.nf_t,
        cfg.renewal.nf_k,
        cfg.renewal.nf_seeds,
    )?;
    nf_sample.sigma2 = crate::env::sigma2_analytic(&nf_dist);
    let nf = nf_statistics(&nf_sample)?;
    let mut paths = Vec::new();
    paths.push(report::write_json(
        out_dir,
        "renewal.json",
        &json!({
            "config": cfg,
            "renewal": {
                "depth": out.depth,
                "gaps_summary": {
                    "n_gaps": out.n_gaps,
                    "mean": out.mean_gap,
                    "mean_adjacent": out.mean_adjacent_gap,
                    "lag1_autocorrelation": out.lag1_autocorrelation,
                    "skipped_envs": out.skipped,
                },
                "laplace": out.laplace,
                "nf": nf,
            },
        }),
    )?);
    let mut gaps_csv = Csv::new();
    gaps_csv.row(["index", "rescaled_gap"]);
    for (i, g) in out.sample.gaps.iter().enumerate() {
        gaps_csv.row([i.to_string(), fmt_f64(*g)]);
    }
    paths.push(report::write_csv(out_dir, "gaps.csv", gaps_csv)?);
    let mut lap_csv = Csv::new();
    lap_csv.row([
        "lambda",
        "empirical",
        "paper_value",
        "alt_value",
        "ci_low",
        "ci_high",
        "matches",
    ]);
    for r in &out.laplace {
        lap_csv.row([
            fmt_f64(r.lambda),
            fmt_f64(r.empirical),
            fmt_f64(r.paper_value),
            fmt_f64(r.alt_value),
            fmt_f64(r.ci_low),
            fmt_f64(r.ci_high),
            r.matches.to_string(),
        ]);
    }
    paths.push(report::write_csv(out_dir, "laplace.csv", lap_csv)?);
    if svg {
        let path = out_dir.join("gaps_hist.svg");
        report::write_bytes(&path, &report::gaps_histogram_svg(&out.sample.gaps))?;
        paths.push(path);
    }
    for p in &paths {
        eprintln!("wrote {}", p.display());
    }
    Ok(paths)
}

/// Run the acceptance checks; returns the process exit code (3 on failure).
pub fn cmd_check(cfg: &ExperimentConfig, out_dir: &Path) -> Result<i32> {
    let scale = if cfg.check.quick {
        Scale::quick()
    } else {
        Scale::full()
    };
    let outcomes = run_all(&scale)?;
    let all_pass = outcomes.iter().all(|o| o.pass);
    let path = report::write_json(
        out_dir,
        "check.json",
        &json!({
            "config": cfg,
            "scale": scale,
            "criteria": outcomes,
            "all_pass": all_pass,
        }),
    )?;
    let mut csv = Csv::new();
    csv.row(["id", "name", "pass", "summary"]);
    for o in &outcomes {
        csv.row([
            o.id.to_string(),
            o.name.to_string(),
            o.pass.to_string(),
            o.summary.clone(),
        ]);
    }
    let csv_path = report::write_csv(out_dir, "check.csv", csv)?;
    eprintln!("wrote {}", path.display());
    eprintln!("wrote {}", csv_path.display());
    Ok(if all_pass { 0 } else { 3 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_strings_parse() {
        assert_eq!(
            parse_kind("two_point_symmetric").unwrap(),
            EnvKind::TwoPointSymmetric
        );
        assert_eq!(
            parse_kind("uniform_symmetric").unwrap(),
            EnvKind::UniformSymmetric
        );
        assert!(parse_kind("gaussian").is_err());
    }
}
