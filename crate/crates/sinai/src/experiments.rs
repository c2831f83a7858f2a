//! Batch drivers: per-environment trials for the localization theorem, the
//! localization and migration diagnostics, and the renewal harness. Trials
//! are scheduled on the rayon pool with per-trial derived seeds; results are
//! collected in trial order and reduced sequentially so reports are
//! independent of scheduling.

use crate::config::EngineKind;
use crate::env::{
    compute_potential, extend_environment, sample_environment, EnvDistribution, Environment,
};
use crate::error::{Result, SinaiError};
use crate::observables::{
    empirical_functional, localization_mass, migration_report, predicted_functional,
    renewal_gap_sample, tagged_initial_fields, FunctionSpec, LaplaceRow, LocalizationReport,
    MigrationReport, RenewalSample, StartMass, ValleyLocalization,
};
use crate::particles::{
    evolve_field, evolve_law_in, evolve_per_particle, init_field,
};
use crate::rng::{self, stream, Stream};
use crate::valleys::{construct_cover, GammaParams, ScanLimits, ValleyDecomposition};
use rayon::prelude::*;
use serde::Serialize;

/// Simulation window radius: the support plus the long-distance band
/// `(log log t)(log t)^2` beyond which particles cannot reach the support
/// within time t (up to negligible probability), plus a safety margin.
pub fn window_radius(params: &GammaParams, k: f64, margin: i64) -> i64 {
    let unit = params.log_t * params.log_t;
    (k * unit + params.loglog_t * unit).ceil() as i64 + margin
}

fn derived_env_seed(master: u64, index: u64) -> u64 {
    rng::value_at(master, &[stream::BATCH_ENV, index])
}

/// Sample an environment sized for the cover scan and build the cover.
fn cover_for_env(
    dist: &EnvDistribution,
    env_seed: u64,
    params: &GammaParams,
    k: f64,
) -> Result<(Environment, ValleyDecomposition)> {
    let limits = ScanLimits::for_params(params);
    let bound = params.support_bound(k).ceil() as i64;
    let half = bound + limits.chunk;
    let mut env = sample_environment(dist, -half, half, env_seed)?;
    let d = construct_cover(&mut env, params, k)?;
    Ok((env, d))
}

/// One environment's empirical-vs-predicted functional comparison.
#[derive(Clone, Debug, Serialize)]
pub struct TheoremTrial {
    pub trial: u64,
    pub env_seed: u64,
    pub n_f: usize,
    pub case_at: bool,
    pub f_emp: f64,
    pub f_pred: f64,
    pub abs_err: f64,
    /// Relative error, absent when `f_pred` is zero.
    pub rel_err: Option<f64>,
    pub leaked_left: u64,
    pub leaked_right: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoremOutcome {
    pub t: f64,
    pub trials: Vec<TheoremTrial>,
    pub median_abs_err: f64,
    pub q25_abs_err: f64,
    pub q75_abs_err: f64,
    pub failed: usize,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

#[allow(clippy::too_many_arguments)]
pub fn run_theorem_trials(
    dist: &EnvDistribution,
    master_seed: u64,
    t: f64,
    gamma: f64,
    k: f64,
    lambda: f64,
    f: &FunctionSpec,
    engine: EngineKind,
    margin: i64,
    n_trials: usize,
) -> Result<TheoremOutcome> {
    let params = GammaParams::new(t, gamma)?;
    let radius = window_radius(&params, k, margin);
    let trials: Vec<TheoremTrial> = (0..n_trials as u64)
        .into_par_iter()
        .map(|trial| {
            let env_seed = derived_env_seed(master_seed, trial);
            match theorem_trial(dist, env_seed, &params, k, lambda, f, engine, radius) {
                Ok(mut row) => {
                    row.trial = trial;
                    row
                }
                Err(e) => TheoremTrial {
                    trial,
                    env_seed,
                    n_f: 0,
                    case_at: false,
                    f_emp: 0.0,
                    f_pred: 0.0,
                    abs_err: 0.0,
                    rel_err: None,
                    leaked_left: 0,
                    leaked_right: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut abs: Vec<f64> = trials
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.abs_err)
        .collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let failed = trials.iter().filter(|r| r.error.is_some()).count();
    Ok(TheoremOutcome {
        t,
        median_abs_err: quantile(&abs, 0.5),
        q25_abs_err: quantile(&abs, 0.25),
        q75_abs_err: quantile(&abs, 0.75),
        trials,
        failed,
    })
}

#[allow(clippy::too_many_arguments)]
fn theorem_trial(
    dist: &EnvDistribution,
    env_seed: u64,
    params: &GammaParams,
    k: f64,
    lambda: f64,
    f: &FunctionSpec,
    engine: EngineKind,
    radius: i64,
) -> Result<TheoremTrial> {
    let mut env = sample_environment(dist, -radius, radius, env_seed)?;
    let d = construct_cover(&mut env, params, k)?;
    let f0 = init_field(lambda, -radius, radius, env_seed, 0)?;
    let f1 = match engine {
        EngineKind::Split => {
            let mut s = Stream::new(env_seed, &[stream::FIELD_EVOLVE, 0]);
            evolve_field(&f0, &env, params.t, &mut s)?
        }
        EngineKind::PerParticle => {
            let mut positions = Vec::with_capacity(f0.total() as usize);
            for site in f0.lo()..=f0.hi() {
                for _ in 0..f0.count(site) {
                    positions.push(site);
                }
            }
            let out = evolve_per_particle(&positions, &env, params.t, env_seed, 0)?;
            out.to_field(-radius, radius)
        }
    };
    let f_emp = empirical_functional(&f1, f, params.t)?;
    let f_pred = predicted_functional(&d, f, lambda, params.t)?;
    let abs_err = (f_emp - f_pred).abs();
    Ok(TheoremTrial {
        trial: 0,
        env_seed,
        n_f: d.n_f,
        case_at: d.case_at,
        f_emp,
        f_pred,
        abs_err,
        rel_err: if f_pred != 0.0 {
            Some(abs_err / f_pred.abs())
        } else {
            None
        },
        leaked_left: f1.leaked_left,
        leaked_right: f1.leaked_right,
        error: None,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationOutcome {
    pub t: f64,
    pub cte: f64,
    pub reports: Vec<(u64, LocalizationReport)>,
    /// All bottom-start masses pooled over environments.
    pub bottom_masses: Vec<f64>,
    /// All sampled-start masses pooled over environments.
    pub start_masses: Vec<f64>,
    pub envs_failed: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn run_localization(
    dist: &EnvDistribution,
    master_seed: u64,
    t: f64,
    gamma: f64,
    k: f64,
    cte: f64,
    n_envs: usize,
    starts_per_valley: usize,
) -> Result<LocalizationOutcome> {
    let params = GammaParams::new(t, gamma)?;
    let pad = (params.log_t * params.log_t).ceil() as i64 + 64;
    let per_env: Vec<Result<(u64, LocalizationReport)>> = (0..n_envs as u64)
        .into_par_iter()
        .map(|env_idx| {
            let env_seed = derived_env_seed(master_seed, env_idx);
            let (mut env, d) = cover_for_env(dist, env_seed, &params, k)?;
            let mut valleys = Vec::with_capacity(d.n_f);
            for i in 0..d.n_f {
                let v = d.valley(i);
                let (wlo, whi) = (v.m_left - pad, v.m_right + pad);
                if wlo < env.lo() || whi > env.hi() {
                    env = extend_environment(&env, wlo.min(env.lo()), whi.max(env.hi()))?;
                }
                let law = evolve_law_in(&env, v.m, t, wlo, whi)?;
                let bottom_mass = localization_mass(&law, v.m, t, cte)?;

                // Non-indeterminate start sites, sampled without replacement.
                let mut eligible: Vec<i64> = (v.m_left..=v.m_right)
                    .filter(|&x| !d.in_indeterminate(x))
                    .collect();
                let mut s = Stream::new(master_seed, &[stream::START_SITES, env_idx, i as u64]);
                let n_take = starts_per_valley.min(eligible.len());
                for j in 0..n_take {
                    let pick = j + (s.next_u64() as usize) % (eligible.len() - j);
                    eligible.swap(j, pick);
                }
                let mut starts = Vec::with_capacity(n_take);
                for &x in eligible.iter().take(n_take) {
                    let law = evolve_law_in(&env, x, t, wlo, whi)?;
                    starts.push(StartMass {
                        start: x,
                        mass: localization_mass(&law, v.m, t, cte)?,
                    });
                }
                valleys.push(ValleyLocalization {
                    valley_index: i,
                    bottom: v.m,
                    bottom_mass,
                    starts,
                });
            }
            Ok((
                env_seed,
                LocalizationReport {
                    cte,
                    t,
                    valleys,
                },
            ))
        })
        .collect();
    let mut out = LocalizationOutcome {
        t,
        cte,
        reports: Vec::new(),
        bottom_masses: Vec::new(),
        start_masses: Vec::new(),
        envs_failed: 0,
    };
    for item in per_env {
        match item {
            Err(_) => out.envs_failed += 1,
            Ok((seed, rep)) => {
                for v in &rep.valleys {
                    out.bottom_masses.push(v.bottom_mass);
                    out.start_masses.extend(v.starts.iter().map(|s| s.mass));
                }
                out.reports.push((seed, rep));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct MigrationEnvRow {
    pub env_seed: u64,
    pub n_f: usize,
    pub cross_fraction: f64,
    pub influx: f64,
    pub indeterminate_mass: f64,
    pub report: MigrationReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct MigrationOutcome {
    pub t: f64,
    pub rows: Vec<MigrationEnvRow>,
    pub mean_cross_fraction: f64,
    pub mean_influx: f64,
    pub envs_skipped: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn run_migration(
    dist: &EnvDistribution,
    master_seed: u64,
    t: f64,
    gamma: f64,
    k: f64,
    lambda: f64,
    margin: i64,
    n_envs: usize,
) -> Result<MigrationOutcome> {
    let params = GammaParams::new(t, gamma)?;
    let radius = window_radius(&params, k, margin);
    let per_env: Vec<Result<Option<MigrationEnvRow>>> = (0..n_envs as u64)
        .into_par_iter()
        .map(|env_idx| {
            let env_seed = derived_env_seed(master_seed, env_idx);
            let mut env = sample_environment(dist, -radius, radius, env_seed)?;
            let d = construct_cover(&mut env, &params, k)?;
            if d.n_f == 0 {
                return Ok(None);
            }
            let fields = tagged_initial_fields(&d, lambda, -radius, radius, env_seed, 0)?;
            let mut evolved = Vec::with_capacity(fields.len());
            for (tag_idx, f0) in fields.iter().enumerate() {
                let mut s = Stream::new(env_seed, &[stream::FIELD_EVOLVE, tag_idx as u64]);
                evolved.push(evolve_field(f0, &env, t, &mut s)?);
            }
            let rep = migration_report(&evolved, &d)?;
            Ok(Some(MigrationEnvRow {
                env_seed,
                n_f: d.n_f,
                cross_fraction: rep.cross_fraction,
                influx: rep.influx_from_outside,
                indeterminate_mass: rep.indeterminate_mass,
                report: rep,
            }))
        })
        .collect();
    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for item in per_env {
        match item? {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    let n = rows.len().max(1) as f64;
    let mean_cross_fraction = rows.iter().map(|r| r.cross_fraction).sum::<f64>() / n;
    let mean_influx = rows.iter().map(|r| r.influx).sum::<f64>() / n;
    Ok(MigrationOutcome {
        t,
        rows,
        mean_cross_fraction,
        mean_influx,
        envs_skipped: skipped,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RenewalOutcome {
    pub depth: f64,
    pub mean_gap: f64,
    pub mean_adjacent_gap: f64,
    pub lag1_autocorrelation: f64,
    pub laplace: Vec<LaplaceRow>,
    pub skipped: usize,
    pub n_gaps: usize,
    #[serde(skip)]
    pub sample: RenewalSample,
}

pub fn run_renewal(
    dist: &EnvDistribution,
    depth: f64,
    n_envs: usize,
    target_extrema: usize,
    seed: u64,
    lambdas: &[f64],
) -> Result<RenewalOutcome> {
    let sample = renewal_gap_sample(dist, depth, n_envs, target_extrema, seed)?;
    if sample.gaps.is_empty() {
        return Err(SinaiError::contract(
            "renewal harness produced no gaps".to_string(),
        ));
    }
    let mean_gap = sample.gaps.iter().sum::<f64>() / sample.gaps.len() as f64;
    let mean_adjacent_gap =
        sample.adjacent_gaps.iter().sum::<f64>() / sample.adjacent_gaps.len() as f64;
    let laplace = crate::observables::empirical_laplace(&sample, lambdas, seed ^ 0xB00B5)?;
    let lag1 = crate::observables::gap_lag1_autocorrelation(&sample);
    Ok(RenewalOutcome {
        depth,
        mean_gap,
        mean_adjacent_gap,
        lag1_autocorrelation: lag1,
        laplace,
        skipped: sample.skipped,
        n_gaps: sample.gaps.len(),
        sample,
    })
}

/// Gather n(f) samples from the cover over independent seeds.
pub fn collect_nf_samples(
    dist: &EnvDistribution,
    master_seed: u64,
    t: f64,
    k: f64,
    n_seeds: usize,
) -> Result<RenewalSample> {
    let params = GammaParams::new(t, 0.0)?;
    let samples: Vec<Result<u64>> = (0..n_seeds as u64)
        .into_par_iter()
        .map(|idx| {
            let env_seed = derived_env_seed(master_seed, idx);
            let (_, d) = cover_for_env(dist, env_seed, &params, k)?;
            Ok(d.n_f as u64)
        })
        .collect();
    let mut n_f_samples = Vec::with_capacity(n_seeds);
    for s in samples {
        n_f_samples.push(s?);
    }
    Ok(RenewalSample {
        n_f_samples,
        sigma2: crate::env::sigma2_analytic(dist),
        supp_rescaled: 2.0 * k,
        ..Default::default()
    })
}

/// Engine/oracle comparison data for a fixed environment.
#[derive(Clone, Debug, Serialize)]
pub struct EngineComparison {
    pub t: f64,
    pub lambda: f64,
    pub trials: usize,
    pub sites: usize,
    /// Sites where the engine mean misses the exact mean by > 4 SE.
    pub split_bad_sites: usize,
    pub per_particle_bad_sites: usize,
    /// Fano factors where the exact mean is at least one.
    pub fano_min: f64,
    pub fano_max: f64,
    pub fano_sites: usize,
}

pub fn run_engine_comparison(
    dist: &EnvDistribution,
    env_seed: u64,
    half: i64,
    t: f64,
    lambda: f64,
    trials: usize,
) -> Result<EngineComparison> {
    let env = sample_environment(dist, -half, half, env_seed)?;
    let mf = crate::particles::mean_field(&env, lambda, t)?;
    let n = (2 * half + 1) as usize;

    struct TrialSums {
        split: Vec<f64>,
        split_sq: Vec<f64>,
        pp: Vec<f64>,
        pp_sq: Vec<f64>,
    }
    let per_trial: Vec<TrialSums> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let f0 = init_field(lambda, -half, half, env_seed, trial).unwrap();
            let mut s = Stream::new(env_seed, &[stream::FIELD_EVOLVE, trial]);
            let f1 = evolve_field(&f0, &env, t, &mut s).unwrap();
            let mut positions = Vec::with_capacity(f0.total() as usize);
            for site in -half..=half {
                for _ in 0..f0.count(site) {
                    positions.push(site);
                }
            }
            let f2 = evolve_per_particle(&positions, &env, t, env_seed, trial)
                .unwrap()
                .to_field(-half, half);
            let mut ts = TrialSums {
                split: vec![0.0; n],
                split_sq: vec![0.0; n],
                pp: vec![0.0; n],
                pp_sq: vec![0.0; n],
            };
            for j in 0..n {
                let a = f1.counts()[j] as f64;
                let b = f2.counts()[j] as f64;
                ts.split[j] = a;
                ts.split_sq[j] = a * a;
                ts.pp[j] = b;
                ts.pp_sq[j] = b * b;
            }
            ts
        })
        .collect();

    let mut sum_split = vec![0.0; n];
    let mut sumsq_split = vec![0.0; n];
    let mut sum_pp = vec![0.0; n];
    let mut sumsq_pp = vec![0.0; n];
    for ts in &per_trial {
        for j in 0..n {
            sum_split[j] += ts.split[j];
            sumsq_split[j] += ts.split_sq[j];
            sum_pp[j] += ts.pp[j];
            sumsq_pp[j] += ts.pp_sq[j];
        }
    }
    let nt = trials as f64;
    let mut split_bad = 0usize;
    let mut pp_bad = 0usize;
    let mut fano_min = f64::INFINITY;
    let mut fano_max = f64::NEG_INFINITY;
    let mut fano_sites = 0usize;
    for j in 0..n {
        let exact = mf.means[j];
        for (sum, sumsq, bad) in [
            (&sum_split, &sumsq_split, &mut split_bad),
            (&sum_pp, &sumsq_pp, &mut pp_bad),
        ] {
            let mean = sum[j] / nt;
            let var = (sumsq[j] / nt - mean * mean).max(0.0);
            // Guard against zero empirical variance at near-empty sites
            // with the Poisson model deviation.
            let se = (var.max(exact.max(1e-12)) / nt).sqrt();
            if (mean - exact).abs() > 4.0 * se {
                *bad += 1;
            }
        }
        if exact >= 1.0 {
            let mean = sum_split[j] / nt;
            let var = (sumsq_split[j] / nt - mean * mean).max(0.0);
            let fano = var / mean;
            fano_min = fano_min.min(fano);
            fano_max = fano_max.max(fano);
            fano_sites += 1;
        }
    }
    Ok(EngineComparison {
        t,
        lambda,
        trials,
        sites: n,
        split_bad_sites: split_bad,
        per_particle_bad_sites: pp_bad,
        fano_min,
        fano_max,
        fano_sites,
    })
}

/// Deterministic snapshot used by the `env` command.
pub fn env_snapshot(
    dist: &EnvDistribution,
    seed: u64,
    half_width: i64,
) -> Result<(Environment, crate::env::Potential)> {
    let env = sample_environment(dist, -half_width, half_width, seed)?;
    let pot = compute_potential(&env);
    Ok((env, pot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::BumpKind;

    fn quarter() -> EnvDistribution {
        EnvDistribution::two_point(0.25).unwrap()
    }

    #[test]
    fn theorem_trials_are_reproducible() {
        let f = FunctionSpec::new(BumpKind::TriangleBump, 2.0, 1.0).unwrap();
        let a = run_theorem_trials(
            &quarter(),
            42,
            2e3,
            0.0,
            2.0,
            1.0,
            &f,
            EngineKind::Split,
            16,
            3,
        )
        .unwrap();
        let b = run_theorem_trials(
            &quarter(),
            42,
            2e3,
            0.0,
            2.0,
            1.0,
            &f,
            EngineKind::Split,
            16,
            3,
        )
        .unwrap();
        assert_eq!(
            serde_json::to_string(&a.trials).unwrap(),
            serde_json::to_string(&b.trials).unwrap()
        );
        assert_eq!(a.failed, 0);
    }

    #[test]
    fn lambda_scaling_doubles_prediction() {
        let f = FunctionSpec::new(BumpKind::TriangleBump, 2.0, 1.0).unwrap();
        let a = run_theorem_trials(
            &quarter(),
            7,
            2e3,
            0.0,
            2.0,
            1.0,
            &f,
            EngineKind::Split,
            16,
            4,
        )
        .unwrap();
        let b = run_theorem_trials(
            &quarter(),
            7,
            2e3,
            0.0,
            2.0,
            2.0,
            &f,
            EngineKind::Split,
            16,
            4,
        )
        .unwrap();
        for (ra, rb) in a.trials.iter().zip(&b.trials) {
            assert!((rb.f_pred - 2.0 * ra.f_pred).abs() < 1e-12);
        }
    }

    #[test]
    fn localization_small_scale_runs() {
        let out = run_localization(&quarter(), 5, 5e3, 0.0, 2.0, 1.0, 3, 2).unwrap();
        assert_eq!(out.envs_failed, 0);
        for &m in out.bottom_masses.iter().chain(&out.start_masses) {
            assert!((0.0..=1.0 + 1e-9).contains(&m));
        }
    }

    #[test]
    fn migration_small_scale_runs() {
        let out = run_migration(&quarter(), 11, 2e3, 0.0, 2.0, 1.0, 16, 4).unwrap();
        for row in &out.rows {
            assert!(row.cross_fraction >= 0.0 && row.cross_fraction <= 1.0);
            assert!(row.influx >= 0.0);
        }
    }

    #[test]
    fn engine_comparison_small_scale() {
        let cmp = run_engine_comparison(&quarter(), 99, 30, 50.0, 2.0, 1500).unwrap();
        // 5+ sigma flukes at 61 sites should essentially never exceed 2.
        assert!(cmp.split_bad_sites <= 2, "{cmp:?}");
        assert!(cmp.per_particle_bad_sites <= 2, "{cmp:?}");
        assert!(cmp.fano_min > 0.8 && cmp.fano_max < 1.2, "{cmp:?}");
    }

    #[test]
    fn nf_collection_runs() {
        let sample = collect_nf_samples(&quarter(), 3, 1e4, 2.0, 10).unwrap();
        assert_eq!(sample.n_f_samples.len(), 10);
        assert_eq!(sample.supp_rescaled, 4.0);
    }
}
