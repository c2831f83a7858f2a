// Development diagnostic: cross-validate evolve_law against per-particle
// Monte Carlo at a failing localization start.
use sinai::env::{extend_environment, sample_environment, EnvDistribution};
use sinai::observables::localization_mass;
use sinai::particles::{evolve_law_in, evolve_per_particle};
use sinai::rng;
use sinai::valleys::{construct_cover, GammaParams, ScanLimits};

fn main() {
    let dist = EnvDistribution::two_point(0.25).unwrap();
    let params = GammaParams::new(1e6, 0.0).unwrap();
    let t = 1e6;
    let pad = (params.log_t * params.log_t).ceil() as i64 + 64;
    // First environment of the criterion-4 batch.
    let env_seed = rng::value_at(0xACC4, &[rng::stream::BATCH_ENV, 0]);
    let limits = ScanLimits::for_params(&params);
    let bound = params.support_bound(5.0).ceil() as i64;
    let mut env = sample_environment(&dist, -(bound + limits.chunk), bound + limits.chunk, env_seed).unwrap();
    let d = construct_cover(&mut env, &params, 5.0).unwrap();
    println!("n_f = {}, M = {:?}", d.n_f, d.m_upper);
    'outer: for i in 0..d.n_f {
        let v = d.valley(i);
        let (wlo, whi) = (v.m_left - pad, v.m_right + pad);
        if wlo < env.lo() || whi > env.hi() {
            env = extend_environment(&env, wlo.min(env.lo()), whi.max(env.hi())).unwrap();
        }
        // Walk the interior looking for a start whose law mass fails.
        let step = ((v.m_right - v.m_left) / 17).max(1);
        for x in (v.m_left..=v.m_right).step_by(step as usize) {
            if d.in_indeterminate(x) {
                continue;
            }
            let law = evolve_law_in(&env, x, t, wlo, whi).unwrap();
            let mass = localization_mass(&law, v.m, t, 1.0).unwrap();
            if mass < 0.85 {
                println!(
                    "valley {i} [{}, {}] bottom {} depth-span; start {x}: law mass {mass:.4}, leak ({:.2e}, {:.2e})",
                    v.m_left, v.m_right, v.m, law.leaked_left, law.leaked_right
                );
                // Monte Carlo from the same start on the same window.
                let radius = 1.0 * params.log_t.powf(1.5);
                let trials = 2000u64;
                let mut hits = 0u64;
                for trial in 0..trials {
                    let sub =
                        sample_environment(&dist, env.lo(), env.hi(), env_seed).unwrap();
                    let _ = sub;
                    let out = evolve_per_particle(&[x], &env, t, 0xD1A6, trial).unwrap();
                    if let Some(&p) = out.positions.first() {
                        if ((p - v.m).abs() as f64) <= radius {
                            hits += 1;
                        }
                    }
                }
                let mc = hits as f64 / trials as f64;
                let se = (mc * (1.0 - mc) / trials as f64).sqrt();
                println!("MC mass {mc:.4} +/- {se:.4} (law {mass:.4})");
                break 'outer;
            }
        }
    }
}
