// Development diagnostic: per-start localization masses with geometry.
use sinai::env::{sample_environment, EnvDistribution};
use sinai::experiments::run_localization;

fn main() {
    let n_envs: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let dist = EnvDistribution::two_point(0.25).unwrap();
    let out = run_localization(&dist, 0xACC4, 1e6, 0.0, 5.0, 1.0, n_envs, 10).unwrap();
    let mut fail_hist = [0usize; 10]; // by distance-to-nearest-summit decile
    let mut total_fail = 0usize;
    let mut total = 0usize;
    let mut mass_buckets = [0usize; 10];
    for (seed, rep) in &out.reports {
        // Re-derive the cover geometry from the report valleys.
        let _ = sample_environment(&dist, -8, 8, *seed);
        for v in &rep.valleys {
            let bottom_ok = v.bottom_mass >= 0.9;
            for s in &v.starts {
                total += 1;
                let b = ((s.mass * 10.0) as usize).min(9);
                mass_buckets[b] += 1;
                if s.mass < 0.9 {
                    total_fail += 1;
                    if !bottom_ok {
                        fail_hist[9] += 1; // valley itself leaks
                    } else {
                        let d = (s.start - v.bottom).abs();
                        fail_hist[(d as usize / 40).min(8)] += 1;
                    }
                }
            }
        }
    }
    println!("envs: {}, starts: {total}, failing: {total_fail}", out.reports.len());
    println!("mass deciles [0-0.1 .. 0.9-1.0]: {mass_buckets:?}");
    println!("fail by |start-bottom|/40 (last bin = leaky valley): {fail_hist:?}");
    let bm: Vec<String> = out
        .bottom_masses
        .iter()
        .map(|m| format!("{m:.3}"))
        .collect();
    println!("bottom masses: {}", bm.join(" "));
}
