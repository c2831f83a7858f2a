//! Poisson particle fields evolving under the quenched walk law.
//!
//! Two sampling engines share one law: the binomial splitting engine moves
//! whole occupation counts per site (cost scales with occupied width), the
//! per-particle engine walks each particle independently (kept for
//! cross-validation). `evolve_law` and `mean_field` propagate the exact
//! one-particle law / Poisson intensity by dynamic programming and serve as
//! the noise-free oracle both engines are tested against.
//!
//! Boundaries are absorbing: mass crossing the window edge accumulates in
//! leak counters and is never renormalized away, so truncation error is a
//! measured quantity.

use crate::env::Environment;
use crate::error::{Result, SinaiError};
use crate::rng::{stream, Stream};
use rand::distributions::Distribution;
use serde::Serialize;

/// Origin tag for migration bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginTag {
    Valley(usize),
    Indeterminate,
    Outside,
}

/// Occupation counts on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleField {
    lo: i64,
    hi: i64,
    counts: Vec<u64>,
    pub origin: Option<OriginTag>,
    pub elapsed: u64,
    pub leaked_left: u64,
    pub leaked_right: u64,
}

impl ParticleField {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    #[inline]
    pub fn count(&self, site: i64) -> u64 {
        debug_assert!(site >= self.lo && site <= self.hi);
        self.counts[(site - self.lo) as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Total including leaked mass; invariant under evolution.
    pub fn grand_total(&self) -> u64 {
        self.total() + self.leaked_left + self.leaked_right
    }

    pub fn from_counts(lo: i64, counts: Vec<u64>) -> Self {
        let hi = lo + counts.len() as i64 - 1;
        ParticleField {
            lo,
            hi,
            counts,
            origin: None,
            elapsed: 0,
            leaked_left: 0,
            leaked_right: 0,
        }
    }
}

/// Initial condition: i.i.d. Poisson(lambda) per site, deterministic per
/// `(seed, site)`; `trial_tag` separates independent realizations.
pub fn init_field(lambda: f64, lo: i64, hi: i64, seed: u64, trial_tag: u64) -> Result<ParticleField> {
    init_field_where(lambda, lo, hi, seed, trial_tag, |_| true, None)
}

/// Poisson field restricted to sites where `keep` holds; the kept sites
/// carry exactly the same counts the full field would, so disjoint regions
/// sum to the full field realization.
pub fn init_field_where(
    lambda: f64,
    lo: i64,
    hi: i64,
    seed: u64,
    trial_tag: u64,
    keep: impl Fn(i64) -> bool,
    origin: Option<OriginTag>,
) -> Result<ParticleField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SinaiError::config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if lo > hi {
        return Err(SinaiError::config(format!("window [{lo}, {hi}] is empty")));
    }
    let poisson = rand_distr::Poisson::new(lambda)
        .map_err(|e| SinaiError::config(format!("poisson: {e}")))?;
    let counts = (lo..=hi)
        .map(|site| {
            if keep(site) {
                let mut s = Stream::new(seed, &[stream::FIELD_INIT, trial_tag, site as u64]);
                poisson.sample(&mut s) as u64
            } else {
                0
            }
        })
        .collect();
    Ok(ParticleField {
        lo,
        hi,
        counts,
        origin,
        elapsed: 0,
        leaked_left: 0,
        leaked_right: 0,
    })
}

/// Exact binomial sample. Small counts sum Bernoulli draws directly; larger
/// counts use the inversion/rejection sampler (BINV/BTPE), which is exact
/// for all (n, p). Normal or Poisson approximations are never used.
#[inline]
pub fn sample_binomial(s: &mut Stream, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n <= 16 {
        let mut k = 0;
        for _ in 0..n {
            if s.bernoulli(p) {
                k += 1;
            }
        }
        k
    } else {
        rand_distr::Binomial::new(n, p)
            .expect("validated p in (0,1)")
            .sample(s)
    }
}

fn check_field_window(field: &ParticleField, env: &Environment) -> Result<()> {
    env.check_window(field.lo, field.hi)
}

/// One synchronous step of the splitting engine: at every occupied site the
/// right-movers are a Binomial(count, alpha) draw; the rest move left. The
/// resulting law equals that of independent one-step walks.
pub fn step_field(field: &ParticleField, env: &Environment, rng: &mut Stream) -> Result<ParticleField> {
    check_field_window(field, env)?;
    let mut out = field.clone();
    step_in_place(&mut out, env, rng, &mut vec![0u64; field.counts.len()]);
    Ok(out)
}

fn step_in_place(field: &mut ParticleField, env: &Environment, rng: &mut Stream, scratch: &mut Vec<u64>) {
    let n = field.counts.len();
    scratch.clear();
    scratch.resize(n, 0);
    for j in 0..n {
        let c = field.counts[j];
        if c == 0 {
            continue;
        }
        let site = field.lo + j as i64;
        let right = sample_binomial(rng, c, env.alpha(site));
        let left = c - right;
        if j + 1 < n {
            scratch[j + 1] += right;
        } else {
            field.leaked_right += right;
        }
        if j > 0 {
            scratch[j - 1] += left;
        } else {
            field.leaked_left += left;
        }
    }
    std::mem::swap(&mut field.counts, scratch);
    field.elapsed += 1;
}

/// Evolve the field for `floor(t)` steps (the continuous-time process is the
/// discrete chain sampled at integer times).
pub fn evolve_field(
    field: &ParticleField,
    env: &Environment,
    t: f64,
    rng: &mut Stream,
) -> Result<ParticleField> {
    if t < 0.0 {
        return Err(SinaiError::config(format!("t must be >= 0, got {t}")));
    }
    check_field_window(field, env)?;
    let steps = t.floor() as u64;
    let mut out = field.clone();
    let mut scratch = vec![0u64; out.counts.len()];
    for _ in 0..steps {
        step_in_place(&mut out, env, rng, &mut scratch);
    }
    Ok(out)
}

/// Survivors and leak counts of the per-particle engine.
#[derive(Clone, Debug, PartialEq)]
pub struct PerParticleOutcome {
    pub positions: Vec<i64>,
    pub leaked_left: u64,
    pub leaked_right: u64,
}

impl PerParticleOutcome {
    pub fn to_field(&self, lo: i64, hi: i64) -> ParticleField {
        let mut counts = vec![0u64; (hi - lo + 1) as usize];
        for &p in &self.positions {
            counts[(p - lo) as usize] += 1;
        }
        let mut f = ParticleField::from_counts(lo, counts);
        f.leaked_left = self.leaked_left;
        f.leaked_right = self.leaked_right;
        f
    }
}

/// Walk each particle independently for `floor(t)` steps; same law as
/// `evolve_field`. Particle `j` owns the stream `(seed, PARTICLE, tag, j)`.
pub fn evolve_per_particle(
    positions: &[i64],
    env: &Environment,
    t: f64,
    seed: u64,
    trial_tag: u64,
) -> Result<PerParticleOutcome> {
    if t < 0.0 {
        return Err(SinaiError::config(format!("t must be >= 0, got {t}")));
    }
    for &p in positions {
        if !env.contains(p) {
            return Err(SinaiError::OutOfWindow {
                index: p,
                lo: env.lo(),
                hi: env.hi(),
            });
        }
    }
    let steps = t.floor() as u64;
    let mut out = PerParticleOutcome {
        positions: Vec::with_capacity(positions.len()),
        leaked_left: 0,
        leaked_right: 0,
    };
    for (j, &start) in positions.iter().enumerate() {
        let mut s = Stream::new(seed, &[stream::PARTICLE, trial_tag, j as u64]);
        let mut x = start;
        let mut fate = None;
        for _ in 0..steps {
            x += if s.bernoulli(env.alpha(x)) { 1 } else { -1 };
            if x < env.lo() {
                fate = Some(false);
                break;
            }
            if x > env.hi() {
                fate = Some(true);
                break;
            }
        }
        match fate {
            None => out.positions.push(x),
            Some(false) => out.leaked_left += 1,
            Some(true) => out.leaked_right += 1,
        }
    }
    Ok(out)
}

/// Exact one-particle law after `steps` steps, with absorbing boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct LawVector {
    pub lo: i64,
    pub hi: i64,
    pub probs: Vec<f64>,
    pub start: i64,
    pub steps: u64,
    pub leaked_left: f64,
    pub leaked_right: f64,
}

impl LawVector {
    #[inline]
    pub fn prob(&self, site: i64) -> f64 {
        if site < self.lo || site > self.hi {
            0.0
        } else {
            self.probs[(site - self.lo) as usize]
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Exact per-site means of the particle field started from intensity
/// `lambda` everywhere (Poisson displacement: the evolved field is Poisson
/// with these means).
#[derive(Clone, Debug, PartialEq)]
pub struct MeanField {
    pub lo: i64,
    pub hi: i64,
    pub means: Vec<f64>,
    pub steps: u64,
    pub leaked_left: f64,
    pub leaked_right: f64,
}

impl MeanField {
    #[inline]
    pub fn mean(&self, site: i64) -> f64 {
        self.means[(site - self.lo) as usize]
    }
}

/// Site-indexed transition coefficients over a window.
struct LinearKernel {
    al: Vec<f64>,
    be: Vec<f64>,
}

impl LinearKernel {
    fn new(env: &Environment, lo: i64, hi: i64) -> Self {
        let al: Vec<f64> = (lo..=hi).map(|i| env.alpha(i)).collect();
        let be: Vec<f64> = al.iter().map(|a| 1.0 - a).collect();
        LinearKernel { al, be }
    }

    /// One step of `p_{n+1}[i] = al[i-1] p_n[i-1] + be[i+1] p_n[i+1]` with
    /// absorbing edges; `active` bounds the support to keep early steps
    /// cheap. Mass is never renormalized.
    fn step(
        &self,
        p: &[f64],
        out: &mut [f64],
        active: &mut (usize, usize),
        leaks: &mut (f64, f64),
    ) {
        let n = p.len();
        let (a, b) = *active;
        let ja = a.saturating_sub(1);
        let jb = (b + 1).min(n - 1);
        if a == 0 {
            leaks.0 += self.be[0] * p[0];
        }
        if b == n - 1 {
            leaks.1 += self.al[n - 1] * p[n - 1];
        }
        if ja == 0 {
            out[0] = if n > 1 { self.be[1] * p[1] } else { 0.0 };
        }
        if jb == n - 1 && n > 1 {
            out[n - 1] = self.al[n - 2] * p[n - 2];
        }
        let start = ja.max(1);
        let end = jb.min(n.saturating_sub(2));
        let (al, be) = (&self.al, &self.be);
        for j in start..=end {
            out[j] = al[j - 1] * p[j - 1] + be[j + 1] * p[j + 1];
        }
        *active = (ja, jb);
    }
}

fn propagate(
    env: &Environment,
    lo: i64,
    hi: i64,
    mut p: Vec<f64>,
    active0: (usize, usize),
    steps: u64,
) -> (Vec<f64>, f64, f64) {
    let kernel = LinearKernel::new(env, lo, hi);
    let mut q = vec![0.0; p.len()];
    let mut active = active0;
    let mut leaks = (0.0, 0.0);
    for _ in 0..steps {
        kernel.step(&p, &mut q, &mut active, &mut leaks);
        std::mem::swap(&mut p, &mut q);
        // Clear only what the next write range will not overwrite.
        let (a, b) = active;
        let next_a = a.saturating_sub(1);
        let next_b = (b + 1).min(p.len() - 1);
        for v in &mut q[next_a..=next_b] {
            *v = 0.0;
        }
    }
    (p, leaks.0, leaks.1)
}

/// Two steps at a time on one parity class. A point mass only ever occupies
/// one class, so a law vector stored on the class lattice `base + 2j` halves
/// the width and skips the zero entries of the full window.
struct DoubleStepKernel {
    /// Coefficient of the class neighbor two sites left.
    a: Vec<f64>,
    /// Stay coefficient (both two-step return paths, edge-guarded).
    b: Vec<f64>,
    /// Coefficient of the class neighbor two sites right.
    c: Vec<f64>,
    leak_left_coeff: f64,
    leak_right_coeff: f64,
    m: usize,
}

impl DoubleStepKernel {
    fn new(env: &Environment, lo: i64, hi: i64, base: i64) -> Self {
        debug_assert!(base == lo || base == lo + 1);
        let m = ((hi - base) / 2 + 1) as usize;
        let al = |x: i64| env.alpha(x);
        let be = |x: i64| 1.0 - env.alpha(x);
        let mut a = vec![0.0; m];
        let mut b = vec![0.0; m];
        let mut c = vec![0.0; m];
        for (j, slot) in b.iter_mut().enumerate() {
            let x = base + 2 * j as i64;
            let mut stay = 0.0;
            if x - 1 >= lo {
                stay += al(x - 1) * be(x);
            }
            if x + 1 <= hi {
                stay += be(x + 1) * al(x);
            }
            *slot = stay;
        }
        for (j, slot) in a.iter_mut().enumerate().skip(1) {
            let x = base + 2 * j as i64;
            *slot = al(x - 2) * al(x - 1);
        }
        for (j, slot) in c.iter_mut().enumerate().take(m.saturating_sub(1)) {
            let x = base + 2 * j as i64;
            *slot = be(x + 2) * be(x + 1);
        }
        let leak_left_coeff = if base == lo {
            be(lo)
        } else {
            be(lo) * be(lo + 1)
        };
        let x_last = base + 2 * (m as i64 - 1);
        let leak_right_coeff = if x_last == hi {
            al(hi)
        } else {
            al(hi) * al(hi - 1)
        };
        DoubleStepKernel {
            a,
            b,
            c,
            leak_left_coeff,
            leak_right_coeff,
            m,
        }
    }

    fn step(
        &self,
        p: &[f64],
        out: &mut [f64],
        active: &mut (usize, usize),
        leaks: &mut (f64, f64),
    ) {
        let m = self.m;
        let (lo_a, hi_a) = *active;
        let ja = lo_a.saturating_sub(1);
        let jb = (hi_a + 1).min(m - 1);
        if lo_a == 0 {
            leaks.0 += self.leak_left_coeff * p[0];
        }
        if hi_a == m - 1 {
            leaks.1 += self.leak_right_coeff * p[m - 1];
        }
        if ja == 0 {
            out[0] = self.b[0] * p[0] + if m > 1 { self.c[0] * p[1] } else { 0.0 };
        }
        if jb == m - 1 && m > 1 {
            out[m - 1] = self.a[m - 1] * p[m - 2] + self.b[m - 1] * p[m - 1];
        }
        let start = ja.max(1);
        let end = jb.min(m.saturating_sub(2));
        let (a, b, c) = (&self.a, &self.b, &self.c);
        for j in start..=end {
            out[j] = a[j] * p[j - 1] + b[j] * p[j] + c[j] * p[j + 1];
        }
        *active = (ja, jb);
    }
}

/// Point-mass propagation using the parity-compressed double-step kernel,
/// with a single full-window step first when the step count is odd.
fn propagate_point(
    env: &Environment,
    lo: i64,
    hi: i64,
    start: i64,
    steps: u64,
) -> (Vec<f64>, f64, f64) {
    let n = (hi - lo + 1) as usize;
    let mut full = vec![0.0; n];
    full[(start - lo) as usize] = 1.0;
    if n < 3 {
        let j0 = (start - lo) as usize;
        return propagate(env, lo, hi, full, (j0, j0), steps);
    }
    let mut leaks = (0.0, 0.0);
    let mut origin = start;
    if steps % 2 == 1 {
        let kernel = LinearKernel::new(env, lo, hi);
        let j0 = (start - lo) as usize;
        let mut q = vec![0.0; n];
        let mut act = (j0, j0);
        kernel.step(&full, &mut q, &mut act, &mut leaks);
        full = q;
        origin = if start > lo { start - 1 } else { start + 1 };
    }
    let doubles = steps / 2;
    if doubles == 0 {
        return (full, leaks.0, leaks.1);
    }
    // Compact onto the parity class of the current support.
    let base = if (origin - lo).rem_euclid(2) == 0 {
        lo
    } else {
        lo + 1
    };
    let kernel = DoubleStepKernel::new(env, lo, hi, base);
    let m = kernel.m;
    let mut p = vec![0.0; m];
    for j in 0..m {
        p[j] = full[(base - lo) as usize + 2 * j];
    }
    let j0 = ((origin - base) / 2) as usize;
    let mut active = if steps % 2 == 1 {
        (j0.saturating_sub(1), (j0 + 1).min(m - 1))
    } else {
        (j0, j0)
    };
    let mut q = vec![0.0; m];
    for _ in 0..doubles {
        kernel.step(&p, &mut q, &mut active, &mut leaks);
        std::mem::swap(&mut p, &mut q);
        let (a, b) = active;
        let next_a = a.saturating_sub(1);
        let next_b = (b + 1).min(m - 1);
        for v in &mut q[next_a..=next_b] {
            *v = 0.0;
        }
    }
    let mut out = vec![0.0; n];
    for j in 0..m {
        out[(base - lo) as usize + 2 * j] = p[j];
    }
    (out, leaks.0, leaks.1)
}

/// Exact law propagation from a point mass at `start` over the window of
/// the environment.
pub fn evolve_law(env: &Environment, start: i64, t: f64) -> Result<LawVector> {
    evolve_law_in(env, start, t, env.lo(), env.hi())
}

/// Law propagation restricted to the absorbing window `[lo, hi]`; the
/// window need not contain the origin but must lie inside the environment.
pub fn evolve_law_in(env: &Environment, start: i64, t: f64, lo: i64, hi: i64) -> Result<LawVector> {
    if t < 0.0 {
        return Err(SinaiError::config(format!("t must be >= 0, got {t}")));
    }
    env.check_window(lo, hi)?;
    if start < lo || start > hi {
        return Err(SinaiError::OutOfWindow {
            index: start,
            lo,
            hi,
        });
    }
    let steps = t.floor() as u64;
    let (probs, leaked_left, leaked_right) = propagate_point(env, lo, hi, start, steps);
    Ok(LawVector {
        lo,
        hi,
        probs,
        start,
        steps,
        leaked_left,
        leaked_right,
    })
}

/// Evolve the constant intensity `lambda` by the same linear recursion.
pub fn mean_field(env: &Environment, lambda: f64, t: f64) -> Result<MeanField> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SinaiError::config(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if t < 0.0 {
        return Err(SinaiError::config(format!("t must be >= 0, got {t}")));
    }
    let (lo, hi) = (env.lo(), env.hi());
    let n = (hi - lo + 1) as usize;
    let steps = t.floor() as u64;
    let p = vec![lambda; n];
    let (means, leaked_left, leaked_right) = propagate(env, lo, hi, p, (0, n - 1), steps);
    Ok(MeanField {
        lo,
        hi,
        means,
        steps,
        leaked_left,
        leaked_right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{sample_environment, testutil::env_from_alphas, EnvDistribution};

    fn quarter_env(half: i64, seed: u64) -> Environment {
        let dist = EnvDistribution::two_point(0.25).unwrap();
        sample_environment(&dist, -half, half, seed).unwrap()
    }

    #[test]
    fn init_rejects_bad_lambda() {
        assert!(init_field(0.0, -5, 5, 1, 0).is_err());
        assert!(init_field(-1.0, -5, 5, 1, 0).is_err());
    }

    #[test]
    fn init_field_moments() {
        let n: i64 = 500_000;
        let f = init_field(1.0, 0, n - 1, 99, 0).unwrap();
        let total = f.total() as f64;
        let mean = total / n as f64;
        assert!((0.996..=1.004).contains(&mean), "mean {mean}");
        let mut sumsq = 0.0;
        for &c in f.counts() {
            let d = c as f64 - mean;
            sumsq += d * d;
        }
        let var = sumsq / n as f64;
        let fano = var / mean;
        assert!((0.99..=1.01).contains(&fano), "fano {fano}");
    }

    #[test]
    fn init_field_determinism_and_region_split() {
        let f1 = init_field(2.0, -50, 50, 7, 3).unwrap();
        let f2 = init_field(2.0, -50, 50, 7, 3).unwrap();
        assert_eq!(f1, f2);
        let left = init_field_where(2.0, -50, 50, 7, 3, |x| x < 0, None).unwrap();
        let rest = init_field_where(2.0, -50, 50, 7, 3, |x| x >= 0, None).unwrap();
        for site in -50..=50 {
            assert_eq!(left.count(site) + rest.count(site), f1.count(site));
        }
    }

    #[test]
    fn empty_field_stays_empty() {
        let env = quarter_env(10, 1);
        let f = ParticleField::from_counts(-10, vec![0; 21]);
        let mut s = Stream::new(1, &[9]);
        let g = step_field(&f, &env, &mut s).unwrap();
        assert_eq!(g.counts(), f.counts());
        assert_eq!(g.elapsed, 1);
    }

    #[test]
    fn deterministic_drift_with_alpha_one() {
        // alpha = 1 is outside the admissible laws; test-only bypass.
        let env = env_from_alphas(-2, vec![1.0; 5]);
        let mut counts = vec![0u64; 5];
        counts[2] = 7;
        let f = ParticleField::from_counts(-2, counts);
        let mut s = Stream::new(3, &[1]);
        let g = step_field(&f, &env, &mut s).unwrap();
        assert_eq!(g.count(1), 7);
        assert_eq!(g.total(), 7);
    }

    #[test]
    fn binomial_concentration_large_count() {
        let env = env_from_alphas(0, vec![0.25]);
        let f = ParticleField::from_counts(0, vec![100_000]);
        let mut s = Stream::new(5, &[2]);
        let g = step_field(&f, &env, &mut s).unwrap();
        // All at site 0: right-movers leak right, left-movers leak left.
        let right = g.leaked_right as f64;
        let sd = (100_000.0f64 * 0.25 * 0.75).sqrt();
        assert!((right - 25_000.0).abs() < 4.0 * sd, "right {right}");
        assert_eq!(g.grand_total(), 100_000);
    }

    #[test]
    fn conservation_under_evolution() {
        let env = quarter_env(40, 17);
        let f = init_field(1.5, -40, 40, 17, 0).unwrap();
        let before = f.grand_total();
        let mut s = Stream::new(17, &[4]);
        let g = evolve_field(&f, &env, 500.0, &mut s).unwrap();
        assert_eq!(g.grand_total(), before);
        assert_eq!(g.elapsed, 500);
    }

    #[test]
    fn evolve_zero_steps_is_identity() {
        let env = quarter_env(10, 3);
        let f = init_field(1.0, -10, 10, 3, 0).unwrap();
        let mut s = Stream::new(3, &[8]);
        let g = evolve_field(&f, &env, 0.9, &mut s).unwrap();
        assert_eq!(g, f);
    }

    #[test]
    fn parity_of_single_origin() {
        let env = quarter_env(100, 23);
        let mut counts = vec![0u64; 201];
        counts[100] = 1000;
        let f = ParticleField::from_counts(-100, counts);
        let mut s = Stream::new(23, &[6]);
        for t in [7.0, 8.0] {
            let g = evolve_field(&f, &env, t, &mut s).unwrap();
            let parity = (t as i64).rem_euclid(2);
            for site in -100..=100i64 {
                if g.count(site) > 0 {
                    assert_eq!(site.rem_euclid(2), parity, "site {site} at t {t}");
                }
            }
        }
    }

    #[test]
    fn per_particle_single_step_law() {
        let env = quarter_env(5, 41);
        let alpha0 = env.alpha(0);
        let trials = 40_000;
        let mut right = 0u64;
        for trial in 0..trials {
            let out = evolve_per_particle(&[0], &env, 1.0, 41, trial).unwrap();
            if out.positions[0] == 1 {
                right += 1;
            }
        }
        let frac = right as f64 / trials as f64;
        let sd = (alpha0 * (1.0 - alpha0) / trials as f64).sqrt();
        assert!((frac - alpha0).abs() < 4.0 * sd, "frac {frac} vs {alpha0}");
    }

    #[test]
    fn per_particle_empty_input() {
        let env = quarter_env(5, 1);
        let out = evolve_per_particle(&[], &env, 10.0, 1, 0).unwrap();
        assert!(out.positions.is_empty());
    }

    #[test]
    fn simple_walk_diffusivity() {
        // alpha = 1/2 everywhere (test-only bypass): Var(X_t)/t -> 1.
        let t = 10_000usize;
        let env = env_from_alphas(-(t as i64), vec![0.5; 2 * t + 1]);
        let trials = 10_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for trial in 0..trials {
            let out = evolve_per_particle(&[0], &env, t as f64, 777, trial).unwrap();
            let x = out.positions[0] as f64;
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / trials as f64;
        let var = sumsq / trials as f64 - mean * mean;
        let ratio = var / t as f64;
        assert!((0.94..=1.06).contains(&ratio), "Var/t = {ratio}");
    }

    #[test]
    fn law_single_step() {
        let env = quarter_env(5, 9);
        let a0 = env.alpha(0);
        let law = evolve_law(&env, 0, 1.0).unwrap();
        assert_eq!(law.prob(1), a0);
        assert_eq!(law.prob(-1), 1.0 - a0);
        assert_eq!(law.prob(0), 0.0);
    }

    #[test]
    fn law_two_steps_hand_computed() {
        let env = env_from_alphas(-3, vec![0.75; 7]);
        let law = evolve_law(&env, 0, 2.0).unwrap();
        assert!((law.prob(2) - 0.5625).abs() < 1e-15);
        assert!((law.prob(0) - 0.375).abs() < 1e-15);
        assert!((law.prob(-2) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn law_mass_conservation_long_run() {
        let t = 20_000i64;
        let env = quarter_env(t + 10, 1234);
        let law = evolve_law(&env, 0, t as f64).unwrap();
        assert_eq!(law.leaked_left, 0.0);
        assert_eq!(law.leaked_right, 0.0);
        assert!(
            (law.total() - 1.0).abs() < 1e-12,
            "mass {:.17}",
            law.total()
        );
    }

    #[test]
    fn law_leak_accounts_for_deficit() {
        let env = quarter_env(20, 5);
        let law = evolve_law(&env, 0, 500.0).unwrap();
        let deficit = 1.0 - law.total();
        assert!(deficit > 0.0);
        assert!(
            (deficit - (law.leaked_left + law.leaked_right)).abs() < 1e-12,
            "deficit {deficit}"
        );
    }

    #[test]
    fn law_matches_reference_single_step_recursion() {
        // Independent reference: the textbook full-window recursion.
        let env = quarter_env(25, 314);
        let (lo, hi) = (-25i64, 25i64);
        let n = (hi - lo + 1) as usize;
        for (start, steps) in [(0i64, 37u64), (3, 50), (-25, 11), (25, 8), (-2, 1), (7, 0)] {
            let mut p = vec![0.0f64; n];
            p[(start - lo) as usize] = 1.0;
            let mut leak = (0.0, 0.0);
            for _ in 0..steps {
                let mut q = vec![0.0f64; n];
                for j in 0..n {
                    if p[j] == 0.0 {
                        continue;
                    }
                    let site = lo + j as i64;
                    let a = env.alpha(site);
                    if j + 1 < n {
                        q[j + 1] += a * p[j];
                    } else {
                        leak.1 += a * p[j];
                    }
                    if j > 0 {
                        q[j - 1] += (1.0 - a) * p[j];
                    } else {
                        leak.0 += (1.0 - a) * p[j];
                    }
                }
                p = q;
            }
            let law = evolve_law(&env, start, steps as f64).unwrap();
            for j in 0..n {
                assert!(
                    (law.probs[j] - p[j]).abs() < 1e-13,
                    "start {start} steps {steps} site {}",
                    lo + j as i64
                );
            }
            assert!((law.leaked_left - leak.0).abs() < 1e-13);
            assert!((law.leaked_right - leak.1).abs() < 1e-13);
        }
    }

    #[test]
    fn law_support_parity_and_range() {
        let env = quarter_env(50, 8);
        let law = evolve_law(&env, 3, 11.0).unwrap();
        for site in -50..=50i64 {
            if law.prob(site) > 0.0 {
                assert!((site - 3).abs() <= 11);
                assert_eq!((site - 3).rem_euclid(2), 11 % 2);
            }
        }
    }

    #[test]
    fn mean_field_fair_coin_is_flat() {
        let env = env_from_alphas(-30, vec![0.5; 61]);
        let mf = mean_field(&env, 2.5, 10.0).unwrap();
        // Interior sites (further than t from the boundary) keep mean lambda.
        for site in -20..=20i64 {
            assert!((mf.mean(site) - 2.5).abs() < 1e-12, "site {site}");
        }
    }

    #[test]
    fn mean_field_conserves_lambda_times_window() {
        let env = quarter_env(30, 77);
        let mf = mean_field(&env, 1.0, 200.0).unwrap();
        let total: f64 = mf.means.iter().sum::<f64>() + mf.leaked_left + mf.leaked_right;
        assert!((total - 61.0).abs() < 1e-10, "total {total}");
    }

    #[test]
    fn engines_and_mean_field_agree_in_law() {
        // Small-scale version of the engine/oracle equivalence check.
        let env = quarter_env(30, 2024);
        let lambda = 2.0;
        let t = 50.0;
        let trials = 2_000u64;
        let mf = mean_field(&env, lambda, t).unwrap();
        let n = 61usize;
        let mut sum_split = vec![0.0f64; n];
        let mut sum_pp = vec![0.0f64; n];
        for trial in 0..trials {
            let f0 = init_field(lambda, -30, 30, 2024, trial).unwrap();
            let mut s = Stream::new(2024, &[crate::rng::stream::FIELD_EVOLVE, trial]);
            let f1 = evolve_field(&f0, &env, t, &mut s).unwrap();
            for j in 0..n {
                sum_split[j] += f1.counts()[j] as f64;
            }
            let mut positions = Vec::new();
            for site in -30..=30i64 {
                for _ in 0..f0.count(site) {
                    positions.push(site);
                }
            }
            let out = evolve_per_particle(&positions, &env, t, 2024, trial).unwrap();
            let f2 = out.to_field(-30, 30);
            for j in 0..n {
                sum_pp[j] += f2.counts()[j] as f64;
            }
        }
        let mut bad_split = 0;
        let mut bad_pp = 0;
        for j in 0..n {
            let m = mf.means[j];
            let se = (m.max(1e-9) / trials as f64).sqrt();
            if (sum_split[j] / trials as f64 - m).abs() > 5.0 * se {
                bad_split += 1;
            }
            if (sum_pp[j] / trials as f64 - m).abs() > 5.0 * se {
                bad_pp += 1;
            }
        }
        assert!(bad_split <= 1, "split engine off at {bad_split}/{n} sites");
        assert!(bad_pp <= 1, "per-particle engine off at {bad_pp}/{n} sites");
    }
}
