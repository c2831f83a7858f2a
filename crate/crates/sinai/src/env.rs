//! Random environments and their associated potential.
//!
//! An environment is an i.i.d. sequence of right-jump probabilities
//! `alpha[i]` on a lattice window. Only laws symmetric under
//! `alpha -> 1 - alpha` are offered, so the zero-mean hypothesis on
//! `eps_i = log((1 - alpha_i)/alpha_i)` holds exactly rather than
//! approximately. The support is bounded away from 0 and 1 by `rho0`,
//! which is the ellipticity constant of the regularity hypothesis.

use crate::error::{Result, SinaiError};
use crate::rng::{self, stream};
use serde::{Deserialize, Serialize};

/// Supported environment laws. Both are symmetric about 1/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// `alpha in {rho0, 1 - rho0}`, each with probability 1/2.
    TwoPointSymmetric,
    /// `alpha` uniform on `[rho0, 1 - rho0]`.
    UniformSymmetric,
}

/// An environment law together with its ellipticity parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDistribution {
    pub kind: EnvKind,
    pub rho0: f64,
}

impl EnvDistribution {
    pub fn new(kind: EnvKind, rho0: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho0 < 0.5) {
            return Err(SinaiError::config(format!(
                "rho0 must lie in (0, 1/2), got {rho0}"
            )));
        }
        Ok(EnvDistribution { kind, rho0 })
    }

    pub fn two_point(rho0: f64) -> Result<Self> {
        Self::new(EnvKind::TwoPointSymmetric, rho0)
    }

    pub fn uniform(rho0: f64) -> Result<Self> {
        Self::new(EnvKind::UniformSymmetric, rho0)
    }

    /// Draw the site value from a single 64-bit word.
    #[inline]
    fn alpha_from_word(&self, w: u64) -> f64 {
        match self.kind {
            EnvKind::TwoPointSymmetric => {
                if w & 1 == 0 {
                    self.rho0
                } else {
                    1.0 - self.rho0
                }
            }
            EnvKind::UniformSymmetric => {
                self.rho0 + rng::to_unit_f64(w) * (1.0 - 2.0 * self.rho0)
            }
        }
    }

    /// Largest possible `|eps_i| = log((1 - rho0)/rho0)`.
    pub fn max_increment(&self) -> f64 {
        ((1.0 - self.rho0) / self.rho0).ln()
    }
}

/// Deterministic per-site draw: a pure function of `(master_seed, site)`.
#[inline]
pub fn site_alpha(dist: &EnvDistribution, master_seed: u64, site: i64) -> f64 {
    dist.alpha_from_word(rng::value_at(master_seed, &[stream::ENV_SITE, site as u64]))
}

/// A materialized window of an environment.
///
/// Extending the window never changes previously generated values because
/// each site is an independent function of `(master_seed, site)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    lo: i64,
    hi: i64,
    alpha: Vec<f64>,
    pub dist: EnvDistribution,
    pub master_seed: u64,
}

impl Environment {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    #[inline]
    pub fn alpha(&self, site: i64) -> f64 {
        debug_assert!(site >= self.lo && site <= self.hi);
        self.alpha[(site - self.lo) as usize]
    }

    #[inline]
    pub fn eps(&self, site: i64) -> f64 {
        let a = self.alpha(site);
        ((1.0 - a) / a).ln()
    }

    pub fn contains(&self, site: i64) -> bool {
        site >= self.lo && site <= self.hi
    }

    pub fn check_window(&self, lo: i64, hi: i64) -> Result<()> {
        if lo < self.lo || hi > self.hi {
            return Err(SinaiError::OutOfWindow {
                index: if lo < self.lo { lo } else { hi },
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }
}

/// Sample an environment on `[lo, hi]`.
pub fn sample_environment(
    dist: &EnvDistribution,
    lo: i64,
    hi: i64,
    master_seed: u64,
) -> Result<Environment> {
    if lo > 0 || hi < 0 {
        return Err(SinaiError::config(format!(
            "window [{lo}, {hi}] must contain the origin"
        )));
    }
    if hi < lo {
        return Err(SinaiError::config(format!("window [{lo}, {hi}] is empty")));
    }
    let alpha = (lo..=hi)
        .map(|i| site_alpha(dist, master_seed, i))
        .collect();
    Ok(Environment {
        lo,
        hi,
        alpha,
        dist: *dist,
        master_seed,
    })
}

/// Widen an environment; the restriction to the old window is identical.
pub fn extend_environment(env: &Environment, new_lo: i64, new_hi: i64) -> Result<Environment> {
    if new_lo > env.lo || new_hi < env.hi {
        return Err(SinaiError::config(format!(
            "extension [{new_lo}, {new_hi}] must contain [{}, {}]",
            env.lo, env.hi
        )));
    }
    if new_lo == env.lo && new_hi == env.hi {
        return Ok(env.clone());
    }
    let mut alpha = Vec::with_capacity((new_hi - new_lo + 1) as usize);
    alpha.extend((new_lo..env.lo).map(|i| site_alpha(&env.dist, env.master_seed, i)));
    alpha.extend_from_slice(&env.alpha);
    alpha.extend((env.hi + 1..=new_hi).map(|i| site_alpha(&env.dist, env.master_seed, i)));
    Ok(Environment {
        lo: new_lo,
        hi: new_hi,
        alpha,
        dist: env.dist,
        master_seed: env.master_seed,
    })
}

/// The random potential `S` on a lattice window, with `S[0] = 0`,
/// `S[k] - S[k-1] = eps_k` for `k >= 1` and `S[k] = -sum_{k+1..=0} eps_i`
/// for `k <= -1`. Extrema of the linearly interpolated potential occur at
/// integer nodes, so only integer nodes are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    lo: i64,
    hi: i64,
    s: Vec<f64>,
    /// Analytic variance of `eps` under the generating law.
    pub sigma2: f64,
}

impl Potential {
    pub fn lo(&self) -> i64 {
        self.lo
    }

    pub fn hi(&self) -> i64 {
        self.hi
    }

    #[inline]
    pub fn s(&self, k: i64) -> f64 {
        debug_assert!(k >= self.lo && k <= self.hi);
        self.s[(k - self.lo) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.s
    }

    pub fn check_window(&self, lo: i64, hi: i64) -> Result<()> {
        if lo < self.lo || hi > self.hi || lo > hi {
            return Err(SinaiError::OutOfWindow {
                index: if lo < self.lo { lo } else { hi },
                lo: self.lo,
                hi: self.hi,
            });
        }
        Ok(())
    }

    /// Build a potential directly from values (fixtures and property tests).
    /// The window must contain the origin; no other invariant is enforced.
    pub fn from_values(lo: i64, values: Vec<f64>, sigma2: f64) -> Result<Self> {
        let hi = lo + values.len() as i64 - 1;
        if values.is_empty() || lo > 0 || hi < 0 {
            return Err(SinaiError::config(format!(
                "potential window [{lo}, {hi}] must contain the origin"
            )));
        }
        Ok(Potential {
            lo,
            hi,
            s: values,
            sigma2,
        })
    }

    pub fn max_over(&self, lo: i64, hi: i64) -> f64 {
        (lo..=hi).map(|k| self.s(k)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_over(&self, lo: i64, hi: i64) -> f64 {
        (lo..=hi).map(|k| self.s(k)).fold(f64::INFINITY, f64::min)
    }
}

/// Compute the potential associated to an environment window.
pub fn compute_potential(env: &Environment) -> Potential {
    let n = (env.hi() - env.lo() + 1) as usize;
    let mut s = vec![0.0; n];
    let origin = (-env.lo()) as usize;
    let mut acc = 0.0;
    for k in 1..=env.hi() {
        acc += env.eps(k);
        s[origin + k as usize] = acc;
    }
    acc = 0.0;
    for k in (env.lo()..=-1).rev() {
        acc -= env.eps(k + 1);
        s[(k - env.lo()) as usize] = acc;
    }
    Potential {
        lo: env.lo(),
        hi: env.hi(),
        s,
        sigma2: sigma2_analytic(&env.dist),
    }
}

/// Exact variance of `eps = log((1 - alpha)/alpha)` under the law.
///
/// Two-point: `eps = ±log((1-rho0)/rho0)` with equal weights, so the
/// variance is the square of that increment. Uniform: computed by adaptive
/// quadrature of the smooth integrand (the mean vanishes by symmetry).
pub fn sigma2_analytic(dist: &EnvDistribution) -> f64 {
    match dist.kind {
        EnvKind::TwoPointSymmetric => {
            let c = dist.max_increment();
            c * c
        }
        EnvKind::UniformSymmetric => {
            let a = dist.rho0;
            let b = 1.0 - dist.rho0;
            let f = |x: f64| {
                let e = ((1.0 - x) / x).ln();
                e * e
            };
            adaptive_simpson(&f, a, b, 1e-13) / (b - a)
        }
    }
}

/// Report on the standing hypotheses: zero-mean increments (exact by the
/// symmetry of the offered laws), positive variance, ellipticity bound.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub mean_eps: f64,
    pub sigma2: f64,
    pub rho0: f64,
    pub ok: bool,
}

pub fn verify_hypotheses(dist: &EnvDistribution) -> HypothesisReport {
    let sigma2 = sigma2_analytic(dist);
    HypothesisReport {
        mean_eps: 0.0,
        sigma2,
        rho0: dist.rho0,
        ok: sigma2 > 0.0 && dist.rho0 > 0.0 && dist.rho0 < 0.5,
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 40)
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// A test-only environment carrying explicit alpha values (used to
    /// exercise laws outside the admissible distributions, e.g. alpha = 1/2
    /// or alpha = 1).
    pub(crate) fn env_from_alphas(lo: i64, alphas: Vec<f64>) -> Environment {
        let hi = lo + alphas.len() as i64 - 1;
        Environment {
            lo,
            hi,
            alpha: alphas,
            dist: EnvDistribution::two_point(0.25).unwrap(),
            master_seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::env_from_alphas;
    use super::*;

    fn two_point_quarter() -> EnvDistribution {
        EnvDistribution::two_point(0.25).unwrap()
    }

    #[test]
    fn rho0_must_be_below_half() {
        assert!(EnvDistribution::two_point(0.5).is_err());
        assert!(EnvDistribution::two_point(0.0).is_err());
        assert!(EnvDistribution::uniform(0.6).is_err());
    }

    #[test]
    fn two_point_support() {
        let dist = two_point_quarter();
        let env = sample_environment(&dist, -200, 200, 99).unwrap();
        for i in -200..=200 {
            let a = env.alpha(i);
            assert!(a == 0.25 || a == 0.75, "alpha[{i}] = {a}");
        }
    }

    #[test]
    fn uniform_support_bounds() {
        let dist = EnvDistribution::uniform(0.1).unwrap();
        let env = sample_environment(&dist, -500, 500, 3).unwrap();
        for i in -500..=500 {
            let a = env.alpha(i);
            assert!((0.1..=0.9).contains(&a));
        }
    }

    #[test]
    fn regeneration_is_deterministic() {
        let dist = two_point_quarter();
        let a = sample_environment(&dist, -50, 50, 7).unwrap();
        let b = sample_environment(&dist, -50, 50, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_extension_preserves_values() {
        let dist = two_point_quarter();
        let small = sample_environment(&dist, -10, 10, 1234).unwrap();
        let large = sample_environment(&dist, -20, 20, 1234).unwrap();
        for i in -10..=10 {
            assert_eq!(small.alpha(i), large.alpha(i));
        }
        let extended = extend_environment(&small, -20, 20).unwrap();
        assert_eq!(extended, large);
    }

    #[test]
    fn extension_composes() {
        let dist = two_point_quarter();
        let base = sample_environment(&dist, -5, 5, 55).unwrap();
        let one_hop = extend_environment(&base, -10, 10).unwrap();
        let two_hop = extend_environment(&one_hop, -15, 15).unwrap();
        let direct = extend_environment(&base, -15, 15).unwrap();
        assert_eq!(two_hop, direct);
    }

    #[test]
    fn extension_to_same_window_is_identity() {
        let dist = two_point_quarter();
        let env = sample_environment(&dist, -5, 5, 55).unwrap();
        assert_eq!(extend_environment(&env, -5, 5).unwrap(), env);
    }

    #[test]
    fn shrinking_is_rejected() {
        let dist = two_point_quarter();
        let env = sample_environment(&dist, -10, 10, 1).unwrap();
        assert!(extend_environment(&env, -5, 10).is_err());
        assert!(extend_environment(&env, -10, 5).is_err());
    }

    #[test]
    fn window_must_contain_origin() {
        let dist = two_point_quarter();
        assert!(sample_environment(&dist, 1, 10, 0).is_err());
        assert!(sample_environment(&dist, -10, -1, 0).is_err());
        assert!(sample_environment(&dist, 5, -5, 0).is_err());
    }

    #[test]
    fn potential_of_fair_coin_is_zero() {
        let env = env_from_alphas(-3, vec![0.5; 7]);
        let pot = compute_potential(&env);
        for k in -3..=3 {
            assert_eq!(pot.s(k), 0.0);
        }
    }

    #[test]
    fn potential_of_constant_alpha_is_linear() {
        // alpha = 1/(1+e) gives eps = 1 identically, so S[k] = k on both sides.
        let a = 1.0 / (1.0 + std::f64::consts::E);
        let env = env_from_alphas(-4, vec![a; 9]);
        let pot = compute_potential(&env);
        for k in -4..=4 {
            assert!((pot.s(k) - k as f64).abs() < 1e-12, "S[{k}] = {}", pot.s(k));
        }
    }

    #[test]
    fn potential_hand_example() {
        // alpha = [a(-1)=0.75, a(0)=0.25, a(1)=0.25, a(2)=0.75]
        let env = env_from_alphas(-1, vec![0.75, 0.25, 0.25, 0.75]);
        let pot = compute_potential(&env);
        let log3 = 3.0f64.ln();
        assert!((pot.s(1) - log3).abs() < 1e-12);
        assert!(pot.s(2).abs() < 1e-12);
        assert!((pot.s(-1) + log3).abs() < 1e-12);
        assert_eq!(pot.s(0), 0.0);
    }

    #[test]
    fn potential_increments_roundtrip() {
        let dist = two_point_quarter();
        let env = sample_environment(&dist, -300, 300, 2024).unwrap();
        let pot = compute_potential(&env);
        for k in -299..=300i64 {
            let inc = pot.s(k) - pot.s(k - 1);
            assert!((inc - env.eps(k)).abs() < 1e-12, "increment at {k}");
        }
        let bound = dist.max_increment() + 1e-12;
        for k in -299..=300i64 {
            assert!((pot.s(k) - pot.s(k - 1)).abs() <= bound);
        }
    }

    #[test]
    fn sigma2_two_point_quarter() {
        let v = sigma2_analytic(&two_point_quarter());
        let log3 = 3.0f64.ln();
        assert!((v - log3 * log3).abs() < 1e-15);
        assert!((v - 1.2069).abs() < 1e-3);
    }

    #[test]
    fn sigma2_shrinks_near_half() {
        let v = sigma2_analytic(&EnvDistribution::two_point(0.499).unwrap());
        assert!(v > 0.0 && v < 2e-5, "sigma2 = {v}");
    }

    /// Independent Romberg oracle for the uniform-law variance.
    fn romberg(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        const K: usize = 18;
        let mut r = vec![vec![0.0f64; K]; K];
        let mut h = b - a;
        r[0][0] = 0.5 * h * (f(a) + f(b));
        for i in 1..K {
            h *= 0.5;
            let n = 1usize << (i - 1);
            let sum: f64 = (0..n).map(|j| f(a + (2 * j + 1) as f64 * h)).sum();
            r[i][0] = 0.5 * r[i - 1][0] + h * sum;
            for j in 1..=i {
                let pow = 4f64.powi(j as i32);
                r[i][j] = (pow * r[i][j - 1] - r[i - 1][j - 1]) / (pow - 1.0);
            }
        }
        r[K - 1][K - 1]
    }

    #[test]
    fn sigma2_uniform_matches_quadrature_oracle() {
        let dist = EnvDistribution::uniform(0.25).unwrap();
        let implementation = sigma2_analytic(&dist);
        let f = |x: f64| {
            let e = ((1.0 - x) / x).ln();
            e * e
        };
        let oracle = romberg(&f, 0.25, 0.75) / 0.5;
        assert!(
            (implementation - oracle).abs() < 1e-10,
            "impl {implementation} vs oracle {oracle}"
        );
        assert!((0.2..0.6).contains(&implementation));
    }

    #[test]
    fn hypothesis_report_two_point() {
        let rep = verify_hypotheses(&two_point_quarter());
        assert_eq!(rep.mean_eps, 0.0);
        assert!((rep.sigma2 - 1.2069).abs() < 1e-3);
        assert_eq!(rep.rho0, 0.25);
        assert!(rep.ok);
    }

    #[test]
    fn hypothesis_report_uniform() {
        let rep = verify_hypotheses(&EnvDistribution::uniform(0.1).unwrap());
        assert!(rep.ok);
        assert!(rep.sigma2 > 0.0);
    }

    #[test]
    fn empirical_moments_match_analytic() {
        let n: i64 = 1_000_000;
        for dist in [two_point_quarter(), EnvDistribution::uniform(0.25).unwrap()] {
            let sigma2 = sigma2_analytic(&dist);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for i in 0..n {
                let a = site_alpha(&dist, 31415, i);
                let e = ((1.0 - a) / a).ln();
                sum += e;
                sumsq += e * e;
            }
            let mean = sum / n as f64;
            let var = sumsq / n as f64 - mean * mean;
            let tol = 4.0 * sigma2.sqrt() / (n as f64).sqrt();
            assert!(mean.abs() < tol, "mean {mean} vs tol {tol}");
            assert!(
                (var - sigma2).abs() < 0.02 * sigma2,
                "var {var} vs sigma2 {sigma2}"
            );
        }
    }
}
