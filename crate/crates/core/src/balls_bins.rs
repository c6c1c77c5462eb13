//! Closed-form statistics of the parallel balls-and-bins game.
//!
//! `s` agents each sample `d` of `n` bins uniformly with replacement; `k` of
//! the bins are available. An agent that saw at least one available bin is
//! *potentially happy* and throws its ball at one of the distinct available
//! bins it saw, chosen uniformly. Each targeted bin accepts exactly one ball;
//! an agent whose ball lands is *happy*.
//!
//! The number of potentially happy agents is `Binomial(s, sigma)` and, given
//! `f` of them, each targets a uniform available bin independently, so the
//! expected number of distinct targeted bins is `k * (1 - ((k-1)/k)^f)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::ParamError;

/// Relative slack applied to the SLA comparison so that exact-equality
/// configurations (e.g. `s = 1, k = n, delta_hat = 0`) are not rejected by
/// rounding in the last bit.
pub const SLA_EPSILON: f64 = 1e-12;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallsBinsParams {
    pub n: u64,
    pub k: u64,
    pub s: u64,
    pub d: u64,
}

impl BallsBinsParams {
    pub fn new(n: u64, k: u64, s: u64, d: u64) -> Result<Self, ParamError> {
        check_bins(n, k)?;
        if s == 0 {
            return Err(ParamError::ZeroAgents);
        }
        Ok(Self { n, k, s, d })
    }
}

/// Target decline ratio and per-slot query budget.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlaBudget {
    pub delta_hat: f64,
    pub budget: u64,
}

impl SlaBudget {
    pub fn new(delta_hat: f64, budget: u64) -> Result<Self, ParamError> {
        check_delta(delta_hat)?;
        if budget == 0 {
            return Err(ParamError::ZeroBudget);
        }
        Ok(Self { delta_hat, budget })
    }
}

/// A scheduler fleet: `s` schedulers each querying `d` hosts.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub s: u64,
    pub d: u64,
}

fn check_bins(n: u64, k: u64) -> Result<(), ParamError> {
    if n == 0 {
        return Err(ParamError::ZeroBins);
    }
    if k > n {
        return Err(ParamError::AvailableExceedsBins { k, n });
    }
    Ok(())
}

fn check_delta(delta_hat: f64) -> Result<(), ParamError> {
    if !(0.0..=1.0).contains(&delta_hat) {
        return Err(ParamError::DeclineRatio(delta_hat));
    }
    Ok(())
}

/// Probability that one agent sees at least one available bin.
pub fn sigma(n: u64, k: u64, d: u64) -> Result<f64, ParamError> {
    check_bins(n, k)?;
    Ok(sigma_unchecked(n, k, d))
}

fn sigma_unchecked(n: u64, k: u64, d: u64) -> f64 {
    if k == 0 || d == 0 {
        return 0.0;
    }
    if k == n {
        return 1.0;
    }
    let miss = (n - k) as f64 / n as f64;
    // (1 - miss^d) without cancellation for small k/n.
    -(d as f64 * miss.ln()).exp_m1()
}

/// `C(s, f) p^f (1-p)^(s-f)`, evaluated in log space.
pub fn binom_pmf(f: u64, s: u64, p: f64) -> Result<f64, ParamError> {
    if f > s {
        return Err(ParamError::SuccessesExceedTrials { f, s });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(ParamError::Probability(p));
    }
    Ok(binom_pmf_unchecked(f, s, p))
}

fn binom_pmf_unchecked(f: u64, s: u64, p: f64) -> f64 {
    if p == 0.0 {
        return if f == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if f == s { 1.0 } else { 0.0 };
    }
    let log = ln_binomial(s, f) + f as f64 * p.ln() + (s - f) as f64 * (-p).ln_1p();
    log.exp()
}

/// Expected number of happy agents given `f` potentially happy ones.
pub fn expected_happy_given_f(k: u64, f: u64) -> f64 {
    if k == 0 || f == 0 {
        return 0.0;
    }
    let kf = k as f64;
    let miss = (kf - 1.0) / kf;
    kf * (1.0 - pow_u64(miss, f))
}

fn pow_u64(base: f64, exp: u64) -> f64 {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(exp as f64),
    }
}

/// Expected number of happy agents, conditioning on the potentially happy count.
pub fn expected_happy(params: &BallsBinsParams) -> f64 {
    let BallsBinsParams { n, k, s, d } = *params;
    if k == 0 || d == 0 {
        return 0.0;
    }
    let sig = sigma_unchecked(n, k, d);
    (1..=s)
        .map(|f| binom_pmf_unchecked(f, s, sig) * expected_happy_given_f(k, f))
        .sum()
}

/// Whether `s` agents querying `d` bins each meet the target decline ratio in expectation.
pub fn satisfy_sla(n: u64, delta_hat: f64, k: u64, s: u64, d: u64) -> Result<bool, ParamError> {
    check_delta(delta_hat)?;
    let params = BallsBinsParams::new(n, k, s, d)?;
    Ok(meets_target(expected_happy(&params), s, delta_hat))
}

pub(crate) fn meets_target(expected_happy: f64, s: u64, delta_hat: f64) -> bool {
    let target = s as f64 * (1.0 - delta_hat);
    expected_happy >= target - SLA_EPSILON * s as f64
}

/// Greedily grows the fleet while the next size still meets the SLA within budget.
///
/// Always returns `s <= budget`, hence `d >= 1` and `s * d <= budget`.
pub fn max_paral(n: u64, delta_hat: f64, budget: u64, k: u64) -> Result<Configuration, ParamError> {
    check_bins(n, k)?;
    check_delta(delta_hat)?;
    if budget == 0 {
        return Err(ParamError::ZeroBudget);
    }
    let mut s = 1;
    while s < budget {
        let next = s + 1;
        let params = BallsBinsParams {
            n,
            k,
            s: next,
            d: budget / next,
        };
        if !meets_target(expected_happy(&params), next, delta_hat) {
            break;
        }
        s = next;
    }
    Ok(Configuration { s, d: budget / s })
}

/// Empirical statistics from repeated plays of the game.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub trials: u64,
    pub mean_potentially_happy: f64,
    pub mean_happy: f64,
    /// Unbiased sample variance of the per-trial happy count.
    pub var_happy: f64,
    /// Unbiased sample variance of the per-trial potentially-happy count.
    pub var_potentially_happy: f64,
    /// How often each available bin was targeted by a potentially happy agent.
    pub selection_counts: Vec<u64>,
    /// Total potentially-happy agent draws over all trials.
    pub potentially_happy_total: u64,
}

impl MonteCarloSummary {
    pub fn stderr_happy(&self) -> f64 {
        (self.var_happy / self.trials as f64).sqrt()
    }

    pub fn stderr_potentially_happy(&self) -> f64 {
        (self.var_potentially_happy / self.trials as f64).sqrt()
    }
}

/// Plays the game `trials` times. Bins `0..k` are the available ones.
pub fn simulate_balls_and_bins(
    params: &BallsBinsParams,
    trials: u64,
    seed: u64,
) -> Result<MonteCarloSummary, ParamError> {
    if trials == 0 {
        return Err(ParamError::ZeroTrials);
    }
    let BallsBinsParams { n, k, s, d } = *params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k_us = k as usize;
    let mut selection_counts = vec![0u64; k_us];
    // Last trial (1-based) in which a bin was targeted.
    let mut stamp = vec![0u64; k_us];
    let mut seen: Vec<u64> = Vec::with_capacity(d as usize);

    let (mut sum_f, mut sum_f2, mut sum_h, mut sum_h2) = (0f64, 0f64, 0f64, 0f64);
    let mut ph_total = 0u64;
    for trial in 1..=trials {
        let mut f = 0u64;
        let mut h = 0u64;
        for _ in 0..s {
            seen.clear();
            for _ in 0..d {
                let bin = rng.random_range(0..n);
                if bin < k {
                    seen.push(bin);
                }
            }
            if seen.is_empty() {
                continue;
            }
            seen.sort_unstable();
            seen.dedup();
            let target = seen[rng.random_range(0..seen.len())] as usize;
            f += 1;
            selection_counts[target] += 1;
            if stamp[target] != trial {
                stamp[target] = trial;
                h += 1;
            }
        }
        ph_total += f;
        let (f, h) = (f as f64, h as f64);
        sum_f += f;
        sum_f2 += f * f;
        sum_h += h;
        sum_h2 += h * h;
    }

    let t = trials as f64;
    let var = |sum: f64, sum2: f64| {
        if trials < 2 {
            0.0
        } else {
            ((sum2 - sum * sum / t) / (t - 1.0)).max(0.0)
        }
    };
    Ok(MonteCarloSummary {
        trials,
        mean_potentially_happy: sum_f / t,
        mean_happy: sum_h / t,
        var_happy: var(sum_h, sum_h2),
        var_potentially_happy: var(sum_f, sum_f2),
        selection_counts,
        potentially_happy_total: ph_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Counts d-tuples of bin draws that hit an available bin.
    fn sigma_by_enumeration(n: u64, k: u64, d: u32) -> f64 {
        let total = n.pow(d);
        let mut hits = 0u64;
        for code in 0..total {
            let mut c = code;
            let mut hit = false;
            for _ in 0..d {
                if c % n < k {
                    hit = true;
                }
                c /= n;
            }
            hits += hit as u64;
        }
        hits as f64 / total as f64
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(100, 100, 1).unwrap(), 1.0);
        assert_eq!(sigma(100, 0, 5).unwrap(), 0.0);
        let oracle = sigma_by_enumeration(100, 50, 2);
        assert_eq!(oracle, 0.75);
        assert!(close(sigma(100, 50, 2).unwrap(), oracle, 1e-15));
        assert_eq!(sigma(10, 3, 0).unwrap(), 0.0);
    }

    #[test]
    fn sigma_rejects_bad_ranges() {
        assert_eq!(sigma(0, 0, 1), Err(ParamError::ZeroBins));
        assert_eq!(sigma(5, 6, 1), Err(ParamError::AvailableExceedsBins { k: 6, n: 5 }));
    }

    #[test]
    fn binom_examples() {
        assert_eq!(binom_pmf(0, 7, 0.0).unwrap(), 1.0);
        assert_eq!(binom_pmf(7, 7, 1.0).unwrap(), 1.0);
        // 4 equiprobable outcomes, two with exactly one success.
        assert!(close(binom_pmf(1, 2, 0.5).unwrap(), 2.0 / 4.0, 1e-15));
        assert_eq!(
            binom_pmf(3, 2, 0.5),
            Err(ParamError::SuccessesExceedTrials { f: 3, s: 2 })
        );
        assert_eq!(binom_pmf(1, 2, 1.5), Err(ParamError::Probability(1.5)));
    }

    #[test]
    fn binom_is_stable_for_large_s() {
        let s = 10_000;
        let total: f64 = (0..=s).map(|f| binom_pmf(f, s, 0.37).unwrap()).sum();
        assert!(close(total, 1.0, 1e-9), "{total}");
        let mean: f64 = (0..=s).map(|f| f as f64 * binom_pmf(f, s, 0.37).unwrap()).sum();
        assert!(close(mean, 3700.0, 1e-6), "{mean}");
    }

    #[test]
    fn conditional_expectation_examples() {
        assert_eq!(expected_happy_given_f(5, 0), 0.0);
        assert_eq!(expected_happy_given_f(1, 3), 1.0);
        assert_eq!(expected_happy_given_f(0, 3), 0.0);
        // Two agents on two bins: outcomes {00, 01, 10, 11} occupy {1, 2, 2, 1} bins.
        let enumerated = (1.0 + 2.0 + 2.0 + 1.0) / 4.0;
        assert_eq!(expected_happy_given_f(2, 2), enumerated);
    }

    #[test]
    fn expected_happy_examples() {
        assert_eq!(expected_happy(&BallsBinsParams::new(10, 0, 4, 3).unwrap()), 0.0);
        assert!(close(
            expected_happy(&BallsBinsParams::new(10, 10, 1, 1).unwrap()),
            1.0,
            1e-15
        ));
        // sigma = 1/2: f=1 w.p. 1/2 gives 1, f=2 w.p. 1/4 gives 1.5.
        assert!(close(
            expected_happy(&BallsBinsParams::new(4, 2, 2, 1).unwrap()),
            0.5 * 1.0 + 0.25 * 1.5,
            1e-15
        ));
    }

    #[test]
    fn sla_examples() {
        for n in [1, 7, 100] {
            assert!(satisfy_sla(n, 0.0, n, 1, 1).unwrap());
            assert!(satisfy_sla(n, 0.05, n, 1, 1).unwrap());
        }
        assert!(!satisfy_sla(100, 0.05, 0, 1, 10).unwrap());
        assert!(satisfy_sla(100, 1.5, 0, 1, 1).is_err());
    }

    #[test]
    fn max_paral_examples() {
        assert_eq!(max_paral(100, 0.05, 100, 0).unwrap(), Configuration { s: 1, d: 100 });
        assert_eq!(max_paral(100, 1.0, 100, 1).unwrap(), Configuration { s: 100, d: 1 });
        assert_eq!(max_paral(100, 0.05, 0, 1), Err(ParamError::ZeroBudget));
    }

    #[test]
    fn monte_carlo_degenerate_cases() {
        let none = simulate_balls_and_bins(&BallsBinsParams::new(10, 0, 3, 4).unwrap(), 1000, 1).unwrap();
        assert_eq!((none.mean_potentially_happy, none.mean_happy), (0.0, 0.0));
        let lone = simulate_balls_and_bins(&BallsBinsParams::new(10, 10, 1, 1).unwrap(), 1000, 1).unwrap();
        assert_eq!(lone.mean_happy, 1.0);
        assert_eq!(lone.var_happy, 0.0);
        assert!(simulate_balls_and_bins(&BallsBinsParams::new(10, 10, 1, 1).unwrap(), 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_matches_small_example() {
        let p = BallsBinsParams::new(4, 2, 2, 1).unwrap();
        let mc = simulate_balls_and_bins(&p, 1_000_000, 7).unwrap();
        assert!((mc.mean_happy - 0.875).abs() <= 3.0 * mc.stderr_happy());
    }
}
