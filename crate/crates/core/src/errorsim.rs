//! Monte Carlo study of how reasoning errors propagate.
//!
//! Two failure models are contrasted. A *chain* succeeds only if every step
//! succeeds, so per-step error compounds multiplicatively with length. An
//! *elimination* run judges each candidate answer independently with `c`
//! binary checks: the correct candidate survives only if none of its checks
//! misfire, each wrong candidate slips through only if all of its checks
//! miss, and the final answer is a uniform pick among survivors. Both models
//! have closed forms, which the simulations are tested against.
//!
//! Trials are seeded individually from (seed, trial index), so an estimate
//! is reproducible bit-for-bit regardless of how many worker threads run it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("error rate {0} is outside [0, 1]")]
    RateOutOfRange(f64),
    #[error("model needs at least one step")]
    EmptyChain,
    #[error("window {window} must be in 1..{steps}")]
    WindowOutOfRange { window: usize, steps: usize },
    #[error("elimination needs at least one candidate")]
    NoCandidates,
    #[error("at least one trial required")]
    NoTrials,
}

/// A sequential reasoning chain. The opening step is given; each of the
/// `step_error_rates.len()` steps after it fails independently with
/// `step_error_rates[i]`, so the whole chain spans
/// `step_error_rates.len() + 1` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub step_error_rates: Vec<f64>,
    /// How many previous steps each step conditions on. Under the
    /// independent-error reading it cannot change the success product;
    /// carried so a model descriptor round-trips losslessly.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_window() -> usize {
    1
}

impl ChainModel {
    /// Chain with `steps` identical error-bearing steps after the opening
    /// one.
    pub fn uniform(steps: usize, error_rate: f64) -> Self {
        ChainModel { step_error_rates: vec![error_rate; steps], window: 1 }
    }

    /// Total steps including the given opening step.
    pub fn total_steps(&self) -> usize {
        self.step_error_rates.len() + 1
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.step_error_rates.is_empty() {
            return Err(SimError::EmptyChain);
        }
        for &rate in &self.step_error_rates {
            if !(0.0..=1.0).contains(&rate) || rate.is_nan() {
                return Err(SimError::RateOutOfRange(rate));
            }
        }
        if self.window < 1 || self.window >= self.total_steps() {
            return Err(SimError::WindowOutOfRange {
                window: self.window,
                steps: self.total_steps(),
            });
        }
        Ok(())
    }
}

/// Probability a chain completes with every step correct: the product of
/// per-step success rates. An empty chain trivially succeeds.
pub fn chain_success_closed(step_error_rates: &[f64]) -> f64 {
    step_error_rates.iter().map(|e| 1.0 - e).product()
}

/// Probability an elimination run answers correctly with `candidates`
/// options (one correct), `checks` binary checks per candidate, and check
/// error rate `error_rate`.
///
/// The correct candidate survives with probability `(1-e)^c`; each wrong one
/// survives with `q = e^c`; the answer is a uniform pick among survivors.
/// Averaging the pick over the binomial number of surviving wrong candidates
/// collapses to `(1 - (1-q)^n) / (n·q)`.
pub fn elimination_success_closed(candidates: usize, checks: usize, error_rate: f64) -> f64 {
    let n = candidates as f64;
    let e = error_rate;
    let keep = (1.0 - e).powi(checks as i32);
    let q = e.powi(checks as i32);
    if q == 0.0 {
        // No wrong candidate ever survives; success is just keeping the
        // correct one.
        return keep;
    }
    // 1 - (1-q)^n computed via log1p/expm1: the direct form cancels badly
    // when q is tiny (q = e^c shrinks fast with the check count).
    let survivors_factor = -(n * (-q).ln_1p()).exp_m1() / (n * q);
    keep * survivors_factor
}

/// A Monte Carlo estimate next to its exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub estimate: f64,
    pub trials: u64,
    /// Binomial standard error of the estimate.
    pub std_error: f64,
    pub closed_form: f64,
}

impl SimResult {
    fn from_successes(successes: u64, trials: u64, closed_form: f64) -> Self {
        let estimate = successes as f64 / trials as f64;
        let std_error = (estimate * (1.0 - estimate) / trials as f64).sqrt();
        SimResult { estimate, trials, std_error, closed_form }
    }

    /// Distance from the closed form in standard errors (∞-safe).
    pub fn sigma_distance(&self) -> f64 {
        if self.std_error == 0.0 {
            if self.estimate == self.closed_form { 0.0 } else { f64::INFINITY }
        } else {
            (self.estimate - self.closed_form).abs() / self.std_error
        }
    }
}

/// SplitMix64 step, used to spread (seed, trial) pairs into independent
/// per-trial stream seeds.
fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, index))
}

fn run_trials(trials: u64, success: impl Fn(u64) -> bool + Sync) -> u64 {
    (0..trials)
        .into_par_iter()
        .filter(|&t| success(t))
        .count() as u64
}

/// Simulates the chain model. Deterministic for a fixed seed under any
/// worker count.
pub fn simulate_chain(model: &ChainModel, trials: u64, seed: u64) -> Result<SimResult, SimError> {
    model.validate()?;
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let rates = &model.step_error_rates;
    let successes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        rates.iter().all(|&e| rng.gen::<f64>() >= e)
    });
    Ok(SimResult::from_successes(
        successes,
        trials,
        chain_success_closed(rates),
    ))
}

/// Simulates the elimination model described at
/// [`elimination_success_closed`]. Deterministic for a fixed seed under any
/// worker count.
pub fn simulate_elimination(
    candidates: usize,
    checks: usize,
    error_rate: f64,
    trials: u64,
    seed: u64,
) -> Result<SimResult, SimError> {
    if candidates == 0 {
        return Err(SimError::NoCandidates);
    }
    if !(0.0..=1.0).contains(&error_rate) || error_rate.is_nan() {
        return Err(SimError::RateOutOfRange(error_rate));
    }
    if trials == 0 {
        return Err(SimError::NoTrials);
    }
    let successes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        // Checks on the correct candidate misfire with rate e.
        let correct_survives = (0..checks).all(|_| rng.gen::<f64>() >= error_rate);
        // A wrong candidate survives only if every check misses.
        let mut wrong_survivors = 0u64;
        for _ in 1..candidates {
            if (0..checks).all(|_| rng.gen::<f64>() < error_rate) {
                wrong_survivors += 1;
            }
        }
        if !correct_survives {
            return false;
        }
        // Uniform pick among 1 + wrong_survivors.
        rng.gen_range(0..=wrong_survivors) == 0
    });
    Ok(SimResult::from_successes(
        successes,
        trials,
        elimination_success_closed(candidates, checks, error_rate),
    ))
}

/// One error rate evaluated under both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub error_rate: f64,
    pub chain: SimResult,
    pub elimination: SimResult,
}

/// Runs both simulations across `error_rates`, offsetting the seed per rate
/// so points are independent but the whole sweep stays reproducible.
pub fn sweep(
    steps: usize,
    candidates: usize,
    checks: usize,
    error_rates: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>, SimError> {
    error_rates
        .iter()
        .enumerate()
        .map(|(i, &rate)| {
            let point_seed = mix_seed(seed, 0x5EED_0000 + i as u64);
            Ok(SweepPoint {
                error_rate: rate,
                chain: simulate_chain(&ChainModel::uniform(steps, rate), trials, point_seed)?,
                elimination: simulate_elimination(
                    candidates,
                    checks,
                    rate,
                    trials,
                    point_seed ^ 1,
                )?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference form of the elimination probability: explicit binomial sum
    /// over the number of surviving wrong candidates.
    fn elimination_by_sum(candidates: usize, checks: usize, e: f64) -> f64 {
        let m = candidates - 1;
        let keep = (1.0 - e).powi(checks as i32);
        let q = e.powi(checks as i32);
        let mut total = 0.0;
        for k in 0..=m {
            let mut binom = 1.0;
            for j in 0..k {
                binom *= (m - j) as f64 / (j + 1) as f64;
            }
            total += binom * q.powi(k as i32) * (1.0 - q).powi((m - k) as i32)
                / (k as f64 + 1.0);
        }
        keep * total
    }

    #[test]
    fn chain_closed_matches_hand_computed_values() {
        assert!((chain_success_closed(&[0.1; 5]) - 0.59049).abs() < 1e-12);
        assert!((chain_success_closed(&[0.3; 5]) - 0.16807).abs() < 1e-12);
        assert_eq!(chain_success_closed(&[]), 1.0);
        assert_eq!(chain_success_closed(&[0.0, 0.0]), 1.0);
        assert_eq!(chain_success_closed(&[1.0]), 0.0);
    }

    #[test]
    fn elimination_closed_matches_exact_rational_values() {
        // Frozen from exact rational arithmetic.
        assert!((elimination_success_closed(2, 1, 0.1) - 0.855).abs() < 1e-12);
        assert!((elimination_success_closed(4, 2, 0.2) - 0.60261376).abs() < 1e-12);
        assert!((elimination_success_closed(6, 3, 0.1) - 0.727179928178229).abs() < 1e-12);
        assert!((elimination_success_closed(120, 2, 0.3) - 0.045369818624104).abs() < 1e-12);
    }

    #[test]
    fn elimination_closed_agrees_with_binomial_sum() {
        for n in 1..=10usize {
            for c in 1..=4usize {
                for &e in &[0.02, 0.1, 0.25, 0.5, 0.9] {
                    let a = elimination_success_closed(n, c, e);
                    let b = elimination_by_sum(n, c, e);
                    assert!((a - b).abs() < 1e-12, "n={n} c={c} e={e}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_checks_reduce_to_random_guessing() {
        for n in 1..=8usize {
            assert!((elimination_success_closed(n, 0, 0.3) - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_simulation_tracks_closed_form() {
        let model = ChainModel::uniform(5, 0.1);
        let result = simulate_chain(&model, 100_000, 7).unwrap();
        assert!((result.closed_form - 0.59049).abs() < 1e-12);
        assert!(
            (result.estimate - result.closed_form).abs() < 0.01,
            "estimate {} too far from {}",
            result.estimate,
            result.closed_form
        );
        assert!(result.std_error > 0.0 && result.std_error < 0.005);
    }

    #[test]
    fn elimination_simulation_tracks_closed_form() {
        for (n, c, e) in [(6usize, 3usize, 0.1), (4, 2, 0.2)] {
            let result = simulate_elimination(n, c, e, 100_000, 11).unwrap();
            assert!(
                result.sigma_distance() < 5.0,
                "n={n} c={c} e={e}: estimate {} vs closed {} ({} sigma)",
                result.estimate,
                result.closed_form,
                result.sigma_distance()
            );
        }
    }

    #[test]
    fn simulation_is_deterministic_across_worker_counts() {
        let model = ChainModel::uniform(6, 0.2);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let many = rayon::ThreadPoolBuilder::new().num_threads(7).build().unwrap();
        let a = single.install(|| simulate_chain(&model, 20_000, 123).unwrap());
        let b = many.install(|| simulate_chain(&model, 20_000, 123).unwrap());
        assert_eq!(a.estimate, b.estimate);
        let c = single.install(|| simulate_elimination(5, 2, 0.15, 20_000, 9).unwrap());
        let d = many.install(|| simulate_elimination(5, 2, 0.15, 20_000, 9).unwrap());
        assert_eq!(c.estimate, d.estimate);
    }

    #[test]
    fn different_seeds_give_different_but_close_estimates() {
        let model = ChainModel::uniform(4, 0.25);
        let a = simulate_chain(&model, 50_000, 1).unwrap();
        let b = simulate_chain(&model, 50_000, 2).unwrap();
        assert_ne!(a.estimate, b.estimate);
        assert!((a.estimate - b.estimate).abs() < 0.02);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert_eq!(
            ChainModel::uniform(3, 1.5).validate(),
            Err(SimError::RateOutOfRange(1.5))
        );
        assert_eq!(
            ChainModel { step_error_rates: vec![], window: 1 }.validate(),
            Err(SimError::EmptyChain)
        );
        assert_eq!(
            ChainModel { step_error_rates: vec![0.1, 0.1], window: 3 }.validate(),
            Err(SimError::WindowOutOfRange { window: 3, steps: 3 })
        );
        assert_eq!(
            ChainModel { step_error_rates: vec![0.1, 0.1], window: 0 }.validate(),
            Err(SimError::WindowOutOfRange { window: 0, steps: 3 })
        );
        assert!(matches!(
            simulate_elimination(0, 2, 0.1, 100, 0),
            Err(SimError::NoCandidates)
        ));
        assert!(matches!(
            simulate_chain(&ChainModel::uniform(3, 0.1), 0, 0),
            Err(SimError::NoTrials)
        ));
    }

    #[test]
    fn sweep_is_reproducible_and_ordered() {
        let rates = [0.05, 0.1, 0.3];
        let a = sweep(6, 6, 3, &rates, 5_000, 42).unwrap();
        let b = sweep(6, 6, 3, &rates, 5_000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert_eq!(a[0].error_rate, 0.05);
        // Chains degrade faster than elimination as the rate grows.
        assert!(a[2].chain.closed_form < a[2].elimination.closed_form);
    }

    proptest! {
        #[test]
        fn chain_closed_stays_in_unit_interval(
            rates in proptest::collection::vec(0.0f64..=1.0, 1..10)
        ) {
            let p = chain_success_closed(&rates);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn longer_chains_never_succeed_more(
            rates in proptest::collection::vec(0.0f64..=1.0, 1..8),
            extra in 0.0f64..=1.0
        ) {
            let shorter = chain_success_closed(&rates);
            let mut longer_rates = rates.clone();
            longer_rates.push(extra);
            prop_assert!(chain_success_closed(&longer_rates) <= shorter + 1e-15);
        }

        #[test]
        fn more_checks_never_help_a_wrong_candidate(
            e in 0.01f64..=0.99,
            n in 2usize..=8,
            c in 1usize..=4
        ) {
            // More checks monotonically sharpen elimination of wrong
            // candidates but also risk the correct one; both closed forms
            // must stay probabilities.
            let p = elimination_success_closed(n, c, e);
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
