//! Statistical model checking: Monte-Carlo estimation of probabilities and
//! expectations over stochastic models.
//!
//! Probability queries run a fixed number of independent simulations sized by
//! the Chernoff–Hoeffding bound `N = ceil(ln(2/alpha) / (2 epsilon^2))`, which
//! guarantees `P(|p_hat - p| > epsilon) <= alpha`. Mean queries run in batches
//! and stop once the relative standard error of the mean,
//! `RSEM = (s/sqrt(n)) / |mean|`, drops below the target.
//!
//! Per-run rng streams are split off the query seed by run index and results
//! are reduced in run order, so serial and parallel execution produce
//! bit-identical estimates.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::SimError;
use crate::rng::StreamRng;
use crate::stats::RunSet;

/// Runs between RSEM checks. Small enough that the stopping rule lands near
/// the target without large overshoot.
pub const MEAN_BATCH: u64 = 5;

/// Chunk size between stop-signal checks in probability estimation.
const PROB_CHUNK: u64 = 256;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SmcError {
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("reward function produced a non-finite value")]
    NonFiniteReward,
    #[error("model run failed: {0}")]
    Model(String),
}

/// One simulation run's contribution: an observed value plus the work spent
/// (engine steps, or the equivalent unit for native models).
#[derive(Debug, Clone, Copy)]
pub struct RunSample<T> {
    pub value: T,
    pub work: u64,
}

/// A point estimate with its interval and the effort that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub runs: u64,
    /// Total simulated work across runs.
    pub work: u64,
    /// Set when an external stop signal truncated the run budget.
    pub partial: bool,
}

impl Estimate {
    /// Exact estimate, used by scripted verifiers in stub scenarios.
    pub fn exact(value: f64) -> Self {
        Estimate { point: value, lo: value, hi: value, runs: 0, work: 0, partial: false }
    }
}

fn check_prob_params(epsilon: f64, alpha: f64) -> Result<(), SmcError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SmcError::InvalidQuery(format!("epsilon {epsilon} outside (0,1)")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SmcError::InvalidQuery(format!("alpha {alpha} outside (0,1)")));
    }
    Ok(())
}

/// Unrounded Chernoff–Hoeffding sample size `ln(2/alpha) / (2 epsilon^2)`.
pub fn required_samples_raw(epsilon: f64, alpha: f64) -> f64 {
    (2.0 / alpha).ln() / (2.0 * epsilon * epsilon)
}

/// Number of runs needed for the `[p - epsilon, p + epsilon]` interval to
/// hold with confidence `1 - alpha`.
pub fn required_samples(epsilon: f64, alpha: f64) -> u64 {
    required_samples_raw(epsilon, alpha).ceil().max(1.0) as u64
}

/// Estimate the probability that one run satisfies its predicate.
///
/// Runs exactly `required_samples(epsilon, alpha)` simulations unless `stop`
/// fires, in which case the estimate is marked partial and reflects only the
/// completed runs.
pub fn estimate_probability<F>(
    run: F,
    epsilon: f64,
    alpha: f64,
    seed: u64,
    stop: Option<&AtomicBool>,
) -> Result<Estimate, SmcError>
where
    F: Fn(StreamRng) -> Result<RunSample<bool>, SmcError> + Sync,
{
    check_prob_params(epsilon, alpha)?;
    let n = required_samples(epsilon, alpha);
    let root = StreamRng::new(seed);
    let mut successes: u64 = 0;
    let mut work: u64 = 0;
    let mut completed: u64 = 0;
    let mut partial = false;
    let mut start = 0u64;
    while start < n {
        if stop.map_or(false, |s| s.load(Ordering::Relaxed)) {
            partial = true;
            break;
        }
        let end = (start + PROB_CHUNK).min(n);
        let chunk: Vec<Result<RunSample<bool>, SmcError>> = (start..end)
            .into_par_iter()
            .map(|i| run(root.split(i)))
            .collect();
        for sample in chunk {
            let sample = sample?;
            successes += sample.value as u64;
            work += sample.work;
            completed += 1;
        }
        start = end;
    }
    let point = if completed == 0 { 0.0 } else { successes as f64 / completed as f64 };
    Ok(Estimate {
        point,
        lo: (point - epsilon).max(0.0),
        hi: (point + epsilon).min(1.0),
        runs: completed,
        work,
        partial,
    })
}

/// Options for [`estimate_mean`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanOpts {
    /// RSEM target in (0,1).
    pub rsem: f64,
    pub min_runs: u64,
    pub max_runs: u64,
}

impl MeanOpts {
    pub fn new(rsem: f64, min_runs: u64, max_runs: u64) -> Result<Self, SmcError> {
        if !(rsem > 0.0 && rsem < 1.0) {
            return Err(SmcError::InvalidQuery(format!("rsem {rsem} outside (0,1)")));
        }
        if min_runs < 2 {
            return Err(SmcError::InvalidQuery("min_runs must be at least 2".into()));
        }
        if max_runs < min_runs {
            return Err(SmcError::InvalidQuery("max_runs must be >= min_runs".into()));
        }
        Ok(MeanOpts { rsem, min_runs, max_runs })
    }
}

/// Estimate a mean reward with RSEM stopping.
///
/// Simulates in batches of [`MEAN_BATCH`], stopping at the first `n >=
/// min_runs` with `RSEM <= rsem`, or at `max_runs`. The interval is
/// `mean ± s/sqrt(n)`. A zero mean never satisfies the RSEM rule and falls
/// through to `max_runs`.
pub fn estimate_mean<F>(run: F, opts: MeanOpts, seed: u64) -> Result<Estimate, SmcError>
where
    F: Fn(StreamRng) -> Result<RunSample<f64>, SmcError> + Sync,
{
    let root = StreamRng::new(seed);
    let mut samples = RunSet::new();
    let mut work: u64 = 0;
    let mut n: u64 = 0;
    loop {
        let end = (n + MEAN_BATCH).min(opts.max_runs);
        let batch: Vec<Result<RunSample<f64>, SmcError>> = (n..end)
            .into_par_iter()
            .map(|i| run(root.split(i)))
            .collect();
        for (offset, sample) in batch.into_iter().enumerate() {
            let sample = sample?;
            if !sample.value.is_finite() {
                return Err(SmcError::NonFiniteReward);
            }
            samples.push(n + offset as u64, sample.value);
            work += sample.work;
        }
        n = end;
        let (count, mean, sd) = samples.summary();
        let sem = sd / (count as f64).sqrt();
        let rsem_met = mean != 0.0 && sem / mean.abs() <= opts.rsem;
        if (n >= opts.min_runs && rsem_met) || n >= opts.max_runs {
            return Ok(Estimate {
                point: mean,
                lo: mean - sem,
                hi: mean + sem,
                runs: n,
                work,
                partial: false,
            });
        }
    }
}

/// Run `n` independent simulations and return the per-run values in run
/// order. Deterministic given the seed.
pub fn simulate_series<F, T>(run: F, n: u64, seed: u64) -> Result<Vec<T>, SmcError>
where
    F: Fn(StreamRng) -> Result<RunSample<T>, SmcError> + Sync,
    T: Send,
{
    if n < 1 {
        return Err(SmcError::InvalidQuery("series length must be at least 1".into()));
    }
    let root = StreamRng::new(seed);
    let results: Vec<Result<RunSample<T>, SmcError>> =
        (0..n).into_par_iter().map(|i| run(root.split(i))).collect();
    results.into_iter().map(|r| r.map(|s| s.value)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bernoulli_runner(p: f64) -> impl Fn(StreamRng) -> Result<RunSample<bool>, SmcError> + Sync {
        move |mut rng: StreamRng| Ok(RunSample { value: rng.bernoulli(p), work: 1 })
    }

    #[test]
    fn sample_sizes_match_the_bound() {
        assert_eq!(required_samples(0.05, 0.05), 738);
        assert_eq!(required_samples(0.01, 0.05), 18_445);
        assert_eq!(required_samples(0.05, 0.01), 1_060);
    }

    #[test]
    fn accuracy_ratio_is_exactly_25() {
        for eps in [0.05, 0.02, 0.1] {
            for alpha in [0.05, 0.01] {
                let ratio = required_samples_raw(eps / 5.0, alpha) / required_samples_raw(eps, alpha);
                assert!((ratio - 25.0).abs() < 1e-9, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn confidence_scaling_is_sublinear() {
        for alpha in [0.01, 0.02, 0.05, 0.1] {
            let ratio = required_samples_raw(0.05, alpha / 5.0) / required_samples_raw(0.05, alpha);
            assert!(ratio <= 2.0, "alpha {alpha}: ratio {ratio}");
            assert!(ratio > 1.0);
        }
    }

    #[test]
    fn sample_size_monotone() {
        let mut prev = 0;
        for eps in [0.2, 0.1, 0.05, 0.02, 0.01] {
            let n = required_samples(eps, 0.05);
            assert!(n >= prev);
            prev = n;
        }
        let mut prev = 0;
        for alpha in [0.2, 0.1, 0.05, 0.02, 0.01] {
            let n = required_samples(0.05, alpha);
            assert!(n >= prev);
            prev = n;
        }
    }

    #[test]
    fn always_true_model() {
        let est = estimate_probability(
            |_rng| Ok(RunSample { value: true, work: 3 }),
            0.1,
            0.05,
            1,
            None,
        )
        .unwrap();
        assert_eq!(est.point, 1.0);
        assert!((est.lo - 0.9).abs() < 1e-12);
        assert_eq!(est.hi, 1.0);
        assert_eq!(est.runs, required_samples(0.1, 0.05));
        assert_eq!(est.work, 3 * est.runs);
        assert!(!est.partial);
    }

    #[test]
    fn fair_coin_point_lands_in_interval_mostly() {
        // binomial coverage: with eps = 0.05, alpha = 0.05 the point must be
        // within [0.45, 0.55] in at least 95% of seeded repetitions
        let mut hits = 0;
        for seed in 0..200 {
            let est = estimate_probability(bernoulli_runner(0.5), 0.05, 0.05, seed, None).unwrap();
            if (est.point - 0.5).abs() <= 0.05 {
                hits += 1;
            }
        }
        assert!(hits >= 190, "only {hits}/200 within the interval");
    }

    #[test]
    fn estimates_are_deterministic() {
        let a = estimate_probability(bernoulli_runner(0.3), 0.05, 0.05, 9, None).unwrap();
        let b = estimate_probability(bernoulli_runner(0.3), 0.05, 0.05, 9, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stop_signal_yields_partial() {
        let stop = AtomicBool::new(true);
        let est =
            estimate_probability(bernoulli_runner(0.5), 0.05, 0.05, 1, Some(&stop)).unwrap();
        assert!(est.partial);
        assert_eq!(est.runs, 0);
    }

    #[test]
    fn constant_reward_stops_at_min_runs() {
        let opts = MeanOpts::new(0.05, 2, 1000).unwrap();
        let est = estimate_mean(
            |_rng| Ok(RunSample { value: 7.0, work: 1 }),
            opts,
            1,
        )
        .unwrap();
        assert_eq!(est.point, 7.0);
        // first batch boundary at or above min_runs
        assert_eq!(est.runs, MEAN_BATCH);
        assert_eq!(est.lo, 7.0);
        assert_eq!(est.hi, 7.0);
    }

    fn noisy_runner(
        mean: f64,
        spread: f64,
    ) -> impl Fn(StreamRng) -> Result<RunSample<f64>, SmcError> + Sync {
        move |mut rng: StreamRng| {
            // symmetric two-point distribution: cv = spread/mean
            let v = if rng.bernoulli(0.5) { mean + spread } else { mean - spread };
            Ok(RunSample { value: v, work: 1 })
        }
    }

    #[test]
    fn tighter_rsem_needs_strictly_more_runs() {
        let loose =
            estimate_mean(noisy_runner(10.0, 2.5), MeanOpts::new(0.02, 2, 5000).unwrap(), 3)
                .unwrap();
        let tight =
            estimate_mean(noisy_runner(10.0, 2.5), MeanOpts::new(0.005, 2, 5000).unwrap(), 3)
                .unwrap();
        assert!(
            tight.runs > loose.runs,
            "expected strictly more runs: {} vs {}",
            tight.runs,
            loose.runs
        );
    }

    #[test]
    fn zero_mean_falls_through_to_max_runs() {
        let est = estimate_mean(
            |mut rng: StreamRng| {
                let v = if rng.bernoulli(0.5) { 1.0 } else { -1.0 };
                Ok(RunSample { value: v, work: 1 })
            },
            MeanOpts::new(0.05, 2, 40).unwrap(),
            5,
        )
        .unwrap();
        assert_eq!(est.runs, 40);
    }

    #[test]
    fn non_finite_reward_is_an_error() {
        let err = estimate_mean(
            |_rng| Ok(RunSample { value: f64::NAN, work: 1 }),
            MeanOpts::new(0.05, 2, 10).unwrap(),
            1,
        )
        .unwrap_err();
        assert_eq!(err, SmcError::NonFiniteReward);
    }

    #[test]
    fn series_deterministic_and_ordered() {
        let f = |mut rng: StreamRng| Ok(RunSample { value: rng.next_f64(), work: 1 });
        let a = simulate_series(f, 30, 11).unwrap();
        let b = simulate_series(f, 30, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        let singleton =
            simulate_series(|_r| Ok(RunSample { value: 42.0, work: 1 }), 1, 0).unwrap();
        assert_eq!(singleton, vec![42.0]);
    }

    #[test]
    fn interval_clamped_to_unit_range() {
        let est = estimate_probability(bernoulli_runner(0.02), 0.05, 0.05, 2, None).unwrap();
        assert!(est.lo >= 0.0);
        assert!(est.hi <= 1.0);
        assert!(est.lo <= est.point && est.point <= est.hi);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(estimate_probability(bernoulli_runner(0.5), 0.0, 0.05, 1, None).is_err());
        assert!(estimate_probability(bernoulli_runner(0.5), 0.05, 1.0, 1, None).is_err());
        assert!(MeanOpts::new(0.05, 1, 10).is_err());
        assert!(MeanOpts::new(0.05, 5, 4).is_err());
    }

    #[test]
    fn bernoulli_coverage_at_three_probabilities() {
        // interval [p_hat - eps, p_hat + eps] must contain p in at least
        // (1 - alpha - slack) of repetitions
        let (eps, alpha) = (0.05, 0.05);
        for p in [0.1, 0.5, 0.9] {
            let mut covered = 0;
            for seed in 0..200 {
                let est =
                    estimate_probability(bernoulli_runner(p), eps, alpha, 1000 + seed, None)
                        .unwrap();
                if est.lo <= p && p <= est.hi {
                    covered += 1;
                }
            }
            let rate = covered as f64 / 200.0;
            assert!(rate >= 1.0 - alpha - 0.02, "p={p}: coverage {rate}");
        }
    }
}
