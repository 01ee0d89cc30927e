use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Benchmark, TrainDomain};

pub const MIN_RESAMPLES: usize = 100;

/// Per-instance correctness of one condition on one benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceOutcomes {
    pub model: String,
    pub train_domain: TrainDomain,
    pub condition: String,
    pub benchmark: Benchmark,
    /// 1 for correct, 0 for incorrect.
    pub outcomes: Vec<u8>,
}

impl InstanceOutcomes {
    pub fn accuracy(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.correct() as f64 / self.outcomes.len() as f64
    }

    fn correct(&self) -> u64 {
        self.outcomes.iter().map(|&o| o as u64).sum()
    }

    /// `correct` ones among `n` instances at positions drawn by `seed`.
    ///
    /// Two vectors built with the same seed share their leading positions, so
    /// the better one answers every instance the worse one does.
    pub fn synthetic(
        model: &str,
        train_domain: TrainDomain,
        condition: &str,
        benchmark: Benchmark,
        n: usize,
        correct: usize,
        seed: u64,
    ) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut outcomes = vec![0u8; n];
        for &i in order.iter().take(correct.min(n)) {
            outcomes[i] = 1;
        }
        InstanceOutcomes {
            model: model.to_string(),
            train_domain,
            condition: condition.to_string(),
            benchmark,
            outcomes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub comparison: String,
    pub mean_diff_pp: f64,
    pub ci_low_pp: f64,
    pub ci_high_pp: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub significant: bool,
}

/// FNV-1a, used to derive a stable stream id from the comparison label.
fn stream_id(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Linear interpolation between closest ranks of a sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile 95% interval on `100 * (mean(a) - mean(b))` under paired
/// resampling of instances.
///
/// The generator is keyed on `seed` and on the comparison label, so results
/// do not depend on the order comparisons are run in.
pub fn paired_bootstrap_ci(
    a: &InstanceOutcomes,
    b: &InstanceOutcomes,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult, AnalyticsError> {
    let n = a.outcomes.len();
    if n != b.outcomes.len() {
        return Err(AnalyticsError::LengthMismatch {
            a: n,
            b: b.outcomes.len(),
        });
    }
    if n < 2 {
        return Err(AnalyticsError::TooFewInstances(n));
    }
    if n_resamples < MIN_RESAMPLES {
        return Err(AnalyticsError::TooFewResamples(n_resamples));
    }
    if let Some(bad) = a.outcomes.iter().chain(&b.outcomes).find(|&&o| o > 1) {
        return Err(AnalyticsError::InvalidRecord {
            key: format!("{}/{}", a.condition, b.condition),
            reason: format!("outcome {bad} is not 0 or 1"),
        });
    }
    let comparison = format!(
        "{}/{}/{}: {} vs {}",
        a.model, a.train_domain, a.benchmark, a.condition, b.condition
    );
    // Per-instance difference in {-1, 0, 1}; integer sums keep the statistic exact.
    let diff: Vec<i64> = a
        .outcomes
        .iter()
        .zip(&b.outcomes)
        .map(|(&x, &y)| x as i64 - y as i64)
        .collect();
    let scale = 100.0 / n as f64;
    let observed = diff.iter().sum::<i64>() as f64 * scale;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(&comparison));
    let mut stats: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let total: i64 = (0..n).map(|_| diff[rng.gen_range(0..n)]).sum();
            total as f64 * scale
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let ci_low_pp = percentile(&stats, 0.025);
    let ci_high_pp = percentile(&stats, 0.975);
    Ok(BootstrapResult {
        comparison,
        mean_diff_pp: observed,
        ci_low_pp,
        ci_high_pp,
        n_resamples,
        seed,
        significant: !(ci_low_pp <= 0.0 && 0.0 <= ci_high_pp),
    })
}
