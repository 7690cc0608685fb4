//! The allocation phase: providers publish noisy summaries of how much of
//! their data a query covers, and the aggregator turns those summaries into
//! per-provider sample sizes by solving a small box-constrained assignment.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dpcore::{self, DpError};

#[derive(Error, Debug, Clone, PartialEq)]
pub enum AllocationError {
    #[error("sampling rate {0} must lie strictly between 0 and 1")]
    InvalidSamplingRate(f64),
    #[error("at least one provider summary is required")]
    NoProviders,
    #[error(transparent)]
    Dp(#[from] DpError),
}

/// One provider's differentially-private view of a query: the noisy covered
/// cluster count and the noisy average matching proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProviderSummary {
    pub provider_id: usize,
    pub n_q_noisy: u64,
    pub avg_r_noisy: f64,
}

/// Perturbs (N_Q, avg R) with half the summary budget each, then applies the
/// release post-processing: counts round and clamp at zero, proportions clamp
/// into [0, 1].
pub fn perturb_summary<R: Rng + ?Sized>(
    provider_id: usize,
    n_q: usize,
    avg_r: f64,
    eps_o: f64,
    delta_avg: f64,
    rng: &mut R,
) -> Result<ProviderSummary, DpError> {
    if eps_o.is_nan() || eps_o <= 0.0 {
        return Err(DpError::InvalidEpsilon(eps_o));
    }
    let half = eps_o / 2.0;
    let noisy_n = dpcore::laplace(n_q as f64, 1.0 / half, rng)?;
    let noisy_avg = dpcore::laplace(avg_r, delta_avg / half, rng)?;
    Ok(ProviderSummary {
        provider_id,
        n_q_noisy: dpcore::round_nonneg(noisy_n),
        avg_r_noisy: dpcore::clamp_unit(noisy_avg),
    })
}

/// Sample sizes chosen by the aggregator, aligned with the input summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub sample_sizes: Vec<u64>,
    /// Set when the target total had to be clamped into the feasible interval.
    pub feasibility_warning: Option<String>,
}

impl Allocation {
    pub fn total(&self) -> u64 {
        self.sample_sizes.iter().sum()
    }
}

/// Maximizes `sum(avg_r_i * s_i)` subject to `sum(s_i) = round(sr * sum(N_i))`
/// and `2 <= s_i <= N_i - 1`.
///
/// Solved greedily: every provider gets its lower bound, then the remaining
/// budget pours into providers in decreasing avg_r order up to their upper
/// bounds, which attains the integer optimum for this objective. Providers
/// noised down to N_i <= 2 cannot satisfy the bounds; they are pinned to
/// min(N_i, 1) so they still participate, and the difference is redistributed.
pub fn solve_allocation(
    summaries: &[ProviderSummary],
    sr: f64,
) -> Result<Allocation, AllocationError> {
    if summaries.is_empty() {
        return Err(AllocationError::NoProviders);
    }
    if !(sr > 0.0 && sr < 1.0) {
        return Err(AllocationError::InvalidSamplingRate(sr));
    }
    let total_n: u64 = summaries.iter().map(|s| s.n_q_noisy).sum();
    let target = (sr * total_n as f64).round() as u64;

    let mut sizes = vec![0u64; summaries.len()];
    let mut fixed_total = 0u64;
    // Providers with enough clusters to respect the open-interval bounds.
    let mut free: Vec<usize> = Vec::new();
    for (i, s) in summaries.iter().enumerate() {
        if s.n_q_noisy <= 2 {
            sizes[i] = s.n_q_noisy.min(1);
            fixed_total += sizes[i];
        } else {
            free.push(i);
        }
    }
    let lo_total: u64 = 2 * free.len() as u64;
    let hi_total: u64 = free.iter().map(|&i| summaries[i].n_q_noisy - 1).sum();

    let free_target = target.saturating_sub(fixed_total);
    let clamped = free_target.clamp(lo_total, hi_total);
    let feasibility_warning = if clamped != free_target || target < fixed_total {
        Some(format!(
            "target total {target} outside feasible interval [{}, {}]; clamped",
            fixed_total + lo_total,
            fixed_total + hi_total
        ))
    } else {
        None
    };

    // Highest average proportion first; provider id breaks ties.
    free.sort_by(|&a, &b| {
        summaries[b]
            .avg_r_noisy
            .partial_cmp(&summaries[a].avg_r_noisy)
            .unwrap()
            .then(summaries[a].provider_id.cmp(&summaries[b].provider_id))
    });
    for &i in &free {
        sizes[i] = 2;
    }
    let mut remaining = clamped - lo_total;
    for &i in &free {
        let room = summaries[i].n_q_noisy - 1 - sizes[i];
        let take = remaining.min(room);
        sizes[i] += take;
        remaining -= take;
        if remaining == 0 {
            break;
        }
    }
    Ok(Allocation {
        sample_sizes: sizes,
        feasibility_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn summary(id: usize, n: u64, avg: f64) -> ProviderSummary {
        ProviderSummary {
            provider_id: id,
            n_q_noisy: n,
            avg_r_noisy: avg,
        }
    }

    #[test]
    fn frozen_two_provider_example() {
        // avg = (0.8, 0.2), N = (10, 10), sr = 0.5 -> total 10 -> (8, 2)
        let sums = vec![summary(0, 10, 0.8), summary(1, 10, 0.2)];
        let alloc = solve_allocation(&sums, 0.5).unwrap();
        assert_eq!(alloc.sample_sizes, vec![8, 2]);
        assert!(alloc.feasibility_warning.is_none());
        let objective: f64 = sums
            .iter()
            .zip(&alloc.sample_sizes)
            .map(|(s, &x)| s.avg_r_noisy * x as f64)
            .sum();
        assert!((objective - 6.8).abs() < 1e-12);
    }

    #[test]
    fn equal_averages_resolve_by_provider_id() {
        let sums = vec![summary(0, 10, 0.5), summary(1, 10, 0.5)];
        let alloc = solve_allocation(&sums, 0.5).unwrap();
        assert_eq!(alloc.total(), 10);
        // provider 0 wins the tie
        assert!(alloc.sample_sizes[0] >= alloc.sample_sizes[1]);
        assert_eq!(alloc.sample_sizes, vec![8, 2]);
    }

    #[test]
    fn budget_exactness_and_fairness() {
        let sums = vec![
            summary(0, 12, 0.3),
            summary(1, 9, 0.9),
            summary(2, 12, 0.1),
            summary(3, 7, 0.55),
        ];
        let alloc = solve_allocation(&sums, 0.4).unwrap();
        let target = (0.4 * 40.0f64).round() as u64;
        assert_eq!(alloc.total(), target);
        // identical bounds, higher average -> at least as many samples
        assert!(alloc.sample_sizes[0] >= alloc.sample_sizes[2]);
        for (s, &x) in sums.iter().zip(&alloc.sample_sizes) {
            assert!(x >= 2 && x < s.n_q_noisy);
        }
    }

    #[test]
    fn degenerate_providers_stay_in() {
        let sums = vec![summary(0, 0, 0.9), summary(1, 2, 0.8), summary(2, 20, 0.5)];
        let alloc = solve_allocation(&sums, 0.5).unwrap();
        assert_eq!(alloc.sample_sizes[0], 0);
        assert_eq!(alloc.sample_sizes[1], 1);
        assert!(alloc.sample_sizes[2] >= 2);
    }

    #[test]
    fn infeasible_targets_clamp_with_warning() {
        // sr near 1 pushes the target above sum(N-1)
        let sums = vec![summary(0, 4, 0.5), summary(1, 4, 0.5)];
        let alloc = solve_allocation(&sums, 0.99).unwrap();
        assert_eq!(alloc.sample_sizes, vec![3, 3]);
        assert!(alloc.feasibility_warning.is_some());
        // tiny sr pushes below 2 per provider
        let alloc = solve_allocation(&sums, 0.01).unwrap();
        assert_eq!(alloc.sample_sizes, vec![2, 2]);
        assert!(alloc.feasibility_warning.is_some());
        assert!(solve_allocation(&sums, 0.0).is_err());
        assert!(solve_allocation(&sums, 1.0).is_err());
        assert!(solve_allocation(&[], 0.5).is_err());
    }

    #[test]
    fn summary_noise_variance_matches_half_budget_scale() {
        // each of the two released values gets eps_o / 2, so the count noise
        // is Laplace at scale 2 / eps_o with variance 2 * (2 / eps_o)^2
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let eps_o = 0.1;
        let n = 20_000usize;
        // large true count keeps the zero clamp from truncating the noise
        let true_n = 1_000_000u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let s = perturb_summary(0, true_n as usize, 0.5, eps_o, 0.0909, &mut rng).unwrap();
            let noise = s.n_q_noisy as f64 - true_n as f64;
            sum += noise;
            sumsq += noise * noise;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        let target = 2.0 * (2.0 / eps_o) * (2.0 / eps_o);
        assert!(
            (var - target).abs() / target < 0.06,
            "variance {var} vs {target}"
        );
    }

    #[test]
    fn summary_perturbation_post_processing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // effectively infinite budget: exact passthrough
        let s = perturb_summary(1, 100, 0.37, f64::INFINITY, 0.0909, &mut rng).unwrap();
        assert_eq!(s.n_q_noisy, 100);
        assert_eq!(s.avg_r_noisy, 0.37);
        // heavy noise: clamps hold
        for _ in 0..200 {
            let s = perturb_summary(1, 3, 0.99, 0.05, 0.0909, &mut rng).unwrap();
            assert!(s.avg_r_noisy <= 1.0 && s.avg_r_noisy >= 0.0);
        }
        assert!(perturb_summary(0, 1, 0.5, 0.0, 0.1, &mut rng).is_err());
    }
}
