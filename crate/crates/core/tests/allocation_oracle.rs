//! The greedy allocation against an exhaustive-enumeration oracle.

use fedaqp_core::allocation::{solve_allocation, Allocation, ProviderSummary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Enumerates every feasible assignment under the same degenerate-provider
/// pinning rule and returns the best objective.
fn oracle_best(summaries: &[ProviderSummary], alloc: &Allocation) -> f64 {
    let total: u64 = alloc.total();
    let mut free = Vec::new();
    let mut fixed = 0u64;
    let mut fixed_objective = 0.0f64;
    for s in summaries {
        if s.n_q_noisy <= 2 {
            fixed += s.n_q_noisy.min(1);
            fixed_objective += s.avg_r_noisy * s.n_q_noisy.min(1) as f64;
        } else {
            free.push(s);
        }
    }
    let budget = total - fixed;
    let mut best = f64::NEG_INFINITY;
    fn recurse(free: &[&ProviderSummary], remaining: u64, acc: f64, best: &mut f64) {
        if free.is_empty() {
            if remaining == 0 && acc > *best {
                *best = acc;
            }
            return;
        }
        let s = free[0];
        for x in 2..=s.n_q_noisy - 1 {
            if x > remaining {
                break;
            }
            recurse(
                &free[1..],
                remaining - x,
                acc + s.avg_r_noisy * x as f64,
                best,
            );
        }
    }
    recurse(&free, budget, 0.0, &mut best);
    best + fixed_objective
}

#[test]
fn greedy_equals_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut checked = 0usize;
    for _ in 0..200 {
        let n = 1 + rng.random_range(0..4usize);
        let summaries: Vec<ProviderSummary> = (0..n)
            .map(|provider_id| ProviderSummary {
                provider_id,
                n_q_noisy: rng.random_range(0..=12u64),
                avg_r_noisy: (rng.random::<f64>() * 100.0).round() / 100.0,
            })
            .collect();
        let sr = rng.random_range(0.05..0.95);
        let alloc = solve_allocation(&summaries, sr).unwrap();
        // respect bounds
        for (s, &x) in summaries.iter().zip(&alloc.sample_sizes) {
            if s.n_q_noisy <= 2 {
                assert_eq!(x, s.n_q_noisy.min(1));
            } else {
                assert!(x >= 2 && x < s.n_q_noisy);
            }
        }
        let greedy_objective: f64 = summaries
            .iter()
            .zip(&alloc.sample_sizes)
            .map(|(s, &x)| s.avg_r_noisy * x as f64)
            .sum();
        let best = oracle_best(&summaries, &alloc);
        if best.is_finite() {
            checked += 1;
            assert!(
                (greedy_objective - best).abs() < 1e-9,
                "greedy {greedy_objective} vs oracle {best} on {summaries:?} sr={sr}"
            );
        }
    }
    assert!(checked > 100, "oracle rarely feasible: {checked}");
}
