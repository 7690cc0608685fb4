//! Distributional checks of the private sampling and the estimator.

use fedaqp_core::sampling::{
    em_sampling, hansen_hurwitz, sampling_probabilities, ReplacementMode, SamplingPlan,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn first_draw_frequencies_match_em_weights() {
    let r_hat = vec![0.1, 0.2, 0.7];
    let plan = SamplingPlan::new(vec![0, 1, 2], r_hat, 1, 100).unwrap();
    let eps_s = 1.0;
    let dp = 1.0 / 110.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let draws = 100_000usize;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        let sel = em_sampling(&plan, eps_s, dp, ReplacementMode::WithoutReplacement, &mut rng)
            .unwrap();
        counts[sel[0]] += 1;
    }
    let weights: Vec<f64> = plan
        .probabilities
        .iter()
        .map(|&p| (eps_s * p / (2.0 * dp)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let tv: f64 = counts
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| (c as f64 / draws as f64 - w / z).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn uniform_scores_sample_uniformly() {
    let plan = SamplingPlan::new((0..5).collect(), vec![0.2; 5], 1, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let draws = 100_000usize;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        let sel =
            em_sampling(&plan, 2.0, 1.0 / 110.0, ReplacementMode::WithoutReplacement, &mut rng)
                .unwrap();
        counts[sel[0]] += 1;
    }
    let expected = draws as f64 / 5.0;
    let sigma = (draws as f64 * 0.2 * 0.8).sqrt();
    for &c in &counts {
        assert!((c as f64 - expected).abs() < 3.0 * sigma);
    }
}

/// Hansen-Hurwitz is unbiased under exact pps draws: the Monte-Carlo mean of
/// single-draw estimates converges to the total of the per-cluster answers.
#[test]
fn hansen_hurwitz_unbiased_under_exact_pps() {
    // fixed 8-cluster instance; probabilities deliberately not proportional
    // to the answers so the estimator has real variance
    let answers = [12.0, 40.0, 7.0, 90.0, 23.0, 55.0, 31.0, 2.0];
    let r_hat = [0.10, 0.22, 0.05, 0.33, 0.08, 0.12, 0.07, 0.03];
    let p = sampling_probabilities(&r_hat).unwrap();
    let total: f64 = answers.iter().sum();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let runs = 100_000usize;
    let mut acc = 0.0;
    for _ in 0..runs {
        // exact pps single draw (no EM): inverse-CDF over p
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut idx = p.len() - 1;
        for (i, &pi) in p.iter().enumerate() {
            cum += pi;
            if u < cum {
                idx = i;
                break;
            }
        }
        acc += hansen_hurwitz(&[answers[idx]], &[p[idx]]).unwrap();
    }
    let mc_mean = acc / runs as f64;
    let rel = (mc_mean - total).abs() / total;
    assert!(rel < 0.01, "MC mean {mc_mean} vs total {total} (rel {rel})");
}

#[test]
fn replacement_modes_differ_only_in_duplicates() {
    let plan = SamplingPlan::new((0..4).collect(), vec![0.25; 4], 4, 100).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let without =
        em_sampling(&plan, 1.0, 1.0 / 110.0, ReplacementMode::WithoutReplacement, &mut rng)
            .unwrap();
    assert_eq!(without, vec![0, 1, 2, 3]);
    let mut saw_duplicate = false;
    for _ in 0..200 {
        let with =
            em_sampling(&plan, 1.0, 1.0 / 110.0, ReplacementMode::WithReplacement, &mut rng)
                .unwrap();
        assert_eq!(with.len(), 4);
        let mut d = with.clone();
        d.dedup();
        if d.len() < 4 {
            saw_duplicate = true;
            break;
        }
    }
    assert!(saw_duplicate, "with-replacement never repeated a cluster");
}
