//! Laplace and Exponential mechanisms plus the post-processing helpers applied
//! to released values.

use rand::Rng;

use super::DpError;

/// Draws Laplace(0, `scale`) noise by inverse CDF from a 64-bit uniform source.
///
/// A zero scale is an exact passthrough (no noise), which keeps seeded tests
/// and the large-epsilon limit well defined.
pub fn laplace_noise<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64, DpError> {
    if scale.is_nan() || scale < 0.0 {
        return Err(DpError::InvalidScale(scale));
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let inner = 1.0 - 2.0 * u.abs();
        if inner > 0.0 {
            return Ok(-scale * u.signum() * inner.ln());
        }
        // u landed exactly on ±0.5 (probability ~2^-53): redraw.
    }
}

/// The Laplace Mechanism: `value + Lap(0, scale)`.
pub fn laplace<R: Rng + ?Sized>(value: f64, scale: f64, rng: &mut R) -> Result<f64, DpError> {
    Ok(value + laplace_noise(scale, rng)?)
}

/// The Exponential Mechanism: selects an index with probability proportional
/// to `exp(epsilon * score / (2 * sensitivity))`.
///
/// Weights are computed after shifting scores by their maximum so the
/// exponentials never overflow. On an exact cumulative-weight boundary the
/// lower index wins, which makes seeded runs reproducible.
pub fn exponential_select<R: Rng + ?Sized>(
    scores: &[f64],
    epsilon: f64,
    sensitivity: f64,
    rng: &mut R,
) -> Result<usize, DpError> {
    if scores.is_empty() {
        return Err(DpError::EmptyScores);
    }
    if sensitivity.is_nan() || sensitivity <= 0.0 {
        return Err(DpError::InvalidSensitivity(sensitivity));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(DpError::InvalidEpsilon(epsilon));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores
        .iter()
        .map(|&s| (epsilon * (s - max) / (2.0 * sensitivity)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let draw = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if draw <= acc {
            return Ok(i);
        }
    }
    Ok(scores.len() - 1)
}

/// Post-processing for noisy counts: round to the nearest integer, clamp at zero.
pub fn round_nonneg(value: f64) -> u64 {
    if value <= 0.0 {
        0
    } else {
        value.round() as u64
    }
}

/// Post-processing for noisy proportions: clamp into [0, 1].
pub fn clamp_unit(value: f64) -> f64 {
    value.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_scale_is_passthrough() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(laplace(42.5, 0.0, &mut rng).unwrap(), 42.5);
    }

    #[test]
    fn negative_scale_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            laplace(0.0, -1.0, &mut rng),
            Err(DpError::InvalidScale(_))
        ));
    }

    #[test]
    fn empty_scores_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            exponential_select(&[], 1.0, 1.0, &mut rng),
            Err(DpError::EmptyScores)
        ));
        assert!(matches!(
            exponential_select(&[1.0], 1.0, 0.0, &mut rng),
            Err(DpError::InvalidSensitivity(_))
        ));
    }

    #[test]
    fn large_epsilon_picks_max_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let scores = [0.2, 0.9, 0.1];
        for _ in 0..200 {
            let i = exponential_select(&scores, 1e6, 1.0, &mut rng).unwrap();
            assert_eq!(i, 1);
        }
    }

    #[test]
    fn post_processing() {
        assert_eq!(round_nonneg(-3.2), 0);
        assert_eq!(round_nonneg(2.5), 3);
        assert_eq!(round_nonneg(2.4), 2);
        assert_eq!(clamp_unit(1.7), 1.0);
        assert_eq!(clamp_unit(-0.2), 0.0);
        assert_eq!(clamp_unit(0.99), 0.99);
    }
}
