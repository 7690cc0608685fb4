//! Per-analyst privacy-budget accounting.
//!
//! A total budget (xi, psi) is consumed query by query. Charges are tracked as
//! exact rationals so decimal budgets compose without floating drift; across
//! providers a query is charged once (parallel composition over disjoint data).

use serde::{Deserialize, Serialize};

use super::ratio::Ratio;
use super::DpError;

/// Per-query privacy budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    epsilon: Ratio,
    delta: Ratio,
}

impl Budget {
    pub fn new(epsilon: Ratio, delta: Ratio) -> Result<Budget, DpError> {
        if epsilon.is_negative() || epsilon == Ratio::ZERO {
            return Err(DpError::InvalidEpsilon(epsilon.to_f64()));
        }
        if delta.is_negative() || delta >= Ratio::ONE {
            return Err(DpError::InvalidDelta(delta.to_f64()));
        }
        Ok(Budget { epsilon, delta })
    }

    /// Budget from decimal strings, e.g. `Budget::parse("1", "1e-3")`.
    pub fn parse(epsilon: &str, delta: &str) -> Result<Budget, DpError> {
        Budget::new(Ratio::parse_decimal(epsilon)?, Ratio::parse_decimal(delta)?)
    }

    /// Budget from f64 values (exact binary conversion).
    pub fn from_f64(epsilon: f64, delta: f64) -> Result<Budget, DpError> {
        Budget::new(Ratio::from_f64(epsilon)?, Ratio::from_f64(delta)?)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.to_f64()
    }

    pub fn delta(&self) -> f64 {
        self.delta.to_f64()
    }

    pub fn epsilon_exact(&self) -> Ratio {
        self.epsilon
    }

    pub fn delta_exact(&self) -> Ratio {
        self.delta
    }

    /// Splits epsilon across the three release steps per the hyperparameter
    /// weights; the parts sum back to epsilon exactly.
    pub fn split(&self, hp: &HpSplit) -> BudgetSplit {
        let eps_o = self.epsilon.mul(&hp.summary);
        let eps_s = self.epsilon.mul(&hp.sampling);
        let eps_e = self.epsilon.sub(&eps_o).sub(&eps_s);
        BudgetSplit {
            eps_o: eps_o.to_f64(),
            eps_s: eps_s.to_f64(),
            eps_e: eps_e.to_f64(),
            delta: self.delta.to_f64(),
        }
    }
}

/// Hyperparameter weights dividing a query's epsilon between the summary
/// release, the sampling step, and the estimate release. Must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HpSplit {
    summary: Ratio,
    sampling: Ratio,
    estimate: Ratio,
}

impl HpSplit {
    pub fn new(summary: Ratio, sampling: Ratio, estimate: Ratio) -> Result<HpSplit, DpError> {
        let sum = summary.add(&sampling).add(&estimate);
        if sum != Ratio::ONE
            || summary.is_negative()
            || sampling.is_negative()
            || estimate.is_negative()
        {
            return Err(DpError::MalformedBudget(format!(
                "hyperparameter split must be non-negative and sum to 1, got {summary} + {sampling} + {estimate}"
            )));
        }
        Ok(HpSplit {
            summary,
            sampling,
            estimate,
        })
    }

    pub fn parse(summary: &str, sampling: &str, estimate: &str) -> Result<HpSplit, DpError> {
        HpSplit::new(
            Ratio::parse_decimal(summary)?,
            Ratio::parse_decimal(sampling)?,
            Ratio::parse_decimal(estimate)?,
        )
    }

    pub fn weights(&self) -> (f64, f64, f64) {
        (
            self.summary.to_f64(),
            self.sampling.to_f64(),
            self.estimate.to_f64(),
        )
    }
}

impl Default for HpSplit {
    /// The default split: 0.1 to summaries, 0.1 to sampling, 0.8 to estimates.
    fn default() -> Self {
        HpSplit::new(Ratio::new(1, 10), Ratio::new(1, 10), Ratio::new(8, 10)).unwrap()
    }
}

/// A query's epsilon split into the three release steps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BudgetSplit {
    pub eps_o: f64,
    pub eps_s: f64,
    pub eps_e: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositionMode {
    Sequential,
    Advanced,
}

/// Tracks one analyst's consumption against the total budget (xi, psi).
#[derive(Debug, Clone)]
pub struct Accountant {
    total_epsilon: Ratio,
    total_delta: Ratio,
    consumed_epsilon: Ratio,
    consumed_delta: Ratio,
    mode: CompositionMode,
    /// Advanced mode: per-query cap and admissible query count.
    advanced_limit: Option<(Budget, usize)>,
    charges: usize,
}

impl Accountant {
    /// Sequential composition: charges add up until (xi, psi) is reached.
    pub fn sequential(xi: Ratio, psi: Ratio) -> Accountant {
        Accountant {
            total_epsilon: xi,
            total_delta: psi,
            consumed_epsilon: Ratio::ZERO,
            consumed_delta: Ratio::ZERO,
            mode: CompositionMode::Sequential,
            advanced_limit: None,
            charges: 0,
        }
    }

    /// Advanced composition over a declared number of queries: each query may
    /// spend up to the advanced per-query budget, and at most `n_queries`
    /// charges are admitted.
    pub fn advanced(xi: Ratio, psi: Ratio, n_queries: usize) -> Result<Accountant, DpError> {
        let (eps, delta) = advanced_composition_budget(xi.to_f64(), psi.to_f64(), n_queries);
        let cap = Budget::from_f64(eps, delta)?;
        Ok(Accountant {
            total_epsilon: xi,
            total_delta: psi,
            consumed_epsilon: Ratio::ZERO,
            consumed_delta: Ratio::ZERO,
            mode: CompositionMode::Advanced,
            advanced_limit: Some((cap, n_queries)),
            charges: 0,
        })
    }

    pub fn mode(&self) -> CompositionMode {
        self.mode
    }

    pub fn remaining(&self) -> (f64, f64) {
        match self.mode {
            CompositionMode::Sequential => (
                self.total_epsilon.sub(&self.consumed_epsilon).to_f64(),
                self.total_delta.sub(&self.consumed_delta).to_f64(),
            ),
            CompositionMode::Advanced => {
                let (cap, n) = self.advanced_limit.as_ref().unwrap();
                let left = n.saturating_sub(self.charges) as f64;
                (cap.epsilon() * left, cap.delta() * left)
            }
        }
    }

    pub fn consumed(&self) -> (f64, f64) {
        (
            self.consumed_epsilon.to_f64(),
            self.consumed_delta.to_f64(),
        )
    }

    pub fn charges(&self) -> usize {
        self.charges
    }

    /// Atomic check-and-add of one query's budget. A query touching all
    /// providers' disjoint data is charged exactly once here.
    pub fn charge(&mut self, budget: &Budget) -> Result<(), DpError> {
        let refusal = || {
            let (re, rd) = self.remaining_pair();
            DpError::BudgetExhausted {
                remaining_epsilon: re,
                remaining_delta: rd,
            }
        };
        match self.mode {
            CompositionMode::Sequential => {
                let eps = self.consumed_epsilon.add(&budget.epsilon_exact());
                let del = self.consumed_delta.add(&budget.delta_exact());
                if eps > self.total_epsilon || del > self.total_delta {
                    return Err(refusal());
                }
                self.consumed_epsilon = eps;
                self.consumed_delta = del;
            }
            CompositionMode::Advanced => {
                let (cap, n) = self.advanced_limit.as_ref().unwrap();
                if self.charges >= *n
                    || budget.epsilon_exact() > cap.epsilon_exact()
                    || budget.delta_exact() > cap.delta_exact()
                {
                    return Err(refusal());
                }
                self.consumed_epsilon = self.consumed_epsilon.add(&budget.epsilon_exact());
                self.consumed_delta = self.consumed_delta.add(&budget.delta_exact());
            }
        }
        self.charges += 1;
        Ok(())
    }

    fn remaining_pair(&self) -> (f64, f64) {
        let (e, d) = self.remaining();
        (e.max(0.0), d.max(0.0))
    }
}

/// Per-query budget under advanced composition:
/// `epsilon = xi / (2 * sqrt(2 * n * ln(1/delta)))` with `delta = psi / n`.
/// The logarithm is natural.
pub fn advanced_composition_budget(xi: f64, psi: f64, n_queries: usize) -> (f64, f64) {
    assert!(n_queries >= 1, "advanced composition needs n_queries >= 1");
    let n = n_queries as f64;
    let delta = psi / n;
    let epsilon = xi / (2.0 * (2.0 * n * (1.0 / delta).ln()).sqrt());
    (epsilon, delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_charges_exactly_to_the_limit() {
        let mut acc = Accountant::sequential(Ratio::ONE, Ratio::new(1, 100));
        let b = Budget::parse("0.1", "0").unwrap();
        for i in 0..10 {
            acc.charge(&b).unwrap_or_else(|e| panic!("charge {i}: {e}"));
        }
        let err = acc.charge(&b).unwrap_err();
        match err {
            DpError::BudgetExhausted {
                remaining_epsilon, ..
            } => assert_eq!(remaining_epsilon, 0.0),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        assert_eq!(acc.charges(), 10);
        assert_eq!(acc.consumed().0, 1.0);
    }

    #[test]
    fn delta_budget_enforced() {
        let mut acc = Accountant::sequential(Ratio::from_int(100), Ratio::new(1, 1000));
        let b = Budget::parse("0.1", "1e-3").unwrap();
        acc.charge(&b).unwrap();
        assert!(acc.charge(&b).is_err());
    }

    #[test]
    fn split_sums_back_exactly() {
        let b = Budget::parse("1", "1e-3").unwrap();
        let split = b.split(&HpSplit::default());
        assert_eq!(split.eps_o, 0.1);
        assert_eq!(split.eps_s, 0.1);
        assert_eq!(split.eps_e, 0.8);
        assert!((split.eps_o + split.eps_s + split.eps_e - b.epsilon()).abs() < 1e-15);
        assert!(HpSplit::parse("0.3", "0.3", "0.3").is_err());
    }

    #[test]
    fn advanced_budget_formula() {
        // n = 1: delta = psi, epsilon = xi / (2 sqrt(2 ln(1/psi)))
        let (e, d) = advanced_composition_budget(1.0, 1e-6, 1);
        assert_eq!(d, 1e-6);
        assert!((e - 1.0 / (2.0 * (2.0 * (1e6f64).ln()).sqrt())).abs() < 1e-15);

        let (e, d) = advanced_composition_budget(1.0, 1e-6, 3101);
        assert!((d - 1e-6 / 3101.0).abs() < 1e-22);
        let oracle = 1.0 / (2.0 * (2.0 * 3101.0 * (1.0 / d).ln()).sqrt());
        assert!((e - oracle).abs() < 1e-15);
        assert!((e - 1.3581e-3).abs() < 1e-7);
    }

    #[test]
    fn advanced_beats_sequential_only_past_crossover() {
        let psi = 1e-6;
        // Small query counts: sequential splitting actually gives more epsilon.
        let (adv2, _) = advanced_composition_budget(1.0, psi, 2);
        assert!(adv2 < 0.5);
        // Find the crossover, then the advantage must hold for everything above.
        let mut crossover = None;
        for n in 2..100_000usize {
            let (adv, _) = advanced_composition_budget(1.0, psi, n);
            if adv > 1.0 / n as f64 {
                crossover = Some(n);
                break;
            }
        }
        let crossover = crossover.expect("advanced composition never paid off");
        assert!(crossover < 1000, "crossover unexpectedly late: {crossover}");
        for n in [crossover, 3101, 10_000, 100_000] {
            let (adv, _) = advanced_composition_budget(1.0, psi, n);
            assert!(adv > 1.0 / n as f64, "no advantage at n={n}");
        }
    }

    #[test]
    fn advanced_mode_admits_declared_count() {
        let mut acc = Accountant::advanced(Ratio::ONE, Ratio::new(1, 1_000_000), 5).unwrap();
        let (eps, delta) = advanced_composition_budget(1.0, 1e-6, 5);
        let b = Budget::from_f64(eps, delta).unwrap();
        for _ in 0..5 {
            acc.charge(&b).unwrap();
        }
        assert!(acc.charge(&b).is_err());
        // A charge above the per-query cap is refused outright.
        let mut acc2 = Accountant::advanced(Ratio::ONE, Ratio::new(1, 1_000_000), 5).unwrap();
        let too_big = Budget::from_f64(eps * 2.0, delta).unwrap();
        assert!(acc2.charge(&too_big).is_err());
    }

    #[test]
    fn budget_validation() {
        assert!(Budget::parse("0", "1e-3").is_err());
        assert!(Budget::parse("-1", "1e-3").is_err());
        assert!(Budget::parse("1", "1").is_err());
        assert!(Budget::parse("1", "0").is_ok());
    }
}
