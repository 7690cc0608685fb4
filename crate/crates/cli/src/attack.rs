//! The learning-based inference attack: train a naive-Bayes classifier on
//! COUNT answers and try to predict a sensitive dimension for every row.
//!
//! The attacker's budget is fixed; the number of training queries is
//! `1 + |SA| + |SA| * sum(|QI_i|)`, covering the table size, the class
//! priors, and every (class, quasi-identifier value) cell.

use anyhow::{bail, Result};
use fedaqp_core::datamodel::{
    evaluate_exact, Aggregation, ClusterSet, Interval, RangeQuery, Schema, TensorRow,
};
use fedaqp_core::dpcore::{advanced_composition_budget, Accountant, Budget, Ratio};
use fedaqp_core::federation::MessageBody;
use serde::{Deserialize, Serialize};

use crate::setup::LoadedFederation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// One analyst; the total budget divides evenly across all queries.
    Sequential,
    /// One analyst under the advanced composition theorem.
    Advanced,
    /// A coalition: every query comes from a fresh analyst with the full
    /// budget, answers shared out of band.
    Coalition,
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub sa_dim: String,
    pub qi_dims: Vec<String>,
    pub composition: Composition,
    pub xi: String,
    pub psi: String,
    pub sr: f64,
}

/// Training-query count for the classifier.
pub fn n_queries(sa_size: usize, qi_sizes: &[usize]) -> usize {
    1 + sa_size + sa_size * qi_sizes.iter().sum::<usize>()
}

/// The per-query budget each composition grants.
pub fn per_query_budget(config: &AttackConfig, total_queries: usize) -> Result<Budget> {
    let xi = Ratio::parse_decimal(&config.xi)?;
    let psi = Ratio::parse_decimal(&config.psi)?;
    Ok(match config.composition {
        Composition::Sequential => Budget::new(
            xi.div_int(total_queries as u64),
            psi.div_int(total_queries as u64),
        )?,
        Composition::Advanced => {
            let (eps, delta) =
                advanced_composition_budget(xi.to_f64(), psi.to_f64(), total_queries);
            Budget::from_f64(eps, delta)?
        }
        Composition::Coalition => Budget::new(xi, psi)?,
    })
}

/// Answers COUNT queries; `None` for refusals.
pub trait CountOracle {
    fn count(&mut self, query: &RangeQuery) -> Option<f64>;
}

/// The attacker's view of the federation.
pub struct FederationOracle<'a> {
    fed: &'a mut LoadedFederation,
    accountant: Accountant,
    fresh_budget_per_query: Option<(Ratio, Ratio)>,
    sr: f64,
}

impl<'a> FederationOracle<'a> {
    pub fn new(
        fed: &'a mut LoadedFederation,
        config: &AttackConfig,
        total_queries: usize,
    ) -> Result<FederationOracle<'a>> {
        let xi = Ratio::parse_decimal(&config.xi)?;
        let psi = Ratio::parse_decimal(&config.psi)?;
        let (accountant, fresh) = match config.composition {
            Composition::Sequential => (Accountant::sequential(xi, psi), None),
            Composition::Advanced => (Accountant::advanced(xi, psi, total_queries)?, None),
            Composition::Coalition => (Accountant::sequential(xi, psi), Some((xi, psi))),
        };
        Ok(FederationOracle {
            fed,
            accountant,
            fresh_budget_per_query: fresh,
            sr: config.sr,
        })
    }
}

impl CountOracle for FederationOracle<'_> {
    fn count(&mut self, query: &RangeQuery) -> Option<f64> {
        if let Some((xi, psi)) = self.fresh_budget_per_query {
            // each coalition member is a new analyst
            self.accountant = Accountant::sequential(xi, psi);
        }
        match self
            .fed
            .aggregator
            .handle_query(query, self.sr, &mut self.accountant)
            .body
        {
            MessageBody::Answer { value, .. } => Some(value),
            _ => None,
        }
    }
}

/// Ground-truth oracle: exact evaluation with no privacy, the sanity floor
/// the private federation is measured against.
pub struct ExactOracle<'a> {
    pub clusters: &'a [ClusterSet],
    pub schema: &'a Schema,
}

impl CountOracle for ExactOracle<'_> {
    fn count(&mut self, query: &RangeQuery) -> Option<f64> {
        let bound = query.bind(self.schema).ok()?;
        Some(
            self.clusters
                .iter()
                .map(|set| evaluate_exact(&bound, set.clusters()))
                .sum(),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub accuracy: f64,
    pub n_queries: usize,
    pub answered: usize,
    pub refused: usize,
    pub predictions: usize,
    pub sa_domain: usize,
}

impl AttackOutcome {
    pub fn random_guess_rate(&self) -> f64 {
        1.0 / self.sa_domain as f64
    }
}

/// Runs the attack: issue the training queries through the oracle, fit the
/// conditional tables (negative answers clamp to zero, plus-one smoothing),
/// and predict the sensitive value of every tensor row.
pub fn nbc_attack(
    oracle: &mut dyn CountOracle,
    schema: &Schema,
    rows: &[TensorRow],
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    let sa_idx = schema.dim_index(&config.sa_dim)?;
    let sa_size = schema.dimensions()[sa_idx].domain_size();
    let mut qi_idx = Vec::new();
    let mut qi_sizes = Vec::new();
    for name in &config.qi_dims {
        let idx = schema.dim_index(name)?;
        if idx == sa_idx {
            bail!("sensitive dimension cannot be a quasi-identifier");
        }
        qi_idx.push(idx);
        qi_sizes.push(schema.dimensions()[idx].domain_size());
    }
    if qi_idx.is_empty() {
        bail!("at least one quasi-identifier dimension required");
    }
    let total = n_queries(sa_size, &qi_sizes);

    let mut answered = 0usize;
    let mut refused = 0usize;
    let mut ask = |oracle: &mut dyn CountOracle, q: RangeQuery| -> f64 {
        match oracle.count(&q) {
            Some(v) => {
                answered += 1;
                v.max(0.0)
            }
            None => {
                refused += 1;
                0.0
            }
        }
    };

    let sa_name = config.sa_dim.clone();
    let full_sa = Interval {
        lo: 0,
        hi: sa_size as i64 - 1,
    };
    // table size (kept for protocol fidelity; the argmax is scale-free)
    let _size = ask(
        oracle,
        RangeQuery::new(Aggregation::Count, vec![(sa_name.clone(), full_sa)])?,
    );

    // class priors
    let mut count_y = Vec::with_capacity(sa_size);
    for y in 0..sa_size as i64 {
        let q = RangeQuery::new(
            Aggregation::Count,
            vec![(sa_name.clone(), Interval { lo: y, hi: y })],
        )?;
        count_y.push(ask(oracle, q) + 1.0);
    }

    // per-(class, value) cells for each quasi-identifier dimension
    let mut count_yv: Vec<Vec<Vec<f64>>> = Vec::with_capacity(qi_idx.len());
    for (d, &idx) in qi_idx.iter().enumerate() {
        let dim_name = schema.dimensions()[idx].name().to_string();
        let mut per_y = Vec::with_capacity(sa_size);
        for y in 0..sa_size as i64 {
            let mut per_v = Vec::with_capacity(qi_sizes[d]);
            for v in 0..qi_sizes[d] as i64 {
                let q = RangeQuery::new(
                    Aggregation::Count,
                    vec![
                        (sa_name.clone(), Interval { lo: y, hi: y }),
                        (dim_name.clone(), Interval { lo: v, hi: v }),
                    ],
                )?;
                per_v.push(ask(oracle, q) + 1.0);
            }
            per_y.push(per_v);
        }
        count_yv.push(per_y);
    }
    assert_eq!(answered + refused, total);

    // marginal value counts derive from the cells; no extra queries needed
    let count_v: Vec<Vec<f64>> = (0..qi_idx.len())
        .map(|d| {
            (0..qi_sizes[d])
                .map(|v| (0..sa_size).map(|y| count_yv[d][y][v]).sum())
                .collect()
        })
        .collect();

    // log-score per class for every distinct quasi-identifier combination
    let mut cache: std::collections::HashMap<Vec<u32>, u32> = std::collections::HashMap::new();
    let mut correct = 0usize;
    for row in rows {
        let key: Vec<u32> = qi_idx.iter().map(|&i| row.coords[i]).collect();
        let predicted = *cache.entry(key.clone()).or_insert_with(|| {
            let mut best = (f64::NEG_INFINITY, 0u32);
            for y in 0..sa_size {
                let mut score = count_y[y].ln();
                for d in 0..qi_idx.len() {
                    let v = key[d] as usize;
                    score += count_yv[d][y][v].ln() - count_y[y].ln() - count_v[d][v].ln();
                }
                if score > best.0 {
                    best = (score, y as u32);
                }
            }
            best.1
        });
        if predicted == row.coords[sa_idx] {
            correct += 1;
        }
    }
    Ok(AttackOutcome {
        accuracy: correct as f64 / rows.len().max(1) as f64,
        n_queries: total,
        answered,
        refused,
        predictions: rows.len(),
        sa_domain: sa_size,
    })
}
