//! Accuracy and timing metrics for workload runs.

use serde::{Deserialize, Serialize};

/// `|answer - estimation| / answer`; undefined when the exact answer is zero
/// (those queries are reported in a separate bucket and excluded from means).
pub fn relative_error(answer: f64, estimation: f64) -> Option<f64> {
    if answer == 0.0 {
        None
    } else {
        Some((answer - estimation).abs() / answer.abs())
    }
}

/// One executed query's measurements.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub query_index: usize,
    pub aggregation: String,
    pub dims: usize,
    pub exact: f64,
    pub federated: f64,
    /// Empty when the exact answer is zero (undefined bucket) or refused.
    pub rel_error: Option<f64>,
    pub refused: bool,
    pub fed_micros: u128,
    pub baseline_micros: u128,
    pub pruned_baseline_micros: u128,
    /// Max over providers of clusters read / clusters held.
    pub clusters_read_frac: f64,
    /// Total clusters read across providers.
    pub clusters_read_total: usize,
    /// Providers that took the exact fallback path.
    pub fallback_providers: usize,
}

impl QueryMetrics {
    pub fn speedup(&self) -> f64 {
        self.baseline_micros as f64 / (self.fed_micros.max(1)) as f64
    }

    pub fn speedup_vs_pruned(&self) -> f64 {
        self.pruned_baseline_micros as f64 / (self.fed_micros.max(1)) as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<QueryMetrics>,
}

impl MetricsReport {
    pub fn mean_rel_error(&self) -> Option<f64> {
        let errors: Vec<f64> = self.rows.iter().filter_map(|r| r.rel_error).collect();
        if errors.is_empty() {
            None
        } else {
            Some(errors.iter().sum::<f64>() / errors.len() as f64)
        }
    }

    pub fn percentile_rel_error(&self, p: f64) -> Option<f64> {
        let mut errors: Vec<f64> = self.rows.iter().filter_map(|r| r.rel_error).collect();
        if errors.is_empty() {
            return None;
        }
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let idx = ((errors.len() - 1) as f64 * p).round() as usize;
        Some(errors[idx])
    }

    pub fn mean_speedup(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.speedup()).sum::<f64>() / self.rows.len() as f64
    }

    pub fn undefined_count(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| !r.refused && r.rel_error.is_none())
            .count()
    }

    pub fn refused_count(&self) -> usize {
        self.rows.iter().filter(|r| r.refused).count()
    }

    pub fn max_clusters_read_frac(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.clusters_read_frac)
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_formula() {
        assert_eq!(relative_error(100.0, 90.0), Some(0.1));
        assert_eq!(relative_error(50.0, 50.0), Some(0.0));
        assert_eq!(relative_error(0.0, 12.0), None);
    }

    fn row(err: Option<f64>, fed: u128, base: u128) -> QueryMetrics {
        QueryMetrics {
            query_index: 0,
            aggregation: "count".into(),
            dims: 2,
            exact: 1.0,
            federated: 1.0,
            rel_error: err,
            refused: false,
            fed_micros: fed,
            baseline_micros: base,
            pruned_baseline_micros: base / 2,
            clusters_read_frac: 0.1,
            clusters_read_total: 12,
            fallback_providers: 0,
        }
    }

    #[test]
    fn report_summaries() {
        let report = MetricsReport {
            rows: vec![
                row(Some(0.1), 10, 100),
                row(Some(0.3), 10, 50),
                row(None, 10, 80),
            ],
        };
        assert!((report.mean_rel_error().unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(report.undefined_count(), 1);
        assert!((report.mean_speedup() - (10.0 + 5.0 + 8.0) / 3.0).abs() < 1e-12);
        assert_eq!(report.percentile_rel_error(1.0), Some(0.3));
    }
}
