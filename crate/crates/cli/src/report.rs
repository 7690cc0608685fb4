//! Report serialization: CSV with a summary footer, plus a plain-text table
//! renderer. The column set is documented in `docs/report-format.md`; a test
//! keeps the two in sync.

use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::metrics::{MetricsReport, QueryMetrics};
use crate::smccompare::SmcCompareRow;

pub const WORKLOAD_HEADER: &str = "query_index,aggregation,dims,exact,federated,rel_error,refused,fed_micros,baseline_micros,pruned_baseline_micros,speedup,speedup_vs_pruned,clusters_read_frac,clusters_read_total,fallback_providers";

pub const SMC_HEADER: &str =
    "query_index,mode,rep,value,exact,noise_abs_total,noise_scale_max,noise_var_total,wall_micros";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes one row per query plus `#`-prefixed summary footer lines.
pub fn write_workload_csv(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(WORKLOAD_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.query_index,
            r.aggregation,
            r.dims,
            r.exact,
            r.federated,
            fmt_opt(r.rel_error),
            r.refused,
            r.fed_micros,
            r.baseline_micros,
            r.pruned_baseline_micros,
            r.speedup(),
            r.speedup_vs_pruned(),
            r.clusters_read_frac,
            r.clusters_read_total,
            r.fallback_providers,
        ));
    }
    out.push_str(&format!(
        "# mean_rel_error={}\n",
        fmt_opt(report.mean_rel_error())
    ));
    out.push_str(&format!(
        "# p90_rel_error={}\n",
        fmt_opt(report.percentile_rel_error(0.9))
    ));
    out.push_str(&format!("# mean_speedup={}\n", report.mean_speedup()));
    out.push_str(&format!("# undefined={}\n", report.undefined_count()));
    out.push_str(&format!("# refused={}\n", report.refused_count()));
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Reads back a workload CSV (summary footer lines are skipped).
pub fn read_workload_csv(path: &Path) -> Result<MetricsReport> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == WORKLOAD_HEADER => {}
        other => bail!("unrecognized report header: {other:?}"),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            bail!("line {}: expected 15 fields, got {}", i + 2, f.len());
        }
        let parse_err = |what: &str| format!("line {}: bad {what}", i + 2);
        rows.push(QueryMetrics {
            query_index: f[0].parse().with_context(|| parse_err("query_index"))?,
            aggregation: f[1].to_string(),
            dims: f[2].parse().with_context(|| parse_err("dims"))?,
            exact: f[3].parse().with_context(|| parse_err("exact"))?,
            federated: f[4].parse().with_context(|| parse_err("federated"))?,
            rel_error: if f[5].is_empty() {
                None
            } else {
                Some(f[5].parse().with_context(|| parse_err("rel_error"))?)
            },
            refused: f[6].parse().with_context(|| parse_err("refused"))?,
            fed_micros: f[7].parse().with_context(|| parse_err("fed_micros"))?,
            baseline_micros: f[8].parse().with_context(|| parse_err("baseline_micros"))?,
            pruned_baseline_micros: f[9]
                .parse()
                .with_context(|| parse_err("pruned_baseline_micros"))?,
            clusters_read_frac: f[12]
                .parse()
                .with_context(|| parse_err("clusters_read_frac"))?,
            clusters_read_total: f[13]
                .parse()
                .with_context(|| parse_err("clusters_read_total"))?,
            fallback_providers: f[14]
                .parse()
                .with_context(|| parse_err("fallback_providers"))?,
        });
    }
    Ok(MetricsReport { rows })
}

pub fn write_smc_csv(rows: &[SmcCompareRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(SMC_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.query_index,
            r.mode,
            r.rep,
            r.value,
            r.exact,
            r.noise_abs_total,
            r.noise_scale_max,
            r.noise_var_total,
            r.wall_micros,
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Renders a workload report as an aligned text table with the summary lines
/// underneath.
pub fn render_workload_table(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>5} {:>6} {:>4} {:>14} {:>14} {:>10} {:>8} {:>10} {:>10}\n",
        "query", "agg", "dims", "exact", "federated", "rel_err", "refused", "speedup", "reads"
    ));
    for r in &report.rows {
        out.push_str(&format!(
            "{:>5} {:>6} {:>4} {:>14.2} {:>14.2} {:>10} {:>8} {:>10.2} {:>10.3}\n",
            r.query_index,
            r.aggregation,
            r.dims,
            r.exact,
            r.federated,
            r.rel_error
                .map(|e| format!("{e:.4}"))
                .unwrap_or_else(|| "-".into()),
            r.refused,
            r.speedup(),
            r.clusters_read_frac,
        ));
    }
    out.push_str(&format!(
        "mean_rel_error={} p90_rel_error={} mean_speedup={:.2} undefined={} refused={}\n",
        fmt_opt(report.mean_rel_error()),
        fmt_opt(report.percentile_rel_error(0.9)),
        report.mean_speedup(),
        report.undefined_count(),
        report.refused_count(),
    ));
    out
}
