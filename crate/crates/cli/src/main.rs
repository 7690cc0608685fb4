//! Command-line harness for the federated approximate-query engine.

use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedaqp_core::datamodel::{Aggregation, ClusterOrder};
use fedaqp_core::federation::{
    aggregator_from_config, provider_from_config, serve_aggregator, serve_provider, NodeConfig,
};

use fedaqp_cli::attack::{nbc_attack, AttackConfig, Composition};
use fedaqp_cli::datagen::{adult_like_preset, ColumnSpec, DataSpec, ADULT_LIKE_ROWS};
use fedaqp_cli::report::{
    read_workload_csv, render_workload_table, write_smc_csv, write_workload_csv,
};
use fedaqp_cli::setup::{
    analyst_accountant, build_meta, ingest, load_federation, FederationParams,
};
use fedaqp_cli::smccompare::{run_comparison, summarize};
use fedaqp_cli::workload::{
    approximation_trigger, generate_workload, run_workload, WorkloadSpec,
};

#[derive(Parser)]
#[command(
    name = "fedaqp",
    about = "Private approximate range queries over a data federation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Args)]
struct FederationArgs {
    /// Per-query privacy budget epsilon (decimal)
    #[arg(long, default_value = "1")]
    epsilon: String,
    /// Per-query failure probability delta (decimal)
    #[arg(long, default_value = "1e-3")]
    delta: String,
    /// Epsilon split across summary,sampling,estimate steps
    #[arg(long, default_value = "0.1,0.1,0.8")]
    hp: String,
    /// Approximation trigger: minimum covered clusters per provider
    #[arg(long, default_value_t = 10)]
    n_min: usize,
    /// Release through secure aggregation (one perturbation per query)
    #[arg(long, default_value_t = false)]
    smc: bool,
    /// Seed for all randomized steps
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl FederationArgs {
    fn params(&self) -> Result<FederationParams> {
        let hp: Vec<String> = self.hp.split(',').map(str::to_string).collect();
        if hp.len() != 3 {
            bail!("--hp must be three comma-separated weights");
        }
        FederationParams::parse(
            &self.epsilon,
            &self.delta,
            &[hp[0].clone(), hp[1].clone(), hp[2].clone()],
            self.n_min,
            self.smc,
            self.seed,
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic data and write per-provider cluster directories
    Ingest {
        /// Output directory (provider_0, provider_1, ... created inside)
        #[arg(long)]
        out: PathBuf,
        /// Use the six-dimension Adult-like preset (400k rows)
        #[arg(long, default_value_t = false)]
        preset: bool,
        /// Row count (preset default: 400000)
        #[arg(long)]
        rows: Option<usize>,
        /// Column specs name:size:skew (ignored with --preset)
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        #[arg(long, default_value_t = 4)]
        providers: usize,
        /// Cluster capacity in rows (overrides --capacity-pct)
        #[arg(long)]
        capacity: Option<usize>,
        /// Cluster capacity as a percent of per-provider rows
        #[arg(long, default_value_t = 1.0)]
        capacity_pct: f64,
        /// Cluster layout: sorted (by first dimension) or insertion
        #[arg(long, default_value = "sorted")]
        order: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Build and persist metadata for every provider directory
    BuildMeta {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
    },
    /// Serve one provider node over TCP (config via --config or FEDAQP_CONFIG)
    ServeProvider {
        #[arg(long, env = "FEDAQP_CONFIG")]
        config: PathBuf,
    },
    /// Serve the aggregator over TCP (config via --config or FEDAQP_CONFIG)
    ServeAggregator {
        #[arg(long, env = "FEDAQP_CONFIG")]
        config: PathBuf,
    },
    /// Run a random workload and report accuracy and speed-up
    RunWorkload {
        #[arg(long)]
        data: PathBuf,
        /// Queries in the workload
        #[arg(long, default_value_t = 50)]
        m: usize,
        /// Dimensions per query
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// count or sum
        #[arg(long, default_value = "count")]
        agg: String,
        /// Sampling rate in (0,1)
        #[arg(long, default_value_t = 0.2)]
        sr: f64,
        /// Minimum interval width as a fraction of the domain
        #[arg(long, default_value_t = 0.3)]
        min_width: f64,
        /// Analyst total epsilon budget
        #[arg(long, default_value = "1000000")]
        xi: String,
        /// Analyst total delta budget
        #[arg(long, default_value = "0.5")]
        psi: String,
        /// Only run queries that trigger approximation everywhere
        #[arg(long, default_value_t = true)]
        require_approximation: bool,
        #[command(flatten)]
        federation: FederationArgs,
        /// Report destination (CSV)
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or table (stdout)
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Run the naive-Bayes inference attack through the federation
    Attack {
        #[arg(long)]
        data: PathBuf,
        /// Sensitive dimension to predict
        #[arg(long)]
        sa_dim: String,
        /// Quasi-identifier dimensions
        #[arg(long, value_delimiter = ',')]
        qi_dims: Vec<String>,
        /// sequential, advanced, or coalition
        #[arg(long, default_value = "sequential")]
        composition: String,
        /// Attacker total epsilon budget
        #[arg(long, default_value = "1")]
        xi: String,
        /// Attacker total delta budget
        #[arg(long, default_value = "1e-6")]
        psi: String,
        #[arg(long, default_value_t = 0.2)]
        sr: f64,
        /// Also run against a noiseless oracle as a sanity floor
        #[arg(long, default_value_t = false)]
        with_noiseless: bool,
        #[command(flatten)]
        federation: FederationArgs,
    },
    /// Compare plain and secure-aggregation release noise and timing
    SmcCompare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        queries: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 0.2)]
        sr: f64,
        #[command(flatten)]
        federation: FederationArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretty-print a workload report CSV
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

/// Writes to stdout, swallowing broken pipes so `fedaqp ... | head` exits
/// cleanly instead of panicking mid-print.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn parse_aggregation(text: &str) -> Result<Aggregation> {
    match text {
        "count" => Ok(Aggregation::Count),
        "sum" => Ok(Aggregation::Sum),
        other => bail!("unknown aggregation `{other}` (count|sum)"),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ingest {
            out,
            preset,
            rows,
            columns,
            providers,
            capacity,
            capacity_pct,
            order,
            seed,
        } => {
            let spec = if preset {
                adult_like_preset(rows.unwrap_or(ADULT_LIKE_ROWS), seed)
            } else {
                if columns.is_empty() {
                    bail!("--columns required without --preset");
                }
                let parsed: Result<Vec<ColumnSpec>, String> =
                    columns.iter().map(|c| ColumnSpec::parse(c)).collect();
                DataSpec {
                    rows: rows.unwrap_or(100_000),
                    columns: parsed.map_err(|e| anyhow::anyhow!(e))?,
                    seed,
                }
            };
            let order = match order.as_str() {
                "sorted" => ClusterOrder::SortedByFirstDim,
                "insertion" => ClusterOrder::Insertion,
                other => bail!("unknown order `{other}` (sorted|insertion)"),
            };
            let capacity = ingest(&spec, providers, capacity, capacity_pct, order, &out)?;
            emit(&format!(
                "ingested {} rows into {} providers under {} (cluster capacity {})\n",
                spec.rows,
                providers,
                out.display(),
                capacity
            ));
        }
        Command::BuildMeta { data, n_min } => {
            let n = build_meta(&data, n_min)?;
            emit(&format!(
                "metadata built for {n} providers under {}\n",
                data.display()
            ));
        }
        Command::ServeProvider { config } => {
            let cfg = NodeConfig::from_file(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let node = provider_from_config(&cfg)?;
            let listener = TcpListener::bind(&cfg.listen)
                .with_context(|| format!("binding {}", cfg.listen))?;
            println!("provider {:?} listening on {}", cfg.provider_id, cfg.listen);
            serve_provider(listener, node, cfg.timeout())?;
        }
        Command::ServeAggregator { config } => {
            let cfg = NodeConfig::from_file(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let (aggregator, accountant) = aggregator_from_config(&cfg)?;
            let listener = TcpListener::bind(&cfg.listen)
                .with_context(|| format!("binding {}", cfg.listen))?;
            println!("aggregator listening on {}", cfg.listen);
            serve_aggregator(listener, aggregator, accountant, cfg.timeout())?;
        }
        Command::RunWorkload {
            data,
            m,
            n,
            agg,
            sr,
            min_width,
            xi,
            psi,
            require_approximation,
            federation,
            out,
            format,
        } => {
            let params = federation.params()?;
            let mut fed = load_federation(&data, &params)?;
            let spec = WorkloadSpec {
                m,
                dims_per_query: n,
                aggregation: parse_aggregation(&agg)?,
                sr,
                seed: federation.seed,
                min_width_frac: min_width,
                require_approximation,
            };
            let queries = {
                let trigger = approximation_trigger(&fed);
                generate_workload(&spec, &fed.schema, trigger)?
            };
            let mut accountant = analyst_accountant(&xi, &psi)?;
            let report = run_workload(&queries, &mut fed, &mut accountant, sr)?;
            if let Some(path) = &out {
                write_workload_csv(&report, path)?;
                emit(&format!("report written to {}\n", path.display()));
            }
            match format.as_str() {
                "csv" => {
                    if out.is_none() {
                        bail!("--format csv requires --out");
                    }
                }
                "table" => emit(&render_workload_table(&report)),
                other => bail!("unknown format `{other}` (csv|table)"),
            }
        }
        Command::Attack {
            data,
            sa_dim,
            qi_dims,
            composition,
            xi,
            psi,
            sr,
            with_noiseless,
            federation,
        } => {
            let composition = match composition.as_str() {
                "sequential" => Composition::Sequential,
                "advanced" => Composition::Advanced,
                "coalition" => Composition::Coalition,
                other => bail!("unknown composition `{other}`"),
            };
            let config = AttackConfig {
                sa_dim,
                qi_dims,
                composition,
                xi,
                psi,
                sr,
            };
            let params = federation.params()?;
            let outcome = fedaqp_cli::run_attack(&data, &config, &params)?;
            emit(&format!(
                "attack accuracy {:.4} (random guess {:.4}); {} queries, {} answered, {} refused\n",
                outcome.accuracy,
                outcome.random_guess_rate(),
                outcome.n_queries,
                outcome.answered,
                outcome.refused
            ));
            if with_noiseless {
                let probe = load_federation(&data, &params)?;
                let mut oracle = fedaqp_cli::attack::ExactOracle {
                    clusters: &probe.provider_clusters,
                    schema: &probe.schema,
                };
                let rows: Vec<_> = probe
                    .provider_clusters
                    .iter()
                    .flat_map(|set| set.clusters().iter().flat_map(|c| c.rows.iter().cloned()))
                    .collect();
                let noiseless = nbc_attack(&mut oracle, &probe.schema, &rows, &config)?;
                emit(&format!(
                    "noiseless-oracle accuracy {:.4} (sanity floor)\n",
                    noiseless.accuracy
                ));
            }
        }
        Command::SmcCompare {
            data,
            queries,
            reps,
            sr,
            federation,
            out,
        } => {
            let params = federation.params()?;
            let rows = run_comparison(&data, &params, queries, reps, sr, federation.seed)?;
            emit(&summarize(&rows));
            if let Some(path) = out {
                write_smc_csv(&rows, &path)?;
                emit(&format!("rows written to {}\n", path.display()));
            }
        }
        Command::Report { input } => {
            let report = read_workload_csv(&input)?;
            emit(&render_workload_table(&report));
        }
    }
    Ok(())
}
