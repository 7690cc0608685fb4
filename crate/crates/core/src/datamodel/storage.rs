//! On-disk provider layout.
//!
//! A provider directory holds a `manifest` plus one file per cluster:
//!
//! ```text
//! manifest            header: capacity, cluster count, measure name,
//!                     row field order, and per-dimension encoding tables
//! cluster_0000.rows   one row per line: comma-separated ranks, measure last
//! cluster_0001.rows
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{Cluster, ClusterSet, Dimension, Schema, TensorRow};

#[derive(Error, Debug)]
pub enum StorageError {
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest at line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("malformed cluster file {path} at line {line}: {reason}")]
    BadClusterFile {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Data(#[from] super::DataError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StorageError + '_ {
    move |source| StorageError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn cluster_file_name(id: usize) -> String {
    format!("cluster_{id:04}.rows")
}

/// Writes a provider's clusters and manifest under `dir`.
pub fn save_provider(dir: &Path, clusters: &ClusterSet) -> Result<(), StorageError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let manifest_path = dir.join("manifest");
    let schema = clusters.schema();
    let mut m = String::new();
    m.push_str("fedaqp-provider-manifest v1\n");
    m.push_str(&format!("capacity {}\n", clusters.capacity()));
    m.push_str(&format!("clusters {}\n", clusters.len()));
    m.push_str(&format!("measure {}\n", schema.measure_name()));
    let dim_names: Vec<&str> = schema.dimensions().iter().map(|d| d.name()).collect();
    m.push_str(&format!(
        "row-format {},{}\n",
        dim_names.join(","),
        schema.measure_name()
    ));
    for d in schema.dimensions() {
        let values: Vec<String> = d.domain().iter().map(|v| v.to_string()).collect();
        m.push_str(&format!("dimension {} {}\n", d.name(), values.join(" ")));
    }
    fs::write(&manifest_path, m).map_err(io_err(&manifest_path))?;

    for cluster in clusters.clusters() {
        let path = dir.join(cluster_file_name(cluster.id));
        let mut f = fs::File::create(&path).map_err(io_err(&path))?;
        let mut buf = String::new();
        for row in &cluster.rows {
            for rank in &row.coords {
                buf.push_str(&rank.to_string());
                buf.push(',');
            }
            buf.push_str(&row.measure.to_string());
            buf.push('\n');
        }
        f.write_all(buf.as_bytes()).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Loads a provider directory written by [`save_provider`].
pub fn load_provider(dir: &Path) -> Result<ClusterSet, StorageError> {
    let manifest_path = dir.join("manifest");
    let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let bad = |line: usize, reason: &str| StorageError::BadManifest {
        line,
        reason: reason.to_string(),
    };

    let mut capacity = None;
    let mut cluster_count = None;
    let mut measure = None;
    let mut dims: Vec<Dimension> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if i == 0 {
            if raw != "fedaqp-provider-manifest v1" {
                return Err(bad(line, "unrecognized manifest header"));
            }
            continue;
        }
        let mut parts = raw.splitn(2, ' ');
        let key = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("");
        match key {
            "capacity" => {
                capacity = Some(
                    rest.parse::<usize>()
                        .map_err(|_| bad(line, "capacity must be an integer"))?,
                )
            }
            "clusters" => {
                cluster_count = Some(
                    rest.parse::<usize>()
                        .map_err(|_| bad(line, "cluster count must be an integer"))?,
                )
            }
            "measure" => measure = Some(rest.to_string()),
            "row-format" => {} // informational; order is schema order
            "dimension" => {
                let mut it = rest.split_whitespace();
                let name = it.next().ok_or_else(|| bad(line, "missing dimension name"))?;
                let mut domain = Vec::new();
                for v in it {
                    domain.push(
                        v.parse::<i64>()
                            .map_err(|_| bad(line, "domain values must be integers"))?,
                    );
                }
                dims.push(Dimension::new(name, domain)?);
            }
            "" => {}
            other => return Err(bad(line, &format!("unknown manifest key `{other}`"))),
        }
    }
    let capacity = capacity.ok_or_else(|| bad(0, "missing capacity"))?;
    let cluster_count = cluster_count.ok_or_else(|| bad(0, "missing cluster count"))?;
    let measure = measure.ok_or_else(|| bad(0, "missing measure name"))?;
    if capacity == 0 {
        return Err(bad(0, "capacity must be >= 1"));
    }
    let schema = Schema::new(dims, measure)?;
    let arity = schema.dimensions().len();

    let mut clusters = Vec::with_capacity(cluster_count);
    for id in 0..cluster_count {
        let path = dir.join(cluster_file_name(id));
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut rows = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let fields: Vec<&str> = raw.split(',').collect();
            let bad_row = |reason: &str| StorageError::BadClusterFile {
                path: path.display().to_string(),
                line: i + 1,
                reason: reason.to_string(),
            };
            if fields.len() != arity + 1 {
                return Err(bad_row(&format!(
                    "expected {} fields, got {}",
                    arity + 1,
                    fields.len()
                )));
            }
            let mut coords = Vec::with_capacity(arity);
            for f in &fields[..arity] {
                coords.push(f.parse::<u32>().map_err(|_| bad_row("bad rank"))?);
            }
            let measure = fields[arity]
                .parse::<u64>()
                .map_err(|_| bad_row("bad measure"))?;
            rows.push(TensorRow { coords, measure });
        }
        if rows.is_empty() || rows.len() > capacity {
            return Err(StorageError::BadClusterFile {
                path: path.display().to_string(),
                line: 0,
                reason: format!("cluster size {} outside 1..={capacity}", rows.len()),
            });
        }
        clusters.push(Cluster { id, rows });
    }
    Ok(ClusterSet::from_parts(schema, capacity, clusters))
}
