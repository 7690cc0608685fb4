//! Metadata persistence: one self-describing text file per cluster plus one
//! global file per provider.
//!
//! ```text
//! global.meta            header (capacity, n_min, dims, clusters), then one
//!                        `<cluster_id> <dim> <v_min> <v_max>` line per pair
//! cluster_0000.meta      header (cluster, capacity), then per-dimension
//!                        blocks of `<value> <count>` pairs sorted ascending
//! ```

use std::fs;
use std::path::Path;

use super::{ClusterBounds, DimProportions, GlobalMeta, MetaError, ProportionTable};
use crate::datamodel::ClusterId;

fn meta_file_name(id: ClusterId) -> String {
    format!("cluster_{id:04}.meta")
}

fn write(path: &Path, text: &str) -> Result<(), MetaError> {
    fs::write(path, text).map_err(|e| MetaError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn read(path: &Path) -> Result<String, MetaError> {
    fs::read_to_string(path).map_err(|e| MetaError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Persists global and per-cluster metadata under `dir`.
pub fn save_metadata(
    dir: &Path,
    global: &GlobalMeta,
    tables: &[ProportionTable],
) -> Result<(), MetaError> {
    fs::create_dir_all(dir).map_err(|e| MetaError::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut g = String::new();
    g.push_str("fedaqp-global-meta v1\n");
    g.push_str(&format!("capacity {}\n", global.capacity()));
    g.push_str(&format!("nmin {}\n", global.n_min()));
    g.push_str(&format!("dims {}\n", global.dim_names().join(" ")));
    g.push_str(&format!("clusters {}\n", global.bounds().len()));
    for (id, b) in global.bounds().iter().enumerate() {
        for (d, (lo, hi)) in b.per_dim.iter().enumerate() {
            g.push_str(&format!("{id} {} {lo} {hi}\n", global.dim_names()[d]));
        }
    }
    write(&dir.join("global.meta"), &g)?;

    for t in tables {
        let mut s = String::new();
        s.push_str("fedaqp-cluster-meta v1\n");
        s.push_str(&format!("cluster {}\n", t.cluster_id));
        s.push_str(&format!("capacity {}\n", t.capacity()));
        for (d, dim) in t.dims().iter().enumerate() {
            s.push_str(&format!("dim {}\n", global.dim_names()[d]));
            for (v, c) in dim.entries() {
                s.push_str(&format!("{v} {c}\n"));
            }
        }
        write(&dir.join(meta_file_name(t.cluster_id)), &s)?;
    }
    Ok(())
}

/// Loads metadata written by [`save_metadata`]; the round trip is exact since
/// proportions are stored as integer counts over the shared capacity.
pub fn load_metadata(dir: &Path) -> Result<(GlobalMeta, Vec<ProportionTable>), MetaError> {
    let text = read(&dir.join("global.meta"))?;
    let mut lines = text.lines();
    let bad = |reason: &str| MetaError::ParseGlobal(reason.to_string());
    if lines.next() != Some("fedaqp-global-meta v1") {
        return Err(bad("unrecognized header"));
    }
    let mut capacity = None;
    let mut n_min = None;
    let mut dim_names: Vec<String> = Vec::new();
    let mut cluster_count = None;
    let mut body = Vec::new();
    for line in lines {
        let mut it = line.splitn(2, ' ');
        let key = it.next().unwrap_or("");
        let rest = it.next().unwrap_or("");
        match key {
            "capacity" => capacity = Some(rest.parse().map_err(|_| bad("bad capacity"))?),
            "nmin" => n_min = Some(rest.parse().map_err(|_| bad("bad nmin"))?),
            "dims" => dim_names = rest.split_whitespace().map(String::from).collect(),
            "clusters" => cluster_count = Some(rest.parse().map_err(|_| bad("bad cluster count"))?),
            "" => {}
            _ => body.push(line),
        }
    }
    let capacity: usize = capacity.ok_or_else(|| bad("missing capacity"))?;
    let n_min: usize = n_min.ok_or_else(|| bad("missing nmin"))?;
    let cluster_count: usize = cluster_count.ok_or_else(|| bad("missing cluster count"))?;
    if dim_names.is_empty() {
        return Err(bad("missing dims"));
    }
    let dim_index = |name: &str| -> Result<usize, MetaError> {
        dim_names
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| bad(&format!("unknown dimension `{name}`")))
    };

    let mut bounds =
        vec![ClusterBounds { per_dim: vec![(0, 0); dim_names.len()] }; cluster_count];
    let mut seen = vec![vec![false; dim_names.len()]; cluster_count];
    for line in body {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad(&format!("bounds line needs 4 fields: `{line}`")));
        }
        let id: usize = fields[0].parse().map_err(|_| bad("bad cluster id"))?;
        if id >= cluster_count {
            return Err(bad(&format!("cluster id {id} out of range")));
        }
        let d = dim_index(fields[1])?;
        let lo: u32 = fields[2].parse().map_err(|_| bad("bad v_min"))?;
        let hi: u32 = fields[3].parse().map_err(|_| bad("bad v_max"))?;
        if lo > hi {
            return Err(bad(&format!("v_min {lo} > v_max {hi} on cluster {id}")));
        }
        bounds[id].per_dim[d] = (lo, hi);
        seen[id][d] = true;
    }
    if seen.iter().any(|dims| dims.iter().any(|&s| !s)) {
        return Err(bad("incomplete bounds table"));
    }

    let mut tables = Vec::with_capacity(cluster_count);
    for id in 0..cluster_count {
        tables.push(load_cluster_table(dir, id, capacity, &dim_names)?);
    }
    Ok((
        GlobalMeta::from_parts(capacity, n_min, dim_names, bounds),
        tables,
    ))
}

fn load_cluster_table(
    dir: &Path,
    id: ClusterId,
    capacity: usize,
    dim_names: &[String],
) -> Result<ProportionTable, MetaError> {
    let text = read(&dir.join(meta_file_name(id)))?;
    let bad = |reason: String| MetaError::Parse {
        cluster_id: id,
        reason,
    };
    let mut lines = text.lines();
    if lines.next() != Some("fedaqp-cluster-meta v1") {
        return Err(bad("unrecognized header".into()));
    }
    let mut declared_cluster = None;
    let mut declared_capacity = None;
    let mut dims: Vec<DimProportions> = Vec::new();
    let mut current: Option<(usize, Vec<u32>, Vec<u32>)> = None;
    let finish = |dims: &mut Vec<DimProportions>,
                  cur: Option<(usize, Vec<u32>, Vec<u32>)>|
     -> Result<(), MetaError> {
        if let Some((idx, values, counts)) = cur {
            if values.is_empty() {
                return Err(MetaError::Parse {
                    cluster_id: id,
                    reason: "empty dimension block".into(),
                });
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(MetaError::Parse {
                    cluster_id: id,
                    reason: "values must strictly ascend".into(),
                });
            }
            if counts.windows(2).any(|w| w[0] < w[1]) {
                return Err(MetaError::Parse {
                    cluster_id: id,
                    reason: "counts must be non-increasing".into(),
                });
            }
            if dims.len() != idx {
                return Err(MetaError::Parse {
                    cluster_id: id,
                    reason: "dimension blocks out of order".into(),
                });
            }
            dims.push(DimProportions {
                values,
                geq_counts: counts,
            });
        }
        Ok(())
    };
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut it = line.splitn(2, ' ');
        let key = it.next().unwrap_or("");
        let rest = it.next().unwrap_or("");
        match key {
            "cluster" => {
                declared_cluster =
                    Some(rest.parse::<usize>().map_err(|_| bad("bad cluster id".into()))?)
            }
            "capacity" => {
                declared_capacity =
                    Some(rest.parse::<usize>().map_err(|_| bad("bad capacity".into()))?)
            }
            "dim" => {
                let taken = current.take();
                finish(&mut dims, taken)?;
                let idx = dim_names
                    .iter()
                    .position(|d| d == rest)
                    .ok_or_else(|| bad(format!("unknown dimension `{rest}`")))?;
                current = Some((idx, Vec::new(), Vec::new()));
            }
            v => {
                let (_, values, counts) = current
                    .as_mut()
                    .ok_or_else(|| bad("value pair outside a dim block".into()))?;
                let value: u32 = v.parse().map_err(|_| bad(format!("bad value `{v}`")))?;
                let count: u32 = rest
                    .parse()
                    .map_err(|_| bad(format!("bad count `{rest}`")))?;
                if count as usize > capacity {
                    return Err(bad(format!("count {count} above capacity {capacity}")));
                }
                values.push(value);
                counts.push(count);
            }
        }
    }
    let taken = current.take();
    finish(&mut dims, taken)?;
    if declared_cluster != Some(id) {
        return Err(bad("cluster id mismatch".into()));
    }
    if declared_capacity != Some(capacity) {
        return Err(bad("capacity mismatch with global file".into()));
    }
    if dims.len() != dim_names.len() {
        return Err(bad(format!(
            "expected {} dimension blocks, found {}",
            dim_names.len(),
            dims.len()
        )));
    }
    Ok(ProportionTable {
        cluster_id: id,
        capacity,
        dims,
    })
}
