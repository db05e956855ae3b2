//! Aggregation of artifact directories into merged plot-ready tables.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde_json::{json, Value};

use crate::error::CliError;
use crate::manifest::{Manifest, CODE_VERSION};
use crate::manifest::ArtifactDir;

const GAP: &str = "NA";

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

struct Source {
    label: String,
    kind: String,
    size: String,
    seed: String,
    tables: Vec<(String, Table)>,
}

fn read_table(path: &std::path::Path) -> Result<Table, CliError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rd.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rd.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(Table { header, rows })
}

fn key_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn write_csv(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Merges the tables of every directory. Each table yields a long file
/// keyed by `(experiment, size, seed)` and, when its first column is a
/// unique key in every source, a wide file on the union of key values with
/// gaps marked `NA`.
pub fn run_report(inputs: &[PathBuf], dir: &mut ArtifactDir) -> Result<Value, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Validation(vec!["report.inputs: at least one artifact directory is required".into()]));
    }
    let mut warnings = Vec::new();
    let mut sources = Vec::new();
    let mut seen = BTreeMap::<String, usize>::new();
    for input in inputs {
        let m = Manifest::read(input)?;
        if m.code_version != CODE_VERSION {
            warnings.push(format!("{}: code version {} differs from {}", input.display(), m.code_version, CODE_VERSION));
        }
        let stale = m.verify(input)?;
        if !stale.is_empty() {
            warnings.push(format!("{}: checksum mismatch for {}", input.display(), stale.join(", ")));
        }
        let size = m.size.map_or(GAP.to_string(), |s| s.to_string());
        let mut label = format!("{}-{}-{}", m.kind, size, m.seed);
        let n = seen.entry(label.clone()).or_default();
        *n += 1;
        if *n > 1 {
            label = format!("{label}#{n}");
        }
        let mut tables = Vec::new();
        for f in &m.files {
            if let Some(t) = &f.table {
                tables.push((t.clone(), read_table(&input.join(&f.path))?));
            }
        }
        sources.push(Source { label, kind: m.kind.clone(), size, seed: m.seed.to_string(), tables });
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let names: BTreeSet<&str> = sources.iter().flat_map(|s| s.tables.iter().map(|t| t.0.as_str())).collect();
    let mut summary = BTreeMap::new();
    for name in names {
        let parts: Vec<(&Source, &Table)> = sources
            .iter()
            .flat_map(|s| s.tables.iter().filter(|t| t.0 == name).map(move |t| (s, &t.1)))
            .collect();

        let mut columns: Vec<String> = Vec::new();
        for (_, t) in &parts {
            for h in &t.header {
                if !columns.contains(h) {
                    columns.push(h.clone());
                }
            }
        }
        let mut header = vec!["experiment".to_string(), "size".into(), "seed".into(), "source".into()];
        header.extend(columns.iter().cloned());
        let mut rows = Vec::new();
        for (s, t) in &parts {
            let pos: Vec<Option<usize>> = columns.iter().map(|c| t.header.iter().position(|h| h == c)).collect();
            for r in &t.rows {
                let mut row = vec![s.kind.clone(), s.size.clone(), s.seed.clone(), s.label.clone()];
                row.extend(pos.iter().map(|p| p.map_or(GAP.to_string(), |i| r[i].clone())));
                rows.push(row);
            }
        }
        dir.write(&format!("{name}.csv"), None, &write_csv(&header, &rows)?)?;

        let key = parts[0].1.header.first().cloned();
        let gridable = key.is_some()
            && parts.iter().all(|(_, t)| {
                t.header.first() == key.as_ref() && {
                    let keys: BTreeSet<&str> = t.rows.iter().map(|r| r[0].as_str()).collect();
                    keys.len() == t.rows.len()
                }
            });
        if gridable {
            let mut keys: Vec<&str> = parts.iter().flat_map(|(_, t)| t.rows.iter().map(|r| r[0].as_str())).collect();
            keys.sort_by(|a, b| key_order(a, b));
            keys.dedup();
            let mut gh = vec![key.clone().unwrap_or_default()];
            for (s, t) in &parts {
                gh.extend(t.header[1..].iter().map(|c| format!("{}:{c}", s.label)));
            }
            let mut grows = Vec::with_capacity(keys.len());
            for k in &keys {
                let mut row = vec![k.to_string()];
                for (_, t) in &parts {
                    match t.rows.iter().find(|r| r[0] == *k) {
                        Some(r) => row.extend(r[1..].iter().cloned()),
                        None => row.extend(std::iter::repeat_n(GAP.to_string(), t.header.len() - 1)),
                    }
                }
                grows.push(row);
            }
            dir.write(&format!("{name}_grid.csv"), None, &write_csv(&gh, &grows)?)?;
        }
        summary.insert(name.to_string(), json!({ "sources": parts.len(), "rows": rows.len(), "grid": gridable }));
    }
    Ok(json!({
        "inputs": sources.iter().map(|s| s.label.clone()).collect::<Vec<_>>(),
        "tables": summary,
        "warnings": warnings,
    }))
}
