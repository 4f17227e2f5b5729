//! Merging experiment CSV files into plot-ready tables.
//!
//! One input passes through with a normalized header. Several inputs are
//! joined on their shared first column: the wide table has one column per
//! input series (`<stem>_<column>`, `nan` where an input lacks the key),
//! and the long table has rows `key,series,value`.

use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum PlotError {
    Io { path: PathBuf, source: std::io::Error },
    Columns(String),
}

impl fmt::Display for PlotError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlotError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            PlotError::Columns(m) => write!(f, "mismatched columns: {m}"),
        }
    }
}

impl std::error::Error for PlotError {}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub wide: String,
    pub long: String,
}

/// Lowercase, runs of anything but letters and digits become `_`.
pub fn normalize_header(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

pub fn parse_csv(name: &str, text: &str) -> Result<Table, PlotError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, head)) = lines.next() else {
        return Err(PlotError::Columns(format!("{name} has no header")));
    };
    let header: Vec<String> = head
        .split(',')
        .enumerate()
        .map(|(i, h)| match normalize_header(h) {
            s if s.is_empty() => format!("col{i}"),
            s => s,
        })
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if row.len() != header.len() {
            return Err(PlotError::Columns(format!(
                "{name} line {} has {} fields, the header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

fn stem(path: &Path) -> String {
    let s = path.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    match normalize_header(&s) {
        s if s.is_empty() => "input".into(),
        s => s,
    }
}

pub fn emit_plotdata(inputs: &[PathBuf]) -> Result<PlotData, PlotError> {
    let mut tables = Vec::with_capacity(inputs.len());
    for p in inputs {
        let text = std::fs::read_to_string(p).map_err(|source| PlotError::Io {
            path: p.clone(),
            source,
        })?;
        tables.push((stem(p), parse_csv(&p.display().to_string(), &text)?));
    }
    merge(&tables)
}

/// Joins named tables; see the module docs.
pub fn merge(tables: &[(String, Table)]) -> Result<PlotData, PlotError> {
    let Some((_, first)) = tables.first() else {
        return Err(PlotError::Columns("no input files".into()));
    };
    let key = first.header[0].clone();
    if let Some((name, t)) = tables.iter().find(|(_, t)| t.header[0] != key) {
        return Err(PlotError::Columns(format!(
            "{name} is keyed on {:?}, expected {key:?}",
            t.header[0]
        )));
    }
    let mut long = format!("{key},series,value\n");
    if tables.len() == 1 {
        let mut wide = first.header.join(",") + "\n";
        for row in &first.rows {
            wide.push_str(&row.join(","));
            wide.push('\n');
            for (h, v) in first.header.iter().zip(row).skip(1) {
                long.push_str(&format!("{},{h},{v}\n", row[0]));
            }
        }
        return Ok(PlotData { wide, long });
    }
    if let Some((name, _)) = tables.iter().find(|(_, t)| t.header.len() < 2) {
        return Err(PlotError::Columns(format!("{name} has no value column to join")));
    }
    let mut keys: Vec<(f64, String)> = Vec::new();
    for (name, t) in tables {
        for row in &t.rows {
            let x: f64 = row[0].parse().map_err(|_| {
                PlotError::Columns(format!("{name} key {:?} is not numeric", row[0]))
            })?;
            keys.push((x, row[0].clone()));
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0));
    keys.dedup_by(|a, b| a.0 == b.0);
    let mut prefixes: Vec<String> = Vec::with_capacity(tables.len());
    for (i, (name, _)) in tables.iter().enumerate() {
        let p = if prefixes.contains(name) || tables.iter().filter(|t| &t.0 == name).count() > 1 {
            format!("{name}{i}")
        } else {
            name.clone()
        };
        prefixes.push(p);
    }
    let mut columns = vec![key.clone()];
    for ((_, t), p) in tables.iter().zip(&prefixes) {
        columns.extend(t.header[1..].iter().map(|h| format!("{p}_{h}")));
    }
    let mut wide = columns.join(",") + "\n";
    for (x, text) in &keys {
        let mut row = vec![text.clone()];
        for ((_, t), p) in tables.iter().zip(&prefixes) {
            let hit = t.rows.iter().find(|r| r[0].parse::<f64>().ok() == Some(*x));
            for (j, h) in t.header.iter().enumerate().skip(1) {
                match hit {
                    Some(r) => {
                        row.push(r[j].clone());
                        long.push_str(&format!("{text},{p}_{h},{}\n", r[j]));
                    }
                    None => row.push("nan".into()),
                }
            }
        }
        wide.push_str(&row.join(","));
        wide.push('\n');
    }
    Ok(PlotData { wide, long })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> Table {
        parse_csv("t", text).unwrap()
    }

    #[test]
    fn headers_are_normalized() {
        assert_eq!(normalize_header(" Q hat (N) "), "q_hat_n");
        assert_eq!(normalize_header("N"), "n");
        assert_eq!(table("T,  Energy Budget\n").header, vec!["t", "energy_budget"]);
    }

    #[test]
    fn single_input_passes_through() {
        let d = merge(&[("a".into(), table("N,q_hat\n0,1.5\n2,0.5\n"))]).unwrap();
        assert_eq!(d.wide, "n,q_hat\n0,1.5\n2,0.5\n");
        assert_eq!(d.long, "n,series,value\n0,q_hat,1.5\n2,q_hat,0.5\n");
    }

    #[test]
    fn two_reports_join_on_the_key() {
        let a = table("N,q_hat\n0,1.5\n2,0.5\n");
        let b = table("N,q_hat\n0,1.25\n1,0.75\n");
        let d = merge(&[("a".into(), a), ("b".into(), b)]).unwrap();
        assert_eq!(d.wide, "n,a_q_hat,b_q_hat\n0,1.5,1.25\n1,nan,0.75\n2,0.5,nan\n");
        assert_eq!(
            d.long,
            "n,series,value\n0,a_q_hat,1.5\n0,b_q_hat,1.25\n1,b_q_hat,0.75\n2,a_q_hat,0.5\n"
        );
    }

    #[test]
    fn empty_input_gives_header_only() {
        let d = merge(&[("a".into(), table("N,q_hat\n"))]).unwrap();
        assert_eq!(d.wide, "n,q_hat\n");
        assert_eq!(d.long, "n,series,value\n");
    }

    #[test]
    fn mismatches_are_rejected() {
        assert!(parse_csv("x", "a,b\n1,2,3\n").is_err());
        let a = table("N,q_hat\n0,1\n");
        let b = table("t,w1\n0,1\n");
        assert!(matches!(
            merge(&[("a".into(), a), ("b".into(), b)]),
            Err(PlotError::Columns(_))
        ));
        assert!(merge(&[]).is_err());
    }
}
