//! Tab-separated per-query tables with a commented provenance header.
//!
//! ```text
//! # qpp 0.1.0 predict
//! # seed=42
//! # k=100
//! query	NQC	Max
//! q01	0.12	3.5
//! q02	NA	2.9
//! ```

use std::fmt::Write as _;

use qpp_core::QueryTable;

use crate::error::{Error, Result};

pub const MISSING: &str = "NA";

/// Header lines written at the top of every output file. Only the seed and
/// parameters go in by default so identical invocations give identical
/// bytes; a wall-clock stamp is opt-in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub params: Vec<(String, String)>,
    pub created: Option<u64>,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            seed,
            params: Vec::new(),
            created: None,
        }
    }

    pub fn param(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.params.push((key.into(), value.to_string()));
    }

    pub fn stamped(mut self, stamp: bool) -> Self {
        if stamp {
            self.created = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs());
        }
        self
    }

    /// `#`-prefixed lines, newline-terminated.
    pub fn comment_lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# qpp {} {}", env!("CARGO_PKG_VERSION"), self.command);
        let _ = writeln!(out, "# seed={}", self.seed);
        for (k, v) in &self.params {
            let _ = writeln!(out, "# {k}={v}");
        }
        if let Some(t) = self.created {
            let _ = writeln!(out, "# created={t}");
        }
        out
    }
}

pub fn write_table(table: &QueryTable, provenance: &Provenance) -> String {
    let mut out = provenance.comment_lines();
    out.push_str("query");
    for n in table.names() {
        let _ = write!(out, "\t{n}");
    }
    out.push('\n');
    for (q, row) in table.rows() {
        out.push_str(q);
        for v in row {
            match v {
                Some(x) => {
                    let _ = write!(out, "\t{x}");
                }
                None => {
                    let _ = write!(out, "\t{MISSING}");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a table written by [`write_table`]. Comment lines are skipped; the
/// first other line is the header, whose first column must be `query`.
pub fn parse_table(text: &str, file: &str) -> Result<QueryTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hn, header) = lines
        .next()
        .ok_or_else(|| Error::parse(file, 1, "missing header row"))?;
    let mut cols = header.split('\t');
    if cols.next() != Some("query") {
        return Err(Error::parse(file, hn, "header must start with `query`"));
    }
    let names: Vec<String> = cols.map(str::to_string).collect();
    let mut table = QueryTable::new(names).map_err(|e| Error::parse(file, hn, e.to_string()))?;
    for (n, line) in lines {
        let mut f = line.split('\t');
        let q = f.next().unwrap_or_default();
        if table.rows().contains_key(q) {
            return Err(Error::parse(file, n, format!("duplicate query `{q}`")));
        }
        let values = f
            .map(|v| {
                if v == MISSING {
                    return Ok(None);
                }
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .map(Some)
                    .ok_or_else(|| Error::parse(file, n, format!("`{v}` is not a finite number")))
            })
            .collect::<Result<Vec<_>>>()?;
        table
            .insert_row(q, values)
            .map_err(|e| Error::parse(file, n, e.to_string()))?;
    }
    Ok(table)
}
