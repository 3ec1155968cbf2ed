//! Text formats: matrices as CSV, flat `key = value` settings, result tables.

use std::collections::HashSet;
use std::io::Write;

use crate::error::{Error, Result};
use crate::experiments::{ExperimentSpec, Table, CSV_HEADER};
use crate::matrix::RealMatrix;

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Reads a dense matrix, one row per line, comma separated. Blank lines and
/// lines starting with `#` are skipped; every row must have the same width.
pub fn parse_matrix_csv(text: &str) -> Result<RealMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                Ok(_) => Err(parse_error(line, format!("column {}: non-finite value '{field}'", j + 1))),
                Err(_) => Err(parse_error(line, format!("column {}: not a number: '{field}'", j + 1))),
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_error(line, format!("expected {} columns, found {}", first.len(), row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_error(0, "no rows"));
    }
    RealMatrix::from_rows(&rows)
}

/// Writes a matrix in the format [`parse_matrix_csv`] reads.
pub fn matrix_to_csv(m: &RealMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let fields: Vec<String> = m.row(i).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Reads flat `key = value` lines. `#` starts a comment; blank lines are
/// ignored. Keys must be unique. Pairs are returned in file order.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_error(line_no, format!("expected key = value, found '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(parse_error(line_no, format!("invalid key '{key}'")));
        }
        if !seen.insert(key.to_string()) {
            return Err(parse_error(line_no, format!("duplicate key '{key}'")));
        }
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot parse '{raw}'")))
}

fn list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| value(key, s)).collect()
}

/// Keys understood by [`apply_setting`].
pub const SETTING_KEYS: &[&str] = &[
    "n", "d", "heads", "alpha", "tau", "depth", "trials", "seed", "q_ffn", "sigma_sq", "variant", "placement",
    "activation", "value_init", "ln_epsilon", "taus", "eta_dims", "t_grid", "oracle_shapes", "oracle_alphas",
    "oracle_heads", "oracle_z", "gate_instances",
];

/// Sets one field of `spec` from its textual form. Dashes in `key` are read
/// as underscores. Lists are comma separated; `oracle_shapes` entries are
/// `NxD`.
pub fn apply_setting(spec: &mut ExperimentSpec, key: &str, raw: &str) -> Result<()> {
    let key = key.replace('-', "_");
    let k = key.as_str();
    let cfg = &mut spec.cfg;
    let extra = &mut spec.extra;
    match k {
        "n" => cfg.n = value(k, raw)?,
        "d" => cfg.d = value(k, raw)?,
        "heads" => cfg.heads = value(k, raw)?,
        "alpha" => cfg.alpha = value(k, raw)?,
        "tau" => cfg.tau = value(k, raw)?,
        "seed" => cfg.seed = value(k, raw)?,
        "q_ffn" => cfg.q_ffn = Some(value(k, raw)?),
        "sigma_sq" => cfg.sigma_sq = Some(value(k, raw)?),
        "variant" => cfg.variant = value(k, raw)?,
        "placement" => cfg.placement = value(k, raw)?,
        "activation" => cfg.activation = value(k, raw)?,
        "value_init" => cfg.value_init = value(k, raw)?,
        "ln_epsilon" => cfg.layer_norm.epsilon = value(k, raw)?,
        "depth" => spec.depth = value(k, raw)?,
        "trials" => spec.trials = value(k, raw)?,
        "taus" => extra.taus = list(k, raw)?,
        "eta_dims" => extra.eta_dims = list(k, raw)?,
        "t_grid" => extra.t_grid = list(k, raw)?,
        "oracle_alphas" => extra.oracle_alphas = list(k, raw)?,
        "oracle_heads" => extra.oracle_heads = list(k, raw)?,
        "oracle_z" => extra.oracle_z = value(k, raw)?,
        "gate_instances" => extra.gate_instances = value(k, raw)?,
        "oracle_shapes" => {
            extra.oracle_shapes = raw
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    let (n, d) = s
                        .trim()
                        .split_once('x')
                        .ok_or_else(|| Error::InvalidParameter(format!("{k}: expected NxD, found '{s}'")))?;
                    Ok((value(k, n)?, value(k, d)?))
                })
                .collect::<Result<_>>()?
        }
        _ => return Err(Error::InvalidParameter(format!("unknown setting '{key}'"))),
    }
    Ok(())
}

/// Floats are written in their shortest round-trip form.
fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_table_csv<W: Write>(table: &Table, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &table.rows {
        w.write_record([
            r.experiment.clone(),
            r.block.to_string(),
            r.step.clone(),
            r.quantity.clone(),
            fmt_float(r.mean),
            fmt_float(r.std),
            r.trials.to_string(),
            r.flags.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_to_csv(table: &Table) -> String {
    let mut buf = Vec::new();
    write_table_csv(table, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Pretty JSON array of rows; non-finite numbers become `null`.
pub fn table_to_json(table: &Table) -> String {
    serde_json::to_string_pretty(&table.rows).expect("rows serialize")
}
