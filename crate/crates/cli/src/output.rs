//! Serialisation with fixed key order and 9 significant digits, written
//! atomically.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use riskaudit::figures::FigureRow;

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds to [`SIGNIFICANT_DIGITS`]; non-finite values pass through.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .expect("scientific notation round-trips")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("checked f64");
            *v = serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut out = serde_json::to_vec_pretty(&v)?;
    out.push(b'\n');
    Ok(out)
}

/// A CSV cell for a number, formatted exactly as in the JSON output.
pub fn num(x: f64) -> String {
    let r = round_sig(x);
    if r.is_finite() {
        serde_json::to_string(&r).expect("finite float serialises")
    } else {
        String::new()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn figure_csv(rows: &[FigureRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &["series", "x", "y", "ci_low", "ci_high", "n"],
        rows.iter().map(|r| {
            vec![
                r.series.clone(),
                r.x.clone(),
                opt(r.y),
                opt(r.ci_low),
                opt(r.ci_high),
                r.n.to_string(),
            ]
        }),
    )
}

/// Replaces `path` in one rename so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| e.error)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes to `out`, or to stdout when `out` is `None`.
pub fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}
