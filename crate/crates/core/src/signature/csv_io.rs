//! CSV form of signatures and diffs.
//!
//! One row per present cell, δ ascending then symbol-set order. The symbol
//! column spells space and comma as `"<sp>"` and `"<comma>"`; accuracies are
//! printed with 6 decimals.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signature::{MemorySignature, SignatureDiff, SignatureMeta};
use crate::symbols::SymbolSet;

pub const SYMBOL_SPACE: &str = "<sp>";
pub const SYMBOL_COMMA: &str = "<comma>";

fn symbol_field(c: char) -> String {
    match c {
        ' ' => format!("\"{SYMBOL_SPACE}\""),
        ',' => format!("\"{SYMBOL_COMMA}\""),
        '"' => "\"\"\"\"".into(),
        c => c.to_string(),
    }
}

fn symbol_from_field(field: &str, symbols: &SymbolSet) -> Result<usize> {
    let c = match field {
        SYMBOL_SPACE => ' ',
        SYMBOL_COMMA => ',',
        other => {
            let mut chars = other.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(Error::Parse(format!("bad symbol field {other:?}"))),
            }
        }
    };
    symbols.id(c).ok_or_else(|| Error::Parse(format!("symbol {c:?} is not in the symbol set")))
}

pub fn signature_to_csv(sig: &MemorySignature) -> String {
    let mut out = String::from("delta,symbol,accuracy,support\n");
    for (d, (acc, sup)) in sig.accuracy.iter().zip(&sig.support).enumerate() {
        for (v, (a, s)) in acc.iter().zip(sup).enumerate() {
            if let Some(a) = a {
                let sym = symbol_field(sig.symbols.symbol(v));
                writeln!(out, "{},{sym},{a:.6},{s}", d + 1).unwrap();
            }
        }
    }
    out
}

pub fn diff_to_csv(diff: &SignatureDiff) -> String {
    let mut out = String::from("delta,symbol,accuracy_a,accuracy_b,diff\n");
    for (d, row) in diff.diff.iter().enumerate() {
        for (v, x) in row.iter().enumerate() {
            if let Some(x) = x {
                let (a, b) = (diff.a[d][v].unwrap(), diff.b[d][v].unwrap());
                let sym = symbol_field(diff.symbols.symbol(v));
                // avoid printing "-0.000000"
                let x = if x.abs() < 5e-7 { 0.0 } else { *x };
                writeln!(out, "{},{sym},{a:.6},{b:.6},{x:.6}", d + 1).unwrap();
            }
        }
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_signature_csv(sig: &MemorySignature, path: &Path) -> Result<()> {
    write_text(path, &signature_to_csv(sig))
}

pub fn write_diff_csv(diff: &SignatureDiff, path: &Path) -> Result<()> {
    write_text(path, &diff_to_csv(diff))
}

fn records(text: &str, expected: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(format!("csv header: {e}")))?;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Parse(format!(
            "expected header {}, got {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader.records().map(|r| r.map_err(|e| Error::Parse(format!("csv: {e}")))).collect()
}

fn parse_num<T: std::str::FromStr>(field: &str, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse(format!("bad {what} {field:?}")))
}

fn grid(symbols: &SymbolSet, max_delta: usize) -> Vec<Vec<Option<f64>>> {
    vec![vec![None; symbols.len()]; max_delta]
}

/// Rebuilds a signature; rows run to the largest δ present.
pub fn parse_signature_csv(text: &str, symbols: &SymbolSet, meta: SignatureMeta) -> Result<MemorySignature> {
    let recs = records(text, &["delta", "symbol", "accuracy", "support"])?;
    let mut cells = Vec::with_capacity(recs.len());
    for r in &recs {
        let delta: usize = parse_num(&r[0], "delta")?;
        if delta == 0 {
            return Err(Error::Parse("delta 0 in signature".into()));
        }
        cells.push((
            delta,
            symbol_from_field(&r[1], symbols)?,
            parse_num::<f64>(&r[2], "accuracy")?,
            parse_num::<u64>(&r[3], "support")?,
        ));
    }
    let max_delta = cells.iter().map(|c| c.0).max().unwrap_or(0);
    let mut accuracy = grid(symbols, max_delta);
    let mut support = vec![vec![0; symbols.len()]; max_delta];
    for (d, v, a, s) in cells {
        if accuracy[d - 1][v].replace(a).is_some() {
            return Err(Error::Parse(format!("duplicate cell δ={d} symbol {v}")));
        }
        support[d - 1][v] = s;
    }
    MemorySignature::new(symbols.clone(), accuracy, support, meta)
}

pub fn parse_diff_csv(text: &str, symbols: &SymbolSet) -> Result<SignatureDiff> {
    let recs = records(text, &["delta", "symbol", "accuracy_a", "accuracy_b", "diff"])?;
    let mut cells = Vec::with_capacity(recs.len());
    for r in &recs {
        let delta: usize = parse_num(&r[0], "delta")?;
        if delta == 0 {
            return Err(Error::Parse("delta 0 in diff".into()));
        }
        cells.push((
            delta,
            symbol_from_field(&r[1], symbols)?,
            parse_num::<f64>(&r[2], "accuracy")?,
            parse_num::<f64>(&r[3], "accuracy")?,
            parse_num::<f64>(&r[4], "diff")?,
        ));
    }
    let max_delta = cells.iter().map(|c| c.0).max().unwrap_or(0);
    let (mut a, mut b, mut diff) = (grid(symbols, max_delta), grid(symbols, max_delta), grid(symbols, max_delta));
    for (d, v, x, y, z) in cells {
        a[d - 1][v] = Some(x);
        b[d - 1][v] = Some(y);
        diff[d - 1][v] = Some(z);
    }
    Ok(SignatureDiff {
        symbols: symbols.clone(),
        a,
        b,
        diff,
        meta_a: SignatureMeta::default(),
        meta_b: SignatureMeta::default(),
    })
}
