//! Memory signatures: per-symbol recall accuracy indexed by look-back δ.

mod csv_io;
mod svg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::DecoderEval;
use crate::symbols::SymbolSet;

pub use csv_io::{
    diff_to_csv, parse_diff_csv, parse_signature_csv, signature_to_csv, write_diff_csv, write_signature_csv,
    SYMBOL_COMMA, SYMBOL_SPACE,
};
pub use svg::{render_diff, render_heatmap, render_signature, Palette};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureMeta {
    pub model: String,
    pub layer: usize,
    pub state_choice: String,
    pub corpus: String,
    pub seed: u64,
}

/// `accuracy[δ - 1][v]`, absent where symbol `v` never occurred as a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySignature {
    pub symbols: SymbolSet,
    pub accuracy: Vec<Vec<Option<f64>>>,
    pub support: Vec<Vec<u64>>,
    pub meta: SignatureMeta,
}

impl MemorySignature {
    pub fn new(
        symbols: SymbolSet,
        accuracy: Vec<Vec<Option<f64>>>,
        support: Vec<Vec<u64>>,
        meta: SignatureMeta,
    ) -> Result<Self> {
        let v = symbols.len();
        if accuracy.is_empty() || accuracy.len() != support.len() {
            return Err(Error::IncompleteProbe(format!(
                "{} accuracy rows and {} support rows",
                accuracy.len(),
                support.len()
            )));
        }
        for (d, (acc, sup)) in accuracy.iter().zip(&support).enumerate() {
            if acc.len() != v || sup.len() != v {
                return Err(Error::Shape(format!("row δ={} does not have {v} symbols", d + 1)));
            }
            for (a, &s) in acc.iter().zip(sup) {
                match a {
                    Some(x) if !(0.0..=1.0).contains(x) => {
                        return Err(Error::Numerical(format!("accuracy {x} outside [0, 1]")))
                    }
                    Some(_) if s == 0 => {
                        return Err(Error::Shape("accuracy present for a symbol with no support".into()))
                    }
                    None if s > 0 => return Err(Error::Shape("symbol with support has no accuracy".into())),
                    _ => {}
                }
            }
        }
        Ok(MemorySignature { symbols, accuracy, support, meta })
    }

    pub fn max_delta(&self) -> usize {
        self.accuracy.len()
    }

    pub fn get(&self, delta: usize, symbol: usize) -> Option<f64> {
        self.accuracy[delta - 1][symbol]
    }
}

/// Assembles one layer's evaluations, which must cover δ = 1..Δ exactly once.
pub fn compile_signature(
    symbols: &SymbolSet,
    evaluations: &[(usize, DecoderEval)],
    meta: SignatureMeta,
) -> Result<MemorySignature> {
    let max_delta = evaluations.iter().map(|(d, _)| *d).max().unwrap_or(0);
    let mut rows: Vec<Option<&DecoderEval>> = vec![None; max_delta];
    for (delta, eval) in evaluations {
        if *delta == 0 {
            return Err(Error::IncompleteProbe("delta 0 is not a look-back distance".into()));
        }
        if rows[delta - 1].replace(eval).is_some() {
            return Err(Error::IncompleteProbe(format!("duplicate evaluation for delta {delta}")));
        }
    }
    if let Some(missing) = rows.iter().position(Option::is_none) {
        return Err(Error::IncompleteProbe(format!("no evaluation for delta {}", missing + 1)));
    }
    if max_delta == 0 {
        return Err(Error::IncompleteProbe("no evaluations".into()));
    }
    let rows: Vec<&DecoderEval> = rows.into_iter().map(Option::unwrap).collect();
    if let Some(bad) = rows.iter().find(|e| e.accuracy.len() != symbols.len()) {
        return Err(Error::Shape(format!(
            "evaluation covers {} symbols, symbol set has {}",
            bad.accuracy.len(),
            symbols.len()
        )));
    }
    MemorySignature::new(
        symbols.clone(),
        rows.iter().map(|e| e.accuracy.clone()).collect(),
        rows.iter().map(|e| e.support.clone()).collect(),
        meta,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    /// Pooled accuracy: every pair counts once.
    #[default]
    Weighted,
    /// Mean of the present per-symbol accuracies.
    Unweighted,
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Marginal::Weighted => "weighted",
            Marginal::Unweighted => "unweighted",
        })
    }
}

impl FromStr for Marginal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weighted" => Ok(Marginal::Weighted),
            "unweighted" => Ok(Marginal::Unweighted),
            other => Err(Error::Usage(format!("unknown marginal {other:?}"))),
        }
    }
}

/// Recall per δ pooled over symbols; `None` for rows without support.
pub fn marginal_recall(sig: &MemorySignature, how: Marginal) -> Vec<Option<f64>> {
    sig.accuracy
        .iter()
        .zip(&sig.support)
        .map(|(acc, sup)| {
            let present = acc.iter().zip(sup).filter_map(|(a, &s)| a.map(|a| (a, s)));
            let (num, den) = match how {
                Marginal::Weighted => present.fold((0.0, 0.0), |(n, d), (a, s)| (n + a * s as f64, d + s as f64)),
                Marginal::Unweighted => present.fold((0.0, 0.0), |(n, d), (a, _)| (n + a, d + 1.0)),
            };
            (den > 0.0).then(|| num / den)
        })
        .collect()
}

/// Mean of the weighted marginal over δ = 1..=`upto`.
pub fn mean_marginal(sig: &MemorySignature, upto: usize) -> f64 {
    let m = marginal_recall(sig, Marginal::Weighted);
    let vals: Vec<f64> = m.iter().take(upto).flatten().copied().collect();
    vals.iter().sum::<f64>() / vals.len().max(1) as f64
}

/// Sum of absolute per-cell differences over cells present in both.
pub fn l1_distance(a: &MemorySignature, b: &MemorySignature) -> Result<f64> {
    let d = diff_signatures(a, b)?;
    Ok(d.diff.iter().flatten().flatten().map(|x| x.abs()).sum())
}

/// `A - B`, cell by cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureDiff {
    pub symbols: SymbolSet,
    pub a: Vec<Vec<Option<f64>>>,
    pub b: Vec<Vec<Option<f64>>>,
    /// Present only where both operands are.
    pub diff: Vec<Vec<Option<f64>>>,
    pub meta_a: SignatureMeta,
    pub meta_b: SignatureMeta,
}

impl SignatureDiff {
    pub fn max_delta(&self) -> usize {
        self.diff.len()
    }
}

pub fn diff_signatures(a: &MemorySignature, b: &MemorySignature) -> Result<SignatureDiff> {
    if a.symbols != b.symbols {
        return Err(Error::IncompatibleSignatures("symbol sets differ".into()));
    }
    if a.max_delta() != b.max_delta() {
        return Err(Error::IncompatibleSignatures(format!("max delta {} vs {}", a.max_delta(), b.max_delta())));
    }
    let diff = a
        .accuracy
        .iter()
        .zip(&b.accuracy)
        .map(|(ra, rb)| {
            ra.iter()
                .zip(rb)
                .map(|(x, y)| match (x, y) {
                    (Some(x), Some(y)) => Some(x - y),
                    _ => None,
                })
                .collect()
        })
        .collect();
    Ok(SignatureDiff {
        symbols: a.symbols.clone(),
        a: a.accuracy.clone(),
        b: b.accuracy.clone(),
        diff,
        meta_a: a.meta.clone(),
        meta_b: b.meta.clone(),
    })
}
