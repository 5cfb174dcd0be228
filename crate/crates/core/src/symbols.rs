//! Grapheme alphabet and text encoding.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symbol standing in for every decimal digit when digit folding is on.
pub const DIGIT_SYMBOL: char = '#';

/// An ordered grapheme alphabet. Ids are positions in the list.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "SymbolSpec", into = "SymbolSpec")]
pub struct SymbolSet {
    symbols: Vec<char>,
    fold_digits: bool,
    index: HashMap<char, usize>,
    space: usize,
}

#[derive(Clone, Serialize, Deserialize)]
struct SymbolSpec {
    symbols: String,
    fold_digits: bool,
}

impl TryFrom<SymbolSpec> for SymbolSet {
    type Error = Error;

    fn try_from(spec: SymbolSpec) -> Result<Self> {
        SymbolSet::new(spec.symbols.chars().collect(), spec.fold_digits)
    }
}

impl From<SymbolSet> for SymbolSpec {
    fn from(s: SymbolSet) -> Self {
        SymbolSpec { symbols: s.symbols.iter().collect(), fold_digits: s.fold_digits }
    }
}

impl PartialEq for SymbolSet {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols && self.fold_digits == other.fold_digits
    }
}

impl Eq for SymbolSet {}

impl fmt::Debug for SymbolSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.symbols.iter().collect();
        write!(f, "SymbolSet({s:?}, fold_digits={})", self.fold_digits)
    }
}

impl Default for SymbolSet {
    /// Lowercase letters, space, `.`, `,`, `#` (digits) and the apostrophe.
    fn default() -> Self {
        let mut symbols: Vec<char> = ('a'..='z').collect();
        symbols.extend([' ', '.', ',', DIGIT_SYMBOL, '\'']);
        SymbolSet::new(symbols, true).expect("default symbol set is valid")
    }
}

impl SymbolSet {
    /// Builds a set from an ordered list. With `fold_digits`, `#` is added
    /// when missing and every digit encodes to it.
    pub fn new(mut symbols: Vec<char>, fold_digits: bool) -> Result<Self> {
        if fold_digits && !symbols.contains(&DIGIT_SYMBOL) {
            symbols.push(DIGIT_SYMBOL);
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Parse(format!("duplicate symbol {c:?}")));
            }
        }
        let space = *index.get(&' ').ok_or_else(|| Error::Parse("symbol set must contain the space symbol".into()))?;
        Ok(SymbolSet { symbols, fold_digits, index, space })
    }

    /// Parses the one-symbol-per-line config format. `\d` declares the digit
    /// fold symbol, `\s` (or a line holding a single space) is the space.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        let mut fold = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            match line {
                "" => continue,
                " " | "\\s" => symbols.push(' '),
                "\\d" => {
                    fold = true;
                    symbols.push(DIGIT_SYMBOL);
                }
                other => {
                    let mut chars = other.chars();
                    match (chars.next(), chars.next()) {
                        (Some(c), None) => symbols.push(c),
                        _ => {
                            return Err(Error::Parse(format!(
                                "line {}: expected a single character, got {other:?}",
                                n + 1
                            )))
                        }
                    }
                }
            }
        }
        SymbolSet::new(symbols, fold)
    }

    pub fn to_config(&self) -> String {
        let mut out = String::new();
        for &c in &self.symbols {
            match c {
                ' ' => out.push_str("\\s"),
                DIGIT_SYMBOL if self.fold_digits => out.push_str("\\d"),
                c => out.push(c),
            }
            out.push('\n');
        }
        out
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn folds_digits(&self) -> bool {
        self.fold_digits
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn symbol(&self, id: usize) -> char {
        self.symbols[id]
    }

    pub fn space_id(&self) -> usize {
        self.space
    }

    /// Lowercases, folds digits and maps anything unsupported to space.
    pub fn encode_text(&self, text: &str) -> Result<EncodedSegment> {
        let ids: Vec<usize> = text
            .chars()
            .map(|c| {
                let c = c.to_ascii_lowercase();
                let c = if self.fold_digits && c.is_ascii_digit() { DIGIT_SYMBOL } else { c };
                self.id(c).unwrap_or(self.space)
            })
            .collect();
        if ids.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(EncodedSegment { ids })
    }

    pub fn decode(&self, segment: &EncodedSegment) -> String {
        segment.ids.iter().map(|&i| self.symbols[i]).collect()
    }
}

/// A non-empty sequence of valid symbol ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedSegment {
    ids: Vec<usize>,
}

impl EncodedSegment {
    pub fn new(ids: Vec<usize>, symbols: &SymbolSet) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptySegment);
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= symbols.len()) {
            return Err(Error::Parse(format!("symbol id {bad} out of range for {} symbols", symbols.len())));
        }
        Ok(EncodedSegment { ids })
    }

    #[inline]
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn text(s: &SymbolSet, seg: &EncodedSegment) -> String {
        s.decode(seg)
    }

    #[test]
    fn default_set_layout() {
        let s = SymbolSet::default();
        assert_eq!(s.len(), 31);
        assert_eq!(s.id('a'), Some(0));
        assert_eq!(s.space_id(), 26);
        assert!(s.folds_digits());
    }

    #[test]
    fn encode_examples() {
        let s = SymbolSet::default();
        assert_eq!(text(&s, &s.encode_text("Ab1").unwrap()), "ab#");
        assert_eq!(text(&s, &s.encode_text("don't stop.").unwrap()), "don't stop.");
        assert_eq!(text(&s, &s.encode_text("§42§").unwrap()), " ## ");
        assert_eq!(s.encode_text("Ab1").unwrap(), s.encode_text("ab#").unwrap());
    }

    #[test]
    fn empty_text_is_rejected() {
        assert!(matches!(SymbolSet::default().encode_text(""), Err(Error::EmptySegment)));
    }

    #[test]
    fn set_validation() {
        assert!(SymbolSet::new(vec!['a', 'b'], false).is_err());
        assert!(SymbolSet::new(vec!['a', ' ', 'a'], false).is_err());
        let s = SymbolSet::new(vec!['a', ' '], false).unwrap();
        // no digit fold: digits are unsupported and become spaces
        assert_eq!(s.decode(&s.encode_text("a1").unwrap()), "a ");
    }

    #[test]
    fn config_round_trip() {
        let s = SymbolSet::default();
        let cfg = s.to_config();
        assert!(cfg.contains("\\d\n"));
        assert!(cfg.contains("\\s\n"));
        assert_eq!(SymbolSet::parse_config(&cfg).unwrap(), s);
        let literal = SymbolSet::parse_config("a\n \nb\n").unwrap();
        assert_eq!(literal.symbols(), &['a', ' ', 'b']);
        assert!(SymbolSet::parse_config("ab\n \n").is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = SymbolSet::default();
        let json = serde_json::to_string(&s).unwrap();
        let back: SymbolSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.id('\''), s.id('\''));
    }

    proptest! {
        #[test]
        fn encoding_is_idempotent(input in "\\PC{1,60}") {
            let s = SymbolSet::default();
            let once = s.encode_text(&input).unwrap();
            let twice = s.encode_text(&s.decode(&once)).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
