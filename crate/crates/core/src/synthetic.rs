//! Seeded synthetic corpora with known memory structure.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::symbols::SymbolSet;

fn check(lines: usize, lengths: &Range<usize>) -> Result<()> {
    if lines == 0 || lengths.start == 0 || lengths.is_empty() {
        return Err(Error::Usage(format!(
            "need at least one line and a non-empty length range, got {lines} lines of {lengths:?}"
        )));
    }
    Ok(())
}

/// Lines cycling through `pattern` from a random phase.
pub fn periodic(pattern: &str, lines: usize, lengths: Range<usize>, seed: u64) -> Result<Vec<String>> {
    check(lines, &lengths)?;
    let chars: Vec<char> = pattern.chars().collect();
    if chars.is_empty() {
        return Err(Error::Usage("empty period pattern".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..lines)
        .map(|_| {
            let phase = rng.random_range(0..chars.len());
            let len = rng.random_range(lengths.clone());
            chars.iter().cycle().skip(phase).take(len).collect()
        })
        .collect())
}

/// Lines of symbols drawn independently and uniformly from `symbols`.
pub fn iid_uniform(symbols: &SymbolSet, lines: usize, lengths: Range<usize>, seed: u64) -> Result<Vec<String>> {
    check(lines, &lengths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = symbols.len();
    Ok((0..lines)
        .map(|_| {
            let len = rng.random_range(lengths.clone());
            (0..len).map(|_| symbols.symbol(rng.random_range(0..v))).collect()
        })
        .collect())
}

/// First-order chain where each symbol has a fixed set of equiprobable successors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkovChain {
    pub successors: Vec<Vec<usize>>,
}

impl MarkovChain {
    pub fn generate(&self, symbols: &SymbolSet, lines: usize, lengths: Range<usize>, seed: u64) -> Result<Vec<String>> {
        check(lines, &lengths)?;
        if self.successors.len() != symbols.len() {
            return Err(Error::Shape(format!(
                "chain over {} symbols, symbol set has {}",
                self.successors.len(),
                symbols.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..lines)
            .map(|_| {
                let len = rng.random_range(lengths.clone());
                let mut cur = rng.random_range(0..symbols.len());
                let mut line = String::with_capacity(len);
                for _ in 0..len {
                    line.push(symbols.symbol(cur));
                    let next = &self.successors[cur];
                    cur = next[rng.random_range(0..next.len())];
                }
                line
            })
            .collect())
    }

    pub fn allows(&self, a: usize, b: usize) -> bool {
        self.successors[a].contains(&b)
    }
}

/// Two chains whose bigram supports do not intersect.
pub fn disjoint_markov_pair(vocab: usize, fanout: usize, seed: u64) -> Result<(MarkovChain, MarkovChain)> {
    if fanout == 0 || 2 * fanout > vocab {
        return Err(Error::Usage(format!("fanout {fanout} needs 0 < 2·fanout <= {vocab}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut a, mut b) = (Vec::with_capacity(vocab), Vec::with_capacity(vocab));
    for _ in 0..vocab {
        let mut order: Vec<usize> = (0..vocab).collect();
        order.shuffle(&mut rng);
        a.push(order[..fanout].to_vec());
        b.push(order[fanout..2 * fanout].to_vec());
    }
    Ok((MarkovChain { successors: a }, MarkovChain { successors: b }))
}
