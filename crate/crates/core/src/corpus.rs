//! Corpus loading, splitting, truncated-BPTT batching and bigram statistics.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbols::{EncodedSegment, SymbolSet};

pub const DEFAULT_WINDOW: usize = 64;
pub const DEFAULT_BATCH: usize = 32;

/// Encodes one segment per non-blank line.
pub fn encode_lines(text: &str, symbols: &SymbolSet) -> Vec<EncodedSegment> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| symbols.encode_text(l.strip_suffix('\r').unwrap_or(l)).ok())
        .collect()
}

pub fn read_segments(path: &Path, symbols: &SymbolSet) -> Result<Vec<EncodedSegment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let segments = encode_lines(&text, symbols);
    if segments.is_empty() {
        return Err(Error::EmptyData(format!("{} has no segments", path.display())));
    }
    Ok(segments)
}

pub fn total_symbols(segments: &[EncodedSegment]) -> usize {
    segments.iter().map(EncodedSegment::len).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<EncodedSegment>,
    pub dev: Vec<EncodedSegment>,
    pub eval: Vec<EncodedSegment>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub eval: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.8, dev: 0.1, eval: 0.1 }
    }
}

/// Shuffles segment indices with `seed` and cuts them into three
/// partitions. Each partition keeps corpus order internally.
pub fn split_corpus(segments: &[EncodedSegment], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    let parts = [ratios.train, ratios.dev, ratios.eval];
    if parts.iter().any(|&r| !(r > 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Usage(format!("split ratios must be positive and sum to 1, got {parts:?}")));
    }
    let n = segments.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 segments to split, got {n}")));
    }
    let mut dev_n = ((ratios.dev * n as f64).round() as usize).max(1);
    let mut eval_n = ((ratios.eval * n as f64).round() as usize).max(1);
    while dev_n + eval_n > n - 1 {
        if dev_n >= eval_n {
            dev_n -= 1;
        } else {
            eval_n -= 1;
        }
    }
    let train_n = n - dev_n - eval_n;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| segments[i].clone()).collect::<Vec<_>>()
    };
    Ok(CorpusSplit {
        train: take(0..train_n),
        dev: take(train_n..train_n + dev_n),
        eval: take(train_n + dev_n..n),
        seed,
    })
}

pub const SPLIT_FILES: [&str; 3] = ["train.txt", "dev.txt", "eval.txt"];

/// Files a corpus argument refers to: the three split files of a prepared
/// directory, or the single text file.
pub fn corpus_files(path: &Path) -> Vec<PathBuf> {
    if path.is_dir() {
        SPLIT_FILES.iter().map(|f| path.join(f)).collect()
    } else {
        vec![path.to_path_buf()]
    }
}

/// Reads a prepared directory as is, or splits a single file with `seed`.
pub fn load_split(path: &Path, symbols: &SymbolSet, ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    if path.is_dir() {
        let files = corpus_files(path);
        Ok(CorpusSplit {
            train: read_segments(&files[0], symbols)?,
            dev: read_segments(&files[1], symbols)?,
            eval: read_segments(&files[2], symbols)?,
            seed,
        })
    } else {
        split_corpus(&read_segments(path, symbols)?, ratios, seed)
    }
}

/// One decoded segment per line.
pub fn write_segments(path: &Path, segments: &[EncodedSegment], symbols: &SymbolSet) -> Result<()> {
    let mut text = String::new();
    for seg in segments {
        text.push_str(&symbols.decode(seg));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Deterministically keeps `fraction` of the segments (at least one).
pub fn sample_fraction(segments: &[EncodedSegment], fraction: f64, seed: u64) -> Result<Vec<EncodedSegment>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Usage(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if segments.is_empty() {
        return Err(Error::EmptyData("no segments to sample".into()));
    }
    let keep = ((fraction * segments.len() as f64).round() as usize).clamp(1, segments.len());
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut idx = order[..keep].to_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| segments[i].clone()).collect())
}

/// A batch of next-symbol windows, row-major `[rows × steps]`.
///
/// `targets[r][t]` is the symbol following `inputs[r][t]` in the same
/// segment. Rows shorter than `steps` are padded with `mask == false`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowBatch {
    pub rows: usize,
    pub steps: usize,
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl WindowBatch {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Builds a batch from `(inputs, targets)` rows of possibly different lengths.
    pub fn from_rows(rows: &[(&[usize], &[usize])]) -> Self {
        let steps = rows.iter().map(|(i, _)| i.len()).max().unwrap_or(0);
        let mut batch = WindowBatch {
            rows: rows.len(),
            steps,
            inputs: vec![0; rows.len() * steps],
            targets: vec![0; rows.len() * steps],
            mask: vec![false; rows.len() * steps],
        };
        for (r, (inp, tgt)) in rows.iter().enumerate() {
            debug_assert_eq!(inp.len(), tgt.len());
            let base = r * steps;
            batch.inputs[base..base + inp.len()].copy_from_slice(inp);
            batch.targets[base..base + tgt.len()].copy_from_slice(tgt);
            batch.mask[base..base + inp.len()].iter_mut().for_each(|m| *m = true);
        }
        batch
    }

    /// Rows `start..start+len` as a new batch.
    pub fn slice_rows(&self, start: usize, len: usize) -> WindowBatch {
        let range = start * self.steps..(start + len) * self.steps;
        WindowBatch {
            rows: len,
            steps: self.steps,
            inputs: self.inputs[range.clone()].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            mask: self.mask[range].to_vec(),
        }
    }
}

/// Cuts every segment into windows of at most `window` (input, target)
/// pairs, shuffles the windows with `seed` and groups them `batch` at a
/// time. Windows never span segments; segments shorter than two symbols are
/// skipped. Each batch is padded to its longest window.
pub fn batch_windows(
    segments: &[EncodedSegment],
    window: usize,
    batch: usize,
    seed: u64,
) -> impl Iterator<Item = WindowBatch> + '_ {
    assert!(window >= 2, "window must be at least 2");
    assert!(batch >= 1, "batch must be at least 1");
    let mut windows: Vec<(usize, usize, usize)> = Vec::new();
    for (s, seg) in segments.iter().enumerate() {
        let pairs = seg.len().saturating_sub(1);
        let mut start = 0;
        while start < pairs {
            let len = window.min(pairs - start);
            windows.push((s, start, len));
            start += len;
        }
    }
    windows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let chunks: Vec<Vec<(usize, usize, usize)>> = windows.chunks(batch).map(<[_]>::to_vec).collect();
    chunks.into_iter().map(move |chunk| {
        let rows: Vec<(&[usize], &[usize])> = chunk
            .iter()
            .map(|&(s, start, len)| {
                let ids = segments[s].ids();
                (&ids[start..start + len], &ids[start + 1..start + len + 1])
            })
            .collect();
        WindowBatch::from_rows(&rows)
    })
}

/// Normalized bigram frequencies, `freq[a * |V| + b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramStats {
    pub vocab: usize,
    pub freq: Vec<f64>,
}

impl BigramStats {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.freq[a * self.vocab + b]
    }

    pub fn zeros(vocab: usize) -> Self {
        BigramStats { vocab, freq: vec![0.0; vocab * vocab] }
    }

    /// Index of the bigram written as two symbols, e.g. `"he"`.
    pub fn index_of(symbols: &SymbolSet, bigram: &str) -> Option<usize> {
        let mut chars = bigram.chars();
        let (a, b) = (chars.next()?, chars.next()?);
        if chars.next().is_some() {
            return None;
        }
        Some(symbols.id(a)? * symbols.len() + symbols.id(b)?)
    }
}

/// Counts adjacent pairs inside each segment.
pub fn bigram_frequencies(segments: &[EncodedSegment], symbols: &SymbolSet) -> Result<BigramStats> {
    let v = symbols.len();
    let mut counts = vec![0u64; v * v];
    let mut total = 0u64;
    for seg in segments {
        for w in seg.ids().windows(2) {
            counts[w[0] * v + w[1]] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData("bigram statistics need at least 2 consecutive symbols".into()));
    }
    Ok(BigramStats { vocab: v, freq: counts.iter().map(|&c| c as f64 / total as f64).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> SymbolSet {
        SymbolSet::new(vec!['a', 'b', ' '], false).unwrap()
    }

    fn segs(s: &SymbolSet, lines: &[&str]) -> Vec<EncodedSegment> {
        lines.iter().map(|l| s.encode_text(l).unwrap()).collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = SymbolSet::default();
        let lines: Vec<String> = (0..10).map(|i| format!("line {i}")).collect();
        let refs: Vec<&str> = lines.iter().map(String::as_str).collect();
        let data = segs(&s, &refs);
        let split = split_corpus(&data, SplitRatios::default(), 7).unwrap();
        assert_eq!((split.train.len(), split.dev.len(), split.eval.len()), (8, 1, 1));
        assert_eq!(split, split_corpus(&data, SplitRatios::default(), 7).unwrap());

        let mut all: Vec<_> = split.train.iter().chain(&split.dev).chain(&split.eval).cloned().collect();
        all.sort_by(|a, b| a.ids().cmp(b.ids()));
        let mut orig = data.clone();
        orig.sort_by(|a, b| a.ids().cmp(b.ids()));
        assert_eq!(all, orig);
    }

    #[test]
    fn split_needs_three_segments() {
        let s = SymbolSet::default();
        let data = segs(&s, &["a", "b"]);
        assert!(matches!(split_corpus(&data, SplitRatios::default(), 1), Err(Error::InsufficientData(_))));
        let bad = SplitRatios { train: 0.5, dev: 0.1, eval: 0.1 };
        assert!(split_corpus(&segs(&s, &["a", "b", "c"]), bad, 1).is_err());
    }

    #[test]
    fn windows_shift_by_one() {
        let s = ab();
        let data = vec![EncodedSegment::new(vec![0, 1, 2, 0], &s).unwrap()];
        let batches: Vec<_> = batch_windows(&data, 3, 4, 1).collect();
        assert_eq!(batches.len(), 1);
        let b = &batches[0];
        assert_eq!((b.rows, b.steps), (1, 3));
        assert_eq!(b.inputs, vec![0, 1, 2]);
        assert_eq!(b.targets, vec![1, 2, 0]);
        assert!(b.mask.iter().all(|&m| m));
    }

    #[test]
    fn short_segments_are_padded_and_tiny_ones_skipped() {
        let s = ab();
        let data = segs(&s, &["ab", "abba", "b"]);
        let batches: Vec<_> = batch_windows(&data, 16, 8, 3).collect();
        assert_eq!(batches.len(), 1);
        let b = &batches[0];
        assert_eq!((b.rows, b.steps), (2, 3));
        assert_eq!(b.valid_count(), 1 + 3);
    }

    #[test]
    fn batch_order_is_seeded() {
        let s = SymbolSet::default();
        let data = segs(&s, &["the quick brown fox", "jumps over", "the lazy dog", "again and again"]);
        let a: Vec<_> = batch_windows(&data, 4, 3, 9).collect();
        let b: Vec<_> = batch_windows(&data, 4, 3, 9).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn bigram_examples() {
        let s = ab();
        let aaa = bigram_frequencies(&segs(&s, &["aaa"]), &s).unwrap();
        assert_eq!(aaa.get(0, 0), 1.0);
        assert_eq!(aaa.freq.iter().sum::<f64>(), 1.0);

        let abab = bigram_frequencies(&segs(&s, &["abab"]), &s).unwrap();
        assert!((abab.get(0, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((abab.get(1, 0) - 1.0 / 3.0).abs() < 1e-12);

        assert!(matches!(bigram_frequencies(&segs(&s, &["a", "b"]), &s), Err(Error::InsufficientData(_))));
        assert_eq!(BigramStats::index_of(&s, "ba"), Some(3));
    }

    #[test]
    fn fraction_sampling() {
        let s = SymbolSet::default();
        let data: Vec<_> = (0..100).map(|i| s.encode_text(&format!("x{i}y")).unwrap()).collect();
        let five = sample_fraction(&data, 0.05, 3).unwrap();
        assert_eq!(five.len(), 5);
        assert_eq!(five, sample_fraction(&data, 0.05, 3).unwrap());
        assert!(sample_fraction(&data, 0.0, 3).is_err());
    }

    proptest! {
        #[test]
        fn batches_cover_every_pair_once(
            lens in proptest::collection::vec(1usize..40, 1..12),
            window in 2usize..10,
            batch in 1usize..6,
            seed in 0u64..1000,
        ) {
            let s = SymbolSet::default();
            // Unique positional ids make every (input, target) pair identifiable.
            let mut next = 0usize;
            let data: Vec<EncodedSegment> = lens.iter().map(|&l| {
                let ids = (0..l).map(|_| { next += 1; next % s.len() }).collect();
                EncodedSegment::new(ids, &s).unwrap()
            }).collect();

            let mut expected: Vec<(usize, usize, usize)> = Vec::new();
            for seg in &data {
                for w in seg.ids().windows(2) {
                    expected.push((w[0], w[1], 0));
                }
            }
            let mut seen: Vec<(usize, usize, usize)> = Vec::new();
            for b in batch_windows(&data, window, batch, seed) {
                prop_assert!(b.rows <= batch);
                prop_assert!(b.steps <= window);
                for i in 0..b.rows * b.steps {
                    if b.mask[i] {
                        seen.push((b.inputs[i], b.targets[i], 0));
                    }
                }
            }
            expected.sort_unstable();
            seen.sort_unstable();
            prop_assert_eq!(expected, seen);
        }

        #[test]
        fn bigram_frequencies_sum_to_one(text in "[a-z ]{2,200}") {
            let s = SymbolSet::default();
            let st = bigram_frequencies(&[s.encode_text(&text).unwrap()], &s).unwrap();
            prop_assert!((st.freq.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(st.freq.iter().all(|&f| f >= 0.0));
        }
    }
}
