use memsig::corpus::{batch_windows, bigram_frequencies, split_corpus, SplitRatios};
use memsig::exec;
use memsig::ngram::{ngram_state_trace, train_ngram, DEFAULT_ADD_K};
use memsig::probe::{
    build_probe_dataset, decoder_param_count, probe_pairs, run_probe, size_decoder, DecoderTrainConfig, ProbePlan,
};
use memsig::rnn::{
    effective_kernel, extract_state_trace, perplexity, Architecture, CellKind, CharLM, FactorizedKernel,
    ForwardOptions, StateChoice,
};
use memsig::symbols::{EncodedSegment, SymbolSet};
use memsig::synthetic::{disjoint_markov_pair, iid_uniform, periodic};
use memsig::tensor::Matrix;
use memsig::trace::StateTrace;
use memsig::train::{train_lm, train_step, Adam, AdamConfig, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn encode(lines: &[String], s: &SymbolSet) -> Vec<EncodedSegment> {
    lines.iter().map(|l| s.encode_text(l).unwrap()).collect()
}

#[test]
fn uniform_text_bigrams_approach_one_over_v_squared() {
    let s = SymbolSet::default();
    let segs = encode(&iid_uniform(&s, 1001, 1000..1001, 1).unwrap(), &s);
    let stats = bigram_frequencies(&segs, &s).unwrap();
    let expected = 1.0 / (s.len() * s.len()) as f64;
    for &f in &stats.freq {
        assert!((f - expected).abs() <= 0.002, "{f} vs {expected}");
    }
}

#[test]
fn factored_application_matches_dense_materialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let kernel = FactorizedKernel::<f32>::random(12, 8, 25, 0.5, &mut rng);
    for _ in 0..100 {
        let lambda: Vec<f32> = (0..25).map(|_| rng.random_range(0.0..0.2)).collect();
        let x: Vec<f32> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eff = effective_kernel(&kernel, &lambda).unwrap();
        let fast = eff.apply(&x).unwrap();
        let dense = eff.materialize().unwrap();
        for (r, &y) in fast.iter().enumerate() {
            let d: f32 = dense.row(r).iter().zip(&x).map(|(w, x)| w * x).sum();
            assert!((y - d).abs() <= 1e-5, "row {r}: {y} vs {d}");
        }
    }
}

fn segments_strategy(vocab: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    proptest::collection::vec(proptest::collection::vec(0..vocab, 1..40), 1..6)
}

fn to_segments(raw: &[Vec<usize>], s: &SymbolSet) -> Vec<EncodedSegment> {
    raw.iter().map(|ids| EncodedSegment::new(ids.clone(), s).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_pass_is_deterministic(seed in 0u64..1000, ids in proptest::collection::vec(0usize..31, 2..30)) {
        let arch = Architecture::new(CellKind::Gru, 2, 8, 31);
        let a = CharLM::<f32>::new(arch.clone(), seed).unwrap();
        let b = CharLM::<f32>::new(arch, seed).unwrap();
        let opts = ForwardOptions { capture: Some(StateChoice::Output), ..ForwardOptions::default() };
        let pa = a.lm_forward(&ids, 1, ids.len(), None, opts).unwrap();
        let pb = b.lm_forward(&ids, 1, ids.len(), None, opts).unwrap();
        prop_assert_eq!(pa.logits.data(), pb.logits.data());
    }

    #[test]
    fn zero_model_perplexity_is_vocab_size(raw in segments_strategy(31)) {
        let s = SymbolSet::default();
        let mut segs = to_segments(&raw, &s);
        segs.push(EncodedSegment::new(vec![0, 1], &s).unwrap());
        let model = CharLM::<f32>::zeros(Architecture::new(CellKind::Lstm, 2, 6, s.len())).unwrap();
        prop_assert!((perplexity(&model, &segs).unwrap() - s.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn probe_pairs_count_every_in_segment_lookback(raw in segments_strategy(5), delta in 1usize..8) {
        let mut offsets = vec![0];
        for seg in &raw {
            offsets.push(offsets.last().unwrap() + seg.len());
        }
        let n = *offsets.last().unwrap();
        let trace = StateTrace::new(vec![Matrix::zeros(n, 2)], raw.concat(), offsets, "t").unwrap();
        let expected: usize = raw.iter().map(|s| s.len().saturating_sub(delta)).sum();
        match probe_pairs(&trace, delta, 0) {
            Ok(split) => {
                prop_assert_eq!(split.len(), expected);
                for (&row, &target) in split.rows.iter().zip(&split.targets) {
                    prop_assert_eq!(trace.inputs[row - delta], target);
                }
            }
            Err(_) => prop_assert_eq!(expected, 0),
        }
    }

    #[test]
    fn decoder_width_is_the_smallest_meeting_the_floor(
        input in 1usize..400, vocab in 2usize..40, floor in 0usize..2_000_000, depth in 1usize..4,
    ) {
        let w = size_decoder(input, vocab, floor, depth);
        prop_assert!(decoder_param_count(input, w, depth, vocab) >= floor);
        if w > 1 {
            prop_assert!(decoder_param_count(input, w - 1, depth, vocab) < floor);
        }
    }
}

fn markov_split(seed: u64) -> (SymbolSet, memsig::corpus::CorpusSplit) {
    let s = SymbolSet::default();
    let (a, _) = disjoint_markov_pair(s.len(), 3, seed).unwrap();
    let segs = encode(&a.generate(&s, 300, 30..80, seed).unwrap(), &s);
    let split = split_corpus(&segs, SplitRatios::default(), seed).unwrap();
    (s, split)
}

#[test]
fn adam_lowers_the_loss_over_the_first_steps() {
    let mut improved = 0;
    for seed in 0..10 {
        let (s, split) = markov_split(seed);
        let mut model = CharLM::<f32>::new(Architecture::new(CellKind::Lstm, 1, 16, s.len()), seed).unwrap();
        let config = TrainConfig::default();
        let mut adam = Adam::new(config.adam, &model);
        let batch = batch_windows(&split.train, 32, 16, seed).next().unwrap();
        let losses: Vec<f64> =
            (0..6).map(|step| train_step(&mut model, &mut adam, &batch, &config, step).unwrap()).collect();
        if losses.windows(2).all(|w| w[1] < w[0]) {
            improved += 1;
        }
    }
    assert!(improved >= 9, "{improved} of 10 seeds");
}

#[test]
fn probing_leaves_the_model_untouched() {
    let (s, split) = markov_split(3);
    let model = CharLM::<f32>::new(Architecture::new(CellKind::Lstm, 2, 8, s.len()), 1).unwrap();
    let config = TrainConfig { max_epochs: 1, ..TrainConfig::default() };
    let ck = train_lm(model, &s, &split.train, &split.dev, &config).unwrap();
    let before = ck.to_bytes().unwrap();
    let train = extract_state_trace(&ck.model, &split.train, StateChoice::Cell).unwrap();
    let eval = extract_state_trace(&ck.model, &split.eval, StateChoice::Cell).unwrap();
    let plan = ProbePlan {
        max_delta: 2,
        layers: vec![0, 1],
        depth: 2,
        floors: vec![ck.model.probe_param_floor(0), ck.model.probe_param_floor(1)],
        min_width: 1,
        grid: vec![1.0],
        train: DecoderTrainConfig { max_epochs: 1, ..DecoderTrainConfig::default() },
    };
    run_probe(&train, &eval, s.len(), &plan).unwrap();
    assert_eq!(before, ck.to_bytes().unwrap());
}

#[test]
fn ngram_states_recall_everything_inside_the_context() {
    let (s, split) = markov_split(4);
    let model = train_ngram(&split.train, &s, 3, DEFAULT_ADD_K).unwrap();
    assert!(model.perplexity(&split.train).unwrap() <= model.perplexity(&split.eval).unwrap());
    let train = ngram_state_trace(&model, &split.train).unwrap();
    let eval = ngram_state_trace(&model, &split.eval).unwrap();
    let plan = ProbePlan {
        max_delta: 2,
        layers: vec![0],
        depth: 2,
        floors: vec![0],
        min_width: 32,
        grid: vec![1.0],
        train: DecoderTrainConfig::default(),
    };
    for r in run_probe(&train, &eval, s.len(), &plan).unwrap() {
        assert!(r.eval.overall() >= 0.99, "δ={} {}", r.delta, r.eval.overall());
    }
    let ds = build_probe_dataset(&train, &eval, 2, 0, s.len()).unwrap();
    assert_eq!(ds.width(), 2 * s.len());
}

fn quick_train(lines: Vec<String>, epochs: usize) -> (f64, usize, f64) {
    let s = SymbolSet::default();
    let split = split_corpus(&encode(&lines, &s), SplitRatios::default(), 1).unwrap();
    let model = CharLM::<f32>::new(Architecture::new(CellKind::Lstm, 1, 16, s.len()), 1).unwrap();
    let config = TrainConfig {
        max_epochs: epochs,
        adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let ck = train_lm(model, &s, &split.train, &split.dev, &config).unwrap();
    let best = ck.history.iter().map(|r| r.dev_perplexity).fold(f64::INFINITY, f64::min);
    (perplexity(&ck.model, &split.eval).unwrap(), ck.history.len(), best)
}

#[test]
fn periodic_text_is_learned_almost_perfectly() {
    let (ppl, _, _) = quick_train(periodic("abcdefgh", 200, 40..100, 2).unwrap(), 30);
    assert!(ppl <= 1.1, "{ppl}");
}

#[test]
fn uniform_text_cannot_be_predicted_and_stops_early() {
    let s = SymbolSet::default();
    let (ppl, epochs_run, best) = quick_train(iid_uniform(&s, 300, 40..100, 3).unwrap(), 30);
    assert!(ppl >= s.len() as f64 - 1.0, "{ppl}");
    assert!(best >= s.len() as f64 - 1.0, "{best}");
    assert!(epochs_run < 31, "{epochs_run} records");
}

#[test]
fn training_is_reproducible_and_thread_count_independent() {
    let (s, split) = markov_split(5);
    let arch = Architecture::new(CellKind::Factorized, 1, 8, s.len());
    let config = TrainConfig { max_epochs: 2, keep_prob: 0.9, ..TrainConfig::default() };
    let run = || {
        let mut model = CharLM::<f32>::new(arch.clone(), 9).unwrap();
        let stats = bigram_frequencies(&split.train, &s).unwrap();
        model.set_lambda(stats.freq.iter().map(|&f| f as f32).collect()).unwrap();
        train_lm(model, &s, &split.train, &split.dev, &config).unwrap().to_bytes().unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a, exec::with_threads(1, run));
}
