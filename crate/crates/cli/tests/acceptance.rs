//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Pass criterion numbers as arguments to run a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use memsig::corpus::{read_segments, sample_fraction, split_corpus, CorpusSplit, SplitRatios};
use memsig::gradcheck::{grad_check, sample_coords, GradCheckReport};
use memsig::ngram::{ngram_state_trace, train_ngram, DEFAULT_ADD_K};
use memsig::params::Parameters;
use memsig::probe::{
    build_probe_dataset, decoder_param_count, run_probe, size_decoder, sweep_dropout, Decoder, DecoderConfig,
    DecoderEval, DecoderTrainConfig, ProbePlan, KEEP_GRID,
};
use memsig::rnn::{
    effective_kernel, extract_state_trace, lstm_step, perplexity, Architecture, CellKind, CharLM, Dropout,
    FactorizedKernel, ForwardOptions, Layer, LstmKernel, StateChoice,
};
use memsig::signature::{
    compile_signature, diff_signatures, l1_distance, marginal_recall, mean_marginal, parse_signature_csv,
    signature_to_csv, Marginal, MemorySignature, SignatureMeta,
};
use memsig::symbols::{EncodedSegment, SymbolSet};
use memsig::synthetic::{disjoint_markov_pair, iid_uniform, periodic};
use memsig::tensor::{cross_entropy, Matrix};
use memsig::train::{retrain_lm, train_lm, AdamConfig, Checkpoint, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn encode(lines: &[String], s: &SymbolSet) -> Vec<EncodedSegment> {
    lines.iter().map(|l| s.encode_text(l).unwrap()).collect()
}

fn shakespeare(s: &SymbolSet) -> CorpusSplit {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/shakespeare-1mb.txt");
    split_corpus(&read_segments(&path, s).unwrap(), SplitRatios::default(), 1).unwrap()
}

fn train(arch: Architecture, split: &CorpusSplit, s: &SymbolSet, config: &TrainConfig, seed: u64) -> Checkpoint {
    let model = CharLM::<f32>::new(arch, seed).unwrap();
    train_lm(model, s, &split.train, &split.dev, config).unwrap()
}

fn lm_config(lr: f64, epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        adam: AdamConfig { lr, ..AdamConfig::default() },
        max_epochs: epochs,
        patience,
        ..TrainConfig::default()
    }
}

/// Weighted marginal recall per δ of every probed layer.
fn probe_layers(model: &CharLM<f32>, split: &CorpusSplit, s: &SymbolSet, max_delta: usize) -> Vec<MemorySignature> {
    let choice = StateChoice::default_for(model.arch().cell);
    let train = extract_state_trace(model, &split.train, choice).unwrap();
    let eval = extract_state_trace(model, &split.eval, choice).unwrap();
    let layers: Vec<usize> = (0..model.arch().layers).collect();
    let plan = ProbePlan {
        max_delta,
        floors: layers.iter().map(|&l| model.probe_param_floor(l)).collect(),
        layers: layers.clone(),
        depth: 2,
        min_width: 32,
        grid: KEEP_GRID.to_vec(),
        train: DecoderTrainConfig::default(),
    };
    let results = run_probe(&train, &eval, s.len(), &plan).unwrap();
    layers
        .iter()
        .map(|&l| {
            let evals: Vec<(usize, DecoderEval)> =
                results.iter().filter(|r| r.layer == l).map(|r| (r.delta, r.eval.clone())).collect();
            let meta = SignatureMeta { model: model.arch().to_string(), layer: l, ..SignatureMeta::default() };
            compile_signature(s, &evals, meta).unwrap()
        })
        .collect()
}

fn marginals(sig: &MemorySignature) -> Vec<f64> {
    marginal_recall(sig, Marginal::Weighted).into_iter().map(|m| m.unwrap_or(0.0)).collect()
}

fn fmt(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn time_major<X: Copy>(v: &[X], rows: usize, steps: usize) -> Vec<X> {
    (0..steps).flat_map(|t| (0..rows).map(move |r| v[r * steps + t])).collect()
}

/// At least 200 coordinates spread over every tensor.
fn coords(sizes: &[usize], seed: u64) -> Vec<usize> {
    let mut per = 200usize.div_ceil(sizes.len());
    loop {
        let picked = sample_coords(sizes, per, seed);
        if picked.len() >= 200 || per >= sizes.iter().sum::<usize>() {
            return picked;
        }
        per *= 2;
    }
}

fn lm_gradcheck(cell: CellKind) -> GradCheckReport {
    let vocab = 6;
    let mut arch = Architecture::new(cell, 2, 5, vocab);
    arch.embed = 4;
    if cell == CellKind::Factorized {
        arch.layers = 1;
    }
    let mut model = CharLM::<f64>::new(arch, 5).unwrap();
    if cell == CellKind::Factorized {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        model.set_lambda((0..vocab * vocab).map(|_| rng.random_range(0.0..0.5)).collect()).unwrap();
    }
    let (rows, steps) = (2, 5);
    let ids = [0, 1, 2, 3, 4, 5, 4, 3, 2, 1];
    let targets = [1, 2, 3, 4, 5, 4, 3, 2, 1, 0];
    let (tm_t, tm_m) = (time_major(&targets, rows, steps), vec![true; rows * steps]);
    let opts = ForwardOptions::training(Dropout::Off);
    let loss = |p: &[f64]| {
        let mut m = model.clone();
        m.assign_flat(p);
        let pass = m.lm_forward(&ids, rows, steps, None, opts).unwrap();
        cross_entropy(&pass.logits, &tm_t, &tm_m).unwrap().0
    };
    let pass = model.lm_forward(&ids, rows, steps, None, opts).unwrap();
    let (_, dlogits) = cross_entropy(&pass.logits, &tm_t, &tm_m).unwrap();
    let grad = model.lm_backward(&pass, &dlogits).unwrap();
    let sizes = model.tensor_sizes();
    grad_check(loss, &model.flatten(), &grad.flatten(), &coords(&sizes, 7), 1e-5, 1e-4)
}

fn decoder_gradcheck() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut decoder = Decoder::<f64>::new(6, 10, 2, 5, 3);
    decoder.shift = (0..6).map(|_| rng.random_range(-0.5..0.5)).collect();
    decoder.scale = (0..6).map(|_| rng.random_range(0.5..2.0)).collect();
    for b in decoder.biases.iter_mut() {
        b.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
    }
    let x = Matrix::from_fn(9, 6, |_, _| rng.random_range(-2.0..2.0));
    let y: Vec<usize> = (0..9).map(|i| i % 5).collect();
    let loss = |p: &[f64]| {
        let mut d = decoder.clone();
        d.assign_flat(p);
        d.loss_and_grad(&x, &y, 1.0, None).unwrap().0
    };
    let (_, grad) = decoder.loss_and_grad(&x, &y, 1.0, None).unwrap();
    let sizes = decoder.tensor_sizes();
    grad_check(loss, &decoder.flatten(), &grad.flatten(), &coords(&sizes, 9), 1e-5, 1e-4)
}

fn criterion_1() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, report) in [
        ("lstm", lm_gradcheck(CellKind::Lstm)),
        ("gru", lm_gradcheck(CellKind::Gru)),
        ("factorized", lm_gradcheck(CellKind::Factorized)),
        ("decoder", decoder_gradcheck()),
    ] {
        ok &= report.passed() && report.checked >= 200;
        details.push(format!("{name} {} coords max rel {:.2e}", report.checked, report.max_relative_error));
    }
    check(ok, details.join("; "))
}

fn criterion_2() -> Outcome {
    let kernel = LstmKernel::<f64>::zeros(3, 4);
    let c0 = vec![1.5, -0.75, 3.0, 0.1];
    let (mut h, mut c) = (vec![0.0; 4], c0.clone());
    let mut exact = true;
    for t in 1..=40 {
        (h, c) = lstm_step(&kernel, &[0.3, -1.0, 2.0], &h, &c).unwrap();
        let scale = 0.5f64.powi(t);
        exact &= c.iter().zip(&c0).all(|(ct, c0)| *ct == c0 * scale);
    }
    let s = SymbolSet::default();
    let segs = encode(&iid_uniform(&s, 50, 2..80, 4).unwrap(), &s);
    let zero = CharLM::<f32>::zeros(Architecture::new(CellKind::Lstm, 2, 8, s.len())).unwrap();
    let ppl = perplexity(&zero, &segs).unwrap();
    let ok = exact && (ppl - s.len() as f64).abs() <= 1e-9 * s.len() as f64;
    check(
        ok,
        format!("c_t = 2^-t c_0 bit-exact over 40 steps: {exact}; zero-model perplexity {ppl} (|V| = {})", s.len()),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let kernel = FactorizedKernel::<f32>::random(16, 12, 64, 0.3, &mut rng);
    let mut worst = 0.0f32;
    for _ in 0..100 {
        let lambda: Vec<f32> = (0..64).map(|_| rng.random_range(0.0..0.1)).collect();
        let x: Vec<f32> = (0..28).map(|_| rng.random_range(-1.0..1.0)).collect();
        let eff = effective_kernel(&kernel, &lambda).unwrap();
        let fast = eff.apply(&x).unwrap();
        let dense = eff.materialize().unwrap();
        for (r, y) in fast.iter().enumerate() {
            let d: f32 = dense.row(r).iter().zip(&x).map(|(w, x)| w * x).sum();
            worst = worst.max((y - d).abs());
        }
    }
    let s = SymbolSet::default();
    let fact = CharLM::<f32>::new(Architecture::new(CellKind::Factorized, 1, 8, s.len()), 3).unwrap();
    let mut plain = CharLM::<f32>::zeros(Architecture::new(CellKind::Lstm, 1, 8, s.len())).unwrap();
    plain.embedding = fact.embedding.clone();
    plain.projection = fact.projection.clone();
    plain.proj_bias = fact.proj_bias.clone();
    if let Layer::Factorized(k) = &fact.layers[0] {
        plain.layers[0] = Layer::Lstm(k.base.clone());
    }
    let ids: Vec<usize> = (0..40).map(|i| (i * 7) % s.len()).collect();
    let a = fact.lm_forward(&ids, 1, ids.len(), None, ForwardOptions::default()).unwrap();
    let b = plain.lm_forward(&ids, 1, ids.len(), None, ForwardOptions::default()).unwrap();
    let bit_exact = a.logits.data() == b.logits.data();
    check(
        worst <= 1e-5 && bit_exact,
        format!(
            "max |factored - dense| {worst:.2e} over 100 λ draws; λ=0 logits bit-identical to base LSTM: {bit_exact}"
        ),
    )
}

fn synthetic_recall(lines: Vec<String>) -> (f64, Vec<f64>) {
    let s = SymbolSet::default();
    let split = split_corpus(&encode(&lines, &s), SplitRatios::default(), 1).unwrap();
    let ck = train(Architecture::new(CellKind::Lstm, 1, 32, s.len()), &split, &s, &lm_config(1e-2, 30, 3), 1);
    let ppl = perplexity(&ck.model, &split.eval).unwrap();
    (ppl, marginals(&probe_layers(&ck.model, &split, &s, 8)[0]))
}

fn criterion_4() -> Outcome {
    let s = SymbolSet::default();
    let (pp, periodic_recall) = synthetic_recall(periodic("abcdefgh", 600, 40..120, 3).unwrap());
    let (ip, iid_recall) = synthetic_recall(iid_uniform(&s, 600, 40..120, 3).unwrap());
    let chance = 1.0 / s.len() as f64;
    let periodic_ok = pp <= 1.1 && periodic_recall.iter().all(|&r| r >= 0.95);
    let iid_ok = iid_recall[1..].iter().all(|&r| (r - chance).abs() <= 0.05);
    check(
        periodic_ok && iid_ok,
        format!(
            "periodic ppl {pp:.4} recall {} (ok: {periodic_ok}); iid ppl {ip:.3} recall {} vs chance {chance:.3} (ok: {iid_ok})",
            fmt(&periodic_recall),
            fmt(&iid_recall)
        ),
    )
}

fn criterion_5() -> Outcome {
    let s = SymbolSet::default();
    let split = shakespeare(&s);
    let model = train_ngram(&split.train, &s, 5, DEFAULT_ADD_K).unwrap();
    let train = ngram_state_trace(&model, &split.train).unwrap();
    let eval = ngram_state_trace(&model, &split.eval).unwrap();
    let plan = ProbePlan {
        max_delta: 4,
        layers: vec![0],
        depth: 2,
        floors: vec![0],
        min_width: 32,
        grid: KEEP_GRID.to_vec(),
        train: DecoderTrainConfig::default(),
    };
    let recall: Vec<f64> = run_probe(&train, &eval, s.len(), &plan).unwrap().iter().map(|r| r.eval.overall()).collect();
    check(recall.iter().all(|&r| r >= 0.99), format!("5-gram recall δ=1..4 {}", fmt(&recall)))
}

/// Each adjacent pair may move against the trend by at most `tol`.
fn monotone(values: &[f64], increasing: bool, tol: f64) -> bool {
    values.windows(2).all(|w| if increasing { w[1] >= w[0] - tol } else { w[1] <= w[0] + tol })
}

fn shakespeare_config() -> TrainConfig {
    lm_config(3e-3, 4, 2)
}

fn criterion_6() -> Outcome {
    let s = SymbolSet::default();
    let split = shakespeare(&s);
    let (mut ppls, mut recalls) = (Vec::new(), Vec::new());
    for n in [16, 32, 64, 128] {
        let ck = train(Architecture::new(CellKind::Lstm, 1, n, s.len()), &split, &s, &shakespeare_config(), 1);
        ppls.push(perplexity(&ck.model, &split.eval).unwrap());
        recalls.push(mean_marginal(&probe_layers(&ck.model, &split, &s, 6)[0], 6));
    }
    let ppl_ok = ppls.windows(2).all(|w| w[1] < w[0]);
    let recall_ok = monotone(&recalls, true, 0.02);
    check(ppl_ok && recall_ok, format!("sizes 16,32,64,128: eval ppl {} mean recall δ≤6 {}", fmt(&ppls), fmt(&recalls)))
}

fn criterion_7() -> Outcome {
    let s = SymbolSet::default();
    let split = shakespeare(&s);
    let ck = train(Architecture::new(CellKind::Lstm, 3, 64, s.len()), &split, &s, &shakespeare_config(), 1);
    let recalls: Vec<f64> = probe_layers(&ck.model, &split, &s, 6).iter().map(|sig| mean_marginal(sig, 6)).collect();
    check(monotone(&recalls, false, 0.02), format!("lstm[3,64] mean recall δ≤6 by layer {}", fmt(&recalls)))
}

fn criterion_8() -> Outcome {
    let s = SymbolSet::default();
    let (chain_a, chain_b) = disjoint_markov_pair(s.len(), 3, 7).unwrap();
    let a =
        split_corpus(&encode(&chain_a.generate(&s, 6000, 40..120, 1).unwrap(), &s), SplitRatios::default(), 1).unwrap();
    let b =
        split_corpus(&encode(&chain_b.generate(&s, 6000, 40..120, 2).unwrap(), &s), SplitRatios::default(), 1).unwrap();
    let config = lm_config(1e-2, 10, 2);
    let arch = Architecture::new(CellKind::Lstm, 1, 32, s.len());
    let model_a = train(arch.clone(), &a, &s, &config, 1);
    let model_b = train(arch, &b, &s, &config, 1);
    let few = sample_fraction(&b.train, 0.05, 3).unwrap();
    let retrained = retrain_lm(&model_a, &s, &few, &b.dev, &lm_config(1e-2, 200, 5)).unwrap();
    let ppl = |ck: &Checkpoint| perplexity(&ck.model, &b.eval).unwrap();
    let (pa, pb, pr) = (ppl(&model_a), ppl(&model_b), ppl(&retrained));
    let sig = |ck: &Checkpoint| probe_layers(&ck.model, &b, &s, 6).remove(0);
    let (sa, sb, sr) = (sig(&model_a), sig(&model_b), sig(&retrained));
    let (d_rb, d_ra) = (l1_distance(&sr, &sb).unwrap(), l1_distance(&sr, &sa).unwrap());
    let d_ab = l1_distance(&sa, &sb).unwrap();
    check(
        pr - pb < pa - pr && d_rb < d_ra,
        format!(
            "B-eval ppl: A {pa:.3}, B {pb:.3}, retrained on {} B segments {pr:.3}; L1 d(R,B) {d_rb:.3} vs d(R,A) {d_ra:.3} (d(A,B) {d_ab:.3}); marginals A {} B {} R {}",
            few.len(),
            fmt(&marginals(&sa)),
            fmt(&marginals(&sb)),
            fmt(&marginals(&sr))
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str], jobs: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memsig"));
    cmd.args(args).current_dir(dir);
    match jobs {
        Some(j) => cmd.env("MEMSIG_JOBS", j),
        None => cmd.env_remove("MEMSIG_JOBS"),
    };
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn cli_pipeline(dir: &Path, jobs: Option<&str>) -> Result<(), String> {
    let steps: [&[&str]; 11] = [
        &["corpus-prepare", "--generate", "markov-a", "--lines", "300", "--out", "corpus"],
        &[
            "lm-train",
            "--arch",
            "factorized",
            "--shape",
            "1,8",
            "--corpus",
            "corpus",
            "--epochs",
            "2",
            "--keep-prob",
            "0.9",
            "--out",
            "fact.ckpt",
        ],
        &["lm-train", "--arch", "gru", "--shape", "2,8", "--corpus", "corpus", "--epochs", "2", "--out", "gru.ckpt"],
        &["ngram-train", "--corpus", "corpus", "--order", "3", "--out", "ngram.json"],
        &[
            "probe",
            "--checkpoint",
            "fact.ckpt",
            "--corpus",
            "corpus",
            "--max-delta",
            "3",
            "--grid",
            "0.5,1.0",
            "--epochs",
            "3",
            "--out",
            "probe-fact",
        ],
        &[
            "probe",
            "--ngram",
            "ngram.json",
            "--corpus",
            "corpus",
            "--max-delta",
            "3",
            "--grid",
            "0.5,1.0",
            "--epochs",
            "3",
            "--out",
            "probe-ngram",
        ],
        &["signature-build", "--probe-dir", "probe-fact", "--out", "fact.csv"],
        &["signature-build", "--probe-dir", "probe-ngram", "--out", "ngram.csv"],
        &["signature-diff", "fact.csv", "ngram.csv", "--out", "diff.csv"],
        &["render", "fact.csv", "--palette", "green"],
        &["render", "diff.csv"],
    ];
    for args in steps {
        run_cli(dir, args, jobs)?;
    }
    Ok(())
}

fn artifacts(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            if path.is_dir() {
                stack.push(path);
            } else if !name.ends_with("manifest.json") {
                out.push(path.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let (one, two) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cli_pipeline(one.path(), None)?;
    cli_pipeline(two.path(), Some("1"))?;
    let files = artifacts(one.path());
    if files != artifacts(two.path()) {
        return Err("runs produced different file sets".into());
    }
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(one.path().join(f)).unwrap() != std::fs::read(two.path().join(f)).unwrap())
        .map(|f| f.display().to_string())
        .collect();
    let kinds = |ext: &str| files.iter().filter(|f| f.extension().is_some_and(|e| e == ext)).count();
    check(
        differing.is_empty(),
        format!(
            "{} artifacts ({} checkpoints, {} CSVs, {} SVGs) compared across default and single-worker runs; differing: {differing:?}",
            files.len(),
            kinds("ckpt"),
            kinds("csv"),
            kinds("svg")
        ),
    )
}

fn arb_signature(rows: usize) -> impl Strategy<Value = MemorySignature> {
    let v = SymbolSet::default().len();
    proptest::collection::vec(proptest::collection::vec(proptest::option::of((0u32..=1_000_000, 1u64..300)), v), rows)
        .prop_map(|cells| {
            let acc = cells.iter().map(|r| r.iter().map(|c| c.map(|(a, _)| a as f64 / 1e6)).collect()).collect();
            let sup = cells.iter().map(|r| r.iter().map(|c| c.map_or(0, |(_, n)| n)).collect()).collect();
            MemorySignature::new(SymbolSet::default(), acc, sup, SignatureMeta::default()).unwrap()
        })
}

fn criterion_10() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 128, failure_persistence: None, ..Config::default() });
    let mut failures = Vec::new();
    let mut record = |name: &str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    record(
        "diff antisymmetry",
        runner
            .run(&(1usize..6).prop_flat_map(|d| (arb_signature(d), arb_signature(d))), |(a, b)| {
                let (ab, ba) = (diff_signatures(&a, &b).unwrap(), diff_signatures(&b, &a).unwrap());
                for (x, y) in ab.diff.iter().flatten().zip(ba.diff.iter().flatten()) {
                    prop_assert_eq!(x.map(|v| -v), *y);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "csv round trip",
        runner
            .run(&(1usize..6).prop_flat_map(arb_signature), |sig| {
                let back =
                    parse_signature_csv(&signature_to_csv(&sig), &sig.symbols, SignatureMeta::default()).unwrap();
                let kept = back.max_delta();
                prop_assert_eq!(&back.accuracy[..], &sig.accuracy[..kept]);
                prop_assert_eq!(&back.support[..], &sig.support[..kept]);
                prop_assert!(sig.accuracy[kept..].iter().flatten().all(Option::is_none));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "decoder param floor",
        runner
            .run(&(1usize..700, 2usize..60, 0usize..5_000_000, 1usize..4), |(input, vocab, floor, depth)| {
                let w = size_decoder(input, vocab, floor, depth);
                prop_assert!(decoder_param_count(input, w, depth, vocab) >= floor);
                prop_assert!(w == 1 || decoder_param_count(input, w - 1, depth, vocab) < floor);
                let config = DecoderConfig::sized(input, vocab, floor, depth, 1, DecoderTrainConfig::default());
                prop_assert_eq!(
                    Decoder::<f32>::new(input, config.width, depth, vocab, 0).param_count(),
                    decoder_param_count(input, w, depth, vocab)
                );
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    record(
        "marginal bookkeeping",
        runner
            .run(&proptest::collection::vec(proptest::collection::vec(0usize..5, 1..200), 1..5), |rows| {
                let s = SymbolSet::new(vec!['a', 'b', 'c', 'd', ' '], false).unwrap();
                let evals: Vec<(usize, DecoderEval)> = rows
                    .iter()
                    .enumerate()
                    .map(|(d, targets)| {
                        let predicted: Vec<usize> = targets
                            .iter()
                            .enumerate()
                            .map(|(i, &t)| if i % 3 == 0 { (t + 1) % 5 } else { t })
                            .collect();
                        (d + 1, DecoderEval::from_predictions(5, targets, &predicted).unwrap())
                    })
                    .collect();
                let sig = compile_signature(&s, &evals, SignatureMeta::default()).unwrap();
                for ((_, e), m) in evals.iter().zip(marginal_recall(&sig, Marginal::Weighted)) {
                    let correct: u64 = (0..5).map(|v| e.confusion[v][v]).sum();
                    let total: u64 = e.support.iter().sum();
                    prop_assert!((m.unwrap() - correct as f64 / total as f64).abs() < 1e-12);
                    prop_assert_eq!(e.confusion.iter().flatten().sum::<u64>(), total);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let s = SymbolSet::default();
    let (chain, _) = disjoint_markov_pair(s.len(), 3, 2).unwrap();
    let split =
        split_corpus(&encode(&chain.generate(&s, 200, 30..80, 2).unwrap(), &s), SplitRatios::default(), 2).unwrap();
    let ck = train(Architecture::new(CellKind::Lstm, 2, 12, s.len()), &split, &s, &lm_config(1e-2, 1, 1), 1);
    let hash = |ck: &Checkpoint| hex::encode(Sha256::digest(ck.to_bytes().unwrap()));
    let before = hash(&ck);
    let sigs = probe_layers(&ck.model, &split, &s, 2);
    record(
        "frozen model hash",
        if hash(&ck) == before && sigs.len() == 2 {
            Ok(())
        } else {
            Err("checkpoint bytes changed while probing".into())
        },
    );

    let train_trace = extract_state_trace(&ck.model, &split.train, StateChoice::Cell).unwrap();
    let eval_trace = extract_state_trace(&ck.model, &split.eval, StateChoice::Cell).unwrap();
    let ds = build_probe_dataset(&train_trace, &eval_trace, 1, 0, s.len()).unwrap();
    let config = DecoderConfig::sized(
        ds.width(),
        s.len(),
        0,
        2,
        16,
        DecoderTrainConfig { max_epochs: 2, ..DecoderTrainConfig::default() },
    );
    let sweep = sweep_dropout(&ds, &config).unwrap();
    let keeps: Vec<f64> = sweep.table.iter().map(|r| r.keep).collect();
    record(
        "dropout sweep grid",
        if keeps == KEEP_GRID.to_vec() && keeps.len() == 6 { Ok(()) } else { Err(format!("grid {keeps:?}")) },
    );

    check(
        failures.is_empty(),
        if failures.is_empty() {
            "diff antisymmetry, CSV round trip, decoder param floor, marginal bookkeeping (128 cases each), frozen-model hash, 6-point dropout grid".into()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        (1, "gradient correctness", criterion_1),
        (2, "zero-weight decay oracle", criterion_2),
        (3, "factorization equivalence", criterion_3),
        (4, "synthetic recall oracle", criterion_4),
        (5, "n-gram trivial recall", criterion_5),
        (6, "state-size trend", criterion_6),
        (7, "depth trend", criterion_7),
        (8, "retraining similarity", criterion_8),
        (9, "pipeline determinism", criterion_9),
        (10, "invariant suites", criterion_10),
    ];
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{secs:.1}s] {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
