use std::path::{Path, PathBuf};

use clap::Parser;
use memsig::corpus::{
    bigram_frequencies, corpus_files, load_split, sample_fraction, split_corpus, write_segments, CorpusSplit,
    SplitRatios, SPLIT_FILES,
};
use memsig::exec;
use memsig::ngram::{ngram_state_trace, train_ngram, NgramModel};
use memsig::probe::{run_probe, DecoderEval, DecoderTrainConfig, ProbeManifest, ProbePlan, ProbeResult};
use memsig::rnn::{extract_state_trace, parse_shape, perplexity, Architecture, CellKind, CharLM, StateChoice};
use memsig::signature::{
    compile_signature, diff_signatures, marginal_recall, parse_diff_csv, parse_signature_csv, render_heatmap,
    write_diff_csv, write_signature_csv, Marginal, MemorySignature, Palette, SignatureMeta,
};
use memsig::symbols::{EncodedSegment, SymbolSet};
use memsig::synthetic::{disjoint_markov_pair, iid_uniform, periodic};
use memsig::train::{load_checkpoint, retrain_lm, save_checkpoint, train_lm, AdamConfig, Checkpoint, TrainConfig};
use memsig::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cli::*;
use crate::run_manifest::{read_manifest, sidecar, Recorder};

pub fn dispatch(command: Command, args: &[String]) -> Result<()> {
    let name = command.name();
    match command {
        Command::CorpusPrepare(a) => corpus_prepare(&a, Recorder::new(name, args, &a, Some(a.seed))),
        Command::LmTrain(a) => lm_train(&a, Recorder::new(name, args, &a, Some(a.seed))),
        Command::LmRetrain(a) => lm_retrain(&a, Recorder::new(name, args, &a, Some(a.seed))),
        Command::LmEval(a) => lm_eval(&a, Recorder::new(name, args, &a, None)),
        Command::NgramTrain(a) => ngram(&a, Recorder::new(name, args, &a, None)),
        Command::Probe(a) => probe(&a, Recorder::new(name, args, &a, Some(a.seed))),
        Command::SignatureBuild(a) => signature_build(&a, Recorder::new(name, args, &a, None)),
        Command::SignatureDiff(a) => signature_diff(&a, Recorder::new(name, args, &a, None)),
        Command::Render(a) => render(&a, Recorder::new(name, args, &a, None)),
        Command::Replay(a) => replay(&a),
    }
}

fn load_symbols(path: Option<&Path>, rec: Option<&mut Recorder>) -> Result<SymbolSet> {
    match path {
        None => Ok(SymbolSet::default()),
        Some(p) => {
            if let Some(rec) = rec {
                rec.input(p)?;
            }
            SymbolSet::parse_config(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)
        }
    }
}

fn load_corpus(path: &Path, split_seed: u64, symbols: &SymbolSet, rec: &mut Recorder) -> Result<CorpusSplit> {
    for f in corpus_files(path) {
        rec.input(&f)?;
    }
    load_split(path, symbols, SplitRatios::default(), split_seed)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn train_config(t: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let config = TrainConfig {
        adam: AdamConfig { lr: t.lr, ..AdamConfig::default() },
        batch: t.batch,
        window: t.window,
        max_epochs: t.epochs,
        patience: t.patience,
        keep_prob: t.keep_prob,
        clip_norm: t.clip_norm,
        seed,
        shard_rows: t.shard_rows,
    };
    config.validate()?;
    Ok(config)
}

/// Saves the last good checkpoint of a diverged run before reporting it.
fn finish_training(result: Result<Checkpoint>, out: &Path) -> Result<Checkpoint> {
    match result {
        Err(Error::Diverged { epoch, last_good: Some(good) }) => {
            let path = out.with_extension("last-good.ckpt");
            save_checkpoint(&good, &path)?;
            eprintln!("training diverged in epoch {epoch}; last good model saved to {}", path.display());
            Err(Error::Diverged { epoch, last_good: None })
        }
        other => other,
    }
}

fn history_json(ck: &Checkpoint) -> serde_json::Value {
    json!(ck
        .history
        .iter()
        .map(|r| json!({"epoch": r.epoch, "stage": r.stage, "train_loss": r.train_loss, "dev_perplexity": r.dev_perplexity}))
        .collect::<Vec<_>>())
}

fn report_training(ck: &Checkpoint, split: &CorpusSplit, out: &Path, mut rec: Recorder) -> Result<()> {
    save_checkpoint(ck, out)?;
    let eval = perplexity(&ck.model, &split.eval)?;
    let best = ck.history.iter().map(|r| r.dev_perplexity).fold(f64::INFINITY, f64::min);
    println!("model\t{}", ck.model.arch());
    println!("epochs\t{}", ck.history.last().map_or(0, |r| r.epoch));
    println!("dev_perplexity\t{best:.6}");
    println!("eval_perplexity\t{eval:.6}");
    rec.output(out)?;
    rec.symbols(ck.symbols.to_config());
    rec.results(json!({"model": ck.model.arch().to_string(), "eval_perplexity": eval, "history": history_json(ck)}));
    rec.finish(out)?;
    Ok(())
}

fn corpus_prepare(a: &CorpusPrepareArgs, mut rec: Recorder) -> Result<()> {
    let symbols = load_symbols(a.symbols.as_deref(), Some(&mut rec))?;
    let lengths = a.min_len..a.max_len.saturating_add(1);
    let segments: Vec<EncodedSegment> = match (&a.input, a.generate) {
        (Some(path), _) => {
            rec.input(path)?;
            memsig::corpus::read_segments(path, &symbols)?
        }
        (None, Some(kind)) => {
            let lines = match kind {
                Generate::Periodic => periodic(&a.pattern, a.lines, lengths, a.seed)?,
                Generate::Iid => iid_uniform(&symbols, a.lines, lengths, a.seed)?,
                Generate::MarkovA | Generate::MarkovB => {
                    let (ca, cb) = disjoint_markov_pair(symbols.len(), a.fanout, a.chain_seed)?;
                    let chain = if kind == Generate::MarkovA { ca } else { cb };
                    chain.generate(&symbols, a.lines, lengths, a.seed)?
                }
            };
            lines.iter().map(|l| symbols.encode_text(l)).collect::<Result<_>>()?
        }
        (None, None) => return Err(Error::Usage("one of --input and --generate is required".into())),
    };
    let ratios = SplitRatios { train: a.train_ratio, dev: a.dev_ratio, eval: 1.0 - a.train_ratio - a.dev_ratio };
    let split = split_corpus(&segments, ratios, a.seed)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for (name, part) in SPLIT_FILES.iter().zip([&split.train, &split.dev, &split.eval]) {
        let path = a.out.join(name);
        write_segments(&path, part, &symbols)?;
        rec.output(&path)?;
        println!("{name}\t{} segments", part.len());
    }
    let sym_path = a.out.join("symbols.txt");
    std::fs::write(&sym_path, symbols.to_config()).map_err(|e| Error::io(&sym_path, e))?;
    rec.output(&sym_path)?;
    rec.symbols(symbols.to_config());
    rec.finish(&a.out)?;
    Ok(())
}

fn lm_train(a: &LmTrainArgs, mut rec: Recorder) -> Result<()> {
    let symbols = load_symbols(a.symbols.as_deref(), Some(&mut rec))?;
    let split = load_corpus(&a.corpus.corpus, a.corpus.split_seed, &symbols, &mut rec)?;
    let (layers, state) = match &a.shape {
        Some(s) => parse_shape(s)?,
        None => (a.layers, a.state),
    };
    let cell = match a.arch {
        Arch::Lstm => CellKind::Lstm,
        Arch::Gru => CellKind::Gru,
        Arch::Factorized => CellKind::Factorized,
    };
    let mut model = CharLM::<f32>::new(Architecture::new(cell, layers, state, symbols.len()), a.seed)?;
    if cell == CellKind::Factorized {
        let stats = bigram_frequencies(&split.train, &symbols)?;
        model.set_lambda(stats.freq.iter().map(|&f| f as f32).collect())?;
    }
    let config = train_config(&a.train, a.seed)?;
    create_parent(&a.out)?;
    let ck = finish_training(train_lm(model, &symbols, &split.train, &split.dev, &config), &a.out)?;
    report_training(&ck, &split, &a.out, rec)
}

fn lm_retrain(a: &LmRetrainArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&a.checkpoint)?;
    let base = load_checkpoint(&a.checkpoint)?;
    let split = load_corpus(&a.corpus.corpus, a.corpus.split_seed, &base.symbols, &mut rec)?;
    let subset = sample_fraction(&split.train, a.fraction, a.seed)?;
    let config = train_config(&a.train, a.seed)?;
    create_parent(&a.out)?;
    let ck = finish_training(retrain_lm(&base, &base.symbols, &subset, &split.dev, &config), &a.out)?;
    println!("retrain_segments\t{}", subset.len());
    report_training(&ck, &split, &a.out, rec)
}

fn lm_eval(a: &LmEvalArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&a.checkpoint)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let split = load_corpus(&a.corpus.corpus, a.corpus.split_seed, &ck.symbols, &mut rec)?;
    let segments = match a.split {
        Split::Train => &split.train,
        Split::Dev => &split.dev,
        Split::Eval => &split.eval,
    };
    let ppl = perplexity(&ck.model, segments)?;
    println!("perplexity\t{ppl:.6}");
    if let Some(out) = &a.out {
        create_parent(out)?;
        let report = json!({"model": ck.model.arch().to_string(), "split": a.split, "perplexity": ppl});
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(out, text + "\n").map_err(|e| Error::io(out, e))?;
        rec.output(out)?;
        rec.results(report);
        rec.finish(out)?;
    }
    Ok(())
}

fn ngram(a: &NgramTrainArgs, mut rec: Recorder) -> Result<()> {
    let symbols = load_symbols(a.symbols.as_deref(), Some(&mut rec))?;
    let split = load_corpus(&a.corpus.corpus, a.corpus.split_seed, &symbols, &mut rec)?;
    let model = train_ngram(&split.train, &symbols, a.order, a.add_k)?;
    create_parent(&a.out)?;
    model.save(&a.out)?;
    let (train, eval) = (model.perplexity(&split.train)?, model.perplexity(&split.eval)?);
    println!("contexts\t{}", model.context_count());
    println!("train_perplexity\t{train:.6}");
    println!("eval_perplexity\t{eval:.6}");
    rec.output(&a.out)?;
    rec.symbols(symbols.to_config());
    rec.results(json!({"train_perplexity": train, "eval_perplexity": eval}));
    rec.finish(&a.out)?;
    Ok(())
}

/// One (δ, layer) evaluation file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub model: String,
    pub state_choice: String,
    pub corpus: String,
    pub seed: u64,
    pub symbols: SymbolSet,
    pub result: ProbeResult,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',').map(|v| v.trim().parse().map_err(|_| Error::Usage(format!("invalid {what} {text:?}")))).collect()
}

fn resolve_probe_job(a: &ProbeArgs, rec: &mut Recorder) -> Result<ProbeManifest> {
    if let Some(path) = &a.manifest {
        rec.input(path)?;
        return ProbeManifest::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?);
    }
    let job = ProbeManifest {
        checkpoint: a.checkpoint.clone(),
        ngram: a.ngram.clone(),
        corpus: a.corpus.clone().ok_or_else(|| Error::Usage("--corpus is required".into()))?,
        max_delta: a.max_delta,
        layers: if a.layers == "all" { None } else { Some(parse_list(&a.layers, "layer list")?) },
        state_choice: a.state_choice.map(|s| match s {
            StateArg::Cell => StateChoice::Cell,
            StateArg::Output => StateChoice::Output,
        }),
        depth: a.depth,
        grid: parse_list(&a.grid, "keep grid")?,
        seed: a.seed,
    };
    job.validate()?;
    Ok(job)
}

/// The model with λ zeroed ("base") or one-hot at a single basis, and its label.
fn mask_lambda(model: &CharLM<f32>, basis: &str) -> Result<(CharLM<f32>, String)> {
    let arch = model.arch();
    if arch.cell != CellKind::Factorized {
        return Err(Error::Usage("--basis needs a factorized model".into()));
    }
    let mut lambda = vec![0.0f32; arch.bases];
    let label = if basis == "base" {
        format!("{arch} base")
    } else {
        let i: usize = basis
            .parse()
            .ok()
            .filter(|&i| i < arch.bases)
            .ok_or_else(|| Error::Usage(format!("basis {basis:?} is neither \"base\" nor below {}", arch.bases)))?;
        lambda[i] = 1.0;
        format!("{arch} basis {i}")
    };
    Ok((model.with_lambda(lambda)?, label))
}

fn probe(a: &ProbeArgs, mut rec: Recorder) -> Result<()> {
    let job = resolve_probe_job(a, &mut rec)?;
    let (symbols, label, choice_label, train, eval, floors_all) = if let Some(path) = &job.checkpoint {
        rec.input(path)?;
        let ck = load_checkpoint(path)?;
        let (model, label) = match &a.basis {
            None => (ck.model.clone(), ck.model.arch().to_string()),
            Some(b) => mask_lambda(&ck.model, b)?,
        };
        let split = load_corpus(&job.corpus, a.split_seed, &ck.symbols, &mut rec)?;
        let choice = job.state_choice.unwrap_or(StateChoice::default_for(model.arch().cell));
        let train = extract_state_trace(&model, &split.train, choice)?;
        let eval = extract_state_trace(&model, &split.eval, choice)?;
        let floors: Vec<usize> =
            (0..model.arch().layers).map(|l| a.floor.unwrap_or(model.probe_param_floor(l))).collect();
        (ck.symbols.clone(), label, choice.to_string(), train, eval, floors)
    } else {
        let path = job.ngram.as_ref().expect("validated manifest names a model");
        rec.input(path)?;
        let model = NgramModel::load(path)?;
        let split = load_corpus(&job.corpus, a.split_seed, model.symbols(), &mut rec)?;
        let train = ngram_state_trace(&model, &split.train)?;
        let eval = ngram_state_trace(&model, &split.eval)?;
        let label = format!("{}-gram", model.order());
        (model.symbols().clone(), label, "context".to_string(), train, eval, vec![a.floor.unwrap_or(0)])
    };
    let layer_count = floors_all.len();
    let layers: Vec<usize> = match &job.layers {
        None => (0..layer_count).collect(),
        Some(ls) => ls.iter().map(|l| l - 1).collect(),
    };
    if let Some(bad) = layers.iter().find(|&&l| l >= layer_count) {
        return Err(Error::Usage(format!("layer {} requested from a {layer_count}-layer model", bad + 1)));
    }
    let plan = ProbePlan {
        max_delta: job.max_delta,
        floors: layers.iter().map(|&l| floors_all[l]).collect(),
        layers,
        depth: job.depth,
        min_width: a.min_width,
        grid: job.grid.clone(),
        train: DecoderTrainConfig {
            adam: AdamConfig { lr: a.lr, ..AdamConfig::default() },
            batch: a.batch,
            max_epochs: a.epochs,
            patience: a.patience,
            seed: job.seed,
            max_train_pairs: a.max_train_pairs,
            max_eval_pairs: a.max_eval_pairs,
        },
    };
    let results = exec::with_threads(a.jobs, || run_probe(&train, &eval, symbols.len(), &plan))?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let job_path = a.out.join("probe.manifest");
    std::fs::write(&job_path, job.to_text()).map_err(|e| Error::io(&job_path, e))?;
    rec.output(&job_path)?;
    let mut summary = Vec::new();
    for r in results {
        let path = a.out.join(format!("layer{}-delta{}.json", r.layer + 1, r.delta));
        println!(
            "layer {}\tdelta {}\twidth {}\tkeep {}\taccuracy {:.6}",
            r.layer + 1,
            r.delta,
            r.width,
            r.best_keep,
            r.eval.overall()
        );
        summary
            .push(json!({"layer": r.layer + 1, "delta": r.delta, "accuracy": r.eval.overall(), "keep": r.best_keep}));
        let record = ProbeRecord {
            model: label.clone(),
            state_choice: choice_label.clone(),
            corpus: job.corpus.display().to_string(),
            seed: job.seed,
            symbols: symbols.clone(),
            result: r,
        };
        let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        rec.output(&path)?;
    }
    rec.symbols(symbols.to_config());
    rec.results(json!(summary));
    rec.finish(&a.out)?;
    Ok(())
}

fn read_probe_records(dir: &Path, layer: usize) -> Result<Vec<(PathBuf, ProbeRecord)>> {
    let prefix = format!("layer{layer}-delta");
    let mut records = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with(&prefix) && name.ends_with(".json") {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let record: ProbeRecord =
                serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
            records.push((path, record));
        }
    }
    records.sort_by_key(|(_, r)| r.result.delta);
    if records.is_empty() {
        return Err(Error::IncompleteProbe(format!("no evaluations for layer {layer} in {}", dir.display())));
    }
    Ok(records)
}

fn signature_build(a: &SignatureBuildArgs, mut rec: Recorder) -> Result<()> {
    if a.layer == 0 {
        return Err(Error::Usage("layers are numbered from 1".into()));
    }
    let records = read_probe_records(&a.probe_dir, a.layer)?;
    for (path, _) in &records {
        rec.input(path)?;
    }
    let first = &records[0].1;
    if let Some((path, _)) = records.iter().find(|(_, r)| r.symbols != first.symbols || r.model != first.model) {
        return Err(Error::IncompatibleSignatures(format!("{} comes from a different model", path.display())));
    }
    let meta = SignatureMeta {
        model: first.model.clone(),
        layer: a.layer - 1,
        state_choice: first.state_choice.clone(),
        corpus: first.corpus.clone(),
        seed: first.seed,
    };
    let evals: Vec<(usize, DecoderEval)> =
        records.iter().map(|(_, r)| (r.result.delta, r.result.eval.clone())).collect();
    let sig = compile_signature(&first.symbols, &evals, meta.clone())?;
    create_parent(&a.out)?;
    write_signature_csv(&sig, &a.out)?;
    let how = match a.marginal {
        MarginalArg::Weighted => Marginal::Weighted,
        MarginalArg::Unweighted => Marginal::Unweighted,
    };
    let marginal = marginal_recall(&sig, how);
    for (d, m) in marginal.iter().enumerate() {
        match m {
            Some(m) => println!("delta {}\trecall {m:.6}", d + 1),
            None => println!("delta {}\trecall -", d + 1),
        }
    }
    rec.output(&a.out)?;
    rec.symbols(first.symbols.to_config());
    rec.signature(meta);
    rec.results(json!({"marginal": how.to_string(), "marginal_recall": marginal}));
    rec.finish(&a.out)?;
    Ok(())
}

/// Symbol set and metadata for a CSV: its manifest first, then `--symbols`, then the default set.
fn csv_context(path: &Path, symbols: Option<&Path>) -> Result<(SymbolSet, SignatureMeta)> {
    let side = sidecar(path);
    let set = match side.as_ref().and_then(|m| m.symbols.as_deref()) {
        Some(config) => SymbolSet::parse_config(config)?,
        None => load_symbols(symbols, None)?,
    };
    let meta = side.and_then(|m| m.signature).unwrap_or_default();
    Ok((set, meta))
}

fn read_signature(path: &Path, symbols: Option<&Path>) -> Result<MemorySignature> {
    let (set, meta) = csv_context(path, symbols)?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_signature_csv(&text, &set, meta)
}

fn signature_diff(a: &SignatureDiffArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&a.a)?;
    rec.input(&a.b)?;
    let sa = read_signature(&a.a, a.symbols.as_deref())?;
    let sb = read_signature(&a.b, a.symbols.as_deref())?;
    let diff = diff_signatures(&sa, &sb)?;
    create_parent(&a.out)?;
    write_diff_csv(&diff, &a.out)?;
    let cells: Vec<f64> = diff.diff.iter().flatten().flatten().copied().collect();
    let l1: f64 = cells.iter().map(|x| x.abs()).sum();
    let mean = cells.iter().sum::<f64>() / cells.len().max(1) as f64;
    println!("cells\t{}", cells.len());
    println!("l1\t{l1:.6}");
    println!("mean_diff\t{mean:.6}");
    rec.output(&a.out)?;
    rec.symbols(sa.symbols.to_config());
    rec.results(json!({"cells": cells.len(), "l1": l1, "mean_diff": mean, "a": sa.meta, "b": sb.meta}));
    rec.finish(&a.out)?;
    Ok(())
}

fn render(a: &RenderArgs, mut rec: Recorder) -> Result<()> {
    rec.input(&a.input)?;
    let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let (set, meta) = csv_context(&a.input, a.symbols.as_deref())?;
    let is_diff = text.starts_with("delta,symbol,accuracy_a,");
    let (cells, default_palette, default_title) = if is_diff {
        let diff = parse_diff_csv(&text, &set)?;
        (diff.diff, Palette::Diverging, "recall difference (A - B)".to_string())
    } else {
        let sig = parse_signature_csv(&text, &set, meta.clone())?;
        let title = if meta.model.is_empty() {
            "memory signature".to_string()
        } else {
            format!("{} layer {} ({})", meta.model, meta.layer + 1, meta.state_choice)
        };
        (sig.accuracy, Palette::Purple, title)
    };
    let palette = match a.palette {
        None => default_palette,
        Some(PaletteArg::Purple) => Palette::Purple,
        Some(PaletteArg::Green) => Palette::Green,
        Some(PaletteArg::Diverging) => Palette::Diverging,
    };
    let out = a.out.clone().unwrap_or_else(|| a.input.with_extension("svg"));
    let svg = render_heatmap(&cells, &set, palette, a.title.as_deref().unwrap_or(&default_title));
    create_parent(&out)?;
    std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
    println!("wrote\t{}", out.display());
    rec.output(&out)?;
    rec.finish(&out)?;
    Ok(())
}

fn replay(a: &ReplayArgs) -> Result<()> {
    let manifest = read_manifest(&a.manifest)?;
    if manifest.subcommand == "replay" {
        return Err(Error::Usage("a replay manifest cannot be replayed".into()));
    }
    let argv = std::iter::once("memsig".to_string()).chain(manifest.args.iter().cloned());
    let cli =
        Cli::try_parse_from(argv).map_err(|e| Error::Usage(format!("recorded arguments no longer parse: {e}")))?;
    dispatch(cli.command, &manifest.args)
}
