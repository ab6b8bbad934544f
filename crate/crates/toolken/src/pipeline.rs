//! Stage orchestration over a run directory: each subcommand reads the
//! artifacts of earlier stages by fixed name, writes its own, and appends
//! its record to `manifest.json`. With timing recording off (the default)
//! every artifact is byte-reproducible for a given config.

use crate::checkpoint::{registry_hash, Checkpoint, CheckpointError, Stage};
use crate::config::{ConfigError, RunConfig, Task};
use crate::corpus::{self, AnnotatedSequence, CorpusError};
use crate::decode::{self, DecodeError};
use crate::eval::{self, EvalError, ScoreMode, ScoreOptions};
use crate::model::Model;
use crate::registry::ToolRegistry;
use crate::report::{EvalSummary, ReportError};
use crate::synth::{self, SynthError};
use crate::train::{self, FoldSplit, StageReport, TrainError};
use crate::vocab::{TokenId, Vocab, VocabError};
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("missing artifact: {0} (run the producing subcommand first)")]
    MissingArtifact(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// Exit-code classification: validation problems (bad input, wrong
    /// order, missing prerequisites) versus runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Synth(_)
                | PipelineError::MissingArtifact(_)
                | PipelineError::Checkpoint(CheckpointError::StageOrder(_))
                | PipelineError::Checkpoint(CheckpointError::RegistryMismatch)
                | PipelineError::Train(TrainError::StageOrder(_))
                | PipelineError::Train(TrainError::BadRatios)
                | PipelineError::Report(ReportError::MissingArtifact(_))
        )
    }
}

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn require(&self, name: &str) -> Result<PathBuf, PipelineError> {
        let p = self.path(name);
        if !p.exists() {
            return Err(PipelineError::MissingArtifact(p.display().to_string()));
        }
        Ok(p)
    }

    /// Read-modify-write one section of `manifest.json`. Top-level keys are
    /// sorted, so regeneration is deterministic.
    pub fn update_manifest(&self, section: &str, value: Value) -> Result<(), PipelineError> {
        let path = self.path("manifest.json");
        let mut doc: BTreeMap<String, Value> = if path.exists() {
            serde_json::from_str(&std::fs::read_to_string(&path)?)?
        } else {
            BTreeMap::new()
        };
        doc.insert(section.to_string(), value);
        std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}

fn stage_value(report: &StageReport, record_timing: bool) -> Value {
    let mut report = report.clone();
    if !record_timing {
        report.epoch_seconds = vec![0.0; report.epoch_seconds.len()];
    }
    serde_json::to_value(&report).expect("stage report serializes")
}

fn fold_checksum(fold: &[AnnotatedSequence]) -> u64 {
    let ids: Vec<&str> = fold.iter().map(|s| s.task_id.as_str()).collect();
    crate::checksum::bytes_checksum(ids.join("\n").as_bytes())
}

fn load_vocab(dir: &RunDir) -> Result<Vocab, PipelineError> {
    let path = dir.require("vocab.json")?;
    #[derive(Deserialize)]
    struct VocabFile {
        tokens: Vec<String>,
        eos: String,
    }
    let f: VocabFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(Vocab::new(f.tokens, &f.eos)?)
}

fn load_registry(dir: &RunDir) -> Result<ToolRegistry, PipelineError> {
    let path = dir.require("registry.json")?;
    let reg: ToolRegistry = serde_json::from_str(&std::fs::read_to_string(path)?)
        .map_err(PipelineError::Json)?;
    Ok(reg)
}

fn load_split(
    dir: &RunDir,
    name: &str,
    registry: &ToolRegistry,
    vocab: &Vocab,
) -> Result<Vec<AnnotatedSequence>, PipelineError> {
    let path = dir.require(name)?;
    Ok(corpus::load_corpus(&path, registry, vocab)?)
}

/// Generate both corpus splits, the registry, and the vocabulary.
pub fn gen_data(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(&dir.root)?;
    let data = match config.task {
        Task::Reasoning => synth::gen_reasoning_corpus(&config.gen)?,
        Task::Selection => synth::gen_toolselect_corpus(&config.gen)?,
    };
    corpus::save_corpus_file(&dir.path("corpus.train.jsonl"), &data.train, &data.registry, &data.vocab)?;
    corpus::save_corpus_file(&dir.path("corpus.test.jsonl"), &data.test, &data.registry, &data.vocab)?;
    std::fs::write(dir.path("registry.json"), serde_json::to_string_pretty(&data.registry)?)?;
    std::fs::write(
        dir.path("vocab.json"),
        serde_json::to_string_pretty(&json!({
            "tokens": data.vocab.tokens(),
            "eos": data.vocab.token(data.vocab.eos_id()),
        }))?,
    )?;
    dir.update_manifest(
        "gen",
        json!({
            "config": config.to_flat(),
            "train_size": data.train.len(),
            "test_size": data.test.len(),
            "n_tools": data.registry.len(),
            "n_vocab": data.vocab.size(),
            "registry_hash": registry_hash(&data.registry),
        }),
    )?;
    Ok(())
}

fn folds(config: &RunConfig, train: &[AnnotatedSequence]) -> Result<FoldSplit, PipelineError> {
    Ok(train::split_folds(
        train,
        (config.fold_ratio1, config.fold_ratio2),
        config.seed,
    )?)
}

/// Stage 1: fit the vocabulary head on token-only views of the full
/// training split, then freeze it.
pub fn train_backbone(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let registry = load_registry(dir)?;
    let vocab = load_vocab(dir)?;
    let train_set = load_split(dir, "corpus.train.jsonl", &registry, &vocab)?;
    let mut model = Model::new(config.encoder, registry, vocab);
    let report = train::train_stage1(&mut model, &train_set, &config.stage1)?;
    let ckpt = Checkpoint::new(Stage::Stage1, model, config.to_flat());
    ckpt.save(&dir.path("ckpt.stage1.tkpl"))?;
    dir.update_manifest("stage1", stage_value(&report, config.record_timing))?;
    Ok(())
}

/// Stage 2: fit toolken embeddings on fold 1, freeze them.
pub fn train_toolkens(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let ckpt = Checkpoint::load(&dir.require("ckpt.stage1.tkpl")?)?;
    ckpt.require_stage(Stage::Stage1)?;
    ckpt.verify_registry(&load_registry(dir)?)?;
    let mut model = ckpt.model;
    let train_set = load_split(dir, "corpus.train.jsonl", &model.registry, &model.vocab)?;
    let split = folds(config, &train_set)?;
    let report = train::train_stage2(&mut model, &split.fold1, &config.stage2)?;
    let ckpt = Checkpoint::new(Stage::Stage2, model, config.to_flat());
    ckpt.save(&dir.path("ckpt.stage2.tkpl"))?;
    dir.update_manifest(
        "stage2",
        json!({
            "report": stage_value(&report, config.record_timing),
            "fold1_checksum": fold_checksum(&split.fold1),
            "fold2_checksum": fold_checksum(&split.fold2),
        }),
    )?;
    Ok(())
}

/// Mine hard negatives on fold 2 with the frozen stage-2 model.
pub fn mine(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let ckpt = Checkpoint::load(&dir.require("ckpt.stage2.tkpl")?)?;
    ckpt.require_stage(Stage::Stage2)?;
    ckpt.verify_registry(&load_registry(dir)?)?;
    let model = ckpt.model;
    let train_set = load_split(dir, "corpus.train.jsonl", &model.registry, &model.vocab)?;
    let split = folds(config, &train_set)?;
    let set = train::mine_hard_negatives(&model, &split.fold2, config.stage3.k);
    std::fs::write(dir.path("hardneg.json"), serde_json::to_string_pretty(&set)?)?;
    dir.update_manifest(
        "mine",
        json!({
            "entries": set.entries.len(),
            "rej_targets": set.rej_count(),
            "tool_targets": set.tool_count(),
            "k": config.stage3.k,
            "fold2_checksum": fold_checksum(&split.fold2),
        }),
    )?;
    Ok(())
}

/// Stage 3: fit the rerank head on the mined set (or the naive all-position
/// objective) over fold 2.
pub fn train_rerank(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let ckpt = Checkpoint::load(&dir.require("ckpt.stage2.tkpl")?)?;
    ckpt.require_stage(Stage::Stage2)?;
    let mut model = ckpt.model;
    let train_set = load_split(dir, "corpus.train.jsonl", &model.registry, &model.vocab)?;
    let split = folds(config, &train_set)?;
    let report = match config.stage3.objective {
        train::Objective::Stage3Naive => {
            train::train_stage3_naive(&mut model, &split.fold2, &config.stage3)?
        }
        _ => {
            let text = std::fs::read_to_string(dir.require("hardneg.json")?)?;
            let set: train::HardNegativeSet = serde_json::from_str(&text)?;
            train::train_stage3_hardneg(&mut model, &split.fold2, &set, &config.stage3)?
        }
    };
    let ckpt = Checkpoint::new(Stage::Stage3, model, config.to_flat());
    ckpt.save(&dir.path("ckpt.stage3.tkpl"))?;
    dir.update_manifest("stage3", stage_value(&report, config.record_timing))?;
    Ok(())
}

/// The decode prefix of a task: everything up to and including the first
/// question mark, or if there is none, everything before the first call.
pub fn query_of(seq: &AnnotatedSequence, model: &Model) -> Vec<TokenId> {
    let question = model.vocab.id("?");
    let mut stream = Vec::new();
    for item in &seq.items {
        if let crate::corpus::Item::Call(_) = item {
            return stream;
        }
        crate::corpus::append_item_tokens(&mut stream, item, &model.registry, &model.vocab);
        if let crate::corpus::Item::Token(t) = item {
            if Some(*t) == question {
                return stream;
            }
        }
    }
    stream
}

/// Decode every test task and write one trace per task under `traces/`.
pub fn decode_all(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let ckpt = Checkpoint::load(&dir.require("ckpt.stage3.tkpl")?)?;
    ckpt.require_stage(Stage::Stage3)?;
    let model = ckpt.model;
    let test_set = load_split(dir, "corpus.test.jsonl", &model.registry, &model.vocab)?;
    let traces_dir = dir.path("traces");
    std::fs::create_dir_all(&traces_dir)?;
    let mut decode_errors = 0usize;
    let mut decoded = 0usize;
    for seq in &test_set {
        let query = query_of(seq, &model);
        let gold_calls: Vec<_> = seq.calls().cloned().collect();
        let out = traces_dir.join(format!("{}.json", seq.task_id));
        match decode::decode(&model, &query, &gold_calls, &config.decode) {
            Ok(trace) => {
                std::fs::write(out, serde_json::to_string_pretty(&trace)?)?;
                decoded += 1;
            }
            Err(err) => {
                // A failed decode (e.g. a grammar-mode division by zero) is
                // recorded, not fatal; the task scores as unanswered.
                std::fs::write(out, serde_json::to_string_pretty(&json!({ "error": err.to_string() }))?)?;
                decode_errors += 1;
            }
        }
    }
    dir.update_manifest(
        "decode",
        json!({ "decoded": decoded, "errors": decode_errors }),
    )?;
    Ok(())
}

/// Evaluate base and reranked models on the test split: position confusion
/// always; exact match for reasoning; selection recall for selection.
pub fn eval_run(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let ckpt = Checkpoint::load(&dir.require("ckpt.stage3.tkpl")?)?;
    ckpt.require_stage(Stage::Stage3)?;
    let model = ckpt.model;
    let test_set = load_split(dir, "corpus.test.jsonl", &model.registry, &model.vocab)?;

    let mut summaries = Vec::new();
    for (method, mode) in [("base", ScoreMode::Base), ("reranked", ScoreMode::Reranked)] {
        let opts = ScoreOptions {
            mode,
            k: config.eval_k,
            rerank_context: config.decode.rerank_context,
            doc_order: config.decode.doc_order,
        };
        let confusion = eval::score_positions(&model, &test_set, &opts);
        let mut summary = EvalSummary {
            method: method.to_string(),
            confusion,
            exact_match: None,
            parse_failures: None,
            recall_at_1: None,
            recall_at_3: None,
            recall_at_5: None,
        };
        match config.task {
            Task::Reasoning => {
                if method == "reranked" {
                    let (em, failures) = exact_match_rate(config, &model, &test_set)?;
                    summary.exact_match = Some(em);
                    summary.parse_failures = Some(failures);
                }
            }
            Task::Selection => {
                let (pred, golds) = eval::selection_predictions(&model, &test_set, &opts);
                summary.recall_at_1 = Some(eval::recall_at_k(&pred, &golds, 1)?);
                summary.recall_at_3 = Some(eval::recall_at_k(&pred, &golds, 3)?);
                summary.recall_at_5 = Some(eval::recall_at_k(&pred, &golds, 5)?);
            }
        }
        summaries.push(summary);
    }
    std::fs::write(dir.path("eval.json"), serde_json::to_string_pretty(&summaries)?)?;
    dir.update_manifest("eval", serde_json::to_value(&summaries)?)?;
    Ok(())
}

fn exact_match_rate(
    config: &RunConfig,
    model: &Model,
    test_set: &[AnnotatedSequence],
) -> Result<(f64, usize), PipelineError> {
    let mut matched = 0usize;
    let mut failures = 0usize;
    for seq in test_set {
        let query = query_of(seq, model);
        let gold_calls: Vec<_> = seq.calls().cloned().collect();
        let answer = match decode::decode(model, &query, &gold_calls, &config.decode) {
            Ok(trace) => trace.final_answer,
            Err(_) => None,
        };
        let gold = seq.answer.as_ref().expect("reasoning tasks carry answers");
        let result = eval::exact_match(answer.as_deref(), gold, config.numeric_tol);
        if result.matched {
            matched += 1;
        }
        if result.parse_failure {
            failures += 1;
        }
    }
    Ok((matched as f64 / test_set.len().max(1) as f64, failures))
}

/// The k sweep; latency numbers are measured, so this artifact is exempt
/// from byte reproducibility (everything but the timing column is stable).
pub fn ablate(config: &RunConfig, dir: &RunDir) -> Result<(), PipelineError> {
    config.validate()?;
    let ckpt = Checkpoint::load(&dir.require("ckpt.stage3.tkpl")?)?;
    ckpt.require_stage(Stage::Stage3)?;
    let model = ckpt.model;
    let test_set = load_split(dir, "corpus.test.jsonl", &model.registry, &model.vocab)?;
    let rows = eval::run_ablation(
        &model,
        &test_set,
        &config.ablation_ks,
        config.ablation_reps,
        config.decode.rerank_context,
        config.decode.doc_order,
    )?;
    std::fs::write(dir.path("ablation.json"), serde_json::to_string_pretty(&rows)?)?;
    dir.update_manifest("ablate", serde_json::to_value(&rows)?)?;
    Ok(())
}

/// Regenerate `report/` from existing artifacts.
pub fn write_report(dir: &RunDir) -> Result<(), PipelineError> {
    Ok(crate::report::write_reports(&dir.root)?)
}
