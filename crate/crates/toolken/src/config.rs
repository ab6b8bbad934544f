//! Run configuration: a flat `key = value` file format with CLI overrides,
//! materializing every default so the manifest echoes the exact run.

use crate::decode::{ArgMode, DecodeConfig, DecodeMode, RerankPolicy};
use crate::encoder::{DocOrder, EncoderConfig};
use crate::prob::RerankContext;
use crate::synth::GenConfig;
use crate::train::{GoldEscape, Objective, TrainConfig};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key: {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("malformed config line {line}: {text:?}")]
    Malformed { line: usize, text: String },
    #[error("config validation failed: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Reasoning,
    Selection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub gen: GenConfig,
    /// Training-fold ratios; the remainder is the dev slice.
    pub fold_ratio1: f64,
    pub fold_ratio2: f64,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub stage3: TrainConfig,
    pub decode: DecodeConfig,
    pub eval_k: usize,
    pub numeric_tol: bool,
    pub ablation_ks: Vec<usize>,
    pub ablation_reps: usize,
    pub record_timing: bool,
}

impl RunConfig {
    pub fn default_for(task: Task) -> Self {
        let mut stage1 = TrainConfig::stage_defaults(Objective::Stage1Lm);
        let mut stage2 = TrainConfig::stage_defaults(Objective::Stage2Toolken);
        let stage3 = TrainConfig::stage_defaults(Objective::Stage3Hardneg);
        if task == Task::Selection {
            stage1.epochs = 3;
            stage2.epochs = 3;
        }
        Self {
            task,
            seed: 0,
            encoder: EncoderConfig::default(),
            gen: GenConfig::default(),
            fold_ratio1: 0.45,
            fold_ratio2: 0.45,
            stage1,
            stage2,
            stage3,
            decode: DecodeConfig::default(),
            eval_k: 5,
            numeric_tol: false,
            ablation_ks: vec![1, 3, 5, 7, 10],
            ablation_reps: 3,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.encoder.validate().map_err(ConfigError::Invalid)?;
        self.gen.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.stage1.validate().map_err(ConfigError::Invalid)?;
        self.stage2.validate().map_err(ConfigError::Invalid)?;
        self.stage3.validate().map_err(ConfigError::Invalid)?;
        self.decode.validate().map_err(ConfigError::Invalid)?;
        if self.fold_ratio1 <= 0.0 || self.fold_ratio2 <= 0.0 || self.fold_ratio1 + self.fold_ratio2 > 1.0 {
            return Err(ConfigError::Invalid("fold ratios must be positive and sum to at most 1".into()));
        }
        if self.eval_k == 0 {
            return Err(ConfigError::Invalid("eval_k must be positive".into()));
        }
        if self.ablation_ks.is_empty() {
            return Err(ConfigError::Invalid("ablation_ks must be non-empty".into()));
        }
        Ok(())
    }

    /// Parse a flat config file (`key = value`, `#` comments) over defaults.
    pub fn from_file(path: &Path, task: Task) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::default_for(task);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Malformed { line: i + 1, text: raw.to_string() });
            };
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    /// Apply one dotted-key override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.to_string(),
        };
        macro_rules! parse {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|e| bad(&e.to_string()))?
            };
        }
        match key {
            "task" => {
                self.task = match value {
                    "reasoning" => Task::Reasoning,
                    "selection" => Task::Selection,
                    _ => return Err(bad("expected reasoning|selection")),
                }
            }
            "seed" => {
                let seed = parse!(u64);
                self.seed = seed;
                self.gen.seed = seed;
                self.encoder.seed = seed;
                self.stage1.seed = seed;
                self.stage2.seed = seed.wrapping_add(1);
                self.stage3.seed = seed.wrapping_add(2);
                self.decode.seed = seed;
            }
            "encoder.d" => self.encoder.d = parse!(usize),
            "encoder.d_e" => self.encoder.d_e = parse!(usize),
            "encoder.seed" => self.encoder.seed = parse!(u64),
            "encoder.spectral_scale" => self.encoder.spectral_scale = parse!(f64),
            "encoder.input_scale" => self.encoder.input_scale = parse!(f64),
            "gen.seed" => self.gen.seed = parse!(u64),
            "gen.train_size" => self.gen.train_size = parse!(usize),
            "gen.test_size" => self.gen.test_size = parse!(usize),
            "gen.n_tools" => self.gen.n_tools = parse!(usize),
            "gen.overlap" => self.gen.overlap = parse!(f64),
            "gen.equation_removal" => self.gen.equation_removal = parse!(bool),
            "gen.operand_lo" => self.gen.operand_lo = parse!(i64),
            "gen.operand_hi" => self.gen.operand_hi = parse!(i64),
            "fold_ratio1" => self.fold_ratio1 = parse!(f64),
            "fold_ratio2" => self.fold_ratio2 = parse!(f64),
            "stage1.lr" => self.stage1.learning_rate = parse!(f64),
            "stage1.epochs" => self.stage1.epochs = parse!(usize),
            "stage1.seed" => self.stage1.seed = parse!(u64),
            "stage2.lr" => self.stage2.learning_rate = parse!(f64),
            "stage2.epochs" => self.stage2.epochs = parse!(usize),
            "stage2.seed" => self.stage2.seed = parse!(u64),
            "stage3.lr" => self.stage3.learning_rate = parse!(f64),
            "stage3.epochs" => self.stage3.epochs = parse!(usize),
            "stage3.seed" => self.stage3.seed = parse!(u64),
            "stage3.k" => {
                let k = parse!(usize);
                self.stage3.k = k;
            }
            "stage3.objective" => {
                self.stage3.objective = match value {
                    "naive" => Objective::Stage3Naive,
                    "hardneg" => Objective::Stage3Hardneg,
                    _ => return Err(bad("expected naive|hardneg")),
                }
            }
            "stage3.drop_rej_term" => self.stage3.drop_rej_term = parse!(bool),
            "stage3.rej_weight" => self.stage3.rej_weight = parse!(f64),
            "stage3.gold_escape" => {
                self.stage3.gold_escape = match value {
                    "expand" => GoldEscape::Expand,
                    "skip" => GoldEscape::Skip,
                    _ => return Err(bad("expected expand|skip")),
                }
            }
            "stage3.rerank_context" => self.stage3.rerank_context = rerank_context(value).ok_or_else(|| bad("expected docs|plain"))?,
            "stage3.doc_order" => self.stage3.doc_order = doc_order(value).ok_or_else(|| bad("expected ascending|descending"))?,
            "stage3.verify_bound" => self.stage3.verify_bound = parse!(bool),
            "decode.mode" => {
                self.decode.mode = match value {
                    "greedy" => DecodeMode::Greedy,
                    "sample" => DecodeMode::Sample,
                    _ => return Err(bad("expected greedy|sample")),
                }
            }
            "decode.temperature" => self.decode.temperature = parse!(f64),
            "decode.k" => self.decode.k = parse!(usize),
            "decode.max_len" => self.decode.max_len = parse!(usize),
            "decode.seed" => self.decode.seed = parse!(u64),
            "decode.arg_mode" => {
                self.decode.arg_mode = match value {
                    "grammar" => ArgMode::Grammar,
                    "oracle" => ArgMode::Oracle,
                    _ => return Err(bad("expected grammar|oracle")),
                }
            }
            "decode.rerank_context" => self.decode.rerank_context = rerank_context(value).ok_or_else(|| bad("expected docs|plain"))?,
            "decode.doc_order" => self.decode.doc_order = doc_order(value).ok_or_else(|| bad("expected ascending|descending"))?,
            "decode.rerank_policy" => {
                self.decode.rerank_policy = match value {
                    "learned" => RerankPolicy::Learned,
                    "always_reject" => RerankPolicy::AlwaysReject,
                    "always_accept" => RerankPolicy::AlwaysAccept,
                    _ => return Err(bad("expected learned|always_reject|always_accept")),
                }
            }
            "eval_k" => self.eval_k = parse!(usize),
            "numeric_tol" => self.numeric_tol = parse!(bool),
            "ablation_ks" => {
                self.ablation_ks = value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(&e.to_string()))?;
            }
            "ablation_reps" => self.ablation_reps = parse!(usize),
            "record_timing" => {
                let on = parse!(bool);
                self.record_timing = on;
                self.decode.record_timing = on;
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Flat `key -> value` view of the complete materialized config, used to
    /// echo the run into the manifest.
    pub fn to_flat(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("task", match self.task { Task::Reasoning => "reasoning", Task::Selection => "selection" }.into());
        put("seed", self.seed.to_string());
        put("encoder.d", self.encoder.d.to_string());
        put("encoder.d_e", self.encoder.d_e.to_string());
        put("encoder.seed", self.encoder.seed.to_string());
        put("encoder.spectral_scale", self.encoder.spectral_scale.to_string());
        put("encoder.input_scale", self.encoder.input_scale.to_string());
        put("gen.seed", self.gen.seed.to_string());
        put("gen.train_size", self.gen.train_size.to_string());
        put("gen.test_size", self.gen.test_size.to_string());
        put("gen.n_tools", self.gen.n_tools.to_string());
        put("gen.overlap", self.gen.overlap.to_string());
        put("gen.equation_removal", self.gen.equation_removal.to_string());
        put("gen.operand_lo", self.gen.operand_lo.to_string());
        put("gen.operand_hi", self.gen.operand_hi.to_string());
        put("fold_ratio1", self.fold_ratio1.to_string());
        put("fold_ratio2", self.fold_ratio2.to_string());
        for (name, st) in [("stage1", &self.stage1), ("stage2", &self.stage2), ("stage3", &self.stage3)] {
            put(&format!("{name}.lr"), st.learning_rate.to_string());
            put(&format!("{name}.epochs"), st.epochs.to_string());
            put(&format!("{name}.seed"), st.seed.to_string());
        }
        put("stage3.k", self.stage3.k.to_string());
        put(
            "stage3.objective",
            match self.stage3.objective {
                Objective::Stage3Naive => "naive",
                _ => "hardneg",
            }
            .into(),
        );
        put("stage3.drop_rej_term", self.stage3.drop_rej_term.to_string());
        put("stage3.rej_weight", self.stage3.rej_weight.to_string());
        put("stage3.gold_escape", match self.stage3.gold_escape { GoldEscape::Expand => "expand", GoldEscape::Skip => "skip" }.into());
        put("stage3.rerank_context", rerank_context_str(self.stage3.rerank_context).into());
        put("stage3.doc_order", doc_order_str(self.stage3.doc_order).into());
        put("stage3.verify_bound", self.stage3.verify_bound.to_string());
        put("decode.mode", match self.decode.mode { DecodeMode::Greedy => "greedy", DecodeMode::Sample => "sample" }.into());
        put("decode.temperature", self.decode.temperature.to_string());
        put("decode.k", self.decode.k.to_string());
        put("decode.max_len", self.decode.max_len.to_string());
        put("decode.seed", self.decode.seed.to_string());
        put("decode.arg_mode", match self.decode.arg_mode { ArgMode::Grammar => "grammar", ArgMode::Oracle => "oracle" }.into());
        put("decode.rerank_context", rerank_context_str(self.decode.rerank_context).into());
        put("decode.doc_order", doc_order_str(self.decode.doc_order).into());
        put(
            "decode.rerank_policy",
            match self.decode.rerank_policy {
                RerankPolicy::Learned => "learned",
                RerankPolicy::AlwaysReject => "always_reject",
                RerankPolicy::AlwaysAccept => "always_accept",
            }
            .into(),
        );
        put("eval_k", self.eval_k.to_string());
        put("numeric_tol", self.numeric_tol.to_string());
        put(
            "ablation_ks",
            self.ablation_ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
        );
        put("ablation_reps", self.ablation_reps.to_string());
        put("record_timing", self.record_timing.to_string());
        m
    }
}

fn rerank_context(value: &str) -> Option<RerankContext> {
    match value {
        "docs" => Some(RerankContext::Docs),
        "plain" => Some(RerankContext::Plain),
        _ => None,
    }
}

fn rerank_context_str(c: RerankContext) -> &'static str {
    match c {
        RerankContext::Docs => "docs",
        RerankContext::Plain => "plain",
    }
}

fn doc_order(value: &str) -> Option<DocOrder> {
    match value {
        "ascending" => Some(DocOrder::Ascending),
        "descending" => Some(DocOrder::Descending),
        _ => None,
    }
}

fn doc_order_str(o: DocOrder) -> &'static str {
    match o {
        DocOrder::Ascending => "ascending",
        DocOrder::Descending => "descending",
    }
}
