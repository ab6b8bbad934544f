//! Three-stage training: the vocabulary head (stage 1, becomes the frozen
//! toy LM), the toolken head over V ∪ T (stage 2), and the rerank head over
//! T ∪ {REJ} (stage 3, naive-bound or hard-negative objective), with the
//! two-fold protocol and a from-scratch Adam.

use crate::corpus::{AnnotatedSequence, Element};
use crate::encoder::DocOrder;
use crate::model::{stream_with_boundaries, Model};
use crate::prob::{
    self, extended_index, mask_vector, rerank_state, MaskVector, ProbError, RerankContext,
};
use crate::registry::ToolId;
use ndarray::{Array1, Array2};
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("fold {0} is empty")]
    EmptyFold(&'static str),
    #[error("fold ratios must be positive and sum to at most 1")]
    BadRatios,
    #[error("{0} changed during a stage that freezes it")]
    FrozenViolation(&'static str),
    #[error("gradient shape {got:?} does not match parameter shape {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("stage order violated: {0}")]
    StageOrder(String),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Stage1Lm,
    Stage2Toolken,
    Stage3Naive,
    Stage3Hardneg,
}

/// Policy when a mined tool target is absent from its cached candidate set:
/// widen the mask with the gold tool, or skip the example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldEscape {
    Expand,
    Skip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub objective: Objective,
    /// Top-k retrieval size for the stage-3 objectives.
    pub k: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Drop reject-target examples (the pure tool-selection setup).
    pub drop_rej_term: bool,
    /// Loss weight on reject-target examples.
    pub rej_weight: f64,
    pub gold_escape: GoldEscape,
    pub rerank_context: RerankContext,
    pub doc_order: DocOrder,
    /// Assert the naive-bound inequality at every visited position.
    pub verify_bound: bool,
}

impl TrainConfig {
    pub fn stage_defaults(objective: Objective) -> Self {
        // Per-stage step sizes sized for the desk-scale heads; 1e-4 moves
        // the toolken rows far too little to matter within a few epochs.
        let learning_rate = match objective {
            Objective::Stage1Lm => 2e-3,
            Objective::Stage2Toolken => 1e-2,
            Objective::Stage3Naive | Objective::Stage3Hardneg => 1e-2,
        };
        Self {
            learning_rate,
            epochs: 5,
            objective,
            k: 5,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            drop_rej_term: false,
            rej_weight: 1.0,
            gold_escape: GoldEscape::Expand,
            rerank_context: RerankContext::Docs,
            doc_order: DocOrder::Descending,
            verify_bound: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        if self.epochs < 1 {
            return Err("epochs must be at least 1".into());
        }
        if matches!(self.objective, Objective::Stage3Naive | Objective::Stage3Hardneg)
            && self.k < 1
        {
            return Err("k must be at least 1 for stage-3 objectives".into());
        }
        Ok(())
    }
}

/// Losses and freeze-ledger checksums recorded for one stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageReport {
    pub objective: Objective,
    /// Mean per-position (per-example for stage 3) loss, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    pub updates: u64,
    pub encoder_checksum: u64,
    pub w_v_checksum: u64,
    pub w_t_checksum: u64,
    pub w_rerank_checksum: u64,
    pub bound_violations: u64,
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Array2<f64>,
    pub v: Array2<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: Array2::zeros((rows, cols)),
            v: Array2::zeros((rows, cols)),
            step: 0,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    state: &mut AdamState,
    matrix: &mut Array2<f64>,
    gradient: &Array2<f64>,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if matrix.dim() != gradient.dim() || state.m.dim() != matrix.dim() {
        return Err(TrainError::ShapeMismatch {
            expected: matrix.dim(),
            got: gradient.dim(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    ndarray::Zip::from(matrix)
        .and(&mut state.m)
        .and(&mut state.v)
        .and(gradient)
        .for_each(|w, m, v, &g| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        });
    Ok(())
}

// ---------------------------------------------------------------------------
// Folds

#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub fold1: Vec<AnnotatedSequence>,
    pub fold2: Vec<AnnotatedSequence>,
    pub test: Vec<AnnotatedSequence>,
    pub seed: u64,
}

/// Deterministic shuffle by seed, then partition by the given ratios; the
/// remainder becomes the test slice.
pub fn split_folds(
    corpus: &[AnnotatedSequence],
    ratios: (f64, f64),
    seed: u64,
) -> Result<FoldSplit, TrainError> {
    let (r1, r2) = ratios;
    if r1 <= 0.0 || r2 <= 0.0 || r1 + r2 > 1.0 + 1e-12 {
        return Err(TrainError::BadRatios);
    }
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n1 = (r1 * n as f64).round() as usize;
    let n2 = ((r2 * n as f64).round() as usize).min(n - n1.min(n));
    let fold1: Vec<_> = order[..n1].iter().map(|&i| corpus[i].clone()).collect();
    let fold2: Vec<_> = order[n1..n1 + n2].iter().map(|&i| corpus[i].clone()).collect();
    let test: Vec<_> = order[n1 + n2..].iter().map(|&i| corpus[i].clone()).collect();
    if fold1.is_empty() {
        return Err(TrainError::EmptyFold("fold1"));
    }
    if fold2.is_empty() {
        return Err(TrainError::EmptyFold("fold2"));
    }
    if r1 + r2 < 1.0 - 1e-9 && test.is_empty() {
        return Err(TrainError::EmptyFold("test"));
    }
    Ok(FoldSplit {
        fold1,
        fold2,
        test,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Stage 1: vocabulary head over token-only views

pub fn train_stage1(
    model: &mut Model,
    corpus: &[AnnotatedSequence],
    config: &TrainConfig,
) -> Result<StageReport, TrainError> {
    let encoder_before = model.encoder.checksum();
    let d = model.encoder.config.d;
    let mut adam = AdamState::new(model.heads.n_vocab(), d);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut epoch_seconds = Vec::new();

    for _ in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut positions = 0u64;
        for &si in &order {
            let stream = corpus[si].token_stream(&model.registry, &model.vocab);
            if stream.len() < 2 {
                continue;
            }
            let mut grad = Array2::zeros((model.heads.n_vocab(), d));
            let mut h = model.encoder.zero_state();
            for i in 0..stream.len() - 1 {
                h = model.encoder.step(&h, stream[i]);
                let (loss, g) = prob::lm_loss_grad(&h, stream[i + 1], &model.heads.w_v);
                loss_sum += loss;
                positions += 1;
                grad += &g;
            }
            adam_step(&mut adam, &mut model.heads.w_v, &grad, config)?;
        }
        epoch_losses.push(loss_sum / positions.max(1) as f64);
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }

    if model.encoder.checksum() != encoder_before {
        return Err(TrainError::FrozenViolation("encoder"));
    }
    model.heads.w_v_frozen = true;
    Ok(report(model, Objective::Stage1Lm, epoch_losses, epoch_seconds, adam.step, 0))
}

// ---------------------------------------------------------------------------
// Stage 2: toolken head over V ∪ T at gold item positions

pub fn train_stage2(
    model: &mut Model,
    fold1: &[AnnotatedSequence],
    config: &TrainConfig,
) -> Result<StageReport, TrainError> {
    if !model.heads.w_v_frozen {
        return Err(TrainError::StageOrder(
            "stage 2 requires a frozen vocabulary head (run stage 1 first)".into(),
        ));
    }
    let w_v_before = crate::checksum::matrix_checksum(&model.heads.w_v);
    let d = model.encoder.config.d;
    let n_vocab = model.heads.n_vocab();
    let mut adam = AdamState::new(model.heads.n_tools(), d);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..fold1.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut epoch_seconds = Vec::new();

    for _ in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut positions = 0u64;
        for &si in &order {
            let seq = &fold1[si];
            if seq.items.len() < 2 {
                continue;
            }
            let (stream, offsets) = stream_with_boundaries(seq, &model.registry, &model.vocab);
            let mut grad = Array2::zeros((model.heads.n_tools(), d));
            let mut h = model.encoder.zero_state();
            let mut pos = 0;
            for i in 0..seq.items.len() - 1 {
                while pos < offsets[i + 1] {
                    h = model.encoder.step(&h, stream[pos]);
                    pos += 1;
                }
                let target = extended_index(seq.items[i + 1].element(), n_vocab);
                let (loss, g) =
                    prob::extended_loss_grad(&h, target, &model.heads.w_v, &model.heads.w_t);
                loss_sum += loss;
                positions += 1;
                grad += &g;
            }
            adam_step(&mut adam, &mut model.heads.w_t, &grad, config)?;
        }
        epoch_losses.push(loss_sum / positions.max(1) as f64);
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }

    if crate::checksum::matrix_checksum(&model.heads.w_v) != w_v_before {
        return Err(TrainError::FrozenViolation("w_v"));
    }
    model.heads.w_t_frozen = true;
    Ok(report(model, Objective::Stage2Toolken, epoch_losses, epoch_seconds, adam.step, 0))
}

// ---------------------------------------------------------------------------
// Hard negative mining

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankTarget {
    Tool(ToolId),
    Rej,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardNegEntry {
    pub seq_index: usize,
    /// Item position `i`; the entry is about the continuation `items[i+1]`.
    pub position: usize,
    pub target: RerankTarget,
    /// Candidate set cached at mining time, retrieval order.
    pub candidates: Vec<ToolId>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HardNegativeSet {
    pub entries: Vec<HardNegEntry>,
}

impl HardNegativeSet {
    pub fn rej_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.target == RerankTarget::Rej)
            .count()
    }

    pub fn tool_count(&self) -> usize {
        self.entries.len() - self.rej_count()
    }
}

/// Collect gold toolken positions plus positions where the stage-2 model
/// wrongly proposes a toolken (argmax over the full extended support).
pub fn mine_hard_negatives(model: &Model, fold2: &[AnnotatedSequence], k: usize) -> HardNegativeSet {
    let n_vocab = model.heads.n_vocab();
    let mut entries = Vec::new();
    for (seq_index, seq) in fold2.iter().enumerate() {
        if seq.items.len() < 2 {
            continue;
        }
        let (stream, offsets) = stream_with_boundaries(seq, &model.registry, &model.vocab);
        let mut h = model.encoder.zero_state();
        let mut pos = 0;
        for i in 0..seq.items.len() - 1 {
            while pos < offsets[i + 1] {
                h = model.encoder.step(&h, stream[pos]);
                pos += 1;
            }
            let dist = prob::p_tool(&model.heads, &h);
            match seq.items[i + 1].element() {
                Element::Toolken(t) => entries.push(HardNegEntry {
                    seq_index,
                    position: i,
                    target: RerankTarget::Tool(t),
                    candidates: prob::topk_tools(&dist, k),
                }),
                Element::VocabToken(_) => {
                    if dist.argmax() >= n_vocab {
                        entries.push(HardNegEntry {
                            seq_index,
                            position: i,
                            target: RerankTarget::Rej,
                            candidates: prob::topk_tools(&dist, k),
                        });
                    }
                }
            }
        }
    }
    HardNegativeSet { entries }
}

// ---------------------------------------------------------------------------
// Stage 3: rerank head

struct PreparedExample {
    h: Array1<f64>,
    mask: MaskVector,
    target: usize,
    weight: f64,
    /// Position data kept for bound verification.
    seq_index: usize,
    position: usize,
    candidates: Vec<ToolId>,
}

fn prepare_examples(
    model: &Model,
    corpus: &[AnnotatedSequence],
    entries: &[HardNegEntry],
    config: &TrainConfig,
) -> Result<Vec<PreparedExample>, TrainError> {
    let rej = model.registry.rej_index();
    let mut out = Vec::new();
    // Cache streams per sequence index to avoid re-expanding.
    let mut streams: Vec<Option<(Vec<u32>, Vec<usize>)>> = vec![None; corpus.len()];
    for entry in entries {
        if config.drop_rej_term && entry.target == RerankTarget::Rej {
            continue;
        }
        let mut candidates = entry.candidates.clone();
        let target = match entry.target {
            RerankTarget::Rej => rej,
            RerankTarget::Tool(t) => {
                if !candidates.contains(&t) {
                    match config.gold_escape {
                        GoldEscape::Expand => candidates.push(t),
                        GoldEscape::Skip => continue,
                    }
                }
                t
            }
        };
        let slot = &mut streams[entry.seq_index];
        if slot.is_none() {
            *slot = Some(stream_with_boundaries(
                &corpus[entry.seq_index],
                &model.registry,
                &model.vocab,
            ));
        }
        let (stream, offsets) = slot.as_ref().unwrap();
        let prefix = &stream[..offsets[entry.position + 1]];
        let h = rerank_state(
            &model.encoder,
            prefix,
            &candidates,
            &model.registry,
            &model.vocab,
            config.rerank_context,
            config.doc_order,
        );
        let mask = mask_vector(&candidates, &model.registry)?;
        let weight = if entry.target == RerankTarget::Rej {
            config.rej_weight
        } else {
            1.0
        };
        out.push(PreparedExample {
            h,
            mask,
            target,
            weight,
            seq_index: entry.seq_index,
            position: entry.position,
            candidates,
        });
    }
    Ok(out)
}

fn train_rerank(
    model: &mut Model,
    corpus: &[AnnotatedSequence],
    entries: &[HardNegEntry],
    config: &TrainConfig,
    objective: Objective,
) -> Result<StageReport, TrainError> {
    if !model.heads.w_v_frozen || !model.heads.w_t_frozen {
        return Err(TrainError::StageOrder(
            "stage 3 requires frozen vocabulary and toolken heads".into(),
        ));
    }
    let w_v_before = crate::checksum::matrix_checksum(&model.heads.w_v);
    let w_t_before = crate::checksum::matrix_checksum(&model.heads.w_t);
    let examples = prepare_examples(model, corpus, entries, config)?;

    let bound_violations = if config.verify_bound {
        verify_bound(model, corpus, &examples, config)
    } else {
        0
    };

    let d = model.encoder.config.d;
    let mut adam = AdamState::new(model.registry.len() + 1, d);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::new();
    let mut epoch_seconds = Vec::new();

    for _ in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &ei in &order {
            let ex = &examples[ei];
            let (loss, mut grad) =
                prob::rerank_loss_grad(&ex.h, ex.target, &model.heads.w_rerank, &ex.mask)?;
            if (ex.weight - 1.0).abs() > 1e-15 {
                grad *= ex.weight;
            }
            loss_sum += ex.weight * loss;
            adam_step(&mut adam, &mut model.heads.w_rerank, &grad, config)?;
        }
        epoch_losses.push(loss_sum / examples.len().max(1) as f64);
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }

    if crate::checksum::matrix_checksum(&model.heads.w_v) != w_v_before {
        return Err(TrainError::FrozenViolation("w_v"));
    }
    if crate::checksum::matrix_checksum(&model.heads.w_t) != w_t_before {
        return Err(TrainError::FrozenViolation("w_t"));
    }
    Ok(report(model, objective, epoch_losses, epoch_seconds, adam.step, bound_violations))
}

/// Train on the mined hard-negative set.
pub fn train_stage3_hardneg(
    model: &mut Model,
    fold2: &[AnnotatedSequence],
    hard_set: &HardNegativeSet,
    config: &TrainConfig,
) -> Result<StageReport, TrainError> {
    train_rerank(model, fold2, &hard_set.entries, config, Objective::Stage3Hardneg)
}

/// Train the naive-bound objective at every position of the fold: target
/// REJ when the gold continuation is a vocabulary token, the gold toolken
/// otherwise.
pub fn train_stage3_naive(
    model: &mut Model,
    fold2: &[AnnotatedSequence],
    config: &TrainConfig,
) -> Result<StageReport, TrainError> {
    let entries = naive_entries(model, fold2, config.k);
    train_rerank(model, fold2, &entries, config, Objective::Stage3Naive)
}

/// All-position entries for the naive objective, candidates from top-k
/// retrieval at each position.
pub fn naive_entries(model: &Model, fold2: &[AnnotatedSequence], k: usize) -> Vec<HardNegEntry> {
    let mut entries = Vec::new();
    for (seq_index, seq) in fold2.iter().enumerate() {
        if seq.items.len() < 2 {
            continue;
        }
        let (stream, offsets) = stream_with_boundaries(seq, &model.registry, &model.vocab);
        let mut h = model.encoder.zero_state();
        let mut pos = 0;
        for i in 0..seq.items.len() - 1 {
            while pos < offsets[i + 1] {
                h = model.encoder.step(&h, stream[pos]);
                pos += 1;
            }
            let dist = prob::p_tool(&model.heads, &h);
            let target = match seq.items[i + 1].element() {
                Element::Toolken(t) => RerankTarget::Tool(t),
                Element::VocabToken(_) => RerankTarget::Rej,
            };
            entries.push(HardNegEntry {
                seq_index,
                position: i,
                target,
                candidates: prob::topk_tools(&dist, k),
            });
        }
    }
    entries
}

/// Count positions violating the per-position bound: the mixture negative
/// log-likelihood must never exceed the naive-bound loss plus the dropped
/// constants. A small slack absorbs float roundoff; both-infinite sides
/// (gold tool outside the candidate set) compare as equal.
fn verify_bound(
    model: &Model,
    corpus: &[AnnotatedSequence],
    examples: &[PreparedExample],
    config: &TrainConfig,
) -> u64 {
    let mut violations = 0;
    for ex in examples {
        let seq = &corpus[ex.seq_index];
        let (stream, offsets) = stream_with_boundaries(seq, &model.registry, &model.vocab);
        let prefix = &stream[..offsets[ex.position + 1]];
        let gold = seq.items[ex.position + 1].element();
        if bound_violated(
            model,
            prefix,
            gold,
            &ex.candidates,
            ex.target,
            &ex.mask,
            config,
        ) {
            violations += 1;
        }
    }
    violations
}

/// Check one position of the bound inequality. Exposed for the acceptance
/// suite, which draws random heads and prefixes.
#[allow(clippy::too_many_arguments)]
pub fn bound_violated(
    model: &Model,
    prefix: &[u32],
    gold: Element,
    candidates: &[ToolId],
    target: usize,
    mask: &MaskVector,
    config: &TrainConfig,
) -> bool {
    let h = model.encoder.encode(prefix);
    let tool_dist = prob::p_tool(&model.heads, &h);
    let mass = prob::tool_mass(&tool_dist);
    let h_rerank = rerank_state(
        &model.encoder,
        prefix,
        candidates,
        &model.registry,
        &model.vocab,
        config.rerank_context,
        config.doc_order,
    );
    let int_dist = prob::p_int(&model.heads, &h_rerank, mask);

    // log p(x) on the left; bound terms plus dropped constants on the right.
    let (log_p, rhs) = match gold {
        Element::VocabToken(v) => {
            let llm = prob::p_llm(&model.heads, &h);
            let p = tool_dist.prob(v as usize)
                + mass * int_dist.prob(model.registry.rej_index()) * llm.prob(v as usize);
            let rhs =
                int_dist.prob(target).ln() + mass.ln() + llm.prob(v as usize).ln();
            (p.ln(), rhs)
        }
        Element::Toolken(t) => {
            let p = mass * int_dist.prob(t);
            (p.ln(), int_dist.prob(target).ln() + mass.ln())
        }
    };
    if log_p.is_infinite() && rhs.is_infinite() {
        return false;
    }
    log_p < rhs - 1e-10
}

fn report(
    model: &Model,
    objective: Objective,
    epoch_losses: Vec<f64>,
    epoch_seconds: Vec<f64>,
    updates: u64,
    bound_violations: u64,
) -> StageReport {
    StageReport {
        objective,
        epoch_losses,
        epoch_seconds,
        updates,
        encoder_checksum: model.encoder.checksum(),
        w_v_checksum: crate::checksum::matrix_checksum(&model.heads.w_v),
        w_t_checksum: crate::checksum::matrix_checksum(&model.heads.w_t),
        w_rerank_checksum: crate::checksum::matrix_checksum(&model.heads.w_rerank),
        bound_violations,
    }
}
