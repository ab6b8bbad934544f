//! Evaluation: retrieval recall, answer exact match, teacher-forced call
//! position confusion, and the k vs accuracy/latency ablation.

use crate::corpus::{AnnotatedSequence, Element};
use crate::encoder::DocOrder;
use crate::literal::NumberLiteral;
use crate::model::Model;
use crate::prob::{self, mask_vector, rerank_state, RerankContext};
use crate::registry::ToolId;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and golds differ in length ({predictions} vs {golds})")]
    LengthMismatch { predictions: usize, golds: usize },
    #[error("empty evaluation set")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Argmax over the extended head, top retrieval hit taken as-is.
    Base,
    /// Retrieval followed by the masked rerank head with a reject option.
    Reranked,
}

/// Fraction of gold tools appearing in the top k of the ranked prediction
/// lists. Lists shorter than k simply contribute what they have.
pub fn recall_at_k(predictions: &[Vec<ToolId>], golds: &[ToolId], k: usize) -> Result<f64, EvalError> {
    if predictions.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    if golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(ranked, gold)| ranked.iter().take(k).any(|t| t == *gold))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub matched: bool,
    /// True when no parseable answer followed the marker.
    pub parse_failure: bool,
}

/// Compare a decoded answer surface against the gold value. Exact rational
/// equality by default; `numeric_tol` admits |a-b| < 1e-6 instead.
pub fn exact_match(answer: Option<&str>, gold: &NumberLiteral, numeric_tol: bool) -> MatchResult {
    let Some(surface) = answer else {
        return MatchResult { matched: false, parse_failure: true };
    };
    let Ok(parsed) = NumberLiteral::parse(surface) else {
        return MatchResult { matched: false, parse_failure: true };
    };
    let matched = if numeric_tol {
        (parsed.to_f64() - gold.to_f64()).abs() < 1e-6
    } else {
        parsed.value_eq(gold)
    };
    MatchResult { matched, parse_failure: false }
}

/// Teacher-forced call-position confusion. Every scored position falls in
/// exactly one bucket.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionReport {
    /// Gold is a vocabulary token but a tool was predicted.
    pub false_positive: usize,
    /// Gold is a toolken but a vocabulary token was predicted.
    pub false_negative: usize,
    /// Gold is a toolken, a tool was predicted, but the wrong one.
    pub misclassified: usize,
    /// Correct branch, and for toolkens the right tool.
    pub correct: usize,
}

impl ConfusionReport {
    pub fn scored(&self) -> usize {
        self.false_positive + self.false_negative + self.misclassified + self.correct
    }

    pub fn accuracy(&self) -> f64 {
        if self.scored() == 0 {
            0.0
        } else {
            self.correct as f64 / self.scored() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub mode: ScoreMode,
    pub k: usize,
    pub rerank_context: RerankContext,
    pub doc_order: DocOrder,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            mode: ScoreMode::Reranked,
            k: 5,
            rerank_context: RerankContext::Docs,
            doc_order: DocOrder::Descending,
        }
    }
}

enum Decision {
    Vocab,
    Tool(ToolId),
}

fn decide(model: &Model, stream: &[crate::vocab::TokenId], h: &ndarray::Array1<f64>, opts: &ScoreOptions) -> Decision {
    let n_vocab = model.heads.n_vocab();
    let dist = prob::p_tool(&model.heads, h);
    let arg = dist.argmax();
    if arg < n_vocab {
        return Decision::Vocab;
    }
    match opts.mode {
        ScoreMode::Base => Decision::Tool(arg - n_vocab),
        ScoreMode::Reranked => {
            let candidates = prob::topk_tools(&dist, opts.k);
            let mask = mask_vector(&candidates, &model.registry).expect("top-k excludes reject");
            let h_rerank = rerank_state(
                &model.encoder,
                stream,
                &candidates,
                &model.registry,
                &model.vocab,
                opts.rerank_context,
                opts.doc_order,
            );
            let int = prob::p_int(&model.heads, &h_rerank, &mask);
            let choice = int.argmax();
            if choice == model.registry.rej_index() {
                Decision::Vocab
            } else {
                Decision::Tool(choice)
            }
        }
    }
}

/// Score every position of every sequence under teacher forcing: the prefix
/// is always the gold stream, and each next-element prediction is compared
/// to the gold element.
pub fn score_positions(model: &Model, corpus: &[AnnotatedSequence], opts: &ScoreOptions) -> ConfusionReport {
    let mut report = ConfusionReport::default();
    for seq in corpus {
        let mut stream: Vec<crate::vocab::TokenId> = Vec::new();
        let mut h = model.encoder.zero_state();
        for item in &seq.items {
            let gold = item.element();
            if !stream.is_empty() {
                match (decide(model, &stream, &h, opts), &gold) {
                    (Decision::Vocab, Element::VocabToken(_)) => report.correct += 1,
                    (Decision::Vocab, Element::Toolken(_)) => report.false_negative += 1,
                    (Decision::Tool(_), Element::VocabToken(_)) => report.false_positive += 1,
                    (Decision::Tool(p), Element::Toolken(g)) => {
                        if p == *g {
                            report.correct += 1;
                        } else {
                            report.misclassified += 1;
                        }
                    }
                }
            }
            let before = stream.len();
            crate::corpus::append_item_tokens(&mut stream, item, &model.registry, &model.vocab);
            for i in before..stream.len() {
                h = model.encoder.step(&h, stream[i]);
            }
        }
    }
    report
}

/// Ranked tool predictions at each sequence's first call position, teacher
/// forced. Base mode ranks the full tool head; reranked mode returns the
/// retrieved top-k reordered by the rerank head (reject excluded), so its
/// lists have exactly k entries.
pub fn selection_predictions(
    model: &Model,
    corpus: &[AnnotatedSequence],
    opts: &ScoreOptions,
) -> (Vec<Vec<ToolId>>, Vec<ToolId>) {
    let mut predictions = Vec::new();
    let mut golds = Vec::new();
    for seq in corpus {
        let Some((stream, gold)) = first_call_prefix(model, seq) else {
            continue;
        };
        let h = model.encoder.encode(&stream);
        let dist = prob::p_tool(&model.heads, &h);
        let ranked = match opts.mode {
            ScoreMode::Base => prob::topk_tools(&dist, model.registry.len()),
            ScoreMode::Reranked => {
                let candidates = prob::topk_tools(&dist, opts.k);
                let mask = mask_vector(&candidates, &model.registry).expect("top-k excludes reject");
                let h_rerank = rerank_state(
                    &model.encoder,
                    &stream,
                    &candidates,
                    &model.registry,
                    &model.vocab,
                    opts.rerank_context,
                    opts.doc_order,
                );
                let int = prob::p_int(&model.heads, &h_rerank, &mask);
                let mut scored: Vec<(f64, ToolId)> =
                    candidates.iter().map(|&t| (int.prob(t), t)).collect();
                scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                scored.into_iter().map(|(_, t)| t).collect()
            }
        };
        predictions.push(ranked);
        golds.push(gold);
    }
    (predictions, golds)
}

fn first_call_prefix(model: &Model, seq: &AnnotatedSequence) -> Option<(Vec<crate::vocab::TokenId>, ToolId)> {
    let mut stream = Vec::new();
    for item in &seq.items {
        if let crate::corpus::Item::Call(call) = item {
            return Some((stream, call.tool_id));
        }
        crate::corpus::append_item_tokens(&mut stream, item, &model.registry, &model.vocab);
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub k: usize,
    pub recall_at_1: f64,
    pub recall_at_3: f64,
    pub recall_at_5: f64,
    /// Median wall time relative to the k=1 base row.
    pub latency_multiplier: f64,
}

/// Sweep k: the first row is the unreranked base at k=1 with multiplier 1.0;
/// later rows rerank the retrieved top k. Latency is the median of `reps`
/// single-threaded passes.
pub fn run_ablation(
    model: &Model,
    corpus: &[AnnotatedSequence],
    ks: &[usize],
    reps: usize,
    rerank_context: RerankContext,
    doc_order: DocOrder,
) -> Result<Vec<AblationRow>, EvalError> {
    if corpus.is_empty() || ks.is_empty() {
        return Err(EvalError::Empty);
    }
    let reps = reps.max(3);
    let mut rows = Vec::new();
    let base_opts = ScoreOptions { mode: ScoreMode::Base, k: 1, rerank_context, doc_order };
    let (base_pred, golds) = selection_predictions(model, corpus, &base_opts);
    let base_ns = median_ns(reps, || {
        selection_predictions(model, corpus, &base_opts);
    });
    rows.push(AblationRow {
        method: "base".into(),
        k: 1,
        recall_at_1: recall_at_k(&base_pred, &golds, 1)?,
        recall_at_3: recall_at_k(&base_pred, &golds, 3)?,
        recall_at_5: recall_at_k(&base_pred, &golds, 5)?,
        latency_multiplier: 1.0,
    });
    for &k in ks {
        if k <= 1 {
            continue;
        }
        let opts = ScoreOptions { mode: ScoreMode::Reranked, k, rerank_context, doc_order };
        let (pred, golds) = selection_predictions(model, corpus, &opts);
        let ns = median_ns(reps, || {
            selection_predictions(model, corpus, &opts);
        });
        rows.push(AblationRow {
            method: "reranked".into(),
            k,
            recall_at_1: recall_at_k(&pred, &golds, 1)?,
            recall_at_3: recall_at_k(&pred, &golds, 3)?,
            recall_at_5: recall_at_k(&pred, &golds, 5)?,
            latency_multiplier: ns as f64 / base_ns as f64,
        });
    }
    Ok(rows)
}

fn median_ns(reps: usize, mut f: impl FnMut()) -> u128 {
    let mut samples: Vec<u128> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_nanos()
        })
        .collect();
    samples.sort_unstable();
    samples[samples.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_basics() {
        let preds = vec![vec![3, 1, 2], vec![0, 4, 5], vec![9, 9, 9]];
        let golds = vec![1, 0, 2];
        assert_eq!(recall_at_k(&preds, &golds, 1).unwrap(), 1.0 / 3.0);
        assert_eq!(recall_at_k(&preds, &golds, 2).unwrap(), 2.0 / 3.0);
        assert_eq!(recall_at_k(&preds, &golds, 3).unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn recall_mismatch_errors() {
        assert!(recall_at_k(&[vec![0]], &[0, 1], 1).is_err());
        assert!(recall_at_k(&[], &[], 1).is_err());
    }

    #[test]
    fn exact_match_rational_vs_tolerant() {
        let gold = NumberLiteral::parse("1/3").unwrap();
        assert!(exact_match(Some("1/3"), &gold, false).matched);
        assert!(!exact_match(Some("0.333333"), &gold, false).matched);
        assert!(exact_match(Some("0.333333"), &gold, true).matched);
        assert!(!exact_match(Some("0.33"), &gold, true).matched);
        assert!(exact_match(None, &gold, false).parse_failure);
        assert!(exact_match(Some("apples"), &gold, true).parse_failure);
    }

    #[test]
    fn confusion_partition() {
        let r = ConfusionReport { false_positive: 1, false_negative: 2, misclassified: 3, correct: 4 };
        assert_eq!(r.scored(), 10);
        assert!((r.accuracy() - 0.4).abs() < 1e-12);
    }
}
