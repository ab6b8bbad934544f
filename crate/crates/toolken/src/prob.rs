//! Probability heads over the extended element space.
//!
//! Three heads read the frozen encoder state: the vocabulary head (`p_llm`
//! over V), the extended head (`p_tool` over V ∪ T), and the rerank head
//! (`p_int` over T ∪ {REJ}, restricted by a mask). Masked entries are
//! excluded before exponentiation and come out exactly zero. Cross-entropy
//! gradients are closed-form: row j gets `(p_j - 1[j = target]) · hᵀ`.

use crate::corpus::Element;
use crate::encoder::{DocOrder, FrozenEncoder};
use crate::registry::{ToolId, ToolRegistry};
use crate::vocab::{TokenId, Vocab};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum ProbError {
    #[error("reject element passed as a retrieval candidate")]
    RejInCandidates,
    #[error("target index {0} is masked out")]
    MaskedTarget(usize),
}

/// Which hidden state the rerank head reads: documentation-conditioned or
/// the plain prefix state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankContext {
    Docs,
    Plain,
}

/// The trainable parameter matrices. The vocabulary head is frozen after
/// stage 1, the toolken head after stage 2.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadSet {
    /// |V|×d vocabulary head.
    pub w_v: Array2<f64>,
    /// |T|×d toolken head.
    pub w_t: Array2<f64>,
    /// (|T|+1)×d rerank head; the last row scores the reject option.
    pub w_rerank: Array2<f64>,
    pub w_v_frozen: bool,
    pub w_t_frozen: bool,
}

impl HeadSet {
    pub fn zeros(n_vocab: usize, n_tools: usize, d: usize) -> Self {
        Self {
            w_v: Array2::zeros((n_vocab, d)),
            w_t: Array2::zeros((n_tools, d)),
            w_rerank: Array2::zeros((n_tools + 1, d)),
            w_v_frozen: false,
            w_t_frozen: false,
        }
    }

    pub fn n_vocab(&self) -> usize {
        self.w_v.nrows()
    }

    pub fn n_tools(&self) -> usize {
        self.w_t.nrows()
    }

    pub fn all_finite(&self) -> bool {
        [&self.w_v, &self.w_t, &self.w_rerank]
            .iter()
            .all(|m| m.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// V
    Vocab,
    /// V ∪ T; vocabulary indices first, toolken index t at `n_vocab + t`.
    Extended { n_vocab: usize },
    /// T ∪ {REJ}; REJ at index |T|.
    Rerank,
}

/// A normalized distribution over a declared support. Masked-out entries
/// are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    support: Support,
    probs: Vec<f64>,
}

impl Distribution {
    fn new(support: Support, probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|&p| p >= 0.0));
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        Self { support, probs }
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, index: usize) -> f64 {
        self.probs[index]
    }

    /// Argmax with ties broken toward the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF sample after temperature scaling.
    pub fn sample(&self, temperature: f64, uniform_draw: f64) -> usize {
        let scaled = apply_temperature(&self.probs, temperature);
        let mut acc = 0.0;
        for (i, &p) in scaled.iter().enumerate() {
            acc += p;
            if uniform_draw < acc {
                return i;
            }
        }
        // Rounding may leave a sliver; fall back to the last positive entry.
        scaled.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

fn apply_temperature(probs: &[f64], temperature: f64) -> Vec<f64> {
    if (temperature - 1.0).abs() < 1e-15 {
        return probs.to_vec();
    }
    let inv = 1.0 / temperature;
    let scaled: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { p.powf(inv) } else { 0.0 })
        .collect();
    let z: f64 = scaled.iter().sum();
    scaled.into_iter().map(|p| p / z).collect()
}

/// Additive logit mask over T ∪ {REJ}: allowed entries participate in the
/// softmax, the rest are excluded outright (the `-inf` idiom without the
/// float). The reject entry is always allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskVector {
    allowed: Vec<bool>,
}

impl MaskVector {
    pub fn allowed(&self) -> &[bool] {
        &self.allowed
    }

    pub fn is_allowed(&self, index: usize) -> bool {
        self.allowed[index]
    }

    pub fn rej_index(&self) -> usize {
        self.allowed.len() - 1
    }
}

/// Build the mask for a candidate set `T_k ⊆ T`.
pub fn mask_vector(candidates: &[ToolId], registry: &ToolRegistry) -> Result<MaskVector, ProbError> {
    let n_tools = registry.len();
    let mut allowed = vec![false; n_tools + 1];
    for &t in candidates {
        if t >= n_tools {
            return Err(ProbError::RejInCandidates);
        }
        allowed[t] = true;
    }
    allowed[n_tools] = true;
    Ok(MaskVector { allowed })
}

/// Numerically stabilized softmax restricted to allowed indices; excluded
/// entries are exactly zero.
fn masked_softmax(logits: &[f64], allowed: Option<&[bool]>) -> Vec<f64> {
    let is_allowed = |i: usize| allowed.map_or(true, |a| a[i]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| is_allowed(*i))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; logits.len()];
    let mut z = 0.0;
    for (i, &x) in logits.iter().enumerate() {
        if is_allowed(i) {
            let e = (x - max).exp();
            out[i] = e;
            z += e;
        }
    }
    for p in &mut out {
        *p /= z;
    }
    out
}

/// `softmax(W_V · h)` over the vocabulary.
pub fn p_llm(heads: &HeadSet, h: &Array1<f64>) -> Distribution {
    let logits = heads.w_v.dot(h);
    Distribution::new(Support::Vocab, masked_softmax(logits.as_slice().unwrap(), None))
}

/// Single softmax over the concatenated logits `[W_V, W_T] · h`.
pub fn p_tool(heads: &HeadSet, h: &Array1<f64>) -> Distribution {
    let mut logits = heads.w_v.dot(h).to_vec();
    logits.extend(heads.w_t.dot(h).iter());
    Distribution::new(
        Support::Extended {
            n_vocab: heads.n_vocab(),
        },
        masked_softmax(&logits, None),
    )
}

/// `softmax(W_T' · h + m(T_k))` over T ∪ {REJ}.
pub fn p_int(heads: &HeadSet, h: &Array1<f64>, mask: &MaskVector) -> Distribution {
    let logits = heads.w_rerank.dot(h);
    Distribution::new(
        Support::Rerank,
        masked_softmax(logits.as_slice().unwrap(), Some(mask.allowed())),
    )
}

/// Total probability mass on toolken entries of a `p_tool` distribution.
pub fn tool_mass(dist: &Distribution) -> f64 {
    let Support::Extended { n_vocab } = dist.support() else {
        panic!("tool_mass requires the extended support");
    };
    dist.probs()[n_vocab..].iter().sum()
}

/// Top-k toolken entries by probability, descending; ties go to the lower
/// tool index. Vocabulary entries and the reject element never appear.
pub fn topk_tools(dist: &Distribution, k: usize) -> Vec<ToolId> {
    let Support::Extended { n_vocab } = dist.support() else {
        panic!("topk_tools requires the extended support");
    };
    let mut tools: Vec<(ToolId, f64)> = dist.probs()[n_vocab..]
        .iter()
        .enumerate()
        .map(|(t, &p)| (t, p))
        .collect();
    tools.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    tools.truncate(k.min(tools.len()));
    tools.into_iter().map(|(t, _)| t).collect()
}

/// Map an element to its index in the extended support.
pub fn extended_index(element: Element, n_vocab: usize) -> usize {
    match element {
        Element::VocabToken(v) => v as usize,
        Element::Toolken(t) => n_vocab + t,
    }
}

/// The rerank hidden state for a prefix and candidate set, per the
/// configured context source.
pub fn rerank_state(
    encoder: &FrozenEncoder,
    prefix: &[TokenId],
    candidates: &[ToolId],
    registry: &ToolRegistry,
    vocab: &Vocab,
    context: RerankContext,
    doc_order: DocOrder,
) -> Array1<f64> {
    match context {
        RerankContext::Docs => {
            encoder.encode_with_docs(prefix, candidates, registry, vocab, doc_order)
        }
        RerankContext::Plain => encoder.encode(prefix),
    }
}

/// The decoding loop's next-element probability:
/// `p(x ∈ V) = p_tool(x) + p_tool(T)·p_int(REJ)·p_llm(x)` and
/// `p(x ∈ T) = p_tool(T)·p_int(x)`, with `T_k` the top-k retrieval.
#[allow(clippy::too_many_arguments)]
pub fn mixture_prob(
    x_next: Element,
    prefix: &[TokenId],
    k: usize,
    heads: &HeadSet,
    encoder: &FrozenEncoder,
    registry: &ToolRegistry,
    vocab: &Vocab,
    context: RerankContext,
    doc_order: DocOrder,
) -> f64 {
    let h = encoder.encode(prefix);
    let tool_dist = p_tool(heads, &h);
    let candidates = topk_tools(&tool_dist, k);
    let mask = mask_vector(&candidates, registry).expect("top-k never contains reject");
    let h_rerank = rerank_state(encoder, prefix, &candidates, registry, vocab, context, doc_order);
    let int_dist = p_int(heads, &h_rerank, &mask);
    let mass = tool_mass(&tool_dist);
    match x_next {
        Element::VocabToken(v) => {
            let llm = p_llm(heads, &h);
            tool_dist.prob(v as usize)
                + mass * int_dist.prob(registry.rej_index()) * llm.prob(v as usize)
        }
        Element::Toolken(t) => mass * int_dist.prob(t),
    }
}

/// Cross-entropy loss and gradient for the vocabulary head.
pub fn lm_loss_grad(h: &Array1<f64>, target: TokenId, w_v: &Array2<f64>) -> (f64, Array2<f64>) {
    let logits = w_v.dot(h);
    let probs = masked_softmax(logits.as_slice().unwrap(), None);
    let loss = -probs[target as usize].ln();
    (loss, outer_grad(&probs, target as usize, h, 0, probs.len()))
}

/// Stage-2 loss over V ∪ T; only the toolken rows are returned because the
/// vocabulary head is frozen.
pub fn extended_loss_grad(
    h: &Array1<f64>,
    target: usize,
    w_v: &Array2<f64>,
    w_t: &Array2<f64>,
) -> (f64, Array2<f64>) {
    let n_vocab = w_v.nrows();
    let mut logits = w_v.dot(h).to_vec();
    logits.extend(w_t.dot(h).iter());
    let probs = masked_softmax(&logits, None);
    let loss = -probs[target].ln();
    (loss, outer_grad(&probs, target, h, n_vocab, logits.len()))
}

/// Stage-3 loss over the masked rerank support; masked rows get exactly
/// zero gradient.
pub fn rerank_loss_grad(
    h: &Array1<f64>,
    target: usize,
    w_rerank: &Array2<f64>,
    mask: &MaskVector,
) -> Result<(f64, Array2<f64>), ProbError> {
    if !mask.is_allowed(target) {
        return Err(ProbError::MaskedTarget(target));
    }
    let logits = w_rerank.dot(h);
    let probs = masked_softmax(logits.as_slice().unwrap(), Some(mask.allowed()));
    let loss = -probs[target].ln();
    let grad = outer_grad(&probs, target, h, 0, probs.len());
    Ok((loss, grad))
}

/// Gradient rows `row_start..row_end`: `(p_j - 1[j = target]) · hᵀ`.
/// Entries with `p_j = 0` (masked) and `j != target` come out exactly zero.
fn outer_grad(
    probs: &[f64],
    target: usize,
    h: &Array1<f64>,
    row_start: usize,
    row_end: usize,
) -> Array2<f64> {
    let coefs: Array1<f64> = (row_start..row_end)
        .map(|j| probs[j] - if j == target { 1.0 } else { 0.0 })
        .collect();
    let coefs = coefs.insert_axis(Axis(1));
    let h_row = h.view().insert_axis(Axis(0));
    coefs.dot(&h_row)
}
