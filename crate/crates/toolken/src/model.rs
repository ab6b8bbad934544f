//! A trained (or training) model: frozen encoder plus heads plus the
//! registry and vocabulary they are bound to.

use crate::corpus::{AnnotatedSequence, Item};
use crate::encoder::{EncoderConfig, FrozenEncoder};
use crate::prob::HeadSet;
use crate::registry::ToolRegistry;
use crate::vocab::{TokenId, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoder: FrozenEncoder,
    pub heads: HeadSet,
    pub registry: ToolRegistry,
    pub vocab: Vocab,
}

impl Model {
    /// Fresh model with zero-initialized heads.
    pub fn new(config: EncoderConfig, registry: ToolRegistry, vocab: Vocab) -> Self {
        let encoder = FrozenEncoder::new(config, vocab.size());
        let heads = HeadSet::zeros(vocab.size(), registry.len(), config.d);
        Self {
            encoder,
            heads,
            registry,
            vocab,
        }
    }
}

/// Expand a sequence to its surface token stream together with item
/// boundaries: `offsets[j]` is the stream length after the first `j` items,
/// so the prefix through item `i` is `stream[..offsets[i + 1]]`.
pub fn stream_with_boundaries(
    seq: &AnnotatedSequence,
    registry: &ToolRegistry,
    vocab: &Vocab,
) -> (Vec<TokenId>, Vec<usize>) {
    let mut stream = Vec::new();
    let mut offsets = Vec::with_capacity(seq.items.len() + 1);
    offsets.push(0);
    for item in &seq.items {
        crate::corpus::append_item_tokens(&mut stream, item, registry, vocab);
        offsets.push(stream.len());
    }
    (stream, offsets)
}

/// Iterate the hidden states at item boundaries: yields `(i, h_i)` where
/// `h_i` encodes the prefix through item `i`.
pub fn boundary_states(
    model: &Model,
    seq: &AnnotatedSequence,
) -> Vec<(usize, ndarray::Array1<f64>)> {
    let (stream, offsets) = stream_with_boundaries(seq, &model.registry, &model.vocab);
    let mut out = Vec::with_capacity(seq.items.len());
    let mut h = model.encoder.zero_state();
    let mut pos = 0;
    for i in 0..seq.items.len() {
        while pos < offsets[i + 1] {
            h = model.encoder.step(&h, stream[pos]);
            pos += 1;
        }
        out.push((i, h.clone()));
    }
    out
}

/// Token-only view of a sequence (calls rendered to surface tokens).
pub fn token_view(seq: &AnnotatedSequence, registry: &ToolRegistry, vocab: &Vocab) -> Vec<TokenId> {
    seq.token_stream(registry, vocab)
}

/// True when the sequence contains at least one call item.
pub fn has_calls(seq: &AnnotatedSequence) -> bool {
    seq.items.iter().any(|i| matches!(i, Item::Call(_)))
}
