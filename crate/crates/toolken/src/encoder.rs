//! Frozen sequence encoder: a seeded reservoir over token embeddings.
//!
//! All parameters are generated from the seed at construction and never
//! updated; every trainable head in the system reads the hidden states this
//! encoder produces. States fold as
//! `h_i = tanh(A·h_{i-1} + input_scale·B·E[x_i])` from `h_0 = 0`.

use crate::registry::{ToolId, ToolRegistry};
use crate::vocab::{TokenId, Vocab, SEP};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Hidden dimension of the reservoir state.
    pub d: usize,
    /// Token embedding dimension.
    pub d_e: usize,
    pub seed: u64,
    /// Contraction factor: the recurrence matrix is rescaled so its largest
    /// singular value equals this, keeping the state fold a contraction.
    pub spectral_scale: f64,
    pub input_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d: 128,
            d_e: 64,
            seed: 0,
            spectral_scale: 0.9,
            input_scale: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d < 8 {
            return Err(format!("encoder d must be >= 8, got {}", self.d));
        }
        if !(self.spectral_scale > 0.0 && self.spectral_scale < 1.0) {
            return Err(format!(
                "spectral_scale must lie in (0,1), got {}",
                self.spectral_scale
            ));
        }
        Ok(())
    }
}

/// Which documentation order the rerank context uses, relative to the
/// retrieval ranking (most relevant first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocOrder {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenEncoder {
    pub config: EncoderConfig,
    /// d×d recurrence matrix, operator norm equal to `spectral_scale`.
    pub a: Array2<f64>,
    /// d×d_e input matrix.
    pub b: Array2<f64>,
    /// |V|×d_e token embeddings.
    pub e: Array2<f64>,
}

impl FrozenEncoder {
    pub fn new(config: EncoderConfig, vocab_size: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let mut a = gaussian_matrix(&mut rng, config.d, config.d, 1.0);
        let sigma = largest_singular_value(&a);
        a.mapv_inplace(|x| x * config.spectral_scale / sigma);
        let b = gaussian_matrix(&mut rng, config.d, config.d_e, 1.0 / (config.d_e as f64).sqrt());
        let e = gaussian_matrix(&mut rng, vocab_size, config.d_e, 1.0);
        Self { config, a, b, e }
    }

    pub fn zero_state(&self) -> Array1<f64> {
        Array1::zeros(self.config.d)
    }

    /// Fold one token into a state.
    pub fn step(&self, h: &Array1<f64>, token: TokenId) -> Array1<f64> {
        let emb = self.e.row(token as usize);
        let mut next = self.a.dot(h) + self.config.input_scale * self.b.dot(&emb);
        next.mapv_inplace(f64::tanh);
        next
    }

    /// Encode a full token stream from the zero state.
    pub fn encode(&self, tokens: &[TokenId]) -> Array1<f64> {
        let mut h = self.zero_state();
        for &t in tokens {
            h = self.step(&h, t);
        }
        h
    }

    /// Token ids of one tool's documentation block:
    /// `tool name : <name> , tool description : <doc>`.
    pub fn doc_block(&self, tool: ToolId, registry: &ToolRegistry, vocab: &Vocab) -> Vec<TokenId> {
        let t = registry.tool(tool);
        let text = format!("tool name : {} , tool description : {}", t.name, t.doc);
        vocab
            .encode_text(&text)
            .expect("documentation tokens in vocabulary")
    }

    /// Encode `[doc blocks in the configured order; separator; prefix]`.
    /// `candidates` must arrive in retrieval order, most relevant first.
    pub fn encode_with_docs(
        &self,
        prefix: &[TokenId],
        candidates: &[ToolId],
        registry: &ToolRegistry,
        vocab: &Vocab,
        doc_order: DocOrder,
    ) -> Array1<f64> {
        let mut stream = Vec::new();
        let ordered: Vec<ToolId> = match doc_order {
            DocOrder::Descending => candidates.to_vec(),
            DocOrder::Ascending => candidates.iter().rev().copied().collect(),
        };
        for tool in ordered {
            stream.extend(self.doc_block(tool, registry, vocab));
        }
        stream.push(vocab.id(SEP).expect("separator token in vocabulary"));
        stream.extend_from_slice(prefix);
        self.encode(&stream)
    }

    /// Order-independent digest of all encoder parameters.
    pub fn checksum(&self) -> u64 {
        let mut hash = crate::checksum::Fnv64::new();
        for m in [&self.a, &self.b, &self.e] {
            for &x in m.iter() {
                hash.write_f64(x);
            }
        }
        hash.finish()
    }
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| gauss(rng) * scale)
}

/// Box-Muller standard normal from the seeded stream.
fn gauss(rng: &mut ChaCha20Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Power iteration on AᵀA with a fixed start vector.
fn largest_singular_value(a: &Array2<f64>) -> f64 {
    let n = a.ncols();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut sigma = 0.0;
    for _ in 0..200 {
        let av = a.dot(&v);
        sigma = av.dot(&av).sqrt();
        let atav = a.t().dot(&av);
        let norm = atav.dot(&atav).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = atav / norm;
    }
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab() -> Vocab {
        Vocab::new(["<s>", "</s>", "<sep>", "a", "b", "c"], "</s>").unwrap()
    }

    fn cfg(seed: u64) -> EncoderConfig {
        EncoderConfig {
            d: 16,
            d_e: 8,
            seed,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn deterministic_across_constructions() {
        let v = small_vocab();
        let e1 = FrozenEncoder::new(cfg(7), v.size());
        let e2 = FrozenEncoder::new(cfg(7), v.size());
        assert_eq!(e1, e2);
        let stream = [0u32, 3, 4, 5, 1];
        assert_eq!(e1.encode(&stream), e2.encode(&stream));
        assert_eq!(e1.checksum(), e2.checksum());
    }

    #[test]
    fn spectral_norm_matches_scale() {
        let enc = FrozenEncoder::new(cfg(3), 6);
        let sigma = largest_singular_value(&enc.a);
        assert!((sigma - 0.9).abs() < 1e-9, "sigma = {sigma}");
    }

    #[test]
    fn states_stay_in_tanh_range() {
        let enc = FrozenEncoder::new(cfg(1), 6);
        let h = enc.encode(&[0, 3, 4, 5, 3, 4, 1]);
        assert!(h.iter().all(|&x| x.abs() <= 1.0));
    }

    #[test]
    fn degenerate_recurrence_is_single_step() {
        let mut enc = FrozenEncoder::new(cfg(2), 6);
        enc.a.fill(0.0);
        let bos = 0u32;
        let h = enc.encode(&[bos]);
        let emb = enc.e.row(bos as usize);
        let expected = (enc.config.input_scale * enc.b.dot(&emb)).mapv(f64::tanh);
        assert_eq!(h, expected);
    }

    #[test]
    fn echo_state_contraction() {
        // Two different prefixes followed by a shared suffix converge
        // at rate rho^|suffix| up to a constant.
        let enc = FrozenEncoder::new(cfg(11), 6);
        let p1 = vec![3u32, 4, 5, 3];
        let p2 = vec![5u32, 5, 4, 4, 3, 5];
        let suffix: Vec<u32> = (0..30).map(|i| 3 + (i % 3) as u32).collect();
        let mut h1 = enc.encode(&p1);
        let mut h2 = enc.encode(&p2);
        let initial_gap = (&h1 - &h2).mapv(f64::abs).sum();
        for &t in &suffix {
            h1 = enc.step(&h1, t);
            h2 = enc.step(&h2, t);
        }
        let gap = (&h1 - &h2).dot(&(&h1 - &h2)).sqrt();
        let rho = enc.config.spectral_scale;
        let bound = rho.powi(suffix.len() as i32) * initial_gap.max(1.0) * 2.0;
        assert!(gap <= bound, "gap {gap} exceeds {bound}");
    }

    #[test]
    fn doc_conditioning_is_order_sensitive() {
        let registry = ToolRegistry::arithmetic();
        let mut tokens: Vec<String> = ["<s>", "</s>", "<sep>"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for t in registry.tools() {
            for tok in crate::vocab::tokenize(&format!(
                "tool name : {} , tool description : {}",
                t.name, t.doc
            )) {
                if !tokens.contains(&tok) {
                    tokens.push(tok);
                }
            }
        }
        let vocab = Vocab::new(tokens, "</s>").unwrap();
        let enc = FrozenEncoder::new(cfg(5), vocab.size());
        let prefix = [0u32, 3];
        let h_ab = enc.encode_with_docs(&prefix, &[0, 1], &registry, &vocab, DocOrder::Descending);
        let h_ba = enc.encode_with_docs(&prefix, &[1, 0], &registry, &vocab, DocOrder::Descending);
        assert_ne!(h_ab, h_ba);
        // Ascending order of [0,1] equals descending order of [1,0].
        let h_asc = enc.encode_with_docs(&prefix, &[0, 1], &registry, &vocab, DocOrder::Ascending);
        assert_eq!(h_asc, h_ba);
    }

    #[test]
    fn empty_candidates_is_separator_plus_prefix() {
        let vocab = small_vocab();
        let registry = ToolRegistry::arithmetic();
        let enc = FrozenEncoder::new(cfg(9), vocab.size());
        let prefix = [0u32, 3, 4];
        let h = enc.encode_with_docs(&prefix, &[], &registry, &vocab, DocOrder::Descending);
        let mut stream = vec![vocab.id(SEP).unwrap()];
        stream.extend_from_slice(&prefix);
        assert_eq!(h, enc.encode(&stream));
    }
}
