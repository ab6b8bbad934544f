//! Toolken-style tool learning on a frozen reservoir backbone.
//!
//! A small fixed recurrent encoder stands in for a frozen language model;
//! everything that is actually trained lives in three linear heads: a
//! vocabulary head, a toolken-embedding head, and a masked rerank head with
//! an explicit reject option. The crate covers corpus generation, the three
//! training stages (language modeling, toolken embeddings, hard-negative
//! reranking), the three-mode decoding loop, and the evaluation suite, plus
//! file-level plumbing (checkpoints, run configs, reports) for the `toolken`
//! command-line driver.
//!
//! The `examples/` directory is the guided tour: each example exercises one
//! capability end to end at desk scale.

pub mod checkpoint;
pub mod checksum;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod encoder;
pub mod eval;
pub mod literal;
pub mod model;
pub mod pipeline;
pub mod prob;
pub mod registry;
pub mod report;
pub mod synth;
pub mod train;
pub mod vocab;

pub use corpus::{AnnotatedSequence, Element, Item, ToolCall};
pub use decode::{decode, DecodeConfig, DecodeTrace};
pub use encoder::{EncoderConfig, FrozenEncoder};
pub use literal::NumberLiteral;
pub use model::Model;
pub use prob::HeadSet;
pub use registry::{Tool, ToolRegistry};
pub use vocab::Vocab;
