//! Annotated sequences over the element space `V ∪ T`, the tool-call surface
//! form, and the JSONL corpus format.
//!
//! A call renders as `'<name>(a,b) = r'` and parses back to the identical
//! call; corpora are stored one JSON object per line and re-serialize
//! byte-identically after a successful load.

use crate::literal::{LiteralError, NumberLiteral};
use crate::registry::{ToolError, ToolId, ToolRegistry};
use crate::vocab::{TokenId, Vocab, VocabError};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("tool {name} expects {expected} args, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("malformed literal: {0}")]
    MalformedLiteral(#[from] LiteralError),
    #[error("malformed tool call {0:?}")]
    MalformedCall(String),
    #[error("line {line}: schema error: {msg}")]
    SchemaError { line: usize, msg: String },
    #[error("line {line}: stored result {stored} does not match executor output {computed}")]
    ResultMismatch {
        line: usize,
        stored: String,
        computed: String,
    },
    #[error("line {line}: sequence does not end with eos")]
    MissingEos { line: usize },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One element of the extended next-token space: a vocabulary token or a
/// toolken. Gold data never contains the reject element.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    VocabToken(TokenId),
    Toolken(ToolId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub tool_id: ToolId,
    pub args: Vec<NumberLiteral>,
    pub result: NumberLiteral,
}

/// One item of an annotated sequence; a toolken item always carries its
/// full call payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Token(TokenId),
    Call(ToolCall),
}

impl Item {
    pub fn element(&self) -> Element {
        match self {
            Item::Token(id) => Element::VocabToken(*id),
            Item::Call(call) => Element::Toolken(call.tool_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSequence {
    pub task_id: String,
    pub items: Vec<Item>,
    pub answer: Option<NumberLiteral>,
}

impl AnnotatedSequence {
    /// Expand every item to surface token ids, rendering call payloads.
    pub fn token_stream(&self, registry: &ToolRegistry, vocab: &Vocab) -> Vec<TokenId> {
        let mut out = Vec::new();
        for item in &self.items {
            append_item_tokens(&mut out, item, registry, vocab);
        }
        out
    }

    pub fn calls(&self) -> impl Iterator<Item = &ToolCall> {
        self.items.iter().filter_map(|it| match it {
            Item::Call(c) => Some(c),
            Item::Token(_) => None,
        })
    }
}

/// Append the surface tokens of one item to a token stream.
pub fn append_item_tokens(
    out: &mut Vec<TokenId>,
    item: &Item,
    registry: &ToolRegistry,
    vocab: &Vocab,
) {
    match item {
        Item::Token(id) => out.push(*id),
        Item::Call(call) => {
            let rendered = render_tool_call(call, registry);
            for tok in crate::vocab::tokenize(&rendered) {
                out.push(vocab.id(&tok).expect("call surface token in vocabulary"));
            }
        }
    }
}

/// Render a call in the quoted surface form `'<name>(a,b) = r'`.
pub fn render_tool_call(call: &ToolCall, registry: &ToolRegistry) -> String {
    let args: Vec<String> = call.args.iter().map(|a| a.surface().to_string()).collect();
    format!(
        "'<{}>({}) = {}'",
        registry.tool(call.tool_id).name,
        args.join(","),
        call.result.surface()
    )
}

/// Parse the quoted surface form back into a call with a resolved tool id.
pub fn parse_tool_call(text: &str, registry: &ToolRegistry) -> Result<ToolCall, CorpusError> {
    let malformed = || CorpusError::MalformedCall(text.to_string());
    let body = text
        .strip_prefix("'<")
        .and_then(|s| s.strip_suffix('\''))
        .ok_or_else(malformed)?;
    let (name, rest) = body.split_once(">(").ok_or_else(malformed)?;
    let (arg_str, result_str) = rest.split_once(") = ").ok_or_else(malformed)?;
    let tool_id = registry
        .lookup(name)
        .ok_or_else(|| CorpusError::UnknownTool(name.to_string()))?;
    let args: Vec<NumberLiteral> = arg_str
        .split(',')
        .map(NumberLiteral::parse)
        .collect::<Result<_, _>>()?;
    let expected = registry.tool(tool_id).arity;
    if args.len() != expected {
        return Err(CorpusError::ArityMismatch {
            name: name.to_string(),
            expected,
            got: args.len(),
        });
    }
    let result = NumberLiteral::parse(result_str)?;
    Ok(ToolCall {
        tool_id,
        args,
        result,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SequenceRecord {
    task_id: String,
    items: Vec<ItemRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum ItemRecord {
    Token { tok: String },
    Call {
        tool: String,
        args: Vec<String>,
        result: String,
    },
}

/// Load a JSONL corpus, validating every invariant: tokens in vocabulary,
/// tools known with matching arity, stored results re-executed, eos last.
pub fn load_corpus(
    path: &Path,
    registry: &ToolRegistry,
    vocab: &Vocab,
) -> Result<Vec<AnnotatedSequence>, CorpusError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        out.push(decode_line(&line, idx + 1, registry, vocab)?);
    }
    Ok(out)
}

fn decode_line(
    line: &str,
    line_no: usize,
    registry: &ToolRegistry,
    vocab: &Vocab,
) -> Result<AnnotatedSequence, CorpusError> {
    let record: SequenceRecord =
        serde_json::from_str(line).map_err(|e| CorpusError::SchemaError {
            line: line_no,
            msg: e.to_string(),
        })?;
    let mut items = Vec::with_capacity(record.items.len());
    for item in record.items {
        match item {
            ItemRecord::Token { tok } => {
                let id = vocab.id(&tok).ok_or_else(|| CorpusError::SchemaError {
                    line: line_no,
                    msg: format!("unknown token {tok:?}"),
                })?;
                items.push(Item::Token(id));
            }
            ItemRecord::Call { tool, args, result } => {
                let tool_id = registry
                    .lookup(&tool)
                    .ok_or(CorpusError::UnknownTool(tool.clone()))?;
                let args: Vec<NumberLiteral> = args
                    .iter()
                    .map(|a| NumberLiteral::parse(a))
                    .collect::<Result<_, _>>()?;
                let expected = registry.tool(tool_id).arity;
                if args.len() != expected {
                    return Err(CorpusError::ArityMismatch {
                        name: tool,
                        expected,
                        got: args.len(),
                    });
                }
                let result = NumberLiteral::parse(&result)?;
                let computed = registry.execute(tool_id, &args)?;
                if !computed.value_eq(&result) {
                    return Err(CorpusError::ResultMismatch {
                        line: line_no,
                        stored: result.surface().to_string(),
                        computed: computed.surface().to_string(),
                    });
                }
                items.push(Item::Call(ToolCall {
                    tool_id,
                    args,
                    result,
                }));
            }
        }
    }
    match items.last() {
        Some(Item::Token(id)) if *id == vocab.eos_id() => {}
        _ => return Err(CorpusError::MissingEos { line: line_no }),
    }
    let answer = record
        .answer
        .map(|a| NumberLiteral::parse(&a))
        .transpose()?;
    Ok(AnnotatedSequence {
        task_id: record.task_id,
        items,
        answer,
    })
}

/// Write a corpus in the canonical JSONL form (compact JSON, LF endings).
pub fn save_corpus<W: Write>(
    mut w: W,
    corpus: &[AnnotatedSequence],
    registry: &ToolRegistry,
    vocab: &Vocab,
) -> Result<(), CorpusError> {
    for seq in corpus {
        let record = SequenceRecord {
            task_id: seq.task_id.clone(),
            items: seq
                .items
                .iter()
                .map(|item| match item {
                    Item::Token(id) => ItemRecord::Token {
                        tok: vocab.token(*id).to_string(),
                    },
                    Item::Call(call) => ItemRecord::Call {
                        tool: registry.tool(call.tool_id).name.clone(),
                        args: call.args.iter().map(|a| a.surface().to_string()).collect(),
                        result: call.result.surface().to_string(),
                    },
                })
                .collect(),
            answer: seq.answer.as_ref().map(|a| a.surface().to_string()),
        };
        serde_json::to_writer(&mut w, &record).map_err(|e| CorpusError::SchemaError {
            line: 0,
            msg: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_corpus_file(
    path: &Path,
    corpus: &[AnnotatedSequence],
    registry: &ToolRegistry,
    vocab: &Vocab,
) -> Result<(), CorpusError> {
    let mut buf = Vec::new();
    save_corpus(&mut buf, corpus, registry, vocab)?;
    std::fs::write(path, buf)?;
    Ok(())
}
