//! Tools, executors, and the registry with its reject convention.
//!
//! The registry holds the tool set `T`; the extended set adds one reject
//! element at index `|T|` which has no executor, no documentation, and is
//! never produced by retrieval.

use crate::literal::{LiteralError, NumberLiteral};
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ToolId = usize;

#[derive(Debug, Error, PartialEq, Clone)]
pub enum ToolError {
    #[error("tool name {0:?} is not a valid identifier")]
    BadName(String),
    #[error("duplicate tool name {0:?}")]
    DuplicateName(String),
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("unknown executor {0:?}")]
    UnknownExecutor(String),
    #[error("tool {name} expects {expected} args, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("division by zero")]
    DivideByZero,
    #[error("rational magnitude cap exceeded")]
    Overflow,
    #[error(transparent)]
    Literal(#[from] LiteralError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub doc: String,
    pub arity: usize,
    pub executor_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRegistry {
    tools: Vec<Tool>,
}

impl ToolRegistry {
    pub fn new(tools: Vec<Tool>) -> Result<Self, ToolError> {
        let mut seen = std::collections::HashSet::new();
        for tool in &tools {
            if tool.name.is_empty()
                || !tool
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphabetic() || c == '_')
            {
                return Err(ToolError::BadName(tool.name.clone()));
            }
            if !seen.insert(tool.name.clone()) {
                return Err(ToolError::DuplicateName(tool.name.clone()));
            }
            if tool.arity == 0 {
                return Err(ToolError::ArityMismatch {
                    name: tool.name.clone(),
                    expected: 1,
                    got: 0,
                });
            }
            executor(&tool.executor_id)?;
        }
        Ok(Self { tools })
    }

    /// The four basic arithmetic operations, two arguments each.
    pub fn arithmetic() -> Self {
        let mk = |name: &str, doc: &str| Tool {
            name: name.into(),
            doc: doc.into(),
            arity: 2,
            executor_id: name.into(),
        };
        Self::new(vec![
            mk("add", "returns the sum of two numbers"),
            mk("subtract", "returns the first number minus the second"),
            mk("multiply", "returns the product of two numbers"),
            mk("divide", "returns the first number divided by the second"),
        ])
        .expect("builtin registry is valid")
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// Index of the reject element in the extended set; always `|T|`.
    pub fn rej_index(&self) -> usize {
        self.tools.len()
    }

    pub fn tool(&self, id: ToolId) -> &Tool {
        &self.tools[id]
    }

    pub fn tools(&self) -> &[Tool] {
        &self.tools
    }

    pub fn lookup(&self, name: &str) -> Option<ToolId> {
        self.tools.iter().position(|t| t.name == name)
    }

    pub fn execute(&self, id: ToolId, args: &[NumberLiteral]) -> Result<NumberLiteral, ToolError> {
        let tool = &self.tools[id];
        if args.len() != tool.arity {
            return Err(ToolError::ArityMismatch {
                name: tool.name.clone(),
                expected: tool.arity,
                got: args.len(),
            });
        }
        let values: Vec<BigRational> = args.iter().map(|a| a.value().clone()).collect();
        let result = (executor(&tool.executor_id)?)(&values)?;
        let lit = NumberLiteral::from_value(result);
        if !lit.within_bit_cap() {
            return Err(ToolError::Overflow);
        }
        Ok(lit)
    }
}

type ExecutorFn = fn(&[BigRational]) -> Result<BigRational, ToolError>;

fn executor(id: &str) -> Result<ExecutorFn, ToolError> {
    Ok(match id {
        "add" => |a: &[BigRational]| Ok(&a[0] + &a[1]),
        "subtract" => |a: &[BigRational]| Ok(&a[0] - &a[1]),
        "multiply" => |a: &[BigRational]| Ok(&a[0] * &a[1]),
        "divide" => |a: &[BigRational]| {
            if a[1].is_zero() {
                Err(ToolError::DivideByZero)
            } else {
                Ok(&a[0] / &a[1])
            }
        },
        // Single-argument pass-through used by the tool-selection corpus,
        // where calls carry no meaningful arithmetic.
        "identity" => |a: &[BigRational]| Ok(a[0].clone()),
        _ => return Err(ToolError::UnknownExecutor(id.to_string())),
    })
}
