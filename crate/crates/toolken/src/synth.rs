//! Synthetic corpus generators: arithmetic word problems with annotated
//! calls, and a keyword-driven tool-selection task.

use crate::corpus::{AnnotatedSequence, Item, ToolCall};
use crate::literal::NumberLiteral;
use crate::registry::{Tool, ToolRegistry};
use crate::vocab::{tokenize, Vocab, ANSWER_MARKER, BOS, EOS, SEP};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Number of tools in the selection task.
    pub n_tools: usize,
    /// Probability that each query keyword is drawn from the shared pool
    /// instead of the gold tool's unique keywords.
    pub overlap: f64,
    /// When true, narrative equation text preceding each call is dropped so
    /// the surrounding prose alone must cue the call.
    pub equation_removal: bool,
    pub operand_lo: i64,
    pub operand_hi: i64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_size: 2000,
            test_size: 500,
            n_tools: 50,
            overlap: 0.5,
            equation_removal: true,
            operand_lo: 2,
            operand_hi: 12,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.train_size == 0 || self.test_size == 0 {
            return Err(SynthError::BadConfig("corpus sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(SynthError::BadConfig("overlap must lie in [0, 1]".into()));
        }
        if self.n_tools < 2 {
            return Err(SynthError::BadConfig("need at least two tools".into()));
        }
        if self.operand_lo < 1 || self.operand_hi <= self.operand_lo {
            return Err(SynthError::BadConfig("operand range must be positive and non-empty".into()));
        }
        Ok(())
    }
}

/// A generated dataset bundle: closed vocabulary, registry, and both splits.
pub struct SynthData {
    pub vocab: Vocab,
    pub registry: ToolRegistry,
    pub train: Vec<AnnotatedSequence>,
    pub test: Vec<AnnotatedSequence>,
}

// Intermediate surface-level form, mapped to token ids once the vocabulary
// is closed over the whole dataset.
enum RawItem {
    Words(String),
    Call { tool: String, args: Vec<NumberLiteral>, result: NumberLiteral },
}

struct RawTask {
    items: Vec<RawItem>,
    answer: NumberLiteral,
}

const NAMES: &[&str] = &[
    "alice", "ben", "carla", "dan", "emma", "felix", "grace", "harry", "irene", "james",
];
const OBJECTS: &[&str] = &[
    "apples", "pens", "books", "coins", "cards", "shells", "marbles", "stickers",
];
const FRACTIONS: &[(&str, i64, i64)] = &[("1/2", 1, 2), ("1/3", 1, 3), ("1/4", 1, 4)];

/// Arithmetic word problems with one to three chained calls. The final
/// answer always equals the last call's result and appears after the
/// answer marker.
pub fn gen_reasoning_corpus(config: &GenConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let registry = ToolRegistry::arithmetic();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let total = config.train_size + config.test_size;
    let mut raw = Vec::with_capacity(total);
    for i in 0..total {
        raw.push(reasoning_task(&mut rng, config, i));
    }
    let vocab = close_vocab(&raw, &registry, reasoning_guaranteed(config));
    let tasks: Vec<AnnotatedSequence> = raw
        .iter()
        .enumerate()
        .map(|(i, t)| finalize(t, i, &vocab, &registry))
        .collect();
    let (train, test) = split(tasks, config.train_size);
    Ok(SynthData { vocab, registry, train, test })
}

fn reasoning_guaranteed(config: &GenConfig) -> Vec<String> {
    // Every integer a template can produce, so argument infilling always
    // has its target literal available as a single token.
    let cap = config.operand_hi * config.operand_hi * 2 + config.operand_hi * 4;
    let mut extra: Vec<String> = (0..=cap).map(|n| n.to_string()).collect();
    extra.extend(FRACTIONS.iter().map(|(s, _, _)| s.to_string()));
    extra
}

fn int(rng: &mut ChaCha20Rng, lo: i64, hi: i64) -> i64 {
    rng.gen_range(lo..=hi)
}

struct TaskBuilder<'a> {
    registry: &'a ToolRegistry,
    items: Vec<RawItem>,
    equation_removal: bool,
}

impl<'a> TaskBuilder<'a> {
    fn new(registry: &'a ToolRegistry, equation_removal: bool) -> Self {
        Self { registry, items: vec![RawItem::Words(BOS.into())], equation_removal }
    }

    fn say(&mut self, text: &str) {
        self.items.push(RawItem::Words(text.to_string()));
    }

    fn call(&mut self, tool: &str, a: NumberLiteral, b: NumberLiteral, symbol: &str) -> NumberLiteral {
        let id = self.registry.lookup(tool).expect("builtin tool");
        let result = self.registry.execute(id, &[a.clone(), b.clone()]).expect("in-range operands");
        if !self.equation_removal {
            self.items.push(RawItem::Words(format!("{} {} {} =", a.surface(), symbol, b.surface())));
        }
        self.items.push(RawItem::Call { tool: tool.into(), args: vec![a, b], result: result.clone() });
        result
    }

    fn finish(mut self, answer: NumberLiteral) -> RawTask {
        self.items.push(RawItem::Words(format!(". {} {} {}", ANSWER_MARKER, answer.surface(), EOS)));
        RawTask { items: self.items, answer }
    }
}

fn lit(n: i64) -> NumberLiteral {
    NumberLiteral::from_int(n)
}

fn reasoning_task(rng: &mut ChaCha20Rng, config: &GenConfig, _index: usize) -> RawTask {
    let template = rng.gen_range(0..14u32);
    let name = *NAMES.choose(rng).unwrap();
    let other = *NAMES.choose(rng).unwrap();
    let obj = *OBJECTS.choose(rng).unwrap();
    let (lo, hi) = (config.operand_lo, config.operand_hi);
    let registry = ToolRegistry::arithmetic();
    let mut b = TaskBuilder::new(&registry, config.equation_removal);
    let answer = match template {
        0 => {
            let (x, y) = (int(rng, lo, hi), int(rng, lo, hi));
            b.say(&format!("{name} has {x} {obj} . a friend gives {name} {y} more {obj} . how many {obj} does {name} have now ?"));
            b.say(&format!("{name} now has"));
            let r = b.call("add", lit(x), lit(y), "+");
            b.say(&format!("{obj}"));
            r
        }
        1 => {
            let x = int(rng, lo + 1, hi);
            let y = int(rng, 1, x - 1);
            b.say(&format!("{name} had {x} {obj} and lost {y} of them . how many {obj} are left ?"));
            b.say("there are");
            let r = b.call("subtract", lit(x), lit(y), "-");
            b.say(&format!("{obj} left"));
            r
        }
        2 => {
            let (x, y) = (int(rng, lo, hi), int(rng, lo, hi));
            b.say(&format!("each box holds {x} {obj} . {name} buys {y} boxes . how many {obj} in total ?"));
            b.say("in total that is");
            let r = b.call("multiply", lit(x), lit(y), "*");
            b.say(&format!("{obj}"));
            r
        }
        3 => {
            let y = int(rng, 2, hi);
            let q = int(rng, lo, hi);
            let x = y * q;
            b.say(&format!("{name} shares {x} {obj} equally among {y} friends . how many {obj} does each friend get ?"));
            b.say("each friend gets");
            let r = b.call("divide", lit(x), lit(y), "/");
            b.say(&format!("{obj}"));
            r
        }
        4 => {
            let half = int(rng, lo + 1, hi);
            let y = half * 2;
            let k = int(rng, 1, half - 1);
            b.say(&format!("{name} is {k} years less than half the age of {other} . {other} is {y} years old . how old is {name} ?"));
            b.say(&format!("half of {y} is"));
            let h = b.call("divide", lit(y), lit(2), "/");
            b.say(&format!(". so {name} is"));
            let r = b.call("subtract", h, lit(k), "-");
            b.say("years old");
            r
        }
        5 => {
            let (fs, fn_, fd) = *FRACTIONS.choose(rng).unwrap();
            let h = int(rng, lo, hi) * fd;
            b.say(&format!("{name} slept {h} hours . {other} slept {fs} of that . how many more hours did {name} sleep than {other} ?"));
            b.say(&format!("{other} slept"));
            let part = b.call("multiply", lit(h), NumberLiteral::parse(fs).unwrap(), "*");
            let _ = (fn_, fd);
            b.say(&format!("hours . so {name} slept"));
            let r = b.call("subtract", lit(h), part, "-");
            b.say("more hours");
            r
        }
        6 => {
            let (x, y, z) = (int(rng, lo, hi), int(rng, lo, hi), int(rng, lo, hi));
            b.say(&format!("{name} picked {x} {obj} in the morning , {y} at noon and {z} in the evening . how many {obj} in total ?"));
            b.say("morning and noon give");
            let s = b.call("add", lit(x), lit(y), "+");
            b.say(". with the evening that is");
            let r = b.call("add", s, lit(z), "+");
            b.say(&format!("{obj}"));
            r
        }
        7 => {
            let (x, y, z) = (int(rng, lo, hi), int(rng, lo, hi), int(rng, lo, hi));
            b.say(&format!("a pack has {x} {obj} . {name} buys {y} packs and also {z} loose {obj} . how many {obj} in total ?"));
            b.say("the packs hold");
            let p = b.call("multiply", lit(x), lit(y), "*");
            b.say(". adding the loose ones gives");
            let r = b.call("add", p, lit(z), "+");
            b.say(&format!("{obj}"));
            r
        }
        8 => {
            let c = int(rng, 2, hi);
            let q = int(rng, lo, hi);
            let y = int(rng, 1, hi);
            let x = c * q + y;
            b.say(&format!("{name} had {x} {obj} , gave away {y} , and split the rest among {c} friends . how many {obj} per friend ?"));
            b.say("after giving some away there are");
            let rest = b.call("subtract", lit(x), lit(y), "-");
            b.say(". each friend gets");
            let r = b.call("divide", rest, lit(c), "/");
            b.say(&format!("{obj}"));
            r
        }
        9 => {
            let (x, y) = (int(rng, lo, hi), int(rng, lo, hi));
            let cost = x * y;
            let m = cost + int(rng, 1, hi);
            b.say(&format!("tickets cost {x} each . {name} buys {y} tickets and pays with {m} . how much change ?"));
            b.say("the tickets cost");
            let c = b.call("multiply", lit(x), lit(y), "*");
            b.say(". the change is");
            let r = b.call("subtract", lit(m), c, "-");
            b.say("");
            r
        }
        10 => {
            let (x, y, v) = (int(rng, lo, hi), int(rng, lo, hi), int(rng, 1, hi));
            b.say(&format!("{name} has {x} {obj} and {other} has {y} . each is worth {v} . what is the total value ?"));
            b.say("together they have");
            let s = b.call("add", lit(x), lit(y), "+");
            b.say(&format!("{obj} . the value is"));
            let r = b.call("multiply", s, lit(v), "*");
            b.say("");
            r
        }
        11 => {
            let (w, hrs) = (int(rng, lo, hi), int(rng, lo, hi));
            let earn = w * hrs;
            let spend = int(rng, 1, earn - 1);
            let d = divisor_of(earn - spend, rng);
            b.say(&format!("{name} earns {w} per hour and works {hrs} hours . {name} spends {spend} and saves the rest over {d} days equally . how much per day ?"));
            b.say("the pay is");
            let e = b.call("multiply", lit(w), lit(hrs), "*");
            b.say(". what remains is");
            let s = b.call("subtract", e, lit(spend), "-");
            b.say(". per day that is");
            let r = b.call("divide", s, lit(d), "/");
            b.say("");
            r
        }
        12 => {
            let (x, y) = (int(rng, lo, hi), int(rng, lo, hi));
            b.say(&format!("{name} doubles a stack of {x} {obj} and then finds {y} more . how many {obj} now ?"));
            b.say("doubling gives");
            let p = b.call("multiply", lit(x), lit(2), "*");
            b.say(". with the extras that is");
            let r = b.call("add", p, lit(y), "+");
            b.say(&format!("{obj}"));
            r
        }
        _ => {
            let y = int(rng, 2, hi);
            let q = int(rng, lo, hi);
            let x = y * q;
            let z = int(rng, 1, hi);
            b.say(&format!("{name} splits {x} {obj} into {y} equal piles and adds {z} {obj} to one pile . how many {obj} in that pile ?"));
            b.say("each pile starts with");
            let p = b.call("divide", lit(x), lit(y), "/");
            b.say(". the big pile has");
            let r = b.call("add", p, lit(z), "+");
            b.say(&format!("{obj}"));
            r
        }
    };
    b.finish(answer)
}

fn divisor_of(n: i64, rng: &mut ChaCha20Rng) -> i64 {
    let divisors: Vec<i64> = (2..=n).filter(|d| n % d == 0).collect();
    if divisors.is_empty() {
        1
    } else {
        *divisors.choose(rng).unwrap()
    }
}

const KEY_PREFIX: &[&str] = &[
    "ar", "bel", "cor", "dun", "el", "fen", "gor", "hal", "il", "jor", "kel", "lum", "mar",
    "nor", "ol", "per", "quil", "ros", "sel", "tor", "ul", "ver", "wex", "yor", "zan",
];
const KEY_SUFFIX: &[&str] = &["a", "en", "ix", "on", "ua", "eth", "im", "os"];
const TOOL_VERB: &[&str] = &[
    "fetch", "sort", "merge", "scan", "rank", "filter", "parse", "count", "trace", "index",
    "group", "split",
];
const TOOL_NOUN: &[&str] = &[
    "files", "notes", "maps", "logs", "rows", "items", "tags", "links", "keys", "docs",
];
const UNIQUE_PER_TOOL: usize = 2;
const SHARED_POOL: usize = 20;
const QUERY_KEYWORDS: usize = 6;

/// Keyword inventory for the selection task, in a fixed deterministic order.
fn keyword_inventory() -> Vec<String> {
    let mut out = Vec::new();
    for p in KEY_PREFIX {
        for s in KEY_SUFFIX {
            out.push(format!("{p}{s}"));
        }
    }
    out
}

/// The unique keywords of each selection tool, index-aligned with the
/// registry. Exposed so tests can build a keyword-match oracle.
pub fn selection_keywords(config: &GenConfig) -> (Vec<Vec<String>>, Vec<String>) {
    let inventory = keyword_inventory();
    let shared: Vec<String> = inventory[..SHARED_POOL].to_vec();
    let unique: Vec<Vec<String>> = (0..config.n_tools)
        .map(|i| {
            (0..UNIQUE_PER_TOOL)
                .map(|j| inventory[SHARED_POOL + i * UNIQUE_PER_TOOL + j].clone())
                .collect()
        })
        .collect();
    (unique, shared)
}

fn selection_registry(config: &GenConfig) -> Result<ToolRegistry, SynthError> {
    let (unique, shared) = selection_keywords(config);
    if SHARED_POOL + config.n_tools * UNIQUE_PER_TOOL > keyword_inventory().len() {
        return Err(SynthError::BadConfig("too many tools for the keyword inventory".into()));
    }
    let mut names = Vec::new();
    'outer: for v in TOOL_VERB {
        for n in TOOL_NOUN {
            names.push(format!("{v}_{n}"));
            if names.len() == config.n_tools {
                break 'outer;
            }
        }
    }
    if names.len() < config.n_tools {
        return Err(SynthError::BadConfig("too many tools for the name inventory".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ 0x5e1ec7);
    let tools = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let s1 = shared[rng.gen_range(0..shared.len())].clone();
            let s2 = shared[rng.gen_range(0..shared.len())].clone();
            Tool {
                name: name.clone(),
                doc: format!(
                    "use this for {} and {} tasks involving {} or {}",
                    unique[i][0], unique[i][1], s1, s2
                ),
                arity: 1,
                executor_id: "identity".into(),
            }
        })
        .collect();
    ToolRegistry::new(tools).map_err(|e| SynthError::BadConfig(e.to_string()))
}

/// Tool-selection task: each query names keywords; exactly one toolken
/// position follows the request. The `overlap` knob controls how many query
/// keywords come from the shared pool instead of the gold tool's uniques.
pub fn gen_toolselect_corpus(config: &GenConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let registry = selection_registry(config)?;
    let (unique, shared) = selection_keywords(config);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let total = config.train_size + config.test_size;
    let mut raw = Vec::with_capacity(total);
    for _ in 0..total {
        let gold = rng.gen_range(0..config.n_tools);
        // Distractors first, the tool's own keywords last: requests
        // naturally build up to the operative phrase, and the trailing
        // position gives every method the same recency advantage.
        let mut distractors = Vec::new();
        let mut cues = Vec::new();
        for _ in 0..QUERY_KEYWORDS {
            if rng.gen::<f64>() < config.overlap {
                distractors.push(shared[rng.gen_range(0..shared.len())].clone());
            } else {
                cues.push(unique[gold][rng.gen_range(0..UNIQUE_PER_TOOL)].clone());
            }
        }
        let mut words = distractors;
        words.append(&mut cues);
        let items = vec![
            RawItem::Words(format!("{BOS} i need a tool for {} ?", words.join(" "))),
            RawItem::Call {
                tool: registry.tool(gold).name.clone(),
                args: vec![lit(1)],
                result: lit(1),
            },
            RawItem::Words(EOS.to_string()),
        ];
        raw.push(RawTask { items, answer: lit(1) });
    }
    let vocab = close_vocab(&raw, &registry, vec![]);
    let tasks: Vec<AnnotatedSequence> = raw
        .iter()
        .enumerate()
        .map(|(i, t)| finalize(t, i, &vocab, &registry))
        .collect();
    let (train, test) = split(tasks, config.train_size);
    Ok(SynthData { vocab, registry, train, test })
}

/// Build the closed vocabulary: specials first, then every surface token the
/// dataset (including rendered calls and tool docs) uses, plus guarantees.
fn close_vocab(raw: &[RawTask], registry: &ToolRegistry, guaranteed: Vec<String>) -> Vocab {
    let mut seen = BTreeSet::new();
    for task in raw {
        for item in &task.items {
            match item {
                RawItem::Words(text) => {
                    for tok in tokenize(text) {
                        seen.insert(tok);
                    }
                }
                RawItem::Call { tool, args, result } => {
                    let rendered = render_surface(tool, args, result);
                    for tok in tokenize(&rendered) {
                        seen.insert(tok);
                    }
                }
            }
        }
    }
    for tool in registry.tools() {
        for tok in tokenize(&tool.name) {
            seen.insert(tok);
        }
        for tok in tokenize(&tool.doc) {
            seen.insert(tok);
        }
    }
    for tok in ["tool", "name", "description", ":", ","] {
        seen.insert(tok.to_string());
    }
    for g in guaranteed {
        seen.insert(g);
    }
    let mut tokens: Vec<String> = vec![BOS.into(), EOS.into(), SEP.into(), ANSWER_MARKER.into()];
    for tok in seen {
        if !tokens.contains(&tok) {
            tokens.push(tok);
        }
    }
    Vocab::new(tokens, EOS).expect("generated inventory is well-formed")
}

fn render_surface(tool: &str, args: &[NumberLiteral], result: &NumberLiteral) -> String {
    let rendered: Vec<String> = args.iter().map(|a| a.surface().to_string()).collect();
    format!("'<{}>({}) = {}'", tool, rendered.join(","), result.surface())
}

fn finalize(task: &RawTask, index: usize, vocab: &Vocab, registry: &ToolRegistry) -> AnnotatedSequence {
    let mut items = Vec::new();
    for item in &task.items {
        match item {
            RawItem::Words(text) => {
                for tok in tokenize(text) {
                    items.push(Item::Token(vocab.id(&tok).expect("closed vocabulary")));
                }
            }
            RawItem::Call { tool, args, result } => {
                items.push(Item::Call(ToolCall {
                    tool_id: registry.lookup(tool).expect("registered tool"),
                    args: args.clone(),
                    result: result.clone(),
                }));
            }
        }
    }
    AnnotatedSequence {
        task_id: format!("task-{index:05}"),
        items,
        answer: Some(task.answer.clone()),
    }
}

fn split(
    mut tasks: Vec<AnnotatedSequence>,
    train_size: usize,
) -> (Vec<AnnotatedSequence>, Vec<AnnotatedSequence>) {
    let test = tasks.split_off(train_size);
    (tasks, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    fn small() -> GenConfig {
        GenConfig { train_size: 60, test_size: 20, ..GenConfig::default() }
    }

    #[test]
    fn reasoning_answers_match_last_call() {
        let data = gen_reasoning_corpus(&small()).unwrap();
        for seq in data.train.iter().chain(&data.test) {
            let calls: Vec<_> = seq.calls().collect();
            assert!(!calls.is_empty());
            assert!((1..=3).contains(&calls.len()));
            assert!(calls.last().unwrap().result.value_eq(seq.answer.as_ref().unwrap()));
        }
    }

    #[test]
    fn reasoning_roundtrips_through_jsonl() {
        let data = gen_reasoning_corpus(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        corpus::save_corpus_file(&path, &data.train, &data.registry, &data.vocab).unwrap();
        let back = corpus::load_corpus(&path, &data.registry, &data.vocab).unwrap();
        assert_eq!(back, data.train);
    }

    #[test]
    fn reasoning_tool_balance() {
        let config = GenConfig { train_size: 1000, test_size: 1, ..GenConfig::default() };
        let data = gen_reasoning_corpus(&config).unwrap();
        let mut counts = vec![0usize; 4];
        let mut total = 0usize;
        for seq in &data.train {
            for call in seq.calls() {
                counts[call.tool_id] += 1;
                total += 1;
            }
        }
        for (tool, &c) in counts.iter().enumerate() {
            let share = c as f64 / total as f64;
            assert!(share >= 0.15, "tool {tool} share {share}");
        }
    }

    #[test]
    fn equation_removal_changes_text_not_calls() {
        let with = gen_reasoning_corpus(&GenConfig { equation_removal: false, ..small() }).unwrap();
        let without = gen_reasoning_corpus(&GenConfig { equation_removal: true, ..small() }).unwrap();
        for (a, b) in with.train.iter().zip(&without.train) {
            let ca: Vec<_> = a.calls().cloned().collect();
            let cb: Vec<_> = b.calls().cloned().collect();
            assert_eq!(ca, cb);
            assert!(a.items.len() > b.items.len());
        }
    }

    #[test]
    fn determinism_same_seed() {
        let a = gen_reasoning_corpus(&small()).unwrap();
        let b = gen_reasoning_corpus(&small()).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        corpus::save_corpus(&mut ba, &a.train, &a.registry, &a.vocab).unwrap();
        corpus::save_corpus(&mut bb, &b.train, &b.registry, &b.vocab).unwrap();
        assert_eq!(ba, bb);
        assert_eq!(a.vocab.tokens(), b.vocab.tokens());
    }

    #[test]
    fn selection_single_toolken_per_task() {
        let data = gen_toolselect_corpus(&small()).unwrap();
        assert_eq!(data.registry.len(), 50);
        for seq in data.train.iter().chain(&data.test) {
            assert_eq!(seq.calls().count(), 1);
        }
    }

    #[test]
    fn selection_zero_overlap_queries_use_gold_uniques() {
        let config = GenConfig { overlap: 0.0, ..small() };
        let data = gen_toolselect_corpus(&config).unwrap();
        let (unique, _) = selection_keywords(&config);
        for seq in &data.train {
            let gold = seq.calls().next().unwrap().tool_id;
            let words: Vec<&str> = seq
                .items
                .iter()
                .filter_map(|i| match i {
                    Item::Token(t) => Some(data.vocab.token(*t)),
                    _ => None,
                })
                .collect();
            let hit = unique[gold].iter().any(|kw| words.contains(&kw.as_str()));
            assert!(hit, "query must contain a gold unique keyword at overlap 0");
        }
    }

    #[test]
    fn selection_label_soundness_audit() {
        // At moderate overlap most queries still contain gold evidence.
        let config = GenConfig { train_size: 500, test_size: 1, ..small() };
        let data = gen_toolselect_corpus(&config).unwrap();
        let (unique, _) = selection_keywords(&config);
        let mut sound = 0usize;
        for seq in &data.train {
            let gold = seq.calls().next().unwrap().tool_id;
            let words: Vec<&str> = seq
                .items
                .iter()
                .filter_map(|i| match i {
                    Item::Token(t) => Some(data.vocab.token(*t)),
                    _ => None,
                })
                .collect();
            if unique[gold].iter().any(|kw| words.contains(&kw.as_str())) {
                sound += 1;
            }
        }
        // 1 - overlap^6 at overlap 0.5 is ~0.984.
        assert!(sound as f64 / 500.0 > 0.9);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(GenConfig { overlap: 1.5, ..small() }.validate().is_err());
        assert!(GenConfig { train_size: 0, ..small() }.validate().is_err());
    }
}
