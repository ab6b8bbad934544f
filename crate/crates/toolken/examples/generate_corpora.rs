//! Generate both synthetic corpora and print what they look like.
//!
//!     cargo run --example generate_corpora

use toolken::corpus::Item;
use toolken::synth::{gen_reasoning_corpus, gen_toolselect_corpus, GenConfig};

fn main() {
    let config = GenConfig {
        train_size: 200,
        test_size: 50,
        ..GenConfig::default()
    };

    let reasoning = gen_reasoning_corpus(&config).expect("valid config");
    println!(
        "reasoning: {} train / {} test tasks, |V| = {}, {} tools",
        reasoning.train.len(),
        reasoning.test.len(),
        reasoning.vocab.size(),
        reasoning.registry.len()
    );
    let mut call_counts = vec![0usize; reasoning.registry.len()];
    for seq in &reasoning.train {
        for call in seq.calls() {
            call_counts[call.tool_id] += 1;
        }
    }
    for (id, count) in call_counts.iter().enumerate() {
        println!("  {:>10}: {count} calls", reasoning.registry.tool(id).name);
    }

    let sample = &reasoning.train[0];
    println!("\nsample task {} :", sample.task_id);
    let mut line = String::new();
    for item in &sample.items {
        match item {
            Item::Token(t) => {
                line.push_str(reasoning.vocab.token(*t));
                line.push(' ');
            }
            Item::Call(call) => {
                line.push_str(&format!(
                    "[{}]",
                    toolken::corpus::render_tool_call(call, &reasoning.registry)
                ));
                line.push(' ');
            }
        }
    }
    println!("  {line}");
    println!("  answer: {}", sample.answer.as_ref().unwrap());

    let selection = gen_toolselect_corpus(&config).expect("valid config");
    println!(
        "\nselection: {} train / {} test tasks, |V| = {}, {} tools",
        selection.train.len(),
        selection.test.len(),
        selection.vocab.size(),
        selection.registry.len()
    );
    let first = &selection.train[0];
    let gold = first.calls().next().unwrap().tool_id;
    let words: Vec<&str> = first
        .items
        .iter()
        .filter_map(|i| match i {
            Item::Token(t) => Some(selection.vocab.token(*t)),
            _ => None,
        })
        .collect();
    println!("  sample query: {}", words.join(" "));
    println!("  gold tool:    {}", selection.registry.tool(gold).name);
    println!("  its doc:      {}", selection.registry.tool(gold).doc);
}
