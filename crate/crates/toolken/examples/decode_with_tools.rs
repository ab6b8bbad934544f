//! Decode held-out reasoning tasks with the full mixture decoder and print
//! the resulting traces: every toolken proposal, the reranker's verdict,
//! and the spliced call surfaces.
//!
//!     cargo run --release --example decode_with_tools

use toolken::config::{RunConfig, Task};
use toolken::decode::{decode, StepMode};
use toolken::model::Model;
use toolken::pipeline::query_of;
use toolken::synth::gen_reasoning_corpus;
use toolken::train;

fn main() {
    let mut config = RunConfig::default_for(Task::Reasoning);
    config.gen.train_size = 300;
    config.gen.test_size = 10;

    let data = gen_reasoning_corpus(&config.gen).expect("valid config");
    let mut model = Model::new(config.encoder.clone(), data.registry, data.vocab);
    train::train_stage1(&mut model, &data.train, &config.stage1).expect("stage 1");
    let split = train::split_folds(
        &data.train,
        (config.fold_ratio1, config.fold_ratio2),
        config.seed,
    )
    .expect("ratios valid");
    train::train_stage2(&mut model, &split.fold1, &config.stage2).expect("stage 2");
    let mined = train::mine_hard_negatives(&model, &split.fold2, config.stage3.k);
    train::train_stage3_hardneg(&mut model, &split.fold2, &mined, &config.stage3)
        .expect("stage 3");

    for seq in data.test.iter().take(4) {
        let query = query_of(seq, &model);
        let calls: Vec<_> = seq.calls().cloned().collect();
        println!("\nquery: {}", surface(&query, &model));
        match decode(&model, &query, &calls, &config.decode) {
            Ok(trace) => {
                for step in &trace.steps {
                    match step.mode {
                        StepMode::Rerank => println!(
                            "  proposal {:>10} | p_int {:?}",
                            step.proposed,
                            step.p_int.as_ref().map(|p| rounded(p))
                        ),
                        StepMode::Tool => {
                            println!("    accepted -> {}", step.call.as_deref().unwrap())
                        }
                        StepMode::RejectFallback => {
                            println!("    rejected -> emitted {:?}", step.emitted[0])
                        }
                        StepMode::Reason => {}
                    }
                }
                println!("  output: {}", trace.final_text);
                println!(
                    "  answer: {:?} (gold {})",
                    trace.final_answer,
                    seq.answer.as_ref().unwrap()
                );
            }
            Err(e) => println!("  decode failed: {e}"),
        }
    }
}

fn surface(tokens: &[toolken::vocab::TokenId], model: &Model) -> String {
    tokens
        .iter()
        .map(|&t| model.vocab.token(t))
        .collect::<Vec<_>>()
        .join(" ")
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
