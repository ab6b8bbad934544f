//! The payoff of the rejection-aware reranker: fewer spurious tool calls at
//! (nearly) no cost in end-task accuracy. Scores the base decision rule and
//! the reranked rule position-by-position on held-out reasoning tasks, then
//! compares end-to-end exact-match rates.
//!
//!     cargo run --release --example rerank_with_reject

use toolken::config::{RunConfig, Task};
use toolken::decode::{decode, DecodeConfig, RerankPolicy};
use toolken::eval::{exact_match, score_positions, ScoreMode, ScoreOptions};
use toolken::model::Model;
use toolken::pipeline::query_of;
use toolken::synth::gen_reasoning_corpus;
use toolken::train;

fn main() {
    let mut config = RunConfig::default_for(Task::Reasoning);
    config.gen.train_size = 300;
    config.gen.test_size = 60;

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

    for (label, mode) in [("base", ScoreMode::Base), ("reranked", ScoreMode::Reranked)] {
        let opts = ScoreOptions {
            mode,
            k: config.eval_k,
            rerank_context: config.decode.rerank_context,
            doc_order: config.decode.doc_order,
        };
        let report = score_positions(&model, &data.test, &opts);
        println!(
            "{label:>8}: false positives {:>3}  false negatives {:>3}  accuracy {:.3}",
            report.false_positive,
            report.false_negative,
            report.accuracy()
        );
    }

    for (label, policy) in [
        ("always-accept (k=1)", RerankPolicy::AlwaysAccept),
        ("learned reranker   ", RerankPolicy::Learned),
    ] {
        let decode_config = DecodeConfig {
            rerank_policy: policy,
            ..config.decode.clone()
        };
        let mut matched = 0;
        let mut failed = 0;
        for seq in &data.test {
            let query = query_of(seq, &model);
            let calls: Vec<_> = seq.calls().cloned().collect();
            match decode(&model, &query, &calls, &decode_config) {
                Ok(trace) => {
                    let m = exact_match(
                        trace.final_answer.as_deref(),
                        seq.answer.as_ref().unwrap(),
                        config.numeric_tol,
                    );
                    if m.matched {
                        matched += 1;
                    }
                }
                Err(_) => failed += 1,
            }
        }
        println!(
            "{label}: exact match {matched}/{} ({failed} decode failures)",
            data.test.len()
        );
    }
}
