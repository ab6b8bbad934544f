//! Retrieval-size ablation on the tool-selection task: sweep the number of
//! candidates k handed to the reranker and report Recall@{1,3,5} plus the
//! per-decision latency multiplier relative to the base rule.
//!
//!     cargo run --release --example ablation_study

use toolken::config::{RunConfig, Task};
use toolken::eval::run_ablation;
use toolken::model::Model;
use toolken::synth::gen_toolselect_corpus;
use toolken::train;

fn main() {
    let mut config = RunConfig::default_for(Task::Selection);
    config.gen.train_size = 600;
    config.gen.test_size = 200;

    let data = gen_toolselect_corpus(&config.gen).expect("valid config");
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

    let rows = run_ablation(
        &model,
        &data.test,
        &config.ablation_ks,
        config.ablation_reps,
        config.decode.rerank_context,
        config.decode.doc_order,
    )
    .expect("non-empty corpus");

    println!("{:<10} {:>3} {:>7} {:>7} {:>7} {:>9}", "method", "k", "Rec@1", "Rec@3", "Rec@5", "latency");
    for row in rows {
        println!(
            "{:<10} {:>3} {:>7.3} {:>7.3} {:>7.3} {:>8.2}x",
            row.method, row.k, row.recall_at_1, row.recall_at_3, row.recall_at_5,
            row.latency_multiplier
        );
    }
}
