//! The full three-stage pipeline on a small reasoning corpus, in memory:
//! stage 1 fits the vocabulary head, stage 2 the toolken embeddings on
//! fold 1, mining and stage 3 fit the rerank head on fold 2. Prints losses
//! and test metrics.
//!
//!     cargo run --release --example train_full_pipeline

use toolken::config::{RunConfig, Task};
use toolken::eval::{score_positions, ScoreMode, ScoreOptions};
use toolken::model::Model;
use toolken::synth::gen_reasoning_corpus;
use toolken::train;

fn main() {
    let mut config = RunConfig::default_for(Task::Reasoning);
    config.gen.train_size = 300;
    config.gen.test_size = 60;
    config.validate().expect("defaults are valid");

    let data = gen_reasoning_corpus(&config.gen).expect("valid config");
    let mut model = Model::new(config.encoder, data.registry, data.vocab);
    println!(
        "corpus: {} train / {} test, |V| = {}, d = {}",
        data.train.len(),
        data.test.len(),
        model.vocab.size(),
        model.encoder.config.d
    );

    let split = train::split_folds(
        &data.train,
        (config.fold_ratio1, config.fold_ratio2),
        config.seed,
    )
    .expect("ratios valid");
    println!(
        "folds: {} / {} / {} (dev)",
        split.fold1.len(),
        split.fold2.len(),
        split.test.len()
    );

    let r1 = train::train_stage1(&mut model, &data.train, &config.stage1).expect("stage 1");
    println!("stage 1 losses: {:?}", rounded(&r1.epoch_losses));

    let r2 = train::train_stage2(&mut model, &split.fold1, &config.stage2).expect("stage 2");
    println!("stage 2 losses: {:?}", rounded(&r2.epoch_losses));

    let mined = train::mine_hard_negatives(&model, &split.fold2, config.stage3.k);
    println!(
        "mined {} entries ({} gold-tool, {} reject)",
        mined.entries.len(),
        mined.tool_count(),
        mined.rej_count()
    );

    let r3 = train::train_stage3_hardneg(&mut model, &split.fold2, &mined, &config.stage3)
        .expect("stage 3");
    println!("stage 3 losses: {:?}", rounded(&r3.epoch_losses));

    for (label, mode) in [("base", ScoreMode::Base), ("reranked", ScoreMode::Reranked)] {
        let opts = ScoreOptions {
            mode,
            k: config.eval_k,
            rerank_context: config.decode.rerank_context,
            doc_order: config.decode.doc_order,
        };
        let report = score_positions(&model, &data.test, &opts);
        println!(
            "{label:>8}: acc {:.3} | correct {} fp {} fn {} mis {}",
            report.accuracy(),
            report.correct,
            report.false_positive,
            report.false_negative,
            report.misclassified
        );
    }
}

fn rounded(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
