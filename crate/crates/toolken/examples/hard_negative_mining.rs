//! Hard-negative mining on fold 2: gold toolken positions become tool
//! targets, and positions where the base model would fire a spurious
//! toolken become explicit reject targets. The mined reject count equals
//! the base model's false-positive count on the same fold by construction.
//!
//!     cargo run --release --example hard_negative_mining

use toolken::config::{RunConfig, Task};
use toolken::eval::{score_positions, ScoreMode, ScoreOptions};
use toolken::model::Model;
use toolken::synth::gen_reasoning_corpus;
use toolken::train::{self, RerankTarget};

fn main() {
    let mut config = RunConfig::default_for(Task::Reasoning);
    config.gen.train_size = 300;
    config.gen.test_size = 30;

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
    println!(
        "mined {} entries on fold 2: {} gold-tool targets, {} reject targets",
        mined.entries.len(),
        mined.tool_count(),
        mined.rej_count()
    );

    for entry in mined.entries.iter().take(6) {
        let label = match entry.target {
            RerankTarget::Tool(_) => "tool  ",
            RerankTarget::Rej => "reject",
        };
        println!(
            "  seq {:>4} pos {:>3} target {label} candidates {:?}",
            entry.seq_index,
            entry.position,
            entry
                .candidates
                .iter()
                .map(|&t| model.registry.tool(t).name.as_str())
                .collect::<Vec<_>>()
        );
    }

    // The reject indicator is literally the base false-positive test.
    let base = score_positions(
        &model,
        &split.fold2,
        &ScoreOptions {
            mode: ScoreMode::Base,
            k: 1,
            ..ScoreOptions::default()
        },
    );
    println!(
        "base false positives on fold 2: {} (mined rejects: {})",
        base.false_positive,
        mined.rej_count()
    );
    assert_eq!(base.false_positive, mined.rej_count());
}
