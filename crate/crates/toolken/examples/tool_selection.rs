//! Tool selection on the synthetic keyword-matching corpus.
//!
//! Trains all three stages on the default 50-tool corpus and compares
//! retrieval quality (Recall@k) of the base toolken head against the
//! documentation-conditioned reranker.

use toolken::config::{RunConfig, Task};
use toolken::eval::{recall_at_k, selection_predictions, ScoreMode, ScoreOptions};
use toolken::model::Model;
use toolken::synth::gen_toolselect_corpus;
use toolken::train;

fn main() {
    let run = RunConfig::default_for(Task::Selection);
    let data = gen_toolselect_corpus(&run.gen).expect("generate corpus");
    println!(
        "corpus: {} tools, {} train / {} test, keyword overlap {}",
        data.registry.len(),
        data.train.len(),
        data.test.len(),
        run.gen.overlap
    );

    let mut model = Model::new(run.encoder.clone(), data.registry, data.vocab);
    train::train_stage1(&mut model, &data.train, &run.stage1).expect("stage 1");
    let split = train::split_folds(&data.train, (run.fold_ratio1, run.fold_ratio2), run.seed)
        .expect("folds");
    train::train_stage2(&mut model, &split.fold1, &run.stage2).expect("stage 2");
    let mined = train::mine_hard_negatives(&model, &split.fold2, run.stage3.k);
    println!(
        "mined {} hard-negative positions ({} tool, {} reject)",
        mined.entries.len(),
        mined.tool_count(),
        mined.rej_count()
    );
    train::train_stage3_hardneg(&mut model, &split.fold2, &mined, &run.stage3).expect("stage 3");

    for (label, mode) in [("base    ", ScoreMode::Base), ("reranked", ScoreMode::Reranked)] {
        let opts = ScoreOptions {
            mode,
            k: run.eval_k,
            ..ScoreOptions::default()
        };
        let (preds, golds) = selection_predictions(&model, &data.test, &opts);
        let r1 = recall_at_k(&preds, &golds, 1).expect("recall@1");
        let r3 = recall_at_k(&preds, &golds, 3).expect("recall@3");
        let r5 = recall_at_k(&preds, &golds, 5).expect("recall@5");
        println!("{label}  Rec@1 {r1:.3}  Rec@3 {r3:.3}  Rec@5 {r5:.3}");
    }
}
