//! Checkpoint round-trip: save a trained model to the single-file binary
//! format, reload it, and verify the bytes, freeze flags, and stage gating.
//!
//!     cargo run --release --example checkpoint_io

use toolken::checkpoint::{Checkpoint, Stage};
use toolken::config::{RunConfig, Task};
use toolken::model::Model;
use toolken::synth::gen_reasoning_corpus;
use toolken::train;

fn main() {
    let mut config = RunConfig::default_for(Task::Reasoning);
    config.gen.train_size = 120;
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

    let echo = config.to_flat();
    let ckpt = Checkpoint::new(Stage::Stage2, model.clone(), echo);
    let bytes = ckpt.to_bytes().expect("serializable");
    println!("stage-2 checkpoint: {} bytes", bytes.len());

    let reloaded = Checkpoint::from_bytes(&bytes).expect("valid checkpoint");
    assert_eq!(reloaded.to_bytes().expect("serializable"), bytes, "encoding is deterministic");
    assert!(reloaded.model.heads.w_v_frozen, "stage 1 froze the vocab head");
    assert!(reloaded.model.heads.w_t_frozen, "stage 2 froze the toolken head");
    reloaded
        .require_stage(Stage::Stage2)
        .expect("usable for mining and stage 3");
    reloaded
        .verify_registry(&model.registry)
        .expect("same tool registry");
    println!("round-trip ok: freeze flags and registry hash verified");

    // Corrupt one byte; the checksum must catch it.
    let mut corrupt = bytes.clone();
    let mid = corrupt.len() / 2;
    corrupt[mid] ^= 0x01;
    let err = Checkpoint::from_bytes(&corrupt).unwrap_err();
    println!("bit flip rejected: {err}");
}
