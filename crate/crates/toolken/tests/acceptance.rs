//! Acceptance suite: one test per release criterion, each ending in a single
//! PASS line. Tolerances are pinned here and nowhere else.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use toolken::config::{RunConfig, Task};
use toolken::corpus::Element;
use toolken::decode::{decode, decode_base, decode_lm, DecodeTrace, RerankPolicy};
use toolken::eval::{
    exact_match, recall_at_k, run_ablation, score_positions, selection_predictions, ScoreMode,
    ScoreOptions,
};
use toolken::model::Model;
use toolken::pipeline::{self, query_of, RunDir};
use toolken::prob::{self, HeadSet, MaskVector};
use toolken::registry::ToolRegistry;
use toolken::synth::{gen_reasoning_corpus, gen_toolselect_corpus, SynthData};
use toolken::train::{self, TrainConfig};
use toolken::vocab::{TokenId, Vocab};

// ---------------------------------------------------------------- fixtures

fn random_heads(rng: &mut ChaCha20Rng, n_vocab: usize, n_tools: usize, d: usize) -> HeadSet {
    let mut heads = HeadSet::zeros(n_vocab, n_tools, d);
    for m in [&mut heads.w_v, &mut heads.w_t, &mut heads.w_rerank] {
        m.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
    }
    heads
}

fn random_state(rng: &mut ChaCha20Rng, d: usize) -> Array1<f64> {
    Array1::from_shape_fn(d, |_| rng.gen_range(-1.0..1.0))
}

fn random_mask(rng: &mut ChaCha20Rng, registry: &ToolRegistry) -> (Vec<usize>, MaskVector) {
    let k = rng.gen_range(1..=registry.len());
    let mut candidates: Vec<usize> = (0..registry.len()).collect();
    for i in (1..candidates.len()).rev() {
        candidates.swap(i, rng.gen_range(0..=i));
    }
    candidates.truncate(k);
    let mask = prob::mask_vector(&candidates, registry).unwrap();
    (candidates, mask)
}

/// Small model with a real vocabulary/registry but freshly randomized heads.
fn random_model(rng: &mut ChaCha20Rng) -> Model {
    let mut config = RunConfig::default_for(Task::Reasoning);
    config.gen.train_size = 8;
    config.gen.test_size = 2;
    let data = gen_reasoning_corpus(&config.gen).unwrap();
    let mut model = Model::new(config.encoder, data.registry, data.vocab);
    let (nv, nt, d) = (
        model.vocab.size(),
        model.registry.len(),
        model.encoder.config.d,
    );
    model.heads = random_heads(rng, nv, nt, d);
    model
}

fn random_prefix(rng: &mut ChaCha20Rng, vocab: &Vocab, len: usize) -> Vec<TokenId> {
    (0..len).map(|_| rng.gen_range(0..vocab.size()) as TokenId).collect()
}

/// Three-stage training at the default corpus scale for one seed.
fn train_pipeline(data: &SynthData, run: &RunConfig) -> Model {
    let mut model = Model::new(run.encoder.clone(), data.registry.clone(), data.vocab.clone());
    train::train_stage1(&mut model, &data.train, &run.stage1).unwrap();
    let split =
        train::split_folds(&data.train, (run.fold_ratio1, run.fold_ratio2), run.seed).unwrap();
    train::train_stage2(&mut model, &split.fold1, &run.stage2).unwrap();
    let mined = train::mine_hard_negatives(&model, &split.fold2, run.stage3.k);
    train::train_stage3_hardneg(&mut model, &split.fold2, &mined, &run.stage3).unwrap();
    model
}

fn seeded(task: Task, seed: u64) -> RunConfig {
    let mut run = RunConfig::default_for(task);
    run.set("seed", &seed.to_string()).unwrap();
    run
}

// --------------------------------------------------------------- criteria

/// Masked rerank entries are exactly zero, all three distributions are
/// normalized within 1e-12, and the softmax is shift-invariant within
/// 1e-12, over 1000 random instances each.
#[test]
fn criterion_1_probability_layer_exactness() {
    const TOL: f64 = 1e-12;
    let registry = ToolRegistry::arithmetic();
    let (nv, nt, d) = (40, registry.len(), 16);
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let heads = random_heads(&mut rng, nv, nt, d);
        let h = random_state(&mut rng, d);
        let (candidates, mask) = random_mask(&mut rng, &registry);

        let llm = prob::p_llm(&heads, &h);
        let tool = prob::p_tool(&heads, &h);
        let int = prob::p_int(&heads, &h, &mask);
        for dist in [&llm, &tool, &int] {
            assert!((dist.probs().iter().sum::<f64>() - 1.0).abs() < TOL);
        }
        for t in 0..nt {
            if !candidates.contains(&t) {
                assert_eq!(int.prob(t), 0.0, "masked entry must be exactly zero");
            }
        }

        // Shifting every logit by a constant c = shift·(h·h) via a rank-one
        // head update must leave each distribution unchanged.
        let shift = rng.gen_range(-5.0..5.0) / h.dot(&h);
        let mut shifted = heads.clone();
        for m in [&mut shifted.w_v, &mut shifted.w_t, &mut shifted.w_rerank] {
            *m = &*m + &(shift * &h.view().insert_axis(ndarray::Axis(0)));
        }
        let pairs = [
            (llm, prob::p_llm(&shifted, &h)),
            (tool, prob::p_tool(&shifted, &h)),
            (int, prob::p_int(&shifted, &h, &mask)),
        ];
        for (a, b) in pairs {
            for (x, y) in a.probs().iter().zip(b.probs()) {
                assert!((x - y).abs() < TOL, "shift invariance: {x} vs {y}");
            }
        }
    }
    println!("criterion 1 (probability-layer exactness): PASS — 1000 instances, tol 1e-12");
}

/// Analytic gradients match central finite differences (step 1e-6) with
/// relative error < 1e-5 on 100 random instances per objective.
#[test]
fn criterion_2_gradient_oracle() {
    const STEP: f64 = 1e-6;
    const TOL: f64 = 1e-5;
    let registry = ToolRegistry::arithmetic();
    let (nv, nt, d) = (12, registry.len(), 8);
    let mut rng = ChaCha20Rng::seed_from_u64(202);

    let rel = |analytic: &Array2<f64>, fd: &Array2<f64>| {
        let num = (analytic - fd).mapv(|x| x * x).sum().sqrt();
        let den = fd.mapv(|x| x * x).sum().sqrt().max(1e-12);
        num / den
    };

    for _ in 0..100 {
        let heads = random_heads(&mut rng, nv, nt, d);
        let h = random_state(&mut rng, d);

        // Toolken-embedding loss, gradient w.r.t. W_T.
        let target = rng.gen_range(0..nv + nt);
        let (_, grad) = prob::extended_loss_grad(&h, target, &heads.w_v, &heads.w_t);
        let mut fd = Array2::zeros((nt, d));
        for r in 0..nt {
            for c in 0..d {
                let probe = |delta: f64| {
                    let mut w = heads.w_t.clone();
                    w[[r, c]] += delta;
                    prob::extended_loss_grad(&h, target, &heads.w_v, &w).0
                };
                fd[[r, c]] = (probe(STEP) - probe(-STEP)) / (2.0 * STEP);
            }
        }
        assert!(rel(&grad, &fd) < TOL, "toolken-loss gradient off");

        // Rerank loss, gradient w.r.t. W_T' — once with a tool target (the
        // gold-toolken case) and once with the reject target (the mined
        // hard-negative case).
        let (candidates, mask) = random_mask(&mut rng, &registry);
        let tool_target = candidates[rng.gen_range(0..candidates.len())];
        for target in [tool_target, mask.rej_index()] {
            let (_, grad) = prob::rerank_loss_grad(&h, target, &heads.w_rerank, &mask).unwrap();
            let mut fd = Array2::zeros((nt + 1, d));
            for r in 0..nt + 1 {
                for c in 0..d {
                    let probe = |delta: f64| {
                        let mut w = heads.w_rerank.clone();
                        w[[r, c]] += delta;
                        prob::rerank_loss_grad(&h, target, &w, &mask).unwrap().0
                    };
                    fd[[r, c]] = (probe(STEP) - probe(-STEP)) / (2.0 * STEP);
                }
            }
            assert!(rel(&grad, &fd) < TOL, "rerank-loss gradient off");
        }
    }
    println!("criterion 2 (gradient oracle): PASS — 100 instances, rel err < 1e-5, FD step 1e-6");
}

/// The per-position naive-bound surrogate plus its dropped constants
/// upper-bounds the mixture negative log-likelihood on 1000 random draws,
/// both branches, zero violations.
#[test]
fn criterion_3_surrogate_bound() {
    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let train_config = TrainConfig::stage_defaults(train::Objective::Stage3Naive);
    let mut violations = 0u32;
    let mut model = random_model(&mut rng);
    for i in 0..1000 {
        // Reuse the corpus-derived structure; only heads vary per draw.
        model.heads = random_heads(
            &mut rng,
            model.vocab.size(),
            model.registry.len(),
            model.encoder.config.d,
        );
        let len = rng.gen_range(1..12);
        let prefix = random_prefix(&mut rng, &model.vocab, len);
        let (candidates, mask) = random_mask(&mut rng, &model.registry);
        let (gold, target) = if i % 2 == 0 {
            let v = rng.gen_range(0..model.vocab.size()) as TokenId;
            (Element::VocabToken(v), mask.rej_index())
        } else {
            let t = candidates[rng.gen_range(0..candidates.len())];
            (Element::Toolken(t), t)
        };
        if train::bound_violated(&model, &prefix, gold, &candidates, target, &mask, &train_config)
        {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "naive bound violated");
    println!("criterion 3 (surrogate upper bound): PASS — 1000 draws, both branches, 0 violations");
}

/// The decoding mixture sums to exactly one over V ∪ T within 1e-10 on
/// 200 random prefixes.
#[test]
fn criterion_4_mixture_normalization() {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let model = random_model(&mut rng);
    let config = RunConfig::default_for(Task::Reasoning);
    for _ in 0..200 {
        let len = rng.gen_range(1..16);
        let prefix = random_prefix(&mut rng, &model.vocab, len);
        let k = rng.gen_range(1..=model.registry.len());
        let mut total = 0.0;
        for v in 0..model.vocab.size() {
            total += prob::mixture_prob(
                Element::VocabToken(v as TokenId),
                &prefix,
                k,
                &model.heads,
                &model.encoder,
                &model.registry,
                &model.vocab,
                config.decode.rerank_context,
                config.decode.doc_order,
            );
        }
        for t in 0..model.registry.len() {
            total += prob::mixture_prob(
                Element::Toolken(t),
                &prefix,
                k,
                &model.heads,
                &model.encoder,
                &model.registry,
                &model.vocab,
                config.decode.rerank_context,
                config.decode.doc_order,
            );
        }
        assert!((total - 1.0).abs() < TOL, "mixture sums to {total}");
    }
    println!("criterion 4 (mixture normalization): PASS — 200 prefixes, tol 1e-10");
}

fn emitted_tokens(trace: &DecodeTrace) -> Vec<String> {
    trace
        .steps
        .iter()
        .flat_map(|s| s.emitted.iter().cloned())
        .collect()
}

/// Degenerate reranker policies collapse the decoder onto its two
/// references, token for token, on the full held-out corpus.
#[test]
fn criterion_5_decode_degeneracies() {
    let run = seeded(Task::Reasoning, 0);
    let data = gen_reasoning_corpus(&run.gen).unwrap();
    let model = train_pipeline(&data, &run);

    let mut reject_config = run.decode.clone();
    reject_config.rerank_policy = RerankPolicy::AlwaysReject;
    let mut accept_config = run.decode.clone();
    accept_config.rerank_policy = RerankPolicy::AlwaysAccept;
    accept_config.k = 1;

    for seq in &data.test {
        let query = query_of(seq, &model);
        let calls: Vec<_> = seq.calls().cloned().collect();

        // (a) always-reject ≡ plain LM decoding.
        let plain: Vec<String> = decode_lm(&model, &query, &run.decode)
            .iter()
            .map(|&t| model.vocab.token(t).to_string())
            .collect();
        let rejected = decode(&model, &query, &calls, &reject_config).unwrap();
        assert_eq!(emitted_tokens(&rejected), plain, "always-reject diverged");
        assert!(rejected.tool_calls().next().is_none());

        // (b) k=1 always-accept ≡ the no-reranker decoder, including any
        // failure on the same spurious call.
        match (
            decode(&model, &query, &calls, &accept_config),
            decode_base(&model, &query, &calls, &run.decode),
        ) {
            (Ok(a), Ok(b)) => assert_eq!(emitted_tokens(&a), emitted_tokens(&b)),
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            (a, b) => panic!("always-accept diverged: {a:?} vs {b:?}"),
        }
    }
    println!(
        "criterion 5 (decode degeneracies): PASS — token-for-token on {} held-out tasks",
        data.test.len()
    );
}

/// On the default selection corpus the reranked Recall@1 beats the base
/// Recall@1 on average over 5 seeds, the base is a nontrivial baseline
/// (≥ 0.6), and no single seed regresses by more than 0.02.
#[test]
fn criterion_6_tool_selection() {
    let start = std::time::Instant::now();
    let (mut base_sum, mut plus_sum) = (0.0, 0.0);
    for seed in 0..5u64 {
        let run = seeded(Task::Selection, seed);
        let data = gen_toolselect_corpus(&run.gen).unwrap();
        let model = train_pipeline(&data, &run);
        let rec1 = |mode| {
            let opts = ScoreOptions { mode, k: run.eval_k, ..ScoreOptions::default() };
            let (preds, golds) = selection_predictions(&model, &data.test, &opts);
            recall_at_k(&preds, &golds, 1).unwrap()
        };
        let base = rec1(ScoreMode::Base);
        let plus = rec1(ScoreMode::Reranked);
        assert!(
            plus >= base - 0.02,
            "seed {seed}: reranked {plus:.3} regressed past base {base:.3} by more than 0.02"
        );
        base_sum += base;
        plus_sum += plus;
    }
    let (base_mean, plus_mean) = (base_sum / 5.0, plus_sum / 5.0);
    assert!(base_mean >= 0.6, "base Recall@1 mean {base_mean:.3} below 0.6");
    assert!(plus_mean >= base_mean, "reranked mean below base mean");
    assert!(start.elapsed().as_secs() < 600, "over the 10-minute budget");
    println!(
        "criterion 6 (tool selection): PASS — Recall@1 base {base_mean:.3} ≤ reranked {plus_mean:.3}, 5 seeds, {}s",
        start.elapsed().as_secs()
    );
}

/// On held-out reasoning data the reranked decision rule makes at most
/// 0.8× the base rule's false-positive tool calls (5-seed mean) while
/// end-to-end exact match drops by no more than 0.01 absolute.
#[test]
fn criterion_7_rejection() {
    let start = std::time::Instant::now();
    let (mut base_fp, mut plus_fp) = (0.0, 0.0);
    let (mut base_em, mut plus_em) = (0.0, 0.0);
    for seed in 0..5u64 {
        let run = seeded(Task::Reasoning, seed);
        let data = gen_reasoning_corpus(&run.gen).unwrap();
        let model = train_pipeline(&data, &run);

        for (mode, fp) in [
            (ScoreMode::Base, &mut base_fp),
            (ScoreMode::Reranked, &mut plus_fp),
        ] {
            let opts = ScoreOptions {
                mode,
                k: 1,
                rerank_context: run.decode.rerank_context,
                doc_order: run.decode.doc_order,
            };
            let report = score_positions(&model, &data.test, &opts);
            *fp += report.false_positive as f64 / report.scored() as f64;
        }

        let em_rate = |use_base: bool| {
            let mut matched = 0usize;
            for seq in &data.test {
                let query = query_of(seq, &model);
                let calls: Vec<_> = seq.calls().cloned().collect();
                let answer = if use_base {
                    decode_base(&model, &query, &calls, &run.decode)
                        .ok()
                        .and_then(|t| t.final_answer)
                } else {
                    decode(&model, &query, &calls, &run.decode)
                        .ok()
                        .and_then(|t| t.final_answer)
                };
                if exact_match(answer.as_deref(), seq.answer.as_ref().unwrap(), run.numeric_tol)
                    .matched
                {
                    matched += 1;
                }
            }
            matched as f64 / data.test.len() as f64
        };
        base_em += em_rate(true);
        plus_em += em_rate(false);
    }
    let (base_fp, plus_fp) = (base_fp / 5.0, plus_fp / 5.0);
    let (base_em, plus_em) = (base_em / 5.0, plus_em / 5.0);
    assert!(base_fp > 0.0, "baseline never misfires; comparison is vacuous");
    assert!(
        plus_fp <= 0.8 * base_fp,
        "FP rate {plus_fp:.5} not ≤ 0.8 × base {base_fp:.5}"
    );
    assert!(
        plus_em >= base_em - 0.01,
        "exact match dropped {base_em:.3} -> {plus_em:.3}"
    );
    assert!(start.elapsed().as_secs() < 600, "over the 10-minute budget");
    println!(
        "criterion 7 (rejection): PASS — FP {base_fp:.5} -> {plus_fp:.5} (≤0.8×), exact match {base_em:.3} -> {plus_em:.3}, 5 seeds, {}s",
        start.elapsed().as_secs()
    );
}

/// The k-ablation table has the right shape: Recall@j non-decreasing in j
/// within each row, latency multipliers non-decreasing in k (5% timing
/// noise tolerated), and reranking conserves recall at the retrieval
/// cutoff exactly.
#[test]
fn criterion_8_ablation_shape() {
    let mut run = seeded(Task::Selection, 0);
    run.record_timing = true;
    let data = gen_toolselect_corpus(&run.gen).unwrap();
    let model = train_pipeline(&data, &run);
    let rows = run_ablation(
        &model,
        &data.test,
        &run.ablation_ks,
        run.ablation_reps,
        run.decode.rerank_context,
        run.decode.doc_order,
    )
    .unwrap();
    assert_eq!(rows.len(), run.ablation_ks.len());

    let mut prev_latency = 0.0;
    for row in &rows {
        assert!(row.recall_at_1 <= row.recall_at_3 + 1e-12);
        assert!(row.recall_at_3 <= row.recall_at_5 + 1e-12);
        assert!(
            row.latency_multiplier >= prev_latency * 0.95,
            "latency fell from {prev_latency:.2} to {:.2} at k={}",
            row.latency_multiplier,
            row.k
        );
        prev_latency = prev_latency.max(row.latency_multiplier);
    }

    // Conservation: the reranked list is a permutation of the retrieval
    // top-k, so recall at the cutoff must agree exactly.
    let (base_preds, golds) = selection_predictions(
        &model,
        &data.test,
        &ScoreOptions { mode: ScoreMode::Base, k: 1, ..ScoreOptions::default() },
    );
    for &k in &run.ablation_ks {
        let (plus_preds, _) = selection_predictions(
            &model,
            &data.test,
            &ScoreOptions { mode: ScoreMode::Reranked, k, ..ScoreOptions::default() },
        );
        let base_k = recall_at_k(&base_preds, &golds, k).unwrap();
        let plus_k = recall_at_k(&plus_preds, &golds, k).unwrap();
        assert_eq!(base_k, plus_k, "conservation broken at k={k}");
    }
    println!("criterion 8 (ablation shape): PASS — k ∈ {:?}, conservation exact", run.ablation_ks);
}

/// The full default pipeline is byte-reproducible: two runs from the same
/// config produce identical checkpoints, traces, and reports.
#[test]
fn criterion_9_reproducibility() {
    let run = RunConfig::default_for(Task::Reasoning);
    let produce = || {
        let tmp = tempfile::tempdir().unwrap();
        let dir = RunDir::new(tmp.path());
        pipeline::gen_data(&run, &dir).unwrap();
        pipeline::train_backbone(&run, &dir).unwrap();
        pipeline::train_toolkens(&run, &dir).unwrap();
        pipeline::mine(&run, &dir).unwrap();
        pipeline::train_rerank(&run, &dir).unwrap();
        pipeline::decode_all(&run, &dir).unwrap();
        pipeline::eval_run(&run, &dir).unwrap();
        pipeline::write_report(&dir).unwrap();
        let mut files = std::collections::BTreeMap::new();
        let mut stack = vec![tmp.path().to_path_buf()];
        while let Some(p) = stack.pop() {
            for entry in std::fs::read_dir(&p).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    let rel = path.strip_prefix(tmp.path()).unwrap().to_path_buf();
                    files.insert(rel, std::fs::read(&path).unwrap());
                }
            }
        }
        files
    };
    let first = produce();
    let second = produce();
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>(),
        "artifact sets differ"
    );
    for (name, bytes) in &first {
        assert_eq!(bytes, &second[name], "artifact {} differs between runs", name.display());
    }
    println!(
        "criterion 9 (reproducibility): PASS — {} artifacts byte-identical across two runs",
        first.len()
    );
}

/// The number of mined reject targets equals the base decision rule's
/// false-positive count on the same fold — exact integer equality.
#[test]
fn criterion_10_mining_consistency() {
    let run = seeded(Task::Reasoning, 0);
    let data = gen_reasoning_corpus(&run.gen).unwrap();
    let mut model = Model::new(run.encoder.clone(), data.registry, data.vocab);
    train::train_stage1(&mut model, &data.train, &run.stage1).unwrap();
    let split =
        train::split_folds(&data.train, (run.fold_ratio1, run.fold_ratio2), run.seed).unwrap();
    train::train_stage2(&mut model, &split.fold1, &run.stage2).unwrap();

    let mined = train::mine_hard_negatives(&model, &split.fold2, run.stage3.k);
    let report = score_positions(
        &model,
        &split.fold2,
        &ScoreOptions {
            mode: ScoreMode::Base,
            k: run.stage3.k,
            rerank_context: run.decode.rerank_context,
            doc_order: run.decode.doc_order,
        },
    );
    assert_eq!(mined.rej_count(), report.false_positive as usize);
    println!(
        "criterion 10 (mining/eval consistency): PASS — {} mined rejects == {} base false positives",
        mined.rej_count(),
        report.false_positive
    );
}
