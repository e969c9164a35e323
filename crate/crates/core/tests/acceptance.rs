//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured quantity. Run with `cargo test --test acceptance` (add
//! `-- --nocapture` to see the lines).

use std::collections::BTreeMap;
use std::sync::LazyLock;

use easq_core::diffcore::{adam_step, grad_check, AdamState, Graph, Var};
use easq_core::evaluator::{
    build_candidate_lists, compute_metrics, evaluate, rank_of_positive, EvalConfig,
};
use easq_core::losses::{
    bpr_loss, build_behavior_pairs, build_satis_pairs, dpo_loss, dpo_pair_filter, satis_loss,
    total_loss, BehaviorWeights, DpoScores, PreferencePair,
};
use easq_core::model::{
    EasqConfig, EasqModel, Example, FuseSide, LoraTap, ParamGroup, RouterKind,
};
use easq_core::rng::{mix, stream};
use easq_core::simenv::{
    convergent_validity, generate_dataset, init_world, questionnaire_trigger, Answer, Dataset,
    InteractionEvent, SimConfig,
};
use easq_core::trainer::{
    apply_ablation, make_batches, Ablation, Batch, Trainer, TrainConfig,
};
use rand::Rng;

const LN_2: f64 = std::f64::consts::LN_2;

fn pass(criterion: &str, detail: String) {
    println!("[acceptance] {criterion}: PASS ({detail})");
}

// ── Shared fixtures ─────────────────────────────────────────────────────

/// Synthetic batch for gradient checks: two users, four views each, with
/// answered questionnaire rows so all three losses are populated.
fn grad_check_batch(seed: u64) -> Batch {
    let mut rng = stream(seed, "acc.gradbatch", &[]);
    let mut interactions = Vec::new();
    let mut responses = Vec::new();
    let answers = [Answer::Satisfied, Answer::Dissatisfied, Answer::Uncertain];
    for k in 0..4u64 {
        let user = k % 2;
        let item = k;
        let progress: f64 = rng.random_range(0.1..1.2);
        let duration = rng.random_range(10.0..90.0);
        interactions.push(InteractionEvent {
            ts: k,
            user_id: user,
            item_id: item,
            watch_time_s: progress * duration,
            duration_s: duration,
            progress,
            like: rng.random_bool(0.5),
            follow: rng.random_bool(0.3),
            comment: false,
            forward: rng.random_bool(0.3),
            s_true: None,
        });
        responses.push(easq_core::simenv::QuestionnaireResponse {
            ts: k,
            user_id: user,
            item_id: item,
            exposed: true,
            clicked: true,
            answer: answers[rng.random_range(0..3)],
        });
    }
    Batch {
        interactions,
        responses,
    }
}

/// Builds the full combined loss for a batch on a given model; used inside
/// grad_check closures and the routing ledger.
fn build_total_loss(model: &mut EasqModel, batch: &Batch, seed: u64) -> Var {
    let weights = BehaviorWeights::default();
    let behavior = build_behavior_pairs(&batch.interactions, &weights, 512, mix(seed, &[1]));
    let satis = build_satis_pairs(&batch.responses);
    let dpo = dpo_pair_filter(&satis, true);
    let catalog: BTreeMap<u64, f64> = batch
        .interactions
        .iter()
        .map(|e| (e.item_id, e.duration_s))
        .collect();

    let mut scores: BTreeMap<(u64, u64), (Var, Var)> = BTreeMap::new();
    let mut need: Vec<(u64, u64)> = Vec::new();
    for p in behavior.iter().chain(&satis) {
        need.push((p.user_id, p.item_pos));
        need.push((p.user_id, p.item_neg));
    }
    need.sort_unstable();
    need.dedup();
    for (u, i) in need {
        let ex = Example {
            user_id: u,
            item_id: i,
            duration_s: catalog[&i],
        };
        let ys = model.forward_all(&ex).unwrap();
        scores.insert((u, i), ys);
    }
    let (lambda1, lambda2, beta) = {
        let c = model.config();
        (c.lambda1, c.lambda2, c.beta)
    };
    let g = model.graph_mut();
    let bpairs: Vec<(Var, Var)> = behavior
        .iter()
        .map(|p| (scores[&(p.user_id, p.item_pos)].0, scores[&(p.user_id, p.item_neg)].0))
        .collect();
    let spairs: Vec<(Var, Var)> = satis
        .iter()
        .map(|p| (scores[&(p.user_id, p.item_pos)].1, scores[&(p.user_id, p.item_neg)].1))
        .collect();
    let dpairs: Vec<DpoScores> = dpo
        .iter()
        .map(|p| DpoScores {
            y_pos: scores[&(p.user_id, p.item_pos)].0,
            y_neg: scores[&(p.user_id, p.item_neg)].0,
            s_pos: scores[&(p.user_id, p.item_pos)].1,
            s_neg: scores[&(p.user_id, p.item_neg)].1,
        })
        .collect();
    let l_main = bpr_loss(g, &bpairs).unwrap();
    let l_satis = satis_loss(g, &spairs).unwrap();
    let l_dpo = dpo_loss(g, &dpairs, beta).unwrap();
    total_loss(g, l_main, l_satis, l_dpo, lambda1, lambda2).unwrap()
}

fn tiny_full_model(seed: u64) -> EasqModel {
    let cfg = EasqConfig {
        lambda1: 0.7,
        lambda2: 0.4,
        seed,
        ..EasqConfig::tiny()
    };
    EasqModel::new(cfg, 2, 4).unwrap()
}

// ── Criterion 1: gradient fidelity ─────────────────────────────────────

#[test]
fn criterion_01_gradient_fidelity() {
    let start = std::time::Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let batch = grad_check_batch(seed);
        let mut model = tiny_full_model(seed);
        let params = model.param_vars();
        let err = grad_check(
            &mut model,
            &params,
            |m| Ok(build_total_loss(m, &batch, seed)),
            1e-5,
        )
        .unwrap();
        assert!(
            err < 1e-5,
            "seed {seed}: max relative error {err} exceeds 1e-5"
        );
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, budget 1 min");
    pass(
        "criterion 1 (gradient fidelity)",
        format!("max rel err {worst:.2e} over 10 batches in {elapsed:?}"),
    );
}

// ── Criterion 2: gradient-routing ledger ───────────────────────────────

#[test]
fn criterion_02_gradient_routing_ledger() {
    // (a) per-loss analytic zeros on random batches
    for seed in 0..5u64 {
        let batch = grad_check_batch(seed);
        let mut model = tiny_full_model(seed);

        let groups = |m: &EasqModel| {
            [
                ParamGroup::Backbone,
                ParamGroup::Lora,
                ParamGroup::MainHead,
                ParamGroup::SatisHead,
            ]
            .map(|g| {
                m.group_params(g)
                    .iter()
                    .map(|p| p.var)
                    .collect::<Vec<_>>()
            })
        };
        let [backbone, lora, main_head, satis_head] = groups(&model);
        let grads_zero = |m: &EasqModel, vars: &[Var]| {
            vars.iter()
                .all(|v| m.graph().grad(*v).iter().all(|&x| x == 0.0))
        };
        let grads_nonzero = |m: &EasqModel, vars: &[Var]| {
            vars.iter()
                .any(|v| m.graph().grad(*v).iter().any(|&x| x != 0.0))
        };

        // L_main → zero into LoRA and satisfaction head
        {
            let loss = build_loss_kind(&mut model, &batch, seed, LossKind::Main);
            model.graph_mut().backward(loss).unwrap();
            assert!(grads_zero(&model, &lora), "L_main leaked into LoRA");
            assert!(grads_zero(&model, &satis_head), "L_main leaked into satis head");
            assert!(grads_nonzero(&model, &backbone));
            assert!(grads_nonzero(&model, &main_head));
            model.end_step();
        }
        // L_satis → zero into backbone and main head
        {
            let loss = build_loss_kind(&mut model, &batch, seed, LossKind::Satis);
            model.graph_mut().backward(loss).unwrap();
            assert!(grads_zero(&model, &backbone), "L_satis leaked into backbone");
            assert!(grads_zero(&model, &main_head), "L_satis leaked into main head");
            assert!(grads_nonzero(&model, &satis_head));
            model.end_step();
        }
        // L_DPO → zero into LoRA and satisfaction head
        {
            let loss = build_loss_kind(&mut model, &batch, seed, LossKind::Dpo);
            model.graph_mut().backward(loss).unwrap();
            assert!(grads_zero(&model, &lora), "L_DPO leaked into LoRA");
            assert!(grads_zero(&model, &satis_head), "L_DPO leaked into satis head");
            assert!(grads_nonzero(&model, &backbone));
            assert!(grads_nonzero(&model, &main_head));
            model.end_step();
        }
    }

    // (b) end-to-end bitwise freezes over 500 training steps
    let sim = SimConfig {
        n_users: 10,
        n_items: 30,
        n_sessions: 1200,
        views_per_session: 8,
        d_latent: 2,
        ..SimConfig::dense()
    };
    let world = init_world(&sim, 3).unwrap();
    let data = generate_dataset(&world);
    let batches = make_batches(&data.interactions, &data.responses, 16);
    assert!(batches.len() >= 500);

    // behavior-only: LoRA and satisfaction head bitwise frozen
    {
        let cfg = EasqConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            ..EasqConfig::tiny()
        };
        let model = EasqModel::new(cfg, sim.n_users, sim.n_items).unwrap();
        let lora0 = model.group_bits(ParamGroup::Lora);
        let satis0 = model.group_bits(ParamGroup::SatisHead);
        let mut tr = Trainer::new(
            model,
            TrainConfig {
                batch_size: 16,
                steps: 500,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let logs = tr.train_online(batches.clone()).unwrap();
        assert_eq!(logs.len(), 500);
        assert_eq!(tr.model.group_bits(ParamGroup::Lora), lora0);
        assert_eq!(tr.model.group_bits(ParamGroup::SatisHead), satis0);
    }

    // satisfaction-only: backbone and main head bitwise frozen
    {
        let cfg = EasqConfig::tiny();
        let mut model = EasqModel::new(cfg, sim.n_users, sim.n_items).unwrap();
        let backbone0 = model.group_bits(ParamGroup::Backbone);
        let main0 = model.group_bits(ParamGroup::MainHead);
        let params = model.param_vars();
        let mut adam = AdamState::new(model.graph(), &params, 1e-3);
        let mut steps = 0;
        'outer: loop {
            for batch in &batches {
                let loss = build_loss_kind(&mut model, batch, 7, LossKind::Satis);
                model.graph_mut().backward(loss).unwrap();
                adam_step(model.graph_mut(), &params, &mut adam).unwrap();
                model.end_step();
                steps += 1;
                if steps >= 500 {
                    break 'outer;
                }
            }
        }
        assert_eq!(model.group_bits(ParamGroup::Backbone), backbone0);
        assert_eq!(model.group_bits(ParamGroup::MainHead), main0);
    }

    pass(
        "criterion 2 (gradient-routing ledger)",
        "per-loss zeros on 5 random batches; 500-step bitwise freezes hold".into(),
    );
}

enum LossKind {
    Main,
    Satis,
    Dpo,
}

fn build_loss_kind(model: &mut EasqModel, batch: &Batch, seed: u64, kind: LossKind) -> Var {
    let weights = BehaviorWeights::default();
    let behavior = build_behavior_pairs(&batch.interactions, &weights, 512, mix(seed, &[1]));
    let satis = build_satis_pairs(&batch.responses);
    let dpo = dpo_pair_filter(&satis, true);
    let catalog: BTreeMap<u64, f64> = batch
        .interactions
        .iter()
        .map(|e| (e.item_id, e.duration_s))
        .collect();
    let mut scores: BTreeMap<(u64, u64), (Var, Var)> = BTreeMap::new();
    let pairs: Vec<&PreferencePair> = behavior.iter().chain(&satis).collect();
    for p in &pairs {
        for item in [p.item_pos, p.item_neg] {
            scores.entry((p.user_id, item)).or_insert_with(|| {
                let ex = Example {
                    user_id: p.user_id,
                    item_id: item,
                    duration_s: catalog[&item],
                };
                model.forward_all(&ex).unwrap()
            });
        }
    }
    let beta = model.config().beta;
    let g = model.graph_mut();
    match kind {
        LossKind::Main => {
            let ps: Vec<(Var, Var)> = behavior
                .iter()
                .map(|p| (scores[&(p.user_id, p.item_pos)].0, scores[&(p.user_id, p.item_neg)].0))
                .collect();
            bpr_loss(g, &ps).unwrap()
        }
        LossKind::Satis => {
            let ps: Vec<(Var, Var)> = satis
                .iter()
                .map(|p| (scores[&(p.user_id, p.item_pos)].1, scores[&(p.user_id, p.item_neg)].1))
                .collect();
            satis_loss(g, &ps).unwrap()
        }
        LossKind::Dpo => {
            let ps: Vec<DpoScores> = dpo
                .iter()
                .map(|p| DpoScores {
                    y_pos: scores[&(p.user_id, p.item_pos)].0,
                    y_neg: scores[&(p.user_id, p.item_neg)].0,
                    s_pos: scores[&(p.user_id, p.item_pos)].1,
                    s_neg: scores[&(p.user_id, p.item_neg)].1,
                })
                .collect();
            dpo_loss(g, &ps, beta).unwrap()
        }
    }
}

// ── Criterion 3: closed-form loss values ────────────────────────────────

#[test]
fn criterion_03_closed_form_losses() {
    let mut g = Graph::new();

    // σ(0) cases: all three losses give ln 2
    let a = g.input(&[1], vec![0.4]).unwrap();
    let l = bpr_loss(&mut g, &[(a, a)]).unwrap();
    assert!((g.scalar(l) - LN_2).abs() < 1e-6);
    let l = satis_loss(&mut g, &[(a, a)]).unwrap();
    assert!((g.scalar(l) - LN_2).abs() < 1e-6);
    let s = g.input(&[1], vec![-0.9]).unwrap();
    let l = dpo_loss(
        &mut g,
        &[DpoScores {
            y_pos: a,
            y_neg: a,
            s_pos: s,
            s_neg: s,
        }],
        0.1,
    )
    .unwrap();
    assert!((g.scalar(l) - LN_2).abs() < 1e-6);

    // unit margin: −ln σ(1)
    let one = g.input(&[1], vec![1.0]).unwrap();
    let zero = g.input(&[1], vec![0.0]).unwrap();
    let l = bpr_loss(&mut g, &[(one, zero)]).unwrap();
    assert!((g.scalar(l) - 0.313262).abs() < 1e-6);

    // alignment worked example: π(x⁺)=2 against unit references.
    // Direct evaluation of −ln σ(0.1·ln 2) gives 0.6590903 (the independent
    // scalar oracle), asserted against the closed form below.
    let inv_softplus = |t: f64| ((t - easq_core::losses::POLICY_EPS).exp() - 1.0).ln();
    let y_pos = g.input(&[1], vec![inv_softplus(2.0)]).unwrap();
    let unit = g.input(&[1], vec![inv_softplus(1.0)]).unwrap();
    let l = dpo_loss(
        &mut g,
        &[DpoScores {
            y_pos,
            y_neg: unit,
            s_pos: unit,
            s_neg: unit,
        }],
        0.1,
    )
    .unwrap();
    let oracle = (1.0 + (-(0.1 * LN_2)).exp()).ln();
    assert!((g.scalar(l) - oracle).abs() < 1e-9);
    assert!((g.scalar(l) - 0.659090).abs() < 1e-6);

    pass(
        "criterion 3 (closed-form loss values)",
        format!(
            "ln2 cases ok; -lnσ(1)=0.313262; alignment worked example {:.6}",
            g.scalar(l)
        ),
    );
}

// ── Criterion 4: metric oracle ──────────────────────────────────────────

/// Independent brute-force metrics: recompute HR/NDCG/MRR from first
/// principles with explicit per-user grouping and no shared code.
fn brute_force_report(ranks: &[(u64, usize)]) -> BTreeMap<&'static str, f64> {
    let mut users: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (u, r) in ranks {
        users.entry(*u).or_default().push(*r);
    }
    let cuts_hr = [("hr1", 1usize), ("hr5", 5), ("hr10", 10)];
    let cuts_ndcg = [("ndcg5", 5usize), ("ndcg10", 10), ("ndcg20", 20)];
    let mut out: BTreeMap<&'static str, f64> = BTreeMap::new();
    for (name, k) in cuts_hr {
        let mut total = 0.0;
        for rs in users.values() {
            let hits = rs.iter().filter(|&&r| r <= k).count();
            total += hits as f64 / rs.len() as f64;
        }
        out.insert(name, total / users.len() as f64);
    }
    for (name, k) in cuts_ndcg {
        let mut total = 0.0;
        for rs in users.values() {
            let mut dcg_sum = 0.0;
            for &r in rs {
                // single relevant item: DCG = 1/log2(r+1) inside the cut, IDCG = 1
                if r <= k {
                    dcg_sum += 1.0 / ((r + 1) as f64).log2();
                }
            }
            total += dcg_sum / rs.len() as f64;
        }
        out.insert(name, total / users.len() as f64);
    }
    let mut total = 0.0;
    for rs in users.values() {
        let rr: f64 = rs.iter().map(|&r| 1.0 / r as f64).sum();
        total += rr / rs.len() as f64;
    }
    out.insert("mrr", total / users.len() as f64);
    out
}

#[test]
fn criterion_04_metric_oracle() {
    let mut rng = stream(4, "acc.metrics", &[]);
    let mut ranks = Vec::new();
    for _ in 0..1000 {
        let user = rng.random_range(0..37u64);
        let rank = rng.random_range(1..120usize);
        ranks.push((user, rank));
    }
    let report = compute_metrics(&ranks).unwrap();
    let brute = brute_force_report(&ranks);
    let got = [
        ("hr1", report.hr1),
        ("hr5", report.hr5),
        ("hr10", report.hr10),
        ("ndcg5", report.ndcg5),
        ("ndcg10", report.ndcg10),
        ("ndcg20", report.ndcg20),
        ("mrr", report.mrr),
    ];
    for (name, v) in got {
        assert_eq!(
            v.to_bits(),
            brute[name].to_bits(),
            "{name}: {v} vs {}",
            brute[name]
        );
    }
    // rank-4 instance closed form
    let r4 = compute_metrics(&[(0, 4)]).unwrap();
    assert!((r4.ndcg5 - 0.430677).abs() < 1e-6);

    // rank itself matches an independent sort on random scores
    let mut scored: Vec<(u64, f64)> = (0..100u64)
        .map(|i| (i, rng.random_range(-1.0..1.0f64)))
        .collect();
    let rank = rank_of_positive(&scored, 42);
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let brute_rank = scored.iter().position(|(i, _)| *i == 42).unwrap() + 1;
    assert_eq!(rank, brute_rank);

    pass(
        "criterion 4 (metric oracle)",
        "exact match on 1000 random instances; NDCG@5(rank 4)=0.430677".into(),
    );
}

// ── Criterion 5: simulator rates ────────────────────────────────────────

#[test]
fn criterion_05_simulator_trigger_and_rates() {
    // trigger predicate over a boundary grid
    let mk = |watch: f64, duration: f64| InteractionEvent {
        ts: 0,
        user_id: 0,
        item_id: 0,
        watch_time_s: watch,
        duration_s: duration,
        progress: watch / duration,
        like: false,
        follow: false,
        comment: false,
        forward: false,
        s_true: None,
    };
    for watch in [0.0, 3.0, 6.999, 7.0, 7.001, 20.0] {
        for duration in [5.0, 10.0, 14.0, 60.0, 120.0] {
            let ev = mk(watch, duration);
            let expected = watch >= 7.0 || (watch / duration) >= 0.5;
            assert_eq!(
                questionnaire_trigger(&ev),
                expected,
                "watch={watch} duration={duration}"
            );
        }
    }

    // production preset: answered ≈ triggered · 0.005 · 0.02, within 3σ
    let sim = SimConfig {
        n_users: 100,
        n_items: 500,
        n_sessions: 100_000,
        views_per_session: 10,
        ..SimConfig::production()
    };
    let world = init_world(&sim, 1).unwrap();
    let data = generate_dataset(&world);
    let triggered = data.responses.len();
    assert!(triggered >= 100_000, "need a meaningful trigger count");
    let answered = data.responses.iter().filter(|r| r.answered()).count();
    let p = 0.005 * 0.02;
    let expected = triggered as f64 * p;
    let sigma = (triggered as f64 * p * (1.0 - p)).sqrt();
    assert!(
        (answered as f64 - expected).abs() <= 3.0 * sigma,
        "answered {answered}, expected {expected:.1} ± {:.1}",
        3.0 * sigma
    );
    pass(
        "criterion 5 (simulator trigger and rates)",
        format!(
            "trigger grid exact; answered {answered} vs expected {expected:.1} ± {:.1} (3σ)",
            3.0 * sigma
        ),
    );
}

// ── Criterion 6: convergent validity ────────────────────────────────────

#[test]
fn criterion_06_convergent_validity() {
    let start = std::time::Instant::now();
    let sim = SimConfig {
        n_users: 100,
        n_items: 500,
        n_sessions: 10_000,
        views_per_session: 10,
        d_latent: 2,
        ..SimConfig::dense()
    };
    let world = init_world(&sim, 6).unwrap();
    let data = generate_dataset(&world);
    let report = convergent_validity(&data.interactions, &data.responses).unwrap();
    let w = &report.watch_fraction;
    assert!(
        w.mean_dissatisfied < w.mean_user_average && w.mean_user_average < w.mean_satisfied,
        "ordering violated: {} / {} / {}",
        w.mean_dissatisfied,
        w.mean_user_average,
        w.mean_satisfied
    );
    assert!(w.gap_dissatisfied >= 0.05, "gap_dis = {}", w.gap_dissatisfied);
    assert!(w.gap_satisfied >= 0.05, "gap_sat = {}", w.gap_satisfied);
    assert!(w.p_dissatisfied < 0.01, "p_dis = {}", w.p_dissatisfied);
    assert!(w.p_satisfied < 0.01, "p_sat = {}", w.p_satisfied);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}, budget 2 min");
    pass(
        "criterion 6 (convergent validity)",
        format!(
            "{:.3} < {:.3} < {:.3}, gaps {:.3}/{:.3}, p {:.1e}/{:.1e}, {elapsed:?}",
            w.mean_dissatisfied,
            w.mean_user_average,
            w.mean_satisfied,
            w.gap_dissatisfied,
            w.gap_satisfied,
            w.p_dissatisfied,
            w.p_satisfied
        ),
    );
}

// ── Criterion 10: reproducibility ───────────────────────────────────────

#[test]
fn criterion_10_reproducibility() {
    let sim = SimConfig {
        n_users: 12,
        n_items: 40,
        n_sessions: 150,
        views_per_session: 8,
        d_latent: 2,
        ..SimConfig::dense()
    };
    let world = init_world(&sim, 10).unwrap();
    let data = generate_dataset(&world);
    let batches = make_batches(&data.interactions, &data.responses, 16);
    let dir = tempfile::tempdir().unwrap();

    let train_cfg = TrainConfig {
        batch_size: 16,
        replay_buffer_size: 32,
        ..TrainConfig::default()
    };
    let run = |path: &std::path::Path| {
        let cfg = EasqConfig::tiny();
        let model = EasqModel::new(cfg, sim.n_users, sim.n_items).unwrap();
        let mut tr = Trainer::new(model, train_cfg.clone()).unwrap();
        tr.train_online(batches.clone()).unwrap();
        tr.save(path).unwrap();
        tr
    };
    let p1 = dir.path().join("run1.ckpt");
    let p2 = dir.path().join("run2.ckpt");
    let mut t1 = run(&p1);
    let mut t2 = run(&p2);
    assert_eq!(
        std::fs::read(&p1).unwrap(),
        std::fs::read(&p2).unwrap(),
        "identical (config, seed) must give bitwise identical checkpoints"
    );

    // identical eval reports, byte for byte
    let catalog: BTreeMap<u64, f64> = data
        .interactions
        .iter()
        .map(|e| (e.item_id, e.duration_s))
        .collect();
    let ecfg = EvalConfig {
        list_size: 20,
        ..EvalConfig::default()
    };
    let r1 = evaluate(&mut t1.model, &catalog, &data.responses, &ecfg).unwrap();
    let r2 = evaluate(&mut t2.model, &catalog, &data.responses, &ecfg).unwrap();
    assert_eq!(
        serde_json::to_vec(&r1).unwrap(),
        serde_json::to_vec(&r2).unwrap()
    );

    // resume equivalence: t steps, checkpoint, resume, k more ≡ t+k straight
    let total = batches.len();
    let t_split = total / 2;
    let straight = {
        let model = EasqModel::new(EasqConfig::tiny(), sim.n_users, sim.n_items).unwrap();
        let mut tr = Trainer::new(model, train_cfg.clone()).unwrap();
        tr.train_online(batches.clone()).unwrap();
        let p = dir.path().join("straight.ckpt");
        tr.save(&p).unwrap();
        std::fs::read(&p).unwrap()
    };
    let resumed = {
        let model = EasqModel::new(EasqConfig::tiny(), sim.n_users, sim.n_items).unwrap();
        let mut tr = Trainer::new(
            model,
            TrainConfig {
                steps: t_split,
                ..train_cfg.clone()
            },
        )
        .unwrap();
        tr.train_online(batches.clone()).unwrap();
        let mid = dir.path().join("mid.ckpt");
        tr.save(&mid).unwrap();

        let ckpt = easq_core::trainer::load_checkpoint(&mid).unwrap();
        let mut tr2 = Trainer::from_checkpoint(&ckpt, train_cfg.clone()).unwrap();
        assert_eq!(tr2.global_step(), t_split as u64);
        tr2.train_online(batches.clone()).unwrap();
        let p = dir.path().join("resumed.ckpt");
        tr2.save(&p).unwrap();
        std::fs::read(&p).unwrap()
    };
    assert_eq!(straight, resumed, "resume must be bitwise equivalent");

    pass(
        "criterion 10 (reproducibility)",
        "bitwise checkpoints, identical eval reports, bitwise resume".into(),
    );
}

// Criteria 7, 8, 9 share trained models; see the fixture below.
mod directional;
