//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use ou_core::leaderboard::{overall_row, AggregationMode};
use ou_core::metaeval::{
    aggregate_meta, base_corpus, build_pools, faithfulness, quant_robustness, quant_score, relearn_ratio,
    relearn_robustness, relearn_score, target_corpus, ModelPool, PoolGrid,
};
use ou_core::methods::{run_unlearn, steering_vector, unlearn_loss, ForgetItem, MethodKey, RetainItem, UnlearnConfig};
use ou_core::metrics::{
    auc_roc, evaluate_metric, forget_quality, ks_statistic, ks_test, lcs_len, metric_em, metric_es, metric_truth_ratio,
    mia_attack, model_utility, rouge_l_f1, EvalContext, EvalData, MiaAttack, TruthRatioVariant, DEFAULT_K_FRAC,
};
use ou_core::runner::{run_experiment, ExperimentConfig, ExperimentKind, HandlerRegistry, RunOptions};
use ou_core::seqmodel::{
    quantize_dequantize, quantize_tensor, train_lm, Model, ModelConfig, ModelRole, TrainConfig, Vocabulary,
};
use ou_core::worldgen::{generate_world, make_splits, QaExample, SplitSet};
use ou_verify::{
    brute_auc, brute_em, brute_es, brute_ks, brute_logprobs, brute_min_k, brute_rouge, corrupted_continuation, example,
    oracle_model, oracle_vocab, prompt_ids, random_words,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

// ---------------------------------------------------------------- fixtures

struct Toy {
    splits: SplitSet,
    vocab: Vocabulary,
    target: Model,
    retain: Model,
}

fn toy() -> &'static Toy {
    static TOY: OnceLock<Toy> = OnceLock::new();
    TOY.get_or_init(|| {
        let t = Instant::now();
        let world = generate_world(0, 32, 4).unwrap();
        let splits = make_splits(&world, 0.1).unwrap();
        let vocab = splits.vocabulary();
        let arch = ModelConfig::new(vocab.size(), 48);
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            epochs: 20,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let target = train_lm(&target_corpus(&splits, &vocab).unwrap(), &cfg, None, &arch)
            .unwrap()
            .with_role(ModelRole::Target);
        let retain = train_lm(&base_corpus(&splits, &vocab).unwrap(), &cfg, None, &arch)
            .unwrap()
            .with_role(ModelRole::Retain);
        println!(
            "  (toy world: target and retain trained in {:.0}s)",
            t.elapsed().as_secs_f64()
        );
        Toy {
            splits,
            vocab,
            target,
            retain,
        }
    })
}

fn pools() -> &'static (ModelPool, ModelPool) {
    static POOLS: OnceLock<(ModelPool, ModelPool)> = OnceLock::new();
    POOLS.get_or_init(|| {
        let t = Instant::now();
        let toy = toy();
        let arch = ModelConfig::new(toy.vocab.size(), 48);
        let pools = build_pools(&toy.splits, &toy.vocab, &PoolGrid::default(), &arch).unwrap();
        println!(
            "  (pools: {} P / {} N models trained in {:.0}s)",
            pools.0.len(),
            pools.1.len(),
            t.elapsed().as_secs_f64()
        );
        pools
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol + 1e-12
}

// ------------------------------------------------- 1. meta-eval aggregation

fn meta_aggregation_replay() -> Outcome {
    // metric, overall, faithfulness, robustness, quantization, relearning
    let rows: [(&str, f64, f64, f64, f64, f64); 12] = [
        ("es", 0.85, 0.92, 0.79, 0.95, 0.68),
        ("em", 0.80, 0.90, 0.72, 0.92, 0.59),
        ("truth_ratio", 0.73, 0.95, 0.59, 0.92, 0.43),
        ("para_prob", 0.73, 0.71, 0.75, 0.60, 0.98),
        ("para_rouge", 0.72, 0.89, 0.61, 0.93, 0.45),
        ("prob", 0.72, 0.82, 0.65, 0.60, 0.70),
        ("rouge", 0.70, 0.79, 0.64, 0.93, 0.48),
        ("jailbreak_rouge", 0.69, 0.83, 0.59, 0.85, 0.45),
        ("mia_zlib", 0.71, 0.92, 0.57, 0.56, 0.59),
        ("mia_mink", 0.67, 0.93, 0.52, 0.48, 0.57),
        ("mia_loss", 0.66, 0.93, 0.52, 0.48, 0.57),
        ("mia_minkpp", 0.61, 0.81, 0.48, 0.61, 0.40),
    ];
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for (key, overall, faith, robust, quant, relearn) in rows {
        let (r, o) = aggregate_meta(faith, relearn, quant).map_err(|e| e.to_string())?;
        worst = worst.max((r - robust).abs()).max((o - overall).abs());
        if !close(r, robust, 0.01) || !close(o, overall, 0.01) {
            bad.push(format!(
                "{key}: robustness {r:.4} vs {robust}, overall {o:.4} vs {overall}"
            ));
        }
    }
    ensure!(bad.is_empty(), "{} of 12 rows off: {}", bad.len(), bad.join("; "));
    Ok(format!("12/12 rows within 0.01 (max deviation {worst:.4})"))
}

// ------------------------------------------------- 2. leaderboard replay

fn leaderboard_replay() -> Outcome {
    // method, agg, mem, priv, utility
    let full: [(&str, f64, f64, f64, f64); 10] = [
        ("Init", 0.00, 0.00, 0.10, 1.00),
        ("Retain", 0.58, 0.31, 1.00, 0.99),
        ("SimNPO", 0.53, 0.32, 0.63, 1.00),
        ("RMU", 0.52, 0.47, 0.50, 0.61),
        ("UNDIAL", 0.42, 0.27, 0.48, 0.78),
        ("AltPO", 0.15, 0.63, 0.06, 0.95),
        ("IdkNLL", 0.15, 0.08, 0.17, 0.93),
        ("NPO", 0.15, 0.52, 0.06, 0.99),
        ("IdkDPO", 0.14, 0.56, 0.06, 0.95),
        ("GradDiff", 9e-3, 0.97, 3e-3, 0.79),
    ];
    let mem_utility: [(&str, f64, f64, f64, f64); 10] = [
        ("Init", 0.00, 0.00, 0.10, 1.00),
        ("Retain", 0.58, 0.31, 1.00, 0.99),
        ("GradDiff", 0.87, 0.97, 3.27e-3, 0.79),
        ("AltPO", 0.76, 0.63, 0.06, 0.95),
        ("IdkDPO", 0.71, 0.56, 0.06, 0.95),
        ("NPO", 0.69, 0.52, 0.06, 0.99),
        ("RMU", 0.53, 0.47, 0.5, 0.61),
        ("SimNPO", 0.49, 0.32, 0.63, 1.0),
        ("UNDIAL", 0.4, 0.27, 0.48, 0.78),
        ("IdkNLL", 0.14, 0.08, 0.17, 0.93),
    ];
    let mut bad = Vec::new();
    let mut checked = 0;
    for (mode, rows) in [
        (AggregationMode::Full, &full),
        (AggregationMode::MemUtility, &mem_utility),
    ] {
        for &(method, agg, mem, privacy, utility) in rows {
            let row = overall_row(method, mem, privacy, utility, mode).map_err(|e| e.to_string())?;
            checked += 1;
            if !close(row.agg, agg, 0.01) {
                bad.push(format!("{mode:?} {method}: computed {:.4}, expected {agg}", row.agg));
            }
        }
    }
    let graddiff = overall_row("GradDiff", 0.97, 3.27e-3, 0.79, AggregationMode::MemUtility)
        .map_err(|e| e.to_string())?
        .agg;
    ensure!(
        bad.is_empty(),
        "{} of {checked} rows off by more than 0.01: {} (mem-utility GradDiff {graddiff:.4})",
        bad.len(),
        bad.join("; ")
    );
    Ok(format!(
        "{checked}/{checked} rows within 0.01 (mem-utility GradDiff {graddiff:.4})"
    ))
}

// ------------------------------------------------- 3. metric oracles

fn metric_oracles() -> Outcome {
    const CASES: usize = 120;
    let vocab = oracle_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut nontrivial_es = 0;

    for case in 0..CASES {
        let model = oracle_model(&vocab, case as u64);
        let q = random_words(&mut rng, 1, 3).join(" ");
        let prompt = prompt_ids(&vocab, &q);
        let len = rng.random_range(1..=6);
        let answer_ids = corrupted_continuation(&model, &vocab, &prompt, len, &mut rng);
        let answer = vocab.decode(&answer_ids).unwrap();
        let ex = [example(&q, &answer)];
        let data = EvalData::new("oracle", &ex, &vocab);
        let em = metric_em(&model, &data).unwrap().agg_value;
        let es = metric_es(&model, &data).unwrap().agg_value;
        let (bem, bes) = (
            brute_em(&model, &prompt, &answer_ids),
            brute_es(&model, &prompt, &answer_ids),
        );
        ensure!(em == bem, "EM case {case}: {em} vs brute {bem}");
        ensure!(es == bes, "ES case {case}: {es} vs brute {bes}");
        nontrivial_es += usize::from(bes > 0.0 && bes < 1.0);
    }

    for case in 0..CASES {
        let c: Vec<&str> = (0..rng.random_range(0..=7))
            .map(|_| ["a", "A", "b", "B", "c", "d"][rng.random_range(0..6)])
            .collect();
        let r: Vec<&str> = (0..rng.random_range(0..=7))
            .map(|_| ["a", "b", "C", "c", "d", "e"][rng.random_range(0..6)])
            .collect();
        let (c, r) = (c.join(" "), r.join(" "));
        let (bl, bf) = brute_rouge(&c, &r);
        let lower = |s: &str| s.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>();
        ensure!(lcs_len(&lower(&c), &lower(&r)) == bl, "LCS case {case}");
        let f = rouge_l_f1(&c, &r);
        worst = worst.max((f - bf).abs());
        ensure!((f - bf).abs() <= 1e-9, "ROUGE-L case {case} `{c}` / `{r}`: {f} vs {bf}");
    }

    for case in 0..CASES {
        let model = oracle_model(&vocab, 1000 + case as u64);
        let q = random_words(&mut rng, 1, 3).join(" ");
        let mut ex = example(&q, &random_words(&mut rng, 1, 4).join(" "));
        ex.paraphrased_answer = random_words(&mut rng, 1, 5).join(" ");
        ex.perturbed_answers = (0..rng.random_range(1..=3))
            .map(|_| random_words(&mut rng, 1, 5).join(" "))
            .collect();
        let prompt = prompt_ids(&vocab, &q);
        let norm_prob = |text: &str| {
            let lp = brute_logprobs(&model, &prompt, &vocab.encode(text).unwrap());
            (lp.iter().sum::<f64>() / lp.len() as f64).exp()
        };
        let p_para = norm_prob(&ex.paraphrased_answer);
        let p_pert = ex.perturbed_answers.iter().map(|t| norm_prob(t)).sum::<f64>() / ex.perturbed_answers.len() as f64;
        let exs = [ex];
        let data = EvalData::new("oracle", &exs, &vocab);
        for (variant, brute) in [
            (TruthRatioVariant::Knowledge, p_para / (p_para + p_pert)),
            (TruthRatioVariant::Privacy, (p_para / p_pert).min(p_pert / p_para)),
        ] {
            let v = metric_truth_ratio(&model, &data, variant).unwrap().agg_value;
            worst = worst.max((v - brute).abs());
            ensure!(
                (v - brute).abs() <= 1e-9,
                "truth ratio {variant:?} case {case}: {v} vs {brute}"
            );
        }
    }

    for case in 0..CASES {
        let model = oracle_model(&vocab, 2000 + case as u64);
        let make = |rng: &mut ChaCha8Rng| -> Vec<QaExample> {
            (0..rng.random_range(1..=3))
                .map(|_| example(&random_words(rng, 1, 3).join(" "), &random_words(rng, 1, 7).join(" ")))
                .collect()
        };
        let forget = make(&mut rng);
        let holdout = make(&mut rng);
        let k_frac = rng.random_range(0.05..=1.0);
        let res = mia_attack(MiaAttack::MinK, &model, &vocab, &forget, &holdout, k_frac).unwrap();
        let brute = |exs: &[QaExample]| -> Vec<f64> {
            exs.iter()
                .map(|e| {
                    let lp = brute_logprobs(
                        &model,
                        &prompt_ids(&vocab, &e.question),
                        &vocab.encode(&e.answer).unwrap(),
                    );
                    brute_min_k(&lp, k_frac)
                })
                .collect()
        };
        for (got, want) in [
            (&res.member_scores, brute(&forget)),
            (&res.nonmember_scores, brute(&holdout)),
        ] {
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs());
                ensure!((g - w).abs() <= 1e-9, "MinK case {case}: {g} vs {w}");
            }
        }
        let auc = brute_auc(&res.nonmember_scores, &res.member_scores);
        ensure!(
            (res.auc - auc).abs() <= 1e-9,
            "MinK AUC case {case}: {} vs {auc}",
            res.auc
        );
    }

    for case in 0..CASES {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..rng.random_range(1..=9))
                .map(|_| rng.random_range(0..6) as f64 * 0.5)
                .collect()
        };
        let (pos, neg) = (draw(&mut rng), draw(&mut rng));
        let (a, b) = (auc_roc(&pos, &neg).unwrap(), brute_auc(&pos, &neg));
        worst = worst.max((a - b).abs());
        ensure!((a - b).abs() <= 1e-9, "AUC case {case}: {a} vs {b}");
    }

    for case in 0..CASES {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..rng.random_range(1..=10))
                .map(|_| {
                    if rng.random_bool(0.3) {
                        0.5
                    } else {
                        rng.random_range(0.0..1.0)
                    }
                })
                .collect()
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let (d, p) = ks_test(&a, &b).unwrap();
        let (bd, bp) = brute_ks(&a, &b);
        ensure!(ks_statistic(&a, &b).unwrap() == d, "KS statistic mismatch case {case}");
        worst = worst.max((d - bd).abs()).max((p - bp).abs());
        ensure!((d - bd).abs() <= 1e-9, "KS D case {case}: {d} vs {bd}");
        ensure!((p - bp).abs() <= 1e-9, "KS p case {case}: {p} vs {bp}");
    }
    Ok(format!(
        "{CASES} cases each for EM, ES, ROUGE-L, truth ratio, MinK, AUC, KS; EM/ES exact ({nontrivial_es} ES cases strictly inside (0, 1)); max real error {worst:.1e}"
    ))
}

// ------------------------------------------------- 4. loss gradients

fn grad_model(seed: u64) -> Model {
    let cfg = ModelConfig {
        vocab_size: 11,
        max_seq_len: 16,
        hidden_dim: 8,
        n_layers: 2,
        n_heads: 2,
        mlp_ratio: 2,
    };
    let mut m = Model::new(cfg, seed, ModelRole::Target).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in m.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    m
}

fn loss_gradients() -> Outcome {
    const H: f64 = 1e-5;
    let m = grad_model(3);
    let reference = grad_model(5);
    let forget = vec![
        ForgetItem {
            prompt: vec![0, 2, 3],
            answer: vec![4, 5, 1],
            idk: Some(vec![9, 10, 1]),
            alts: vec![vec![4, 6, 1], vec![4, 7, 1]],
        },
        ForgetItem {
            prompt: vec![0, 8, 3],
            answer: vec![6, 1],
            idk: Some(vec![9, 1]),
            alts: vec![vec![7, 1]],
        },
    ];
    let retain = vec![
        RetainItem {
            prompt: vec![0, 5, 3],
            answer: vec![2, 8, 1],
        },
        RetainItem {
            prompt: vec![0, 7],
            answer: vec![3, 1],
        },
    ];
    let mut worst: f64 = 0.0;
    for method in MethodKey::ALL {
        let cfg = UnlearnConfig {
            gamma: 0.7,
            alpha: 0.6,
            beta: if method == MethodKey::Undial { 2.0 } else { 0.5 },
            delta: 0.3,
            steering_coeff: 1.5,
            layer: 1,
            seed: 4,
            ..UnlearnConfig::for_method(method)
        };
        let mut grads = vec![0.0; m.params().len()];
        unlearn_loss(method, &m, Some(&reference), &forget, &retain, &cfg, Some(&mut grads))
            .map_err(|e| e.to_string())?;
        let loss = |mm: &Model| unlearn_loss(method, mm, Some(&reference), &forget, &retain, &cfg, None).unwrap();
        let candidates: Vec<usize> = (0..grads.len()).filter(|&i| grads[i].abs() > 1e-4).collect();
        ensure!(
            candidates.len() > 50,
            "{method}: only {} non-zero gradient entries",
            candidates.len()
        );
        let mut rng = ChaCha8Rng::seed_from_u64(method as u64 + 77);
        for _ in 0..5 {
            let idx = candidates[rng.random_range(0..candidates.len())];
            let mut plus = m.clone();
            plus.params_mut()[idx] += H;
            let mut minus = m.clone();
            minus.params_mut()[idx] -= H;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * H);
            let rel = (grads[idx] - fd).abs() / grads[idx].abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            ensure!(
                rel <= 1e-3,
                "{method} param {idx}: analytic {} vs finite difference {fd}",
                grads[idx]
            );
        }
    }
    ensure!(steering_vector(8, 1).len() == 8, "steering vector size");
    Ok(format!("9 losses x 5 probes, max relative error {worst:.1e}"))
}

// ------------------------------------------------- 5. toy faithfulness

fn checksum_seed(m: &Model) -> u64 {
    u64::from_str_radix(&m.checksum()[..16], 16).unwrap()
}

fn toy_faithfulness() -> Outcome {
    let toy = toy();
    let (p, n) = pools();
    ensure!(
        p.len() >= 6 && n.len() >= 6,
        "pools too small: {} P / {} N",
        p.len(),
        n.len()
    );
    let ctx = EvalContext::new(&toy.splits, &toy.vocab).map_err(|e| e.to_string())?;
    let scores = |pool: &ModelPool, key: &str| -> Vec<f64> {
        pool.members
            .iter()
            .map(|m| evaluate_metric(key, &m.model, &ctx).unwrap().agg_value)
            .collect()
    };
    let mut parts = Vec::new();
    for key in ["es", "em"] {
        let (auc, _) = faithfulness(&scores(p, key), &scores(n, key)).map_err(|e| e.to_string())?;
        parts.push(format!("{key} {auc:.3}"));
        ensure!(auc >= 0.9, "{key} faithfulness {auc:.3} < 0.9");
    }
    let constant = |pool: &ModelPool| vec![0.5; pool.len()];
    let (c_auc, _) = faithfulness(&constant(p), &constant(n)).map_err(|e| e.to_string())?;
    ensure!((0.45..=0.55).contains(&c_auc), "constant metric AUC {c_auc}");
    let noise = |pool: &ModelPool| -> Vec<f64> {
        pool.members
            .iter()
            .map(|m| ChaCha8Rng::seed_from_u64(checksum_seed(&m.model)).random_range(0.0..1.0))
            .collect()
    };
    let (z_auc, _) = faithfulness(&noise(p), &noise(n)).map_err(|e| e.to_string())?;
    ensure!(
        (0.35..=0.65).contains(&z_auc),
        "noise metric AUC {z_auc:.3} outside [0.35, 0.65]"
    );
    Ok(format!(
        "{} P / {} N models; AUC {}; constant {c_auc:.3}; noise {z_auc:.3}",
        p.len(),
        n.len(),
        parts.join(", ")
    ))
}

// ------------------------------------------------- 6. MIA calibration

fn mia_calibration() -> Outcome {
    let toy = toy();
    let (p, _) = pools();
    let auc = |m: &Model| {
        mia_attack(
            MiaAttack::Loss,
            m,
            &toy.vocab,
            &toy.splits.forget,
            &toy.splits.holdout,
            DEFAULT_K_FRAC,
        )
        .unwrap()
        .auc
    };
    let retain_auc = auc(&toy.retain);
    ensure!(
        (0.35..=0.65).contains(&retain_auc),
        "retain model MIA-LOSS AUC {retain_auc:.3}"
    );
    let p_aucs: Vec<f64> = p.members.iter().map(|m| auc(&m.model)).collect();
    let min_p = p_aucs.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure!(min_p >= 0.7, "weakest P model MIA-LOSS AUC {min_p:.3} < 0.7");
    Ok(format!(
        "retain AUC {retain_auc:.3}; P models min AUC {min_p:.3} over {}",
        p_aucs.len()
    ))
}

// ------------------------------------------------- 7. unlearning smoke

fn unlearning_smoke() -> Outcome {
    let toy = toy();
    let ctx = EvalContext::new(&toy.splits, &toy.vocab).map_err(|e| e.to_string())?;
    let prob = |m: &Model| evaluate_metric("prob", m, &ctx).unwrap().agg_value;
    let mu = |m: &Model| {
        model_utility(m, &toy.splits, &toy.vocab, ctx.max_new_tokens)
            .unwrap()
            .agg_value
    };
    let (t_prob, t_mu) = (prob(&toy.target), mu(&toy.target));
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for method in MethodKey::ALL {
        let mut hit = None;
        let mut tried = Vec::new();
        for cfg in UnlearnConfig::default_sweep(method) {
            let model = match run_unlearn(&toy.target, &toy.vocab, &toy.splits.forget, &toy.splits.retain, &cfg) {
                Ok(m) => m,
                Err(ou_core::Error::Diverged { last_stable, .. }) => *last_stable,
                Err(e) => return Err(format!("{method}: {e}")),
            };
            let (pr, ur) = (prob(&model) / t_prob, mu(&model) / t_mu);
            tried.push(format!("lr {:.1e}: prob {pr:.2} MU {ur:.2}", cfg.learning_rate));
            let utility_ok = method == MethodKey::GradAscent || ur >= 0.8;
            if pr <= 0.5 && utility_ok && hit.is_none() {
                hit = Some(format!(
                    "{method} lr {:.1e} (prob x{pr:.2}, MU x{ur:.2})",
                    cfg.learning_rate
                ));
            }
        }
        match hit {
            Some(h) => lines.push(h),
            None => failed.push(format!("{method} [{}]", tried.join("; "))),
        }
    }
    ensure!(failed.is_empty(), "no qualifying run for: {}", failed.join(" | "));
    Ok(lines.join(", "))
}

// ------------------------------------------------- 8. robustness edge cases

fn robustness_edges() -> Outcome {
    let cases: [(&str, f64, f64); 10] = [
        ("r = 0.75", relearn_score(1.0, 0.25, 1.0, 0.0), 0.75),
        ("R(0.75)", relearn_robustness(Some(0.75)), 0.75),
        ("r = 1", relearn_score(0.5, 0.0, 0.5, 0.0), 1.0),
        ("r = 2", relearn_score(1.0, 0.0, 0.5, 0.0), 1.0),
        ("denominator 0", relearn_score(0.3, 0.9, 0.2, 0.2), 1.0),
        (
            "ratio undefined",
            relearn_robustness(relearn_ratio(0.1, 0.4, 0.6, 0.6)),
            1.0,
        ),
        ("q = 0.8", quant_score(1.0, 0.8), 0.8),
        ("Q(0.8)", quant_robustness(Some(0.8), 0.4), 0.8),
        ("q = 1", quant_score(0.5, 0.5), 1.0),
        ("q = 1.4", quant_score(0.5, 0.7), 1.0),
    ];
    for (name, got, want) in cases {
        ensure!(got == want, "{name}: {got} != {want}");
    }
    Ok(format!("{} hand cases exact", cases.len()))
}

// ------------------------------------------------- 9. quantization

fn quantization_contract() -> Outcome {
    let toy = toy();
    let mut tensors = 0;
    let mut worst_ratio: f64 = 0.0;
    for model in [&toy.target, &toy.retain] {
        let quantized = quantize_dequantize(model, 4).map_err(|e| e.to_string())?;
        for t in model.layout().tensors() {
            let orig = &model.params()[t.range()];
            let mut vals = orig.to_vec();
            let scale = quantize_tensor(&mut vals, 4);
            ensure!(
                vals == quantized.params()[t.range()],
                "{}: model-level result differs",
                t.name
            );
            let err = orig.iter().zip(&vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            match scale {
                Some(s) => {
                    // half a grid step, up to rounding in the last bit
                    ensure!(
                        err <= s / 2.0 * (1.0 + 1e-12),
                        "{}: error {err} > scale/2 = {}",
                        t.name,
                        s / 2.0
                    );
                    worst_ratio = worst_ratio.max(err / s);
                }
                None => ensure!(err == 0.0, "{}: constant tensor changed", t.name),
            }
            tensors += 1;
        }
    }
    let data = EvalData::new("forget", &toy.splits.forget, &toy.vocab);
    let em = metric_em(&toy.retain, &data).unwrap().agg_value;
    let q_em = metric_em(&quantize_dequantize(&toy.retain, 4).unwrap(), &data)
        .unwrap()
        .agg_value;
    ensure!(
        q_em <= em + 0.05,
        "quantized retain EM {q_em:.3} exceeds {em:.3} + 0.05"
    );
    Ok(format!(
        "{tensors} tensors, max error {worst_ratio:.3} x scale; retain forget EM {em:.3} -> {q_em:.3} quantized"
    ))
}

// ------------------------------------------------- 10. determinism

fn determinism() -> Outcome {
    let mut cfg = ExperimentConfig::for_kind(ExperimentKind::Eval);
    cfg.metrics = ["meta", "model_utility", "fluency", "forget_quality"]
        .map(String::from)
        .to_vec();
    let registry = HandlerRegistry::builtin();
    let mut reports = Vec::new();
    for _ in 0..2 {
        let root = tempfile::tempdir().map_err(|e| e.to_string())?;
        let opts = RunOptions {
            output_root: Some(root.path().to_path_buf()),
            skip_existing: false,
        };
        let out = run_experiment(&cfg, &registry, &opts).map_err(|e| e.to_string())?;
        reports.push(std::fs::read(out.run_dir.join("reports/eval.json")).map_err(|e| e.to_string())?);
    }
    ensure!(reports[0] == reports[1], "eval reports differ between identical runs");
    Ok(format!(
        "two fresh eval runs, {} byte reports identical",
        reports[0].len()
    ))
}

// ------------------------------------------------- 11. forget quality

fn forget_quality_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sample: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
    let same = forget_quality(&sample, &sample).map_err(|e| e.to_string())?;
    ensure!(same == 1.0, "identical samples give p = {same}");
    let low: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..0.4)).collect();
    let high: Vec<f64> = (0..50).map(|_| rng.random_range(0.6..1.0)).collect();
    let apart = forget_quality(&low, &high).map_err(|e| e.to_string())?;
    ensure!(apart < 1e-6, "disjoint samples give p = {apart:e}");
    Ok(format!("identical p = {same}; disjoint p = {apart:.1e}"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("meta-eval aggregation replay", meta_aggregation_replay),
        ("leaderboard aggregation replay", leaderboard_replay),
        ("metric oracles", metric_oracles),
        ("loss gradients vs finite differences", loss_gradients),
        ("toy faithfulness", toy_faithfulness),
        ("MIA calibration", mia_calibration),
        ("unlearning smoke per method", unlearning_smoke),
        ("robustness edge cases", robustness_edges),
        ("4-bit quantization contract", quantization_contract),
        ("determinism", determinism),
        ("forget quality endpoints", forget_quality_endpoints),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    println!("acceptance criteria");
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || id == *f) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} {name}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id} {name}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    if failures > 0 {
        println!("{failures} criterion(s) failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
