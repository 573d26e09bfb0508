use ou_core::methods::{steering_vector, unlearn_loss, ForgetItem, MethodKey, RetainItem, UnlearnConfig};
use ou_core::seqmodel::{corpus_mean_nll, LmExample, Model, ModelConfig, ModelRole};
use ou_core::Error;

fn arch() -> ModelConfig {
    ModelConfig {
        vocab_size: 12,
        max_seq_len: 16,
        hidden_dim: 8,
        n_layers: 2,
        n_heads: 2,
        mlp_ratio: 2,
    }
}

fn forget() -> Vec<ForgetItem> {
    vec![
        ForgetItem {
            prompt: vec![0, 2, 3],
            answer: vec![4, 5, 1],
            idk: Some(vec![9, 10, 1]),
            alts: vec![vec![4, 6, 1]],
        },
        ForgetItem {
            prompt: vec![0, 8, 3],
            answer: vec![6, 1],
            idk: Some(vec![9, 1]),
            alts: vec![vec![7, 1]],
        },
    ]
}

fn retain() -> Vec<RetainItem> {
    vec![
        RetainItem {
            prompt: vec![0, 5, 3],
            answer: vec![2, 8, 1],
        },
        RetainItem {
            prompt: vec![0, 7],
            answer: vec![3, 11, 1],
        },
    ]
}

fn retain_nll(m: &Model) -> f64 {
    let corpus: Vec<LmExample> = retain()
        .iter()
        .map(|r| LmExample::prompt_answer(&r.prompt, &r.answer))
        .collect();
    corpus_mean_nll(m, &corpus).unwrap()
}

fn forget_nll(m: &Model) -> f64 {
    let corpus: Vec<LmExample> = forget()
        .iter()
        .map(|f| LmExample::prompt_answer(&f.prompt, &f.answer))
        .collect();
    corpus_mean_nll(m, &corpus).unwrap()
}

fn cfg(method: MethodKey) -> UnlearnConfig {
    UnlearnConfig::for_method(method)
}

#[test]
fn grad_ascent_negates_mean_nll() {
    let m = Model::new(arch(), 1, ModelRole::Target).unwrap();
    let loss = unlearn_loss(
        MethodKey::GradAscent,
        &m,
        None,
        &forget(),
        &[],
        &cfg(MethodKey::GradAscent),
        None,
    )
    .unwrap();
    assert!((loss + forget_nll(&m)).abs() < 1e-12);
    let half = UnlearnConfig {
        gamma: 0.5,
        ..cfg(MethodKey::GradAscent)
    };
    let l2 = unlearn_loss(MethodKey::GradAscent, &m, None, &forget(), &[], &half, None).unwrap();
    assert!((l2 - 0.5 * loss).abs() < 1e-12);
}

#[test]
fn npo_at_reference_is_constant() {
    let m = Model::new(arch(), 1, ModelRole::Target).unwrap();
    let c = UnlearnConfig {
        beta: 0.1,
        alpha: 0.0,
        ..cfg(MethodKey::Npo)
    };
    let loss = unlearn_loss(MethodKey::Npo, &m, Some(&m), &forget(), &retain(), &c, None).unwrap();
    // 20 ln 2
    assert!((loss - 13.862943611198906).abs() < 1e-9, "{loss}");
    let one_item = unlearn_loss(MethodKey::Npo, &m, Some(&m), &forget()[1..], &retain(), &c, None).unwrap();
    assert!((one_item - loss).abs() < 1e-12);
    let with_retain = UnlearnConfig { alpha: 0.7, ..c };
    let l = unlearn_loss(MethodKey::Npo, &m, Some(&m), &forget(), &retain(), &with_retain, None).unwrap();
    assert!((l - (20.0 * std::f64::consts::LN_2 + 0.7 * retain_nll(&m))).abs() < 1e-9);
}

/// Model that assigns probability one to token `tok` everywhere.
fn certain_model(tok: usize) -> Model {
    let mut m = Model::new(arch(), 0, ModelRole::Target).unwrap();
    m.tensor_mut("lnf.g").unwrap().iter_mut().for_each(|g| *g = 0.0);
    let b = m.tensor_mut("lnf.b").unwrap();
    b.iter_mut().for_each(|x| *x = 0.0);
    b[0] = 1.0;
    let head = m.tensor_mut("lm_head").unwrap();
    head.iter_mut().for_each(|x| *x = 0.0);
    // lm_head is hidden_dim x vocab, row 0 drives every logit
    head[tok] = 1e4;
    m
}

#[test]
fn simnpo_zero_logprob_case() {
    let m = certain_model(5);
    let items = vec![ForgetItem {
        prompt: vec![0, 2],
        answer: vec![5, 5, 5],
        idk: None,
        alts: vec![],
    }];
    let beta = 2.5;
    let c = UnlearnConfig {
        beta,
        delta: 0.0,
        alpha: 0.0,
        ..cfg(MethodKey::SimNpo)
    };
    let loss = unlearn_loss(MethodKey::SimNpo, &m, None, &items, &[], &c, None).unwrap();
    assert!((loss - 2.0 / beta * std::f64::consts::LN_2).abs() < 1e-12, "{loss}");
}

#[test]
fn rmu_zero_residual_case() {
    let mut m = Model::new(arch(), 0, ModelRole::Target).unwrap();
    let coeff = 2.0;
    let c = UnlearnConfig {
        steering_coeff: coeff,
        layer: 1,
        seed: 6,
        ..cfg(MethodKey::Rmu)
    };
    let control: Vec<f64> = steering_vector(8, 6).iter().map(|u| coeff * u).collect();
    for name in ["attn.proj.w", "attn.proj.b", "mlp.proj.w", "mlp.proj.b"] {
        for l in 0..2 {
            m.tensor_mut(&format!("h{l}.{name}"))
                .unwrap()
                .iter_mut()
                .for_each(|x| *x = 0.0);
        }
    }
    m.tensor_mut("wpe").unwrap().iter_mut().for_each(|x| *x = 0.0);
    for row in m.tensor_mut("wte").unwrap().chunks_mut(8) {
        row.copy_from_slice(&control);
    }
    let loss = unlearn_loss(MethodKey::Rmu, &m, Some(&m), &forget(), &retain(), &c, None).unwrap();
    assert!(loss.abs() < 1e-20, "{loss}");
}

#[test]
fn undial_identity_case() {
    let m = Model::new(arch(), 2, ModelRole::Target).unwrap();
    let c = UnlearnConfig {
        beta: 0.0,
        alpha: 0.0,
        ..cfg(MethodKey::Undial)
    };
    // β = 0 bypasses validation only through the loss function itself
    let loss = unlearn_loss(MethodKey::Undial, &m, Some(&m), &forget(), &retain(), &c, None).unwrap();
    assert!(loss.abs() < 1e-12, "{loss}");
    let other = Model::new(arch(), 3, ModelRole::Target).unwrap();
    assert!(unlearn_loss(MethodKey::Undial, &m, Some(&other), &forget(), &retain(), &c, None).unwrap() > 0.0);
}

#[test]
fn zero_gamma_reduces_to_retain_nll() {
    let m = Model::new(arch(), 4, ModelRole::Target).unwrap();
    let target = Model::new(arch(), 5, ModelRole::Target).unwrap();
    for method in [MethodKey::GradDiff, MethodKey::IdkNll, MethodKey::Undial] {
        let c = UnlearnConfig {
            gamma: 0.0,
            alpha: 1.0,
            beta: 1.0,
            ..cfg(method)
        };
        let loss = unlearn_loss(method, &m, Some(&target), &forget(), &retain(), &c, None).unwrap();
        assert!((loss - retain_nll(&m)).abs() < 1e-9, "{method}");
    }
}

#[test]
fn idk_dpo_and_alt_po_swap() {
    let m = Model::new(arch(), 4, ModelRole::Target).unwrap();
    let reference = Model::new(arch(), 7, ModelRole::Target).unwrap();
    let swapped: Vec<ForgetItem> = forget()
        .into_iter()
        .map(|f| ForgetItem {
            idk: Some(f.alts[0].clone()),
            alts: vec![f.idk.clone().unwrap()],
            ..f
        })
        .collect();
    let c = UnlearnConfig {
        beta: 0.4,
        ..cfg(MethodKey::IdkDpo)
    };
    let a = unlearn_loss(MethodKey::IdkDpo, &m, Some(&reference), &forget(), &retain(), &c, None).unwrap();
    let b = unlearn_loss(MethodKey::AltPo, &m, Some(&reference), &swapped, &retain(), &c, None).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn missing_inputs_are_reported() {
    let m = Model::new(arch(), 4, ModelRole::Target).unwrap();
    for method in MethodKey::ALL.into_iter().filter(|m| m.needs_reference()) {
        let r = unlearn_loss(method, &m, None, &forget(), &retain(), &cfg(method), None);
        assert!(matches!(r, Err(Error::Config(_))), "{method}");
    }
    let bare: Vec<ForgetItem> = forget()
        .into_iter()
        .map(|f| ForgetItem {
            idk: None,
            alts: vec![],
            ..f
        })
        .collect();
    for method in [MethodKey::IdkNll, MethodKey::IdkDpo, MethodKey::AltPo] {
        let r = unlearn_loss(method, &m, Some(&m), &bare, &retain(), &cfg(method), None);
        assert!(matches!(r, Err(Error::Data(_))), "{method}");
    }
}
