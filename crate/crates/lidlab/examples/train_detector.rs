//! Fit and score the logistic-regression detector by hand.
//!
//! Everything the harness does per confidence level, spelled out: craft
//! attacks, featurize clean/noisy/adversarial triples, split by sample id,
//! train the detector on the train split, and report AUC plus detection rate
//! on the held-out split.
//!
//!     cargo run --release --example train_detector

use lidlab::attack::{run_attack, AttackConfig, AttackKind};
use lidlab::data::{select_attack_targets, synthetic_blobs, Split};
use lidlab::detector::{auc, detection_rate, train_detector, DetectorHyperparams};
use lidlab::lid::{extract_features, make_noisy, ExampleKind, LidConfig, LidQuery};
use lidlab::nn::{train, Activation, LayerSpec, Network, TrainConfig};
use lidlab::tensor::Interval;

fn main() -> lidlab::Result<()> {
    let data = synthetic_blobs(400, 4, 16, 0.08, 21, Split::Train);
    let specs = [
        LayerSpec {
            in_dim: 16,
            out_dim: 24,
            activation: Activation::Relu,
        },
        LayerSpec {
            in_dim: 24,
            out_dim: 4,
            activation: Activation::Identity,
        },
    ];
    let net = train(
        Network::new(&specs, 7)?,
        &data,
        &TrainConfig {
            learning_rate: 0.1,
            epochs: 80,
            batch_size: 32,
            seed: 3,
        },
    )?;

    // 1. Attack 60 correctly classified samples.
    let targets = select_attack_targets(&net, &data, 60, 99)?;
    let attack_cfg = AttackConfig::default();
    let mut triples = Vec::new(); // (sample id, clean, noisy, adversarial)
    for t in &targets {
        let r = run_attack(AttackKind::Cw, &net, &t.x, t.label, &attack_cfg)?;
        if !r.success || r.l2 == 0.0 {
            continue;
        }
        let noisy = make_noisy(&t.x, r.l2, Interval::UNIT, 1000 + t.id as u64);
        triples.push((t.id, t.x.clone(), noisy, r.adversarial));
    }
    println!("{} attacked samples", triples.len());

    // 2. Featurize all three views of every sample.
    let cfg = LidConfig { k: 20, batch_size: 100 };
    let references: Vec<_> = data.samples[..cfg.batch_size].to_vec();
    let mut queries = Vec::new();
    for (_, clean, noisy, adv) in &triples {
        for (x, kind) in [
            (clean, ExampleKind::Clean),
            (noisy, ExampleKind::Noisy),
            (adv, ExampleKind::Adversarial),
        ] {
            queries.push(LidQuery {
                x: x.clone(),
                kind,
                counterpart: None,
            });
        }
    }
    let out = extract_features(&net, &references, &queries, &cfg)?;

    // 3. Split by sample id: first 70% train, rest test.
    let n_train_samples = triples.len() * 7 / 10;
    let mut train_pos = Vec::new();
    let mut train_neg = Vec::new();
    let mut test_pos = Vec::new();
    let mut test_neg = Vec::new();
    for (i, f) in out.features.iter().enumerate() {
        let Some(f) = f else { continue };
        let sample_idx = i / 3;
        let (pos, neg) = if sample_idx < n_train_samples {
            (&mut train_pos, &mut train_neg)
        } else {
            (&mut test_pos, &mut test_neg)
        };
        match f.kind {
            ExampleKind::Adversarial => pos.push(f.values.clone()),
            ExampleKind::Clean | ExampleKind::Noisy => neg.push(f.values.clone()),
        }
    }
    println!(
        "train: {}+/{}-, test: {}+/{}-",
        train_pos.len(),
        train_neg.len(),
        test_pos.len(),
        test_neg.len()
    );

    // 4. Train and evaluate.
    let trained = train_detector(&train_pos, &train_neg, &DetectorHyperparams::default())?;
    let model = &trained.model;
    let pos_scores: Vec<f64> = test_pos
        .iter()
        .map(|f| model.score(f))
        .collect::<lidlab::Result<_>>()?;
    let neg_scores: Vec<f64> = test_neg
        .iter()
        .map(|f| model.score(f))
        .collect::<lidlab::Result<_>>()?;
    println!("held-out AUC:        {:.4}", auc(&pos_scores, &neg_scores)?);
    println!("detection rate:      {:.4}", detection_rate(model, &test_pos)?);
    println!(
        "false positive rate: {:.4}",
        detection_rate(model, &test_neg)?
    );
    println!("per-layer weights:   {:?}", model.weights);
    Ok(())
}
