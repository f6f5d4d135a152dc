//! Per-layer LID profiles of clean, noisy, and adversarial examples.
//!
//! The detector's whole premise is that adversarial examples sit in locally
//! higher-dimensional neighborhoods than clean or merely noisy points, and
//! that the gap shows up layer by layer. This example crafts a few attacks,
//! builds matched clean/noisy/adversarial triples, and prints their LID
//! estimates at every layer of the network.
//!
//!     cargo run --release --example lid_features

use lidlab::attack::{run_attack, AttackConfig, AttackKind};
use lidlab::data::{select_attack_targets, synthetic_blobs, Split};
use lidlab::lid::{extract_features, make_noisy, ExampleKind, LidConfig, LidQuery};
use lidlab::nn::{train, Activation, LayerSpec, Network, TrainConfig};
use lidlab::tensor::Interval;

fn main() -> lidlab::Result<()> {
    let data = synthetic_blobs(400, 4, 16, 0.08, 21, Split::Train);
    let specs = [
        LayerSpec {
            in_dim: 16,
            out_dim: 32,
            activation: Activation::Relu,
        },
        LayerSpec {
            in_dim: 32,
            out_dim: 16,
            activation: Activation::Relu,
        },
        LayerSpec {
            in_dim: 16,
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

    // Reference minibatch: the first 100 training points.
    let cfg = LidConfig { k: 20, batch_size: 100 };
    let references: Vec<_> = data.samples[..cfg.batch_size].to_vec();

    // Matched triples for a handful of attacked samples: the clean input,
    // a noisy copy at the same L2 distance as the attack, the adversarial
    // point itself.
    let targets = select_attack_targets(&net, &data, 8, 99)?;
    let attack_cfg = AttackConfig::default();
    let mut queries = Vec::new();
    let mut ids = Vec::new();
    for t in &targets {
        let r = run_attack(AttackKind::Cw, &net, &t.x, t.label, &attack_cfg)?;
        if !r.success || r.l2 == 0.0 {
            continue;
        }
        let noisy = make_noisy(&t.x, r.l2, Interval::UNIT, 1000 + t.id as u64);
        queries.push(LidQuery {
            x: t.x.clone(),
            kind: ExampleKind::Clean,
            counterpart: None,
        });
        queries.push(LidQuery {
            x: noisy,
            kind: ExampleKind::Noisy,
            counterpart: None,
        });
        queries.push(LidQuery {
            x: r.adversarial,
            kind: ExampleKind::Adversarial,
            counterpart: None,
        });
        ids.push(t.id);
    }

    let out = extract_features(&net, &references, &queries, &cfg)?;
    println!(
        "per-layer LID estimates (k = {}, batch = {}), {} dropped\n",
        cfg.k, cfg.batch_size, out.dropped
    );
    println!("{:>6} {:>12} {:>8} {:>8} {:>8}", "sample", "kind", "l1", "l2", "l3");
    for (triple, id) in out.features.chunks(3).zip(&ids) {
        for f in triple.iter().flatten() {
            print!("{:>6} {:>12}", id, f.kind.as_str());
            for v in &f.values {
                print!(" {v:>8.3}");
            }
            println!();
        }
    }
    println!("\nadversarial rows should trend above their clean/noisy partners");
    Ok(())
}
