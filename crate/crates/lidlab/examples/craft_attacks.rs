//! Craft adversarial examples at low and high confidence.
//!
//! Trains a small classifier on Gaussian blobs, then attacks the same inputs
//! twice with each method: once at confidence kappa = 0 (any misclassification
//! wins) and once at kappa = 8 (the wrong class must lead by eight logits).
//! The printed table shows the price of confidence: higher kappa forces
//! larger distortions.
//!
//!     cargo run --release --example craft_attacks

use lidlab::attack::{run_attack, AttackConfig, AttackKind};
use lidlab::data::{select_attack_targets, synthetic_blobs, Split};
use lidlab::nn::{train, Activation, LayerSpec, Network, TrainConfig};

fn main() -> lidlab::Result<()> {
    let data = synthetic_blobs(360, 4, 16, 0.08, 21, Split::Train);
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
    let mut net = train(
        Network::new(&specs, 7)?,
        &data,
        &TrainConfig {
            learning_rate: 0.1,
            epochs: 80,
            batch_size: 32,
            seed: 3,
        },
    )?;
    // Widen the logit range so kappa = 8 is reachable inside the box.
    net.scale_logits(4.0);

    let targets = select_attack_targets(&net, &data, 12, 99)?;
    for kind in [AttackKind::Cw, AttackKind::Ead] {
        println!("\n=== {} ===", kind.as_str());
        println!(
            "{:>6} {:>7} {:>7} {:>9} {:>9} {:>11}",
            "sample", "kappa", "ok", "margin", "l2", "c_used"
        );
        for kappa in [0.0, 8.0] {
            let cfg = AttackConfig {
                kappa,
                max_iterations: 200,
                binary_search_steps: 9,
                ..AttackConfig::default()
            };
            let mut mean_l2 = 0.0;
            let mut wins = 0usize;
            for t in &targets {
                let r = run_attack(kind, &net, &t.x, t.label, &cfg)?;
                if r.success {
                    wins += 1;
                    mean_l2 += r.l2;
                }
                println!(
                    "{:>6} {:>7} {:>7} {:>9.3} {:>9.4} {:>11.3e}",
                    t.id,
                    kappa,
                    if r.success { "yes" } else { "no" },
                    r.achieved_margin,
                    r.l2,
                    r.c_used
                );
            }
            if wins > 0 {
                println!(
                    "    kappa {kappa}: {wins}/{} succeeded, mean L2 {:.4}",
                    targets.len(),
                    mean_l2 / wins as f64
                );
            }
        }
    }
    Ok(())
}
