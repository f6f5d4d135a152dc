//! Train a small digit classifier from scratch and save its weights.
//!
//! Uses the built-in synthetic seven-segment digit images (28x28 grayscale,
//! ten classes) so the example runs without downloading anything. The saved
//! weight file round-trips through `Network::load`, and the same format is
//! what the experiment harness and CLI read via `target_model = <path>`.
//!
//!     cargo run --release --example train_model

use lidlab::data::{synthetic_digits, Split};
use lidlab::nn::{accuracy, train, Activation, LayerSpec, Network, TrainConfig};

fn main() -> lidlab::Result<()> {
    let train_data = synthetic_digits(2000, 1, Split::Train);
    let test_data = synthetic_digits(600, 2, Split::Test);

    // 784 -> 128 -> 64 -> 10, ReLU hidden layers, identity logits.
    let specs = [
        LayerSpec {
            in_dim: 784,
            out_dim: 128,
            activation: Activation::Relu,
        },
        LayerSpec {
            in_dim: 128,
            out_dim: 64,
            activation: Activation::Relu,
        },
        LayerSpec {
            in_dim: 64,
            out_dim: 10,
            activation: Activation::Identity,
        },
    ];
    let net = Network::new(&specs, 7)?;
    println!("training 784x128x64x10 on {} digit images...", train_data.len());
    let net = train(
        net,
        &train_data,
        &TrainConfig {
            learning_rate: 0.1,
            epochs: 150,
            batch_size: 64,
            seed: 11,
        },
    )?;

    println!("train accuracy: {:.4}", accuracy(&net, &train_data)?);
    println!("test accuracy:  {:.4}", accuracy(&net, &test_data)?);

    let path = std::env::temp_dir().join("lidlab_digits_model.lidnn");
    net.save(&path)?;
    let reloaded = Network::load(&path)?;
    assert_eq!(accuracy(&reloaded, &test_data)?, accuracy(&net, &test_data)?);
    println!("weights saved to {}", path.display());
    Ok(())
}
