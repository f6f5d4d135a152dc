//! The full per-confidence detection experiment, end to end.
//!
//! For each confidence level the harness crafts attacks against the target
//! model, builds LID features for matched clean/noisy/adversarial triples,
//! trains a detector on the train split, and scores the held-out split. The
//! attacker here is oblivious: examples are crafted against the bare model
//! with no knowledge that a detector exists.
//!
//! Runs on Gaussian blobs to stay quick; switch `dataset` to `digits` for
//! the image-scale version (a couple of minutes).
//!
//!     cargo run --release --example oblivious_protocol

use lidlab::harness::config::ExperimentConfig;
use lidlab::harness::report::format_report;
use lidlab::harness::run_oblivious;

fn main() -> lidlab::Result<()> {
    let out_dir = std::env::temp_dir().join("lidlab_oblivious_demo");

    let mut cfg = ExperimentConfig::default();
    cfg.set("dataset", "blobs")?;
    cfg.set("n_train", "400")?;
    cfg.set("n_test", "200")?;
    cfg.set("blob_classes", "4")?;
    cfg.set("blob_dim", "16")?;
    cfg.set("blob_spread", "0.08")?;
    cfg.set("target_model", "16x24x4")?;
    cfg.set("model_epochs", "80")?;
    cfg.set("logit_scale", "4")?;
    cfg.set("attack", "cw")?;
    cfg.set("kappa", "0,8")?;
    cfg.set("n_targets", "60")?;
    cfg.set("k", "15")?;
    cfg.set("batch_size", "80")?;
    cfg.set("seed", "42")?;
    cfg.out_dir = out_dir.clone();

    let rows = run_oblivious(&cfg)?;
    println!("\n{}", format_report(&rows)?);
    println!("artifacts under {}", out_dir.display());
    Ok(())
}
