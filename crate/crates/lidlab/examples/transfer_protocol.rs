//! Cross-model attack evaluation: craft on one model, defend another.
//!
//! Adversarial examples are crafted against a *source* model, then replayed
//! against a differently shaped *target* model and its detector. Three
//! quantities are reported per confidence level, all joint counts over the
//! transferred examples: how many the target's detector flags, how many the
//! target still classifies correctly with no detector, and how many both
//! evade the detector *and* are classified correctly. Raising the crafting
//! confidence makes examples transfer better — watch the
//! classification-rate-without-detection column fall.
//!
//!     cargo run --release --example transfer_protocol

use lidlab::harness::config::ExperimentConfig;
use lidlab::harness::report::format_report;
use lidlab::harness::run_transfer;

fn main() -> lidlab::Result<()> {
    let out_dir = std::env::temp_dir().join("lidlab_transfer_demo");

    let mut cfg = ExperimentConfig::default();
    cfg.set("dataset", "blobs")?;
    cfg.set("n_train", "400")?;
    cfg.set("n_test", "200")?;
    cfg.set("blob_classes", "4")?;
    cfg.set("blob_dim", "16")?;
    cfg.set("blob_spread", "0.08")?;
    cfg.set("target_model", "16x24x4")?;
    cfg.set("source_model", "16x32x16x4")?;
    cfg.set("model_epochs", "80")?;
    cfg.set("logit_scale", "4")?;
    cfg.set("attack", "cw")?;
    cfg.set("kappa", "0,4,8")?;
    cfg.set("n_targets", "60")?;
    cfg.set("k", "15")?;
    cfg.set("batch_size", "80")?;
    cfg.set("seed", "42")?;
    cfg.out_dir = out_dir.clone();

    let rows = run_transfer(&cfg)?;
    println!("\n{}", format_report(&rows)?);
    println!("artifacts under {}", out_dir.display());
    Ok(())
}
