//! One detector across a whole confidence ensemble.
//!
//! Instead of training a separate detector per confidence level, the
//! ensemble protocol pools the adversarial training features of *all*
//! levels into one model, then evaluates that single detector at each level
//! separately. Pooling sounds strictly better but typically is not: the
//! mixed positives blur the decision boundary that any single level enjoys.
//! Compare the kappa = 0 row here against the same row from
//! `oblivious_protocol` (same seed, same data).
//!
//!     cargo run --release --example ensemble_protocol

use lidlab::harness::config::ExperimentConfig;
use lidlab::harness::report::format_report;
use lidlab::harness::run_ensemble;

fn main() -> lidlab::Result<()> {
    let out_dir = std::env::temp_dir().join("lidlab_ensemble_demo");

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
    cfg.set("kappa", "0,4,8")?;
    cfg.set("n_targets", "60")?;
    cfg.set("k", "15")?;
    cfg.set("batch_size", "80")?;
    cfg.set("seed", "42")?;
    cfg.out_dir = out_dir.clone();

    let rows = run_ensemble(&cfg)?;
    println!("\n{}", format_report(&rows)?);
    println!("artifacts under {}", out_dir.display());
    Ok(())
}
