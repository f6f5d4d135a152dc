//! # lidlab
//!
//! A desk-scale laboratory for studying how adversarial examples sit in
//! their own neighborhoods: craft high-confidence adversarial inputs against
//! small dense networks, measure Local Intrinsic Dimensionality (LID) of
//! every layer's representation around each example, and test how well a
//! logistic-regression detector over those LID profiles separates
//! adversarial from clean and noisy data — including when the adversary
//! turns the confidence knob, when the detector trains on a confidence
//! ensemble, and when attacks are crafted on one model and transferred to
//! another.
//!
//! Everything is built from scratch on `f64` tensors: exact backpropagation,
//! two elastic-net-family attacks with binary search over the loss constant,
//! an exact k-NN LID estimator, and a fully deterministic experiment harness
//! where every random draw derives from one master seed.
//!
//! ## Module map
//!
//! ```text
//! src/
//! ├── tensor.rs     # flat f64 tensors, intervals, norms
//! ├── nn.rs         # dense relu networks: forward, backprop, SGD training
//! ├── data.rs       # IDX files, PGM dumps, procedural digits, blobs
//! ├── attack.rs     # margin loss, shrinkage, two attacks, c binary search
//! ├── lid.rs        # LID MLE, k-NN distances, feature extraction, noise
//! ├── detector.rs   # logistic detector, rank AUC, detection metrics
//! ├── seed.rs       # role-tagged seed derivation from one master seed
//! └── harness/      # configs, protocols (oblivious/ensemble/transfer), reports
//! ```
//!
//! ## Runnable examples
//!
//! One example per capability, smallest first:
//!
//! - **`ball_dimension`** — sanity-check the LID estimator on uniform balls
//! - **`train_model`** — train a digit classifier and save its weights
//! - **`craft_attacks`** — craft low- and high-confidence adversarial examples
//! - **`lid_features`** — per-layer LID profiles of clean/noisy/adversarial triples
//! - **`train_detector`** — fit and score the logistic detector by hand
//! - **`oblivious_protocol`** — the full per-confidence detection experiment
//! - **`ensemble_protocol`** — one detector across a confidence ensemble
//! - **`transfer_protocol`** — cross-model attack evaluation
//!
//! ```bash
//! cargo run --release --example ball_dimension
//! cargo run --release --example oblivious_protocol
//! ```
//!
//! The `lidlab` binary exposes the same pipeline as subcommands
//! (`train-model`, `attack`, `features`, `detect`, `oblivious`, `ensemble`,
//! `transfer`, `report`); see the README for CLI usage.

pub mod attack;
pub mod data;
pub mod detector;
pub mod error;
pub mod harness;
pub mod lid;
pub mod nn;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
