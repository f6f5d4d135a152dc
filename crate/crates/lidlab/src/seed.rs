//! Deterministic seed derivation for the experiment harness.
//!
//! Every random draw in an experiment (dataset synthesis, weight init,
//! minibatch shuffles, target selection, reference-batch draws, noise,
//! train/test splits) is keyed by a seed derived from the single master seed
//! plus a *role* tag and the identifying values of the consumer — e.g. the
//! confidence level's bit pattern and a sample id.
//!
//! Two properties matter:
//!
//! 1. **Stream independence.** Distinct roles give unrelated streams, so
//!    adding a consumer never perturbs another consumer's randomness.
//! 2. **Value keying.** A confidence level enters by its *value* (`f64` bit
//!    pattern), never by its position in the sweep list. Sweeping `[0]` and
//!    sweeping `[0, 10, 20]` therefore produce bit-identical artifacts for
//!    the shared level 0 — which is what makes single-level and pooled runs
//!    directly comparable.
//!
//! Mixing is a chain of splitmix64 finalizers, a cheap permutation with full
//! avalanche; each input word is diffused before being folded in, so nearby
//! ids map to unrelated seeds.

/// Dataset synthesis / loading, training split.
pub const ROLE_DATA_TRAIN: u64 = 0x01;
/// Dataset synthesis / loading, test split.
pub const ROLE_DATA_TEST: u64 = 0x02;
/// Weight init and minibatch shuffling of the target (attacked) model.
pub const ROLE_MODEL_TARGET: u64 = 0x03;
/// Weight init and minibatch shuffling of the source (crafting) model.
pub const ROLE_MODEL_SOURCE: u64 = 0x04;
/// Selection of correctly classified attack targets on the target model.
pub const ROLE_TARGETS: u64 = 0x05;
/// Selection of attack targets on the source model (transfer protocol).
pub const ROLE_TARGETS_SOURCE: u64 = 0x06;
/// Reference minibatch draw for feature extraction; mixed with the
/// confidence bits and the chunk index.
pub const ROLE_REF_BATCH: u64 = 0x07;
/// Reference minibatch draw for transfer-side feature extraction.
pub const ROLE_REF_BATCH_TRANSFER: u64 = 0x08;
/// Noisy-example generation; mixed with the confidence bits and sample id.
pub const ROLE_NOISE: u64 = 0x09;
/// Noisy-example generation for transfer-side features.
pub const ROLE_NOISE_TRANSFER: u64 = 0x0A;
/// Train/test split of featurized samples; mixed with the confidence bits.
pub const ROLE_SPLIT: u64 = 0x0B;

/// The splitmix64 finalizer: a fixed 64-bit permutation with good avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a stream seed from the master seed and a list of identifying
/// words (role tag first by convention, then e.g. confidence bits, ids).
pub fn mix(master: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(master ^ 0x6C62_8031_F8D4_A5B3);
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}
