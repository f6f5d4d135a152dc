//! End-to-end experiment orchestration: the three evaluation protocols
//! (oblivious, ensemble, transfer) plus the stages they share.
//!
//! A protocol run is a pure function of its [`ExperimentConfig`]: datasets,
//! models, attack targets, reference batches, noise, and splits all derive
//! their randomness from the master seed via fixed roles (see the seed
//! module), so two runs with the same config produce byte-identical
//! artifacts. Confidence levels key every derived stream by *value*, which
//! makes per-level artifacts identical across runs that sweep different
//! level lists.
//!
//! Artifact layout under `out_dir`:
//!
//! ```text
//! models/    target.lidnn, source.lidnn, detector_*.csv
//! adv/       attack_<attack>_k<kappa>[_source].csv
//! features/  features_<attack>_k<kappa>[_transfer].csv
//! reports/   oblivious.csv | ensemble.csv | transfer.csv
//! images/    (clean/adversarial PGM dumps, written by the CLI)
//! ```

pub mod config;
pub mod report;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::attack::{run_attack, write_attack_csv, AdversarialResult, AttackKind, DecisionRule};
use crate::data::{
    load_idx, select_attack_targets, synthetic_blobs, synthetic_digits, LabeledDataset, Split,
    TargetSample, PIXEL_BOX,
};
use crate::detector::{self, train_detector, DetectorModel, DetectorTraining};
use crate::error::{Error, Result};
use crate::lid::{
    extract_features, make_noisy, write_features_csv, LidFeatureVector, LidQuery,
};
use crate::nn::{accuracy, train, Activation, LayerSpec, Network};
use crate::seed::{
    mix, ROLE_DATA_TEST, ROLE_DATA_TRAIN, ROLE_MODEL_SOURCE, ROLE_MODEL_TARGET, ROLE_NOISE,
    ROLE_NOISE_TRANSFER, ROLE_REF_BATCH, ROLE_REF_BATCH_TRANSFER, ROLE_SPLIT, ROLE_TARGETS,
    ROLE_TARGETS_SOURCE,
};
use crate::tensor::Tensor;
use config::{DatasetSpec, ExperimentConfig, ModelSpec, ReferenceSplit};
use report::{emit_report, Protocol, ReportRow};

fn log(msg: &str) {
    eprintln!("[harness] {msg}");
}

// ---------------------------------------------------------------------------
// Artifact paths
// ---------------------------------------------------------------------------

/// `adv/attack_<attack>_k<kappa>[_source].csv`
pub fn adv_csv_path(out_dir: &Path, attack: AttackKind, kappa: f64, source_side: bool) -> PathBuf {
    let suffix = if source_side { "_source" } else { "" };
    out_dir
        .join("adv")
        .join(format!("attack_{}_k{}{}.csv", attack.as_str(), kappa, suffix))
}

/// `features/features_<attack>_k<kappa>[_transfer].csv`
pub fn features_csv_path(
    out_dir: &Path,
    attack: AttackKind,
    kappa: f64,
    transfer_side: bool,
) -> PathBuf {
    let suffix = if transfer_side { "_transfer" } else { "" };
    out_dir
        .join("features")
        .join(format!("features_{}_k{}{}.csv", attack.as_str(), kappa, suffix))
}

/// `models/detector_<attack>_<rule>_k<kappa>.csv`
pub fn detector_path(out_dir: &Path, attack: AttackKind, rule: DecisionRule, kappa: f64) -> PathBuf {
    out_dir.join("models").join(format!(
        "detector_{}_{}_k{}.csv",
        attack.as_str(),
        rule.as_str(),
        kappa
    ))
}

/// `models/detector_ensemble_<attack>_<rule>.csv`
pub fn ensemble_detector_path(out_dir: &Path, attack: AttackKind, rule: DecisionRule) -> PathBuf {
    out_dir.join("models").join(format!(
        "detector_ensemble_{}_{}.csv",
        attack.as_str(),
        rule.as_str()
    ))
}

/// `models/<name>.lidnn`
pub fn model_path(out_dir: &Path, name: &str) -> PathBuf {
    out_dir.join("models").join(format!("{name}.lidnn"))
}

/// `reports/<protocol>.csv`
pub fn report_path(out_dir: &Path, protocol: Protocol) -> PathBuf {
    out_dir
        .join("reports")
        .join(format!("{}.csv", protocol.as_str()))
}

fn ensure_out_dirs(out_dir: &Path) -> Result<()> {
    for sub in ["models", "adv", "features", "reports", "images"] {
        std::fs::create_dir_all(out_dir.join(sub))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Preparation: datasets and models
// ---------------------------------------------------------------------------

/// Datasets plus the trained (or loaded) models an experiment runs against.
pub struct PreparedExperiment {
    pub train_data: LabeledDataset,
    pub test_data: LabeledDataset,
    pub target: Network,
    pub source: Option<Network>,
}

fn layer_specs_from_dims(dims: &[usize]) -> Vec<LayerSpec> {
    let n = dims.len() - 1;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec {
            in_dim: w[0],
            out_dim: w[1],
            activation: if i + 1 == n {
                Activation::Identity
            } else {
                Activation::Relu
            },
        })
        .collect()
}

fn load_datasets(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match &cfg.dataset {
        DatasetSpec::Digits { n_train, n_test } => Ok((
            synthetic_digits(*n_train, mix(cfg.seed, &[ROLE_DATA_TRAIN]), Split::Train),
            synthetic_digits(*n_test, mix(cfg.seed, &[ROLE_DATA_TEST]), Split::Test),
        )),
        DatasetSpec::Blobs {
            n_train,
            n_test,
            classes,
            dim,
            spread,
        } => {
            // One seed for both calls: blob centers are seed-derived, and
            // train/test must share the same geometry. The split argument
            // already separates the two noise streams.
            let blob_seed = mix(cfg.seed, &[ROLE_DATA_TRAIN]);
            Ok((
                synthetic_blobs(*n_train, *classes, *dim, *spread, blob_seed, Split::Train),
                synthetic_blobs(*n_test, *classes, *dim, *spread, blob_seed, Split::Test),
            ))
        }
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => Ok((
            load_idx(train_images, train_labels, Split::Train)?,
            load_idx(test_images, test_labels, Split::Test)?,
        )),
    }
}

fn build_model(
    spec: &ModelSpec,
    name: &str,
    role: u64,
    train_data: &LabeledDataset,
    cfg: &ExperimentConfig,
) -> Result<Network> {
    match spec {
        ModelSpec::Weights(path) => {
            log(&format!("loading {name} model from {}", path.display()));
            Network::load(path)
        }
        ModelSpec::Dims(dims) => {
            let started = Instant::now();
            let specs = layer_specs_from_dims(dims);
            let net = Network::new(&specs, mix(cfg.seed, &[role, 0]))?;
            let mut train_cfg = cfg.model_train;
            train_cfg.seed = mix(cfg.seed, &[role, 1]);
            let mut net = train(net, train_data, &train_cfg)?;
            net.scale_logits(cfg.logit_scale);
            log(&format!(
                "trained {name} model {dims:?} in {:.1}s",
                started.elapsed().as_secs_f64()
            ));
            Ok(net)
        }
    }
}

/// Load the datasets and build the target model (plus the source model when
/// `need_source`); freshly trained models are saved under `models/`.
pub fn prepare(cfg: &ExperimentConfig, need_source: bool) -> Result<PreparedExperiment> {
    ensure_out_dirs(&cfg.out_dir)?;
    let (train_data, test_data) = load_datasets(cfg)?;
    log(&format!(
        "dataset ready: {} train / {} test samples, {} classes",
        train_data.len(),
        test_data.len(),
        train_data.num_classes()
    ));

    let target = build_model(
        &cfg.target_model,
        "target",
        ROLE_MODEL_TARGET,
        &train_data,
        cfg,
    )?;
    target.save(&model_path(&cfg.out_dir, "target"))?;
    log(&format!(
        "target accuracy: train {:.4}, test {:.4}",
        accuracy(&target, &train_data)?,
        accuracy(&target, &test_data)?
    ));

    let source = if need_source {
        let net = build_model(
            &cfg.source_model,
            "source",
            ROLE_MODEL_SOURCE,
            &train_data,
            cfg,
        )?;
        net.save(&model_path(&cfg.out_dir, "source"))?;
        log(&format!(
            "source accuracy: train {:.4}, test {:.4}",
            accuracy(&net, &train_data)?,
            accuracy(&net, &test_data)?
        ));
        Some(net)
    } else {
        None
    };

    Ok(PreparedExperiment {
        train_data,
        test_data,
        target,
        source,
    })
}

// ---------------------------------------------------------------------------
// Shared stages
// ---------------------------------------------------------------------------

/// Attack every target in parallel (results in target order).
pub fn attack_targets(
    kind: AttackKind,
    net: &Network,
    targets: &[TargetSample],
    attack_cfg: &crate::attack::AttackConfig,
) -> Result<Vec<(usize, AdversarialResult)>> {
    targets
        .par_iter()
        .map(|t| run_attack(kind, net, &t.x, t.label, attack_cfg).map(|r| (t.id, r)))
        .collect()
}

/// Per-layer LID features of one attacked sample's clean/noisy/adversarial
/// triple. A slot is `None` when that query hit a degenerate neighborhood.
#[derive(Debug, Clone)]
pub struct SampleFeatures {
    pub sample_id: usize,
    pub clean: Option<Vec<f64>>,
    pub noisy: Option<Vec<f64>>,
    pub adv: Option<Vec<f64>>,
}

struct SuccessItem<'a> {
    id: usize,
    clean: &'a Tensor,
    adv: &'a Tensor,
    l2: f64,
}

/// Featurize attacked samples in chunks of `lid.batch_size`, one reference
/// minibatch per chunk. Returns per-sample features (item order) and the
/// count of dropped (degenerate) queries.
fn featurize(
    net: &Network,
    items: &[SuccessItem],
    pool: &LabeledDataset,
    cfg: &ExperimentConfig,
    kappa: f64,
    ref_role: u64,
    noise_role: u64,
) -> Result<(Vec<SampleFeatures>, usize)> {
    let batch_size = cfg.lid.batch_size;
    let mut out = Vec::with_capacity(items.len());
    let mut dropped = 0usize;

    for (chunk_idx, chunk) in items.chunks(batch_size).enumerate() {
        let ref_seed = mix(cfg.seed, &[ref_role, kappa.to_bits(), chunk_idx as u64]);
        let pool_draw = |n: usize| -> Result<Vec<Tensor>> {
            if pool.len() < n {
                return Err(Error::TooFewReferences {
                    needed: n,
                    have: pool.len(),
                });
            }
            let mut rng = ChaCha20Rng::seed_from_u64(ref_seed);
            let mut indices: Vec<usize> = (0..pool.len()).collect();
            indices.shuffle(&mut rng);
            Ok(indices
                .into_iter()
                .take(n)
                .map(|i| pool.samples[i].clone())
                .collect())
        };

        // Build this chunk's reference batch and each query's counterpart.
        let (reference, counterpart_of): (Vec<Tensor>, Vec<Option<usize>>) =
            match cfg.reference_split {
                ReferenceSplit::Train => {
                    (pool_draw(batch_size)?, vec![None; chunk.len()])
                }
                ReferenceSplit::TestSelf => {
                    let mut batch: Vec<Tensor> =
                        chunk.iter().map(|it| it.clean.clone()).collect();
                    let pad = batch_size - batch.len();
                    if pad > 0 {
                        batch.extend(pool_draw(pad)?);
                    }
                    let counterparts = (0..chunk.len()).map(Some).collect();
                    (batch, counterparts)
                }
            };

        let mut queries = Vec::with_capacity(chunk.len() * 3);
        for (j, item) in chunk.iter().enumerate() {
            if !(item.l2 > 0.0 && item.l2.is_finite()) {
                return Err(Error::Config(format!(
                    "sample {} succeeded with non-positive distortion {}; \
                     cannot scale its noisy twin",
                    item.id, item.l2
                )));
            }
            let noisy = make_noisy(
                item.clean,
                item.l2,
                PIXEL_BOX,
                mix(cfg.seed, &[noise_role, kappa.to_bits(), item.id as u64]),
            );
            let counterpart = counterpart_of[j];
            queries.push(LidQuery {
                x: item.clean.clone(),
                kind: crate::lid::ExampleKind::Clean,
                counterpart,
            });
            queries.push(LidQuery {
                x: noisy,
                kind: crate::lid::ExampleKind::Noisy,
                counterpart,
            });
            queries.push(LidQuery {
                x: item.adv.clone(),
                kind: crate::lid::ExampleKind::Adversarial,
                counterpart,
            });
        }

        let extraction = extract_features(net, &reference, &queries, &cfg.lid)?;
        dropped += extraction.dropped;
        let values = |f: &Option<LidFeatureVector>| f.as_ref().map(|v| v.values.clone());
        for (j, item) in chunk.iter().enumerate() {
            out.push(SampleFeatures {
                sample_id: item.id,
                clean: values(&extraction.features[3 * j]),
                noisy: values(&extraction.features[3 * j + 1]),
                adv: values(&extraction.features[3 * j + 2]),
            });
        }
    }
    Ok((out, dropped))
}

/// Deterministic 70/30 split of sample ids (seeded shuffle, then floor(0.7n)
/// into train). Both halves are returned sorted; they are disjoint by
/// construction.
pub fn split_ids(ids: &[usize], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled: Vec<usize> = ids.to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let n_train = shuffled.len() * 7 / 10;
    let mut train: Vec<usize> = shuffled[..n_train].to_vec();
    let mut test: Vec<usize> = shuffled[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Everything one confidence level produces on the attacked model: attack
/// results, per-sample LID features of the successes, and the detector
/// train/test split of their ids.
pub struct KappaRun {
    pub kappa: f64,
    pub attack_rows: Vec<(usize, AdversarialResult)>,
    pub n_success: usize,
    pub samples: Vec<SampleFeatures>,
    pub dropped: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

/// Run one confidence level end-to-end on one model: attack all targets,
/// featurize the successes against reference batches from `pool`, and split
/// the successes 70/30 for detector training/evaluation.
pub fn run_kappa(
    net: &Network,
    targets: &[TargetSample],
    pool: &LabeledDataset,
    cfg: &ExperimentConfig,
    kappa: f64,
) -> Result<KappaRun> {
    let started = Instant::now();
    let attack_cfg = cfg.attack_config(kappa);
    attack_cfg.validate()?;
    let attack_rows = attack_targets(cfg.attack, net, targets, &attack_cfg)?;

    let items: Vec<SuccessItem> = targets
        .iter()
        .zip(&attack_rows)
        .filter(|(_, (_, r))| r.success)
        .map(|(t, (_, r))| SuccessItem {
            id: t.id,
            clean: &t.x,
            adv: &r.adversarial,
            l2: r.l2,
        })
        .collect();
    let n_success = items.len();
    log(&format!(
        "kappa {kappa}: {n_success}/{} attacks succeeded in {:.1}s",
        targets.len(),
        started.elapsed().as_secs_f64()
    ));

    let (samples, dropped) = featurize(net, &items, pool, cfg, kappa, ROLE_REF_BATCH, ROLE_NOISE)?;
    if dropped > 0 {
        log(&format!(
            "kappa {kappa}: dropped {dropped} degenerate feature queries"
        ));
    }

    let ids: Vec<usize> = items.iter().map(|it| it.id).collect();
    let (train_ids, test_ids) = split_ids(&ids, mix(cfg.seed, &[ROLE_SPLIT, kappa.to_bits()]));

    Ok(KappaRun {
        kappa,
        attack_rows,
        n_success,
        samples,
        dropped,
        train_ids,
        test_ids,
    })
}

/// Adversarial (positive) and clean+noisy (negative) feature rows of the
/// samples whose id is in `ids`.
fn gather(run: &KappaRun, ids: &HashSet<usize>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in &run.samples {
        if !ids.contains(&s.sample_id) {
            continue;
        }
        if let Some(f) = &s.adv {
            pos.push(f.clone());
        }
        if let Some(f) = &s.clean {
            neg.push(f.clone());
        }
        if let Some(f) = &s.noisy {
            neg.push(f.clone());
        }
    }
    (pos, neg)
}

/// Write one level's attack CSV and features CSV under `out_dir`.
pub fn write_kappa_artifacts(run: &KappaRun, cfg: &ExperimentConfig) -> Result<()> {
    write_attack_csv(
        &adv_csv_path(&cfg.out_dir, cfg.attack, run.kappa, false),
        cfg.attack,
        &cfg.attack_config(run.kappa),
        &run.attack_rows,
    )?;
    let mut rows: Vec<(usize, &LidFeatureVector)> = Vec::new();
    let feature_rows = collect_feature_rows(&run.samples);
    for (id, f) in &feature_rows {
        rows.push((*id, f));
    }
    write_features_csv(
        &features_csv_path(&cfg.out_dir, cfg.attack, run.kappa, false),
        &rows,
    )?;
    Ok(())
}

/// Flatten per-sample features into (id, vector) rows: clean, noisy, then
/// adversarial per sample, samples in order.
fn collect_feature_rows(samples: &[SampleFeatures]) -> Vec<(usize, LidFeatureVector)> {
    use crate::lid::ExampleKind;
    let mut rows = Vec::new();
    for s in samples {
        for (kind, values) in [
            (ExampleKind::Clean, &s.clean),
            (ExampleKind::Noisy, &s.noisy),
            (ExampleKind::Adversarial, &s.adv),
        ] {
            if let Some(v) = values {
                rows.push((
                    s.sample_id,
                    LidFeatureVector {
                        values: v.clone(),
                        kind,
                    },
                ));
            }
        }
    }
    rows
}

fn zero_row(cfg: &ExperimentConfig, protocol: Protocol, kappa: f64, dropped: usize) -> ReportRow {
    let transfer = protocol == Protocol::Transfer;
    ReportRow {
        protocol,
        attack: cfg.attack,
        rule: cfg.decision_rule,
        kappa,
        auc: 0.0,
        detection_rate: 0.0,
        post_detection_classification_rate: transfer.then_some(0.0),
        classification_rate_wo_detection: transfer.then_some(0.0),
        n: 0,
        dropped_degenerate: dropped,
    }
}

fn scores_of(model: &DetectorModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter().map(|r| model.score(r)).collect()
}

/// Train the per-level detector on the run's train split and evaluate it on
/// the test split. Returns the row and (when trainable) the detector.
fn detector_row(
    run: &KappaRun,
    cfg: &ExperimentConfig,
    protocol: Protocol,
) -> Result<(ReportRow, Option<DetectorTraining>)> {
    let train_set: HashSet<usize> = run.train_ids.iter().copied().collect();
    let test_set: HashSet<usize> = run.test_ids.iter().copied().collect();
    let (pos_train, neg_train) = gather(run, &train_set);
    let (pos_test, neg_test) = gather(run, &test_set);

    if pos_train.is_empty() || neg_train.is_empty() || pos_test.is_empty() || neg_test.is_empty() {
        log(&format!(
            "kappa {}: too few usable features to train/evaluate a detector \
             (train {}+/{}-, test {}+/{}-); emitting a zero row",
            run.kappa,
            pos_train.len(),
            neg_train.len(),
            pos_test.len(),
            neg_test.len()
        ));
        return Ok((zero_row(cfg, protocol, run.kappa, run.dropped), None));
    }

    let training = train_detector(&pos_train, &neg_train, &cfg.detector)?;
    if !training.floored_features.is_empty() {
        log(&format!(
            "kappa {}: detector features {:?} had zero variance (std floored)",
            run.kappa, training.floored_features
        ));
    }
    let row = evaluate_detector(&training.model, run, cfg, protocol, &pos_test, &neg_test)?;
    Ok((row, Some(training)))
}

/// Score a detector (however it was trained) on one run's test split.
fn evaluate_detector(
    model: &DetectorModel,
    run: &KappaRun,
    cfg: &ExperimentConfig,
    protocol: Protocol,
    pos_test: &[Vec<f64>],
    neg_test: &[Vec<f64>],
) -> Result<ReportRow> {
    let pos_scores = scores_of(model, pos_test)?;
    let neg_scores = scores_of(model, neg_test)?;
    let auc = detector::auc(&pos_scores, &neg_scores)?;
    let dr = detector::detection_rate(model, pos_test)?;
    let tpr = detector::tpr_at_fpr(&pos_scores, &neg_scores, 0.05)?;
    log(&format!(
        "{} kappa {}: auc {:.4}, detection rate {:.4}, tpr@5%fpr {:.4} \
         ({} positives, {} negatives)",
        protocol.as_str(),
        run.kappa,
        auc,
        dr,
        tpr,
        pos_scores.len(),
        neg_scores.len()
    ));
    Ok(ReportRow {
        protocol,
        attack: cfg.attack,
        rule: cfg.decision_rule,
        kappa: run.kappa,
        auc,
        detection_rate: dr,
        post_detection_classification_rate: None,
        classification_rate_wo_detection: None,
        n: pos_test.len(),
        dropped_degenerate: run.dropped,
    })
}

fn emit_and_log(rows: Vec<ReportRow>, cfg: &ExperimentConfig, protocol: Protocol) -> Result<Vec<ReportRow>> {
    let path = report_path(&cfg.out_dir, protocol);
    emit_report(&rows, &path)?;
    log(&format!("report written to {}", path.display()));
    Ok(rows)
}

fn validated(cfg: &ExperimentConfig) -> Result<()> {
    for w in cfg.validate()? {
        log(&format!("warning: {w}"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

/// Oblivious protocol: the adversary ignores the detector. For each
/// confidence level — attack, featurize, split 70/30, train a detector on
/// the train split at that same attack and level, report AUC and detection
/// rate on the test split.
pub fn run_oblivious(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    validated(cfg)?;
    let prep = prepare(cfg, false)?;
    let targets = select_attack_targets(
        &prep.target,
        &prep.test_data,
        cfg.n_targets,
        mix(cfg.seed, &[ROLE_TARGETS]),
    )?;
    let mut rows = Vec::new();
    for &kappa in &cfg.kappa_list {
        let run = run_kappa(&prep.target, &targets, &prep.train_data, cfg, kappa)?;
        write_kappa_artifacts(&run, cfg)?;
        let (row, training) = detector_row(&run, cfg, Protocol::Oblivious)?;
        if let Some(t) = training {
            t.model
                .save(&detector_path(&cfg.out_dir, cfg.attack, cfg.decision_rule, kappa))?;
        }
        rows.push(row);
    }
    emit_and_log(rows, cfg, Protocol::Oblivious)
}

/// Ensemble protocol: one detector trained on the union of every level's
/// train-split features (each level contributes its positives and its own
/// clean+noisy negatives, keeping class balance), evaluated separately on
/// each level's test split.
pub fn run_ensemble(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    if cfg.kappa_list.len() < 2 {
        return Err(Error::Config(format!(
            "ensemble protocol needs at least 2 confidence levels, got {:?}",
            cfg.kappa_list
        )));
    }
    validated(cfg)?;
    let prep = prepare(cfg, false)?;
    let targets = select_attack_targets(
        &prep.target,
        &prep.test_data,
        cfg.n_targets,
        mix(cfg.seed, &[ROLE_TARGETS]),
    )?;

    let mut runs = Vec::new();
    for &kappa in &cfg.kappa_list {
        let run = run_kappa(&prep.target, &targets, &prep.train_data, cfg, kappa)?;
        write_kappa_artifacts(&run, cfg)?;
        runs.push(run);
    }

    let mut pos_train = Vec::new();
    let mut neg_train = Vec::new();
    for run in &runs {
        let train_set: HashSet<usize> = run.train_ids.iter().copied().collect();
        let (pos, neg) = gather(run, &train_set);
        pos_train.extend(pos);
        neg_train.extend(neg);
    }

    let pooled = if pos_train.is_empty() || neg_train.is_empty() {
        log("no usable pooled training features; emitting zero rows");
        None
    } else {
        let training = train_detector(&pos_train, &neg_train, &cfg.detector)?;
        if !training.floored_features.is_empty() {
            log(&format!(
                "ensemble: detector features {:?} had zero variance (std floored)",
                training.floored_features
            ));
        }
        training
            .model
            .save(&ensemble_detector_path(&cfg.out_dir, cfg.attack, cfg.decision_rule))?;
        Some(training)
    };

    let mut rows = Vec::new();
    for run in &runs {
        let test_set: HashSet<usize> = run.test_ids.iter().copied().collect();
        let (pos_test, neg_test) = gather(run, &test_set);
        let row = match (&pooled, pos_test.is_empty() || neg_test.is_empty()) {
            (Some(training), false) => evaluate_detector(
                &training.model,
                run,
                cfg,
                Protocol::Ensemble,
                &pos_test,
                &neg_test,
            )?,
            _ => {
                log(&format!(
                    "ensemble kappa {}: no evaluable test features; emitting a zero row",
                    run.kappa
                ));
                zero_row(cfg, Protocol::Ensemble, run.kappa, run.dropped)
            }
        };
        rows.push(row);
    }
    emit_and_log(rows, cfg, Protocol::Ensemble)
}

/// Transfer protocol: craft on the source model, evaluate on the target
/// model whose detector was trained exactly as in the oblivious protocol
/// (same attack and level, target-crafted examples). Rates are joint counts
/// over the N source-successful examples.
pub fn run_transfer(cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    if cfg.source_model == cfg.target_model {
        return Err(Error::Config(
            "transfer protocol needs distinct source and target models \
             (set source_model / target_model)"
                .into(),
        ));
    }
    validated(cfg)?;
    let prep = prepare(cfg, true)?;
    let source = prep.source.as_ref().expect("prepare(cfg, true) builds a source model");

    let targets_t = select_attack_targets(
        &prep.target,
        &prep.test_data,
        cfg.n_targets,
        mix(cfg.seed, &[ROLE_TARGETS]),
    )?;
    let targets_s = select_attack_targets(
        source,
        &prep.test_data,
        cfg.n_targets,
        mix(cfg.seed, &[ROLE_TARGETS_SOURCE]),
    )?;

    let mut rows = Vec::new();
    for &kappa in &cfg.kappa_list {
        // Target-side detector, trained exactly as in the oblivious run.
        let run_t = run_kappa(&prep.target, &targets_t, &prep.train_data, cfg, kappa)?;
        write_kappa_artifacts(&run_t, cfg)?;
        let (_, training) = detector_row(&run_t, cfg, Protocol::Oblivious)?;

        // Source-side crafting.
        let attack_cfg = cfg.attack_config(kappa);
        let attack_rows = attack_targets(cfg.attack, source, &targets_s, &attack_cfg)?;
        write_attack_csv(
            &adv_csv_path(&cfg.out_dir, cfg.attack, kappa, true),
            cfg.attack,
            &attack_cfg,
            &attack_rows,
        )?;
        let transferred: Vec<(&TargetSample, &AdversarialResult)> = targets_s
            .iter()
            .zip(&attack_rows)
            .filter(|(_, (_, r))| r.success)
            .map(|(t, (_, r))| (t, r))
            .collect();
        let n = transferred.len();
        log(&format!(
            "transfer kappa {kappa}: {n}/{} source attacks succeeded",
            targets_s.len()
        ));

        let training = match (training, n) {
            (Some(t), n) if n > 0 => t,
            (training, _) => {
                if training.is_none() {
                    log(&format!(
                        "transfer kappa {kappa}: no target-side detector; emitting a zero row"
                    ));
                } else {
                    log(&format!(
                        "transfer kappa {kappa}: zero source-successful examples; \
                         emitting a zero row"
                    ));
                }
                rows.push(zero_row(cfg, Protocol::Transfer, kappa, run_t.dropped));
                continue;
            }
        };
        training.model.save(&detector_path(
            &cfg.out_dir,
            cfg.attack,
            cfg.decision_rule,
            kappa,
        ))?;
        let model = &training.model;

        // Featurize the transferred examples on the target model.
        let items: Vec<SuccessItem> = transferred
            .iter()
            .map(|(t, r)| SuccessItem {
                id: t.id,
                clean: &t.x,
                adv: &r.adversarial,
                l2: r.l2,
            })
            .collect();
        let (samples, dropped_transfer) = featurize(
            &prep.target,
            &items,
            &prep.train_data,
            cfg,
            kappa,
            ROLE_REF_BATCH_TRANSFER,
            ROLE_NOISE_TRANSFER,
        )?;
        let feature_rows = collect_feature_rows(&samples);
        let rows_ref: Vec<(usize, &LidFeatureVector)> =
            feature_rows.iter().map(|(id, f)| (*id, f)).collect();
        write_features_csv(
            &features_csv_path(&cfg.out_dir, cfg.attack, kappa, true),
            &rows_ref,
        )?;

        // Joint counts over the N transferred examples.
        let mut detected_count = 0usize;
        let mut correct_count = 0usize;
        let mut undetected_and_correct = 0usize;
        let mut adv_feature_rows: Vec<Vec<f64>> = Vec::new();
        for ((t, r), s) in transferred.iter().zip(&samples) {
            let detected = match &s.adv {
                Some(f) => {
                    adv_feature_rows.push(f.clone());
                    model.detects(f)?
                }
                // An unfeaturizable example cannot be flagged by the
                // detector; it counts as undetected.
                None => false,
            };
            let correct = prep.target.predict(&r.adversarial)? == t.label;
            if detected {
                detected_count += 1;
            }
            if correct {
                correct_count += 1;
            }
            if !detected && correct {
                undetected_and_correct += 1;
            }
        }

        // AUC of the transferred positives against the target-side test
        // split's clean+noisy negatives (unseen by the detector).
        let test_set: HashSet<usize> = run_t.test_ids.iter().copied().collect();
        let (_, neg_test) = gather(&run_t, &test_set);
        let auc = if adv_feature_rows.is_empty() || neg_test.is_empty() {
            log(&format!(
                "transfer kappa {kappa}: no scoreable positives/negatives for AUC; reporting 0"
            ));
            0.0
        } else {
            detector::auc(
                &scores_of(model, &adv_feature_rows)?,
                &scores_of(model, &neg_test)?,
            )?
        };

        let nf = n as f64;
        let row = ReportRow {
            protocol: Protocol::Transfer,
            attack: cfg.attack,
            rule: cfg.decision_rule,
            kappa,
            auc,
            detection_rate: detected_count as f64 / nf,
            post_detection_classification_rate: Some(undetected_and_correct as f64 / nf),
            classification_rate_wo_detection: Some(correct_count as f64 / nf),
            n,
            dropped_degenerate: run_t.dropped + dropped_transfer,
        };
        log(&format!(
            "transfer kappa {kappa}: detected {:.4}, correct {:.4}, undetected&correct {:.4}",
            row.detection_rate,
            row.classification_rate_wo_detection.unwrap(),
            row.post_detection_classification_rate.unwrap()
        ));
        rows.push(row);
    }
    emit_and_log(rows, cfg, Protocol::Transfer)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_blob_cfg(out_dir: PathBuf) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.set("dataset", "blobs").unwrap();
        cfg.set("n_train", "150").unwrap();
        cfg.set("n_test", "90").unwrap();
        cfg.set("blob_dim", "8").unwrap();
        cfg.set("blob_classes", "3").unwrap();
        cfg.set("blob_spread", "0.06").unwrap();
        cfg.set("target_model", "8x16x3").unwrap();
        cfg.set("source_model", "8x24x12x3").unwrap();
        cfg.set("model_epochs", "40").unwrap();
        cfg.set("logit_scale", "1").unwrap();
        cfg.set("n_targets", "12").unwrap();
        cfg.set("attack_iterations", "60").unwrap();
        cfg.set("attack_search_steps", "4").unwrap();
        cfg.set("k", "5").unwrap();
        cfg.set("batch_size", "12").unwrap();
        cfg.set("detector_epochs", "200").unwrap();
        cfg.out_dir = out_dir;
        cfg
    }

    #[test]
    fn split_ids_is_disjoint_proportional_and_deterministic() {
        let ids: Vec<usize> = (0..200).map(|i| i * 3).collect();
        let (train, test) = split_ids(&ids, 99);
        assert_eq!(train.len(), 140);
        assert_eq!(test.len(), 60);
        let train_set: HashSet<_> = train.iter().collect();
        assert!(test.iter().all(|id| !train_set.contains(id)));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, ids);
        assert!(train.windows(2).all(|w| w[0] < w[1]), "sorted output");

        let again = split_ids(&ids, 99);
        assert_eq!(again.0, train);
        assert_eq!(again.1, test);
        let other_seed = split_ids(&ids, 100);
        assert_ne!(other_seed.0, train, "different seed, different split");
    }

    #[test]
    fn split_ids_tiny_inputs() {
        assert_eq!(split_ids(&[], 1), (vec![], vec![]));
        let (train, test) = split_ids(&[7], 1);
        assert!(train.is_empty());
        assert_eq!(test, vec![7]);
    }

    #[test]
    fn ensemble_requires_two_levels_before_any_work() {
        let cfg = ExperimentConfig::default(); // kappa_list = [0]
        let err = run_ensemble(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("at least 2")), "{err}");
    }

    #[test]
    fn transfer_requires_distinct_models_before_any_work() {
        let mut cfg = ExperimentConfig::default();
        cfg.source_model = cfg.target_model.clone();
        let err = run_transfer(&cfg).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("distinct")), "{err}");
    }

    #[test]
    fn oblivious_blob_run_is_deterministic_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_blob_cfg(dir.path().join("a"));
        let rows1 = run_oblivious(&cfg).unwrap();
        let report1 = std::fs::read(report_path(&cfg.out_dir, Protocol::Oblivious)).unwrap();

        let cfg2 = tiny_blob_cfg(dir.path().join("b"));
        let rows2 = run_oblivious(&cfg2).unwrap();
        let report2 = std::fs::read(report_path(&cfg2.out_dir, Protocol::Oblivious)).unwrap();

        assert_eq!(rows1, rows2, "same seed, same rows");
        assert_eq!(report1, report2, "byte-identical reports");

        for p in [
            adv_csv_path(&cfg.out_dir, cfg.attack, 0.0, false),
            features_csv_path(&cfg.out_dir, cfg.attack, 0.0, false),
            model_path(&cfg.out_dir, "target"),
        ] {
            assert!(p.exists(), "missing artifact {}", p.display());
        }
        assert_eq!(rows1.len(), 1);
        assert_eq!(rows1[0].protocol, Protocol::Oblivious);
        assert!(rows1[0].n <= 12);
    }

    #[test]
    fn unwinnable_attack_yields_flagged_zero_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_blob_cfg(dir.path().to_path_buf());
        // One iteration at a microscopic loss constant with an enormous
        // confidence requirement: no attack can succeed.
        cfg.set("kappa", "1000000").unwrap();
        cfg.set("attack_iterations", "1").unwrap();
        cfg.set("attack_search_steps", "1").unwrap();
        cfg.set("attack_c_max", "0.001").unwrap();
        let rows = run_oblivious(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].n, 0);
        assert_eq!(rows[0].auc, 0.0);
        assert_eq!(rows[0].detection_rate, 0.0);
    }

    #[test]
    fn transfer_rows_satisfy_joint_count_inequalities() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_blob_cfg(dir.path().to_path_buf());
        let rows = run_transfer(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.protocol, Protocol::Transfer);
        let post = row.post_detection_classification_rate.unwrap();
        let wo = row.classification_rate_wo_detection.unwrap();
        assert!(post <= wo + 1e-12);
        assert!(post <= 1.0 - row.detection_rate + 1e-12);
    }
}
