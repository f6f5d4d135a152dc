//! Thin CLI over the lidlab library: every subcommand maps onto one harness
//! stage or protocol. Exit codes: 0 success, 1 configuration error, 2
//! runtime failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use lidlab::data::{dump_image, select_attack_targets};
use lidlab::detector::{self, train_detector};
use lidlab::error::{Error, Result};
use lidlab::harness::{self, config::ExperimentConfig, report::Protocol, report_path};
use lidlab::lid::{read_features_csv, ExampleKind};
use lidlab::seed::{mix, ROLE_SPLIT, ROLE_TARGETS};

#[derive(Parser)]
#[command(
    name = "lidlab",
    version,
    about = "Adversarial-example crafting and LID-based detection experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of key=value lines (# starts a comment)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for every random draw
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (models/, adv/, features/, reports/, images/)
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    /// Attack to craft with
    #[arg(long, global = true, value_parser = ["cw", "ead"])]
    attack: Option<String>,

    /// Candidate-selection rule for the elastic-net attack
    #[arg(long, global = true, value_parser = ["en", "l1"])]
    rule: Option<String>,

    /// Comma-separated confidence levels, e.g. 0,10,20
    #[arg(long, global = true, value_name = "LIST")]
    kappa: Option<String>,

    /// L1 coefficient of the elastic-net attack
    #[arg(long, global = true)]
    beta: Option<f64>,

    /// Neighbor count for LID estimation
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Reference minibatch size for LID estimation
    #[arg(long, global = true)]
    batch_size: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the target model and save it under models/
    TrainModel,
    /// Craft adversarial examples; write adv/ CSVs and a few image pairs
    Attack,
    /// Craft attacks and extract LID features to features/ CSVs
    Features,
    /// Train and evaluate a detector from an existing features CSV
    Detect {
        /// A features CSV produced by the features subcommand
        features: PathBuf,
    },
    /// Per-confidence detection experiment (detector knows the attack)
    Oblivious,
    /// One detector trained across all confidence levels, evaluated per level
    Ensemble,
    /// Craft on the source model, detect and classify on the target model
    Transfer,
    /// Print the report tables found under out-dir
    Report,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration errors (exit 1); help and
            // version displays are successes.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read config {}: {io}", path.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(attack) = &cli.attack {
        cfg.set("attack", attack)?;
    }
    if let Some(rule) = &cli.rule {
        cfg.set("rule", rule)?;
    }
    if let Some(kappa) = &cli.kappa {
        cfg.set("kappa", kappa)?;
    }
    if let Some(beta) = cli.beta {
        cfg.set("beta", &beta.to_string())?;
    }
    if let Some(k) = cli.k {
        cfg.set("k", &k.to_string())?;
    }
    if let Some(batch) = cli.batch_size {
        cfg.set("batch_size", &batch.to_string())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::TrainModel => cmd_train_model(&cfg),
        Command::Attack => cmd_attack(&cfg),
        Command::Features => cmd_features(&cfg),
        Command::Detect { features } => cmd_detect(&cfg, &features),
        Command::Oblivious => run_protocol(&cfg, Protocol::Oblivious),
        Command::Ensemble => run_protocol(&cfg, Protocol::Ensemble),
        Command::Transfer => run_protocol(&cfg, Protocol::Transfer),
        Command::Report => cmd_report(&cfg),
    }
}

fn print_warnings(cfg: &ExperimentConfig) -> Result<()> {
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn cmd_train_model(cfg: &ExperimentConfig) -> Result<()> {
    print_warnings(cfg)?;
    let prep = harness::prepare(cfg, false)?;
    let path = harness::model_path(&cfg.out_dir, "target");
    println!(
        "target model saved to {} (train accuracy {:.4}, test accuracy {:.4})",
        path.display(),
        lidlab::nn::accuracy(&prep.target, &prep.train_data)?,
        lidlab::nn::accuracy(&prep.target, &prep.test_data)?,
    );
    Ok(())
}

/// Dump a grayscale image if the flattened length is a perfect square
/// (digit-shaped data); silently skip otherwise.
fn try_dump(x: &lidlab::tensor::Tensor, path: &Path) -> Result<bool> {
    let side = (x.len() as f64).sqrt().round() as usize;
    if side * side != x.len() {
        return Ok(false);
    }
    dump_image(x, side, side, path)?;
    Ok(true)
}

fn cmd_attack(cfg: &ExperimentConfig) -> Result<()> {
    print_warnings(cfg)?;
    let prep = harness::prepare(cfg, false)?;
    let targets = select_attack_targets(
        &prep.target,
        &prep.test_data,
        cfg.n_targets,
        mix(cfg.seed, &[ROLE_TARGETS]),
    )?;
    for &kappa in &cfg.kappa_list {
        let attack_cfg = cfg.attack_config(kappa);
        let rows = harness::attack_targets(cfg.attack, &prep.target, &targets, &attack_cfg)?;
        let csv = harness::adv_csv_path(&cfg.out_dir, cfg.attack, kappa, false);
        lidlab::attack::write_attack_csv(&csv, cfg.attack, &attack_cfg, &rows)?;

        let successes: Vec<_> = targets
            .iter()
            .zip(&rows)
            .filter(|(_, (_, r))| r.success)
            .collect();
        let mean_l2 = if successes.is_empty() {
            0.0
        } else {
            successes.iter().map(|(_, (_, r))| r.l2).sum::<f64>() / successes.len() as f64
        };
        println!(
            "kappa {kappa}: {}/{} succeeded, mean L2 {:.4}, results in {}",
            successes.len(),
            targets.len(),
            mean_l2,
            csv.display()
        );

        let images = cfg.out_dir.join("images");
        for (t, (_, r)) in successes.iter().take(4) {
            let clean_path = images.join(format!("clean_{}.pgm", t.id));
            let adv_path = images.join(format!(
                "adv_{}_k{}_{}.pgm",
                cfg.attack.as_str(),
                kappa,
                t.id
            ));
            if try_dump(&t.x, &clean_path)? && try_dump(&r.adversarial, &adv_path)? {
                println!("  image pair: {} / {}", clean_path.display(), adv_path.display());
            }
        }
    }
    Ok(())
}

fn cmd_features(cfg: &ExperimentConfig) -> Result<()> {
    print_warnings(cfg)?;
    let prep = harness::prepare(cfg, false)?;
    let targets = select_attack_targets(
        &prep.target,
        &prep.test_data,
        cfg.n_targets,
        mix(cfg.seed, &[ROLE_TARGETS]),
    )?;
    for &kappa in &cfg.kappa_list {
        let run = harness::run_kappa(&prep.target, &targets, &prep.train_data, cfg, kappa)?;
        harness::write_kappa_artifacts(&run, cfg)?;
        println!(
            "kappa {kappa}: {} successes featurized ({} queries dropped), features in {}",
            run.n_success,
            run.dropped,
            harness::features_csv_path(&cfg.out_dir, cfg.attack, kappa, false).display()
        );
    }
    Ok(())
}

fn cmd_detect(cfg: &ExperimentConfig, features: &Path) -> Result<()> {
    print_warnings(cfg)?;
    let rows = read_features_csv(features)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("features file"));
    }

    let mut ids: Vec<usize> = rows.iter().map(|(id, _)| *id).collect();
    ids.sort_unstable();
    ids.dedup();
    let (train_ids, test_ids) = harness::split_ids(&ids, mix(cfg.seed, &[ROLE_SPLIT]));
    let train_set: std::collections::HashSet<usize> = train_ids.into_iter().collect();
    let test_set: std::collections::HashSet<usize> = test_ids.into_iter().collect();

    let classify = |members: &std::collections::HashSet<usize>| {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (id, f) in &rows {
            if !members.contains(id) {
                continue;
            }
            match f.kind {
                ExampleKind::Adversarial => pos.push(f.values.clone()),
                ExampleKind::Clean | ExampleKind::Noisy => neg.push(f.values.clone()),
            }
        }
        (pos, neg)
    };
    let (pos_train, neg_train) = classify(&train_set);
    let (pos_test, neg_test) = classify(&test_set);

    let training = train_detector(&pos_train, &neg_train, &cfg.detector)?;
    if !training.floored_features.is_empty() {
        eprintln!(
            "warning: features {:?} had zero variance (std floored)",
            training.floored_features
        );
    }
    let model = &training.model;
    std::fs::create_dir_all(cfg.out_dir.join("models"))?;
    let stem = features
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "features".into());
    let model_out = cfg.out_dir.join("models").join(format!("detector_{stem}.csv"));
    model.save(&model_out)?;

    if pos_test.is_empty() || neg_test.is_empty() {
        println!(
            "detector saved to {} ({} train positives, {} train negatives); \
             test split too small to evaluate",
            model_out.display(),
            pos_train.len(),
            neg_train.len()
        );
        return Ok(());
    }
    let pos_scores: Vec<f64> = pos_test.iter().map(|f| model.score(f)).collect::<Result<_>>()?;
    let neg_scores: Vec<f64> = neg_test.iter().map(|f| model.score(f)).collect::<Result<_>>()?;
    println!(
        "detector saved to {}\ntest AUC {:.4}, detection rate {:.4}, tpr@5%fpr {:.4} \
         ({} positives, {} negatives)",
        model_out.display(),
        detector::auc(&pos_scores, &neg_scores)?,
        detector::detection_rate(model, &pos_test)?,
        detector::tpr_at_fpr(&pos_scores, &neg_scores, 0.05)?,
        pos_test.len(),
        neg_test.len()
    );
    Ok(())
}

fn run_protocol(cfg: &ExperimentConfig, protocol: Protocol) -> Result<()> {
    match protocol {
        Protocol::Oblivious => harness::run_oblivious(cfg)?,
        Protocol::Ensemble => harness::run_ensemble(cfg)?,
        Protocol::Transfer => harness::run_transfer(cfg)?,
    };
    let path = report_path(&cfg.out_dir, protocol);
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig) -> Result<()> {
    let mut found = false;
    for protocol in [Protocol::Oblivious, Protocol::Ensemble, Protocol::Transfer] {
        let path = report_path(&cfg.out_dir, protocol);
        if path.exists() {
            println!("== {} ==", path.display());
            print!("{}", std::fs::read_to_string(&path)?);
            found = true;
        }
    }
    if !found {
        return Err(Error::Config(format!(
            "no reports found under {}; run oblivious/ensemble/transfer first",
            cfg.out_dir.join("reports").display()
        )));
    }
    Ok(())
}
