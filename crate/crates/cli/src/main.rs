//! `fedvit` command-line tool.
//!
//! Exit codes: 0 success, 1 runtime or I/O failure, 2 invalid input.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedvit::cipher::{
    decrypt_image, encrypt_image, encrypt_model, encrypted_accuracy, verify_with_encrypted,
    EncryptedImage, EncryptedModel, EquivalenceReport, LOGIT_TOLERANCE,
};
use fedvit::data::{load_image_ppm, save_image_ppm};
use fedvit::fl::{evaluate_accuracy, run_rounds, write_reports_csv, Algorithm};
use fedvit::keyring::{generate_keypair, load_keypair, save_keypair, KeyMode};
use fedvit::linalg::RngState;
use fedvit::vit::{load_checkpoint, save_checkpoint, ImageTensor, ViTModel};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{DatasetSource, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Runtime(_) => 1,
            CliError::Validation(_) => 2,
        }
    }
}

impl From<fedvit::Error> for CliError {
    fn from(e: fedvit::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(
    name = "fedvit",
    version,
    about = "Federated ViT training with encrypted inference"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key pair and print its fingerprint.
    Keygen(KeygenArgs),
    /// Run federated training; writes model.json, rounds.csv and manifest.json under --out.
    Train(TrainArgs),
    /// Transform a plain checkpoint's embeddings with a key.
    EncryptModel {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encrypt a PPM/PGM image block-wise.
    EncryptImage {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        patch: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the encrypted image as a viewable PPM/PGM.
        #[arg(long)]
        emit_ppm: Option<PathBuf>,
    },
    /// Recover a PPM/PGM image from an encrypted image file.
    DecryptImage {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print test-set accuracy with three decimals.
    Evaluate(EvaluateArgs),
    /// Compare encrypted and plain inference on random images; prints JSON metrics.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long, default_value_t = 32)]
        n_images: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct KeygenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Flattened patch length p²c.
    #[arg(long = "L")]
    l: usize,
    /// Number of patches.
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value = "orthogonal")]
    mode: KeyMode,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    clients: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_parser = parse_algorithm)]
    algorithm: Option<Algorithm>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// `synthetic[:TEST[:SEED]]`, `cifar10:DIR` or `cifar100:DIR`; the test split is used.
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    key: Option<PathBuf>,
    /// Encrypt every test image with --key and run the encrypted model.
    #[arg(long, requires = "key")]
    encrypted: bool,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    match s {
        "fedavg" => Ok(Algorithm::FedAvg),
        "fedsgd" => Ok(Algorithm::FedSgd),
        _ => Err(format!("expected fedavg or fedsgd, got `{s}`")),
    }
}

fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct FileHash {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

fn hashed(paths: impl IntoIterator<Item = PathBuf>) -> Result<Vec<FileHash>, CliError> {
    paths
        .into_iter()
        .map(|path| {
            let sha256 = sha256_file(&path)?;
            Ok(FileHash { path, sha256 })
        })
        .collect()
}

fn cmd_keygen(a: KeygenArgs) -> Result<(), CliError> {
    let key = generate_keypair(a.l, a.n, a.mode, a.seed)?;
    save_keypair(&key, &a.out)?;
    println!("{}", key.fingerprint());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_json(&fs::read(p).map_err(|e| io_err(p, e))?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = a.rounds {
        cfg.fl.rounds = v;
    }
    if let Some(v) = a.clients {
        cfg.fl.n_clients = v;
    }
    if let Some(v) = a.seed {
        cfg.fl.seed = v;
    }
    if let Some(v) = a.lr {
        cfg.fl.lr = v;
    }
    if let Some(v) = a.threads {
        cfg.fl.threads = v;
    }
    if let Some(v) = a.algorithm {
        cfg.fl.algorithm = v;
    }
    cfg.validate()?;

    let (train, test) = cfg.dataset.load(&cfg.model)?;
    let (model, reports) = run_rounds(&cfg.fl, &cfg.model, &train, &test)?;

    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let model_path = a.out.join("model.json");
    let csv_path = a.out.join("rounds.csv");
    save_checkpoint(&model, None, &model_path)?;
    write_reports_csv(&reports, &csv_path)?;
    for r in &reports {
        eprintln!(
            "round {:>3}  mean loss {:.4}  accuracy {:.3}  {:.1}s",
            r.round,
            r.mean_loss(),
            r.accuracy,
            r.wall_time_s
        );
    }

    let mut inputs = a.config.iter().cloned().collect::<Vec<_>>();
    inputs.extend(cfg.dataset.input_files());
    let manifest = Manifest {
        tool: "fedvit",
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg,
        inputs: hashed(inputs)?,
        outputs: hashed([model_path.clone(), csv_path])?,
    };
    let manifest_path = a.out.join("manifest.json");
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| io_err(&manifest_path, e))?;
    println!("{}", model_path.display());
    Ok(())
}

fn load_plain_model(path: &Path) -> Result<ViTModel, CliError> {
    match load_checkpoint(path)? {
        (m, None) => Ok(m),
        (_, Some(_)) => Err(CliError::Validation(format!(
            "{} is already encrypted; a plain checkpoint is required",
            path.display()
        ))),
    }
}

fn cmd_encrypt_model(model: &Path, key: &Path, out: &Path) -> Result<(), CliError> {
    let m = load_plain_model(model)?;
    let k = load_keypair(key)?;
    encrypt_model(&m, &k)?.save(out)?;
    Ok(())
}

fn cmd_encrypt_image(
    image: &Path,
    key: &Path,
    patch: usize,
    out: &Path,
    emit_ppm: Option<&Path>,
) -> Result<(), CliError> {
    let x = load_image_ppm(image)?;
    let k = load_keypair(key)?;
    let e = encrypt_image(&x, &k, patch)?;
    e.save(out)?;
    if let Some(p) = emit_ppm {
        save_image_ppm(&e.render()?, p)?;
    }
    Ok(())
}

fn cmd_decrypt_image(image: &Path, key: &Path, out: &Path) -> Result<(), CliError> {
    let e = EncryptedImage::load(image)?;
    let k = load_keypair(key)?;
    if !e.matches_key(&k) {
        return Err(CliError::Validation(format!(
            "image was encrypted with key {}, not {}",
            e.key_fingerprint(),
            k.fingerprint()
        )));
    }
    save_image_ppm(&decrypt_image(&e, &k)?, out)?;
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let source = DatasetSource::parse_flag(&a.dataset)?;
    let (model, info) = load_checkpoint(&a.model)?;
    let (_, test) = source.load(model.config())?;
    if test.is_empty() {
        return Err(CliError::Validation("test set is empty".into()));
    }
    let accuracy = match (info, a.encrypted) {
        (None, false) => evaluate_accuracy(&model, &test)?,
        (None, true) => {
            let key = load_keypair(a.key.as_deref().expect("clap enforces --key"))?;
            encrypted_accuracy(&encrypt_model(&model, &key)?, &key, &test)?
        }
        (Some(_), true) => {
            let key = load_keypair(a.key.as_deref().expect("clap enforces --key"))?;
            encrypted_accuracy(&EncryptedModel::load(&a.model)?, &key, &test)?
        }
        (Some(_), false) => {
            return Err(CliError::Validation(
                "model is encrypted; pass --encrypted --key".into(),
            ))
        }
    };
    println!("{accuracy:.3}");
    Ok(())
}

#[derive(Serialize)]
struct VerifyMetrics {
    mode: KeyMode,
    key_fingerprint: String,
    n_images: usize,
    seed: u64,
    max_z0_row_diff: f64,
    max_logit_diff: f64,
    argmax_agreement: f64,
    logit_tolerance: f64,
    passed: bool,
}

fn cmd_verify(model: &Path, key: &Path, n_images: usize, seed: u64) -> Result<bool, CliError> {
    if n_images == 0 {
        return Err(CliError::Validation("--n-images must be >= 1".into()));
    }
    let m = load_plain_model(model)?;
    let k = load_keypair(key)?;
    let em = encrypt_model(&m, &k)?;
    let c = m.config();
    let mut rng = RngState::new(seed);
    let mut reports = Vec::with_capacity(n_images);
    for _ in 0..n_images {
        let n = c.height * c.width * c.channels;
        let x = ImageTensor::new(
            c.height,
            c.width,
            c.channels,
            (0..n).map(|_| rng.uniform()).collect(),
        )?;
        reports.push(verify_with_encrypted(&m, &em, &k, &x)?);
    }
    let agree = reports.iter().filter(|r| r.argmax_match).count();
    let worst = EquivalenceReport::merge(&reports);
    let tolerance = match k.mode() {
        KeyMode::Permutation => 0.0,
        KeyMode::Orthogonal => LOGIT_TOLERANCE,
    };
    let passed = worst.argmax_match
        && match k.mode() {
            KeyMode::Permutation => worst.max_logit_diff == 0.0,
            KeyMode::Orthogonal => worst.max_logit_diff < LOGIT_TOLERANCE,
        };
    let metrics = VerifyMetrics {
        mode: k.mode(),
        key_fingerprint: k.fingerprint(),
        n_images,
        seed,
        max_z0_row_diff: worst.max_z0_row_diff,
        max_logit_diff: worst.max_logit_diff,
        argmax_agreement: agree as f64 / n_images as f64,
        logit_tolerance: tolerance,
        passed,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).map_err(|e| CliError::Runtime(e.to_string()))?
    );
    Ok(passed)
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Keygen(a) => cmd_keygen(a)?,
        Command::Train(a) => cmd_train(a)?,
        Command::EncryptModel { model, key, out } => cmd_encrypt_model(&model, &key, &out)?,
        Command::EncryptImage {
            image,
            key,
            patch,
            out,
            emit_ppm,
        } => cmd_encrypt_image(&image, &key, patch, &out, emit_ppm.as_deref())?,
        Command::DecryptImage { image, key, out } => cmd_decrypt_image(&image, &key, &out)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Verify {
            model,
            key,
            n_images,
            seed,
        } => return cmd_verify(&model, &key, n_images, seed),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
