//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fedvit::cipher::{
    decrypt_image, encrypt_image, encrypt_model, encrypted_accuracy, encrypted_forward,
};
use fedvit::data::{decode_ppm, encode_ppm, synth_dataset, DEFAULT_NOISE};
use fedvit::fl::{
    evaluate_accuracy, fedavg, fedsgd, run_rounds, FlConfig, ModelUpdate, NamedTensor, PayloadKind,
};
use fedvit::keyring::{build_eb, generate_keypair, load_keypair, save_keypair, KeyMode};
use fedvit::linalg::{Matrix, RngState};
use fedvit::vit::{argmax, patchify, ImageTensor, ViTConfig};

use common::{
    centralized_sgd, finite_difference_check, random_image, random_model, small_config, toy_config,
};

// Criterion 1
const EQUIVALENCE_TRIPLES: usize = 100;
const ORTHOGONAL_LOGIT_TOL: f64 = 1e-6;
const EQUIVALENCE_BUDGET: Duration = Duration::from_secs(60);
// Criterion 2
const FL_CLIENTS: usize = 4;
const FL_ROUNDS: usize = 10;
const FL_LR: f64 = 1e-3;
const FL_MOMENTUM: f64 = 0.9;
const FL_BATCH: usize = 8;
const FL_SEED: u64 = 0;
const FL_TRAIN_SAMPLES: usize = 2400;
const FL_HOLDOUT_SAMPLES: usize = 300;
const FL_MIN_ACCURACY: f64 = 0.90;
const FL_BUDGET: Duration = Duration::from_secs(600);
// Criterion 3
const AGGREGATION_TOL: f64 = 1e-12;
// Criterion 4
const FD_EPS: f64 = 1e-5;
const FD_MAX_REL_ERROR: f64 = 1e-4;
const FD_BUDGET: Duration = Duration::from_secs(120);
// Criterion 5
const ORTHOGONAL_ROUND_TRIP_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    }};
}

fn within(budget: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    if t < budget {
        Ok(t)
    } else {
        Err(format!("took {t:.1?}, budget {budget:?}"))
    }
}

fn equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = toy_config();
    let mut worst_perm = 0.0f64;
    let mut worst_orth = 0.0f64;
    let mut argmax_agree = 0usize;
    for t in 0..EQUIVALENCE_TRIPLES as u64 {
        let mut rng = RngState::derive(2024, &[t]);
        let model = random_model(&cfg, &mut rng, 0.1);
        let x = random_image(&mut rng, &cfg);
        let plain_z0 = model.embed(&model.patchify(&x).unwrap()).unwrap();
        let plain = model.logits_from_embedding(&plain_z0).unwrap();

        for mode in [KeyMode::Permutation, KeyMode::Orthogonal] {
            let key =
                generate_keypair(cfg.patch_len(), cfg.num_patches(), mode, 7_000 + t).unwrap();
            let em = encrypt_model(&model, &key).unwrap();
            let e = encrypt_image(&x, &key, cfg.patch).unwrap();
            let enc_logits = encrypted_forward(&em, &e).unwrap();
            let diff = plain
                .iter()
                .zip(&enc_logits)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            match mode {
                KeyMode::Permutation => {
                    // encrypted token i must be plain token l_e(i), bit for bit
                    let enc_z0 = em
                        .model()
                        .embed(&fedvit::vit::PatchSequence(e.blocks().clone()))
                        .unwrap();
                    let map = key.permutation().as_slice();
                    ensure!(
                        enc_z0.row(0) == plain_z0.row(0),
                        "triple {t}: class row changed"
                    );
                    for (i, &src) in map.iter().enumerate() {
                        ensure!(
                            enc_z0.row(i + 1) == plain_z0.row(src + 1),
                            "triple {t}: token {} != plain token {}",
                            i + 1,
                            src + 1
                        );
                    }
                    ensure!(
                        diff == 0.0,
                        "triple {t}: permutation-mode logit diff {diff:e}"
                    );
                    worst_perm = worst_perm.max(diff);
                }
                KeyMode::Orthogonal => {
                    ensure!(
                        diff < ORTHOGONAL_LOGIT_TOL,
                        "triple {t}: orthogonal logit diff {diff:e}"
                    );
                    worst_orth = worst_orth.max(diff);
                    if argmax(&plain) == argmax(&enc_logits) {
                        argmax_agree += 1;
                    }
                }
            }
        }
    }
    ensure!(
        argmax_agree == EQUIVALENCE_TRIPLES,
        "argmax agreement {argmax_agree}/{EQUIVALENCE_TRIPLES}"
    );
    let t = within(EQUIVALENCE_BUDGET, start)?;
    Ok(format!(
        "{EQUIVALENCE_TRIPLES} triples; permutation max diff {worst_perm:e}, orthogonal max diff {worst_orth:.2e}, argmax 100%, {t:.1?}"
    ))
}

fn federated_accuracy() -> Outcome {
    let start = Instant::now();
    let mc = toy_config();
    let dims = (mc.height, mc.width, mc.channels);
    let train = synth_dataset(
        FL_TRAIN_SAMPLES,
        mc.classes,
        dims,
        DEFAULT_NOISE,
        &mut RngState::new(1),
    )
    .map_err(|e| e.to_string())?;
    let holdout = synth_dataset(
        FL_HOLDOUT_SAMPLES,
        mc.classes,
        dims,
        DEFAULT_NOISE,
        &mut RngState::new(2),
    )
    .map_err(|e| e.to_string())?;
    let fl = FlConfig {
        n_clients: FL_CLIENTS,
        rounds: FL_ROUNDS,
        local_epochs: 1,
        lr: FL_LR,
        momentum: FL_MOMENTUM,
        batch_size: FL_BATCH,
        seed: FL_SEED,
        ..FlConfig::default()
    };
    let (model, reports) = run_rounds(&fl, &mc, &train, &holdout).map_err(|e| e.to_string())?;
    let plain = evaluate_accuracy(&model, &holdout).map_err(|e| e.to_string())?;
    ensure!(reports.len() == FL_ROUNDS, "{} reports", reports.len());
    ensure!(
        plain >= FL_MIN_ACCURACY,
        "holdout accuracy {plain:.3} < {FL_MIN_ACCURACY}"
    );
    let modes = [
        KeyMode::Orthogonal,
        KeyMode::Permutation,
        KeyMode::Orthogonal,
    ];
    let mut fingerprints = Vec::new();
    for (i, mode) in modes.into_iter().enumerate() {
        let key = generate_keypair(mc.patch_len(), mc.num_patches(), mode, 900 + i as u64).unwrap();
        fingerprints.push(key.fingerprint());
        let em = encrypt_model(&model, &key).unwrap();
        let enc = encrypted_accuracy(&em, &key, &holdout).map_err(|e| e.to_string())?;
        ensure!(
            enc.to_bits() == plain.to_bits(),
            "key {i} ({mode}): encrypted accuracy {enc} != plain {plain}"
        );
    }
    fingerprints.sort();
    fingerprints.dedup();
    ensure!(fingerprints.len() == 3, "keys not distinct");
    let t = within(FL_BUDGET, start)?;
    Ok(format!(
        "holdout accuracy {plain:.3} (plain) = encrypted under 3 keys, final mean loss {:.4}, {t:.1?}",
        reports.last().unwrap().mean_loss()
    ))
}

fn federated_correctness() -> Outcome {
    let mc = small_config();
    let train = synth_dataset(20, 3, (8, 8, 1), 0.1, &mut RngState::new(5)).unwrap();
    let holdout = synth_dataset(6, 3, (8, 8, 1), 0.1, &mut RngState::new(6)).unwrap();
    let fl = FlConfig {
        n_clients: 1,
        rounds: 3,
        lr: 0.05,
        batch_size: 4,
        seed: 31,
        ..FlConfig::default()
    };
    let (fed, _) = run_rounds(&fl, &mc, &train, &holdout).map_err(|e| e.to_string())?;
    let central = centralized_sgd(&fl, &mc, &train);
    ensure!(
        fed == central,
        "single-client run differs from centralized SGD by {:e}",
        fed.max_abs_diff(&central)
    );

    let mut rng = RngState::new(8);
    let w = random_model(&mc, &mut rng, 0.1);
    let upd = |id, kind| ModelUpdate::from_model(id, 0, kind, 10, &w);
    let dup = fedavg(
        &[
            upd(0, PayloadKind::Weights),
            upd(1, PayloadKind::Weights),
            upd(2, PayloadKind::Weights),
        ],
        Default::default(),
    )
    .map_err(|e| e.to_string())?;
    let dup_err = dup
        .iter()
        .zip(&upd(0, PayloadKind::Weights).tensors)
        .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    ensure!(
        dup_err <= AGGREGATION_TOL,
        "fedavg of duplicates off by {dup_err:e}"
    );

    let g = upd(0, PayloadKind::Gradients);
    let mut neg = upd(1, PayloadKind::Gradients);
    for t in &mut neg.tensors {
        t.data.iter_mut().for_each(|v| *v = -*v);
    }
    let global: Vec<NamedTensor> = random_model(&mc, &mut rng, 0.1)
        .tensors()
        .iter()
        .map(|t| NamedTensor::new(t.name.clone(), t.shape.clone(), t.data.to_vec()).unwrap())
        .collect();
    let stepped = fedsgd(&[g, neg], &global, 0.1).map_err(|e| e.to_string())?;
    ensure!(stepped == global, "fedsgd with g and -g moved the model");
    Ok("1-client FedAVG == centralized SGD (bit-exact); duplicate fedavg within 1e-12; fedsgd(g, -g) exact no-op".into())
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cfg = toy_config();
    let mut rng = RngState::new(77);
    let model = random_model(&cfg, &mut rng, 0.1);
    let x = random_image(&mut rng, &cfg);
    let checks = finite_difference_check(&model, &[(&x, 2)], FD_EPS);
    let worst = checks
        .iter()
        .max_by(|x, y| x.rel_error.total_cmp(&y.rel_error))
        .unwrap();
    for c in &checks {
        ensure!(
            c.grad_norm > 0.0,
            "{}: zero gradient, check is vacuous",
            c.name
        );
        ensure!(
            c.rel_error < FD_MAX_REL_ERROR,
            "{}: relative error {:.3e}",
            c.name,
            c.rel_error
        );
    }
    let t = within(FD_BUDGET, start)?;
    Ok(format!(
        "{} tensors, {} parameters; worst {} at {:.2e}, {t:.1?}",
        checks.len(),
        model.num_parameters(),
        worst.name,
        worst.rel_error
    ))
}

fn round_trips() -> Outcome {
    let cfg = toy_config();
    let mut rng = RngState::new(12);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut worst_orth = 0.0f64;
    for i in 0..10u64 {
        let x = random_image(&mut rng, &cfg);
        for mode in [KeyMode::Permutation, KeyMode::Orthogonal] {
            let key = generate_keypair(cfg.patch_len(), cfg.num_patches(), mode, 300 + i).unwrap();
            let back = decrypt_image(&encrypt_image(&x, &key, cfg.patch).unwrap(), &key).unwrap();
            match mode {
                KeyMode::Permutation => ensure!(back == x, "permutation round trip not bit-exact"),
                KeyMode::Orthogonal => {
                    let d = back.max_abs_diff(&x);
                    ensure!(
                        d < ORTHOGONAL_ROUND_TRIP_TOL,
                        "orthogonal round trip off by {d:e}"
                    );
                    worst_orth = worst_orth.max(d);
                }
            }
            let path = dir.path().join(format!("k{i}-{mode}.json"));
            save_keypair(&key, &path).map_err(|e| e.to_string())?;
            let loaded = load_keypair(&path).map_err(|e| e.to_string())?;
            ensure!(loaded == key, "key reload differs");
            ensure!(
                loaded.to_json_bytes() == std::fs::read(&path).unwrap(),
                "key bytes differ"
            );
        }
    }
    let eb = build_eb(&[1, 3, 2]).unwrap().into_matrix();
    let expected = Matrix::from_rows(&[
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 0.0],
    ]);
    ensure!(eb == expected, "position key for [1,3,2] is {eb:?}");
    Ok(format!(
        "image round trips exact (permutation) / {worst_orth:.2e} (orthogonal); key files bit-identical; position key [1,3,2] exact"
    ))
}

fn block_bytes(img: &ImageTensor, p: usize) -> Vec<Vec<u8>> {
    let quantized = decode_ppm(&encode_ppm(img).unwrap()).unwrap();
    let patches = patchify(&quantized, p).unwrap();
    (0..patches.len())
        .map(|i| {
            let mut b: Vec<u8> = patches
                .patch(i)
                .iter()
                .map(|v| (v * 255.0).round() as u8)
                .collect();
            b.sort_unstable();
            b
        })
        .collect()
}

fn scrambled_ppm() -> Outcome {
    let cfg = ViTConfig {
        channels: 3,
        ..toy_config()
    };
    let dims = (cfg.height, cfg.width, cfg.channels);
    let images = synth_dataset(4, 3, dims, 0.05, &mut RngState::new(3)).unwrap();
    let out_dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
    let key =
        generate_keypair(cfg.patch_len(), cfg.num_patches(), KeyMode::Permutation, 5).unwrap();
    let map = key.permutation().as_slice();
    ensure!(
        !key.permutation().is_identity(),
        "identity key would not scramble"
    );
    for (n, s) in images.samples().iter().enumerate() {
        let e = encrypt_image(&s.image, &key, cfg.patch).unwrap();
        let rendered = e.render().unwrap();
        std::fs::write(
            out_dir.join(format!("plain-{n}.ppm")),
            encode_ppm(&s.image).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        std::fs::write(
            out_dir.join(format!("encrypted-{n}.ppm")),
            encode_ppm(&rendered).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        let src = block_bytes(&s.image, cfg.patch);
        let enc = block_bytes(&rendered, cfg.patch);
        for (i, &j) in map.iter().enumerate() {
            ensure!(
                enc[i] == src[j],
                "image {n}: block {i} does not hold block {j}'s pixels"
            );
        }
        ensure!(rendered != s.image, "image {n} unchanged");
    }
    Ok(format!(
        "{} images, every encrypted block's pixel multiset equals its source block; PPMs in {}",
        images.len(),
        out_dir.display()
    ))
}

fn wire_integrity() -> Outcome {
    let cfg = small_config();
    let mut model = random_model(&cfg, &mut RngState::new(9), 0.1);
    // special values survive too
    let t = &mut model.tensors_mut()[0];
    t.data[0] = -0.0;
    t.data[1] = f64::MIN_POSITIVE / 4.0;
    t.data[2] = f64::MAX;
    let u = ModelUpdate::from_model(2, 5, PayloadKind::Weights, 17, &model);
    let bytes = u.encode().map_err(|e| e.to_string())?;
    let back = ModelUpdate::decode(&bytes).map_err(|e| e.to_string())?;
    ensure!(back == u, "decoded update differs");
    for (a, b) in back.tensors.iter().zip(&u.tensors) {
        ensure!(
            a.data
                .iter()
                .map(|v| v.to_bits())
                .eq(b.data.iter().map(|v| v.to_bits())),
            "`{}` not bit-exact",
            a.name
        );
    }
    let mut caught = 0;
    for i in 0..bytes.len() {
        let mut bad = bytes.clone();
        bad[i] ^= 1 << (i % 8);
        if ModelUpdate::decode(&bad).is_err() {
            caught += 1;
        }
    }
    ensure!(
        caught == bytes.len(),
        "{caught}/{} flipped bytes caught",
        bytes.len()
    );

    // The exhaustive destructuring stops compiling if a field is ever added.
    let ModelUpdate {
        client_id: _,
        round: _,
        kind: _,
        samples: _,
        tensors,
    } = &u;
    let names: Vec<&str> = tensors.iter().map(|t| t.name.as_str()).collect();
    let manifest: Vec<String> = model.tensors().iter().map(|t| t.name.clone()).collect();
    ensure!(
        names == manifest,
        "payload tensors are not exactly the model manifest"
    );
    let payload: usize = tensors.iter().map(|t| t.data.len()).sum();
    ensure!(
        payload == model.num_parameters(),
        "payload carries {payload} values"
    );
    ensure!(
        bytes.len() == u.encoded_len(),
        "frame has unaccounted bytes"
    );
    Ok(format!(
        "{} byte frame bit-exact; {caught}/{} single-byte flips rejected; payload = {} parameters, no other fields",
        bytes.len(),
        bytes.len(),
        payload
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 encrypted/plain equivalence", equivalence),
        (
            "2 federated accuracy + encrypted evaluation",
            federated_accuracy,
        ),
        ("3 federated correctness", federated_correctness),
        ("4 gradient validity", gradients),
        ("5 key/cipher round trips", round_trips),
        ("6 scrambled PPM blocks", scrambled_ppm),
        ("7 wire-format integrity", wire_integrity),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
