use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RngState;
use crate::vit::{argmax, ViTConfig, ViTModel};

use super::aggregate::{check_same_tensors, fedavg, fedsgd, Weighting};
use super::client::{ClientState, LocalTraining};
use super::partition::{partition_dataset, PartitionStrategy};
use super::wire::{
    model_from_tensors, model_tensors, ModelUpdate, NamedTensor, PayloadKind, SERVER_ID,
};

const INIT_STREAM: u64 = 0x1417;
const PARTITION_STREAM: u64 = 0x9A27;
const PARTICIPATION_STREAM: u64 = 0x9A77;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    FedAvg,
    FedSgd,
}

impl Algorithm {
    fn payload(self) -> PayloadKind {
        match self {
            Algorithm::FedAvg => PayloadKind::Weights,
            Algorithm::FedSgd => PayloadKind::Gradients,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub algorithm: Algorithm,
    pub weighting: Weighting,
    pub partition: PartitionStrategy,
    /// Fraction of clients sampled per round; 1.0 means everyone.
    pub participation: f64,
    pub seed: u64,
    /// Worker threads for client training; 1 trains clients sequentially.
    pub threads: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        FlConfig {
            n_clients: 4,
            rounds: 10,
            local_epochs: 1,
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 8,
            algorithm: Algorithm::FedAvg,
            weighting: Weighting::Samples,
            partition: PartitionStrategy::Iid,
            participation: 1.0,
            seed: 0,
            threads: 1,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::InvalidArgument("n_clients must be >= 1".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "participation {} must be in (0, 1]",
                self.participation
            )));
        }
        if self.threads == 0 {
            return Err(Error::InvalidArgument("threads must be >= 1".into()));
        }
        if self.n_clients >= SERVER_ID as usize {
            return Err(Error::InvalidArgument("too many clients".into()));
        }
        self.local().validate()
    }

    fn local(&self) -> LocalTraining {
        LocalTraining {
            epochs: self.local_epochs,
            lr: self.lr,
            momentum: self.momentum,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FLRoundReport {
    pub round: u32,
    pub participants: Vec<u32>,
    pub client_losses: Vec<f64>,
    pub accuracy: f64,
    pub wall_time_s: f64,
}

impl FLRoundReport {
    pub fn mean_loss(&self) -> f64 {
        self.client_losses.iter().sum::<f64>() / self.client_losses.len().max(1) as f64
    }
}

fn join(values: impl Iterator<Item = String>) -> String {
    values.collect::<Vec<_>>().join(";")
}

/// Columns: round, participants, client_losses, mean_loss, accuracy, wall_time_s.
/// List-valued cells are `;`-separated.
pub fn write_reports_csv(reports: &[FLRoundReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::Format {
        path: path.into(),
        detail: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record([
        "round",
        "participants",
        "client_losses",
        "mean_loss",
        "accuracy",
        "wall_time_s",
    ])
    .map_err(to_err)?;
    for r in reports {
        w.write_record([
            r.round.to_string(),
            join(r.participants.iter().map(u32::to_string)),
            join(r.client_losses.iter().map(f64::to_string)),
            r.mean_loss().to_string(),
            r.accuracy.to_string(),
            r.wall_time_s.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fraction of samples whose argmax logit equals the label.
pub fn evaluate_accuracy(model: &ViTModel, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot evaluate on an empty dataset".into(),
        ));
    }
    let mut correct = 0usize;
    for s in data.samples() {
        if argmax(&model.forward(&s.image)?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Initial global model for a run with this seed.
pub fn initial_model(config: &ViTConfig, seed: u64) -> Result<ViTModel> {
    ViTModel::init(config, &mut RngState::derive(seed, &[INIT_STREAM]))
}

/// Per-client slices of `train` for a run with this seed.
pub fn client_slices(train: &LabeledDataset, cfg: &FlConfig) -> Result<Vec<LabeledDataset>> {
    partition_dataset(
        train,
        cfg.n_clients,
        cfg.partition,
        &mut RngState::derive(cfg.seed, &[PARTITION_STREAM]),
    )
}

#[derive(Debug)]
pub enum ServerPhase {
    Idle,
    Collecting {
        expected: BTreeSet<u32>,
        received: Vec<ModelUpdate>,
    },
}

/// Aggregating server: `Idle --broadcast--> Collecting --receive*--> aggregate --> Idle`.
#[derive(Debug)]
pub struct Server {
    global: ViTModel,
    algorithm: Algorithm,
    weighting: Weighting,
    lr: f64,
    round: u32,
    phase: ServerPhase,
}

impl Server {
    pub fn new(global: ViTModel, algorithm: Algorithm, weighting: Weighting, lr: f64) -> Self {
        Server {
            global,
            algorithm,
            weighting,
            lr,
            round: 0,
            phase: ServerPhase::Idle,
        }
    }

    pub fn global(&self) -> &ViTModel {
        &self.global
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn phase(&self) -> &ServerPhase {
        &self.phase
    }

    pub fn into_global(self) -> ViTModel {
        self.global
    }

    /// Opens a round for `participants` and returns the broadcast frame.
    pub fn broadcast(&mut self, participants: &[u32], total_samples: u32) -> Result<Vec<u8>> {
        if !matches!(self.phase, ServerPhase::Idle) {
            return Err(Error::Protocol(format!(
                "round {} already open",
                self.round
            )));
        }
        let expected: BTreeSet<u32> = participants.iter().copied().collect();
        if expected.is_empty() || expected.len() != participants.len() {
            return Err(Error::Protocol(
                "participants must be non-empty and distinct".into(),
            ));
        }
        let frame = ModelUpdate::from_model(
            SERVER_ID,
            self.round,
            PayloadKind::Weights,
            total_samples.max(1),
            &self.global,
        )
        .encode()?;
        self.phase = ServerPhase::Collecting {
            expected,
            received: Vec::new(),
        };
        Ok(frame)
    }

    pub fn receive(&mut self, frame: &[u8]) -> Result<()> {
        let update = ModelUpdate::decode(frame)?;
        let ServerPhase::Collecting { expected, received } = &mut self.phase else {
            return Err(Error::Protocol("no round open".into()));
        };
        if update.round != self.round {
            return Err(Error::Protocol(format!(
                "update for round {}, server is on {}",
                update.round, self.round
            )));
        }
        if !expected.contains(&update.client_id) {
            return Err(Error::Protocol(format!(
                "unexpected update from client {}",
                update.client_id
            )));
        }
        if received.iter().any(|u| u.client_id == update.client_id) {
            return Err(Error::Protocol(format!(
                "duplicate update from client {}",
                update.client_id
            )));
        }
        if update.kind != self.algorithm.payload() {
            return Err(Error::Protocol(format!(
                "{:?} expects {:?}, client {} sent {:?}",
                self.algorithm,
                self.algorithm.payload(),
                update.client_id,
                update.kind
            )));
        }
        check_same_tensors(&model_tensors(&self.global), &update.tensors)?;
        received.push(update);
        Ok(())
    }

    /// Aggregates once every expected client has reported.
    pub fn aggregate(&mut self) -> Result<()> {
        let ServerPhase::Collecting { expected, received } = &self.phase else {
            return Err(Error::Protocol("no round open".into()));
        };
        if received.len() != expected.len() {
            return Err(Error::Protocol(format!(
                "{} of {} updates received",
                received.len(),
                expected.len()
            )));
        }
        let tensors: Vec<NamedTensor> = match self.algorithm {
            Algorithm::FedAvg => fedavg(received, self.weighting)?,
            Algorithm::FedSgd => fedsgd(received, &model_tensors(&self.global), self.lr)?,
        };
        self.global = model_from_tensors(self.global.config(), &tensors)?;
        self.round += 1;
        self.phase = ServerPhase::Idle;
        Ok(())
    }
}

fn choose_participants(cfg: &FlConfig, round: u32) -> Vec<u32> {
    let all: Vec<u32> = (0..cfg.n_clients as u32).collect();
    if cfg.participation >= 1.0 {
        return all;
    }
    let k = ((cfg.participation * cfg.n_clients as f64).ceil() as usize).clamp(1, cfg.n_clients);
    let mut pick = all;
    RngState::derive(cfg.seed, &[PARTICIPATION_STREAM, u64::from(round)]).shuffle(&mut pick);
    pick.truncate(k);
    pick.sort_unstable();
    pick
}

fn client_step(
    c: &mut ClientState,
    frame: &[u8],
    algorithm: Algorithm,
    local: &LocalTraining,
) -> Result<(Vec<u8>, f64)> {
    c.receive(frame)?;
    let (update, loss) = match algorithm {
        Algorithm::FedAvg => c.local_train(local)?,
        Algorithm::FedSgd => c.local_gradient()?,
    };
    Ok((update.encode()?, loss))
}

fn train_clients(
    clients: &mut [&mut ClientState],
    frame: &[u8],
    cfg: &FlConfig,
) -> Result<Vec<(Vec<u8>, f64)>> {
    let local = cfg.local();
    if cfg.threads <= 1 || clients.len() <= 1 {
        return clients
            .iter_mut()
            .map(|c| client_step(c, frame, cfg.algorithm, &local))
            .collect();
    }
    let n = clients.len();
    let per = n.div_ceil(cfg.threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = clients
            .chunks_mut(per)
            .map(|group| {
                s.spawn(move || {
                    group
                        .iter_mut()
                        .map(|c| client_step(c, frame, cfg.algorithm, &local))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for h in handles {
            out.extend(h.join().expect("client thread panicked")?);
        }
        Ok(out)
    })
}

/// Simulated federated training. Every broadcast and update crosses the wire
/// format. Returns the final global model and one report per round.
pub fn run_rounds(
    cfg: &FlConfig,
    model_config: &ViTConfig,
    train: &LabeledDataset,
    holdout: &LabeledDataset,
) -> Result<(ViTModel, Vec<FLRoundReport>)> {
    cfg.validate()?;
    model_config.validate()?;
    let global = initial_model(model_config, cfg.seed)?;
    if cfg.rounds == 0 {
        return Ok((global, Vec::new()));
    }
    let mut clients = client_slices(train, cfg)?
        .into_iter()
        .enumerate()
        .map(|(i, d)| ClientState::new(i as u32, d, global.clone(), cfg.seed))
        .collect::<Result<Vec<_>>>()?;
    let mut server = Server::new(global, cfg.algorithm, cfg.weighting, cfg.lr);
    let mut reports = Vec::with_capacity(cfg.rounds);

    for _ in 0..cfg.rounds {
        let start = Instant::now();
        let round = server.round();
        let participants = choose_participants(cfg, round);
        let total: usize = participants
            .iter()
            .map(|&i| clients[i as usize].data().len())
            .sum();
        let frame = server.broadcast(&participants, u32::try_from(total).unwrap_or(u32::MAX))?;

        let mut active: Vec<&mut ClientState> = clients
            .iter_mut()
            .filter(|c| participants.contains(&c.id()))
            .collect();
        let results = train_clients(&mut active, &frame, cfg)?;
        let mut client_losses = Vec::with_capacity(results.len());
        for (bytes, loss) in results {
            server.receive(&bytes)?;
            client_losses.push(loss);
        }
        server.aggregate()?;
        let accuracy = evaluate_accuracy(server.global(), holdout)?;
        reports.push(FLRoundReport {
            round,
            participants,
            client_losses,
            accuracy,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok((server.into_global(), reports))
}
