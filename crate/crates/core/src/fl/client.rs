use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RngState;
use crate::vit::{sgd_step, ImageTensor, ViTConfig, ViTModel};

use super::wire::{ModelUpdate, PayloadKind, SERVER_ID};

const CLIENT_STREAM: u64 = 0xC11E;

/// Shuffle stream for one client epoch. Any process that replays a client's
/// training with the same seed draws the same batch order.
pub fn epoch_rng(seed: u64, client_id: u32, round: u32, epoch: usize) -> RngState {
    RngState::derive(
        seed,
        &[
            CLIENT_STREAM,
            u64::from(client_id),
            u64::from(round),
            epoch as u64,
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
}

impl LocalTraining {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("local epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lr {} must be finite and >= 0",
                self.lr
            )));
        }
        if !(self.momentum.is_finite() && (0.0..1.0).contains(&self.momentum)) {
            return Err(Error::InvalidArgument(format!(
                "momentum {} must be in [0, 1)",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Per-client training state. The velocity never leaves the client and is
/// reset whenever new global weights arrive.
#[derive(Clone, Debug)]
pub struct ClientState {
    id: u32,
    data: LabeledDataset,
    model: ViTModel,
    velocity: ViTModel,
    seed: u64,
    round: u32,
}

impl ClientState {
    pub fn new(id: u32, data: LabeledDataset, model: ViTModel, seed: u64) -> Result<Self> {
        if id == SERVER_ID {
            return Err(Error::InvalidArgument(format!(
                "client id {id} is reserved"
            )));
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument(format!("client {id} has no data")));
        }
        let c = model.config();
        if data.dims() != Some((c.height, c.width, c.channels)) {
            return Err(Error::shape(
                "ClientState::new",
                format!("{:?}", data.dims()),
                format!("{}x{}x{}", c.height, c.width, c.channels),
            ));
        }
        if data.classes() > c.classes {
            return Err(Error::InvalidArgument(format!(
                "dataset has {} classes, model outputs {}",
                data.classes(),
                c.classes
            )));
        }
        let velocity = model.zeros_like();
        Ok(ClientState {
            id,
            data,
            model,
            velocity,
            seed,
            round: 0,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn model(&self) -> &ViTModel {
        &self.model
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    /// Installs a server broadcast frame as the local model.
    pub fn receive(&mut self, frame: &[u8]) -> Result<()> {
        let msg = ModelUpdate::decode(frame)?;
        if msg.client_id != SERVER_ID || msg.kind != PayloadKind::Weights {
            return Err(Error::Protocol(format!(
                "client {} expected server weights, got {:?} from {}",
                self.id, msg.kind, msg.client_id
            )));
        }
        self.model = msg.to_model(self.model.config())?;
        self.velocity = self.model.zeros_like();
        self.round = msg.round;
        Ok(())
    }

    fn samples(&self) -> u32 {
        u32::try_from(self.data.len()).unwrap_or(u32::MAX)
    }

    /// Mini-batch SGD over the local slice. Returns the weights update and the
    /// mean training loss of the final epoch.
    pub fn local_train(&mut self, opts: &LocalTraining) -> Result<(ModelUpdate, f64)> {
        opts.validate()?;
        let n = self.data.len();
        let mut last_loss = 0.0;
        for epoch in 0..opts.epochs {
            let mut order: Vec<usize> = (0..n).collect();
            epoch_rng(self.seed, self.id, self.round, epoch).shuffle(&mut order);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(opts.batch_size) {
                let batch: Vec<(&ImageTensor, usize)> = chunk
                    .iter()
                    .map(|&i| {
                        let s = &self.data.samples()[i];
                        (&s.image, s.label)
                    })
                    .collect();
                let (loss, grads) = self.model.loss_and_grads(&batch)?;
                sgd_step(
                    &mut self.model,
                    &grads,
                    opts.lr,
                    opts.momentum,
                    &mut self.velocity,
                )?;
                loss_sum += loss * chunk.len() as f64;
            }
            last_loss = loss_sum / n as f64;
        }
        if !self.model.is_finite() {
            return Err(Error::NonFinite("local training diverged"));
        }
        let update = ModelUpdate::from_model(
            self.id,
            self.round,
            PayloadKind::Weights,
            self.samples(),
            &self.model,
        );
        Ok((update, last_loss))
    }

    /// Full-slice gradient at the current model (FedSGD client step).
    pub fn local_gradient(&mut self) -> Result<(ModelUpdate, f64)> {
        let batch: Vec<(&ImageTensor, usize)> = self
            .data
            .samples()
            .iter()
            .map(|s| (&s.image, s.label))
            .collect();
        let (loss, grads) = self.model.loss_and_grads(&batch)?;
        let update = ModelUpdate::from_model(
            self.id,
            self.round,
            PayloadKind::Gradients,
            self.samples(),
            &grads,
        );
        Ok((update, loss))
    }
}

/// Convenience for tests and tools that build a client outside a server run.
pub fn client_for(
    id: u32,
    data: LabeledDataset,
    config: &ViTConfig,
    init_seed: u64,
    seed: u64,
) -> Result<ClientState> {
    let model = ViTModel::init(config, &mut RngState::new(init_seed))?;
    ClientState::new(id, data, model, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_dataset;
    use crate::fl::wire::model_tensors;

    fn small() -> (ViTConfig, LabeledDataset) {
        let cfg = ViTConfig {
            height: 8,
            width: 8,
            patch: 4,
            hidden: 8,
            depth: 1,
            heads: 2,
            ..ViTConfig::default()
        };
        let d = synth_dataset(6, 3, (8, 8, 1), 0.1, &mut RngState::new(3)).unwrap();
        (cfg, d)
    }

    fn opts(lr: f64, batch_size: usize) -> LocalTraining {
        LocalTraining {
            epochs: 1,
            lr,
            momentum: 0.9,
            batch_size,
        }
    }

    #[test]
    fn zero_lr_returns_incoming_weights() {
        let (cfg, d) = small();
        let mut c = client_for(0, d, &cfg, 1, 2).unwrap();
        let before = model_tensors(c.model());
        let (u, _) = c.local_train(&opts(0.0, 2)).unwrap();
        assert_eq!(u.tensors, before);
        assert_eq!(u.samples, 6);
        assert_eq!(u.kind, PayloadKind::Weights);
    }

    #[test]
    fn full_batch_epoch_is_one_sgd_step() {
        let (cfg, d) = small();
        let mut c = client_for(0, d.clone(), &cfg, 1, 2).unwrap();
        let w0 = c.model().clone();
        let batch: Vec<_> = d.samples().iter().map(|s| (&s.image, s.label)).collect();
        let (_, g) = w0.loss_and_grads(&batch).unwrap();
        let (u, _) = c.local_train(&opts(0.05, 6)).unwrap();
        // first step from zero velocity: w - lr * g
        for ((t, w), gg) in u.tensors.iter().zip(w0.tensors()).zip(g.tensors()) {
            for ((a, b), c) in t.data.iter().zip(w.data).zip(gg.data) {
                assert!((a - (b - 0.05 * c)).abs() <= 1e-12, "{}", t.name);
            }
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let (cfg, d) = small();
        let mut a = client_for(1, d.clone(), &cfg, 1, 2).unwrap();
        let mut b = client_for(1, d, &cfg, 1, 2).unwrap();
        assert_eq!(
            a.local_train(&opts(0.01, 4)).unwrap(),
            b.local_train(&opts(0.01, 4)).unwrap()
        );
        assert!(a.local_train(&opts(0.01, 0)).is_err());
        let mut zero_epochs = opts(0.01, 2);
        zero_epochs.epochs = 0;
        assert!(a.local_train(&zero_epochs).is_err());
    }

    #[test]
    fn rejects_non_broadcast_frames() {
        let (cfg, d) = small();
        let mut c = client_for(1, d, &cfg, 1, 2).unwrap();
        let (u, _) = c.local_train(&opts(0.01, 4)).unwrap();
        assert!(matches!(
            c.receive(&u.encode().unwrap()),
            Err(Error::Protocol(_))
        ));
    }
}
