//! Federated-learning simulation: partitioning, client training, aggregation
//! and a round-based server, all exchanging messages through [`wire`].

mod aggregate;
mod client;
mod partition;
mod server;
pub mod wire;

pub use aggregate::{fedavg, fedsgd, Weighting};
pub use client::{client_for, epoch_rng, ClientState, LocalTraining};
pub use partition::{partition_dataset, partition_indices, PartitionStrategy};
pub use server::{
    client_slices, evaluate_accuracy, initial_model, run_rounds, write_reports_csv, Algorithm,
    FLRoundReport, FlConfig, Server, ServerPhase,
};
pub use wire::{ModelUpdate, NamedTensor, PayloadKind};
