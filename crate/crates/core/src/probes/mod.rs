//! The probe zoo. Every trainable probe is a [`Network`] plus a
//! [`ParamSet`](crate::numcore::ParamSet) and shares one training loop
//! ([`train_network`]); layer-suite selection, attention-head search and
//! predictive entropy sit on top.

mod checkpoint;
mod clap;
mod config;
mod detector;
mod entropy;
mod heads;
mod network;
mod suite;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use clap::{clap_forward, clap_train, ClapNet};
pub use config::{ClapConfig, ProbeKind, TrainConfig};
pub use detector::Detector;
pub use entropy::pe_score;
pub use heads::{ah_best_head, HeadSelection};
pub use network::{
    lp_score, lp_train, maxpool_features, nlp_train, project_concat_train, FeatureSource, LinearNet, MlpNet,
    Network, ProjectConcatNet,
};
pub use suite::{binary_entropy, majority_vote, most_confident, suite_predict, LayerProbeSuite, SelectionMode, SuitePrediction};
pub use train::{logits, score_records, train_network, EpochStats, History, TrainedProbe};
