//! Configuration, datasets, model files and experiment reporting for the
//! wirlab watermark laboratory.

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod imageio;
pub mod model_file;

pub use config::ExperimentConfig;
pub use dataset::{load_dataset, synth_dataset, DataSource, DatasetSpec, Splits};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, RunSummary};
pub use model_file::{load_model, save_model};
