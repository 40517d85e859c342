//! Optimizer, training loop and the synthetic toy corpus.

mod adam;
mod config;
mod corpus;
mod fit;
mod toy;

pub use adam::Adam;
pub use config::TrainConfig;
pub use corpus::{load_split, Example, SPLITS};
pub use fit::{crop_cyclic, train_loop, train_step, EpochMetrics, TrainOutcome};
pub use toy::{make_toy_dataset, write_toy_corpus, ToyUtterance};
