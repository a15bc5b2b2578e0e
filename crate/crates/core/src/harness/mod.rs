//! Deterministic desk-scale teacher/student training on a procedural shapes
//! world.
//!
//! Labeled images come from a clean "real" renderer with a long-tailed class
//! distribution, where the rare class is colored close to a frequent one;
//! unlabeled images come from a class-balanced "synthetic" renderer with
//! texture noise and blur.
//! A linear softmax model over handcrafted per-pixel features stands in for
//! the segmentation network. Each step the EMA teacher labels weak views of
//! the unlabeled batch, either through the transport plan or by plain argmax,
//! and the student learns from gated targets on strong CutMix views plus
//! cross-entropy on the labeled batch.

pub mod ablation;
pub mod augment;
pub mod config;
pub mod eval;
pub mod features;
pub mod model;
pub mod train;
pub mod world;

pub use ablation::{run_ablation, AblationReport, SeedResult};
pub use config::TrainConfig;
pub use eval::{evaluate_miou, ConfusionMatrix, IouReport};
pub use train::{run_training, run_training_on, train_step, RunResult, RunTimings, StepRecord, TrainState};
pub use world::{generate_shapes, Dataset, Domain, ShapesSample, WorldConfig};
