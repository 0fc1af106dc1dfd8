//! Graph Learning Network for the Euclidean Travelling Salesman Problem.
//!
//! The crate is organized around the pipeline it implements:
//!
//! * [`graph`] — TSP instances, tours, adjacency and distance matrices.
//! * [`solver`] — exact (brute force, Held-Karp) and heuristic solvers used
//!   for labeling and benchmarking.
//! * [`dataset`] — reproducible generation, labeling, persistence and
//!   splitting of instance families.
//! * [`model`] — the recurrent graph-convolutional edge predictor, its
//!   composite loss, hand-written backpropagation, Adam, and the training
//!   loop.
//! * [`eval`] — greedy tour decoding from edge probabilities and all
//!   evaluation metrics.

pub mod dataset;
pub mod eval;
pub mod graph;
pub mod model;
pub mod seeding;
pub mod solver;

pub use dataset::{DatasetSplit, GenConfig, LabelPolicy, LabeledSample, Manifest};
pub use eval::{EdgeClassificationMetrics, EvalConfig, EvalReport, InstanceEval};
pub use graph::{DistanceMatrix, SymmetricAdjacency, Tour, TspInstance};
pub use model::{
    AdamState, AdjacencyNormalization, ForwardTrace, GlnConfig, GlnParams, InitMode, LayerParams,
    LossConfig, ScoreRecurrence, TrainConfig,
};
pub use solver::{InsertionRule, SolverKind};
