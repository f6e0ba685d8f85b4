//! Mixed-integer encodings of trained ReLU networks.
//!
//! The crate covers the whole pipeline: network evaluation, neuron bound
//! tightening, four MILP formulations (big-M, extended, disjunctive and big-M
//! with single-neuron hull cuts), a small LP/branch-and-bound solver, L1
//! adversarial examples, and MIP training of step and binarized networks.

pub mod adversarial;
pub mod bounds;
pub mod encodings;
pub mod error;
pub mod fixtures;
pub mod mip;
pub mod network;
pub mod solver;
pub mod training;

pub use adversarial::{build_attack, verify_attack, AttackModel, AttackReport, AttackSpec};
pub use bounds::{compute_bounds, BoundMethod, BoundSet, LayerBounds, Stability};
pub use encodings::{encode_network, EncodedNetwork, FormulationSpec, PartitionBounds, ReluFormulation};
pub use error::{Error, Result};
pub use mip::{export_lp, export_mps, parse_mps, MipModel, ObjSense, Sense, VarId, VarKind};
pub use network::{Activation, Activations, Interval, Layer, Network};
pub use solver::{pattern_oracle, solve_lp, solve_mip, SolveResult, SolveStatus, SolverParams};
pub use training::{decode_trained, encode_training, Dataset, Loss, TrainingModel, TrainingReport, TrainingSpec, TrainingVariant};
