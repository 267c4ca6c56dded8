//! Mondrian forest regression with Gaussian node posteriors, online updates,
//! predictive evaluation and grid-based Bayesian optimization.

pub mod bayesopt;
pub mod benchmarks;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod gaussian;
pub mod io;
pub mod persist;
pub mod predict;
pub mod rng;
pub mod stats;
pub mod tree;

pub use bayesopt::{run_bayesopt, BoConfig, BoHistory, BoRecord, CandidateGrid, Objective, TableObjective};
pub use data::{scale_features, Scaler, TrainingSlice};
pub use error::{MondrianError, Result};
pub use eval::{evaluate, EvaluationReport};
pub use forest::{predict_forest, ForestConfig, ForestModel};
pub use gaussian::{HyperParams, NodePosterior, PosteriorMode};
pub use persist::{load_model, save_model};
pub use predict::{PredictiveComponent, PredictiveMixture};
pub use tree::{MondrianTree, NodeId};
