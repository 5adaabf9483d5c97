//! Query performance prediction without relevance judgements.
//!
//! Score-based and coherence-based predictors computed from a ranked list
//! and document vectors, prediction-quality evaluation (Kendall's tau,
//! scaled absolute rank error), grid tuning, and linear mixed-effects
//! models for decomposing prediction error by predictor and query type.
//!
//! The crate is `no_std` and only needs `alloc`; file formats and the
//! command line live in the companion `qpp` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod linalg;
pub mod lme;
pub mod optim;
pub mod predictors;
pub mod similarity;
pub mod stats;
pub mod tuning;
pub mod types;

pub use error::{Error, Result};
pub use eval::{Evaluation, KendallResult, Metric, MetricKind};
pub use lme::{LmeDesign, LmeFit, LmeModel, SelectionReport, VarianceDecomposition};
pub use predictors::{Predictor, PredictorConfig, PredictorInputs, PredictorOutput, PredictorSettings};
pub use similarity::{PrunedGraph, SimMatrix, SimilarityKind};
pub use tuning::{TuningGrid, TuningResult};
pub use types::{
    Column, DenseVector, EffectivenessTable, PredictorTable, QueryTable, QueryTypeMap, Qrels,
    RankedDoc, SareTable, ScoredRanking, SparseVector, VectorKind, VectorStore,
};
