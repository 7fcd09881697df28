use thiserror::Error;

use crate::aba::{stable_extensions, AbaError, Abaf, Limits, Status};
use crate::depgraph::{build_dependency_graph, node_features};
use crate::nn::{Model, NnError, Scalar};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("exact oracle failed: {0}")]
    Oracle(#[from] AbaError),
    #[error("exact oracle ran out of budget")]
    OracleTimedOut,
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Scores every assumption of a framework with an estimate of its credulous
/// acceptance in `[0, 1]`.
pub trait Predictor: Sync {
    /// One score per entry of `abaf.assumptions()`, in the same order.
    fn scores(&self, abaf: &Abaf) -> Result<Vec<f64>, PredictorError>;
}

/// Exact acceptance: 1 for credulously accepted assumptions, 0 otherwise.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub limits: Limits,
}

impl Default for OraclePredictor {
    fn default() -> Self {
        OraclePredictor {
            limits: Limits::unbounded(),
        }
    }
}

impl Predictor for OraclePredictor {
    fn scores(&self, abaf: &Abaf) -> Result<Vec<f64>, PredictorError> {
        let result = stable_extensions(abaf, &self.limits)?;
        if result.status == Status::TimedOut {
            return Err(PredictorError::OracleTimedOut);
        }
        Ok(abaf
            .assumptions()
            .iter()
            .map(|&a| if result.is_accepted(a) { 1.0 } else { 0.0 })
            .collect())
    }
}

/// Out-degree of the assumption node divided by the largest assumption out-degree.
#[derive(Debug, Clone, Copy, Default)]
pub struct DegreePredictor;

impl Predictor for DegreePredictor {
    fn scores(&self, abaf: &Abaf) -> Result<Vec<f64>, PredictorError> {
        let g = build_dependency_graph(abaf);
        let x = node_features(&g);
        let out: Vec<f64> = abaf
            .assumptions()
            .iter()
            .map(|&a| x.rows[g.node_of_atom(a)][1])
            .collect();
        let max = out.iter().copied().fold(0.0, f64::max);
        Ok(out.into_iter().map(|d| if max > 0.0 { d / max } else { 0.0 }).collect())
    }
}

/// Sigmoid scores of a trained network.
pub struct GnnPredictor<'a, T: Scalar> {
    pub model: &'a Model<T>,
}

impl<'a, T: Scalar> GnnPredictor<'a, T> {
    pub fn new(model: &'a Model<T>) -> Self {
        GnnPredictor { model }
    }
}

impl<T: Scalar> Predictor for GnnPredictor<'_, T> {
    fn scores(&self, abaf: &Abaf) -> Result<Vec<f64>, PredictorError> {
        Ok(self.model.predict(abaf)?.scores)
    }
}
