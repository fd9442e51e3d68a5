//! JSON model files: state labels, target labels, and interval bounds per
//! ordered pair. Pairs that are not listed have bounds `[0, 0]`.

use std::collections::HashSet;

use imc_hitting::{IntervalRateSet, Model, StateSpace, TargetSet};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<String>,
    pub target: Vec<String>,
    pub bounds: Vec<BoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundRecord {
    pub from: String,
    pub to: String,
    pub lower: f64,
    pub upper: f64,
}

impl ModelFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Builds the model. Bound ordering, absorption and reachability are not
    /// checked here; see `Model::validate`.
    pub fn to_model(&self) -> Result<Model, CliError> {
        let space = StateSpace::new(self.states.iter().cloned())
            .map_err(|e| CliError::Parse(format!("states: {e}")))?;
        let n = space.len();
        let target: Vec<usize> = self
            .target
            .iter()
            .map(|l| space.index_of(l))
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Parse(format!("target: {e}")))?;
        let target = TargetSet::new(n, &target).map_err(|e| CliError::Parse(format!("target: {e}")))?;
        let mut lower = DMatrix::zeros(n, n);
        let mut upper = DMatrix::zeros(n, n);
        let mut seen = HashSet::new();
        for (i, b) in self.bounds.iter().enumerate() {
            let field = |e: imc_hitting::Error| CliError::Parse(format!("bounds[{i}]: {e}"));
            let x = space.index_of(&b.from).map_err(field)?;
            let y = space.index_of(&b.to).map_err(field)?;
            if x == y {
                return Err(CliError::Parse(format!(
                    "bounds[{i}]: `from` and `to` are both `{}`",
                    b.from
                )));
            }
            if !seen.insert((x, y)) {
                return Err(CliError::Parse(format!(
                    "bounds[{i}]: pair ({}, {}) listed twice",
                    b.from, b.to
                )));
            }
            if !(b.lower >= 0.0 && b.upper >= 0.0) {
                return Err(CliError::Parse(format!("bounds[{i}]: rates must be non-negative")));
            }
            lower[(x, y)] = b.lower;
            upper[(x, y)] = b.upper;
        }
        let rates = IntervalRateSet::new(lower, upper).map_err(|e| CliError::Parse(e.to_string()))?;
        Model::new(space, target, rates).map_err(|e| CliError::Parse(e.to_string()))
    }

    /// Lists every pair with a non-zero bound.
    pub fn from_model(model: &Model) -> Self {
        let space = model.space();
        let n = model.n_states();
        let rates = model.rates();
        let bounds = (0..n)
            .flat_map(|x| (0..n).map(move |y| (x, y)))
            .filter(|&(x, y)| x != y && (rates.lower(x, y) != 0.0 || rates.upper(x, y) != 0.0))
            .map(|(x, y)| BoundRecord {
                from: space.label(x).to_string(),
                to: space.label(y).to_string(),
                lower: rates.lower(x, y),
                upper: rates.upper(x, y),
            })
            .collect();
        Self {
            states: space.labels().to_vec(),
            target: model
                .target()
                .members()
                .into_iter()
                .map(|x| space.label(x).to_string())
                .collect(),
            bounds,
        }
    }
}
