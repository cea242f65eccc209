//! Weighted probabilistic classifiers and k-fold grid search.

mod grid;
mod logistic;
mod stumps;

use serde::{Deserialize, Serialize};

use crate::domain::{FeatureVector, SchemaId};
use crate::error::{invalid, Error, Result};
use crate::simulator::sigmoid;

pub use grid::{grid_search, GridRow, GridSearch};
pub use stumps::Stump;

pub const PROB_FLOOR: f64 = 1e-6;
pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Row-major design matrix with labels and positive sample weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub schema: SchemaId,
    pub n_features: usize,
    pub features: Vec<f64>,
    pub labels: Vec<bool>,
    pub weights: Vec<f64>,
}

impl Dataset {
    pub fn new(schema: SchemaId, n_features: usize) -> Self {
        Self {
            schema,
            n_features,
            features: Vec::new(),
            labels: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn from_rows(
        schema: SchemaId,
        n_features: usize,
        rows: &[Vec<f64>],
        labels: &[bool],
        weights: Option<&[f64]>,
    ) -> Result<Self> {
        let mut d = Self::new(schema, n_features);
        if rows.len() != labels.len() || weights.is_some_and(|w| w.len() != rows.len()) {
            return Err(invalid(
                "rows, labels and weights must have the same length",
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            d.push(row, labels[i], weights.map_or(1.0, |w| w[i]))?;
        }
        Ok(d)
    }

    pub fn push(&mut self, row: &[f64], label: bool, weight: f64) -> Result<()> {
        if row.len() != self.n_features {
            return Err(invalid(format!(
                "row has {} features, dataset expects {}",
                row.len(),
                self.n_features
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(invalid("features must be finite"));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(invalid(format!(
                "sample weight must be positive, got {weight}"
            )));
        }
        self.features.extend_from_slice(row);
        self.labels.push(label);
        self.weights.push(weight);
        Ok(())
    }

    pub fn push_vector(&mut self, fv: &FeatureVector, label: bool, weight: f64) -> Result<()> {
        if fv.schema != self.schema {
            return Err(schema_mismatch(&self.schema, &fv.schema));
        }
        self.push(&fv.values, label, weight)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut d = Dataset::new(self.schema.clone(), self.n_features);
        for &i in idx {
            d.features.extend_from_slice(self.row(i));
            d.labels.push(self.labels[i]);
            d.weights.push(self.weights[i]);
        }
        d
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Dataset> {
        if weights.len() != self.len() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("replacement weights must be positive, one per row"));
        }
        Ok(Dataset {
            weights,
            ..self.clone()
        })
    }

    /// Weighted share of positive labels.
    pub fn positive_rate(&self) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let pos: f64 = self
            .labels
            .iter()
            .zip(&self.weights)
            .filter(|(y, _)| **y)
            .map(|(_, w)| w)
            .sum();
        pos / total
    }

    pub fn is_single_class(&self) -> bool {
        self.labels.iter().all(|y| *y) || self.labels.iter().all(|y| !*y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Logistic,
    BoostedStumps,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// Logistic: initial step length of each damped Newton step.
    /// Boosted stumps: shrinkage applied to every stump.
    pub learning_rate: f64,
    pub l2: f64,
    /// Logistic: number of full-batch Newton iterations.
    pub epochs: usize,
    /// Boosted stumps: number of boosting rounds.
    pub max_stumps: usize,
    pub rng_seed: u64,
    /// Products of raw feature pairs appended before standardization.
    pub interactions: Vec<(usize, usize)>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Logistic,
            learning_rate: 1.0,
            l2: 1e-4,
            epochs: 30,
            max_stumps: 200,
            rng_seed: 0,
            interactions: Vec::new(),
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(invalid("l2 must be >= 0"));
        }
        match self.kind {
            LearnerKind::Logistic if self.epochs == 0 => Err(invalid("epochs must be positive")),
            LearnerKind::BoostedStumps if self.max_stumps == 0 => {
                Err(invalid("max_stumps must be positive"))
            }
            _ => Ok(()),
        }
    }

    fn check_interactions(&self, n_features: usize) -> Result<()> {
        match self
            .interactions
            .iter()
            .find(|(a, b)| *a >= n_features || *b >= n_features)
        {
            Some(pair) => Err(invalid(format!(
                "interaction {pair:?} is out of range for {n_features} features"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Params {
    Logistic {
        /// Coefficients on standardized expanded features.
        coefficients: Vec<f64>,
        intercept: f64,
    },
    BoostedStumps {
        base_score: f64,
        stumps: Vec<Stump>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format_version: u32,
    pub schema: SchemaId,
    pub n_features: usize,
    pub interactions: Vec<(usize, usize)>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub params: Params,
    pub config: LearnerConfig,
}

impl Model {
    pub fn kind(&self) -> LearnerKind {
        match self.params {
            Params::Logistic { .. } => LearnerKind::Logistic,
            Params::BoostedStumps { .. } => LearnerKind::BoostedStumps,
        }
    }

    /// Model that predicts `p` everywhere.
    pub fn constant(schema: SchemaId, n_features: usize, p: f64, config: &LearnerConfig) -> Self {
        let width = n_features + config.interactions.len();
        Self {
            format_version: MODEL_FORMAT_VERSION,
            schema,
            n_features,
            interactions: config.interactions.clone(),
            feature_mean: vec![0.0; width],
            feature_scale: vec![1.0; width],
            params: Params::Logistic {
                coefficients: vec![0.0; width],
                intercept: logit(clamp_prob(p)),
            },
            config: config.clone(),
        }
    }

    fn standardized(&self, raw: &[f64]) -> Vec<f64> {
        let mut x = expand(raw, &self.interactions);
        for (i, v) in x.iter_mut().enumerate() {
            *v = (*v - self.feature_mean[i]) / self.feature_scale[i];
        }
        x
    }

    /// Raw score (log-odds) for an unchecked raw row.
    pub fn score_row(&self, raw: &[f64]) -> f64 {
        let x = self.standardized(raw);
        match &self.params {
            Params::Logistic {
                coefficients,
                intercept,
            } => intercept + dot(coefficients, &x),
            Params::BoostedStumps { base_score, stumps } => {
                base_score + stumps.iter().map(|s| s.eval(&x)).sum::<f64>()
            }
        }
    }

    pub fn predict_row(&self, raw: &[f64]) -> f64 {
        clamp_prob(sigmoid(self.score_row(raw)))
    }

    /// Logistic coefficients mapped back to the unstandardized expanded features.
    pub fn raw_coefficients(&self) -> Option<(Vec<f64>, f64)> {
        match &self.params {
            Params::Logistic {
                coefficients,
                intercept,
            } => {
                let beta: Vec<f64> = coefficients
                    .iter()
                    .zip(&self.feature_scale)
                    .map(|(b, s)| b / s)
                    .collect();
                let shift: f64 = beta
                    .iter()
                    .zip(&self.feature_mean)
                    .map(|(b, m)| b * m)
                    .sum();
                Some((beta, intercept - shift))
            }
            Params::BoostedStumps { .. } => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Model = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        let width = m.n_features + m.interactions.len();
        if m.feature_mean.len() != width || m.feature_scale.len() != width {
            return Err(Error::Parse(
                "standardization length does not match schema".into(),
            ));
        }
        if let Params::Logistic { coefficients, .. } = &m.params {
            if coefficients.len() != width {
                return Err(Error::Parse(
                    "coefficient count does not match schema".into(),
                ));
            }
        }
        Ok(m)
    }
}

pub(crate) fn schema_mismatch(expected: &SchemaId, found: &SchemaId) -> Error {
    Error::SchemaMismatch {
        expected: expected.0.clone(),
        found: found.0.clone(),
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn expand(raw: &[f64], interactions: &[(usize, usize)]) -> Vec<f64> {
    let mut x = Vec::with_capacity(raw.len() + interactions.len());
    x.extend_from_slice(raw);
    x.extend(interactions.iter().map(|&(a, b)| raw[a] * raw[b]));
    x
}

/// Expanded design matrix plus weighted standardization constants.
pub(crate) struct Standardized {
    pub x: Vec<f64>,
    pub width: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

pub(crate) fn standardize(data: &Dataset, interactions: &[(usize, usize)]) -> Standardized {
    let width = data.n_features + interactions.len();
    let n = data.len();
    let mut x = Vec::with_capacity(n * width);
    for i in 0..n {
        x.extend(expand(data.row(i), interactions));
    }
    let total: f64 = data.weights.iter().sum();
    let mut mean = vec![0.0; width];
    for i in 0..n {
        let w = data.weights[i] / total;
        for (m, v) in mean.iter_mut().zip(&x[i * width..(i + 1) * width]) {
            *m += w * v;
        }
    }
    let mut var = vec![0.0; width];
    for i in 0..n {
        let w = data.weights[i] / total;
        for c in 0..width {
            let d = x[i * width + c] - mean[c];
            var[c] += w * d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = v.sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for row in x.chunks_mut(width.max(1)) {
        for c in 0..width {
            row[c] = (row[c] - mean[c]) / scale[c];
        }
    }
    Standardized {
        x,
        width,
        mean,
        scale,
    }
}

/// Fits a model. Logistic regression rejects single-class data; boosted
/// stumps fall back to the prior.
pub fn train(data: &Dataset, config: &LearnerConfig) -> Result<Model> {
    config.validate()?;
    config.check_interactions(data.n_features)?;
    if data.is_empty() {
        return Err(Error::DegenerateModel("empty training set".into()));
    }
    match config.kind {
        LearnerKind::Logistic => logistic::train(data, config),
        LearnerKind::BoostedStumps => Ok(stumps::train(data, config)),
    }
}

pub fn predict(model: &Model, fv: &FeatureVector) -> Result<f64> {
    if fv.schema != model.schema {
        return Err(schema_mismatch(&model.schema, &fv.schema));
    }
    if fv.values.len() != model.n_features {
        return Err(Error::Contract(format!(
            "vector has {} values, model expects {}",
            fv.values.len(),
            model.n_features
        )));
    }
    Ok(model.predict_row(&fv.values))
}

/// Weighted mean log-loss with clamped probabilities.
pub fn log_loss(model: &Model, data: &Dataset) -> f64 {
    let total: f64 = data.weights.iter().sum();
    (0..data.len())
        .map(|i| {
            let p = model.predict_row(data.row(i));
            let l = if data.labels[i] {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            };
            data.weights[i] * l
        })
        .sum::<f64>()
        / total
}
