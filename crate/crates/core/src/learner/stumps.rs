//! Stagewise log-loss boosting of depth-1 trees with Newton leaf values.

use serde::{Deserialize, Serialize};

use super::{
    clamp_prob, logit, standardize, Dataset, LearnerConfig, Model, Params, MODEL_FORMAT_VERSION,
};
use crate::simulator::sigmoid;

/// Split candidates per feature.
pub const N_CANDIDATES: usize = 32;
const MAX_HALVINGS: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    /// Contribution to the log-odds of a standardized expanded row.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

/// Per-feature sort order and quantile cut positions, fixed for all rounds.
struct SplitIndex {
    order: Vec<usize>,
    /// (position in `order` after which to split, threshold value)
    cuts: Vec<(usize, f64)>,
}

fn split_index(x: &[f64], width: usize, n: usize, feature: usize) -> SplitIndex {
    let value = |i: usize| x[i * width + feature];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));
    let mut cuts: Vec<(usize, f64)> = Vec::new();
    for q in 1..=N_CANDIDATES {
        let pos = (q * n) / (N_CANDIDATES + 1);
        if pos == 0 || pos >= n {
            continue;
        }
        // Split between distinct values only; move to the end of a tie run.
        let thr = value(order[pos - 1]);
        let mut end = pos;
        while end < n && value(order[end]) == thr {
            end += 1;
        }
        if end >= n || cuts.last().is_some_and(|c| c.0 == end) {
            continue;
        }
        cuts.push((end, thr));
    }
    SplitIndex { order, cuts }
}

fn loss(scores: &[f64], y: &[bool], w: &[f64]) -> f64 {
    scores
        .iter()
        .zip(y)
        .zip(w)
        .map(|((s, y), w)| {
            let p = sigmoid(*s);
            let l = if *y { -p.ln() } else { -(1.0 - p).ln() };
            w * l
        })
        .sum()
}

pub(super) fn train(data: &Dataset, config: &LearnerConfig) -> Model {
    train_traced(data, config).0
}

/// Trains and returns the weighted training loss after every accepted round,
/// starting with the prior.
pub(super) fn train_traced(data: &Dataset, config: &LearnerConfig) -> (Model, Vec<f64>) {
    let st = standardize(data, &config.interactions);
    let n = data.len();
    let total: f64 = data.weights.iter().sum();
    let w: Vec<f64> = data.weights.iter().map(|v| v / total).collect();
    let base_score = logit(clamp_prob(data.positive_rate()));
    let mut stumps = Vec::new();
    let mut scores = vec![base_score; n];
    let mut current = loss(&scores, &data.labels, &w);
    let mut trace = vec![current];

    if !data.is_single_class() {
        let index: Vec<SplitIndex> = (0..st.width)
            .map(|f| split_index(&st.x, st.width, n, f))
            .collect();
        let lambda = config.l2 + 1e-12;
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        for _ in 0..config.max_stumps {
            for i in 0..n {
                let p = sigmoid(scores[i]);
                let y = f64::from(u8::from(data.labels[i]));
                g[i] = w[i] * (p - y);
                h[i] = w[i] * p * (1.0 - p);
            }
            let g_all: f64 = g.iter().sum();
            let h_all: f64 = h.iter().sum();
            let parent = g_all * g_all / (h_all + lambda);
            let mut best: Option<(f64, Stump)> = None;
            for (feature, idx) in index.iter().enumerate() {
                let (mut gl, mut hl, mut at) = (0.0, 0.0, 0);
                for &(pos, thr) in &idx.cuts {
                    while at < pos {
                        gl += g[idx.order[at]];
                        hl += h[idx.order[at]];
                        at += 1;
                    }
                    let (gr, hr) = (g_all - gl, h_all - hl);
                    let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                    if best.as_ref().is_none_or(|(b, _)| gain > *b) {
                        best = Some((
                            gain,
                            Stump {
                                feature,
                                threshold: thr,
                                left: -gl / (hl + lambda),
                                right: -gr / (hr + lambda),
                            },
                        ));
                    }
                }
            }
            let Some((gain, mut stump)) = best else { break };
            if gain.is_nan() || gain <= 0.0 {
                break;
            }
            stump.left *= config.learning_rate;
            stump.right *= config.learning_rate;
            let mut accepted = None;
            for _ in 0..MAX_HALVINGS {
                let cand: Vec<f64> = (0..n)
                    .map(|i| scores[i] + stump.eval(&st.x[i * st.width..(i + 1) * st.width]))
                    .collect();
                let value = loss(&cand, &data.labels, &w);
                if value < current {
                    accepted = Some((cand, value));
                    break;
                }
                stump.left *= 0.5;
                stump.right *= 0.5;
            }
            let Some((cand, value)) = accepted else { break };
            scores = cand;
            current = value;
            trace.push(current);
            stumps.push(stump);
        }
    }

    let model = Model {
        format_version: MODEL_FORMAT_VERSION,
        schema: data.schema.clone(),
        n_features: data.n_features,
        interactions: config.interactions.clone(),
        feature_mean: st.mean,
        feature_scale: st.scale,
        params: Params::BoostedStumps { base_score, stumps },
        config: config.clone(),
    };
    (model, trace)
}
