//! L2-regularized weighted logistic regression fitted by full-batch damped
//! Newton iterations on standardized features.

use nalgebra::{DMatrix, DVector};

use super::{logit, standardize, Dataset, LearnerConfig, Model, Params, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};

/// softplus(s) = ln(1 + e^s), stable for large |s|.
fn softplus(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

struct Problem<'a> {
    x: &'a [f64],
    width: usize,
    y: Vec<f64>,
    w: Vec<f64>,
    l2: f64,
}

impl Problem<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.width..(i + 1) * self.width]
    }

    fn scores(&self, theta: &[f64]) -> Vec<f64> {
        let (beta, b0) = theta.split_at(self.width);
        (0..self.y.len())
            .map(|i| b0[0] + super::dot(beta, self.row(i)))
            .collect()
    }

    /// Weighted mean negative log-likelihood plus the ridge penalty.
    fn objective(&self, theta: &[f64]) -> f64 {
        let s = self.scores(theta);
        let nll: f64 = s
            .iter()
            .zip(&self.y)
            .zip(&self.w)
            .map(|((s, y), w)| w * (softplus(*s) - y * s))
            .sum();
        let ridge: f64 = theta[..self.width].iter().map(|b| b * b).sum();
        nll + 0.5 * self.l2 * ridge
    }

    fn gradient_hessian(&self, theta: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.width + 1;
        let mut g = DVector::zeros(d);
        let mut h = DMatrix::zeros(d, d);
        let s = self.scores(theta);
        let mut row = vec![0.0; d];
        row[self.width] = 1.0;
        for (i, &si) in s.iter().enumerate() {
            row[..self.width].copy_from_slice(self.row(i));
            let p = crate::simulator::sigmoid(si);
            let r = self.w[i] * (p - self.y[i]);
            let c = self.w[i] * p * (1.0 - p);
            for a in 0..d {
                g[a] += r * row[a];
                let ca = c * row[a];
                for b in 0..=a {
                    h[(a, b)] += ca * row[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        for a in 0..self.width {
            g[a] += self.l2 * theta[a];
            h[(a, a)] += self.l2;
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let mut jitter = 1e-10;
    loop {
        let mut hj = h.clone();
        for a in 0..hj.nrows() {
            hj[(a, a)] += jitter;
        }
        if let Some(chol) = hj.cholesky() {
            return chol.solve(g);
        }
        jitter *= 100.0;
        if jitter > 1e6 {
            return g.clone();
        }
    }
}

pub(super) fn train(data: &Dataset, config: &LearnerConfig) -> Result<Model> {
    if data.is_single_class() {
        return Err(Error::DegenerateModel(
            "logistic regression needs both sold and unsold samples".into(),
        ));
    }
    let st = standardize(data, &config.interactions);
    let total: f64 = data.weights.iter().sum();
    let problem = Problem {
        x: &st.x,
        width: st.width,
        y: data
            .labels
            .iter()
            .map(|y| f64::from(u8::from(*y)))
            .collect(),
        w: data.weights.iter().map(|w| w / total).collect(),
        l2: config.l2,
    };

    let mut theta = vec![0.0; st.width + 1];
    theta[st.width] = logit(data.positive_rate());
    let mut current = problem.objective(&theta);
    for _ in 0..config.epochs {
        let (g, h) = problem.gradient_hessian(&theta);
        if g.amax() < 1e-13 {
            break;
        }
        let dir = newton_direction(&g, &h);
        let mut step = config.learning_rate;
        let mut accepted = false;
        while step > 1e-12 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(dir.iter())
                .map(|(t, d)| t - step * d)
                .collect();
            let value = problem.objective(&cand);
            if value < current {
                theta = cand;
                current = value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let intercept = theta.pop().expect("intercept present");
    Ok(Model {
        format_version: MODEL_FORMAT_VERSION,
        schema: data.schema.clone(),
        n_features: data.n_features,
        interactions: config.interactions.clone(),
        feature_mean: st.mean,
        feature_scale: st.scale,
        params: Params::Logistic {
            coefficients: theta,
            intercept,
        },
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::softplus;

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
