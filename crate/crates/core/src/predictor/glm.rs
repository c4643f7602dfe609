//! Logistic regression fitted by gradient descent on standardized features.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlmParams {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub l2: f64,
}

fn default_lr() -> f64 {
    1.0
}
fn default_iter() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-6
}

impl Default for GlmParams {
    fn default() -> Self {
        GlmParams {
            learning_rate: default_lr(),
            max_iter: default_iter(),
            tolerance: default_tol(),
            l2: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Intercept first, then one weight per standardized feature.
    pub theta: Vec<f64>,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(z)) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted mean log-loss and its gradient with respect to `theta` (intercept first).
/// `x` rows are used as given.
pub fn log_loss_and_gradient(theta: &[f64], x: &[Vec<f64>], y: &[bool], w: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = theta.len();
    let mut grad = vec![0.0; d];
    let mut loss = 0.0;
    let wsum: f64 = w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    for ((row, &label), &wi) in x.iter().zip(y).zip(w) {
        let z = theta[0] + row.iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>();
        // -[y log s(z) + (1-y) log(1 - s(z))] = softplus(z) - y z
        loss += wi * (softplus(z) - if label { z } else { 0.0 });
        let r = wi * (sigmoid(z) - label as u8 as f64);
        grad[0] += r;
        for (g, v) in grad[1..].iter_mut().zip(row) {
            *g += r * v;
        }
    }
    loss /= wsum;
    for g in &mut grad {
        *g /= wsum;
    }
    for j in 1..d {
        loss += 0.5 * l2 * theta[j] * theta[j];
        grad[j] += l2 * theta[j];
    }
    (loss, grad)
}

impl LogisticModel {
    pub fn fit(x: &[Vec<f64>], y: &[bool], w: &[f64], p: &GlmParams) -> LogisticModel {
        let n = x.len().max(1) as f64;
        let d = x.first().map_or(0, |r| r.len());
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]).collect())
            .collect();
        let mut theta = vec![0.0; d + 1];
        let mut lr = p.learning_rate;
        let mut iterations = 0;
        let (mut loss, mut grad) = log_loss_and_gradient(&theta, &z, y, w, p.l2);
        while iterations < p.max_iter {
            let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
            if gnorm2.sqrt() < p.tolerance {
                break;
            }
            iterations += 1;
            // Backtracking line search with the Armijo condition.
            loop {
                let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - lr * g).collect();
                let (cl, cg) = log_loss_and_gradient(&cand, &z, y, w, p.l2);
                if cl <= loss - 0.5 * lr * gnorm2 || lr < 1e-12 {
                    theta = cand;
                    loss = cl;
                    grad = cg;
                    lr *= 1.5;
                    break;
                }
                lr *= 0.5;
            }
        }
        LogisticModel {
            mean,
            scale,
            theta,
            iterations,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let z = self.theta[0]
            + x.iter()
                .enumerate()
                .map(|(j, v)| (v - self.mean[j]) / self.scale[j] * self.theta[j + 1])
                .sum::<f64>();
        sigmoid(z)
    }
}
