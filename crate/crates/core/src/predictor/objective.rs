//! Cross-entropy objectives and their analytic gradients.
//!
//! Rows are sparse over a compact feature space. Both objectives are
//! `Σ_i weight_i · CE_i + (λ/2)·‖W‖²` over a mini-batch, with biases left
//! unpenalized. Summing rather than averaging keeps the step per example
//! independent of the batch size.

/// Sparse row over compact feature indices.
pub type SparseRow = Vec<(usize, f64)>;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(z) + (1-y) ln(1-σ(z))]`, computed stably from the logit.
pub fn cross_entropy_logit(z: f64, y: bool) -> f64 {
    let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
    if y {
        softplus - z
    } else {
        softplus
    }
}

fn sparse_dot(row: &[(usize, f64)], dense: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * dense[j]).sum()
}

/// One binary example with its loss weight.
#[derive(Debug, Clone)]
pub struct BinaryExample {
    pub x: SparseRow,
    pub y: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticGrad {
    pub loss: f64,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Loss and gradient of weighted logistic regression over `batch`.
pub fn logistic_loss_grad(
    weights: &[f64],
    bias: f64,
    batch: &[&BinaryExample],
    weight_decay: f64,
) -> LogisticGrad {
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    let mut loss = 0.0;
    for ex in batch {
        let z = sparse_dot(&ex.x, weights) + bias;
        loss += ex.weight * cross_entropy_logit(z, ex.y);
        let delta = ex.weight * (sigmoid(z) - ex.y as u8 as f64);
        for &(j, v) in &ex.x {
            grad[j] += delta * v;
        }
        grad_b += delta;
    }
    let mut reg = 0.0;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g += weight_decay * w;
        reg += w * w;
    }
    LogisticGrad {
        loss: loss + 0.5 * weight_decay * reg,
        weights: grad,
        bias: grad_b,
    }
}

/// Parameters of the shared-bottleneck multi-task model.
///
/// `bottleneck` is `dim × k` row-major; the hidden code is `h = Bᵀx` and
/// head `l` scores `σ(v_l·h + c_l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskParams {
    pub dim: usize,
    pub k: usize,
    pub bottleneck: Vec<f64>,
    pub heads: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

/// One multi-task example: per-task target (`None` = no label) and weight.
#[derive(Debug, Clone)]
pub struct MultiExample {
    pub x: SparseRow,
    pub targets: Vec<Option<bool>>,
    pub weights: Vec<f64>,
}

impl MultiTaskParams {
    pub fn hidden(&self, x: &[(usize, f64)]) -> Vec<f64> {
        let mut h = vec![0.0; self.k];
        for &(j, v) in x {
            let row = &self.bottleneck[j * self.k..(j + 1) * self.k];
            for (hh, b) in h.iter_mut().zip(row) {
                *hh += v * b;
            }
        }
        h
    }

    pub fn logit(&self, h: &[f64], task: usize) -> f64 {
        self.heads[task]
            .iter()
            .zip(h)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + self.biases[task]
    }

    pub fn zeros_like(&self) -> MultiTaskParams {
        MultiTaskParams {
            dim: self.dim,
            k: self.k,
            bottleneck: vec![0.0; self.bottleneck.len()],
            heads: self.heads.iter().map(|h| vec![0.0; h.len()]).collect(),
            biases: vec![0.0; self.biases.len()],
        }
    }
}

/// Loss and gradient (same shape as the parameters) of the joint objective.
pub fn multitask_loss_grad(
    params: &MultiTaskParams,
    batch: &[&MultiExample],
    weight_decay: f64,
) -> (f64, MultiTaskParams) {
    let mut grad = params.zeros_like();
    let mut loss = 0.0;
    let mut grad_h = vec![0.0; params.k];
    for ex in batch {
        let h = params.hidden(&ex.x);
        grad_h.iter_mut().for_each(|g| *g = 0.0);
        for (l, target) in ex.targets.iter().enumerate() {
            let Some(y) = *target else { continue };
            let w = ex.weights[l];
            let z = params.logit(&h, l);
            loss += w * cross_entropy_logit(z, y);
            let delta = w * (sigmoid(z) - y as u8 as f64);
            for ((gv, hh), (gh, v)) in grad.heads[l]
                .iter_mut()
                .zip(&h)
                .zip(grad_h.iter_mut().zip(&params.heads[l]))
            {
                *gv += delta * hh;
                *gh += delta * v;
            }
            grad.biases[l] += delta;
        }
        for &(j, v) in &ex.x {
            let row = &mut grad.bottleneck[j * params.k..(j + 1) * params.k];
            for (g, gh) in row.iter_mut().zip(&grad_h) {
                *g += v * gh;
            }
        }
    }
    let mut reg = 0.0;
    for (g, w) in grad.bottleneck.iter_mut().zip(&params.bottleneck) {
        *g += weight_decay * w;
        reg += w * w;
    }
    for (gh, wh) in grad.heads.iter_mut().zip(&params.heads) {
        for (g, w) in gh.iter_mut().zip(wh) {
            *g += weight_decay * w;
            reg += w * w;
        }
    }
    (loss + 0.5 * weight_decay * reg, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_and_ce_are_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!(cross_entropy_logit(800.0, true).abs() < 1e-12);
        assert!((cross_entropy_logit(800.0, false) - 800.0).abs() < 1e-9);
        assert!((cross_entropy_logit(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn logistic_grad_matches_finite_differences() {
        let batch = [
            BinaryExample {
                x: vec![(0, 0.6), (2, 0.8)],
                y: true,
                weight: 1.0,
            },
            BinaryExample {
                x: vec![(1, 1.0)],
                y: false,
                weight: 2.0,
            },
        ];
        let refs: Vec<&BinaryExample> = batch.iter().collect();
        let w = vec![0.3, -0.2, 0.1];
        let b = 0.05;
        let g = logistic_loss_grad(&w, b, &refs, 0.01);
        let eps = 1e-6;
        for j in 0..3 {
            let mut wp = w.clone();
            wp[j] += eps;
            let mut wm = w.clone();
            wm[j] -= eps;
            let fd = (logistic_loss_grad(&wp, b, &refs, 0.01).loss
                - logistic_loss_grad(&wm, b, &refs, 0.01).loss)
                / (2.0 * eps);
            assert!((fd - g.weights[j]).abs() < 1e-8);
        }
    }
}
