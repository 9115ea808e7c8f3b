use super::config::OptimizerKind;
use crate::Vector;

/// First-order optimizer over a list of rows.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: i32,
    first: Vec<Vector>,
    second: Vec<Vector>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, rows: usize, dim: usize) -> Self {
        Self { kind, lr, step: 0, first: vec![Vector::zeros(dim); rows], second: vec![Vector::zeros(dim); rows] }
    }

    pub fn apply(&mut self, params: &mut [Vector], grads: &[Vector]) {
        self.step += 1;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            match self.kind {
                OptimizerKind::Sgd => p.axpy(-self.lr, g, 1.0),
                OptimizerKind::Momentum { momentum } => {
                    self.first[i] = &self.first[i] * momentum + g;
                    p.axpy(-self.lr, &self.first[i], 1.0);
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    self.first[i] = &self.first[i] * beta1 + g * (1.0 - beta1);
                    self.second[i] = &self.second[i] * beta2 + g.component_mul(g) * (1.0 - beta2);
                    let c1 = 1.0 - beta1.powi(self.step);
                    let c2 = 1.0 - beta2.powi(self.step);
                    for j in 0..p.len() {
                        let m = self.first[i][j] / c1;
                        let v = self.second[i][j] / c2;
                        p[j] -= self.lr * m / (v.sqrt() + eps);
                    }
                }
            }
        }
    }
}
