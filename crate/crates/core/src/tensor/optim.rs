use super::Tensor;
use crate::error::{CaeError, Result};

/// A named trainable tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    name: String,
    value: Tensor,
    grad: Option<Vec<f64>>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
            grad: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// A copy of the value under another name, without gradient.
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self::new(name, self.value.clone())
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` (or zeros when `None`) into the gradient buffer.
    pub fn accumulate_grad(&mut self, g: Option<&[f64]>) {
        let n = self.value.len();
        let buf = self.grad.get_or_insert_with(|| vec![0.0; n]);
        if let Some(g) = g {
            buf.iter_mut().zip(g).for_each(|(b, gi)| *b += gi);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First-order optimizer over an ordered parameter group. The group order
/// must be the same on every call since Adam moments are stored by position.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step: u64,
    moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0) || !learning_rate.is_finite() {
            return Err(CaeError::Config(format!(
                "learning rate must be a non-negative finite number, got {learning_rate}"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            step: 0,
            moments: Vec::new(),
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::adam(), learning_rate)
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update and clears every gradient buffer.
    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param>) -> Result<()> {
        let mut params: Vec<&mut Param> = params.into_iter().collect();
        if let Some(p) = params.iter().find(|p| p.grad.is_none()) {
            return Err(CaeError::Contract(format!("parameter {} has no gradient", p.name)));
        }
        self.step += 1;
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| (vec![0.0; p.value.len()], vec![0.0; p.value.len()]))
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(CaeError::Contract("optimizer group changed size between steps".into()));
        }
        let lr = self.learning_rate;
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            let grad = p.grad.take().expect("checked above");
            if lr == 0.0 {
                continue;
            }
            let data = p.value.data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    for (x, g) in data.iter_mut().zip(&grad) {
                        *x -= lr * g;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (j, g) in grad.iter().enumerate() {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        let mhat = m[j] / c1;
                        let vhat = v[j] / c2;
                        data[j] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    #[test]
    fn sgd_single_step() {
        let mut p = Param::new("p", Tensor::scalar(0.0));
        p.accumulate_grad(Some(&[2.0]));
        let mut opt = Optimizer::sgd(1.0).unwrap();
        opt.step([&mut p]).unwrap();
        assert_eq!(p.value().item(), -2.0);
        assert!(p.grad().is_none());
    }

    #[test]
    fn zero_learning_rate_is_a_null_step() {
        for mut opt in [Optimizer::sgd(0.0).unwrap(), Optimizer::adam(0.0).unwrap()] {
            let mut p = Param::new("p", Tensor::new(vec![2], vec![1.5, -3.0]).unwrap());
            let before = p.value().clone();
            p.accumulate_grad(Some(&[10.0, -4.0]));
            opt.step([&mut p]).unwrap();
            assert_eq!(p.value(), &before);
        }
    }

    #[test]
    fn missing_grad_is_a_contract_error() {
        let mut p = Param::new("p", Tensor::scalar(1.0));
        let mut opt = Optimizer::adam(1e-3).unwrap();
        assert!(matches!(opt.step([&mut p]), Err(CaeError::Contract(_))));
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // (p - 3)^2 from p = 0 with lr 0.1: error contracts by 0.8 per step.
        let mut p = Param::new("p", Tensor::scalar(0.0));
        let mut opt = Optimizer::sgd(0.1).unwrap();
        for _ in 0..200 {
            let mut g = Graph::new();
            let x = g.param(&p);
            let d = g.affine(x, 1.0, -3.0);
            let sq = g.mul(d, d).unwrap();
            let loss = g.sum(sq);
            g.backward(loss).unwrap();
            g.accumulate_grads([&mut p]);
            opt.step([&mut p]).unwrap();
        }
        assert!((p.value().item() - 3.0).abs() < 1e-3);
        // closed form: 3 * (1 - 0.8^200)
        let closed = 3.0 * (1.0 - 0.8f64.powi(200));
        assert!((p.value().item() - closed).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // bias-corrected first step is lr * g / (|g| + eps) ~= lr * sign(g)
        let mut p = Param::new("p", Tensor::scalar(1.0));
        p.accumulate_grad(Some(&[0.25]));
        let mut opt = Optimizer::adam(0.01).unwrap();
        opt.step([&mut p]).unwrap();
        assert!((p.value().item() - (1.0 - 0.01 * 0.25 / (0.25 + 1e-8))).abs() < 1e-15);
    }
}
