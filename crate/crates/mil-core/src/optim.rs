use crate::error::{CoreError, Result};
use crate::real::{real, Real};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimKind {
    /// Adaptive-moment estimation with bias correction.
    Adam { beta1: f64, beta2: f64, eps: f64 },
    /// Momentum SGD: v <- momentum * v + g; p <- p - lr * v.
    MomentumSgd { momentum: f64 },
}

impl OptimKind {
    pub fn adam() -> Self {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn momentum_sgd(momentum: f64) -> Self {
        OptimKind::MomentumSgd { momentum }
    }
}

struct Slot<E> {
    first: Tensor<E>,
    second: Option<Tensor<E>>,
}

/// Optimizer state: per-parameter accumulators whose shapes mirror the
/// parameter set exactly, plus the schedule-controlled learning rate.
/// Weight decay is applied as an L2 penalty added to the gradients.
pub struct Optimizer<E = f32> {
    kind: OptimKind,
    lr: f64,
    weight_decay: f64,
    step: u64,
    slots: Vec<Slot<E>>,
}

impl<E: Real> Optimizer<E> {
    pub fn new(kind: OptimKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<E>], grads: &[&Tensor<E>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(CoreError::ShapeMismatch {
                context: "optimizer step",
                expected: vec![params.len()],
                got: vec![grads.len()],
            });
        }
        if self.slots.is_empty() {
            let second = matches!(self.kind, OptimKind::Adam { .. });
            self.slots = params
                .iter()
                .map(|p| Slot {
                    first: Tensor::zeros(p.shape()),
                    second: second.then(|| Tensor::zeros(p.shape())),
                })
                .collect();
        }
        if self.slots.len() != params.len() {
            return Err(CoreError::ShapeMismatch {
                context: "optimizer accumulators",
                expected: vec![self.slots.len()],
                got: vec![params.len()],
            });
        }
        for ((p, g), slot) in params.iter().zip(grads).zip(&self.slots) {
            if p.shape() != g.shape() || p.shape() != slot.first.shape() {
                return Err(CoreError::ShapeMismatch {
                    context: "optimizer step",
                    expected: p.shape().to_vec(),
                    got: g.shape().to_vec(),
                });
            }
        }

        self.step += 1;
        let lr = real::<E>(self.lr);
        let wd = real::<E>(self.weight_decay);
        match self.kind {
            OptimKind::MomentumSgd { momentum } => {
                let mu = real::<E>(momentum);
                for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    let pd = p.data_mut();
                    let vd = slot.first.data_mut();
                    for ((pv, &gv), v) in pd.iter_mut().zip(g.data()).zip(vd.iter_mut()) {
                        let grad = gv + wd * *pv;
                        *v = mu * *v + grad;
                        *pv = *pv - lr * *v;
                    }
                }
            }
            OptimKind::Adam { beta1, beta2, eps } => {
                let b1 = real::<E>(beta1);
                let b2 = real::<E>(beta2);
                let epsilon = real::<E>(eps);
                let t = self.step as i32;
                let c1 = real::<E>(1.0 - beta1.powi(t));
                let c2 = real::<E>(1.0 - beta2.powi(t));
                let one = E::one();
                for ((p, g), slot) in params.iter_mut().zip(grads).zip(&mut self.slots) {
                    let pd = p.data_mut();
                    let md = slot.first.data_mut();
                    let vd = slot.second.as_mut().expect("adam second moment").data_mut();
                    for (((pv, &gv), m), v) in
                        pd.iter_mut().zip(g.data()).zip(md.iter_mut()).zip(vd.iter_mut())
                    {
                        let grad = gv + wd * *pv;
                        *m = b1 * *m + (one - b1) * grad;
                        *v = b2 * *v + (one - b2) * grad * grad;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *pv = *pv - lr * m_hat / (v_hat.sqrt() + epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}
