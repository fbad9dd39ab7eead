//! Adam and Adamax with bias correction and optional decoupled weight decay.

use lingua_model::{Float, Gradients, Mat};

use crate::{Error, OptimizerKind, Result, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer<T> {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Number of updates applied so far.
    pub t: u64,
    /// First moments.
    pub m: Vec<Mat<T>>,
    /// Second moments (Adam) or infinity norms (Adamax).
    pub v: Vec<Mat<T>>,
}

impl<T: Float> Optimizer<T> {
    pub fn new(
        kind: OptimizerKind,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
        params: &[Mat<T>],
    ) -> Self {
        let zeros: Vec<Mat<T>> = params.iter().map(|p| Mat::zeros(p.rows, p.cols)).collect();
        Self {
            kind,
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn from_config(cfg: &TrainConfig, params: &[Mat<T>]) -> Self {
        Self::new(
            cfg.optimizer,
            cfg.beta1,
            cfg.beta2,
            cfg.eps,
            cfg.weight_decay,
            params,
        )
    }

    /// Applies one update. Nothing changes if any gradient is non-finite.
    pub fn update(&mut self, params: &mut [Mat<T>], grads: &Gradients<T>, lr: f64) -> Result<()> {
        let g = &grads.tensors;
        if g.len() != params.len()
            || self.m.len() != params.len()
            || g.iter()
                .zip(params.iter())
                .any(|(a, b)| a.rows != b.rows || a.cols != b.cols)
        {
            return Err(Error::GradientShape);
        }
        if !grads.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let decay = 1.0 - lr * self.weight_decay;
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i].data, &mut self.v[i].data);
            for (j, w) in p.data.iter_mut().enumerate() {
                let gj = g[i].data[j].f64();
                let mut wj = w.f64();
                if self.weight_decay != 0.0 {
                    wj *= decay;
                }
                let mj = b1 * m[j].f64() + (1.0 - b1) * gj;
                let step = match self.kind {
                    OptimizerKind::Adam => {
                        let vj = b2 * v[j].f64() + (1.0 - b2) * gj * gj;
                        v[j] = T::of(vj);
                        (mj / bc1) / ((vj / bc2).sqrt() + eps)
                    }
                    OptimizerKind::Adamax => {
                        let uj = (b2 * v[j].f64()).max(gj.abs() + eps);
                        v[j] = T::of(uj);
                        (mj / bc1) / uj
                    }
                };
                m[j] = T::of(mj);
                *w = T::of(wj - lr * step);
            }
        }
        Ok(())
    }
}
