use serde::{Deserialize, Serialize};

use super::{Mlp, NormMode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradScope {
    /// `gamma` and `beta` only.
    NormAffineOnly,
    AllWeightsAndAffine,
}

#[derive(Clone, Copy, Debug)]
pub enum Loss<'a> {
    /// Mean Shannon entropy of the predictions; needs no labels.
    Entropy,
    /// Mean cross-entropy against the given labels.
    CrossEntropy(&'a [usize]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightGrads<T> {
    pub w1: Matrix<T>,
    pub b1: Vec<T>,
    pub w2: Matrix<T>,
    pub b2: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub scope: GradScope,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    /// Present iff `scope` is `AllWeightsAndAffine`.
    pub weights: Option<WeightGrads<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn all_finite(&self) -> bool {
        let vecs_ok = self.gamma.iter().chain(&self.beta).all(|v| v.is_finite());
        vecs_ok
            && self.weights.as_ref().is_none_or(|w| {
                w.w1.all_finite()
                    && w.w2.all_finite()
                    && w.b1.iter().chain(&w.b2).all(|v| v.is_finite())
            })
    }

    /// Euclidean norm over every entry present.
    pub fn norm(&self) -> T {
        let mut s: T = self.gamma.iter().chain(&self.beta).map(|&v| v * v).sum();
        if let Some(w) = &self.weights {
            s += w
                .w1
                .as_slice()
                .iter()
                .chain(&w.b1)
                .chain(w.w2.as_slice())
                .chain(&w.b2)
                .map(|&v| v * v)
                .sum();
        }
        s.sqrt()
    }
}

impl<T: Scalar> Mlp<T> {
    fn check_labels(&self, batch: &Matrix<T>, loss: Loss<'_>) -> Result<()> {
        if let Loss::CrossEntropy(labels) = loss {
            if labels.len() != batch.rows() {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for a batch of {}",
                    labels.len(),
                    batch.rows()
                )));
            }
            let c = self.arch.num_classes;
            if let Some(&label) = labels.iter().find(|&&l| l >= c) {
                return Err(Error::LabelOutOfRange { label, num_classes: c });
            }
        }
        Ok(())
    }

    /// Scalar loss for the batch.
    pub fn loss(&self, batch: &Matrix<T>, mode: NormMode, loss: Loss<'_>) -> Result<T> {
        self.check_labels(batch, loss)?;
        let cache = self.forward_cached(batch, mode)?;
        Ok(loss_from_probs(&cache.probs, loss))
    }

    /// Exact gradients of the scalar loss for the parameters in `scope`.
    ///
    /// In `BatchStats` mode the gradient flows through the batch mean and
    /// variance; in `RunningStats` mode the statistics are constants.
    pub fn backward(
        &self,
        batch: &Matrix<T>,
        mode: NormMode,
        loss: Loss<'_>,
        scope: GradScope,
    ) -> Result<Gradients<T>> {
        self.check_labels(batch, loss)?;
        let cache = self.forward_cached(batch, mode)?;
        Ok(self.backward_from_cache(batch, mode, loss, scope, &cache))
    }

    pub(crate) fn backward_from_cache(
        &self,
        batch: &Matrix<T>,
        mode: NormMode,
        loss: Loss<'_>,
        scope: GradScope,
        cache: &super::ForwardCache<T>,
    ) -> Gradients<T> {
        let n = batch.rows();
        let h = self.arch.hidden_dim;
        let inv_n = T::lit(n as f64).recip();

        // dL/dlogits
        let mut dlogits = cache.probs.clone();
        match loss {
            Loss::CrossEntropy(labels) => {
                for (i, &y) in labels.iter().enumerate() {
                    let row = dlogits.row_mut(i);
                    row[y] -= T::one();
                    row.iter_mut().for_each(|v| *v *= inv_n);
                }
            }
            Loss::Entropy => {
                for i in 0..n {
                    let p = cache.probs.row(i);
                    let ent = super::row_entropy(p);
                    let row = dlogits.row_mut(i);
                    for (g, &pk) in row.iter_mut().zip(p) {
                        let plogp = if pk > T::zero() { pk * pk.ln() } else { T::zero() };
                        *g = -(plogp + pk * ent) * inv_n;
                    }
                }
            }
        }

        // back through the output layer and ReLU
        let mut dy = dlogits.matmul_t(&self.w2);
        for i in 0..n {
            let pre = cache.pre_relu.row(i);
            for (g, &y) in dy.row_mut(i).iter_mut().zip(pre) {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }
        }

        let mut dgamma = vec![T::zero(); h];
        let mut dbeta = vec![T::zero(); h];
        for i in 0..n {
            let g = dy.row(i);
            let xh = cache.xhat.row(i);
            for j in 0..h {
                dgamma[j] += g[j] * xh[j];
                dbeta[j] += g[j];
            }
        }

        let weights = match scope {
            GradScope::NormAffineOnly => None,
            GradScope::AllWeightsAndAffine => {
                let w2 = cache.hidden.t_matmul(&dlogits);
                let b2 = dlogits.col_sums();
                // dxhat = dy * gamma, then through the normalization
                let mut dz = Matrix::zeros(n, h);
                match mode {
                    NormMode::RunningStats => {
                        for i in 0..n {
                            let g = dy.row(i);
                            let out = dz.row_mut(i);
                            for j in 0..h {
                                out[j] = g[j] * self.gamma[j] * cache.inv_std[j];
                            }
                        }
                    }
                    NormMode::BatchStats => {
                        let mut sum_dx = vec![T::zero(); h];
                        let mut sum_dx_xhat = vec![T::zero(); h];
                        for i in 0..n {
                            let g = dy.row(i);
                            let xh = cache.xhat.row(i);
                            for j in 0..h {
                                let dx = g[j] * self.gamma[j];
                                sum_dx[j] += dx;
                                sum_dx_xhat[j] += dx * xh[j];
                            }
                        }
                        for i in 0..n {
                            let g = dy.row(i);
                            let xh = cache.xhat.row(i);
                            let out = dz.row_mut(i);
                            for j in 0..h {
                                let dx = g[j] * self.gamma[j];
                                out[j] = cache.inv_std[j]
                                    * (dx - inv_n * sum_dx[j] - xh[j] * inv_n * sum_dx_xhat[j]);
                            }
                        }
                    }
                }
                let w1 = batch.t_matmul(&dz);
                let b1 = dz.col_sums();
                Some(WeightGrads { w1, b1, w2, b2 })
            }
        };

        Gradients { scope, gamma: dgamma, beta: dbeta, weights }
    }

    /// Plain SGD on the parameters covered by `grads`. Everything else,
    /// including the running statistics, is left bit-identical. On error the
    /// model is untouched.
    pub fn sgd_step(&mut self, grads: &Gradients<T>, lr: T) -> Result<()> {
        let h = self.arch.hidden_dim;
        if grads.gamma.len() != h || grads.beta.len() != h {
            return Err(Error::ShapeMismatch("normalization gradient length".into()));
        }
        if let Some(w) = &grads.weights {
            if w.w1.rows() != self.w1.rows()
                || w.w1.cols() != self.w1.cols()
                || w.w2.rows() != self.w2.rows()
                || w.w2.cols() != self.w2.cols()
                || w.b1.len() != self.b1.len()
                || w.b2.len() != self.b2.len()
            {
                return Err(Error::ShapeMismatch("weight gradient shapes".into()));
            }
        }
        if !grads.all_finite() {
            return Err(Error::Diverged("gradients"));
        }
        if lr == T::zero() {
            return Ok(());
        }
        fn step<T: Scalar>(p: &mut [T], g: &[T], lr: T) {
            p.iter_mut().zip(g).for_each(|(p, &g)| *p -= lr * g);
        }
        step(&mut self.gamma, &grads.gamma, lr);
        step(&mut self.beta, &grads.beta, lr);
        if let Some(w) = &grads.weights {
            step(self.w1.as_mut_slice(), w.w1.as_slice(), lr);
            step(&mut self.b1, &w.b1, lr);
            step(self.w2.as_mut_slice(), w.w2.as_slice(), lr);
            step(&mut self.b2, &w.b2, lr);
        }
        Ok(())
    }
}

pub(crate) fn loss_from_probs<T: Scalar>(probs: &Matrix<T>, loss: Loss<'_>) -> T {
    let n = T::lit(probs.rows() as f64);
    match loss {
        Loss::Entropy => (0..probs.rows()).map(|i| super::row_entropy(probs.row(i))).sum::<T>() / n,
        Loss::CrossEntropy(labels) => {
            // floor keeps a saturated softmax from producing ln(0)
            let tiny = T::min_positive_value();
            labels
                .iter()
                .enumerate()
                .map(|(i, &y)| -probs.get(i, y).max(tiny).ln())
                .sum::<T>()
                / n
        }
    }
}
