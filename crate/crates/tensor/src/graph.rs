//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every forward op together with whatever its backward
//! half needs. Nodes are appended in execution order, so the tape is
//! topologically sorted by construction and `backward` is a single reverse
//! sweep.

use crate::error::{Result, TensorError};
use crate::ops::{self, BnCache, BnMode};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(ParamId),
    Conv2d { x: Var, k: Var, b: Var },
    Pointwise { x: Var, k: Var, b: Var },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    BatchNormTrain { x: Var, gamma: Var, beta: Var, cache: BnCache<T> },
    BatchNormInfer { x: Var, gamma: Var, beta: Var, mean: Tensor<T>, var: Tensor<T> },
    Dense { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    UpsampleConcat { low: Var, skip: Var },
    Reshape(Var),
    Mul(Var, Var),
    Sum(Var),
    Mse { pred: Var, target: Tensor<T> },
    CrossEntropy { probs: Var, labels: Vec<u8> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Result of a backward sweep.
pub struct Gradients<T> {
    /// One tensor per store entry, in store order. Entries the loss does not
    /// depend on (and non-trainable buffers) hold zeros.
    pub params: Vec<Tensor<T>>,
    nodes: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn param(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.index()]
    }

    /// Gradient of the loss with respect to any recorded node, if it was
    /// reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input)
    }

    /// Records a copy of a stored parameter as a differentiable leaf.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.push(store.get(id).clone(), Op::Param(id))
    }

    pub fn conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let y = ops::conv2d(self.value(x), self.value(k), self.value(b))?;
        Ok(self.push(y, Op::Conv2d { x, k, b }))
    }

    pub fn pointwise_conv(&mut self, x: Var, k: Var, b: Var) -> Result<Var> {
        let y = ops::pointwise_conv(self.value(x), self.value(k), self.value(b))?;
        Ok(self.push(y, Op::Pointwise { x, k, b }))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let (y, argmax) = ops::max_pool2(self.value(x))?;
        Ok(self.push(y, Op::MaxPool2 { x, argmax }))
    }

    /// Batch normalization. In training mode the running statistics held in
    /// `store` at `running = (mean, var)` are updated in place.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        store: &mut ParamStore<T>,
        running: (ParamId, ParamId),
        mode: BnMode,
    ) -> Result<Var> {
        match mode {
            BnMode::Train => {
                let (y, cache) = ops::batch_norm_train(self.value(x), self.value(gamma), self.value(beta))?;
                let (mean, var) = store.pair_mut(running.0, running.1);
                ops::update_running_stats(&cache, mean, var);
                Ok(self.push(y, Op::BatchNormTrain { x, gamma, beta, cache }))
            }
            BnMode::Infer => self.batch_norm_infer(x, gamma, beta, store, running),
        }
    }

    /// Batch normalization with the running statistics, leaving the store
    /// untouched.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        store: &ParamStore<T>,
        running: (ParamId, ParamId),
    ) -> Result<Var> {
        let mean = store.get(running.0).clone();
        let var = store.get(running.1).clone();
        let y = ops::batch_norm_infer(self.value(x), self.value(gamma), self.value(beta), &mean, &var)?;
        Ok(self.push(y, Op::BatchNormInfer { x, gamma, beta, mean, var }))
    }

    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = ops::dense(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(y, Op::Dense { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = ops::relu(self.value(x));
        self.push(y, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = ops::sigmoid(self.value(x));
        self.push(y, Op::Sigmoid(x))
    }

    pub fn softmax_channels(&mut self, x: Var) -> Result<Var> {
        let y = ops::softmax_channels(self.value(x))?;
        Ok(self.push(y, Op::Softmax(x)))
    }

    pub fn upsample2_concat(&mut self, low: Var, skip: Var) -> Result<Var> {
        let y = ops::upsample2_concat(self.value(low), self.value(skip))?;
        Ok(self.push(y, Op::UpsampleConcat { low, skip }))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        Ok(self.push(y, Op::Reshape(x)))
    }

    /// `[N, ...] → [N, F]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.value(x).shape();
        let n = shape[0];
        let f = shape[1..].iter().product::<usize>();
        self.reshape(x, vec![n, f])
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::shape(
                "mul",
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).collect();
        let y = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(y, Op::Mul(a, b)))
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let y = Tensor::scalar(T::from_f64_lossy(self.value(x).sum_f64()));
        self.push(y, Op::Sum(x))
    }

    pub fn mse(&mut self, pred: Var, target: Tensor<T>) -> Result<Var> {
        let y = Tensor::scalar(ops::mse(self.value(pred), &target)?);
        Ok(self.push(y, Op::Mse { pred, target }))
    }

    pub fn cross_entropy(&mut self, probs: Var, labels: Vec<u8>) -> Result<Var> {
        let y = Tensor::scalar(ops::cross_entropy(self.value(probs), &labels)?);
        Ok(self.push(y, Op::CrossEntropy { probs, labels }))
    }

    /// Reverse sweep from a scalar `loss`. Gradients are returned for every
    /// entry of `store`; the graph itself is left intact.
    pub fn backward(&self, loss: Var, store: &ParamStore<T>) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(TensorError::State(
                "backward called before any forward op was recorded".into(),
            ));
        }
        let Some(root) = self.nodes.get(loss.0) else {
            return Err(TensorError::State(format!(
                "loss node {} does not belong to this graph ({} nodes)",
                loss.0,
                self.nodes.len()
            )));
        };
        if root.value.len() != 1 {
            return Err(TensorError::shape(
                "backward",
                format!("loss must be a scalar, got {:?}", root.value.shape()),
            ));
        }

        let mut params: Vec<Tensor<T>> = store.entries().iter().map(|e| Tensor::zeros_like(&e.value)).collect();
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(root.value.shape().to_vec(), T::one()));

        for i in (0..=loss.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            let node = &self.nodes[i];
            let mut send = |v: Var, t: Tensor<T>| -> Result<()> {
                match &mut lower[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => {
                        *slot = Some(t);
                        Ok(())
                    }
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let slot = params.get_mut(id.index()).ok_or_else(|| {
                        TensorError::State(format!("parameter {} is not in the given store", id.index()))
                    })?;
                    slot.add_assign(g)?;
                }
                Op::Conv2d { x, k, b } => {
                    let d = ops::conv2d_backward(self.value(*x), self.value(*k), g)?;
                    send(*x, d.input)?;
                    send(*k, d.kernel)?;
                    send(*b, d.bias)?;
                }
                Op::Pointwise { x, k, b } => {
                    let d = ops::pointwise_conv_backward(self.value(*x), self.value(*k), g)?;
                    send(*x, d.input)?;
                    send(*k, d.kernel)?;
                    send(*b, d.bias)?;
                }
                Op::MaxPool2 { x, argmax } => {
                    send(*x, ops::max_pool2_backward(self.value(*x).shape(), argmax, g)?)?;
                }
                Op::BatchNormTrain { x, gamma, beta, cache } => {
                    let d = ops::batch_norm_train_backward(g, self.value(*gamma), cache)?;
                    send(*x, d.input)?;
                    send(*gamma, d.gamma)?;
                    send(*beta, d.beta)?;
                }
                Op::BatchNormInfer { x, gamma, beta, mean, var } => {
                    let d = ops::batch_norm_infer_backward(self.value(*x), g, self.value(*gamma), mean, var)?;
                    send(*x, d.input)?;
                    send(*gamma, d.gamma)?;
                    send(*beta, d.beta)?;
                }
                Op::Dense { x, w, b } => {
                    let d = ops::dense_backward(self.value(*x), self.value(*w), g)?;
                    send(*x, d.input)?;
                    send(*w, d.weight)?;
                    send(*b, d.bias)?;
                }
                Op::Relu(x) => send(*x, ops::relu_backward(self.value(*x), g))?,
                Op::Sigmoid(x) => send(*x, ops::sigmoid_backward(&node.value, g))?,
                Op::Softmax(x) => send(*x, ops::softmax_channels_backward(&node.value, g)?)?,
                Op::UpsampleConcat { low, skip } => {
                    let (dl, ds) = ops::upsample2_concat_backward(self.value(*low).shape(), self.value(*skip).shape(), g)?;
                    send(*low, dl)?;
                    send(*skip, ds)?;
                }
                Op::Reshape(x) => send(*x, g.clone().reshape(self.value(*x).shape().to_vec())?)?,
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let da = Tensor::new(ta.shape().to_vec(), g.data().iter().zip(tb.data()).map(|(&d, &y)| d * y).collect())?;
                    let db = Tensor::new(tb.shape().to_vec(), g.data().iter().zip(ta.data()).map(|(&d, &x)| d * x).collect())?;
                    send(*a, da)?;
                    send(*b, db)?;
                }
                Op::Sum(x) => send(*x, Tensor::full(self.value(*x).shape().to_vec(), g.item()))?,
                Op::Mse { pred, target } => send(*pred, ops::mse_backward(self.value(*pred), target, g.item()))?,
                Op::CrossEntropy { probs, labels } => {
                    send(*probs, ops::cross_entropy_backward(self.value(*probs), labels, g.item())?)?
                }
            }
        }
        Ok(Gradients { params, nodes: grads })
    }
}
