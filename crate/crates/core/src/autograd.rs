//! Execution backends for the model graph.
//!
//! Model code is written once against [`Ops`]. [`Eval`] runs it eagerly for
//! inference, dropping intermediates as they go out of scope and borrowing
//! parameters without copying. [`Tape`] records every operation so that
//! [`Tape::backward`] can replay the chain rule in reverse.

use alloc::borrow::Cow;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernels::{self, aam::AamConfig, conv::ConvSpec, norm::BatchStats};
use crate::layers::BatchNorm;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Whether batch normalization uses batch statistics or running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub trait Ops<'p> {
    type Value;

    fn store(&self) -> &'p ParamStore;
    fn mode(&self) -> Mode;

    fn param(&mut self, id: ParamId) -> Self::Value;
    /// Untracked input data.
    fn input(&mut self, t: Tensor) -> Self::Value;
    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn conv(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
        spec: &ConvSpec,
    ) -> Result<Self::Value>;
    fn batch_norm(&mut self, x: &Self::Value, bn: &BatchNorm) -> Result<Self::Value>;
    fn relu(&mut self, x: &Self::Value) -> Self::Value;
    fn sigmoid(&mut self, x: &Self::Value) -> Self::Value;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn linear(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
    ) -> Result<Self::Value>;
    fn concat(&mut self, xs: &[&Self::Value], axis: usize) -> Result<Self::Value>;
    fn reshape(&mut self, x: Self::Value, shape: &[usize]) -> Result<Self::Value>;
    fn mean_time(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn scale_channels(&mut self, x: &Self::Value, s: &Self::Value) -> Result<Self::Value>;
    fn plp(&mut self, x: &Self::Value, window: usize, hop: usize) -> Result<Self::Value>;
    fn statistics_pooling(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn sum(&mut self, x: &Self::Value) -> Self::Value;
    fn aam_softmax(
        &mut self,
        embeddings: &Self::Value,
        weights: &Self::Value,
        labels: &[usize],
        cfg: &AamConfig,
    ) -> Result<Self::Value>;

    /// Hook for recording named intermediate shapes.
    fn mark(&mut self, _label: &str, _v: &Self::Value) {}
}

// ---------------------------------------------------------------------------

/// Eager inference backend; batch normalization always uses running stats.
pub struct Eval<'p> {
    store: &'p ParamStore,
    trace: Option<Vec<(String, Vec<usize>)>>,
}

impl<'p> Eval<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, trace: None }
    }

    /// Records the shape of every marked intermediate.
    pub fn with_trace(store: &'p ParamStore) -> Self {
        Self {
            store,
            trace: Some(Vec::new()),
        }
    }

    pub fn take_trace(&mut self) -> Vec<(String, Vec<usize>)> {
        self.trace.take().unwrap_or_default()
    }
}

impl<'p> Ops<'p> for Eval<'p> {
    type Value = Cow<'p, Tensor>;

    fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn mode(&self) -> Mode {
        Mode::Eval
    }

    fn param(&mut self, id: ParamId) -> Self::Value {
        Cow::Borrowed(self.store.get(id))
    }

    fn input(&mut self, t: Tensor) -> Self::Value {
        Cow::Owned(t)
    }

    fn value<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor {
        v
    }

    fn conv(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
        spec: &ConvSpec,
    ) -> Result<Self::Value> {
        kernels::conv(x, w, b.map(|b| &**b), spec).map(Cow::Owned)
    }

    fn batch_norm(&mut self, x: &Self::Value, bn: &BatchNorm) -> Result<Self::Value> {
        let s = self.store;
        kernels::batch_norm_eval(
            x,
            s.get(bn.gamma),
            s.get(bn.beta),
            s.get(bn.running_mean),
            s.get(bn.running_var),
            bn.eps,
        )
        .map(Cow::Owned)
    }

    fn relu(&mut self, x: &Self::Value) -> Self::Value {
        Cow::Owned(kernels::relu(x))
    }

    fn sigmoid(&mut self, x: &Self::Value) -> Self::Value {
        Cow::Owned(kernels::sigmoid(x))
    }

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        kernels::add(a, b).map(Cow::Owned)
    }

    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value> {
        kernels::mul(a, b).map(Cow::Owned)
    }

    fn linear(
        &mut self,
        x: &Self::Value,
        w: &Self::Value,
        b: Option<&Self::Value>,
    ) -> Result<Self::Value> {
        kernels::linear(x, w, b.map(|b| &**b)).map(Cow::Owned)
    }

    fn concat(&mut self, xs: &[&Self::Value], axis: usize) -> Result<Self::Value> {
        let refs: Vec<&Tensor> = xs.iter().map(|x| &***x).collect();
        kernels::concat(&refs, axis).map(Cow::Owned)
    }

    fn reshape(&mut self, x: Self::Value, shape: &[usize]) -> Result<Self::Value> {
        x.into_owned().reshape(shape).map(Cow::Owned)
    }

    fn mean_time(&mut self, x: &Self::Value) -> Result<Self::Value> {
        kernels::mean_time(x).map(Cow::Owned)
    }

    fn scale_channels(&mut self, x: &Self::Value, s: &Self::Value) -> Result<Self::Value> {
        kernels::scale_channels(x, s).map(Cow::Owned)
    }

    fn plp(&mut self, x: &Self::Value, window: usize, hop: usize) -> Result<Self::Value> {
        kernels::plp(x, window, hop).map(|p| Cow::Owned(p.output))
    }

    fn statistics_pooling(&mut self, x: &Self::Value) -> Result<Self::Value> {
        kernels::statistics_pooling(x).map(Cow::Owned)
    }

    fn sum(&mut self, x: &Self::Value) -> Self::Value {
        Cow::Owned(Tensor::scalar(x.sum()))
    }

    fn aam_softmax(
        &mut self,
        embeddings: &Self::Value,
        weights: &Self::Value,
        labels: &[usize],
        cfg: &AamConfig,
    ) -> Result<Self::Value> {
        kernels::aam_softmax(embeddings, weights, labels, cfg)
            .map(|o| Cow::Owned(Tensor::scalar(o.loss)))
    }

    fn mark(&mut self, label: &str, v: &Self::Value) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push((String::from(label), v.shape().to_vec()));
        }
    }
}

// ---------------------------------------------------------------------------

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Running-statistics update produced by a train-mode batch norm.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub stats: BatchStats,
    pub momentum: f64,
}

#[derive(Debug)]
enum Op {
    Input,
    Leaf,
    Param,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        spec: ConvSpec,
    },
    BnTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: BatchStats,
        eps: f64,
    },
    BnEval {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: ParamId,
        var: ParamId,
        eps: f64,
    },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Concat {
        parts: Vec<Var>,
        axis: usize,
    },
    Reshape(Var),
    MeanTime(Var),
    ScaleChannels {
        x: Var,
        s: Var,
    },
    Plp {
        x: Var,
        argmax: Vec<usize>,
    },
    StatsPool(Var),
    Sum(Var),
    Aam {
        emb: Var,
        w: Var,
        grad_emb: Tensor,
        grad_w: Tensor,
    },
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Recording backend for reverse-mode differentiation.
pub struct Tape<'p> {
    store: &'p ParamStore,
    mode: Mode,
    nodes: Vec<Node<'p>>,
    param_vars: Vec<Option<Var>>,
    grads: Vec<Option<Tensor>>,
    bn_updates: Vec<BnUpdate>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore, mode: Mode) -> Self {
        Self {
            store,
            mode,
            nodes: Vec::new(),
            param_vars: vec![None; store.len()],
            grads: Vec::new(),
            bn_updates: Vec::new(),
        }
    }

    /// Tracked input: its gradient is kept after [`Tape::backward`].
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node_value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn record(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let rg = self.rg(parents);
        self.push(Cow::Owned(value), op, rg)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Accumulated gradient of a tracked leaf or parameter node.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Accumulated gradient of a parameter, if it took part in the graph.
    pub fn param_grad(&self, id: ParamId) -> Option<&Tensor> {
        self.param_vars[id.0].and_then(|v| self.grad(v))
    }

    /// Gradients indexed by [`ParamId::index`].
    pub fn param_grads(&self) -> Vec<Option<Tensor>> {
        self.store
            .ids()
            .map(|id| self.param_grad(id).cloned())
            .collect()
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    pub fn bn_updates(&self) -> &[BnUpdate] {
        &self.bn_updates
    }

    /// Back-propagates from a scalar `loss`, adding into existing gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.node_value(loss);
        if lv.numel() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut local: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        local.resize_with(loss.0 + 1, || None);
        local[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        if self.grads.len() < self.nodes.len() {
            self.grads.resize_with(self.nodes.len(), || None);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let nodes = &self.nodes;
            let mut acc = |v: Var, t: Tensor| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut local[v.0] {
                    Some(existing) => existing.add_assign(&t),
                    slot => *slot = Some(t),
                }
            };
            let val = |v: Var| -> &Tensor { &nodes[v.0].value };
            match &node.op {
                Op::Input => {}
                Op::Leaf | Op::Param => match &mut self.grads[i] {
                    Some(existing) => existing.add_assign(&g),
                    slot => *slot = Some(g),
                },
                Op::Conv { x, w, b, spec } => {
                    let grads = kernels::conv_backward(val(*x), val(*w), b.is_some(), spec, &g)?;
                    acc(*x, grads.input);
                    acc(*w, grads.weight);
                    if let (Some(b), Some(gb)) = (b, grads.bias) {
                        acc(*b, gb);
                    }
                }
                Op::BnTrain {
                    x,
                    gamma,
                    beta,
                    stats,
                    eps,
                } => {
                    let (gx, gg, gb) = kernels::norm::batch_norm_train_backward(
                        val(*x),
                        val(*gamma),
                        stats,
                        *eps,
                        &g,
                    );
                    acc(*x, gx);
                    acc(*gamma, gg);
                    acc(*beta, gb);
                }
                Op::BnEval {
                    x,
                    gamma,
                    beta,
                    mean,
                    var,
                    eps,
                } => {
                    let s = self.store;
                    let (gx, gg, gb) = kernels::norm::batch_norm_eval_backward(
                        val(*x),
                        val(*gamma),
                        s.get(*mean),
                        s.get(*var),
                        *eps,
                        &g,
                    );
                    acc(*x, gx);
                    acc(*gamma, gg);
                    acc(*beta, gb);
                }
                Op::Relu(x) => acc(*x, kernels::basic::relu_backward(val(*x), &g)),
                Op::Sigmoid(x) => acc(*x, kernels::basic::sigmoid_backward(&node.value, &g)),
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, kernels::mul(&g, val(*b))?);
                    acc(*b, kernels::mul(&g, val(*a))?);
                }
                Op::Linear { x, w, b } => {
                    let (gx, gw, gb) = kernels::basic::linear_backward(val(*x), val(*w), &g);
                    acc(*x, gx);
                    acc(*w, gw);
                    if let Some(b) = b {
                        acc(*b, gb);
                    }
                }
                Op::Concat { parts, axis } => {
                    let sizes: Vec<usize> = parts.iter().map(|p| val(*p).shape()[*axis]).collect();
                    for (p, t) in parts.iter().zip(kernels::split(&g, *axis, &sizes)?) {
                        acc(*p, t);
                    }
                }
                Op::Reshape(x) => acc(*x, g.reshape(val(*x).shape())?),
                Op::MeanTime(x) => acc(*x, kernels::basic::mean_time_backward(val(*x), &g)),
                Op::ScaleChannels { x, s } => {
                    let (gx, gs) = kernels::basic::scale_channels_backward(val(*x), val(*s), &g);
                    acc(*x, gx);
                    acc(*s, gs);
                }
                Op::Plp { x, argmax } => {
                    acc(*x, kernels::pool::plp_backward(val(*x).shape(), argmax, &g));
                }
                Op::StatsPool(x) => {
                    acc(
                        *x,
                        kernels::pool::statistics_pooling_backward(val(*x), &node.value, &g),
                    );
                }
                Op::Sum(x) => {
                    let up = g.data()[0];
                    acc(*x, Tensor::full(val(*x).shape(), up));
                }
                Op::Aam {
                    emb,
                    w,
                    grad_emb,
                    grad_w,
                } => {
                    let up = g.data()[0];
                    acc(*emb, grad_emb.map(|v| v * up));
                    acc(*w, grad_w.map(|v| v * up));
                }
            }
        }
        Ok(())
    }
}

impl<'p> Ops<'p> for Tape<'p> {
    type Value = Var;

    fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let trainable = self.store.kind(id).is_trainable();
        let v = self.push(Cow::Borrowed(self.store.get(id)), Op::Param, trainable);
        self.param_vars[id.0] = Some(v);
        v
    }

    fn input(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Input, false)
    }

    fn value<'a>(&'a self, v: &'a Var) -> &'a Tensor {
        self.node_value(*v)
    }

    fn conv(&mut self, x: &Var, w: &Var, b: Option<&Var>, spec: &ConvSpec) -> Result<Var> {
        let out = kernels::conv(
            self.node_value(*x),
            self.node_value(*w),
            b.map(|b| self.node_value(*b)),
            spec,
        )?;
        let mut parents = vec![*x, *w];
        parents.extend(b.copied());
        Ok(self.record(
            out,
            Op::Conv {
                x: *x,
                w: *w,
                b: b.copied(),
                spec: *spec,
            },
            &parents,
        ))
    }

    fn batch_norm(&mut self, x: &Var, bn: &BatchNorm) -> Result<Var> {
        let gamma = self.param(bn.gamma);
        let beta = self.param(bn.beta);
        let s = self.store;
        match self.mode {
            Mode::Train => {
                let (out, stats) = kernels::batch_norm_train(
                    self.node_value(*x),
                    s.get(bn.gamma),
                    s.get(bn.beta),
                    bn.eps,
                )?;
                self.bn_updates.push(BnUpdate {
                    running_mean: bn.running_mean,
                    running_var: bn.running_var,
                    stats: stats.clone(),
                    momentum: bn.momentum,
                });
                Ok(self.record(
                    out,
                    Op::BnTrain {
                        x: *x,
                        gamma,
                        beta,
                        stats,
                        eps: bn.eps,
                    },
                    &[*x, gamma, beta],
                ))
            }
            Mode::Eval => {
                let out = kernels::batch_norm_eval(
                    self.node_value(*x),
                    s.get(bn.gamma),
                    s.get(bn.beta),
                    s.get(bn.running_mean),
                    s.get(bn.running_var),
                    bn.eps,
                )?;
                Ok(self.record(
                    out,
                    Op::BnEval {
                        x: *x,
                        gamma,
                        beta,
                        mean: bn.running_mean,
                        var: bn.running_var,
                        eps: bn.eps,
                    },
                    &[*x, gamma, beta],
                ))
            }
        }
    }

    fn relu(&mut self, x: &Var) -> Var {
        let out = kernels::relu(self.node_value(*x));
        self.record(out, Op::Relu(*x), &[*x])
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let out = kernels::sigmoid(self.node_value(*x));
        self.record(out, Op::Sigmoid(*x), &[*x])
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::add(self.node_value(*a), self.node_value(*b))?;
        Ok(self.record(out, Op::Add(*a, *b), &[*a, *b]))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = kernels::mul(self.node_value(*a), self.node_value(*b))?;
        Ok(self.record(out, Op::Mul(*a, *b), &[*a, *b]))
    }

    fn linear(&mut self, x: &Var, w: &Var, b: Option<&Var>) -> Result<Var> {
        let out = kernels::linear(
            self.node_value(*x),
            self.node_value(*w),
            b.map(|b| self.node_value(*b)),
        )?;
        let mut parents = vec![*x, *w];
        parents.extend(b.copied());
        Ok(self.record(
            out,
            Op::Linear {
                x: *x,
                w: *w,
                b: b.copied(),
            },
            &parents,
        ))
    }

    fn concat(&mut self, xs: &[&Var], axis: usize) -> Result<Var> {
        let parts: Vec<Var> = xs.iter().map(|v| **v).collect();
        let refs: Vec<&Tensor> = parts.iter().map(|v| self.node_value(*v)).collect();
        let out = kernels::concat(&refs, axis)?;
        let op = Op::Concat {
            parts: parts.clone(),
            axis,
        };
        Ok(self.record(out, op, &parts))
    }

    fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.node_value(x).clone().reshape(shape)?;
        Ok(self.record(out, Op::Reshape(x), &[x]))
    }

    fn mean_time(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::mean_time(self.node_value(*x))?;
        Ok(self.record(out, Op::MeanTime(*x), &[*x]))
    }

    fn scale_channels(&mut self, x: &Var, s: &Var) -> Result<Var> {
        let out = kernels::scale_channels(self.node_value(*x), self.node_value(*s))?;
        Ok(self.record(out, Op::ScaleChannels { x: *x, s: *s }, &[*x, *s]))
    }

    fn plp(&mut self, x: &Var, window: usize, hop: usize) -> Result<Var> {
        let p = kernels::plp(self.node_value(*x), window, hop)?;
        Ok(self.record(
            p.output,
            Op::Plp {
                x: *x,
                argmax: p.argmax,
            },
            &[*x],
        ))
    }

    fn statistics_pooling(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::statistics_pooling(self.node_value(*x))?;
        Ok(self.record(out, Op::StatsPool(*x), &[*x]))
    }

    fn sum(&mut self, x: &Var) -> Var {
        let out = Tensor::scalar(self.node_value(*x).sum());
        self.record(out, Op::Sum(*x), &[*x])
    }

    fn aam_softmax(
        &mut self,
        embeddings: &Var,
        weights: &Var,
        labels: &[usize],
        cfg: &AamConfig,
    ) -> Result<Var> {
        let o = kernels::aam_softmax(
            self.node_value(*embeddings),
            self.node_value(*weights),
            labels,
            cfg,
        )?;
        Ok(self.record(
            Tensor::scalar(o.loss),
            Op::Aam {
                emb: *embeddings,
                w: *weights,
                grad_emb: o.grad_embeddings,
                grad_w: o.grad_weights,
            },
            &[*embeddings, *weights],
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn relu_sum_gradient() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store, Mode::Train);
        let x = tape.leaf(Tensor::from_vec(vec![1.0, -1.0]));
        let r = tape.relu(&x);
        let l = tape.sum(&r);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn square_gradient_and_accumulation() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store, Mode::Train);
        let x = tape.leaf(Tensor::from_vec(vec![3.0]));
        let sq = tape.mul(&x, &x).unwrap();
        let l = tape.sum(&sq);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[6.0]);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[12.0]);
        tape.zero_grad();
        assert!(tape.grad(x).is_none());
    }

    #[test]
    fn non_scalar_backward_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store, Mode::Train);
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn untracked_inputs_get_no_gradient() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store, Mode::Train);
        let x = tape.input(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.leaf(Tensor::from_vec(vec![3.0, 4.0]));
        let p = tape.mul(&x, &y).unwrap();
        let l = tape.sum(&p);
        tape.backward(l).unwrap();
        assert!(tape.grad(x).is_none());
        assert_eq!(tape.grad(y).unwrap().data(), &[1.0, 2.0]);
    }
}
