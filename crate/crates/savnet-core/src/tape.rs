//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`GradientTape`] records every executed op together with the saved
//! state its backward pass needs (argmax positions, softmax probabilities).
//! [`GradientTape::backward`] replays the record in exact reverse execution
//! order and accumulates gradients additively, so the whole computation is
//! deterministic: identical inputs produce bitwise identical outputs and
//! gradients.
//!
//! The op set is closed: exactly the operations the model and its losses
//! need, each with an analytic backward. Convolution is stride-1 and pooling
//! is 2x2/stride-2 throughout.

use crate::tensor::{shape_err, Tensor, TensorError};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Zero-padding mode for [`GradientTape::conv2d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Output spatial dims equal input dims; pad (k-1)/2 before, the rest after.
    Same,
    /// No padding; output dims shrink by k-1.
    Valid,
}

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        padding: Padding,
    },
    MaxPool2d {
        input: NodeId,
        /// Flat input index of the window maximum, per output cell.
        argmax: Vec<usize>,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Activation {
        input: NodeId,
        kind: Activation,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    SimilarityMaps {
        features: NodeId,
        prototypes: NodeId,
    },
    SpatialMax {
        input: NodeId,
        /// Flat spatial index of the per-channel maximum.
        argmax: Vec<usize>,
    },
    MatVecConst {
        vector: NodeId,
        matrix: Vec<f64>,
        rows: usize,
        cols: usize,
    },
    CrossEntropyLogits {
        logits: NodeId,
        target: usize,
        /// Softmax probabilities saved from the forward pass.
        probs: Vec<f64>,
    },
    BceMean {
        scores: NodeId,
        bits: Vec<f64>,
    },
    MseSum {
        scores: NodeId,
        target: Vec<f64>,
    },
    DotConst {
        input: NodeId,
        coeffs: Vec<f64>,
    },
    WeightedSum {
        terms: Vec<(NodeId, f64)>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward pass, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to the node, if the node
    /// participated in the computation.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Take ownership of a node's gradient.
    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// Ordered record of executed ops with the saved inputs their backward
/// passes need. Single-owner: one logical thread records and replays it.
#[derive(Default)]
pub struct GradientTape {
    nodes: Vec<Node>,
}

impl GradientTape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes (leaves included).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value produced at `id`.
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Insert an input or parameter as a differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Argmax positions saved by a [`GradientTape::spatial_max`] node
    /// (flat spatial index per channel).
    pub fn spatial_argmax(&self, id: NodeId) -> Option<&[usize]> {
        match &self.nodes[id.0].op {
            Op::SpatialMax { argmax, .. } => Some(argmax),
            _ => None,
        }
    }

    /// 2-D cross-correlation, stride 1.
    ///
    /// `input` is `[Cin,H,W]`, `kernels` is `[Cout,Cin,kh,kw]`, `bias` is
    /// `[Cout]`. Gradients flow to all three.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        kernels: NodeId,
        bias: NodeId,
        padding: Padding,
    ) -> Result<NodeId, TensorError> {
        let geom = ConvGeometry::resolve(
            self.value(input).dims(),
            self.value(kernels).dims(),
            self.value(bias).dims(),
            padding,
        )?;
        let out = conv2d_forward(
            self.value(input).data(),
            self.value(kernels).data(),
            self.value(bias).data(),
            &geom,
        );
        let value = Tensor::new(vec![geom.cout, geom.oh, geom.ow], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernels,
                bias,
                padding,
            },
        ))
    }

    /// 2x2 max pooling, stride 2, floor semantics (a trailing odd row or
    /// column is dropped). Backward routes each window's gradient to the
    /// first maximum in row-major scan order.
    pub fn maxpool2d(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        let dims = self.value(input).dims();
        if dims.len() != 3 || dims[1] < 2 || dims[2] < 2 {
            return Err(shape_err(
                "maxpool2d",
                format!("input {dims:?} smaller than 2x2 window"),
            ));
        }
        let (c, h, w) = (dims[0], dims[1], dims[2]);
        let (oh, ow) = (h / 2, w / 2);
        let data = self.value(input).data();
        let mut out = vec![0.0; c * oh * ow];
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            let base = ch * h * w;
            for or in 0..oh {
                for oc in 0..ow {
                    let mut best_idx = base + (2 * or) * w + 2 * oc;
                    let mut best = data[best_idx];
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * or + di) * w + 2 * oc + dj;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                    let o = ch * oh * ow + or * ow + oc;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        let value = Tensor::new(vec![c, oh, ow], out)?;
        Ok(self.push(value, Op::MaxPool2d { input, argmax }))
    }

    /// Affine map `weight . input + bias` with `input` `[n]`, `weight`
    /// `[m,n]`, `bias` `[m]`.
    pub fn linear(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, TensorError> {
        let n = self.value(input).numel();
        let wd = self.value(weight).dims().to_vec();
        let m = self.value(bias).numel();
        if wd.len() != 2 || wd[1] != n || wd[0] != m {
            return Err(shape_err(
                "linear",
                format!("input [{n}] weight {:?} bias [{m}] do not agree", wd),
            ));
        }
        let x = self.value(input).data();
        let w = self.value(weight).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; m];
        for (r, o) in out.iter_mut().enumerate() {
            let row = &w[r * n..(r + 1) * n];
            let mut acc = b[r];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            *o = acc;
        }
        let value = Tensor::new(vec![m], out)?;
        Ok(self.push(
            value,
            Op::Linear {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Elementwise nonlinearity. relu'(0) is 0.
    pub fn activation(&mut self, kind: Activation, input: NodeId) -> Result<NodeId, TensorError> {
        let x = self.value(input);
        let data: Vec<f64> = match kind {
            Activation::Relu => x.data().iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => x.data().iter().map(|&v| v.tanh()).collect(),
            Activation::Sigmoid => x.data().iter().map(|&v| sigmoid(v)).collect(),
        };
        let value = Tensor::new(x.dims().to_vec(), data)?;
        Ok(self.push(value, Op::Activation { input, kind }))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.activation(Activation::Relu, input)
    }

    pub fn tanh(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.activation(Activation::Tanh, input)
    }

    pub fn sigmoid(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        self.activation(Activation::Sigmoid, input)
    }

    /// Per-channel spatial mean of a `[C,H,W]` map.
    pub fn global_average_pool(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        let dims = self.value(input).dims();
        if dims.len() != 3 {
            return Err(shape_err(
                "global_average_pool",
                format!("expected [C,H,W], got {dims:?}"),
            ));
        }
        let (c, hw) = (dims[0], dims[1] * dims[2]);
        let data = self.value(input).data();
        let out: Vec<f64> = (0..c)
            .map(|ch| data[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        let value = Tensor::new(vec![c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { input }))
    }

    /// Dot product of every prototype row against every spatial location:
    /// `maps[k,i,j] = <prototypes[k,:], features[:,i,j]>`.
    pub fn similarity_maps(
        &mut self,
        features: NodeId,
        prototypes: NodeId,
    ) -> Result<NodeId, TensorError> {
        let fd = self.value(features).dims().to_vec();
        let pd = self.value(prototypes).dims().to_vec();
        if fd.len() != 3 || pd.len() != 2 || pd[1] != fd[0] {
            return Err(shape_err(
                "similarity_maps",
                format!("features {fd:?} prototypes {pd:?}: channel dims must agree"),
            ));
        }
        let (c, hw, k) = (fd[0], fd[1] * fd[2], pd[0]);
        let f = self.value(features).data();
        let p = self.value(prototypes).data();
        let mut maps = vec![0.0; k * hw];
        for ki in 0..k {
            let m_ch = &mut maps[ki * hw..(ki + 1) * hw];
            for ci in 0..c {
                let pv = p[ki * c + ci];
                let f_ch = &f[ci * hw..(ci + 1) * hw];
                for (m, fv) in m_ch.iter_mut().zip(f_ch) {
                    *m += pv * fv;
                }
            }
        }
        let value = Tensor::new(vec![k, fd[1], fd[2]], maps)?;
        Ok(self.push(
            value,
            Op::SimilarityMaps {
                features,
                prototypes,
            },
        ))
    }

    /// Per-channel spatial maximum of a `[K,H,W]` stack. Backward routes the
    /// gradient of each maximum to its argmax cell only (ties: first in
    /// row-major order).
    pub fn spatial_max(&mut self, input: NodeId) -> Result<NodeId, TensorError> {
        let dims = self.value(input).dims();
        if dims.len() != 3 {
            return Err(shape_err(
                "spatial_max",
                format!("expected [K,H,W], got {dims:?}"),
            ));
        }
        let (k, hw) = (dims[0], dims[1] * dims[2]);
        let data = self.value(input).data();
        let mut out = vec![0.0; k];
        let mut argmax = vec![0usize; k];
        for ki in 0..k {
            let ch = &data[ki * hw..(ki + 1) * hw];
            let mut best = ch[0];
            let mut best_idx = 0usize;
            for (idx, &v) in ch.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    best_idx = idx;
                }
            }
            out[ki] = best;
            argmax[ki] = best_idx;
        }
        let value = Tensor::new(vec![k], out)?;
        Ok(self.push(value, Op::SpatialMax { input, argmax }))
    }

    /// Multiply a rank-1 vector by a constant (non-learned) matrix.
    pub fn matvec_const(
        &mut self,
        matrix: &[f64],
        rows: usize,
        cols: usize,
        vector: NodeId,
    ) -> Result<NodeId, TensorError> {
        if matrix.len() != rows * cols || self.value(vector).numel() != cols {
            return Err(shape_err(
                "matvec_const",
                format!(
                    "matrix {rows}x{cols} (len {}) vs vector [{}]",
                    matrix.len(),
                    self.value(vector).numel()
                ),
            ));
        }
        let v = self.value(vector).data();
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                matrix[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let value = Tensor::new(vec![rows], out)?;
        Ok(self.push(
            value,
            Op::MatVecConst {
                vector,
                matrix: matrix.to_vec(),
                rows,
                cols,
            },
        ))
    }

    /// Softmax cross-entropy of a logit vector against a target index,
    /// evaluated in shifted log-sum-exp form.
    pub fn cross_entropy_logits(
        &mut self,
        logits: NodeId,
        target: usize,
    ) -> Result<NodeId, TensorError> {
        let x = self.value(logits);
        let n = x.numel();
        if x.rank() != 1 || target >= n {
            return Err(shape_err(
                "cross_entropy_logits",
                format!("logits {:?} target index {target}", x.dims()),
            ));
        }
        let data = x.data();
        let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = data.iter().map(|&v| (v - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let probs: Vec<f64> = data.iter().map(|&v| (v - lse).exp()).collect();
        let value = Tensor::scalar(lse - data[target])?;
        Ok(self.push(
            value,
            Op::CrossEntropyLogits {
                logits,
                target,
                probs,
            },
        ))
    }

    /// Mean binary cross-entropy of sigmoid(scores) against 0/1 bits, in the
    /// numerically stable form `max(x,0) - x*b + ln(1+exp(-|x|))`.
    pub fn bce_mean(&mut self, scores: NodeId, bits: &[f64]) -> Result<NodeId, TensorError> {
        let x = self.value(scores);
        if x.rank() != 1 || x.numel() != bits.len() {
            return Err(shape_err(
                "bce_mean",
                format!("scores {:?} vs {} target bits", x.dims(), bits.len()),
            ));
        }
        let total: f64 = x
            .data()
            .iter()
            .zip(bits)
            .map(|(&g, &b)| g.max(0.0) - g * b + (-g.abs()).exp().ln_1p())
            .sum();
        let value = Tensor::scalar(total / bits.len() as f64)?;
        Ok(self.push(
            value,
            Op::BceMean {
                scores,
                bits: bits.to_vec(),
            },
        ))
    }

    /// Sum of squared differences against a constant target vector.
    pub fn mse_sum(&mut self, scores: NodeId, target: &[f64]) -> Result<NodeId, TensorError> {
        let x = self.value(scores);
        if x.numel() != target.len() {
            return Err(shape_err(
                "mse_sum",
                format!("scores {:?} vs target len {}", x.dims(), target.len()),
            ));
        }
        let total: f64 = x
            .data()
            .iter()
            .zip(target)
            .map(|(&s, &t)| (s - t) * (s - t))
            .sum();
        let value = Tensor::scalar(total)?;
        Ok(self.push(
            value,
            Op::MseSum {
                scores,
                target: target.to_vec(),
            },
        ))
    }

    /// Weighted sum of a tensor's elements against constant coefficients
    /// (a linear functional; used to reduce non-scalar ops for testing).
    pub fn dot_const(&mut self, input: NodeId, coeffs: &[f64]) -> Result<NodeId, TensorError> {
        let x = self.value(input);
        if x.numel() != coeffs.len() {
            return Err(shape_err(
                "dot_const",
                format!("input {:?} vs {} coefficients", x.dims(), coeffs.len()),
            ));
        }
        let total: f64 = x.data().iter().zip(coeffs).map(|(a, b)| a * b).sum();
        let value = Tensor::scalar(total)?;
        Ok(self.push(
            value,
            Op::DotConst {
                input,
                coeffs: coeffs.to_vec(),
            },
        ))
    }

    /// Weighted sum of scalar nodes: `sum_i w_i * s_i`.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId, TensorError> {
        let mut total = 0.0;
        for &(id, w) in terms {
            let v = self.value(id);
            if v.numel() != 1 {
                return Err(shape_err(
                    "weighted_sum",
                    format!("term {:?} is not scalar", v.dims()),
                ));
            }
            total += w * v.scalar_value();
        }
        let value = Tensor::scalar(total)?;
        Ok(self.push(
            value,
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
        ))
    }

    /// Reverse replay from a scalar root. Visits ops in exact reverse
    /// execution order; accumulation is additive and order-deterministic.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, TensorError> {
        if self.value(root).numel() != 1 {
            return Err(shape_err(
                "backward",
                format!("root must be scalar, got {:?}", self.value(root).dims()),
            ));
        }
        let mut bufs: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        bufs[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(grad) = bufs[idx].take() else {
                continue;
            };
            self.accumulate_inputs(idx, &grad, &mut bufs);
            bufs[idx] = Some(grad);
        }

        let mut grads = Vec::with_capacity(self.nodes.len());
        for (idx, buf) in bufs.into_iter().enumerate() {
            match buf {
                Some(data) => {
                    let dims = self.nodes[idx].value.dims().to_vec();
                    grads.push(Some(Tensor::new(dims, data)?));
                }
                None => grads.push(None),
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate_inputs(&self, idx: usize, grad: &[f64], bufs: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                kernels,
                bias,
                padding,
            } => {
                let geom = ConvGeometry::resolve(
                    self.value(*input).dims(),
                    self.value(*kernels).dims(),
                    self.value(*bias).dims(),
                    *padding,
                )
                .expect("geometry validated at forward time");
                conv2d_backward_input(
                    grad,
                    self.value(*kernels).data(),
                    &geom,
                    self.grad_buf(*input, bufs),
                );
                conv2d_backward_kernels(
                    grad,
                    self.value(*input).data(),
                    &geom,
                    self.grad_buf(*kernels, bufs),
                );
                let db = self.grad_buf(*bias, bufs);
                let ohw = geom.oh * geom.ow;
                for co in 0..geom.cout {
                    db[co] += grad[co * ohw..(co + 1) * ohw].iter().sum::<f64>();
                }
            }
            Op::MaxPool2d { input, argmax } => {
                let di = self.grad_buf(*input, bufs);
                for (cell, &src) in argmax.iter().enumerate() {
                    di[src] += grad[cell];
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let x = self.value(*input).data();
                let w = self.value(*weight).data();
                let n = x.len();
                {
                    let dx = self.grad_buf(*input, bufs);
                    for (r, &g) in grad.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let row = &w[r * n..(r + 1) * n];
                        for (d, wv) in dx.iter_mut().zip(row) {
                            *d += g * wv;
                        }
                    }
                }
                {
                    let dw = self.grad_buf(*weight, bufs);
                    for (r, &g) in grad.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let row = &mut dw[r * n..(r + 1) * n];
                        for (d, xv) in row.iter_mut().zip(x) {
                            *d += g * xv;
                        }
                    }
                }
                let db = self.grad_buf(*bias, bufs);
                for (d, &g) in db.iter_mut().zip(grad) {
                    *d += g;
                }
            }
            Op::Activation { input, kind } => {
                let di = self.grad_buf(*input, bufs);
                match kind {
                    Activation::Relu => {
                        let x = self.value(*input).data();
                        for ((d, &g), &xv) in di.iter_mut().zip(grad).zip(x) {
                            if xv > 0.0 {
                                *d += g;
                            }
                        }
                    }
                    Activation::Tanh => {
                        let y = node.value.data();
                        for ((d, &g), &yv) in di.iter_mut().zip(grad).zip(y) {
                            *d += g * (1.0 - yv * yv);
                        }
                    }
                    Activation::Sigmoid => {
                        let y = node.value.data();
                        for ((d, &g), &yv) in di.iter_mut().zip(grad).zip(y) {
                            *d += g * yv * (1.0 - yv);
                        }
                    }
                }
            }
            Op::GlobalAvgPool { input } => {
                let dims = self.value(*input).dims();
                let hw = dims[1] * dims[2];
                let scale = 1.0 / hw as f64;
                let di = self.grad_buf(*input, bufs);
                for (c, &g) in grad.iter().enumerate() {
                    let contrib = g * scale;
                    for d in &mut di[c * hw..(c + 1) * hw] {
                        *d += contrib;
                    }
                }
            }
            Op::SimilarityMaps {
                features,
                prototypes,
            } => {
                let fd = self.value(*features).dims();
                let (c, hw) = (fd[0], fd[1] * fd[2]);
                let k = self.value(*prototypes).dims()[0];
                let f = self.value(*features).data();
                let p = self.value(*prototypes).data();
                {
                    let dp = self.grad_buf(*prototypes, bufs);
                    for ki in 0..k {
                        let g_ch = &grad[ki * hw..(ki + 1) * hw];
                        for ci in 0..c {
                            let f_ch = &f[ci * hw..(ci + 1) * hw];
                            let mut acc = 0.0;
                            for (gv, fv) in g_ch.iter().zip(f_ch) {
                                acc += gv * fv;
                            }
                            dp[ki * c + ci] += acc;
                        }
                    }
                }
                {
                    let df = self.grad_buf(*features, bufs);
                    for ki in 0..k {
                        let g_ch = &grad[ki * hw..(ki + 1) * hw];
                        for ci in 0..c {
                            let pv = p[ki * c + ci];
                            let df_ch = &mut df[ci * hw..(ci + 1) * hw];
                            for (d, gv) in df_ch.iter_mut().zip(g_ch) {
                                *d += pv * gv;
                            }
                        }
                    }
                }
            }
            Op::SpatialMax { input, argmax } => {
                let hw = {
                    let d = self.value(*input).dims();
                    d[1] * d[2]
                };
                let di = self.grad_buf(*input, bufs);
                for (k, &loc) in argmax.iter().enumerate() {
                    di[k * hw + loc] += grad[k];
                }
            }
            Op::MatVecConst {
                vector,
                matrix,
                rows,
                cols,
            } => {
                let dv = self.grad_buf(*vector, bufs);
                for r in 0..*rows {
                    let g = grad[r];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &matrix[r * cols..(r + 1) * cols];
                    for (d, a) in dv.iter_mut().zip(row) {
                        *d += g * a;
                    }
                }
            }
            Op::CrossEntropyLogits {
                logits,
                target,
                probs,
            } => {
                let g = grad[0];
                let dl = self.grad_buf(*logits, bufs);
                for (i, (d, &p)) in dl.iter_mut().zip(probs).enumerate() {
                    let indicator = if i == *target { 1.0 } else { 0.0 };
                    *d += g * (p - indicator);
                }
            }
            Op::BceMean { scores, bits } => {
                let g = grad[0] / bits.len() as f64;
                let x = self.value(*scores).data();
                let ds = self.grad_buf(*scores, bufs);
                for ((d, &xv), &b) in ds.iter_mut().zip(x).zip(bits) {
                    *d += g * (sigmoid(xv) - b);
                }
            }
            Op::MseSum { scores, target } => {
                let g = grad[0];
                let x = self.value(*scores).data();
                let ds = self.grad_buf(*scores, bufs);
                for ((d, &xv), &t) in ds.iter_mut().zip(x).zip(target) {
                    *d += g * 2.0 * (xv - t);
                }
            }
            Op::DotConst { input, coeffs } => {
                let g = grad[0];
                let di = self.grad_buf(*input, bufs);
                for (d, &c) in di.iter_mut().zip(coeffs) {
                    *d += g * c;
                }
            }
            Op::WeightedSum { terms } => {
                let g = grad[0];
                for &(id, w) in terms {
                    self.grad_buf(id, bufs)[0] += g * w;
                }
            }
        }
    }

    fn grad_buf<'a>(&self, id: NodeId, bufs: &'a mut [Option<Vec<f64>>]) -> &'a mut Vec<f64> {
        let slot = &mut bufs[id.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[id.0].value.numel()]);
        }
        slot.as_mut().unwrap()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn resolve(
        input: &[usize],
        kernels: &[usize],
        bias: &[usize],
        padding: Padding,
    ) -> Result<Self, TensorError> {
        if input.len() != 3 || kernels.len() != 4 {
            return Err(shape_err(
                "conv2d",
                format!("input {input:?} must be [Cin,H,W], kernels {kernels:?} must be [Cout,Cin,kh,kw]"),
            ));
        }
        let (cin, h, w) = (input[0], input[1], input[2]);
        let (cout, kcin, kh, kw) = (kernels[0], kernels[1], kernels[2], kernels[3]);
        if kcin != cin {
            return Err(shape_err(
                "conv2d",
                format!("kernel channel dim {kcin} does not match input channels {cin} (input {input:?}, kernels {kernels:?})"),
            ));
        }
        if bias.len() != 1 || bias[0] != cout {
            return Err(shape_err(
                "conv2d",
                format!("bias {bias:?} must be [{cout}]"),
            ));
        }
        let (ph, pw, oh, ow) = match padding {
            Padding::Same => ((kh - 1) / 2, (kw - 1) / 2, h, w),
            Padding::Valid => {
                if kh > h || kw > w {
                    return Err(shape_err(
                        "conv2d",
                        format!("valid padding: kernel {kh}x{kw} exceeds input {h}x{w}"),
                    ));
                }
                (0, 0, h - kh + 1, w - kw + 1)
            }
        };
        Ok(Self {
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            ph,
            pw,
            oh,
            ow,
        })
    }
}

fn conv2d_forward(input: &[f64], kernels: &[f64], bias: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut out = vec![0.0; g.cout * g.oh * g.ow];
    let ohw = g.oh * g.ow;
    let ihw = g.h * g.w;
    for co in 0..g.cout {
        let out_ch = &mut out[co * ohw..(co + 1) * ohw];
        out_ch.fill(bias[co]);
        for ci in 0..g.cin {
            let in_ch = &input[ci * ihw..(ci + 1) * ihw];
            for kr in 0..g.kh {
                let or_lo = g.ph.saturating_sub(kr);
                let or_hi = (g.h + g.ph).saturating_sub(kr).min(g.oh);
                for kc in 0..g.kw {
                    let k = kernels[((co * g.cin + ci) * g.kh + kr) * g.kw + kc];
                    let oc_lo = g.pw.saturating_sub(kc);
                    let oc_hi = (g.w + g.pw).saturating_sub(kc).min(g.ow);
                    if oc_lo >= oc_hi {
                        continue;
                    }
                    let n = oc_hi - oc_lo;
                    for or in or_lo..or_hi {
                        let ir = or + kr - g.ph;
                        let ic = oc_lo + kc - g.pw;
                        let dst = &mut out_ch[or * g.ow + oc_lo..or * g.ow + oc_lo + n];
                        let src = &in_ch[ir * g.w + ic..ir * g.w + ic + n];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv2d_backward_input(grad_out: &[f64], kernels: &[f64], g: &ConvGeometry, d_input: &mut [f64]) {
    let ohw = g.oh * g.ow;
    let ihw = g.h * g.w;
    for co in 0..g.cout {
        let g_ch = &grad_out[co * ohw..(co + 1) * ohw];
        for ci in 0..g.cin {
            let di_ch = &mut d_input[ci * ihw..(ci + 1) * ihw];
            for kr in 0..g.kh {
                // d_in[ir] receives k * g[or] with or = ir + ph - kr
                let ir_lo = kr.saturating_sub(g.ph);
                let ir_hi = (g.oh + kr).saturating_sub(g.ph).min(g.h);
                for kc in 0..g.kw {
                    let k = kernels[((co * g.cin + ci) * g.kh + kr) * g.kw + kc];
                    let ic_lo = kc.saturating_sub(g.pw);
                    let ic_hi = (g.ow + kc).saturating_sub(g.pw).min(g.w);
                    if ic_lo >= ic_hi {
                        continue;
                    }
                    let n = ic_hi - ic_lo;
                    for ir in ir_lo..ir_hi {
                        let or = ir + g.ph - kr;
                        let oc = ic_lo + g.pw - kc;
                        let dst = &mut di_ch[ir * g.w + ic_lo..ir * g.w + ic_lo + n];
                        let src = &g_ch[or * g.ow + oc..or * g.ow + oc + n];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
}

fn conv2d_backward_kernels(
    grad_out: &[f64],
    input: &[f64],
    g: &ConvGeometry,
    d_kernels: &mut [f64],
) {
    let ohw = g.oh * g.ow;
    let ihw = g.h * g.w;
    for co in 0..g.cout {
        let g_ch = &grad_out[co * ohw..(co + 1) * ohw];
        for ci in 0..g.cin {
            let in_ch = &input[ci * ihw..(ci + 1) * ihw];
            for kr in 0..g.kh {
                let or_lo = g.ph.saturating_sub(kr);
                let or_hi = (g.h + g.ph).saturating_sub(kr).min(g.oh);
                for kc in 0..g.kw {
                    let oc_lo = g.pw.saturating_sub(kc);
                    let oc_hi = (g.w + g.pw).saturating_sub(kc).min(g.ow);
                    if oc_lo >= oc_hi {
                        continue;
                    }
                    let n = oc_hi - oc_lo;
                    let mut acc = 0.0;
                    for or in or_lo..or_hi {
                        let ir = or + kr - g.ph;
                        let ic = oc_lo + kc - g.pw;
                        let gs = &g_ch[or * g.ow + oc_lo..or * g.ow + oc_lo + n];
                        let xs = &in_ch[ir * g.w + ic..ir * g.w + ic + n];
                        for (gv, xv) in gs.iter().zip(xs) {
                            acc += gv * xv;
                        }
                    }
                    d_kernels[((co * g.cin + ci) * g.kh + kr) * g.kw + kc] += acc;
                }
            }
        }
    }
}
