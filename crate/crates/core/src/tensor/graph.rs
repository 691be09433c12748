//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op in execution order. Parameters are borrowed
//! from a [`ParamStore`] rather than copied, and [`Graph::backward`] walks the
//! tape once in reverse, returning gradients in a separate [`Gradients`] value
//! so that the store can be updated afterwards by an optimizer.

use super::kernels::{self, ConvGeom};
use super::{
    conv_out_len, conv_transpose_out_len, shape_err, ParamId, ParamStore, Result, Scalar, Tensor,
    TensorError,
};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Value<T> {
    Owned(Tensor<T>),
    Param(ParamId),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    AvgPool2d {
        input: Var,
        factor: usize,
    },
    Reshape {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
}

struct Node<T> {
    value: Value<T>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    params: Option<&'p ParamStore<T>>,
    param_vars: Vec<Option<Var>>,
    nodes: Vec<Node<T>>,
    track_params: bool,
}

/// Gradients of a scalar loss with respect to parameters and to any input
/// leaves created with `requires_grad`.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: Vec<Option<Tensor<T>>>,
    inputs: Vec<(Var, Tensor<T>)>,
}

impl<T: Scalar> Gradients<T> {
    /// Empty gradients for a store with `n` parameters.
    pub fn empty(n: usize) -> Self {
        Self {
            params: vec![None; n],
            inputs: Vec::new(),
        }
    }

    /// Gradient of a parameter, or `None` if the loss does not depend on it.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    /// Sets a parameter gradient directly, for externally computed updates.
    pub fn set_param(&mut self, id: ParamId, grad: Tensor<T>) {
        if id.0 >= self.params.len() {
            self.params.resize(id.0 + 1, None);
        }
        self.params[id.0] = Some(grad);
    }

    /// Gradient of an input leaf.
    pub fn wrt(&self, var: Var) -> Option<&Tensor<T>> {
        self.inputs.iter().find(|(v, _)| *v == var).map(|(_, t)| t)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Adds another set of parameter gradients into this one.
    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        if other.params.len() != self.params.len() {
            return shape_err(
                "accumulate",
                format!("{} vs {} parameters", self.params.len(), other.params.len()),
            );
        }
        for (mine, theirs) in self.params.iter_mut().zip(&other.params) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.add_assign(t)?,
                    None => *mine = Some(t.clone()),
                }
            }
        }
        Ok(())
    }

    /// L2 norm over all parameter gradients.
    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter())
            .map(|v| {
                let v = v.to_f64().unwrap_or(f64::NAN);
                v * v
            })
            .sum::<f64>()
            .sqrt()
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, grad: Tensor<T>) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&grad),
        None => {
            *slot = Some(grad);
            Ok(())
        }
    }
}

/// Splits `[B, C, H, W]` or `[C, H, W]` into `(batch, c, h, w, batched)`.
fn image_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize, bool)> {
    match *shape {
        [b, c, h, w] => Ok((b, c, h, w, true)),
        [c, h, w] => Ok((1, c, h, w, false)),
        _ => shape_err(op, format!("expected [B,C,H,W] or [C,H,W], got {shape:?}")),
    }
}

fn image_shape(batched: bool, b: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if batched {
        vec![b, c, h, w]
    } else {
        vec![c, h, w]
    }
}

fn square_kernel(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [a, b, kh, kw] if kh == kw => Ok((a, b, kh)),
        [_, _, kh, kw] => shape_err(
            op,
            format!("only square kernels are supported, got {kh}x{kw}"),
        ),
        _ => shape_err(op, format!("weight must be 4-D, got {shape:?}")),
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    /// Graph whose parameter leaves require gradients.
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            param_vars: vec![None; params.len()],
            nodes: Vec::new(),
            track_params: true,
        }
    }

    /// Graph for inference: parameters are read but never differentiated.
    pub fn inference(params: &'p ParamStore<T>) -> Self {
        Self {
            track_params: false,
            ..Self::new(params)
        }
    }

    /// Graph without parameters, for standalone ops on input leaves.
    pub fn detached() -> Self {
        Self {
            params: None,
            param_vars: Vec::new(),
            nodes: Vec::new(),
            track_params: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self
                .params
                .expect("parameter node without a store")
                .get(*id),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Records a constant or differentiable input leaf.
    pub fn input(&mut self, tensor: Tensor<T>, requires_grad: bool) -> Var {
        self.push(tensor, Op::Leaf, requires_grad)
    }

    /// Leaf for a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: self.track_params,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        const OP: &str = "conv2d";
        let (b, c_in, h, w, batched) = image_dims(OP, self.shape(input))?;
        let (c_out, wc_in, k) = square_kernel(OP, self.shape(weight))?;
        if wc_in != c_in {
            return shape_err(
                OP,
                format!("input has {c_in} channels, weight expects {wc_in}"),
            );
        }
        if self.shape(bias) != [c_out] {
            return shape_err(
                OP,
                format!("bias {:?} for {c_out} output channels", self.shape(bias)),
            );
        }
        if stride == 0 {
            return Err(TensorError::Argument {
                op: OP,
                detail: "stride must be at least 1".into(),
            });
        }
        let (Some(out_h), Some(out_w)) = (
            conv_out_len(h, k, stride, padding),
            conv_out_len(w, k, stride, padding),
        ) else {
            return shape_err(
                OP,
                format!("kernel {k} larger than padded input {h}x{w} (padding {padding})"),
            );
        };
        let g = ConvGeom {
            channels: c_in,
            height: h,
            width: w,
            kernel: k,
            stride,
            padding,
            out_h,
            out_w,
        };
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let bs = self.value(bias).data();
        let (rows, cols) = (g.col_rows(), g.col_cols());
        let mut col = vec![T::zero(); rows * cols];
        let mut out = vec![T::zero(); b * c_out * cols];
        for (xb, ob) in x
            .chunks_exact(g.image_len())
            .zip(out.chunks_exact_mut(c_out * cols))
        {
            kernels::im2col(&g, xb, &mut col);
            T::gemm(
                c_out,
                rows,
                cols,
                T::one(),
                wt,
                rows,
                1,
                &col,
                cols,
                1,
                T::zero(),
                ob,
                cols,
                1,
            );
            kernels::add_channel_bias(ob, bs, cols);
        }
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        let out = Tensor::new(image_shape(batched, b, c_out, out_h, out_w), out)?;
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            rg,
        ))
    }

    /// Transposed convolution. `weight` is `[C_in, C_out, k, k]`.
    pub fn conv_transpose2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Var> {
        const OP: &str = "conv_transpose2d";
        let (b, c_in, h, w, batched) = image_dims(OP, self.shape(input))?;
        let (wc_in, c_out, k) = square_kernel(OP, self.shape(weight))?;
        if wc_in != c_in {
            return shape_err(
                OP,
                format!("input has {c_in} channels, weight expects {wc_in}"),
            );
        }
        if self.shape(bias) != [c_out] {
            return shape_err(
                OP,
                format!("bias {:?} for {c_out} output channels", self.shape(bias)),
            );
        }
        let (Some(out_h), Some(out_w)) = (
            conv_transpose_out_len(h, k, stride, padding, output_padding),
            conv_transpose_out_len(w, k, stride, padding, output_padding),
        ) else {
            return shape_err(
                OP,
                format!(
                    "no valid output for input {h}x{w}, kernel {k}, stride {stride}, \
                     padding {padding}, output_padding {output_padding}"
                ),
            );
        };
        if conv_out_len(out_h, k, stride, padding) != Some(h)
            || conv_out_len(out_w, k, stride, padding) != Some(w)
        {
            return shape_err(OP, format!("padding {padding} too large for kernel {k}"));
        }
        let g = ConvGeom {
            channels: c_out,
            height: out_h,
            width: out_w,
            kernel: k,
            stride,
            padding,
            out_h: h,
            out_w: w,
        };
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let bs = self.value(bias).data();
        let (rows, cols) = (g.col_rows(), g.col_cols());
        let mut col = vec![T::zero(); rows * cols];
        let mut out = vec![T::zero(); b * g.image_len()];
        for (xb, ob) in x
            .chunks_exact(c_in * cols)
            .zip(out.chunks_exact_mut(g.image_len()))
        {
            T::gemm(
                rows,
                c_in,
                cols,
                T::one(),
                wt,
                1,
                rows,
                xb,
                cols,
                1,
                T::zero(),
                &mut col,
                cols,
                1,
            );
            kernels::col2im_add(&g, &col, ob);
            kernels::add_channel_bias(ob, bs, out_h * out_w);
        }
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        let out = Tensor::new(image_shape(batched, b, c_out, out_h, out_w), out)?;
        Ok(self.push(
            out,
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                padding,
            },
            rg,
        ))
    }

    /// `y = x W^T + b` for `x: [B, N]`, `W: [M, N]`, `b: [M]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        const OP: &str = "linear";
        let [batch, n] = *self.shape(input) else {
            return shape_err(
                OP,
                format!("input must be [B, N], got {:?}", self.shape(input)),
            );
        };
        let [m, wn] = *self.shape(weight) else {
            return shape_err(
                OP,
                format!("weight must be [M, N], got {:?}", self.shape(weight)),
            );
        };
        if wn != n {
            return shape_err(OP, format!("input has {n} features, weight expects {wn}"));
        }
        if self.shape(bias) != [m] {
            return shape_err(OP, format!("bias {:?} for {m} outputs", self.shape(bias)));
        }
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let bs = self.value(bias).data();
        let mut out = vec![T::zero(); batch * m];
        T::gemm(
            batch,
            n,
            m,
            T::one(),
            x,
            n,
            1,
            wt,
            1,
            n,
            T::zero(),
            &mut out,
            m,
            1,
        );
        for row in out.chunks_exact_mut(m) {
            for (v, &bb) in row.iter_mut().zip(bs) {
                *v += bb;
            }
        }
        let rg = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            Tensor::new([batch, m], out)?,
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        // max/min instead of a branch: signs are unpredictable
        let out = self
            .value(input)
            .map(|v| v.max(T::zero()) + s * v.min(T::zero()));
        let rg = self.needs(input);
        self.push(out, Op::LeakyRelu { input, slope }, rg)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.leaky_relu(input, 0.0)
    }

    /// Non-overlapping average pooling by `factor` on both spatial axes.
    pub fn avg_pool2d(&mut self, input: Var, factor: usize) -> Result<Var> {
        const OP: &str = "avg_pool2d";
        let (b, c, h, w, batched) = image_dims(OP, self.shape(input))?;
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(TensorError::Argument {
                op: OP,
                detail: format!("factor {factor} does not divide {h}x{w}"),
            });
        }
        let (oh, ow) = (h / factor, w / factor);
        let mut out = vec![T::zero(); b * c * oh * ow];
        kernels::avg_pool_forward(self.value(input).data(), &mut out, b * c, h, w, factor);
        let rg = self.needs(input);
        Ok(self.push(
            Tensor::new(image_shape(batched, b, c, oh, ow), out)?,
            Op::AvgPool2d { input, factor },
            rg,
        ))
    }

    pub fn reshape(&mut self, input: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(input).clone().reshape(shape)?;
        let rg = self.needs(input);
        Ok(self.push(out, Op::Reshape { input }, rg))
    }

    /// Flattens everything but the leading batch axis.
    pub fn flatten(&mut self, input: Var) -> Result<Var> {
        let shape = self.shape(input);
        let Some((&b, rest)) = shape.split_first() else {
            return shape_err("flatten", "cannot flatten a scalar");
        };
        let n = rest.iter().product::<usize>();
        self.reshape(input, [b, n])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return shape_err("add", format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let mut out = ta.clone();
        out.add_assign(tb)?;
        let rg = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Sum of several same-shaped nodes, folded left to right.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let Some((&first, rest)) = terms.split_first() else {
            return Err(TensorError::Argument {
                op: "sum",
                detail: "no terms".into(),
            });
        };
        rest.iter().try_fold(first, |acc, &t| self.add(acc, t))
    }

    /// Mean over all elements of `(pred - target)^2`.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return shape_err("mse", format!("{:?} vs {:?}", p.shape(), t.shape()));
        }
        if p.is_empty() {
            return shape_err("mse", "empty tensors");
        }
        let value =
            T::from_f64(squared_error_sum(p.data(), t.data()) / p.len() as f64).unwrap_or(T::nan());
        let out = Tensor::scalar(value);
        out.check_finite("mse")?;
        let rg = self.needs(pred) || self.needs(target);
        Ok(self.push(out, Op::Mse { pred, target }, rg))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let shape = self.shape(loss);
        if self.value(loss).len() != 1 {
            return Err(TensorError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::full(shape.to_vec(), T::one()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(&node.op, Var(i), g, &mut grads)?;
        }

        let mut out = Gradients::empty(self.param_vars.len());
        for (i, slot) in grads.into_iter().enumerate() {
            let Some(t) = slot else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match node.value {
                Value::Param(id) => out.params[id.0] = Some(t),
                Value::Owned(_) if matches!(node.op, Op::Leaf) => out.inputs.push((Var(i), t)),
                Value::Owned(_) => {}
            }
        }
        Ok(out)
    }

    fn backward_node(
        &self,
        op: &Op,
        out_var: Var,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        match *op {
            Op::Leaf => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let xs = self.value(input);
                let (b, c_in, h, w, _) = image_dims("conv2d", xs.shape())?;
                let (c_out, _, k) = square_kernel("conv2d", self.shape(weight))?;
                let (_, _, out_h, out_w, _) = image_dims("conv2d", self.shape(out_var))?;
                let geom = ConvGeom {
                    channels: c_in,
                    height: h,
                    width: w,
                    kernel: k,
                    stride,
                    padding,
                    out_h,
                    out_w,
                };
                let (rows, cols) = (geom.col_rows(), geom.col_cols());
                let wt = self.value(weight).data();
                let gd = g.data();
                if self.needs(weight) {
                    let mut dw = vec![T::zero(); c_out * rows];
                    let mut col = vec![T::zero(); rows * cols];
                    for (xb, gb) in xs
                        .data()
                        .chunks_exact(geom.image_len())
                        .zip(gd.chunks_exact(c_out * cols))
                    {
                        kernels::im2col(&geom, xb, &mut col);
                        T::gemm(
                            c_out,
                            cols,
                            rows,
                            T::one(),
                            gb,
                            cols,
                            1,
                            &col,
                            1,
                            cols,
                            T::one(),
                            &mut dw,
                            rows,
                            1,
                        );
                    }
                    accumulate(
                        &mut grads[weight.0],
                        Tensor::new(self.shape(weight).to_vec(), dw)?,
                    )?;
                }
                if self.needs(bias) {
                    let mut db = vec![T::zero(); c_out];
                    for gb in gd.chunks_exact(c_out * cols) {
                        kernels::accumulate_channel_sums(gb, &mut db, cols);
                    }
                    accumulate(&mut grads[bias.0], Tensor::new([c_out], db)?)?;
                }
                if self.needs(input) {
                    let mut dx = vec![T::zero(); b * geom.image_len()];
                    let mut dcol = vec![T::zero(); rows * cols];
                    for (dxb, gb) in dx
                        .chunks_exact_mut(geom.image_len())
                        .zip(gd.chunks_exact(c_out * cols))
                    {
                        T::gemm(
                            rows,
                            c_out,
                            cols,
                            T::one(),
                            wt,
                            1,
                            rows,
                            gb,
                            cols,
                            1,
                            T::zero(),
                            &mut dcol,
                            cols,
                            1,
                        );
                        kernels::col2im_add(&geom, &dcol, dxb);
                    }
                    accumulate(&mut grads[input.0], Tensor::new(xs.shape().to_vec(), dx)?)?;
                }
            }
            Op::ConvTranspose2d {
                input,
                weight,
                bias,
                stride,
                padding,
            } => {
                let xs = self.value(input);
                let (_, c_in, h, w, _) = image_dims("conv_transpose2d", xs.shape())?;
                let (_, c_out, k) = square_kernel("conv_transpose2d", self.shape(weight))?;
                let (_, _, out_h, out_w, _) = image_dims("conv_transpose2d", g.shape())?;
                let geom = ConvGeom {
                    channels: c_out,
                    height: out_h,
                    width: out_w,
                    kernel: k,
                    stride,
                    padding,
                    out_h: h,
                    out_w: w,
                };
                let (rows, cols) = (geom.col_rows(), geom.col_cols());
                let wt = self.value(weight).data();
                let gd = g.data();
                let need_w = self.needs(weight);
                let need_x = self.needs(input);
                if need_w || need_x {
                    let mut dw = if need_w {
                        vec![T::zero(); c_in * rows]
                    } else {
                        Vec::new()
                    };
                    let mut dx = if need_x {
                        vec![T::zero(); xs.len()]
                    } else {
                        Vec::new()
                    };
                    let mut col = vec![T::zero(); rows * cols];
                    for (bi, gb) in gd.chunks_exact(geom.image_len()).enumerate() {
                        kernels::im2col(&geom, gb, &mut col);
                        let span = bi * c_in * cols..(bi + 1) * c_in * cols;
                        if need_w {
                            T::gemm(
                                c_in,
                                cols,
                                rows,
                                T::one(),
                                &xs.data()[span.clone()],
                                cols,
                                1,
                                &col,
                                1,
                                cols,
                                T::one(),
                                &mut dw,
                                rows,
                                1,
                            );
                        }
                        if need_x {
                            T::gemm(
                                c_in,
                                rows,
                                cols,
                                T::one(),
                                wt,
                                rows,
                                1,
                                &col,
                                cols,
                                1,
                                T::zero(),
                                &mut dx[span],
                                cols,
                                1,
                            );
                        }
                    }
                    if need_w {
                        accumulate(
                            &mut grads[weight.0],
                            Tensor::new(self.shape(weight).to_vec(), dw)?,
                        )?;
                    }
                    if need_x {
                        accumulate(&mut grads[input.0], Tensor::new(xs.shape().to_vec(), dx)?)?;
                    }
                }
                if self.needs(bias) {
                    let mut db = vec![T::zero(); c_out];
                    for gb in gd.chunks_exact(geom.image_len()) {
                        kernels::accumulate_channel_sums(gb, &mut db, out_h * out_w);
                    }
                    accumulate(&mut grads[bias.0], Tensor::new([c_out], db)?)?;
                }
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let xs = self.value(input);
                let [batch, n] = *xs.shape() else {
                    unreachable!("linear input checked in forward")
                };
                let m = self.shape(weight)[0];
                let gd = g.data();
                if self.needs(input) {
                    let mut dx = vec![T::zero(); batch * n];
                    T::gemm(
                        batch,
                        m,
                        n,
                        T::one(),
                        gd,
                        m,
                        1,
                        self.value(weight).data(),
                        n,
                        1,
                        T::zero(),
                        &mut dx,
                        n,
                        1,
                    );
                    accumulate(&mut grads[input.0], Tensor::new([batch, n], dx)?)?;
                }
                if self.needs(weight) {
                    let mut dw = vec![T::zero(); m * n];
                    T::gemm(
                        m,
                        batch,
                        n,
                        T::one(),
                        gd,
                        1,
                        m,
                        xs.data(),
                        n,
                        1,
                        T::zero(),
                        &mut dw,
                        n,
                        1,
                    );
                    accumulate(&mut grads[weight.0], Tensor::new([m, n], dw)?)?;
                }
                if self.needs(bias) {
                    let mut db = vec![T::zero(); m];
                    for row in gd.chunks_exact(m) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads[bias.0], Tensor::new([m], db)?)?;
                }
            }
            Op::LeakyRelu { input, slope } => {
                if self.needs(input) {
                    let s = T::lit(slope);
                    let x = self.value(input);
                    let dx: Vec<T> = x
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&xv, &gv)| {
                            let d = if xv > T::zero() { T::one() } else { s };
                            gv * d
                        })
                        .collect();
                    accumulate(&mut grads[input.0], Tensor::new(x.shape().to_vec(), dx)?)?;
                }
            }
            Op::AvgPool2d { input, factor } => {
                if self.needs(input) {
                    let x = self.value(input);
                    let (b, c, h, w, _) = image_dims("avg_pool2d", x.shape())?;
                    let mut dx = vec![T::zero(); x.len()];
                    kernels::avg_pool_backward(g.data(), &mut dx, b * c, h, w, factor);
                    accumulate(&mut grads[input.0], Tensor::new(x.shape().to_vec(), dx)?)?;
                }
            }
            Op::Reshape { input } => {
                if self.needs(input) {
                    let shape = self.shape(input).to_vec();
                    accumulate(&mut grads[input.0], g.reshape(shape)?)?;
                }
            }
            Op::Add { a, b } => {
                if self.needs(a) {
                    accumulate(&mut grads[a.0], g.clone())?;
                }
                if self.needs(b) {
                    accumulate(&mut grads[b.0], g)?;
                }
            }
            Op::Mse { pred, target } => {
                let (p, t) = (self.value(pred), self.value(target));
                let scale = g.item() * T::lit(2.0 / p.len() as f64);
                let dp: Vec<T> = p
                    .data()
                    .iter()
                    .zip(t.data())
                    .map(|(&a, &b)| (a - b) * scale)
                    .collect();
                if self.needs(target) {
                    let dt = dp.iter().map(|&v| -v).collect();
                    accumulate(&mut grads[target.0], Tensor::new(t.shape().to_vec(), dt)?)?;
                }
                if self.needs(pred) {
                    accumulate(&mut grads[pred.0], Tensor::new(p.shape().to_vec(), dp)?)?;
                }
            }
        }
        Ok(())
    }
}

/// Sequential sum of squared differences accumulated in `f64`.
pub(crate) fn squared_error_sum<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let mut s = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let d = x.to_f64().unwrap_or(f64::NAN) - y.to_f64().unwrap_or(f64::NAN);
        s += d * d;
    }
    s
}
