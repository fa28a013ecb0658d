//! Reverse-mode gradient tape.
//!
//! A [`Graph`] records operations eagerly: every op computes its value on
//! insertion and pushes a node describing how to back-propagate through it.
//! [`Graph::backward`] walks the tape in reverse and accumulates parameter
//! gradients into a [`ParameterStore`]. The same forward path serves both
//! inference (values only) and training, so the gradient-checked code is the
//! code that generates.

use super::store::ParameterStore;
use super::{DenseTensor, Scalar};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Default layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

#[derive(Debug, Clone)]
enum Op {
    /// Constant input; gradients stop here.
    Leaf,
    /// Named parameter; backward accumulates into the store.
    Param(String),
    Matmul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `x[T×d] + b[d]` broadcast over rows.
    AddBias(Var, Var),
    /// `x[T×d] ⊙ b[d]` broadcast over rows.
    RowScale(Var, Var),
    ScaleConst(Var, f64),
    AddConst(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, eps: f64 },
    SoftmaxRows(Var),
    Gelu(Var),
    Transpose(Var),
    Narrow { x: Var, axis: usize, start: usize },
    Concat { axis: usize, parts: Vec<Var> },
    MeanRows(Var),
    MeanAll(Var),
    SumAll(Var),
    Reshape(Var),
    /// Linear rate change over rows; see `stream::resample_plan`.
    ResampleRows { x: Var, source_fps: f64, target_fps: f64 },
}

struct Node<S: Scalar> {
    value: DenseTensor<S>,
    op: Op,
    needs_grad: bool,
}

/// Eager tape of tensor operations.
pub struct Graph<S: Scalar> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop all recorded nodes so the graph can be reused.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    /// Computed value of a node.
    pub fn value(&self, v: Var) -> &DenseTensor<S> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: DenseTensor<S>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Record a constant. Gradients never flow into constants.
    pub fn constant(&mut self, value: DenseTensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Record a named parameter read from the store. The node participates in
    /// backward only while the parameter is marked trainable.
    pub fn param(&mut self, store: &ParameterStore<S>, name: &str) -> Result<Var> {
        let value = store.get(name)?.clone();
        let needs_grad = value.requires_grad();
        Ok(self.push(value, Op::Param(name.to_string()), needs_grad))
    }

    // ---- ops ---------------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Matmul(a, b), needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul(a, b), needs))
    }

    /// `x + b` with `b` broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let d = Self::check_rowvec(xv, bv, "add_bias")?;
        let mut out = xv.clone();
        for row in 0..out.numel() / d {
            for j in 0..d {
                let v = out.data()[row * d + j] + bv.data()[j];
                out.data_mut()[row * d + j] = v;
            }
        }
        out.set_requires_grad(false);
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(out, Op::AddBias(x, b), needs))
    }

    /// `x ⊙ b` with `b` broadcast over the rows of `x`.
    pub fn row_scale(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        let d = Self::check_rowvec(xv, bv, "row_scale")?;
        let mut out = xv.clone();
        for row in 0..out.numel() / d {
            for j in 0..d {
                let v = out.data()[row * d + j] * bv.data()[j];
                out.data_mut()[row * d + j] = v;
            }
        }
        out.set_requires_grad(false);
        let needs = self.needs(x) || self.needs(b);
        Ok(self.push(out, Op::RowScale(x, b), needs))
    }

    /// Broadcast validation for bias-style ops: last dim of `x` equals `numel(b)`.
    fn check_rowvec(xv: &DenseTensor<S>, bv: &DenseTensor<S>, op: &str) -> Result<usize> {
        if xv.rank() != 2 {
            return Err(Error::Shape(format!("{op} needs a rank-2 input, got {:?}", xv.shape())));
        }
        let d = xv.shape()[1];
        if bv.numel() != d {
            return Err(Error::Shape(format!(
                "{op} vector has {} elements, rows have {d}",
                bv.numel()
            )));
        }
        Ok(d)
    }

    pub fn scale_const(&mut self, x: Var, c: f64) -> Var {
        let cs = S::from_f64(c);
        let value = self.value(x).scale(cs);
        let needs = self.needs(x);
        self.push(value, Op::ScaleConst(x, c), needs)
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let cs = S::from_f64(c);
        let value = self.value(x).map(|v| v + cs);
        let needs = self.needs(x);
        self.push(value, Op::AddConst(x), needs)
    }

    /// Per-row layer normalization with affine gain/bias over the last dim.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Contract(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Shape(format!("layer_norm needs rank 2, got {:?}", xv.shape())));
        }
        let d = xv.shape()[1];
        if self.value(gain).numel() != d || self.value(bias).numel() != d {
            return Err(Error::Shape(format!(
                "layer_norm gain/bias need {d} elements, got {} and {}",
                self.value(gain).numel(),
                self.value(bias).numel()
            )));
        }
        let (xv, gv, bv) = (self.value(x), self.value(gain), self.value(bias));
        let rows = xv.shape()[0];
        let mut out = vec![S::zero(); rows * d];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let (mean, rstd) = row_moments(row, eps);
            for j in 0..d {
                out[r * d + j] = (row[j] - mean) * rstd * gv.data()[j] + bv.data()[j];
            }
        }
        let value = DenseTensor::from_vec(vec![rows, d], out)?;
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, eps }, needs))
    }

    /// Numerically stable per-row softmax.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Shape(format!("softmax_rows needs rank 2, got {:?}", xv.shape())));
        }
        let (rows, d) = (xv.shape()[0], xv.shape()[1]);
        let mut out = vec![S::zero(); rows * d];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            softmax_into(row, &mut out[r * d..(r + 1) * d]);
        }
        let value = DenseTensor::from_vec(vec![rows, d], out)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::SoftmaxRows(x), needs))
    }

    /// GELU activation (tanh approximation).
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu_value);
        let needs = self.needs(x);
        self.push(value, Op::Gelu(x), needs)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transposed()?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Transpose(x), needs))
    }

    /// Slice `len` indices starting at `start` along `axis` (0 = rows, 1 = cols).
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || axis > 1 {
            return Err(Error::Shape(format!(
                "narrow needs rank 2 and axis 0|1, got {:?} axis {axis}",
                xv.shape()
            )));
        }
        let dim = xv.shape()[axis];
        if len == 0 || start + len > dim {
            return Err(Error::Shape(format!(
                "narrow [{start}, {start}+{len}) out of bounds for axis {axis} of {:?}",
                xv.shape()
            )));
        }
        let (rows, cols) = (xv.shape()[0], xv.shape()[1]);
        let value = if axis == 0 {
            DenseTensor::from_vec(
                vec![len, cols],
                xv.data()[start * cols..(start + len) * cols].to_vec(),
            )?
        } else {
            let mut out = Vec::with_capacity(rows * len);
            for r in 0..rows {
                out.extend_from_slice(&xv.data()[r * cols + start..r * cols + start + len]);
            }
            DenseTensor::from_vec(vec![rows, len], out)?
        };
        let needs = self.needs(x);
        Ok(self.push(value, Op::Narrow { x, axis, start }, needs))
    }

    /// Concatenate rank-2 tensors along `axis` (0 = stack rows, 1 = widen cols).
    pub fn concat(&mut self, axis: usize, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat needs at least one part".into()));
        }
        if axis > 1 {
            return Err(Error::Shape(format!("concat axis must be 0|1, got {axis}")));
        }
        let other = 1 - axis;
        let common = self.value(parts[0]).shape().get(other).copied();
        for &p in parts {
            let pv = self.value(p);
            if pv.rank() != 2 || pv.shape().get(other).copied() != common {
                return Err(Error::Shape(format!(
                    "concat axis {axis}: incompatible part shape {:?}",
                    pv.shape()
                )));
            }
        }
        let value = if axis == 0 {
            let cols = common.unwrap();
            let rows: usize = parts.iter().map(|&p| self.value(p).shape()[0]).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for &p in parts {
                out.extend_from_slice(self.value(p).data());
            }
            DenseTensor::from_vec(vec![rows, cols], out)?
        } else {
            let rows = common.unwrap();
            let cols: usize = parts.iter().map(|&p| self.value(p).shape()[1]).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.shape()[1];
                    out.extend_from_slice(&pv.data()[r * w..(r + 1) * w]);
                }
            }
            DenseTensor::from_vec(vec![rows, cols], out)?
        };
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::Concat { axis, parts: parts.to_vec() }, needs))
    }

    /// Mean over rows: `[T×d] → [1×d]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Shape(format!("mean_rows needs rank 2, got {:?}", xv.shape())));
        }
        let (rows, d) = (xv.shape()[0], xv.shape()[1]);
        let inv = S::from_f64(1.0 / rows as f64);
        let mut out = vec![S::zero(); d];
        for r in 0..rows {
            for j in 0..d {
                out[j] += xv.data()[r * d + j];
            }
        }
        for o in out.iter_mut() {
            *o *= inv;
        }
        let value = DenseTensor::from_vec(vec![1, d], out)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::MeanRows(x), needs))
    }

    /// Mean of all elements → rank-0 scalar.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let inv = S::from_f64(1.0 / xv.numel() as f64);
        let mut acc = S::zero();
        for &v in xv.data() {
            acc += v;
        }
        let value = DenseTensor::scalar(acc * inv);
        let needs = self.needs(x);
        self.push(value, Op::MeanAll(x), needs)
    }

    /// Sum of all elements → rank-0 scalar.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut acc = S::zero();
        for &v in xv.data() {
            acc += v;
        }
        let value = DenseTensor::scalar(acc);
        let needs = self.needs(x);
        self.push(value, Op::SumAll(x), needs)
    }

    /// Reinterpret with a new shape of equal element count.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape.to_vec())?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    /// Resample rows from `source_fps` to `target_fps` by linear interpolation
    /// on the half-sample-centered time axis (same law as `resample_stream`).
    pub fn resample_rows(&mut self, x: Var, source_fps: f64, target_fps: f64) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 {
            return Err(Error::Shape(format!(
                "resample_rows needs rank 2, got {:?}",
                xv.shape()
            )));
        }
        let dim = xv.shape()[1];
        let taps = crate::stream::resample_plan(xv.shape()[0], source_fps, target_fps)?;
        let out = crate::stream::apply_resample_plan(&taps, xv.data(), dim);
        let value = DenseTensor::from_vec(vec![taps.len(), dim], out)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::ResampleRows { x, source_fps, target_fps }, needs))
    }

    /// Force a rank-2 value to exactly `want` rows by trimming the tail or
    /// repeating the last row, tolerating a difference of at most `slack`.
    /// Composite of narrow/concat, so it stays differentiable.
    pub fn align_rows(&mut self, x: Var, want: usize, slack: usize) -> Result<Var> {
        let have = self.value(x).shape()[0];
        if have == want {
            return Ok(x);
        }
        if have.abs_diff(want) > slack {
            return Err(Error::Contract(format!(
                "row alignment gap too large: have {have}, want {want} (slack {slack})"
            )));
        }
        if have > want {
            self.narrow(x, 0, 0, want)
        } else {
            let last = self.narrow(x, 0, have - 1, 1)?;
            let mut parts = vec![x];
            parts.extend(std::iter::repeat(last).take(want - have));
            self.concat(0, &parts)
        }
    }

    /// Scaled dot-product attention: `softmax(q·kᵀ/√d)·v`.
    ///
    /// Composite of tape primitives, so gradients flow to q, k and v.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.rank() != 2 || kv.rank() != 2 || vv.rank() != 2 {
            return Err(Error::Shape("attention needs rank-2 q, k, v".into()));
        }
        let d = kv.shape()[1];
        if qv.shape()[1] != d {
            return Err(Error::Shape(format!(
                "attention q/k dims disagree: {:?} vs {:?}",
                qv.shape(),
                kv.shape()
            )));
        }
        if vv.shape()[0] != kv.shape()[0] {
            return Err(Error::Shape(format!(
                "attention k/v row counts disagree: {:?} vs {:?}",
                kv.shape(),
                vv.shape()
            )));
        }
        let kt = self.transpose(k)?;
        let scores = self.matmul(q, kt)?;
        let scaled = self.scale_const(scores, 1.0 / (d as f64).sqrt());
        let probs = self.softmax_rows(scaled)?;
        self.matmul(probs, v)
    }

    // ---- backward ------------------------------------------------------------

    /// Back-propagate from a scalar `loss`, accumulating parameter gradients
    /// into `store`. Repeated calls accumulate.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore<S>) -> Result<()> {
        let lnode = &self.nodes[loss.0];
        if lnode.value.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lnode.value.shape()
            )));
        }
        if !lnode.needs_grad {
            // Loss does not depend on any trainable parameter; nothing to do.
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            // Inputs always precede node i on the tape, so split there.
            let (lower, upper) = grads.split_at_mut(i);
            let Some(gout) = upper[0].take() else { continue };
            self.backprop_node(i, &gout, lower, store)?;
        }
        Ok(())
    }

    /// Propagate `gout` (gradient at node `i`) into the node's inputs.
    fn backprop_node(
        &self,
        i: usize,
        gout: &[S],
        lower: &mut [Option<Vec<S>>],
        store: &mut ParameterStore<S>,
    ) -> Result<()> {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].needs_grad;
        // Accumulate `contrib` into the gradient slot of input `v`.
        macro_rules! acc {
            ($v:expr, $contrib:expr) => {{
                let v: Var = $v;
                if self.nodes[v.0].needs_grad {
                    let slot =
                        lower[v.0].get_or_insert_with(|| vec![S::zero(); val(v).numel()]);
                    for (dst, src) in slot.iter_mut().zip($contrib) {
                        *dst += src;
                    }
                }
            }};
        }

        match &node.op {
            Op::Leaf => {}
            Op::Param(name) => store.accumulate(name, gout)?,
            Op::Matmul(a, b) => {
                let gc = DenseTensor::from_vec(node.value.shape().to_vec(), gout.to_vec())?;
                if needs(*a) {
                    let bt = val(*b).transposed()?;
                    let da = gc.matmul(&bt)?;
                    acc!(*a, da.data().iter().copied());
                }
                if needs(*b) {
                    let at = val(*a).transposed()?;
                    let db = at.matmul(&gc)?;
                    acc!(*b, db.data().iter().copied());
                }
            }
            Op::Add(a, b) => {
                acc!(*a, gout.iter().copied());
                acc!(*b, gout.iter().copied());
            }
            Op::Sub(a, b) => {
                acc!(*a, gout.iter().copied());
                acc!(*b, gout.iter().map(|&g| -g));
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let bd = val(*b).data();
                    acc!(*a, gout.iter().zip(bd).map(|(&g, &b)| g * b));
                }
                if needs(*b) {
                    let ad = val(*a).data();
                    acc!(*b, gout.iter().zip(ad).map(|(&g, &a)| g * a));
                }
            }
            Op::AddBias(x, b) => {
                acc!(*x, gout.iter().copied());
                if needs(*b) {
                    let d = val(*b).numel();
                    let mut db = vec![S::zero(); d];
                    for (idx, &g) in gout.iter().enumerate() {
                        db[idx % d] += g;
                    }
                    acc!(*b, db.iter().copied());
                }
            }
            Op::RowScale(x, b) => {
                let d = val(*b).numel();
                if needs(*x) {
                    let bd = val(*b).data();
                    acc!(*x, gout.iter().enumerate().map(|(idx, &g)| g * bd[idx % d]));
                }
                if needs(*b) {
                    let xd = val(*x).data();
                    let mut db = vec![S::zero(); d];
                    for (idx, &g) in gout.iter().enumerate() {
                        db[idx % d] += g * xd[idx];
                    }
                    acc!(*b, db.iter().copied());
                }
            }
            Op::ScaleConst(x, c) => {
                let cs = S::from_f64(*c);
                acc!(*x, gout.iter().map(|&g| g * cs));
            }
            Op::AddConst(x) => {
                acc!(*x, gout.iter().copied());
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = val(*x);
                let gv = val(*gain);
                let (rows, d) = (xv.shape()[0], xv.shape()[1]);
                let mut dx = vec![S::zero(); rows * d];
                let mut dg = vec![S::zero(); d];
                let mut db = vec![S::zero(); d];
                let inv_d = S::from_f64(1.0 / d as f64);
                for r in 0..rows {
                    let row = &xv.data()[r * d..(r + 1) * d];
                    let gy = &gout[r * d..(r + 1) * d];
                    let (mean, rstd) = row_moments(row, *eps);
                    // dxhat, plus its mean and its xhat-weighted mean.
                    let mut m1 = S::zero();
                    let mut m2 = S::zero();
                    let mut dxhat = vec![S::zero(); d];
                    for j in 0..d {
                        let xhat = (row[j] - mean) * rstd;
                        db[j] += gy[j];
                        dg[j] += gy[j] * xhat;
                        dxhat[j] = gy[j] * gv.data()[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xhat;
                    }
                    m1 *= inv_d;
                    m2 *= inv_d;
                    for j in 0..d {
                        let xhat = (row[j] - mean) * rstd;
                        dx[r * d + j] = rstd * (dxhat[j] - m1 - xhat * m2);
                    }
                }
                acc!(*x, dx.iter().copied());
                acc!(*gain, dg.iter().copied());
                acc!(*bias, db.iter().copied());
            }
            Op::SoftmaxRows(x) => {
                let p = &node.value;
                let (rows, d) = (p.shape()[0], p.shape()[1]);
                let mut dx = vec![S::zero(); rows * d];
                for r in 0..rows {
                    let pr = &p.data()[r * d..(r + 1) * d];
                    let gy = &gout[r * d..(r + 1) * d];
                    let mut dot = S::zero();
                    for j in 0..d {
                        dot += gy[j] * pr[j];
                    }
                    for j in 0..d {
                        dx[r * d + j] = pr[j] * (gy[j] - dot);
                    }
                }
                acc!(*x, dx.iter().copied());
            }
            Op::Gelu(x) => {
                let xd = val(*x).data();
                acc!(*x, gout.iter().zip(xd).map(|(&g, &v)| g * gelu_derivative(v)));
            }
            Op::Transpose(x) => {
                let gc = DenseTensor::from_vec(node.value.shape().to_vec(), gout.to_vec())?;
                let gt = gc.transposed()?;
                acc!(*x, gt.data().iter().copied());
            }
            Op::Narrow { x, axis, start } => {
                if needs(*x) {
                    let xv = val(*x);
                    let (rows, cols) = (xv.shape()[0], xv.shape()[1]);
                    let (nrows, ncols) = (node.value.shape()[0], node.value.shape()[1]);
                    let mut dx = vec![S::zero(); rows * cols];
                    if *axis == 0 {
                        dx[start * cols..start * cols + gout.len()].copy_from_slice(gout);
                    } else {
                        for r in 0..nrows {
                            for j in 0..ncols {
                                dx[r * cols + start + j] = gout[r * ncols + j];
                            }
                        }
                    }
                    acc!(*x, dx.iter().copied());
                }
            }
            Op::Concat { axis, parts } => {
                if *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = val(p).numel();
                        acc!(p, gout[offset..offset + n].iter().copied());
                        offset += n;
                    }
                } else {
                    let rows = node.value.shape()[0];
                    let total = node.value.shape()[1];
                    let mut col0 = 0;
                    for &p in parts {
                        let w = val(p).shape()[1];
                        if needs(p) {
                            let mut dp = vec![S::zero(); rows * w];
                            for r in 0..rows {
                                dp[r * w..(r + 1) * w].copy_from_slice(
                                    &gout[r * total + col0..r * total + col0 + w],
                                );
                            }
                            acc!(p, dp.iter().copied());
                        }
                        col0 += w;
                    }
                }
            }
            Op::MeanRows(x) => {
                if needs(*x) {
                    let xv = val(*x);
                    let (rows, d) = (xv.shape()[0], xv.shape()[1]);
                    let inv = S::from_f64(1.0 / rows as f64);
                    acc!(*x, (0..rows * d).map(|idx| gout[idx % d] * inv));
                }
            }
            Op::MeanAll(x) => {
                let n = val(*x).numel();
                let g = gout[0] * S::from_f64(1.0 / n as f64);
                acc!(*x, std::iter::repeat(g).take(n));
            }
            Op::SumAll(x) => {
                let n = val(*x).numel();
                let g = gout[0];
                acc!(*x, std::iter::repeat(g).take(n));
            }
            Op::Reshape(x) => {
                acc!(*x, gout.iter().copied());
            }
            Op::ResampleRows { x, source_fps, target_fps } => {
                if needs(*x) {
                    let xv = val(*x);
                    let dim = xv.shape()[1];
                    let taps =
                        crate::stream::resample_plan(xv.shape()[0], *source_fps, *target_fps)?;
                    let mut dx = vec![S::zero(); xv.numel()];
                    for (i, tap) in taps.iter().enumerate() {
                        let w0 = S::from_f64(1.0 - tap.frac);
                        let w1 = S::from_f64(tap.frac);
                        for c in 0..dim {
                            let g = gout[i * dim + c];
                            dx[tap.j0 * dim + c] += g * w0;
                            dx[tap.j1 * dim + c] += g * w1;
                        }
                    }
                    acc!(*x, dx.iter().copied());
                }
            }
        }
        Ok(())
    }
}

/// Mean and reciprocal standard deviation of one row (biased variance).
fn row_moments<S: Scalar>(row: &[S], eps: f64) -> (S, S) {
    let inv_d = S::from_f64(1.0 / row.len() as f64);
    let mut mean = S::zero();
    for &v in row {
        mean += v;
    }
    mean *= inv_d;
    let mut var = S::zero();
    for &v in row {
        let c = v - mean;
        var += c * c;
    }
    var *= inv_d;
    let rstd = S::one() / (var + S::from_f64(eps)).sqrt();
    (mean, rstd)
}

/// Max-subtracted softmax of one row.
fn softmax_into<S: Scalar>(row: &[S], out: &mut [S]) {
    let mut max = row[0];
    for &v in &row[1..] {
        if v > max {
            max = v;
        }
    }
    let mut sum = S::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    let inv = S::one() / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

fn gelu_value<S: Scalar>(x: S) -> S {
    let k = S::from_f64(GELU_SQRT_2_OVER_PI);
    let c = S::from_f64(GELU_CUBIC);
    let half = S::from_f64(0.5);
    let inner = k * (x + c * x * x * x);
    half * x * (S::one() + inner.tanh())
}

fn gelu_derivative<S: Scalar>(x: S) -> S {
    let k = S::from_f64(GELU_SQRT_2_OVER_PI);
    let c = S::from_f64(GELU_CUBIC);
    let half = S::from_f64(0.5);
    let three = S::from_f64(3.0);
    let inner = k * (x + c * x * x * x);
    let t = inner.tanh();
    let dinner = k * (S::one() + three * c * x * x);
    half * (S::one() + t) + half * x * (S::one() - t * t) * dinner
}
