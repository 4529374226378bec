use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::kernels::{self, ConvGeom};
use super::tensor::{ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        input: usize,
        kernel: usize,
        bias: usize,
        geom: ConvGeom,
    },
    Linear {
        input: usize,
        weight: usize,
        bias: usize,
        batch: usize,
        in_dim: usize,
        out_dim: usize,
    },
    Relu(usize),
    Tanh(usize),
    Scale(usize, f64),
    Add(usize, usize),
    Sum(usize),
    Pick(usize, usize),
    Reshape(usize),
    /// Per-`(n, c)` multiplier broadcast over the spatial plane.
    ChannelMask {
        input: usize,
        mask: Vec<f64>,
        plane: usize,
    },
    LogSoftmax {
        input: usize,
        cols: usize,
    },
    Nll {
        input: usize,
        targets: Vec<usize>,
        cols: usize,
    },
    /// Row-wise map with a locally precomputed Jacobian. Each output row of
    /// width `out_w` depends on the matching input row of width `in_w` and,
    /// optionally, on a shared parameter vector.
    RowMap {
        input: usize,
        in_w: usize,
        out_w: usize,
        row_jac: Vec<f64>,
        shared: Option<(usize, Vec<f64>)>,
    },
    ChannelSum {
        input: usize,
        sample: usize,
        weights: Vec<f64>,
        channels: usize,
        plane: usize,
    },
    SqDist {
        input: usize,
        target: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

/// Append-only record of a forward computation, replayed in reverse by
/// [`Tape::backward`]. Node inputs always precede the node itself.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(Error::Usage("variable belongs to a different tape".into()));
        }
        self.nodes
            .get(v.index)
            .ok_or_else(|| Error::Usage("variable index past end of tape".into()))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).expect("foreign variable").value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).expect("foreign variable").shape
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v).expect("foreign variable");
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape node shape")
    }

    /// Records a constant.
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Input)
    }

    /// Records a trainable parameter; its gradient is reported back under `id`.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let t = params.get(id);
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Param(id))
    }

    /// Valid (unpadded) stride-1 cross-correlation.
    ///
    /// `input` is `N x Cin x H x W`, `kernel` is `Cout x Cin x K x K`, `bias` has `Cout` entries.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let xs = self.node(input)?.shape.clone();
        let ks = self.node(kernel)?.shape.clone();
        let bs = self.node(bias)?.shape.clone();
        if xs.len() != 4 {
            return Err(Error::dim("input rank", 4, xs.len()));
        }
        if ks.len() != 4 {
            return Err(Error::dim("kernel rank", 4, ks.len()));
        }
        if ks[1] != xs[1] {
            return Err(Error::dim("channel axis", ks[1], xs[1]));
        }
        if ks[2] != ks[3] {
            return Err(Error::dim("kernel width", ks[2], ks[3]));
        }
        if ks[2] > xs[2] {
            return Err(Error::dim("height axis", ks[2], xs[2]));
        }
        if ks[3] > xs[3] {
            return Err(Error::dim("width axis", ks[3], xs[3]));
        }
        if bs.iter().product::<usize>() != ks[0] {
            return Err(Error::dim("bias length", ks[0], bs.iter().product()));
        }
        let geom = ConvGeom {
            batch: xs[0],
            in_ch: xs[1],
            out_ch: ks[0],
            height: xs[2],
            width: xs[3],
            k: ks[2],
        };
        let value = kernels::conv2d_forward(
            geom,
            &self.nodes[input.index].value,
            &self.nodes[kernel.index].value,
            &self.nodes[bias.index].value,
        );
        let shape = vec![geom.batch, geom.out_ch, geom.out_h(), geom.out_w()];
        Ok(self.push(
            shape,
            value,
            Op::Conv2d {
                input: input.index,
                kernel: kernel.index,
                bias: bias.index,
                geom,
            },
        ))
    }

    /// Affine map `weight · x + bias` applied to every row of `input`.
    ///
    /// `input` is either a vector of length `D` or a matrix `N x D`; `weight` is `M x D`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.node(input)?.shape.clone();
        let ws = self.node(weight)?.shape.clone();
        let bs = self.node(bias)?.shape.clone();
        if ws.len() != 2 {
            return Err(Error::dim("weight rank", 2, ws.len()));
        }
        let (out_dim, in_dim) = (ws[0], ws[1]);
        let (batch, out_shape) = match xs.len() {
            1 => (1, vec![out_dim]),
            2 => (xs[0], vec![xs[0], out_dim]),
            r => return Err(Error::dim("input rank", 2, r)),
        };
        let x_dim = *xs.last().unwrap();
        if x_dim != in_dim {
            return Err(Error::dim("input feature axis", in_dim, x_dim));
        }
        if bs.iter().product::<usize>() != out_dim {
            return Err(Error::dim("bias length", out_dim, bs.iter().product()));
        }
        let value = kernels::linear_forward(
            batch,
            in_dim,
            out_dim,
            &self.nodes[input.index].value,
            &self.nodes[weight.index].value,
            &self.nodes[bias.index].value,
        );
        Ok(self.push(
            out_shape,
            value,
            Op::Linear {
                input: input.index,
                weight: weight.index,
                bias: bias.index,
                batch,
                in_dim,
                out_dim,
            },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x)?;
        let value = n.value.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
        let shape = n.shape.clone();
        Ok(self.push(shape, value, Op::Relu(x.index)))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x)?;
        let value = n.value.iter().map(|v| v.tanh()).collect();
        let shape = n.shape.clone();
        Ok(self.push(shape, value, Op::Tanh(x.index)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let n = self.node(x)?;
        let value = n.value.iter().map(|v| v * c).collect();
        let shape = n.shape.clone();
        Ok(self.push(shape, value, Op::Scale(x.index, c)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        if na.value.len() != nb.value.len() {
            return Err(Error::dim("operand length", na.value.len(), nb.value.len()));
        }
        let value = na.value.iter().zip(&nb.value).map(|(x, y)| x + y).collect();
        let shape = na.shape.clone();
        Ok(self.push(shape, value, Op::Add(a.index, b.index)))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.node(x)?.value.iter().sum();
        Ok(self.push(vec![1], vec![s], Op::Sum(x.index)))
    }

    /// Scalar element `x[flat_index]`.
    pub fn pick(&mut self, x: Var, flat_index: usize) -> Result<Var> {
        let n = self.node(x)?;
        let v = *n
            .value
            .get(flat_index)
            .ok_or_else(|| Error::dim("pick index", n.value.len(), flat_index))?;
        Ok(self.push(vec![1], vec![v], Op::Pick(x.index, flat_index)))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let n = self.node(x)?;
        let numel: usize = shape.iter().product();
        if numel != n.value.len() {
            return Err(Error::dim("reshape element count", n.value.len(), numel));
        }
        let value = n.value.clone();
        Ok(self.push(shape, value, Op::Reshape(x.index)))
    }

    /// Collapses every axis after the first: `N x ...` becomes `N x D`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.node(x)?.shape.clone();
        let batch = shape.first().copied().unwrap_or(1);
        let rest = shape.iter().skip(1).product();
        self.reshape(x, vec![batch, rest])
    }

    /// Channel dropout with inverted scaling. Whole `H x W` planes are zeroed
    /// with probability `p`; survivors are scaled by `1 / (1 - p)`.
    pub fn dropout2d<R: Rng + ?Sized>(&mut self, x: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..=1.0).contains(&p) || p.is_nan() {
            return Err(Error::Parameter(format!("dropout probability {p} outside [0, 1]")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        if p == 1.0 {
            return Err(Error::Parameter("dropout probability 1 drops every channel".into()));
        }
        let n = self.node(x)?;
        if n.shape.len() != 4 {
            return Err(Error::dim("dropout input rank", 4, n.shape.len()));
        }
        let channels = n.shape[0] * n.shape[1];
        let plane = n.shape[2] * n.shape[3];
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..channels)
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let value = n
            .value
            .chunks(plane)
            .zip(&mask)
            .flat_map(|(chunk, &m)| chunk.iter().map(move |v| v * m))
            .collect();
        let shape = n.shape.clone();
        Ok(self.push(
            shape,
            value,
            Op::ChannelMask {
                input: x.index,
                mask,
                plane,
            },
        ))
    }

    /// Row-wise log-softmax over the last axis of an `N x C` matrix.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let n = self.node(x)?;
        let cols = *n.shape.last().ok_or_else(|| Error::Usage("log_softmax of a rank-0 value".into()))?;
        let mut value = Vec::with_capacity(n.value.len());
        for row in n.value.chunks(cols) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            value.extend(row.iter().map(|v| v - lse));
        }
        let shape = n.shape.clone();
        Ok(self.push(shape, value, Op::LogSoftmax { input: x.index, cols }))
    }

    /// Mean negative log-likelihood of `targets` under row-wise log-probabilities.
    pub fn nll(&mut self, log_probs: Var, targets: &[usize]) -> Result<Var> {
        let n = self.node(log_probs)?;
        let cols = *n.shape.last().unwrap_or(&1);
        let rows = n.value.len() / cols.max(1);
        if rows != targets.len() {
            return Err(Error::dim("target count", rows, targets.len()));
        }
        if rows == 0 {
            return Err(Error::Usage("nll over an empty batch".into()));
        }
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(Error::dim("target class", cols, t));
            }
            total -= n.value[r * cols + t];
        }
        Ok(self.push(
            vec![1],
            vec![total / rows as f64],
            Op::Nll {
                input: log_probs.index,
                targets: targets.to_vec(),
                cols,
            },
        ))
    }

    /// Records a row-wise function whose Jacobian the caller has already
    /// computed (used for the quantum head, differentiated by parameter shift).
    ///
    /// `row_jac` holds, per row, an `out_w x in_w` block; `shared_jac` holds,
    /// per row, an `out_w x len(shared)` block.
    pub fn row_map(
        &mut self,
        input: Var,
        out_w: usize,
        value: Vec<f64>,
        row_jac: Vec<f64>,
        shared: Option<(Var, Vec<f64>)>,
    ) -> Result<Var> {
        let n = self.node(input)?;
        let in_w = *n.shape.last().unwrap_or(&1);
        let rows = n.value.len() / in_w.max(1);
        if value.len() != rows * out_w {
            return Err(Error::dim("row_map output length", rows * out_w, value.len()));
        }
        if row_jac.len() != rows * out_w * in_w {
            return Err(Error::dim("row_map jacobian length", rows * out_w * in_w, row_jac.len()));
        }
        let shared = match shared {
            Some((v, jac)) => {
                let len = self.node(v)?.value.len();
                if jac.len() != rows * out_w * len {
                    return Err(Error::dim("row_map shared jacobian length", rows * out_w * len, jac.len()));
                }
                Some((v.index, jac))
            }
            None => None,
        };
        Ok(self.push(
            vec![rows, out_w],
            value,
            Op::RowMap {
                input: input.index,
                in_w,
                out_w,
                row_jac,
                shared,
            },
        ))
    }

    /// `sum_k weights[k] * x[sample, k]` for an `N x C x H x W` input, giving an `H x W` map.
    pub fn channel_sum(&mut self, x: Var, sample: usize, weights: &[f64]) -> Result<Var> {
        let n = self.node(x)?;
        if n.shape.len() != 4 {
            return Err(Error::dim("channel_sum input rank", 4, n.shape.len()));
        }
        if sample >= n.shape[0] {
            return Err(Error::dim("sample index", n.shape[0], sample));
        }
        let (channels, h, w) = (n.shape[1], n.shape[2], n.shape[3]);
        if weights.len() != channels {
            return Err(Error::dim("channel weights", channels, weights.len()));
        }
        let plane = h * w;
        let mut value = vec![0.0; plane];
        for (k, &a) in weights.iter().enumerate() {
            let src = &n.value[(sample * channels + k) * plane..][..plane];
            value.iter_mut().zip(src).for_each(|(o, s)| *o += a * s);
        }
        Ok(self.push(
            vec![h, w],
            value,
            Op::ChannelSum {
                input: x.index,
                sample,
                weights: weights.to_vec(),
                channels,
                plane,
            },
        ))
    }

    /// Squared Euclidean (Frobenius) distance to a constant target.
    pub fn sq_dist(&mut self, x: Var, target: &[f64]) -> Result<Var> {
        let n = self.node(x)?;
        if n.value.len() != target.len() {
            return Err(Error::dim("target length", n.value.len(), target.len()));
        }
        let d = n.value.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.push(
            vec![1],
            vec![d],
            Op::SqDist {
                input: x.index,
                target: target.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got {} elements",
                root.value.len()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(vec![1.0]);
        let mut params = Vec::new();

        for idx in (0..=loss.index).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let nodes = &self.nodes;
            let mut send = |target: usize, contrib: Vec<f64>| match &mut grads[target] {
                Some(acc) => acc.iter_mut().zip(&contrib).for_each(|(a, c)| *a += c),
                slot @ None => *slot = Some(contrib),
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => params.push((*id, idx)),
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                } => {
                    let (dx, dk, db) =
                        kernels::conv2d_backward(*geom, &nodes[*input].value, &nodes[*kernel].value, &g);
                    send(*input, dx);
                    send(*kernel, dk);
                    send(*bias, db);
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                    batch,
                    in_dim,
                    out_dim,
                } => {
                    let (dx, dw, db) = kernels::linear_backward(
                        *batch,
                        *in_dim,
                        *out_dim,
                        &nodes[*input].value,
                        &nodes[*weight].value,
                        &g,
                    );
                    send(*input, dx);
                    send(*weight, dw);
                    send(*bias, db);
                }
                Op::Relu(x) => {
                    let dx = nodes[*x]
                        .value
                        .iter()
                        .zip(&g)
                        .map(|(&v, &gv)| if v > 0.0 { gv } else { 0.0 })
                        .collect();
                    send(*x, dx);
                }
                Op::Tanh(x) => {
                    let dx = node.value.iter().zip(&g).map(|(t, gv)| gv * (1.0 - t * t)).collect();
                    send(*x, dx);
                }
                Op::Scale(x, c) => send(*x, g.iter().map(|v| v * c).collect()),
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g.clone());
                }
                Op::Sum(x) => send(*x, vec![g[0]; nodes[*x].value.len()]),
                Op::Pick(x, i) => {
                    let mut dx = vec![0.0; nodes[*x].value.len()];
                    dx[*i] = g[0];
                    send(*x, dx);
                }
                Op::Reshape(x) => send(*x, g.clone()),
                Op::ChannelMask { input, mask, plane } => {
                    let dx = g
                        .chunks(*plane)
                        .zip(mask)
                        .flat_map(|(chunk, &m)| chunk.iter().map(move |v| v * m))
                        .collect();
                    send(*input, dx);
                }
                Op::LogSoftmax { input, cols } => {
                    let mut dx = Vec::with_capacity(g.len());
                    for (grow, yrow) in g.chunks(*cols).zip(node.value.chunks(*cols)) {
                        let gsum: f64 = grow.iter().sum();
                        dx.extend(grow.iter().zip(yrow).map(|(gv, y)| gv - y.exp() * gsum));
                    }
                    send(*input, dx);
                }
                Op::Nll { input, targets, cols } => {
                    let mut dx = vec![0.0; nodes[*input].value.len()];
                    let scale = g[0] / targets.len() as f64;
                    for (r, &t) in targets.iter().enumerate() {
                        dx[r * cols + t] = -scale;
                    }
                    send(*input, dx);
                }
                Op::RowMap {
                    input,
                    in_w,
                    out_w,
                    row_jac,
                    shared,
                } => {
                    let rows = g.len() / out_w;
                    let mut dx = vec![0.0; rows * in_w];
                    for r in 0..rows {
                        let jac = &row_jac[r * out_w * in_w..][..out_w * in_w];
                        for o in 0..*out_w {
                            let go = g[r * out_w + o];
                            for i in 0..*in_w {
                                dx[r * in_w + i] += go * jac[o * in_w + i];
                            }
                        }
                    }
                    send(*input, dx);
                    if let Some((sidx, sjac)) = shared {
                        let len = nodes[*sidx].value.len();
                        let mut ds = vec![0.0; len];
                        for r in 0..rows {
                            for o in 0..*out_w {
                                let go = g[r * out_w + o];
                                for s in 0..len {
                                    ds[s] += go * sjac[(r * out_w + o) * len + s];
                                }
                            }
                        }
                        send(*sidx, ds);
                    }
                }
                Op::ChannelSum {
                    input,
                    sample,
                    weights,
                    channels,
                    plane,
                } => {
                    let mut dx = vec![0.0; nodes[*input].value.len()];
                    for (k, &a) in weights.iter().enumerate() {
                        let dst = &mut dx[(sample * channels + k) * plane..][..*plane];
                        dst.iter_mut().zip(&g).for_each(|(d, gv)| *d = a * gv);
                    }
                    send(*input, dx);
                }
                Op::SqDist { input, target } => {
                    let dx = nodes[*input]
                        .value
                        .iter()
                        .zip(target)
                        .map(|(a, b)| 2.0 * (a - b) * g[0])
                        .collect();
                    send(*input, dx);
                }
            }
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            tape: self.id,
            grads,
            params,
        })
    }

    /// Runs [`Tape::backward`] and accumulates parameter gradients into `params`.
    pub fn backward_into(self, loss: Var, params: &mut ParamSet) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        grads.accumulate_into(params)?;
        Ok(grads)
    }
}

/// Result of a reverse sweep: adjoints for every node that the loss depends on.
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// d(loss)/d(v), or `None` when the loss does not depend on `v`.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.index)?.as_deref()
    }

    pub fn accumulate_into(&self, params: &mut ParamSet) -> Result<()> {
        for &(id, idx) in &self.params {
            if let Some(g) = &self.grads[idx] {
                params.get_mut(id).accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}
