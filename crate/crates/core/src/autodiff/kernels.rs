//! Raw forward/backward loops for the dense layers. Shapes are validated by
//! the tape before these are called.

/// Geometry of a stride-1, unpadded cross-correlation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub height: usize,
    pub width: usize,
    pub k: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        self.height - self.k + 1
    }

    pub fn out_w(&self) -> usize {
        self.width - self.k + 1
    }
}

pub(crate) fn conv2d_forward(g: ConvGeom, input: &[f64], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane_in = g.height * g.width;
    let plane_out = oh * ow;
    let mut out = vec![0.0; g.batch * g.out_ch * plane_out];
    for n in 0..g.batch {
        for co in 0..g.out_ch {
            let dst = &mut out[(n * g.out_ch + co) * plane_out..][..plane_out];
            dst.fill(bias[co]);
            for ci in 0..g.in_ch {
                let src = &input[(n * g.in_ch + ci) * plane_in..][..plane_in];
                let ker = &kernel[(co * g.in_ch + ci) * g.k * g.k..][..g.k * g.k];
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let w = ker[ky * g.k + kx];
                        for oy in 0..oh {
                            let row_in = &src[(oy + ky) * g.width + kx..][..ow];
                            let row_out = &mut dst[oy * ow..][..ow];
                            for (o, &x) in row_out.iter_mut().zip(row_in) {
                                *o += w * x;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn conv2d_backward(
    g: ConvGeom,
    input: &[f64],
    kernel: &[f64],
    d_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let plane_in = g.height * g.width;
    let plane_out = oh * ow;
    let mut d_input = vec![0.0; input.len()];
    let mut d_kernel = vec![0.0; kernel.len()];
    let mut d_bias = vec![0.0; g.out_ch];
    for n in 0..g.batch {
        for co in 0..g.out_ch {
            let go = &d_out[(n * g.out_ch + co) * plane_out..][..plane_out];
            d_bias[co] += go.iter().sum::<f64>();
            for ci in 0..g.in_ch {
                let src = &input[(n * g.in_ch + ci) * plane_in..][..plane_in];
                let gin = &mut d_input[(n * g.in_ch + ci) * plane_in..][..plane_in];
                let kbase = (co * g.in_ch + ci) * g.k * g.k;
                for ky in 0..g.k {
                    for kx in 0..g.k {
                        let w = kernel[kbase + ky * g.k + kx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let row_go = &go[oy * ow..][..ow];
                            let off = (oy + ky) * g.width + kx;
                            let row_in = &src[off..][..ow];
                            acc += row_go.iter().zip(row_in).map(|(a, b)| a * b).sum::<f64>();
                            let row_gin = &mut gin[off..][..ow];
                            for (d, &o) in row_gin.iter_mut().zip(row_go) {
                                *d += w * o;
                            }
                        }
                        d_kernel[kbase + ky * g.k + kx] += acc;
                    }
                }
            }
        }
    }
    (d_input, d_kernel, d_bias)
}

/// `out[n, m] = sum_d weight[m, d] * input[n, d] + bias[m]`.
pub(crate) fn linear_forward(
    batch: usize,
    in_dim: usize,
    out_dim: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * out_dim);
    for n in 0..batch {
        let x = &input[n * in_dim..][..in_dim];
        for m in 0..out_dim {
            let w = &weight[m * in_dim..][..in_dim];
            out.push(bias[m] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
    }
    out
}

pub(crate) fn linear_backward(
    batch: usize,
    in_dim: usize,
    out_dim: usize,
    input: &[f64],
    weight: &[f64],
    d_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut d_input = vec![0.0; batch * in_dim];
    let mut d_weight = vec![0.0; out_dim * in_dim];
    let mut d_bias = vec![0.0; out_dim];
    for n in 0..batch {
        let x = &input[n * in_dim..][..in_dim];
        let gx = &mut d_input[n * in_dim..][..in_dim];
        for m in 0..out_dim {
            let go = d_out[n * out_dim + m];
            if go == 0.0 {
                continue;
            }
            d_bias[m] += go;
            let w = &weight[m * in_dim..][..in_dim];
            let gw = &mut d_weight[m * in_dim..][..in_dim];
            for d in 0..in_dim {
                gx[d] += go * w[d];
                gw[d] += go * x[d];
            }
        }
    }
    (d_input, d_weight, d_bias)
}
