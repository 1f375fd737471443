//! Synaptic operators and their adjoints.
//!
//! Dense weights are stored input-major (`w[j * outputs + i]` connects input
//! `j` to output `i`) so that one presynaptic spike adds one contiguous row.
//! Conv kernels are `[c_out][c_in][k][k]`; feature maps are `[c][h][w]`.

use crate::error::{shape, Result};

/// `out += W · s` for a dense input, skipping zero entries.
pub fn dense_accumulate(weights: &[f64], outputs: usize, input: &[f64], out: &mut [f64]) {
    for (j, &s) in input.iter().enumerate() {
        if s != 0.0 {
            let row = &weights[j * outputs..(j + 1) * outputs];
            if s == 1.0 {
                out.iter_mut().zip(row).for_each(|(o, &w)| *o += w);
            } else {
                out.iter_mut().zip(row).for_each(|(o, &w)| *o += w * s);
            }
        }
    }
}

/// `out += W · s` for a binary input given by its active indices.
pub fn dense_accumulate_sparse(weights: &[f64], outputs: usize, active: &[u32], out: &mut [f64]) {
    for &j in active {
        let j = j as usize;
        let row = &weights[j * outputs..(j + 1) * outputs];
        out.iter_mut().zip(row).for_each(|(o, &w)| *o += w);
    }
}

/// Currents `W · spikes_in` for a dense layer with `inputs × outputs` weights.
pub fn dense_forward(
    weights: &[f64],
    inputs: usize,
    outputs: usize,
    spikes_in: &[f64],
) -> Result<Vec<f64>> {
    if weights.len() != inputs * outputs || spikes_in.len() != inputs {
        return shape(format!(
            "dense {inputs}->{outputs} got {} weights and {} inputs",
            weights.len(),
            spikes_in.len()
        ));
    }
    let mut out = vec![0.0; outputs];
    dense_accumulate(weights, outputs, spikes_in, &mut out);
    Ok(out)
}

/// `W_in · spikes_in + W_rec · spikes_prev_self`.
pub fn recurrent_forward(
    w_in: &[f64],
    w_rec: &[f64],
    inputs: usize,
    outputs: usize,
    spikes_in: &[f64],
    spikes_prev_self: &[f64],
) -> Result<Vec<f64>> {
    if w_rec.len() != outputs * outputs || spikes_prev_self.len() != outputs {
        return shape(format!(
            "recurrent {outputs}x{outputs} got {} weights and {} previous spikes",
            w_rec.len(),
            spikes_prev_self.len()
        ));
    }
    let mut out = dense_forward(w_in, inputs, outputs, spikes_in)?;
    dense_accumulate(w_rec, outputs, spikes_prev_self, &mut out);
    Ok(out)
}

/// `Wᵀ · g`: gradient with respect to a dense layer's input.
pub fn dense_adjoint(weights: &[f64], outputs: usize, grad_out: &[f64], grad_in: &mut [f64]) {
    for (j, gi) in grad_in.iter_mut().enumerate() {
        let row = &weights[j * outputs..(j + 1) * outputs];
        *gi += row.iter().zip(grad_out).map(|(&w, &g)| w * g).sum::<f64>();
    }
}

/// `dW += s ⊗ g`, skipping zero inputs.
pub fn dense_weight_grad(input: &[f64], grad_out: &[f64], grad_w: &mut [f64]) {
    let outputs = grad_out.len();
    for (j, &s) in input.iter().enumerate() {
        if s != 0.0 {
            let row = &mut grad_w[j * outputs..(j + 1) * outputs];
            row.iter_mut().zip(grad_out).for_each(|(d, &g)| *d += s * g);
        }
    }
}

pub fn dense_weight_grad_sparse(active: &[u32], grad_out: &[f64], grad_w: &mut [f64]) {
    let outputs = grad_out.len();
    for &j in active {
        let j = j as usize;
        let row = &mut grad_w[j * outputs..(j + 1) * outputs];
        row.iter_mut().zip(grad_out).for_each(|(d, &g)| *d += g);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvGeometry {
    /// Output spatial size for stride 1.
    pub fn out_hw(&self) -> (usize, usize) {
        (
            self.height + 2 * self.padding + 1 - self.kernel,
            self.width + 2 * self.padding + 1 - self.kernel,
        )
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    // Visits every (output index, kernel index, input index) triple that
    // touches a real (non-padding) input pixel.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        let (h, w) = (self.height as isize, self.width as isize);
        for co in 0..self.out_channels {
            for ci in 0..self.in_channels {
                let kbase = (co * self.in_channels + ci) * k * k;
                for oy in 0..oh {
                    for ky in 0..k {
                        let iy = oy as isize + ky as isize - self.padding as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let obase = (co * oh + oy) * ow + ox;
                            for kx in 0..k {
                                let ix = ox as isize + kx as isize - self.padding as isize;
                                if ix < 0 || ix >= w {
                                    continue;
                                }
                                let iidx =
                                    (ci * self.height + iy as usize) * self.width + ix as usize;
                                f(obase, kbase + ky * k + kx, iidx);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Stride-1 2-D cross-correlation with zero padding.
pub fn conv_forward(kernels: &[f64], geom: &ConvGeometry, input: &[f64]) -> Result<Vec<f64>> {
    if kernels.len() != geom.weight_len()
        || input.len() != geom.in_channels * geom.height * geom.width
    {
        return shape(format!(
            "conv {}->{} k{} over {}x{} got {} weights and {} inputs",
            geom.in_channels,
            geom.out_channels,
            geom.kernel,
            geom.height,
            geom.width,
            kernels.len(),
            input.len()
        ));
    }
    if geom.height + 2 * geom.padding < geom.kernel || geom.width + 2 * geom.padding < geom.kernel {
        return shape("input smaller than the kernel");
    }
    let (oh, ow) = geom.out_hw();
    let mut out = vec![0.0; geom.out_channels * oh * ow];
    conv_accumulate(kernels, geom, input, &mut out);
    Ok(out)
}

pub(crate) fn conv_accumulate(
    kernels: &[f64],
    geom: &ConvGeometry,
    input: &[f64],
    out: &mut [f64],
) {
    geom.for_each_tap(|o, k, i| {
        let s = input[i];
        if s != 0.0 {
            out[o] += kernels[k] * s;
        }
    });
}

pub(crate) fn conv_adjoint(
    kernels: &[f64],
    geom: &ConvGeometry,
    grad_out: &[f64],
    grad_in: &mut [f64],
) {
    geom.for_each_tap(|o, k, i| grad_in[i] += kernels[k] * grad_out[o]);
}

pub(crate) fn conv_weight_grad(
    geom: &ConvGeometry,
    input: &[f64],
    grad_out: &[f64],
    grad_w: &mut [f64],
) {
    geom.for_each_tap(|o, k, i| {
        let s = input[i];
        if s != 0.0 {
            grad_w[k] += s * grad_out[o];
        }
    });
}

/// Output size of non-overlapping `stride × stride` pooling; trailing rows and
/// columns that do not fill a block are dropped.
pub fn pool_out_hw(height: usize, width: usize, stride: usize) -> (usize, usize) {
    (height / stride, width / stride)
}

/// Non-overlapping block sums over each channel.
pub fn sumpool_forward(
    input: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    if input.len() != channels * height * width {
        return shape(format!(
            "sumpool expected {} inputs, got {}",
            channels * height * width,
            input.len()
        ));
    }
    if stride == 0 || height < stride || width < stride {
        return shape("pooling stride larger than the feature map");
    }
    let (oh, ow) = pool_out_hw(height, width, stride);
    let mut out = vec![0.0; channels * oh * ow];
    sumpool_accumulate(input, channels, height, width, stride, &mut out);
    Ok(out)
}

pub(crate) fn sumpool_accumulate(
    input: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    stride: usize,
    out: &mut [f64],
) {
    let (oh, ow) = pool_out_hw(height, width, stride);
    for c in 0..channels {
        for y in 0..oh * stride {
            let row = &input[(c * height + y) * width..(c * height + y) * width + ow * stride];
            let obase = (c * oh + y / stride) * ow;
            for (x, &s) in row.iter().enumerate() {
                out[obase + x / stride] += s;
            }
        }
    }
}

pub(crate) fn sumpool_adjoint(
    grad_out: &[f64],
    channels: usize,
    height: usize,
    width: usize,
    stride: usize,
    grad_in: &mut [f64],
) {
    let (oh, ow) = pool_out_hw(height, width, stride);
    for c in 0..channels {
        for y in 0..oh * stride {
            let obase = (c * oh + y / stride) * ow;
            for x in 0..ow * stride {
                grad_in[(c * height + y) * width + x] += grad_out[obase + x / stride];
            }
        }
    }
}
