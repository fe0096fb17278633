//! Forward and backward loops for the heavy primitives.

/// Geometry of a 2-D convolution over `[batch, in_ch, h, w]` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Range of output indices `o` whose input index `o*stride + tap - pad`
    /// falls inside `[0, len)`.
    fn valid(&self, tap: usize, len: usize, out_len: usize) -> std::ops::Range<usize> {
        let s = self.stride;
        let lo = if self.pad > tap {
            (self.pad - tap).div_ceil(s)
        } else {
            0
        };
        let hi_num = len + self.pad;
        if hi_num <= tap {
            return 0..0;
        }
        let hi = ((hi_num - tap - 1) / s + 1).min(out_len);
        lo.min(hi)..hi
    }
}

pub(crate) fn conv2d_forward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let (ih, iw, oh, ow, k, s) = (g.h, g.w, g.out_h, g.out_w, g.k, g.stride);
    let mut out = vec![0.0; g.batch * g.out_ch * oh * ow];
    for b in 0..g.batch {
        for co in 0..g.out_ch {
            let plane = &mut out[(b * g.out_ch + co) * oh * ow..][..oh * ow];
            if let Some(bias) = bias {
                plane.fill(bias[co]);
            }
            for ci in 0..g.in_ch {
                let inp = &input[(b * g.in_ch + ci) * ih * iw..][..ih * iw];
                for ky in 0..k {
                    let rows = g.valid(ky, ih, oh);
                    for kx in 0..k {
                        let wv = weight[((co * g.in_ch + ci) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let cols = g.valid(kx, iw, ow);
                        for oy in rows.clone() {
                            let iy = oy * s + ky - g.pad;
                            let irow = &inp[iy * iw..][..iw];
                            let orow = &mut plane[oy * ow..][..ow];
                            for ox in cols.clone() {
                                orow[ox] += wv * irow[ox * s + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let (ih, iw, oh, ow, k, s) = (g.h, g.w, g.out_h, g.out_w, g.k, g.stride);
    let mut gi = need_input.then(|| vec![0.0; input.len()]);
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; g.out_ch];
    for b in 0..g.batch {
        for co in 0..g.out_ch {
            let gplane = &grad_out[(b * g.out_ch + co) * oh * ow..][..oh * ow];
            gb[co] += gplane.iter().sum::<f64>();
            for ci in 0..g.in_ch {
                let base = (b * g.in_ch + ci) * ih * iw;
                let inp = &input[base..][..ih * iw];
                for ky in 0..k {
                    let rows = g.valid(ky, ih, oh);
                    for kx in 0..k {
                        let widx = ((co * g.in_ch + ci) * k + ky) * k + kx;
                        let wv = weight[widx];
                        let cols = g.valid(kx, iw, ow);
                        let mut acc = 0.0;
                        for oy in rows.clone() {
                            let iy = oy * s + ky - g.pad;
                            let grow = &gplane[oy * ow..][..ow];
                            let irow = &inp[iy * iw..][..iw];
                            for ox in cols.clone() {
                                acc += grow[ox] * irow[ox * s + kx - g.pad];
                            }
                            if let Some(gi) = gi.as_mut() {
                                let girow = &mut gi[base + iy * iw..][..iw];
                                for ox in cols.clone() {
                                    girow[ox * s + kx - g.pad] += wv * grow[ox];
                                }
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    (gi, gw, gb)
}

/// `[m,k] x [k,n]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..][..n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[p * n..][..n]) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
