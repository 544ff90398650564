//! Reference kernels. Activations are single-batch NCHW (or N×features for
//! fully-connected outputs); weights are `[out, in/groups, kh, kw]` and
//! `[out, in]`.
//!
//! The INT8 kernels accumulate code products in i32 and recover the real
//! result by expanding the affine map of both operands:
//!
//! ```text
//! x = sx*qx + mx,  w = sw*qw + mw
//! sum(x*w) = sx*sw*sum(qx*qw) + sx*mw*sum(qx) + mx*sw*sum(qw) + n*mx*mw
//! ```
//!
//! where the sums run over the `n` taps that fall inside the input.
//! Padding taps contribute a real zero, which has no exact code, so they are
//! excluded from every sum rather than padded with a code.

use crate::graph::{Hyperparams, TensorShape};
use crate::quant::QuantParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub pad: [usize; 2],
    pub groups: usize,
}

impl ConvGeometry {
    pub fn new(input: &TensorShape, output: &TensorShape, hyper: &Hyperparams) -> Self {
        let i = input.dims();
        let o = output.dims();
        ConvGeometry {
            in_c: i[1],
            in_h: i[2],
            in_w: i[3],
            out_c: o[1],
            out_h: o[2],
            out_w: o[3],
            kernel: hyper.kernel.unwrap_or([1, 1]),
            stride: hyper.stride,
            pad: hyper.pad,
            groups: hyper.groups,
        }
    }

    pub fn in_per_group(&self) -> usize {
        self.in_c / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_c / self.groups
    }

    /// Taps per output channel: (C_in/groups)·kh·kw.
    pub fn taps(&self) -> usize {
        self.in_per_group() * self.kernel[0] * self.kernel[1]
    }

    /// Input coordinate of tap `k` for output coordinate `o`, if in bounds.
    #[inline]
    fn src(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> Option<usize> {
        let v = (o * stride + k) as isize - pad as isize;
        (v >= 0 && (v as usize) < extent).then_some(v as usize)
    }

    /// Valid kernel rows/cols for one output position.
    fn valid_range(o: usize, k: usize, stride: usize, pad: usize, extent: usize) -> (usize, usize) {
        let start = (o * stride) as isize - pad as isize;
        let lo = (-start).max(0) as usize;
        let hi = ((extent as isize - start).min(k as isize)).max(0) as usize;
        (lo.min(k), hi.max(lo.min(k)))
    }
}

pub fn conv2d_f32(x: &[f32], w: &[f32], bias: Option<&[f32]>, g: &ConvGeometry) -> Vec<f32> {
    let [kh, kw] = g.kernel;
    let plane = g.out_h * g.out_w;
    let mut out = vec![0.0f32; g.out_c * plane];
    let (cin_g, cout_g) = (g.in_per_group(), g.out_per_group());
    for oc in 0..g.out_c {
        let grp = oc / cout_g;
        let acc = &mut out[oc * plane..(oc + 1) * plane];
        if let Some(b) = bias {
            acc.fill(b[oc]);
        }
        for icg in 0..cin_g {
            let ic = grp * cin_g + icg;
            let xin = &x[ic * g.in_h * g.in_w..(ic + 1) * g.in_h * g.in_w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[((oc * cin_g + icg) * kh + ky) * kw + kx];
                    for oy in 0..g.out_h {
                        let Some(iy) = ConvGeometry::src(oy, ky, g.stride[0], g.pad[0], g.in_h) else {
                            continue;
                        };
                        let row = &xin[iy * g.in_w..(iy + 1) * g.in_w];
                        let orow = &mut acc[oy * g.out_w..(oy + 1) * g.out_w];
                        for (ox, o) in orow.iter_mut().enumerate() {
                            if let Some(ix) = ConvGeometry::src(ox, kx, g.stride[1], g.pad[1], g.in_w) {
                                *o += wv * row[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Sum of weight codes per output channel over the full kernel.
pub fn weight_code_sums(w: &[u8], out: usize) -> Vec<i32> {
    let per = w.len() / out;
    w.chunks_exact(per)
        .map(|c| c.iter().map(|&v| v as i32).sum())
        .collect()
}

pub struct Int8Operand<'a> {
    pub codes: &'a [u8],
    pub params: &'a QuantParams,
}

#[inline]
fn affine_combine(
    xp: &QuantParams,
    wp: &QuantParams,
    acc: i32,
    x_sum: i32,
    w_sum: i32,
    n: usize,
    bias: f32,
) -> f32 {
    let (sx, mx) = (xp.scale(), xp.t_min as f64);
    let (sw, mw) = (wp.scale(), wp.t_min as f64);
    let v = sx * sw * acc as f64
        + sx * mw * x_sum as f64
        + mx * sw * w_sum as f64
        + n as f64 * mx * mw
        + bias as f64;
    v as f32
}

/// INT8 convolution. `w_sums` are the full-kernel code sums from
/// [`weight_code_sums`]; border positions recompute the in-bounds subset.
pub fn conv2d_int8(
    x: Int8Operand<'_>,
    w: Int8Operand<'_>,
    w_sums: &[i32],
    bias: Option<&[f32]>,
    g: &ConvGeometry,
) -> Vec<f32> {
    let [kh, kw] = g.kernel;
    let plane = g.out_h * g.out_w;
    let in_plane = g.in_h * g.in_w;
    let (cin_g, cout_g) = (g.in_per_group(), g.out_per_group());

    // Valid kernel window for every output row/column.
    let rows: Vec<(usize, usize)> = (0..g.out_h)
        .map(|oy| ConvGeometry::valid_range(oy, kh, g.stride[0], g.pad[0], g.in_h))
        .collect();
    let cols: Vec<(usize, usize)> = (0..g.out_w)
        .map(|ox| ConvGeometry::valid_range(ox, kw, g.stride[1], g.pad[1], g.in_w))
        .collect();

    // Per-group window sums of input codes, shared by the group's channels.
    let mut x_sums = vec![0i32; g.groups * plane];
    for grp in 0..g.groups {
        for icg in 0..cin_g {
            let ic = grp * cin_g + icg;
            let xin = &x.codes[ic * in_plane..(ic + 1) * in_plane];
            for oy in 0..g.out_h {
                let (ky0, ky1) = rows[oy];
                for ox in 0..g.out_w {
                    let (kx0, kx1) = cols[ox];
                    let mut s = 0i32;
                    for ky in ky0..ky1 {
                        let iy = oy * g.stride[0] + ky - g.pad[0];
                        for kx in kx0..kx1 {
                            let ix = ox * g.stride[1] + kx - g.pad[1];
                            s += xin[iy * g.in_w + ix] as i32;
                        }
                    }
                    x_sums[grp * plane + oy * g.out_w + ox] += s;
                }
            }
        }
    }

    let mut out = vec![0.0f32; g.out_c * plane];
    let mut acc = vec![0i32; plane];
    for oc in 0..g.out_c {
        let grp = oc / cout_g;
        acc.fill(0);
        let wk = &w.codes[oc * cin_g * kh * kw..(oc + 1) * cin_g * kh * kw];
        for icg in 0..cin_g {
            let ic = grp * cin_g + icg;
            let xin = &x.codes[ic * in_plane..(ic + 1) * in_plane];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wk[(icg * kh + ky) * kw + kx] as i32;
                    for oy in 0..g.out_h {
                        let Some(iy) = ConvGeometry::src(oy, ky, g.stride[0], g.pad[0], g.in_h) else {
                            continue;
                        };
                        let row = &xin[iy * g.in_w..(iy + 1) * g.in_w];
                        let arow = &mut acc[oy * g.out_w..(oy + 1) * g.out_w];
                        for (ox, a) in arow.iter_mut().enumerate() {
                            if let Some(ix) = ConvGeometry::src(ox, kx, g.stride[1], g.pad[1], g.in_w) {
                                *a += wv * row[ix] as i32;
                            }
                        }
                    }
                }
            }
        }
        let b = bias.map_or(0.0, |b| b[oc]);
        for oy in 0..g.out_h {
            let (ky0, ky1) = rows[oy];
            for ox in 0..g.out_w {
                let (kx0, kx1) = cols[ox];
                let full = ky1 - ky0 == kh && kx1 - kx0 == kw;
                let w_sum = if full {
                    w_sums[oc]
                } else {
                    let mut s = 0i32;
                    for icg in 0..cin_g {
                        for ky in ky0..ky1 {
                            for kx in kx0..kx1 {
                                s += wk[(icg * kh + ky) * kw + kx] as i32;
                            }
                        }
                    }
                    s
                };
                let n = cin_g * (ky1 - ky0) * (kx1 - kx0);
                let pos = oy * g.out_w + ox;
                out[oc * plane + pos] = affine_combine(
                    x.params,
                    w.params,
                    acc[pos],
                    x_sums[grp * plane + pos],
                    w_sum,
                    n,
                    b,
                );
            }
        }
    }
    out
}

pub fn fc_f32(x: &[f32], w: &[f32], bias: Option<&[f32]>, out_f: usize) -> Vec<f32> {
    let in_f = x.len();
    (0..out_f)
        .map(|o| {
            let row = &w[o * in_f..(o + 1) * in_f];
            let dot: f32 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            dot + bias.map_or(0.0, |b| b[o])
        })
        .collect()
}

pub fn fc_int8(
    x: Int8Operand<'_>,
    w: Int8Operand<'_>,
    w_sums: &[i32],
    bias: Option<&[f32]>,
    out_f: usize,
) -> Vec<f32> {
    let in_f = x.codes.len();
    let x_sum: i32 = x.codes.iter().map(|&v| v as i32).sum();
    (0..out_f)
        .map(|o| {
            let row = &w.codes[o * in_f..(o + 1) * in_f];
            let acc: i32 = row.iter().zip(x.codes).map(|(&a, &b)| a as i32 * b as i32).sum();
            affine_combine(x.params, w.params, acc, x_sum, w_sums[o], in_f, bias.map_or(0.0, |b| b[o]))
        })
        .collect()
}

pub fn relu(x: &mut [f32]) {
    for v in x {
        *v = v.max(0.0);
    }
}

/// Max or average pooling; windows skip padded positions and averages
/// divide by the in-bounds count.
pub fn pool(x: &[f32], input: &TensorShape, output: &TensorShape, h: &Hyperparams, max: bool) -> Vec<f32> {
    let i = input.dims();
    let o = output.dims();
    let (c, ih, iw, oh, ow) = (i[1], i[2], i[3], o[2], o[3]);
    let [kh, kw] = h.kernel.unwrap_or([1, 1]);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let xin = &x[ch * ih * iw..(ch + 1) * ih * iw];
        for oy in 0..oh {
            let (ky0, ky1) = ConvGeometry::valid_range(oy, kh, h.stride[0], h.pad[0], ih);
            for ox in 0..ow {
                let (kx0, kx1) = ConvGeometry::valid_range(ox, kw, h.stride[1], h.pad[1], iw);
                let mut m = f32::NEG_INFINITY;
                let mut s = 0.0f32;
                let mut n = 0usize;
                for ky in ky0..ky1 {
                    let iy = oy * h.stride[0] + ky - h.pad[0];
                    for kx in kx0..kx1 {
                        let v = xin[iy * iw + ox * h.stride[1] + kx - h.pad[1]];
                        m = m.max(v);
                        s += v;
                        n += 1;
                    }
                }
                out.push(if max { m } else { s / n.max(1) as f32 });
            }
        }
    }
    out
}

/// Across-channel local response normalization:
/// `y = x / (k + alpha/size * sum(x^2 over the channel window))^beta`.
pub fn lrn(x: &[f32], shape: &TensorShape, h: &Hyperparams) -> Vec<f32> {
    let c = shape.channels();
    let plane = shape.element_count() / (shape.dims()[0] * c);
    let half = h.lrn_size / 2;
    let mut out = vec![0.0f32; x.len()];
    for ch in 0..c {
        let lo = ch.saturating_sub(half);
        let hi = (ch + half).min(c - 1);
        for p in 0..plane {
            let mut sq = 0.0f32;
            for cc in lo..=hi {
                let v = x[cc * plane + p];
                sq += v * v;
            }
            let scale = h.k + h.alpha / h.lrn_size as f32 * sq;
            out[ch * plane + p] = x[ch * plane + p] * scale.powf(-h.beta);
        }
    }
    out
}

pub fn softmax(x: &[f32]) -> Vec<f32> {
    let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let e: Vec<f64> = x.iter().map(|&v| ((v - m) as f64).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| (v / s) as f32).collect()
}

/// Channel-axis concatenation for batch 1.
pub fn concat(parts: &[&[f32]]) -> Vec<f32> {
    parts.concat()
}

pub fn add(parts: &[&[f32]]) -> Vec<f32> {
    let mut out = parts[0].to_vec();
    for p in &parts[1..] {
        for (o, v) in out.iter_mut().zip(p.iter()) {
            *o += v;
        }
    }
    out
}
