//! 3×3 same-padding convolution, ReLU and 2×2 max pooling on `[channel][row][col]`
//! planes, with their backward passes.

use super::tensor::dot;

/// `out[co] = bias[co] + Σ_ci W[co,ci] ⋆ input[ci]`, zero padding of one pixel.
pub fn conv3x3_forward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_ch: usize,
    out: &mut [f64],
) {
    let plane = h * w;
    debug_assert_eq!(input.len(), in_ch * plane);
    debug_assert_eq!(weight.len(), out_ch * in_ch * 9);
    debug_assert_eq!(out.len(), out_ch * plane);
    for co in 0..out_ch {
        let dst_plane = &mut out[co * plane..(co + 1) * plane];
        dst_plane.fill(bias[co]);
        for ci in 0..in_ch {
            let src_plane = &input[ci * plane..(ci + 1) * plane];
            let k = &weight[(co * in_ch + ci) * 9..(co * in_ch + ci + 1) * 9];
            for y in 0..h {
                let dst = &mut dst_plane[y * w..(y + 1) * w];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &src_plane[sy as usize * w..(sy as usize + 1) * w];
                    let (k0, k1, k2) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                    // Centre tap covers every column.
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += k1 * s;
                    }
                    // Left tap: dst[x] += k0 * src[x - 1] for x >= 1.
                    for (d, s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                        *d += k0 * s;
                    }
                    // Right tap: dst[x] += k2 * src[x + 1] for x < w - 1.
                    for (d, s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                        *d += k2 * s;
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, when requested, the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn conv3x3_backward(
    input: &[f64],
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    out_ch: usize,
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let plane = h * w;
    for co in 0..out_ch {
        let g_plane = &dout[co * plane..(co + 1) * plane];
        dbias[co] += g_plane.iter().sum::<f64>();
        for ci in 0..in_ch {
            let src_plane = &input[ci * plane..(ci + 1) * plane];
            let base = (co * in_ch + ci) * 9;
            let k = &weight[base..base + 9];
            let mut acc = [0.0f64; 9];
            for y in 0..h {
                let g = &g_plane[y * w..(y + 1) * w];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let row = sy as usize * w;
                    let src = &src_plane[row..row + w];
                    acc[ky * 3 + 1] += dot(g, src);
                    acc[ky * 3] += dot(&g[1..], &src[..w - 1]);
                    acc[ky * 3 + 2] += dot(&g[..w - 1], &src[1..]);
                    if let Some(din) = dinput.as_deref_mut() {
                        let dst = &mut din[ci * plane + row..ci * plane + row + w];
                        let (k0, k1, k2) = (k[ky * 3], k[ky * 3 + 1], k[ky * 3 + 2]);
                        for (d, gv) in dst.iter_mut().zip(g) {
                            *d += k1 * gv;
                        }
                        for (d, gv) in dst[..w - 1].iter_mut().zip(&g[1..]) {
                            *d += k0 * gv;
                        }
                        for (d, gv) in dst[1..].iter_mut().zip(&g[..w - 1]) {
                            *d += k2 * gv;
                        }
                    }
                }
            }
            for (dw, a) in dweight[base..base + 9].iter_mut().zip(acc) {
                *dw += a;
            }
        }
    }
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// 2×2 max pooling with floor division of both dimensions. Returns the pooled
/// planes and, per output element, the flat input index that won (first
/// maximum in row-major window order).
pub fn maxpool2x2(input: &[f64], ch: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(ch * oh * ow);
    let mut arg = Vec::with_capacity(ch * oh * ow);
    for c in 0..ch {
        let base = c * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let candidates = [
                    base + 2 * y * w + 2 * x,
                    base + 2 * y * w + 2 * x + 1,
                    base + (2 * y + 1) * w + 2 * x,
                    base + (2 * y + 1) * w + 2 * x + 1,
                ];
                let mut best = candidates[0];
                for &i in &candidates[1..] {
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}
