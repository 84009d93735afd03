//! 3x3 same-size convolutions on planar (`CHW`) buffers with zero padding.
//!
//! Kernels are laid out `[out][in][ky][kx]`.

/// Range of output indices `i` along one axis for which `i + d` is in `0..len`.
#[inline]
fn valid_range(len: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { len - d as usize } else { len };
    (lo, hi)
}

/// `out[o] = bias[o] + sum_c conv(input[c], weight[o][c])`.
#[allow(clippy::too_many_arguments)]
pub fn forward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    bias: &[f64],
    out_c: usize,
    weight_in_stride: usize,
) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; out_c * plane];
    for o in 0..out_c {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..in_c {
            let in_plane = &input[c * plane..(c + 1) * plane];
            let kernel = &weight[(o * weight_in_stride + c) * 9..(o * weight_in_stride + c) * 9 + 9];
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = valid_range(w, dx);
                    let k = kernel[ky * 3 + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let dst = &mut out_plane[y * w + x0..y * w + x1];
                        let src = &in_plane[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += k * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients and/or the input gradient.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weight: &[f64],
    out_c: usize,
    weight_in_stride: usize,
    grad_out: &[f64],
    mut grad_params: Option<(&mut [f64], &mut [f64])>,
    mut grad_input: Option<&mut [f64]>,
) {
    let plane = h * w;
    for o in 0..out_c {
        let g_plane = &grad_out[o * plane..(o + 1) * plane];
        if let Some((_, gb)) = grad_params.as_mut() {
            gb[o] += g_plane.iter().sum::<f64>();
        }
        for c in 0..in_c {
            let in_plane = &input[c * plane..(c + 1) * plane];
            let base = (o * weight_in_stride + c) * 9;
            for ky in 0..3 {
                let dy = ky as isize - 1;
                let (y0, y1) = valid_range(h, dy);
                for kx in 0..3 {
                    let dx = kx as isize - 1;
                    let (x0, x1) = valid_range(w, dx);
                    let k = weight[base + ky * 3 + kx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let sx0 = (x0 as isize + dx) as usize;
                        let g = &g_plane[y * w + x0..y * w + x1];
                        if grad_params.is_some() {
                            let s = &in_plane[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                            acc += g.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                        }
                        if let Some(gi) = grad_input.as_deref_mut() {
                            let dst = &mut gi[c * plane + sy * w + sx0..c * plane + sy * w + sx0 + (x1 - x0)];
                            for (d, gv) in dst.iter_mut().zip(g) {
                                *d += k * gv;
                            }
                        }
                    }
                    if let Some((gw, _)) = grad_params.as_mut() {
                        gw[base + ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
}

/// Adds the response of a 3x3 kernel bank to constant input planes.
///
/// `tap_sums[o][k]` is the kernel tap `k` of output `o` already summed over the
/// constant planes, weighted by their values. Border pixels only receive the
/// taps that fall inside the image.
pub fn add_constant_plane_response(out: &mut [f64], out_c: usize, h: usize, w: usize, tap_sums: &[f64]) {
    let plane = h * w;
    for o in 0..out_c {
        let s = &tap_sums[o * 9..o * 9 + 9];
        let total: f64 = s.iter().sum();
        let row_top = s[0] + s[1] + s[2];
        let row_bottom = s[6] + s[7] + s[8];
        let col_left = s[0] + s[3] + s[6];
        let col_right = s[2] + s[5] + s[8];
        let p = &mut out[o * plane..(o + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let mut v = total;
                if y == 0 {
                    v -= row_top;
                }
                if y == h - 1 {
                    v -= row_bottom;
                }
                if x == 0 {
                    v -= col_left;
                }
                if x == w - 1 {
                    v -= col_right;
                }
                // Corners had one tap removed twice.
                if y == 0 && x == 0 {
                    v += s[0];
                }
                if y == 0 && x == w - 1 {
                    v += s[2];
                }
                if y == h - 1 && x == 0 {
                    v += s[6];
                }
                if y == h - 1 && x == w - 1 {
                    v += s[8];
                }
                p[y * w + x] += v;
            }
        }
    }
}

/// For each output `o` and tap `k`, the sum of `grad_out[o]` over the pixels
/// where tap `k` lands inside the image. This is the gradient of the output with
/// respect to a unit constant plane's kernel tap.
pub fn constant_plane_tap_grads(grad_out: &[f64], out_c: usize, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let mut res = vec![0.0; out_c * 9];
    for o in 0..out_c {
        let g = &grad_out[o * plane..(o + 1) * plane];
        let total: f64 = g.iter().sum();
        let top: f64 = g[..w].iter().sum();
        let bottom: f64 = g[(h - 1) * w..].iter().sum();
        let left: f64 = (0..h).map(|y| g[y * w]).sum();
        let right: f64 = (0..h).map(|y| g[y * w + w - 1]).sum();
        let tl = g[0];
        let tr = g[w - 1];
        let bl = g[(h - 1) * w];
        let br = g[h * w - 1];
        for ky in 0..3 {
            for kx in 0..3 {
                let mut v = total;
                if ky == 0 {
                    v -= top;
                }
                if ky == 2 {
                    v -= bottom;
                }
                if kx == 0 {
                    v -= left;
                }
                if kx == 2 {
                    v -= right;
                }
                match (ky, kx) {
                    (0, 0) => v += tl,
                    (0, 2) => v += tr,
                    (2, 0) => v += bl,
                    (2, 2) => v += br,
                    _ => {}
                }
                res[o * 9 + ky * 3 + kx] = v;
            }
        }
    }
    res
}
