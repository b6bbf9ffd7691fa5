//! Slice-level forward and backward kernels shared by the tape.
//!
//! Layouts: sequences are `T × C` row-major, conv kernels `Cout × Cin × k`,
//! dense weights `Out × In`.

use alloc::vec;
use alloc::vec::Vec;

/// Offset of tap `j` for a kernel of size `k` at dilation `d`.
#[inline]
fn tap_shift(j: usize, k: usize, dilation: usize) -> isize {
    (j as isize - ((k - 1) / 2) as isize) * dilation as isize
}

/// Valid output range `[lo, hi)` for which `t + shift` stays inside `0..t_len`.
#[inline]
fn valid_range(shift: isize, t_len: usize) -> (usize, usize) {
    let lo = if shift < 0 { (-shift) as usize } else { 0 };
    let hi = if shift > 0 {
        t_len.saturating_sub(shift as usize)
    } else {
        t_len
    };
    (lo.min(t_len), hi.max(lo.min(t_len)))
}

/// Tap `j` of the kernel as a contiguous `Cin × Cout` block.
fn tap_matrix(kernel: &[f64], cout: usize, cin: usize, k: usize, j: usize) -> Vec<f64> {
    let mut m = vec![0.0; cin * cout];
    for co in 0..cout {
        for ci in 0..cin {
            m[ci * cout + co] = kernel[(co * cin + ci) * k + j];
        }
    }
    m
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_forward(
    input: &[f64],
    t_len: usize,
    cin: usize,
    kernel: &[f64],
    bias: &[f64],
    cout: usize,
    k: usize,
    dilation: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; t_len * cout];
    for row in out.chunks_exact_mut(cout) {
        row.copy_from_slice(bias);
    }
    for j in 0..k {
        let shift = tap_shift(j, k, dilation);
        let (lo, hi) = valid_range(shift, t_len);
        let kj = tap_matrix(kernel, cout, cin, k, j);
        for t in lo..hi {
            let src = (t as isize + shift) as usize;
            let x = &input[src * cin..(src + 1) * cin];
            let o = &mut out[t * cout..(t + 1) * cout];
            for (ci, &xv) in x.iter().enumerate() {
                let w = &kj[ci * cout..(ci + 1) * cout];
                for (ov, &wv) in o.iter_mut().zip(w) {
                    *ov += wv * xv;
                }
            }
        }
    }
    out
}

/// Accumulates input, kernel and bias gradients of a dilated convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    grad_out: &[f64],
    input: &[f64],
    t_len: usize,
    cin: usize,
    kernel: &[f64],
    cout: usize,
    k: usize,
    dilation: usize,
    grad_input: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    if let Some(gb) = grad_bias {
        for g in grad_out.chunks_exact(cout) {
            for (b, &v) in gb.iter_mut().zip(g) {
                *b += v;
            }
        }
    }
    let mut grad_input = grad_input;
    let mut grad_kernel = grad_kernel;
    for j in 0..k {
        let shift = tap_shift(j, k, dilation);
        let (lo, hi) = valid_range(shift, t_len);
        if let Some(gi) = grad_input.as_deref_mut() {
            let kj = tap_matrix(kernel, cout, cin, k, j);
            for t in lo..hi {
                let src = (t as isize + shift) as usize;
                let g = &grad_out[t * cout..(t + 1) * cout];
                let dst = &mut gi[src * cin..(src + 1) * cin];
                for (ci, d) in dst.iter_mut().enumerate() {
                    let w = &kj[ci * cout..(ci + 1) * cout];
                    *d += w.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        if let Some(gk) = grad_kernel.as_deref_mut() {
            // accumulate as Cin × Cout then scatter into the Cout × Cin × k layout
            let mut acc = vec![0.0; cin * cout];
            for t in lo..hi {
                let src = (t as isize + shift) as usize;
                let g = &grad_out[t * cout..(t + 1) * cout];
                let x = &input[src * cin..(src + 1) * cin];
                for (ci, &xv) in x.iter().enumerate() {
                    let a = &mut acc[ci * cout..(ci + 1) * cout];
                    for (av, &gv) in a.iter_mut().zip(g) {
                        *av += xv * gv;
                    }
                }
            }
            for co in 0..cout {
                for ci in 0..cin {
                    gk[(co * cin + ci) * k + j] += acc[ci * cout + co];
                }
            }
        }
    }
}

/// `out[t, o] = bias[o] + Σ_i input[t, i] · weight[o, i]`.
pub(crate) fn linear_forward(
    input: &[f64],
    t_len: usize,
    n_in: usize,
    weight: &[f64],
    bias: &[f64],
    n_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; t_len * n_out];
    for t in 0..t_len {
        let x = &input[t * n_in..(t + 1) * n_in];
        for o in 0..n_out {
            let w = &weight[o * n_in..(o + 1) * n_in];
            out[t * n_out + o] = bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward(
    grad_out: &[f64],
    input: &[f64],
    t_len: usize,
    n_in: usize,
    weight: &[f64],
    n_out: usize,
    grad_input: Option<&mut [f64]>,
    grad_weight: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    if let Some(gb) = grad_bias {
        for g in grad_out.chunks_exact(n_out) {
            for (b, &v) in gb.iter_mut().zip(g) {
                *b += v;
            }
        }
    }
    if let Some(gi) = grad_input {
        for t in 0..t_len {
            let g = &grad_out[t * n_out..(t + 1) * n_out];
            let dst = &mut gi[t * n_in..(t + 1) * n_in];
            for (o, &gv) in g.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let w = &weight[o * n_in..(o + 1) * n_in];
                for (d, &wv) in dst.iter_mut().zip(w) {
                    *d += gv * wv;
                }
            }
        }
    }
    if let Some(gw) = grad_weight {
        for t in 0..t_len {
            let g = &grad_out[t * n_out..(t + 1) * n_out];
            let x = &input[t * n_in..(t + 1) * n_in];
            for (o, &gv) in g.iter().enumerate() {
                if gv == 0.0 {
                    continue;
                }
                let w = &mut gw[o * n_in..(o + 1) * n_in];
                for (d, &xv) in w.iter_mut().zip(x) {
                    *d += gv * xv;
                }
            }
        }
    }
}

/// `a (n × m) · b (m × p)`.
pub(crate) fn matmul(a: &[f64], b: &[f64], n: usize, m: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let o = &mut out[i * p..(i + 1) * p];
        for (kk, &av) in a[i * m..(i + 1) * m].iter().enumerate() {
            for (ov, &bv) in o.iter_mut().zip(&b[kk * p..(kk + 1) * p]) {
                *ov += av * bv;
            }
        }
    }
    out
}

/// Row-wise softmax with max subtraction.
pub(crate) fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (ov, &v) in o.iter_mut().zip(row) {
            *ov = libm::exp(v - max);
            sum += *ov;
        }
        for ov in o.iter_mut() {
            *ov /= sum;
        }
    }
    out
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
