//! Raw numeric kernels shared by the convolution ops.
//!
//! Convolutions use 3×3 kernels with stride 1. `im2col` lays out the
//! (optionally zero-padded) receptive fields so that a convolution becomes one
//! matrix product; `col2im_add` is its adjoint.

pub(crate) const K: usize = 3;
pub(crate) const TAPS: usize = K * K;

/// Output side of a stride-1 3×3 convolution.
pub(crate) fn conv_out(side: usize, pad: usize) -> usize {
    side + 2 * pad - (K - 1)
}

/// `out[(c*9 + a*3 + b), (i*wo + j)] = x_pad[c, i + a, j + b]`.
pub(crate) fn im2col(src: &[f64], c: usize, h: usize, w: usize, pad: usize, out: &mut [f64]) {
    let ho = conv_out(h, pad);
    let wo = conv_out(w, pad);
    debug_assert_eq!(src.len(), c * h * w);
    debug_assert_eq!(out.len(), c * TAPS * ho * wo);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for a in 0..K {
            for b in 0..K {
                let row = (ch * TAPS + a * K + b) * ho * wo;
                let dst = &mut out[row..row + ho * wo];
                for i in 0..ho {
                    let line = &mut dst[i * wo..(i + 1) * wo];
                    let si = i + a;
                    if si < pad || si - pad >= h {
                        line.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[(si - pad) * w..(si - pad + 1) * w];
                    // columns j with 0 <= j + b - pad < w
                    let j_lo = pad.saturating_sub(b);
                    let j_hi = (w + pad).saturating_sub(b).min(wo);
                    line[..j_lo].fill(0.0);
                    if j_hi > j_lo {
                        let s0 = j_lo + b - pad;
                        line[j_lo..j_hi].copy_from_slice(&src_row[s0..s0 + (j_hi - j_lo)]);
                    }
                    if j_hi < wo {
                        line[j_hi.max(j_lo)..].fill(0.0);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a `c×h×w` image.
pub(crate) fn col2im_add(col: &[f64], c: usize, h: usize, w: usize, pad: usize, dst: &mut [f64]) {
    let ho = conv_out(h, pad);
    let wo = conv_out(w, pad);
    debug_assert_eq!(dst.len(), c * h * w);
    debug_assert_eq!(col.len(), c * TAPS * ho * wo);
    for ch in 0..c {
        let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
        for a in 0..K {
            for b in 0..K {
                let row = (ch * TAPS + a * K + b) * ho * wo;
                let srcm = &col[row..row + ho * wo];
                for i in 0..ho {
                    let si = i + a;
                    if si < pad || si - pad >= h {
                        continue;
                    }
                    let j_lo = pad.saturating_sub(b);
                    let j_hi = (w + pad).saturating_sub(b).min(wo);
                    if j_hi <= j_lo {
                        continue;
                    }
                    let s0 = j_lo + b - pad;
                    let dst_row = &mut plane[(si - pad) * w + s0..(si - pad) * w + s0 + (j_hi - j_lo)];
                    let line = &srcm[i * wo + j_lo..i * wo + j_hi];
                    for (d, s) in dst_row.iter_mut().zip(line) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// `c = beta·c + op(a)·op(b)` with row-major operands, where `op(a)` is
/// `m×k` and `op(b)` is `k×n`. A transposed operand is stored as the
/// row-major transpose (`k×m` for `a`, `n×k` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index matrixmultiply touches given
    // these strides, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
