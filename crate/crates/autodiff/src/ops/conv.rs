//! Stride-1 3×3 convolution and its adjoint.
//!
//! `conv_transpose2d(·, k, pad)` is exactly the adjoint of `conv2d(·, k, pad)`
//! with the kernel's two channel axes read in swapped roles, so each op's
//! input-VJP is the other op. That symmetry is what lets the critic's input
//! gradient be recorded on the tape and differentiated a second time.

use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::graph::{Op, Var};
use crate::kernels::{col2im_add, conv_out, gemm, im2col, K, TAPS};
use crate::tensor::Tensor;

fn check_pad(op: &'static str, pad: usize) -> Result<()> {
    if pad > 1 {
        return Err(AutodiffError::InvalidArgument {
            op,
            msg: format!("padding must be 0 or 1, got {pad}"),
        });
    }
    Ok(())
}

fn kernel_dims(op: &'static str, k: &Tensor) -> Result<(usize, usize)> {
    match *k.shape() {
        [a, b, K, K] => Ok((a, b)),
        _ => Err(AutodiffError::bad_shape(op, k.shape(), "kernel must be A×B×3×3")),
    }
}

fn check_bias(op: &'static str, bias: Option<&Tensor>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        if b.shape() != [channels] {
            let got = if b.rank() == 1 { b.shape()[0] } else { b.numel() };
            return Err(AutodiffError::mismatch(op, "bias length", channels, got));
        }
    }
    Ok(())
}

fn out_shape(batched: bool, n: usize, c: usize, h: usize, w: usize) -> Vec<usize> {
    if batched {
        vec![n, c, h, w]
    } else {
        vec![c, h, w]
    }
}

fn add_bias(y: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk, &b) in y.chunks_mut(plane).zip(bias.iter().cycle()) {
        for v in chunk {
            *v += b;
        }
    }
}

fn bias_grad(grad: &Tensor, channels: usize) -> Tensor {
    let (n, c, h, w) = grad.image_dims("bias").expect("checked at forward");
    debug_assert_eq!(c, channels);
    let plane = h * w;
    let mut db = vec![0.0; c];
    for s in 0..n {
        for (ch, d) in db.iter_mut().enumerate() {
            let base = (s * c + ch) * plane;
            *d += grad.data()[base..base + plane].iter().sum::<f64>();
        }
    }
    Tensor::new([c], db).expect("length c")
}

// ---------------------------------------------------------------------------
// conv2d

struct Conv2d {
    pad: usize,
}

/// Forward cross-correlation; `kernel` is `C_out×C_in×3×3`.
fn conv2d_raw(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, pad: usize) -> Result<Tensor> {
    const OP: &str = "conv2d";
    check_pad(OP, pad)?;
    let (n, cin, h, w) = x.image_dims(OP)?;
    let (cout, kin) = kernel_dims(OP, kernel)?;
    if kin != cin {
        return Err(AutodiffError::mismatch(OP, "input channels", kin, cin));
    }
    check_bias(OP, bias, cout)?;
    if h + 2 * pad < K || w + 2 * pad < K {
        return Err(AutodiffError::bad_shape(
            OP,
            x.shape(),
            "spatial size smaller than the 3×3 kernel",
        ));
    }
    let (ho, wo) = (conv_out(h, pad), conv_out(w, pad));
    let mut col = vec![0.0; cin * TAPS * ho * wo];
    let mut y = vec![0.0; n * cout * ho * wo];
    for s in 0..n {
        im2col(
            &x.data()[s * cin * h * w..(s + 1) * cin * h * w],
            cin,
            h,
            w,
            pad,
            &mut col,
        );
        let ys = &mut y[s * cout * ho * wo..(s + 1) * cout * ho * wo];
        gemm(cout, cin * TAPS, ho * wo, kernel.data(), false, &col, false, 0.0, ys);
        if let Some(b) = bias {
            add_bias(ys, b.data(), ho * wo);
        }
    }
    Tensor::new(out_shape(x.rank() == 4, n, cout, ho, wo), y)
}

/// Adjoint of [`conv2d_raw`] with respect to its input; `kernel` is
/// `C_in×C_out×3×3` from the adjoint's point of view.
fn conv_transpose2d_raw(x: &Tensor, kernel: &Tensor, bias: Option<&Tensor>, pad: usize) -> Result<Tensor> {
    const OP: &str = "conv_transpose2d";
    check_pad(OP, pad)?;
    let (n, cin, h, w) = x.image_dims(OP)?;
    let (kin, cout) = kernel_dims(OP, kernel)?;
    if kin != cin {
        return Err(AutodiffError::mismatch(OP, "input channels", kin, cin));
    }
    check_bias(OP, bias, cout)?;
    if h + 2 < 2 * pad + 1 || w + 2 < 2 * pad + 1 {
        return Err(AutodiffError::bad_shape(
            OP,
            x.shape(),
            "spatial size too small for padding",
        ));
    }
    let (ho, wo) = (h + 2 - 2 * pad, w + 2 - 2 * pad);
    let mut col = vec![0.0; cout * TAPS * h * w];
    let mut y = vec![0.0; n * cout * ho * wo];
    for s in 0..n {
        let xs = &x.data()[s * cin * h * w..(s + 1) * cin * h * w];
        gemm(cout * TAPS, cin, h * w, kernel.data(), true, xs, false, 0.0, &mut col);
        let ys = &mut y[s * cout * ho * wo..(s + 1) * cout * ho * wo];
        col2im_add(&col, cout, ho, wo, pad, ys);
        if let Some(b) = bias {
            add_bias(ys, b.data(), ho * wo);
        }
    }
    Tensor::new(out_shape(x.rank() == 4, n, cout, ho, wo), y)
}

impl Op for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (x, kernel) = (inputs[0], inputs[1]);
        let pad = self.pad;
        let (n, cin, h, w) = x.image_dims("conv2d")?;
        let (cout, _) = kernel_dims("conv2d", kernel)?;
        let (ho, wo) = (conv_out(h, pad), conv_out(w, pad));
        let mut out = vec![None; inputs.len()];

        if needs[0] {
            out[0] = Some(conv_transpose2d_raw(grad, kernel, None, pad)?);
        }
        if needs[1] {
            let mut col = vec![0.0; cin * TAPS * ho * wo];
            let mut dk = vec![0.0; cout * cin * TAPS];
            for s in 0..n {
                im2col(
                    &x.data()[s * cin * h * w..(s + 1) * cin * h * w],
                    cin,
                    h,
                    w,
                    pad,
                    &mut col,
                );
                let gs = &grad.data()[s * cout * ho * wo..(s + 1) * cout * ho * wo];
                gemm(cout, ho * wo, cin * TAPS, gs, false, &col, true, 1.0, &mut dk);
            }
            out[1] = Some(Tensor::new(kernel.shape().to_vec(), dk)?);
        }
        if inputs.len() > 2 && needs[2] {
            out[2] = Some(bias_grad(grad, cout));
        }
        Ok(out)
    }

    fn vjp_graph<'g>(
        &self,
        inputs: &[Var<'g>],
        _: Var<'g>,
        grad: Var<'g>,
        needs: &[bool],
    ) -> Result<Vec<Option<Var<'g>>>> {
        if needs[1..].iter().any(|&n| n) {
            return Err(AutodiffError::NoSecondOrder("conv2d (kernel/bias path)"));
        }
        let mut out = vec![None; inputs.len()];
        if needs[0] {
            out[0] = Some(conv_transpose2d(grad, inputs[1], None, self.pad)?);
        }
        Ok(out)
    }
}

/// 3×3, stride-1 cross-correlation with zero padding `pad ∈ {0, 1}`.
///
/// `x` is `C_in×H×W` (or batched), `kernel` is `C_out×C_in×3×3`, `bias` has
/// length `C_out`. The output side is `H − 2 + 2·pad`.
pub fn conv2d<'g>(x: Var<'g>, kernel: Var<'g>, bias: Option<Var<'g>>, pad: usize) -> Result<Var<'g>> {
    x.same_graph(&kernel)?;
    let bias_value = bias.map(|b| b.value());
    let y = conv2d_raw(&x.value(), &kernel.value(), bias_value.as_deref(), pad)?;
    let mut inputs = vec![x, kernel];
    inputs.extend(bias);
    x.graph().push(y, Rc::new(Conv2d { pad }), &inputs)
}

// ---------------------------------------------------------------------------
// conv_transpose2d

struct ConvTranspose2d {
    pad: usize,
}

impl Op for ConvTranspose2d {
    fn name(&self) -> &'static str {
        "conv_transpose2d"
    }

    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (x, kernel) = (inputs[0], inputs[1]);
        let pad = self.pad;
        let (n, cin, h, w) = x.image_dims("conv_transpose2d")?;
        let (_, cout) = kernel_dims("conv_transpose2d", kernel)?;
        let (ho, wo) = (h + 2 - 2 * pad, w + 2 - 2 * pad);
        let mut out = vec![None; inputs.len()];

        if needs[0] {
            out[0] = Some(conv2d_raw(grad, kernel, None, pad)?);
        }
        if needs[1] {
            let mut col = vec![0.0; cout * TAPS * h * w];
            let mut dk = vec![0.0; cin * cout * TAPS];
            for s in 0..n {
                let gs = &grad.data()[s * cout * ho * wo..(s + 1) * cout * ho * wo];
                im2col(gs, cout, ho, wo, pad, &mut col);
                let xs = &x.data()[s * cin * h * w..(s + 1) * cin * h * w];
                gemm(cin, h * w, cout * TAPS, xs, false, &col, true, 1.0, &mut dk);
            }
            out[1] = Some(Tensor::new(kernel.shape().to_vec(), dk)?);
        }
        if inputs.len() > 2 && needs[2] {
            out[2] = Some(bias_grad(grad, cout));
        }
        Ok(out)
    }

    fn vjp_graph<'g>(
        &self,
        inputs: &[Var<'g>],
        _: Var<'g>,
        grad: Var<'g>,
        needs: &[bool],
    ) -> Result<Vec<Option<Var<'g>>>> {
        if needs[1..].iter().any(|&n| n) {
            return Err(AutodiffError::NoSecondOrder("conv_transpose2d (kernel/bias path)"));
        }
        let mut out = vec![None; inputs.len()];
        if needs[0] {
            out[0] = Some(conv2d(grad, inputs[1], None, self.pad)?);
        }
        Ok(out)
    }
}

/// Transposed 3×3, stride-1 convolution: the adjoint of [`conv2d`] with the
/// same padding.
///
/// `x` is `C_in×H×W` (or batched), `kernel` is `C_in×C_out×3×3`, `bias` has
/// length `C_out`. The output side is `H + 2 − 2·pad`; with `pad = 0` each
/// input pixel spreads over a 3×3 footprint.
pub fn conv_transpose2d<'g>(x: Var<'g>, kernel: Var<'g>, bias: Option<Var<'g>>, pad: usize) -> Result<Var<'g>> {
    x.same_graph(&kernel)?;
    let bias_value = bias.map(|b| b.value());
    let y = conv_transpose2d_raw(&x.value(), &kernel.value(), bias_value.as_deref(), pad)?;
    let mut inputs = vec![x, kernel];
    inputs.extend(bias);
    x.graph().push(y, Rc::new(ConvTranspose2d { pad }), &inputs)
}
