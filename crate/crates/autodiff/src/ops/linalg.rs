use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::graph::{Op, Var};
use crate::kernels::gemm;
use crate::tensor::Tensor;

fn matrix_dims(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(AutodiffError::bad_shape(op, t.shape(), "expected a matrix")),
    }
}

struct MatMul;

impl Op for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let (m, k) = matrix_dims("matmul", a)?;
        let (_, n) = matrix_dims("matmul", b)?;
        let mut out = vec![None, None];
        if needs[0] {
            let mut da = vec![0.0; m * k];
            gemm(m, n, k, grad.data(), false, b.data(), true, 0.0, &mut da);
            out[0] = Some(Tensor::new([m, k], da)?);
        }
        if needs[1] {
            let mut db = vec![0.0; k * n];
            gemm(k, m, n, a.data(), true, grad.data(), false, 0.0, &mut db);
            out[1] = Some(Tensor::new([k, n], db)?);
        }
        Ok(out)
    }
}

/// Matrix product `a·b` of an `m×k` and a `k×n` matrix.
pub fn matmul<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    a.same_graph(&b)?;
    let (va, vb) = (a.value(), b.value());
    let (m, k) = matrix_dims("matmul", &va)?;
    let (kb, n) = matrix_dims("matmul", &vb)?;
    if k != kb {
        return Err(AutodiffError::mismatch("matmul", "inner dimension", k, kb));
    }
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, va.data(), false, vb.data(), false, 0.0, &mut c);
    a.graph().push(Tensor::new([m, n], c)?, Rc::new(MatMul), &[a, b])
}

struct Linear {
    batched: bool,
}

impl Op for Linear {
    fn name(&self) -> &'static str {
        "dense"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (x, weights) = (inputs[0], inputs[1]);
        let (m, n_in) = matrix_dims("dense", weights)?;
        let batch = x.numel() / n_in.max(1);
        let mut out = vec![None; inputs.len()];
        if needs[0] {
            let mut dx = vec![0.0; batch * n_in];
            gemm(batch, m, n_in, grad.data(), false, weights.data(), false, 0.0, &mut dx);
            out[0] = Some(Tensor::new(x.shape().to_vec(), dx)?);
        }
        if needs[1] {
            let mut dw = vec![0.0; m * n_in];
            gemm(m, batch, n_in, grad.data(), true, x.data(), false, 0.0, &mut dw);
            out[1] = Some(Tensor::new([m, n_in], dw)?);
        }
        if inputs.len() > 2 && needs[2] {
            let mut db = vec![0.0; m];
            for row in grad.data().chunks(m.max(1)) {
                for (d, g) in db.iter_mut().zip(row) {
                    *d += g;
                }
            }
            out[2] = Some(Tensor::new([m], db)?);
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
            return Err(AutodiffError::NoSecondOrder("dense (weight/bias path)"));
        }
        let mut out = vec![None; inputs.len()];
        if needs[0] {
            let g2 = if self.batched {
                grad
            } else {
                super::reshape(grad, &[1, grad.shape()[0]])?
            };
            let dx = matmul(g2, inputs[1])?;
            out[0] = Some(if self.batched {
                dx
            } else {
                super::reshape(dx, &inputs[0].shape())?
            });
        }
        Ok(out)
    }
}

/// Fully connected layer `W·x + b`.
///
/// `x` is a flat vector of length `N_in` or a batch `B×N_in`; `weights` is
/// `M×N_in`; `bias` has length `M`.
pub fn dense<'g>(x: Var<'g>, weights: Var<'g>, bias: Option<Var<'g>>) -> Result<Var<'g>> {
    const OP: &str = "dense";
    x.same_graph(&weights)?;
    let (xv, wv) = (x.value(), weights.value());
    let (m, n_in) = matrix_dims(OP, &wv)?;
    let (batch, batched) = match *xv.shape() {
        [n] => {
            if n != n_in {
                return Err(AutodiffError::mismatch(OP, "input length", n_in, n));
            }
            (1, false)
        }
        [b, n] => {
            if n != n_in {
                return Err(AutodiffError::mismatch(OP, "input length", n_in, n));
            }
            (b, true)
        }
        _ => return Err(AutodiffError::bad_shape(OP, xv.shape(), "expected N or B×N")),
    };
    let bias_value = bias.map(|b| b.value());
    if let Some(b) = &bias_value {
        if b.shape() != [m] {
            return Err(AutodiffError::mismatch(OP, "bias length", m, b.numel()));
        }
    }
    let mut y = vec![0.0; batch * m];
    gemm(batch, n_in, m, xv.data(), false, wv.data(), true, 0.0, &mut y);
    if let Some(b) = &bias_value {
        for row in y.chunks_mut(m.max(1)) {
            for (v, bb) in row.iter_mut().zip(b.data()) {
                *v += bb;
            }
        }
    }
    let shape = if batched { vec![batch, m] } else { vec![m] };
    let mut inputs = vec![x, weights];
    inputs.extend(bias);
    x.graph()
        .push(Tensor::new(shape, y)?, Rc::new(Linear { batched }), &inputs)
}

struct Gram {
    rows: usize,
    cols: usize,
}

impl Op for Gram {
    fn name(&self) -> &'static str {
        "gram_matrix"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let f = inputs[0];
        let (r, c) = (self.rows, self.cols);
        let batch = f.numel() / (r * c).max(1);
        let mut df = vec![0.0; f.numel()];
        let mut sym = vec![0.0; r * r];
        for s in 0..batch {
            let gs = &grad.data()[s * r * r..(s + 1) * r * r];
            for i in 0..r {
                for j in 0..r {
                    sym[i * r + j] = gs[i * r + j] + gs[j * r + i];
                }
            }
            let fs = &f.data()[s * r * c..(s + 1) * r * c];
            gemm(
                r,
                r,
                c,
                &sym,
                false,
                fs,
                false,
                0.0,
                &mut df[s * r * c..(s + 1) * r * c],
            );
        }
        Ok(vec![Some(Tensor::new(f.shape().to_vec(), df)?)])
    }
}

/// Gram matrix `F·Fᵀ` of a feature matrix with one row per channel.
///
/// Accepts `nl×ml`, `C×H×W` (rows are channels, `ml = H·W`) or a batch
/// `N×C×H×W`, returning `nl×nl`, `C×C` or `N×C×C`.
pub fn gram_matrix(features: Var<'_>) -> Result<Var<'_>> {
    const OP: &str = "gram_matrix";
    let fv = features.value();
    let (batch, rows, cols, out_shape) = match *fv.shape() {
        [r, c] => (1, r, c, vec![r, r]),
        [ch, h, w] => (1, ch, h * w, vec![ch, ch]),
        [n, ch, h, w] => (n, ch, h * w, vec![n, ch, ch]),
        _ => return Err(AutodiffError::bad_shape(OP, fv.shape(), "expected rank 2, 3 or 4")),
    };
    let mut out = vec![0.0; batch * rows * rows];
    for s in 0..batch {
        let fs = &fv.data()[s * rows * cols..(s + 1) * rows * cols];
        gemm(
            rows,
            cols,
            rows,
            fs,
            false,
            fs,
            true,
            0.0,
            &mut out[s * rows * rows..(s + 1) * rows * rows],
        );
    }
    features
        .graph()
        .push(Tensor::new(out_shape, out)?, Rc::new(Gram { rows, cols }), &[features])
}
