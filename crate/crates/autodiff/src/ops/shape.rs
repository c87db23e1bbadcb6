use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::graph::{Op, Var};
use crate::tensor::Tensor;

struct Reshape {
    from: Vec<usize>,
}

impl Op for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(grad.clone().reshape(self.from.clone())?)])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        Ok(vec![Some(reshape(grad, &self.from)?)])
    }
}

/// Row-major reshape; the element count must not change.
pub fn reshape<'g>(x: Var<'g>, shape: &[usize]) -> Result<Var<'g>> {
    let xv = x.value();
    let from = xv.shape().to_vec();
    let out = (*xv).clone().reshape(shape.to_vec())?;
    x.graph().push(out, Rc::new(Reshape { from }), &[x])
}

/// Flattens everything after the batch axis: `N×C×H×W → N×(C·H·W)`.
pub fn flatten(x: Var<'_>) -> Result<Var<'_>> {
    let shape = x.shape();
    let Some(&n) = shape.first() else {
        return Err(AutodiffError::bad_shape("flatten", &shape, "needs a batch axis"));
    };
    let rest = shape[1..].iter().product();
    reshape(x, &[n, rest])
}

struct ConcatChannels {
    split: usize,
}

impl Op for ConcatChannels {
    fn name(&self) -> &'static str {
        "concat_channels"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let (n, c, h, w) = grad.image_dims("concat_channels")?;
        let c1 = self.split;
        let c2 = c - c1;
        let plane = h * w;
        let mut ga = Vec::with_capacity(n * c1 * plane);
        let mut gb = Vec::with_capacity(n * c2 * plane);
        let data = grad.data();
        for s in 0..n {
            let base = s * c * plane;
            ga.extend_from_slice(&data[base..base + c1 * plane]);
            gb.extend_from_slice(&data[base + c1 * plane..base + c * plane]);
        }
        Ok(vec![
            needs[0]
                .then(|| Tensor::new(inputs[0].shape().to_vec(), ga))
                .transpose()?,
            needs[1]
                .then(|| Tensor::new(inputs[1].shape().to_vec(), gb))
                .transpose()?,
        ])
    }
}

/// Stacks `b`'s channels after `a`'s: `C₁×H×W, C₂×H×W → (C₁+C₂)×H×W`
/// (with an optional shared batch axis).
pub fn concat_channels<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    a.same_graph(&b)?;
    let (va, vb) = (a.value(), b.value());
    if va.rank() != vb.rank() {
        return Err(AutodiffError::bad_shape(
            "concat_channels",
            vb.shape(),
            "rank differs from first operand",
        ));
    }
    let (na, ca, ha, wa) = va.image_dims("concat_channels")?;
    let (nb, cb, hb, wb) = vb.image_dims("concat_channels")?;
    if na != nb {
        return Err(AutodiffError::mismatch("concat_channels", "batch", na, nb));
    }
    if ha != hb {
        return Err(AutodiffError::mismatch("concat_channels", "height", ha, hb));
    }
    if wa != wb {
        return Err(AutodiffError::mismatch("concat_channels", "width", wa, wb));
    }
    let plane = ha * wa;
    let mut data = Vec::with_capacity(na * (ca + cb) * plane);
    for s in 0..na {
        data.extend_from_slice(&va.data()[s * ca * plane..(s + 1) * ca * plane]);
        data.extend_from_slice(&vb.data()[s * cb * plane..(s + 1) * cb * plane]);
    }
    let shape = if va.rank() == 3 {
        vec![ca + cb, ha, wa]
    } else {
        vec![na, ca + cb, ha, wa]
    };
    a.graph().push(
        Tensor::new(shape, data)?,
        Rc::new(ConcatChannels { split: ca }),
        &[a, b],
    )
}
