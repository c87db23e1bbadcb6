use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::graph::{Op, Var};
use crate::tensor::Tensor;

/// Routing table from each pooled output to the flat index of its argmax.
type Routes = Rc<Vec<usize>>;

struct MaxPool2 {
    routes: Routes,
    in_shape: Vec<usize>,
}

fn scatter(grad: &Tensor, routes: &[usize], shape: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(shape.to_vec());
    let data = out.data_mut();
    for (&r, &g) in routes.iter().zip(grad.data()) {
        data[r] += g;
    }
    out
}

fn gather(grad: &Tensor, routes: &[usize], shape: &[usize]) -> Tensor {
    let data = routes.iter().map(|&r| grad.data()[r]).collect();
    Tensor::new(shape.to_vec(), data).expect("one route per output")
}

impl Op for MaxPool2 {
    fn name(&self) -> &'static str {
        "maxpool2"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(scatter(grad, &self.routes, &self.in_shape))])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        let op = Unpool {
            routes: Rc::clone(&self.routes),
        };
        let value = scatter(&grad.value(), &self.routes, &self.in_shape);
        Ok(vec![Some(grad.graph().push(value, Rc::new(op), &[grad])?)])
    }
}

/// Gradient routing of a max-pool, itself differentiable (linear in its input).
struct Unpool {
    routes: Routes,
}

impl Op for Unpool {
    fn name(&self) -> &'static str {
        "unpool"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(gather(grad, &self.routes, inputs[0].shape()))])
    }
}

/// Non-overlapping 2×2 max pooling. Ties go to the first element of the
/// window in row-major order, and the backward pass routes each gradient to
/// that single element.
pub fn maxpool2(x: Var<'_>) -> Result<Var<'_>> {
    const OP: &str = "maxpool2";
    let xv = x.value();
    let (n, c, h, w) = xv.image_dims(OP)?;
    if h % 2 != 0 {
        return Err(AutodiffError::bad_shape(OP, xv.shape(), "odd height"));
    }
    if w % 2 != 0 {
        return Err(AutodiffError::bad_shape(OP, xv.shape(), "odd width"));
    }
    let (ho, wo) = (h / 2, w / 2);
    let data = xv.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut routes = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..ho {
            for j in 0..wo {
                let top = base + 2 * i * w + 2 * j;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                routes.push(best);
            }
        }
    }
    let shape = if xv.rank() == 3 {
        vec![c, ho, wo]
    } else {
        vec![n, c, ho, wo]
    };
    let op = MaxPool2 {
        routes: Rc::new(routes),
        in_shape: xv.shape().to_vec(),
    };
    x.graph().push(Tensor::new(shape, out)?, Rc::new(op), &[x])
}
