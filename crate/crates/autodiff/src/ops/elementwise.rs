use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::graph::{Op, Var};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::InvalidArgument {
            op,
            msg: format!("operand shapes differ: {:?} vs {:?}", a.shape(), b.shape()),
        });
    }
    Ok(())
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

struct Add;

impl Op for Add {
    fn name(&self) -> &'static str {
        "add"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(needs.iter().map(|&n| n.then(|| grad.clone())).collect())
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, needs: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        Ok(needs.iter().map(|&n| n.then_some(grad)).collect())
    }
}

pub fn add<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    a.same_graph(&b)?;
    let (va, vb) = (a.value(), b.value());
    same_shape("add", &va, &vb)?;
    a.graph().push(zip_with(&va, &vb, |x, y| x + y), Rc::new(Add), &[a, b])
}

struct Sub;

impl Op for Sub {
    fn name(&self) -> &'static str {
        "sub"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![needs[0].then(|| grad.clone()), needs[1].then(|| grad.map(|v| -v))])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, needs: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        let neg = if needs[1] { Some(scale(grad, -1.0)?) } else { None };
        Ok(vec![needs[0].then_some(grad), neg])
    }
}

pub fn sub<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    a.same_graph(&b)?;
    let (va, vb) = (a.value(), b.value());
    same_shape("sub", &va, &vb)?;
    a.graph().push(zip_with(&va, &vb, |x, y| x - y), Rc::new(Sub), &[a, b])
}

struct Mul;

impl Op for Mul {
    fn name(&self) -> &'static str {
        "mul"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![
            needs[0].then(|| zip_with(grad, inputs[1], |g, b| g * b)),
            needs[1].then(|| zip_with(grad, inputs[0], |g, a| g * a)),
        ])
    }
    fn vjp_graph<'g>(
        &self,
        inputs: &[Var<'g>],
        _: Var<'g>,
        grad: Var<'g>,
        needs: &[bool],
    ) -> Result<Vec<Option<Var<'g>>>> {
        let da = if needs[0] { Some(mul(grad, inputs[1])?) } else { None };
        let db = if needs[1] { Some(mul(grad, inputs[0])?) } else { None };
        Ok(vec![da, db])
    }
}

/// Elementwise product of two equally shaped tensors.
pub fn mul<'g>(a: Var<'g>, b: Var<'g>) -> Result<Var<'g>> {
    a.same_graph(&b)?;
    let (va, vb) = (a.value(), b.value());
    same_shape("mul", &va, &vb)?;
    a.graph().push(zip_with(&va, &vb, |x, y| x * y), Rc::new(Mul), &[a, b])
}

struct Scale(f64);

impl Op for Scale {
    fn name(&self) -> &'static str {
        "scale"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let c = self.0;
        Ok(vec![Some(grad.map(|g| g * c))])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        Ok(vec![Some(scale(grad, self.0)?)])
    }
}

pub fn scale(x: Var<'_>, c: f64) -> Result<Var<'_>> {
    let v = x.value().map(|v| v * c);
    x.graph().push(v, Rc::new(Scale(c)), &[x])
}

struct AddScalar;

impl Op for AddScalar {
    fn name(&self) -> &'static str {
        "add_scalar"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(grad.clone())])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        Ok(vec![Some(grad)])
    }
}

pub fn add_scalar(x: Var<'_>, c: f64) -> Result<Var<'_>> {
    let v = x.value().map(|v| v + c);
    x.graph().push(v, Rc::new(AddScalar), &[x])
}

struct Relu;

impl Op for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }
    fn vjp(&self, inputs: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(zip_with(
            grad,
            inputs[0],
            |g, x| if x > 0.0 { g } else { 0.0 },
        ))])
    }
    fn vjp_graph<'g>(&self, inputs: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        // The mask is piecewise constant in the input, so it enters as a constant.
        let mask = inputs[0].value().map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let mask = grad.graph().constant(mask);
        Ok(vec![Some(mul(grad, mask)?)])
    }
}

/// `max(0, x)`; the subgradient at 0 is 0.
pub fn relu(x: Var<'_>) -> Result<Var<'_>> {
    let v = x.value().map(|v| if v > 0.0 { v } else { 0.0 });
    x.graph().push(v, Rc::new(Relu), &[x])
}

struct Sqrt;

impl Op for Sqrt {
    fn name(&self) -> &'static str {
        "sqrt"
    }
    fn vjp(&self, _: &[&Tensor], output: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        // d√x/dx is unbounded at 0; the gradient there is taken as 0.
        Ok(vec![Some(zip_with(grad, output, |g, y| {
            if y > 0.0 {
                g / (2.0 * y)
            } else {
                0.0
            }
        }))])
    }
}

pub fn sqrt(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    if let Some(bad) = xv.data().iter().find(|&&v| v < 0.0) {
        return Err(AutodiffError::InvalidArgument {
            op: "sqrt",
            msg: format!("negative input {bad}"),
        });
    }
    x.graph().push(xv.map(f64::sqrt), Rc::new(Sqrt), &[x])
}

struct Sum {
    shape: Vec<usize>,
}

impl Op for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(Tensor::full(self.shape.clone(), grad.item()?))])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        Ok(vec![Some(expand(grad, &self.shape)?)])
    }
}

/// Sum of all elements, as a rank-0 tensor.
pub fn sum(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let op = Sum {
        shape: xv.shape().to_vec(),
    };
    x.graph().push(Tensor::scalar(xv.sum()), Rc::new(op), &[x])
}

/// Mean of all elements, as a rank-0 tensor.
pub fn mean(x: Var<'_>) -> Result<Var<'_>> {
    let n = x.value().numel();
    if n == 0 {
        return Err(AutodiffError::InvalidArgument {
            op: "mean",
            msg: "empty tensor".into(),
        });
    }
    scale(sum(x)?, 1.0 / n as f64)
}

struct Expand {
    in_shape: Vec<usize>,
}

impl Op for Expand {
    fn name(&self) -> &'static str {
        "expand"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        Ok(vec![Some(Tensor::full(self.in_shape.clone(), grad.sum()))])
    }
    fn vjp_graph<'g>(&self, _: &[Var<'g>], _: Var<'g>, grad: Var<'g>, _: &[bool]) -> Result<Vec<Option<Var<'g>>>> {
        Ok(vec![Some(super::reshape(sum(grad)?, &self.in_shape)?)])
    }
}

/// Broadcasts a one-element tensor to `shape`.
pub fn expand<'g>(x: Var<'g>, shape: &[usize]) -> Result<Var<'g>> {
    let xv = x.value();
    let v = xv.item()?;
    let op = Expand {
        in_shape: xv.shape().to_vec(),
    };
    x.graph().push(Tensor::full(shape.to_vec(), v), Rc::new(op), &[x])
}

struct SumPerSample {
    shape: Vec<usize>,
}

impl Op for SumPerSample {
    fn name(&self) -> &'static str {
        "sum_per_sample"
    }
    fn vjp(&self, _: &[&Tensor], _: &Tensor, grad: &Tensor, _: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let per = self.shape[1..].iter().product::<usize>();
        let mut out = Tensor::zeros(self.shape.clone());
        for (chunk, &g) in out.data_mut().chunks_mut(per.max(1)).zip(grad.data()) {
            chunk.fill(g);
        }
        Ok(vec![Some(out)])
    }
}

/// Sums over every axis but the first: `N×… → N`.
pub fn sum_per_sample(x: Var<'_>) -> Result<Var<'_>> {
    let xv = x.value();
    let Some(&n) = xv.shape().first() else {
        return Err(AutodiffError::bad_shape(
            "sum_per_sample",
            xv.shape(),
            "needs a batch axis",
        ));
    };
    let per = xv.numel() / n.max(1);
    let sums: Vec<f64> = if per == 0 {
        vec![0.0; n]
    } else {
        xv.data().chunks(per).map(|c| c.iter().sum()).collect()
    };
    let op = SumPerSample {
        shape: xv.shape().to_vec(),
    };
    x.graph().push(Tensor::new([n], sums)?, Rc::new(op), &[x])
}

/// `x²` elementwise.
pub fn square(x: Var<'_>) -> Result<Var<'_>> {
    mul(x, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn relu_examples() {
        let g = Graph::new();
        let x = g.leaf(Tensor::new([3], vec![-1.0, 0.0, 2.0]).unwrap());
        let y = relu(x).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0, 2.0]);
        let grads = g.backward(sum(y).unwrap()).unwrap();
        // subgradient at 0 is 0
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn relu_all_negative_has_zero_gradient() {
        let g = Graph::new();
        let x = g.leaf(Tensor::full([4], -0.5));
        let y = relu(x).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0));
        let grads = g.backward(sum(y).unwrap()).unwrap();
        assert!(grads.get(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mean_of_empty_is_error() {
        let g = Graph::new();
        let x = g.leaf(Tensor::zeros([0]));
        assert!(mean(x).is_err());
    }

    #[test]
    fn shape_mismatch_is_error() {
        let g = Graph::new();
        let a = g.leaf(Tensor::zeros([2]));
        let b = g.leaf(Tensor::zeros([3]));
        assert!(add(a, b).is_err());
        assert!(mul(a, b).is_err());
    }

    #[test]
    fn sqrt_of_negative_is_error() {
        let g = Graph::new();
        let x = g.leaf(Tensor::full([1], -1.0));
        assert!(sqrt(x).is_err());
    }

    #[test]
    fn sum_per_sample_reduces_trailing_axes() {
        let g = Graph::new();
        let x = g.leaf(Tensor::from_fn([2, 3], |i| i as f64));
        let s = sum_per_sample(x).unwrap();
        assert_eq!(s.value().data(), &[3.0, 12.0]);
    }
}
