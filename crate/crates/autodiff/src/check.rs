//! Central finite-difference gradient checking.

use crate::error::{AutodiffError, Result};
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Pins the higher-ranked signature on a closure that is stored before use.
pub fn objective<F>(f: F) -> F
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    f
}

/// Gradients of the scalar `f` with respect to every input, by reverse mode.
pub fn analytic_gradients<F>(f: F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&g, &vars)?;
    let mut grads = g.backward(out)?;
    Ok(vars.iter().map(|&v| grads.take_or_zeros(v)).collect())
}

/// Value of the scalar `f` on constant inputs.
pub fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let g = Graph::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&g, &vars)?;
    let v = out.value().item()?;
    Ok(v)
}

/// Central differences `(f(x+h) − f(x−h)) / 2h` for every element of input
/// `which`.
pub fn numeric_gradient<F>(f: &F, inputs: &[Tensor], which: usize, h: f64) -> Result<Tensor>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    if which >= inputs.len() {
        return Err(AutodiffError::InvalidArgument {
            op: "numeric_gradient",
            msg: format!("input {which} of {}", inputs.len()),
        });
    }
    let mut probe = inputs.to_vec();
    let n = inputs[which].numel();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let orig = inputs[which].data()[i];
        probe[which].data_mut()[i] = orig + h;
        let up = evaluate(f, &probe)?;
        probe[which].data_mut()[i] = orig - h;
        let down = evaluate(f, &probe)?;
        probe[which].data_mut()[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Tensor::new(inputs[which].shape().to_vec(), out)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both are zero.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let diff: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    let scale = a.dot(a).max(b.dot(b));
    if scale == 0.0 {
        diff.sqrt()
    } else {
        (diff / scale).sqrt()
    }
}

/// Largest relative error between analytic and numeric gradients over all
/// inputs.
pub fn max_gradient_error<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    let analytic = analytic_gradients(&f, inputs)?;
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let n = numeric_gradient(&f, inputs, i, h)?;
        worst = worst.max(relative_error(a, &n));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;

    #[test]
    fn quadratic_has_exact_central_difference() {
        let x = Tensor::new([3], vec![0.5, -1.0, 2.0]).unwrap();
        let f = objective(|_, v| ops::sum(ops::square(v[0])?));
        let n = numeric_gradient(&f, std::slice::from_ref(&x), 0, 1e-3).unwrap();
        for (g, x) in n.data().iter().zip(x.data()) {
            assert!((g - 2.0 * x).abs() < 1e-9);
        }
        assert!(max_gradient_error(f, &[x], 1e-6).unwrap() < 1e-8);
    }

    #[test]
    fn relative_error_of_zero_vectors() {
        assert_eq!(relative_error(&Tensor::zeros([2]), &Tensor::zeros([2])), 0.0);
    }
}
