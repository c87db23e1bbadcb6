//! Append-only computation tape.
//!
//! Every differentiable operation pushes a node holding its forward value and
//! a handle to its vector-Jacobian product. Node ids are assigned in append
//! order, which is also a topological order, so a reverse sweep over ids is a
//! valid backward schedule.
//!
//! Two backward modes exist:
//!
//! * [`Graph::backward`] runs on raw tensors and returns gradients for every
//!   leaf that requires one.
//! * [`Graph::grad`] with `create_graph = true` records the backward sweep as
//!   new nodes on the same tape, so the returned gradients can themselves be
//!   differentiated. Only ops that implement a recorded VJP may lie on the
//!   path between the output and the requested inputs.

use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::ops;
use crate::tensor::Tensor;

pub type NodeId = usize;

/// A differentiable operation recorded on the tape.
pub(crate) trait Op {
    fn name(&self) -> &'static str;

    /// First-order VJP evaluated on plain tensors. Entries of the result that
    /// correspond to `needs[i] == false` may be `None`.
    fn vjp(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor, needs: &[bool]) -> Result<Vec<Option<Tensor>>>;

    /// VJP expressed with tape operations, so that it can be differentiated again.
    fn vjp_graph<'g>(
        &self,
        _inputs: &[Var<'g>],
        _output: Var<'g>,
        _grad: Var<'g>,
        _needs: &[bool],
    ) -> Result<Vec<Option<Var<'g>>>> {
        Err(AutodiffError::NoSecondOrder(self.name()))
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Option<Rc<dyn Op>>,
    inputs: Vec<NodeId>,
    requires_grad: bool,
}

/// Computation graph. Single-threaded; independent graphs may live on
/// independent threads.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.value().shape())
    }
}

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        Rc::clone(&self.graph.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.graph.nodes.borrow()[self.id].requires_grad
    }

    pub(crate) fn same_graph(&self, other: &Var<'_>) -> Result<()> {
        if std::ptr::eq(self.graph, other.graph) {
            Ok(())
        } else {
            Err(AutodiffError::ForeignVar)
        }
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Tensor> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }

    /// Gradient of `var`, or zeros shaped like it when the output does not depend on it.
    pub fn take_or_zeros(&mut self, var: Var<'_>) -> Tensor {
        self.take(var).unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that receives gradient (parameter or differentiated input).
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, None, Vec::new(), true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, None, Vec::new(), false)
    }

    pub(crate) fn push<'g>(&'g self, value: Tensor, op: Rc<dyn Op>, inputs: &[Var<'g>]) -> Result<Var<'g>> {
        for v in inputs {
            if !std::ptr::eq(v.graph, self) {
                return Err(AutodiffError::ForeignVar);
            }
        }
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs.iter().any(|v| nodes[v.id].requires_grad)
        };
        let ids = inputs.iter().map(|v| v.id).collect();
        Ok(self.push_node(value, Some(op), ids, requires_grad))
    }

    fn push_node(&self, value: Tensor, op: Option<Rc<dyn Op>>, inputs: Vec<NodeId>, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            inputs,
            requires_grad,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn var(&self, id: NodeId) -> Var<'_> {
        Var { graph: self, id }
    }

    /// Reverse sweep from a scalar `output`, returning gradients of all leaves
    /// that require one.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(output.graph, self) {
            return Err(AutodiffError::ForeignVar);
        }
        let shape = output.shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NotScalar(shape));
        }
        let grads = self.sweep(output.id, Tensor::full(shape, 1.0), &[])?;
        Ok(Gradients { grads })
    }

    /// Raw reverse sweep. Gradients of leaves and of ids in `keep` survive;
    /// other intermediate gradients are released as soon as they are consumed.
    fn sweep(&self, output: NodeId, seed: Tensor, keep: &[NodeId]) -> Result<Vec<Option<Tensor>>> {
        let mut grads: Vec<Option<Tensor>> = vec![None; output + 1];
        grads[output] = Some(seed);
        for id in (0..=output).rev() {
            let (op, inputs, values, needs) = {
                let nodes = self.nodes.borrow();
                let node = &nodes[id];
                let Some(op) = node.op.clone() else { continue };
                if !node.requires_grad || grads[id].is_none() {
                    continue;
                }
                let values: Vec<Rc<Tensor>> = node.inputs.iter().map(|&i| Rc::clone(&nodes[i].value)).collect();
                let needs: Vec<bool> = node.inputs.iter().map(|&i| nodes[i].requires_grad).collect();
                (op, node.inputs.clone(), values, needs)
            };
            let grad = if keep.contains(&id) {
                grads[id].clone()
            } else {
                grads[id].take()
            };
            let Some(grad) = grad else { continue };
            let output_value = Rc::clone(&self.nodes.borrow()[id].value);
            let refs: Vec<&Tensor> = values.iter().map(|v| v.as_ref()).collect();
            let input_grads = op.vjp(&refs, &output_value, &grad, &needs)?;
            for ((&input, need), g) in inputs.iter().zip(&needs).zip(input_grads) {
                if !need {
                    continue;
                }
                let Some(g) = g else { continue };
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        Ok(grads)
    }

    /// Gradient of a scalar `output` with respect to each of `wrt`.
    ///
    /// With `create_graph`, the backward computation is recorded on this
    /// graph and the returned variables are differentiable (double backprop).
    /// Without it, the results are constants.
    pub fn grad<'g>(&'g self, output: Var<'g>, wrt: &[Var<'g>], create_graph: bool) -> Result<Vec<Var<'g>>> {
        for v in wrt {
            output.same_graph(v)?;
        }
        if !std::ptr::eq(output.graph, self) {
            return Err(AutodiffError::ForeignVar);
        }
        let shape = output.shape();
        if shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NotScalar(shape));
        }
        let on_path = self.path_mask(output.id, wrt);
        for v in wrt {
            if v.id > output.id || !on_path[v.id] {
                return Err(AutodiffError::Unreachable(v.id));
            }
        }
        if !create_graph {
            let keep: Vec<NodeId> = wrt.iter().map(|v| v.id).collect();
            let mut grads = self.sweep(output.id, Tensor::full(shape, 1.0), &keep)?;
            return wrt
                .iter()
                .map(|v| {
                    let g = grads[v.id].take().unwrap_or_else(|| Tensor::zeros(v.shape()));
                    Ok(self.constant(g))
                })
                .collect();
        }

        let mut grads: Vec<Option<Var<'g>>> = vec![None; output.id + 1];
        grads[output.id] = Some(self.constant(Tensor::full(shape, 1.0)));
        for id in (0..=output.id).rev() {
            if !on_path[id] {
                continue;
            }
            let Some(grad) = grads[id] else { continue };
            let (op, inputs) = {
                let nodes = self.nodes.borrow();
                let node = &nodes[id];
                let Some(op) = node.op.clone() else { continue };
                (op, node.inputs.clone())
            };
            let needs: Vec<bool> = inputs.iter().map(|&i| on_path[i]).collect();
            let input_vars: Vec<Var<'g>> = inputs.iter().map(|&i| self.var(i)).collect();
            let input_grads = op.vjp_graph(&input_vars, self.var(id), grad, &needs)?;
            for ((&input, need), g) in inputs.iter().zip(&needs).zip(input_grads) {
                if !need {
                    continue;
                }
                let Some(g) = g else { continue };
                grads[input] = Some(match grads[input] {
                    Some(acc) => ops::add(acc, g)?,
                    None => g,
                });
            }
        }
        wrt.iter()
            .map(|v| grads[v.id].ok_or(AutodiffError::Unreachable(v.id)))
            .collect()
    }

    /// Nodes lying on some path from any of `wrt` to `output`.
    fn path_mask(&self, output: NodeId, wrt: &[Var<'_>]) -> Vec<bool> {
        let nodes = self.nodes.borrow();
        let n = output + 1;
        let mut from_wrt = vec![false; n];
        for v in wrt {
            if v.id < n {
                from_wrt[v.id] = true;
            }
        }
        for id in 0..n {
            if !from_wrt[id] && nodes[id].inputs.iter().any(|&i| from_wrt[i]) {
                from_wrt[id] = true;
            }
        }
        let mut to_output = vec![false; n];
        to_output[output] = true;
        for id in (0..n).rev() {
            if to_output[id] {
                for &i in &nodes[id].inputs {
                    to_output[i] = true;
                }
            }
        }
        from_wrt.iter().zip(&to_output).map(|(a, b)| *a && *b).collect()
    }
}
