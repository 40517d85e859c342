//! Reverse-mode differentiation.
//!
//! A [`Var`] is a reference-counted node holding its forward value. When the
//! owning [`Tape`] has gradients enabled and any input of an operation
//! requires a gradient, the operation keeps its inputs alive and is appended
//! to the tape. Creation order is a topological order, so [`Tape::backward`]
//! replays the record from the back exactly once per operation.
//!
//! With gradients disabled nothing is recorded and intermediate values are
//! released as soon as the layer code drops them.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Vector-Jacobian product of one recorded operation.
pub trait BackwardOp {
    fn name(&self) -> &'static str;

    /// Gradient for each input, given the gradient of the output. Inputs that
    /// do not require a gradient may be answered with `None`.
    fn backward(&self, inputs: &[Var], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

struct Node {
    id: usize,
    value: Tensor,
    requires_grad: bool,
    inputs: Vec<Var>,
    op: Option<Box<dyn BackwardOp>>,
}

#[derive(Clone)]
pub struct Var(Rc<Node>);

impl Var {
    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn data(&self) -> &[f64] {
        self.0.value.data()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> usize {
        self.0.id
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub struct Tape {
    grad_enabled: bool,
    next_id: Cell<usize>,
    record: RefCell<Vec<Var>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            grad_enabled: true,
            next_id: Cell::new(0),
            record: RefCell::new(Vec::new()),
        }
    }

    /// A tape that never records; used for inference.
    pub fn no_grad() -> Self {
        Tape {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.record.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn fresh_id(&self) -> usize {
        let id = self.next_id.get();
        self.next_id.set(id + 1);
        id
    }

    /// A differentiable leaf (when gradients are enabled).
    pub fn leaf(&self, value: Tensor) -> Var {
        Var(Rc::new(Node {
            id: self.fresh_id(),
            value,
            requires_grad: self.grad_enabled,
            inputs: Vec::new(),
            op: None,
        }))
    }

    pub fn constant(&self, value: Tensor) -> Var {
        Var(Rc::new(Node {
            id: self.fresh_id(),
            value,
            requires_grad: false,
            inputs: Vec::new(),
            op: None,
        }))
    }

    /// Wraps the result of an operation, recording it if any input needs a
    /// gradient. Non-finite results are rejected.
    pub fn record(&self, value: Tensor, inputs: &[&Var], op: impl BackwardOp + 'static) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op.name()));
        }
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| v.requires_grad());
        if !requires_grad {
            return Ok(self.constant(value));
        }
        let var = Var(Rc::new(Node {
            id: self.fresh_id(),
            value,
            requires_grad: true,
            inputs: inputs.iter().map(|&v| v.clone()).collect(),
            op: Some(Box::new(op)),
        }));
        self.record.borrow_mut().push(var.clone());
        Ok(var)
    }

    /// Accumulates d`loss`/d`v` for every differentiable leaf `v` reachable
    /// from the one-element `loss`.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        if loss.value().len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must have one element, shape is {:?}", loss.shape()),
            ));
        }
        let mut grads: HashMap<usize, Tensor> = HashMap::new();
        if !loss.requires_grad() {
            return Ok(Gradients { map: grads });
        }
        grads.insert(loss.id(), Tensor::full(loss.shape(), 1.0));

        let record = self.record.borrow();
        for var in record.iter().rev() {
            let Some(grad) = grads.remove(&var.id()) else {
                continue;
            };
            let node = &var.0;
            let op = node.op.as_ref().expect("recorded nodes carry an op");
            let input_grads = op.backward(&node.inputs, &node.value, &grad);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "{}", op.name());
            for (input, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !input.requires_grad() {
                    continue;
                }
                if g.shape() != input.shape() {
                    return Err(Error::shape(
                        op.name(),
                        format!("gradient {:?} for input {:?}", g.shape(), input.shape()),
                    ));
                }
                if !g.is_finite() {
                    return Err(Error::NonFinite(op.name()));
                }
                match grads.get_mut(&input.id()) {
                    Some(acc) => acc.add_assign(&g),
                    None => {
                        grads.insert(input.id(), g);
                    }
                }
            }
        }
        Ok(Gradients { map: grads })
    }
}

/// Leaf gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    map: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var) -> Option<&Tensor> {
        self.map.get(&var.id())
    }

    /// Gradient of `var`, or zeros when it did not influence the loss.
    pub fn get_or_zeros(&self, var: &Var) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}

/// [`BackwardOp`] backed by a closure; most primitives are written this way.
pub struct FnBackward<F> {
    name: &'static str,
    f: F,
}

impl<F> FnBackward<F>
where
    F: Fn(&[Var], &Tensor, &Tensor) -> Vec<Option<Tensor>>,
{
    pub fn new(name: &'static str, f: F) -> Self {
        FnBackward { name, f }
    }
}

impl<F> BackwardOp for FnBackward<F>
where
    F: Fn(&[Var], &Tensor, &Tensor) -> Vec<Option<Tensor>>,
{
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(&self, inputs: &[Var], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        (self.f)(inputs, output, grad)
    }
}
