//! Dense f32 tensor with reverse-mode autodiff.
//!
//! Each op allocates an immutable node holding its result; nodes keep `Rc`
//! handles to their parents plus a VJP closure, so a forward pass builds a
//! fresh one-shot tape that is dropped after `backward`. Tensors that do not
//! require grad record nothing.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::rng::RngStream;
use crate::shape::numel;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Adjoint contributions for each parent, in parent order. `None` means the
/// parent receives no gradient from this op.
pub(crate) type Adjoints = Vec<Option<Vec<f32>>>;
pub(crate) type BackwardFn = Box<dyn Fn(&[f32]) -> Adjoints>;

pub(crate) struct Inner {
    pub(crate) id: u64,
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f32>,
    pub(crate) requires_grad: bool,
    pub(crate) grad: RefCell<Option<Vec<f32>>>,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) backward: Option<BackwardFn>,
}

/// Handle to an immutable tensor node. Cloning is cheap (Rc).
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<Inner>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    // ---- constructors -------------------------------------------------

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(TensorError::ElementCount {
                op: "from_vec",
                expected: numel(shape),
                got: data.len(),
            });
        }
        Ok(Self::leaf(shape.to_vec(), data, false))
    }

    /// Leaf that participates in gradients (a model parameter).
    pub fn param(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        if numel(shape) != data.len() {
            return Err(TensorError::ElementCount {
                op: "param",
                expected: numel(shape),
                got: data.len(),
            });
        }
        Ok(Self::leaf(shape.to_vec(), data, true))
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::leaf(shape.to_vec(), vec![0.0; numel(shape)], false)
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Self::leaf(shape.to_vec(), vec![1.0; numel(shape)], false)
    }

    pub fn full(shape: &[usize], v: f32) -> Tensor {
        Self::leaf(shape.to_vec(), vec![v; numel(shape)], false)
    }

    pub fn scalar(v: f32) -> Tensor {
        Self::leaf(vec![], vec![v], false)
    }

    /// Standard-normal draws from a named stream.
    pub fn randn(shape: &[usize], rng: &mut RngStream) -> Tensor {
        Self::leaf(shape.to_vec(), rng.normal_vec(numel(shape)), false)
    }

    /// Uniform [0,1) draws.
    pub fn rand_uniform(shape: &[usize], rng: &mut RngStream) -> Tensor {
        Self::leaf(shape.to_vec(), rng.uniform_vec(numel(shape)), false)
    }

    pub(crate) fn leaf(shape: Vec<usize>, data: Vec<f32>, requires_grad: bool) -> Tensor {
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: RefCell::new(None),
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f32>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.inner.requires_grad);
        if !requires_grad {
            return Self::leaf(shape, data, false);
        }
        debug_assert_eq!(numel(&shape), data.len());
        Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad: true,
                grad: RefCell::new(None),
                parents,
                backward: Some(backward),
            }),
        }
    }

    // ---- accessors ----------------------------------------------------

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.inner.data
    }

    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Value of a scalar (rank-0 or single-element) tensor.
    pub fn item(&self) -> f32 {
        debug_assert_eq!(self.inner.data.len(), 1);
        self.inner.data[0]
    }

    /// Gradient accumulated by the last backward pass, if any.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.borrow().clone()
    }

    /// Remove and return the accumulated gradient.
    pub fn take_grad(&self) -> Option<Vec<f32>> {
        self.inner.grad.borrow_mut().take()
    }

    /// Same values, detached from the tape.
    pub fn detach(&self) -> Tensor {
        Self::leaf(self.inner.shape.clone(), self.inner.data.clone(), false)
    }

    pub fn is_finite(&self) -> bool {
        self.inner.data.iter().all(|v| v.is_finite())
    }

    // ---- backward -----------------------------------------------------

    /// Reverse-mode sweep from a scalar root. Populates `grad` on every
    /// reachable tensor with `requires_grad`.
    pub fn backward(&self) -> Result<()> {
        if self.inner.data.len() != 1 {
            return Err(TensorError::NonScalarRoot {
                shape: self.inner.shape.clone(),
            });
        }
        if !self.inner.requires_grad {
            return Ok(());
        }

        let order = self.topo_order();

        // Upstream gradients held per node id while the sweep runs.
        let mut grads: HashMap<u64, Vec<f32>> = HashMap::new();
        grads.insert(self.inner.id, vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = grads.remove(&node.inner.id) else {
                continue;
            };
            if node.inner.requires_grad && node.inner.parents.is_empty() {
                // Leaf: accumulate into the tensor itself for the caller.
                let mut slot = node.inner.grad.borrow_mut();
                match slot.as_mut() {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(g.iter()) {
                            *a += b;
                        }
                    }
                    None => *slot = Some(g),
                }
                continue;
            }
            let Some(backward) = &node.inner.backward else {
                continue;
            };
            let contributions = backward(&g);
            debug_assert_eq!(contributions.len(), node.inner.parents.len());
            for (parent, contrib) in node.inner.parents.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !parent.inner.requires_grad {
                    continue;
                }
                debug_assert_eq!(contrib.len(), parent.inner.data.len());
                match grads.get_mut(&parent.inner.id) {
                    Some(acc) => {
                        for (a, b) in acc.iter_mut().zip(contrib.iter()) {
                            *a += b;
                        }
                    }
                    None => {
                        grads.insert(parent.inner.id, contrib);
                    }
                }
            }
        }
        Ok(())
    }

    /// Topological order (parents before children), iterative to keep deep
    /// graphs off the call stack.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut state: HashMap<u64, bool> = HashMap::new(); // false=open, true=done
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        while let Some((node, child_idx)) = stack.pop() {
            if let Some(&done) = state.get(&node.inner.id) {
                if done {
                    continue;
                }
            }
            if child_idx == 0 {
                state.insert(node.inner.id, false);
            }
            if child_idx < node.inner.parents.len() {
                let parent = node.inner.parents[child_idx].clone();
                stack.push((node, child_idx + 1));
                if parent.inner.requires_grad && !state.contains_key(&parent.inner.id) {
                    stack.push((parent, 0));
                }
            } else {
                state.insert(node.inner.id, true);
                order.push(node);
            }
        }
        order
    }
}
