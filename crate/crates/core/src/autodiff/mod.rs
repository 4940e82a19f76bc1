//! Minimal reverse-mode differentiable tensor engine.
//!
//! Tensors are flat row-major `f32` buffers with shape metadata. Each
//! operation records its parents and a backward closure on the output node;
//! the implicit graph formed by parent links is walked in reverse topological
//! order by [`Tensor::backward`]. Leaves created with `requires_grad` keep an
//! accumulating gradient buffer across backward calls until reset.
//!
//! Only the operations the networks and the mask optimizer need are
//! provided: scalar-with-tensor and equal-shape broadcasting, 2-d
//! convolution/pooling, batch normalization and two optimizers.

mod batchnorm;
pub(crate) mod conv;
mod ops;
mod optim;
mod pool;

pub use batchnorm::{BatchNorm2d, Mode};
pub use conv::conv2d;
pub use ops::masked_tv2d;
pub use optim::{Adam, Sgd};
pub use pool::{concat, gap2d, maxpool2d, upsample_nearest};

use std::cell::{Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, SdrError};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Backward closure: receives the output node and its parents, and adds each
/// parent's gradient contribution via [`Tensor::add_grad`].
pub(crate) type BackwardFn = Box<dyn Fn(&Inner, &[Tensor])>;

pub(crate) struct Inner {
    pub(crate) shape: Vec<usize>,
    pub(crate) data: Vec<f32>,
    pub(crate) grad: Option<Vec<f32>>,
    pub(crate) requires_grad: bool,
    parents: Vec<Tensor>,
    backward_fn: Option<BackwardFn>,
    id: u64,
}

/// N-dimensional `f32` tensor with optional gradient tracking.
///
/// Cheap to clone (shared node). A tensor produced by an operation holds
/// references to its inputs, so dropping the final output frees the whole
/// graph of intermediates.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Inner>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &inner.shape)
            .field("requires_grad", &inner.requires_grad)
            .finish()
    }
}

impl Tensor {
    /// New leaf tensor. Panics if `data.len() != product(shape)`.
    pub fn leaf(data: Vec<f32>, shape: Vec<usize>, requires_grad: bool) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        let grad = requires_grad.then(|| vec![0.0; numel]);
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                grad,
                requires_grad,
                parents: Vec::new(),
                backward_fn: None,
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            })),
        }
    }

    pub fn zeros(shape: Vec<usize>, requires_grad: bool) -> Tensor {
        let numel = shape.iter().product();
        Tensor::leaf(vec![0.0; numel], shape, requires_grad)
    }

    pub fn scalar(v: f32) -> Tensor {
        Tensor::leaf(vec![v], vec![1], false)
    }

    pub(crate) fn from_op(
        data: Vec<f32>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward_fn: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let numel: usize = shape.iter().product();
        debug_assert_eq!(data.len(), numel);
        if !requires_grad {
            // No grad path: emit a detached leaf, record nothing.
            return Tensor::leaf(data, shape, false);
        }
        Tensor {
            inner: Rc::new(RefCell::new(Inner {
                shape,
                data,
                grad: Some(vec![0.0; numel]),
                requires_grad: true,
                parents,
                backward_fn: Some(backward_fn),
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    /// Borrow the value buffer.
    pub fn data(&self) -> Ref<'_, [f32]> {
        Ref::map(self.inner.borrow(), |i| i.data.as_slice())
    }

    /// Copy of the value buffer.
    pub fn to_vec(&self) -> Vec<f32> {
        self.inner.borrow().data.clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f32 {
        let inner = self.inner.borrow();
        assert_eq!(inner.data.len(), 1, "item() on non-scalar tensor");
        inner.data[0]
    }

    /// Copy of the gradient buffer, if tracked.
    pub fn grad(&self) -> Option<Vec<f32>> {
        self.inner.borrow().grad.clone()
    }

    /// Overwrite the value buffer in place (leaves only; keeps shape).
    pub fn set_data(&self, data: &[f32]) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(inner.data.len(), data.len());
        inner.data.copy_from_slice(data);
    }

    /// Mutate the value buffer in place.
    pub fn apply_data<F: FnOnce(&mut [f32])>(&self, f: F) {
        let mut inner = self.inner.borrow_mut();
        f(&mut inner.data);
    }

    pub fn zero_grad(&self) {
        let mut inner = self.inner.borrow_mut();
        if let Some(g) = inner.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Detached copy of the values as a fresh no-grad leaf.
    pub fn detach(&self) -> Tensor {
        let inner = self.inner.borrow();
        Tensor::leaf(inner.data.clone(), inner.shape.clone(), false)
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.borrow().id
    }

    /// Accumulate `g` into this node's gradient buffer (no-op when the node
    /// does not track gradients).
    pub(crate) fn add_grad(&self, g: &[f32]) {
        let mut inner = self.inner.borrow_mut();
        if !inner.requires_grad {
            return;
        }
        let grad = inner.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        debug_assert_eq!(grad.len(), g.len());
        for (dst, src) in grad.iter_mut().zip(g) {
            *dst += src;
        }
    }

    pub(crate) fn with_inner<R>(&self, f: impl FnOnce(&Inner) -> R) -> R {
        f(&self.inner.borrow())
    }

    /// True if every value is finite.
    pub fn all_finite(&self) -> bool {
        self.inner.borrow().data.iter().all(|v| v.is_finite())
    }

    /// Reverse-mode gradient pass from a scalar loss.
    ///
    /// Gradients accumulate into every reachable node that requires them;
    /// repeated calls without [`Tensor::zero_grad`] keep accumulating.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(SdrError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(SdrError::Contract(
                "backward on a loss that is not connected to any requires_grad leaf".into(),
            ));
        }

        // Iterative post-order DFS over parent links.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((node, child_idx)) = stack.pop() {
            let next_parent = {
                let inner = node.inner.borrow();
                inner.parents.get(child_idx).cloned()
            };
            match next_parent {
                Some(parent) => {
                    stack.push((node, child_idx + 1));
                    if parent.requires_grad() && visited.insert(parent.id()) {
                        stack.push((parent, 0));
                    }
                }
                None => order.push(node),
            }
        }

        self.add_grad(&[1.0]);
        for node in order.iter().rev() {
            let inner = node.inner.borrow();
            if let Some(f) = inner.backward_fn.as_ref() {
                f(&inner, &inner.parents);
            }
        }
        Ok(())
    }
}

impl Inner {
    pub(crate) fn grad_slice(&self) -> &[f32] {
        self.grad
            .as_deref()
            .expect("backward pass on node without gradient buffer")
    }
}

#[cfg(test)]
mod tests;
