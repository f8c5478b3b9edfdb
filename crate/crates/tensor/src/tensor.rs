use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Result, TensorError};
use crate::real::Real;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording operations; every tensor produced inside is a
/// constant. Used for inference and for optimizer updates.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Backward rule of one recorded operation.
pub(crate) trait BackwardOp<T: Real> {
    fn name(&self) -> &'static str;
    fn inputs(&self) -> Vec<&Tensor<T>>;
    /// Accumulates input gradients into `sink` given the output gradient.
    fn backward(&self, out: &Tensor<T>, grad: &[T], sink: &mut GradSink<T>);
}

struct Node<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    op: Option<Box<dyn BackwardOp<T>>>,
}

/// Reference-counted n-dimensional array in row-major layout.
///
/// Cloning a `Tensor` clones the handle, not the data. Tensors produced by
/// operations on inputs that require gradients record their backward rule;
/// the recorded graph lives as long as the result does.
pub struct Tensor<T: Real = f32> {
    node: Rc<Node<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            node: Rc::clone(&self.node),
        }
    }
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.node.id)
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("op", &self.node.op.as_ref().map(|o| o.name()))
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        data: Vec<T>,
        requires_grad: bool,
        op: Option<Box<dyn BackwardOp<T>>>,
    ) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            node: Rc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad,
                op,
            }),
        }
    }

    /// Constant tensor. Fails when `data.len()` does not match the shape.
    pub fn from_vec(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::dim("from_vec", shape, &[data.len()]));
        }
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Trainable leaf.
    pub fn param(data: Vec<T>, shape: &[usize]) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::dim("param", shape, &[data.len()]));
        }
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self::build(shape.to_vec(), vec![T::zero(); numel], false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self::build(shape.to_vec(), vec![value; numel], false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(vec![], vec![value], false, None)
    }

    /// Result of a recorded operation. The op is kept only when gradients are
    /// enabled and some input requires them.
    pub(crate) fn from_op(shape: Vec<usize>, data: Vec<T>, op: impl BackwardOp<T> + 'static) -> Self {
        let track = grad_enabled() && op.inputs().iter().any(|t| t.requires_grad());
        if track {
            Self::build(shape, data, true, Some(Box::new(op)))
        } else {
            Self::build(shape, data, false, None)
        }
    }

    /// Marks a constant leaf as trainable (returns a new leaf sharing nothing).
    pub fn requires_grad_(self) -> Self {
        if self.node.requires_grad && self.node.op.is_none() {
            return self;
        }
        Self::build(self.shape().to_vec(), self.to_vec(), true, None)
    }

    /// Constant copy with no history.
    pub fn detach(&self) -> Self {
        Self::build(self.shape().to_vec(), self.to_vec(), false, None)
    }

    pub fn id(&self) -> u64 {
        self.node.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn ndim(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.op.is_none()
    }

    pub fn op_name(&self) -> Option<&'static str> {
        self.node.op.as_ref().map(|o| o.name())
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.node.data.borrow()
    }

    /// Mutable access to the values, for optimizers and finite differences.
    /// Mutating a tensor that has already been consumed by recorded ops makes
    /// their backward rules see the new values.
    pub fn data_mut(&self) -> RefMut<'_, Vec<T>> {
        self.node.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.node.data.borrow().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        let d = self.node.data.borrow();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.node.shape);
        d[0]
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.node.grad.borrow().clone()
    }

    pub fn grad_ref(&self) -> Ref<'_, Option<Vec<T>>> {
        self.node.grad.borrow()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.borrow_mut() = None;
    }

    /// Dimension size; negative indices count from the end.
    pub fn dim(&self, axis: isize) -> usize {
        let n = self.ndim() as isize;
        let a = if axis < 0 { n + axis } else { axis };
        self.node.shape[a as usize]
    }

    /// Ops recorded between the trainable leaves and this tensor, in execution order.
    pub fn tape(&self) -> Tape<T> {
        let mut nodes = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !t.requires_grad() || !seen.insert(t.id()) {
                continue;
            }
            if let Some(op) = &t.node.op {
                for inp in op.inputs() {
                    stack.push(inp.clone());
                }
            }
            nodes.push(t);
        }
        nodes.sort_by_key(|t| t.id());
        Tape { nodes }
    }

    /// Reverse-mode differentiation from a one-element tensor.
    ///
    /// Gradients accumulate into every trainable leaf reachable from `self`;
    /// call [`Tensor::zero_grad`] on the leaves to reset them.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(TensorError::Contract(
                "backward on a tensor with an empty tape (no trainable inputs)".into(),
            ));
        }
        let tape = self.tape();
        let mut sink = GradSink {
            buffers: HashMap::new(),
        };
        sink.buffers.insert(self.id(), vec![T::one()]);
        for t in tape.nodes.iter().rev() {
            let Some(g) = sink.buffers.remove(&t.id()) else {
                continue;
            };
            match &t.node.op {
                Some(op) => op.backward(t, &g, &mut sink),
                None => {
                    let mut slot = t.node.grad.borrow_mut();
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}

/// Gradient buffers keyed by tensor id, filled during one backward pass.
pub(crate) struct GradSink<T: Real> {
    buffers: HashMap<u64, Vec<T>>,
}

impl<T: Real> GradSink<T> {
    /// Zero-initialized (or partially accumulated) gradient buffer of `t`, or
    /// `None` when `t` does not need a gradient.
    pub(crate) fn slot(&mut self, t: &Tensor<T>) -> Option<&mut Vec<T>> {
        if !t.requires_grad() {
            return None;
        }
        let n = t.numel();
        Some(self.buffers.entry(t.id()).or_insert_with(|| vec![T::zero(); n]))
    }

    /// Adds `g` into the gradient of `t`.
    pub(crate) fn add(&mut self, t: &Tensor<T>, g: &[T]) {
        if let Some(buf) = self.slot(t) {
            for (a, b) in buf.iter_mut().zip(g) {
                *a += *b;
            }
        }
    }
}

/// Ordered record of the operations that produced a tensor.
///
/// Built on demand from the recorded graph; backward replays it in reverse.
pub struct Tape<T: Real> {
    nodes: Vec<Tensor<T>>,
}

impl<T: Real> Tape<T> {
    pub fn len(&self) -> usize {
        self.nodes.iter().filter(|t| !t.is_leaf()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Op names in execution order.
    pub fn op_names(&self) -> Vec<&'static str> {
        self.nodes.iter().filter_map(|t| t.op_name()).collect()
    }

    /// Trainable leaves reached by the tape.
    pub fn leaves(&self) -> Vec<Tensor<T>> {
        self.nodes.iter().filter(|t| t.is_leaf()).cloned().collect()
    }
}
