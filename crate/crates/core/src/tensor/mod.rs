//! Dense f64 tensors with reverse-mode differentiation.
//!
//! Tensors are immutable row-major buffers behind an `Rc`; differentiable
//! operations attach a backward closure and parent handles to their output,
//! so the value graph doubles as the autodiff graph. [`Tape`] collects the
//! recorded operations reachable from a root in execution order and replays
//! them backward. Parameters are leaf tensors flagged with `requires_grad`;
//! their `.grad` buffers accumulate additively across backward calls until
//! explicitly zeroed.
//!
//! Every forward operation asserts that its output is finite; NaN or Inf
//! anywhere is treated as a bug in the calling code.

mod autograd;
mod fixture;
mod grad_check;
mod ops;

pub use autograd::{no_grad, Tape};
pub use fixture::{read_tensor, write_tensor, FixtureError};
pub use grad_check::{grad_check, grad_check_param};

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use rand::Rng;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Backward closure: maps the gradient w.r.t. the output to gradients
/// w.r.t. each parent, in parent order.
pub(crate) type VjpFn = Box<dyn Fn(&[f64]) -> Vec<Vec<f64>>>;

pub(crate) struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Rc<Vec<f64>>>,
    requires_grad: Cell<bool>,
    grad: RefCell<Option<Vec<f64>>>,
    parents: Vec<Tensor>,
    vjp: Option<VjpFn>,
}

/// Dense n-dimensional array of f64 in row-major order.
#[derive(Clone)]
pub struct Tensor {
    pub(crate) inner: Rc<Inner>,
}

impl Tensor {
    fn from_parts(shape: Vec<usize>, data: Vec<f64>, parents: Vec<Tensor>, vjp: Option<VjpFn>) -> Tensor {
        let numel: usize = shape.iter().product();
        assert_eq!(
            numel,
            data.len(),
            "tensor data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        assert!(
            data.iter().all(|v| v.is_finite()),
            "non-finite value in tensor of shape {:?}",
            shape
        );
        Tensor {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                data: RefCell::new(Rc::new(data)),
                requires_grad: Cell::new(false),
                grad: RefCell::new(None),
                parents,
                vjp,
            }),
        }
    }

    /// New leaf tensor from explicit shape and row-major data.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::from_parts(shape.to_vec(), data, Vec::new(), None)
    }

    /// Scalar (rank-0) tensor.
    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(&[], vec![v])
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; n])
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Tensor::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![v; n])
    }

    /// Uniform values in `[lo, hi)` drawn from `rng`.
    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor::from_vec(shape, data)
    }

    /// Standard-normal values scaled by `std` (Box-Muller, deterministic in rng).
    pub fn randn<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
            data.push(r * c * std);
            if data.len() < n {
                data.push(r * s * std);
            }
        }
        Tensor::from_vec(shape, data)
    }

    /// Result of a recorded operation. Recording is skipped when no parent is
    /// tracked or when inside [`no_grad`].
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        vjp: impl Fn(&[f64]) -> Vec<Vec<f64>> + 'static,
    ) -> Tensor {
        let tracked = !autograd::no_grad_active() && parents.iter().any(|p| p.is_tracked());
        if tracked {
            Tensor::from_parts(shape, data, parents, Some(Box::new(vjp)))
        } else {
            Tensor::from_parts(shape, data, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    /// Snapshot handle to the current data buffer.
    pub fn data(&self) -> Rc<Vec<f64>> {
        self.inner.data.borrow().clone()
    }

    /// Copy of the data as a plain vector.
    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().as_ref().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.borrow()[0]
    }

    pub fn is_tracked(&self) -> bool {
        self.inner.requires_grad.get() || self.inner.vjp.is_some()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    /// Mark a leaf as a parameter: backward will accumulate into its `grad`.
    pub fn set_requires_grad(&self, flag: bool) -> &Tensor {
        self.inner.requires_grad.set(flag);
        self
    }

    /// Builder form of [`set_requires_grad`].
    pub fn tracked(self) -> Tensor {
        self.inner.requires_grad.set(true);
        self
    }

    /// Accumulated gradient, if any backward pass has reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Accumulated gradient, zeros when absent.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad().unwrap_or_else(|| vec![0.0; self.numel()])
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Replace the underlying data in place (optimizer/EMA updates).
    /// Panics if the new buffer has the wrong length or non-finite values.
    pub fn set_data(&self, data: Vec<f64>) {
        assert_eq!(data.len(), self.numel(), "set_data length mismatch");
        assert!(data.iter().all(|v| v.is_finite()), "set_data with non-finite values");
        *self.inner.data.borrow_mut() = Rc::new(data);
    }

    /// Detached copy: same values, fresh leaf with no history.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(&self.inner.shape.clone(), self.to_vec())
    }

    pub(crate) fn id(&self) -> u64 {
        self.inner.id
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => {
                for (b, v) in buf.iter_mut().zip(g) {
                    *b += v;
                }
            }
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode pass from a scalar root. Gradients accumulate additively
    /// on every `requires_grad` tensor reachable through the recorded graph.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() needs a scalar loss, got shape {:?}", self.shape());
        Tape::for_root(self).backward(self);
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.inner.data.borrow();
        let preview: Vec<f64> = d.iter().take(8).copied().collect();
        write!(
            f,
            "Tensor(shape={:?}, data={:?}{} , requires_grad={})",
            self.inner.shape,
            preview,
            if d.len() > 8 { ", .." } else { "" },
            self.requires_grad()
        )
    }
}

/// Largest elementwise absolute difference between two same-shape tensors.
pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff shape mismatch");
    let da = a.data();
    let db = b.data();
    da.iter()
        .zip(db.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
