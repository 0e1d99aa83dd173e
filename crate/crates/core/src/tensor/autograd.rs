//! Tape construction and the backward sweep.

use std::cell::Cell;
use std::collections::{HashMap, HashSet};

use super::Tensor;

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

pub(crate) fn no_grad_active() -> bool {
    NO_GRAD.with(|c| c.get())
}

/// Run `f` without recording any operations. Used for the momentum branch,
/// optimizer updates, and inference.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    NO_GRAD.with(|c| {
        let prev = c.get();
        c.set(true);
        let out = f();
        c.set(prev);
        out
    })
}

/// The ordered record of differentiable operations reachable from a root.
///
/// Tensor ids are assigned monotonically at creation, so ascending id order
/// is exactly forward execution order; the backward sweep walks the record
/// in reverse. Two identical forward passes therefore replay backward in the
/// same order and produce bit-identical gradients.
pub struct Tape {
    // Ascending id = execution order. Includes leaves so that parameter
    // gradients are written during the same sweep.
    nodes: Vec<Tensor>,
}

impl Tape {
    /// Collect every tensor reachable from `root` through parent links.
    pub fn for_root(root: &Tensor) -> Tape {
        let mut seen: HashSet<u64> = HashSet::new();
        let mut nodes: Vec<Tensor> = Vec::new();
        let mut stack = vec![root.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            for p in &t.inner.parents {
                stack.push(p.clone());
            }
            nodes.push(t);
        }
        nodes.sort_by_key(|t| t.id());
        Tape { nodes }
    }

    /// Number of recorded operations (tensors produced by ops).
    pub fn len(&self) -> usize {
        self.nodes.iter().filter(|t| t.inner.vjp.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Seed the root with gradient 1 and sweep the record in reverse
    /// execution order, accumulating into every `requires_grad` tensor.
    pub fn backward(&self, root: &Tensor) {
        assert_eq!(root.numel(), 1, "backward() needs a scalar root");
        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(root.id(), vec![1.0]);
        for t in self.nodes.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else { continue };
            if t.requires_grad() {
                t.accumulate_grad(&g);
            }
            if let Some(vjp) = &t.inner.vjp {
                let parent_grads = vjp(&g);
                assert_eq!(
                    parent_grads.len(),
                    t.inner.parents.len(),
                    "vjp returned wrong number of parent gradients"
                );
                for (p, pg) in t.inner.parents.iter().zip(parent_grads) {
                    if !p.is_tracked() {
                        continue;
                    }
                    assert_eq!(pg.len(), p.numel(), "vjp gradient length mismatch");
                    match grads.get_mut(&p.id()) {
                        Some(buf) => {
                            for (b, v) in buf.iter_mut().zip(&pg) {
                                *b += v;
                            }
                        }
                        None => {
                            grads.insert(p.id(), pg);
                        }
                    }
                }
            }
        }
    }
}
