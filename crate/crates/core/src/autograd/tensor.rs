use std::cell::Cell;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock, RwLockReadGuard};

use super::ops::Op;
use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any graph nodes on this thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let _restore = Restore(GRAD_ENABLED.with(|g| g.replace(false)));
    f()
}

pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) parents: Vec<Tensor>,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RwLock<Vec<f64>>,
    grad: RwLock<Option<Vec<f64>>>,
    requires_grad: bool,
    node: Option<Node>,
}

/// Row-major f64 array that can take part in a reverse-mode graph.
///
/// Cloning is cheap and shares storage. Leaves created with
/// [`Tensor::param`] accumulate gradients; intermediate results only hold
/// a link to the operation that produced them.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &preview)
            .finish()
    }
}

fn check_len(shape: &[usize], len: usize) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(Error::dim(
            "tensor",
            format!("shape {shape:?} needs {expected} values, got {len}"),
        ));
    }
    Ok(())
}

impl Tensor {
    fn build(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool, node: Option<Node>) -> Self {
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RwLock::new(data),
            grad: RwLock::new(None),
            requires_grad,
            node,
        }))
    }

    /// Constant tensor (never receives gradient).
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self::build(data, shape.to_vec(), false, None))
    }

    /// Trainable leaf that accumulates gradient on `backward`.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_len(shape, data.len())?;
        Ok(Self::build(data, shape.to_vec(), true, None))
    }

    pub fn scalar(v: f64) -> Self {
        Self::build(vec![v], vec![], false, None)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::build(vec![0.0; n], shape.to_vec(), false, None)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Self::build(vec![v; n], shape.to_vec(), false, None)
    }

    /// Wraps the result of an op, recording a node if any parent needs gradient.
    pub(crate) fn from_op(data: Vec<f64>, shape: Vec<usize>, op: Op, parents: Vec<Tensor>) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let track = is_grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if track {
            Self::build(data, shape, true, Some(Node { op, parents }))
        } else {
            Self::build(data, shape, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<f64>> {
        self.0.data.read().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data().clone()
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        let d = self.data();
        assert_eq!(d.len(), 1, "item() on tensor of shape {:?}", self.0.shape);
        d[0]
    }

    /// Mutates the stored values in place. Only meaningful for leaves.
    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        let mut d = self.0.data.write().expect("tensor data lock poisoned");
        f(&mut d);
    }

    pub fn set_data(&self, values: &[f64]) -> Result<()> {
        check_len(&self.0.shape, values.len())?;
        self.update_data(|d| d.copy_from_slice(values));
        Ok(())
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.read().expect("tensor grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.write().expect("tensor grad lock poisoned") = None;
    }

    pub(crate) fn set_grad(&self, g: Option<Vec<f64>>) {
        *self.0.grad.write().expect("tensor grad lock poisoned") = g;
    }

    /// Copy of the values as a fresh constant, cut from any graph.
    pub fn detach(&self) -> Tensor {
        Self::build(self.to_vec(), self.0.shape.clone(), false, None)
    }

    pub(crate) fn node(&self) -> Option<&Node> {
        self.0.node.as_ref()
    }

    /// Reverse-mode sweep from a scalar. Leaves accumulate into their
    /// gradient buffers; call [`Tensor::zero_grad`] between passes to reset.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        let order = topo_order(self);
        let mut pending: HashMap<u64, Vec<f64>> = HashMap::new();
        pending.insert(self.id(), vec![1.0]);

        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            match t.node() {
                None => {
                    let mut slot = t.0.grad.write().expect("tensor grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
                Some(node) => {
                    let parent_grads = node.op.backward(&node.parents, t, &g)?;
                    for (p, pg) in node.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        match pending.get_mut(&p.id()) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Post-order DFS over nodes that require gradient; reversed it is a
/// valid backward schedule visiting every node once.
fn topo_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    let mut stack: Vec<(Tensor, usize)> = vec![(root.clone(), 0)];
    seen.insert(root.id());
    while let Some((t, child)) = stack.pop() {
        let parents = t.node().map(|n| n.parents.as_slice()).unwrap_or(&[]);
        if child < parents.len() {
            let p = parents[child].clone();
            stack.push((t, child + 1));
            if p.requires_grad() && seen.insert(p.id()) {
                stack.push((p, 0));
            }
        } else {
            order.push(t);
        }
    }
    order
}
