//! Reverse sweep over the implicit tape.
//!
//! Each op output keeps handles to its inputs, so the executed graph is the
//! DAG reachable from the loss. Creation ids grow monotonically, which makes
//! "sort by id, descending" a topological order identical to reverse
//! execution order. Every node is visited exactly once; gradients for
//! intermediate nodes live in a scratch map and are only persisted on
//! `requires_grad` leaves.

use std::collections::HashMap;

use crate::{Result, Scalar, Tensor, TensorError};

/// Backward rule attached to an op output.
///
/// `backward` returns one gradient buffer per parent (in `parents()` order);
/// `None` skips parents that do not need a gradient.
pub trait BackwardOp<S: Scalar>: Send + Sync {
    fn parents(&self) -> Vec<Tensor<S>>;
    fn backward(&self, grad_out: &[S]) -> Vec<Option<Vec<S>>>;
}

/// Propagates d(loss)/d(leaf) to every tracked `requires_grad` leaf reachable
/// from `loss`. Gradients accumulate into existing buffers, so clear them
/// between independent backward passes.
pub fn backward<S: Scalar>(loss: &Tensor<S>) -> Result<()> {
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarLoss {
            shape: loss.shape().to_vec(),
        });
    }

    // Collect the tracked subgraph.
    let mut nodes: HashMap<u64, Tensor<S>> = HashMap::new();
    let mut stack = vec![loss.clone()];
    while let Some(t) = stack.pop() {
        if !t.track() || nodes.contains_key(&t.seq()) {
            continue;
        }
        if let Some(op) = t.op() {
            for p in op.parents() {
                if p.track() && !nodes.contains_key(&p.seq()) {
                    stack.push(p);
                }
            }
        }
        nodes.insert(t.seq(), t);
    }

    let mut order: Vec<u64> = nodes.keys().copied().collect();
    order.sort_unstable_by(|a, b| b.cmp(a));

    let mut grads: HashMap<u64, Vec<S>> = HashMap::new();
    grads.insert(loss.seq(), vec![S::one()]);

    for seq in order {
        let node = &nodes[&seq];
        let Some(g) = grads.remove(&seq) else {
            continue; // tracked but not on a path from the loss
        };
        if node.requires_grad() {
            node.accumulate_grad(&g);
        }
        if let Some(op) = node.op() {
            let parents = op.parents();
            for (parent, pg) in parents.iter().zip(op.backward(&g)) {
                let Some(pg) = pg else { continue };
                if !parent.track() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel(), "parent gradient length");
                match grads.get_mut(&parent.seq()) {
                    Some(buf) => {
                        for (b, v) in buf.iter_mut().zip(pg) {
                            *b = *b + v;
                        }
                    }
                    None => {
                        grads.insert(parent.seq(), pg);
                    }
                }
            }
        }
    }
    Ok(())
}
