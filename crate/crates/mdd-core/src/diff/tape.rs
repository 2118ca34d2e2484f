//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! A [`Tape`] records every primitive applied to [`Var`]s in creation
//! order, which is already a topological order (an operation can only
//! reference vars that exist). [`Tape::backward`] walks the nodes once in
//! reverse, accumulating vector-Jacobian products.
//!
//! A tape is single-threaded. Several tapes over shared immutable
//! parameter tensors may run concurrently; callers that combine their
//! gradients must reduce in a fixed order.

use std::cell::RefCell;

use crate::diff::num::{log_softmax_into, logsumexp_slice, softmax_into};
use crate::diff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
}

/// vjp(grad_out, sink): pushes each parent's gradient contribution through
/// `sink(parent_slot, contribution)`. Slots index the node's parent list.
type VjpFn = Box<dyn Fn(&Tensor, &mut dyn FnMut(usize, Tensor))>;

struct Node {
    value: Tensor,
    parents: Vec<usize>,
    vjp: Option<VjpFn>,
}

/// Gradients of one backward pass, queryable per [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient for `v`, or zeros of the given shape when `v` does not
    /// influence the root.
    pub fn wrt_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.wrt(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

fn lane_geometry(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor, parents: Vec<usize>, vjp: Option<VjpFn>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        debug_assert!(parents.iter().all(|&p| p < id), "inputs must precede ops");
        nodes.push(Node {
            value,
            parents,
            vjp,
        });
        Var { id }
    }

    /// Records a differentiable leaf.
    pub fn input(&self, value: Tensor) -> Var {
        self.push(value, vec![], None)
    }

    /// Records a constant leaf. Identical to [`input`](Self::input); the
    /// distinction is for the reader (its gradient is simply never used).
    pub fn constant(&self, value: Tensor) -> Var {
        self.push(value, vec![], None)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Copies the value of a var out of the tape.
    pub fn value(&self, v: Var) -> Tensor {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn value_item(&self, v: Var) -> f64 {
        let nodes = self.nodes.borrow();
        debug_assert!(nodes[v.id].value.is_scalar());
        nodes[v.id].value.item()
    }

    pub fn shape_of(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.id].value.shape().to_vec()
    }

    fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.nodes.borrow()[v.id].value)
    }

    /// Records a custom node with a caller-supplied vjp. `parents` are the
    /// vars the vjp emits contributions for, by slot.
    pub fn custom(
        &self,
        parents: &[Var],
        value: Tensor,
        vjp: impl Fn(&Tensor, &mut dyn FnMut(usize, Tensor)) + 'static,
    ) -> Var {
        self.push(
            value,
            parents.iter().map(|v| v.id).collect(),
            Some(Box::new(vjp)),
        )
    }

    // ---- primitives ----

    /// y = W x + b for vector x, or per-row for matrix x.
    /// Shapes: x `[n]` -> `[out]`, or x `[m, n]` -> `[m, out]`; w `[out, n]`;
    /// b `[out]`. Bias-add is the one broadcast in the kernel.
    pub fn affine(&self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let bv = self.value(b);
        if wv.rank() != 2 || bv.rank() != 1 || wv.shape()[0] != bv.shape()[0] {
            return Err(Error::Shape {
                op: "affine",
                detail: format!(
                    "w {:?} and b {:?} must be [out, in] and [out]",
                    wv.shape(),
                    bv.shape()
                ),
            });
        }
        let out = wv.shape()[0];
        let n = wv.shape()[1];
        match xv.rank() {
            1 => {
                if xv.shape()[0] != n {
                    return Err(Error::Shape {
                        op: "affine",
                        detail: format!("x {:?} does not match w {:?}", xv.shape(), wv.shape()),
                    });
                }
                let mut y = bv.data().to_vec();
                for o in 0..out {
                    let wrow = &wv.data()[o * n..(o + 1) * n];
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += wrow[j] * xv.data()[j];
                    }
                    y[o] += acc;
                }
                let (xc, wc) = (xv.clone(), wv.clone());
                Ok(self.custom(
                    &[x, w, b],
                    Tensor::from_parts(vec![out], y),
                    move |g, sink| {
                        let gd = g.data();
                        let mut gx = vec![0.0; n];
                        let mut gw = vec![0.0; out * n];
                        for o in 0..out {
                            let go = gd[o];
                            for j in 0..n {
                                gx[j] += go * wc.data()[o * n + j];
                                gw[o * n + j] = go * xc.data()[j];
                            }
                        }
                        sink(0, Tensor::from_parts(vec![n], gx));
                        sink(1, Tensor::from_parts(vec![out, n], gw));
                        sink(2, g.clone());
                    },
                ))
            }
            2 => {
                let m = xv.shape()[0];
                if xv.shape()[1] != n {
                    return Err(Error::Shape {
                        op: "affine",
                        detail: format!("x {:?} does not match w {:?}", xv.shape(), wv.shape()),
                    });
                }
                let mut y = vec![0.0; m * out];
                for r in 0..m {
                    let xrow = xv.matrix_row(r);
                    for o in 0..out {
                        let wrow = &wv.data()[o * n..(o + 1) * n];
                        let mut acc = bv.data()[o];
                        for j in 0..n {
                            acc += wrow[j] * xrow[j];
                        }
                        y[r * out + o] = acc;
                    }
                }
                let (xc, wc) = (xv.clone(), wv.clone());
                Ok(self.custom(
                    &[x, w, b],
                    Tensor::from_parts(vec![m, out], y),
                    move |g, sink| {
                        let gd = g.data();
                        let mut gx = vec![0.0; m * n];
                        let mut gw = vec![0.0; out * n];
                        let mut gb = vec![0.0; out];
                        for r in 0..m {
                            for o in 0..out {
                                let go = gd[r * out + o];
                                gb[o] += go;
                                for j in 0..n {
                                    gx[r * n + j] += go * wc.data()[o * n + j];
                                    gw[o * n + j] += go * xc.data()[r * n + j];
                                }
                            }
                        }
                        sink(0, Tensor::from_parts(vec![m, n], gx));
                        sink(1, Tensor::from_parts(vec![out, n], gw));
                        sink(2, Tensor::from_parts(vec![out], gb));
                    },
                ))
            }
            r => Err(Error::Shape {
                op: "affine",
                detail: format!("x must have rank 1 or 2, got {r}"),
            }),
        }
    }

    pub fn tanh(&self, x: Var) -> Var {
        let y = self.with_value(x, |t| {
            Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v.tanh()).collect())
        });
        let yc = y.clone();
        self.custom(&[x], y, move |g, sink| {
            let data = g
                .data()
                .iter()
                .zip(yc.data())
                .map(|(gi, yi)| gi * (1.0 - yi * yi))
                .collect();
            sink(0, Tensor::from_parts(yc.shape().to_vec(), data));
        })
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        let y = self.with_value(x, |t| {
            Tensor::from_parts(
                t.shape().to_vec(),
                t.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
            )
        });
        let yc = y.clone();
        self.custom(&[x], y, move |g, sink| {
            let data = g
                .data()
                .iter()
                .zip(yc.data())
                .map(|(gi, yi)| gi * yi * (1.0 - yi))
                .collect();
            sink(0, Tensor::from_parts(yc.shape().to_vec(), data));
        })
    }

    fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(Error::Shape {
                op,
                detail: format!("axis {axis} invalid for shape {shape:?}"),
            });
        }
        Ok(())
    }

    pub fn softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        Self::check_axis("softmax", xv.shape(), axis)?;
        let (outer, n, inner) = lane_geometry(xv.shape(), axis);
        let mut y = vec![0.0; xv.len()];
        let mut lane = vec![0.0; n];
        let mut soft = vec![0.0; n];
        for o in 0..outer {
            for i in 0..inner {
                for k in 0..n {
                    lane[k] = xv.data()[(o * n + k) * inner + i];
                }
                softmax_into(&lane, &mut soft);
                for k in 0..n {
                    y[(o * n + k) * inner + i] = soft[k];
                }
            }
        }
        let y = Tensor::from_parts(xv.shape().to_vec(), y);
        let yc = y.clone();
        Ok(self.custom(&[x], y, move |g, sink| {
            let mut gx = vec![0.0; yc.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let mut dot = 0.0;
                    for k in 0..n {
                        let idx = (o * n + k) * inner + i;
                        dot += g.data()[idx] * yc.data()[idx];
                    }
                    for k in 0..n {
                        let idx = (o * n + k) * inner + i;
                        gx[idx] = yc.data()[idx] * (g.data()[idx] - dot);
                    }
                }
            }
            sink(0, Tensor::from_parts(yc.shape().to_vec(), gx));
        }))
    }

    pub fn log_softmax(&self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        Self::check_axis("log_softmax", xv.shape(), axis)?;
        let (outer, n, inner) = lane_geometry(xv.shape(), axis);
        let mut y = vec![0.0; xv.len()];
        let mut lane = vec![0.0; n];
        let mut out = vec![0.0; n];
        for o in 0..outer {
            for i in 0..inner {
                for k in 0..n {
                    lane[k] = xv.data()[(o * n + k) * inner + i];
                }
                log_softmax_into(&lane, &mut out);
                for k in 0..n {
                    y[(o * n + k) * inner + i] = out[k];
                }
            }
        }
        let y = Tensor::from_parts(xv.shape().to_vec(), y);
        let yc = y.clone();
        Ok(self.custom(&[x], y, move |g, sink| {
            let mut gx = vec![0.0; yc.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let mut gsum = 0.0;
                    for k in 0..n {
                        gsum += g.data()[(o * n + k) * inner + i];
                    }
                    for k in 0..n {
                        let idx = (o * n + k) * inner + i;
                        gx[idx] = g.data()[idx] - yc.data()[idx].exp() * gsum;
                    }
                }
            }
            sink(0, Tensor::from_parts(yc.shape().to_vec(), gx));
        }))
    }

    /// Reduces `axis` by log(sum(exp(.))); the output drops that axis.
    pub fn logsumexp(&self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        Self::check_axis("logsumexp", xv.shape(), axis)?;
        let (outer, n, inner) = lane_geometry(xv.shape(), axis);
        let mut out_shape = xv.shape().to_vec();
        out_shape.remove(axis);
        let mut y = vec![0.0; outer * inner];
        let mut lane = vec![0.0; n];
        for o in 0..outer {
            for i in 0..inner {
                for k in 0..n {
                    lane[k] = xv.data()[(o * n + k) * inner + i];
                }
                y[o * inner + i] = logsumexp_slice(&lane);
            }
        }
        let y = Tensor::from_parts(out_shape, y);
        let (xc, yc) = (xv.clone(), y.clone());
        Ok(self.custom(&[x], y, move |g, sink| {
            let mut gx = vec![0.0; xc.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let lse = yc.data()[o * inner + i];
                    let glane = g.data()[o * inner + i];
                    for k in 0..n {
                        let idx = (o * n + k) * inner + i;
                        gx[idx] = glane * (xc.data()[idx] - lse).exp();
                    }
                }
            }
            sink(0, Tensor::from_parts(xc.shape().to_vec(), gx));
        }))
    }

    /// Concatenates tensors of equal rank along `axis`; all other extents
    /// must match.
    pub fn concat(&self, xs: &[Var], axis: usize) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Shape {
                op: "concat",
                detail: "empty input list".to_string(),
            });
        }
        let values: Vec<Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let rank = values[0].rank();
        if axis >= rank {
            return Err(Error::Shape {
                op: "concat",
                detail: format!("axis {axis} invalid for rank {rank}"),
            });
        }
        for v in &values {
            let mut a = v.shape().to_vec();
            let mut b = values[0].shape().to_vec();
            if v.rank() != rank {
                return Err(Error::Shape {
                    op: "concat",
                    detail: "rank mismatch".to_string(),
                });
            }
            a.remove(axis);
            b.remove(axis);
            if a != b {
                return Err(Error::Shape {
                    op: "concat",
                    detail: format!("shapes {:?} and {:?} differ off-axis", v.shape(), values[0].shape()),
                });
            }
        }
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let n_total: usize = extents.iter().sum();
        let mut out_shape = values[0].shape().to_vec();
        out_shape[axis] = n_total;
        let (outer, _, inner) = lane_geometry(&out_shape, axis);
        let mut y = vec![0.0; outer * n_total * inner];
        for o in 0..outer {
            let mut off = 0usize;
            for (v, &ni) in values.iter().zip(&extents) {
                for k in 0..ni {
                    let src = (o * ni + k) * inner;
                    let dst = (o * n_total + off + k) * inner;
                    y[dst..dst + inner].copy_from_slice(&v.data()[src..src + inner]);
                }
                off += ni;
            }
        }
        let shapes: Vec<Vec<usize>> = values.iter().map(|v| v.shape().to_vec()).collect();
        Ok(self.custom(
            &xs.to_vec(),
            Tensor::from_parts(out_shape, y),
            move |g, sink| {
                for (slot, shape) in shapes.iter().enumerate() {
                    let ni = shape[axis];
                    let off: usize = shapes[..slot].iter().map(|s| s[axis]).sum();
                    let mut gx = vec![0.0; shape.iter().product()];
                    for o in 0..outer {
                        for k in 0..ni {
                            let src = (o * n_total + off + k) * inner;
                            let dst = (o * ni + k) * inner;
                            gx[dst..dst + inner].copy_from_slice(&g.data()[src..src + inner]);
                        }
                    }
                    sink(slot, Tensor::from_parts(shape.clone(), gx));
                }
            },
        ))
    }

    /// Row gather: row `index` of a rank-2 table, or element `index` of a
    /// rank-1 tensor (as a scalar). The vjp scatter-adds into the table.
    pub fn embed(&self, table: Var, index: usize) -> Result<Var> {
        let tv = self.value(table);
        match tv.rank() {
            2 => {
                let (rows, cols) = (tv.shape()[0], tv.shape()[1]);
                if index >= rows {
                    return Err(Error::Shape {
                        op: "embed",
                        detail: format!("row {index} out of {rows}"),
                    });
                }
                let y = Tensor::from_parts(vec![cols], tv.matrix_row(index).to_vec());
                Ok(self.custom(&[table], y, move |g, sink| {
                    let mut gt = vec![0.0; rows * cols];
                    gt[index * cols..(index + 1) * cols].copy_from_slice(g.data());
                    sink(0, Tensor::from_parts(vec![rows, cols], gt));
                }))
            }
            1 => {
                let n = tv.shape()[0];
                if index >= n {
                    return Err(Error::Shape {
                        op: "embed",
                        detail: format!("element {index} out of {n}"),
                    });
                }
                let y = Tensor::scalar(tv.data()[index]);
                Ok(self.custom(&[table], y, move |g, sink| {
                    let mut gt = vec![0.0; n];
                    gt[index] = g.item();
                    sink(0, Tensor::from_parts(vec![n], gt));
                }))
            }
            r => Err(Error::Shape {
                op: "embed",
                detail: format!("table must have rank 1 or 2, got {r}"),
            }),
        }
    }

    /// Alias of [`embed`](Self::embed) when the intent is row extraction
    /// rather than a lookup table.
    pub fn row(&self, x: Var, index: usize) -> Result<Var> {
        self.embed(x, index)
    }

    /// Elementwise add; shapes must match exactly.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape {
                op: "add",
                detail: format!("{:?} vs {:?}", av.shape(), bv.shape()),
            });
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        Ok(self.custom(
            &[a, b],
            Tensor::from_parts(av.shape().to_vec(), data),
            move |g, sink| {
                sink(0, g.clone());
                sink(1, g.clone());
            },
        ))
    }

    /// Elementwise multiply. Shapes must match exactly, except that a
    /// one-element operand scales the other.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
            let (ac, bc) = (av.clone(), bv.clone());
            return Ok(self.custom(
                &[a, b],
                Tensor::from_parts(av.shape().to_vec(), data),
                move |g, sink| {
                    let ga = g.data().iter().zip(bc.data()).map(|(gi, y)| gi * y).collect();
                    let gb = g.data().iter().zip(ac.data()).map(|(gi, x)| gi * x).collect();
                    sink(0, Tensor::from_parts(ac.shape().to_vec(), ga));
                    sink(1, Tensor::from_parts(ac.shape().to_vec(), gb));
                },
            ));
        }
        if av.is_scalar() || bv.is_scalar() {
            // scalar * tensor; keep slot order (a, b).
            let (s, t, scalar_slot) = if av.is_scalar() { (av, bv, 0) } else { (bv, av, 1) };
            let sv = s.item();
            let data = t.data().iter().map(|x| sv * x).collect();
            let (sc, tc) = (s.clone(), t.clone());
            return Ok(self.custom(
                &[a, b],
                Tensor::from_parts(t.shape().to_vec(), data),
                move |g, sink| {
                    let gs: f64 = g.data().iter().zip(tc.data()).map(|(gi, x)| gi * x).sum();
                    let gt = g.data().iter().map(|gi| gi * sc.item()).collect();
                    sink(scalar_slot, Tensor::from_parts(sc.shape().to_vec(), vec![gs]));
                    sink(1 - scalar_slot, Tensor::from_parts(tc.shape().to_vec(), gt));
                },
            ));
        }
        Err(Error::Shape {
            op: "mul",
            detail: format!("{:?} vs {:?}", av.shape(), bv.shape()),
        })
    }

    /// Multiplies by a compile-time constant.
    pub fn scale(&self, x: Var, c: f64) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| c * v).collect();
        let shape = xv.shape().to_vec();
        let vjp_shape = shape.clone();
        self.custom(
            &[x],
            Tensor::from_parts(shape, data),
            move |g, sink| {
                let gx = g.data().iter().map(|gi| c * gi).collect();
                sink(0, Tensor::from_parts(vjp_shape.clone(), gx));
            },
        )
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&self, x: Var) -> Var {
        let xv = self.value(x);
        let total: f64 = xv.data().iter().sum();
        let shape = xv.shape().to_vec();
        self.custom(&[x], Tensor::scalar(total), move |g, sink| {
            let gi = g.item();
            sink(0, Tensor::from_parts(shape.clone(), vec![gi; shape.iter().product()]));
        })
    }

    /// Arithmetic mean of all elements, as a scalar.
    pub fn mean(&self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.len() as f64;
        let total: f64 = xv.data().iter().sum();
        let shape = xv.shape().to_vec();
        self.custom(&[x], Tensor::scalar(total / n), move |g, sink| {
            let gi = g.item() / n;
            sink(0, Tensor::from_parts(shape.clone(), vec![gi; shape.iter().product()]));
        })
    }

    /// Reverse pass from a scalar root. Each node is visited exactly once,
    /// in reverse creation order.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if !nodes[root.id].value.is_scalar() {
            return Err(Error::Contract(
                "backward requires a scalar root".to_string(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.id] = Some(Tensor::from_parts(
            nodes[root.id].value.shape().to_vec(),
            vec![1.0],
        ));
        for id in (0..=root.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if let Some(vjp) = &nodes[id].vjp {
                let parents = &nodes[id].parents;
                vjp(&g, &mut |slot, contrib| {
                    let pid = parents[slot];
                    match grads[pid].as_mut() {
                        Some(acc) => acc.add_assign(&contrib),
                        None => grads[pid] = Some(contrib),
                    }
                });
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}
