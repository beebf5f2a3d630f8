//! Dense f64 tensors on a reverse-mode gradient tape.
//!
//! The tape records one node per primitive operation. Each node keeps, for
//! every parent, a closure mapping the output gradient to that parent's
//! gradient contribution. A tape lives for a single forward/backward pass and
//! is discarded afterwards; parameters persist outside the tape (see
//! [`crate::params`]).

use std::cell::RefCell;
use std::rc::Rc;

use rand::Rng;

use crate::error::{Error, Result};

type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<f64>>;

struct Node {
    len: usize,
    parents: Vec<(usize, BackwardFn)>,
}

/// Records primitive operations for one forward pass.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<Vec<Node>>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(Vec::new())),
        }
    }

    fn push(&self, len: usize, parents: Vec<(usize, BackwardFn)>) -> usize {
        let mut nodes = self.inner.borrow_mut();
        nodes.push(Node { len, parents });
        nodes.len() - 1
    }

    /// A leaf tensor. Gradients accumulate at leaves and can be read back
    /// after [`Tape::backward`].
    pub fn leaf(&self, data: Vec<f64>, shape: &[usize]) -> Tensor {
        assert_eq!(
            data.len(),
            shape.iter().product::<usize>(),
            "leaf data length does not match shape"
        );
        let id = self.push(data.len(), Vec::new());
        Tensor {
            tape: self.clone(),
            id,
            shape: shape.to_vec(),
            data: Rc::new(data),
        }
    }

    pub fn scalar(&self, v: f64) -> Tensor {
        self.leaf(vec![v], &[1])
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Reverse pass from a scalar loss. Nodes are visited in reverse insertion
    /// order, which is a valid topological order since every parent precedes
    /// its children on the tape.
    pub fn backward(&self, loss: &Tensor) -> Result<Gradients> {
        if loss.len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape
            )));
        }
        let nodes = self.inner.borrow();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.id] = Some(vec![1.0]);
        for i in (0..=loss.id).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            for (pid, back) in &nodes[i].parents {
                let contrib = back(&g);
                debug_assert_eq!(contrib.len(), nodes[*pid].len);
                match &mut grads[*pid] {
                    Some(pg) => {
                        for (a, b) in pg.iter_mut().zip(contrib) {
                            *a += b;
                        }
                    }
                    None => grads[*pid] = Some(contrib),
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients(grads))
    }
}

/// Per-node gradient buffers produced by one backward pass.
pub struct Gradients(Vec<Option<Vec<f64>>>);

impl Gradients {
    /// Gradient of the loss with respect to `t`, or `None` if `t` did not
    /// influence the loss.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.0.get(t.id).and_then(|g| g.as_deref())
    }
}

/// Dense tensor participating in the tape. Cloning is cheap (shared buffer).
#[derive(Clone)]
pub struct Tensor {
    tape: Tape,
    id: usize,
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.id)
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}


fn shape_err(context: &str, expected: &[usize], got: &[usize]) -> Error {
    Error::Shape {
        expected: expected.to_vec(),
        got: got.to_vec(),
        context: context.to_string(),
    }
}

/// Right-aligned broadcast of two shapes; each dimension must match or be 1.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < rank - a.len() { 1 } else { a[i - (rank - a.len())] };
        let db = if i < rank - b.len() { 1 } else { b[i - (rank - b.len())] };
        if da == db {
            out[i] = da;
        } else if da == 1 {
            out[i] = db;
        } else if db == 1 {
            out[i] = da;
        } else {
            return None;
        }
    }
    Some(out)
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For every flat index of `out_shape`, the flat index into a tensor of
/// `shape` broadcast up to `out_shape`.
fn broadcast_map(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let pad = rank - shape.len();
    let in_strides = strides(shape);
    let out_len: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(out_len);
    let mut idx = vec![0usize; rank];
    for _ in 0..out_len {
        let mut flat = 0usize;
        for d in pad..rank {
            let dim = shape[d - pad];
            let coord = if dim == 1 { 0 } else { idx[d] };
            flat += coord * in_strides[d - pad];
        }
        map.push(flat);
        // increment multi-index
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    map
}

fn binary_bc(
    context: &str,
    a: &Tensor,
    b: &Tensor,
    f: fn(f64, f64) -> f64,
    dfa: fn(f64, f64) -> f64,
    dfb: fn(f64, f64) -> f64,
) -> Result<Tensor> {
    assert!(a.tape.same_tape(&b.tape), "tensors from different tapes");
    let out_shape = broadcast_shape(&a.shape, &b.shape)
        .ok_or_else(|| shape_err(context, &a.shape, &b.shape))?;
    let a_map = broadcast_map(&a.shape, &out_shape);
    let b_map = broadcast_map(&b.shape, &out_shape);
    let av = a.data.clone();
    let bv = b.data.clone();
    let out: Vec<f64> = a_map
        .iter()
        .zip(&b_map)
        .map(|(&ia, &ib)| f(av[ia], bv[ib]))
        .collect();

    let (am, bm) = (a_map.clone(), b_map.clone());
    let (av2, bv2) = (av.clone(), bv.clone());
    let a_len = a.len();
    let b_len = b.len();
    let back_a: BackwardFn = Box::new(move |g: &[f64]| {
        let mut out = vec![0.0; a_len];
        for (i, &gi) in g.iter().enumerate() {
            out[am[i]] += gi * dfa(av2[am[i]], bv2[bm[i]]);
        }
        out
    });
    let (am, bm) = (a_map, b_map);
    let back_b: BackwardFn = Box::new(move |g: &[f64]| {
        let mut out = vec![0.0; b_len];
        for (i, &gi) in g.iter().enumerate() {
            out[bm[i]] += gi * dfb(av[am[i]], bv[bm[i]]);
        }
        out
    });
    let id = a
        .tape
        .push(out.len(), vec![(a.id, back_a), (b.id, back_b)]);
    Ok(Tensor {
        tape: a.tape.clone(),
        id,
        shape: out_shape,
        data: Rc::new(out),
    })
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn scalar_value(&self) -> f64 {
        debug_assert_eq!(self.len(), 1);
        self.data[0]
    }

    fn unary<F, D>(&self, f: F, df: D) -> Tensor
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64 + 'static,
    {
        let out: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        let xs = self.data.clone();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            g.iter().zip(xs.iter()).map(|(&gi, &x)| gi * df(x)).collect()
        });
        let id = self.tape.push(out.len(), vec![(self.id, back)]);
        Tensor {
            tape: self.tape.clone(),
            id,
            shape: self.shape.clone(),
            data: Rc::new(out),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary_bc("add", self, other, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary_bc("sub", self, other, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary_bc("mul", self, other, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn neg(&self) -> Tensor {
        self.unary(|x| -x, |_| -1.0)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.unary(move |x| c * x, move |_| c)
    }

    pub fn add_const(&self, c: f64) -> Tensor {
        self.unary(move |x| x + c, |_| 1.0)
    }

    pub fn sigmoid(&self) -> Tensor {
        fn s(x: f64) -> f64 {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        }
        self.unary(s, |x| {
            let y = s(x);
            y * (1.0 - y)
        })
    }

    pub fn tanh(&self) -> Tensor {
        self.unary(|x| x.tanh(), |x| 1.0 - x.tanh() * x.tanh())
    }

    pub fn relu(&self) -> Tensor {
        self.unary(|x| x.max(0.0), |x| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Natural log with the input clamped away from zero.
    pub fn ln_clamped(&self, eps: f64) -> Tensor {
        self.unary(move |x| x.max(eps).ln(), move |x| 1.0 / x.max(eps))
    }

    /// Binary entropy -p ln p - (1-p) ln(1-p), elementwise, with p clamped to
    /// (eps, 1-eps) for stability.
    pub fn binary_entropy(&self, eps: f64) -> Tensor {
        let clamp = move |p: f64| p.clamp(eps, 1.0 - eps);
        self.unary(
            move |p| {
                let p = clamp(p);
                -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
            },
            move |p| {
                let p = clamp(p);
                ((1.0 - p) / p).ln()
            },
        )
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        assert!(self.tape.same_tape(&other.tape), "tensors from different tapes");
        if self.shape.len() != 2 || other.shape.len() != 2 || self.shape[1] != other.shape[0] {
            return Err(shape_err("matmul", &self.shape, &other.shape));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let n = other.shape[1];
        let a = self.data.clone();
        let b = other.data.clone();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = a[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let b2 = b.clone();
        let back_a: BackwardFn = Box::new(move |g: &[f64]| {
            // dA = G B^T
            let mut da = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += g[i * n + j] * b2[p * n + j];
                    }
                    da[i * k + p] = s;
                }
            }
            da
        });
        let a2 = a;
        let back_b: BackwardFn = Box::new(move |g: &[f64]| {
            // dB = A^T G
            let mut db = vec![0.0; k * n];
            for p in 0..k {
                for i in 0..m {
                    let aip = a2[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        db[p * n + j] += aip * g[i * n + j];
                    }
                }
            }
            db
        });
        let id = self
            .tape
            .push(out.len(), vec![(self.id, back_a), (other.id, back_b)]);
        Ok(Tensor {
            tape: self.tape.clone(),
            id,
            shape: vec![m, n],
            data: Rc::new(out),
        })
    }

    /// Reinterpret the buffer under a new shape of identical length.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(shape_err("reshape", shape, &self.shape));
        }
        let len = self.len();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            debug_assert_eq!(g.len(), len);
            g.to_vec()
        });
        let id = self.tape.push(self.len(), vec![(self.id, back)]);
        Ok(Tensor {
            tape: self.tape.clone(),
            id,
            shape: shape.to_vec(),
            data: Rc::new(self.data.as_ref().clone()),
        })
    }

    /// Row `i` of a rank-2 tensor, as a rank-1 tensor.
    pub fn row(&self, i: usize) -> Result<Tensor> {
        if self.shape.len() != 2 || i >= self.shape[0] {
            return Err(Error::Usage(format!(
                "row {i} out of bounds for shape {:?}",
                self.shape
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let out = self.data[i * cols..(i + 1) * cols].to_vec();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut full = vec![0.0; rows * cols];
            full[i * cols..(i + 1) * cols].copy_from_slice(g);
            full
        });
        let id = self.tape.push(cols, vec![(self.id, back)]);
        Ok(Tensor {
            tape: self.tape.clone(),
            id,
            shape: vec![cols],
            data: Rc::new(out),
        })
    }

    /// Columns `[start, end)` of a rank-2 tensor, or a slice of a rank-1 tensor.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        match self.shape.len() {
            1 => {
                if end > self.shape[0] || start > end {
                    return Err(Error::Usage(format!(
                        "slice [{start},{end}) out of bounds for shape {:?}",
                        self.shape
                    )));
                }
                let n = self.shape[0];
                let out = self.data[start..end].to_vec();
                let back: BackwardFn = Box::new(move |g: &[f64]| {
                    let mut full = vec![0.0; n];
                    full[start..end].copy_from_slice(g);
                    full
                });
                let id = self.tape.push(end - start, vec![(self.id, back)]);
                Ok(Tensor {
                    tape: self.tape.clone(),
                    id,
                    shape: vec![end - start],
                    data: Rc::new(out),
                })
            }
            2 => {
                if end > self.shape[1] || start > end {
                    return Err(Error::Usage(format!(
                        "slice [{start},{end}) out of bounds for shape {:?}",
                        self.shape
                    )));
                }
                let (rows, cols) = (self.shape[0], self.shape[1]);
                let w = end - start;
                let mut out = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    out.extend_from_slice(&self.data[r * cols + start..r * cols + end]);
                }
                let back: BackwardFn = Box::new(move |g: &[f64]| {
                    let mut full = vec![0.0; rows * cols];
                    for r in 0..rows {
                        full[r * cols + start..r * cols + end]
                            .copy_from_slice(&g[r * w..(r + 1) * w]);
                    }
                    full
                });
                let id = self.tape.push(rows * w, vec![(self.id, back)]);
                Ok(Tensor {
                    tape: self.tape.clone(),
                    id,
                    shape: vec![rows, w],
                    data: Rc::new(out),
                })
            }
            _ => Err(Error::Usage(format!(
                "slice_cols supports rank 1 or 2, got {:?}",
                self.shape
            ))),
        }
    }

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data.iter().sum();
        let n = self.len();
        let back: BackwardFn = Box::new(move |g: &[f64]| vec![g[0]; n]);
        let id = self.tape.push(1, vec![(self.id, back)]);
        Tensor {
            tape: self.tape.clone(),
            id,
            shape: vec![1],
            data: Rc::new(vec![s]),
        }
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len() as f64;
        self.sum_all().scale(1.0 / n)
    }

    /// Sum over rows of a rank-2 tensor, giving a rank-1 tensor of column sums.
    pub fn sum_rows(&self) -> Result<Tensor> {
        if self.shape.len() != 2 {
            return Err(Error::Usage(format!(
                "sum_rows requires rank 2, got {:?}",
                self.shape
            )));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c] += self.data[r * cols + c];
            }
        }
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let mut full = vec![0.0; rows * cols];
            for r in 0..rows {
                full[r * cols..(r + 1) * cols].copy_from_slice(g);
            }
            full
        });
        let id = self.tape.push(cols, vec![(self.id, back)]);
        Ok(Tensor {
            tape: self.tape.clone(),
            id,
            shape: vec![cols],
            data: Rc::new(out),
        })
    }

    pub fn mean_rows(&self) -> Result<Tensor> {
        let rows = *self
            .shape
            .first()
            .ok_or_else(|| Error::Usage("mean_rows on empty shape".into()))? as f64;
        Ok(self.sum_rows()?.scale(1.0 / rows))
    }

    /// Concatenate along `axis` (0 or 1). Rank-1 tensors concatenate along 0.
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Usage("concat of zero tensors".into()));
        }
        let tape = parts[0].tape.clone();
        for p in parts {
            assert!(tape.same_tape(&p.tape), "tensors from different tapes");
        }
        let rank = parts[0].shape.len();
        if parts.iter().any(|p| p.shape.len() != rank) || axis >= rank {
            return Err(Error::Usage(format!(
                "concat axis {axis} invalid for shapes {:?}",
                parts.iter().map(|p| p.shape.clone()).collect::<Vec<_>>()
            )));
        }
        match (rank, axis) {
            (1, 0) => {
                let mut out = Vec::new();
                let mut parents: Vec<(usize, BackwardFn)> = Vec::new();
                let mut offset = 0usize;
                for p in parts {
                    out.extend_from_slice(&p.data);
                    let (start, len) = (offset, p.len());
                    parents.push((
                        p.id,
                        Box::new(move |g: &[f64]| g[start..start + len].to_vec()),
                    ));
                    offset += len;
                }
                let id = tape.push(out.len(), parents);
                let n = out.len();
                Ok(Tensor {
                    tape,
                    id,
                    shape: vec![n],
                    data: Rc::new(out),
                })
            }
            (2, 0) => {
                let cols = parts[0].shape[1];
                if parts.iter().any(|p| p.shape[1] != cols) {
                    return Err(shape_err("concat axis 0", &parts[0].shape, &parts[1].shape));
                }
                let mut out = Vec::new();
                let mut parents: Vec<(usize, BackwardFn)> = Vec::new();
                let mut offset = 0usize;
                for p in parts {
                    out.extend_from_slice(&p.data);
                    let (start, len) = (offset, p.len());
                    parents.push((
                        p.id,
                        Box::new(move |g: &[f64]| g[start..start + len].to_vec()),
                    ));
                    offset += len;
                }
                let rows = offset / cols;
                let id = tape.push(out.len(), parents);
                Ok(Tensor {
                    tape,
                    id,
                    shape: vec![rows, cols],
                    data: Rc::new(out),
                })
            }
            (2, 1) => {
                let rows = parts[0].shape[0];
                if parts.iter().any(|p| p.shape[0] != rows) {
                    return Err(shape_err("concat axis 1", &parts[0].shape, &parts[1].shape));
                }
                let total_cols: usize = parts.iter().map(|p| p.shape[1]).sum();
                let mut out = vec![0.0; rows * total_cols];
                let mut parents: Vec<(usize, BackwardFn)> = Vec::new();
                let mut col_off = 0usize;
                for p in parts {
                    let w = p.shape[1];
                    for r in 0..rows {
                        out[r * total_cols + col_off..r * total_cols + col_off + w]
                            .copy_from_slice(&p.data[r * w..(r + 1) * w]);
                    }
                    let start = col_off;
                    parents.push((
                        p.id,
                        Box::new(move |g: &[f64]| {
                            let mut pg = vec![0.0; rows * w];
                            for r in 0..rows {
                                pg[r * w..(r + 1) * w].copy_from_slice(
                                    &g[r * total_cols + start..r * total_cols + start + w],
                                );
                            }
                            pg
                        }),
                    ));
                    col_off += w;
                }
                let id = tape.push(out.len(), parents);
                Ok(Tensor {
                    tape,
                    id,
                    shape: vec![rows, total_cols],
                    data: Rc::new(out),
                })
            }
            _ => Err(Error::Usage(format!(
                "concat unsupported for rank {rank} axis {axis}"
            ))),
        }
    }

    /// Inverted dropout: kept units are scaled by 1/(1-rate). Identity when
    /// `train` is off or rate is 0.
    pub fn dropout<R: Rng>(&self, rate: f64, train: bool, rng: &mut R) -> Result<Tensor> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Param(format!("dropout rate {rate} not in [0,1)")));
        }
        if !train || rate == 0.0 {
            // identity node so the flag never changes graph topology
            let len = self.len();
            let back: BackwardFn = Box::new(move |g: &[f64]| {
                debug_assert_eq!(g.len(), len);
                g.to_vec()
            });
            let id = self.tape.push(self.len(), vec![(self.id, back)]);
            return Ok(Tensor {
                tape: self.tape.clone(),
                id,
                shape: self.shape.clone(),
                data: Rc::new(self.data.as_ref().clone()),
            });
        }
        let keep = 1.0 - rate;
        let mask: Rc<Vec<f64>> = Rc::new(
            (0..self.len())
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        );
        let out: Vec<f64> = self
            .data
            .iter()
            .zip(mask.iter())
            .map(|(&x, &m)| x * m)
            .collect();
        let mask2 = mask.clone();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            g.iter().zip(mask2.iter()).map(|(&gi, &m)| gi * m).collect()
        });
        let id = self.tape.push(out.len(), vec![(self.id, back)]);
        Ok(Tensor {
            tape: self.tape.clone(),
            id,
            shape: self.shape.clone(),
            data: Rc::new(out),
        })
    }

    /// Numerically stable weighted binary cross-entropy on logits:
    /// mean_i w_i * [max(z,0) - z*y + ln(1 + e^{-|z|})].
    ///
    /// Targets may be soft (in [0,1]); weights are per-element constants.
    pub fn bce_with_logits(&self, targets: &[f64], weights: &[f64]) -> Result<Tensor> {
        if targets.len() != self.len() || weights.len() != self.len() {
            return Err(Error::Usage(format!(
                "bce_with_logits: {} logits, {} targets, {} weights",
                self.len(),
                targets.len(),
                weights.len()
            )));
        }
        let n = self.len() as f64;
        let mut loss = 0.0;
        for ((&z, &y), &w) in self.data.iter().zip(targets).zip(weights) {
            loss += w * (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p());
        }
        loss /= n;
        let zs = self.data.clone();
        let ys = targets.to_vec();
        let ws = weights.to_vec();
        let back: BackwardFn = Box::new(move |g: &[f64]| {
            let go = g[0];
            zs.iter()
                .zip(&ys)
                .zip(&ws)
                .map(|((&z, &y), &w)| {
                    let s = if z >= 0.0 {
                        1.0 / (1.0 + (-z).exp())
                    } else {
                        let e = z.exp();
                        e / (1.0 + e)
                    };
                    go * w * (s - y) / n
                })
                .collect()
        });
        let id = self.tape.push(1, vec![(self.id, back)]);
        Ok(Tensor {
            tape: self.tape.clone(),
            id,
            shape: vec![1],
            data: Rc::new(vec![loss]),
        })
    }
}
