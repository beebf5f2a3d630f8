//! Layer vocabulary: dense blocks, graph convolutions (GCN and k-GNN),
//! bidirectional LSTM encoder and pooling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore, Session};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, t: &Tensor) -> Tensor {
        match self {
            Activation::Relu => t.relu(),
            Activation::Identity => t.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum PoolMode {
    Target,
    Sum,
    Mean,
}

/// Undirected edge list for one graph: unique pairs with the coefficient of
/// relationship of the connected pair. Self-loops are not stored; the GCN
/// normalization adds them internally.
#[derive(Debug, Clone)]
pub struct GraphEdges {
    pub n_nodes: usize,
    pub pairs: Vec<(usize, usize, f64)>,
}

impl GraphEdges {
    pub fn validate(&self) -> Result<()> {
        for &(u, v, _) in &self.pairs {
            if u >= self.n_nodes || v >= self.n_nodes {
                return Err(Error::Integrity(format!(
                    "edge ({u},{v}) out of bounds for {} nodes",
                    self.n_nodes
                )));
            }
            if u == v {
                return Err(Error::Integrity(format!("self-edge at node {u}")));
            }
        }
        Ok(())
    }

    /// Symmetric normalized adjacency with self-loops: D^-1/2 (A+I) D^-1/2.
    pub fn normalized_adjacency(&self) -> Vec<f64> {
        let n = self.n_nodes;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        for &(u, v, _) in &self.pairs {
            a[u * n + v] = 1.0;
            a[v * n + u] = 1.0;
        }
        let deg: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[i * n + j]).sum::<f64>())
            .collect();
        for i in 0..n {
            for j in 0..n {
                if a[i * n + j] != 0.0 {
                    a[i * n + j] /= (deg[i] * deg[j]).sqrt();
                }
            }
        }
        a
    }

    /// Plain (or r-weighted) neighbor adjacency without self-loops, for the
    /// k-GNN neighbor sum.
    pub fn neighbor_adjacency(&self, r_weighted: bool) -> Vec<f64> {
        let n = self.n_nodes;
        let mut a = vec![0.0; n * n];
        for &(u, v, r) in &self.pairs {
            let w = if r_weighted { r } else { 1.0 };
            a[u * n + v] = w;
            a[v * n + u] = w;
        }
        a
    }
}

/// Affine layer x W + b.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(&format!("{name}.w"), in_dim, out_dim, &[in_dim, out_dim], rng);
        let b = store.add_zeros(&format!("{name}.b"), &[out_dim]);
        Dense { w, b, in_dim, out_dim }
    }

    /// Accepts rank-1 `[in]` (returns `[out]`) or rank-2 `[N, in]`
    /// (returns `[N, out]`).
    pub fn forward(&self, sess: &mut Session, x: &Tensor) -> Result<Tensor> {
        let w = sess.param(self.w);
        let b = sess.param(self.b);
        match x.shape().len() {
            1 => {
                if x.shape()[0] != self.in_dim {
                    return Err(Error::Shape {
                        expected: vec![self.in_dim],
                        got: x.shape().to_vec(),
                        context: "dense input".into(),
                    });
                }
                let row = x.reshape(&[1, self.in_dim])?;
                row.matmul(&w)?.add(&b)?.reshape(&[self.out_dim])
            }
            2 => {
                if x.shape()[1] != self.in_dim {
                    return Err(Error::Shape {
                        expected: vec![x.shape()[0], self.in_dim],
                        got: x.shape().to_vec(),
                        context: "dense input".into(),
                    });
                }
                x.matmul(&w)?.add(&b)
            }
            _ => Err(Error::Usage(format!(
                "dense input must be rank 1 or 2, got {:?}",
                x.shape()
            ))),
        }
    }
}

/// Two affine layers with ReLU and dropout between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub l1: Dense,
    pub l2: Dense,
    pub dropout: f64,
}

impl Mlp {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        Mlp {
            l1: Dense::new(store, &format!("{name}.l1"), in_dim, hidden, rng),
            l2: Dense::new(store, &format!("{name}.l2"), hidden, out_dim, rng),
            dropout,
        }
    }

    pub fn forward<R: Rng>(
        &self,
        sess: &mut Session,
        x: &Tensor,
        train: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        let h = self.l1.forward(sess, x)?.relu();
        let h = h.dropout(self.dropout, train, rng)?;
        self.l2.forward(sess, &h)
    }
}

/// GCN update: sigma(D^-1/2 (A+I) D^-1/2 X W).
#[derive(Debug, Clone)]
pub struct GcnLayer {
    pub w: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl GcnLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(&format!("{name}.w"), in_dim, out_dim, &[in_dim, out_dim], rng);
        GcnLayer { w, in_dim, out_dim }
    }

    /// `node_mask`, when present, scales each node's contribution (its own
    /// row and the messages it sends) by the mask entry; shape `[N, 1]`.
    pub fn forward(
        &self,
        sess: &mut Session,
        x: &Tensor,
        edges: &GraphEdges,
        act: Activation,
        node_mask: Option<&Tensor>,
    ) -> Result<Tensor> {
        edges.validate()?;
        let n = edges.n_nodes;
        if x.shape() != [n, self.in_dim] {
            return Err(Error::Shape {
                expected: vec![n, self.in_dim],
                got: x.shape().to_vec(),
                context: "gcn input".into(),
            });
        }
        let x = match node_mask {
            Some(m) => m.mul(x)?,
            None => x.clone(),
        };
        let adj = sess.input(edges.normalized_adjacency(), &[n, n]);
        let w = sess.param(self.w);
        Ok(act.apply(&adj.matmul(&x)?.matmul(&w)?))
    }
}

/// Local 1-GNN update with separate self and neighbor transforms:
/// sigma(X W1 + A X W2).
#[derive(Debug, Clone)]
pub struct KgnnLayer {
    pub w_self: ParamId,
    pub w_nbr: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Scale neighbor messages by the coefficient of relationship.
    pub r_weighted: bool,
}

impl KgnnLayer {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        r_weighted: bool,
        rng: &mut R,
    ) -> Self {
        let w_self =
            store.add_glorot(&format!("{name}.w_self"), in_dim, out_dim, &[in_dim, out_dim], rng);
        let w_nbr =
            store.add_glorot(&format!("{name}.w_nbr"), in_dim, out_dim, &[in_dim, out_dim], rng);
        KgnnLayer {
            w_self,
            w_nbr,
            in_dim,
            out_dim,
            r_weighted,
        }
    }

    pub fn forward(
        &self,
        sess: &mut Session,
        x: &Tensor,
        edges: &GraphEdges,
        act: Activation,
        node_mask: Option<&Tensor>,
    ) -> Result<Tensor> {
        edges.validate()?;
        let n = edges.n_nodes;
        if x.shape() != [n, self.in_dim] {
            return Err(Error::Shape {
                expected: vec![n, self.in_dim],
                got: x.shape().to_vec(),
                context: "kgnn input".into(),
            });
        }
        let x = match node_mask {
            Some(m) => m.mul(x)?,
            None => x.clone(),
        };
        let adj = sess.input(edges.neighbor_adjacency(self.r_weighted), &[n, n]);
        let w1 = sess.param(self.w_self);
        let w2 = sess.param(self.w_nbr);
        let own = x.matmul(&w1)?;
        let nbr = adj.matmul(&x)?.matmul(&w2)?;
        Ok(act.apply(&own.add(&nbr)?))
    }
}

/// Reduce node embeddings `[N, H]` to a graph embedding `[H]`.
pub fn pool(x: &Tensor, mode: PoolMode, target_index: usize) -> Result<Tensor> {
    if x.shape().len() != 2 {
        return Err(Error::Usage(format!(
            "pool input must be rank 2, got {:?}",
            x.shape()
        )));
    }
    match mode {
        PoolMode::Target => {
            if target_index >= x.shape()[0] {
                return Err(Error::Usage(format!(
                    "target index {target_index} out of bounds for {} nodes",
                    x.shape()[0]
                )));
            }
            x.row(target_index)
        }
        PoolMode::Sum => x.sum_rows(),
        PoolMode::Mean => x.mean_rows(),
    }
}

/// Single-layer bidirectional LSTM. The embedding is the concatenation of the
/// forward direction's final hidden state and the backward direction's final
/// hidden state, each of size `hidden` (so the embedding has size 2*hidden).
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub fwd: LstmDirection,
    pub bwd: LstmDirection,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct LstmDirection {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
}

impl LstmDirection {
    fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let wx = store.add_glorot(
            &format!("{name}.wx"),
            in_dim,
            4 * hidden,
            &[in_dim, 4 * hidden],
            rng,
        );
        let wh = store.add_glorot(
            &format!("{name}.wh"),
            hidden,
            4 * hidden,
            &[hidden, 4 * hidden],
            rng,
        );
        let b = store.add_zeros(&format!("{name}.b"), &[4 * hidden]);
        LstmDirection { wx, wh, b }
    }

    /// Final hidden state `[1, hidden]` after consuming rows of `seq` in the
    /// order given by `order`.
    fn run(
        &self,
        sess: &mut Session,
        seq: &Tensor,
        order: impl Iterator<Item = usize>,
        hidden: usize,
    ) -> Result<Tensor> {
        let wx = sess.param(self.wx);
        let wh = sess.param(self.wh);
        let b = sess.param(self.b);
        let f_dim = seq.shape()[1];
        let mut h = sess.input(vec![0.0; hidden], &[1, hidden]);
        let mut c = sess.input(vec![0.0; hidden], &[1, hidden]);
        for t in order {
            let x_t = seq.row(t)?.reshape(&[1, f_dim])?;
            let z = x_t.matmul(&wx)?.add(&h.matmul(&wh)?)?.add(&b)?;
            let i = z.slice_cols(0, hidden)?.sigmoid();
            let f = z.slice_cols(hidden, 2 * hidden)?.sigmoid();
            let g = z.slice_cols(2 * hidden, 3 * hidden)?.tanh();
            let o = z.slice_cols(3 * hidden, 4 * hidden)?.sigmoid();
            c = f.mul(&c)?.add(&i.mul(&g)?)?;
            h = o.mul(&c.tanh())?;
        }
        Ok(h)
    }
}

impl BiLstm {
    /// `embedding_dim` must be even; each direction carries half of it.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        embedding_dim: usize,
        rng: &mut R,
    ) -> Self {
        assert!(embedding_dim % 2 == 0, "bilstm embedding dim must be even");
        let hidden = embedding_dim / 2;
        BiLstm {
            fwd: LstmDirection::new(store, &format!("{name}.fwd"), in_dim, hidden, rng),
            bwd: LstmDirection::new(store, &format!("{name}.bwd"), in_dim, hidden, rng),
            in_dim,
            hidden,
        }
    }

    /// Encode a `[T, F]` sequence into a `[2*hidden]` embedding.
    pub fn forward(&self, sess: &mut Session, seq: &Tensor) -> Result<Tensor> {
        if seq.shape().len() != 2 || seq.shape()[1] != self.in_dim {
            return Err(Error::Shape {
                expected: vec![0, self.in_dim],
                got: seq.shape().to_vec(),
                context: "bilstm input".into(),
            });
        }
        let t_len = seq.shape()[0];
        if t_len == 0 {
            return Err(Error::Usage("bilstm requires at least one timestep".into()));
        }
        let hf = self.fwd.run(sess, seq, 0..t_len, self.hidden)?;
        let hb = self.bwd.run(sess, seq, (0..t_len).rev(), self.hidden)?;
        Tensor::concat(&[&hf, &hb], 1)?.reshape(&[2 * self.hidden])
    }
}
