//! Persistent parameter storage, forward sessions and the Adam optimizer.
//!
//! Parameters live in a [`ParamStore`] outside any tape. A [`Session`] wraps
//! one tape and binds store parameters onto it as leaves, so gradients can be
//! read back per parameter after the backward pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tape, Tensor};

pub type ParamId = usize;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    pub params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], value: Vec<f64>) -> ParamId {
        assert_eq!(value.len(), shape.iter().product::<usize>());
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            value,
        });
        self.params.len() - 1
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![0.0; n])
    }

    /// Uniform init in +/- scale.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> ParamId {
        let n = shape.iter().product();
        let value = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
        self.add(name, shape, value)
    }

    /// Glorot uniform: +/- sqrt(6 / (fan_in + fan_out)).
    pub fn add_glorot<R: Rng>(
        &mut self,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        shape: &[usize],
        rng: &mut R,
    ) -> ParamId {
        let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.add_uniform(name, shape, scale, rng)
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn n_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// One forward pass: a tape plus the parameter leaves bound on it.
pub struct Session<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Tensor>>,
}

impl<'a> Session<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Session {
            tape: Tape::new(),
            store,
            bound: vec![None; store.params.len()],
        }
    }

    /// Bind parameter `id` onto the tape (cached per session).
    pub fn param(&mut self, id: ParamId) -> Tensor {
        if let Some(t) = &self.bound[id] {
            return t.clone();
        }
        let p = &self.store.params[id];
        let t = self.tape.leaf(p.value.clone(), &p.shape);
        self.bound[id] = Some(t.clone());
        t
    }

    /// Constant input (a leaf whose gradient is discarded).
    pub fn input(&self, data: Vec<f64>, shape: &[usize]) -> Tensor {
        self.tape.leaf(data, shape)
    }

    /// Run backward and collect per-parameter gradients, aligned with the
    /// store. Unbound or unused parameters get zero gradients.
    pub fn grads(&self, loss: &Tensor) -> Result<Vec<Vec<f64>>> {
        let g = self.tape.backward(loss)?;
        Ok(self.collect(&g))
    }

    pub fn collect(&self, grads: &Gradients) -> Vec<Vec<f64>> {
        self.store
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| match &self.bound[i] {
                Some(t) => grads
                    .get(t)
                    .map(|g| g.to_vec())
                    .unwrap_or_else(|| vec![0.0; p.value.len()]),
                None => vec![0.0; p.value.len()],
            })
            .collect()
    }
}

/// Gradient accumulator aligned with a store, used for mini-batch updates.
#[derive(Debug, Clone)]
pub struct GradAccum {
    pub grads: Vec<Vec<f64>>,
}

impl GradAccum {
    pub fn zeros(store: &ParamStore) -> Self {
        GradAccum {
            grads: store.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &[Vec<f64>], scale: f64) {
        for (a, b) in self.grads.iter_mut().zip(other) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }
}

/// Adam with bias correction. A zero gradient leaves parameters unchanged.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, store: &ParamStore) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            t: 0,
            m: store.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: store.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Vec<f64>]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, p) in store.params.iter_mut().enumerate() {
            for (j, g) in grads[i].iter().enumerate() {
                let m = &mut self.m[i][j];
                let v = &mut self.v[i][j];
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                p.value[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Compare analytic gradients with central finite differences over the listed
/// parameters. Returns the max over all entries of
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
pub fn grad_check<F>(store: &mut ParamStore, ids: &[ParamId], f: F, eps: f64) -> Result<f64>
where
    F: for<'s> Fn(&mut Session<'s>) -> Tensor,
{
    let mut sess = Session::new(store);
    let loss = f(&mut sess);
    if loss.len() != 1 {
        return Err(Error::Usage(
            "grad_check requires a scalar-valued function".into(),
        ));
    }
    let analytic = sess.grads(&loss)?;
    drop(sess);

    let mut max_err: f64 = 0.0;
    for &id in ids {
        for j in 0..store.params[id].value.len() {
            let orig = store.params[id].value[j];
            store.params[id].value[j] = orig + eps;
            let plus = {
                let mut s = Session::new(store);
                f(&mut s).scalar_value()
            };
            store.params[id].value[j] = orig - eps;
            let minus = {
                let mut s = Session::new(store);
                f(&mut s).scalar_value()
            };
            store.params[id].value[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id][j];
            let err = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}
