//! Fully connected ReLU networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{linear_value, paired_value, sigmoid, softplus, Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Norm floor of the `normalize3` head.
pub const NORMALIZE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Softplus,
    Normalize3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_hidden: usize,
    pub output_dim: usize,
    pub final_activation: Activation,
}

impl MlpSpec {
    /// Four hidden layers of 256 channels.
    pub fn new(input_dim: usize, output_dim: usize, final_activation: Activation) -> Self {
        MlpSpec {
            input_dim,
            hidden_dim: 256,
            n_hidden: 4,
            output_dim,
            final_activation,
        }
    }

    pub fn with_hidden(mut self, hidden_dim: usize, n_hidden: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self.n_hidden = n_hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.n_hidden == 0 || self.output_dim == 0 {
            return Err(Error::input(format!("MLP dimensions must be >= 1: {self:?}")));
        }
        if self.final_activation == Activation::Normalize3 && self.output_dim != 3 {
            return Err(Error::input("normalize3 head needs output_dim = 3"));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.n_hidden + 1);
        dims.push((self.input_dim, self.hidden_dim));
        for _ in 1..self.n_hidden {
            dims.push((self.hidden_dim, self.hidden_dim));
        }
        dims.push((self.hidden_dim, self.output_dim));
        dims
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub name: String,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Register parameters `<name>.l<i>.w` / `.b`. Hidden weights are
    /// Glorot-uniform, the output layer starts at zero.
    pub fn init(store: &mut ParamStore, name: &str, spec: MlpSpec, seed: u64) -> Result<Mlp> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = spec.layer_dims();
        let last = dims.len() - 1;
        let mut layers = Vec::with_capacity(dims.len());
        for (i, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = if i == last {
                Tensor::zeros(fan_in, fan_out)
            } else {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Tensor::from_vec(fan_in, fan_out, data)
            };
            let mut b = Tensor::zeros(1, fan_out);
            if i == last && spec.final_activation == Activation::Normalize3 {
                b.data[2] = 1.0;
            }
            let wid = store.insert(format!("{name}.l{i}.w"), w)?;
            let bid = store.insert(format!("{name}.l{i}.b"), b)?;
            layers.push((wid, bid));
        }
        Ok(Mlp {
            spec,
            name: name.to_string(),
            layers,
        })
    }

    /// Attach to parameters already present in `store` (e.g. a loaded checkpoint).
    pub fn bind(store: &ParamStore, name: &str, spec: MlpSpec) -> Result<Mlp> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (i, &(fan_in, fan_out)) in spec.layer_dims().iter().enumerate() {
            let find = |suffix: &str, shape: (usize, usize)| -> Result<ParamId> {
                let pname = format!("{name}.l{i}.{suffix}");
                let id = store
                    .id(&pname)
                    .ok_or_else(|| Error::validation(format!("missing parameter `{pname}`")))?;
                if store.get(id).shape() != shape {
                    return Err(Error::validation(format!(
                        "parameter `{pname}` has shape {:?}, expected {shape:?}",
                        store.get(id).shape()
                    )));
                }
                Ok(id)
            };
            layers.push((find("w", (fan_in, fan_out))?, find("b", (1, fan_out))?));
        }
        Ok(Mlp {
            spec,
            name: name.to_string(),
            layers,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    /// Evaluate on a single input vector.
    pub fn forward(&self, store: &ParamStore, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_dim {
            return Err(Error::input(format!(
                "{}: input has {} values, expected {}",
                self.name,
                input.len(),
                self.spec.input_dim
            )));
        }
        let x = Tensor::from_vec(1, input.len(), input.to_vec());
        Ok(self.forward_batch(store, &x).data)
    }

    pub fn forward_batch(&self, store: &ParamStore, input: &Tensor) -> Tensor {
        assert_eq!(input.cols, self.spec.input_dim, "{}: input width", self.name);
        let (w0, b0) = self.layers[0];
        let h = linear_value(input, store.get(w0), Some(store.get(b0)));
        self.finish_batch(store, h)
    }

    /// Rows `p * K + k` evaluate the input `[a_p, d_k]`.
    pub fn forward_batch_paired(&self, store: &ParamStore, a: &Tensor, d: &Tensor) -> Tensor {
        assert_eq!(a.cols + d.cols, self.spec.input_dim, "{}: paired input width", self.name);
        let (w0, b0) = self.layers[0];
        let h = paired_value(a, d, store.get(w0), store.get(b0));
        self.finish_batch(store, h)
    }

    fn finish_batch(&self, store: &ParamStore, mut h: Tensor) -> Tensor {
        for &(w, b) in &self.layers[1..] {
            relu_in_place(&mut h);
            h = linear_value(&h, store.get(w), Some(store.get(b)));
        }
        apply_activation(self.spec.final_activation, &mut h);
        h
    }

    pub fn forward_graph(&self, g: &mut Graph, input: Var) -> Var {
        let (w0, b0) = self.layers[0];
        let (w, b) = (g.param(w0), g.param(b0));
        let h = g.linear(input, w, Some(b));
        self.finish_graph(g, h)
    }

    pub fn forward_graph_paired(&self, g: &mut Graph, a: Var, d: Var) -> Var {
        let (w0, b0) = self.layers[0];
        let (w, b) = (g.param(w0), g.param(b0));
        let h = g.paired_linear(a, d, w, b);
        self.finish_graph(g, h)
    }

    fn finish_graph(&self, g: &mut Graph, mut h: Var) -> Var {
        for &(w, b) in &self.layers[1..] {
            let a = g.relu(h);
            let (w, b) = (g.param(w), g.param(b));
            h = g.linear(a, w, Some(b));
        }
        match self.spec.final_activation {
            Activation::Identity => h,
            Activation::Sigmoid => g.sigmoid(h),
            Activation::Softplus => g.softplus(h),
            Activation::Normalize3 => g.normalize_rows(h, NORMALIZE_EPS),
        }
    }
}

fn relu_in_place(t: &mut Tensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

fn apply_activation(act: Activation, t: &mut Tensor) {
    match act {
        Activation::Identity => {}
        Activation::Sigmoid => t.data.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::Softplus => t.data.iter_mut().for_each(|v| *v = softplus(*v)),
        Activation::Normalize3 => {
            for r in 0..t.rows {
                let row = t.row_mut(r);
                let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(NORMALIZE_EPS);
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(act: Activation, out: usize) -> MlpSpec {
        MlpSpec::new(5, out, act).with_hidden(16, 3)
    }

    #[test]
    fn init_is_deterministic() {
        let mut a = ParamStore::new();
        let mut b = ParamStore::new();
        Mlp::init(&mut a, "m", spec(Activation::Identity, 2), 7).unwrap();
        Mlp::init(&mut b, "m", spec(Activation::Identity, 2), 7).unwrap();
        assert_eq!(a, b);
        let mut c = ParamStore::new();
        Mlp::init(&mut c, "m", spec(Activation::Identity, 2), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fresh_heads_emit_neutral_values() {
        let mut s = ParamStore::new();
        let id = Mlp::init(&mut s, "id", spec(Activation::Identity, 2), 1).unwrap();
        let sg = Mlp::init(&mut s, "sg", spec(Activation::Sigmoid, 3), 2).unwrap();
        let sp = Mlp::init(&mut s, "sp", spec(Activation::Softplus, 1), 3).unwrap();
        let n3 = Mlp::init(&mut s, "n3", spec(Activation::Normalize3, 3), 4).unwrap();
        for x in [[0.0; 5], [1.0, -2.0, 3.0, 0.5, 9.0]] {
            assert_eq!(id.forward(&s, &x).unwrap(), vec![0.0, 0.0]);
            assert_eq!(sg.forward(&s, &x).unwrap(), vec![0.5; 3]);
            assert!((sp.forward(&s, &x).unwrap()[0] - std::f64::consts::LN_2).abs() < 1e-15);
            assert_eq!(n3.forward(&s, &x).unwrap(), vec![0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn rejects_bad_specs_and_inputs() {
        let mut s = ParamStore::new();
        assert!(Mlp::init(&mut s, "a", spec(Activation::Normalize3, 2), 0).is_err());
        let mut z = spec(Activation::Identity, 1);
        z.hidden_dim = 0;
        assert!(Mlp::init(&mut s, "b", z, 0).is_err());
        let m = Mlp::init(&mut s, "c", spec(Activation::Identity, 1), 0).unwrap();
        assert!(matches!(m.forward(&s, &[0.0; 4]), Err(Error::Input(_))));
    }

    #[test]
    fn graph_and_batch_paths_agree() {
        let mut s = ParamStore::new();
        let m = Mlp::init(&mut s, "m", spec(Activation::Sigmoid, 2), 3).unwrap();
        // give the output layer some weight so the test is not trivial
        for id in m.param_ids() {
            let t = s.get_mut(id);
            for (i, v) in t.data.iter_mut().enumerate() {
                *v += 0.05 * ((i * 7 % 11) as f64 - 5.0);
            }
        }
        let a = Tensor::from_vec(2, 3, vec![0.1, 0.2, 0.3, -0.4, 0.5, -0.6]);
        let d = Tensor::from_vec(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5]);
        let paired = m.forward_batch_paired(&s, &a, &d);
        let mut g = Graph::new(&s);
        let (av, dv) = (g.constant(a.clone()), g.constant(d.clone()));
        let out = m.forward_graph_paired(&mut g, av, dv);
        assert_eq!(g.value(out), &paired);
        for p in 0..2 {
            for k in 0..3 {
                let mut x = a.row(p).to_vec();
                x.extend_from_slice(d.row(k));
                let single = m.forward(&s, &x).unwrap();
                for (u, v) in single.iter().zip(paired.row(p * 3 + k)) {
                    assert!((u - v).abs() < 1e-12);
                }
            }
        }
    }
}
