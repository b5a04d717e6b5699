//! Minimal differentiable-network core: tensors, a reverse-mode tape,
//! MLPs, Adam and positional encoding.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod mlp;
pub mod params;
pub mod posenc;
pub mod tensor;

pub use adam::{adam_step, Adam, AdamConfig};
pub use graph::{sigmoid, softplus, Graph, Op, Var};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use params::{Grads, ParamId, ParamStore};
pub use posenc::{encode_batch, encoded_dim, positional_encode};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Evaluate a scalar loss built on a fresh tape and return it with the exact
/// gradient of every parameter in `store`.
pub fn grad_of_scalar<F>(store: &ParamStore, build: F) -> Result<(f64, Grads)>
where
    F: FnOnce(&mut Graph) -> Result<Var>,
{
    let mut g = Graph::new(store);
    let root = build(&mut g)?;
    let loss = g.value(root);
    if loss.len() != 1 {
        return Err(Error::input("loss must be a scalar"));
    }
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::numeric("loss"));
    }
    let mut grads = store.zero_grads();
    g.backward(root, &mut grads)?;
    Ok((value, grads))
}
