//! Parameter-initialization helpers and the small building blocks shared by
//! the embedding, encoder and decoder.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::backend::{BackendError, ParamStore, Tape, Tensor, Var};

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Weight `[fan_in, fan_out]` drawn from `U(±1/√fan_in)`; bias from the
/// given range, or the same fan-in bound when `None`.
pub(crate) fn init_linear(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    bias_range: Option<(f64, f64)>,
) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    store.insert(&format!("{name}.w"), uniform(rng, &[fan_in, fan_out], -bound, bound));
    let (lo, hi) = bias_range.unwrap_or((-bound, bound));
    store.insert(&format!("{name}.b"), uniform(rng, &[fan_out], lo, hi));
}

/// `x · W + b` for row-major `x: [rows, fan_in]`.
pub(crate) fn linear<'t>(tape: &'t Tape, params: &ParamStore, name: &str, x: &Var<'t>) -> Result<Var<'t>, BackendError> {
    let w = tape.param(&format!("{name}.w"), params.get(&format!("{name}.w"))?);
    let b = tape.param(&format!("{name}.b"), params.get(&format!("{name}.b"))?);
    x.matmul(&w)?.add(&b)
}

/// Learnable coefficients start at `w1 = w2 = 1`.
pub fn init_wavelet(store: &mut ParamStore, name: &str) {
    store.insert(&format!("{name}.w1"), Tensor::scalar(1.0));
    store.insert(&format!("{name}.w2"), Tensor::scalar(1.0));
}

/// `w1 · sin(x) + w2 · cos(x)`, elementwise.
pub fn wavelet<'t>(tape: &'t Tape, params: &ParamStore, name: &str, x: &Var<'t>) -> Result<Var<'t>, BackendError> {
    let w1 = tape.param(&format!("{name}.w1"), params.get(&format!("{name}.w1"))?);
    let w2 = tape.param(&format!("{name}.w2"), params.get(&format!("{name}.w2"))?);
    x.sin()?.mul_scalar(&w1)?.add(&x.cos()?.mul_scalar(&w2)?)
}

pub(crate) fn init_layernorm(store: &mut ParamStore, name: &str, width: usize) {
    store.insert(&format!("{name}.g"), Tensor::full(&[width], 1.0));
    store.insert(&format!("{name}.b"), Tensor::zeros(&[width]));
}

pub(crate) fn layernorm<'t>(tape: &'t Tape, params: &ParamStore, name: &str, x: &Var<'t>) -> Result<Var<'t>, BackendError> {
    let g = tape.param(&format!("{name}.g"), params.get(&format!("{name}.g"))?);
    let b = tape.param(&format!("{name}.b"), params.get(&format!("{name}.b"))?);
    x.layernorm()?.mul(&g)?.add(&b)
}

/// Two linear layers with a wavelet between them.
pub(crate) fn init_mlp(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, hidden: usize, fan_out: usize) {
    init_linear(store, rng, &format!("{name}.l0"), fan_in, hidden, None);
    init_wavelet(store, &format!("{name}.act"));
    init_linear(store, rng, &format!("{name}.l1"), hidden, fan_out, None);
}

pub(crate) fn mlp<'t>(tape: &'t Tape, params: &ParamStore, name: &str, x: &Var<'t>) -> Result<Var<'t>, BackendError> {
    let h = linear(tape, params, &format!("{name}.l0"), x)?;
    let h = wavelet(tape, params, &format!("{name}.act"), &h)?;
    linear(tape, params, &format!("{name}.l1"), &h)
}
