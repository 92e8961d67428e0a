use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::{BackendError, ParamStore, Tape, Tensor, Var};
use crate::nn;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// `softmax(Q Kᵀ / √d) V`
    DotProduct,
    /// Normalized kernel attention with softmax feature maps on queries and
    /// keys; cost is linear in the key count.
    #[default]
    Linear,
}

/// Single-head attention. `q: [M, d]`, `k: [N, d]`, `v: [N, dv]` → `[M, dv]`.
pub fn attention<'t>(q: &Var<'t>, k: &Var<'t>, v: &Var<'t>, kind: AttentionKind) -> Result<Var<'t>, BackendError> {
    if q.shape().len() != 2 || k.shape().len() != 2 || q.shape()[1] != k.shape()[1] || k.shape()[0] != v.shape()[0] {
        return Err(BackendError::Shape(format!(
            "attention: q {:?}, k {:?}, v {:?}",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    match kind {
        AttentionKind::DotProduct => dot_product_weights(q, k)?.matmul(v),
        AttentionKind::Linear => {
            let tape = q.tape();
            let fq = q.softmax()?;
            let fk_t = k.softmax()?.transpose()?;
            let kv = fk_t.matmul(v)?;
            let ones = tape.constant(Tensor::full(&[k.shape()[0], 1], 1.0));
            let k_sum = fk_t.matmul(&ones)?;
            let denom = fq.matmul(&k_sum)?;
            fq.matmul(&kv)?.row_scale(&denom.recip()?)
        }
    }
}

fn dot_product_weights<'t>(q: &Var<'t>, k: &Var<'t>) -> Result<Var<'t>, BackendError> {
    let scale = 1.0 / (q.shape()[1] as f64).sqrt();
    q.matmul(&k.transpose()?)?.scale(scale)?.softmax()
}

/// Explicit `[M, N]` attention weights. Each row sums to one for both kinds.
pub fn attention_weights(q: &Tensor, k: &Tensor, kind: AttentionKind) -> Result<Tensor, BackendError> {
    let tape = Tape::inference();
    let (q, k) = (tape.constant(q.clone()), tape.constant(k.clone()));
    match kind {
        AttentionKind::DotProduct => Ok(dot_product_weights(&q, &k)?.value().clone()),
        AttentionKind::Linear => {
            let raw = q.softmax()?.matmul(&k.softmax()?.transpose()?)?;
            let sums: Vec<f64> = (0..raw.value().rows()).map(|r| raw.value().row(r).iter().sum::<f64>()).collect();
            let inv = tape.constant(Tensor::vector(sums.iter().map(|s| 1.0 / s).collect()));
            Ok(raw.row_scale(&inv)?.value().clone())
        }
    }
}

pub(crate) fn init_multi_head(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_model: usize) {
    for proj in ["q", "k", "v", "o"] {
        nn::init_linear(store, rng, &format!("{name}.{proj}"), d_model, d_model, None);
    }
}

/// Multi-head attention of `queries: [M, d_model]` over `context: [N, d_model]`.
/// When `weights_out` is given, the per-head `[M, N]` weights are appended to it.
pub(crate) fn multi_head<'t>(
    tape: &'t Tape,
    params: &ParamStore,
    name: &str,
    queries: &Var<'t>,
    context: &Var<'t>,
    n_head: usize,
    kind: AttentionKind,
    mut weights_out: Option<&mut Vec<Tensor>>,
) -> Result<Var<'t>, BackendError> {
    let d_model = queries.shape()[1];
    let d_head = d_model / n_head;
    let q = nn::linear(tape, params, &format!("{name}.q"), queries)?;
    let k = nn::linear(tape, params, &format!("{name}.k"), context)?;
    let v = nn::linear(tape, params, &format!("{name}.v"), context)?;
    let mut heads = Vec::with_capacity(n_head);
    for h in 0..n_head {
        let (s, e) = (h * d_head, (h + 1) * d_head);
        let (qh, kh, vh) = if n_head == 1 {
            (q.clone(), k.clone(), v.clone())
        } else {
            (q.slice_cols(s, e)?, k.slice_cols(s, e)?, v.slice_cols(s, e)?)
        };
        if let Some(out) = weights_out.as_deref_mut() {
            out.push(attention_weights(qh.value(), kh.value(), kind)?);
        }
        heads.push(attention(&qh, &kh, &vh, kind)?);
    }
    let merged = if n_head == 1 { heads.pop().expect("one head") } else { Var::concat_cols(&heads)? };
    nn::linear(tape, params, &format!("{name}.o"), &merged)
}
