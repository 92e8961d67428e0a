use super::TrainError;
use crate::backend::{Tensor, Var};
use crate::benchmarks::{poisson_oracle, t_bottom, BoundaryTag, HeatsinkInstance};
use crate::geometry::Domain;

/// A named scalar loss term and its weight in the total.
pub struct LossTerm<'t> {
    pub name: String,
    pub value: Var<'t>,
    pub weight: f64,
}

impl<'t> LossTerm<'t> {
    pub fn new(name: &str, value: Var<'t>) -> Self {
        Self { name: name.to_string(), value, weight: 1.0 }
    }
}

/// `‖pred − truth‖₂ / ‖truth‖₂` for one item.
pub fn relative_l2_item(pred: &[f64], truth: &[f64]) -> Result<f64, TrainError> {
    if pred.len() != truth.len() {
        return Err(TrainError::Invalid(format!("relative_l2: {} vs {} values", pred.len(), truth.len())));
    }
    let den = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(TrainError::Invalid("relative_l2: zero-norm truth".into()));
    }
    let num = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Mean over items of the per-item relative L2 error.
pub fn relative_l2(pred: &[Tensor], truth: &[Tensor]) -> Result<f64, TrainError> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(TrainError::Invalid(format!("relative_l2: {} predictions, {} truths", pred.len(), truth.len())));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        if p.shape() != t.shape() {
            return Err(TrainError::Invalid(format!("relative_l2: shapes {:?} vs {:?}", p.shape(), t.shape())));
        }
        sum += relative_l2_item(p.data(), t.data())?;
    }
    Ok(sum / pred.len() as f64)
}

/// Column `c` of a row-major matrix.
pub fn column(t: &Tensor, c: usize) -> Vec<f64> {
    (0..t.rows()).map(|r| t.get2(r, c)).collect()
}

/// `Σ (pred − truth)²`
pub fn mse_data_loss<'t>(pred: &Var<'t>, truth: &Tensor) -> Result<Var<'t>, TrainError> {
    let d = pred.sub(&pred.tape().constant(truth.clone()))?;
    Ok(d.mul(&d)?.sum()?)
}

/// `Σ_f w_f Σ (pred_f − truth_f)²` with one weight per output column.
pub fn weighted_sse<'t>(pred: &Var<'t>, truth: &Tensor, weights: &[f64]) -> Result<Var<'t>, TrainError> {
    let d = pred.sub(&pred.tape().constant(truth.clone()))?;
    let d = d.mul(&pred.tape().constant(Tensor::vector(weights.iter().map(|w| w.sqrt()).collect())))?;
    Ok(d.mul(&d)?.sum()?)
}

/// Five-point stencils around each point, laid out as the centers followed
/// by the `+x`, `−x`, `+y` and `−y` neighbours (`5 · M` points).
pub fn stencil_points(points: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(points.len() * 5);
    out.extend_from_slice(points);
    for d in [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]] {
        out.extend(points.iter().map(|p| [p[0] + d[0], p[1] + d[1]]));
    }
    out
}

/// Errors unless every stencil point lies in `domain`.
pub fn check_stencil(points: &[[f64; 2]], h: f64, domain: &dyn Domain) -> Result<(), TrainError> {
    if !(h > 0.0) {
        return Err(TrainError::Invalid("stencil step must be positive".into()));
    }
    match stencil_points(points, h).into_iter().find(|p| !domain.contains(*p)) {
        Some(p) => Err(TrainError::Invalid(format!("stencil point ({}, {}) leaves the domain", p[0], p[1]))),
        None => Ok(()),
    }
}

/// `(u(x±h,y) + u(x,y±h) − 4u(x,y)) / h²` from values at [`stencil_points`], `[M, cols]`.
pub fn laplacian_from_stencil<'t>(u: &Var<'t>, m: usize, h: f64) -> Result<Var<'t>, TrainError> {
    if u.shape().len() != 2 || u.shape()[0] != 5 * m {
        return Err(TrainError::Invalid(format!("stencil values {:?} for {m} points", u.shape())));
    }
    let center = u.slice_rows(0, m)?;
    let mut acc = u.slice_rows(m, 2 * m)?;
    for k in 2..5 {
        acc = acc.add(&u.slice_rows(k * m, (k + 1) * m)?)?;
    }
    Ok(acc.sub(&center.scale(4.0)?)?.scale(1.0 / (h * h))?)
}

/// Laplacian of a scalar function by the same stencil.
pub fn fd_laplacian_fn(f: impl Fn([f64; 2]) -> f64, p: [f64; 2], h: f64) -> f64 {
    let [x, y] = p;
    (f([x + h, y]) + f([x - h, y]) + f([x, y + h]) + f([x, y - h]) - 4.0 * f(p)) / (h * h)
}

/// Poisson loss terms from model values: `pde = Σ(−∇²u − f)²` at the
/// collocation centers and `data = Σ(u − u_true)²` at the data points.
/// `u_stencil` holds values at `stencil_points(colloc, h)`.
pub fn poisson_loss<'t>(
    u_stencil: &Var<'t>,
    colloc: &[[f64; 2]],
    h: f64,
    u_data: &Var<'t>,
    data_labels: &Tensor,
) -> Result<Vec<LossTerm<'t>>, TrainError> {
    let lap = laplacian_from_stencil(u_stencil, colloc.len(), h)?;
    let f = colloc.iter().map(|p| poisson_oracle(p[0], p[1]).map(|(_, f)| f)).collect::<Result<Vec<_>, _>>()?;
    let tape = lap.tape();
    // r = −∇²u − f
    let r = lap.scale(-1.0)?.sub(&tape.constant(Tensor::matrix(colloc.len(), 1, f)?))?;
    Ok(vec![LossTerm::new("pde", r.mul(&r)?.sum()?), LossTerm::new("data", mse_data_loss(u_data, data_labels)?)])
}

/// Query layout used by [`heatsink_loss`]: the collocation stencils, then the
/// bottom and top samples, then for each adiabatic sample the point and two
/// inward steps along the normal.
pub fn heatsink_queries(inst: &HeatsinkInstance, colloc: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let mut q = stencil_points(colloc, h);
    for tag in [BoundaryTag::Bottom, BoundaryTag::Top] {
        q.extend(inst.boundary.iter().filter(|s| s.tag == tag).map(|s| s.point));
    }
    for s in inst.boundary.iter().filter(|s| s.tag == BoundaryTag::Other) {
        for k in 0..3 {
            q.push([s.point[0] - k as f64 * h * s.normal[0], s.point[1] - k as f64 * h * s.normal[1]]);
        }
    }
    q
}

/// Physics-only heat-sink loss with `k = 1`, `Q = 0` and adiabatic sides.
/// `t` holds the model values at [`heatsink_queries`]. The normal derivative
/// uses the one-sided second-order difference `(3T₀ − 4T₁ + T₂) / 2h`.
pub fn heatsink_loss<'t>(t: &Var<'t>, inst: &HeatsinkInstance, colloc: &[[f64; 2]], h: f64) -> Result<Vec<LossTerm<'t>>, TrainError> {
    let tape = t.tape();
    let m = colloc.len();
    let bottom: Vec<f64> = inst.boundary.iter().filter(|s| s.tag == BoundaryTag::Bottom).map(|s| t_bottom(s.point[0], inst.a)).collect();
    let n_top = inst.boundary.iter().filter(|s| s.tag == BoundaryTag::Top).count();
    let n_other = inst.boundary.iter().filter(|s| s.tag == BoundaryTag::Other).count();
    let expected = 5 * m + bottom.len() + n_top + 3 * n_other;
    if t.shape() != [expected, 1] {
        return Err(TrainError::Invalid(format!("heatsink values {:?}, expected [{expected}, 1]", t.shape())));
    }
    let mut terms = Vec::with_capacity(4);
    let sq = |v: Var<'t>| -> Result<Var<'t>, TrainError> { Ok(v.mul(&v)?.sum()?) };
    let mut at = 5 * m;
    if m > 0 {
        let lap = laplacian_from_stencil(&t.slice_rows(0, at)?, m, h)?;
        terms.push(LossTerm::new("pde", sq(lap)?));
    }
    let nb = bottom.len();
    if nb > 0 {
        let r = t.slice_rows(at, at + nb)?.sub(&tape.constant(Tensor::matrix(nb, 1, bottom)?))?;
        terms.push(LossTerm::new("bottom", sq(r)?));
    }
    at += nb;
    if n_top > 0 {
        let r = t.slice_rows(at, at + n_top)?.sub(&tape.constant(Tensor::full(&[n_top, 1], inst.t_top)))?;
        terms.push(LossTerm::new("top", sq(r)?));
    }
    at += n_top;
    if n_other > 0 {
        let g = t.slice_rows(at, at + 3 * n_other)?.reshape(&[n_other, 3])?;
        let w = tape.constant(Tensor::matrix(3, 1, vec![3.0 / (2.0 * h), -4.0 / (2.0 * h), 1.0 / (2.0 * h)])?);
        terms.push(LossTerm::new("other", sq(g.matmul(&w)?)?));
    }
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::backend::Tape;
    use crate::benchmarks::{heatsink_instance, HeatsinkSpec};
    use crate::geometry::BoundingBox;

    #[test]
    fn relative_l2_examples() {
        let t = |v: &[f64]| Tensor::vector(v.to_vec());
        assert_eq!(relative_l2(&[t(&[1.0, 2.0])], &[t(&[1.0, 2.0])]).unwrap(), 0.0);
        assert_eq!(relative_l2(&[t(&[0.0, 0.0])], &[t(&[3.0, 4.0])]).unwrap(), 1.0);
        let r = relative_l2(&[t(&[1.2]), t(&[1.4])], &[t(&[1.0]), t(&[1.0])]).unwrap();
        assert!((r - 0.3).abs() < 1e-12);
        assert!(relative_l2(&[t(&[1.0])], &[t(&[0.0])]).is_err());
        let s = relative_l2(&[t(&[2.4, -1.0])], &[t(&[2.0, -1.5])]).unwrap();
        let s2 = relative_l2(&[t(&[-7.2, 3.0])], &[t(&[-6.0, 4.5])]).unwrap();
        assert!((s - s2).abs() < 1e-14);
    }

    #[test]
    fn mse_value_and_gradient() {
        let mut store = crate::backend::ParamStore::new();
        store.insert("p", Tensor::vector(vec![2.0, 0.5]));
        let tape = Tape::new();
        let p = tape.param("p", store.get("p").unwrap());
        let loss = mse_data_loss(&p, &Tensor::vector(vec![1.0, -0.5])).unwrap();
        assert_eq!(loss.value().item().unwrap(), 2.0);
        let g = tape.grad(&loss, &store).unwrap();
        assert_eq!(g.get("p").unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn stencil_is_exact_for_quadratics() {
        let f = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
        assert!((fd_laplacian_fn(f, [0.3, 0.7], 1e-3) - 4.0).abs() < 1e-6);
        assert_eq!(fd_laplacian_fn(|_| 2.5, [0.3, 0.7], 1e-3), 0.0);
        let u = |p: [f64; 2]| poisson_oracle(p[0], p[1]).unwrap().0;
        assert!((fd_laplacian_fn(u, [0.5, 0.5], 1e-3) + 2.0 * PI * PI).abs() < 1e-4);
    }

    #[test]
    fn taped_stencil_matches_scalar_version() {
        let pts = [[0.2, 0.3], [0.6, 0.9]];
        let q = stencil_points(&pts, 1e-2);
        let vals: Vec<f64> = q.iter().map(|p| (p[0] * 3.0).sin() * p[1].exp()).collect();
        let tape = Tape::new();
        let lap = laplacian_from_stencil(&tape.constant(Tensor::matrix(10, 1, vals).unwrap()), 2, 1e-2).unwrap();
        for (i, p) in pts.iter().enumerate() {
            let expect = fd_laplacian_fn(|p| (p[0] * 3.0).sin() * p[1].exp(), *p, 1e-2);
            assert!((lap.value().data()[i] - expect).abs() < 1e-9);
        }
        let unit = BoundingBox::new([0.0, 0.0], [1.0, 1.0]).unwrap();
        assert!(check_stencil(&pts, 1e-2, &unit).is_ok());
        assert!(check_stencil(&[[0.0, 0.5]], 1e-3, &unit).is_err());
    }

    #[test]
    fn poisson_loss_on_exact_and_zero_fields() {
        let h = 1e-3;
        let colloc = [[0.25, 0.5], [0.5, 0.5], [0.7, 0.2]];
        let data = [[0.1, 0.2], [0.5, 0.5]];
        let u = |p: &[f64; 2]| poisson_oracle(p[0], p[1]).unwrap().0;
        let tape = Tape::new();
        let stencil = stencil_points(&colloc, h);
        let us = tape.constant(Tensor::matrix(15, 1, stencil.iter().map(u).collect()).unwrap());
        let labels = Tensor::matrix(2, 1, data.iter().map(u).collect()).unwrap();
        let ud = tape.constant(labels.clone());
        let terms = poisson_loss(&us, &colloc, h, &ud, &labels).unwrap();
        let pde = terms[0].value.value().item().unwrap();
        assert!(pde < 1e-6, "{pde}");
        assert_eq!(terms[1].value.value().item().unwrap(), 0.0);
        let zero = tape.constant(Tensor::zeros(&[2, 1]));
        let terms = poisson_loss(&us, &colloc, h, &zero, &labels).unwrap();
        let expect: f64 = labels.data().iter().map(|v| v * v).sum();
        assert!((terms[1].value.value().item().unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn heatsink_constant_field() {
        let spec = HeatsinkSpec { a_range: [0.0, 0.0], ..HeatsinkSpec::default() };
        let inst = heatsink_instance(&spec, 2.0, 0.0).unwrap();
        let colloc = [[1.0, 0.25], [inst.geometry.fins[0][0] + 0.2, 1.5]];
        let q = heatsink_queries(&inst, &colloc, 1e-3);
        let tape = Tape::new();
        let t = tape.constant(Tensor::zeros(&[q.len(), 1]));
        let terms = heatsink_loss(&t, &inst, &colloc, 1e-3).unwrap();
        assert_eq!(terms.len(), 4);
        for term in terms {
            assert_eq!(term.value.value().item().unwrap(), 0.0, "{}", term.name);
        }
    }

    #[test]
    fn heatsink_normal_derivative_of_linear_field() {
        let inst = heatsink_instance(&HeatsinkSpec::default(), 2.0, 1.0).unwrap();
        let q = heatsink_queries(&inst, &[], 1e-3);
        // T = x: the adiabatic residual equals n_x on every side sample.
        let tape = Tape::new();
        let t = tape.constant(Tensor::matrix(q.len(), 1, q.iter().map(|p| p[0]).collect()).unwrap());
        let terms = heatsink_loss(&t, &inst, &[], 1e-3).unwrap();
        let other = terms.iter().find(|t| t.name == "other").unwrap().value.value().item().unwrap();
        let expect: f64 = inst.boundary.iter().filter(|s| s.tag == BoundaryTag::Other).map(|s| s.normal[0].powi(2)).sum();
        assert!((other - expect).abs() < 1e-6);
    }
}
