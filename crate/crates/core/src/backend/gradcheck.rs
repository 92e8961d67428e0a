//! Central finite-difference oracle for tape gradients.

use rand::Rng;

use super::{BackendError, Gradients, ParamStore};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Denominator floor in the relative error.
pub const REL_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_err).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Entry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Draw `count` (parameter, flat index) coordinates uniformly over all
/// scalars in the store. Coordinates may repeat when the store is small.
pub fn sample_coordinates<R: Rng>(params: &ParamStore, count: usize, rng: &mut R) -> Vec<(String, usize)> {
    let sizes: Vec<(String, usize)> = params.iter().map(|(n, t)| (n.to_string(), t.numel())).collect();
    let total: usize = sizes.iter().map(|s| s.1).sum();
    (0..count)
        .map(|_| {
            let mut k = rng.gen_range(0..total);
            for (name, n) in &sizes {
                if k < *n {
                    return (name.clone(), k);
                }
                k -= n;
            }
            unreachable!()
        })
        .collect()
}

/// Compare `analytic` against `(f(p + h) - f(p - h)) / 2h` at each coordinate.
pub fn check<F>(params: &ParamStore, analytic: &Gradients, coords: &[(String, usize)], step: f64, loss: F) -> Result<Report, BackendError>
where
    F: FnMut(&ParamStore) -> Result<f64, BackendError>,
{
    run(params, analytic, coords, step, false, loss)
}

/// Fourth-order central difference
/// `(-f(p + 2h) + 8f(p + h) - 8f(p - h) + f(p - 2h)) / 12h`, for losses
/// whose magnitude makes rounding dominate at small `h`.
pub fn check_order4<F>(params: &ParamStore, analytic: &Gradients, coords: &[(String, usize)], step: f64, loss: F) -> Result<Report, BackendError>
where
    F: FnMut(&ParamStore) -> Result<f64, BackendError>,
{
    run(params, analytic, coords, step, true, loss)
}

fn run<F>(params: &ParamStore, analytic: &Gradients, coords: &[(String, usize)], step: f64, order4: bool, mut loss: F) -> Result<Report, BackendError>
where
    F: FnMut(&ParamStore) -> Result<f64, BackendError>,
{
    let mut work = params.clone();
    let mut report = Report::default();
    for (name, index) in coords {
        let base = work.get(name)?.data()[*index];
        let mut at = |offset: f64| -> Result<f64, BackendError> {
            work.get_mut(name)?.data_mut()[*index] = base + offset;
            let v = loss(&work);
            work.get_mut(name)?.data_mut()[*index] = base;
            v
        };
        let numeric = if order4 {
            (-at(2.0 * step)? + 8.0 * at(step)? - 8.0 * at(-step)? + at(-2.0 * step)?) / (12.0 * step)
        } else {
            (at(step)? - at(-step)?) / (2.0 * step)
        };
        let a = analytic.get(name).ok_or_else(|| BackendError::MissingParam(name.clone()))?.data()[*index];
        report.entries.push(Entry {
            param: name.clone(),
            index: *index,
            analytic: a,
            numeric,
            rel_err: (a - numeric).abs() / numeric.abs().max(REL_FLOOR),
        });
    }
    Ok(report)
}
