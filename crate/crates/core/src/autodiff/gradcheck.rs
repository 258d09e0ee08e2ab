use serde::Serialize;

use super::{ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Below this magnitude the relative error is measured against the floor,
/// so coordinates whose true derivative is ~0 are judged on absolute error.
const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub relative_errors: Vec<f64>,
    pub max_error: f64,
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Compares `analytic` against central differences of `f` around `point`.
pub fn check_gradient(
    mut f: impl FnMut(&Tensor) -> Result<f64>,
    analytic: &Tensor,
    point: &Tensor,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    if analytic.shape() != point.shape() {
        return Err(Error::shape(
            "check_gradient",
            format!("gradient {:?} vs point {:?}", analytic.shape(), point.shape()),
        ));
    }
    let mut probe = point.clone();
    let mut relative_errors = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let x = point.data()[i];
        probe.data_mut()[i] = x + step;
        let up = f(&probe)?;
        probe.data_mut()[i] = x - step;
        let down = f(&probe)?;
        probe.data_mut()[i] = x;
        let numeric = (up - down) / (2.0 * step);
        relative_errors.push(relative_error(analytic.data()[i], numeric));
    }
    let (worst_index, max_error) = relative_errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheckReport {
        relative_errors,
        max_error,
        worst_index,
        tolerance: tol,
        passed: max_error < tol,
    })
}

/// Builds `f` on a fresh tape with `point` as the only parameter, differentiates
/// it, and checks the result against central differences.
pub fn grad_check(
    f: impl Fn(&mut Tape, Var) -> Result<Var>,
    point: &Tensor,
    step: f64,
    tol: f64,
) -> Result<GradCheckReport> {
    let id = ParamId(0);
    let mut tape = Tape::new();
    let x = tape.param(id, point.clone());
    let out = f(&mut tape, x)?;
    let grads = tape.backward(out)?;
    let analytic = grads
        .get(id)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(point.rows(), point.cols()));
    check_gradient(
        |p| {
            let mut tape = Tape::new();
            let x = tape.constant(p.clone());
            let out = f(&mut tape, x)?;
            Ok(tape.value(out).data()[0])
        },
        &analytic,
        point,
        step,
        tol,
    )
}
