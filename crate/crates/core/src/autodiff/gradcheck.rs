//! Central finite-difference gradient checking.

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::Result;

/// Denominator floor for relative errors, so gradients that are zero up to
/// rounding do not blow the ratio up.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_relative_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_relative_error() < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares backward gradients of `f` against central differences with
/// step `step` for every scalar of every parameter in `ids`.
///
/// `f` must be deterministic: any dropout or Gumbel noise has to be frozen.
pub fn grad_check<F>(
    f: F,
    store: &mut ParamStore,
    ids: &[ParamId],
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    tape.backward(loss)?.accumulate(store);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store)?;
        Ok(tape.value(loss).item())
    };

    let mut params = Vec::with_capacity(ids.len());
    for &id in ids {
        let n = store.get(id).value.len();
        let mut worst_rel: f64 = 0.0;
        let mut worst_abs: f64 = 0.0;
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + step;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - step;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = store.get(id).grad.data()[i];
            worst_rel = worst_rel.max(relative_error(analytic, numeric));
            worst_abs = worst_abs.max((analytic - numeric).abs());
        }
        params.push(ParamCheck {
            name: store.get(id).name.clone(),
            max_relative_error: worst_rel,
            max_abs_error: worst_abs,
        });
    }
    store.zero_grad();
    Ok(GradCheckReport { params, tolerance })
}
