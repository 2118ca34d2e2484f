//! Finite-difference verification of tape gradients.

use crate::diff::tape::{Tape, Var};
use crate::diff::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Checks the analytic gradient of a scalar-valued function against
/// central finite differences over every input coordinate.
///
/// Returns max over coordinates of
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let out_val = tape.value(out);
    if !out_val.is_scalar() {
        return Err(Error::Contract(format!(
            "grad_check requires a scalar-valued function, got shape {:?}",
            out_val.shape()
        )));
    }
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.wrt_or_zeros(v, t.shape()))
        .collect();

    let eval = |work: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = work.iter().map(|t| tape.input(t.clone())).collect();
        let out = f(&tape, &vars)?;
        Ok(tape.value_item(out))
    };

    let mut work = inputs.to_vec();
    let mut max_rel: f64 = 0.0;
    for i in 0..inputs.len() {
        for k in 0..inputs[i].len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + FD_STEP;
            let f_plus = eval(&work)?;
            work[i].data_mut()[k] = orig - FD_STEP;
            let f_minus = eval(&work)?;
            work[i].data_mut()[k] = orig;
            let numeric = (f_plus - f_minus) / (2.0 * FD_STEP);
            let a = analytic[i].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
