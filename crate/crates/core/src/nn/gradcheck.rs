//! Central finite-difference gradient checking.
//!
//! The checker only evaluates forward values, so it is independent of the
//! backward rules it validates.

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Scale below which errors are measured absolutely.
const SCALE_FLOOR: f64 = 1e-3;

/// Largest relative error between analytic and numeric gradients over every
/// element of every input. `build` must return a scalar node.
pub fn max_relative_error<F>(inputs: &[Tensor], step: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.input(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let zero = Tensor::zeros_like(input);
        let analytic = grads.get(vars[i]).unwrap_or(&zero).clone();
        for k in 0..input.len() {
            let original = input.data()[k];
            probe[i].data_mut()[k] = original + step;
            let plus = eval(&probe)?;
            probe[i].data_mut()[k] = original - step;
            let minus = eval(&probe)?;
            probe[i].data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.data()[k];
            let scale = a.abs().max(numeric.abs()).max(SCALE_FLOOR);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}

/// Reduces any node to a scalar through a fixed random weighting, so that
/// every output element carries a distinct upstream gradient.
pub fn weighted_sum(tape: &mut Tape, x: Var, weights: &Tensor) -> Result<Var> {
    let y = tape.mul_const(x, weights.clone())?;
    tape.sum(y)
}
