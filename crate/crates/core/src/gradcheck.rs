//! Central finite-difference checks of tape gradients.
//!
//! Used by the unit tests of every layer and by the acceptance suite.

use crate::tape::{Tape, Var};
use crate::tensor::{Result, Tensor};

/// Absolute floor for the relative-error denominator, so that gradient
/// entries that are analytically ~0 are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the tape gradient of the scalar produced by `f` against
/// central differences with step `h`, for every element of every input.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        checked: 0,
    };
    let mut probe = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let zeros = vec![0.0; inputs[which].len()];
        let analytic = tape.grad(*var).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[which].len() {
            let original = inputs[which].data()[i];
            probe[which].data_mut()[i] = original + h;
            let up = eval(&probe)?;
            probe[which].data_mut()[i] = original - h;
            let down = eval(&probe)?;
            probe[which].data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * h);
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic[i], numeric));
            report.max_abs_error = report.max_abs_error.max((analytic[i] - numeric).abs());
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Reduces a tensor-valued output to a scalar through a fixed random
/// projection, so every output element contributes a distinct weight.
pub fn project(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}
