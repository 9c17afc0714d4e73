//! Autoregressive rollout: feed each forecast back in as the next input.

use crate::error::{ModelError, Result};
use crate::model::Forecaster;
use diff_engine::{Tape, Tensor};

/// Iterate `model` from `x0` for `steps` steps without recording gradients.
/// Returns the full trajectory `[x0, y_1, ..., y_steps]`.
pub fn rollout(model: &dyn Forecaster, x0: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
    let cfg = model.config();
    if cfg.in_channels != cfg.out_channels {
        return Err(ModelError::Config(format!(
            "autoregressive rollout needs matching channel counts, got {} in / {} out",
            cfg.in_channels, cfg.out_channels
        )));
    }
    if !x0.values().iter().all(|v| v.is_finite()) {
        return Err(ModelError::Rollout { step: 0 });
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.detached());
    for step in 1..=steps {
        let mut tape = Tape::disabled();
        let y = match model.forward(&mut tape, states.last().unwrap()) {
            Ok(y) => y,
            // A blow-up inside the model is still a divergence of the
            // iteration; report the step where it happened.
            Err(ModelError::NonFinite { .. }) => return Err(ModelError::Rollout { step }),
            Err(e) => return Err(e),
        };
        if !y.values().iter().all(|v| v.is_finite()) {
            return Err(ModelError::Rollout { step });
        }
        states.push(y.detached());
    }
    Ok(states)
}
