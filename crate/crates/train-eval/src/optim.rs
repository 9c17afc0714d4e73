//! Decoupled-weight-decay adaptive-moment optimizer (AdamW).

use crate::error::{Result, TrainError};
use diff_engine::{Gradients, Tensor};
use std::collections::BTreeMap;

/// Hyperparameters. Defaults: β₁ = 0.9, β₂ = 0.99, ε = 1e-8, weight decay
/// 1e-5, skip-and-report on non-finite gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub nonfinite: NonFinitePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonFinitePolicy {
    /// Skip the whole step (no parameter or state change) and report it.
    Skip,
    /// Fail the step with an error.
    Fail,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-5,
            nonfinite: NonFinitePolicy::Skip,
        }
    }
}

/// First/second moment estimates per parameter name, plus the step count.
/// The map is ordered so serialization and iteration are deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimState {
    pub step: u64,
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl OptimState {
    /// Flatten into named f64 sections for checkpointing: one "step" entry,
    /// then "m.<name>" / "v.<name>" pairs in name order.
    pub fn flatten(&self) -> Vec<(String, Vec<f64>)> {
        let mut out = vec![("step".to_string(), vec![self.step as f64])];
        for (name, (m, v)) in &self.moments {
            out.push((format!("m.{name}"), m.clone()));
            out.push((format!("v.{name}"), v.clone()));
        }
        out
    }

    /// Inverse of [`flatten`]: rebuild the state from named sections.
    pub fn from_flat(entries: &[(String, Vec<f64>)]) -> Result<Self> {
        let mut step = None;
        let mut halves: BTreeMap<String, (Option<Vec<f64>>, Option<Vec<f64>>)> = BTreeMap::new();
        for (name, data) in entries {
            if name == "step" {
                match data.as_slice() {
                    [s] if *s >= 0.0 && s.fract() == 0.0 => step = Some(*s as u64),
                    _ => {
                        return Err(TrainError::BadCheckpoint(
                            "step section must hold one non-negative integer".into(),
                        ))
                    }
                }
            } else if let Some(p) = name.strip_prefix("m.") {
                halves.entry(p.to_string()).or_default().0 = Some(data.clone());
            } else if let Some(p) = name.strip_prefix("v.") {
                halves.entry(p.to_string()).or_default().1 = Some(data.clone());
            } else {
                return Err(TrainError::BadCheckpoint(format!(
                    "unrecognized optimizer section {name}"
                )));
            }
        }
        let step =
            step.ok_or_else(|| TrainError::BadCheckpoint("missing step section".into()))?;
        let mut moments = BTreeMap::new();
        for (name, (m, v)) in halves {
            match (m, v) {
                (Some(m), Some(v)) if m.len() == v.len() => {
                    moments.insert(name, (m, v));
                }
                _ => {
                    return Err(TrainError::BadCheckpoint(format!(
                        "moments for {name} are incomplete or mismatched"
                    )))
                }
            }
        }
        Ok(OptimState { step, moments })
    }
}

/// What a call to [`AdamW::step`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// The step was skipped because this parameter's gradient was non-finite.
    SkippedNonFinite { name: String },
}

#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: AdamWConfig,
    state: OptimState,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        AdamW {
            cfg,
            state: OptimState::default(),
        }
    }

    /// Resume from a checkpointed state.
    pub fn from_state(cfg: AdamWConfig, state: OptimState) -> Self {
        AdamW { cfg, state }
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.cfg
    }

    pub fn state(&self) -> &OptimState {
        &self.state
    }

    /// One update over the named parameters. Parameters without a gradient
    /// entry are treated as zero-gradient (their moments decay and the
    /// weight decay still applies). A non-finite gradient anywhere either
    /// skips the whole step or fails, per the configured policy.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor)],
        grads: &Gradients,
        lr: f64,
    ) -> Result<StepOutcome> {
        for (name, t) in params.iter() {
            if let Some(g) = grads.get_by_id(t.id()) {
                if !g.data.iter().all(|v| v.is_finite()) {
                    return match self.cfg.nonfinite {
                        NonFinitePolicy::Skip => {
                            Ok(StepOutcome::SkippedNonFinite { name: name.clone() })
                        }
                        NonFinitePolicy::Fail => {
                            Err(TrainError::NonFiniteGradient { name: name.clone() })
                        }
                    };
                }
            }
        }

        self.state.step += 1;
        let t = self.state.step;
        let bc1 = 1.0 - self.cfg.beta1.powi(t as i32);
        let bc2 = 1.0 - self.cfg.beta2.powi(t as i32);
        let zero: Vec<f64> = Vec::new();
        for (name, param) in params.iter_mut() {
            let n = param.numel();
            let g = grads
                .get_by_id(param.id())
                .map(|g| g.data.as_slice())
                .unwrap_or(&zero);
            if !g.is_empty() && g.len() != n {
                return Err(TrainError::StateShape {
                    name: name.clone(),
                    got: g.len(),
                    expected: n,
                });
            }
            let (m, v) = self
                .state
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            if m.len() != n {
                return Err(TrainError::StateShape {
                    name: name.clone(),
                    got: m.len(),
                    expected: n,
                });
            }
            let values = param.values_mut();
            for i in 0..n {
                let gi = if g.is_empty() { 0.0 } else { g[i] };
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * gi;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + self.cfg.eps)
                    + lr * self.cfg.weight_decay * values[i];
            }
        }
        Ok(StepOutcome::Applied)
    }
}
