//! Autoregressive rollout evaluation: per-lead verification metrics and
//! degree spectra for a model and the persistence baseline.

use crate::error::{Result, TrainError};
use crate::metrics::{climatology, relative_loss_per_variable, rmse};
use crate::standardize::Standardizer;
use crate::weights::{latitude_weights, MetricWeights};
use diff_engine::{Tape, Tensor, TensorData};
use sht_core::{degree_spectrum, GridField, Sht};
use shno_model::{Forecaster, ModelError};
use std::sync::Arc;
use swe_solver::TrajectoryDataset;

/// A forecast that left the finite range: rollout from `start` of member
/// `member` produced non-finite fields at lead step `step` (1-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonFiniteEvent {
    pub member: usize,
    pub start: usize,
    pub step: usize,
}

/// Per-lead, per-variable metric table, indexed `[lead][variable]`. Entries
/// are NaN at leads where no forecast survived.
#[derive(Debug, Clone)]
pub struct LeadMetrics {
    pub rmse: Vec<Vec<f64>>,
    pub acc: Vec<Vec<f64>>,
    pub relative: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub model_name: String,
    pub variables: Vec<String>,
    /// Lead times in hours, strictly increasing.
    pub lead_hours: Vec<f64>,
    pub model: LeadMetrics,
    pub persistence: LeadMetrics,
    /// Mean degree spectra of the model forecasts, `[lead][variable][n]`.
    pub spectra_model: Vec<Vec<Vec<f64>>>,
    /// Mean degree spectra of the matching truths, same pool and indexing.
    pub spectra_truth: Vec<Vec<Vec<f64>>>,
    /// Model forecasts still finite at each lead.
    pub forecast_counts: Vec<usize>,
    pub total_forecasts: usize,
    pub nonfinite: Vec<NonFiniteEvent>,
}

impl EvalReport {
    /// One row per (model, variable, lead): verification metric table.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("model,variable,lead_hours,rmse,acc,relative_loss\n");
        for (name, table) in [
            (self.model_name.as_str(), &self.model),
            ("persistence", &self.persistence),
        ] {
            for (k, lead) in self.lead_hours.iter().enumerate() {
                for (v, var) in self.variables.iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        name, var, lead, table.rmse[k][v], table.acc[k][v], table.relative[k][v]
                    ));
                }
            }
        }
        out
    }

    /// One row per (source, variable, lead, degree): mean energy spectra of
    /// the model forecasts and the matching truth pool.
    pub fn spectra_csv(&self) -> String {
        let mut out = String::from("source,variable,lead_hours,degree,energy\n");
        for (name, table) in [("model", &self.spectra_model), ("truth", &self.spectra_truth)] {
            for (k, lead) in self.lead_hours.iter().enumerate() {
                for (v, var) in self.variables.iter().enumerate() {
                    for (n, e) in table[k][v].iter().enumerate() {
                        out.push_str(&format!("{name},{var},{lead},{n},{e}\n"));
                    }
                }
            }
        }
        out
    }
}

/// Pooled anomaly-correlation accumulator.
#[derive(Clone, Default)]
struct AccPool {
    num: f64,
    f2: f64,
    t2: f64,
}

impl AccPool {
    fn add(&mut self, f: &[f64], t: &[f64], clim: &[f64], weights: &MetricWeights, nlon: usize) {
        for i in 0..weights.nlat() {
            let wi = weights.w[i];
            for j in 0..nlon {
                let fp = f[i * nlon + j] - clim[i * nlon + j];
                let tp = t[i * nlon + j] - clim[i * nlon + j];
                self.num += wi * fp * tp;
                self.f2 += wi * fp * fp;
                self.t2 += wi * tp * tp;
            }
        }
    }

    /// NaN when either anomaly variance is zero (constant pool).
    fn value(&self) -> f64 {
        if self.f2 == 0.0 || self.t2 == 0.0 {
            f64::NAN
        } else {
            self.num / (self.f2 * self.t2).sqrt()
        }
    }
}

struct Accum {
    rmse: Vec<Vec<f64>>,
    rel: Vec<Vec<f64>>,
    acc: Vec<Vec<AccPool>>,
    count: Vec<usize>,
}

impl Accum {
    fn new(leads: usize, vars: usize) -> Self {
        Accum {
            rmse: vec![vec![0.0; vars]; leads],
            rel: vec![vec![0.0; vars]; leads],
            acc: vec![vec![AccPool::default(); vars]; leads],
            count: vec![0; leads],
        }
    }

    fn add(
        &mut self,
        k: usize,
        pred: &GridField,
        truth: &GridField,
        clim: &GridField,
        weights: &MetricWeights,
    ) -> Result<()> {
        let per_var_rmse = rmse(
            std::slice::from_ref(pred),
            std::slice::from_ref(truth),
            weights,
        )?;
        let per_var_rel = relative_loss_per_variable(pred, truth, weights)?;
        let nlon = pred.grid().nlon();
        for v in 0..pred.channels() {
            self.rmse[k][v] += per_var_rmse[v];
            self.rel[k][v] += per_var_rel[v];
            self.acc[k][v].add(
                pred.channel(v),
                truth.channel(v),
                clim.channel(v),
                weights,
                nlon,
            );
        }
        self.count[k] += 1;
        Ok(())
    }

    fn finish(self) -> LeadMetrics {
        let mean = |table: Vec<Vec<f64>>, count: &[usize]| -> Vec<Vec<f64>> {
            table
                .into_iter()
                .zip(count)
                .map(|(row, &c)| {
                    row.into_iter()
                        .map(|s| if c == 0 { f64::NAN } else { s / c as f64 })
                        .collect()
                })
                .collect()
        };
        LeadMetrics {
            rmse: mean(self.rmse, &self.count),
            relative: mean(self.rel, &self.count),
            acc: self
                .acc
                .into_iter()
                .map(|row| row.into_iter().map(|p| p.value()).collect())
                .collect(),
        }
    }
}

fn dataset_field(dataset: &TrajectoryDataset, member: usize, time: usize) -> Result<GridField> {
    Ok(GridField::from_values(
        Arc::clone(&dataset.grid),
        dataset.channels(),
        dataset.snapshot(member, time).to_vec(),
    )?)
}

/// Roll `model` autoregressively from every start index that admits
/// `max_steps` verifiable leads, over every member, and verify each lead
/// against the stored truth: latitude-weighted RMSE, pooled ACC against the
/// dataset climatology, geometric relative loss, and degree spectra of
/// forecast and truth. The persistence baseline is scored on the same pool.
/// A forecast that goes non-finite is recorded and skipped from later leads;
/// evaluation continues with the remaining forecasts.
pub fn evaluate_rollout(
    model: &dyn Forecaster,
    dataset: &TrajectoryDataset,
    max_steps: usize,
    sht: &Sht,
    standardizer: &Standardizer,
) -> Result<EvalReport> {
    if max_steps == 0 {
        return Err(TrainError::InvalidArgument(
            "rollout evaluation needs at least one lead step".into(),
        ));
    }
    if dataset.num_times() < max_steps + 1 {
        return Err(TrainError::InvalidArgument(format!(
            "dataset with {} snapshots cannot verify {}-step rollouts",
            dataset.num_times(),
            max_steps
        )));
    }
    let channels = dataset.channels();
    let mc = model.config();
    if mc.in_channels != channels || mc.out_channels != channels {
        return Err(TrainError::InvalidArgument(format!(
            "model maps {} -> {} channels but the dataset has {}",
            mc.in_channels, mc.out_channels, channels
        )));
    }
    if mc.nlat != dataset.grid.nlat() || mc.nlon != dataset.grid.nlon() {
        return Err(TrainError::InvalidArgument(format!(
            "model expects a {}x{} grid but the dataset is {}x{}",
            mc.nlat,
            mc.nlon,
            dataset.grid.nlat(),
            dataset.grid.nlon()
        )));
    }
    if !sht.grid().same_geometry(&dataset.grid) {
        return Err(TrainError::InvalidArgument(
            "the spectra transform must live on the dataset grid".into(),
        ));
    }
    if standardizer.channels() != channels {
        return Err(TrainError::InvalidArgument(format!(
            "standardizer has {} channels but the dataset has {}",
            standardizer.channels(),
            channels
        )));
    }

    let weights = latitude_weights(&dataset.grid);
    let (h, w) = (dataset.grid.nlat(), dataset.grid.nlon());
    let field_len = h * w;
    let degrees = sht.trunc().n_max() + 1;

    // Climatology over the whole truth pool: every member, every snapshot.
    let pool: Vec<GridField> = (0..dataset.members)
        .flat_map(|m| (0..dataset.num_times()).map(move |t| (m, t)))
        .map(|(m, t)| dataset_field(dataset, m, t))
        .collect::<Result<_>>()?;
    let clim = climatology(&pool)?;

    let starts: Vec<usize> = (0..dataset.num_times() - max_steps).collect();
    let total_forecasts = dataset.members * starts.len();

    let mut model_acc = Accum::new(max_steps, channels);
    let mut pers_acc = Accum::new(max_steps, channels);
    let mut spec_model = vec![vec![vec![0.0; degrees]; channels]; max_steps];
    let mut spec_truth = vec![vec![vec![0.0; degrees]; channels]; max_steps];
    let mut nonfinite = Vec::new();

    for m in 0..dataset.members {
        for &t0 in &starts {
            let x0 = dataset_field(dataset, m, t0)?;

            // Persistence never leaves the finite range; score all leads.
            for k in 1..=max_steps {
                let truth = dataset_field(dataset, m, t0 + k)?;
                pers_acc.add(k - 1, &x0, &truth, &clim, &weights)?;
            }

            // Model rollout in standardized space.
            let mut buf = x0.values().to_vec();
            standardizer.apply(&mut buf, field_len)?;
            let mut cur = Tensor::constant(TensorData::new(vec![1, channels, h, w], buf)?);
            for k in 1..=max_steps {
                let mut tape = Tape::disabled();
                let y = match model.forward(&mut tape, &cur) {
                    Ok(y) => y,
                    Err(ModelError::NonFinite { .. }) => {
                        nonfinite.push(NonFiniteEvent {
                            member: m,
                            start: t0,
                            step: k,
                        });
                        break;
                    }
                    Err(e) => return Err(e.into()),
                };
                if !y.values().iter().all(|v| v.is_finite()) {
                    nonfinite.push(NonFiniteEvent {
                        member: m,
                        start: t0,
                        step: k,
                    });
                    break;
                }
                let mut phys = y.values().to_vec();
                standardizer.invert(&mut phys, field_len)?;
                let pred = GridField::from_values(Arc::clone(&dataset.grid), channels, phys)?;
                let truth = dataset_field(dataset, m, t0 + k)?;
                model_acc.add(k - 1, &pred, &truth, &clim, &weights)?;
                let sp = degree_spectrum(&sht.forward(&pred)?);
                let st = degree_spectrum(&sht.forward(&truth)?);
                for v in 0..channels {
                    for n in 0..degrees {
                        spec_model[k - 1][v][n] += sp[v][n];
                        spec_truth[k - 1][v][n] += st[v][n];
                    }
                }
                cur = y.detached();
            }
        }
    }

    let counts = model_acc.count.clone();
    for k in 0..max_steps {
        let c = counts[k];
        for v in 0..channels {
            for n in 0..degrees {
                if c == 0 {
                    spec_model[k][v][n] = f64::NAN;
                    spec_truth[k][v][n] = f64::NAN;
                } else {
                    spec_model[k][v][n] /= c as f64;
                    spec_truth[k][v][n] /= c as f64;
                }
            }
        }
    }

    let lead_hours: Vec<f64> = (1..=max_steps)
        .map(|k| k as f64 * dataset.snapshot_interval_s / 3600.0)
        .collect();
    debug_assert!(lead_hours.windows(2).all(|p| p[0] < p[1]));

    Ok(EvalReport {
        model_name: model.kind().to_string(),
        variables: dataset.channel_names.clone(),
        lead_hours,
        model: model_acc.finish(),
        persistence: pers_acc.finish(),
        spectra_model: spec_model,
        spectra_truth: spec_truth,
        forecast_counts: counts,
        total_forecasts,
        nonfinite,
    })
}
