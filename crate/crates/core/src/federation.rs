//! One federated round: participant selection, local training, and either
//! first-arrival asynchronous aggregation or synchronous FedAvg.

use log::{debug, info};
use rand::Rng;

use crate::autoencoder::{vehicle_update, AeModel, TrainConfig};
use crate::dataset::LocalData;
use crate::error::{Error, Result};
use crate::mobility::{select_participants, VehicleId, VehicleState};
use crate::rng::{round_vehicle_index, stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlMode {
    /// Aggregate only the first model received.
    Async,
    /// Wait for every participant and average.
    FedAvg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregationMode {
    /// `(1 - gamma) * prev + gamma * local`.
    Convex,
    /// `prev + gamma * local`, additive and unbounded.
    Additive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlConfig {
    pub train: TrainConfig,
    pub mode: FlMode,
    pub aggregation: AggregationMode,
    /// Weight of the remaining-distance term.
    pub mu1: f64,
    /// Weight of the channel-rate term.
    pub mu2: f64,
    pub t_training_s: f64,
    pub t_inference_s: f64,
    /// Upper bound of the uniform completion jitter, as a fraction of
    /// `t_training_s`.
    pub jitter_frac: f64,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            mode: FlMode::Async,
            aggregation: AggregationMode::Convex,
            mu1: 0.5,
            mu2: 0.5,
            t_training_s: 2.0,
            t_inference_s: 0.5,
            jitter_frac: 0.1,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.mu1 < 0.0 || self.mu2 < 0.0 || (self.mu1 + self.mu2 - 1.0).abs() > 1e-9 {
            return Err(Error::Config("fl: mu1 and mu2 must be >= 0 and sum to 1".into()));
        }
        if !(self.t_training_s > 0.0) || self.t_inference_s < 0.0 || self.jitter_frac < 0.0 {
            return Err(Error::Config("fl: invalid timing parameters".into()));
        }
        Ok(())
    }
}

/// `chi = mu1 * (L - P) / L + mu2 * R / max R` for a vehicle at `position_m`
/// holding V2R rate `rate_bps`, against all selected vehicles' `rates`.
pub fn aggregation_weight(
    position_m: f64,
    rate_bps: f64,
    rates: &[f64],
    coverage_m: f64,
    mu1: f64,
    mu2: f64,
) -> Result<f64> {
    let max_rate = rates.iter().copied().fold(0.0, f64::max);
    if !(max_rate > 0.0) {
        return Err(Error::DegenerateInput("all V2R rates are zero".into()));
    }
    let remaining = ((coverage_m - position_m) / coverage_m).clamp(0.0, 1.0);
    Ok(mu1 * remaining + mu2 * (rate_bps / max_rate).clamp(0.0, 1.0))
}

/// Folds one local model into the global model with weight
/// `gamma = (d_i / d) * chi`.
pub fn async_aggregate(
    prev: &AeModel,
    local: &AeModel,
    d_i: usize,
    d: usize,
    chi: f64,
    mode: AggregationMode,
) -> Result<AeModel> {
    if !prev.params.same_shape(&local.params) {
        return Err(Error::dimension(
            "local model",
            prev.params.param_count(),
            local.params.param_count(),
        ));
    }
    if d_i == 0 || d_i > d {
        return Err(Error::Domain(format!("data sizes need 0 < d_i <= d, got {d_i}/{d}")));
    }
    let gamma = d_i as f64 / d as f64 * chi;
    let mut out = prev.clone();
    match mode {
        AggregationMode::Convex => {
            out.params.scale(1.0 - gamma);
            out.params.add_scaled(gamma, &local.params)?;
        }
        AggregationMode::Additive => out.params.add_scaled(gamma, &local.params)?,
    }
    Ok(out)
}

/// Data-size-weighted average of local models.
pub fn fedavg_aggregate(locals: &[(&AeModel, usize)]) -> Result<AeModel> {
    let Some((first, _)) = locals.first() else {
        return Err(Error::Domain("FedAvg over no models".into()));
    };
    let total: usize = locals.iter().map(|(_, d)| d).sum();
    if total == 0 {
        return Err(Error::Domain("FedAvg with zero total data".into()));
    }
    let mut out = (*first).clone();
    out.params.scale(0.0);
    for (m, d) in locals {
        out.params.add_scaled(*d as f64 / total as f64, &m.params)?;
    }
    Ok(out)
}

/// Time at which a vehicle's upload reaches the RSU: training time
/// proportional to its data share, uniform jitter, and the upload itself.
pub fn completion_time<R: Rng + ?Sized>(
    rng: &mut R,
    d_i: usize,
    mean_d: f64,
    model_bits: f64,
    rsu_bps: f64,
    cfg: &FlConfig,
) -> f64 {
    let jitter = if cfg.jitter_frac > 0.0 {
        rng.random_range(0.0..cfg.jitter_frac * cfg.t_training_s)
    } else {
        0.0
    };
    let upload = if rsu_bps > 0.0 { model_bits / rsu_bps } else { f64::INFINITY };
    cfg.t_training_s * d_i as f64 / mean_d + jitter + upload
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub new_global: AeModel,
    /// Async mode only.
    pub winner: Option<VehicleId>,
    pub stragglers: Vec<VehicleId>,
    /// Async mode only.
    pub chi: Option<f64>,
    /// `(vehicle, d_i)` for every vehicle that trained this round.
    pub data_sizes: Vec<(VehicleId, usize)>,
    /// Sum of `d_i` over the vehicles that trained.
    pub total_data: usize,
    pub completion_times: Vec<(VehicleId, f64)>,
    /// Winner's completion time (async) or the slowest participant's (FedAvg).
    pub wall_time_s: f64,
}

impl RoundOutcome {
    fn unchanged(global: &AeModel) -> Self {
        Self {
            new_global: global.clone(),
            winner: None,
            stragglers: Vec::new(),
            chi: None,
            data_sizes: Vec::new(),
            total_data: 0,
            completion_times: Vec::new(),
            wall_time_s: 0.0,
        }
    }
}

/// Runs one federated round over the vehicles in coverage.
///
/// `data[v.dataset_slot(data.len())]` is each vehicle's private data; every
/// vehicle must carry this round's link rates. Trainings are executed
/// sequentially with per-vehicle RNG streams, so the outcome does not depend
/// on execution order. Delayed gradients on `vehicles` are updated in place.
pub fn run_fl_round(
    global: &AeModel,
    vehicles: &mut [VehicleState],
    data: &[LocalData],
    cfg: &FlConfig,
    round: u32,
    seed: u64,
    coverage_m: f64,
) -> Result<RoundOutcome> {
    if data.is_empty() {
        return Err(Error::Config("federated round without local data".into()));
    }
    let selected = select_participants(vehicles, coverage_m, cfg.t_training_s, cfg.t_inference_s);
    if selected.is_empty() {
        info!("round {round}: no vehicle can finish training in coverage; global unchanged");
        return Ok(RoundOutcome::unchanged(global));
    }

    struct Trained {
        idx: usize,
        d_i: usize,
        update: crate::autoencoder::LocalUpdate,
        rsu_bps: f64,
    }
    let mut trained = Vec::with_capacity(selected.len());
    for &idx in &selected {
        let v = &vehicles[idx];
        let local = &data[v.dataset_slot(data.len())];
        let links = v
            .links
            .ok_or_else(|| Error::Domain(format!("vehicle {} has no link rates", v.id)))?;
        let mut rng = stream(seed, Purpose::LocalTraining, round_vehicle_index(round, v.id.0));
        let update = vehicle_update(
            global,
            &local.train_matrix,
            &cfg.train,
            round,
            v.delayed_gradient.as_ref(),
            &mut rng,
        )?;
        if let Some(update) = update {
            trained.push(Trained {
                idx,
                d_i: local.data_size(),
                update,
                rsu_bps: links.rsu_bps,
            });
        }
    }
    if trained.is_empty() {
        info!("round {round}: no participant had training data; global unchanged");
        return Ok(RoundOutcome::unchanged(global));
    }

    let total_data: usize = trained.iter().map(|t| t.d_i).sum();
    let mean_d = total_data as f64 / trained.len() as f64;
    let model_bits = global.size_bits();
    let times: Vec<f64> = trained
        .iter()
        .map(|t| {
            let id = vehicles[t.idx].id.0;
            let mut rng = stream(seed, Purpose::Completion, round_vehicle_index(round, id));
            completion_time(&mut rng, t.d_i, mean_d, model_bits, t.rsu_bps, cfg)
        })
        .collect();
    let data_sizes = trained.iter().map(|t| (vehicles[t.idx].id, t.d_i)).collect();
    let completion_times = trained
        .iter()
        .zip(&times)
        .map(|(t, &s)| (vehicles[t.idx].id, s))
        .collect();

    match cfg.mode {
        FlMode::Async => {
            // Earliest arrival wins; ties go to the lower vehicle id.
            let w = (0..trained.len())
                .min_by(|&a, &b| {
                    times[a]
                        .total_cmp(&times[b])
                        .then(vehicles[trained[a].idx].id.cmp(&vehicles[trained[b].idx].id))
                })
                .expect("nonempty");
            let rates: Vec<f64> = trained.iter().map(|t| t.rsu_bps).collect();
            let winner = &trained[w];
            let winner_id = vehicles[winner.idx].id;
            let chi = aggregation_weight(
                vehicles[winner.idx].position_m,
                winner.rsu_bps,
                &rates,
                coverage_m,
                cfg.mu1,
                cfg.mu2,
            )?;
            let new_global = async_aggregate(
                global,
                &winner.update.model,
                winner.d_i,
                total_data,
                chi,
                cfg.aggregation,
            )?;
            let mut stragglers = Vec::new();
            for (k, t) in trained.into_iter().enumerate() {
                let v = &mut vehicles[t.idx];
                if k == w {
                    v.delayed_gradient = None;
                } else {
                    stragglers.push(v.id);
                    v.delayed_gradient = Some(t.update.last_gradient);
                }
            }
            debug!("round {round}: winner {winner_id}, chi {chi:.4}, {} stragglers", stragglers.len());
            Ok(RoundOutcome {
                new_global,
                winner: Some(winner_id),
                stragglers,
                chi: Some(chi),
                data_sizes,
                total_data,
                completion_times,
                wall_time_s: times[w],
            })
        }
        FlMode::FedAvg => {
            let locals: Vec<(&AeModel, usize)> =
                trained.iter().map(|t| (&t.update.model, t.d_i)).collect();
            let new_global = fedavg_aggregate(&locals)?;
            for t in &trained {
                vehicles[t.idx].delayed_gradient = None;
            }
            Ok(RoundOutcome {
                new_global,
                winner: None,
                stragglers: Vec::new(),
                chi: None,
                data_sizes,
                total_data,
                completion_times,
                wall_time_s: times.iter().copied().fold(0.0, f64::max),
            })
        }
    }
}
