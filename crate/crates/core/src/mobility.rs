//! Vehicle population, velocity and residency model for one RSU coverage
//! segment of a one-directional road.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as StdNormal};
use statrs::function::erf::erf;

use crate::autoencoder::AeGradient;
use crate::channel::LinkRates;
use crate::error::{Error, Result};

/// km/h to m/s.
pub const KMH_TO_MPS: f64 = 1000.0 / 3600.0;

/// How vehicles enter the coverage segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrivals {
    /// Mean number of vehicles per km of road.
    Density { per_km: f64 },
    /// Poisson arrival rate at the segment entrance, vehicles per second.
    Rate { per_s: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityParams {
    pub mu_kmh: f64,
    pub sigma_kmh: f64,
    pub u_min_kmh: f64,
    pub u_max_kmh: f64,
    /// Coverage length of the local RSU in meters.
    pub coverage_m: f64,
    pub arrivals: Arrivals,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self {
            mu_kmh: 55.0,
            sigma_kmh: 2.5,
            u_min_kmh: 50.0,
            u_max_kmh: 60.0,
            coverage_m: 1000.0,
            arrivals: Arrivals::Density { per_km: 15.0 },
        }
    }
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_min_kmh < self.u_max_kmh) {
            return Err(Error::Config(format!(
                "mobility: u_min ({}) must be below u_max ({})",
                self.u_min_kmh, self.u_max_kmh
            )));
        }
        if !(self.sigma_kmh > 0.0) {
            return Err(Error::Config("mobility: sigma must be positive".into()));
        }
        if !(self.coverage_m > 0.0) {
            return Err(Error::Config("mobility: coverage length must be positive".into()));
        }
        if self.u_min_kmh <= 0.0 {
            return Err(Error::Config("mobility: u_min must be positive".into()));
        }
        let rate = match self.arrivals {
            Arrivals::Density { per_km } => per_km,
            Arrivals::Rate { per_s } => per_s,
        };
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::Config("mobility: density / arrival rate must be >= 0".into()));
        }
        Ok(())
    }

    fn standardized_bounds(&self) -> (f64, f64) {
        (
            (self.u_min_kmh - self.mu_kmh) / self.sigma_kmh,
            (self.u_max_kmh - self.mu_kmh) / self.sigma_kmh,
        )
    }

    /// Mean of the truncated velocity distribution, km/h.
    pub fn truncated_mean_kmh(&self) -> f64 {
        let std = StdNormal::standard();
        let (a, b) = self.standardized_bounds();
        let z = std.cdf(b) - std.cdf(a);
        self.mu_kmh + self.sigma_kmh * (std.pdf(a) - std.pdf(b)) / z
    }

    /// Variance of the truncated velocity distribution, (km/h)^2.
    pub fn truncated_variance_kmh2(&self) -> f64 {
        let std = StdNormal::standard();
        let (a, b) = self.standardized_bounds();
        let z = std.cdf(b) - std.cdf(a);
        let shift = (std.pdf(a) - std.pdf(b)) / z;
        self.sigma_kmh.powi(2) * (1.0 + (a * std.pdf(a) - b * std.pdf(b)) / z - shift * shift)
    }
}

/// Density of the truncated Gaussian velocity law at `u_kmh`.
///
/// Normalized so that it integrates to one over `[u_min, u_max]`.
pub fn truncated_gaussian_pdf(u_kmh: f64, params: &MobilityParams) -> f64 {
    if u_kmh < params.u_min_kmh || u_kmh > params.u_max_kmh {
        return 0.0;
    }
    let s = params.sigma_kmh;
    let scale = s * std::f64::consts::SQRT_2;
    let mass = 0.5
        * (erf((params.u_max_kmh - params.mu_kmh) / scale)
            - erf((params.u_min_kmh - params.mu_kmh) / scale));
    let kernel = (-(u_kmh - params.mu_kmh).powi(2) / (2.0 * s * s)).exp();
    kernel / ((2.0 * std::f64::consts::PI * s * s).sqrt() * mass)
}

/// Cumulative distribution of the truncated velocity law.
pub fn truncated_gaussian_cdf(u_kmh: f64, params: &MobilityParams) -> f64 {
    if u_kmh <= params.u_min_kmh {
        return 0.0;
    }
    if u_kmh >= params.u_max_kmh {
        return 1.0;
    }
    let scale = params.sigma_kmh * std::f64::consts::SQRT_2;
    let lo = erf((params.u_min_kmh - params.mu_kmh) / scale);
    let hi = erf((params.u_max_kmh - params.mu_kmh) / scale);
    (erf((u_kmh - params.mu_kmh) / scale) - lo) / (hi - lo)
}

/// Draws a velocity in km/h by rejection against the untruncated Gaussian.
pub fn sample_speed_kmh<R: Rng + ?Sized>(rng: &mut R, params: &MobilityParams) -> f64 {
    let normal = Normal::new(params.mu_kmh, params.sigma_kmh).expect("sigma validated positive");
    loop {
        let u = normal.sample(rng);
        if u >= params.u_min_kmh && u <= params.u_max_kmh {
            return u;
        }
    }
}

/// Draws a velocity and returns it in m/s.
pub fn sample_velocity<R: Rng + ?Sized>(rng: &mut R, params: &MobilityParams) -> f64 {
    sample_speed_kmh(rng, params) * KMH_TO_MPS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub u64);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct VehicleState {
    pub id: VehicleId,
    /// Distance traversed inside the local RSU coverage, meters.
    pub position_m: f64,
    /// Velocity for the current round, m/s.
    pub velocity_mps: f64,
    /// Last local gradient of a failed upload, applied in the next round.
    pub delayed_gradient: Option<AeGradient>,
    /// Channel rates for the current round; drawn once per round.
    pub links: Option<LinkRates>,
}

impl VehicleState {
    pub fn new(id: VehicleId, position_m: f64, velocity_mps: f64) -> Self {
        Self {
            id,
            position_m,
            velocity_mps,
            delayed_gradient: None,
            links: None,
        }
    }

    /// Handle of the local data partition carried by this vehicle.
    /// Vehicles receive partitions round-robin in order of arrival.
    pub fn dataset_slot(&self, partitions: usize) -> usize {
        (self.id.0 % partitions.max(1) as u64) as usize
    }
}

/// Monotone source of fresh vehicle ids.
#[derive(Debug, Clone, Default)]
pub struct IdSource {
    next: u64,
}

impl IdSource {
    pub fn next_id(&mut self) -> VehicleId {
        let id = VehicleId(self.next);
        self.next += 1;
        id
    }
}

/// Expected number of rounds a vehicle entering at position 0 spends in
/// coverage, with its velocity re-drawn every round.
///
/// Sums `P(S_n < L)` over the partial sums of per-round distances. The first
/// term is exact; later terms use the Gaussian approximation of the sum,
/// which is tight because the per-round distance is itself near-Gaussian.
pub fn expected_rounds_in_coverage(params: &MobilityParams, round_duration_s: f64) -> f64 {
    let step_kmh_to_m = KMH_TO_MPS * round_duration_s;
    let mean = params.truncated_mean_kmh() * step_kmh_to_m;
    let var = params.truncated_variance_kmh2() * step_kmh_to_m * step_kmh_to_m;
    let l = params.coverage_m;
    let mut total = 1.0 + truncated_gaussian_cdf(l / step_kmh_to_m, params);
    for n in 2.. {
        let nf = n as f64;
        let p = StdNormal::new(nf * mean, (nf * var).sqrt())
            .map(|d| d.cdf(l))
            .unwrap_or(if nf * mean < l { 1.0 } else { 0.0 });
        total += p;
        if p < 1e-12 || n > 100_000 {
            break;
        }
    }
    total
}

/// Stationary mean population of the coverage segment.
pub fn mean_population(params: &MobilityParams, round_duration_s: f64) -> f64 {
    match params.arrivals {
        Arrivals::Density { per_km } => per_km * params.coverage_m / 1000.0,
        Arrivals::Rate { per_s } => {
            per_s * round_duration_s * expected_rounds_in_coverage(params, round_duration_s)
        }
    }
}

/// Mean number of new arrivals per round that keeps the population stationary.
pub fn arrivals_per_round(params: &MobilityParams, round_duration_s: f64) -> f64 {
    match params.arrivals {
        Arrivals::Rate { per_s } => per_s * round_duration_s,
        Arrivals::Density { .. } => {
            mean_population(params, round_duration_s)
                / expected_rounds_in_coverage(params, round_duration_s)
        }
    }
}

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d: Poisson<f64> = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// Produces the population of the next round.
///
/// With `previous = None` the segment is populated from its stationary law: a
/// Poisson count with vehicles spread uniformly over the coverage. Otherwise
/// survivors advance by one round of travel, those leaving coverage are
/// dropped, every survivor re-draws its velocity, and a Poisson number of new
/// vehicles enters at position 0. Survivors keep their delayed gradients;
/// channel rates are cleared for the new round.
pub fn spawn_round<R: Rng + ?Sized>(
    rng: &mut R,
    params: &MobilityParams,
    round_duration_s: f64,
    previous: Option<Vec<VehicleState>>,
    ids: &mut IdSource,
) -> Vec<VehicleState> {
    let l = params.coverage_m;
    match previous {
        None => {
            let count = poisson(rng, mean_population(params, round_duration_s));
            (0..count)
                .map(|_| {
                    let position = rng.random_range(0.0..l);
                    let velocity = sample_velocity(rng, params);
                    VehicleState::new(ids.next_id(), position, velocity)
                })
                .collect()
        }
        Some(prev) => {
            let mut next: Vec<VehicleState> = prev
                .into_iter()
                .filter_map(|mut v| {
                    v.position_m += v.velocity_mps * round_duration_s;
                    (v.position_m < l).then_some(v)
                })
                .collect();
            for v in &mut next {
                v.velocity_mps = sample_velocity(rng, params);
                v.links = None;
            }
            let arrivals = poisson(rng, arrivals_per_round(params, round_duration_s));
            for _ in 0..arrivals {
                let velocity = sample_velocity(rng, params);
                next.push(VehicleState::new(ids.next_id(), 0.0, velocity));
            }
            next
        }
    }
}

/// Time until the vehicle leaves coverage, seconds.
pub fn staying_time(v: &VehicleState, coverage_m: f64) -> Result<f64> {
    if !(v.velocity_mps > 0.0) {
        return Err(Error::Domain(format!(
            "staying time needs a positive velocity, {} has {}",
            v.id, v.velocity_mps
        )));
    }
    Ok((coverage_m - v.position_m) / v.velocity_mps)
}

/// Indices of the vehicles whose staying time strictly exceeds the training
/// plus inference budget.
pub fn select_participants(
    vehicles: &[VehicleState],
    coverage_m: f64,
    t_training_s: f64,
    t_inference_s: f64,
) -> Vec<usize> {
    let budget = t_training_s + t_inference_s;
    vehicles
        .iter()
        .enumerate()
        .filter(|(_, v)| matches!(staying_time(v, coverage_m), Ok(t) if t > budget))
        .map(|(i, _)| i)
        .collect()
}
