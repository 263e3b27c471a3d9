//! Fetch events and the two reported metrics.

use crate::dataset::ContentId;
use crate::drl::Tier;
use crate::error::{Error, Result};
use crate::mobility::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchEvent {
    pub round: u32,
    pub vehicle: VehicleId,
    pub content: ContentId,
    pub tier: Tier,
    pub delay_s: f64,
}

/// Percentage of fetches served by the local RSU; 0 without events.
pub fn cache_hit_ratio(events: &[FetchEvent]) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    let local = events.iter().filter(|e| e.tier == Tier::Local).count();
    100.0 * local as f64 / events.len() as f64
}

/// Total fetch delay divided by the number of vehicles.
pub fn avg_transmission_delay(events: &[FetchEvent], n_vehicles: usize) -> Result<f64> {
    if n_vehicles == 0 {
        return Err(Error::Domain("average delay over zero vehicles".into()));
    }
    Ok(events.iter().map(|e| e.delay_s).sum::<f64>() / n_vehicles as f64)
}

/// Mean delay per fetch; 0 without events.
pub fn avg_delay_per_request(events: &[FetchEvent]) -> f64 {
    if events.is_empty() {
        return 0.0;
    }
    events.iter().map(|e| e.delay_s).sum::<f64>() / events.len() as f64
}
