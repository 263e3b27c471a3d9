//! Closed-form V2R / V2B link model: log-distance path loss with log-normal
//! shadowing and Shannon-rate links, plus the fixed wired RSU-RSU hop.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::mobility::VehicleState;

/// Converts dBm to milliwatts. All power conversions go through here.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    /// Loss at 1 km, dB.
    pub intercept_db: f64,
    /// dB per decade of distance.
    pub slope: f64,
    pub shadow_sigma_db: f64,
}

impl PathLoss {
    pub const V2R: PathLoss = PathLoss {
        intercept_db: 103.8,
        slope: 20.9,
        shadow_sigma_db: 4.0,
    };
    pub const V2B: PathLoss = PathLoss {
        intercept_db: 128.1,
        slope: 37.6,
        shadow_sigma_db: 8.0,
    };

    /// Deterministic path loss at `d_m` meters, dB.
    pub fn loss_db(&self, d_m: f64) -> f64 {
        self.intercept_db + self.slope * (d_m / 1000.0).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    /// Vehicle to local RSU.
    V2R,
    /// Vehicle to macro base station.
    V2B,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    pub bandwidth_hz: f64,
    pub p_rsu_dbm: f64,
    pub p_mbs_dbm: f64,
    /// Total noise power over the band, dBm.
    pub noise_dbm: f64,
    pub wired_rate_bps: f64,
    pub v2r: PathLoss,
    pub v2b: PathLoss,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 540e3,
            p_rsu_dbm: 30.0,
            p_mbs_dbm: 43.0,
            noise_dbm: -114.0,
            wired_rate_bps: 15e6,
            v2r: PathLoss::V2R,
            v2b: PathLoss::V2B,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("channel: bandwidth must be positive".into()));
        }
        if !(self.wired_rate_bps > 0.0) {
            return Err(Error::Config("channel: wired rate must be positive".into()));
        }
        if self.v2r.shadow_sigma_db < 0.0 || self.v2b.shadow_sigma_db < 0.0 {
            return Err(Error::Config("channel: shadowing sigma must be >= 0".into()));
        }
        Ok(())
    }

    pub fn path_loss(&self, link: Link) -> &PathLoss {
        match link {
            Link::V2R => &self.v2r,
            Link::V2B => &self.v2b,
        }
    }

    pub fn tx_power_dbm(&self, link: Link) -> f64 {
        match link {
            Link::V2R => self.p_rsu_dbm,
            Link::V2B => self.p_mbs_dbm,
        }
    }
}

/// Placement of the local RSU and the MBS relative to the road segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub coverage_m: f64,
    pub rsu_offset_m: f64,
    pub mbs_offset_m: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            coverage_m: 1000.0,
            rsu_offset_m: 10.0,
            mbs_offset_m: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    LocalRsu,
    Mbs,
}

/// Distance from a vehicle at road position `position_m` to the endpoint.
/// Both endpoints sit abeam the middle of the coverage segment.
pub fn distance(endpoint: Endpoint, position_m: f64, geometry: &Geometry) -> f64 {
    let along = position_m - geometry.coverage_m / 2.0;
    let offset = match endpoint {
        Endpoint::LocalRsu => geometry.rsu_offset_m,
        Endpoint::Mbs => geometry.mbs_offset_m,
    };
    along.hypot(offset)
}

/// Linear power gain including one log-normal shadowing draw.
pub fn channel_gain<R: Rng + ?Sized>(
    rng: &mut R,
    d_m: f64,
    link: Link,
    params: &ChannelParams,
) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::Domain(format!("channel gain needs d > 0, got {d_m}")));
    }
    let pl = params.path_loss(link);
    let shadow = if pl.shadow_sigma_db > 0.0 {
        Normal::new(0.0, pl.shadow_sigma_db)
            .expect("finite sigma")
            .sample(rng)
    } else {
        0.0
    };
    Ok(10f64.powf(-(pl.loss_db(d_m) + shadow) / 10.0))
}

/// Shannon rate `B log2(1 + p h / noise)`, bits per second.
pub fn shannon_rate(gain: f64, tx_power_dbm: f64, params: &ChannelParams) -> f64 {
    let snr = dbm_to_mw(tx_power_dbm) * gain / dbm_to_mw(params.noise_dbm);
    params.bandwidth_hz * (1.0 + snr).log2()
}

/// Per-round rates of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRates {
    /// V2R rate, bits/s.
    pub rsu_bps: f64,
    /// V2B rate, bits/s.
    pub mbs_bps: f64,
}

/// Draws the vehicle's V2R and V2B rates for the round.
pub fn draw_link_rates<R: Rng + ?Sized>(
    rng: &mut R,
    vehicle: &VehicleState,
    params: &ChannelParams,
    geometry: &Geometry,
) -> Result<LinkRates> {
    let d_rsu = distance(Endpoint::LocalRsu, vehicle.position_m, geometry);
    let d_mbs = distance(Endpoint::Mbs, vehicle.position_m, geometry);
    let g_rsu = channel_gain(rng, d_rsu, Link::V2R, params)?;
    let g_mbs = channel_gain(rng, d_mbs, Link::V2B, params)?;
    Ok(LinkRates {
        rsu_bps: shannon_rate(g_rsu, params.p_rsu_dbm, params),
        mbs_bps: shannon_rate(g_mbs, params.p_mbs_dbm, params),
    })
}
