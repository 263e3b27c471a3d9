//! Browser bindings for three small views of the simulator: the vehicle
//! speed law, link rates along the road, and DQN placement learning on a
//! toy request trace.
//!
//! Each operation has a plain Rust function (tested natively) and a thin
//! `wasm_bindgen` wrapper returning a flat `Float64Array`.

use rand::Rng;
use wasm_bindgen::prelude::*;

use coopcache::channel::{
    distance, shannon_rate, ChannelParams, Endpoint, Geometry, Link, LinkRates,
};
use coopcache::dataset::ContentId;
use coopcache::drl::{run_optimization, DqnConfig, Request, RewardParams};
use coopcache::mobility::{sample_speed_kmh, truncated_gaussian_pdf, MobilityParams};
use coopcache::popularity::PopularContents;
use coopcache::rng::{stream, Purpose};

/// Speed density against a sampled histogram.
///
/// Returns `bins` rows of `[bin center, density, histogram density]`.
pub fn speed_histogram(
    mu: f64,
    sigma: f64,
    u_min: f64,
    u_max: f64,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<Vec<[f64; 3]>, String> {
    let params = MobilityParams {
        mu_kmh: mu,
        sigma_kmh: sigma,
        u_min_kmh: u_min,
        u_max_kmh: u_max,
        ..MobilityParams::default()
    };
    params.validate().map_err(|e| e.to_string())?;
    if bins == 0 || samples == 0 {
        return Err("bins and samples must be positive".into());
    }
    let width = (u_max - u_min) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut rng = stream(seed, Purpose::Mobility, 0);
    for _ in 0..samples {
        let u = sample_speed_kmh(&mut rng, &params);
        counts[(((u - u_min) / width) as usize).min(bins - 1)] += 1;
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let center = u_min + (i as f64 + 0.5) * width;
            [
                center,
                truncated_gaussian_pdf(center, &params),
                n as f64 / (samples as f64 * width),
            ]
        })
        .collect())
}

/// Shadowing-free V2R and V2B rates at `points` positions along the
/// coverage segment, plus one shadowed draw of each.
///
/// Rows are `[position m, V2R mean, V2B mean, V2R draw, V2B draw]`, rates in bits/s.
pub fn rate_profile(
    coverage_m: f64,
    rsu_offset_m: f64,
    mbs_offset_m: f64,
    points: usize,
    seed: u64,
) -> Result<Vec<[f64; 5]>, String> {
    if !coverage_m.is_finite() || coverage_m <= 0.0 || points < 2 {
        return Err("need a positive coverage and at least two points".into());
    }
    let geometry = Geometry {
        coverage_m,
        rsu_offset_m,
        mbs_offset_m,
    };
    let params = ChannelParams::default();
    let rate = |link: Link, d: f64, shadow_db: f64| {
        let gain = 10f64.powf(-(params.path_loss(link).loss_db(d) + shadow_db) / 10.0);
        shannon_rate(gain, params.tx_power_dbm(link), &params)
    };
    let mut rng = stream(seed, Purpose::Shadowing, 0);
    let mut normal = || {
        // Box-Muller keeps this crate free of a distribution dependency.
        let (u1, u2): (f64, f64) = (1.0 - rng.random::<f64>(), rng.random());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let x = coverage_m * i as f64 / (points - 1) as f64;
        let d_rsu = distance(Endpoint::LocalRsu, x, &geometry).max(1e-3);
        let d_mbs = distance(Endpoint::Mbs, x, &geometry).max(1e-3);
        let s_rsu = params.path_loss(Link::V2R).shadow_sigma_db * normal();
        let s_mbs = params.path_loss(Link::V2B).shadow_sigma_db * normal();
        rows.push([
            x,
            rate(Link::V2R, d_rsu, 0.0),
            rate(Link::V2B, d_mbs, 0.0),
            rate(Link::V2R, d_rsu, s_rsu),
            rate(Link::V2B, d_mbs, s_mbs),
        ]);
    }
    Ok(rows)
}

/// Trains the placement DQN on a toy trace: `popular` candidate contents,
/// `vehicles` requesters with Zipf-like preferences, local capacity `capacity`.
///
/// Rows are `[episode, mean reward, local hit rate, relocation fraction]`.
pub fn placement_curve(
    popular: usize,
    capacity: usize,
    vehicles: usize,
    episodes: usize,
    seed: u64,
) -> Result<Vec<[f64; 4]>, String> {
    if capacity == 0 || popular < 2 * capacity || vehicles == 0 || episodes == 0 {
        return Err("need capacity >= 1, popular >= 2 * capacity, vehicles and episodes >= 1".into());
    }
    let mut rng = stream(seed, Purpose::Requests, 0);
    let weights: Vec<f64> = (1..=popular).map(|r| 1.0 / r as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut requests = Vec::new();
    for v in 0..vehicles {
        for _ in 0..5 {
            let mut u = rng.random::<f64>() * total;
            let pick = weights
                .iter()
                .position(|w| {
                    u -= w;
                    u <= 0.0
                })
                .unwrap_or(popular - 1);
            requests.push(Request {
                vehicle: v,
                content: ContentId(pick),
            });
        }
    }
    let rates: Vec<LinkRates> = (0..vehicles)
        .map(|_| LinkRates {
            rsu_bps: rng.random_range(2e5..4e6),
            mbs_bps: rng.random_range(1e4..5e5),
        })
        .collect();
    let cfg = DqnConfig {
        episodes,
        ..DqnConfig::default()
    };
    // Popularity order deliberately differs from request order so the
    // learner has something to discover.
    let order = (0..popular).rev().map(ContentId);
    let out = run_optimization(
        &PopularContents::from_ids(order),
        capacity,
        &requests,
        &rates,
        &cfg,
        &RewardParams::default(),
        &mut stream(seed, Purpose::Drl, 0),
    )
    .map_err(|e| e.to_string())?;
    Ok(out
        .curves
        .iter()
        .map(|e| [e.episode as f64, e.mean_reward, e.hit_rate, e.relocate_frac])
        .collect())
}

fn flatten<const N: usize>(rows: Vec<[f64; N]>) -> Vec<f64> {
    rows.into_iter().flatten().collect()
}

#[wasm_bindgen(js_name = speedHistogram)]
pub fn speed_histogram_js(
    mu: f64,
    sigma: f64,
    u_min: f64,
    u_max: f64,
    samples: usize,
    bins: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    speed_histogram(mu, sigma, u_min, u_max, samples, bins, seed as u64)
        .map(flatten)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rateProfile)]
pub fn rate_profile_js(
    coverage_m: f64,
    rsu_offset_m: f64,
    mbs_offset_m: f64,
    points: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    rate_profile(coverage_m, rsu_offset_m, mbs_offset_m, points, seed as u64)
        .map(flatten)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = placementCurve)]
pub fn placement_curve_js(
    popular: usize,
    capacity: usize,
    vehicles: usize,
    episodes: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    placement_curve(popular, capacity, vehicles, episodes, seed as u64)
        .map(flatten)
        .map_err(|e| JsError::new(&e))
}
