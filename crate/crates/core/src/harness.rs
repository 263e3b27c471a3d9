//! Round-by-round experiments over schemes, capacities and seeds.
//!
//! All schemes of one seed see the same vehicles, channels and requests:
//! every random draw comes from a stream keyed by the seed, and the scheme
//! only consumes the placement and training streams.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::{info, warn};

use crate::autoencoder::AeModel;
use crate::baselines::{cafr_no_drl, random_policy, CEpsGreedy, ThompsonSampling};
use crate::channel::{draw_link_rates, LinkRates};
use crate::config::{ExperimentConfig, Scheme};
use crate::dataset::{generate_requests, load_movielens_dir, partition, split_train_test, DataSource, Dataset, LocalData};
use crate::drl::{padded_popular, run_optimization, transmission_delay, CacheState, Optimization, Request};
use crate::error::{Error, Result};
use crate::federation::{run_fl_round, RoundOutcome};
use crate::metrics::{avg_delay_per_request, avg_transmission_delay, cache_hit_ratio, FetchEvent};
use crate::mobility::{mean_population, spawn_round, IdSource, VehicleState};
use crate::popularity::{aggregate_popular, predict_interested, reconstruct, PopularContents};
use crate::rng::{round_vehicle_index, stream, Purpose};
use crate::synth;

/// Hidden width used when none is configured.
const HIDDEN_FULL: usize = 100;
const HIDDEN_CAPPED: usize = 16;

/// The rating corpus after the optional catalog cap.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dataset: Dataset,
    pub capped: bool,
}

impl Corpus {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let full = match &cfg.data.source {
            DataSource::MovieLens(dir) => load_movielens_dir(dir)?,
            DataSource::Synthetic(spec) => synth::generate(spec)?,
        };
        Ok(Self::from_dataset(full, cfg.data.catalog_cap))
    }

    pub fn from_dataset(full: Dataset, cap: Option<usize>) -> Self {
        match cap {
            Some(n) if n < full.catalog.len() => Self {
                dataset: full.capped(n),
                capped: true,
            },
            _ => Self {
                dataset: full,
                capped: false,
            },
        }
    }

    pub fn catalog_size(&self) -> usize {
        self.dataset.catalog.len()
    }
}

/// Per-seed private data of every partition.
#[derive(Debug, Clone)]
pub struct Workload {
    pub catalog_size: usize,
    pub parts: Vec<LocalData>,
    pub hidden: usize,
}

impl Workload {
    pub fn prepare(corpus: &Corpus, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let ds = &corpus.dataset;
        let c = ds.catalog.len();
        let groups = partition(&ds.ratings, cfg.data.partitions, &mut stream(seed, Purpose::Partition, 0))?;
        let parts = groups
            .iter()
            .enumerate()
            .map(|(k, g)| {
                split_train_test(g, cfg.data.train_frac, c, &ds.users, &mut stream(seed, Purpose::Split, k as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        let hidden = cfg
            .ae
            .hidden
            .unwrap_or(if corpus.capped { HIDDEN_CAPPED } else { HIDDEN_FULL });
        Ok(Self {
            catalog_size: c,
            parts,
            hidden,
        })
    }

    pub fn initial_model(&self, cfg: &ExperimentConfig, seed: u64) -> AeModel {
        let mut m = AeModel::init(&mut stream(seed, Purpose::ModelInit, 0), self.catalog_size, self.hidden);
        m.hidden_act = cfg.ae.hidden_activation;
        m.output_act = cfg.ae.output_activation;
        m
    }
}

/// Metrics of one round of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub seed: u64,
    pub round: u32,
    pub scheme: Scheme,
    pub capacity: usize,
    pub density: f64,
    pub hit_ratio_pct: f64,
    pub avg_delay_s: f64,
    /// Wall time of the federated round; only for schemes that train.
    pub fl_round_time_s: Option<f64>,
    pub episodes_to_converge: Option<usize>,
    pub avg_delay_per_request_s: f64,
    pub vehicles: usize,
    pub requests: usize,
}

/// Everything that happened in one round, for callers that want more than
/// the summary metrics.
pub struct RoundDetail<'a> {
    pub round: u32,
    pub vehicles: &'a [VehicleState],
    pub rates: &'a [LinkRates],
    pub requests: &'a [Request],
    pub fl: Option<&'a RoundOutcome>,
    pub popular: Option<&'a PopularContents>,
    pub placement: &'a CacheState,
    pub optimization: Option<&'a Optimization>,
    pub events: &'a [FetchEvent],
}

enum SchemeState {
    None,
    Greedy(CEpsGreedy),
    Thompson(ThompsonSampling),
}

fn density_of(cfg: &ExperimentConfig) -> f64 {
    cfg.density()
        .unwrap_or_else(|| mean_population(&cfg.mobility, cfg.round_duration_s) * 1000.0 / cfg.mobility.coverage_m)
}

/// Popular contents predicted by every vehicle in coverage from its testing
/// rows and the current global model.
pub fn predict_popular(
    global: &AeModel,
    vehicles: &[VehicleState],
    parts: &[LocalData],
    cfg: &ExperimentConfig,
) -> Result<PopularContents> {
    let mut sets = Vec::with_capacity(vehicles.len());
    for v in vehicles {
        let local = &parts[v.dataset_slot(parts.len())];
        if local.test_matrix.n_rows() == 0 {
            continue;
        }
        let r_hat = reconstruct(global, &local.test_matrix)?;
        sets.push(predict_interested(
            v.id,
            &local.test_matrix,
            &r_hat,
            &local.test_info,
            cfg.popularity.m,
            cfg.popularity.k,
            cfg.f_c(),
        )?);
    }
    Ok(aggregate_popular(&sets, cfg.f_c()))
}

/// Runs `cfg.rounds` rounds of `cfg.scheme` for one seed.
pub fn run_seed(
    workload: &Workload,
    cfg: &ExperimentConfig,
    seed: u64,
    observer: &mut dyn FnMut(&RoundDetail),
) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    let c = cfg.capacity;
    let catalog = workload.catalog_size;
    if catalog < 2 * c {
        return Err(Error::Config(format!(
            "capacity {c} needs a catalog of at least {} contents, got {catalog}",
            2 * c
        )));
    }
    let fl_cfg = cfg.fl_config();
    let reward = cfg.reward_params();
    let coverage = cfg.mobility.coverage_m;
    let density = density_of(cfg);
    let mut global = workload.initial_model(cfg, seed);
    let mut state = match cfg.scheme {
        Scheme::CEps => SchemeState::Greedy(CEpsGreedy::new(catalog, cfg.ceps_eps)),
        Scheme::Thompson => SchemeState::Thompson(ThompsonSampling::new(catalog)),
        _ => SchemeState::None,
    };
    let mut ids = IdSource::default();
    let mut previous: Option<Vec<VehicleState>> = None;
    let mut records = Vec::with_capacity(cfg.rounds as usize);

    for round in 1..=cfg.rounds {
        let mut vehicles = spawn_round(
            &mut stream(seed, Purpose::Mobility, round as u64),
            &cfg.mobility,
            cfg.round_duration_s,
            previous.take(),
            &mut ids,
        );
        let mut rates = Vec::with_capacity(vehicles.len());
        for v in &mut vehicles {
            let mut rng = stream(seed, Purpose::Shadowing, round_vehicle_index(round, v.id.0));
            let r = draw_link_rates(&mut rng, v, &cfg.channel, &cfg.geometry)?;
            v.links = Some(r);
            rates.push(r);
        }
        let mut requests = Vec::new();
        for (i, v) in vehicles.iter().enumerate() {
            let local = &workload.parts[v.dataset_slot(workload.parts.len())];
            let mut rng = stream(seed, Purpose::Requests, round_vehicle_index(round, v.id.0));
            requests.extend(
                generate_requests(local, &mut rng, cfg.data.requests_per_vehicle)
                    .into_iter()
                    .map(|content| Request { vehicle: i, content }),
            );
        }

        let mut placement_rng = stream(seed, Purpose::Placement, round as u64);
        let mut fl_outcome = None;
        let mut popular = None;
        let mut optimization = None;
        let placement = match cfg.scheme {
            Scheme::Random => random_policy(catalog, c, &mut placement_rng)?,
            Scheme::CEps => match &state {
                SchemeState::Greedy(g) => g.place(c, &mut placement_rng)?.0,
                _ => unreachable!("greedy state"),
            },
            Scheme::Thompson => match &state {
                SchemeState::Thompson(t) => t.place(c, &mut placement_rng)?,
                _ => unreachable!("thompson state"),
            },
            Scheme::Cafr | Scheme::FedAvgCafr | Scheme::CafrNoDrl => {
                let outcome = run_fl_round(&global, &mut vehicles, &workload.parts, &fl_cfg, round, seed, coverage)?;
                global = outcome.new_global.clone();
                fl_outcome = Some(outcome);
                let predicted = predict_popular(&global, &vehicles, &workload.parts, cfg)?;
                if predicted.is_empty() {
                    warn!("round {round}: no popular contents predicted; caching at random");
                }
                let cs = if cfg.scheme == Scheme::CafrNoDrl {
                    cafr_no_drl(&predicted, c, catalog, &mut placement_rng)?
                } else {
                    let pool = padded_popular(&predicted, c, catalog, &mut placement_rng);
                    let mut drl_rng = stream(seed, Purpose::Drl, round as u64);
                    let opt = run_optimization(&pool, c, &requests, &rates, &cfg.drl, &reward, &mut drl_rng)?;
                    let best = opt.best.clone();
                    optimization = Some(opt);
                    best
                };
                popular = Some(predicted);
                cs
            }
        };

        let events: Vec<FetchEvent> = requests
            .iter()
            .map(|r| {
                let tier = placement.tier_of(r.content);
                FetchEvent {
                    round,
                    vehicle: vehicles[r.vehicle].id,
                    content: r.content,
                    tier,
                    delay_s: transmission_delay(tier, &rates[r.vehicle], &reward),
                }
            })
            .collect();
        let avg_delay_s = if vehicles.is_empty() {
            warn!("round {round}: no vehicles in coverage");
            0.0
        } else {
            avg_transmission_delay(&events, vehicles.len())?
        };
        let record = RoundRecord {
            seed,
            round,
            scheme: cfg.scheme,
            capacity: c,
            density,
            hit_ratio_pct: cache_hit_ratio(&events),
            avg_delay_s,
            fl_round_time_s: fl_outcome.as_ref().map(|o| o.wall_time_s),
            episodes_to_converge: optimization.as_ref().map(|o| o.episodes_to_converge),
            avg_delay_per_request_s: avg_delay_per_request(&events),
            vehicles: vehicles.len(),
            requests: events.len(),
        };
        info!(
            "seed {seed} round {round} {}: {} vehicles, hit {:.2}%, delay {:.4} s",
            cfg.scheme, record.vehicles, record.hit_ratio_pct, record.avg_delay_s
        );
        observer(&RoundDetail {
            round,
            vehicles: &vehicles,
            rates: &rates,
            requests: &requests,
            fl: fl_outcome.as_ref(),
            popular: popular.as_ref(),
            placement: &placement,
            optimization: optimization.as_ref(),
            events: &events,
        });
        records.push(record);

        let contents: Vec<_> = requests.iter().map(|r| r.content).collect();
        match &mut state {
            SchemeState::Greedy(g) => g.observe(&contents),
            SchemeState::Thompson(t) => t.observe(&placement.local, &contents),
            SchemeState::None => {}
        }
        previous = Some(vehicles);
    }
    Ok(records)
}

/// Per-seed rows of any number of runs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<RoundRecord>,
}

/// Means over seeds (and rounds) of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub scheme: Scheme,
    pub capacity: usize,
    pub density: f64,
    /// `None` for the mean over all rounds.
    pub round: Option<u32>,
    pub hit_ratio_pct: f64,
    pub avg_delay_s: f64,
    pub fl_round_time_s: Option<f64>,
    pub episodes_to_converge: Option<f64>,
    pub avg_delay_per_request_s: f64,
}

pub const CSV_HEADER: &str = "seed,round,scheme,capacity,density,hit_ratio_pct,avg_delay_s,fl_round_time_s,episodes_to_converge,avg_delay_per_request_s";

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn opt_mean(xs: Vec<Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.into_iter().collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

fn opt_cell<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Grouping key: scheme, capacity, density bits.
type Key = (Scheme, usize, u64);

impl ResultTable {
    pub fn extend(&mut self, rows: Vec<RoundRecord>) {
        self.rows.extend(rows);
    }

    fn groups(&self) -> BTreeMap<Key, Vec<&RoundRecord>> {
        let mut g: BTreeMap<Key, Vec<&RoundRecord>> = BTreeMap::new();
        for r in &self.rows {
            g.entry((r.scheme, r.capacity, r.density.to_bits())).or_default().push(r);
        }
        g
    }

    fn summarize(key: Key, round: Option<u32>, rows: &[&RoundRecord]) -> Summary {
        Summary {
            scheme: key.0,
            capacity: key.1,
            density: f64::from_bits(key.2),
            round,
            hit_ratio_pct: mean(rows.iter().map(|r| r.hit_ratio_pct)),
            avg_delay_s: mean(rows.iter().map(|r| r.avg_delay_s)),
            fl_round_time_s: opt_mean(rows.iter().map(|r| r.fl_round_time_s).collect()),
            episodes_to_converge: opt_mean(rows.iter().map(|r| r.episodes_to_converge.map(|e| e as f64)).collect()),
            avg_delay_per_request_s: mean(rows.iter().map(|r| r.avg_delay_per_request_s)),
        }
    }

    /// Per-round means over seeds followed by the mean over everything, for
    /// every (scheme, capacity, density).
    pub fn summaries(&self) -> Vec<Summary> {
        let mut out = Vec::new();
        for (key, rows) in self.groups() {
            let mut by_round: BTreeMap<u32, Vec<&RoundRecord>> = BTreeMap::new();
            for r in &rows {
                by_round.entry(r.round).or_default().push(r);
            }
            for (round, rs) in by_round {
                out.push(Self::summarize(key, Some(round), &rs));
            }
            out.push(Self::summarize(key, None, &rows));
        }
        out
    }

    /// The all-rounds mean of one configuration.
    pub fn overall(&self, scheme: Scheme, capacity: usize) -> Option<Summary> {
        self.summaries()
            .into_iter()
            .find(|s| s.scheme == scheme && s.capacity == capacity && s.round.is_none())
    }

    /// Per-seed rows, then `seed = mean` rows per round and one with
    /// `round = all`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.round,
                r.scheme,
                r.capacity,
                r.density,
                r.hit_ratio_pct,
                r.avg_delay_s,
                opt_cell(r.fl_round_time_s),
                opt_cell(r.episodes_to_converge),
                r.avg_delay_per_request_s
            );
        }
        for m in self.summaries() {
            let _ = writeln!(
                s,
                "mean,{},{},{},{},{},{},{},{},{}",
                m.round.map_or("all".to_string(), |r| r.to_string()),
                m.scheme,
                m.capacity,
                m.density,
                m.hit_ratio_pct,
                m.avg_delay_s,
                opt_cell(m.fl_round_time_s),
                opt_cell(m.episodes_to_converge),
                m.avg_delay_per_request_s
            );
        }
        s
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Capacity,
    Density,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capacity" => Ok(SweepParam::Capacity),
            "density" => Ok(SweepParam::Density),
            _ => Err(Error::Config(format!("cannot sweep '{s}', expected capacity|density"))),
        }
    }
}

/// Runs every scheme at every value for every seed. The corpus is loaded
/// once and each seed's partition is shared by all runs of that seed.
pub fn run_sweep(
    base: &ExperimentConfig,
    schemes: &[Scheme],
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
) -> Result<ResultTable> {
    let corpus = Corpus::load(base)?;
    run_sweep_on(&corpus, base, schemes, param, values, seeds)
}

pub fn run_sweep_on(
    corpus: &Corpus,
    base: &ExperimentConfig,
    schemes: &[Scheme],
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for &seed in seeds {
        let workload = Workload::prepare(corpus, base, seed)?;
        for &scheme in schemes {
            for &value in values {
                let mut cfg = base.clone();
                cfg.scheme = scheme;
                match param {
                    SweepParam::Capacity => {
                        if value < 1.0 || value.fract() != 0.0 {
                            return Err(Error::Config(format!("capacity {value} is not a positive integer")));
                        }
                        cfg.capacity = value as usize;
                    }
                    SweepParam::Density => cfg.set_density(value),
                }
                table.extend(run_seed(&workload, &cfg, seed, &mut |_| {})?);
            }
        }
    }
    Ok(table)
}

/// Runs `cfg.scheme` for each seed.
pub fn run_experiment(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<ResultTable> {
    let corpus = Corpus::load(cfg)?;
    run_experiment_on(&corpus, cfg, seeds)
}

pub fn run_experiment_on(corpus: &Corpus, cfg: &ExperimentConfig, seeds: &[u64]) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for &seed in seeds {
        let workload = Workload::prepare(corpus, cfg, seed)?;
        table.extend(run_seed(&workload, cfg, seed, &mut |_| {})?);
    }
    Ok(table)
}
