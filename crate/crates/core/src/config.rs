//! Experiment configuration and its plain-text `key = value` file format.
//!
//! Keys are dotted (`fl.eta_l`, `channel.pathloss.v2r.slope`); `#` starts a
//! comment. Every key overrides one default, and unknown keys are errors.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::autoencoder::Activation;
use crate::channel::{ChannelParams, Geometry, PathLoss};
use crate::dataset::DataSource;
use crate::drl::{DqnConfig, RewardParams};
use crate::error::{Error, Result};
use crate::federation::{AggregationMode, FlConfig, FlMode};
use crate::mobility::{Arrivals, MobilityParams};
use crate::synth::CorpusSpec;

/// Placement scheme of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    /// Asynchronous FL, popularity prediction and DQN placement.
    Cafr,
    Random,
    /// c-epsilon-greedy on cumulative request counts.
    CEps,
    Thompson,
    /// Random placement from the predicted popular contents.
    CafrNoDrl,
    /// The full pipeline with synchronous FedAvg training.
    FedAvgCafr,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Cafr,
        Scheme::Random,
        Scheme::CEps,
        Scheme::Thompson,
        Scheme::CafrNoDrl,
        Scheme::FedAvgCafr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cafr => "cafr",
            Scheme::Random => "random",
            Scheme::CEps => "ceps",
            Scheme::Thompson => "thompson",
            Scheme::CafrNoDrl => "cafr_nodrl",
            Scheme::FedAvgCafr => "fedavg_cafr",
        }
    }

    /// Whether the scheme trains the autoencoder and predicts popularity.
    pub fn uses_prediction(self) -> bool {
        matches!(self, Scheme::Cafr | Scheme::CafrNoDrl | Scheme::FedAvgCafr)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Scheme::ALL.iter().map(|x| x.name()).collect();
                Error::Config(format!("unknown scheme '{s}', expected one of {}", names.join("|")))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_frac: f64,
    pub requests_per_vehicle: usize,
    /// Keep only the most-rated contents.
    pub catalog_cap: Option<usize>,
    /// Number of private data partitions; vehicle `id` holds partition
    /// `id % partitions`.
    pub partitions: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic(CorpusSpec::default()),
            train_frac: 0.998,
            requests_per_vehicle: 10,
            catalog_cap: None,
            partitions: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeConfig {
    /// Hidden width; `None` picks 100 for the full catalog and 16 when capped.
    pub hidden: Option<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            hidden: None,
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Sigmoid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopularityConfig {
    /// Active VUs are the top `1/m` by rating count.
    pub m: usize,
    /// Neighbors per active VU.
    pub k: usize,
    /// Popular list length; `None` means twice the capacity.
    pub f_c: Option<usize>,
}

impl Default for PopularityConfig {
    fn default() -> Self {
        Self { m: 3, k: 10, f_c: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rounds: u32,
    pub scheme: Scheme,
    pub capacity: usize,
    pub round_duration_s: f64,
    pub mobility: MobilityParams,
    pub channel: ChannelParams,
    pub geometry: Geometry,
    pub data: DataConfig,
    pub ae: AeConfig,
    pub fl: FlConfig,
    pub popularity: PopularityConfig,
    pub drl: DqnConfig,
    pub reward: RewardParams,
    /// Exploration probability of c-epsilon-greedy.
    pub ceps_eps: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            rounds: 30,
            scheme: Scheme::Cafr,
            capacity: 100,
            round_duration_s: 10.0,
            mobility: MobilityParams::default(),
            channel: ChannelParams::default(),
            geometry: Geometry::default(),
            data: DataConfig::default(),
            ae: AeConfig::default(),
            fl: FlConfig::default(),
            popularity: PopularityConfig::default(),
            drl: DqnConfig::default(),
            reward: RewardParams::default(),
            ceps_eps: 0.1,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_opt(key: &str, value: &str) -> Result<Option<usize>> {
    match value {
        "none" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl ExperimentConfig {
    /// Vehicles per km, or `None` in arrival-rate mode.
    pub fn density(&self) -> Option<f64> {
        match self.mobility.arrivals {
            Arrivals::Density { per_km } => Some(per_km),
            Arrivals::Rate { .. } => None,
        }
    }

    pub fn set_density(&mut self, per_km: f64) {
        self.mobility.arrivals = Arrivals::Density { per_km };
    }

    pub fn set_coverage(&mut self, meters: f64) {
        self.mobility.coverage_m = meters;
        self.geometry.coverage_m = meters;
    }

    /// Popular list length for the configured capacity.
    pub fn f_c(&self) -> usize {
        self.popularity.f_c.unwrap_or(2 * self.capacity)
    }

    /// Reward parameters with the wired rate taken from the channel.
    pub fn reward_params(&self) -> RewardParams {
        RewardParams {
            wired_rate_bps: self.channel.wired_rate_bps,
            ..self.reward.clone()
        }
    }

    /// Federated settings for the scheme: FedAvg for `fedavg_cafr`.
    pub fn fl_config(&self) -> FlConfig {
        let mut fl = self.fl.clone();
        if self.scheme == Scheme::FedAvgCafr {
            fl.mode = FlMode::FedAvg;
        }
        fl
    }

    /// Overrides one key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "sim.seed" => self.seed = parse(key, v)?,
            "sim.rounds" => self.rounds = parse(key, v)?,
            "sim.scheme" => self.scheme = v.parse()?,
            "sim.capacity" => self.capacity = parse(key, v)?,
            "sim.coverage_m" => self.set_coverage(parse(key, v)?),
            "sim.round_duration_s" => self.round_duration_s = parse(key, v)?,

            "mobility.mu" => self.mobility.mu_kmh = parse(key, v)?,
            "mobility.sigma" => self.mobility.sigma_kmh = parse(key, v)?,
            "mobility.u_min" => self.mobility.u_min_kmh = parse(key, v)?,
            "mobility.u_max" => self.mobility.u_max_kmh = parse(key, v)?,
            "mobility.density" => self.set_density(parse(key, v)?),
            "mobility.arrival_rate" => self.mobility.arrivals = Arrivals::Rate { per_s: parse(key, v)? },

            "channel.bandwidth_hz" => self.channel.bandwidth_hz = parse(key, v)?,
            "channel.p_rsu_dbm" => self.channel.p_rsu_dbm = parse(key, v)?,
            "channel.p_mbs_dbm" => self.channel.p_mbs_dbm = parse(key, v)?,
            "channel.noise_dbm" => self.channel.noise_dbm = parse(key, v)?,
            "channel.wired_rate_bps" => self.channel.wired_rate_bps = parse(key, v)?,
            "geometry.rsu_offset_m" => self.geometry.rsu_offset_m = parse(key, v)?,
            "geometry.mbs_offset_m" => self.geometry.mbs_offset_m = parse(key, v)?,

            "data.path" => {
                self.data.source = match v {
                    "synthetic" => DataSource::Synthetic(CorpusSpec::default()),
                    "synthetic-small" => DataSource::Synthetic(CorpusSpec::small()),
                    dir => DataSource::MovieLens(PathBuf::from(dir)),
                }
            }
            "data.synthetic_seed" => match &mut self.data.source {
                DataSource::Synthetic(spec) => spec.seed = parse(key, v)?,
                DataSource::MovieLens(_) => {
                    return Err(Error::Config(format!("{key} needs a synthetic data.path")));
                }
            },
            "data.train_frac" => self.data.train_frac = parse(key, v)?,
            "data.requests_per_vehicle" => self.data.requests_per_vehicle = parse(key, v)?,
            "data.catalog_cap" => self.data.catalog_cap = parse_opt(key, v)?,
            "data.partitions" => self.data.partitions = parse(key, v)?,

            "ae.hidden" => self.ae.hidden = parse_opt(key, v)?,
            "ae.hidden_activation" => self.ae.hidden_activation = Activation::parse(v)?,
            "ae.output_activation" => self.ae.output_activation = Activation::parse(v)?,

            "fl.mode" => {
                self.fl.mode = match v {
                    "async" => FlMode::Async,
                    "fedavg" => FlMode::FedAvg,
                    _ => return Err(Error::Config(format!("{key}: expected async|fedavg, got '{v}'"))),
                }
            }
            "fl.aggregation" => {
                self.fl.aggregation = match v {
                    "convex" => AggregationMode::Convex,
                    "additive" => AggregationMode::Additive,
                    _ => return Err(Error::Config(format!("{key}: expected convex|additive, got '{v}'"))),
                }
            }
            "fl.local_steps" => {
                self.fl.train.restart_from_global = match v {
                    "cumulative" => false,
                    "restart" => true,
                    _ => return Err(Error::Config(format!("{key}: expected cumulative|restart, got '{v}'"))),
                }
            }
            "fl.mu1" => self.fl.mu1 = parse(key, v)?,
            "fl.mu2" => self.fl.mu2 = parse(key, v)?,
            "fl.rho" => self.fl.train.rho = parse(key, v)?,
            "fl.beta" => self.fl.train.beta = parse(key, v)?,
            "fl.eta_l" => self.fl.train.eta_l = parse(key, v)?,
            "fl.epochs" => self.fl.train.epochs = parse(key, v)?,
            "fl.batch_size" => self.fl.train.batch_size = parse(key, v)?,
            "fl.t_training_s" => self.fl.t_training_s = parse(key, v)?,
            "fl.t_inference_s" => self.fl.t_inference_s = parse(key, v)?,
            "fl.jitter_frac" => self.fl.jitter_frac = parse(key, v)?,

            "popularity.m" => self.popularity.m = parse(key, v)?,
            "popularity.k" => self.popularity.k = parse(key, v)?,
            "popularity.f_c" => self.popularity.f_c = parse_opt(key, v)?,

            "drl.replay_capacity" => self.drl.replay_capacity = parse(key, v)?,
            "drl.batch_size" => self.drl.batch_size = parse(key, v)?,
            "drl.gamma" => self.drl.gamma = parse(key, v)?,
            "drl.learning_rate" => self.drl.learning_rate = parse(key, v)?,
            "drl.target_sync" => self.drl.target_sync = parse(key, v)?,
            "drl.episodes" => self.drl.episodes = parse(key, v)?,
            "drl.slots_per_episode" => self.drl.slots_per_episode = parse(key, v)?,
            "drl.swap_n" => self.drl.swap_n = parse_opt(key, v)?,
            "drl.eps_start" => self.drl.eps_start = parse(key, v)?,
            "drl.eps_end" => self.drl.eps_end = parse(key, v)?,
            "drl.eps_decay_frac" => self.drl.eps_decay_frac = parse(key, v)?,
            "drl.hidden" => self.drl.hidden = parse(key, v)?,

            "reward.lambda1" => self.reward.lambda1 = parse(key, v)?,
            "reward.lambda2" => self.reward.lambda2 = parse(key, v)?,
            "reward.lambda3" => self.reward.lambda3 = parse(key, v)?,
            "reward.content_bits" => self.reward.content_bits = parse(key, v)?,

            "baselines.eps" => self.ceps_eps = parse(key, v)?,

            _ => return self.set_path_loss(key, v),
        }
        Ok(())
    }

    fn set_path_loss(&mut self, key: &str, v: &str) -> Result<()> {
        let rest = key
            .strip_prefix("channel.pathloss.")
            .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        let (link, field) = rest
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("unknown key '{key}'")))?;
        let pl: &mut PathLoss = match link {
            "v2r" => &mut self.channel.v2r,
            "v2b" => &mut self.channel.v2b,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        };
        match field {
            "intercept_db" => pl.intercept_db = parse(key, v)?,
            "slope" => pl.slope = parse(key, v)?,
            "shadow_sigma_db" => pl.shadow_sigma_db = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            self.set(k.trim(), v.trim()).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("sim.rounds must be >= 1".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Config("sim.capacity must be >= 1".into()));
        }
        if !(self.round_duration_s > 0.0) {
            return Err(Error::Config("sim.round_duration_s must be positive".into()));
        }
        if (self.mobility.coverage_m - self.geometry.coverage_m).abs() > 0.0 {
            return Err(Error::Config("mobility and geometry disagree on the coverage length".into()));
        }
        if self.data.partitions == 0 || !(self.data.train_frac > 0.0 && self.data.train_frac < 1.0) {
            return Err(Error::Config("data: partitions must be >= 1 and train_frac in (0, 1)".into()));
        }
        if self.popularity.m == 0 || self.popularity.k == 0 {
            return Err(Error::Config("popularity: m and k must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.ceps_eps) {
            return Err(Error::Config("baselines.eps must be in [0, 1]".into()));
        }
        self.mobility.validate()?;
        self.channel.validate()?;
        self.fl.validate()?;
        self.drl.validate()?;
        self.reward_params().validate()
    }
}
