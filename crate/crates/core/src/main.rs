use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coopcache::config::{ExperimentConfig, Scheme};
use coopcache::harness::{run_experiment, run_sweep, ResultTable, SweepParam};
use coopcache::synth::{self, CorpusSpec};
use coopcache::{Error, Result};

#[derive(Parser)]
#[command(name = "coopcache", version, about = "Cooperative vehicular edge caching simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and write per-round results as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        capacity: Option<usize>,
        /// Vehicles per km.
        #[arg(long)]
        density: Option<f64>,
    },
    /// Run several schemes over a list of parameter values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values, e.g. 50,100,150.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "cafr,random,ceps,thompson,cafr_nodrl")]
        schemes: Vec<Scheme>,
    },
    /// Write the synthetic corpus in MovieLens-1M file format.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// The 400-user test corpus instead of the full-size one.
        #[arg(long)]
        small: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed; with --seeds N the run covers seed..seed+N-1.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long)]
    rounds: Option<u32>,
    /// Extra `key=value` overrides, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{o}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.rounds {
            cfg.rounds = r;
        }
        Ok(cfg)
    }

    fn seed_list(&self, cfg: &ExperimentConfig) -> Vec<u64> {
        (0..self.seeds.max(1)).map(|i| cfg.seed + i).collect()
    }

    fn write(&self, table: &ResultTable) -> Result<()> {
        let csv = table.to_csv();
        match &self.out {
            Some(p) => write_file(p, &csv),
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            scheme,
            capacity,
            density,
        } => {
            let mut cfg = common.config()?;
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(c) = capacity {
                cfg.capacity = c;
            }
            if let Some(d) = density {
                cfg.set_density(d);
            }
            cfg.validate()?;
            let table = run_experiment(&cfg, &common.seed_list(&cfg))?;
            common.write(&table)
        }
        Command::Sweep {
            common,
            param,
            values,
            schemes,
        } => {
            let cfg = common.config()?;
            cfg.validate()?;
            let table = run_sweep(&cfg, &schemes, param, &values, &common.seed_list(&cfg))?;
            common.write(&table)
        }
        Command::GenData { out, small, seed } => {
            let mut spec = if small { CorpusSpec::small() } else { CorpusSpec::default() };
            if let Some(s) = seed {
                spec.seed = s;
            }
            fs::create_dir_all(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            let ds = synth::generate(&spec)?;
            synth::write_movielens(&ds, &out)?;
            eprintln!(
                "wrote {} ratings of {} contents to {}",
                ds.ratings.len(),
                ds.catalog.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
