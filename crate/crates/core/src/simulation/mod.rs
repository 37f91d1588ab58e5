//! Monte-Carlo and discrete-event harness.
//!
//! Every trial draws from its own ChaCha8 stream: the generator is seeded
//! with the config seed and `set_stream(trial_index)`. Trials may run on a
//! rayon pool; results are collected in trial order and reduced serially, so
//! the thread count never changes a report.

mod games;
mod spoof;
mod throughput;
mod timeline;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::AuctionError;
use crate::censorship::CensorshipError;
use crate::escrow::EscrowError;

pub use games::{run_iid_failure, run_normal_valuation, GameReport, IidFailure, NormalValuation, SolverStat};
pub use spoof::{run_spoof_attack, SpoofAttack, SpoofReport, WorldSummary};
pub use throughput::{run_throughput_sweep, write_throughput_csv, ThroughputRow, ThroughputSweep};
pub use timeline::{
    run_timeline, ChainAccess, EventKind, Timeline, TimelineAuction, TimelineConfig, TimelineEvent, TimelineReport,
};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Censorship(#[from] CensorshipError),
    #[error(transparent)]
    Escrow(#[from] EscrowError),
    #[error("could not build worker pool: {0}")]
    Pool(String),
    #[error("chain access ({access:?}) at {at_ms} ms between order receipt and guarantee issuance")]
    ChainAccessDuringAuction { at_ms: i64, access: ChainAccess },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub model: Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    IidFailure(IidFailure),
    NormalValuation(NormalValuation),
    ThroughputSweep(ThroughputSweep),
    SpoofAttack(SpoofAttack),
    Timeline(Timeline),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    IidFailure(GameReport),
    NormalValuation(GameReport),
    ThroughputSweep { rows: Vec<ThroughputRow> },
    SpoofAttack(SpoofReport),
    Timeline(TimelineReport),
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl Stat {
    pub fn from_samples(samples: &[f64]) -> Stat {
        let n = samples.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                std_error: f64::NAN,
                trials: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            std_error,
            trials: n as u64,
        }
    }

    /// `|mean − expected| ≤ k·SE`.
    pub fn within(&self, expected: f64, k: f64) -> bool {
        (self.mean - expected).abs() <= k * self.std_error
    }
}

/// The generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Runs `f` once per trial and returns the results in trial order.
/// `jobs = None` uses rayon's global pool, `Some(1)` runs serially.
pub(crate) fn map_trials<T, F>(trials: u64, seed: u64, jobs: Option<usize>, f: F) -> Result<Vec<T>, SimulationError>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    let body = || {
        (0..trials)
            .into_par_iter()
            .map(|t| f(&mut trial_rng(seed, t)))
            .collect::<Vec<T>>()
    };
    match jobs {
        Some(1) => Ok((0..trials).map(|t| f(&mut trial_rng(seed, t))).collect()),
        Some(0) => Err(SimulationError::InvalidConfig("jobs must be positive")),
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(|pool| pool.install(body))
            .map_err(|e| SimulationError::Pool(e.to_string())),
        None => Ok(body()),
    }
}

pub fn run(config: &SimConfig, jobs: Option<usize>) -> Result<Report, SimulationError> {
    if config.trials == 0 {
        return Err(SimulationError::InvalidConfig("trials must be positive"));
    }
    let (trials, seed) = (config.trials, config.seed);
    Ok(match &config.model {
        Model::IidFailure(m) => Report::IidFailure(run_iid_failure(m, trials, seed, jobs)?),
        Model::NormalValuation(m) => Report::NormalValuation(run_normal_valuation(m, trials, seed, jobs)?),
        Model::ThroughputSweep(m) => Report::ThroughputSweep {
            rows: run_throughput_sweep(m, trials, seed, jobs)?,
        },
        Model::SpoofAttack(m) => Report::SpoofAttack(run_spoof_attack(m)?),
        Model::Timeline(m) => Report::Timeline(run_timeline(m)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn stat_of_known_samples() {
        let s = Stat::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::from_samples(&[7.0]).std_error, 0.0);
        assert!(s.within(2.5, 0.0));
    }

    #[test]
    fn streams_differ_and_repeat() {
        let a: u64 = trial_rng(9, 0).random();
        let b: u64 = trial_rng(9, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, trial_rng(9, 0).random::<u64>());
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let draw = |rng: &mut ChaCha8Rng| rng.random::<f64>();
        let serial = map_trials(500, 3, Some(1), draw).unwrap();
        assert_eq!(serial, map_trials(500, 3, Some(4), draw).unwrap());
        assert_eq!(serial, map_trials(500, 3, None, draw).unwrap());
        assert!(map_trials(1, 3, Some(0), draw).is_err());
    }
}
