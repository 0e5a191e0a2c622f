use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_and_gate, build_context, ContextOptions, DenoiseError, DenoiseOutcome, Denoiser};
use crate::dataset::SplitDataset;
use crate::scorer::Scorer;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub k: usize,
    /// Runs for stochastic denoisers; deterministic ones always run once.
    pub runs: u32,
    pub seed: u64,
    /// Upper bound on users processed concurrently.
    pub max_in_flight: usize,
    #[serde(skip)]
    pub context: ContextOptions,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            k: 1,
            runs: 3,
            seed: 0,
            max_in_flight: 8,
            context: ContextOptions::default(),
        }
    }
}

/// Outcomes in (user, run) order, with per-outcome wall time kept apart so
/// the outcomes themselves stay byte-reproducible.
#[derive(Clone, Debug)]
pub struct Campaign {
    pub denoiser: String,
    pub k: usize,
    pub runs: u32,
    pub outcomes: Vec<DenoiseOutcome>,
    pub wall_ms: Vec<f64>,
}

pub fn run_campaign<S, D>(
    split: &SplitDataset,
    scorer: &S,
    denoiser: &D,
    users: &[usize],
    config: &CampaignConfig,
) -> Result<Campaign, DenoiseError>
where
    S: Scorer + ?Sized,
    D: Denoiser + ?Sized,
{
    let window = split.window_len;
    if !(1..=2).contains(&config.k) || config.k >= window {
        return Err(DenoiseError::InvalidK { k: config.k, window });
    }
    if config.runs == 0 {
        return Err(DenoiseError::InvalidRuns);
    }
    if let Some(&u) = users.iter().find(|&&u| u >= split.n_users()) {
        return Err(DenoiseError::UnknownUser(u));
    }
    let runs = if denoiser.is_stochastic() { config.runs } else { 1 };
    let needs = denoiser.needs();

    let work = |user: usize| -> Result<Vec<(DenoiseOutcome, f64)>, DenoiseError> {
        let ctx = build_context(split, user, scorer, needs, &config.context)?;
        (0..runs)
            .map(|run| {
                let start = Instant::now();
                let proposal = denoiser.propose(&ctx, config.k, config.seed, run);
                let outcome = apply_and_gate(&ctx, proposal, scorer)?;
                Ok((outcome, start.elapsed().as_secs_f64() * 1e3))
            })
            .collect()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .expect("thread pool");
    let per_user: Vec<Vec<(DenoiseOutcome, f64)>> =
        pool.install(|| users.par_iter().map(|&u| work(u)).collect::<Result<_, _>>())?;

    if let Some(message) = denoiser.fatal_error() {
        return Err(DenoiseError::Denoiser {
            denoiser: denoiser.id().to_string(),
            message,
        });
    }
    let (outcomes, wall_ms) = per_user.into_iter().flatten().unzip();
    Ok(Campaign {
        denoiser: denoiser.id().to_string(),
        k: config.k,
        runs,
        outcomes,
        wall_ms,
    })
}
