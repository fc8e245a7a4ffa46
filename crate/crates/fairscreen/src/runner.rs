//! Parallel campaign execution.

use fairscreen_core::trials::{canonical_order, CampaignRun};
use fairscreen_core::{run_unit, CampaignConfig, CampaignReport, Cohort, TrialError};
use rayon::prelude::*;

/// Runs every (outcome, trial) unit on a pool of `workers` threads (0 means
/// one per core). The result does not depend on the worker count.
pub fn run_campaign_parallel(
    cohort: &Cohort,
    config: &CampaignConfig,
    workers: usize,
) -> Result<CampaignRun, TrialError> {
    config.validate()?;
    let trial = config.resolved_trial()?;
    let digest = cohort.digest();
    let units = config.units();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool");
    let per_unit: Vec<_> = pool.install(|| {
        units
            .par_iter()
            .map(|u| run_unit(cohort, digest, u, &config.features, &trial))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut trials: Vec<_> = per_unit.into_iter().flatten().collect();
    canonical_order(&mut trials);
    let report = CampaignReport::assemble(config, digest, &trials)?;
    Ok(CampaignRun { report, trials })
}
