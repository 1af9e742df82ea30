use std::path::Path;

use crate::error::Result;
use crate::experiments::{write_table, MetricsLog, MetricsRow, RunConfig, RunDir};
use crate::likelihood::MvnTarget;
use crate::metrics::{bhattacharyya, sparsity_l1, GaussianSummary};
use crate::svgd::{run_csvgd, Ensemble, IterationRecord, Observer, RunReport, StageReport, SvgdConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct MvnOutcome {
    pub report: RunReport,
    pub particles: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Against the full three-dimensional target.
    pub bhattacharyya: f64,
    /// Restricted to the (θ₁, θ₂) marginal.
    pub bhattacharyya_12: f64,
    /// Ensemble L1 of θ₃.
    pub l1_theta3: f64,
}

fn target_summary(target: &MvnTarget) -> Result<GaussianSummary> {
    Ok(GaussianSummary {
        mean: target.mean().clone(),
        cov: target.covariance()?,
    })
}

pub(crate) fn summarize(report: RunReport, ens: &Ensemble, target: &MvnTarget) -> Result<MvnOutcome> {
    let truth = target_summary(target)?;
    let emp = GaussianSummary::from_samples(&ens.particles)?;
    Ok(MvnOutcome {
        report,
        mean: ens.mean(),
        bhattacharyya: bhattacharyya(&emp, &truth)?,
        bhattacharyya_12: bhattacharyya(&emp.marginal(&[0, 1])?, &truth.marginal(&[0, 1])?)?,
        l1_theta3: sparsity_l1(&ens.particles, &[2])?,
        particles: ens.particles.clone(),
    })
}

/// Runs the Gaussian study in memory (no artifacts).
pub(crate) fn run_mvn_quiet(config: &RunConfig) -> Result<MvnOutcome> {
    config.validate()?;
    let target = MvnTarget::demo();
    let mut ens = Ensemble::init_gaussian(target.dim(), config.particles, config.mvn.init_mean, config.mvn.init_std, config.seed)?;
    let report = run_csvgd(&mut ens, &target, &config.svgd, &mut crate::svgd::NoObserver)?;
    summarize(report, &ens, &target)
}

struct MvnLogger<'a> {
    dir: &'a RunDir,
    metrics: MetricsLog,
    sparsity: Vec<Vec<String>>,
    truth: GaussianSummary,
    log_every: usize,
    svgd: &'a SvgdConfig,
}

impl Observer for MvnLogger<'_> {
    fn iteration(&mut self, ens: &Ensemble, r: &IterationRecord) -> Result<()> {
        let emp = GaussianSummary::from_samples(&ens.particles)?;
        let d = bhattacharyya(&emp, &self.truth).ok();
        if r.iteration % self.log_every == 0 {
            self.sparsity.push(vec![
                r.iteration.to_string(),
                sparsity_l1(&ens.particles, &[2])?.to_string(),
            ]);
        }
        self.metrics.write(&MetricsRow {
            iteration: r.iteration,
            stage: r.stage,
            lambda: r.lambda,
            mse: r.step.mse,
            w1_sum: None,
            bhattacharyya: d,
            active_params: ens.active_params(self.svgd.active_threshold),
            median_pairwise_distance: r.step.median_distance,
        })
    }

    fn stage_end(&mut self, ens: &Ensemble, report: &StageReport) -> Result<()> {
        write_particles(&self.dir.path(&format!("particles_stage{:03}.csv", report.stage)), &ens.particles)?;
        ens.save_checkpoint(&self.dir.checkpoint(&format!("stage{:03}.json", report.stage)), self.svgd)
    }
}

fn write_particles(path: &Path, particles: &[Vec<f64>]) -> Result<()> {
    let header: Vec<String> = (1..=particles[0].len()).map(|j| format!("theta{j}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header, particles.iter().map(|p| p.iter().map(f64::to_string).collect()))
}

/// Gaussian study. With a command line it writes `metrics.csv`,
/// `sparsity.csv`, particle snapshots per stage and checkpoints.
pub fn run_mvn(config: &RunConfig, command_line: Option<&str>) -> Result<MvnOutcome> {
    let Some(command_line) = command_line else {
        return run_mvn_quiet(config);
    };
    config.validate()?;
    let dir = RunDir::create(&config.out, config, command_line)?;
    let target = MvnTarget::demo();
    let mut ens = Ensemble::init_gaussian(target.dim(), config.particles, config.mvn.init_mean, config.mvn.init_std, config.seed)?;
    write_particles(&dir.path("particles_init.csv"), &ens.particles)?;
    let mut log = MvnLogger {
        dir: &dir,
        metrics: MetricsLog::create(&dir.path("metrics.csv"))?,
        sparsity: Vec::new(),
        truth: target_summary(&target)?,
        log_every: config.log_every,
        svgd: &config.svgd,
    };
    let report = run_csvgd(&mut ens, &target, &config.svgd, &mut log)?;
    log.metrics.flush()?;
    write_table(&dir.path("sparsity.csv"), &["iteration", "l1_theta3"], log.sparsity)?;
    write_particles(&dir.path("particles_final.csv"), &ens.particles)?;
    ens.save_checkpoint(&dir.checkpoint("final.json"), &config.svgd)?;
    summarize(report, &ens, &target)
}
