use std::collections::HashSet;
use std::fs;
use std::io::Write;

use crate::error::{Error, Result};
use crate::experiments::mvn::run_mvn_quiet;
use crate::experiments::{RunConfig, RunDir};
use crate::kernel::{BandwidthRule, KernelSpec};

pub const SWEEP_HEADER: &str = "alpha,beta,lambda,gamma,bhattacharyya,bhattacharyya_12,l1_theta3,mean1,mean2,mean3";

/// One grid cell of the prior/kernel survey.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    /// `None` for the adaptive bandwidth.
    pub gamma: Option<f64>,
    pub bhattacharyya: f64,
    pub bhattacharyya_12: f64,
    pub l1_theta3: f64,
    pub mean: Vec<f64>,
}

impl SweepRow {
    fn key(&self) -> String {
        cell_key(self.alpha, self.beta, self.lambda, self.gamma)
    }

    fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.alpha,
            self.beta,
            self.lambda,
            self.gamma.map_or("median".to_string(), |g| g.to_string()),
            self.bhattacharyya,
            self.bhattacharyya_12,
            self.l1_theta3,
            self.mean[0],
            self.mean[1],
            self.mean[2]
        )
    }
}

fn cell_key(alpha: f64, beta: f64, lambda: f64, gamma: Option<f64>) -> String {
    format!("{alpha},{beta},{lambda},{}", gamma.map_or("median".to_string(), |g| g.to_string()))
}

fn axis(values: &[f64], fallback: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Cartesian λ × γ (× α × β) survey of the Gaussian study, one CSV row per
/// cell in `sweep.csv`. Cells already present in that file are skipped, so
/// an interrupted sweep resumes where it stopped. Returns the newly
/// computed rows.
pub fn run_sweep(config: &RunConfig, command_line: &str) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if config.sweep.lambdas.is_empty() {
        return Err(Error::Config("sweep.lambdas must not be empty".into()));
    }
    let dir = if config.out.join("sweep.csv").exists() {
        RunDir {
            root: config.out.clone(),
        }
    } else {
        RunDir::create(&config.out, config, command_line)?
    };
    let path = dir.path("sweep.csv");
    let mut done = HashSet::new();
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        for line in text.lines().skip(1) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() == 10 {
                done.insert(parts[..4].join(","));
            }
        }
    } else {
        fs::write(&path, format!("{SWEEP_HEADER}\n"))?;
    }
    let gammas: Vec<Option<f64>> = if config.sweep.gammas.is_empty() {
        match config.svgd.kernel.bandwidth_rule {
            BandwidthRule::Fixed => vec![Some(config.svgd.kernel.gamma)],
            BandwidthRule::MedianAdaptive => vec![None],
        }
    } else {
        config.sweep.gammas.iter().copied().map(Some).collect()
    };
    let mut rows = Vec::new();
    for &alpha in &axis(&config.sweep.alphas, config.svgd.prior.alpha) {
        for &beta in &axis(&config.sweep.betas, config.svgd.kernel.beta) {
            for &gamma in &gammas {
                for &lambda in &config.sweep.lambdas {
                    if done.contains(&cell_key(alpha, beta, lambda, gamma)) {
                        continue;
                    }
                    let mut cell = config.clone();
                    cell.svgd.prior.alpha = alpha;
                    cell.svgd.prior.lambda = lambda;
                    cell.svgd.kernel = match gamma {
                        Some(g) => KernelSpec::fixed(beta, g)?,
                        None => KernelSpec::median_adaptive(beta)?,
                    };
                    let out = run_mvn_quiet(&cell)?;
                    let row = SweepRow {
                        alpha,
                        beta,
                        lambda,
                        gamma,
                        bhattacharyya: out.bhattacharyya,
                        bhattacharyya_12: out.bhattacharyya_12,
                        l1_theta3: out.l1_theta3,
                        mean: out.mean,
                    };
                    let mut f = fs::OpenOptions::new().append(true).open(&path)?;
                    writeln!(f, "{}", row.to_line())?;
                    done.insert(row.key());
                    rows.push(row);
                }
            }
        }
    }
    Ok(rows)
}
