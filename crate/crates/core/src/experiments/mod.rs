//! Experiment drivers behind the `csvgd` command-line tool.
//!
//! Every run owns one output directory holding a config snapshot,
//! `metrics.csv`, `checkpoints/`, `graphs/` and a README stub.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::DataSpec;
use crate::svgd::SvgdConfig;

mod hyperelastic;
mod inspect;
mod mvn;
mod sweep;

pub use hyperelastic::{run_hyperelastic, HyperelasticOutcome};
pub use inspect::{condense_inspect, InspectOutcome};
pub use mvn::{run_mvn, MvnOutcome};
pub use sweep::{run_sweep, SweepRow};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Mvn,
    #[default]
    Hyperelastic,
    Sweep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvnSettings {
    /// Initial particles are i.i.d. `N(init_mean, init_std²)`.
    pub init_mean: f64,
    pub init_std: f64,
}

impl Default for MvnSettings {
    fn default() -> Self {
        Self {
            init_mean: 0.0,
            init_std: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LikelihoodSettings {
    /// Noise standard deviation relative to the training-output RMS. Unset
    /// means the data noise level, floored at `min_relative_sigma`.
    pub relative_sigma: Option<f64>,
    pub min_relative_sigma: f64,
}

impl Default for LikelihoodSettings {
    fn default() -> Self {
        Self {
            relative_sigma: None,
            min_relative_sigma: 0.01,
        }
    }
}

impl LikelihoodSettings {
    pub fn sigma(&self, noise: f64, output_rms: f64) -> f64 {
        self.relative_sigma.unwrap_or(noise.max(self.min_relative_sigma)) * output_rms
    }
}

/// Grid axes for `sweep`; empty `alphas`/`betas` fall back to the base
/// config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub particles: usize,
    pub widths: Vec<usize>,
    pub out: PathBuf,
    /// Pushforward distances and sparsity are logged every `log_every`
    /// iterations.
    pub log_every: usize,
    /// Noise replicas per test point for the reference pushforward.
    pub w1_replicas: usize,
    pub svgd: SvgdConfig,
    pub data: DataSpec,
    pub likelihood: LikelihoodSettings,
    pub mvn: MvnSettings,
    pub sweep: SweepGrid,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Hyperelastic,
            seed: 0,
            particles: 10,
            widths: vec![3, 30, 30, 1],
            out: PathBuf::from("runs/latest"),
            log_every: 10,
            w1_replicas: 100,
            svgd: SvgdConfig::default(),
            data: DataSpec::default(),
            likelihood: LikelihoodSettings::default(),
            mvn: MvnSettings::default(),
            sweep: SweepGrid::default(),
        }
    }
}

impl RunConfig {
    /// Defaults for the three-dimensional Gaussian study.
    pub fn mvn_default() -> Self {
        Self {
            experiment: ExperimentKind::Mvn,
            particles: 128,
            widths: Vec::new(),
            svgd: SvgdConfig {
                step_size: 1e-2,
                optimizer: crate::svgd::Optimizer::Plain,
                stage_iters: 4000,
                max_stages: 1,
                max_total_iters: 4000,
                polish_iters: 0,
                prior: crate::prior::PriorSpec {
                    alpha: 1.0,
                    lambda: 0.1,
                },
                axis_mask_threshold: 0.0,
                condense: false,
                ..SvgdConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particles must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be >= 1".into()));
        }
        if self.experiment == ExperimentKind::Hyperelastic {
            if self.widths.len() < 2 || self.widths[0] != 3 || *self.widths.last().unwrap() != 1 {
                return Err(Error::Config("hyperelastic widths must start at 3 and end at 1".into()));
            }
            if self.w1_replicas == 0 {
                return Err(Error::Config("w1_replicas must be >= 1".into()));
            }
            if !(self.data.noise >= 0.0) || !(self.data.delta >= 0.0) || !(self.data.test_range >= 0.0) {
                return Err(Error::Config("data noise and ranges must be >= 0".into()));
            }
        }
        if self.experiment == ExperimentKind::Mvn && !(self.mvn.init_std > 0.0) {
            return Err(Error::Config("mvn.init_std must be > 0".into()));
        }
        self.svgd.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}

/// Output directory layout of one run.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, config: &RunConfig, command_line: &str) -> Result<Self> {
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::create_dir_all(root.join("graphs"))?;
        fs::write(root.join("config.toml"), config.to_toml()?)?;
        let readme = format!(
            "# {:?} run\n\nProduced by:\n\n    {command_line}\n\nSeed {}; see config.toml for every setting.\n",
            config.experiment, config.seed
        );
        fs::write(root.join("README.md"), readme)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint(&self, name: &str) -> PathBuf {
        self.root.join("checkpoints").join(name)
    }

    pub fn graph(&self, name: &str) -> PathBuf {
        self.root.join("graphs").join(name)
    }
}

pub const METRICS_HEADER: &str =
    "iteration,stage,lambda,mse,w1_sum,bhattacharyya,active_params,median_pairwise_distance";

/// Line-oriented CSV writer for `metrics.csv`.
pub struct MetricsLog {
    out: std::io::BufWriter<fs::File>,
}

pub struct MetricsRow {
    pub iteration: usize,
    pub stage: usize,
    pub lambda: f64,
    pub mse: f64,
    pub w1_sum: Option<f64>,
    pub bhattacharyya: Option<f64>,
    pub active_params: f64,
    pub median_pairwise_distance: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{METRICS_HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, r: &MetricsRow) -> Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            r.iteration,
            r.stage,
            r.lambda,
            r.mse,
            opt(r.w1_sum),
            opt(r.bhattacharyya),
            r.active_params,
            r.median_pairwise_distance
        )?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Write rows of floats under a header.
pub(crate) fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        for cfg in [RunConfig::default(), RunConfig::mvn_default()] {
            let text = cfg.to_toml().unwrap();
            assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_config_takes_defaults() {
        let cfg = RunConfig::from_toml("seed = 7\n[svgd]\nstep_size = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.svgd.step_size, 0.5);
        assert_eq!(cfg.particles, 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 7\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.widths = vec![2, 5, 1];
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.svgd.step_size = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sigma_floor() {
        let l = LikelihoodSettings::default();
        assert_eq!(l.sigma(0.0, 2.0), 0.02);
        assert_eq!(l.sigma(0.1, 2.0), 0.2);
        let fixed = LikelihoodSettings {
            relative_sigma: Some(0.5),
            ..l
        };
        assert_eq!(fixed.sigma(0.1, 2.0), 1.0);
    }
}
