use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::condense::{write_graph_dump, NetGraph};
use crate::error::{shape, Result};
use crate::experiments::{write_table, MetricsLog, MetricsRow, RunConfig, RunDir};
use crate::likelihood::{ParamLayout, Pushforward, RegressionTarget, StrainFeatures, StressModel};
use crate::mechanics::{generate_data, stress_from_potential, to_voigt, HyperelasticData, TruthModel};
use crate::metrics::{ensemble_predictions, moving_average, pushforward_w1, W1Profile};
use crate::net::{Architecture, LayeredNet};
use crate::svgd::{run_csvgd, Ensemble, IterationRecord, Observer, RunReport, StageReport, SvgdConfig};

/// RNG stream for the reference noise replicas (stream 0 draws the data).
const REPLICA_STREAM: u64 = 1;
const MOVING_AVERAGE_WINDOW: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct HyperelasticOutcome {
    pub report: RunReport,
    pub arch: Architecture,
    pub particles: Vec<Vec<f64>>,
    /// Final per-point and summed pushforward distance on the test path.
    pub w1: W1Profile,
    /// Per-point distance at the undeformed reference strain.
    pub w1_at_reference: f64,
    /// Summed test distance after every stage.
    pub stage_w1: Vec<f64>,
    pub final_active: f64,
    pub test_deltas: Vec<f64>,
}

struct Problem {
    data: HyperelasticData,
    target: RegressionTarget<StressModel>,
    test_points: Vec<StrainFeatures>,
    /// `[point][replica][component]`.
    reference: Vec<Vec<Vec<f64>>>,
    ref_point: StrainFeatures,
    ref_reference: Vec<Vec<f64>>,
}

fn replicas(rng: &mut ChaCha8Rng, stress: &[f64], noise: f64, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            stress
                .iter()
                .map(|&s| {
                    let eta: f64 = rng.sample(StandardNormal);
                    s * (1.0 + noise * eta)
                })
                .collect()
        })
        .collect()
}

impl Problem {
    fn build(config: &RunConfig) -> Result<Self> {
        let truth = TruthModel::default();
        let data = generate_data(&truth, &config.data, config.seed)?;
        let sigma = config.likelihood.sigma(config.data.noise, data.train.output_rms());
        let target = RegressionTarget::new(StressModel, data.train.clone(), sigma * sigma)?;
        let test_points = data
            .test
            .inputs
            .iter()
            .map(|x| StressModel.prepare(x))
            .collect::<Result<Vec<_>>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(REPLICA_STREAM);
        let reference = data
            .test
            .outputs
            .iter()
            .map(|s| replicas(&mut rng, s, config.data.noise, config.w1_replicas))
            .collect();
        let zero = nalgebra::Matrix3::zeros();
        let ref_point = StressModel.prepare(&to_voigt(&zero))?;
        let ref_stress = to_voigt(&stress_from_potential(&truth, &zero)?);
        let ref_reference = replicas(&mut rng, &ref_stress, config.data.noise, config.w1_replicas);
        Ok(Self {
            data,
            target,
            test_points,
            reference,
            ref_point,
            ref_reference,
        })
    }

    fn arch(ens: &Ensemble) -> Result<&Architecture> {
        ens.layout.arch().ok_or_else(|| shape("hyperelastic ensembles are networks"))
    }

    fn test_w1(&self, ens: &Ensemble) -> Result<W1Profile> {
        let preds = ensemble_predictions(&StressModel, Self::arch(ens)?, &ens.particles, &self.test_points)?;
        pushforward_w1(&preds, &self.reference)
    }

    /// Per test point, component-averaged `|ensemble mean − truth|` and
    /// ensemble standard deviation.
    fn bias_spread(&self, ens: &Ensemble) -> Result<Vec<(f64, f64)>> {
        let preds = ensemble_predictions(&StressModel, Self::arch(ens)?, &ens.particles, &self.test_points)?;
        Ok(preds
            .iter()
            .zip(&self.data.test.outputs)
            .map(|(p, truth)| {
                let n = p.len() as f64;
                let (mut bias, mut spread) = (0.0, 0.0);
                for (c, t) in truth.iter().enumerate() {
                    let mean = p.iter().map(|s| s[c]).sum::<f64>() / n;
                    let var = p.iter().map(|s| (s[c] - mean).powi(2)).sum::<f64>() / n;
                    bias += (mean - t).abs();
                    spread += var.sqrt();
                }
                (bias / truth.len() as f64, spread / truth.len() as f64)
            })
            .collect())
    }

    fn reference_w1(&self, ens: &Ensemble) -> Result<f64> {
        let preds = ensemble_predictions(&StressModel, Self::arch(ens)?, &ens.particles, std::slice::from_ref(&self.ref_point))?;
        Ok(pushforward_w1(&preds, std::slice::from_ref(&self.ref_reference))?.sum)
    }
}

struct Logger<'a> {
    problem: &'a Problem,
    dir: Option<&'a RunDir>,
    metrics: Option<MetricsLog>,
    log_every: usize,
    svgd: &'a SvgdConfig,
    stage_w1: Vec<f64>,
    stage_rows: Vec<Vec<String>>,
}

impl Observer for Logger<'_> {
    fn iteration(&mut self, ens: &Ensemble, r: &IterationRecord) -> Result<()> {
        let Some(metrics) = self.metrics.as_mut() else {
            return Ok(());
        };
        let w1 = if r.iteration % self.log_every == 0 {
            Some(self.problem.test_w1(ens)?.sum)
        } else {
            None
        };
        metrics.write(&MetricsRow {
            iteration: r.iteration,
            stage: r.stage,
            lambda: r.lambda,
            mse: r.step.mse,
            w1_sum: w1,
            bhattacharyya: None,
            active_params: ens.active_params(self.svgd.active_threshold),
            median_pairwise_distance: r.step.median_distance,
        })
    }

    fn stage_end(&mut self, ens: &Ensemble, report: &StageReport) -> Result<()> {
        let w1 = self.problem.test_w1(ens)?.sum;
        self.stage_w1.push(w1);
        let arch = Problem::arch(ens)?;
        let widths: Vec<String> = arch.layer_widths.iter().map(usize::to_string).collect();
        self.stage_rows.push(vec![
            report.stage.to_string(),
            report.lambda.to_string(),
            report.iterations.to_string(),
            report.converged.to_string(),
            report.polish.to_string(),
            report.final_mse.to_string(),
            report.condensed_mse.to_string(),
            report.active_params.to_string(),
            w1.to_string(),
            widths.join("-"),
        ]);
        if let Some(dir) = self.dir {
            ens.save_checkpoint(&dir.checkpoint(&format!("stage{:03}.json", report.stage)), self.svgd)?;
            for (a, p) in ens.particles.iter().enumerate() {
                let g = NetGraph::from_net(LayeredNet::from_params(arch, p)?);
                write_graph_dump(
                    &g,
                    &dir.graph(&format!("stage{:03}_p{a:02}_nodes.csv", report.stage)),
                    &dir.graph(&format!("stage{:03}_p{a:02}_edges.csv", report.stage)),
                )?;
            }
        }
        Ok(())
    }
}

fn execute(config: &RunConfig, dir: Option<&RunDir>) -> Result<HyperelasticOutcome> {
    config.validate()?;
    let problem = Problem::build(config)?;
    let arch = Architecture::icnn(&config.widths)?;
    let mut ens = Ensemble::init_network(&arch, config.particles, config.seed)?;
    if let Some(dir) = dir {
        problem.data.train.write_csv(&dir.path("train.csv"))?;
        problem.data.test.write_csv(&dir.path("test.csv"))?;
        ens.save_checkpoint(&dir.checkpoint("init.json"), &config.svgd)?;
    }
    let mut log = Logger {
        problem: &problem,
        dir,
        metrics: dir.map(|d| MetricsLog::create(&d.path("metrics.csv"))).transpose()?,
        log_every: config.log_every,
        svgd: &config.svgd,
        stage_w1: Vec::new(),
        stage_rows: Vec::new(),
    };
    let report = run_csvgd(&mut ens, &problem.target, &config.svgd, &mut log)?;
    if let Some(m) = log.metrics.as_mut() {
        m.flush()?;
    }
    let w1 = problem.test_w1(&ens)?;
    let w1_at_reference = problem.reference_w1(&ens)?;
    if let Some(dir) = dir {
        ens.save_checkpoint(&dir.checkpoint("final.json"), &config.svgd)?;
        let smooth = moving_average(&w1.per_point, MOVING_AVERAGE_WINDOW);
        let bs = problem.bias_spread(&ens)?;
        write_table(
            &dir.path("w1_profile.csv"),
            &["delta", "F11", "w1", "w1_moving_average", "mean_abs_error", "ensemble_std"],
            problem
                .data
                .test_deltas
                .iter()
                .zip(&w1.per_point)
                .zip(&smooth)
                .zip(&bs)
                .map(|(((d, w), s), (b, sd))| {
                    vec![
                        d.to_string(),
                        (1.0 + d).to_string(),
                        w.to_string(),
                        s.to_string(),
                        b.to_string(),
                        sd.to_string(),
                    ]
                }),
        )?;
        write_table(
            &dir.path("stages.csv"),
            &[
                "stage",
                "lambda",
                "iterations",
                "converged",
                "polish",
                "final_mse",
                "condensed_mse",
                "active_params",
                "w1_sum",
                "widths",
            ],
            log.stage_rows.clone(),
        )?;
    }
    let arch = match &ens.layout {
        ParamLayout::Net(a) => a.clone(),
        ParamLayout::Flat(_) => unreachable!("network ensemble"),
    };
    Ok(HyperelasticOutcome {
        final_active: report.final_active,
        report,
        arch,
        particles: ens.particles,
        w1,
        w1_at_reference,
        stage_w1: log.stage_w1,
        test_deltas: problem.data.test_deltas,
    })
}

/// Runs the hyperelastic study, writing artifacts when `command_line` is
/// given (the README stub records it).
pub fn run_hyperelastic(config: &RunConfig, command_line: Option<&str>) -> Result<HyperelasticOutcome> {
    match command_line {
        Some(cmd) => {
            let dir = RunDir::create(&config.out, config, cmd)?;
            execute(config, Some(&dir))
        }
        None => execute(config, None),
    }
}
