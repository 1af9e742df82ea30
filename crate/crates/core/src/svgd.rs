//! Stein variational gradient descent with staged condensation.
//!
//! One step moves every particle along
//! `g_a = (1/N) Σ_b [κ(θ_b, θ_a) ∇ log p(θ_b | D) + ∇_{θ_b} κ(θ_b, θ_a)]`.
//! [`run_csvgd`] alternates blocks of steps with graph condensation and
//! optionally grows the prior multiplier until accuracy degrades.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condense::{condense_particles, CondenseReport};
use crate::error::{domain, shape, Error, Result};
use crate::kernel::{median_bandwidth, median_pairwise_distance, BandwidthRule, Kernel, KernelSpec};
use crate::likelihood::{ParamLayout, Target};
use crate::net::{Architecture, BlockKind};
use crate::prior::PriorSpec;

pub const CHECKPOINT_FORMAT: &str = "csvgd-checkpoint/1";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Optimizer {
    /// `θ ← θ + ε g`.
    Plain,
    /// Per-coordinate scaling by the accumulated squared gradient,
    /// `h ← h + g²`, `θ ← θ + ε g / (offset + √h)`. Steps shrink roughly as
    /// `1/√k` until the state is reset.
    Adagrad { offset: f64 },
    /// Running root-mean-square instead of a sum: `h ← decay·h + (1−decay)·g²`
    /// (`h = g²` on the first step).
    Rmsprop { decay: f64, offset: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adagrad { offset: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PenaltySchedule {
    Fixed,
    /// Multiply λ by `growth` after every stage whose post-condensation MSE
    /// stays within `(1 + tolerance)` of the best so far.
    Adaptive { growth: f64, tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvgdConfig {
    pub step_size: f64,
    pub optimizer: Optimizer,
    /// Iteration cap for one stage.
    pub stage_iters: usize,
    pub max_stages: usize,
    /// Iteration budget for all stages before the final polish.
    pub max_total_iters: usize,
    /// Iterations of the final polishing stage (0 disables it).
    pub polish_iters: usize,
    /// Step size of the polishing stage; `None` keeps `step_size`.
    pub polish_step_size: Option<f64>,
    /// Relative MSE change over `window` iterations that counts as converged.
    pub tol: f64,
    pub window: usize,
    /// Mean Stein-gradient norm that counts as converged.
    pub grad_tol: f64,
    /// Initial prior; `lambda` is the value polishing reverts to.
    pub prior: PriorSpec,
    pub kernel: KernelSpec,
    pub axis_mask_threshold: f64,
    pub schedule: PenaltySchedule,
    pub condense: bool,
    pub prune_epsilon: f64,
    /// Magnitude above which a weight counts as active.
    pub active_threshold: f64,
}

impl Default for SvgdConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            optimizer: Optimizer::default(),
            stage_iters: 500,
            max_stages: 100,
            max_total_iters: 3500,
            polish_iters: 500,
            polish_step_size: None,
            tol: 1e-4,
            window: 50,
            grad_tol: 1e-8,
            prior: PriorSpec {
                alpha: 0.5,
                lambda: 0.05,
            },
            kernel: KernelSpec {
                beta: 2.0,
                gamma: 1.0,
                bandwidth_rule: BandwidthRule::MedianAdaptive,
            },
            axis_mask_threshold: 1e-2,
            schedule: PenaltySchedule::Fixed,
            condense: true,
            prune_epsilon: 1e-3,
            active_threshold: 1e-3,
        }
    }
}

impl SvgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!("step_size = {} must be > 0", self.step_size)));
        }
        if let Some(e) = self.polish_step_size {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::Config(format!("polish_step_size = {e} must be > 0")));
            }
        }
        for (name, v) in [
            ("tol", self.tol),
            ("grad_tol", self.grad_tol),
            ("axis_mask_threshold", self.axis_mask_threshold),
            ("prune_epsilon", self.prune_epsilon),
            ("active_threshold", self.active_threshold),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be >= 0")));
            }
        }
        match self.optimizer {
            Optimizer::Plain => {}
            Optimizer::Adagrad { offset } => {
                if !(offset > 0.0) {
                    return Err(Error::Config("adagrad needs offset > 0".into()));
                }
            }
            Optimizer::Rmsprop { decay, offset } => {
                if !(0.0..1.0).contains(&decay) || !(offset > 0.0) {
                    return Err(Error::Config("rmsprop needs 0 <= decay < 1 and offset > 0".into()));
                }
            }
        }
        if let PenaltySchedule::Adaptive { growth, tolerance } = self.schedule {
            if !(growth > 1.0) || !(tolerance >= 0.0) {
                return Err(Error::Config("adaptive schedule needs growth > 1 and tolerance >= 0".into()));
            }
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        self.prior.validate()?;
        self.kernel.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// Decimal string; JSON numbers cannot carry 128 bits.
    pub word_pos: String,
}

/// Where a resumable run stands within its schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub best_mse: Option<f64>,
    pub polishing: bool,
    pub finished: bool,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub layout: ParamLayout,
    pub particles: Vec<Vec<f64>>,
    pub iteration: usize,
    pub stage: usize,
    /// Current prior multiplier.
    pub lambda: f64,
    pub schedule: ScheduleState,
    seed: u64,
    rng: ChaCha8Rng,
    opt_state: Vec<Vec<f64>>,
}

impl PartialEq for Ensemble {
    fn eq(&self, other: &Self) -> bool {
        self.layout == other.layout
            && self.particles == other.particles
            && self.iteration == other.iteration
            && self.stage == other.stage
            && self.lambda.to_bits() == other.lambda.to_bits()
            && self.schedule == other.schedule
            && self.rng_state() == other.rng_state()
            && self.opt_state == other.opt_state
    }
}

impl Ensemble {
    pub fn new(layout: ParamLayout, particles: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if particles.is_empty() {
            return Err(shape("an ensemble needs at least one particle"));
        }
        if let Some(p) = particles.iter().find(|p| p.len() != layout.len()) {
            return Err(shape(format!(
                "particle has {} coordinates, layout needs {}",
                p.len(),
                layout.len()
            )));
        }
        let nonneg = layout.nonneg_coordinates();
        for p in &particles {
            if p.iter().zip(&nonneg).any(|(v, m)| *m && *v < 0.0) {
                return Err(domain("particle violates a nonnegativity constraint"));
            }
        }
        Ok(Self {
            layout,
            particles,
            iteration: 0,
            stage: 0,
            lambda: 0.0,
            schedule: ScheduleState::default(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            opt_state: Vec::new(),
        })
    }

    /// Uniform `[−r, r]` weights with `r = sqrt(6 / (fan_in + fan_out))`,
    /// `[0, r]` on nonnegative matrices, zero biases.
    pub fn init_network(arch: &Architecture, n: usize, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = arch.blocks();
        let particles = (0..n)
            .map(|_| {
                let mut p = vec![0.0; arch.num_params()];
                for b in &blocks {
                    if let BlockKind::Weight(k) = b.kind {
                        let r = (6.0 / (b.rows + b.cols) as f64).sqrt();
                        let lo = if arch.nonneg_mask[k] { 0.0 } else { -r };
                        for v in &mut p[b.range()] {
                            *v = rng.gen_range(lo..=r);
                        }
                    }
                }
                p
            })
            .collect();
        let mut ens = Self::new(ParamLayout::Net(arch.clone()), particles, seed)?;
        ens.rng = rng;
        Ok(ens)
    }

    /// Independent `N(mean, std²)` coordinates.
    pub fn init_gaussian(dim: usize, n: usize, mean: f64, std: f64, seed: u64) -> Result<Self> {
        let normal = Normal::new(mean, std).map_err(|e| domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let particles = (0..n)
            .map(|_| (0..dim).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let mut ens = Self::new(ParamLayout::Flat(dim), particles, seed)?;
        ens.rng = rng;
        Ok(ens)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn rng_state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.rng.get_stream(),
            word_pos: self.rng.get_word_pos().to_string(),
        }
    }

    pub fn reset_optimizer(&mut self) {
        self.opt_state.clear();
    }

    /// Mean number of active weights per particle.
    pub fn active_params(&self, threshold: f64) -> f64 {
        let total: usize = self
            .particles
            .iter()
            .map(|p| self.layout.active_count(p, threshold))
            .sum();
        total as f64 / self.len() as f64
    }

    /// Ensemble mean of each coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        let mut m = vec![0.0; self.dim()];
        for p in &self.particles {
            for (mi, v) in m.iter_mut().zip(p) {
                *mi += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    pub fn save_checkpoint(&self, path: &Path, config: &SvgdConfig) -> Result<()> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            layout: self.layout.clone(),
            particles: self.particles.clone(),
            iteration: self.iteration,
            stage: self.stage,
            lambda: self.lambda,
            schedule: self.schedule.clone(),
            rng: self.rng_state(),
            optimizer_state: self.opt_state.clone(),
            config: config.clone(),
        };
        std::fs::write(path, serde_json::to_string(&file)?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, SvgdConfig)> {
        let corrupt = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(corrupt(format!("unknown format tag {:?}", file.format)));
        }
        let word_pos: u128 = file
            .rng
            .word_pos
            .parse()
            .map_err(|_| corrupt("bad rng word position".into()))?;
        let mut ens = Self::new(file.layout, file.particles, file.rng.seed).map_err(|e| corrupt(e.to_string()))?;
        ens.rng.set_stream(file.rng.stream);
        ens.rng.set_word_pos(word_pos);
        ens.iteration = file.iteration;
        ens.stage = file.stage;
        ens.lambda = file.lambda;
        ens.schedule = file.schedule;
        if !file.optimizer_state.is_empty()
            && (file.optimizer_state.len() != ens.len()
                || file.optimizer_state.iter().any(|h| h.len() != ens.dim()))
        {
            return Err(corrupt("optimizer state does not match the particles".into()));
        }
        ens.opt_state = file.optimizer_state;
        Ok((ens, file.config))
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    layout: ParamLayout,
    particles: Vec<Vec<f64>>,
    iteration: usize,
    stage: usize,
    lambda: f64,
    schedule: ScheduleState,
    rng: RngState,
    optimizer_state: Vec<Vec<f64>>,
    config: SvgdConfig,
}

/// The Stein direction for every particle given full log-posterior scores.
///
/// The repulsion on coordinate `j` between `a` and `b` is dropped when both
/// `|θ_{a,j}|` and `|θ_{b,j}|` are below `mask_threshold`.
pub fn stein_gradient(
    particles: &[Vec<f64>],
    scores: &[Vec<f64>],
    kernel: &Kernel,
    mask_threshold: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = particles.len();
    if scores.len() != n {
        return Err(shape(format!("{n} particles but {} scores", scores.len())));
    }
    let dim = particles.first().map_or(0, Vec::len);
    if particles.iter().chain(scores).any(|v| v.len() != dim) {
        return Err(shape("particles and scores must share one layout"));
    }
    // k[a][b] = κ(θ_b, θ_a)
    let k: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| (0..n).map(|b| kernel.eval_unchecked(&particles[b], &particles[a])).collect())
        .collect();
    let inv_n = 1.0 / n as f64;
    Ok((0..n)
        .into_par_iter()
        .map(|a| {
            let ta = &particles[a];
            let mut g = vec![0.0; dim];
            for b in 0..n {
                let kab = k[a][b];
                let tb = &particles[b];
                let sb = &scores[b];
                for j in 0..dim {
                    let mut r = kernel.grad_coord(ta[j] - tb[j], kab);
                    if ta[j].abs() < mask_threshold && tb[j].abs() < mask_threshold {
                        r = 0.0;
                    }
                    g[j] += kab * sb[j] + r;
                }
            }
            g.iter_mut().for_each(|v| *v *= inv_n);
            g
        })
        .collect())
}

/// Diagnostics from one update.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    /// Ensemble-mean data misfit before the update.
    pub mse: f64,
    /// Mean Euclidean norm of the Stein direction.
    pub grad_norm: f64,
    pub median_distance: f64,
    pub gamma: f64,
}

fn first_non_finite(v: &[Vec<f64>]) -> Option<(usize, usize)> {
    v.iter()
        .enumerate()
        .find_map(|(a, g)| g.iter().position(|x| !x.is_finite()).map(|j| (a, j)))
}

/// One Stein update at the ensemble's current λ. Coordinates flagged in
/// `frozen` keep their values.
pub fn svgd_step(
    ens: &mut Ensemble,
    target: &dyn Target,
    config: &SvgdConfig,
    frozen: Option<&[Vec<bool>]>,
) -> Result<StepInfo> {
    let layout = &ens.layout;
    let evals = ens
        .particles
        .par_iter()
        .map(|p| target.evaluate(layout, p))
        .collect::<Result<Vec<_>>>()?;
    let n = ens.len();
    let mse = evals.iter().map(|e| e.mse).sum::<f64>() / n as f64;
    let prior = config.prior.with_lambda(ens.lambda);
    let mut scores: Vec<Vec<f64>> = evals.into_iter().map(|e| e.score).collect();
    for (s, p) in scores.iter_mut().zip(&ens.particles) {
        if s.len() != p.len() {
            return Err(shape("target returned a score of the wrong length"));
        }
        prior.add_score(p, s);
    }
    if let Some((particle, coordinate)) = first_non_finite(&scores) {
        return Err(Error::NonFinite { particle, coordinate });
    }
    let median_distance = median_pairwise_distance(&ens.particles);
    let gamma = match config.kernel.bandwidth_rule {
        BandwidthRule::Fixed => config.kernel.gamma,
        BandwidthRule::MedianAdaptive => median_bandwidth(median_distance, n),
    };
    let kernel = Kernel {
        beta: config.kernel.beta,
        gamma,
    };
    let grads = stein_gradient(&ens.particles, &scores, &kernel, config.axis_mask_threshold)?;
    if let Some((particle, coordinate)) = first_non_finite(&grads) {
        return Err(Error::NonFinite { particle, coordinate });
    }
    let grad_norm = grads
        .iter()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n as f64;

    let eps = config.step_size;
    let nonneg = ens.layout.nonneg_coordinates();
    let fresh = ens.opt_state.is_empty();
    if fresh {
        if !matches!(config.optimizer, Optimizer::Plain) {
            ens.opt_state = vec![vec![0.0; ens.dim()]; n];
        }
    }
    for a in 0..n {
        let g = &grads[a];
        let theta = &mut ens.particles[a];
        let fz = frozen.map(|f| &f[a]);
        for j in 0..g.len() {
            if fz.is_some_and(|f| f[j]) {
                continue;
            }
            let step = match config.optimizer {
                Optimizer::Plain => g[j],
                Optimizer::Rmsprop { decay, offset } => {
                    let h = &mut ens.opt_state[a][j];
                    *h = if fresh {
                        g[j] * g[j]
                    } else {
                        decay * *h + (1.0 - decay) * g[j] * g[j]
                    };
                    g[j] / (offset + h.sqrt())
                }
                Optimizer::Adagrad { offset } => {
                    let h = &mut ens.opt_state[a][j];
                    *h += g[j] * g[j];
                    g[j] / (offset + h.sqrt())
                }
            };
            theta[j] += eps * step;
            if nonneg[j] && theta[j] < 0.0 {
                theta[j] = 0.0;
            }
        }
    }
    ens.iteration += 1;
    Ok(StepInfo {
        mse,
        grad_norm,
        median_distance,
        gamma,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// Iteration count after the update.
    pub iteration: usize,
    pub stage: usize,
    pub lambda: f64,
    pub step: StepInfo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub polish: bool,
    /// Ensemble-mean MSE at the end of the stage, before condensation.
    pub final_mse: f64,
    /// Ensemble-mean MSE after condensation (equals `final_mse` without it).
    pub condensed_mse: f64,
    pub active_params: f64,
    pub median_trace: Vec<f64>,
    pub condense: Option<CondenseReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub lambda_trajectory: Vec<f64>,
    pub total_iterations: usize,
    pub final_mse: f64,
    pub final_active: f64,
}

/// Hooks called by the engine; the default methods do nothing.
pub trait Observer {
    fn iteration(&mut self, _ens: &Ensemble, _record: &IterationRecord) -> Result<()> {
        Ok(())
    }

    fn stage_end(&mut self, _ens: &Ensemble, _report: &StageReport) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl Observer for NoObserver {}

/// Ensemble-mean MSE at the current particles.
pub fn ensemble_mse(ens: &Ensemble, target: &dyn Target) -> Result<f64> {
    let layout = &ens.layout;
    let mses = ens
        .particles
        .par_iter()
        .map(|p| target.evaluate(layout, p).map(|e| e.mse))
        .collect::<Result<Vec<_>>>()?;
    Ok(mses.iter().sum::<f64>() / ens.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StageOptions {
    pub max_iters: usize,
    /// Keep every coordinate that is exactly zero at stage start at zero.
    pub freeze_zeros: bool,
    pub polish: bool,
}

/// Steps until the relative MSE change over `config.window` iterations
/// drops below `config.tol`, the mean gradient norm drops below
/// `config.grad_tol`, or `opts.max_iters` is reached.
pub fn run_stage(
    ens: &mut Ensemble,
    target: &dyn Target,
    config: &SvgdConfig,
    opts: StageOptions,
    observer: &mut dyn Observer,
) -> Result<StageReport> {
    let frozen: Option<Vec<Vec<bool>>> = opts
        .freeze_zeros
        .then(|| ens.particles.iter().map(|p| p.iter().map(|v| *v == 0.0).collect()).collect());
    let mut history: Vec<f64> = Vec::new();
    let mut median_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let info = svgd_step(ens, target, config, frozen.as_deref())?;
        iterations += 1;
        history.push(info.mse);
        median_trace.push(info.median_distance);
        let record = IterationRecord {
            iteration: ens.iteration,
            stage: ens.stage,
            lambda: ens.lambda,
            step: info.clone(),
        };
        observer.iteration(ens, &record)?;
        if info.grad_norm < config.grad_tol {
            converged = true;
            break;
        }
        if history.len() > config.window {
            let old = history[history.len() - 1 - config.window];
            let rel = (info.mse - old).abs() / old.abs().max(f64::MIN_POSITIVE);
            if rel < config.tol {
                converged = true;
                break;
            }
        }
    }
    let final_mse = ensemble_mse(ens, target)?;
    Ok(StageReport {
        stage: ens.stage,
        lambda: ens.lambda,
        iterations,
        converged,
        polish: opts.polish,
        final_mse,
        condensed_mse: final_mse,
        active_params: ens.active_params(config.active_threshold),
        median_trace,
        condense: None,
    })
}

fn condense_ensemble(ens: &mut Ensemble, config: &SvgdConfig) -> Result<Option<CondenseReport>> {
    let arch = match (&ens.layout, config.condense) {
        (ParamLayout::Net(a), true) => a.clone(),
        _ => return Ok(None),
    };
    let out = condense_particles(&arch, &ens.particles, config.prune_epsilon)?;
    // optimizer state follows each surviving coordinate; padding starts fresh
    if !ens.opt_state.is_empty() {
        let carried: Option<Vec<Vec<f64>>> = ens
            .opt_state
            .iter()
            .zip(&out.origin)
            .map(|(h, origin)| {
                origin
                    .as_ref()
                    .map(|o| o.iter().map(|from| from.map_or(0.0, |j| h[j])).collect())
            })
            .collect();
        match carried {
            Some(state) => ens.opt_state = state,
            None => ens.reset_optimizer(),
        }
    }
    ens.layout = ParamLayout::Net(out.arch);
    ens.particles = out.particles;
    let report = out.report;
    Ok(Some(report))
}

/// Staged SVGD with condensation between stages and the configured penalty
/// schedule, followed by a polishing stage at the initial λ on the frozen
/// graph. Resumes from the schedule state stored in the ensemble.
pub fn run_csvgd(
    ens: &mut Ensemble,
    target: &dyn Target,
    config: &SvgdConfig,
    observer: &mut dyn Observer,
) -> Result<RunReport> {
    config.validate()?;
    let lambda0 = config.prior.lambda;
    if ens.stage == 0 && ens.iteration == 0 {
        ens.lambda = lambda0;
        ens.schedule = ScheduleState::default();
    }
    let mut stages = Vec::new();
    let mut lambda_trajectory = Vec::new();
    while !ens.schedule.polishing && !ens.schedule.finished {
        let budget = config.max_total_iters.saturating_sub(ens.iteration).min(config.stage_iters);
        if budget == 0 || ens.stage >= config.max_stages {
            ens.schedule.polishing = true;
            break;
        }
        lambda_trajectory.push(ens.lambda);
        // growth stages restart the adaptive step sizes; the polish keeps
        // the state carried through the last condensation
        ens.reset_optimizer();
        let mut report = run_stage(
            ens,
            target,
            config,
            StageOptions {
                max_iters: budget,
                // pruned edges are gone from the graph
                freeze_zeros: config.condense,
                polish: false,
            },
            observer,
        )?;
        report.condense = condense_ensemble(ens, config)?;
        if report.condense.is_some() {
            report.condensed_mse = ensemble_mse(ens, target)?;
            report.active_params = ens.active_params(config.active_threshold);
        }
        let mse = report.condensed_mse;
        ens.stage += 1;
        match config.schedule {
            PenaltySchedule::Fixed => {}
            PenaltySchedule::Adaptive { growth, tolerance } => {
                let best = ens.schedule.best_mse.unwrap_or(f64::INFINITY);
                if mse <= (1.0 + tolerance) * best {
                    ens.schedule.best_mse = Some(mse.min(best));
                    ens.lambda *= growth;
                } else {
                    ens.schedule.polishing = true;
                }
            }
        }
        observer.stage_end(ens, &report)?;
        stages.push(report);
    }
    if ens.schedule.polishing && !ens.schedule.finished {
        ens.lambda = lambda0;
        if config.polish_iters > 0 {
            lambda_trajectory.push(ens.lambda);
            let polish_config = SvgdConfig {
                step_size: config.polish_step_size.unwrap_or(config.step_size),
                ..config.clone()
            };
            let report = run_stage(
                ens,
                target,
                &polish_config,
                StageOptions {
                    max_iters: config.polish_iters,
                    freeze_zeros: true,
                    polish: true,
                },
                observer,
            )?;
            ens.stage += 1;
            observer.stage_end(ens, &report)?;
            stages.push(report);
        }
        ens.schedule.finished = true;
    }
    let final_mse = ensemble_mse(ens, target)?;
    Ok(RunReport {
        stages,
        lambda_trajectory,
        total_iterations: ens.iteration,
        final_mse,
        final_active: ens.active_params(config.active_threshold),
    })
}
