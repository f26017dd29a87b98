//! Antithetic evolution strategy over `theta = {W, Pi}` with an Adam update.
//!
//! Each generation draws `pop_size / 2` Gaussian mutation vectors and evaluates
//! both `theta0 + eps` and `theta0 - eps` on one lifetime each. Losses are
//! (optionally) standardized, weighted into a loss-gradient estimate and handed
//! to Adam, which descends.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lifetime::{run_lifetime, LifetimeConfig, LifetimeResult};
use crate::matrix::Matrix;
use crate::net::{Genome, NetConfig};
use crate::seed::{derive_seed, lifetime_seed, stream, Domain};
use crate::stats;
use crate::task::{training_set, TaskId};

#[derive(Clone, Debug, PartialEq)]
pub struct EsConfig {
    /// Even; individuals come in antithetic pairs.
    pub pop_size: usize,
    pub sigma_mut: f64,
    pub generations: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Generations between withheld-task evaluations of `theta0`. Zero disables.
    pub test_every: usize,
    /// Lifetimes per withheld-task evaluation.
    pub test_batch: usize,
    pub withheld: TaskId,
    pub master_seed: u64,
    /// Standardize losses across the batch before weighting.
    pub standardize: bool,
    pub w_init_scale: f64,
    pub pi_init: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            pop_size: 500,
            sigma_mut: 0.05,
            generations: 1000,
            lr: 0.003,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            test_every: 10,
            test_batch: 500,
            withheld: TaskId::DMS,
            master_seed: 0,
            standardize: true,
            w_init_scale: 1.5,
            pi_init: 0.5,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pop_size == 0 || !self.pop_size.is_multiple_of(2) {
            return Err(Error::usage(format!(
                "pop_size must be a positive even number (got {})",
                self.pop_size
            )));
        }
        if !(self.sigma_mut > 0.0 && self.sigma_mut.is_finite()) {
            return Err(Error::usage(format!("sigma_mut must be > 0 (got {})", self.sigma_mut)));
        }
        if !(self.lr > 0.0)
            || !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return Err(Error::usage("invalid Adam hyperparameters"));
        }
        if self.test_every > 0 && self.test_batch == 0 {
            return Err(Error::usage("test_batch must be positive when testing is enabled"));
        }
        Ok(())
    }
}

/// Generation-0 genome: `W ~ N(0, (w_scale / sqrt(N))²)`, `Pi` constant.
pub fn init_genome_with<R: Rng + ?Sized>(rng: &mut R, n: usize, w_scale: f64, pi_init: f64) -> Result<Genome> {
    let normal = Normal::new(0.0, w_scale / (n as f64).sqrt())
        .map_err(|e| Error::usage(format!("bad weight scale: {e}")))?;
    let w: Vec<f64> = (0..n * n).map(|_| normal.sample(rng)).collect();
    Genome::new(Matrix::from_vec(n, n, w)?, Matrix::filled(n, n, pi_init))
}

pub fn init_genome<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Genome> {
    init_genome_with(rng, n, 1.5, 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AntitheticPair {
    /// `sigma * eps`.
    pub noise: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

pub fn mutate_antithetic<R: Rng + ?Sized>(
    theta0: &[f64],
    rng: &mut R,
    sigma_mut: f64,
    n_pairs: usize,
) -> Vec<AntitheticPair> {
    (0..n_pairs)
        .map(|_| {
            let noise: Vec<f64> = theta0
                .iter()
                .map(|_| sigma_mut * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let plus = theta0.iter().zip(&noise).map(|(t, e)| t + e).collect();
            let minus = theta0.iter().zip(&noise).map(|(t, e)| t - e).collect();
            AntitheticPair { noise, plus, minus }
        })
        .collect()
}

/// Loss-gradient estimate `(1 / (pop * sigma)) * sum_i L~_i eps_i`.
///
/// With `standardize`, `L~` is the z-scored loss (zero gradient when every loss
/// is equal); otherwise it is the raw loss. Summation runs in index order.
pub fn estimate_gradient<N: AsRef<[f64]>>(
    losses: &[f64],
    noises: &[N],
    sigma_mut: f64,
    standardize: bool,
) -> Result<Vec<f64>> {
    if losses.len() != noises.len() || losses.is_empty() {
        return Err(Error::contract(format!(
            "{} losses for {} noise vectors",
            losses.len(),
            noises.len()
        )));
    }
    let dim = noises[0].as_ref().len();
    if noises.iter().any(|e| e.as_ref().len() != dim) {
        return Err(Error::contract("noise vectors differ in length"));
    }
    let weights: Vec<f64> = if standardize {
        let m = stats::mean(losses);
        let s = stats::std_dev(losses);
        if losses.iter().all(|&l| l == losses[0]) || !s.is_finite() {
            return Ok(vec![0.0; dim]);
        }
        losses.iter().map(|l| (l - m) / s).collect()
    } else {
        losses.to_vec()
    };
    let mut grad = vec![0.0; dim];
    for (w, eps) in weights.iter().zip(noises) {
        for (g, e) in grad.iter_mut().zip(eps.as_ref()) {
            *g += w * e;
        }
    }
    let scale = 1.0 / (losses.len() as f64 * sigma_mut);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        AdamState {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }
}

/// Bias-corrected Adam descent step on `theta` for loss gradient `grad`.
pub fn adam_step(theta: &mut [f64], adam: &mut AdamState, grad: &[f64], cfg: &EsConfig) -> Result<()> {
    if theta.len() != grad.len() || adam.m.len() != grad.len() || adam.v.len() != grad.len() {
        return Err(Error::contract("adam_step shapes differ"));
    }
    adam.t += 1;
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi(adam.t as i32);
    let c2 = 1.0 - b2.powi(adam.t as i32);
    for (((th, m), v), &g) in theta.iter_mut().zip(&mut adam.m).zip(&mut adam.v).zip(grad) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *th -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Optimizer state: what a checkpoint stores.
#[derive(Clone, Debug, PartialEq)]
pub struct EsState {
    pub n_neurons: usize,
    pub pop_size: usize,
    /// Next generation to run.
    pub generation: u64,
    pub theta: Vec<f64>,
    pub adam: AdamState,
}

impl EsState {
    pub fn from_genome(genome: &Genome, pop_size: usize) -> Self {
        let theta = genome.to_flat();
        EsState {
            n_neurons: genome.n(),
            pop_size,
            generation: 0,
            adam: AdamState::new(theta.len()),
            theta,
        }
    }

    pub fn genome(&self) -> Result<Genome> {
        Genome::from_flat(self.n_neurons, &self.theta)
    }
}

/// The generation-0 state for a configuration.
pub fn initial_state(cfg: &EsConfig, n_neurons: usize) -> Result<EsState> {
    let mut rng = stream(derive_seed(cfg.master_seed, Domain::GenomeInit, &[]));
    let g = init_genome_with(&mut rng, n_neurons, cfg.w_init_scale, cfg.pi_init)?;
    Ok(EsState::from_genome(&g, cfg.pop_size))
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndividualOutcome {
    pub task: TaskId,
    pub loss: f64,
    /// Fraction correct over the loss window.
    pub frac_correct: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WithheldReport {
    pub task: TaskId,
    pub outcomes: Vec<IndividualOutcome>,
    pub mean_loss: f64,
    pub mean_frac_correct: f64,
    /// Per-trial fraction correct across the batch.
    pub curve_frac_correct: Vec<f64>,
    /// Per-trial mean error across the batch.
    pub curve_error: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationReport {
    pub generation: u64,
    pub individuals: Vec<IndividualOutcome>,
    pub mean_loss: f64,
    pub median_loss: f64,
    pub mean_frac_correct: f64,
    pub withheld: Option<WithheldReport>,
}

/// Receives one report per generation along with the updated state.
pub trait EvolutionSink {
    fn on_generation(&mut self, report: &GenerationReport, state: &EsState) -> Result<()>;
}

impl EvolutionSink for Vec<GenerationReport> {
    fn on_generation(&mut self, report: &GenerationReport, _state: &EsState) -> Result<()> {
        self.push(report.clone());
        Ok(())
    }
}

/// Discards reports.
pub struct NullSink;

impl EvolutionSink for NullSink {
    fn on_generation(&mut self, _report: &GenerationReport, _state: &EsState) -> Result<()> {
        Ok(())
    }
}

/// Runs `batch` lifetimes of `task` on one genome, seeded by `(master, domain, tag, j)`.
pub fn evaluate_batch(
    genome: &Genome,
    task: TaskId,
    batch: usize,
    master_seed: u64,
    tag: u64,
    net: &NetConfig,
    life: &LifetimeConfig,
) -> Result<Vec<LifetimeResult>> {
    (0..batch)
        .into_par_iter()
        .map(|j| {
            let seed = derive_seed(master_seed, Domain::WithheldTest, &[tag, j as u64]);
            run_lifetime(genome, task, seed, net, life)
        })
        .collect()
}

pub fn summarize_withheld(task: TaskId, results: &[LifetimeResult], loss_window: usize) -> WithheldReport {
    let outcomes: Vec<IndividualOutcome> = results
        .iter()
        .map(|r| IndividualOutcome {
            task,
            loss: r.loss,
            frac_correct: r.frac_correct_last(loss_window),
        })
        .collect();
    let n_trials = results.first().map_or(0, |r| r.errors.len());
    let count = results.len().max(1) as f64;
    let curve_frac_correct = (0..n_trials)
        .map(|t| results.iter().filter(|r| r.corrects[t]).count() as f64 / count)
        .collect();
    let curve_error = (0..n_trials)
        .map(|t| results.iter().map(|r| r.errors[t]).sum::<f64>() / count)
        .collect();
    let losses: Vec<f64> = outcomes.iter().map(|o| o.loss).collect();
    let fracs: Vec<f64> = outcomes.iter().map(|o| o.frac_correct).collect();
    WithheldReport {
        task,
        mean_loss: stats::mean(&losses),
        mean_frac_correct: stats::mean(&fracs),
        outcomes,
        curve_frac_correct,
        curve_error,
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub state: EsState,
    pub final_genome: Genome,
}

/// The outer loop. Starts from `start` (or the seeded generation-0 genome)
/// and runs until `cfg.generations` generations have completed.
///
/// Every random draw is keyed by `(master_seed, generation, pair)`, and the
/// gradient is reduced in individual order, so the result does not depend on
/// the number of worker threads.
pub fn run_evolution(
    cfg: &EsConfig,
    net: &NetConfig,
    life: &LifetimeConfig,
    start: Option<EsState>,
    sink: &mut dyn EvolutionSink,
) -> Result<EvolutionOutcome> {
    cfg.validate()?;
    net.validate()?;
    life.validate(net)?;
    let mut state = match start {
        Some(s) => s,
        None => initial_state(cfg, net.n_neurons)?,
    };
    if state.n_neurons != net.n_neurons || state.theta.len() != 2 * net.n_neurons * net.n_neurons {
        return Err(Error::contract(format!(
            "starting state has {} neurons, network config {}",
            state.n_neurons, net.n_neurons
        )));
    }
    state.pop_size = cfg.pop_size;
    let train = training_set(cfg.withheld);
    let n = net.n_neurons;
    let n_pairs = cfg.pop_size / 2;

    while (state.generation as usize) < cfg.generations {
        let gen = state.generation;

        let withheld = if cfg.test_every > 0 && gen % cfg.test_every as u64 == 0 {
            let genome = state.genome()?;
            let results = evaluate_batch(&genome, cfg.withheld, cfg.test_batch, cfg.master_seed, gen, net, life)
                .map_err(|e| generation_failure(gen, "withheld evaluation", e))?;
            Some(summarize_withheld(cfg.withheld, &results, life.loss_window))
        } else {
            None
        };

        let mut task_rng = stream(derive_seed(cfg.master_seed, Domain::TaskAssignment, &[gen]));
        let tasks: Vec<TaskId> = (0..n_pairs)
            .map(|_| train[task_rng.random_range(0..train.len())])
            .collect();
        let mut mut_rng = stream(derive_seed(cfg.master_seed, Domain::Mutation, &[gen]));
        let pairs = mutate_antithetic(&state.theta, &mut mut_rng, cfg.sigma_mut, n_pairs);

        let results: Vec<Result<LifetimeResult>> = (0..cfg.pop_size)
            .into_par_iter()
            .map(|i| {
                let pair = &pairs[i / 2];
                let theta = if i % 2 == 0 { &pair.plus } else { &pair.minus };
                let genome = Genome::from_flat(n, theta)?;
                run_lifetime(
                    &genome,
                    tasks[i / 2],
                    lifetime_seed(cfg.master_seed, gen, i as u64),
                    net,
                    life,
                )
            })
            .collect();

        let mut individuals = Vec::with_capacity(cfg.pop_size);
        for (i, r) in results.into_iter().enumerate() {
            let r = r.map_err(|e| generation_failure(gen, &format!("individual {i} (task {})", tasks[i / 2]), e))?;
            individuals.push(IndividualOutcome {
                task: tasks[i / 2],
                loss: r.loss,
                frac_correct: r.frac_correct_last(life.loss_window),
            });
        }
        let losses: Vec<f64> = individuals.iter().map(|o| o.loss).collect();
        // Unit-variance directions: the perturbation is sigma * eps.
        let inv_sigma = 1.0 / cfg.sigma_mut;
        let noises: Vec<Vec<f64>> = pairs
            .iter()
            .flat_map(|p| {
                let eps: Vec<f64> = p.noise.iter().map(|e| e * inv_sigma).collect();
                let neg = eps.iter().map(|e| -e).collect();
                [eps, neg]
            })
            .collect();
        drop(pairs);
        let grad = estimate_gradient(&losses, &noises, cfg.sigma_mut, cfg.standardize)?;
        adam_step(&mut state.theta, &mut state.adam, &grad, cfg)?;
        state.generation += 1;

        let fracs: Vec<f64> = individuals.iter().map(|o| o.frac_correct).collect();
        let report = GenerationReport {
            generation: gen,
            mean_loss: stats::mean(&losses),
            median_loss: stats::median(&losses),
            mean_frac_correct: stats::mean(&fracs),
            individuals,
            withheld,
        };
        sink.on_generation(&report, &state)?;
    }

    let final_genome = state.genome()?;
    Ok(EvolutionOutcome { state, final_genome })
}

fn generation_failure(gen: u64, what: &str, e: Error) -> Error {
    let detail = match &e {
        Error::LifetimeAborted { partial, cause } => {
            format!("{cause} after {} completed trials", partial.errors.len())
        }
        other => other.to_string(),
    };
    Error::Numeric {
        trial: None,
        step: 0,
        detail: format!("generation {gen}, {what}: {detail}"),
    }
}
