//! One lifetime: a block of trials on a single task, with activations and
//! plastic weights carried from trial to trial.

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{Agent, Genome, NetConfig, PlasticState};
use crate::seed::{derive_seed, stream, Domain, Stream};
use crate::task::{run_trial, sample_stimuli, IoLayout, TaskId, TrialPlan, TrialProtocol, TrialSchedule};

#[derive(Clone, Debug, PartialEq)]
pub struct LifetimeConfig {
    pub n_trials: usize,
    /// Trials at the end of the block that make up the loss.
    pub loss_window: usize,
    pub record_trials: BTreeSet<usize>,
    pub schedule: TrialSchedule,
    pub n_feedback: usize,
    /// Keep the final plastic state in the result.
    pub keep_final_plastic: bool,
}

impl Default for LifetimeConfig {
    fn default() -> Self {
        LifetimeConfig {
            n_trials: 400,
            loss_window: 100,
            record_trials: BTreeSet::new(),
            schedule: TrialSchedule::default(),
            n_feedback: 1,
            keep_final_plastic: false,
        }
    }
}

impl LifetimeConfig {
    pub fn validate(&self, net: &NetConfig) -> Result<()> {
        if self.n_trials == 0 || self.loss_window == 0 || self.loss_window > self.n_trials {
            return Err(Error::usage(format!(
                "need 0 < loss_window <= n_trials (got {} and {})",
                self.loss_window, self.n_trials
            )));
        }
        self.protocol(net).map(|_| ())
    }

    pub fn protocol(&self, net: &NetConfig) -> Result<TrialProtocol> {
        TrialProtocol::new(
            self.schedule.clone(),
            IoLayout::new(net.n_neurons, self.n_feedback)?,
            net.dt_ms,
        )
    }
}

/// Responses of one recorded trial, with its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub trial: usize,
    pub s1: u8,
    pub s2: u8,
    pub target: u8,
    /// steps × N responses.
    pub r: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LifetimeResult {
    pub loss: f64,
    pub errors: Vec<f64>,
    pub corrects: Vec<bool>,
    pub recordings: BTreeMap<usize, Recording>,
    pub final_plastic: Option<PlasticState>,
}

impl LifetimeResult {
    /// Fraction correct over the last `window` trials (all trials if fewer).
    pub fn frac_correct_last(&self, window: usize) -> f64 {
        let start = self.corrects.len().saturating_sub(window);
        let tail = &self.corrects[start..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|&&c| c).count() as f64 / tail.len() as f64
    }

    pub fn frac_correct(&self) -> f64 {
        self.frac_correct_last(self.corrects.len())
    }
}

/// Mean error over the last `window` trials.
pub fn window_loss(errors: &[f64], window: usize) -> f64 {
    let start = errors.len().saturating_sub(window);
    let tail = &errors[start..];
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Runs `life.n_trials` trials of `task` from a zeroed state. The lifetime's
/// stimuli and perturbations all come from the stream seeded by `seed`.
pub fn run_lifetime(
    genome: &Genome,
    task: TaskId,
    seed: u64,
    net: &NetConfig,
    life: &LifetimeConfig,
) -> Result<LifetimeResult> {
    life.validate(net)?;
    let protocol = life.protocol(net)?;
    let mut agent = Agent::new(genome, net)?;
    let mut rng = stream(seed);
    let mut result = LifetimeResult {
        loss: f64::NAN,
        errors: Vec::with_capacity(life.n_trials),
        corrects: Vec::with_capacity(life.n_trials),
        recordings: BTreeMap::new(),
        final_plastic: None,
    };
    if let Err(cause) = run_block(&mut agent, task, life.n_trials, &protocol, &mut rng, &life.record_trials, &mut result) {
        result.loss = window_loss(&result.errors, life.loss_window);
        return Err(Error::LifetimeAborted {
            partial: Box::new(result),
            cause: Box::new(cause),
        });
    }
    result.loss = window_loss(&result.errors, life.loss_window);
    if life.keep_final_plastic {
        result.final_plastic = Some(agent.plastic());
    }
    Ok(result)
}

fn run_block(
    agent: &mut Agent<'_>,
    task: TaskId,
    n_trials: usize,
    protocol: &TrialProtocol,
    rng: &mut Stream,
    record: &BTreeSet<usize>,
    out: &mut LifetimeResult,
) -> Result<()> {
    for trial in 0..n_trials {
        let (s1, s2) = sample_stimuli(rng);
        let plan = TrialPlan { task, s1, s2 };
        let wants = record.contains(&trial);
        let res = run_trial(agent, &plan, protocol, rng, wants).map_err(|e| match e {
            Error::Numeric { step, detail, .. } => Error::Numeric {
                trial: Some(trial),
                step,
                detail,
            },
            other => other,
        })?;
        out.errors.push(res.error);
        out.corrects.push(res.correct);
        if let Some(r) = res.recorded_r {
            out.recordings.insert(
                trial,
                Recording {
                    trial,
                    s1,
                    s2,
                    target: plan.target(),
                    r,
                },
            );
        }
    }
    Ok(())
}

/// Outcome of one test block inside a curriculum.
#[derive(Clone, Debug, PartialEq)]
pub struct TestEvaluation {
    /// Number of curriculum tasks completed before this test.
    pub after_task: usize,
    pub loss: f64,
    pub frac_correct: f64,
    /// SHA-256 of the plastic weights before the test and after the rollback.
    pub p_hash_before: String,
    pub p_hash_after: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CurriculumResult {
    pub block_tasks: Vec<TaskId>,
    pub block_losses: Vec<f64>,
    pub block_frac_correct: Vec<f64>,
    pub tests: Vec<TestEvaluation>,
}

impl CurriculumResult {
    /// Fraction correct pooled over every trial of every test block.
    pub fn pooled_test_accuracy(&self) -> f64 {
        if self.tests.is_empty() {
            return f64::NAN;
        }
        self.tests.iter().map(|t| t.frac_correct).sum::<f64>() / self.tests.len() as f64
    }
}

pub fn hash_matrix(m: &Matrix) -> String {
    let mut h = Sha256::new();
    for v in m.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// One long lifetime over a sequence of tasks without any evolution.
///
/// Plastic weights carry over between tasks. After every `test_every` tasks
/// the test task is run for one block with plasticity active, then the whole
/// agent state is rolled back to its pre-test snapshot. Test blocks draw from
/// their own streams, so the curriculum trajectory does not depend on them.
pub fn run_single_lifetime_curriculum(
    genome: &Genome,
    tasks: &[TaskId],
    test_task: TaskId,
    test_every: usize,
    seed: u64,
    net: &NetConfig,
    life: &LifetimeConfig,
) -> Result<CurriculumResult> {
    if test_every == 0 {
        return Err(Error::usage("test_every must be positive"));
    }
    if let Some(bad) = tasks.iter().find(|&&t| t == test_task || t == test_task.negation()) {
        return Err(Error::contract(format!(
            "curriculum contains {bad}, which is the test task or its negation"
        )));
    }
    let mut out = CurriculumResult::default();
    if tasks.is_empty() {
        return Ok(out);
    }
    life.validate(net)?;
    let protocol = life.protocol(net)?;
    let mut agent = Agent::new(genome, net)?;
    let mut rng = stream(derive_seed(seed, Domain::Curriculum, &[]));
    let no_record = BTreeSet::new();

    for (k, &task) in tasks.iter().enumerate() {
        let mut block = LifetimeResult {
            loss: f64::NAN,
            errors: Vec::with_capacity(life.n_trials),
            corrects: Vec::with_capacity(life.n_trials),
            recordings: BTreeMap::new(),
            final_plastic: None,
        };
        run_block(&mut agent, task, life.n_trials, &protocol, &mut rng, &no_record, &mut block)?;
        out.block_tasks.push(task);
        out.block_losses.push(window_loss(&block.errors, life.loss_window));
        out.block_frac_correct.push(block.frac_correct_last(life.loss_window));

        if (k + 1) % test_every == 0 {
            let snapshot = agent.snapshot();
            let before = hash_matrix(&agent.plastic().p);
            let mut test_rng = stream(derive_seed(seed, Domain::CurriculumTest, &[k as u64]));
            let mut test = LifetimeResult {
                loss: f64::NAN,
                errors: Vec::with_capacity(life.n_trials),
                corrects: Vec::with_capacity(life.n_trials),
                recordings: BTreeMap::new(),
                final_plastic: None,
            };
            run_block(&mut agent, test_task, life.n_trials, &protocol, &mut test_rng, &no_record, &mut test)?;
            agent.restore(&snapshot);
            out.tests.push(TestEvaluation {
                after_task: k + 1,
                loss: window_loss(&test.errors, life.loss_window),
                frac_correct: test.frac_correct(),
                p_hash_before: before,
                p_hash_after: hash_matrix(&agent.plastic().p),
            });
        }
    }
    Ok(out)
}
