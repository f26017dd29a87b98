//! Binary two-stimulus tasks and the within-trial protocol.
//!
//! A task maps two successive binary stimuli to a binary response. There are
//! sixteen such mappings; task `id` answers `bit (2 s1 + s2)` of `id`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::net::{Agent, ClampSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(u8);

impl TaskId {
    /// Delayed match-to-sample (XNOR).
    pub const DMS: TaskId = TaskId(9);
    /// Delayed non-match-to-sample (XOR).
    pub const DNMS: TaskId = TaskId(6);
    pub const NAND: TaskId = TaskId(7);
    pub const REPORT_FIRST: TaskId = TaskId(12);
    /// Respond 1 only for the stimulus sequence (1, 0).
    pub const ONE_ZERO: TaskId = TaskId(4);

    pub fn new(id: u8) -> Result<Self> {
        if id < 16 {
            Ok(TaskId(id))
        } else {
            Err(Error::usage(format!("task id {id} outside 0..=15")))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = TaskId> {
        (0..16).map(TaskId)
    }

    pub fn negation(self) -> TaskId {
        TaskId(15 - self.0)
    }

    pub fn target(self, s1: u8, s2: u8) -> u8 {
        debug_assert!(s1 < 2 && s2 < 2);
        (self.0 >> (2 * s1 + s2)) & 1
    }

    pub fn name(self) -> Option<&'static str> {
        match self {
            TaskId::DMS => Some("dms"),
            TaskId::DNMS => Some("dnms"),
            TaskId::NAND => Some("nand"),
            TaskId::REPORT_FIRST => Some("report-first"),
            TaskId::ONE_ZERO => Some("one-zero"),
            _ => None,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.name() {
            Some(name) => f.write_str(name),
            None => write!(f, "{}", self.0),
        }
    }
}

pub fn target(task: TaskId, s1: u8, s2: u8) -> u8 {
    task.target(s1, s2)
}

/// Resolves a task name or a raw id in `0..=15`.
pub fn named_task(name: &str) -> Result<TaskId> {
    match name.trim().to_ascii_lowercase().as_str() {
        "dms" => Ok(TaskId::DMS),
        "dnms" => Ok(TaskId::DNMS),
        "nand" => Ok(TaskId::NAND),
        "report-first" => Ok(TaskId::REPORT_FIRST),
        "one-zero" => Ok(TaskId::ONE_ZERO),
        other => other
            .parse::<u8>()
            .map_err(|_| {
                Error::usage(format!(
                    "unknown task '{name}' (expected dms, dnms, nand, report-first, one-zero or 0-15)"
                ))
            })
            .and_then(TaskId::new),
    }
}

/// All tasks except the withheld one and its logical negation.
pub fn training_set(withheld: TaskId) -> Vec<TaskId> {
    TaskId::all()
        .filter(|&t| t != withheld && t != withheld.negation())
        .collect()
}

/// Half-open interval `[start_ms, end_ms)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub start_ms: f64,
    pub end_ms: f64,
}

impl Window {
    pub const fn new(start_ms: f64, end_ms: f64) -> Self {
        Window { start_ms, end_ms }
    }

    /// Step range covered by this window for step length `dt_ms`.
    pub fn steps(&self, dt_ms: f64) -> std::ops::Range<usize> {
        (self.start_ms / dt_ms).round() as usize..(self.end_ms / dt_ms).round() as usize
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start_ms, self.end_ms)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialSchedule {
    pub trial_ms: f64,
    pub pre: Window,
    pub stim1: Window,
    pub delay1: Window,
    pub stim2: Window,
    pub delay2: Window,
    pub response: Window,
    pub delay3: Window,
    pub feedback: Window,
}

impl Default for TrialSchedule {
    fn default() -> Self {
        TrialSchedule {
            trial_ms: 1000.0,
            pre: Window::new(0.0, 100.0),
            stim1: Window::new(100.0, 300.0),
            delay1: Window::new(300.0, 360.0),
            stim2: Window::new(360.0, 460.0),
            delay2: Window::new(460.0, 500.0),
            response: Window::new(500.0, 700.0),
            delay3: Window::new(700.0, 800.0),
            feedback: Window::new(800.0, 1000.0),
        }
    }
}

impl TrialSchedule {
    pub fn windows(&self) -> [(&'static str, Window); 8] {
        [
            ("pre", self.pre),
            ("stim1", self.stim1),
            ("delay1", self.delay1),
            ("stim2", self.stim2),
            ("delay2", self.delay2),
            ("response", self.response),
            ("delay3", self.delay3),
            ("feedback", self.feedback),
        ]
    }

    pub fn steps_per_trial(&self, dt_ms: f64) -> usize {
        (self.trial_ms / dt_ms).round() as usize
    }

    pub fn validate(&self, dt_ms: f64) -> Result<()> {
        let on_grid = |v: f64| ((v / dt_ms) - (v / dt_ms).round()).abs() < 1e-9;
        if !on_grid(self.trial_ms) || self.trial_ms <= 0.0 {
            return Err(Error::usage(format!(
                "trial length {} ms is not a positive multiple of dt = {dt_ms} ms",
                self.trial_ms
            )));
        }
        let mut prev_end = 0.0;
        for (name, w) in self.windows() {
            if !on_grid(w.start_ms) || !on_grid(w.end_ms) {
                return Err(Error::usage(format!("window {name} ({w}) is off the {dt_ms} ms grid")));
            }
            if w.start_ms < prev_end || w.end_ms < w.start_ms || w.end_ms > self.trial_ms {
                return Err(Error::usage(format!(
                    "window {name} ({w}) overlaps its predecessor or leaves the trial"
                )));
            }
            prev_end = w.end_ms;
        }
        for (name, w) in [("stim1", self.stim1), ("stim2", self.stim2), ("response", self.response), ("feedback", self.feedback)] {
            if w.end_ms <= w.start_ms {
                return Err(Error::usage(format!("window {name} is empty")));
            }
        }
        Ok(())
    }
}

/// Which neurons play which role. Inputs are `0, 1`, feedback neurons follow,
/// outputs are always the last two neurons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IoLayout {
    pub n_neurons: usize,
    pub n_feedback: usize,
}

impl IoLayout {
    pub fn new(n_neurons: usize, n_feedback: usize) -> Result<Self> {
        if n_feedback == 0 || n_neurons < 4 + n_feedback {
            return Err(Error::usage(format!(
                "{n_neurons} neurons cannot hold 2 inputs, {n_feedback} feedback and 2 outputs"
            )));
        }
        Ok(IoLayout { n_neurons, n_feedback })
    }

    pub fn input(&self, value: u8) -> usize {
        value as usize
    }

    pub fn feedback(&self) -> std::ops::Range<usize> {
        2..2 + self.n_feedback
    }

    pub fn output(&self, which: u8) -> usize {
        self.n_neurons - 2 + which as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialPlan {
    pub task: TaskId,
    pub s1: u8,
    pub s2: u8,
}

impl TrialPlan {
    pub fn new(task: TaskId, s1: u8, s2: u8) -> Result<Self> {
        if s1 > 1 || s2 > 1 {
            return Err(Error::contract(format!("stimuli must be bits, got ({s1}, {s2})")));
        }
        Ok(TrialPlan { task, s1, s2 })
    }

    pub fn target(&self) -> u8 {
        self.task.target(self.s1, self.s2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub error: f64,
    pub correct: bool,
    /// Response-window mean rate of output neurons 0 and 1.
    pub mean_out: [f64; 2],
    /// Responses after every step (steps × N) when recording was requested.
    pub recorded_r: Option<Matrix>,
}

/// Error against one-hot targets and argmax correctness. Exact ties resolve
/// to output 0.
pub fn score_response(mean_out: [f64; 2], target: u8) -> (f64, bool) {
    let goal = if target == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
    let error = ((mean_out[0] - goal[0]).abs() + (mean_out[1] - goal[1]).abs()) / 2.0;
    let chosen = if mean_out[1] > mean_out[0] { 1 } else { 0 };
    (error, chosen == target)
}

pub fn sample_stimuli<R: Rng + ?Sized>(rng: &mut R) -> (u8, u8) {
    let s1 = rng.random_bool(0.5) as u8;
    let s2 = rng.random_bool(0.5) as u8;
    (s1, s2)
}

/// Precomputed per-step phase of a trial.
#[derive(Clone, Debug)]
pub struct TrialProtocol {
    pub schedule: TrialSchedule,
    pub layout: IoLayout,
    pub dt_ms: f64,
    steps: usize,
    stim1: std::ops::Range<usize>,
    stim2: std::ops::Range<usize>,
    response: std::ops::Range<usize>,
    feedback: std::ops::Range<usize>,
}

impl TrialProtocol {
    pub fn new(schedule: TrialSchedule, layout: IoLayout, dt_ms: f64) -> Result<Self> {
        schedule.validate(dt_ms)?;
        Ok(TrialProtocol {
            steps: schedule.steps_per_trial(dt_ms),
            stim1: schedule.stim1.steps(dt_ms),
            stim2: schedule.stim2.steps(dt_ms),
            response: schedule.response.steps(dt_ms),
            feedback: schedule.feedback.steps(dt_ms),
            schedule,
            layout,
            dt_ms,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn response_steps(&self) -> std::ops::Range<usize> {
        self.response.clone()
    }

    pub fn feedback_onset(&self) -> usize {
        self.feedback.start
    }

    fn stimulus_clamp(&self, value: u8) -> ClampSpec {
        ClampSpec::new(
            vec![(self.layout.input(value), 1.0), (self.layout.input(1 - value), 0.0)],
            self.layout.n_neurons,
        )
        .expect("layout indices are valid")
    }

    fn feedback_clamp(&self, error: f64) -> Result<ClampSpec> {
        ClampSpec::new(
            self.layout.feedback().map(|i| (i, error)).collect(),
            self.layout.n_neurons,
        )
    }
}

/// Runs one trial on the agent's current state (no reset).
///
/// Inputs are clamped one-hot during the two stimulus windows; output rates
/// are averaged over the response window; at feedback onset the agent receives
/// reward `-error` once, and the feedback neurons are clamped to `error` for the
/// rest of the feedback window.
pub fn run_trial<R: Rng + ?Sized>(
    agent: &mut Agent<'_>,
    plan: &TrialPlan,
    protocol: &TrialProtocol,
    rng: &mut R,
    record: bool,
) -> Result<TrialResult> {
    if protocol.layout.n_neurons != agent.n() {
        return Err(Error::contract("trial layout does not match the network size"));
    }
    let n = agent.n();
    let steps = protocol.steps();
    let target = plan.target();
    let free = ClampSpec::none();
    let stim1 = protocol.stimulus_clamp(plan.s1);
    let stim2 = protocol.stimulus_clamp(plan.s2);
    let out0 = protocol.layout.output(0);
    let out1 = protocol.layout.output(1);

    let mut recorded = record.then(|| Matrix::zeros(steps, n));
    let mut sums = [0.0f64; 2];
    let mut scored: Option<(f64, bool, [f64; 2])> = None;
    let mut fb_clamp = ClampSpec::none();

    agent.neural_mut().step_in_trial = 0;
    for t in 0..steps {
        if t == protocol.feedback.start {
            let (error, _, _) = *scored.get_or_insert_with(|| score_now(sums, &protocol.response, target));
            agent.apply_reward(-error).map_err(|e| at_step(e, t))?;
            fb_clamp = protocol.feedback_clamp(error)?;
        }
        let clamp = if protocol.stim1.contains(&t) {
            &stim1
        } else if protocol.stim2.contains(&t) {
            &stim2
        } else if protocol.feedback.contains(&t) {
            &fb_clamp
        } else {
            &free
        };
        agent.step(clamp, rng)?;
        if protocol.response.contains(&t) {
            let r = &agent.neural().r;
            sums[0] += r[out0];
            sums[1] += r[out1];
        }
        if let Some(rec) = recorded.as_mut() {
            rec.row_mut(t).copy_from_slice(&agent.neural().r);
        }
    }
    let (error, correct, mean_out) =
        scored.unwrap_or_else(|| score_now(sums, &protocol.response, target));
    Ok(TrialResult {
        error,
        correct,
        mean_out,
        recorded_r: recorded,
    })
}

fn score_now(sums: [f64; 2], response: &std::ops::Range<usize>, target: u8) -> (f64, bool, [f64; 2]) {
    let len = response.len() as f64;
    let mean = [sums[0] / len, sums[1] / len];
    let (error, correct) = score_response(mean, target);
    (error, correct, mean)
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Numeric { trial, detail, .. } => Error::Numeric { trial, step, detail },
        other => other,
    }
}
