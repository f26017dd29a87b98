//! Plastic continuous-time recurrent network.
//!
//! The network integrates
//!
//! ```text
//! tau dx/dt   = (W + Pi ⊙ P) r - x,      r = f(x)
//! tau_H dH/dt = Δx r_prevᵀ - H
//! P          <- P + eta R H               (once per reward)
//! ```
//!
//! with forward Euler, where `Δx` is a sparse random node perturbation.
//! Each step runs, in order: integrate, perturb, nonlinearity, clamp, trace
//! update. The trace pairs the perturbation with `r_prev`, the responses that
//! entered the step.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Minimum network size: two inputs, one feedback neuron, two outputs.
pub const MIN_NEURONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Logistic,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-x).exp()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "logistic" => Some(Activation::Logistic),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub n_neurons: usize,
    pub tau_ms: f64,
    pub dt_ms: f64,
    pub tau_h_ms: f64,
    /// Lifetime plasticity rate.
    pub eta: f64,
    /// Per-neuron, per-step perturbation probability.
    pub perturb_prob: f64,
    pub perturb_lo: f64,
    pub perturb_hi: f64,
    pub plasticity_enabled: bool,
    /// Binary N×N gate on plasticity. Gates both `Pi` in the effective
    /// weights and the reward update of `P`.
    pub plasticity_mask: Option<Matrix>,
    pub activation: Activation,
    /// When set, rewards are baseline-subtracted with a running mean updated
    /// at this rate. Off by default.
    pub reward_baseline_rate: Option<f64>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            n_neurons: 70,
            tau_ms: 100.0,
            dt_ms: 20.0,
            tau_h_ms: 1000.0,
            eta: 0.03,
            perturb_prob: 0.1,
            perturb_lo: -0.5,
            perturb_hi: 0.5,
            plasticity_enabled: true,
            plasticity_mask: None,
            activation: Activation::Tanh,
            reward_baseline_rate: None,
        }
    }
}

impl NetConfig {
    pub fn with_neurons(n_neurons: usize) -> Self {
        NetConfig {
            n_neurons,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::usage(m));
        if self.n_neurons < MIN_NEURONS {
            return bad(format!(
                "n_neurons = {} but at least {MIN_NEURONS} are required",
                self.n_neurons
            ));
        }
        if !(self.dt_ms > 0.0 && self.dt_ms < self.tau_ms && self.dt_ms <= self.tau_h_ms) {
            return bad(format!(
                "need 0 < dt_ms < tau_ms and dt_ms <= tau_h_ms (dt={}, tau={}, tau_h={})",
                self.dt_ms, self.tau_ms, self.tau_h_ms
            ));
        }
        if !self.eta.is_finite() {
            return bad("eta must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.perturb_prob) {
            return bad(format!("perturb_prob = {} outside [0, 1]", self.perturb_prob));
        }
        if !(self.perturb_lo < self.perturb_hi) || !self.perturb_lo.is_finite() || !self.perturb_hi.is_finite() {
            return bad(format!(
                "need perturb_lo < perturb_hi (got {}, {})",
                self.perturb_lo, self.perturb_hi
            ));
        }
        if let Some(mask) = &self.plasticity_mask {
            if mask.shape() != (self.n_neurons, self.n_neurons) {
                return bad(format!(
                    "plasticity mask is {:?}, network has {} neurons",
                    mask.shape(),
                    self.n_neurons
                ));
            }
            if mask.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
                return bad("plasticity mask must be binary".into());
            }
        }
        if let Some(rate) = self.reward_baseline_rate {
            if !(rate > 0.0 && rate <= 1.0) {
                return bad(format!("reward baseline rate {rate} outside (0, 1]"));
            }
        }
        Ok(())
    }

    /// Euler factor `dt / tau` for activations.
    pub fn activation_rate(&self) -> f64 {
        self.dt_ms / self.tau_ms
    }

    /// Euler factor `dt / tau_H` for the eligibility trace.
    pub fn trace_rate(&self) -> f64 {
        self.dt_ms / self.tau_h_ms
    }
}

/// Mask that is one on the block formed by the last `k` rows and the last `k`
/// columns, zero elsewhere.
pub fn last_block_mask(n: usize, k: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    let start = n.saturating_sub(k);
    for i in start..n {
        for j in start..n {
            m[(i, j)] = 1.0;
        }
    }
    m
}

/// Evolved parameters: innate weights and per-connection plasticity gains.
#[derive(Clone, Debug, PartialEq)]
pub struct Genome {
    pub w: Matrix,
    pub pi: Matrix,
}

impl Genome {
    pub fn new(w: Matrix, pi: Matrix) -> Result<Self> {
        if !w.is_square() || w.shape() != pi.shape() {
            return Err(Error::contract(format!(
                "genome matrices must be square and equal in shape (W {:?}, Pi {:?})",
                w.shape(),
                pi.shape()
            )));
        }
        if w.rows() < MIN_NEURONS {
            return Err(Error::contract(format!(
                "genome has {} neurons, need at least {MIN_NEURONS}",
                w.rows()
            )));
        }
        if !w.all_finite() || !pi.all_finite() {
            return Err(Error::contract("genome contains non-finite entries"));
        }
        Ok(Genome { w, pi })
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    /// Length of the flat parameter vector, `2 N²`.
    pub fn param_count(&self) -> usize {
        2 * self.n() * self.n()
    }

    /// `W` followed by `Pi`, both row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.w.as_slice());
        v.extend_from_slice(self.pi.as_slice());
        v
    }

    pub fn from_flat(n: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != 2 * n * n {
            return Err(Error::contract(format!(
                "flat genome has {} entries, expected {}",
                theta.len(),
                2 * n * n
            )));
        }
        let (w, pi) = theta.split_at(n * n);
        Genome::new(
            Matrix::from_vec(n, n, w.to_vec())?,
            Matrix::from_vec(n, n, pi.to_vec())?,
        )
    }
}

/// Within-lifetime learned state.
#[derive(Clone, Debug, PartialEq)]
pub struct PlasticState {
    /// Plastic weights.
    pub p: Matrix,
    /// Hebbian eligibility trace.
    pub h: Matrix,
}

impl PlasticState {
    pub fn zeros(n: usize) -> Self {
        PlasticState {
            p: Matrix::zeros(n, n),
            h: Matrix::zeros(n, n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuralState {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub step_in_trial: usize,
}

impl NeuralState {
    pub fn zeros(n: usize) -> Self {
        NeuralState {
            x: vec![0.0; n],
            r: vec![0.0; n],
            step_in_trial: 0,
        }
    }
}

/// Neurons whose response is overwritten this step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClampSpec {
    pairs: Vec<(usize, f64)>,
}

impl ClampSpec {
    pub fn none() -> Self {
        ClampSpec::default()
    }

    pub fn new(pairs: Vec<(usize, f64)>, n_neurons: usize) -> Result<Self> {
        for (k, &(i, v)) in pairs.iter().enumerate() {
            if i >= n_neurons {
                return Err(Error::contract(format!(
                    "clamp index {i} out of range for {n_neurons} neurons"
                )));
            }
            if pairs[..k].iter().any(|&(j, _)| j == i) {
                return Err(Error::contract(format!("neuron {i} clamped twice")));
            }
            if !v.is_finite() {
                return Err(Error::contract(format!("clamp value for neuron {i} is {v}")));
            }
        }
        Ok(ClampSpec { pairs })
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn gated_pi(genome: &Genome, cfg: &NetConfig) -> Option<Matrix> {
    if !cfg.plasticity_enabled {
        return None;
    }
    let mut pi = genome.pi.clone();
    if let Some(mask) = &cfg.plasticity_mask {
        for (p, m) in pi.as_mut_slice().iter_mut().zip(mask.as_slice()) {
            *p *= m;
        }
    }
    Some(pi)
}

fn check_shapes(genome: &Genome, plastic: &PlasticState, cfg: &NetConfig) -> Result<()> {
    let n = genome.n();
    if plastic.p.shape() != (n, n) || plastic.h.shape() != (n, n) {
        return Err(Error::contract(format!(
            "plastic state {:?} does not match genome size {n}",
            plastic.p.shape()
        )));
    }
    if cfg.n_neurons != n {
        return Err(Error::contract(format!(
            "config expects {} neurons, genome has {n}",
            cfg.n_neurons
        )));
    }
    if let Some(mask) = &cfg.plasticity_mask {
        if mask.shape() != (n, n) {
            return Err(Error::contract("plasticity mask shape mismatch"));
        }
    }
    Ok(())
}

/// Writes the effective weights transposed (column-major), the layout the
/// integration loop consumes.
fn effective_into_transposed(w: &Matrix, pi: Option<&Matrix>, p: &Matrix, out: &mut Matrix) {
    let n = w.rows();
    for i in 0..n {
        let (wr, pr) = (w.row(i), p.row(i));
        match pi {
            None => {
                for j in 0..n {
                    out[(j, i)] = wr[j];
                }
            }
            Some(pi) => {
                let pir = pi.row(i);
                for j in 0..n {
                    out[(j, i)] = wr[j] + pir[j] * pr[j];
                }
            }
        }
    }
}

fn effective_into(w: &Matrix, pi: Option<&Matrix>, p: &Matrix, out: &mut Matrix) {
    match pi {
        None => out.as_mut_slice().copy_from_slice(w.as_slice()),
        Some(pi) => {
            for (((o, &w), &pi), &p) in out
                .as_mut_slice()
                .iter_mut()
                .zip(w.as_slice())
                .zip(pi.as_slice())
                .zip(p.as_slice())
            {
                *o = w + pi * p;
            }
        }
    }
}

/// `W + (Pi ⊙ mask) ⊙ P`, or exactly `W` with plasticity disabled.
pub fn effective_weights(genome: &Genome, plastic: &PlasticState, cfg: &NetConfig) -> Result<Matrix> {
    check_shapes(genome, plastic, cfg)?;
    let pi = gated_pi(genome, cfg);
    let mut out = Matrix::zeros(genome.n(), genome.n());
    effective_into(&genome.w, pi.as_ref(), &plastic.p, &mut out);
    Ok(out)
}

/// Zeroed activations, responses, plastic weights and trace.
pub fn init_lifetime_state(genome: &Genome, _cfg: &NetConfig) -> (NeuralState, PlasticState) {
    let n = genome.n();
    (NeuralState::zeros(n), PlasticState::zeros(n))
}

/// One Euler step of the plastic network. Returns the perturbation vector.
///
/// Recomputes the effective weights on every call; [`Agent`] caches them
/// between rewards and is what the trial loop uses.
pub fn step<R: Rng + ?Sized>(
    state: &mut NeuralState,
    plastic: &mut PlasticState,
    genome: &Genome,
    clamp: &ClampSpec,
    rng: &mut R,
    cfg: &NetConfig,
) -> Result<Vec<f64>> {
    check_shapes(genome, plastic, cfg)?;
    let mut w_eff_t = Matrix::zeros(genome.n(), genome.n());
    effective_into_transposed(&genome.w, gated_pi(genome, cfg).as_ref(), &plastic.p, &mut w_eff_t);
    if state.x.len() != genome.n() || state.r.len() != genome.n() {
        return Err(Error::contract("neural state length does not match genome"));
    }
    let n = genome.n();
    let mut dx = vec![0.0; n];
    let mut drive = vec![0.0; n];
    advance(&w_eff_t, state, plastic, clamp, rng, cfg, &mut dx, &mut drive, None)?;
    Ok(dx)
}

#[allow(clippy::too_many_arguments)]
fn advance<R: Rng + ?Sized>(
    w_eff_t: &Matrix,
    state: &mut NeuralState,
    plastic: &mut PlasticState,
    clamp: &ClampSpec,
    rng: &mut R,
    cfg: &NetConfig,
    dx: &mut [f64],
    drive: &mut [f64],
    lag: Option<&mut [u32]>,
) -> Result<()> {
    let rate = cfg.activation_rate();

    // r still holds r_prev here. Column-wise accumulation, fixed order.
    drive.iter_mut().for_each(|d| *d = 0.0);
    for (j, &rj) in state.r.iter().enumerate() {
        if rj != 0.0 {
            for (d, &w) in drive.iter_mut().zip(w_eff_t.row(j)) {
                *d += w * rj;
            }
        }
    }
    for (x, &d) in state.x.iter_mut().zip(drive.iter()) {
        *x += rate * (d - *x);
    }

    let (p, lo, hi) = (cfg.perturb_prob, cfg.perturb_lo, cfg.perturb_hi);
    for (x, d) in state.x.iter_mut().zip(dx.iter_mut()) {
        *d = if rng.random_bool(p) {
            rng.random_range(lo..hi)
        } else {
            0.0
        };
        *x += *d;
    }

    if let Some(i) = state.x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            trial: None,
            step: state.step_in_trial,
            detail: format!("activation of neuron {i} is {}", state.x[i]),
        });
    }

    if cfg.plasticity_enabled {
        let trace_rate = cfg.trace_rate();
        let decay = 1.0 - trace_rate;
        let n = state.r.len();
        let rows = plastic.h.as_mut_slice().chunks_exact_mut(n);
        match lag {
            // Rows without a kick only accumulate pending decay steps.
            Some(lag) => {
                for ((row, &kick), pending) in rows.zip(dx.iter()).zip(lag.iter_mut()) {
                    if kick == 0.0 {
                        *pending += 1;
                    } else {
                        let scale = decay.powi(*pending as i32 + 1);
                        let gain = trace_rate * kick;
                        for (h, &r) in row.iter_mut().zip(&state.r) {
                            *h = scale * *h + gain * r;
                        }
                        *pending = 0;
                    }
                }
            }
            None => {
                for (row, &kick) in rows.zip(dx.iter()) {
                    let gain = trace_rate * kick;
                    if kick == 0.0 {
                        row.iter_mut().for_each(|h| *h *= decay);
                    } else {
                        for (h, &r) in row.iter_mut().zip(&state.r) {
                            *h = decay * *h + gain * r;
                        }
                    }
                }
            }
        }
    }

    let f = cfg.activation;
    for (r, &x) in state.r.iter_mut().zip(&state.x) {
        *r = f.apply(x);
    }
    for &(i, v) in clamp.pairs() {
        state.r[i] = v;
    }
    state.step_in_trial += 1;
    Ok(())
}

/// `P <- P + eta R H` (gated by the plasticity mask). No-op with plasticity off.
pub fn apply_reward(plastic: &mut PlasticState, r_signal: f64, cfg: &NetConfig) -> Result<()> {
    if !r_signal.is_finite() {
        return Err(Error::Numeric {
            trial: None,
            step: 0,
            detail: format!("reward signal is {r_signal}"),
        });
    }
    if !cfg.plasticity_enabled {
        return Ok(());
    }
    let gain = cfg.eta * r_signal;
    let PlasticState { p, h } = plastic;
    match &cfg.plasticity_mask {
        None => {
            for (p, &h) in p.as_mut_slice().iter_mut().zip(h.as_slice()) {
                *p += gain * h;
            }
        }
        Some(mask) => {
            for ((p, &h), &m) in p.as_mut_slice().iter_mut().zip(h.as_slice()).zip(mask.as_slice()) {
                if m != 0.0 {
                    *p += gain * h;
                }
            }
        }
    }
    if !p.all_finite() {
        return Err(Error::Numeric {
            trial: None,
            step: 0,
            detail: "plastic weights became non-finite".into(),
        });
    }
    Ok(())
}

/// Saved agent state, used to roll back learning.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSnapshot {
    pub neural: NeuralState,
    pub plastic: PlasticState,
    pub baseline: f64,
}

/// One evaluation context: a genome, its running state and the cached
/// effective weight matrix, which only changes when a reward is applied.
pub struct Agent<'a> {
    genome: &'a Genome,
    cfg: &'a NetConfig,
    neural: NeuralState,
    plastic: PlasticState,
    gated_pi: Option<Matrix>,
    /// Effective weights, transposed.
    w_eff_t: Matrix,
    perturbation: Vec<f64>,
    drive: Vec<f64>,
    /// Decay steps not yet applied to each trace row.
    trace_lag: Vec<u32>,
    baseline: f64,
}

impl<'a> Agent<'a> {
    pub fn new(genome: &'a Genome, cfg: &'a NetConfig) -> Result<Self> {
        cfg.validate()?;
        let (neural, plastic) = init_lifetime_state(genome, cfg);
        check_shapes(genome, &plastic, cfg)?;
        let n = genome.n();
        let mut agent = Agent {
            genome,
            cfg,
            neural,
            plastic,
            gated_pi: gated_pi(genome, cfg),
            w_eff_t: Matrix::zeros(n, n),
            perturbation: vec![0.0; n],
            drive: vec![0.0; n],
            trace_lag: vec![0; n],
            baseline: 0.0,
        };
        agent.refresh();
        Ok(agent)
    }

    fn refresh(&mut self) {
        effective_into_transposed(&self.genome.w, self.gated_pi.as_ref(), &self.plastic.p, &mut self.w_eff_t);
    }

    pub fn genome(&self) -> &Genome {
        self.genome
    }

    pub fn config(&self) -> &NetConfig {
        self.cfg
    }

    pub fn n(&self) -> usize {
        self.genome.n()
    }

    pub fn neural(&self) -> &NeuralState {
        &self.neural
    }

    pub fn neural_mut(&mut self) -> &mut NeuralState {
        &mut self.neural
    }

    /// Current plastic state. Traces are decayed lazily inside the agent, so
    /// this returns an up-to-date copy.
    pub fn plastic(&self) -> PlasticState {
        let mut out = self.plastic.clone();
        let decay = 1.0 - self.cfg.trace_rate();
        for (row, &pending) in out.h.as_mut_slice().chunks_exact_mut(self.n()).zip(&self.trace_lag) {
            if pending > 0 {
                let scale = decay.powi(pending as i32);
                row.iter_mut().for_each(|h| *h *= scale);
            }
        }
        out
    }

    fn flush_traces(&mut self) {
        let decay = 1.0 - self.cfg.trace_rate();
        let n = self.n();
        for (row, pending) in self.plastic.h.as_mut_slice().chunks_exact_mut(n).zip(self.trace_lag.iter_mut()) {
            if *pending > 0 {
                let scale = decay.powi(*pending as i32);
                row.iter_mut().for_each(|h| *h *= scale);
                *pending = 0;
            }
        }
    }

    pub fn effective_weights(&self) -> Matrix {
        let n = self.n();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = self.w_eff_t[(j, i)];
            }
        }
        out
    }

    /// Perturbation applied during the most recent step.
    pub fn perturbation(&self) -> &[f64] {
        &self.perturbation
    }

    pub fn step<R: Rng + ?Sized>(&mut self, clamp: &ClampSpec, rng: &mut R) -> Result<()> {
        advance(
            &self.w_eff_t,
            &mut self.neural,
            &mut self.plastic,
            clamp,
            rng,
            self.cfg,
            &mut self.perturbation,
            &mut self.drive,
            Some(&mut self.trace_lag),
        )
    }

    /// Applies a reward and refreshes the cached effective weights.
    pub fn apply_reward(&mut self, reward: f64) -> Result<()> {
        let modulation = match self.cfg.reward_baseline_rate {
            Some(rate) => {
                let m = reward - self.baseline;
                self.baseline += rate * m;
                m
            }
            None => reward,
        };
        self.flush_traces();
        apply_reward(&mut self.plastic, modulation, self.cfg)?;
        if self.cfg.plasticity_enabled {
            self.refresh();
        }
        Ok(())
    }

    pub fn snapshot(&self) -> AgentSnapshot {
        AgentSnapshot {
            neural: self.neural.clone(),
            plastic: self.plastic(),
            baseline: self.baseline,
        }
    }

    pub fn restore(&mut self, snap: &AgentSnapshot) {
        self.neural.clone_from(&snap.neural);
        self.plastic.clone_from(&snap.plastic);
        self.trace_lag.iter_mut().for_each(|l| *l = 0);
        self.baseline = snap.baseline;
        self.refresh();
    }

    pub fn into_state(mut self) -> (NeuralState, PlasticState) {
        self.flush_traces();
        (self.neural, self.plastic)
    }
}
