//! Experiment configuration as flat `section.key = value` text.
//!
//! Every hyperparameter has a key. Unknown keys, malformed values and
//! violated constraints are usage errors naming the offending key.
//! [`ExperimentConfig::to_text`] writes every key, so parsing its output
//! yields the same configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::decode::TrialPick;
use crate::error::{Error, Result};
use crate::es::EsConfig;
use crate::lifetime::LifetimeConfig;
use crate::net::{last_block_mask, Activation, NetConfig};
use crate::task::{named_task, TaskId, Window};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "PLASTINET_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Evolve,
    Test,
    Decode,
    SingleLifetime,
    AblateNoPlasticity,
    /// Twice the neurons, no plasticity.
    AblateDoubled,
    /// Plasticity confined to the last ten rows and columns.
    AblateMask10,
}

impl Mode {
    pub const ALL: [Mode; 7] = [
        Mode::Evolve,
        Mode::Test,
        Mode::Decode,
        Mode::SingleLifetime,
        Mode::AblateNoPlasticity,
        Mode::AblateDoubled,
        Mode::AblateMask10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Evolve => "evolve",
            Mode::Test => "test",
            Mode::Decode => "decode",
            Mode::SingleLifetime => "single-lifetime",
            Mode::AblateNoPlasticity => "ablate-noplast",
            Mode::AblateDoubled => "ablate-2x",
            Mode::AblateMask10 => "ablate-mask10",
        }
    }

    /// Ablations run the evolution loop on a modified configuration.
    pub fn is_ablation(self) -> bool {
        matches!(self, Mode::AblateNoPlasticity | Mode::AblateDoubled | Mode::AblateMask10)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown mode `{s}`")))
    }
}

/// Which neurons carry plasticity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MaskSpec {
    All,
    /// Only entries whose row and column both lie in the last `k` neurons.
    Last(usize),
}

impl MaskSpec {
    fn text(self) -> String {
        match self {
            MaskSpec::All => "all".into(),
            MaskSpec::Last(k) => format!("last:{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub mode: Mode,
    pub out_dir: Option<PathBuf>,
    /// Generations between checkpoints. Zero writes only the final one.
    pub checkpoint_every: usize,
    /// One evolution run per seed.
    pub seeds: Vec<u64>,
    /// Worker threads; zero lets the pool decide.
    pub threads: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            mode: Mode::Evolve,
            out_dir: None,
            checkpoint_every: 50,
            seeds: vec![0],
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeSettings {
    pub runs: usize,
    pub trials: Vec<TrialPick>,
    pub split_seed: u64,
    /// Also decode with shuffled labels.
    pub shuffled_null: bool,
    pub heatmaps: bool,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        DecodeSettings {
            runs: 250,
            trials: vec![TrialPick::First, TrialPick::Last],
            split_seed: 0,
            shuffled_null: false,
            heatmaps: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumSettings {
    /// Number of training blocks in the single lifetime.
    pub length: usize,
    /// Test after every this many blocks.
    pub test_every: usize,
}

impl Default for CurriculumSettings {
    fn default() -> Self {
        CurriculumSettings { length: 1000, test_every: 10 }
    }
}

/// Everything one invocation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub net: NetConfig,
    pub mask: MaskSpec,
    pub life: LifetimeConfig,
    pub es: EsConfig,
    pub run: RunSettings,
    pub decode: DecodeSettings,
    pub curriculum: CurriculumSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            net: NetConfig::default(),
            mask: MaskSpec::All,
            life: LifetimeConfig::default(),
            es: EsConfig::default(),
            run: RunSettings::default(),
            decode: DecodeSettings::default(),
            curriculum: CurriculumSettings::default(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::usage(format!("{key}: cannot parse `{v}` as {}", std::any::type_name::<T>())))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::usage(format!("{key}: expected a boolean, got `{v}`"))),
    }
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn parse_window(key: &str, v: &str) -> Result<Window> {
    let parts: Vec<f64> = parse_list(key, v)?;
    match parts[..] {
        [a, b] => Ok(Window::new(a, b)),
        _ => Err(Error::usage(format!("{key}: expected `start_ms,end_ms`, got `{v}`"))),
    }
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_task(key: &str, v: &str) -> Result<TaskId> {
    named_task(v).map_err(|e| Error::usage(format!("{key}: {e}")))
}

fn parse_pick(key: &str, v: &str) -> Result<TrialPick> {
    match v {
        "first" => Ok(TrialPick::First),
        "last" => Ok(TrialPick::Last),
        _ => Err(Error::usage(format!("{key}: expected `first` or `last`, got `{v}`"))),
    }
}

impl ExperimentConfig {
    /// Reads a config file on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::usage(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        self.validate()
    }

    /// Sets one key.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let net = &mut self.net;
        let life = &mut self.life;
        let sched = &mut life.schedule;
        let es = &mut self.es;
        match key {
            "net.neurons" => net.n_neurons = parse_num(key, v)?,
            "net.tau_ms" => net.tau_ms = parse_num(key, v)?,
            "net.dt_ms" => net.dt_ms = parse_num(key, v)?,
            "net.tau_h_ms" => net.tau_h_ms = parse_num(key, v)?,
            "net.eta" => net.eta = parse_num(key, v)?,
            "net.perturb_prob" => net.perturb_prob = parse_num(key, v)?,
            "net.perturb_lo" => net.perturb_lo = parse_num(key, v)?,
            "net.perturb_hi" => net.perturb_hi = parse_num(key, v)?,
            "net.plasticity" => net.plasticity_enabled = parse_bool(key, v)?,
            "net.activation" => {
                net.activation = match v {
                    "tanh" => Activation::Tanh,
                    "logistic" => Activation::Logistic,
                    _ => return Err(Error::usage(format!("{key}: expected `tanh` or `logistic`, got `{v}`"))),
                }
            }
            "net.reward_baseline_rate" => {
                net.reward_baseline_rate = if v == "none" { None } else { Some(parse_num(key, v)?) }
            }
            "net.mask" => {
                self.mask = if v == "all" {
                    MaskSpec::All
                } else if let Some(k) = v.strip_prefix("last:") {
                    MaskSpec::Last(parse_num(key, k)?)
                } else {
                    return Err(Error::usage(format!("{key}: expected `all` or `last:K`, got `{v}`")));
                }
            }
            "life.trials" => life.n_trials = parse_num(key, v)?,
            "life.loss_window" => life.loss_window = parse_num(key, v)?,
            "life.feedback_neurons" => life.n_feedback = parse_num(key, v)?,
            "life.record_trials" => life.record_trials = parse_list::<usize>(key, v)?.into_iter().collect::<BTreeSet<_>>(),
            "schedule.trial_ms" => sched.trial_ms = parse_num(key, v)?,
            "schedule.pre" => sched.pre = parse_window(key, v)?,
            "schedule.stim1" => sched.stim1 = parse_window(key, v)?,
            "schedule.delay1" => sched.delay1 = parse_window(key, v)?,
            "schedule.stim2" => sched.stim2 = parse_window(key, v)?,
            "schedule.delay2" => sched.delay2 = parse_window(key, v)?,
            "schedule.response" => sched.response = parse_window(key, v)?,
            "schedule.delay3" => sched.delay3 = parse_window(key, v)?,
            "schedule.feedback" => sched.feedback = parse_window(key, v)?,
            "es.popsize" => es.pop_size = parse_num(key, v)?,
            "es.sigma_mut" => es.sigma_mut = parse_num(key, v)?,
            "es.generations" => es.generations = parse_num(key, v)?,
            "es.lr" => es.lr = parse_num(key, v)?,
            "es.adam_beta1" => es.adam_beta1 = parse_num(key, v)?,
            "es.adam_beta2" => es.adam_beta2 = parse_num(key, v)?,
            "es.adam_eps" => es.adam_eps = parse_num(key, v)?,
            "es.test_every" => es.test_every = parse_num(key, v)?,
            "es.test_batch" => es.test_batch = parse_num(key, v)?,
            "es.withheld_task" => es.withheld = parse_task(key, v)?,
            "es.standardize" => es.standardize = parse_bool(key, v)?,
            "es.w_init_scale" => es.w_init_scale = parse_num(key, v)?,
            "es.pi_init" => es.pi_init = parse_num(key, v)?,
            "run.mode" => self.run.mode = v.parse().map_err(|e: Error| Error::usage(format!("{key}: {e}")))?,
            "run.out_dir" => self.run.out_dir = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "run.checkpoint_every" => self.run.checkpoint_every = parse_num(key, v)?,
            "run.seeds" => self.run.seeds = parse_list(key, v)?,
            "run.threads" => self.run.threads = parse_num(key, v)?,
            "decode.runs" => self.decode.runs = parse_num(key, v)?,
            "decode.trials" => {
                self.decode.trials = v.split(',').map(|s| parse_pick(key, s.trim())).collect::<Result<_>>()?
            }
            "decode.split_seed" => self.decode.split_seed = parse_num(key, v)?,
            "decode.shuffled_null" => self.decode.shuffled_null = parse_bool(key, v)?,
            "decode.heatmaps" => self.decode.heatmaps = parse_bool(key, v)?,
            "curriculum.length" => self.curriculum.length = parse_num(key, v)?,
            "curriculum.test_every" => self.curriculum.test_every = parse_num(key, v)?,
            _ => return Err(Error::usage(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Writes every key, in a fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let n = &self.net;
        let l = &self.life;
        let sc = &l.schedule;
        let e = &self.es;
        let w = |win: &Window| format!("{},{}", win.start_ms, win.end_ms);
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("net.neurons", n.n_neurons.to_string());
        line("net.tau_ms", n.tau_ms.to_string());
        line("net.dt_ms", n.dt_ms.to_string());
        line("net.tau_h_ms", n.tau_h_ms.to_string());
        line("net.eta", n.eta.to_string());
        line("net.perturb_prob", n.perturb_prob.to_string());
        line("net.perturb_lo", n.perturb_lo.to_string());
        line("net.perturb_hi", n.perturb_hi.to_string());
        line("net.plasticity", n.plasticity_enabled.to_string());
        line(
            "net.activation",
            match n.activation {
                Activation::Tanh => "tanh".into(),
                Activation::Logistic => "logistic".into(),
            },
        );
        line(
            "net.reward_baseline_rate",
            n.reward_baseline_rate.map_or("none".into(), |r| r.to_string()),
        );
        line("net.mask", self.mask.text());
        line("life.trials", l.n_trials.to_string());
        line("life.loss_window", l.loss_window.to_string());
        line("life.feedback_neurons", l.n_feedback.to_string());
        line("life.record_trials", join(&l.record_trials));
        line("schedule.trial_ms", sc.trial_ms.to_string());
        line("schedule.pre", w(&sc.pre));
        line("schedule.stim1", w(&sc.stim1));
        line("schedule.delay1", w(&sc.delay1));
        line("schedule.stim2", w(&sc.stim2));
        line("schedule.delay2", w(&sc.delay2));
        line("schedule.response", w(&sc.response));
        line("schedule.delay3", w(&sc.delay3));
        line("schedule.feedback", w(&sc.feedback));
        line("es.popsize", e.pop_size.to_string());
        line("es.sigma_mut", e.sigma_mut.to_string());
        line("es.generations", e.generations.to_string());
        line("es.lr", e.lr.to_string());
        line("es.adam_beta1", e.adam_beta1.to_string());
        line("es.adam_beta2", e.adam_beta2.to_string());
        line("es.adam_eps", e.adam_eps.to_string());
        line("es.test_every", e.test_every.to_string());
        line("es.test_batch", e.test_batch.to_string());
        line("es.withheld_task", e.withheld.to_string());
        line("es.standardize", e.standardize.to_string());
        line("es.w_init_scale", e.w_init_scale.to_string());
        line("es.pi_init", e.pi_init.to_string());
        line("run.mode", self.run.mode.name().to_string());
        line(
            "run.out_dir",
            self.run.out_dir.as_ref().map_or(String::new(), |p| p.display().to_string()),
        );
        line("run.checkpoint_every", self.run.checkpoint_every.to_string());
        line("run.seeds", join(&self.run.seeds));
        line("run.threads", self.run.threads.to_string());
        line("decode.runs", self.decode.runs.to_string());
        line("decode.trials", join(self.decode.trials.iter().map(|t| t.name())));
        line("decode.split_seed", self.decode.split_seed.to_string());
        line("decode.shuffled_null", self.decode.shuffled_null.to_string());
        line("decode.heatmaps", self.decode.heatmaps.to_string());
        line("curriculum.length", self.curriculum.length.to_string());
        line("curriculum.test_every", self.curriculum.test_every.to_string());
        s
    }

    /// Applies the configuration changes implied by ablation modes.
    /// Other modes are left alone.
    pub fn apply_mode(&mut self) {
        match self.run.mode {
            Mode::AblateNoPlasticity => self.net.plasticity_enabled = false,
            Mode::AblateDoubled => {
                self.net.n_neurons *= 2;
                self.net.plasticity_enabled = false;
            }
            Mode::AblateMask10 => {
                self.mask = MaskSpec::Last(10);
                self.es.pi_init = 1.5;
            }
            _ => {}
        }
    }

    /// Network config with the plasticity mask materialized.
    pub fn net_config(&self) -> Result<NetConfig> {
        let mut net = self.net.clone();
        net.plasticity_mask = match self.mask {
            MaskSpec::All => None,
            MaskSpec::Last(k) => Some(last_block_mask(net.n_neurons, k)),
        };
        Ok(net)
    }

    /// Evolution config for one seed.
    pub fn es_config(&self, seed: u64) -> EsConfig {
        EsConfig { master_seed: seed, ..self.es.clone() }
    }

    /// SHA-256 of the serialized text, hex encoded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let net = self.net_config()?;
        net.validate()?;
        self.life.validate(&net)?;
        self.es.validate()?;
        if self.run.seeds.is_empty() {
            return Err(Error::usage("run.seeds: at least one seed is required"));
        }
        if self.decode.runs < 4 {
            return Err(Error::usage("decode.runs: at least 4 runs are required"));
        }
        if self.decode.trials.is_empty() {
            return Err(Error::usage("decode.trials: at least one trial is required"));
        }
        if self.curriculum.test_every == 0 {
            return Err(Error::usage("curriculum.test_every must be positive"));
        }
        if self.run.mode == Mode::AblateMask10 && (self.mask != MaskSpec::Last(10) || self.es.pi_init != 1.5) {
            return Err(Error::usage(
                "run.mode: ablate-mask10 requires net.mask = last:10 and es.pi_init = 1.5",
            ));
        }
        Ok(())
    }
}
