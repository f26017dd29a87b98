//! Cross-temporal decoding of task variables from population activity, and
//! summary statistics of evolved parameters.
//!
//! The decoder is a correlation classifier: for a training timepoint `t1` it
//! averages the training runs of each class into a prototype population
//! vector, then labels each test run at timepoint `t2` with the class whose
//! `t1` prototype correlates best with the run's activity at `t2`.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lifetime::{run_lifetime, LifetimeConfig};
use crate::matrix::Matrix;
use crate::net::{Genome, NetConfig};
use crate::seed::{derive_seed, stream, Domain};
use crate::stats;
use crate::task::TaskId;

/// Returned by [`pearson`] when either vector is constant. Loses every
/// comparison against a real correlation.
pub const ZERO_VARIANCE: f64 = f64::NEG_INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelKind {
    Target,
    Stim1,
    Stim2,
}

impl LabelKind {
    pub const ALL: [LabelKind; 3] = [LabelKind::Target, LabelKind::Stim1, LabelKind::Stim2];

    pub fn name(self) -> &'static str {
        match self {
            LabelKind::Target => "target",
            LabelKind::Stim1 => "stim1",
            LabelKind::Stim2 => "stim2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialPick {
    First,
    Last,
}

impl TrialPick {
    pub fn index(self, n_trials: usize) -> usize {
        match self {
            TrialPick::First => 0,
            TrialPick::Last => n_trials - 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrialPick::First => "first",
            TrialPick::Last => "last",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub tag: String,
    pub task: Option<TaskId>,
    pub trial_index: usize,
}

/// `runs` matrices of shape timesteps × neurons, one per independent lifetime.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityDataset {
    pub runs: Vec<Matrix>,
    pub s1: Vec<u8>,
    pub s2: Vec<u8>,
    pub target: Vec<u8>,
    pub dt_ms: f64,
    pub meta: DatasetMeta,
}

impl ActivityDataset {
    pub fn labels(&self, kind: LabelKind) -> &[u8] {
        match kind {
            LabelKind::Target => &self.target,
            LabelKind::Stim1 => &self.s1,
            LabelKind::Stim2 => &self.s2,
        }
    }

    pub fn timesteps(&self) -> usize {
        self.runs.first().map_or(0, Matrix::rows)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.runs.len();
        if self.s1.len() != n || self.s2.len() != n || self.target.len() != n {
            return Err(Error::Analysis("label vectors differ in length from runs".into()));
        }
        if let Some(first) = self.runs.first() {
            if self.runs.iter().any(|r| r.shape() != first.shape()) {
                return Err(Error::Analysis("runs differ in shape".into()));
            }
        }
        Ok(())
    }
}

/// Runs `n_runs` independent lifetimes and records one trial of each.
pub fn collect_dataset(
    genome: &Genome,
    task: TaskId,
    n_runs: usize,
    pick: TrialPick,
    master_seed: u64,
    net: &NetConfig,
    life: &LifetimeConfig,
) -> Result<ActivityDataset> {
    let index = pick.index(life.n_trials);
    let mut cfg = life.clone();
    cfg.n_trials = index + 1;
    cfg.loss_window = cfg.loss_window.min(cfg.n_trials);
    cfg.record_trials = BTreeSet::from([index]);
    cfg.keep_final_plastic = false;

    let recs = (0..n_runs)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(master_seed, Domain::Dataset, &[k as u64]);
            let mut res = run_lifetime(genome, task, seed, net, &cfg)?;
            res.recordings
                .remove(&index)
                .ok_or_else(|| Error::Analysis(format!("trial {index} was not recorded")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut data = ActivityDataset {
        runs: Vec::with_capacity(n_runs),
        s1: Vec::with_capacity(n_runs),
        s2: Vec::with_capacity(n_runs),
        target: Vec::with_capacity(n_runs),
        dt_ms: net.dt_ms,
        meta: DatasetMeta {
            tag: String::new(),
            task: Some(task),
            trial_index: index,
        },
    };
    for rec in recs {
        data.runs.push(rec.r);
        data.s1.push(rec.s1);
        data.s2.push(rec.s2);
        data.target.push(rec.target);
    }
    Ok(data)
}

/// Sample Pearson correlation, or [`ZERO_VARIANCE`] if either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::contract(format!("pearson on lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::contract("pearson needs at least two samples"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(ZERO_VARIANCE);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Decoding accuracy matrix; entry `(t1, t2)` is the test accuracy at `t2` of
/// the decoder built from training data at `t1`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodingMatrix {
    pub label: LabelKind,
    pub accuracy: Matrix,
    pub dt_ms: f64,
}

impl DecodingMatrix {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.accuracy.rows()).map(|t| self.accuracy[(t, t)]).collect()
    }

    pub fn mean(&self) -> f64 {
        stats::mean(self.accuracy.as_slice())
    }

    /// Longest run of consecutive diagonal entries strictly above `threshold`,
    /// as `(start step, length)`.
    pub fn longest_diagonal_run_above(&self, threshold: f64) -> (usize, usize) {
        let mut best = (0, 0);
        let mut start = 0;
        let mut len = 0;
        for (t, v) in self.diagonal().into_iter().enumerate() {
            if v > threshold {
                if len == 0 {
                    start = t;
                }
                len += 1;
                if len > best.1 {
                    best = (start, len);
                }
            } else {
                len = 0;
            }
        }
        best
    }

    /// CSV with header `t1_ms,t2_ms,accuracy`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t1_ms", "t2_ms", "accuracy"])?;
        let t = self.accuracy.rows();
        for t1 in 0..t {
            for t2 in 0..t {
                out.write_record([
                    format!("{}", t1 as f64 * self.dt_ms),
                    format!("{}", t2 as f64 * self.dt_ms),
                    format!("{}", self.accuracy[(t1, t2)]),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Stratified split: roughly half of each class goes to training, at least one
/// run of every present class, and `n / 2` training runs overall.
fn stratified_split(labels: &[u8], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: [Vec<usize>; 2] = [vec![], vec![]];
    for (i, &l) in labels.iter().enumerate() {
        by_class[(l & 1) as usize].push(i);
    }
    if by_class.iter().any(Vec::is_empty) {
        return Err(Error::Analysis(format!(
            "degenerate labels: class counts {} and {}",
            by_class[0].len(),
            by_class[1].len()
        )));
    }
    let mut rng = stream(seed);
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    let n = labels.len();
    let n_train = n / 2;
    let c0 = by_class[0].len();
    let mut k0 = ((c0 as f64) * n_train as f64 / n as f64).round() as usize;
    k0 = k0.clamp(1, c0);
    let mut k1 = n_train.saturating_sub(k0).clamp(1, by_class[1].len());
    if k0 + k1 > n_train && k0 > 1 {
        k0 = n_train.saturating_sub(k1).max(1);
    }
    k1 = k1.min(by_class[1].len());
    let mut train: Vec<usize> = by_class[0][..k0].iter().chain(&by_class[1][..k1]).copied().collect();
    let mut test: Vec<usize> = by_class[0][k0..].iter().chain(&by_class[1][k1..]).copied().collect();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn decode_with_labels(data: &ActivityDataset, labels: &[u8], kind: LabelKind, split_seed: u64) -> Result<DecodingMatrix> {
    data.validate()?;
    let (train, test) = stratified_split(labels, split_seed)?;
    if test.is_empty() {
        return Err(Error::Analysis("empty test split".into()));
    }
    let t_len = data.timesteps();
    let n = data.runs[0].cols();

    // prototypes[t1][class] = class mean of training runs at t1
    let prototypes: Vec<[Vec<f64>; 2]> = (0..t_len)
        .map(|t| {
            let mut sums = [vec![0.0; n], vec![0.0; n]];
            let mut counts = [0usize; 2];
            for &i in &train {
                let c = labels[i] as usize;
                counts[c] += 1;
                for (s, &v) in sums[c].iter_mut().zip(data.runs[i].row(t)) {
                    *s += v;
                }
            }
            for c in 0..2 {
                sums[c].iter_mut().for_each(|s| *s /= counts[c] as f64);
            }
            sums
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..t_len)
        .into_par_iter()
        .map(|t1| {
            let [p0, p1] = &prototypes[t1];
            (0..t_len)
                .map(|t2| {
                    let mut hits = 0usize;
                    for &i in &test {
                        let v = data.runs[i].row(t2);
                        let c0 = pearson(v, p0)?;
                        let c1 = pearson(v, p1)?;
                        let guess = if c1 > c0 { 1 } else { 0 };
                        hits += (guess == labels[i]) as usize;
                    }
                    Ok(hits as f64 / test.len() as f64)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    Ok(DecodingMatrix {
        label: kind,
        accuracy: Matrix::from_rows(&rows)?,
        dt_ms: data.dt_ms,
    })
}

/// Cross-temporal decoding of `label` with a seeded, stratified half split.
pub fn cross_temporal_decode(data: &ActivityDataset, label: LabelKind, split_seed: u64) -> Result<DecodingMatrix> {
    decode_with_labels(data, data.labels(label), label, split_seed)
}

/// Decoding with labels shuffled across runs.
pub fn shuffled_decode(data: &ActivityDataset, label: LabelKind, seed: u64) -> Result<DecodingMatrix> {
    let mut labels = data.labels(label).to_vec();
    labels.shuffle(&mut stream(derive_seed(seed, Domain::Custom("label-shuffle"), &[])));
    decode_with_labels(data, &labels, label, derive_seed(seed, Domain::DecodeSplit, &[]))
}

/// Mean of `shuffles` independently shuffled decodes: an estimate of the
/// expected decoding matrix under the permutation null.
pub fn permutation_null(data: &ActivityDataset, label: LabelKind, shuffles: usize, seed: u64) -> Result<DecodingMatrix> {
    if shuffles == 0 {
        return Err(Error::Analysis("need at least one shuffle".into()));
    }
    let t = data.timesteps();
    let mut acc = Matrix::zeros(t, t);
    for k in 0..shuffles {
        let m = shuffled_decode(data, label, derive_seed(seed, Domain::Custom("null"), &[k as u64]))?;
        for (a, v) in acc.as_mut_slice().iter_mut().zip(m.accuracy.as_slice()) {
            *a += v;
        }
    }
    acc.as_mut_slice().iter_mut().for_each(|a| *a /= shuffles as f64);
    Ok(DecodingMatrix {
        label,
        accuracy: acc,
        dt_ms: data.dt_ms,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub median_abs: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        Summary {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            median: stats::median(values),
            median_abs: stats::median(&abs),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenomeStats {
    pub w: Summary,
    pub pi: Summary,
    pub p: Summary,
}

pub fn genome_stats(genome: &Genome, plastic_final: &Matrix) -> GenomeStats {
    GenomeStats {
        w: Summary::of(genome.w.as_slice()),
        pi: Summary::of(genome.pi.as_slice()),
        p: Summary::of(plastic_final.as_slice()),
    }
}

impl GenomeStats {
    /// CSV with header `matrix,min,max,median,median_abs`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["matrix", "min", "max", "median", "median_abs"])?;
        for (name, s) in [("W", self.w), ("Pi", self.pi), ("P", self.p)] {
            out.write_record([
                name.to_string(),
                s.min.to_string(),
                s.max.to_string(),
                s.median.to_string(),
                s.median_abs.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
