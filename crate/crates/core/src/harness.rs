//! Runs a configured experiment and writes its artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.txt                      resolved configuration
//! manifest.json                   config hash, version, sha256 of each file
//! seed-<s>/report.csv             gen,task,loss,frac_correct,is_withheld
//! seed-<s>/curves/gen-<g>.csv     trial,error,correct (withheld batch means)
//! seed-<s>/checkpoints/gen-<g>.ckpt
//! seed-<s>/final.ckpt
//! ```
//!
//! `test`, `decode` and `single-lifetime` write their own files next to the
//! manifest; see [`run_mode`].

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::config::{ExperimentConfig, Mode, OUT_DIR_ENV};
use crate::decode::{self, LabelKind};
use crate::error::{Error, Result};
use crate::es::{self, EsState, EvolutionSink, GenerationReport, WithheldReport};
use crate::lifetime::{run_lifetime, run_single_lifetime_curriculum, LifetimeConfig};
use crate::net::Genome;
use crate::plot;
use crate::seed::{derive_seed, stream, Domain};
use crate::task::{training_set, TaskId};

/// Output directory: explicit setting, then the environment, then
/// `plastinet-out` in the working directory.
pub fn resolve_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.run
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("plastinet-out"))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub mode: String,
    /// Relative path → sha256, sorted by path.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl RunManifest {
    /// Hashes every listed file relative to `root`.
    pub fn build(cfg: &ExperimentConfig, root: &Path, files: &[PathBuf]) -> Result<Self> {
        let mut out = BTreeMap::new();
        for f in files {
            let rel = f.strip_prefix(root).unwrap_or(f).to_string_lossy().replace('\\', "/");
            out.insert(rel, sha256_file(f)?);
        }
        Ok(RunManifest {
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: cfg.run.mode.name().to_string(),
            files: out,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

/// Files produced by one invocation.
#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Final evolution state per seed, for evolve and ablation modes.
    pub states: Vec<(u64, EsState)>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `trial,error,correct` rows.
pub fn write_curve(path: &Path, errors: &[f64], correct: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["trial", "error", "correct"])?;
    for (t, (e, c)) in errors.iter().zip(correct).enumerate() {
        w.write_record([t.to_string(), e.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn report_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(["gen", "task", "loss", "frac_correct", "is_withheld"])?;
    Ok(())
}

fn withheld_rows<W: Write>(w: &mut csv::Writer<W>, generation: u64, report: &WithheldReport) -> Result<()> {
    for o in &report.outcomes {
        w.write_record([
            generation.to_string(),
            o.task.to_string(),
            o.loss.to_string(),
            o.frac_correct.to_string(),
            "1".into(),
        ])?;
    }
    Ok(())
}

/// Streams generation reports to CSV and writes periodic checkpoints.
pub struct CsvSink {
    dir: PathBuf,
    report: csv::Writer<BufWriter<File>>,
    checkpoint_every: usize,
    files: Vec<PathBuf>,
}

impl CsvSink {
    pub fn create(dir: &Path, checkpoint_every: usize) -> Result<Self> {
        let path = dir.join("report.csv");
        let mut report = csv::Writer::from_writer(create(&path)?);
        report_header(&mut report)?;
        Ok(CsvSink {
            dir: dir.to_path_buf(),
            report,
            checkpoint_every,
            files: vec![path],
        })
    }

    pub fn finish(mut self) -> Result<Vec<PathBuf>> {
        self.report.flush()?;
        Ok(self.files)
    }
}

impl EvolutionSink for CsvSink {
    fn on_generation(&mut self, r: &GenerationReport, state: &EsState) -> Result<()> {
        for o in &r.individuals {
            self.report.write_record([
                r.generation.to_string(),
                o.task.to_string(),
                o.loss.to_string(),
                o.frac_correct.to_string(),
                "0".into(),
            ])?;
        }
        if let Some(w) = &r.withheld {
            withheld_rows(&mut self.report, r.generation, w)?;
            let path = self.dir.join("curves").join(format!("gen-{:05}.csv", r.generation));
            write_curve(&path, &w.curve_error, &w.curve_frac_correct)?;
            self.files.push(path);
        }
        self.report.flush()?;
        if self.checkpoint_every > 0 && state.generation.is_multiple_of(self.checkpoint_every as u64) {
            let path = self.dir.join("checkpoints").join(format!("gen-{:05}.ckpt", state.generation));
            fs::create_dir_all(path.parent().unwrap_or(&self.dir))?;
            checkpoint::save(&path, state)?;
            self.files.push(path);
        }
        Ok(())
    }
}

fn load_genome(cfg: &ExperimentConfig, ckpt: Option<&Path>) -> Result<Genome> {
    let genome = match ckpt {
        Some(p) => checkpoint::load(p)?.genome()?,
        None => es::initial_state(&cfg.es_config(cfg.run.seeds[0]), cfg.net.n_neurons)?.genome()?,
    };
    if genome.n() != cfg.net.n_neurons {
        return Err(Error::usage(format!(
            "checkpoint has {} neurons but net.neurons is {}",
            genome.n(),
            cfg.net.n_neurons
        )));
    }
    Ok(genome)
}

/// Runs the configured mode. `ckpt` supplies the genome for `test` and
/// `decode` (required) and `single-lifetime` (optional; the seeded
/// generation-0 genome otherwise). Ablation transforms must already have
/// been applied with [`ExperimentConfig::apply_mode`].
pub fn run_mode(cfg: &ExperimentConfig, ckpt: Option<&Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| Error::usage(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, ckpt))
}

fn run_in_pool(cfg: &ExperimentConfig, ckpt: Option<&Path>) -> Result<RunOutcome> {
    let root = resolve_out_dir(cfg);
    fs::create_dir_all(&root)?;
    let config_path = root.join("config.txt");
    fs::write(&config_path, cfg.to_text())?;
    let mut out = RunOutcome {
        out_dir: root.clone(),
        files: vec![config_path],
        states: Vec::new(),
    };
    let needs_ckpt = matches!(cfg.run.mode, Mode::Test | Mode::Decode);
    if needs_ckpt && ckpt.is_none() {
        return Err(Error::usage(format!("mode {} needs a checkpoint", cfg.run.mode.name())));
    }
    match cfg.run.mode {
        Mode::Evolve | Mode::AblateNoPlasticity | Mode::AblateDoubled | Mode::AblateMask10 => {
            evolve(cfg, &root, &mut out)?
        }
        Mode::Test => test(cfg, &load_genome(cfg, ckpt)?, &root, &mut out)?,
        Mode::Decode => decode_mode(cfg, &load_genome(cfg, ckpt)?, &root, &mut out)?,
        Mode::SingleLifetime => single_lifetime(cfg, &load_genome(cfg, ckpt)?, &root, &mut out)?,
    }
    let manifest_path = root.join("manifest.json");
    RunManifest::build(cfg, &root, &out.files)?.write(&manifest_path)?;
    out.files.push(manifest_path);
    Ok(out)
}

fn evolve(cfg: &ExperimentConfig, root: &Path, out: &mut RunOutcome) -> Result<()> {
    let net = cfg.net_config()?;
    for &seed in &cfg.run.seeds {
        let dir = root.join(format!("seed-{seed}"));
        fs::create_dir_all(&dir)?;
        let mut sink = CsvSink::create(&dir, cfg.run.checkpoint_every)?;
        let result = es::run_evolution(&cfg.es_config(seed), &net, &cfg.life, None, &mut sink)?;
        out.files.extend(sink.finish()?);
        let path = dir.join("final.ckpt");
        checkpoint::save(&path, &result.state)?;
        out.files.push(path);
        out.states.push((seed, result.state));
    }
    Ok(())
}

fn test(cfg: &ExperimentConfig, genome: &Genome, root: &Path, out: &mut RunOutcome) -> Result<()> {
    let net = cfg.net_config()?;
    let task = cfg.es.withheld;
    let seed = cfg.run.seeds[0];
    let results = es::evaluate_batch(genome, task, cfg.es.test_batch, seed, u64::MAX, &net, &cfg.life)?;
    let report = es::summarize_withheld(task, &results, cfg.life.loss_window);

    let path = root.join("test_report.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    report_header(&mut w)?;
    withheld_rows(&mut w, 0, &report)?;
    w.flush()?;
    out.files.push(path);

    let path = root.join("test_curve.csv");
    write_curve(&path, &report.curve_error, &report.curve_frac_correct)?;
    out.files.push(path);
    Ok(())
}

fn decode_mode(cfg: &ExperimentConfig, genome: &Genome, root: &Path, out: &mut RunOutcome) -> Result<()> {
    let net = cfg.net_config()?;
    let task = cfg.es.withheld;
    let seed = cfg.run.seeds[0];
    let dir = root.join("decode");
    fs::create_dir_all(&dir)?;
    for &pick in &cfg.decode.trials {
        let data = decode::collect_dataset(genome, task, cfg.decode.runs, pick, seed, &net, &cfg.life)?;
        for label in LabelKind::ALL {
            let split = derive_seed(cfg.decode.split_seed, Domain::DecodeSplit, &[]);
            let mut jobs = vec![("", decode::cross_temporal_decode(&data, label, split)?)];
            if cfg.decode.shuffled_null {
                jobs.push(("-shuffled", decode::shuffled_decode(&data, label, split)?));
            }
            for (suffix, m) in jobs {
                let stem = format!("{}-{}{suffix}", pick.name(), label.name());
                let csv_path = dir.join(format!("{stem}.csv"));
                m.write_csv(create(&csv_path)?)?;
                out.files.push(csv_path.clone());
                if cfg.decode.heatmaps {
                    let png = dir.join(format!("{stem}.png"));
                    plot::decoding_heatmap(&csv_path, &png)?;
                    out.files.push(png);
                }
            }
        }
    }

    // Weight statistics, with P taken from the end of one withheld-task lifetime.
    let life = LifetimeConfig { keep_final_plastic: true, ..cfg.life.clone() };
    let res = run_lifetime(genome, task, derive_seed(seed, Domain::Dataset, &[u64::MAX]), &net, &life)?;
    let p_final = res
        .final_plastic
        .ok_or_else(|| Error::Analysis("lifetime did not keep its plastic state".into()))?
        .p;
    let stats = decode::genome_stats(genome, &p_final);
    let path = root.join("genome_stats.csv");
    stats.write_csv(create(&path)?)?;
    out.files.push(path);
    if cfg.decode.heatmaps {
        for (name, m) in [("w", &genome.w), ("pi", &genome.pi), ("p", &p_final)] {
            let png = root.join(format!("weights-{name}.png"));
            plot::weight_heatmap(m, 6, &png)?;
            out.files.push(png);
        }
    }
    Ok(())
}

/// Draws a curriculum uniformly from the training set of `withheld`.
pub fn sample_curriculum(withheld: TaskId, length: usize, seed: u64) -> Vec<TaskId> {
    let pool = training_set(withheld);
    let mut rng = stream(derive_seed(seed, Domain::Custom("curriculum-order"), &[]));
    (0..length).map(|_| pool[rng.random_range(0..pool.len())]).collect()
}

fn single_lifetime(cfg: &ExperimentConfig, genome: &Genome, root: &Path, out: &mut RunOutcome) -> Result<()> {
    let net = cfg.net_config()?;
    let seed = cfg.run.seeds[0];
    let tasks = sample_curriculum(cfg.es.withheld, cfg.curriculum.length, seed);
    let res = run_single_lifetime_curriculum(
        genome,
        &tasks,
        cfg.es.withheld,
        cfg.curriculum.test_every,
        seed,
        &net,
        &cfg.life,
    )?;

    let path = root.join("curriculum_blocks.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["block", "task", "loss", "frac_correct"])?;
    for (k, ((t, l), f)) in res
        .block_tasks
        .iter()
        .zip(&res.block_losses)
        .zip(&res.block_frac_correct)
        .enumerate()
    {
        w.write_record([k.to_string(), t.to_string(), l.to_string(), f.to_string()])?;
    }
    w.flush()?;
    out.files.push(path);

    let path = root.join("curriculum_tests.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    w.write_record(["after_block", "task", "loss", "frac_correct", "p_hash_before", "p_hash_after"])?;
    for t in &res.tests {
        w.write_record([
            t.after_task.to_string(),
            cfg.es.withheld.to_string(),
            t.loss.to_string(),
            t.frac_correct.to_string(),
            t.p_hash_before.clone(),
            t.p_hash_after.clone(),
        ])?;
    }
    w.flush()?;
    out.files.push(path);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("net.neurons", "8"),
            ("life.trials", "6"),
            ("life.loss_window", "3"),
            ("es.popsize", "4"),
            ("es.generations", "3"),
            ("es.test_every", "2"),
            ("es.test_batch", "3"),
            ("run.checkpoint_every", "2"),
            ("decode.runs", "8"),
            ("curriculum.length", "4"),
            ("curriculum.test_every", "2"),
        ] {
            cfg.set(k, v).unwrap();
        }
        cfg.run.out_dir = Some(dir.to_path_buf());
        cfg
    }

    #[test]
    fn evolve_writes_reports_checkpoints_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let out = run_mode(&cfg, None).unwrap();
        let seed = dir.path().join("seed-0");
        let report = fs::read_to_string(seed.join("report.csv")).unwrap();
        let mut lines = report.lines();
        assert_eq!(lines.next(), Some("gen,task,loss,frac_correct,is_withheld"));
        // 3 generations × 4 individuals + 2 withheld evaluations × 3 lifetimes.
        assert_eq!(lines.count(), 12 + 6);
        assert!(seed.join("checkpoints/gen-00002.ckpt").exists());
        assert!(seed.join("curves/gen-00000.csv").exists());
        let final_state = checkpoint::load(&seed.join("final.ckpt")).unwrap();
        assert_eq!(final_state.generation, 3);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["files"].as_object().unwrap().len(), out.files.len() - 1);
        assert_eq!(manifest["config_hash"], cfg.hash());
    }

    #[test]
    fn test_decode_and_single_lifetime_modes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.es.generations = 1;
        run_mode(&cfg, None).unwrap();
        let ckpt = dir.path().join("seed-0/final.ckpt");

        cfg.run.mode = Mode::Test;
        cfg.run.out_dir = Some(dir.path().join("test"));
        run_mode(&cfg, Some(&ckpt)).unwrap();
        let curve = fs::read_to_string(dir.path().join("test/test_curve.csv")).unwrap();
        assert_eq!(curve.lines().count(), 7);

        cfg.run.mode = Mode::Decode;
        cfg.run.out_dir = Some(dir.path().join("decode"));
        run_mode(&cfg, Some(&ckpt)).unwrap();
        for name in ["first-target", "first-stim1", "last-stim2"] {
            assert!(dir.path().join(format!("decode/decode/{name}.csv")).exists(), "{name}");
        }
        assert!(dir.path().join("decode/genome_stats.csv").exists());

        cfg.run.mode = Mode::SingleLifetime;
        cfg.run.out_dir = Some(dir.path().join("single"));
        run_mode(&cfg, Some(&ckpt)).unwrap();
        let tests = fs::read_to_string(dir.path().join("single/curriculum_tests.csv")).unwrap();
        for line in tests.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[4], cols[5]);
        }
        assert_eq!(tests.lines().count(), 3);
    }

    #[test]
    fn checkpoint_modes_need_a_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.run.mode = Mode::Decode;
        assert!(matches!(run_mode(&cfg, None), Err(Error::Usage(_))));
    }

    #[test]
    fn neuron_count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.es.generations = 1;
        run_mode(&cfg, None).unwrap();
        cfg.net.n_neurons = 9;
        cfg.run.mode = Mode::Test;
        assert!(run_mode(&cfg, Some(&dir.path().join("seed-0/final.ckpt"))).is_err());
    }

    #[test]
    fn curriculum_excludes_withheld_pair() {
        let tasks = sample_curriculum(TaskId::DMS, 500, 3);
        assert!(tasks.iter().all(|&t| t != TaskId::DMS && t != TaskId::DNMS));
        assert_eq!(tasks, sample_curriculum(TaskId::DMS, 500, 3));
    }
}
