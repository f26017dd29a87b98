//! The full harness at toy scale: evolve two seeds, test and decode the
//! final genome, then render the figures. Everything lands under one
//! output directory with a manifest of checksums.
//!
//!     cargo run --release --example experiment -- [out_dir]

use std::path::PathBuf;

use plastinet::config::{ExperimentConfig, Mode};
use plastinet::{harness, plot};

fn main() -> plastinet::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "plastinet-demo".into()));
    let mut cfg = ExperimentConfig::from_text(
        "net.neurons = 20\n\
         life.trials = 100\n\
         life.loss_window = 25\n\
         es.popsize = 20\n\
         es.generations = 10\n\
         es.test_every = 5\n\
         es.test_batch = 20\n\
         run.seeds = 1,2\n\
         run.checkpoint_every = 5\n\
         decode.runs = 40\n",
    )?;

    cfg.run.out_dir = Some(root.join("evolve"));
    harness::run_mode(&cfg, None)?;
    let reports: Vec<PathBuf> = cfg.run.seeds.iter().map(|s| root.join(format!("evolve/seed-{s}/report.csv"))).collect();
    let refs: Vec<&std::path::Path> = reports.iter().map(PathBuf::as_path).collect();
    plot::evolution_figure(&refs, &root.join("evolution.svg"))?;

    let ckpt = root.join("evolve/seed-1/final.ckpt");
    for (mode, dir) in [(Mode::Test, "test"), (Mode::Decode, "decode")] {
        cfg.run.mode = mode;
        cfg.run.out_dir = Some(root.join(dir));
        let out = harness::run_mode(&cfg, Some(&ckpt))?;
        println!("{}: {} files", mode.name(), out.files.len());
    }
    plot::lifetime_figure(&[&root.join("test/test_curve.csv")], 5, &root.join("lifetime.svg"))?;
    println!("see {}", root.display());
    Ok(())
}
