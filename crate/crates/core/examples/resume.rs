//! Checkpoints an evolution run halfway and resumes it. The resumed run ends
//! in exactly the state of an uninterrupted one.
//!
//!     cargo run --release --example resume

use plastinet::checkpoint;
use plastinet::es::{run_evolution, EsConfig, NullSink};
use plastinet::lifetime::LifetimeConfig;
use plastinet::NetConfig;

fn main() -> plastinet::Result<()> {
    let net = NetConfig::with_neurons(12);
    let life = LifetimeConfig { n_trials: 40, loss_window: 10, ..LifetimeConfig::default() };
    let full = EsConfig { pop_size: 10, generations: 6, test_every: 0, ..EsConfig::default() };
    let half = EsConfig { generations: 3, ..full.clone() };

    let dir = std::env::temp_dir().join("plastinet-resume");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("half.ckpt");

    let first = run_evolution(&half, &net, &life, None, &mut NullSink)?;
    checkpoint::save(&path, &first.state)?;
    let loaded = checkpoint::load(&path)?;
    println!("checkpoint at generation {} ({} bytes)", loaded.generation, std::fs::metadata(&path)?.len());

    let resumed = run_evolution(&full, &net, &life, Some(loaded), &mut NullSink)?;
    let straight = run_evolution(&full, &net, &life, None, &mut NullSink)?;
    println!(
        "resumed == uninterrupted: {}",
        checkpoint::encode(&resumed.state)? == checkpoint::encode(&straight.state)?
    );
    Ok(())
}
