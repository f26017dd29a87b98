//! Parses a config, applies overrides and an ablation mode, and prints the
//! resolved text. The output parses back to the same configuration.
//!
//!     cargo run --release --example config -- [file]

use plastinet::config::{ExperimentConfig, Mode};

fn main() -> plastinet::Result<()> {
    let mut cfg = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::from_file(path.as_ref())?,
        None => ExperimentConfig::from_text("net.neurons = 75\nes.popsize = 100  # desk scale\n")?,
    };
    cfg.set("es.withheld_task", "nand")?;
    cfg.run.mode = Mode::AblateDoubled;
    cfg.apply_mode();
    cfg.validate()?;

    let text = cfg.to_text();
    print!("{text}");
    assert_eq!(ExperimentConfig::from_text(&text)?, cfg);
    println!("# hash {}", cfg.hash());

    match ExperimentConfig::from_text("es.sigma = 0.1") {
        Err(e) => println!("# rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
