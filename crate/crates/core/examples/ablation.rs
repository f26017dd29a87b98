//! Evolves the same small setup with and without plasticity and compares
//! the training fraction correct of the last generations.
//!
//!     cargo run --release --example ablation -- [generations]

use plastinet::es::{run_evolution, EsConfig, GenerationReport};
use plastinet::lifetime::LifetimeConfig;
use plastinet::NetConfig;

fn tail_mean(reports: &[GenerationReport], k: usize) -> f64 {
    let tail = &reports[reports.len().saturating_sub(k)..];
    tail.iter().map(|r| r.mean_frac_correct).sum::<f64>() / tail.len() as f64
}

fn main() -> plastinet::Result<()> {
    let generations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let es = EsConfig { pop_size: 40, generations, test_every: 0, master_seed: 4, ..EsConfig::default() };
    let life = LifetimeConfig { n_trials: 200, loss_window: 50, ..LifetimeConfig::default() };

    for plastic in [true, false] {
        let net = NetConfig { plasticity_enabled: plastic, ..NetConfig::with_neurons(30) };
        let mut reports = Vec::new();
        run_evolution(&es, &net, &life, None, &mut reports)?;
        println!(
            "plasticity {:<5}: first gen {:.3}, last 5 gens {:.3}",
            plastic,
            reports[0].mean_frac_correct,
            tail_mean(&reports, 5)
        );
    }
    Ok(())
}
