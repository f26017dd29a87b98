//! A short evolution run at reduced scale, printing one line per generation.
//!
//!     cargo run --release --example evolve -- [generations]

use plastinet::es::{run_evolution, EsConfig, EsState, EvolutionSink, GenerationReport};
use plastinet::lifetime::LifetimeConfig;
use plastinet::NetConfig;

struct Progress;

impl EvolutionSink for Progress {
    fn on_generation(&mut self, r: &GenerationReport, _: &EsState) -> plastinet::Result<()> {
        print!("gen {:>4}  loss {:.4}  correct {:.3}", r.generation, r.mean_loss, r.mean_frac_correct);
        if let Some(w) = &r.withheld {
            print!("  withheld {} {:.3}", w.task, w.mean_frac_correct);
        }
        println!();
        Ok(())
    }
}

fn main() -> plastinet::Result<()> {
    let generations = std::env::args().nth(1).map_or(Ok(20), |s| s.parse()).unwrap_or(20);
    let es = EsConfig {
        pop_size: 40,
        generations,
        test_every: 5,
        test_batch: 40,
        master_seed: 1,
        ..EsConfig::default()
    };
    let net = NetConfig::with_neurons(30);
    let life = LifetimeConfig { n_trials: 200, loss_window: 50, ..LifetimeConfig::default() };
    let out = run_evolution(&es, &net, &life, None, &mut Progress)?;
    println!("final generation {}", out.state.generation);
    Ok(())
}
