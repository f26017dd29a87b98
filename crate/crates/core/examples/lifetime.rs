//! One 400-trial lifetime of an untrained genome. Writes the learning curve
//! as `trial,error,correct` CSV.
//!
//!     cargo run --release --example lifetime -- [task] [out.csv]

use plastinet::config::ExperimentConfig;
use plastinet::es::init_genome;
use plastinet::harness::write_curve;
use plastinet::lifetime::{run_lifetime, LifetimeConfig};
use plastinet::seed::stream;
use plastinet::task::named_task;
use plastinet::NetConfig;

fn main() -> plastinet::Result<()> {
    let mut args = std::env::args().skip(1);
    let task = named_task(&args.next().unwrap_or_else(|| "dms".into()))?;
    let out = args.next().unwrap_or_else(|| "lifetime.csv".into());

    let net = NetConfig::default();
    let life = LifetimeConfig::default();
    let genome = init_genome(&mut stream(ExperimentConfig::default().run.seeds[0]), net.n_neurons)?;
    let res = run_lifetime(&genome, task, 42, &net, &life)?;

    for block in res.corrects.chunks(50).enumerate() {
        let frac = block.1.iter().filter(|&&c| c).count() as f64 / block.1.len() as f64;
        println!("trials {:>3}..{:>3}: {:.2} correct", block.0 * 50, block.0 * 50 + block.1.len(), frac);
    }
    println!("loss (last {} trials) = {:.4}", life.loss_window, res.loss);

    let correct: Vec<f64> = res.corrects.iter().map(|&c| c as u8 as f64).collect();
    write_curve(out.as_ref(), &res.errors, &correct)?;
    println!("wrote {out}");
    Ok(())
}
