//! One long lifetime over a sequence of training tasks with periodic
//! withheld-task tests. Each test is rolled back, which the hashes confirm.
//!
//!     cargo run --release --example curriculum -- [blocks]

use plastinet::es::init_genome;
use plastinet::harness::sample_curriculum;
use plastinet::lifetime::{run_single_lifetime_curriculum, LifetimeConfig};
use plastinet::seed::stream;
use plastinet::{NetConfig, TaskId};

fn main() -> plastinet::Result<()> {
    let blocks = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let net = NetConfig::with_neurons(40);
    let life = LifetimeConfig::default();
    let genome = init_genome(&mut stream(2), net.n_neurons)?;
    let tasks = sample_curriculum(TaskId::DMS, blocks, 2);

    let res = run_single_lifetime_curriculum(&genome, &tasks, TaskId::DMS, 5, 2, &net, &life)?;
    for (k, (t, f)) in res.block_tasks.iter().zip(&res.block_frac_correct).enumerate() {
        println!("block {k:>3} task {t:>12}  correct {f:.2}");
    }
    for t in &res.tests {
        println!(
            "test after {:>3} blocks: correct {:.3}  P restored: {}",
            t.after_task,
            t.frac_correct,
            t.p_hash_before == t.p_hash_after
        );
    }
    println!("pooled test accuracy {:.3}", res.pooled_test_accuracy());
    Ok(())
}
