//! Steps a random network through one delayed-match trial and prints the
//! output neurons across the trial.
//!
//!     cargo run --release --example single_trial

use plastinet::es::init_genome;
use plastinet::lifetime::LifetimeConfig;
use plastinet::seed::stream;
use plastinet::task::{run_trial, TrialPlan};
use plastinet::{Agent, NetConfig, TaskId};

fn main() -> plastinet::Result<()> {
    let net = NetConfig::default();
    let genome = init_genome(&mut stream(7), net.n_neurons)?;
    let protocol = LifetimeConfig::default().protocol(&net)?;
    let mut agent = Agent::new(&genome, &net)?;
    let mut rng = stream(8);

    let plan = TrialPlan::new(TaskId::DMS, 1, 0)?;
    let res = run_trial(&mut agent, &plan, &protocol, &mut rng, true)?;
    let r = res.recorded_r.expect("recording was requested");
    let (a, b) = (net.n_neurons - 2, net.n_neurons - 1);

    println!("task {} with s1={} s2={} (target {})", plan.task, plan.s1, plan.s2, plan.task.target(plan.s1, plan.s2));
    println!("{:>6} {:>8} {:>8} {:>8} {:>8}", "t_ms", "in0", "in1", "out0", "out1");
    for t in 0..r.rows() {
        println!(
            "{:>6} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            (t + 1) as f64 * net.dt_ms,
            r[(t, 0)],
            r[(t, 1)],
            r[(t, a)],
            r[(t, b)]
        );
    }
    println!("mean response {:?}, error {:.3}, correct {}", res.mean_out, res.error, res.correct);
    Ok(())
}
