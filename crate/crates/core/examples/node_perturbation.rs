//! The lifetime learning rule on its own: a five-neuron network, no task
//! schedule, rewarded every ten steps for holding its last neuron at a fixed
//! value. Rewards are baseline-subtracted; without that the raw negative
//! reward turns the trace noise into a random walk of the plastic weights.
//!
//!     cargo run --release --example node_perturbation

use plastinet::seed::stream;
use plastinet::{Agent, ClampSpec, Genome, Matrix, NetConfig};

fn main() -> plastinet::Result<()> {
    let n = 5;
    let goal = 0.6;
    let net = NetConfig { eta: 10.0, reward_baseline_rate: Some(0.3), ..NetConfig::with_neurons(n) };
    let genome = Genome::new(Matrix::zeros(n, n), Matrix::filled(n, n, 1.0))?;
    let clamp = ClampSpec::new(vec![(0, 1.0)], n)?;
    let mut agent = Agent::new(&genome, &net)?;
    let mut rng = stream(1);

    for episode in 0..=200 {
        for _ in 0..10 {
            agent.step(&clamp, &mut rng)?;
        }
        let err = (agent.neural().r[n - 1] - goal).abs();
        agent.apply_reward(-err)?;
        if episode % 25 == 0 {
            println!("reward {episode:>3}: |r_out - {goal}| = {err:.3}");
        }
    }
    Ok(())
}
