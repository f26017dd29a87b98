//! Cross-temporal decoding of the target response from generation-0
//! activity on the delayed-match task, plus a shuffled-label control.
//! Writes CSVs and heatmaps to the current directory.
//!
//!     cargo run --release --example decode

use plastinet::decode::{collect_dataset, cross_temporal_decode, shuffled_decode, LabelKind, TrialPick};
use plastinet::es::init_genome;
use plastinet::lifetime::LifetimeConfig;
use plastinet::plot::decoding_heatmap;
use plastinet::seed::stream;
use plastinet::{NetConfig, TaskId};

fn main() -> plastinet::Result<()> {
    let net = NetConfig::default();
    let genome = init_genome(&mut stream(3), net.n_neurons)?;
    let data = collect_dataset(&genome, TaskId::DMS, 250, TrialPick::Last, 11, &net, &LifetimeConfig::default())?;

    for label in LabelKind::ALL {
        let m = cross_temporal_decode(&data, label, 5)?;
        let (start, len) = m.longest_diagonal_run_above(0.65);
        println!(
            "{:<7} mean {:.3}  best diagonal {:.3}  longest run above 0.65: {} steps from {} ms",
            label.name(),
            m.mean(),
            m.diagonal().iter().cloned().fold(0.0, f64::max),
            len,
            start as f64 * m.dt_ms
        );
        let csv = format!("decode-{}.csv", label.name());
        m.write_csv(std::fs::File::create(&csv)?)?;
        decoding_heatmap(csv.as_ref(), format!("decode-{}.png", label.name()).as_ref())?;
    }
    let null = shuffled_decode(&data, LabelKind::Target, 5)?;
    println!("shuffled target labels: mean {:.3}", null.mean());
    Ok(())
}
