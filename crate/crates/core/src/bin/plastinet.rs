use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use plastinet::config::{ExperimentConfig, Mode, OUT_DIR_ENV};
use plastinet::{harness, plot};

#[derive(Parser)]
#[command(name = "plastinet", version, about = "Evolve plastic recurrent networks that learn new tasks within a lifetime")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `section.key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; repeat or comma-separate for several runs.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    #[arg(long)]
    withheld_task: Option<String>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    popsize: Option<usize>,
    #[arg(long)]
    neurons: Option<usize>,
    #[arg(long)]
    sigma_mut: Option<f64>,
    #[arg(long)]
    no_plasticity: bool,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override any config key, e.g. `--set life.trials=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the evolutionary outer loop.
    Evolve(Common),
    /// Evaluate a checkpoint on the withheld task.
    Test {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Cross-temporal decoding and weight statistics for a checkpoint.
    Decode {
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// One long lifetime over a task curriculum with periodic tests.
    SingleLifetime {
        /// Genome source; the seeded generation-0 genome when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evolution with an ablated network.
    Ablate {
        variant: Variant,
        #[command(flatten)]
        common: Common,
    },
    /// Render figures from CSV outputs.
    Plot {
        kind: PlotKind,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        /// Moving-average window for lifetime curves.
        #[arg(long, default_value_t = 10)]
        smooth: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    /// No plasticity.
    Noplast,
    /// Twice the neurons, no plasticity.
    #[value(name = "2x")]
    Doubled,
    /// Plasticity only in the last ten rows and columns.
    Mask10,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Evolution,
    Lifetime,
    Decode,
}

fn build_config(common: &Common, mode: Mode) -> plastinet::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.run.mode = mode;
    let mut set = |k: &str, v: String| cfg.set(k, &v);
    if !common.seed.is_empty() {
        set("run.seeds", common.seed.iter().map(u64::to_string).collect::<Vec<_>>().join(","))?;
    }
    if let Some(o) = &common.out {
        set("run.out_dir", o.display().to_string())?;
    }
    if let Some(t) = &common.withheld_task {
        set("es.withheld_task", t.clone())?;
    }
    if let Some(g) = common.generations {
        set("es.generations", g.to_string())?;
    }
    if let Some(p) = common.popsize {
        set("es.popsize", p.to_string())?;
    }
    if let Some(n) = common.neurons {
        set("net.neurons", n.to_string())?;
    }
    if let Some(s) = common.sigma_mut {
        set("es.sigma_mut", s.to_string())?;
    }
    if common.no_plasticity {
        set("net.plasticity", "false".into())?;
    }
    if let Some(t) = common.threads {
        set("run.threads", t.to_string())?;
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| plastinet::Error::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.apply_mode();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> plastinet::Result<()> {
    let (common, mode, ckpt) = match cli.command {
        Command::Evolve(c) => (c, Mode::Evolve, None),
        Command::Test { checkpoint, common } => (common, Mode::Test, Some(checkpoint)),
        Command::Decode { checkpoint, common } => (common, Mode::Decode, Some(checkpoint)),
        Command::SingleLifetime { checkpoint, common } => (common, Mode::SingleLifetime, checkpoint),
        Command::Ablate { variant, common } => {
            let mode = match variant {
                Variant::Noplast => Mode::AblateNoPlasticity,
                Variant::Doubled => Mode::AblateDoubled,
                Variant::Mask10 => Mode::AblateMask10,
            };
            (common, mode, None)
        }
        Command::Plot { kind, inputs, output, smooth } => {
            let refs: Vec<&std::path::Path> = inputs.iter().map(PathBuf::as_path).collect();
            return match kind {
                PlotKind::Evolution => plot::evolution_figure(&refs, &output),
                PlotKind::Lifetime => plot::lifetime_figure(&refs, smooth, &output),
                PlotKind::Decode => match refs.as_slice() {
                    [one] => plot::decoding_heatmap(one, &output),
                    _ => Err(plastinet::Error::Usage("decode plots take exactly one CSV".into())),
                },
            };
        }
    };
    let cfg = build_config(&common, mode)?;
    let out = harness::run_mode(&cfg, ckpt.as_deref())?;
    eprintln!("wrote {} files to {}", out.files.len(), out.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plastinet: {e}");
            match e {
                plastinet::Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
