//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! `ACCEPTANCE_ONLY=1,3,7` restricts the run to the listed criteria.
//! Artifacts from the evolution runs are kept under the cargo target
//! temporary directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use plastinet::config::{ExperimentConfig, Mode};
use plastinet::decode::{
    collect_dataset, cross_temporal_decode, permutation_null, shuffled_decode, ActivityDataset, DatasetMeta,
    LabelKind, TrialPick,
};
use plastinet::es::{adam_step, estimate_gradient, evaluate_batch, initial_state, mutate_antithetic, AdamState, EsConfig};
use plastinet::harness::{self, RunManifest};
use plastinet::lifetime::{hash_matrix, run_single_lifetime_curriculum, LifetimeConfig};
use plastinet::net::{step, NetConfig};
use plastinet::seed::stream;
use plastinet::stats::{mean, median, moving_average, spearman};
use plastinet::{plot, Agent, ClampSpec, Genome, Matrix, NeuralState, PlasticState, TaskId};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> plastinet::Result<Outcome>;

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn work_dir() -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

// 1 -------------------------------------------------------------------------

fn chance_baseline() -> plastinet::Result<Outcome> {
    let net = NetConfig::default();
    let life = LifetimeConfig::default();
    let es = EsConfig::default();
    let genome = initial_state(&es, net.n_neurons)?.genome()?;
    let results = evaluate_batch(&genome, TaskId::DMS, 20, es.master_seed, 0, &net, &life)?;
    let trials: usize = results.iter().map(|r| r.corrects.len()).sum();
    let correct: usize = results.iter().map(|r| r.corrects.iter().filter(|&&c| c).count()).sum();
    let frac = correct as f64 / trials as f64;
    Ok(outcome(
        (frac - 0.5).abs() <= 0.05 && trials >= 8000,
        format!("generation-0 DMS fraction correct {frac:.4} over {trials} trials (20 lifetimes), want 0.50 +- 0.05"),
    ))
}

// 2 -------------------------------------------------------------------------

fn euler_oracle() -> plastinet::Result<Outcome> {
    // Neuron 0 alone, neurons 1-2 as a coupled pair; the rest disconnected.
    let n = 5;
    let (a, b) = (1.3, [[0.4, -1.1], [0.9, 0.2]]);
    let mut w = Matrix::zeros(n, n);
    w[(0, 0)] = a;
    for i in 0..2 {
        for j in 0..2 {
            w[(1 + i, 1 + j)] = b[i][j];
        }
    }
    let genome = Genome::new(w, Matrix::filled(n, n, 0.5))?;
    let net = NetConfig { perturb_prob: 0.0, ..NetConfig::with_neurons(n) };
    let k = net.dt_ms / net.tau_ms;

    let x0 = [0.7, -0.4, 0.9];
    let mut agent = Agent::new(&genome, &net)?;
    for (i, &v) in x0.iter().enumerate() {
        agent.neural_mut().x[i] = v;
        agent.neural_mut().r[i] = v.tanh();
    }
    let (mut y, mut u, mut v) = (x0[0], x0[1], x0[2]);
    let mut worst = 0.0f64;
    let mut rng = stream(0);
    for _ in 0..1000 {
        let (ny, nu, nv) = (
            y + k * (a * y.tanh() - y),
            u + k * (b[0][0] * u.tanh() + b[0][1] * v.tanh() - u),
            v + k * (b[1][0] * u.tanh() + b[1][1] * v.tanh() - v),
        );
        (y, u, v) = (ny, nu, nv);
        agent.step(&ClampSpec::none(), &mut rng)?;
        let x = &agent.neural().x;
        worst = worst.max((x[0] - y).abs()).max((x[1] - u).abs()).max((x[2] - v).abs());
    }

    let mut state = NeuralState::zeros(n);
    let mut h0 = Matrix::zeros(n, n);
    for (i, slot) in h0.as_mut_slice().iter_mut().enumerate() {
        *slot = (i as f64 * 0.37).sin();
    }
    let mut plastic = PlasticState { p: Matrix::zeros(n, n), h: h0.clone() };
    let decay = 1.0 - net.dt_ms / net.tau_h_ms;
    let mut bitwise = true;
    let mut closed_form_err = 0.0f64;
    let mut expect = h0.clone();
    for step_k in 1..=1000 {
        step(&mut state, &mut plastic, &genome, &ClampSpec::none(), &mut rng, &net)?;
        for (e, (h, h_init)) in expect.as_mut_slice().iter_mut().zip(plastic.h.as_slice().iter().zip(h0.as_slice())) {
            *e *= decay;
            bitwise &= e.to_bits() == h.to_bits();
            let closed = h_init * decay.powi(step_k);
            closed_form_err = closed_form_err.max((h - closed).abs() / closed.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(outcome(
        worst < 1e-12 && bitwise && closed_form_err < 1e-12,
        format!(
            "max trajectory deviation {worst:.2e} (want < 1e-12); trace equals h0*(1-dt/tau_H)^k bit for bit: {bitwise}; max relative gap to powi {closed_form_err:.1e}"
        ),
    ))
}

// 3 -------------------------------------------------------------------------

fn es_quadratic() -> plastinet::Result<Outcome> {
    let dim = 10;
    let pop = 1000;
    let sigma = 0.05;
    let curvature: Vec<f64> = (0..dim).map(|i| 0.5 + 0.5 * i as f64).collect();
    let optimum: Vec<f64> = (0..dim).map(|i| 0.1 * i as f64 - 0.3).collect();
    let loss = |t: &[f64]| -> f64 {
        t.iter().zip(&optimum).zip(&curvature).map(|((x, o), c)| c * (x - o) * (x - o)).sum()
    };
    let dist = |t: &[f64]| -> f64 { t.iter().zip(&optimum).map(|(x, o)| (x - o) * (x - o)).sum::<f64>().sqrt() };
    let mut theta: Vec<f64> = optimum
        .iter()
        .enumerate()
        .map(|(i, o)| o + if i % 2 == 0 { 1.0 } else { -1.0 } * (0.2 + 0.06 * i as f64))
        .collect();
    let cfg = EsConfig { pop_size: pop, sigma_mut: sigma, lr: 0.003, ..EsConfig::default() };

    let estimate = |theta: &[f64], gen: u64| -> plastinet::Result<Vec<f64>> {
        let pairs = mutate_antithetic(theta, &mut stream(1000 + gen), sigma, pop / 2);
        let mut losses = Vec::with_capacity(pop);
        let mut eps = Vec::with_capacity(pop);
        for p in &pairs {
            losses.push(loss(&p.plus));
            losses.push(loss(&p.minus));
            eps.push(p.noise.iter().map(|e| e / sigma).collect::<Vec<_>>());
            eps.push(p.noise.iter().map(|e| -e / sigma).collect::<Vec<_>>());
        }
        estimate_gradient(&losses, &eps, sigma, cfg.standardize)
    };

    let analytic: Vec<f64> = theta.iter().zip(&optimum).zip(&curvature).map(|((x, o), c)| 2.0 * c * (x - o)).collect();
    let g = estimate(&theta, 0)?;
    let dot: f64 = g.iter().zip(&analytic).map(|(a, b)| a * b).sum();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine = dot / (norm(&g) * norm(&analytic));

    let start = dist(&theta);
    let mut adam = AdamState::new(dim);
    let mut reached = None;
    for gen in 0..500 {
        let g = estimate(&theta, gen)?;
        adam_step(&mut theta, &mut adam, &g, &cfg)?;
        if reached.is_none() && dist(&theta) <= 0.1 * start {
            reached = Some(gen + 1);
        }
    }
    let reduction = 1.0 - dist(&theta) / start;
    Ok(outcome(
        cosine > 0.9 && reduction >= 0.9,
        format!(
            "cosine(estimate, analytic) {cosine:.4} (want > 0.9); distance {start:.3} -> {:.4} after 500 generations, reduction {:.1}% (want >= 90%), first reached at generation {}",
            dist(&theta),
            100.0 * reduction,
            reached.map_or("never".into(), |g| g.to_string())
        ),
    ))
}

// 4 -------------------------------------------------------------------------

/// Mean absolute error per reward application, averaged over seeds.
fn target_matching_curve(seeds: std::ops::Range<u64>, applications: usize) -> plastinet::Result<Vec<f64>> {
    let n = 5;
    let goal = 0.6;
    let steps_per_reward = 10;
    let net = NetConfig { eta: 10.0, reward_baseline_rate: Some(0.3), ..NetConfig::with_neurons(n) };
    let genome = Genome::new(Matrix::zeros(n, n), Matrix::filled(n, n, 1.0))?;
    let clamp = ClampSpec::new(vec![(0, 1.0)], n)?;
    let mut curve = vec![0.0; applications];
    let count = (seeds.end - seeds.start) as f64;
    for seed in seeds {
        let mut agent = Agent::new(&genome, &net)?;
        let mut rng = stream(seed);
        for slot in curve.iter_mut() {
            for _ in 0..steps_per_reward {
                agent.step(&clamp, &mut rng)?;
            }
            let err = (agent.neural().r[n - 1] - goal).abs();
            *slot += err / count;
            agent.apply_reward(-err)?;
        }
    }
    Ok(curve)
}

fn node_perturbation() -> plastinet::Result<Outcome> {
    let curve = target_matching_curve(0..10, 200)?;
    let early = mean(&curve[..20]);
    let late = mean(&curve[180..]);
    let reduction = 1.0 - late / early;
    Ok(outcome(
        reduction >= 0.5,
        format!(
            "5 neurons, 10 seeds: mean error {early:.3} over the first 20 rewards -> {late:.3} over the last 20, reduction {:.1}% (want >= 50%)",
            100.0 * reduction
        ),
    ))
}

// 5, 6, 8 -------------------------------------------------------------------

const DESK_SEEDS: &str = "1,2,3";

fn desk_config(out: &Path, generations: usize) -> plastinet::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_text(&format!(
        "net.neurons = 40\n\
         es.popsize = 100\n\
         es.generations = {generations}\n\
         es.withheld_task = dms\n\
         es.test_every = 10\n\
         es.test_batch = 100\n\
         run.seeds = {DESK_SEEDS}\n\
         run.checkpoint_every = 100\n"
    ))?;
    cfg.run.out_dir = Some(out.to_path_buf());
    Ok(cfg)
}

struct DeskRun {
    /// Per seed: mean training fraction correct over the last 10 generations.
    final_frac: Vec<f64>,
    median_frac: f64,
    rho: f64,
    per_seed_rho: Vec<f64>,
}

fn desk_evolution(mode: Mode, tag: &str) -> plastinet::Result<DeskRun> {
    let out = work_dir().join(tag);
    let mut cfg = desk_config(&out, 300)?;
    cfg.run.mode = mode;
    cfg.apply_mode();
    harness::run_mode(&cfg, None)?;

    let reports: Vec<PathBuf> = cfg.run.seeds.iter().map(|s| out.join(format!("seed-{s}/report.csv"))).collect();
    let refs: Vec<&Path> = reports.iter().map(PathBuf::as_path).collect();
    plot::evolution_figure(&refs, &out.join("evolution.svg"))?;

    let summaries = refs.iter().map(|p| plot::read_report(p)).collect::<plastinet::Result<Vec<_>>>()?;
    let final_frac: Vec<f64> = summaries
        .iter()
        .map(|s| mean(&s.train_frac_correct[s.train_frac_correct.len() - 10..]))
        .collect();
    let gens: Vec<f64> = summaries[0].generations.iter().map(|&g| g as f64).collect();
    let median_loss: Vec<f64> = (0..gens.len())
        .map(|g| median(&summaries.iter().map(|s| s.train_loss[g]).collect::<Vec<_>>()))
        .collect();
    let rho = spearman(&gens, &moving_average(&median_loss, 10));
    let per_seed_rho = summaries
        .iter()
        .map(|s| spearman(&gens, &moving_average(&s.train_loss, 10)))
        .collect();
    Ok(DeskRun { median_frac: median(&final_frac), final_frac, rho, per_seed_rho })
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
}

fn desk_scale(plastic: &DeskRun) -> Outcome {
    outcome(
        plastic.median_frac > 0.70 && plastic.rho < -0.5,
        format!(
            "N=40 pop=100 300 generations seeds {DESK_SEEDS}: training fraction correct (last 10 generations) [{}], median {:.3} (want > 0.70); Spearman rho of smoothed median loss vs generation {:.3} (want < -0.5; per seed [{}])",
            fmt_list(&plastic.final_frac),
            plastic.median_frac,
            plastic.rho,
            fmt_list(&plastic.per_seed_rho)
        ),
    )
}

fn ablation_contrast(plastic: &DeskRun, fixed: &DeskRun) -> Outcome {
    let gap = plastic.median_frac - fixed.median_frac;
    outcome(
        gap >= 0.10,
        format!(
            "no-plasticity median {:.3} [{}] vs plastic {:.3}: gap {gap:.3} (want >= 0.10)",
            fixed.median_frac,
            fmt_list(&fixed.final_frac),
            plastic.median_frac
        ),
    )
}

fn determinism() -> plastinet::Result<Outcome> {
    let mut manifests = Vec::new();
    for threads in [1, 8] {
        let out = work_dir().join(format!("determinism-{threads}"));
        let mut cfg = desk_config(&out, 10)?;
        cfg.run.threads = threads;
        cfg.run.checkpoint_every = 5;
        let res = harness::run_mode(&cfg, None)?;
        let files: Vec<PathBuf> = res.files.into_iter().filter(|f| {
            let ext = f.extension().and_then(|e| e.to_str());
            matches!(ext, Some("csv") | Some("ckpt"))
        }).collect();
        manifests.push(RunManifest::build(&cfg, &out, &files)?.files);
    }
    let same = manifests[0] == manifests[1];
    Ok(outcome(
        same && !manifests[0].is_empty(),
        format!(
            "10 generations, 1 vs 8 threads: {} CSV/checkpoint files, byte-identical: {same}",
            manifests[0].len()
        ),
    ))
}

// 7 -------------------------------------------------------------------------

fn separable_dataset() -> ActivityDataset {
    let (runs, steps, n) = (250, 50, 10);
    let a: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let b: Vec<f64> = (0..n).map(|i| ((i * 7) % n) as f64 * 0.5 - 1.0).collect();
    let mut data = ActivityDataset {
        runs: Vec::new(),
        s1: Vec::new(),
        s2: Vec::new(),
        target: Vec::new(),
        dt_ms: 20.0,
        meta: DatasetMeta { tag: "synthetic".into(), task: None, trial_index: 0 },
    };
    for k in 0..runs {
        let label = (k % 2) as u8;
        let v = if label == 0 { &a } else { &b };
        let mut m = Matrix::zeros(steps, n);
        for t in 0..steps {
            m.row_mut(t).copy_from_slice(v);
        }
        data.runs.push(m);
        data.s1.push(label);
        data.s2.push(label);
        data.target.push(label);
    }
    data
}

fn decoder_suite() -> plastinet::Result<Outcome> {
    let sep = cross_temporal_decode(&separable_dataset(), LabelKind::Target, 1)?;
    let all_ones = sep.accuracy.as_slice().iter().all(|&v| v == 1.0);

    let net = NetConfig::default();
    let life = LifetimeConfig::default();
    let genome = initial_state(&EsConfig::default(), net.n_neurons)?.genome()?;
    let mut longest = Vec::new();
    let mut last = None;
    for pick in [TrialPick::First, TrialPick::Last] {
        let data = collect_dataset(&genome, TaskId::DMS, 250, pick, 17, &net, &life)?;
        let m = cross_temporal_decode(&data, LabelKind::Target, 3)?;
        let (start, len) = m.longest_diagonal_run_above(0.65);
        let max_diag = m.diagonal().into_iter().fold(0.0, f64::max);
        longest.push(format!("{} trial: longest run {} ms from {} ms, best diagonal {max_diag:.3}", pick.name(), len as f64 * m.dt_ms, start as f64 * m.dt_ms));
        if len as f64 * m.dt_ms >= 100.0 {
            last = Some(false);
        }
        if pick == TrialPick::Last {
            let single = shuffled_decode(&data, LabelKind::Target, 5)?;
            let null = permutation_null(&data, LabelKind::Target, 16, 5)?;
            let dev = |m: &Matrix| m.as_slice().iter().fold(0.0f64, |a, v| a.max((v - 0.5).abs()));
            let single_mean = single.mean();
            let null_dev = dev(&null.accuracy);
            let single_dev = dev(&single.accuracy);
            let shuffled_ok = (single_mean - 0.5).abs() <= 0.02 && single_dev <= 0.07;
            let no_band = last.is_none();
            return Ok(outcome(
                all_ones && shuffled_ok && no_band,
                format!(
                    "separable -> all ones: {all_ones}; shuffled labels: grand mean {single_mean:.4} (want 0.5 +- 0.02), max per-entry deviation {single_dev:.3} (want <= 0.07; averaged over 16 shuffles {null_dev:.3}); generation-0 target decoding above 0.65 for >= 100 ms: {} ({})",
                    !no_band,
                    longest.join("; ")
                ),
            ));
        }
    }
    unreachable!("the loop returns on the last trial")
}

// 9 -------------------------------------------------------------------------

fn single_lifetime() -> plastinet::Result<Outcome> {
    let net = NetConfig::default();
    let life = LifetimeConfig::default();
    let genome = initial_state(&EsConfig::default(), net.n_neurons)?.genome()?;
    let tasks = harness::sample_curriculum(TaskId::DMS, 50, 9);
    let res = run_single_lifetime_curriculum(&genome, &tasks, TaskId::DMS, 5, 9, &net, &life)?;
    let restored = res.tests.iter().all(|t| t.p_hash_before == t.p_hash_after);
    // The rollback is only meaningful if the curriculum moved P at all.
    let p_moved = res.tests.windows(2).any(|w| w[0].p_hash_before != w[1].p_hash_before)
        && res.tests[0].p_hash_before != hash_matrix(&Matrix::zeros(net.n_neurons, net.n_neurons));
    let acc = res.pooled_test_accuracy();
    Ok(outcome(
        restored && p_moved && (acc - 0.5).abs() <= 0.07,
        format!(
            "50 blocks, {} tests: P hash identical before/after every test: {restored} (P evolving across the curriculum: {p_moved}); withheld DMS accuracy {acc:.4} (want 0.5 +- 0.07)",
            res.tests.len()
        ),
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut failed = 0;
    let mut report = |k: u32, name: &str, t: Instant, res: plastinet::Result<Outcome>| {
        let secs = t.elapsed().as_secs_f64();
        match res {
            Ok(o) => {
                println!("criterion {k} ({name}): {} | {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += (!o.pass) as u32;
            }
            Err(e) => {
                println!("criterion {k} ({name}): FAIL | error: {e} [{secs:.1} s]");
                failed += 1;
            }
        }
    };

    let singles: [(u32, &str, Check); 6] = [
        (1, "chance baseline", chance_baseline),
        (2, "Euler oracle", euler_oracle),
        (3, "ES estimator", es_quadratic),
        (4, "node-perturbation learning", node_perturbation),
        (7, "decoder suite", decoder_suite),
        (9, "single-lifetime curriculum", single_lifetime),
    ];
    for (k, name, f) in singles {
        if wanted(k) {
            let t = Instant::now();
            report(k, name, t, f());
        }
    }
    if wanted(8) {
        let t = Instant::now();
        report(8, "determinism", t, determinism());
    }
    if wanted(5) || wanted(6) {
        let t = Instant::now();
        let plastic = desk_evolution(Mode::Evolve, "desk-plastic");
        match &plastic {
            Ok(p) => report(5, "desk-scale evolution", t, Ok(desk_scale(p))),
            Err(e) => report(5, "desk-scale evolution", t, Err(plastinet::Error::Analysis(e.to_string()))),
        }
        if wanted(6) {
            let t = Instant::now();
            let fixed = desk_evolution(Mode::AblateNoPlasticity, "desk-noplast");
            let res = match (&plastic, fixed) {
                (Ok(p), Ok(f)) => Ok(ablation_contrast(p, &f)),
                (Err(e), _) => Err(plastinet::Error::Analysis(e.to_string())),
                (_, Err(e)) => Err(e),
            };
            report(6, "plasticity ablation", t, res);
        }
    }

    println!("artifacts under {}", work_dir().display());
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
