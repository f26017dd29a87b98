//! Property tests against independent reference computations.

use approx::assert_relative_eq;
use plastinet::checkpoint;
use plastinet::config::ExperimentConfig;
use plastinet::es::{estimate_gradient, mutate_antithetic, AdamState, EsConfig, EsState};
use plastinet::lifetime::{run_lifetime, LifetimeConfig};
use plastinet::net::{effective_weights, step, Activation};
use plastinet::seed::{derive_seed, lifetime_seed, stream, Domain};
use plastinet::task::training_set;
use plastinet::{Agent, ClampSpec, Genome, Matrix, NetConfig, NeuralState, PlasticState, TaskId};
use proptest::prelude::*;

fn quiet(n: usize) -> NetConfig {
    NetConfig {
        perturb_prob: 0.0,
        ..NetConfig::with_neurons(n)
    }
}

/// Reference integrator written out from the update rule, one neuron at a time.
fn reference_trajectory(w: &Matrix, x0: &[f64], steps: usize, rate: f64) -> Vec<Vec<f64>> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r: Vec<f64> = x.iter().map(|v| v.tanh()).collect();
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut drive = 0.0;
            for j in 0..n {
                drive += w[(i, j)] * r[j];
            }
            next[i] = (1.0 - rate) * x[i] + rate * drive;
        }
        x = next;
        r = x.iter().map(|v| v.tanh()).collect();
        out.push(x.clone());
    }
    out
}

fn small_matrix(n: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-scale..scale, n * n).prop_map(move |v| Matrix::from_vec(n, n, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn euler_matches_reference(w in small_matrix(6, 1.5), x0 in prop::collection::vec(-1.0..1.0f64, 6)) {
        let cfg = NetConfig { plasticity_enabled: false, ..quiet(6) };
        let g = Genome::new(w.clone(), Matrix::zeros(6, 6)).unwrap();
        let mut agent = Agent::new(&g, &cfg).unwrap();
        agent.neural_mut().x = x0.clone();
        agent.neural_mut().r = x0.iter().map(|v| v.tanh()).collect();
        let expect = reference_trajectory(&w, &x0, 200, cfg.activation_rate());
        let mut rng = stream(0);
        for want in &expect {
            agent.step(&ClampSpec::none(), &mut rng).unwrap();
            for (a, b) in agent.neural().x.iter().zip(want) {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn trace_decays_geometrically_without_perturbation(h0 in small_matrix(5, 2.0), k in 1usize..300) {
        let cfg = quiet(5);
        let g = Genome::new(Matrix::zeros(5, 5), Matrix::filled(5, 5, 0.5)).unwrap();
        let mut state = NeuralState::zeros(5);
        let mut plastic = PlasticState { p: Matrix::zeros(5, 5), h: h0.clone() };
        let mut rng = stream(1);
        for _ in 0..k {
            step(&mut state, &mut plastic, &g, &ClampSpec::none(), &mut rng, &cfg).unwrap();
        }
        let decay = 1.0 - cfg.dt_ms / cfg.tau_h_ms;
        for (h, h0) in plastic.h.as_slice().iter().zip(h0.as_slice()) {
            let mut want = *h0;
            for _ in 0..k {
                want *= decay;
            }
            prop_assert_eq!(*h, want);
        }
    }

    #[test]
    fn agent_and_free_step_agree(seed in 0u64..1000, w in small_matrix(7, 1.0)) {
        // The agent decays traces lazily; the free function eagerly.
        let cfg = NetConfig::with_neurons(7);
        let g = Genome::new(w, Matrix::filled(7, 7, 0.5)).unwrap();
        let clamp = ClampSpec::new(vec![(0, 1.0)], 7).unwrap();
        let mut agent = Agent::new(&g, &cfg).unwrap();
        let mut state = NeuralState::zeros(7);
        let mut plastic = PlasticState::zeros(7);
        let (mut ra, mut rb) = (stream(seed), stream(seed));
        for t in 0..120 {
            agent.step(&clamp, &mut ra).unwrap();
            step(&mut state, &mut plastic, &g, &clamp, &mut rb, &cfg).unwrap();
            if t % 30 == 29 {
                agent.apply_reward(-0.3).unwrap();
                plastinet::net::apply_reward(&mut plastic, -0.3, &cfg).unwrap();
            }
        }
        // P differs in the last bits after a reward, so x may too.
        for (a, b) in agent.neural().x.iter().zip(&state.x) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let mine = agent.plastic();
        for (a, b) in mine.h.as_slice().iter().zip(plastic.h.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        for (a, b) in mine.p.as_slice().iter().zip(plastic.p.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn masked_entries_never_change(seed in 0u64..500, k in 1usize..6) {
        let n = 8;
        let mask = plastinet::net::last_block_mask(n, k);
        let cfg = NetConfig { plasticity_mask: Some(mask.clone()), ..NetConfig::with_neurons(n) };
        let g = plastinet::es::init_genome(&mut stream(seed), n).unwrap();
        let mut life = LifetimeConfig { n_trials: 20, loss_window: 5, keep_final_plastic: true, ..Default::default() };
        life.schedule = Default::default();
        let res = run_lifetime(&g, TaskId::NAND, seed, &cfg, &life).unwrap();
        let p = res.final_plastic.unwrap().p;
        for (v, m) in p.as_slice().iter().zip(mask.as_slice()) {
            if *m == 0.0 {
                prop_assert_eq!(*v, 0.0);
            }
        }
        // Effective weights outside the mask are exactly W.
        let eff = effective_weights(&g, &PlasticState { p: p.clone(), h: Matrix::zeros(n, n) }, &cfg).unwrap();
        for ((e, w), m) in eff.as_slice().iter().zip(g.w.as_slice()).zip(mask.as_slice()) {
            if *m == 0.0 {
                prop_assert_eq!(e, w);
            }
        }
    }

    #[test]
    fn disabled_plasticity_is_a_fixed_network(seed in 0u64..500) {
        let n = 8;
        let g = plastinet::es::init_genome(&mut stream(seed), n).unwrap();
        let fixed = Genome::new(g.w.clone(), Matrix::zeros(n, n)).unwrap();
        let off = NetConfig { plasticity_enabled: false, ..NetConfig::with_neurons(n) };
        let life = LifetimeConfig { n_trials: 10, loss_window: 5, keep_final_plastic: true, ..Default::default() };
        let a = run_lifetime(&g, TaskId::DMS, seed, &off, &life).unwrap();
        let b = run_lifetime(&fixed, TaskId::DMS, seed, &off, &life).unwrap();
        prop_assert_eq!(&a.errors, &b.errors);
        prop_assert_eq!(a.final_plastic.unwrap(), PlasticState::zeros(n));
    }

    #[test]
    fn twins_share_lifetime_streams(master in any::<u64>(), gen in 0u64..10_000, k in 0u64..10_000) {
        prop_assert_eq!(lifetime_seed(master, gen, 2 * k), lifetime_seed(master, gen, 2 * k + 1));
        prop_assert_ne!(lifetime_seed(master, gen, 2 * k), lifetime_seed(master, gen, 2 * k + 2));
        prop_assert_ne!(lifetime_seed(master, gen, 2 * k), lifetime_seed(master, gen + 1, 2 * k));
        prop_assert_ne!(
            derive_seed(master, Domain::Mutation, &[gen]),
            derive_seed(master, Domain::TaskAssignment, &[gen])
        );
    }

    #[test]
    fn checkpoint_save_load_save_is_stable(n in 5usize..9, gen in 0u64..100, seed in any::<u64>()) {
        let mut rng = stream(seed);
        let g = plastinet::es::init_genome(&mut rng, n).unwrap();
        let mut state = EsState::from_genome(&g, 10);
        state.generation = gen;
        state.adam = AdamState { m: vec![0.25; 2 * n * n], v: vec![1e-3; 2 * n * n], t: gen };
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
        checkpoint::save(&a, &state).unwrap();
        checkpoint::save(&b, &checkpoint::load(&a).unwrap()).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn config_text_is_a_fixed_point(n in 5usize..200, pop in 1usize..300, sigma in 0.001..1.0f64, task in 0u8..16) {
        let mut cfg = ExperimentConfig::default();
        cfg.net.n_neurons = n;
        cfg.es.pop_size = 2 * pop;
        cfg.es.sigma_mut = sigma;
        cfg.es.withheld = TaskId::new(task).unwrap();
        let text = cfg.to_text();
        let back = ExperimentConfig::from_text(&text).unwrap();
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn withheld_pair_never_trains(task in 0u8..16) {
        let t = TaskId::new(task).unwrap();
        let set = training_set(t);
        prop_assert_eq!(set.len(), 14);
        prop_assert!(!set.contains(&t) && !set.contains(&t.negation()));
    }
}

#[test]
fn perturbation_statistics() {
    let n = 50;
    let cfg = NetConfig::with_neurons(n);
    let g = Genome::new(Matrix::zeros(n, n), Matrix::zeros(n, n)).unwrap();
    let mut agent = Agent::new(&g, &cfg).unwrap();
    let mut rng = stream(9);
    let (mut hits, mut total, mut sum, mut sumsq) = (0usize, 0usize, 0.0, 0.0);
    for _ in 0..4000 {
        agent.step(&ClampSpec::none(), &mut rng).unwrap();
        for &d in agent.perturbation() {
            total += 1;
            if d != 0.0 {
                hits += 1;
                assert!((-0.5..0.5).contains(&d));
                sum += d;
                sumsq += d * d;
            }
        }
    }
    let p = hits as f64 / total as f64;
    // 200 000 Bernoulli(0.1) draws: sd of the rate is about 0.0007.
    assert!((p - 0.1).abs() < 0.003, "rate {p}");
    let mean = sum / hits as f64;
    let var = sumsq / hits as f64 - mean * mean;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert_relative_eq!(var, 1.0 / 12.0, max_relative = 0.03);
}

#[test]
fn logistic_activation_reference() {
    let cfg = NetConfig { activation: Activation::Logistic, plasticity_enabled: false, ..quiet(5) };
    let mut w = Matrix::zeros(5, 5);
    w[(0, 0)] = 2.0;
    let g = Genome::new(w, Matrix::zeros(5, 5)).unwrap();
    let mut agent = Agent::new(&g, &cfg).unwrap();
    let mut rng = stream(0);
    let (mut x, mut r, rate) = (0.0f64, 0.0f64, cfg.activation_rate());
    for _ in 0..100 {
        x += rate * (2.0 * r - x);
        r = 1.0 / (1.0 + (-x).exp());
        agent.step(&ClampSpec::none(), &mut rng).unwrap();
        assert!((agent.neural().x[0] - x).abs() < 1e-12);
    }
}

/// Antithetic estimate on a quadratic points along the analytic gradient.
#[test]
fn es_gradient_on_quadratic() {
    let dim = 6;
    let theta: Vec<f64> = (0..dim).map(|i| 0.3 * i as f64 - 0.7).collect();
    let scale: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64).collect();
    let loss = |t: &[f64]| t.iter().zip(&scale).map(|(x, a)| a * x * x).sum::<f64>();
    let analytic: Vec<f64> = theta.iter().zip(&scale).map(|(x, a)| 2.0 * a * x).collect();
    let pairs = mutate_antithetic(&theta, &mut stream(4), 0.05, 1000);
    let mut losses = Vec::new();
    let mut eps = Vec::new();
    for p in &pairs {
        losses.push(loss(&p.plus));
        losses.push(loss(&p.minus));
        eps.push(p.noise.iter().map(|e| e / 0.05).collect::<Vec<_>>());
        eps.push(p.noise.iter().map(|e| -e / 0.05).collect::<Vec<_>>());
    }
    for standardize in [false, true] {
        let g = estimate_gradient(&losses, &eps, 0.05, standardize).unwrap();
        let dot: f64 = g.iter().zip(&analytic).map(|(a, b)| a * b).sum();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (norm(&g) * norm(&analytic)) > 0.95);
    }
    // Unstandardized antithetic estimates are unbiased: magnitude matches too.
    // Per-coordinate sd is about |grad| / sqrt(pairs).
    let g = estimate_gradient(&losses, &eps, 0.05, false).unwrap();
    let norm = analytic.iter().map(|x| x * x).sum::<f64>().sqrt();
    for (a, b) in g.iter().zip(&analytic) {
        assert!((a - b).abs() < 0.15 * norm, "{a} vs {b}");
    }
}

#[test]
fn default_es_config_is_valid() {
    EsConfig::default().validate().unwrap();
}
