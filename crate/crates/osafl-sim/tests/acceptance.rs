//! The acceptance gate for the whole workspace: nine numbered criteria
//! covering the closed-form resource solvers, the successive-convex power
//! solve, gradient and aggregation identities, the content distributions,
//! the desk-scale directional experiment, the IID reduction to two-sided
//! FedAvg, and bit-level reproducibility. Every test prints exactly one
//! `criterion N: PASS/FAIL` line (visible with `--nocapture`, or on
//! failure).

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use osafl_core::content::{
    arrivals_this_round, zipf_mandelbrot_pmf, ArrivalConfig, CatalogConfig, ContentCatalog,
    DatasetKind, FifoBuffer, RequestGenerator, RequestState, UserProfile,
};
use osafl_core::ml::{self, ModelSpec, Sample};
use osafl_core::optim::{self, OptimConfig};
use osafl_core::protocols::{
    afacd_round, compute_scores, osafl_round, ClientCtx, CommonRound, GeneralizedParams,
    ScoreConfig, ScoreMode, ServerState,
};
use osafl_core::rng::{self, domain};
use osafl_core::wireless::{self, DeviceCaps, LinkState};
use osafl_sim::config::{ExperimentConfig, Protocol};
use osafl_sim::{metrics, presets, runner};
use rand::RngCore;

/// Run one criterion body and print its verdict line; a failed assertion
/// still fails the test after the line is printed.
fn criterion(n: u32, desc: &str, body: impl FnOnce()) {
    let outcome = panic::catch_unwind(AssertUnwindSafe(body));
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("criterion {n}: {verdict} — {desc}");
    if let Err(cause) = outcome {
        panic::resume_unwind(cause);
    }
}

/// Reference band parameters: 540 kHz of dedicated bandwidth and a
/// −174 dBm/Hz noise floor.
fn fixed_link() -> LinkState {
    LinkState {
        path_gain: 1e-11,
        shadowing: 1.0,
        bandwidth_hz: 540e3,
        noise_psd: 10f64.powf(-20.4),
    }
}

/// Random device/channel instance from the reference hardware ranges.
fn random_instance(stream: &mut impl RngCore) -> (DeviceCaps, LinkState) {
    let caps = DeviceCaps {
        cycles_per_bit: rng::uniform_range(stream, 25.0, 40.0),
        sample_bits: rng::uniform_range(stream, 500.0, 2000.0),
        capacitance: 2e-28,
        max_freq_hz: rng::uniform_range(stream, 1e9, 1.8e9),
        max_power_w: rng::uniform_range(stream, 0.1, 1.0),
        energy_budget_j: rng::uniform_range(stream, 1.2, 2.5),
        deadline_s: rng::uniform_range(stream, 20.0, 200.0),
        batches: 32,
        batch_size: 5,
        model_params: 3000 + rng::uniform_index(stream, 3000),
        fpp_bits: 32,
    };
    let link = LinkState {
        path_gain: 10f64.powf(rng::uniform_range(stream, -12.5, -9.5)),
        shadowing: 10f64.powf(rng::uniform_range(stream, -0.8, 0.8)),
        bandwidth_hz: 540e3,
        noise_psd: 10f64.powf(-20.4),
    };
    (caps, link)
}

#[test]
fn criterion_1_closed_form_solvers_match_grid_oracles() {
    criterion(
        1,
        "closed-form step-count and frequency solvers match exhaustive grids",
        || {
            let start = Instant::now();
            let mut stream = rng::stream(0xACCE97, 1, 0, 0);
            let kappa_max = 5;
            let mut checked = 0;
            while checked < 200 {
                let (c, l) = random_instance(&mut stream);
                let f = rng::uniform_range(&mut stream, 0.3, 1.0) * c.max_freq_hz;
                let p = rng::uniform_range(&mut stream, 0.05, 1.0) * c.max_power_w;
                let k_rand = 1 + rng::uniform_index(&mut stream, kappa_max as usize) as u32;

                // Integer-grid argmax of the objective over feasible κ.
                let mut grid_arg: Option<u32> = None;
                let mut grid_best = f64::NEG_INFINITY;
                for k in 1..=kappa_max {
                    let t = wireless::comp_time(&c, k, f).expect("valid caps")
                        + wireless::up_time(&c, &l, p).expect("valid caps");
                    let e = wireless::comp_energy(&c, k, f).expect("valid caps")
                        + wireless::up_energy(&c, &l, p).expect("valid caps");
                    if t <= c.deadline_s && e <= c.energy_budget_j {
                        let obj = optim::objective(&c, &l, k, f, p, 0.5);
                        if obj > grid_best {
                            grid_best = obj;
                            grid_arg = Some(k);
                        }
                    }
                }
                match (optim::optimal_kappa(&c, &l, f, p, kappa_max), grid_arg) {
                    (Some(k), Some(g)) => assert_eq!(k, g, "κ solver disagrees with grid"),
                    (None, None) => {}
                    (got, grid) => panic!("κ solver {got:?} vs grid {grid:?}"),
                }

                // Frequency: closed form vs a 10⁴-point grid. The grid can
                // only localize the boundary to one step, so the match
                // tolerance is one grid step plus 1e−6 relative.
                let Some(f_star) = optim::optimal_freq(&c, &l, k_rand, p) else {
                    continue;
                };
                if grid_arg.is_none() {
                    continue;
                }
                let t_up = wireless::up_time(&c, &l, p).expect("valid caps");
                let e_up = wireless::up_energy(&c, &l, p).expect("valid caps");
                let mut smallest: Option<f64> = None;
                let mut best_obj = f64::NEG_INFINITY;
                for j in 1..=10_000u32 {
                    let fg = c.max_freq_hz * j as f64 / 10_000.0;
                    let t_ok = wireless::comp_time(&c, k_rand, fg).expect("valid caps") + t_up
                        <= c.deadline_s;
                    let e_ok = wireless::comp_energy(&c, k_rand, fg).expect("valid caps") + e_up
                        <= c.energy_budget_j;
                    if t_ok && e_ok {
                        if smallest.is_none() {
                            smallest = Some(fg);
                        }
                        best_obj = best_obj.max(optim::objective(&c, &l, k_rand, fg, p, 0.5));
                    }
                }
                let smallest = smallest.expect("closed form feasible implies grid feasible");
                assert!(f_star <= smallest * (1.0 + 1e-9), "closed form above grid minimum");
                assert!(
                    smallest - f_star <= c.max_freq_hz / 10_000.0 + 1e-6 * f_star,
                    "closed form {f_star} too far below grid minimum {smallest}"
                );
                let obj_star = optim::objective(&c, &l, k_rand, f_star, p, 0.5);
                assert!(
                    obj_star >= best_obj - 1e-9 * best_obj.abs().max(1.0),
                    "closed-form objective {obj_star} below grid best {best_obj}"
                );
                checked += 1;
            }
            assert!(
                start.elapsed() < Duration::from_secs(10),
                "oracle comparison took {:?}",
                start.elapsed()
            );
        },
    );
}

#[test]
fn criterion_2_sca_power_solve_is_sound() {
    criterion(
        2,
        "successive-convex power iterates ascend, stay feasible, and beat both interval endpoints",
        || {
            let mut stream = rng::stream(0xACCE97, 2, 0, 0);
            let cfg = OptimConfig::default();
            let mut checked = 0;
            while checked < 100 {
                let (c, l) = random_instance(&mut stream);
                let k = 1 + rng::uniform_index(&mut stream, cfg.kappa_max as usize) as u32;
                let f = rng::uniform_range(&mut stream, 0.3, 1.0) * c.max_freq_hz;
                let Some((p_ret, trace)) = optim::sca_power_trace(&c, &l, k, f, &cfg) else {
                    continue;
                };
                checked += 1;
                let obj = |p: f64| optim::objective(&c, &l, k, f, p, cfg.comp_weight);

                // The true objective never decreases along the iterates.
                for w in trace.windows(2) {
                    assert!(
                        obj(w[1]) >= obj(w[0]) - 1e-9 * obj(w[0]).abs().max(1.0),
                        "objective decreased along iterates: {} -> {}",
                        obj(w[0]),
                        obj(w[1])
                    );
                }
                // The returned power satisfies the true constraints.
                assert!(
                    optim::plan_is_feasible(&c, &l, k, f, p_ret, cfg.kappa_max),
                    "returned power violates the true constraints"
                );

                // Independently recomputed feasible interval [p_lo, p_hi]:
                // the rate floor comes from the deadline, the cap from the
                // true upload-energy budget (bisected) and the hardware max.
                let t_cp = wireless::comp_time(&c, k, f).expect("valid caps");
                let e_cp = wireless::comp_energy(&c, k, f).expect("valid caps");
                let slack = c.deadline_s - t_cp;
                assert!(slack > 0.0, "trace exists only with deadline slack");
                let den = l.bandwidth_hz * l.noise_psd;
                let p_lo = (den / (l.path_gain * l.shadowing)
                    * ((c.payload_bits() / (l.bandwidth_hz * slack)).exp2() - 1.0))
                    .max(f64::MIN_POSITIVE);
                let e_avail = c.energy_budget_j - e_cp;
                let energy = |p: f64| {
                    wireless::up_energy(&c, &l, p).unwrap_or(f64::INFINITY)
                };
                let p_hi = if energy(c.max_power_w) <= e_avail {
                    c.max_power_w
                } else {
                    let (mut lo, mut hi) = (p_lo, c.max_power_w);
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if energy(mid) <= e_avail {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                };
                for endpoint in [p_lo, p_hi] {
                    assert!(
                        obj(p_ret) >= obj(endpoint) - 1e-9 * obj(endpoint).abs().max(1.0),
                        "returned objective {} below endpoint objective {}",
                        obj(p_ret),
                        obj(endpoint)
                    );
                }
            }
        },
    );
}

#[test]
fn criterion_3_joint_optimizer_dominates_coarse_grid() {
    criterion(
        3,
        "joint resource optimizer reaches ≥ 0.99 × the best 5×50×50 grid objective",
        || {
            let mut stream = rng::stream(0xACCE97, 3, 0, 0);
            let cfg = OptimConfig::default();
            let mut feasible_seen = 0;
            let mut infeasible_seen = 0;
            for i in 0..100 {
                let (mut c, l) = random_instance(&mut stream);
                if i % 3 == 0 {
                    // Deadline pressure so infeasible verdicts get exercised.
                    c.deadline_s = rng::uniform_range(&mut stream, 1e-4, 5e-3);
                }
                let plan = optim::optimize(&c, &l, &cfg);

                let mut grid_best = f64::NEG_INFINITY;
                let mut grid_feasible = false;
                for k in 1..=cfg.kappa_max {
                    for fi in 1..=50u32 {
                        let f = c.max_freq_hz * fi as f64 / 50.0;
                        for pi in 1..=50u32 {
                            let p = c.max_power_w * pi as f64 / 50.0;
                            if optim::plan_is_feasible(&c, &l, k, f, p, cfg.kappa_max) {
                                grid_feasible = true;
                                grid_best =
                                    grid_best.max(optim::objective(&c, &l, k, f, p, cfg.comp_weight));
                            }
                        }
                    }
                }
                if plan.feasible {
                    feasible_seen += 1;
                    if grid_feasible {
                        assert!(
                            plan.objective >= 0.99 * grid_best,
                            "optimizer {} below grid {}",
                            plan.objective,
                            grid_best
                        );
                    }
                } else {
                    infeasible_seen += 1;
                    assert!(
                        !grid_feasible,
                        "optimizer verdict infeasible but the grid found a feasible plan"
                    );
                }
            }
            assert!(feasible_seen > 0 && infeasible_seen > 0, "both verdicts must be exercised");
        },
    );
}

#[test]
fn criterion_4_gradients_and_local_training_identity() {
    criterion(
        4,
        "analytic gradients match finite differences; local training satisfies its update identity",
        || {
            let mut stream = rng::stream(0xACCE97, 4, 0, 0);
            for _ in 0..100 {
                let input = 3 + rng::uniform_index(&mut stream, 5);
                let classes = 3 + rng::uniform_index(&mut stream, 4);
                let layers = if rng::uniform_index(&mut stream, 2) == 0 {
                    vec![input, classes]
                } else {
                    vec![input, 4 + rng::uniform_index(&mut stream, 5), classes]
                };
                let spec = ModelSpec::new(layers).expect("valid layer sizes");
                let w = ml::init_params(&spec, stream.next_u64());
                let batch: Vec<Sample> = (0..4 + rng::uniform_index(&mut stream, 5))
                    .map(|_| Sample {
                        features: (0..input)
                            .map(|_| rng::uniform_range(&mut stream, -1.0, 1.0))
                            .collect(),
                        label: rng::uniform_index(&mut stream, classes),
                    })
                    .collect();
                let grad = ml::gradient(&spec, &w, &batch).expect("gradient computes");

                let mut fd = vec![0.0; w.len()];
                let mut probe = w.clone();
                for i in 0..w.len() {
                    let h = 1e-5 * w[i].abs().max(1.0);
                    probe[i] = w[i] + h;
                    let up = ml::loss(&spec, &probe, &batch).expect("loss computes");
                    probe[i] = w[i] - h;
                    let down = ml::loss(&spec, &probe, &batch).expect("loss computes");
                    probe[i] = w[i];
                    fd[i] = (up - down) / (2.0 * h);
                }
                let err: f64 = grad
                    .iter()
                    .zip(&fd)
                    .map(|(g, f)| (g - f) * (g - f))
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = fd.iter().map(|f| f * f).sum::<f64>().sqrt().max(1e-12);
                assert!(
                    err / scale < 1e-4,
                    "finite-difference mismatch: relative error {}",
                    err / scale
                );
            }

            // w_init − w_final = η·κ·d, coordinate-wise, to 1e−10.
            for _ in 0..20 {
                let spec = ModelSpec::new(vec![5, 7, 4]).expect("valid layer sizes");
                let w0 = ml::init_params(&spec, stream.next_u64());
                let data: Vec<Sample> = (0..30)
                    .map(|_| Sample {
                        features: (0..5)
                            .map(|_| rng::uniform_range(&mut stream, -1.0, 1.0))
                            .collect(),
                        label: rng::uniform_index(&mut stream, 4),
                    })
                    .collect();
                let kappa = 1 + rng::uniform_index(&mut stream, 5) as u32;
                let eta = rng::uniform_range(&mut stream, 0.01, 0.3);
                let (wf, d) = ml::local_train(&spec, &w0, &data, kappa, eta, 4, &mut stream)
                    .expect("training runs");
                for ((w_i, wf_i), d_i) in w0.iter().zip(&wf).zip(&d) {
                    assert!(
                        ((w_i - wf_i) - eta * kappa as f64 * d_i).abs() <= 1e-10,
                        "normalized-update identity violated"
                    );
                }
            }
        },
    );
}

/// Synthetic labelled points matching `spec`'s input/output shape.
fn synth_samples(
    stream: &mut impl RngCore,
    n: usize,
    input: usize,
    classes: usize,
) -> Vec<Sample> {
    (0..n)
        .map(|_| Sample {
            features: (0..input)
                .map(|_| rng::uniform_range(stream, -1.0, 1.0))
                .collect(),
            label: rng::uniform_index(stream, classes),
        })
        .collect()
}

/// Device caps generous enough that every client trains at the step cap.
fn generous_caps(model_params: usize, sample_bits: f64, batches: u32, batch_size: u32) -> DeviceCaps {
    DeviceCaps {
        cycles_per_bit: 30.0,
        sample_bits,
        capacitance: 2e-28,
        max_freq_hz: 1e9,
        max_power_w: 0.5,
        energy_budget_j: 1e3,
        deadline_s: 1e4,
        batches,
        batch_size,
        model_params,
        fpp_bits: 32,
    }
}

#[test]
fn criterion_5_score_and_aggregation_identities() {
    criterion(
        5,
        "alignment scores stay in [0,1]; unit scales reproduce the stale-buffer baseline bitwise; rescaling leaves scores fixed",
        || {
            // λ ∈ [0, 1] at χ = 1 on every round of score-aided runs, for
            // both dataset variants.
            for dataset in [1u8, 2u8] {
                let mut cfg = ExperimentConfig::default();
                cfg.protocol = Protocol::Osafl;
                cfg.rounds = 6;
                cfg.clients = 6;
                cfg.seed = 11 + dataset as u64;
                cfg.dataset = dataset;
                cfg.catalog.files = 10;
                cfg.catalog.genres = 2;
                cfg.catalog.file_feature_dim = 16;
                cfg.catalog.genre_feature_dim = 4;
                cfg.model.hidden = vec![12];
                cfg.population.buffer_capacity = [80, 120];
                assert_eq!(cfg.score.chi, 1.0, "default shift is χ = 1");
                let out = runner::run(&cfg).expect("run succeeds");
                for report in &out.reports {
                    for client in &report.clients {
                        assert!(
                            (0.0..=1.0).contains(&client.lambda),
                            "λ = {} outside [0, 1]",
                            client.lambda
                        );
                    }
                }
            }

            // With Δ ≡ 1 the score-aided round reproduces the stale-buffer
            // uniform baseline bit for bit, including straggler rounds.
            let spec = ModelSpec::new(vec![6, 8, 4]).expect("valid layer sizes");
            let w0 = ml::init_params(&spec, 42);
            let caps = generous_caps(spec.param_count(), 6.0 * 32.0, 4, 4);
            let starving_caps = DeviceCaps {
                energy_budget_j: 1e-12,
                ..caps.clone()
            };
            let link = fixed_link();
            let (eta, eta_tilde) = (0.1, 1.5);
            let alpha = vec![0.25; 4];
            let mut unit_server = ServerState::gradient_space(&w0, eta, alpha.clone());
            let mut base_server = ServerState::gradient_space(&w0, eta, alpha);
            let unit_cfg = ScoreConfig {
                mode: ScoreMode::Unit,
                chi: 1.0,
                generalized: GeneralizedParams::default(),
            };
            let optim_cfg = OptimConfig::default();
            let common = CommonRound {
                model: &spec,
                optim: &optim_cfg,
                seed: 77,
            };
            for round in 0..3u64 {
                let datasets: Vec<Vec<Sample>> = (0..4)
                    .map(|u| synth_samples(&mut rng::stream(77, 50, u, round), 12, 6, 4))
                    .collect();
                let ctxs: Vec<ClientCtx> = datasets
                    .iter()
                    .enumerate()
                    .map(|(u, data)| ClientCtx {
                        dataset: data,
                        // Client 3 never has the energy to participate, so
                        // the stale-buffer path is part of the comparison.
                        caps: if u == 3 { &starving_caps } else { &caps },
                        link,
                    })
                    .collect();
                let unit_report =
                    osafl_round(&mut unit_server, &ctxs, &common, eta, eta_tilde, &unit_cfg);
                let base_report =
                    afacd_round(&mut base_server, &ctxs, &common, eta, eta_tilde * eta);
                assert_eq!(unit_report.straggler_count, 1);
                assert_eq!(base_report.straggler_count, 1);
                for (a, b) in unit_server.weights.iter().zip(&base_server.weights) {
                    assert_eq!(a.to_bits(), b.to_bits(), "weight trajectories must agree bitwise");
                }
            }

            // A common positive rescaling of every buffered update leaves
            // each λ untouched, exactly (powers of two keep the arithmetic
            // loss-free).
            let mut stream = rng::stream(0xACCE97, 5, 0, 0);
            let buffer: Vec<Vec<f64>> = (0..6)
                .map(|_| {
                    (0..40)
                        .map(|_| rng::uniform_range(&mut stream, -1.0, 1.0))
                        .collect()
                })
                .collect();
            let alpha = vec![1.0 / 6.0; 6];
            let kappas = [3u32, 1, 5, 2, 4, 1];
            let cfg = ScoreConfig::default();
            let baseline = compute_scores(&buffer, &alpha, &kappas, &cfg);
            for scale in [0.125f64, 16.0] {
                let scaled: Vec<Vec<f64>> = buffer
                    .iter()
                    .map(|d| d.iter().map(|x| x * scale).collect())
                    .collect();
                let rescored = compute_scores(&scaled, &alpha, &kappas, &cfg);
                for (a, b) in baseline.iter().zip(&rescored) {
                    assert_eq!(
                        a.lambda.to_bits(),
                        b.lambda.to_bits(),
                        "λ must be invariant to rescaling all uploads by {scale}"
                    );
                    assert!((0.0..=1.0).contains(&a.lambda));
                }
            }
        },
    );
}

#[test]
fn criterion_6_content_distributions_hold() {
    criterion(
        6,
        "popularity pmf normalizes and matches hand values; arrivals match their mean; buffers never overflow",
        || {
            // Hand case γ=1, q=0, n=3: weights 1, 1/2, 1/3 → 6/11, 3/11, 2/11.
            let expected = [6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0];
            for (rank, want) in expected.iter().enumerate() {
                let got = zipf_mandelbrot_pmf(rank + 1, 1.0, 0.0, 3).expect("valid rank");
                assert!((got - want).abs() <= 1e-12, "rank {}: {} vs {}", rank + 1, got, want);
            }
            // The pmf sums to 1 across the parameter space.
            let mut stream = rng::stream(0xACCE97, 6, 0, 0);
            for _ in 0..50 {
                let gamma = rng::uniform_range(&mut stream, 0.0, 3.0);
                let q = rng::uniform_range(&mut stream, 0.0, 5.0);
                let n = 1 + rng::uniform_index(&mut stream, 200);
                let total: f64 = (1..=n)
                    .map(|r| zipf_mandelbrot_pmf(r, gamma, q, n).expect("valid rank"))
                    .sum();
                assert!((total - 1.0).abs() <= 1e-12, "pmf sums to {total}");
            }

            // Binomial arrivals: the empirical mean over 10⁵ draws sits
            // within 3σ of E·p.
            for _ in 0..5 {
                let cfg = ArrivalConfig {
                    slots: 1 + rng::uniform_index(&mut stream, 32) as u32,
                    prob: rng::uniform_range(&mut stream, 0.3, 0.8),
                };
                let draws = 100_000;
                let total: u64 = (0..draws)
                    .map(|_| arrivals_this_round(&cfg, &mut stream) as u64)
                    .sum();
                let mean = total as f64 / draws as f64;
                let expect = cfg.slots as f64 * cfg.prob;
                let sigma = (cfg.slots as f64 * cfg.prob * (1.0 - cfg.prob) / draws as f64).sqrt();
                assert!(
                    (mean - expect).abs() <= 3.0 * sigma,
                    "arrival mean {mean} vs {expect} (3σ = {})",
                    3.0 * sigma
                );
            }

            // A FIFO buffer holds at most its capacity across 10³ rounds of
            // random batches, and keeps the newest items.
            let capacity = 50;
            let mut buffer = FifoBuffer::new(capacity).expect("valid capacity");
            let mut pushed = 0u32;
            for _ in 0..1000 {
                let n = rng::uniform_index(&mut stream, 20);
                let batch: Vec<u32> = (0..n)
                    .map(|_| {
                        pushed += 1;
                        pushed
                    })
                    .collect();
                buffer.update(batch).expect("update within capacity");
                assert!(buffer.len() <= capacity, "buffer exceeded its capacity");
                if let Some(last) = buffer.items().last() {
                    assert_eq!(*last, pushed, "newest item must survive eviction");
                }
            }
            assert_eq!(buffer.len(), capacity, "a saturated buffer stays full");
        },
    );
}

#[test]
fn criterion_7_desk_scale_directional_experiment() {
    criterion(
        7,
        "desk-scale orderings: score-aided ≥ averaging baselines, genie above all, target reached by 0.75·T",
        || {
            let start = Instant::now();
            let base = presets::by_name(presets::DESK).expect("desk preset exists");
            // The preset is the experiment design: 10 clients, 20 files in
            // 4 genres, 32-dim content features, one 64-unit hidden layer,
            // 40 rounds.
            assert_eq!(
                (base.clients, base.catalog.files, base.catalog.genres),
                (10, 20, 4)
            );
            assert_eq!(base.catalog.file_feature_dim, 32);
            assert_eq!(base.model.hidden, vec![64]);
            assert_eq!(base.rounds, 40);
            let rounds = base.rounds as usize;
            let seeds = [1u64, 2, 3];

            let mut mean_final: BTreeMap<&'static str, f64> = BTreeMap::new();
            let mut mean_traj: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
            let mut straggler_rounds = 0usize;
            let mut client_rounds = 0usize;
            for protocol in Protocol::all() {
                let mut traj = vec![0.0; rounds];
                for seed in seeds {
                    let mut cfg = base.clone();
                    cfg.protocol = protocol;
                    cfg.seed = seed;
                    let out = runner::run(&cfg).expect("run succeeds");
                    assert_eq!(out.rows.len(), rounds);
                    for (slot, row) in traj.iter_mut().zip(&out.rows) {
                        *slot += row.test_accuracy / seeds.len() as f64;
                    }
                    if protocol == Protocol::Osafl {
                        for report in &out.reports {
                            straggler_rounds += report.straggler_count;
                            client_rounds += cfg.clients;
                            for client in &report.clients {
                                assert!(
                                    (0.0..=1.0).contains(&client.lambda),
                                    "λ outside [0, 1] in the desk experiment"
                                );
                            }
                        }
                    }
                }
                mean_final.insert(protocol.id(), *traj.last().expect("rounds ≥ 1"));
                mean_traj.insert(protocol.id(), traj);
            }

            // ~30% of client-rounds are stragglers under the desk deadline.
            let fraction = straggler_rounds as f64 / client_rounds as f64;
            assert!(
                (0.15..=0.45).contains(&fraction),
                "straggler fraction {fraction} outside the experiment's design band"
            );

            let score_aided = mean_final["osafl"];
            assert!(
                score_aided >= mean_final["m-fedavg"],
                "score-aided {} below uniform averaging {}",
                score_aided,
                mean_final["m-fedavg"]
            );
            assert!(
                score_aided >= mean_final["m-fedprox"],
                "score-aided {} below proximal averaging {}",
                score_aided,
                mean_final["m-fedprox"]
            );
            for (id, final_acc) in &mean_final {
                if *id != "genie" {
                    assert!(
                        mean_final["genie"] >= *final_acc,
                        "genie {} below {} at {}",
                        mean_final["genie"],
                        id,
                        final_acc
                    );
                }
            }
            // Time-to-target: the score-aided mean trajectory reaches the
            // averaging baseline's final accuracy within 0.75·T rounds.
            let target = mean_final["m-fedavg"];
            let hit = mean_traj["osafl"]
                .iter()
                .position(|&acc| acc >= target)
                .map(|i| i + 1);
            let budget = (3 * rounds) / 4;
            match hit {
                Some(round) => assert!(
                    round <= budget,
                    "target accuracy {target} first reached in round {round} > {budget}"
                ),
                None => panic!("target accuracy {target} never reached"),
            }
            assert!(
                start.elapsed() < Duration::from_secs(600),
                "experiment took {:?}",
                start.elapsed()
            );
        },
    );
}

#[test]
fn criterion_8_iid_equal_steps_unit_scores_reduce_to_two_sided_averaging() {
    criterion(
        8,
        "IID clients with equal forced steps and unit scales match two-sided FedAvg to 1e−8",
        || {
            let seed = 2024;
            let users = 4usize;
            let rounds = 10u64;
            let catalog = ContentCatalog::generate(
                &CatalogConfig {
                    files: 12,
                    genres: 3,
                    file_feature_dim: 8,
                    genre_feature_dim: 4,
                    feature_spread: 0.5,
                },
                7,
            )
            .expect("catalog generates");
            let profile = UserProfile {
                genre_prefs: vec![1.0 / 3.0; 3],
                exploit_prob: 0.6,
                zipf_gamma: 1.0,
                zipf_q: 2.0,
                top_k: 3,
            };
            let input = catalog.dataset1_dim();
            let spec = ModelSpec::new(vec![input, 10, catalog.num_files()]).expect("valid sizes");
            let w0 = ml::init_params(&spec, seed);

            // Identical shared-profile clients; the evolving datasets are
            // precomputed once so both trajectories see the same data.
            let mut datasets: Vec<Vec<Vec<Sample>>> = vec![Vec::new(); rounds as usize];
            for u in 0..users {
                let mut generator = RequestGenerator::new(
                    DatasetKind::Dataset1,
                    profile.clone(),
                    &catalog,
                    RequestState { genre: 0, file: 0 },
                    0,
                )
                .expect("generator builds");
                let mut buffer = FifoBuffer::new(48).expect("valid capacity");
                let mut warm_rng = rng::stream(seed, domain::REQUESTS, u as u64, u64::MAX);
                let mut warm = Vec::new();
                for _ in 0..40 {
                    if let (Some(sample), _) = generator.advance(&catalog, &mut warm_rng) {
                        warm.push(sample);
                    }
                }
                buffer.update(warm).expect("warm fill fits");
                for round in 0..rounds {
                    let mut round_rng = rng::stream(seed, domain::REQUESTS, u as u64, round);
                    let mut fresh = Vec::new();
                    for _ in 0..8 {
                        if let (Some(sample), _) = generator.advance(&catalog, &mut round_rng) {
                            fresh.push(sample);
                        }
                    }
                    buffer.update(fresh).expect("ingest fits");
                    datasets[round as usize].push(buffer.items().to_vec());
                }
            }

            let caps = generous_caps(spec.param_count(), input as f64 * 32.0, 4, 4);
            let link = fixed_link();
            let optim_cfg = OptimConfig::default();
            let (eta, eta_tilde) = (0.1, 1.5);
            let alpha = vec![1.0 / users as f64; users];

            // Score-aided trajectory with Δ ≡ 1.
            let mut server = ServerState::gradient_space(&w0, eta, alpha.clone());
            let unit_cfg = ScoreConfig {
                mode: ScoreMode::Unit,
                chi: 1.0,
                generalized: GeneralizedParams::default(),
            };
            let common = CommonRound {
                model: &spec,
                optim: &optim_cfg,
                seed,
            };
            for round in 0..rounds {
                let ctxs: Vec<ClientCtx> = datasets[round as usize]
                    .iter()
                    .map(|data| ClientCtx {
                        dataset: data,
                        caps: &caps,
                        link,
                    })
                    .collect();
                let report = osafl_round(&mut server, &ctxs, &common, eta, eta_tilde, &unit_cfg);
                for client in &report.clients {
                    assert_eq!(
                        client.kappa, optim_cfg.kappa_max,
                        "generous budgets must force the step cap everywhere"
                    );
                }
            }

            // Reference: plain two-sided-rate averaging of the normalized
            // updates, written out longhand.
            let mut w_ref = w0;
            for round in 0..rounds {
                let mut pooled = vec![0.0; w_ref.len()];
                for (u, data) in datasets[round as usize].iter().enumerate() {
                    let mut train_rng = rng::stream(seed, domain::TRAINING, u as u64, round);
                    let (_, d) = ml::local_train(
                        &spec,
                        &w_ref,
                        data,
                        optim_cfg.kappa_max,
                        eta,
                        caps.batch_size as usize,
                        &mut train_rng,
                    )
                    .expect("training runs");
                    for (acc, d_i) in pooled.iter_mut().zip(&d) {
                        *acc += alpha[u] * d_i;
                    }
                }
                for (w_i, step) in w_ref.iter_mut().zip(&pooled) {
                    *w_i -= eta_tilde * eta * step;
                }
            }

            for (a, b) in server.weights.iter().zip(&w_ref) {
                assert!(
                    (a - b).abs() <= 1e-8,
                    "trajectories diverged: {a} vs {b}"
                );
            }
        },
    );
}

#[test]
fn criterion_9_reproducibility_is_bit_exact() {
    criterion(
        9,
        "identical config and seed give byte-identical metrics across runs and worker counts",
        || {
            let mut cfg = ExperimentConfig::default();
            cfg.protocol = Protocol::Osafl;
            cfg.rounds = 4;
            cfg.clients = 6;
            cfg.seed = 31;
            cfg.catalog.files = 10;
            cfg.catalog.genres = 2;
            cfg.catalog.file_feature_dim = 16;
            cfg.catalog.genre_feature_dim = 4;
            cfg.model.hidden = vec![16];
            cfg.population.buffer_capacity = [120, 160];

            let dir = tempfile::tempdir().expect("temp dir");
            let csv_bytes = |cfg: &ExperimentConfig, name: &str| {
                let out = runner::run(cfg).expect("run succeeds");
                let path = dir.path().join(name);
                metrics::write_metrics(&out.rows, &path).expect("metrics written");
                std::fs::read(&path).expect("file readable")
            };

            let first = csv_bytes(&cfg, "first.csv");
            let second = csv_bytes(&cfg, "second.csv");
            assert_eq!(first, second, "two identical runs must write identical bytes");

            cfg.workers = 1;
            let serial = csv_bytes(&cfg, "serial.csv");
            cfg.workers = 8;
            let parallel = csv_bytes(&cfg, "parallel.csv");
            assert_eq!(
                serial, parallel,
                "worker count must not affect the written metrics"
            );
            assert_eq!(first, serial, "worker pool size must not affect results at all");
        },
    );
}
