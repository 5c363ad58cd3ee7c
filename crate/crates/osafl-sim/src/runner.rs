//! Round orchestration: builds the world from a config, runs T rounds of
//! the configured protocol, evaluates on held-out request continuations,
//! and returns per-round metrics plus the raw client reports.
//!
//! Within a round, per-client work (resource planning + local training,
//! and later evaluation) fans out to a thread pool; every RNG stream is
//! keyed by `(seed, domain, client, round)`, and all floating-point
//! reductions happen serially in client order, so results are bit-equal
//! for any worker count.

use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::{Context, Result};
use osafl_core::content::{
    arrivals_this_round, CatalogConfig, ContentCatalog, FifoBuffer, RequestGenerator,
};
use osafl_core::ml::{self, ModelSpec, Sample};
use osafl_core::protocols::{
    afacd_commit, centralized_round, client_phase, fedavg_commit, feddisco_commit, fednova_commit,
    osafl_commit, ClientCtx, ClientOutcome, CommonRound, LocalMode, RoundReport, ServerState,
};
use osafl_core::rng::{self, domain};
use osafl_core::wireless::sample_link;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, Protocol};
use crate::metrics::MetricRow;
use crate::population::{self, ClientState};

/// One client's live simulation state.
pub struct ClientSim {
    pub state: ClientState,
    pub generator: RequestGenerator,
    pub buffer: FifoBuffer<Sample>,
}

/// Immutable catalog/model plus per-client live state.
pub struct World {
    pub catalog: ContentCatalog,
    pub model: ModelSpec,
    pub clients: Vec<ClientSim>,
}

/// The round index used to key warm-fill request streams; real rounds
/// count from 0 and can never collide with it.
const WARM_FILL_ROUND: u64 = u64::MAX;

impl World {
    /// Build catalog, model, population, and warm-filled client buffers.
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let catalog = ContentCatalog::generate(
            &CatalogConfig {
                files: cfg.catalog.files,
                genres: cfg.catalog.genres,
                file_feature_dim: cfg.catalog.file_feature_dim,
                genre_feature_dim: cfg.catalog.genre_feature_dim,
                feature_spread: cfg.catalog.feature_spread,
            },
            cfg.seed,
        )
        .map_err(|e| anyhow::anyhow!("building catalog: {e}"))?;

        let input_dim = match cfg.dataset {
            1 => catalog.dataset1_dim(),
            _ => cfg.catalog.window,
        };
        let mut layers = Vec::with_capacity(cfg.model.hidden.len() + 2);
        layers.push(input_dim);
        layers.extend_from_slice(&cfg.model.hidden);
        layers.push(catalog.num_files());
        let model = ModelSpec::new(layers).map_err(|e| anyhow::anyhow!("building model: {e}"))?;

        let population = population::build_population(cfg, &catalog, &model);
        let clients = population
            .into_iter()
            .enumerate()
            .map(|(u, state)| {
                let mut generator = RequestGenerator::new(
                    cfg.dataset_kind(),
                    state.profile.clone(),
                    &catalog,
                    state.initial,
                    cfg.window_len(),
                )
                .map_err(|e| anyhow::anyhow!("client {u} generator: {e}"))?;
                let mut buffer = FifoBuffer::new(state.buffer_capacity)
                    .map_err(|e| anyhow::anyhow!("client {u} buffer: {e}"))?;
                // Clients start with a full dataset, so FIFO eviction and
                // the resulting distribution drift act from round one.
                let mut fill_rng =
                    rng::stream(cfg.seed, domain::REQUESTS, u as u64, WARM_FILL_ROUND);
                let mut warm = Vec::with_capacity(state.buffer_capacity);
                for _ in 0..state.buffer_capacity {
                    let (sample, _) = generator.advance(&catalog, &mut fill_rng);
                    if let Some(s) = sample {
                        warm.push(s);
                    }
                }
                buffer
                    .update(warm)
                    .map_err(|e| anyhow::anyhow!("client {u} warm fill: {e}"))?;
                Ok(ClientSim {
                    state,
                    generator,
                    buffer,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            catalog,
            model,
            clients,
        })
    }

    /// Draw this round's arrivals and push the new samples through every
    /// FIFO buffer. `round` is 0-based.
    fn ingest(
        &mut self,
        cfg: &ExperimentConfig,
        round: u64,
        dump: &mut Option<BufWriter<File>>,
    ) -> Result<()> {
        for (u, client) in self.clients.iter_mut().enumerate() {
            let mut arrival_rng = rng::stream(cfg.seed, domain::ARRIVALS, u as u64, round);
            let n = arrivals_this_round(&client.state.arrivals, &mut arrival_rng);
            let mut request_rng = rng::stream(cfg.seed, domain::REQUESTS, u as u64, round);
            let mut fresh = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let (sample, record) = client.generator.advance(&self.catalog, &mut request_rng);
                if let Some(writer) = dump.as_mut() {
                    let line = json!({
                        "round": round + 1,
                        "user": u,
                        "genre": record.genre,
                        "file": record.file,
                        "label": record.label,
                    });
                    writeln!(writer, "{line}").context("writing request log")?;
                }
                if let Some(s) = sample {
                    fresh.push(s);
                }
            }
            client
                .buffer
                .update(fresh)
                .map_err(|e| anyhow::anyhow!("client {u} ingest: {e}"))?;
        }
        Ok(())
    }

    /// Per-client contexts for one round: current datasets plus freshly
    /// sampled channel states.
    fn contexts(&self, cfg: &ExperimentConfig, round: u64) -> Vec<ClientCtx<'_>> {
        let link_cfg = cfg.link.to_core();
        self.clients
            .iter()
            .enumerate()
            .map(|(u, c)| ClientCtx {
                dataset: c.buffer.items(),
                caps: &c.state.caps,
                link: sample_link(
                    c.state.distance_m,
                    &mut rng::stream(cfg.seed, domain::LINK, u as u64, round),
                    &link_cfg,
                ),
            })
            .collect()
    }

    /// Loss/accuracy of `weights` on each client's held-out continuation:
    /// `test_requests` future requests drawn from a copy of the live
    /// request state on the evaluation stream, so training never sees
    /// them. Per-client sums are folded serially in client order.
    fn evaluate(
        &self,
        pool: &rayon::ThreadPool,
        cfg: &ExperimentConfig,
        weights: &[f64],
        round: u64,
    ) -> (f64, f64) {
        let per_client: Vec<(f64, usize, usize)> = pool.install(|| {
            self.clients
                .par_iter()
                .enumerate()
                .map(|(u, c)| {
                    let mut generator = c.generator.clone();
                    let mut eval_rng = rng::stream(cfg.seed, domain::EVAL, u as u64, round);
                    let mut held_out = Vec::with_capacity(cfg.eval.test_requests);
                    for _ in 0..cfg.eval.test_requests {
                        let (sample, _) = generator.advance(&self.catalog, &mut eval_rng);
                        if let Some(s) = sample {
                            held_out.push(s);
                        }
                    }
                    if held_out.is_empty() {
                        return (0.0, 0, 0);
                    }
                    let mean_loss = ml::loss(&self.model, weights, &held_out)
                        .expect("held-out samples match the model");
                    let correct = held_out
                        .iter()
                        .filter(|s| {
                            ml::predict(&self.model, weights, &s.features)
                                .expect("held-out samples match the model")
                                == s.label
                        })
                        .count();
                    (mean_loss * held_out.len() as f64, correct, held_out.len())
                })
                .collect()
        });
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for (l, c, n) in per_client {
            loss_sum += l;
            correct += c;
            total += n;
        }
        if total == 0 {
            return (f64::NAN, f64::NAN);
        }
        (loss_sum / total as f64, correct as f64 / total as f64)
    }

    /// Mean loss of `weights` over the union of current training buffers.
    fn train_loss(&self, weights: &[f64]) -> f64 {
        let mut loss_sum = 0.0;
        let mut total = 0usize;
        for c in &self.clients {
            let data = c.buffer.items();
            if data.is_empty() {
                continue;
            }
            let mean = ml::loss(&self.model, weights, data).expect("buffer samples match the model");
            loss_sum += mean * data.len() as f64;
            total += data.len();
        }
        if total == 0 {
            return f64::NAN;
        }
        loss_sum / total as f64
    }
}

/// Everything one run produces: CSV-ready rows, the raw per-round client
/// reports (straggler flags, step counts, similarity scores), and the
/// model the run ended with.
pub struct RunOutput {
    pub rows: Vec<MetricRow>,
    pub reports: Vec<RoundReport>,
    pub final_weights: Vec<f64>,
}

/// Fraction of client-rounds that were stragglers across a whole run.
pub fn straggler_fraction(output: &RunOutput, clients: usize) -> f64 {
    if output.reports.is_empty() || clients == 0 {
        return 0.0;
    }
    let stragglers: usize = output.reports.iter().map(|r| r.straggler_count).sum();
    stragglers as f64 / (clients * output.reports.len()) as f64
}

/// Run `cfg.rounds` rounds of `cfg.protocol` and collect metrics.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    let mut world = World::build(cfg)?;
    let w0 = ml::init_params(&world.model, cfg.seed);
    let alpha = vec![1.0 / cfg.clients as f64; cfg.clients];
    let lr = &cfg.learning;
    let score_cfg = cfg.to_score_config();
    let optim_cfg = cfg.optim.to_core();

    // Gradient-space protocols buffer normalized updates d[u] (seeded with
    // w⁰/η); averaging protocols and the genie buffer model copies.
    let mut server = match cfg.protocol {
        Protocol::Osafl => ServerState::gradient_space(&w0, lr.eta, alpha),
        Protocol::MAfaCd => ServerState::gradient_space(&w0, lr.afacd_eta_local, alpha),
        Protocol::MFednova => ServerState::gradient_space(&w0, lr.fednova_eta, alpha),
        Protocol::MFedavg | Protocol::MFedprox | Protocol::MFeddisco | Protocol::Genie => {
            ServerState::model_space(&w0, alpha)
        }
    };

    let mut dump = match &cfg.output.request_log {
        Some(path) => {
            let file = File::create(path)
                .with_context(|| format!("creating request log {}", path.display()))?;
            Some(BufWriter::new(file))
        }
        None => None,
    };

    let mut rows = Vec::with_capacity(cfg.rounds as usize);
    let mut reports = Vec::with_capacity(cfg.rounds as usize);
    log::info!(
        "running {} for {} rounds, {} clients, seed {}",
        cfg.protocol.id(),
        cfg.rounds,
        cfg.clients,
        cfg.seed
    );

    for round in 0..cfg.rounds {
        world.ingest(cfg, round, &mut dump)?;
        let report = match cfg.protocol {
            Protocol::Genie => {
                let pooled: Vec<Sample> = world
                    .clients
                    .iter()
                    .flat_map(|c| c.buffer.items().iter().cloned())
                    .collect();
                if !pooled.is_empty() && lr.genie_steps > 0 {
                    let mut rng = rng::stream(cfg.seed, domain::TRAINING, 0, round);
                    server.weights = centralized_round(
                        &world.model,
                        &server.weights,
                        &pooled,
                        lr.genie_steps,
                        lr.eta,
                        cfg.population.batch_size as usize,
                        &mut rng,
                    )
                    .map_err(|e| anyhow::anyhow!("genie round {round}: {e}"))?;
                }
                RoundReport {
                    clients: Vec::new(),
                    train_loss: f64::NAN,
                    test_loss: f64::NAN,
                    test_accuracy: f64::NAN,
                    straggler_count: 0,
                }
            }
            protocol => {
                let ctxs = world.contexts(cfg, round);
                let common = CommonRound {
                    model: &world.model,
                    optim: &optim_cfg,
                    seed: cfg.seed,
                };
                let (eta, mode) = match protocol {
                    Protocol::Osafl => (lr.eta, LocalMode::Plain),
                    Protocol::MFedavg => (lr.fedavg_lr, LocalMode::Plain),
                    Protocol::MFedprox => {
                        (lr.fedprox_lr, LocalMode::Proximal { mu: lr.fedprox_mu })
                    }
                    Protocol::MFednova => (lr.fednova_eta, LocalMode::Plain),
                    Protocol::MAfaCd => (lr.afacd_eta_local, LocalMode::Plain),
                    Protocol::MFeddisco => (lr.feddisco_lr, LocalMode::Plain),
                    Protocol::Genie => unreachable!("handled above"),
                };
                let outcomes = client_phases(&pool, &ctxs, &common, &server.weights, round, eta, mode);
                match protocol {
                    Protocol::Osafl => {
                        osafl_commit(&mut server, &outcomes, lr.eta, lr.eta_tilde, &score_cfg)
                    }
                    Protocol::MFedavg | Protocol::MFedprox => fedavg_commit(&mut server, &outcomes),
                    Protocol::MFednova => fednova_commit(
                        &mut server,
                        &ctxs,
                        &outcomes,
                        lr.fednova_eta,
                        lr.fednova_tau_tilde,
                    ),
                    Protocol::MAfaCd => afacd_commit(
                        &mut server,
                        &outcomes,
                        lr.afacd_eta_local,
                        lr.afacd_eta_global,
                    ),
                    Protocol::MFeddisco => feddisco_commit(
                        &mut server,
                        &ctxs,
                        &outcomes,
                        world.catalog.num_files(),
                        lr.feddisco_a,
                        lr.feddisco_b,
                    ),
                    Protocol::Genie => unreachable!("handled above"),
                }
            }
        };

        let (test_loss, test_accuracy) = world.evaluate(&pool, cfg, &server.weights, round);
        let train_loss = world.train_loss(&server.weights);
        rows.push(metric_row(cfg, round, &report, test_accuracy, test_loss, train_loss));
        reports.push(report);
        log::debug!(
            "round {}: acc {:.4}, test loss {:.4}, stragglers {}",
            round + 1,
            test_accuracy,
            test_loss,
            rows.last().expect("just pushed").straggler_count
        );
    }

    if let Some(mut writer) = dump {
        writer.flush().context("flushing request log")?;
    }
    Ok(RunOutput {
        rows,
        reports,
        final_weights: server.weights,
    })
}

/// Per-client phases on the worker pool, collected in client order.
fn client_phases(
    pool: &rayon::ThreadPool,
    ctxs: &[ClientCtx<'_>],
    common: &CommonRound<'_>,
    weights: &[f64],
    round: u64,
    eta: f64,
    mode: LocalMode,
) -> Vec<ClientOutcome> {
    pool.install(|| {
        ctxs.par_iter()
            .enumerate()
            .map(|(u, ctx)| client_phase(ctx, common, weights, u as u64, round, eta, mode))
            .collect()
    })
}

fn metric_row(
    cfg: &ExperimentConfig,
    round: u64,
    report: &RoundReport,
    test_accuracy: f64,
    test_loss: f64,
    train_loss: f64,
) -> MetricRow {
    let (mean_kappa, mean_lambda) = if cfg.protocol == Protocol::Genie {
        (cfg.learning.genie_steps as f64, 0.0)
    } else {
        let participants: Vec<&_> = report.clients.iter().filter(|c| c.feasible).collect();
        let mean_kappa = if participants.is_empty() {
            0.0
        } else {
            participants.iter().map(|c| c.kappa as f64).sum::<f64>() / participants.len() as f64
        };
        let mean_lambda = if report.clients.is_empty() {
            0.0
        } else {
            report.clients.iter().map(|c| c.lambda).sum::<f64>() / report.clients.len() as f64
        };
        (mean_kappa, mean_lambda)
    };
    MetricRow {
        round: round + 1,
        protocol: cfg.protocol.id().to_string(),
        test_accuracy,
        test_loss,
        train_loss,
        straggler_count: report.straggler_count,
        mean_kappa,
        mean_lambda,
    }
}
