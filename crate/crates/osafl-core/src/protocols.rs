//! Federated-learning round logic over a shared client population: the
//! score-aided protocol plus five baselines and a centralized genie.
//!
//! All protocols share the same skeleton. A pure per-client phase plans
//! resources and trains locally from the synced global model; a serial
//! commit folds the results into the server's per-client buffer and takes
//! one global step. Clients whose resource plan is infeasible sit the
//! round out: their buffered contribution is either stale (kept from the
//! last round they participated in) or, if they have never participated,
//! re-armed from the current global model.
//!
//! Buffers live in gradient space (normalized updates `d_u`) for the
//! score-aided, FedNova-style, and AFA-CD-style protocols, and in model
//! space (full parameter vectors) for the FedAvg/FedProx/FedDisco-style
//! protocols.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::ml::{self, MlError, ModelSpec, ParamVector, Sample};
use crate::optim::{self, OptimConfig, ResourcePlan};
use crate::rng;
use crate::wireless::{DeviceCaps, LinkState};

/// Errors from aggregation-weight computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    /// Every rectified discrepancy weight vanished.
    DegenerateDiscoWeights,
    /// Per-client argument lists disagree in length.
    LengthMismatch,
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolError::DegenerateDiscoWeights => write!(f, "degenerate disco weights"),
            ProtocolError::LengthMismatch => write!(f, "per-client argument length mismatch"),
        }
    }
}

impl core::error::Error for ProtocolError {}

/// Server-side state shared by all protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    /// Current global model `w^t`.
    pub weights: ParamVector,
    /// Latest per-client contribution: a normalized update for
    /// gradient-space protocols, a full model for model-space ones.
    pub buffer: Vec<Vec<f64>>,
    /// Whether each client has participated at least once.
    pub participated: Vec<bool>,
    /// Aggregation weights, summing to 1.
    pub alpha: Vec<f64>,
    /// Latest per-client local step count (used by the FedNova-style
    /// aggregation; 0 until first participation).
    pub step_counts: Vec<f64>,
    /// Global round index.
    pub round: u64,
}

fn assert_alpha(alpha: &[f64]) {
    debug_assert!(!alpha.is_empty());
    debug_assert!(
        math::abs(alpha.iter().sum::<f64>() - 1.0) <= 1e-12,
        "aggregation weights must sum to 1"
    );
}

impl ServerState {
    /// Server for gradient-space protocols: every buffer slot starts at
    /// `w⁰/η`, so a straggler's very first contribution is well-defined.
    pub fn gradient_space(w0: &[f64], eta: f64, alpha: Vec<f64>) -> Self {
        assert_alpha(&alpha);
        let armed: Vec<f64> = w0.iter().map(|w| w / eta).collect();
        let n = alpha.len();
        Self {
            weights: w0.to_vec(),
            buffer: vec![armed; n],
            participated: vec![false; n],
            step_counts: vec![0.0; n],
            alpha,
            round: 0,
        }
    }

    /// Server for model-space protocols: every buffer slot starts at `w⁰`.
    pub fn model_space(w0: &[f64], alpha: Vec<f64>) -> Self {
        assert_alpha(&alpha);
        let n = alpha.len();
        Self {
            weights: w0.to_vec(),
            buffer: vec![w0.to_vec(); n],
            participated: vec![false; n],
            step_counts: vec![0.0; n],
            alpha,
            round: 0,
        }
    }

    pub fn num_clients(&self) -> usize {
        self.alpha.len()
    }
}

/// Per-client score attached to a buffered update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    /// Shifted cosine alignment with the mean update, in
    /// `[(χ−1)/(χ+1), 1]`.
    pub lambda: f64,
    /// Aggregation scale actually applied.
    pub delta: f64,
}

/// How the aggregation scale Δ is derived from the alignment score λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Δ = λ (the experimental default).
    DirectLambda,
    /// Δ from the closed-form stationarity solution with the configured
    /// convergence-bound hyper-parameters.
    Generalized,
    /// Δ ≡ 1, reducing the update rule to unweighted two-sided SGD;
    /// useful as a baseline and for equivalence tests.
    Unit,
}

/// Hyper-parameters of the generalized score
/// `Δ_u = (γ_u + C_u·λ_u)/(2βηη̃σ²α_u² + C_u)` with
/// `C_u = 8α_uκ_uβ²η²σ² + 64α_uΦ_u(βηκ_u)² + 32ρ₂α_uδ_u(βηκ_u)² +
/// 32ρ₁α_u(βηκ_u)²`. These come from smoothness/variance assumptions that
/// are unobservable in practice, so they are plain knobs here, shared
/// across clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedParams {
    pub beta: f64,
    pub sigma_sq: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eta: f64,
    pub eta_tilde: f64,
    /// Lagrange-multiplier offset γ_u ≥ 0.
    pub gamma_u: f64,
    pub phi_u: f64,
    pub delta_u: f64,
}

impl Default for GeneralizedParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            sigma_sq: 1.0,
            rho1: 1.0,
            rho2: 1.0,
            eta: 1.0,
            eta_tilde: 1.0,
            gamma_u: 0.0,
            phi_u: 1.0,
            delta_u: 1.0,
        }
    }
}

/// Score computation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub mode: ScoreMode,
    /// Shift χ ≥ 1 keeping λ non-negative: λ = (χ + cos)/(χ + 1).
    pub chi: f64,
    pub generalized: GeneralizedParams,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            mode: ScoreMode::DirectLambda,
            chi: 1.0,
            generalized: GeneralizedParams::default(),
        }
    }
}

/// Component-wise mean of the buffered per-client vectors:
/// `d̄ = (1/U)·Σ_u d[u]`.
pub fn mean_update(buffer: &[Vec<f64>]) -> Vec<f64> {
    assert!(!buffer.is_empty(), "mean of an empty buffer");
    let dim = buffer[0].len();
    let mut mean = vec![0.0; dim];
    for d in buffer {
        debug_assert_eq!(d.len(), dim);
        for (m, x) in mean.iter_mut().zip(d.iter()) {
            *m += x;
        }
    }
    let n = buffer.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    mean
}

/// Cosine similarity that treats a zero-norm input as orthogonal, since a
/// vanished update carries no direction information.
fn cosine_or_zero(x: &[f64], y: &[f64], client: usize) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        log::warn!("zero-norm update for client {client}; treating cosine as 0");
        return 0.0;
    }
    dot / (math::sqrt(nx) * math::sqrt(ny))
}

/// Score every buffered update against the buffer mean. `kappas` holds
/// each client's local step count this round (0 for stragglers); it only
/// matters in generalized mode.
pub fn compute_scores(
    buffer: &[Vec<f64>],
    alpha: &[f64],
    kappas: &[u32],
    cfg: &ScoreConfig,
) -> Vec<Score> {
    debug_assert!(cfg.chi >= 1.0);
    debug_assert_eq!(buffer.len(), alpha.len());
    debug_assert_eq!(buffer.len(), kappas.len());
    let mean = mean_update(buffer);
    buffer
        .iter()
        .enumerate()
        .map(|(u, d)| {
            let cos = cosine_or_zero(&mean, d, u);
            let lambda = (cfg.chi + cos) / (cfg.chi + 1.0);
            let delta = match cfg.mode {
                ScoreMode::DirectLambda => lambda,
                ScoreMode::Unit => 1.0,
                ScoreMode::Generalized => {
                    let g = &cfg.generalized;
                    let a_u = alpha[u];
                    let k = kappas[u] as f64;
                    let behk = g.beta * g.eta * k;
                    let c_u = 8.0 * a_u * k * g.beta * g.beta * g.eta * g.eta * g.sigma_sq
                        + 64.0 * a_u * g.phi_u * behk * behk
                        + 32.0 * g.rho2 * a_u * g.delta_u * behk * behk
                        + 32.0 * g.rho1 * a_u * behk * behk;
                    (g.gamma_u + c_u * lambda)
                        / (2.0 * g.beta * g.eta * g.eta_tilde * g.sigma_sq * a_u * a_u + c_u)
                }
            };
            Score { lambda, delta }
        })
        .collect()
}

/// One descent step from `w` along the buffered vectors:
/// `w − Σ_u coeffs[u]·buffer[u]`, accumulated client by client so that
/// protocols sharing coefficients produce bit-identical results.
fn aggregate_descent(w: &[f64], buffer: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    debug_assert_eq!(buffer.len(), coeffs.len());
    let mut out = w.to_vec();
    for (d, &c) in buffer.iter().zip(coeffs.iter()) {
        for (o, x) in out.iter_mut().zip(d.iter()) {
            *o -= c * x;
        }
    }
    out
}

/// Everything a protocol needs to know about one client this round.
#[derive(Debug, Clone)]
pub struct ClientCtx<'a> {
    /// The client's current training set (immutable within the round).
    pub dataset: &'a [Sample],
    pub caps: &'a DeviceCaps,
    /// This round's channel realization.
    pub link: LinkState,
}

/// Round-invariant settings shared by every protocol.
#[derive(Debug, Clone)]
pub struct CommonRound<'a> {
    pub model: &'a ModelSpec,
    pub optim: &'a OptimConfig,
    /// Base seed; per-client training streams are derived from it.
    pub seed: u64,
}

/// Local objective flavor for the per-client phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalMode {
    /// Plain mini-batch SGD on the local loss.
    Plain,
    /// SGD on the local loss plus `(μ/2)·‖w − w_anchor‖²`.
    Proximal { mu: f64 },
}

/// Result of one client's round: the resource plan, and — when the client
/// participates — its trained model and normalized update.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientOutcome {
    pub plan: ResourcePlan,
    pub w_final: Option<ParamVector>,
    pub d: Option<Vec<f64>>,
}

impl ClientOutcome {
    pub fn participated(&self) -> bool {
        self.d.is_some()
    }
}

/// Pure per-client phase: plan resources, and if the plan is feasible and
/// the client has data, run the local steps from the synced global model.
/// Deterministic in `(seed, round, client)`; safe to run clients in
/// parallel.
pub fn client_phase(
    ctx: &ClientCtx,
    common: &CommonRound,
    w_global: &[f64],
    client: u64,
    round: u64,
    eta: f64,
    mode: LocalMode,
) -> ClientOutcome {
    if ctx.dataset.is_empty() {
        // Nothing to learn from; the client sits this round out.
        return ClientOutcome {
            plan: ResourcePlan::straggler(),
            w_final: None,
            d: None,
        };
    }
    let plan = optim::optimize(ctx.caps, &ctx.link, common.optim);
    if !plan.feasible {
        return ClientOutcome {
            plan,
            w_final: None,
            d: None,
        };
    }
    let mut stream = rng::stream(common.seed, rng::domain::TRAINING, client, round);
    let batch = ctx.caps.batch_size as usize;
    let (w_final, d) = match mode {
        LocalMode::Plain => {
            ml::local_train(common.model, w_global, ctx.dataset, plan.kappa, eta, batch, &mut stream)
                .expect("round preconditions hold")
        }
        LocalMode::Proximal { mu } => fedprox_local(
            common.model,
            w_global,
            w_global,
            ctx.dataset,
            plan.kappa,
            eta,
            mu,
            batch,
            &mut stream,
        )
        .map(|w| {
            let denom = eta * plan.kappa as f64;
            let d = w_global
                .iter()
                .zip(w.iter())
                .map(|(w0, wf)| (w0 - wf) / denom)
                .collect();
            (w, d)
        })
        .expect("round preconditions hold"),
    };
    ClientOutcome {
        plan,
        w_final: Some(w_final),
        d: Some(d),
    }
}

/// Proximal local training: `kappa` mini-batch steps where each stochastic
/// gradient is augmented with `μ·(w_current − w_anchor)`, descending the
/// local loss plus `(μ/2)·‖w − w_anchor‖²`.
#[allow(clippy::too_many_arguments)]
pub fn fedprox_local(
    spec: &ModelSpec,
    w_init: &[f64],
    w_anchor: &[f64],
    dataset: &[Sample],
    kappa: u32,
    eta: f64,
    mu: f64,
    batch_size: usize,
    rng: &mut impl rand_core::RngCore,
) -> Result<ParamVector, MlError> {
    if w_init.len() != w_anchor.len() {
        return Err(MlError::DimensionMismatch {
            expected: w_init.len(),
            got: w_anchor.len(),
        });
    }
    if kappa < 1 {
        return Err(MlError::NoLocalBudget);
    }
    if dataset.is_empty() || batch_size == 0 {
        return Err(MlError::EmptyDataset);
    }
    let mut w = w_init.to_vec();
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..kappa {
        batch.clear();
        for _ in 0..batch_size {
            let idx = rng::uniform_index(rng, dataset.len());
            batch.push(dataset[idx].clone());
        }
        let grad = ml::gradient(spec, &w, &batch)?;
        for ((wi, gi), ai) in w.iter_mut().zip(grad.iter()).zip(w_anchor.iter()) {
            let prox = mu * (*wi - ai);
            *wi -= eta * (gi + prox);
        }
    }
    Ok(w)
}

/// Per-client slice of a round report.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientReport {
    pub kappa: u32,
    pub feasible: bool,
    /// Norm of the buffered vector actually aggregated for this client.
    pub update_norm: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Convergence-bound diagnostic `(Δ−λ)² + λ²`; non-negative by
    /// construction.
    pub b_diag: f64,
}

/// What one global round did. The loss/accuracy fields are populated by
/// the experiment driver, which owns the evaluation streams; round
/// functions leave them as NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub clients: Vec<ClientReport>,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub straggler_count: usize,
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(v.iter().map(|x| x * x).sum())
}

fn build_report(
    server: &ServerState,
    outcomes: &[ClientOutcome],
    scores: Option<&[Score]>,
) -> RoundReport {
    let clients: Vec<ClientReport> = outcomes
        .iter()
        .enumerate()
        .map(|(u, o)| {
            let (lambda, delta) = scores.map_or((0.0, 0.0), |s| (s[u].lambda, s[u].delta));
            let dl = delta - lambda;
            ClientReport {
                kappa: o.plan.kappa,
                feasible: o.plan.feasible,
                update_norm: norm(&server.buffer[u]),
                lambda,
                delta,
                b_diag: dl * dl + lambda * lambda,
            }
        })
        .collect();
    let straggler_count = clients.iter().filter(|c| !c.feasible).count();
    RoundReport {
        clients,
        train_loss: f64::NAN,
        test_loss: f64::NAN,
        test_accuracy: f64::NAN,
        straggler_count,
    }
}

/// Fold participant uploads into a gradient-space buffer; clients that
/// have never participated get re-armed with the current `w^t/η`.
fn update_gradient_buffer(server: &mut ServerState, outcomes: &[ClientOutcome], eta: f64) {
    let w_t = server.weights.clone();
    for (u, o) in outcomes.iter().enumerate() {
        if let Some(d) = &o.d {
            server.buffer[u] = d.clone();
            server.participated[u] = true;
            server.step_counts[u] = o.plan.kappa as f64;
        } else if !server.participated[u] {
            server.buffer[u] = w_t.iter().map(|w| w / eta).collect();
        }
    }
}

/// Fold participant uploads into a model-space buffer; clients that have
/// never participated hold the current `w^t`.
fn update_model_buffer(server: &mut ServerState, outcomes: &[ClientOutcome]) {
    let w_t = server.weights.clone();
    for (u, o) in outcomes.iter().enumerate() {
        if let Some(w) = &o.w_final {
            server.buffer[u] = w.clone();
            server.participated[u] = true;
            server.step_counts[u] = o.plan.kappa as f64;
        } else if !server.participated[u] {
            server.buffer[u] = w_t.clone();
        }
    }
}

/// Commit the score-aided round: update the buffer, score every entry
/// against the buffer mean, and take the global step
/// `w^{t+1} = w^t − η̃·η·Σ_u α_u·Δ_u·buffer[u]`.
pub fn osafl_commit(
    server: &mut ServerState,
    outcomes: &[ClientOutcome],
    eta: f64,
    eta_tilde: f64,
    score_cfg: &ScoreConfig,
) -> RoundReport {
    update_gradient_buffer(server, outcomes, eta);
    let kappas: Vec<u32> = outcomes.iter().map(|o| o.plan.kappa).collect();
    let scores = compute_scores(&server.buffer, &server.alpha, &kappas, score_cfg);
    let coeffs: Vec<f64> = scores
        .iter()
        .zip(server.alpha.iter())
        .map(|(s, &a)| (eta_tilde * eta) * a * s.delta)
        .collect();
    server.weights = aggregate_descent(&server.weights, &server.buffer, &coeffs);
    server.round += 1;
    build_report(server, outcomes, Some(&scores))
}

/// Commit a FedAvg-style round: `w^{t+1} = (1/U)·Σ_u buffer[u]` over the
/// model-space buffer.
pub fn fedavg_commit(server: &mut ServerState, outcomes: &[ClientOutcome]) -> RoundReport {
    update_model_buffer(server, outcomes);
    server.weights = mean_update(&server.buffer);
    server.round += 1;
    build_report(server, outcomes, None)
}

/// Commit a FedDisco-style round: aggregation weights from rectified
/// data-share/label-discrepancy scores, then `w^{t+1} = Σ_u α_u·buffer[u]`.
/// Degenerate (all-zero) weights fall back to the uniform average.
pub fn feddisco_commit(
    server: &mut ServerState,
    clients: &[ClientCtx],
    outcomes: &[ClientOutcome],
    num_classes: usize,
    a: f64,
    b: f64,
) -> RoundReport {
    update_model_buffer(server, outcomes);
    let hists: Vec<Vec<f64>> = clients
        .iter()
        .map(|c| label_histogram(c.dataset, num_classes))
        .collect();
    let sizes: Vec<f64> = clients.iter().map(|c| c.dataset.len() as f64).collect();
    let weights = match feddisco_weights(&hists, &sizes, a, b) {
        Ok(w) => w,
        Err(e) => {
            log::warn!("{e}; falling back to uniform aggregation weights");
            vec![1.0 / server.num_clients() as f64; server.num_clients()]
        }
    };
    let dim = server.weights.len();
    let mut next = vec![0.0; dim];
    for (d, &a_u) in server.buffer.iter().zip(weights.iter()) {
        for (n, x) in next.iter_mut().zip(d.iter()) {
            *n += a_u * x;
        }
    }
    server.weights = next;
    server.round += 1;
    build_report(server, outcomes, None)
}

/// Commit a FedNova-style round over the gradient-space buffer, using each
/// client's latest step count and dataset share.
pub fn fednova_commit(
    server: &mut ServerState,
    clients: &[ClientCtx],
    outcomes: &[ClientOutcome],
    eta: f64,
    tau_tilde: f64,
) -> RoundReport {
    // Participants refresh their (d, κ); everyone else keeps their latest
    // contribution, never-participants staying at κ = 0 (zero weight).
    for (u, o) in outcomes.iter().enumerate() {
        if let Some(d) = &o.d {
            server.buffer[u] = d.clone();
            server.participated[u] = true;
            server.step_counts[u] = o.plan.kappa as f64;
        }
    }
    let sizes: Vec<f64> = clients.iter().map(|c| c.dataset.len() as f64).collect();
    server.weights = fednova_aggregate(
        &server.weights,
        &server.buffer,
        &server.step_counts,
        &sizes,
        eta,
        tau_tilde,
    );
    server.round += 1;
    build_report(server, outcomes, None)
}

/// Commit an AFA-CD-style round: same buffer rules as the score-aided
/// protocol (with local rate `eta_local`), aggregated as
/// `w^{t+1} = w^t − η·Σ_u α_u·buffer[u]` with global rate `eta_global`.
pub fn afacd_commit(
    server: &mut ServerState,
    outcomes: &[ClientOutcome],
    eta_local: f64,
    eta_global: f64,
) -> RoundReport {
    update_gradient_buffer(server, outcomes, eta_local);
    server.weights = afacd_aggregate(&server.weights, &server.buffer, &server.alpha, eta_global);
    server.round += 1;
    build_report(server, outcomes, None)
}

/// FedNova-style aggregation:
/// `w^{t+1} = w^t − τ̃·(Σ_i p_i·κ_i)·Σ_u η·(p_u·κ_u/Σ_i p_i·κ_i)·d[u]`
/// with `p_u = D_u/Σ D`. All-zero effective steps (or no data anywhere)
/// leave `w` unchanged.
pub fn fednova_aggregate(
    w: &[f64],
    buffer: &[Vec<f64>],
    step_counts: &[f64],
    data_sizes: &[f64],
    eta: f64,
    tau_tilde: f64,
) -> Vec<f64> {
    debug_assert_eq!(buffer.len(), step_counts.len());
    debug_assert_eq!(buffer.len(), data_sizes.len());
    let total_data: f64 = data_sizes.iter().sum();
    if total_data <= 0.0 {
        return w.to_vec();
    }
    let shares: Vec<f64> = data_sizes.iter().map(|d| d / total_data).collect();
    let effective: f64 = shares
        .iter()
        .zip(step_counts.iter())
        .map(|(p, k)| p * k)
        .sum();
    if effective <= 0.0 {
        return w.to_vec();
    }
    let coeffs: Vec<f64> = shares
        .iter()
        .zip(step_counts.iter())
        .map(|(p, k)| tau_tilde * effective * (eta * (p * k / effective)))
        .collect();
    aggregate_descent(w, buffer, &coeffs)
}

/// AFA-CD-style aggregation: `w^{t+1} = w^t − η·Σ_u α_u·buffer[u]`.
pub fn afacd_aggregate(
    w: &[f64],
    buffer: &[Vec<f64>],
    alpha: &[f64],
    eta_global: f64,
) -> Vec<f64> {
    let coeffs: Vec<f64> = alpha.iter().map(|&a| eta_global * a).collect();
    aggregate_descent(w, buffer, &coeffs)
}

/// Normalized label histogram of a dataset over `num_classes` classes; an
/// empty dataset counts as exactly uniform (zero discrepancy).
pub fn label_histogram(dataset: &[Sample], num_classes: usize) -> Vec<f64> {
    if dataset.is_empty() {
        return vec![1.0 / num_classes as f64; num_classes];
    }
    let mut hist = vec![0.0; num_classes];
    for s in dataset {
        hist[s.label] += 1.0;
    }
    let n = dataset.len() as f64;
    for h in &mut hist {
        *h /= n;
    }
    hist
}

/// FedDisco-style aggregation weights: each client's data share `p_u`,
/// penalized by `a` times the L2 distance of its label distribution from
/// uniform, offset by `b`, rectified, and normalized.
pub fn feddisco_weights(
    label_hists: &[Vec<f64>],
    data_sizes: &[f64],
    a: f64,
    b: f64,
) -> Result<Vec<f64>, ProtocolError> {
    if label_hists.len() != data_sizes.len() || label_hists.is_empty() {
        return Err(ProtocolError::LengthMismatch);
    }
    let total: f64 = data_sizes.iter().sum();
    let raw: Vec<f64> = label_hists
        .iter()
        .zip(data_sizes.iter())
        .map(|(hist, &d)| {
            let uniform = 1.0 / hist.len() as f64;
            let disc = math::sqrt(hist.iter().map(|h| (h - uniform) * (h - uniform)).sum());
            let p = if total > 0.0 { d / total } else { 0.0 };
            (p - a * disc + b).max(0.0)
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 {
        return Err(ProtocolError::DegenerateDiscoWeights);
    }
    Ok(raw.iter().map(|r| r / sum).collect())
}

/// Genie training: mini-batch SGD on the pooled dataset, as if every
/// client's current samples sat on one machine. Zero steps is a no-op.
pub fn centralized_round(
    spec: &ModelSpec,
    w: &[f64],
    pooled: &[Sample],
    n_steps: u32,
    eta: f64,
    batch_size: usize,
    rng: &mut impl rand_core::RngCore,
) -> Result<ParamVector, MlError> {
    if n_steps == 0 {
        return Ok(w.to_vec());
    }
    ml::local_train(spec, w, pooled, n_steps, eta, batch_size, rng).map(|(wf, _)| wf)
}

/// One full score-aided round: per-client phase for every client, then
/// the score-aided commit.
pub fn osafl_round(
    server: &mut ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta: f64,
    eta_tilde: f64,
    score_cfg: &ScoreConfig,
) -> RoundReport {
    let outcomes = run_clients(server, clients, common, eta, LocalMode::Plain);
    osafl_commit(server, &outcomes, eta, eta_tilde, score_cfg)
}

/// One full FedAvg-style round.
pub fn fedavg_round(
    server: &mut ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta: f64,
) -> RoundReport {
    let outcomes = run_clients(server, clients, common, eta, LocalMode::Plain);
    fedavg_commit(server, &outcomes)
}

/// One full FedProx-style round.
pub fn fedprox_round(
    server: &mut ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta: f64,
    mu: f64,
) -> RoundReport {
    let outcomes = run_clients(server, clients, common, eta, LocalMode::Proximal { mu });
    fedavg_commit(server, &outcomes)
}

/// One full FedNova-style round.
pub fn fednova_round(
    server: &mut ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta: f64,
    tau_tilde: f64,
) -> RoundReport {
    let outcomes = run_clients(server, clients, common, eta, LocalMode::Plain);
    fednova_commit(server, clients, &outcomes, eta, tau_tilde)
}

/// One full AFA-CD-style round.
pub fn afacd_round(
    server: &mut ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta_local: f64,
    eta_global: f64,
) -> RoundReport {
    let outcomes = run_clients(server, clients, common, eta_local, LocalMode::Plain);
    afacd_commit(server, &outcomes, eta_local, eta_global)
}

/// One full FedDisco-style round.
pub fn feddisco_round(
    server: &mut ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta: f64,
    num_classes: usize,
    a: f64,
    b: f64,
) -> RoundReport {
    let outcomes = run_clients(server, clients, common, eta, LocalMode::Plain);
    feddisco_commit(server, clients, &outcomes, num_classes, a, b)
}

/// The serial reference client loop; an experiment driver may instead run
/// [`client_phase`] for each client in parallel and feed the collected
/// outcomes to a commit function — the results are identical.
fn run_clients(
    server: &ServerState,
    clients: &[ClientCtx],
    common: &CommonRound,
    eta: f64,
    mode: LocalMode,
) -> Vec<ClientOutcome> {
    assert_eq!(clients.len(), server.num_clients());
    clients
        .iter()
        .enumerate()
        .map(|(u, ctx)| {
            client_phase(ctx, common, &server.weights, u as u64, server.round, eta, mode)
        })
        .collect()
}
