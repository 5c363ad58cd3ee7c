//! Experiment configuration: one human-readable TOML document describing
//! the protocol, the workload, the client population, and every knob the
//! simulator exposes. Defaults reproduce the reference wide-area setup
//! (100 clients, 100-file catalog, 200-second round deadline); the `desk`
//! preset in [`crate::presets`] scales it down to laptop size.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use osafl_core::content::DatasetKind;
use osafl_core::optim::OptimConfig;
use osafl_core::protocols::{GeneralizedParams, ScoreConfig, ScoreMode};
use osafl_core::wireless::LinkConfig;
use serde::{Deserialize, Serialize};

/// A configuration problem: unreadable file, unparsable document, or a
/// value outside its legal range. The CLI maps this to exit code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError(msg.into()))
    }
}

/// An inclusive `[lo, hi]` sampling range.
pub type Range = [f64; 2];

fn check_range(name: &str, r: Range) -> Result<(), ConfigError> {
    ensure(
        r[0].is_finite() && r[1].is_finite() && r[0] <= r[1],
        format!("{name} must be a finite range with lo <= hi, got {r:?}"),
    )
}

/// The protocol under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Score-aided aggregation with two-sided learning rates.
    Osafl,
    /// Model averaging over the clients' latest uploads.
    MFedavg,
    /// Model averaging with a proximal local objective.
    MFedprox,
    /// Normalized averaging weighted by data share and step counts.
    MFednova,
    /// Anarchic two-sided gradient aggregation (uniform weights).
    MAfaCd,
    /// Model averaging with discrepancy-aware aggregation weights.
    MFeddisco,
    /// Centralized SGD on the pooled client buffers (upper bound).
    Genie,
}

impl Protocol {
    /// Stable identifier used in CSV rows and file names.
    pub fn id(self) -> &'static str {
        match self {
            Protocol::Osafl => "osafl",
            Protocol::MFedavg => "m-fedavg",
            Protocol::MFedprox => "m-fedprox",
            Protocol::MFednova => "m-fednova",
            Protocol::MAfaCd => "m-afa-cd",
            Protocol::MFeddisco => "m-feddisco",
            Protocol::Genie => "genie",
        }
    }

    /// Every protocol, in the order figures usually list them.
    pub fn all() -> [Protocol; 7] {
        [
            Protocol::Osafl,
            Protocol::MFedavg,
            Protocol::MFedprox,
            Protocol::MFednova,
            Protocol::MAfaCd,
            Protocol::MFeddisco,
            Protocol::Genie,
        ]
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Content catalog and request-model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSettings {
    /// Total files F (must divide evenly into genres).
    pub files: usize,
    /// Genres G.
    pub genres: usize,
    /// Per-file feature length H.
    pub file_feature_dim: usize,
    /// Per-genre feature length H̄.
    pub genre_feature_dim: usize,
    /// Spread of file features around their genre center.
    pub feature_spread: f64,
    /// Zipf–Mandelbrot skew γ for popularity-driven exploration.
    pub zipf_gamma: f64,
    /// Zipf–Mandelbrot offset q.
    pub zipf_q: f64,
    /// Similarity pool size K for exploitation.
    pub top_k: usize,
    /// History length L for the label-sequence dataset (variant 2).
    pub window: usize,
}

impl Default for CatalogSettings {
    fn default() -> Self {
        Self {
            files: 100,
            genres: 5,
            file_feature_dim: 64,
            genre_feature_dim: 8,
            feature_spread: 0.5,
            zipf_gamma: 1.0,
            zipf_q: 2.0,
            top_k: 5,
            window: 10,
        }
    }
}

/// Radio propagation settings (log-distance path loss + shadowing).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSettings {
    /// Reference distance d₀ in meters.
    pub ref_distance_m: f64,
    /// Path-loss exponent.
    pub path_exponent: f64,
    /// Shadowing standard deviation in dB.
    pub shadow_sigma_db: f64,
    /// Per-client bandwidth ω in Hz.
    pub bandwidth_hz: f64,
    /// Noise power spectral density (W/Hz).
    pub noise_psd: f64,
}

impl Default for LinkSettings {
    fn default() -> Self {
        let link = LinkConfig::default();
        Self {
            ref_distance_m: link.ref_distance_m,
            path_exponent: link.path_exponent,
            shadow_sigma_db: link.shadow_sigma_db,
            bandwidth_hz: link.bandwidth_hz,
            noise_psd: link.noise_psd,
        }
    }
}

impl LinkSettings {
    pub fn to_core(&self) -> LinkConfig {
        LinkConfig {
            ref_distance_m: self.ref_distance_m,
            // Anchor the model at the free-space loss for the configured
            // reference distance (2.4 GHz carrier).
            ref_loss_db: osafl_core::wireless::free_space_loss_db(self.ref_distance_m, 2.4e9),
            path_exponent: self.path_exponent,
            shadow_sigma_db: self.shadow_sigma_db,
            bandwidth_hz: self.bandwidth_hz,
            noise_psd: self.noise_psd,
        }
    }
}

/// Per-client sampling ranges and shared device constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSettings {
    /// Coverage disc radius; clients are placed uniformly inside it.
    pub radius_m: f64,
    /// Dataset capacity D_u range (inclusive integers).
    pub buffer_capacity: [usize; 2],
    /// Arrival slots per round are ⌈scale·p_u⌉ with p_u drawn below.
    pub arrival_slot_scale: f64,
    /// Per-slot arrival probability p_u range.
    pub arrival_prob: Range,
    /// Dirichlet concentration for genre preferences.
    pub dirichlet_alpha: f64,
    /// Exploit-probability ε range for the request model.
    pub exploit_prob: Range,
    /// CPU cycles per bit c_u range.
    pub cycles_per_bit: Range,
    /// Maximum CPU frequency range in GHz.
    pub max_freq_ghz: Range,
    /// Maximum transmit power range in dBm.
    pub max_power_dbm: Range,
    /// Per-round energy budget range in joules.
    pub energy_budget_j: Range,
    /// Round deadline t_th in seconds (shared by all clients).
    pub deadline_s: f64,
    /// Effective capacitance ν.
    pub capacitance: f64,
    /// Mini-batches per local step-unit n.
    pub batches: u32,
    /// Mini-batch size n̄.
    pub batch_size: u32,
    /// Floating-point precision in bits (16, 32, or 64).
    pub fpp_bits: u32,
}

impl Default for PopulationSettings {
    fn default() -> Self {
        Self {
            radius_m: 250.0,
            buffer_capacity: [320, 640],
            arrival_slot_scale: 32.0,
            arrival_prob: [0.3, 0.8],
            dirichlet_alpha: 0.3,
            exploit_prob: [0.4, 0.9],
            cycles_per_bit: [25.0, 40.0],
            max_freq_ghz: [1.0, 1.8],
            max_power_dbm: [20.0, 30.0],
            energy_budget_j: [1.2, 2.5],
            deadline_s: 200.0,
            capacitance: 2e-28,
            batches: 32,
            batch_size: 5,
            fpp_bits: 32,
        }
    }
}

/// Classifier shape: hidden layer widths between the (derived) input
/// dimension and the F-way output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub hidden: Vec<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self { hidden: vec![64] }
    }
}

/// Learning rates and protocol-specific hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSettings {
    /// Local step size η for the score-aided protocol (and the genie).
    pub eta: f64,
    /// Global step size η̃ for the score-aided protocol.
    pub eta_tilde: f64,
    pub fedavg_lr: f64,
    pub fedprox_lr: f64,
    pub fedprox_mu: f64,
    pub fednova_eta: f64,
    pub fednova_tau_tilde: f64,
    pub afacd_eta_local: f64,
    pub afacd_eta_global: f64,
    pub feddisco_lr: f64,
    pub feddisco_a: f64,
    pub feddisco_b: f64,
    /// Pooled SGD steps the genie takes per round.
    pub genie_steps: u32,
}

impl Default for LearningSettings {
    fn default() -> Self {
        Self {
            eta: 0.2,
            eta_tilde: 35.0,
            fedavg_lr: 0.15,
            fedprox_lr: 0.1,
            fedprox_mu: 0.9,
            fednova_eta: 0.01,
            fednova_tau_tilde: 0.1,
            afacd_eta_local: 0.1,
            afacd_eta_global: 0.2,
            feddisco_lr: 0.15,
            feddisco_a: 0.2,
            feddisco_b: 0.1,
            genie_steps: 50,
        }
    }
}

/// How client scores are computed for the score-aided protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreModeSetting {
    /// Δ = λ.
    Direct,
    /// Closed-form Δ from the convergence-bound hyper-parameters.
    Generalized,
    /// Δ ≡ 1 (reduces to unweighted two-sided SGD).
    Unit,
}

/// Convergence-bound knobs for the generalized score. The local/global
/// step sizes are taken from [`LearningSettings`], never duplicated here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneralizedSettings {
    pub beta: f64,
    pub sigma_sq: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub gamma_u: f64,
    pub phi_u: f64,
    pub delta_u: f64,
}

impl Default for GeneralizedSettings {
    fn default() -> Self {
        let g = GeneralizedParams::default();
        Self {
            beta: g.beta,
            sigma_sq: g.sigma_sq,
            rho1: g.rho1,
            rho2: g.rho2,
            gamma_u: g.gamma_u,
            phi_u: g.phi_u,
            delta_u: g.delta_u,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSettings {
    pub mode: ScoreModeSetting,
    /// Shift χ ≥ 1 in λ = (χ + cos)/(χ + 1).
    pub chi: f64,
    pub generalized: GeneralizedSettings,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self {
            mode: ScoreModeSetting::Direct,
            chi: 1.0,
            generalized: GeneralizedSettings::default(),
        }
    }
}

/// Resource-optimizer settings, mirroring [`OptimConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSettings {
    pub comp_weight: f64,
    pub kappa_max: u32,
    pub outer_iters: u32,
    pub sca_iters: u32,
    pub power_tol: f64,
    pub objective_tol: f64,
    pub init_freq_frac: f64,
    pub init_power_frac: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        let c = OptimConfig::default();
        Self {
            comp_weight: c.comp_weight,
            kappa_max: c.kappa_max,
            outer_iters: c.outer_iters,
            sca_iters: c.sca_iters,
            power_tol: c.power_tol,
            objective_tol: c.objective_tol,
            init_freq_frac: c.init_freq_frac,
            init_power_frac: c.init_power_frac,
        }
    }
}

impl OptimSettings {
    pub fn to_core(&self) -> OptimConfig {
        OptimConfig {
            comp_weight: self.comp_weight,
            kappa_max: self.kappa_max,
            outer_iters: self.outer_iters,
            sca_iters: self.sca_iters,
            power_tol: self.power_tol,
            objective_tol: self.objective_tol,
            init_freq_frac: self.init_freq_frac,
            init_power_frac: self.init_power_frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Future requests per client per evaluation, generated from a copy of
    /// the request state and never fed back into training.
    pub test_requests: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { test_requests: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    /// Directory for metric CSVs (created on demand).
    pub dir: PathBuf,
    /// Optional line-delimited JSON dump of every training request.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_log: Option<PathBuf>,
}

/// The whole experiment, as parsed from one TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Global rounds T.
    pub rounds: u64,
    /// Client count U.
    pub clients: usize,
    pub seed: u64,
    /// Workload variant: 1 = feature/label pairs, 2 = label-history windows.
    pub dataset: u8,
    /// Worker threads for per-client work inside a round; 0 = all cores.
    pub workers: usize,
    pub catalog: CatalogSettings,
    pub link: LinkSettings,
    pub population: PopulationSettings,
    pub model: ModelSettings,
    pub learning: LearningSettings,
    pub score: ScoreSettings,
    pub optim: OptimSettings,
    pub eval: EvalSettings,
    pub output: OutputSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Osafl,
            rounds: 100,
            clients: 100,
            seed: 1,
            dataset: 1,
            workers: 0,
            catalog: CatalogSettings::default(),
            link: LinkSettings::default(),
            population: PopulationSettings::default(),
            model: ModelSettings::default(),
            learning: LearningSettings::default(),
            score: ScoreSettings::default(),
            optim: OptimSettings::default(),
            eval: EvalSettings::default(),
            output: OutputSettings {
                dir: PathBuf::from("out"),
                request_log: None,
            },
        }
    }
}

impl ExperimentConfig {
    /// Parse a TOML document (no validation).
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    /// Read, parse, and validate a config file.
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("reading {}: {e}", path.display())))?;
        let cfg = Self::from_toml_str(&text)
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))?;
        cfg.validate()
            .map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))?;
        Ok(cfg)
    }

    /// Render back to TOML (for `presets show`).
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn dataset_kind(&self) -> DatasetKind {
        match self.dataset {
            1 => DatasetKind::Dataset1,
            _ => DatasetKind::Dataset2,
        }
    }

    /// Window length handed to the request generator (only variant 2
    /// consumes history).
    pub fn window_len(&self) -> usize {
        match self.dataset {
            1 => 0,
            _ => self.catalog.window,
        }
    }

    pub fn to_score_config(&self) -> ScoreConfig {
        let s = &self.score;
        ScoreConfig {
            mode: match s.mode {
                ScoreModeSetting::Direct => ScoreMode::DirectLambda,
                ScoreModeSetting::Generalized => ScoreMode::Generalized,
                ScoreModeSetting::Unit => ScoreMode::Unit,
            },
            chi: s.chi,
            generalized: GeneralizedParams {
                beta: s.generalized.beta,
                sigma_sq: s.generalized.sigma_sq,
                rho1: s.generalized.rho1,
                rho2: s.generalized.rho2,
                eta: self.learning.eta,
                eta_tilde: self.learning.eta_tilde,
                gamma_u: s.generalized.gamma_u,
                phi_u: s.generalized.phi_u,
                delta_u: s.generalized.delta_u,
            },
        }
    }

    /// Check every invariant the simulator depends on.
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure(self.rounds >= 1, "rounds must be at least 1")?;
        ensure(self.clients >= 1, "clients must be at least 1")?;
        ensure(
            self.dataset == 1 || self.dataset == 2,
            format!("dataset must be 1 or 2, got {}", self.dataset),
        )?;

        let c = &self.catalog;
        ensure(c.files >= 1 && c.genres >= 1, "catalog needs files and genres")?;
        ensure(
            c.files % c.genres == 0,
            format!("files ({}) must divide evenly into genres ({})", c.files, c.genres),
        )?;
        ensure(
            c.file_feature_dim >= 1 && c.genre_feature_dim >= 1,
            "feature dimensions must be at least 1",
        )?;
        ensure(c.feature_spread > 0.0, "feature_spread must be positive")?;
        ensure(c.zipf_gamma >= 0.0 && c.zipf_q >= 0.0, "zipf parameters must be non-negative")?;
        ensure(c.top_k >= 1, "top_k must be at least 1")?;
        if self.dataset == 2 {
            ensure(c.window >= 1, "dataset 2 needs a window of at least 1")?;
        }

        let p = &self.population;
        ensure(p.radius_m > 0.0, "radius_m must be positive")?;
        ensure(
            p.buffer_capacity[0] >= 1 && p.buffer_capacity[0] <= p.buffer_capacity[1],
            "buffer_capacity must be an increasing range from at least 1",
        )?;
        ensure(p.arrival_slot_scale > 0.0, "arrival_slot_scale must be positive")?;
        check_range("arrival_prob", p.arrival_prob)?;
        ensure(
            p.arrival_prob[0] >= 0.0 && p.arrival_prob[1] <= 1.0,
            "arrival_prob must lie within [0, 1]",
        )?;
        let max_slots = (p.arrival_slot_scale * p.arrival_prob[1]).ceil() as usize;
        ensure(
            max_slots < p.buffer_capacity[0],
            format!(
                "arrival slots (up to {max_slots}) must stay below the smallest buffer capacity ({})",
                p.buffer_capacity[0]
            ),
        )?;
        ensure(p.dirichlet_alpha > 0.0, "dirichlet_alpha must be positive")?;
        check_range("exploit_prob", p.exploit_prob)?;
        ensure(
            p.exploit_prob[0] >= 0.0 && p.exploit_prob[1] <= 1.0,
            "exploit_prob must lie within [0, 1]",
        )?;
        check_range("cycles_per_bit", p.cycles_per_bit)?;
        ensure(p.cycles_per_bit[0] > 0.0, "cycles_per_bit must be positive")?;
        check_range("max_freq_ghz", p.max_freq_ghz)?;
        ensure(p.max_freq_ghz[0] > 0.0, "max_freq_ghz must be positive")?;
        check_range("max_power_dbm", p.max_power_dbm)?;
        check_range("energy_budget_j", p.energy_budget_j)?;
        ensure(p.energy_budget_j[0] > 0.0, "energy_budget_j must be positive")?;
        ensure(p.deadline_s > 0.0, "deadline_s must be positive")?;
        ensure(p.capacitance > 0.0, "capacitance must be positive")?;
        ensure(p.batches >= 1 && p.batch_size >= 1, "batches and batch_size must be at least 1")?;
        ensure(
            matches!(p.fpp_bits, 16 | 32 | 64),
            format!("fpp_bits must be 16, 32, or 64, got {}", p.fpp_bits),
        )?;

        let l = &self.link;
        ensure(l.ref_distance_m > 0.0, "ref_distance_m must be positive")?;
        ensure(l.shadow_sigma_db >= 0.0, "shadow_sigma_db must be non-negative")?;
        ensure(l.bandwidth_hz > 0.0, "bandwidth_hz must be positive")?;
        ensure(l.noise_psd > 0.0, "noise_psd must be positive")?;

        for &h in &self.model.hidden {
            ensure(h >= 1, "hidden layer widths must be at least 1")?;
        }

        let lr = &self.learning;
        for (name, v) in [
            ("eta", lr.eta),
            ("eta_tilde", lr.eta_tilde),
            ("fedavg_lr", lr.fedavg_lr),
            ("fedprox_lr", lr.fedprox_lr),
            ("fednova_eta", lr.fednova_eta),
            ("fednova_tau_tilde", lr.fednova_tau_tilde),
            ("afacd_eta_local", lr.afacd_eta_local),
            ("afacd_eta_global", lr.afacd_eta_global),
            ("feddisco_lr", lr.feddisco_lr),
        ] {
            ensure(v > 0.0 && v.is_finite(), format!("{name} must be positive"))?;
        }
        ensure(lr.fedprox_mu >= 0.0, "fedprox_mu must be non-negative")?;
        ensure(
            lr.feddisco_a >= 0.0 && lr.feddisco_b >= 0.0,
            "feddisco_a and feddisco_b must be non-negative",
        )?;

        ensure(self.score.chi >= 1.0, "score chi must be at least 1")?;
        self.optim
            .to_core()
            .validate()
            .map_err(|e| ConfigError(format!("optim: {e}")))?;
        ensure(self.eval.test_requests >= 1, "test_requests must be at least 1")?;
        Ok(())
    }
}
