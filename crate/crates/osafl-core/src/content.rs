//! Synthetic video-caching workload: a content catalog with feature
//! vectors, a per-user exploit/explore request model, sliding-window
//! sample construction, and bounded FIFO client buffers with stochastic
//! arrivals.
//!
//! Files are grouped into genres of equal size. Each file carries a
//! feature vector drawn around its genre's center so that within-genre
//! cosine similarity is high; each genre additionally has its own short
//! feature vector and a popularity ranking of its files.

use alloc::vec::Vec;
use core::fmt;

use rand_core::RngCore;

use crate::math;
use crate::ml::Sample;
use crate::rng;

/// Bail out of the explore-genre rejection loop after this many draws so a
/// preference vector concentrated on the current genre cannot spin forever;
/// the last drawn genre is kept.
const EXPLORE_REJECTION_CAP: usize = 32;

/// Errors from workload generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContentError {
    BadConfig(&'static str),
    /// Rank outside `[1, n_files]` passed to the popularity pmf.
    RankOutOfRange { rank: usize, n_files: usize },
    /// Zero-norm vector passed to the cosine similarity.
    DegenerateVector,
    /// Label window shorter or longer than the configured history length.
    WindowLengthMismatch { expected: usize, got: usize },
    /// More new samples in one round than the buffer can ever hold.
    BatchTooLarge { batch: usize, capacity: usize },
}

impl fmt::Display for ContentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContentError::BadConfig(why) => write!(f, "bad content config: {why}"),
            ContentError::RankOutOfRange { rank, n_files } => {
                write!(f, "rank {rank} out of range 1..={n_files}")
            }
            ContentError::DegenerateVector => write!(f, "degenerate vector"),
            ContentError::WindowLengthMismatch { expected, got } => {
                write!(f, "label window length {got}, expected {expected}")
            }
            ContentError::BatchTooLarge { batch, capacity } => {
                write!(f, "batch of {batch} exceeds buffer capacity {capacity}")
            }
        }
    }
}

impl core::error::Error for ContentError {}

/// Catalog shape and feature-synthesis knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogConfig {
    /// Total files; must be divisible by `genres`.
    pub files: usize,
    pub genres: usize,
    /// Length of each file's feature vector.
    pub file_feature_dim: usize,
    /// Length of each genre's feature vector.
    pub genre_feature_dim: usize,
    /// Noise scale around the genre center; smaller means more
    /// within-genre similarity.
    pub feature_spread: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            files: 100,
            genres: 5,
            file_feature_dim: 64,
            genre_feature_dim: 8,
            feature_spread: 0.5,
        }
    }
}

/// Immutable content catalog shared by every client.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCatalog {
    files: usize,
    genres: usize,
    file_feature_dim: usize,
    genre_feature_dim: usize,
    /// `[genre][file_within_genre]` feature vectors, each unit norm.
    file_features: Vec<Vec<Vec<f64>>>,
    /// `[genre]` feature vectors, each unit norm.
    genre_features: Vec<Vec<f64>>,
    /// `[genre]` permutation: rank `r` (1-based) maps to within-genre file
    /// index `popularity_rank[genre][r - 1]`.
    popularity_rank: Vec<Vec<usize>>,
}

/// A unit-norm isotropic Gaussian direction.
fn unit_vector(rng: &mut impl RngCore, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng::standard_normal(rng)).collect();
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-9 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

impl ContentCatalog {
    /// Deterministically synthesize a catalog from a seed.
    pub fn generate(cfg: &CatalogConfig, seed: u64) -> Result<Self, ContentError> {
        if cfg.genres == 0 || cfg.files == 0 {
            return Err(ContentError::BadConfig("catalog must have files and genres"));
        }
        if cfg.files % cfg.genres != 0 {
            return Err(ContentError::BadConfig("files must divide evenly into genres"));
        }
        if cfg.file_feature_dim == 0 || cfg.genre_feature_dim == 0 {
            return Err(ContentError::BadConfig("feature dimensions must be positive"));
        }
        if !(cfg.feature_spread.is_finite() && cfg.feature_spread >= 0.0) {
            return Err(ContentError::BadConfig("feature spread must be finite and >= 0"));
        }
        let per_genre = cfg.files / cfg.genres;
        let mut stream = rng::stream(seed, rng::domain::CATALOG, 0, 0);

        let genre_features: Vec<Vec<f64>> = (0..cfg.genres)
            .map(|_| unit_vector(&mut stream, cfg.genre_feature_dim))
            .collect();

        let mut file_features = Vec::with_capacity(cfg.genres);
        for _ in 0..cfg.genres {
            let center = unit_vector(&mut stream, cfg.file_feature_dim);
            let mut genre_files = Vec::with_capacity(per_genre);
            for _ in 0..per_genre {
                let mut v: Vec<f64> = center
                    .iter()
                    .map(|&c| c + cfg.feature_spread * rng::standard_normal(&mut stream))
                    .collect();
                let norm = math::sqrt(v.iter().map(|x| x * x).sum());
                if norm <= 1e-9 {
                    // Vanishingly unlikely; fall back to a fresh direction.
                    v = unit_vector(&mut stream, cfg.file_feature_dim);
                } else {
                    for x in &mut v {
                        *x /= norm;
                    }
                }
                genre_files.push(v);
            }
            file_features.push(genre_files);
        }

        let popularity_rank = (0..cfg.genres)
            .map(|_| {
                let mut perm: Vec<usize> = (0..per_genre).collect();
                rng::shuffle(&mut stream, &mut perm);
                perm
            })
            .collect();

        Ok(Self {
            files: cfg.files,
            genres: cfg.genres,
            file_feature_dim: cfg.file_feature_dim,
            genre_feature_dim: cfg.genre_feature_dim,
            file_features,
            genre_features,
            popularity_rank,
        })
    }

    pub fn num_files(&self) -> usize {
        self.files
    }

    pub fn num_genres(&self) -> usize {
        self.genres
    }

    pub fn files_per_genre(&self) -> usize {
        self.files / self.genres
    }

    pub fn file_feature_dim(&self) -> usize {
        self.file_feature_dim
    }

    pub fn genre_feature_dim(&self) -> usize {
        self.genre_feature_dim
    }

    pub fn file_features(&self, genre: usize, file: usize) -> &[f64] {
        &self.file_features[genre][file]
    }

    pub fn genre_features(&self, genre: usize) -> &[f64] {
        &self.genre_features[genre]
    }

    /// Popularity permutation of a genre: entry `r - 1` is the within-genre
    /// file index holding rank `r`.
    pub fn popularity_rank(&self, genre: usize) -> &[usize] {
        &self.popularity_rank[genre]
    }

    /// Global label of a (genre, within-genre file) pair.
    pub fn label_of(&self, genre: usize, file: usize) -> usize {
        genre * self.files_per_genre() + file
    }

    /// Feature length of history-model samples built from this catalog:
    /// file features + genre preferences + within-genre similarities +
    /// genre features + the exploit probability.
    pub fn dataset1_dim(&self) -> usize {
        self.file_feature_dim + self.genres + self.files_per_genre() + self.genre_feature_dim + 1
    }
}

/// Per-user request behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    /// Probability of requesting each genre when exploring; sums to 1.
    pub genre_prefs: Vec<f64>,
    /// Probability of exploiting (staying in-genre by similarity).
    pub exploit_prob: f64,
    /// Popularity skew of the explore-time file draw.
    pub zipf_gamma: f64,
    /// Popularity flattening offset of the explore-time file draw.
    pub zipf_q: f64,
    /// Exploit-time candidate pool size.
    pub top_k: usize,
}

impl UserProfile {
    pub fn validate(&self) -> Result<(), ContentError> {
        let sum: f64 = self.genre_prefs.iter().sum();
        if self.genre_prefs.is_empty() || (sum - 1.0).abs() > 1e-12 {
            return Err(ContentError::BadConfig("genre preferences must sum to 1"));
        }
        if self.genre_prefs.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(ContentError::BadConfig("genre preference outside [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.exploit_prob) {
            return Err(ContentError::BadConfig("exploit probability outside [0, 1]"));
        }
        if self.top_k == 0 {
            return Err(ContentError::BadConfig("top-K pool must be non-empty"));
        }
        if self.zipf_gamma < 0.0 || self.zipf_q < 0.0 {
            return Err(ContentError::BadConfig("popularity parameters must be >= 0"));
        }
        Ok(())
    }
}

/// Where a user's request stream currently points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestState {
    pub genre: usize,
    /// File index within the genre.
    pub file: usize,
}

/// Truncated power-law popularity mass of one rank (1-based) among
/// `n_files`:
/// `(rank + q)^(-gamma) / sum_{r=1..n_files} (r + q)^(-gamma)`.
pub fn zipf_mandelbrot_pmf(
    rank: usize,
    gamma: f64,
    q: f64,
    n_files: usize,
) -> Result<f64, ContentError> {
    if rank < 1 || rank > n_files {
        return Err(ContentError::RankOutOfRange { rank, n_files });
    }
    let weight = |r: usize| math::powf(r as f64 + q, -gamma);
    let total: f64 = (1..=n_files).map(weight).sum();
    Ok(weight(rank) / total)
}

/// Full popularity pmf over ranks `1..=n_files`.
fn zipf_mandelbrot_dist(gamma: f64, q: f64, n_files: usize) -> Vec<f64> {
    let mut pmf: Vec<f64> = (1..=n_files)
        .map(|r| math::powf(r as f64 + q, -gamma))
        .collect();
    let total: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= total;
    }
    pmf
}

/// Cosine of the angle between two equal-length, non-zero vectors.
pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64, ContentError> {
    if x.len() != y.len() {
        return Err(ContentError::BadConfig("cosine of different-length vectors"));
    }
    let mut dot = 0.0;
    let mut nx = 0.0;
    let mut ny = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        dot += a * b;
        nx += a * a;
        ny += b * b;
    }
    if nx == 0.0 || ny == 0.0 {
        return Err(ContentError::DegenerateVector);
    }
    Ok(dot / (math::sqrt(nx) * math::sqrt(ny)))
}

/// Advance a user's request stream by one request.
///
/// With probability ε the user exploits: softmax preference over the cosine
/// similarities of every *other* file in the current genre to the current
/// file, truncated to the top-K most-preferred (ties broken by lower file
/// index), renormalized, and sampled. Otherwise the user explores: a new
/// genre is drawn from `genre_prefs`, rejecting the current genre (bounded
/// retries), and a file is drawn from that genre's popularity ranking via
/// the truncated power law.
pub fn next_request(
    profile: &UserProfile,
    catalog: &ContentCatalog,
    state: RequestState,
    rng: &mut impl RngCore,
) -> RequestState {
    if rng::uniform_f64(rng) < profile.exploit_prob {
        exploit(profile, catalog, state, rng)
    } else {
        explore(profile, catalog, state, rng)
    }
}

fn exploit(
    profile: &UserProfile,
    catalog: &ContentCatalog,
    state: RequestState,
    rng: &mut impl RngCore,
) -> RequestState {
    let per_genre = catalog.files_per_genre();
    if per_genre < 2 {
        // No alternative within the genre; the request repeats.
        return state;
    }
    let current = catalog.file_features(state.genre, state.file);
    let mut candidates: Vec<(usize, f64)> = Vec::with_capacity(per_genre - 1);
    for f in 0..per_genre {
        if f == state.file {
            continue;
        }
        let sim = cosine_similarity(current, catalog.file_features(state.genre, f))
            .expect("catalog features are unit norm");
        candidates.push((f, sim));
    }

    // Softmax over similarities (shifted by the max for stability).
    let max_sim = candidates
        .iter()
        .map(|&(_, s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&(f, s)| (f, math::exp(s - max_sim)))
        .collect();
    // Most preferred first; equal weights keep ascending file order.
    weights.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    weights.truncate(profile.top_k.min(weights.len()));

    let probs: Vec<f64> = weights.iter().map(|&(_, w)| w).collect();
    let total: f64 = probs.iter().sum();
    let normalized: Vec<f64> = probs.iter().map(|p| p / total).collect();
    let pick = rng::sample_categorical(rng, &normalized);
    RequestState {
        genre: state.genre,
        file: weights[pick].0,
    }
}

fn explore(
    profile: &UserProfile,
    catalog: &ContentCatalog,
    state: RequestState,
    rng: &mut impl RngCore,
) -> RequestState {
    let mut genre = state.genre;
    for _ in 0..EXPLORE_REJECTION_CAP {
        genre = rng::sample_categorical(rng, &profile.genre_prefs);
        if genre != state.genre {
            break;
        }
    }
    let per_genre = catalog.files_per_genre();
    let pmf = zipf_mandelbrot_dist(profile.zipf_gamma, profile.zipf_q, per_genre);
    let rank = rng::sample_categorical(rng, &pmf) + 1;
    RequestState {
        genre,
        file: catalog.popularity_rank(genre)[rank - 1],
    }
}

/// Everything observable about one request, flattened into the fixed block
/// order: file features, genre preferences, within-genre similarities of
/// every file (including the requested one) to the requested file, genre
/// features, exploit probability.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample1 {
    pub features: Vec<f64>,
    /// Global label `genre * files_per_genre + file`.
    pub label: usize,
}

impl RawSample1 {
    pub fn from_request(
        catalog: &ContentCatalog,
        profile: &UserProfile,
        state: RequestState,
    ) -> Self {
        let mut features = Vec::with_capacity(catalog.dataset1_dim());
        let current = catalog.file_features(state.genre, state.file);
        features.extend_from_slice(current);
        features.extend_from_slice(&profile.genre_prefs);
        for f in 0..catalog.files_per_genre() {
            let sim = cosine_similarity(current, catalog.file_features(state.genre, f))
                .expect("catalog features are unit norm");
            features.push(sim);
        }
        features.extend_from_slice(catalog.genre_features(state.genre));
        features.push(profile.exploit_prob);
        Self {
            features,
            label: catalog.label_of(state.genre, state.file),
        }
    }
}

/// Sliding-window pairing for the content-feature dataset: the previous
/// request's raw features predict the current request's label.
pub fn build_dataset1_sample(prev_raw: &RawSample1, curr_label: usize) -> Sample {
    Sample {
        features: prev_raw.features.clone(),
        label: curr_label,
    }
}

/// Sliding-window pairing for the request-history dataset: the last `l`
/// label ids (as reals) predict the next label.
pub fn build_dataset2_sample(
    window: &[usize],
    l: usize,
    next_label: usize,
) -> Result<Sample, ContentError> {
    if window.len() != l {
        return Err(ContentError::WindowLengthMismatch {
            expected: l,
            got: window.len(),
        });
    }
    Ok(Sample {
        features: window.iter().map(|&id| id as f64).collect(),
        label: next_label,
    })
}

/// Per-round sample arrivals: how many request slots fire this round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrivalConfig {
    /// Independent request slots per round.
    pub slots: u32,
    /// Per-slot success probability.
    pub prob: f64,
}

impl ArrivalConfig {
    pub fn validate(&self) -> Result<(), ContentError> {
        if !(0.0..=1.0).contains(&self.prob) {
            return Err(ContentError::BadConfig("arrival probability outside [0, 1]"));
        }
        Ok(())
    }
}

/// Number of arrivals this round: a sum of `slots` coin flips, so the count
/// is binomial with mean `slots * prob`.
pub fn arrivals_this_round(cfg: &ArrivalConfig, rng: &mut impl RngCore) -> u32 {
    (0..cfg.slots)
        .filter(|_| rng::uniform_f64(rng) < cfg.prob)
        .count() as u32
}

/// Bounded insertion-ordered buffer: when a batch arrives that would
/// overflow, exactly the overflow count of oldest items is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct FifoBuffer<T> {
    capacity: usize,
    items: Vec<T>,
}

impl<T> FifoBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self, ContentError> {
        if capacity == 0 {
            return Err(ContentError::BadConfig("buffer capacity must be positive"));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Contents, oldest first.
    pub fn items(&self) -> &[T] {
        &self.items
    }

    /// Apply one round's arrivals: evict just enough of the oldest items to
    /// fit, then append the batch in order.
    pub fn update(&mut self, new_samples: Vec<T>) -> Result<(), ContentError> {
        if new_samples.len() > self.capacity {
            return Err(ContentError::BatchTooLarge {
                batch: new_samples.len(),
                capacity: self.capacity,
            });
        }
        let overflow = (self.items.len() + new_samples.len()).saturating_sub(self.capacity);
        if overflow > 0 {
            self.items.drain(..overflow);
        }
        self.items.extend(new_samples);
        debug_assert!(self.items.len() <= self.capacity);
        Ok(())
    }
}

/// Which of the two sample constructions a client stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Content features of the previous request predict the next label.
    Dataset1,
    /// The last `L` labels predict the next label.
    Dataset2,
}

/// One emitted request, for logging and label bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RequestRecord {
    pub genre: usize,
    pub file: usize,
    pub label: usize,
}

/// Drives one user's request stream and turns it into training samples via
/// the sliding-window rules. The construction state (previous raw features
/// or the label window) persists across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestGenerator {
    kind: DatasetKind,
    profile: UserProfile,
    state: RequestState,
    prev_raw: Option<RawSample1>,
    window: Vec<usize>,
    window_len: usize,
}

impl RequestGenerator {
    /// Start a stream at `initial`; the initial position counts as the
    /// first request.
    pub fn new(
        kind: DatasetKind,
        profile: UserProfile,
        catalog: &ContentCatalog,
        initial: RequestState,
        window_len: usize,
    ) -> Result<Self, ContentError> {
        profile.validate()?;
        if profile.genre_prefs.len() != catalog.num_genres() {
            return Err(ContentError::BadConfig("genre preference length mismatch"));
        }
        if kind == DatasetKind::Dataset2 && window_len == 0 {
            return Err(ContentError::BadConfig("label window must be positive"));
        }
        let mut gen = Self {
            kind,
            profile,
            state: initial,
            prev_raw: None,
            window: Vec::new(),
            window_len,
        };
        gen.absorb(catalog, catalog.label_of(initial.genre, initial.file));
        Ok(gen)
    }

    pub fn state(&self) -> RequestState {
        self.state
    }

    /// Record the current request into the window-construction state.
    fn absorb(&mut self, catalog: &ContentCatalog, label: usize) {
        match self.kind {
            DatasetKind::Dataset1 => {
                self.prev_raw = Some(RawSample1::from_request(catalog, &self.profile, self.state));
            }
            DatasetKind::Dataset2 => {
                self.window.push(label);
                if self.window.len() > self.window_len {
                    self.window.remove(0);
                }
            }
        }
    }

    /// Emit the next request. Returns the training sample the sliding
    /// window completes, if any, plus the request itself.
    pub fn advance(
        &mut self,
        catalog: &ContentCatalog,
        rng: &mut impl RngCore,
    ) -> (Option<Sample>, RequestRecord) {
        self.state = next_request(&self.profile, catalog, self.state, rng);
        let label = catalog.label_of(self.state.genre, self.state.file);
        let sample = match self.kind {
            DatasetKind::Dataset1 => self
                .prev_raw
                .as_ref()
                .map(|prev| build_dataset1_sample(prev, label)),
            DatasetKind::Dataset2 => {
                if self.window.len() == self.window_len {
                    Some(
                        build_dataset2_sample(&self.window, self.window_len, label)
                            .expect("window length maintained internally"),
                    )
                } else {
                    None
                }
            }
        };
        self.absorb(catalog, label);
        (
            sample,
            RequestRecord {
                genre: self.state.genre,
                file: self.state.file,
                label,
            },
        )
    }
}
