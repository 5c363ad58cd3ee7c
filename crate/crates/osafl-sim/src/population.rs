//! Client population: radio placement, device capabilities, and request
//! profiles, all sampled from the configured ranges with one RNG stream
//! per client so populations are reproducible and order-independent.

use osafl_core::content::{ArrivalConfig, ContentCatalog, RequestState, UserProfile};
use osafl_core::ml::ModelSpec;
use osafl_core::rng::{self, domain};
use osafl_core::wireless::DeviceCaps;
use rand::Rng;
use rand_distr::Gamma;

use crate::config::ExperimentConfig;

/// Everything fixed about one client for the lifetime of an experiment.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub caps: DeviceCaps,
    pub profile: UserProfile,
    pub arrivals: ArrivalConfig,
    /// FIFO dataset capacity D_u.
    pub buffer_capacity: usize,
    /// Distance to the base station in meters.
    pub distance_m: f64,
    /// First content request, seeding the generator state.
    pub initial: RequestState,
}

/// dBm → watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Bits to store one training sample: the full feature vector at the
/// configured precision for variant 1, a single content id (⌈log₂F⌉ bits)
/// for variant 2.
pub fn sample_bits(cfg: &ExperimentConfig, catalog: &ContentCatalog) -> f64 {
    match cfg.dataset {
        1 => (catalog.dataset1_dim() * cfg.population.fpp_bits as usize) as f64,
        _ => (catalog.num_files() as f64).log2().ceil().max(1.0),
    }
}

/// Sample the whole population. Each client draws from its own stream, so
/// the result is identical no matter how many clients exist around it.
pub fn build_population(
    cfg: &ExperimentConfig,
    catalog: &ContentCatalog,
    model: &ModelSpec,
) -> Vec<ClientState> {
    (0..cfg.clients)
        .map(|u| build_client(cfg, catalog, model, u as u64))
        .collect()
}

fn build_client(
    cfg: &ExperimentConfig,
    catalog: &ContentCatalog,
    model: &ModelSpec,
    u: u64,
) -> ClientState {
    let p = &cfg.population;
    let mut s = rng::stream(cfg.seed, domain::POPULATION, u, 0);

    // Uniform placement over the disc: the radial CDF is (r/R)², so
    // r = R·√v. Only the distance enters the link model; floor it at 1 m
    // to keep the log-distance loss finite.
    let distance_m = (p.radius_m * rng::uniform_f64(&mut s).sqrt()).max(1.0);
    let cycles_per_bit = rng::uniform_range(&mut s, p.cycles_per_bit[0], p.cycles_per_bit[1]);
    let max_freq_hz = 1e9 * rng::uniform_range(&mut s, p.max_freq_ghz[0], p.max_freq_ghz[1]);
    let max_power_w =
        dbm_to_watts(rng::uniform_range(&mut s, p.max_power_dbm[0], p.max_power_dbm[1]));
    let energy_budget_j =
        rng::uniform_range(&mut s, p.energy_budget_j[0], p.energy_budget_j[1]);
    let span = p.buffer_capacity[1] - p.buffer_capacity[0] + 1;
    let buffer_capacity = p.buffer_capacity[0] + rng::uniform_index(&mut s, span);

    // One draw drives both arrival knobs: ⌈scale·p_u⌉ slots, each firing
    // with probability p_u.
    let p_u = rng::uniform_range(&mut s, p.arrival_prob[0], p.arrival_prob[1]);
    let arrivals = ArrivalConfig {
        slots: (p.arrival_slot_scale * p_u).ceil() as u32,
        prob: p_u,
    };

    // Genre affinity: Dirichlet(α) via normalized Gamma draws.
    let gamma = Gamma::new(p.dirichlet_alpha, 1.0).expect("dirichlet_alpha validated positive");
    let mut genre_prefs: Vec<f64> = (0..catalog.num_genres()).map(|_| s.sample(gamma)).collect();
    let total: f64 = genre_prefs.iter().sum();
    if total > 1e-300 {
        for w in genre_prefs.iter_mut() {
            *w /= total;
        }
    } else {
        // All draws underflowed (possible for tiny α); fall back to a
        // uniform preference rather than a NaN simplex.
        genre_prefs.fill(1.0 / catalog.num_genres() as f64);
    }
    let exploit_prob = rng::uniform_range(&mut s, p.exploit_prob[0], p.exploit_prob[1]);

    let initial = RequestState {
        genre: rng::uniform_index(&mut s, catalog.num_genres()),
        file: rng::uniform_index(&mut s, catalog.files_per_genre()),
    };

    let caps = DeviceCaps {
        cycles_per_bit,
        sample_bits: sample_bits(cfg, catalog),
        capacitance: p.capacitance,
        max_freq_hz,
        max_power_w,
        energy_budget_j,
        deadline_s: p.deadline_s,
        batches: p.batches,
        batch_size: p.batch_size,
        model_params: model.param_count(),
        fpp_bits: p.fpp_bits,
    };
    let profile = UserProfile {
        genre_prefs,
        exploit_prob,
        zipf_gamma: cfg.catalog.zipf_gamma,
        zipf_q: cfg.catalog.zipf_q,
        top_k: cfg.catalog.top_k,
    };
    profile.validate().expect("sampled profile is valid");

    ClientState {
        caps,
        profile,
        arrivals,
        buffer_capacity,
        distance_m,
        initial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use osafl_core::content::{CatalogConfig, ContentCatalog};

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.clients = 1;
        cfg.catalog.files = 20;
        cfg.catalog.genres = 4;
        cfg.catalog.file_feature_dim = 8;
        cfg.catalog.genre_feature_dim = 4;
        cfg
    }

    fn world(cfg: &ExperimentConfig) -> (ContentCatalog, ModelSpec) {
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
        .unwrap();
        let model =
            ModelSpec::new(vec![catalog.dataset1_dim(), catalog.num_files()]).unwrap();
        (catalog, model)
    }

    #[test]
    fn single_client_is_fully_populated() {
        let cfg = small_cfg();
        let (catalog, model) = world(&cfg);
        let pop = build_population(&cfg, &catalog, &model);
        assert_eq!(pop.len(), 1);
        let c = &pop[0];
        assert!(c.distance_m >= 1.0 && c.distance_m <= cfg.population.radius_m);
        assert!((320..=640).contains(&c.buffer_capacity));
        assert!(c.caps.validate().is_ok());
        assert!(c.arrivals.slots >= 1 && (c.arrivals.slots as usize) < c.buffer_capacity);
        let pref_sum: f64 = c.profile.genre_prefs.iter().sum();
        assert!((pref_sum - 1.0).abs() < 1e-12);
        assert_eq!(c.caps.model_params, model.param_count());
        // Variant 1 stores the whole feature vector.
        assert_eq!(c.caps.sample_bits, (catalog.dataset1_dim() * 32) as f64);
    }

    #[test]
    fn same_seed_gives_identical_population() {
        let mut cfg = small_cfg();
        cfg.clients = 8;
        let (catalog, model) = world(&cfg);
        let a = build_population(&cfg, &catalog, &model);
        let b = build_population(&cfg, &catalog, &model);
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.caps, y.caps);
            assert_eq!(x.profile, y.profile);
            assert_eq!(x.distance_m, y.distance_m);
            assert_eq!(x.initial, y.initial);
        }
    }

    #[test]
    fn sampled_cycle_counts_match_uniform_statistics() {
        let mut cfg = small_cfg();
        cfg.clients = 10_000;
        let (catalog, model) = world(&cfg);
        let pop = build_population(&cfg, &catalog, &model);
        let cycles: Vec<f64> = pop.iter().map(|c| c.caps.cycles_per_bit).collect();
        let min = cycles.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = cycles.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(min >= 25.0 && max <= 40.0);
        let mean = cycles.iter().sum::<f64>() / cycles.len() as f64;
        // U[25,40]: σ = 15/√12, so the sample mean over 10⁴ draws has
        // σ_mean = 15/(√12·100) ≈ 0.0433.
        let sigma_mean = 15.0 / (12f64.sqrt() * 100.0);
        assert!(
            (mean - 32.5).abs() <= 3.0 * sigma_mean,
            "mean {mean} outside 3σ of 32.5"
        );
    }

    #[test]
    fn power_conversion_matches_dbm_endpoints() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(20.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn variant_two_samples_store_one_content_id() {
        let mut cfg = small_cfg();
        cfg.dataset = 2;
        let (catalog, model) = world(&cfg);
        let pop = build_population(&cfg, &catalog, &model);
        // 20 files → ⌈log₂20⌉ = 5 bits.
        assert_eq!(pop[0].caps.sample_bits, 5.0);
    }
}
