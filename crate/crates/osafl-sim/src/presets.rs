//! Named, ready-to-run experiment configurations.

use crate::config::ExperimentConfig;

/// The reference wide-area setup: 100 clients in a 250 m cell, 100-file
/// catalog, 200-second deadlines, and the published per-protocol learning
/// rates. Heavy — hours, not minutes.
pub const PAPER_SECTION_5: &str = "paper-section-5";

/// A laptop-sized run: 10 clients, 20 files over 4 genres, 40 rounds, a
/// [50, 64, 20] classifier, and deadlines tightened so roughly 30% of
/// client-rounds become stragglers.
pub const DESK: &str = "desk";

/// All preset names with one-line descriptions, in listing order.
pub fn catalog() -> [(&'static str, &'static str); 2] {
    [
        (
            PAPER_SECTION_5,
            "reference wide-area setup: 100 clients, 100 files, 200 s deadlines",
        ),
        (
            DESK,
            "laptop-sized directional run: 10 clients, 20 files, 40 rounds, ~30% stragglers",
        ),
    ]
}

/// Look up a preset by name.
pub fn by_name(name: &str) -> Option<ExperimentConfig> {
    match name {
        PAPER_SECTION_5 => Some(paper_section_5()),
        DESK => Some(desk()),
        _ => None,
    }
}

fn paper_section_5() -> ExperimentConfig {
    // The config defaults ARE the reference values.
    ExperimentConfig::default()
}

fn desk() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.rounds = 40;
    cfg.clients = 10;
    cfg.catalog.files = 20;
    cfg.catalog.genres = 4;
    cfg.catalog.file_feature_dim = 32;
    cfg.catalog.genre_feature_dim = 8;
    cfg.model.hidden = vec![64];
    // Device ranges scaled to the small model: fewer mini-batches per
    // step-unit so the step cap stays reachable, and a deadline tight
    // enough that the payload-vs-link-gain lottery makes ~30% of
    // client-rounds infeasible (the reference 200 s never binds here).
    cfg.population.batches = 8;
    cfg.population.deadline_s = 0.028;
    // Calmer global step for the small, noisy problem.
    cfg.learning.eta_tilde = 8.0;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for (name, _) in catalog() {
            let cfg = by_name(name).expect("preset exists");
            cfg.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn unknown_preset_is_none() {
        assert!(by_name("no-such-preset").is_none());
    }

    #[test]
    fn desk_model_matches_documented_shape() {
        let cfg = by_name(DESK).unwrap();
        // Input dim: H + G + files-per-genre + H̄ + 1 = 32+4+5+8+1 = 50.
        assert_eq!(cfg.catalog.file_feature_dim, 32);
        assert_eq!(cfg.model.hidden, vec![64]);
        assert_eq!(cfg.catalog.files, 20);
    }
}
