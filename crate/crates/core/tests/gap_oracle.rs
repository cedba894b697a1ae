use shotcast::gap::{self, GapParams, GapState};
use shotcast::ingest::MatchRecord;
use shotcast::sim::{self, SimConfig};

fn first_season(seed: u64) -> Vec<MatchRecord> {
    let league = sim::simulate_league(&SimConfig {
        teams: 16,
        seasons: 1,
        seed,
        ..Default::default()
    })
    .unwrap();
    league.matches
}

/// Brute-force MAE over a (λ, φ₁, φ₂) grid.
fn grid_minimum(matches: &[MatchRecord]) -> (GapParams, f64) {
    let lambdas: Vec<f64> = (0..25).map(|k| 0.01 * 1.25_f64.powi(k)).collect();
    let phis: Vec<f64> = (1..20).map(|k| k as f64 * 0.05).collect();
    let mut best = (GapParams::START, f64::INFINITY);
    for &lambda in &lambdas {
        for &phi1 in &phis {
            for &phi2 in &phis {
                let p = GapParams { lambda, phi1, phi2 };
                let v = gap::mae_objective(&p, matches, gap::FALLBACK_INIT_SHOTS).unwrap();
                if v < best.1 {
                    best = (p, v);
                }
            }
        }
    }
    best
}

#[test]
fn fitted_parameters_are_no_worse_than_a_grid_search() {
    for seed in [1, 2] {
        let matches = first_season(seed);
        assert!(matches.len() >= gap::MIN_FIT_MATCHES);
        let fit = gap::fit_gap_params(&matches, gap::FALLBACK_INIT_SHOTS).unwrap();
        let fitted = gap::mae_objective(&fit.params, &matches, gap::FALLBACK_INIT_SHOTS).unwrap();
        let (grid_params, grid_best) = grid_minimum(&matches);
        assert!(
            fitted <= grid_best + 0.01,
            "seed {seed}: fitted {fitted} ({:?}) vs grid {grid_best} ({grid_params:?})",
            fit.params
        );
        assert!(fit.params.is_valid());
    }
}

#[test]
fn objective_matches_a_manual_replay() {
    let matches = first_season(3);
    let params = GapParams::new(0.15, 0.6, 0.4).unwrap();
    let mut state = GapState::new("SIM", params, gap::FALLBACK_INIT_SHOTS);
    let mut total = 0.0;
    let mut n = 0.0;
    let mut sorted = matches.clone();
    sorted.sort_by_key(|m| (m.date, m.row));
    for m in &sorted {
        let (ph, pa) = state.predict_shots(&m.home_team, &m.away_team);
        let (hs, aws) = m.shots().unwrap();
        total += (hs as f64 - ph).abs() + (aws as f64 - pa).abs();
        n += 1.0;
        state.update(m);
    }
    let objective = gap::mae_objective(&params, &matches, gap::FALLBACK_INIT_SHOTS).unwrap();
    assert!(
        (objective - total / n).abs() < 1e-12,
        "{objective} vs {}",
        total / n
    );
}
