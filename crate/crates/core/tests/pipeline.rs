use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shotcast::ingest::{self, Dataset, Market, MatchRecord};
use shotcast::pipeline::{self, RunConfig};
use shotcast::report;
use shotcast::sim::{self, SimConfig};
use shotcast::Error;

fn league(id: &str, seed: u64) -> Vec<MatchRecord> {
    sim::simulate_league(&SimConfig {
        league_id: id.into(),
        teams: 20,
        seasons: 3,
        rating_sd: 0.5,
        seed,
        ..Default::default()
    })
    .unwrap()
    .matches
}

fn dataset() -> Dataset {
    Dataset::from_matches(league("SIM", 4))
}

fn market_score<'a>(s: &'a pipeline::RunSummary, label: &str) -> &'a pipeline::MarketScore {
    s.market_scores
        .iter()
        .find(|m| m.regression == label)
        .unwrap()
}

#[test]
fn model_variant_beats_climatology_out_of_sample() {
    let report = pipeline::backtest_dataset(&dataset(), &RunConfig::default()).unwrap();
    let s = &report.summary;
    assert!(s.counts.evaluated_matches > 500);
    let model = market_score(s, "1x2-model");
    assert!(model.relative_ignorance < 0.0, "{model:?}");
    assert!(model.relative_rps < 0.0, "{model:?}");
    assert_eq!(market_score(s, "1x2-climatology").relative_ignorance, 0.0);
}

#[test]
fn calibration_repairs_overfitted_raw_forecasts() {
    // weak team differences: the unregularized fits overfit and the raw
    // forecasts lose to climatology
    let matches = sim::simulate_league(&SimConfig {
        teams: 20,
        seasons: 3,
        seed: 4,
        ..Default::default()
    })
    .unwrap()
    .matches;
    let report =
        pipeline::backtest_dataset(&Dataset::from_matches(matches), &RunConfig::default()).unwrap();
    let score = |name: &str| {
        report
            .summary
            .shot_scores
            .iter()
            .find(|s| s.forecast == name)
            .unwrap()
            .clone()
    };
    assert!(
        score("raw").relative_ignorance > 0.0,
        "premise: raw is overfitted"
    );
    for name in ["blend", "platt"] {
        assert!(
            score(name).mean_ignorance < score("raw").mean_ignorance,
            "{name}"
        );
        assert!(score(name).relative_ignorance < 0.0, "{name}");
    }
    let alpha = report.summary.final_blend.unwrap().alpha;
    assert!(alpha > 0.0 && alpha < 1.0, "alpha {alpha}");
}

#[test]
fn written_reports_are_byte_identical_across_runs() {
    let data = dataset();
    let config = RunConfig {
        seed: 5,
        ..Default::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    report::write_run_report(&pipeline::backtest_dataset(&data, &config).unwrap(), &a).unwrap();
    report::write_run_report(&pipeline::backtest_dataset(&data, &config).unwrap(), &b).unwrap();
    let mut files: Vec<_> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    files.sort();
    assert!(files.len() >= 8);
    for f in files {
        assert_eq!(
            std::fs::read(a.join(&f)).unwrap(),
            std::fs::read(b.join(&f)).unwrap(),
            "{f:?}"
        );
    }
}

#[test]
fn input_order_does_not_change_results() {
    let mut matches = league("SIM", 4);
    let original = pipeline::backtest_dataset(
        &Dataset::from_matches(matches.clone()),
        &RunConfig::default(),
    )
    .unwrap();
    matches.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let shuffled =
        pipeline::backtest_dataset(&Dataset::from_matches(matches), &RunConfig::default()).unwrap();
    assert_eq!(original.summary, shuffled.summary);
}

#[test]
fn season_index_is_order_independent() {
    let matches = league("SIM", 2);
    let mut shuffled = matches.clone();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
    let by_key = |ms: &[MatchRecord]| -> BTreeMap<String, (u32, u32)> {
        let index = ingest::build_season_index(ms);
        ms.iter()
            .zip(&index.prior_counts)
            .map(|(m, c)| (m.key(), *c))
            .collect()
    };
    assert_eq!(by_key(&matches), by_key(&shuffled));
}

#[test]
fn leagues_without_shots_give_an_empty_report() {
    let matches: Vec<MatchRecord> = league("SIM", 3)
        .into_iter()
        .map(|mut m| {
            m.home_shots = None;
            m.away_shots = None;
            m
        })
        .collect();
    let err = pipeline::backtest_dataset(&Dataset::from_matches(matches), &RunConfig::default())
        .unwrap_err();
    assert!(matches!(err, Error::EmptyReport(_)), "{err}");
}

#[test]
fn leagues_are_fitted_separately() {
    let mut matches = league("AAA", 4);
    matches.extend(league("BBB", 8));
    let data = Dataset::from_matches(matches);
    let both = pipeline::backtest_dataset(&data, &RunConfig::default()).unwrap();
    assert_eq!(both.summary.leagues.len(), 2);
    let single = pipeline::backtest_dataset(
        &data,
        &RunConfig {
            leagues: Some(vec!["AAA".into()]),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(single.summary.leagues.len(), 1);
    assert_eq!(
        single.summary.leagues[0].gap_params,
        both.summary.leagues[0].gap_params
    );
    let a_rows = |r: &pipeline::RunReport| {
        r.shot_forecasts
            .iter()
            .filter(|s| s.match_key.starts_with("AAA/"))
            .map(|s| (s.match_key.clone(), s.p_raw, s.p_c))
            .collect::<Vec<_>>()
    };
    assert_eq!(a_rows(&single), a_rows(&both));
}

#[test]
fn cache_reproduces_fits_and_audit_passes() {
    let data = dataset();
    let tmp = tempfile::tempdir().unwrap();
    let config = RunConfig {
        cache_dir: Some(tmp.path().to_path_buf()),
        audit: true,
        markets: vec![Market::Match1X2],
        ..Default::default()
    };
    let first = pipeline::backtest_dataset(&data, &config).unwrap();
    let second = pipeline::backtest_dataset(&data, &config).unwrap();
    assert_eq!(first.summary.leagues[0].cache_hits, 0);
    assert!(second.summary.leagues[0].cache_hits > 0);
    assert_eq!(first.forecasts, second.forecasts);
    let audit = second.summary.audit.as_ref().unwrap();
    assert!(audit.checked > 0);
    assert_eq!(audit.failures, 0, "{audit:?}");
}

#[test]
fn sweep_reports_every_half_life() {
    let config = RunConfig {
        half_life_grid: vec![30.0, 90.0, 365.0],
        markets: vec![Market::OverUnder25],
        ..Default::default()
    };
    let sweep = pipeline::sweep_dataset(&dataset(), &config).unwrap();
    assert_eq!(sweep.points.len(), 3);
    let curve = sweep.shot_curve("blend");
    assert_eq!(
        curve.iter().map(|p| p.0).collect::<Vec<_>>(),
        vec![30.0, 90.0, 365.0]
    );
    let best = sweep.best_half_life["shot-blend"];
    let lowest = curve.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    assert_eq!(best, lowest);
    assert!(sweep.best_half_life.contains_key("ou25-model"));
    let single = pipeline::backtest_dataset(
        &dataset(),
        &RunConfig {
            half_life: 90.0,
            ..config.clone()
        },
    )
    .unwrap();
    assert_eq!(sweep.points[1].shot_scores, single.summary.shot_scores);
}

#[test]
fn odds_predictor_adds_regressions() {
    let config = RunConfig {
        include_odds_predictor: true,
        ..Default::default()
    };
    let report = pipeline::backtest_dataset(&dataset(), &config).unwrap();
    assert_eq!(report.summary.market_scores.len(), 8);
    assert!(report
        .summary
        .market_scores
        .iter()
        .any(|m| m.regression == "1x2-model-odds"));
}
