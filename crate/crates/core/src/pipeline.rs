//! End-to-end walk-forward backtest.
//!
//! The run has two stages. Per league, the GAP shot predictions and the
//! per-date shot-model fits only depend on that league's earlier matches, so
//! they are built independently (in parallel, and shared across half-life
//! values where possible). The calibrators and outcome regressions pool all
//! leagues, so the second stage walks the global calendar one date at a time:
//! fit on everything strictly earlier, forecast the day's matches, then add
//! them to the training pools.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::betting::{self, BetDraft, KellyNumerator, Settlement, Strategy};
use crate::calibration::{
    self, BlendParams, BlendSample, Calibrator, PlattParams, ShotForecast, MIN_CALIBRATION_SAMPLES,
};
use crate::error::{Error, FitWarning, Result};
use crate::evaluation::{self, BinaryForecast, ReliabilityDiagram, ScoreAccumulator};
use crate::gap::{self, GapParams, GapState, FALLBACK_INIT_SHOTS};
use crate::ingest::{self, Dataset, Market, MatchRecord, Outcome, SeasonIndex};
use crate::optim::logistic;
use crate::outcome::{
    self, GoalExpectation, LogitParams, OrderedLogitParams, PredictorVariant, MIN_TRAINING_MATCHES,
};
use crate::shot_model::{self, clamp_prob, RollingShotStats, ShotModelParams, Side};

pub const DEFAULT_HALF_LIFE_GRID: [f64; 9] =
    [10.0, 30.0, 60.0, 90.0, 120.0, 180.0, 240.0, 300.0, 365.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    /// `None` runs every league found.
    pub leagues: Option<Vec<String>>,
    /// Half-life of a single backtest, in days.
    pub half_life: f64,
    pub half_life_grid: Vec<f64>,
    pub calibrator: Calibrator,
    pub include_odds_predictor: bool,
    pub burn_in_threshold: u32,
    pub markets: Vec<Market>,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub kelly_numerator: KellyNumerator,
    /// Leading shot-data seasons per league used to fit the GAP parameters
    /// and excluded from evaluation.
    pub gap_training_seasons: usize,
    pub reliability_bins: usize,
    pub reliability_replicates: usize,
    /// Recompute every 1000th forecast's inputs from scratch.
    pub audit: bool,
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            leagues: None,
            half_life: 60.0,
            half_life_grid: DEFAULT_HALF_LIFE_GRID.to_vec(),
            calibrator: Calibrator::Blend,
            include_odds_predictor: false,
            burn_in_threshold: 6,
            markets: vec![Market::Match1X2, Market::OverUnder25],
            seed: 0,
            output_dir: None,
            kelly_numerator: KellyNumerator::Standard,
            gap_training_seasons: 1,
            reliability_bins: evaluation::DEFAULT_BINS,
            reliability_replicates: evaluation::DEFAULT_REPLICATES,
            audit: false,
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad_h = |h: f64| !(h > 0.0 && h.is_finite());
        if bad_h(self.half_life) {
            return Err(Error::Config(format!(
                "half_life must be positive, got {}",
                self.half_life
            )));
        }
        if self.half_life_grid.is_empty() || self.half_life_grid.iter().any(|&h| bad_h(h)) {
            return Err(Error::Config(
                "half_life_grid must be non-empty and positive".into(),
            ));
        }
        if self.markets.is_empty() {
            return Err(Error::Config("at least one market is required".into()));
        }
        if self.reliability_bins < 2 {
            return Err(Error::Config("reliability_bins must be at least 2".into()));
        }
        if self.reliability_replicates == 0 {
            return Err(Error::Config(
                "reliability_replicates must be positive".into(),
            ));
        }
        Ok(())
    }

    fn variants(&self) -> Vec<RegressionKey> {
        let mut out = Vec::new();
        for &market in &self.markets {
            for variant in [PredictorVariant::Model, PredictorVariant::Climatology] {
                out.push(RegressionKey {
                    market,
                    variant,
                    odds_predictor: false,
                });
                if self.include_odds_predictor {
                    out.push(RegressionKey {
                        market,
                        variant,
                        odds_predictor: true,
                    });
                }
            }
        }
        out
    }
}

/// One of the outcome regressions: market × predictor variant × whether the
/// odds-implied probability is an extra predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegressionKey {
    pub market: Market,
    pub variant: PredictorVariant,
    pub odds_predictor: bool,
}

impl RegressionKey {
    pub fn label(&self) -> String {
        format!(
            "{}-{}{}",
            self.market.name(),
            self.variant.name(),
            if self.odds_predictor { "-odds" } else { "" }
        )
    }

    fn baseline(&self) -> RegressionKey {
        RegressionKey {
            variant: PredictorVariant::Climatology,
            ..*self
        }
    }
}

// ---------------------------------------------------------------------------
// Stage one: per-league tracks

/// GAP predictions along one league's shot-data matches.
#[derive(Debug, Clone)]
pub struct GapTrack {
    pub league_id: String,
    pub params: GapParams,
    pub warning: Option<FitWarning>,
    pub training_seasons: BTreeSet<String>,
    /// Positions into the dataset, ordered by (date, row).
    pub positions: Vec<usize>,
    /// Pre-match (home, away) shot predictions aligned with `positions`.
    pub predicted_shots: Vec<(f64, f64)>,
    pub final_state: GapState,
}

pub fn league_ids(data: &Dataset, leagues: Option<&[String]>) -> Vec<String> {
    let present: BTreeSet<&str> = data.matches.iter().map(|m| m.league_id.as_str()).collect();
    present
        .into_iter()
        .filter(|l| leagues.is_none_or(|ls| ls.iter().any(|x| x == l)))
        .map(str::to_string)
        .collect()
}

fn league_positions(data: &Dataset, league: &str) -> Vec<usize> {
    let mut positions: Vec<usize> = data
        .matches
        .iter()
        .enumerate()
        .filter(|(_, m)| m.league_id == league && m.shots().is_some())
        .map(|(i, _)| i)
        .collect();
    positions.sort_by(|&a, &b| {
        let (ma, mb) = (&data.matches[a], &data.matches[b]);
        (ma.date, &ma.season_id, ma.row).cmp(&(mb.date, &mb.season_id, mb.row))
    });
    positions
}

/// Shot-data seasons of the league ordered by their first match date.
fn seasons_in_order(data: &Dataset, positions: &[usize]) -> Vec<String> {
    let mut first: BTreeMap<&str, NaiveDate> = BTreeMap::new();
    for &i in positions {
        let m = &data.matches[i];
        first
            .entry(m.season_id.as_str())
            .and_modify(|d| *d = (*d).min(m.date))
            .or_insert(m.date);
    }
    let mut seasons: Vec<(NaiveDate, &str)> = first.into_iter().map(|(s, d)| (d, s)).collect();
    seasons.sort();
    seasons.into_iter().map(|(_, s)| s.to_string()).collect()
}

/// Fit the GAP parameters on the league's training seasons, then replay the
/// whole timeline. Predictions for a date are made before any of that
/// date's updates.
pub fn build_gap_track(data: &Dataset, league: &str, training_seasons: usize) -> Result<GapTrack> {
    let positions = league_positions(data, league);
    let seasons = seasons_in_order(data, &positions);
    let training: BTreeSet<String> = seasons.iter().take(training_seasons).cloned().collect();
    let training_matches: Vec<MatchRecord> = positions
        .iter()
        .map(|&i| &data.matches[i])
        .filter(|m| training.contains(&m.season_id))
        .cloned()
        .collect();
    let fit = if training_matches.is_empty() {
        crate::error::Fitted::warn(
            GapParams::FALLBACK,
            FitWarning::Fallback("no GAP training matches".into()),
        )
    } else {
        gap::fit_gap_params(&training_matches, FALLBACK_INIT_SHOTS)?
    };
    if let Some(w) = &fit.warning {
        log::warn!("GAP fit for {league}: {w:?}");
    }

    let mut state = GapState::new(league, fit.params, FALLBACK_INIT_SHOTS);
    let mut predicted = Vec::with_capacity(positions.len());
    for day in group_by_date(&positions, data) {
        for &i in day {
            let m = &data.matches[i];
            predicted.push(state.predict_shots(&m.home_team, &m.away_team));
        }
        for &i in day {
            state.update(&data.matches[i]);
        }
    }
    Ok(GapTrack {
        league_id: league.to_string(),
        params: fit.params,
        warning: fit.warning,
        training_seasons: training,
        positions,
        predicted_shots: predicted,
        final_state: state,
    })
}

fn group_by_date<'a>(positions: &'a [usize], data: &Dataset) -> Vec<&'a [usize]> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=positions.len() {
        if k == positions.len()
            || data.matches[positions[k]].date != data.matches[positions[start]].date
        {
            if k > start {
                out.push(&positions[start..k]);
            }
            start = k;
        }
    }
    out
}

/// Raw shot-success probabilities and climatology for one match, from fits
/// on strictly earlier matches. `None` before the league has any history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotInputs {
    pub p_home: f64,
    pub p_away: f64,
    pub p_c: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub checked: usize,
    pub max_abs_difference: f64,
    pub failures: usize,
}

impl AuditSummary {
    fn merge(&mut self, other: &AuditSummary) {
        self.checked += other.checked;
        self.max_abs_difference = self.max_abs_difference.max(other.max_abs_difference);
        self.failures += other.failures;
    }
}

/// Largest tolerated gap between an incrementally built forecast input and
/// its from-scratch recomputation.
pub const AUDIT_TOLERANCE: f64 = 1e-5;
pub const AUDIT_EVERY: usize = 1000;

#[derive(Debug, Clone)]
pub struct ShotTrack {
    pub league_id: String,
    pub half_life: f64,
    pub inputs: Vec<Option<ShotInputs>>,
    pub fits: usize,
    pub cache_hits: usize,
    pub warnings: usize,
    pub final_params: Option<ShotModelParams>,
    pub audit: AuditSummary,
}

/// Probabilities with unrated teams placed at the mean (zero) rating.
fn probabilities_with_defaults(params: &ShotModelParams, home: &str, away: &str) -> (f64, f64) {
    let rating = |team: &str| {
        params
            .team_index(team)
            .map_or((0.0, 0.0), |i| (params.attack[i], params.defence[i]))
    };
    let (ah, dh) = rating(home);
    let (aa, da) = rating(away);
    (
        logistic(params.c + params.h + 0.5 * (ah + da)),
        logistic(params.c - params.h + 0.5 * (aa + dh)),
    )
}

/// Walk the league's dates fitting the shot model on all earlier matches.
pub fn build_shot_track(
    data: &Dataset,
    gap: &GapTrack,
    half_life: f64,
    cache: Option<&FitCache>,
    audit: bool,
) -> Result<ShotTrack> {
    let league = gap.league_id.as_str();
    let hash = league_data_hash(data, &gap.positions);
    let mut cached = cache
        .map(|c| c.load(league, half_life, &hash))
        .unwrap_or_default();
    let mut fresh: BTreeMap<NaiveDate, ShotModelParams> = BTreeMap::new();

    let mut rolling = RollingShotStats::new(half_life);
    let mut inputs = Vec::with_capacity(gap.positions.len());
    let mut previous: Option<ShotModelParams> = None;
    let (mut fits, mut hits, mut warnings) = (0, 0, 0);
    let mut audit_summary = AuditSummary::default();
    let mut seen = 0usize;

    for day in group_by_date(&gap.positions, data) {
        let date = data.matches[day[0]].date;
        rolling.advance_to(date)?;
        let params = if rolling.stats().total_shots() > 0.0 {
            let p = match cached.remove(&date) {
                Some(p) => {
                    hits += 1;
                    p
                }
                None => {
                    let fit = shot_model::fit_from_stats(
                        rolling.stats(),
                        league,
                        date,
                        half_life,
                        previous.as_ref(),
                    )?;
                    if fit.warning.is_some() {
                        warnings += 1;
                    }
                    fits += 1;
                    fit.params
                }
            };
            fresh.insert(date, p.clone());
            Some(p)
        } else {
            None
        };
        let p_c = rolling.climatology().ok();

        for &i in day {
            let m = &data.matches[i];
            let input = match (&params, p_c) {
                (Some(p), Some(p_c)) => {
                    let (p_home, p_away) =
                        probabilities_with_defaults(p, &m.home_team, &m.away_team);
                    Some(ShotInputs {
                        p_home,
                        p_away,
                        p_c,
                    })
                }
                _ => None,
            };
            if audit && seen.is_multiple_of(AUDIT_EVERY) {
                audit_summary.merge(&audit_match(data, gap, league, half_life, i, input)?);
            }
            seen += 1;
            inputs.push(input);
        }
        for &i in day {
            rolling.add_match(&data.matches[i])?;
        }
        if params.is_some() {
            previous = params;
        }
    }
    if let Some(c) = cache {
        c.store(league, half_life, &hash, &fresh);
    }
    Ok(ShotTrack {
        league_id: league.to_string(),
        half_life,
        inputs,
        fits,
        cache_hits: hits,
        warnings,
        final_params: previous,
        audit: audit_summary,
    })
}

/// Recompute one match's inputs from the raw records with no incremental
/// state: a zero-start shot-model fit, the climatology and a GAP replay.
fn audit_match(
    data: &Dataset,
    gap: &GapTrack,
    league: &str,
    half_life: f64,
    position: usize,
    input: Option<ShotInputs>,
) -> Result<AuditSummary> {
    let m = &data.matches[position];
    let earlier: Vec<MatchRecord> = gap
        .positions
        .iter()
        .map(|&i| &data.matches[i])
        .filter(|x| x.date < m.date)
        .cloned()
        .collect();
    let mut summary = AuditSummary {
        checked: 1,
        ..Default::default()
    };
    let mut check = |a: f64, b: f64| {
        let d = (a - b).abs();
        summary.max_abs_difference = summary.max_abs_difference.max(d);
        if d > AUDIT_TOLERANCE * a.abs().max(b.abs()).max(1.0) {
            summary.failures += 1;
        }
    };

    let mut state = GapState::new(league, gap.params, FALLBACK_INIT_SHOTS);
    for x in &earlier {
        state.update(x);
    }
    let k = gap
        .positions
        .iter()
        .position(|&i| i == position)
        .expect("match in track");
    let (sh, sa) = state.predict_shots(&m.home_team, &m.away_team);
    check(sh, gap.predicted_shots[k].0);
    check(sa, gap.predicted_shots[k].1);

    let scratch = match shot_model::fit_shot_model(&earlier, league, m.date, half_life) {
        Ok(fit) => Some(fit.params),
        Err(Error::InsufficientData(_)) => None,
        Err(e) => return Err(e),
    };
    let p_c = shot_model::climatology(&earlier, m.date).ok();
    match (scratch, p_c, input) {
        (Some(p), Some(p_c), Some(inp)) => {
            let (ph, pa) = probabilities_with_defaults(&p, &m.home_team, &m.away_team);
            check(ph, inp.p_home);
            check(pa, inp.p_away);
            check(p_c, inp.p_c);
        }
        (None, _, None) | (_, None, None) => {}
        _ => summary.failures += 1,
    }
    if summary.failures > 0 {
        log::warn!("audit mismatch for {}", m.key());
    }
    Ok(summary)
}

fn league_data_hash(data: &Dataset, positions: &[usize]) -> String {
    let mut hasher = Sha256::new();
    for &i in positions {
        let m = &data.matches[i];
        hasher.update(
            format!(
                "{}|{}|{}|{}|{}|{}|{}|{:?}|{:?}\n",
                m.season_id,
                m.row,
                m.date,
                m.home_team,
                m.away_team,
                m.home_goals,
                m.away_goals,
                m.home_shots,
                m.away_shots
            )
            .as_bytes(),
        );
    }
    hex::encode(hasher.finalize())[..16].to_string()
}

/// On-disk store of per-date shot-model fits keyed by league, half-life and
/// a hash of the league's match data.
#[derive(Debug, Clone)]
pub struct FitCache {
    pub dir: PathBuf,
}

impl FitCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FitCache { dir: dir.into() }
    }

    pub fn path(&self, league: &str, half_life: f64, hash: &str) -> PathBuf {
        self.dir.join(format!("{league}-h{half_life}-{hash}.json"))
    }

    /// Cached fits, or nothing when the entry is missing or unreadable.
    pub fn load(
        &self,
        league: &str,
        half_life: f64,
        hash: &str,
    ) -> BTreeMap<NaiveDate, ShotModelParams> {
        let path = self.path(league, half_life, hash);
        let Ok(text) = std::fs::read_to_string(&path) else {
            return BTreeMap::new();
        };
        match serde_json::from_str(&text) {
            Ok(fits) => fits,
            Err(e) => {
                log::warn!("corrupt fit cache {}: {e}; refitting", path.display());
                BTreeMap::new()
            }
        }
    }

    pub fn store(
        &self,
        league: &str,
        half_life: f64,
        hash: &str,
        fits: &BTreeMap<NaiveDate, ShotModelParams>,
    ) {
        let path = self.path(league, half_life, hash);
        let result = std::fs::create_dir_all(&self.dir)
            .and_then(|_| std::fs::write(&path, serde_json::to_vec(fits).unwrap_or_default()));
        if let Err(e) = result {
            log::warn!("cannot write fit cache {}: {e}", path.display());
        }
    }
}

// ---------------------------------------------------------------------------
// Stage two: pooled calendar walk

#[derive(Debug, Clone, PartialEq)]
enum MarketModel {
    BaseRates(Vec<f64>),
    Ordered(OrderedLogitParams),
    Logit(LogitParams),
}

struct RegressionSlot {
    key: RegressionKey,
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
    fitted_rows: usize,
    model: MarketModel,
    warnings: usize,
}

impl RegressionSlot {
    fn new(key: RegressionKey) -> Self {
        let k = categories(key.market);
        RegressionSlot {
            key,
            xs: Vec::new(),
            ys: Vec::new(),
            fitted_rows: usize::MAX,
            model: MarketModel::BaseRates(vec![1.0 / k as f64; k]),
            warnings: 0,
        }
    }

    fn refit(&mut self) {
        if self.fitted_rows == self.ys.len() {
            return;
        }
        self.fitted_rows = self.ys.len();
        let base = base_rates(&self.ys, categories(self.key.market));
        if self.ys.len() < MIN_TRAINING_MATCHES {
            self.model = MarketModel::BaseRates(base);
            return;
        }
        let fitted = match (self.key.market, &self.model) {
            (Market::Match1X2, model) => {
                let warm = match model {
                    MarketModel::Ordered(p) => Some(p),
                    _ => None,
                };
                let ys: Vec<Outcome> = self.ys.iter().map(|&y| outcome_from_index(y)).collect();
                outcome::fit_ordered_logit(&self.xs, &ys, warm)
                    .map(|f| (MarketModel::Ordered(f.params), f.warning))
            }
            (Market::OverUnder25, model) => {
                let warm = match model {
                    MarketModel::Logit(p) => Some(p),
                    _ => None,
                };
                let ys: Vec<bool> = self.ys.iter().map(|&y| y == 0).collect();
                outcome::fit_logit(&self.xs, &ys, warm)
                    .map(|f| (MarketModel::Logit(f.params), f.warning))
            }
        };
        match fitted {
            Ok((model, warning)) => {
                if warning.is_some() {
                    self.warnings += 1;
                }
                self.model = model;
            }
            Err(e) => {
                log::debug!(
                    "{} regression falls back to base rates: {e}",
                    self.key.label()
                );
                self.warnings += 1;
                self.model = MarketModel::BaseRates(base);
            }
        }
    }

    fn predict(&self, x: &[f64]) -> (Vec<f64>, bool) {
        match &self.model {
            MarketModel::BaseRates(p) => (p.clone(), true),
            MarketModel::Ordered(p) => (outcome::predict_ordered_logit(p, x).to_vec(), false),
            MarketModel::Logit(p) => {
                let over = outcome::predict_logit(p, x);
                (vec![over, 1.0 - over], false)
            }
        }
    }
}

fn categories(market: Market) -> usize {
    match market {
        Market::Match1X2 => 3,
        Market::OverUnder25 => 2,
    }
}

fn outcome_from_index(i: usize) -> Outcome {
    match i {
        0 => Outcome::HomeWin,
        1 => Outcome::Draw,
        _ => Outcome::AwayWin,
    }
}

/// Outcome frequencies with one pseudo-count per category.
fn base_rates(ys: &[usize], k: usize) -> Vec<f64> {
    let mut counts = vec![1.0; k];
    for &y in ys {
        counts[y] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}

/// Realized outcome index in the market's probability order.
fn market_outcome(m: &MatchRecord, market: Market) -> usize {
    match market {
        Market::Match1X2 => m.outcome.index(),
        Market::OverUnder25 => usize::from(!m.over_25()),
    }
}

/// Odds-implied probability used as the optional extra predictor.
fn odds_feature(odds: &[f64]) -> f64 {
    1.0 / odds[0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRow {
    pub match_key: String,
    pub league_id: String,
    pub date: NaiveDate,
    pub market: Market,
    pub variant: PredictorVariant,
    pub odds_predictor: bool,
    pub predictor: f64,
    pub probs: Vec<f64>,
    pub odds: Vec<f64>,
    pub outcome: usize,
    pub burn_in: bool,
    pub evaluated: bool,
    /// Base rates were emitted because the regression was not yet active.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotForecastRow {
    pub match_key: String,
    pub date: NaiveDate,
    pub side: Side,
    pub predicted_shots: f64,
    pub shots: u32,
    pub goals: u32,
    pub p_raw: f64,
    pub p_blend: f64,
    pub p_platt: f64,
    pub p_c: f64,
    pub evaluated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotScore {
    pub forecast: String,
    pub shots: f64,
    pub mean_ignorance: f64,
    pub mean_brier: f64,
    pub relative_ignorance: f64,
    pub relative_brier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketScore {
    pub regression: String,
    pub market: Market,
    pub variant: PredictorVariant,
    pub odds_predictor: bool,
    pub matches: usize,
    pub mean_ignorance: f64,
    pub mean_brier: f64,
    pub mean_rps: f64,
    /// Paired differences against the climatology variant.
    pub relative_ignorance: f64,
    pub relative_brier: f64,
    pub relative_rps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BettingSummary {
    pub regression: String,
    pub market: Market,
    pub strategy: Strategy,
    pub bets_placed: usize,
    pub matches_with_several_bets: usize,
    pub mean_stake: f64,
    pub total_profit: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounts {
    pub records: usize,
    pub shot_matches: usize,
    pub non_burn_in_shot_matches: usize,
    pub forecast_matches: usize,
    pub no_model_yet: usize,
    pub burn_in: usize,
    pub training_period: usize,
    pub evaluated_matches: usize,
    pub missing_odds: BTreeMap<String, usize>,
    pub clamped_ignorance: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeagueSummary {
    pub league_id: String,
    pub gap_params: GapParams,
    pub gap_warning: Option<FitWarning>,
    pub training_seasons: Vec<String>,
    pub shot_fits: usize,
    pub cache_hits: usize,
    pub fit_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub half_life: f64,
    pub calibrator: Calibrator,
    pub include_odds_predictor: bool,
    pub burn_in_threshold: u32,
    pub kelly_numerator: KellyNumerator,
    pub seed: u64,
    pub reliability_bins: usize,
    pub reliability_replicates: usize,
    pub counts: RunCounts,
    pub leagues: Vec<LeagueSummary>,
    pub shot_scores: Vec<ShotScore>,
    pub market_scores: Vec<MarketScore>,
    pub betting: Vec<BettingSummary>,
    pub final_blend: Option<BlendParams>,
    pub final_platt: Option<PlattParams>,
    pub regression_warnings: BTreeMap<String, usize>,
    pub audit: Option<AuditSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub regression: String,
    pub strategy: Strategy,
    pub record: betting::BetRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub summary: RunSummary,
    pub forecasts: Vec<ForecastRow>,
    pub shot_forecasts: Vec<ShotForecastRow>,
    /// Keyed by `raw`, `blend` and `platt`.
    pub reliability: BTreeMap<String, ReliabilityDiagram>,
    pub ledger: Vec<LedgerRow>,
}

struct Pending {
    date: NaiveDate,
    gap: usize,
    k: usize,
}

/// Mean per-shot ignorance and Brier score of `q` for `goals` of `shots`.
fn shot_scores(q: f64, shots: u32, goals: u32, clamped: &mut usize) -> (f64, f64) {
    let (ig_hit, c1) = evaluation::ignorance_of(q);
    let (ig_miss, c2) = evaluation::ignorance_of(1.0 - q);
    if (c1 && goals > 0) || (c2 && goals < shots) {
        *clamped += 1;
    }
    let br_hit = 2.0 * (1.0 - q) * (1.0 - q);
    let br_miss = 2.0 * q * q;
    let (g, s) = (goals as f64, shots as f64);
    (
        (g * ig_hit + (s - g) * ig_miss) / s,
        (g * br_hit + (s - g) * br_miss) / s,
    )
}

/// Run the walk-forward backtest on already loaded data.
pub fn backtest_dataset(data: &Dataset, config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let leagues = league_ids(data, config.leagues.as_deref());
    let gaps = build_gap_tracks(data, &leagues, config.gap_training_seasons)?;
    backtest_with_tracks(data, config, &gaps, config.half_life)
}

pub fn build_gap_tracks(
    data: &Dataset,
    leagues: &[String],
    training_seasons: usize,
) -> Result<Vec<GapTrack>> {
    leagues
        .par_iter()
        .map(|l| build_gap_track(data, l, training_seasons))
        .collect()
}

fn backtest_with_tracks(
    data: &Dataset,
    config: &RunConfig,
    gaps: &[GapTrack],
    half_life: f64,
) -> Result<RunReport> {
    let cache = config.cache_dir.as_ref().map(FitCache::new);
    let shots: Vec<ShotTrack> = gaps
        .par_iter()
        .map(|g| build_shot_track(data, g, half_life, cache.as_ref(), config.audit))
        .collect::<Result<_>>()?;
    let index = ingest::build_season_index(&data.matches);
    walk_calendar(data, config, &index, gaps, &shots, half_life)
}

fn walk_calendar(
    data: &Dataset,
    config: &RunConfig,
    index: &SeasonIndex,
    gaps: &[GapTrack],
    shots: &[ShotTrack],
    half_life: f64,
) -> Result<RunReport> {
    let mut order: Vec<Pending> = Vec::new();
    for (g, track) in gaps.iter().enumerate() {
        for (k, &pos) in track.positions.iter().enumerate() {
            order.push(Pending {
                date: data.matches[pos].date,
                gap: g,
                k,
            });
        }
    }
    order.sort_by_key(|o| (o.date, o.gap, o.k));

    let mut counts = RunCounts {
        records: data.matches.len(),
        shot_matches: data.shot_matches(),
        non_burn_in_shot_matches: data
            .matches
            .iter()
            .enumerate()
            .filter(|(i, m)| {
                m.shots().is_some()
                    && gaps.iter().any(|g| g.league_id == m.league_id)
                    && !ingest::is_burn_in(index, *i, config.burn_in_threshold)
            })
            .count(),
        ..Default::default()
    };

    let mut blend_pool: Vec<BlendSample> = Vec::new();
    let mut platt_pool: Vec<ShotForecast> = Vec::new();
    let mut blend: Option<BlendParams> = None;
    let mut platt: Option<PlattParams> = None;
    let mut calibrated_at = 0usize;

    let keys = config.variants();
    let mut slots: Vec<RegressionSlot> = keys.iter().map(|&k| RegressionSlot::new(k)).collect();

    let mut forecasts = Vec::new();
    let mut shot_rows = Vec::new();
    // per forecast type: (ignorance, brier) accumulators
    let mut shot_acc: BTreeMap<&'static str, (ScoreAccumulator, ScoreAccumulator)> =
        BTreeMap::new();
    let mut reliability_inputs: BTreeMap<&'static str, Vec<BinaryForecast>> = BTreeMap::new();
    // per regression: paired score lists (ignorance, brier, rps) keyed by match order
    let mut market_lists: BTreeMap<RegressionKey, Vec<(usize, [f64; 3])>> = BTreeMap::new();
    let mut drafts: BTreeMap<RegressionKey, Vec<BetDraft>> = BTreeMap::new();
    let mut draft_outcomes: BTreeMap<RegressionKey, Vec<Option<usize>>> = BTreeMap::new();
    let mut evaluated_index = 0usize;
    let mut last_training_date: Option<NaiveDate> = None;

    let mut start = 0;
    while start < order.len() {
        let date = order[start].date;
        let end = start + order[start..].iter().take_while(|p| p.date == date).count();
        if last_training_date.is_some_and(|d| d >= date) {
            return Err(Error::LookAhead(format!(
                "training data dated {last_training_date:?} used on {date}"
            )));
        }

        if blend_pool.len() >= MIN_CALIBRATION_SAMPLES && blend_pool.len() != calibrated_at {
            calibrated_at = blend_pool.len();
            let (b, p) = rayon::join(
                || calibration::fit_blend(&blend_pool),
                || calibration::fit_platt(&platt_pool, platt),
            );
            blend = b.ok().or(blend);
            platt = p.ok().map(|f| f.params).or(platt);
        }
        slots.par_iter_mut().for_each(RegressionSlot::refit);

        let mut new_samples: Vec<(BlendSample, ShotForecast)> = Vec::new();
        let mut new_rows: Vec<(usize, Vec<f64>, usize)> = Vec::new();

        for p in &order[start..end] {
            let gap = &gaps[p.gap];
            let pos = gap.positions[p.k];
            let m = &data.matches[pos];
            let Some(inputs) = shots[p.gap].inputs[p.k] else {
                counts.no_model_yet += 1;
                continue;
            };
            counts.forecast_matches += 1;
            let burn_in = ingest::is_burn_in(index, pos, config.burn_in_threshold);
            let in_training = gap.training_seasons.contains(&m.season_id);
            let evaluated = !burn_in && !in_training;
            if burn_in {
                counts.burn_in += 1;
            } else if in_training {
                counts.training_period += 1;
            }
            if evaluated {
                counts.evaluated_matches += 1;
            }

            let calibrate = |raw: f64| {
                let b = blend.map_or(inputs.p_c, |bp| calibration::blend(raw, inputs.p_c, bp));
                let pl = platt.map_or(inputs.p_c, |pp| {
                    clamp_prob(calibration::platt_scale(raw, pp))
                });
                (b, pl)
            };
            let (blend_h, platt_h) = calibrate(inputs.p_home);
            let (blend_a, platt_a) = calibrate(inputs.p_away);
            let (sel_h, sel_a) = match config.calibrator {
                Calibrator::Blend => (blend_h, blend_a),
                Calibrator::Platt => (platt_h, platt_a),
                Calibrator::None => (inputs.p_home, inputs.p_away),
            };
            let predicted = gap.predicted_shots[p.k];

            // shot-level forecasts
            let sides = [
                (
                    Side::Home,
                    predicted.0,
                    m.home_shots,
                    m.home_goals,
                    inputs.p_home,
                    blend_h,
                    platt_h,
                ),
                (
                    Side::Away,
                    predicted.1,
                    m.away_shots,
                    m.away_goals,
                    inputs.p_away,
                    blend_a,
                    platt_a,
                ),
            ];
            let valid = m.has_valid_shots();
            for (side, pred, s, g, raw, b, pl) in sides {
                let s = s.expect("shot-data match");
                shot_rows.push(ShotForecastRow {
                    match_key: m.key(),
                    date,
                    side,
                    predicted_shots: pred,
                    shots: s,
                    goals: g,
                    p_raw: raw,
                    p_blend: b,
                    p_platt: pl,
                    p_c: inputs.p_c,
                    evaluated: evaluated && valid,
                });
                if !valid {
                    continue;
                }
                new_samples.push((
                    BlendSample {
                        p: raw,
                        p_c: inputs.p_c,
                        shots: s,
                        goals: g,
                    },
                    ShotForecast {
                        p: raw,
                        shots: s,
                        goals: g,
                    },
                ));
                if evaluated && s > 0 {
                    for (name, q) in [
                        ("raw", raw),
                        ("blend", b),
                        ("platt", pl),
                        ("climatology", inputs.p_c),
                    ] {
                        let (ig, br) = shot_scores(q, s, g, &mut counts.clamped_ignorance);
                        let acc = shot_acc.entry(name).or_default();
                        acc.0.add(ig, s as f64);
                        acc.1.add(br, s as f64);
                        reliability_inputs
                            .entry(name)
                            .or_default()
                            .push(BinaryForecast {
                                p: q,
                                trials: s,
                                successes: g,
                            });
                    }
                }
            }

            // match-level forecasts
            let model = GoalExpectation::new(predicted, (sel_h, sel_a), PredictorVariant::Model);
            let clim = GoalExpectation::new(
                predicted,
                (inputs.p_c, inputs.p_c),
                PredictorVariant::Climatology,
            );
            for (slot_idx, slot) in slots.iter().enumerate() {
                let key = slot.key;
                let e = match key.variant {
                    PredictorVariant::Model => &model,
                    PredictorVariant::Climatology => &clim,
                };
                let v = match key.market {
                    Market::Match1X2 => outcome::outcome_predictor(e),
                    Market::OverUnder25 => outcome::totals_predictor(e),
                };
                let odds = ingest::extract_odds(m, key.market);
                let y = market_outcome(m, key.market);
                let mut x = vec![v];
                if key.odds_predictor {
                    match &odds {
                        Some(o) => x.push(odds_feature(o)),
                        None => {
                            if key.variant == PredictorVariant::Model {
                                *counts.missing_odds.entry(key.label()).or_default() += 1;
                            }
                            continue;
                        }
                    }
                }
                new_rows.push((slot_idx, x.clone(), y));
                let Some(odds) = odds else {
                    if key.variant == PredictorVariant::Model {
                        *counts.missing_odds.entry(key.label()).or_default() += 1;
                    }
                    continue;
                };
                let (probs, fallback) = slot.predict(&x);
                if evaluated {
                    let (ig, clamped) = evaluation::ignorance_of(probs[y]);
                    if clamped {
                        counts.clamped_ignorance += 1;
                    }
                    let br = evaluation::brier(&probs, y)?;
                    let rp = evaluation::rps(&probs, y)?;
                    market_lists
                        .entry(key)
                        .or_default()
                        .push((evaluated_index, [ig, br, rp]));
                    let new = betting::draft_bets(
                        &m.key(),
                        key.market,
                        &probs,
                        &odds,
                        config.kelly_numerator,
                    )?;
                    draft_outcomes
                        .entry(key)
                        .or_default()
                        .extend(new.iter().map(|_| Some(y)));
                    drafts.entry(key).or_default().extend(new);
                }
                forecasts.push(ForecastRow {
                    match_key: m.key(),
                    league_id: m.league_id.clone(),
                    date,
                    market: key.market,
                    variant: key.variant,
                    odds_predictor: key.odds_predictor,
                    predictor: v,
                    probs,
                    odds,
                    outcome: y,
                    burn_in,
                    evaluated,
                    fallback,
                });
            }
            if evaluated {
                evaluated_index += 1;
            }
        }

        for (b, p) in new_samples {
            blend_pool.push(b);
            platt_pool.push(p);
        }
        for (slot_idx, x, y) in new_rows {
            slots[slot_idx].xs.push(x);
            slots[slot_idx].ys.push(y);
        }
        if end > start {
            last_training_date = Some(date);
        }
        start = end;
    }

    if counts.evaluated_matches == 0 {
        return Err(Error::EmptyReport(
            "no shot-data matches were forecast outside burn-in and GAP training seasons".into(),
        ));
    }

    let shot_scores = summarize_shots(&shot_acc);
    let market_scores = summarize_markets(&keys, &market_lists)?;
    let (betting, ledger) = summarize_bets(&keys, &drafts, &draft_outcomes)?;

    let mut reliability = BTreeMap::new();
    for name in ["raw", "blend", "platt"] {
        if let Some(items) = reliability_inputs.get(name) {
            if items.len() >= config.reliability_bins {
                let diagram = evaluation::reliability_diagram_binomial(
                    items,
                    config.reliability_bins,
                    config.reliability_replicates,
                    config.seed,
                )?;
                reliability.insert(name.to_string(), diagram);
            }
        }
    }

    let mut audit = None;
    if config.audit {
        let mut a = AuditSummary::default();
        for s in shots {
            a.merge(&s.audit);
        }
        audit = Some(a);
    }

    let summary = RunSummary {
        half_life,
        calibrator: config.calibrator,
        include_odds_predictor: config.include_odds_predictor,
        burn_in_threshold: config.burn_in_threshold,
        kelly_numerator: config.kelly_numerator,
        seed: config.seed,
        reliability_bins: config.reliability_bins,
        reliability_replicates: config.reliability_replicates,
        counts,
        leagues: gaps
            .iter()
            .zip(shots)
            .map(|(g, s)| LeagueSummary {
                league_id: g.league_id.clone(),
                gap_params: g.params,
                gap_warning: g.warning.clone(),
                training_seasons: g.training_seasons.iter().cloned().collect(),
                shot_fits: s.fits,
                cache_hits: s.cache_hits,
                fit_warnings: s.warnings,
            })
            .collect(),
        shot_scores,
        market_scores,
        betting,
        final_blend: blend,
        final_platt: platt,
        regression_warnings: slots.iter().map(|s| (s.key.label(), s.warnings)).collect(),
        audit,
    };
    Ok(RunReport {
        summary,
        forecasts,
        shot_forecasts: shot_rows,
        reliability,
        ledger,
    })
}

fn summarize_shots(
    acc: &BTreeMap<&'static str, (ScoreAccumulator, ScoreAccumulator)>,
) -> Vec<ShotScore> {
    let Some((clim_ig, clim_br)) = acc.get("climatology") else {
        return Vec::new();
    };
    let (ci, cb) = (
        clim_ig.mean().unwrap_or(f64::NAN),
        clim_br.mean().unwrap_or(f64::NAN),
    );
    ["raw", "blend", "platt", "climatology"]
        .iter()
        .filter_map(|name| {
            let (ig, br) = acc.get(name)?;
            let (mi, mb) = (ig.mean()?, br.mean()?);
            Some(ShotScore {
                forecast: name.to_string(),
                shots: ig.weight,
                mean_ignorance: mi,
                mean_brier: mb,
                relative_ignorance: mi - ci,
                relative_brier: mb - cb,
            })
        })
        .collect()
}

fn summarize_markets(
    keys: &[RegressionKey],
    lists: &BTreeMap<RegressionKey, Vec<(usize, [f64; 3])>>,
) -> Result<Vec<MarketScore>> {
    let mut out = Vec::new();
    for key in keys {
        let Some(rows) = lists.get(key) else { continue };
        let base = lists.get(&key.baseline()).expect("baseline slot present");
        let column =
            |rows: &[(usize, [f64; 3])], j: usize| rows.iter().map(|r| r.1[j]).collect::<Vec<_>>();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let mut scores = [0.0; 3];
        let mut relative = [0.0; 3];
        for j in 0..3 {
            let m = column(rows, j);
            let b = column(base, j);
            scores[j] = mean(&m);
            relative[j] = evaluation::relative_skill(&m, &b)?;
        }
        out.push(MarketScore {
            regression: key.label(),
            market: key.market,
            variant: key.variant,
            odds_predictor: key.odds_predictor,
            matches: rows.len(),
            mean_ignorance: scores[0],
            mean_brier: scores[1],
            mean_rps: scores[2],
            relative_ignorance: relative[0],
            relative_brier: relative[1],
            relative_rps: relative[2],
        });
    }
    Ok(out)
}

fn summarize_bets(
    keys: &[RegressionKey],
    drafts: &BTreeMap<RegressionKey, Vec<BetDraft>>,
    outcomes: &BTreeMap<RegressionKey, Vec<Option<usize>>>,
) -> Result<(Vec<BettingSummary>, Vec<LedgerRow>)> {
    let mut summaries = Vec::new();
    let mut ledger = Vec::new();
    for key in keys {
        let list = drafts.get(key).map(Vec::as_slice).unwrap_or_default();
        let outs = outcomes.get(key).map(Vec::as_slice).unwrap_or_default();
        let mut per_match: BTreeMap<&str, usize> = BTreeMap::new();
        for d in list {
            *per_match.entry(d.match_key.as_str()).or_default() += 1;
        }
        let several = per_match.values().filter(|&&n| n > 1).count();
        for strategy in [Strategy::LevelStakes, Strategy::Kelly] {
            let settlement = if list.is_empty() {
                Settlement {
                    bets: Vec::new(),
                    cumulative_profit: Vec::new(),
                    total_profit: 0.0,
                    bets_placed: 0,
                }
            } else {
                let stakes = betting::strategy_stakes(list, strategy)?;
                betting::settle(list, &stakes, outs)?
            };
            let mean_stake = if settlement.bets.is_empty() {
                0.0
            } else {
                settlement.bets.iter().map(|b| b.stake).sum::<f64>() / settlement.bets.len() as f64
            };
            summaries.push(BettingSummary {
                regression: key.label(),
                market: key.market,
                strategy,
                bets_placed: settlement.bets_placed,
                matches_with_several_bets: several,
                mean_stake,
                total_profit: settlement.total_profit,
            });
            ledger.extend(settlement.bets.into_iter().map(|record| LedgerRow {
                regression: key.label(),
                strategy,
                record,
            }));
        }
    }
    Ok((summaries, ledger))
}

/// Load `config.data_dir` and run the backtest at `config.half_life`.
pub fn run_backtest(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let data = load(config)?;
    backtest_dataset(&data, config)
}

fn load(config: &RunConfig) -> Result<Dataset> {
    if !config.data_dir.is_dir() {
        return Err(Error::Config(format!(
            "data directory {} does not exist",
            config.data_dir.display()
        )));
    }
    ingest::load_dir(&config.data_dir, config.leagues.as_deref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub half_life: f64,
    pub shot_scores: Vec<ShotScore>,
    pub market_scores: Vec<MarketScore>,
    pub betting: Vec<BettingSummary>,
    pub evaluated_matches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Half-life with the lowest mean ignorance for each shot forecast type
    /// (`shot-<type>`) and each regression.
    pub best_half_life: BTreeMap<String, f64>,
}

impl SweepReport {
    /// Mean shot-level ignorance per half-life for one forecast type.
    pub fn shot_curve(&self, forecast: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| {
                p.shot_scores
                    .iter()
                    .find(|s| s.forecast == forecast)
                    .map(|s| (p.half_life, s.mean_ignorance))
            })
            .collect()
    }

    pub fn market_curve(&self, regression: &str) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| {
                p.market_scores
                    .iter()
                    .find(|s| s.regression == regression)
                    .map(|s| (p.half_life, s.mean_ignorance))
            })
            .collect()
    }
}

/// Backtests over every half-life in the grid, sharing the parsed data and
/// the GAP fits.
pub fn sweep_dataset(data: &Dataset, config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    let leagues = league_ids(data, config.leagues.as_deref());
    let gaps = build_gap_tracks(data, &leagues, config.gap_training_seasons)?;
    let points: Vec<SweepPoint> = config
        .half_life_grid
        .par_iter()
        .map(|&h| {
            let report = backtest_with_tracks(data, config, &gaps, h)?;
            Ok(SweepPoint {
                half_life: h,
                shot_scores: report.summary.shot_scores,
                market_scores: report.summary.market_scores,
                betting: report.summary.betting,
                evaluated_matches: report.summary.counts.evaluated_matches,
            })
        })
        .collect::<Result<_>>()?;

    let mut sweep = SweepReport {
        points,
        best_half_life: BTreeMap::new(),
    };
    let argmin = |curve: Vec<(f64, f64)>| {
        curve
            .into_iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(h, _)| h)
    };
    for name in ["raw", "blend", "platt"] {
        if let Some(h) = argmin(sweep.shot_curve(name)) {
            sweep.best_half_life.insert(format!("shot-{name}"), h);
        }
    }
    for key in config.variants() {
        if let Some(h) = argmin(sweep.market_curve(&key.label())) {
            sweep.best_half_life.insert(key.label(), h);
        }
    }
    Ok(sweep)
}

pub fn half_life_sweep(config: &RunConfig) -> Result<SweepReport> {
    config.validate()?;
    let data = load(config)?;
    sweep_dataset(&data, config)
}

/// GAP states after replaying each league's training seasons.
pub fn fit_gap_states(data: &Dataset, config: &RunConfig) -> Result<Vec<GapState>> {
    let leagues = league_ids(data, config.leagues.as_deref());
    leagues
        .par_iter()
        .map(|league| {
            let track = build_gap_track(data, league, config.gap_training_seasons)?;
            let mut state = GapState::new(league.as_str(), track.params, FALLBACK_INIT_SHOTS);
            for &i in &track.positions {
                let m = &data.matches[i];
                if track.training_seasons.contains(&m.season_id) {
                    state.update(m);
                }
            }
            Ok(state)
        })
        .collect()
}
