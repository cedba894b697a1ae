//! Synthetic leagues drawn from the shot-success model itself, with known
//! team ratings and exact outcome probabilities. Used by tests and by the
//! `simulate` subcommand to produce football-data style CSVs.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{MatchRecord, Outcome};
use crate::optim::logistic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub league_id: String,
    pub teams: usize,
    pub seasons: usize,
    /// Meetings of each pair per season, split evenly between venues.
    pub meetings_per_pair: usize,
    pub first_season: i32,
    pub days_between_rounds: i64,
    pub c: f64,
    pub h: f64,
    /// Standard deviation of the attack and defence ratings.
    pub rating_sd: f64,
    /// Per-round random-walk step of the ratings; 0 keeps them fixed.
    pub drift_sd: f64,
    pub home_shot_rate: f64,
    pub away_shot_rate: f64,
    /// Standard deviation of the log shot-rate effects.
    pub shot_rate_sd: f64,
    /// Bookmaker overround applied to the odds.
    pub margin: f64,
    /// Noise on the bookmaker's log-odds, so that some odds offer value.
    pub odds_noise_sd: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            league_id: "SIM".into(),
            teams: 10,
            seasons: 3,
            meetings_per_pair: 2,
            first_season: 2010,
            days_between_rounds: 7,
            c: -2.2,
            h: 0.1,
            rating_sd: 0.3,
            drift_sd: 0.0,
            home_shot_rate: 13.5,
            away_shot_rate: 10.5,
            shot_rate_sd: 0.15,
            margin: 0.03,
            odds_noise_sd: 0.25,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTeam {
    pub name: String,
    pub attack: f64,
    pub defence: f64,
    /// Log multiplier on shots taken.
    pub shot_attack: f64,
    /// Log multiplier on shots conceded.
    pub shot_defence: f64,
}

/// The generating probabilities behind one simulated match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueMatch {
    pub key: String,
    pub home_shot_rate: f64,
    pub away_shot_rate: f64,
    pub p_home: f64,
    pub p_away: f64,
    /// (home, draw, away).
    pub probs_1x2: [f64; 3],
    pub p_over_25: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedLeague {
    pub config: SimConfig,
    /// Ratings at the start of the first season, centered.
    pub teams: Vec<SimTeam>,
    /// Centered ratings at the end of the simulation.
    pub final_teams: Vec<SimTeam>,
    pub seasons: Vec<String>,
    pub matches: Vec<MatchRecord>,
    pub truth: Vec<TrueMatch>,
}

pub fn season_label(start_year: i32) -> String {
    format!("{}-{:02}", start_year, (start_year + 1).rem_euclid(100))
}

/// Double round-robin rounds by the circle method; `None` marks a bye.
fn round_robin(n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut slots: Vec<Option<usize>> = (0..n).map(Some).collect();
    if n % 2 == 1 {
        slots.push(None);
    }
    let m = slots.len();
    let mut first_leg = Vec::with_capacity(m - 1);
    for r in 0..m - 1 {
        let mut round = Vec::new();
        for i in 0..m / 2 {
            if let (Some(a), Some(b)) = (slots[i], slots[m - 1 - i]) {
                // alternate venues so nobody is always at home
                round.push(if (r + i) % 2 == 0 { (a, b) } else { (b, a) });
            }
        }
        first_leg.push(round);
        slots[1..].rotate_right(1);
    }
    let second_leg: Vec<_> = first_leg
        .iter()
        .map(|round| round.iter().map(|&(h, a)| (a, h)).collect())
        .collect();
    first_leg.into_iter().chain(second_leg).collect()
}

fn poisson_pmf(lambda: f64, max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut p = (-lambda).exp();
    for k in 0..=max {
        out.push(p);
        p *= lambda / (k + 1) as f64;
    }
    out
}

/// Exact 1X2 and over-2.5 probabilities when goals are independent Poisson.
pub fn poisson_outcome_probs(home_rate: f64, away_rate: f64) -> ([f64; 3], f64) {
    let max = 40;
    let ph = poisson_pmf(home_rate, max);
    let pa = poisson_pmf(away_rate, max);
    let mut probs = [0.0; 3];
    for (i, x) in ph.iter().enumerate() {
        for (j, y) in pa.iter().enumerate() {
            probs[Outcome::from_goals(i as u32, j as u32).index()] += x * y;
        }
    }
    let total = poisson_pmf(home_rate + away_rate, 2);
    let under: f64 = total.iter().sum();
    (probs, 1.0 - under)
}

/// Decimal odds with overround `margin` on noisy log-odds.
fn bookmaker_odds(probs: &[f64], margin: f64, noise: f64, rng: &mut impl Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite sd");
    let weights: Vec<f64> = probs
        .iter()
        .map(|p| {
            p.max(1e-6)
                * if noise > 0.0 {
                    normal.sample(rng).exp()
                } else {
                    1.0
                }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| {
            let o = 1.0 / (w / total * (1.0 + margin));
            (o * 100.0).round() / 100.0
        })
        .map(|o: f64| o.max(1.01))
        .collect()
}

fn center(teams: &mut [SimTeam]) {
    let n = teams.len() as f64;
    let ma = teams.iter().map(|t| t.attack).sum::<f64>() / n;
    let md = teams.iter().map(|t| t.defence).sum::<f64>() / n;
    for t in teams {
        t.attack -= ma;
        t.defence -= md;
    }
}

pub fn simulate_league(config: &SimConfig) -> Result<SimulatedLeague> {
    if config.teams < 2 || config.seasons == 0 || config.meetings_per_pair == 0 {
        return Err(Error::InvalidArgument(
            "simulation needs at least two teams, one season and one meeting".into(),
        ));
    }
    if !config.meetings_per_pair.is_multiple_of(2) {
        return Err(Error::InvalidArgument(
            "meetings_per_pair must be even".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rating = Normal::new(0.0, config.rating_sd.max(0.0)).map_err(invalid)?;
    let shot_effect = Normal::new(0.0, config.shot_rate_sd.max(0.0)).map_err(invalid)?;
    let drift = Normal::new(0.0, config.drift_sd.max(0.0)).map_err(invalid)?;

    let mut teams: Vec<SimTeam> = (0..config.teams)
        .map(|i| SimTeam {
            name: format!("Team {:02}", i + 1),
            attack: rating.sample(&mut rng),
            defence: rating.sample(&mut rng),
            shot_attack: shot_effect.sample(&mut rng),
            shot_defence: shot_effect.sample(&mut rng),
        })
        .collect();
    center(&mut teams);
    let initial = teams.clone();

    let rounds = round_robin(config.teams);
    let mut matches = Vec::new();
    let mut truth = Vec::new();
    let mut seasons = Vec::new();
    for s in 0..config.seasons {
        let year = config.first_season + s as i32;
        let season_id = season_label(year);
        let mut date = NaiveDate::from_ymd_opt(year, 8, 10).expect("valid date");
        let mut schedule: Vec<Vec<(usize, usize)>> = Vec::new();
        for _ in 0..config.meetings_per_pair / 2 {
            let mut cycle = rounds.clone();
            cycle.shuffle(&mut rng);
            schedule.extend(cycle);
        }
        let mut row = 0;
        for round in schedule {
            for &(hi, ai) in &round {
                let (home, away) = (&teams[hi], &teams[ai]);
                let p_home = logistic(config.c + config.h + (home.attack + away.defence) / 2.0);
                let p_away = logistic(config.c - config.h + (away.attack + home.defence) / 2.0);
                let rate_h = config.home_shot_rate * (home.shot_attack + away.shot_defence).exp();
                let rate_a = config.away_shot_rate * (away.shot_attack + home.shot_defence).exp();
                let hs = Poisson::new(rate_h).map_err(invalid)?.sample(&mut rng) as u64;
                let aws = Poisson::new(rate_a).map_err(invalid)?.sample(&mut rng) as u64;
                let hg = Binomial::new(hs, p_home).map_err(invalid)?.sample(&mut rng);
                let ag = Binomial::new(aws, p_away)
                    .map_err(invalid)?
                    .sample(&mut rng);
                // thinning a Poisson shot count by a fixed conversion rate
                // leaves Poisson goals
                let (probs, p_over) = poisson_outcome_probs(rate_h * p_home, rate_a * p_away);
                let odds_1x2 =
                    bookmaker_odds(&probs, config.margin, config.odds_noise_sd, &mut rng);
                let odds_ou = bookmaker_odds(
                    &[p_over, 1.0 - p_over],
                    config.margin,
                    config.odds_noise_sd,
                    &mut rng,
                );
                let record = MatchRecord {
                    league_id: config.league_id.clone(),
                    season_id: season_id.clone(),
                    row,
                    date,
                    home_team: home.name.clone(),
                    away_team: away.name.clone(),
                    home_goals: hg as u32,
                    away_goals: ag as u32,
                    home_shots: Some(hs as u32),
                    away_shots: Some(aws as u32),
                    outcome: Outcome::from_goals(hg as u32, ag as u32),
                    odds_1x2: Some([odds_1x2[0], odds_1x2[1], odds_1x2[2]]),
                    odds_ou25: Some([odds_ou[0], odds_ou[1]]),
                };
                truth.push(TrueMatch {
                    key: record.key(),
                    home_shot_rate: rate_h,
                    away_shot_rate: rate_a,
                    p_home,
                    p_away,
                    probs_1x2: probs,
                    p_over_25: p_over,
                });
                matches.push(record);
                row += 1;
            }
            date += Duration::days(config.days_between_rounds);
            if config.drift_sd > 0.0 {
                for t in teams.iter_mut() {
                    t.attack += drift.sample(&mut rng);
                    t.defence += drift.sample(&mut rng);
                }
                center(&mut teams);
            }
        }
        seasons.push(season_id);
    }
    Ok(SimulatedLeague {
        config: config.clone(),
        teams: initial,
        final_teams: teams,
        seasons,
        matches,
        truth,
    })
}

fn invalid(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(e.to_string())
}

/// Football-data style CSV for one season of matches.
pub fn to_csv(matches: &[&MatchRecord]) -> String {
    let mut out = String::from(
        "Div,Date,HomeTeam,AwayTeam,FTHG,FTAG,FTR,HS,AS,BbMxH,BbMxD,BbMxA,BbMx>2.5,BbMx<2.5\n",
    );
    for m in matches {
        let shots = |s: Option<u32>| s.map(|v| v.to_string()).unwrap_or_default();
        let odds = |o: Option<f64>| o.map(|v| format!("{v:.2}")).unwrap_or_default();
        let [oh, od, oa] = m.odds_1x2.map_or([None; 3], |o| o.map(Some));
        let [oo, ou] = m.odds_ou25.map_or([None; 2], |o| o.map(Some));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m.league_id,
            m.date.format("%d/%m/%Y"),
            m.home_team,
            m.away_team,
            m.home_goals,
            m.away_goals,
            m.outcome.code(),
            shots(m.home_shots),
            shots(m.away_shots),
            odds(oh),
            odds(od),
            odds(oa),
            odds(oo),
            odds(ou),
        ));
    }
    out
}

/// Write `<dir>/<season>/<league>.csv` for every simulated season.
pub fn write_league(league: &SimulatedLeague, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for season in &league.seasons {
        let rows: Vec<&MatchRecord> = league
            .matches
            .iter()
            .filter(|m| &m.season_id == season)
            .collect();
        let season_dir = dir.join(season);
        std::fs::create_dir_all(&season_dir).map_err(|e| Error::io(&season_dir, e))?;
        let path = season_dir.join(format!("{}.csv", league.config.league_id));
        std::fs::write(&path, to_csv(&rows)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
