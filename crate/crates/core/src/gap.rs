//! GAP (Generalised Attacking Performance) ratings for shot counts.
//!
//! Each team carries home/away attacking and defensive ratings, all in units
//! of shots. A team's predicted shots are the mean of its attacking rating and
//! the opponent's matching defensive rating.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FitWarning, Fitted, Result};
use crate::ingest::MatchRecord;
use crate::optim::{self, NelderMeadOptions};

/// Initial rating used when a league has no shot history yet.
pub const FALLBACK_INIT_SHOTS: f64 = 12.0;
/// Below this many shot-data matches the fit returns [`GapParams::FALLBACK`].
pub const MIN_FIT_MATCHES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapTeamRatings {
    pub home_attack: f64,
    pub home_defence: f64,
    pub away_attack: f64,
    pub away_defence: f64,
}

impl GapTeamRatings {
    pub fn uniform(value: f64) -> Self {
        GapTeamRatings {
            home_attack: value,
            home_defence: value,
            away_attack: value,
            away_defence: value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub lambda: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl GapParams {
    pub const START: GapParams = GapParams {
        lambda: 0.1,
        phi1: 0.5,
        phi2: 0.5,
    };
    pub const FALLBACK: GapParams = GapParams {
        lambda: 0.1,
        phi1: 0.7,
        phi2: 0.7,
    };

    pub fn new(lambda: f64, phi1: f64, phi2: f64) -> Result<Self> {
        let p = GapParams { lambda, phi1, phi2 };
        if p.is_valid() {
            Ok(p)
        } else {
            Err(Error::InvalidArgument(format!(
                "GAP parameters out of range: {p:?}"
            )))
        }
    }

    pub fn is_valid(&self) -> bool {
        self.lambda > 0.0
            && self.lambda.is_finite()
            && self.phi1 > 0.0
            && self.phi1 < 1.0
            && self.phi2 > 0.0
            && self.phi2 < 1.0
    }

    // unconstrained coordinates: (ln λ, logit φ₁, logit φ₂)
    fn to_free(self) -> [f64; 3] {
        [
            self.lambda.ln(),
            optim::logit(self.phi1),
            optim::logit(self.phi2),
        ]
    }

    fn from_free(u: &[f64]) -> Self {
        GapParams {
            lambda: u[0].exp(),
            phi1: optim::logistic(u[1]),
            phi2: optim::logistic(u[2]),
        }
    }
}

/// Per-league rating table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapState {
    pub league_id: String,
    pub params: GapParams,
    pub teams: BTreeMap<String, GapTeamRatings>,
    /// Initial rating when no shots have been seen.
    pub fallback_init: f64,
    // running totals for the mean-shots initialization
    shots_seen: u64,
    team_matches_seen: u64,
}

impl GapState {
    pub fn new(league_id: impl Into<String>, params: GapParams, fallback_init: f64) -> Self {
        GapState {
            league_id: league_id.into(),
            params,
            teams: BTreeMap::new(),
            fallback_init,
            shots_seen: 0,
            team_matches_seen: 0,
        }
    }

    /// Running mean shots per team per match, or the fallback before any data.
    pub fn init_value(&self) -> f64 {
        if self.team_matches_seen == 0 {
            self.fallback_init
        } else {
            self.shots_seen as f64 / self.team_matches_seen as f64
        }
    }

    pub fn ratings(&self, team: &str) -> GapTeamRatings {
        self.teams
            .get(team)
            .copied()
            .unwrap_or_else(|| GapTeamRatings::uniform(self.init_value()))
    }

    pub fn ensure_team(&mut self, team: &str) {
        if !self.teams.contains_key(team) {
            let init = GapTeamRatings::uniform(self.init_value());
            self.teams.insert(team.to_string(), init);
        }
    }

    /// Predicted (home shots, away shots). Unknown teams are rated at the
    /// current initialization value without being inserted.
    pub fn predict_shots(&self, home_team: &str, away_team: &str) -> (f64, f64) {
        let h = self.ratings(home_team);
        let a = self.ratings(away_team);
        predict_from_ratings(&h, &a)
    }

    /// Apply one match. Rows without shot data leave the state unchanged.
    pub fn update(&mut self, m: &MatchRecord) {
        let Some((home_shots, away_shots)) = m.shots() else {
            return;
        };
        self.ensure_team(&m.home_team);
        self.ensure_team(&m.away_team);
        let home = self.teams[&m.home_team];
        let away = self.teams[&m.away_team];
        let (new_home, new_away) = update_ratings(
            &self.params,
            &home,
            &away,
            home_shots as f64,
            away_shots as f64,
        );
        self.teams.insert(m.home_team.clone(), new_home);
        self.teams.insert(m.away_team.clone(), new_away);
        self.shots_seen += (home_shots + away_shots) as u64;
        self.team_matches_seen += 2;
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn predict_from_ratings(home: &GapTeamRatings, away: &GapTeamRatings) -> (f64, f64) {
    (
        (home.home_attack + away.away_defence) / 2.0,
        (away.away_attack + home.home_defence) / 2.0,
    )
}

/// One update step. Every right-hand side uses the pre-match ratings, and
/// each new rating is clamped at zero.
pub fn update_ratings(
    params: &GapParams,
    home: &GapTeamRatings,
    away: &GapTeamRatings,
    home_shots: f64,
    away_shots: f64,
) -> (GapTeamRatings, GapTeamRatings) {
    let (pred_home, pred_away) = predict_from_ratings(home, away);
    let home_err = home_shots - pred_home;
    let away_err = away_shots - pred_away;
    let GapParams { lambda, phi1, phi2 } = *params;
    let new_home = GapTeamRatings {
        home_attack: (home.home_attack + lambda * phi1 * home_err).max(0.0),
        away_attack: (home.away_attack + lambda * (1.0 - phi1) * home_err).max(0.0),
        home_defence: (home.home_defence + lambda * phi1 * away_err).max(0.0),
        away_defence: (home.away_defence + lambda * (1.0 - phi1) * away_err).max(0.0),
    };
    let new_away = GapTeamRatings {
        away_attack: (away.away_attack + lambda * phi2 * away_err).max(0.0),
        home_attack: (away.home_attack + lambda * (1.0 - phi2) * away_err).max(0.0),
        away_defence: (away.away_defence + lambda * phi2 * home_err).max(0.0),
        home_defence: (away.home_defence + lambda * (1.0 - phi2) * home_err).max(0.0),
    };
    (new_home, new_away)
}

/// Mean absolute shot-prediction error of a sequential predict-then-update
/// pass from a fresh state. Matches without shots are skipped.
pub fn mae_objective(params: &GapParams, matches: &[MatchRecord], init: f64) -> Result<f64> {
    let mut state = GapState::new("", *params, init);
    let mut total = 0.0;
    let mut n = 0usize;
    for m in matches {
        let Some((hs, aws)) = m.shots() else { continue };
        let (ph, pa) = state.predict_shots(&m.home_team, &m.away_team);
        total += (hs as f64 - ph).abs() + (aws as f64 - pa).abs();
        n += 1;
        state.update(m);
    }
    if n == 0 {
        return Err(Error::EmptyObjective);
    }
    Ok(total / n as f64)
}

/// Fit (λ, φ₁, φ₂) by Nelder-Mead on the MAE objective, starting from
/// (0.1, 0.5, 0.5). Box constraints are enforced through the log/logit
/// transform. The search restarts from its best point until a restart no
/// longer improves the objective.
pub fn fit_gap_params(matches: &[MatchRecord], init: f64) -> Result<Fitted<GapParams>> {
    let usable = matches.iter().filter(|m| m.shots().is_some()).count();
    if usable < MIN_FIT_MATCHES {
        return Ok(Fitted::warn(
            GapParams::FALLBACK,
            FitWarning::Fallback(format!(
                "{usable} shot-data matches, need {MIN_FIT_MATCHES}"
            )),
        ));
    }
    let objective = |u: &[f64]| {
        let p = GapParams::from_free(u);
        if !p.is_valid() {
            return f64::INFINITY;
        }
        mae_objective(&p, matches, init).unwrap_or(f64::INFINITY)
    };
    let opts = NelderMeadOptions::default();
    let mut best = optim::nelder_mead(objective, &GapParams::START.to_free(), opts);
    let mut converged = best.converged;
    for _ in 0..4 {
        let restart = optim::nelder_mead(
            objective,
            &best.x,
            NelderMeadOptions {
                initial_step: 0.1,
                ..opts
            },
        );
        let improved = restart.value < best.value - 1e-12;
        converged = restart.converged;
        if restart.value <= best.value {
            best = restart;
        }
        if !improved {
            break;
        }
    }
    let params = GapParams::from_free(&best.x);
    if converged {
        Ok(Fitted::ok(params))
    } else {
        Ok(Fitted::warn(
            params,
            FitWarning::NotConverged {
                iterations: opts.max_iterations,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Outcome;
    use chrono::NaiveDate;

    fn shot_match(day: i64, home: &str, away: &str, hs: u32, aws: u32) -> MatchRecord {
        MatchRecord {
            league_id: "L".into(),
            season_id: "S".into(),
            row: day as usize,
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap() + chrono::Duration::days(day),
            home_team: home.into(),
            away_team: away.into(),
            home_goals: 1,
            away_goals: 1,
            home_shots: Some(hs),
            away_shots: Some(aws),
            outcome: Outcome::Draw,
            odds_1x2: None,
            odds_ou25: None,
        }
    }

    fn ratings(ha: f64, hd: f64, aa: f64, ad: f64) -> GapTeamRatings {
        GapTeamRatings {
            home_attack: ha,
            home_defence: hd,
            away_attack: aa,
            away_defence: ad,
        }
    }

    #[test]
    fn prediction_is_mean_of_attack_and_opposing_defence() {
        let home = ratings(12.0, 0.0, 0.0, 0.0);
        let away = ratings(0.0, 0.0, 0.0, 10.0);
        assert_eq!(predict_from_ratings(&home, &away).0, 11.0);

        let home = ratings(14.2, 12.0, 0.0, 0.0);
        let away = ratings(0.0, 0.0, 8.0, 9.6);
        let (h, a) = predict_from_ratings(&home, &away);
        assert!((h - 11.9).abs() < 1e-12 && (a - 10.0).abs() < 1e-12);

        let r = GapTeamRatings::uniform(7.5);
        assert_eq!(predict_from_ratings(&r, &r), (7.5, 7.5));
    }

    #[test]
    fn home_attack_update_matches_hand_computation() {
        let p = GapParams::new(0.2, 0.5, 0.5).unwrap();
        let home = ratings(12.0, 10.0, 10.0, 10.0);
        let away = ratings(10.0, 10.0, 10.0, 10.0);
        let (new_home, _) = update_ratings(&p, &home, &away, 15.0, 10.0);
        assert!((new_home.home_attack - 12.4).abs() < 1e-9);
        // away attacking rating of the home team moves by λ(1−φ₁)·4
        assert!((new_home.away_attack - 10.4).abs() < 1e-9);
    }

    #[test]
    fn away_block_uses_phi2() {
        let p = GapParams::new(0.5, 0.3, 0.8).unwrap();
        let home = GapTeamRatings::uniform(10.0);
        let away = GapTeamRatings::uniform(10.0);
        let (_, new_away) = update_ratings(&p, &home, &away, 10.0, 14.0);
        assert!((new_away.away_attack - (10.0 + 0.5 * 0.8 * 4.0)).abs() < 1e-12);
        assert!((new_away.home_attack - (10.0 + 0.5 * 0.2 * 4.0)).abs() < 1e-12);
        assert_eq!(new_away.away_defence, 10.0);
    }

    #[test]
    fn zero_innovation_is_a_fixed_point() {
        let p = GapParams::new(0.3, 0.6, 0.4).unwrap();
        let home = ratings(12.0, 9.0, 11.0, 8.0);
        let away = ratings(13.0, 10.0, 7.0, 10.0);
        let (ph, pa) = predict_from_ratings(&home, &away);
        let (nh, na) = update_ratings(&p, &home, &away, ph, pa);
        assert_eq!((nh, na), (home, away));
    }

    #[test]
    fn ratings_clamp_at_zero() {
        let p = GapParams::new(2.0, 0.9, 0.9).unwrap();
        let home = ratings(0.1, 0.1, 0.1, 0.1);
        let away = ratings(30.0, 30.0, 30.0, 30.0);
        let (nh, _) = update_ratings(&p, &home, &away, 0.0, 0.0);
        assert_eq!(nh.home_attack, 0.0);
        assert_eq!(nh.home_defence, 0.0);
    }

    #[test]
    fn missing_shots_leave_state_unchanged() {
        let mut s = GapState::new("L", GapParams::START, 12.0);
        let mut m = shot_match(0, "A", "B", 10, 10);
        m.home_shots = None;
        s.update(&m);
        assert!(s.teams.is_empty());
    }

    #[test]
    fn new_teams_start_at_running_mean() {
        let mut s = GapState::new("L", GapParams::START, 12.0);
        assert_eq!(s.init_value(), 12.0);
        s.update(&shot_match(0, "A", "B", 16, 8));
        assert_eq!(s.init_value(), 12.0);
        s.update(&shot_match(1, "A", "B", 20, 4));
        assert_eq!(s.init_value(), 12.0);
        s.update(&shot_match(2, "C", "D", 20, 20));
        assert!((s.init_value() - 88.0 / 6.0).abs() < 1e-12);
        assert_eq!(s.predict_shots("X", "Y"), (88.0 / 6.0, 88.0 / 6.0));
    }

    #[test]
    fn single_match_objective() {
        let p = GapParams::START;
        let m = shot_match(0, "A", "B", 15, 8);
        let f = mae_objective(&p, std::slice::from_ref(&m), 10.5).unwrap();
        assert!((f - (4.5 + 2.5)).abs() < 1e-12);

        let home = ratings(12.0, 10.0, 0.0, 0.0);
        let away = ratings(0.0, 0.0, 10.0, 10.0);
        let (ph, pa) = predict_from_ratings(&home, &away);
        assert_eq!((ph, pa), (11.0, 10.0));
        assert_eq!((15.0 - ph).abs() + (8.0 - pa).abs(), 6.0);
    }

    #[test]
    fn constant_league_has_zero_objective() {
        let teams = ["A", "B", "C", "D"];
        let mut ms = Vec::new();
        for day in 0..40 {
            let h = teams[day % 4];
            let a = teams[(day + 1 + day / 4) % 4];
            if h != a {
                ms.push(shot_match(day as i64, h, a, 12, 12));
            }
        }
        for lambda in [0.01, 0.2, 1.5] {
            let p = GapParams::new(lambda, 0.5, 0.5).unwrap();
            assert_eq!(mae_objective(&p, &ms, 12.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn objective_resets_state_between_calls() {
        let ms: Vec<_> = (0..30)
            .map(|d| {
                shot_match(
                    d,
                    ["A", "B", "C"][d as usize % 3],
                    "D",
                    8 + (d % 7) as u32,
                    11,
                )
            })
            .collect();
        let p = GapParams::new(0.15, 0.6, 0.4).unwrap();
        let once = mae_objective(&p, &ms, 12.0).unwrap();
        let again = mae_objective(&p, &ms, 12.0).unwrap();
        assert_eq!(once.to_bits(), again.to_bits());
        let doubled: Vec<_> = ms.iter().chain(ms.iter()).cloned().collect();
        let twice = mae_objective(&p, &doubled, 12.0).unwrap();
        // the second copy starts from the warmed-up state, so the mean differs
        assert_ne!(once.to_bits(), twice.to_bits());
    }

    #[test]
    fn empty_objective_is_an_error() {
        assert!(matches!(
            mae_objective(&GapParams::START, &[], 12.0),
            Err(Error::EmptyObjective)
        ));
    }

    #[test]
    fn small_samples_fall_back_to_defaults() {
        let ms: Vec<_> = (0..20).map(|d| shot_match(d, "A", "B", 10, 10)).collect();
        let fit = fit_gap_params(&ms, 12.0).unwrap();
        assert_eq!(fit.params, GapParams::FALLBACK);
        assert!(matches!(fit.warning, Some(FitWarning::Fallback(_))));
    }

    #[test]
    fn state_round_trips_through_json() {
        let mut s = GapState::new("E0", GapParams::START, 12.0);
        s.update(&shot_match(0, "A", "B", 15, 9));
        let back = GapState::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn params_validation() {
        assert!(GapParams::new(0.0, 0.5, 0.5).is_err());
        assert!(GapParams::new(0.1, 1.0, 0.5).is_err());
        assert!(GapParams::new(0.1, 0.5, 0.0).is_err());
    }
}
