//! Per-league shot-conversion ratings fitted by half-life-weighted maximum
//! likelihood.
//!
//! In a match with team `i` at home to team `j`, the probability that a home
//! shot is scored is `logistic(c + h + (a_i + d_j) / 2)` and that an away shot
//! is scored is `logistic(c - h + (a_j + d_i) / 2)`. Attack ratings `a` and
//! defence ratings `d` are centred on zero.
//!
//! The data only carry per-match shot and goal totals, so each team-match is a
//! binomial sample: its shots are taken as independent trials with a common
//! success probability. Samples are weighted by `0.5^(days_ago / H)`.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FitWarning, Fitted, Result};
use crate::ingest::MatchRecord;
use crate::optim::{self, BfgsOptions};

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-9;

pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Weight `0.5^(days_ago / half_life)`. An infinite half life weights every
/// match equally.
pub fn time_weight(days_ago: f64, half_life: f64) -> Result<f64> {
    if !(half_life > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "half life must be positive, got {half_life}"
        )));
    }
    if days_ago < 0.0 || days_ago.is_nan() {
        return Err(Error::LookAhead(format!(
            "sample dated {days_ago} days before the fit date"
        )));
    }
    Ok(0.5_f64.powf(days_ago / half_life))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Home,
    Away,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Home => 1.0,
            Side::Away => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotOutcomeSample {
    pub match_key: String,
    pub side: Side,
    pub attacking_team: String,
    pub defending_team: String,
    pub shots: u32,
    pub goals: u32,
    pub days_before_as_of: i64,
}

/// Binomial samples from `league_id` matches dated strictly before `as_of`.
/// Matches without shots, or with more goals than shots, contribute nothing.
pub fn samples_before(
    matches: &[MatchRecord],
    league_id: &str,
    as_of: NaiveDate,
) -> Vec<ShotOutcomeSample> {
    let mut out = Vec::new();
    for m in matches {
        if m.league_id != league_id || m.date >= as_of || !m.has_valid_shots() {
            continue;
        }
        let (hs, aws) = m.shots().expect("checked by has_valid_shots");
        let days = (as_of - m.date).num_days();
        out.push(ShotOutcomeSample {
            match_key: m.key(),
            side: Side::Home,
            attacking_team: m.home_team.clone(),
            defending_team: m.away_team.clone(),
            shots: hs,
            goals: m.home_goals,
            days_before_as_of: days,
        });
        out.push(ShotOutcomeSample {
            match_key: m.key(),
            side: Side::Away,
            attacking_team: m.away_team.clone(),
            defending_team: m.home_team.clone(),
            shots: aws,
            goals: m.away_goals,
            days_before_as_of: days,
        });
    }
    out
}

/// Fitted shot-conversion model for one league at one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotModelParams {
    pub league_id: String,
    pub team_order: Vec<String>,
    pub attack: Vec<f64>,
    pub defence: Vec<f64>,
    pub c: f64,
    pub h: f64,
    pub half_life_days: f64,
    pub as_of_date: NaiveDate,
}

impl ShotModelParams {
    pub fn zeros(
        league_id: &str,
        team_order: Vec<String>,
        half_life_days: f64,
        as_of_date: NaiveDate,
    ) -> Self {
        let t = team_order.len();
        ShotModelParams {
            league_id: league_id.to_string(),
            team_order,
            attack: vec![0.0; t],
            defence: vec![0.0; t],
            c: 0.0,
            h: 0.0,
            half_life_days,
            as_of_date,
        }
    }

    pub fn team_index(&self, team: &str) -> Option<usize> {
        self.team_order.iter().position(|t| t == team)
    }

    /// Log-odds of a shot by `attacker` against `defender` being scored.
    pub fn log_odds(&self, attacker: usize, defender: usize, side: Side) -> f64 {
        self.c + side.sign() * self.h + 0.5 * (self.attack[attacker] + self.defence[defender])
    }

    /// Shift `a` (and `d`) to zero mean, compensating in `c` so that every
    /// probability is unchanged.
    pub fn recenter(&mut self) {
        let t = self.attack.len();
        if t == 0 {
            return;
        }
        let mean_a = self.attack.iter().sum::<f64>() / t as f64;
        let mean_d = self.defence.iter().sum::<f64>() / t as f64;
        self.attack.iter_mut().for_each(|a| *a -= mean_a);
        self.defence.iter_mut().for_each(|d| *d -= mean_d);
        self.c += 0.5 * (mean_a + mean_d);
    }
}

/// `(p_home, p_away)`: probability that a home (away) shot is scored.
pub fn shot_probabilities(
    params: &ShotModelParams,
    home_team: &str,
    away_team: &str,
) -> Result<(f64, f64)> {
    let i = params
        .team_index(home_team)
        .ok_or_else(|| Error::UnratedTeam(home_team.to_string()))?;
    let j = params
        .team_index(away_team)
        .ok_or_else(|| Error::UnratedTeam(away_team.to_string()))?;
    Ok((
        optim::logistic(params.log_odds(i, j, Side::Home)),
        optim::logistic(params.log_odds(j, i, Side::Away)),
    ))
}

/// Gradient of the weighted negative log-likelihood, laid out like the
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotGradient {
    pub attack: Vec<f64>,
    pub defence: Vec<f64>,
    pub c: f64,
    pub h: f64,
}

fn binomial_nll(m: f64, goals: f64, misses: f64) -> f64 {
    let p = clamp_prob(optim::logistic(m));
    let mut v = 0.0;
    if goals > 0.0 {
        v -= goals * p.ln();
    }
    if misses > 0.0 {
        v -= misses * (1.0 - p).ln();
    }
    v
}

/// `-Σ w·[G ln p + (S−G) ln(1−p)]` over the samples, with
/// `w = time_weight(days_before_as_of, H)`.
pub fn weighted_nll(params: &ShotModelParams, samples: &[ShotOutcomeSample]) -> Result<f64> {
    Ok(weighted_nll_with_gradient(params, samples)?.0)
}

pub fn weighted_nll_with_gradient(
    params: &ShotModelParams,
    samples: &[ShotOutcomeSample],
) -> Result<(f64, ShotGradient)> {
    let t = params.team_order.len();
    let index: HashMap<&str, usize> = params
        .team_order
        .iter()
        .enumerate()
        .map(|(i, name)| (name.as_str(), i))
        .collect();
    let mut grad = ShotGradient {
        attack: vec![0.0; t],
        defence: vec![0.0; t],
        c: 0.0,
        h: 0.0,
    };
    let mut total = 0.0;
    for s in samples {
        if s.goals > s.shots {
            return Err(Error::InvalidArgument(format!(
                "{}: {} goals from {} shots",
                s.match_key, s.goals, s.shots
            )));
        }
        if s.shots == 0 {
            continue;
        }
        let w = time_weight(s.days_before_as_of as f64, params.half_life_days)?;
        let lookup = |team: &str| {
            index
                .get(team)
                .copied()
                .ok_or_else(|| Error::UnratedTeam(team.to_string()))
        };
        let i = lookup(&s.attacking_team)?;
        let j = lookup(&s.defending_team)?;
        let m = params.log_odds(i, j, s.side);
        let goals = w * s.goals as f64;
        let misses = w * (s.shots - s.goals) as f64;
        total += binomial_nll(m, goals, misses);
        let r = (goals + misses) * optim::logistic(m) - goals;
        grad.c += r;
        grad.h += s.side.sign() * r;
        grad.attack[i] += 0.5 * r;
        grad.defence[j] += 0.5 * r;
    }
    Ok((total, grad))
}

/// Weighted goal/miss totals aggregated per (attacker, defender, side).
///
/// The likelihood depends on the samples only through these cells, so the
/// aggregate is an exact substitute for the sample list.
#[derive(Debug, Clone, Default)]
pub struct ShotStats {
    teams: Vec<String>,
    team_index: HashMap<String, usize>,
    cells: Vec<Cell>,
    cell_index: HashMap<(usize, usize, bool), usize>,
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    attacker: usize,
    defender: usize,
    side: Side,
    goals: f64,
    misses: f64,
}

impl ShotStats {
    pub fn from_samples(samples: &[ShotOutcomeSample], half_life: f64) -> Result<Self> {
        let mut stats = ShotStats::default();
        for s in samples {
            if s.goals > s.shots {
                return Err(Error::InvalidArgument(format!(
                    "{}: {} goals from {} shots",
                    s.match_key, s.goals, s.shots
                )));
            }
            let w = time_weight(s.days_before_as_of as f64, half_life)?;
            stats.add(
                &s.attacking_team,
                &s.defending_team,
                s.side,
                s.shots,
                s.goals,
                w,
            );
        }
        Ok(stats)
    }

    fn team(&mut self, name: &str) -> usize {
        if let Some(&i) = self.team_index.get(name) {
            return i;
        }
        let i = self.teams.len();
        self.teams.push(name.to_string());
        self.team_index.insert(name.to_string(), i);
        i
    }

    /// Teams with at least one recorded shot sample, in first-seen order.
    pub fn teams(&self) -> &[String] {
        &self.teams
    }

    pub fn add(
        &mut self,
        attacker: &str,
        defender: &str,
        side: Side,
        shots: u32,
        goals: u32,
        weight: f64,
    ) {
        let a = self.team(attacker);
        let d = self.team(defender);
        let key = (a, d, side == Side::Home);
        let idx = match self.cell_index.get(&key) {
            Some(&i) => i,
            None => {
                self.cells.push(Cell {
                    attacker: a,
                    defender: d,
                    side,
                    goals: 0.0,
                    misses: 0.0,
                });
                self.cell_index.insert(key, self.cells.len() - 1);
                self.cells.len() - 1
            }
        };
        self.cells[idx].goals += weight * goals as f64;
        self.cells[idx].misses += weight * shots.saturating_sub(goals) as f64;
    }

    /// Multiply every stored weight by `factor`.
    pub fn decay(&mut self, factor: f64) {
        if factor == 1.0 {
            return;
        }
        for c in &mut self.cells {
            c.goals *= factor;
            c.misses *= factor;
        }
    }

    pub fn total_shots(&self) -> f64 {
        self.cells.iter().map(|c| c.goals + c.misses).sum()
    }

    fn nll_full(&self, attack: &[f64], defence: &[f64], c: f64, h: f64, grad: &mut [f64]) -> f64 {
        // grad layout: attack (T), defence (T), c, h
        let t = attack.len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for cell in &self.cells {
            let n = cell.goals + cell.misses;
            if n <= 0.0 {
                continue;
            }
            let m =
                c + cell.side.sign() * h + 0.5 * (attack[cell.attacker] + defence[cell.defender]);
            total += binomial_nll(m, cell.goals, cell.misses);
            let r = n * optim::logistic(m) - cell.goals;
            grad[cell.attacker] += 0.5 * r;
            grad[t + cell.defender] += 0.5 * r;
            grad[2 * t] += r;
            grad[2 * t + 1] += cell.side.sign() * r;
        }
        total
    }
}

fn expand(theta: &[f64], t: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
    // the last attack and defence ratings are minus the sum of the others
    let k = t.saturating_sub(1);
    let mut attack = theta[..k].to_vec();
    attack.push(-attack.iter().sum::<f64>());
    let mut defence = theta[k..2 * k].to_vec();
    defence.push(-defence.iter().sum::<f64>());
    (attack, defence, theta[2 * k], theta[2 * k + 1])
}

/// Fit from aggregated statistics. `warm` seeds the optimizer; its teams are
/// matched by name and any missing team starts at zero.
pub fn fit_from_stats(
    stats: &ShotStats,
    league_id: &str,
    as_of: NaiveDate,
    half_life: f64,
    warm: Option<&ShotModelParams>,
) -> Result<Fitted<ShotModelParams>> {
    if stats.total_shots() <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "no shot samples for {league_id} before {as_of}"
        )));
    }
    let teams = stats.teams().to_vec();
    let t = teams.len();
    let k = t - 1;

    let mut start = ShotModelParams::zeros(league_id, teams.clone(), half_life, as_of);
    if let Some(w) = warm {
        for (i, name) in teams.iter().enumerate() {
            if let Some(j) = w.team_index(name) {
                start.attack[i] = w.attack[j];
                start.defence[i] = w.defence[j];
            }
        }
        start.c = w.c;
        start.h = w.h;
        start.recenter();
    }
    let mut theta = Vec::with_capacity(2 * k + 2);
    theta.extend_from_slice(&start.attack[..k]);
    theta.extend_from_slice(&start.defence[..k]);
    theta.push(start.c);
    theta.push(start.h);

    let mut full_grad = vec![0.0; 2 * t + 2];
    let objective = |x: &[f64], g: &mut [f64]| {
        let (a, d, c, h) = expand(x, t);
        let v = stats.nll_full(&a, &d, c, h, &mut full_grad);
        // chain rule through the implied last ratings
        for i in 0..k {
            g[i] = full_grad[i] - full_grad[k];
            g[k + i] = full_grad[t + i] - full_grad[t + k];
        }
        g[2 * k] = full_grad[2 * t];
        g[2 * k + 1] = full_grad[2 * t + 1];
        v
    };
    let opts = BfgsOptions::default();
    let min = optim::bfgs(objective, &theta, opts);

    let (attack, defence, c, h) = expand(&min.x, t);
    let mut params = ShotModelParams {
        league_id: league_id.to_string(),
        team_order: teams,
        attack,
        defence,
        c,
        h,
        half_life_days: half_life,
        as_of_date: as_of,
    };
    params.recenter();
    if min.converged {
        Ok(Fitted::ok(params))
    } else {
        Ok(Fitted::warn(
            params,
            FitWarning::NotConverged {
                iterations: min.iterations,
            },
        ))
    }
}

/// Fit the model on `league_id` matches before `as_of`, starting from all
/// parameters at zero.
pub fn fit_shot_model(
    matches: &[MatchRecord],
    league_id: &str,
    as_of: NaiveDate,
    half_life: f64,
) -> Result<Fitted<ShotModelParams>> {
    let samples = samples_before(matches, league_id, as_of);
    let stats = ShotStats::from_samples(&samples, half_life)?;
    fit_from_stats(&stats, league_id, as_of, half_life, None)
}

/// Pooled goals over pooled shots for matches dated before `as_of`.
pub fn climatology(matches: &[MatchRecord], as_of: NaiveDate) -> Result<f64> {
    let (goals, shots) = matches
        .iter()
        .filter(|m| m.date < as_of && m.has_valid_shots())
        .fold((0u64, 0u64), |(g, s), m| {
            let (hs, aws) = m.shots().expect("checked");
            (g + m.total_goals() as u64, s + (hs + aws) as u64)
        });
    climatology_from_totals(goals, shots)
}

pub fn climatology_from_totals(goals: u64, shots: u64) -> Result<f64> {
    if shots == 0 {
        Err(Error::EmptyClimatology)
    } else {
        Ok(goals as f64 / shots as f64)
    }
}

/// Shot statistics maintained incrementally along a league's timeline.
///
/// Holds every added match weighted as of the current date; moving the date
/// forward decays all weights by `0.5^(elapsed / H)`.
#[derive(Debug, Clone)]
pub struct RollingShotStats {
    pub half_life: f64,
    stats: ShotStats,
    as_of: Option<NaiveDate>,
    goals: u64,
    shots: u64,
}

impl RollingShotStats {
    pub fn new(half_life: f64) -> Self {
        RollingShotStats {
            half_life,
            stats: ShotStats::default(),
            as_of: None,
            goals: 0,
            shots: 0,
        }
    }

    pub fn advance_to(&mut self, date: NaiveDate) -> Result<()> {
        if let Some(prev) = self.as_of {
            let days = (date - prev).num_days() as f64;
            self.stats.decay(time_weight(days, self.half_life)?);
        }
        self.as_of = Some(date);
        Ok(())
    }

    /// Add a match played on the current date. It is excluded from any fit
    /// until the date moves forward.
    pub fn add_match(&mut self, m: &MatchRecord) -> Result<()> {
        if self.as_of.is_some_and(|d| m.date > d) {
            return Err(Error::LookAhead(format!(
                "{} added after advancing only to {:?}",
                m.key(),
                self.as_of
            )));
        }
        if !m.has_valid_shots() {
            return Ok(());
        }
        let (hs, aws) = m.shots().expect("checked");
        let w = match self.as_of {
            Some(d) => time_weight((d - m.date).num_days() as f64, self.half_life)?,
            None => 1.0,
        };
        self.stats
            .add(&m.home_team, &m.away_team, Side::Home, hs, m.home_goals, w);
        self.stats
            .add(&m.away_team, &m.home_team, Side::Away, aws, m.away_goals, w);
        self.goals += m.total_goals() as u64;
        self.shots += (hs + aws) as u64;
        Ok(())
    }

    pub fn stats(&self) -> &ShotStats {
        &self.stats
    }

    pub fn climatology(&self) -> Result<f64> {
        climatology_from_totals(self.goals, self.shots)
    }
}

/// Teams with a rating in `params`, keyed by name.
pub fn ratings_table(params: &ShotModelParams) -> BTreeMap<String, (f64, f64)> {
    params
        .team_order
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), (params.attack[i], params.defence[i])))
        .collect()
}
