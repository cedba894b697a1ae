//! Parsing of football-data.co.uk league-season CSV files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-time result of a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    HomeWin,
    Draw,
    AwayWin,
}

impl Outcome {
    pub fn from_goals(home: u32, away: u32) -> Self {
        match home.cmp(&away) {
            std::cmp::Ordering::Greater => Outcome::HomeWin,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::AwayWin,
        }
    }

    /// Position in the (home, draw, away) probability vector.
    pub fn index(self) -> usize {
        match self {
            Outcome::HomeWin => 0,
            Outcome::Draw => 1,
            Outcome::AwayWin => 2,
        }
    }

    /// Full-time result code: `H`, `D` or `A`.
    pub fn code(self) -> &'static str {
        match self {
            Outcome::HomeWin => "H",
            Outcome::Draw => "D",
            Outcome::AwayWin => "A",
        }
    }

    fn from_code(code: &str) -> Option<Self> {
        match code.trim() {
            "H" => Some(Outcome::HomeWin),
            "D" => Some(Outcome::Draw),
            "A" => Some(Outcome::AwayWin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Market {
    #[serde(rename = "1x2")]
    Match1X2,
    #[serde(rename = "ou25")]
    OverUnder25,
}

impl Market {
    pub fn name(self) -> &'static str {
        match self {
            Market::Match1X2 => "1x2",
            Market::OverUnder25 => "ou25",
        }
    }
}

impl std::str::FromStr for Market {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1x2" | "match1x2" | "match" => Ok(Market::Match1X2),
            "ou25" | "overunder25" | "totals" => Ok(Market::OverUnder25),
            other => Err(Error::Config(format!("unknown market {other:?}"))),
        }
    }
}

/// One parsed match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub league_id: String,
    pub season_id: String,
    /// Zero-based position of the data row in its source file.
    pub row: usize,
    pub date: NaiveDate,
    pub home_team: String,
    pub away_team: String,
    pub home_goals: u32,
    pub away_goals: u32,
    pub home_shots: Option<u32>,
    pub away_shots: Option<u32>,
    pub outcome: Outcome,
    /// Maximum decimal odds across bookmakers for (home, draw, away).
    pub odds_1x2: Option<[f64; 3]>,
    /// Maximum decimal odds across bookmakers for (over 2.5, under 2.5).
    pub odds_ou25: Option<[f64; 2]>,
}

impl MatchRecord {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.league_id, self.season_id, self.row)
    }

    /// Both teams' shot counts, when the row carried them.
    pub fn shots(&self) -> Option<(u32, u32)> {
        Some((self.home_shots?, self.away_shots?))
    }

    /// Shot data present and consistent with the goals (goals never exceed shots).
    pub fn has_valid_shots(&self) -> bool {
        self.shots()
            .is_some_and(|(hs, aws)| self.home_goals <= hs && self.away_goals <= aws)
    }

    pub fn total_goals(&self) -> u32 {
        self.home_goals + self.away_goals
    }

    pub fn over_25(&self) -> bool {
        self.total_goals() > 2
    }
}

/// Decimal odds for the requested market: (home, draw, away) or (over, under).
pub fn extract_odds(record: &MatchRecord, market: Market) -> Option<Vec<f64>> {
    match market {
        Market::Match1X2 => record.odds_1x2.map(|o| o.to_vec()),
        Market::OverUnder25 => record.odds_ou25.map(|o| o.to_vec()),
    }
}

/// Row-level tally for one or more parsed files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub files: usize,
    pub rows_read: usize,
    pub records: usize,
    pub blank_rows: usize,
    pub skipped_rows: usize,
    pub skip_reasons: BTreeMap<String, usize>,
    pub missing_shots: usize,
    pub goals_exceed_shots: usize,
    pub invalid_odds: usize,
    pub result_code_mismatch: usize,
}

impl Diagnostics {
    fn skip(&mut self, reason: &str) {
        self.skipped_rows += 1;
        *self.skip_reasons.entry(reason.to_string()).or_default() += 1;
    }

    pub fn merge(&mut self, other: &Diagnostics) {
        self.files += other.files;
        self.rows_read += other.rows_read;
        self.records += other.records;
        self.blank_rows += other.blank_rows;
        self.skipped_rows += other.skipped_rows;
        for (k, v) in &other.skip_reasons {
            *self.skip_reasons.entry(k.clone()).or_default() += v;
        }
        self.missing_shots += other.missing_shots;
        self.goals_exceed_shots += other.goals_exceed_shots;
        self.invalid_odds += other.invalid_odds;
        self.result_code_mismatch += other.result_code_mismatch;
    }
}

#[derive(Debug, Clone)]
pub struct ParsedFile {
    pub matches: Vec<MatchRecord>,
    pub diagnostics: Diagnostics,
}

struct Columns {
    date: usize,
    home: usize,
    away: usize,
    home_goals: usize,
    away_goals: usize,
    result: Option<usize>,
    home_shots: Option<usize>,
    away_shots: Option<usize>,
    odds_1x2: Option<[usize; 3]>,
    odds_ou25: Option<[usize; 2]>,
}

impl Columns {
    fn locate(header: &csv::StringRecord, source_name: &str) -> Result<Self> {
        let names: Vec<String> = header
            .iter()
            .map(|h| h.trim().trim_start_matches('\u{feff}').to_string())
            .collect();
        let find = |candidates: &[&str]| {
            candidates
                .iter()
                .find_map(|c| names.iter().position(|n| n == c))
        };
        let require = |candidates: &[&str]| {
            find(candidates).ok_or_else(|| Error::MalformedHeader {
                source_name: source_name.to_string(),
                column: candidates[0].to_string(),
            })
        };
        let triple = |a: &str, b: &str, c: &str| Some([find(&[a])?, find(&[b])?, find(&[c])?]);
        let pair = |a: &str, b: &str| Some([find(&[a])?, find(&[b])?]);
        Ok(Columns {
            date: require(&["Date"])?,
            home: require(&["HomeTeam", "HT"])?,
            away: require(&["AwayTeam", "AT"])?,
            home_goals: require(&["FTHG", "HG"])?,
            away_goals: require(&["FTAG", "AG"])?,
            result: find(&["FTR", "Res"]),
            home_shots: find(&["HS"]),
            away_shots: find(&["AS"]),
            odds_1x2: triple("BbMxH", "BbMxD", "BbMxA").or_else(|| triple("MaxH", "MaxD", "MaxA")),
            odds_ou25: pair("BbMx>2.5", "BbMx<2.5").or_else(|| pair("Max>2.5", "Max<2.5")),
        })
    }
}

/// Parse dates as written by the source: `DD/MM/YY` or `DD/MM/YYYY`.
pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    let year_len = s.rsplit('/').next()?.len();
    let fmt = if year_len == 4 {
        "%d/%m/%Y"
    } else {
        "%d/%m/%y"
    };
    NaiveDate::parse_from_str(s, fmt).ok()
}

enum OddsField<const N: usize> {
    Absent,
    Invalid,
    Valid([f64; N]),
}

fn read_odds<const N: usize>(row: &csv::StringRecord, cols: Option<[usize; N]>) -> OddsField<N> {
    let Some(cols) = cols else {
        return OddsField::Absent;
    };
    let mut out = [0.0; N];
    let mut any_missing = false;
    let mut invalid = false;
    for (slot, &c) in out.iter_mut().zip(cols.iter()) {
        let raw = row.get(c).unwrap_or("").trim();
        if raw.is_empty() {
            any_missing = true;
            continue;
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 1.0 => *slot = v,
            _ => invalid = true,
        }
    }
    if invalid {
        OddsField::Invalid
    } else if any_missing {
        OddsField::Absent
    } else {
        OddsField::Valid(out)
    }
}

fn read_count(row: &csv::StringRecord, col: Option<usize>) -> std::result::Result<Option<u32>, ()> {
    let Some(c) = col else { return Ok(None) };
    let raw = row.get(c).unwrap_or("").trim();
    if raw.is_empty() {
        return Ok(None);
    }
    // some files write counts as "12.0"
    if let Ok(v) = raw.parse::<u32>() {
        return Ok(Some(v));
    }
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 => Ok(Some(v as u32)),
        _ => Err(()),
    }
}

/// Parse one league-season CSV into match records, in file order.
pub fn parse_league_csv(raw: &[u8], league_id: &str, season_id: &str) -> Result<ParsedFile> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(raw);
    let header = reader.headers()?.clone();
    let source_name = format!("{league_id}/{season_id}");
    let cols = Columns::locate(&header, &source_name)?;

    let mut diagnostics = Diagnostics {
        files: 1,
        ..Default::default()
    };
    let mut matches = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        diagnostics.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(_) => {
                diagnostics.skip("unreadable row");
                continue;
            }
        };
        if row.iter().all(|f| f.trim().is_empty()) {
            diagnostics.blank_rows += 1;
            continue;
        }
        let Some(date) = row.get(cols.date).and_then(parse_date) else {
            diagnostics.skip("bad date");
            continue;
        };
        let home_team = row.get(cols.home).unwrap_or("").trim().to_string();
        let away_team = row.get(cols.away).unwrap_or("").trim().to_string();
        if home_team.is_empty() || away_team.is_empty() {
            diagnostics.skip("missing team");
            continue;
        }
        let goals = (
            read_count(&row, Some(cols.home_goals)),
            read_count(&row, Some(cols.away_goals)),
        );
        let (home_goals, away_goals) = match goals {
            (Ok(Some(h)), Ok(Some(a))) => (h, a),
            _ => {
                diagnostics.skip("missing goals");
                continue;
            }
        };
        let (home_shots, away_shots) = match (
            read_count(&row, cols.home_shots),
            read_count(&row, cols.away_shots),
        ) {
            (Ok(Some(h)), Ok(Some(a))) => (Some(h), Some(a)),
            _ => {
                diagnostics.missing_shots += 1;
                (None, None)
            }
        };
        let outcome = Outcome::from_goals(home_goals, away_goals);
        if let Some(code) = cols.result.and_then(|c| row.get(c)) {
            if Outcome::from_code(code).is_some_and(|o| o != outcome) {
                diagnostics.result_code_mismatch += 1;
            }
        }
        let odds_1x2 = match read_odds::<3>(&row, cols.odds_1x2) {
            OddsField::Valid(o) => Some(o),
            OddsField::Invalid => {
                diagnostics.invalid_odds += 1;
                None
            }
            OddsField::Absent => None,
        };
        let odds_ou25 = match read_odds::<2>(&row, cols.odds_ou25) {
            OddsField::Valid(o) => Some(o),
            OddsField::Invalid => {
                diagnostics.invalid_odds += 1;
                None
            }
            OddsField::Absent => None,
        };
        let record = MatchRecord {
            league_id: league_id.to_string(),
            season_id: season_id.to_string(),
            row: row_idx,
            date,
            home_team,
            away_team,
            home_goals,
            away_goals,
            home_shots,
            away_shots,
            outcome,
            odds_1x2,
            odds_ou25,
        };
        if record.shots().is_some() && !record.has_valid_shots() {
            diagnostics.goals_exceed_shots += 1;
        }
        matches.push(record);
    }
    diagnostics.records = matches.len();
    Ok(ParsedFile {
        matches,
        diagnostics,
    })
}

/// Per-season bookkeeping of each team's matches, used for burn-in flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeasonIndex {
    /// (league, season, team) → positions into the indexed match slice, chronological.
    pub team_matches: BTreeMap<(String, String, String), Vec<usize>>,
    /// Per match position: earlier same-season matches of (home team, away team).
    pub prior_counts: Vec<(u32, u32)>,
}

pub fn build_season_index(matches: &[MatchRecord]) -> SeasonIndex {
    let mut order: Vec<usize> = (0..matches.len()).collect();
    order.sort_by(|&a, &b| {
        let (ma, mb) = (&matches[a], &matches[b]);
        (&ma.league_id, &ma.season_id, ma.date, ma.row).cmp(&(
            &mb.league_id,
            &mb.season_id,
            mb.date,
            mb.row,
        ))
    });
    let mut team_matches: BTreeMap<(String, String, String), Vec<usize>> = BTreeMap::new();
    let mut prior_counts = vec![(0, 0); matches.len()];
    for i in order {
        let m = &matches[i];
        let mut count_for = |team: &str| {
            let list = team_matches
                .entry((m.league_id.clone(), m.season_id.clone(), team.to_string()))
                .or_default();
            let prior = list.len() as u32;
            list.push(i);
            prior
        };
        let home = count_for(&m.home_team);
        let away = count_for(&m.away_team);
        prior_counts[i] = (home, away);
    }
    SeasonIndex {
        team_matches,
        prior_counts,
    }
}

/// Either team has played fewer than `threshold` earlier matches this season.
pub fn is_burn_in(index: &SeasonIndex, position: usize, threshold: u32) -> bool {
    let (home, away) = index.prior_counts[position];
    home < threshold || away < threshold
}

/// All parsed matches below a data directory.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub matches: Vec<MatchRecord>,
    pub diagnostics: Diagnostics,
    pub per_league: BTreeMap<String, Diagnostics>,
}

impl Dataset {
    pub fn from_matches(matches: Vec<MatchRecord>) -> Self {
        let mut per_league: BTreeMap<String, Diagnostics> = BTreeMap::new();
        for m in &matches {
            per_league.entry(m.league_id.clone()).or_default().records += 1;
        }
        Dataset {
            diagnostics: Diagnostics {
                records: matches.len(),
                ..Default::default()
            },
            matches,
            per_league,
        }
    }

    pub fn shot_matches(&self) -> usize {
        self.matches.iter().filter(|m| m.shots().is_some()).count()
    }

    /// Shot-data matches outside every team's burn-in period.
    pub fn non_burn_in_shot_matches(&self, threshold: u32) -> usize {
        let index = build_season_index(&self.matches);
        self.matches
            .iter()
            .enumerate()
            .filter(|(i, m)| m.shots().is_some() && !is_burn_in(&index, *i, threshold))
            .count()
    }
}

/// Derive (league, season) from a file path. Nested layouts
/// (`<season>/<league>.csv`) take the season from the parent directory; flat
/// layouts use `<league>_<season>.csv`.
pub fn identify_file(path: &Path, root: &Path) -> Option<(String, String)> {
    let stem = path.file_stem()?.to_str()?;
    let nested = path.parent().filter(|p| *p != root);
    match nested {
        Some(parent) => Some((stem.to_string(), parent.file_name()?.to_str()?.to_string())),
        None => {
            let (league, season) = stem.split_once('_').or_else(|| stem.rsplit_once('-'))?;
            Some((league.to_string(), season.to_string()))
        }
    }
}

/// Parse every league-season CSV under `root`. Files whose names do not
/// identify a league and season are ignored with a log warning.
pub fn load_dir(root: &Path, leagues: Option<&[String]>) -> Result<Dataset> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        let is_csv = entry
            .path()
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if entry.file_type().is_file() && is_csv {
            files.push(entry.into_path());
        }
    }
    let jobs: Vec<(PathBuf, String, String)> = files
        .into_iter()
        .filter_map(|p| match identify_file(&p, root) {
            Some((league, season)) => Some((p, league, season)),
            None => {
                log::warn!("cannot identify league/season of {}", p.display());
                None
            }
        })
        .filter(|(_, league, _)| leagues.is_none_or(|ls| ls.iter().any(|l| l == league)))
        .collect();

    let parsed: Vec<Result<(String, ParsedFile)>> = jobs
        .par_iter()
        .map(|(path, league, season)| {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            Ok((league.clone(), parse_league_csv(&bytes, league, season)?))
        })
        .collect();

    let mut dataset = Dataset::default();
    for item in parsed {
        let (league, file) = item?;
        dataset.diagnostics.merge(&file.diagnostics);
        dataset
            .per_league
            .entry(league)
            .or_default()
            .merge(&file.diagnostics);
        dataset.matches.extend(file.matches);
    }
    Ok(dataset)
}
