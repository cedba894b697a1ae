//! Level Stakes and normalized Kelly value betting against decimal odds.
//!
//! Both strategies bet on an outcome exactly when the forecast probability
//! exceeds the odds-implied probability `1/o`. Kelly stakes are rescaled so
//! that their mean over all bets placed in a backtest is one, which makes the
//! two strategies' totals directly comparable. That rescaling uses the whole
//! bet list, so it is an evaluation convention rather than a tradable rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Market;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KellyNumerator {
    /// `(o·p − 1) / (o − 1)`.
    #[default]
    Standard,
    /// `(o + p − 1) / (o − 1)`. Stakes even without an edge; kept for comparison.
    AsPrinted,
}

impl std::str::FromStr for KellyNumerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "standard" => Ok(KellyNumerator::Standard),
            "as_printed" => Ok(KellyNumerator::AsPrinted),
            other => Err(Error::Config(format!("unknown kelly numerator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    LevelStakes,
    Kelly,
}

pub fn odds_implied(odds: f64) -> Result<f64> {
    check_odds(odds)?;
    Ok(1.0 / odds)
}

fn check_odds(odds: f64) -> Result<()> {
    if odds > 1.0 && odds.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "decimal odds must exceed 1, got {odds}"
        )))
    }
}

/// Bet iff the forecast strictly exceeds the implied probability.
pub fn level_stakes_decide(p: f64, implied: f64) -> bool {
    p > implied
}

pub fn kelly_fraction(p: f64, odds: f64, numerator: KellyNumerator) -> Result<f64> {
    check_odds(odds)?;
    let num = match numerator {
        KellyNumerator::Standard => odds * p - 1.0,
        KellyNumerator::AsPrinted => odds + p - 1.0,
    };
    Ok((num / (odds - 1.0)).max(0.0))
}

/// Rescale fractions so their mean is exactly one.
pub fn normalize_stakes(fractions: &[f64]) -> Result<Vec<f64>> {
    if fractions.iter().any(|f| *f < 0.0 || !f.is_finite()) {
        return Err(Error::InvalidArgument(
            "stake fractions must be finite and non-negative".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || total <= 0.0 {
        return Err(Error::NoBetsPlaced);
    }
    let k = fractions.len() as f64 / total;
    Ok(fractions.iter().map(|f| f * k).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetResult {
    Won,
    Lost,
}

/// A bet before stakes are finalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetDraft {
    pub match_key: String,
    pub market: Market,
    pub outcome_index: usize,
    pub odds: f64,
    /// Raw Kelly fraction.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetRecord {
    pub match_key: String,
    pub market: Market,
    pub outcome_index: usize,
    pub odds: f64,
    pub fraction: f64,
    pub stake: f64,
    pub result: BetResult,
    pub profit: f64,
}

impl BetRecord {
    pub fn settle(draft: &BetDraft, stake: f64, won: bool) -> Self {
        let (result, profit) = if won {
            (BetResult::Won, stake * (draft.odds - 1.0))
        } else {
            (BetResult::Lost, -stake)
        };
        BetRecord {
            match_key: draft.match_key.clone(),
            market: draft.market,
            outcome_index: draft.outcome_index,
            odds: draft.odds,
            fraction: draft.fraction,
            stake,
            result,
            profit,
        }
    }
}

/// Value bets on every outcome whose forecast beats the odds.
pub fn draft_bets(
    match_key: &str,
    market: Market,
    probs: &[f64],
    odds: &[f64],
    numerator: KellyNumerator,
) -> Result<Vec<BetDraft>> {
    if probs.len() != odds.len() {
        return Err(Error::LengthMismatch {
            left: probs.len(),
            right: odds.len(),
        });
    }
    let mut out = Vec::new();
    for (i, (&p, &o)) in probs.iter().zip(odds).enumerate() {
        if level_stakes_decide(p, odds_implied(o)?) {
            out.push(BetDraft {
                match_key: match_key.to_string(),
                market,
                outcome_index: i,
                odds: o,
                fraction: kelly_fraction(p, o, numerator)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    pub bets: Vec<BetRecord>,
    pub cumulative_profit: Vec<f64>,
    pub total_profit: f64,
    pub bets_placed: usize,
}

/// Settle drafts with explicit stakes. `outcomes[i]` is the realized outcome
/// index for draft `i`. Zero-stake bets are not counted as placed.
pub fn settle(
    drafts: &[BetDraft],
    stakes: &[f64],
    outcomes: &[Option<usize>],
) -> Result<Settlement> {
    if drafts.len() != stakes.len() || drafts.len() != outcomes.len() {
        return Err(Error::LengthMismatch {
            left: drafts.len(),
            right: stakes.len().min(outcomes.len()),
        });
    }
    let mut bets = Vec::with_capacity(drafts.len());
    let mut cumulative_profit = Vec::with_capacity(drafts.len());
    let mut total = 0.0;
    let mut placed = 0;
    for ((draft, &stake), outcome) in drafts.iter().zip(stakes).zip(outcomes) {
        let outcome = outcome.ok_or_else(|| Error::MissingOutcome(draft.match_key.clone()))?;
        if stake < 0.0 {
            return Err(Error::InvalidArgument(format!("negative stake {stake}")));
        }
        let record = BetRecord::settle(draft, stake, outcome == draft.outcome_index);
        if stake > 0.0 {
            placed += 1;
        }
        total += record.profit;
        cumulative_profit.push(total);
        bets.push(record);
    }
    Ok(Settlement {
        bets,
        cumulative_profit,
        total_profit: total,
        bets_placed: placed,
    })
}

/// Stakes for one strategy over a full bet list: unit stakes for Level
/// Stakes, normalized fractions for Kelly.
pub fn strategy_stakes(drafts: &[BetDraft], strategy: Strategy) -> Result<Vec<f64>> {
    match strategy {
        Strategy::LevelStakes => Ok(vec![1.0; drafts.len()]),
        Strategy::Kelly => {
            if drafts.is_empty() {
                return Ok(Vec::new());
            }
            let fractions: Vec<f64> = drafts.iter().map(|d| d.fraction).collect();
            normalize_stakes(&fractions)
        }
    }
}
