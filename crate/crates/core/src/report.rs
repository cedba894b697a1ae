//! Report files: CSV for row data, JSON for summaries. Every float is
//! written with at most 9 significant digits so reruns diff cleanly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::evaluation::ReliabilityDiagram;
use crate::ingest::Market;
use crate::pipeline::{RunReport, RunSummary, SweepReport};

pub const SIGNIFICANT_DIGITS: usize = 9;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

pub fn fmt_float(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with floats rounded to 9 significant digits.
pub fn to_rounded_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn csv_text(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}

fn opt_float(v: Option<&f64>) -> String {
    v.map(|x| fmt_float(*x)).unwrap_or_default()
}

pub fn reliability_csv(diagram: &ReliabilityDiagram) -> Result<String> {
    csv_text(
        &[
            "bin_mean_forecast",
            "observed_freq",
            "count",
            "bar_low",
            "bar_high",
        ],
        diagram.bins.iter().map(|b| {
            vec![
                fmt_float(b.mean_forecast),
                fmt_float(b.observed_frequency),
                b.count.to_string(),
                fmt_float(b.bar_low),
                fmt_float(b.bar_high),
            ]
        }),
    )
}

pub fn forecasts_csv(report: &RunReport) -> Result<String> {
    csv_text(
        &[
            "match_key",
            "league",
            "date",
            "market",
            "variant",
            "odds_predictor",
            "predictor",
            "p1",
            "p2",
            "p3",
            "odds1",
            "odds2",
            "odds3",
            "outcome",
            "burn_in",
            "evaluated",
            "fallback",
        ],
        report.forecasts.iter().map(|f| {
            vec![
                f.match_key.clone(),
                f.league_id.clone(),
                f.date.to_string(),
                f.market.name().into(),
                f.variant.name().into(),
                f.odds_predictor.to_string(),
                fmt_float(f.predictor),
                opt_float(f.probs.first()),
                opt_float(f.probs.get(1)),
                opt_float(f.probs.get(2)),
                opt_float(f.odds.first()),
                opt_float(f.odds.get(1)),
                opt_float(f.odds.get(2)),
                f.outcome.to_string(),
                f.burn_in.to_string(),
                f.evaluated.to_string(),
                f.fallback.to_string(),
            ]
        }),
    )
}

pub fn shot_forecasts_csv(report: &RunReport) -> Result<String> {
    csv_text(
        &[
            "match_key",
            "date",
            "side",
            "predicted_shots",
            "shots",
            "goals",
            "p_raw",
            "p_blend",
            "p_platt",
            "p_c",
            "evaluated",
        ],
        report.shot_forecasts.iter().map(|s| {
            vec![
                s.match_key.clone(),
                s.date.to_string(),
                format!("{:?}", s.side).to_lowercase(),
                fmt_float(s.predicted_shots),
                s.shots.to_string(),
                s.goals.to_string(),
                fmt_float(s.p_raw),
                fmt_float(s.p_blend),
                fmt_float(s.p_platt),
                fmt_float(s.p_c),
                s.evaluated.to_string(),
            ]
        }),
    )
}

pub fn ledger_csv(report: &RunReport, market: Market) -> Result<String> {
    csv_text(
        &[
            "regression",
            "strategy",
            "match_key",
            "market",
            "outcome",
            "odds",
            "fraction",
            "stake",
            "result",
            "profit",
        ],
        report
            .ledger
            .iter()
            .filter(|r| r.record.market == market)
            .map(|r| {
                vec![
                    r.regression.clone(),
                    serde_json::to_value(r.strategy)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                    r.record.match_key.clone(),
                    market.name().into(),
                    r.record.outcome_index.to_string(),
                    fmt_float(r.record.odds),
                    fmt_float(r.record.fraction),
                    fmt_float(r.record.stake),
                    format!("{:?}", r.record.result).to_lowercase(),
                    fmt_float(r.record.profit),
                ]
            }),
    )
}

/// Write every file of a backtest into `dir` and return their paths.
pub fn write_run_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = vec![
        write_file(
            &dir.join("evaluation.json"),
            &to_rounded_json(&report.summary)?,
        )?,
        write_file(
            &dir.join("betting.json"),
            &to_rounded_json(&report.summary.betting)?,
        )?,
        write_file(&dir.join("forecasts.csv"), &forecasts_csv(report)?)?,
        write_file(
            &dir.join("shot_forecasts.csv"),
            &shot_forecasts_csv(report)?,
        )?,
    ];
    for (name, diagram) in &report.reliability {
        written.push(write_file(
            &dir.join(format!("reliability_{name}.csv")),
            &reliability_csv(diagram)?,
        )?);
    }
    if !report.reliability.is_empty() {
        written.push(write_file(
            &dir.join("reliability.json"),
            &to_rounded_json(&report.reliability)?,
        )?);
    }
    let mut markets: Vec<Market> = report.summary.betting.iter().map(|b| b.market).collect();
    markets.dedup();
    for market in markets {
        written.push(write_file(
            &dir.join(format!("bets_{}.csv", market.name())),
            &ledger_csv(report, market)?,
        )?);
    }
    Ok(written)
}

pub fn sweep_csv(sweep: &SweepReport) -> Result<String> {
    let mut rows = Vec::new();
    for p in &sweep.points {
        let h = fmt_float(p.half_life);
        for s in &p.shot_scores {
            for (metric, v) in [
                ("mean_ignorance", s.mean_ignorance),
                ("mean_brier", s.mean_brier),
                ("relative_ignorance", s.relative_ignorance),
                ("relative_brier", s.relative_brier),
            ] {
                rows.push(vec![
                    h.clone(),
                    format!("shot-{}", s.forecast),
                    metric.into(),
                    fmt_float(v),
                ]);
            }
        }
        for s in &p.market_scores {
            for (metric, v) in [
                ("mean_ignorance", s.mean_ignorance),
                ("mean_brier", s.mean_brier),
                ("mean_rps", s.mean_rps),
                ("relative_ignorance", s.relative_ignorance),
                ("relative_brier", s.relative_brier),
                ("relative_rps", s.relative_rps),
            ] {
                rows.push(vec![
                    h.clone(),
                    s.regression.clone(),
                    metric.into(),
                    fmt_float(v),
                ]);
            }
        }
        for b in &p.betting {
            let strategy = serde_json::to_value(b.strategy)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            rows.push(vec![
                h.clone(),
                b.regression.clone(),
                format!("profit_{strategy}"),
                fmt_float(b.total_profit),
            ]);
        }
    }
    csv_text(
        &["half_life", "series", "metric", "value"],
        rows.into_iter(),
    )
}

pub fn write_sweep_report(sweep: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(vec![
        write_file(&dir.join("sweep.json"), &to_rounded_json(sweep)?)?,
        write_file(&dir.join("sweep.csv"), &sweep_csv(sweep)?)?,
    ])
}

pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let path = dir.join("evaluation.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Plain-text digest of a run summary.
pub fn render_summary(s: &RunSummary) -> String {
    let mut out = String::new();
    let c = &s.counts;
    let _ = writeln!(
        out,
        "half-life {} days, calibrator {:?}, {} leagues",
        s.half_life,
        s.calibrator,
        s.leagues.len()
    );
    let _ = writeln!(
        out,
        "matches: {} records, {} with shots, {} forecast, {} evaluated ({} burn-in, {} GAP training)",
        c.records, c.shot_matches, c.forecast_matches, c.evaluated_matches, c.burn_in, c.training_period
    );
    let _ = writeln!(
        out,
        "\nshot forecasts        ign/shot   rel ign   rel brier"
    );
    for sc in &s.shot_scores {
        let _ = writeln!(
            out,
            "  {:<18} {:>9.5} {:>9.5} {:>11.6}",
            sc.forecast, sc.mean_ignorance, sc.relative_ignorance, sc.relative_brier
        );
    }
    let _ = writeln!(
        out,
        "\nregression              ign    rel ign    rel rps  matches"
    );
    for m in &s.market_scores {
        let _ = writeln!(
            out,
            "  {:<18} {:>7.4} {:>10.5} {:>10.5} {:>8}",
            m.regression, m.mean_ignorance, m.relative_ignorance, m.relative_rps, m.matches
        );
    }
    let _ = writeln!(
        out,
        "\nbetting                 strategy      bets     profit"
    );
    for b in &s.betting {
        let _ = writeln!(
            out,
            "  {:<18} {:>12} {:>8} {:>10.2}",
            b.regression,
            format!("{:?}", b.strategy),
            b.bets_placed,
            b.total_profit
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_nine_significant_digits() {
        assert_eq!(round_sig(0.123456789123), 0.123456789);
        assert_eq!(round_sig(123456.7891234), 123456.789);
        assert_eq!(round_sig(-2.0), -2.0);
        assert_eq!(round_sig(0.0), 0.0);
        assert_eq!(fmt_float(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_float(2.5e-12), "0.0000000000025");
    }

    #[test]
    fn json_numbers_are_rounded_recursively() {
        let v = serde_json::json!({"a": [1.0 / 3.0, {"b": 2.0 / 3.0}], "n": 7});
        let s = to_rounded_json(&v).unwrap();
        assert!(s.contains("0.333333333") && s.contains("0.666666667"));
        assert!(s.contains("\"n\": 7"));
    }
}
