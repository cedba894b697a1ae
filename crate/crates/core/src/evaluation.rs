//! Proper scoring rules, paired skill scores and reliability diagrams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shot_model::PROB_FLOOR;

/// Tolerance on `Σp = 1` for a valid forecast vector.
pub const SIMPLEX_TOL: f64 = 1e-9;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_REPLICATES: usize = 1000;

fn check_simplex(p: &[f64], y: usize) -> Result<()> {
    if p.is_empty() || y >= p.len() {
        return Err(Error::InvalidSimplex(format!(
            "outcome index {y} for {} categories",
            p.len()
        )));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidSimplex(format!(
            "component outside [0,1]: {p:?}"
        )));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidSimplex(format!("sums to {sum}")));
    }
    Ok(())
}

/// `Σ (p_i − o_i)²`.
pub fn brier(p: &[f64], y: usize) -> Result<f64> {
    check_simplex(p, y)?;
    Ok(p.iter()
        .enumerate()
        .map(|(i, &v)| {
            let o = if i == y { 1.0 } else { 0.0 };
            (v - o).powi(2)
        })
        .sum())
}

/// Ranked probability score: squared differences of the cumulative
/// forecast and outcome distributions over the first `r − 1` categories.
pub fn rps(p: &[f64], y: usize) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::InvalidSimplex(
            "RPS needs at least two categories".into(),
        ));
    }
    check_simplex(p, y)?;
    let mut cum_p = 0.0;
    let mut cum_o = 0.0;
    let mut total = 0.0;
    for (i, &v) in p[..p.len() - 1].iter().enumerate() {
        cum_p += v;
        if i == y {
            cum_o = 1.0;
        }
        total += (cum_p - cum_o).powi(2);
    }
    Ok(total)
}

/// `−log₂ p_y`, with `p_y` floored at `1e-9`.
pub fn ignorance(p: &[f64], y: usize) -> Result<f64> {
    check_simplex(p, y)?;
    Ok(ignorance_of(p[y]).0)
}

/// Ignorance of the probability given to the realized outcome, and whether
/// the floor was applied.
pub fn ignorance_of(p_y: f64) -> (f64, bool) {
    if p_y < PROB_FLOOR {
        (-PROB_FLOOR.log2(), true)
    } else {
        (-p_y.log2(), false)
    }
}

/// `mean(model) − mean(baseline)` over paired scores; negative favours the model.
pub fn relative_skill(model: &[f64], baseline: &[f64]) -> Result<f64> {
    if model.len() != baseline.len() {
        return Err(Error::LengthMismatch {
            left: model.len(),
            right: baseline.len(),
        });
    }
    if model.is_empty() {
        return Err(Error::InsufficientData("no paired scores".into()));
    }
    let n = model.len() as f64;
    Ok(model.iter().zip(baseline).map(|(m, b)| m - b).sum::<f64>() / n)
}

/// Streaming mean of weighted scores.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreAccumulator {
    pub total: f64,
    pub weight: f64,
}

impl ScoreAccumulator {
    pub fn add(&mut self, score: f64, weight: f64) {
        self.total += score * weight;
        self.weight += weight;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.weight > 0.0).then(|| self.total / self.weight)
    }
}

/// A binary forecast with `trials` independent outcomes, `successes` of
/// which occurred. Single events use `trials = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryForecast {
    pub p: f64,
    pub trials: u32,
    pub successes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub mean_forecast: f64,
    pub observed_frequency: f64,
    pub count: usize,
    pub bar_low: f64,
    pub bar_high: f64,
}

impl ReliabilityBin {
    pub fn is_consistent(&self) -> bool {
        self.observed_frequency >= self.bar_low && self.observed_frequency <= self.bar_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDiagram {
    pub requested_bins: usize,
    pub replicates: usize,
    pub seed: u64,
    pub bins: Vec<ReliabilityBin>,
    /// Set when tied forecasts left fewer populated bins than requested.
    pub warning: Option<String>,
}

/// Reliability diagram for single binary events.
pub fn reliability_diagram(
    forecasts: &[(f64, bool)],
    n_bins: usize,
    seed: u64,
) -> Result<ReliabilityDiagram> {
    let items: Vec<BinaryForecast> = forecasts
        .iter()
        .map(|&(p, o)| BinaryForecast {
            p,
            trials: 1,
            successes: o as u32,
        })
        .collect();
    reliability_diagram_binomial(&items, n_bins, DEFAULT_REPLICATES, seed)
}

/// Equal-count bins by forecast value; per bin the trial-weighted mean
/// forecast, the observed frequency and a Monte Carlo 95% consistency
/// interval obtained by resampling outcomes at the forecast probabilities.
/// Tied forecasts never straddle a bin edge.
pub fn reliability_diagram_binomial(
    forecasts: &[BinaryForecast],
    n_bins: usize,
    replicates: usize,
    seed: u64,
) -> Result<ReliabilityDiagram> {
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    if forecasts.len() < n_bins {
        return Err(Error::InsufficientData(format!(
            "{} forecasts for {n_bins} bins",
            forecasts.len()
        )));
    }
    let mut sorted: Vec<BinaryForecast> =
        forecasts.iter().copied().filter(|f| f.trials > 0).collect();
    sorted.sort_by(|a, b| a.p.total_cmp(&b.p));
    let n = sorted.len();

    let mut edges = vec![0usize];
    for b in 1..n_bins {
        let mut cut = b * n / n_bins;
        let last = *edges.last().expect("non-empty");
        cut = cut.max(last);
        while cut > 0 && cut < n && sorted[cut].p == sorted[cut - 1].p {
            cut += 1;
        }
        if cut > last && cut < n {
            edges.push(cut);
        }
    }
    edges.push(n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bins = Vec::new();
    for w in edges.windows(2) {
        let chunk = &sorted[w[0]..w[1]];
        if chunk.is_empty() {
            continue;
        }
        let trials: f64 = chunk.iter().map(|f| f.trials as f64).sum();
        let mean_forecast = chunk.iter().map(|f| f.p * f.trials as f64).sum::<f64>() / trials;
        let observed = chunk.iter().map(|f| f.successes as f64).sum::<f64>() / trials;
        let mut simulated: Vec<f64> = (0..replicates)
            .map(|_| {
                let hits: u64 = chunk
                    .iter()
                    .map(|f| draw_binomial(&mut rng, f.trials, f.p))
                    .sum();
                hits as f64 / trials
            })
            .collect();
        simulated.sort_by(f64::total_cmp);
        bins.push(ReliabilityBin {
            mean_forecast,
            observed_frequency: observed,
            count: chunk.len(),
            bar_low: percentile(&simulated, 0.025),
            bar_high: percentile(&simulated, 0.975),
        });
    }
    let warning = (bins.len() < n_bins).then(|| {
        format!(
            "tied forecasts: {} populated bins of {n_bins} requested",
            bins.len()
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(ReliabilityDiagram {
        requested_bins: n_bins,
        replicates,
        seed,
        bins,
        warning,
    })
}

fn draw_binomial(rng: &mut ChaCha8Rng, trials: u32, p: f64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    if trials == 1 {
        return (rng.random::<f64>() < p) as u64;
    }
    Binomial::new(trials as u64, p)
        .map(|d| d.sample(rng))
        .unwrap_or(0)
}

/// Linear-interpolated percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brier_hand_values() {
        assert_eq!(brier(&[1.0, 0.0], 0).unwrap(), 0.0);
        assert!((brier(&[0.5, 0.3, 0.2], 0).unwrap() - 0.38).abs() < 1e-12);
        for r in 2..6 {
            let u = vec![1.0 / r as f64; r];
            for y in 0..r {
                let expect = (r as f64 - 1.0) / r as f64;
                assert!((brier(&u, y).unwrap() - expect).abs() < 1e-12);
            }
        }
        assert!(brier(&[0.5, 0.6], 0).is_err());
        assert!(brier(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn binary_brier_is_twice_squared_error() {
        for &(p, o) in &[(0.3, 0usize), (0.8, 1), (0.55, 0)] {
            let o1 = if o == 0 { 1.0 } else { 0.0 };
            let b = brier(&[p, 1.0 - p], o).unwrap();
            assert!((b - 2.0 * (p - o1) * (p - o1)).abs() < 1e-12);
        }
    }

    #[test]
    fn rps_hand_values_and_ordering() {
        assert_eq!(rps(&[1.0, 0.0, 0.0], 0).unwrap(), 0.0);
        assert!((rps(&[0.5, 0.3, 0.2], 0).unwrap() - 0.29).abs() < 1e-12);
        assert!((rps(&[1.0, 0.0, 0.0], 2).unwrap() - 2.0).abs() < 1e-12);
        // mass next to the outcome beats mass two categories away
        let near = rps(&[0.0, 1.0, 0.0], 2).unwrap();
        let far = rps(&[1.0, 0.0, 0.0], 2).unwrap();
        assert!(near < far);
        assert!(rps(&[1.0], 0).is_err());
    }

    #[test]
    fn ignorance_hand_values() {
        assert!((ignorance(&[0.5, 0.5], 0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ignorance(&[1.0, 0.0], 0).unwrap(), 0.0);
        assert!((ignorance(&[0.25, 0.75], 0).unwrap() - 2.0).abs() < 1e-12);
        let (v, clamped) = ignorance_of(0.0);
        assert!(clamped && (v - 1e9f64.log2()).abs() < 1e-9);
    }

    #[test]
    fn ignorance_is_invariant_to_relabelling_but_rps_is_not() {
        let p = [0.6, 0.3, 0.1];
        let q = [0.1, 0.3, 0.6];
        assert_eq!(ignorance(&p, 0).unwrap(), ignorance(&q, 2).unwrap());
        let swapped = [0.3, 0.6, 0.1];
        assert_eq!(ignorance(&p, 0).unwrap(), ignorance(&swapped, 1).unwrap());
        assert_ne!(rps(&p, 0).unwrap(), rps(&swapped, 1).unwrap());
    }

    #[test]
    fn relative_skill_contract() {
        assert_eq!(relative_skill(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // perfect binary forecasts against a coin flip: 0 − 1 bit
        let model = [ignorance(&[1.0, 0.0], 0).unwrap(); 4];
        let base = [ignorance(&[0.5, 0.5], 0).unwrap(); 4];
        assert!((relative_skill(&model, &base).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(
            relative_skill(&[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn miscalibrated_constant_forecast_sits_above_bars() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<(f64, bool)> = (0..5000)
            .map(|_| (0.1, rng.random::<f64>() < 0.3))
            .collect();
        let d = reliability_diagram(&data, 10, 7).unwrap();
        assert_eq!(d.bins.len(), 1);
        assert!(d.warning.is_some());
        assert!(d.bins.iter().all(|b| b.observed_frequency > b.bar_high));
    }

    #[test]
    fn bins_partition_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<(f64, bool)> = (0..1234)
            .map(|_| {
                let p: f64 = rng.random();
                (p, rng.random::<f64>() < p)
            })
            .collect();
        let d = reliability_diagram(&data, 10, 3).unwrap();
        assert_eq!(d.bins.len(), 10);
        assert_eq!(d.bins.iter().map(|b| b.count).sum::<usize>(), 1234);
        assert!(d
            .bins
            .windows(2)
            .all(|w| w[0].mean_forecast <= w[1].mean_forecast));
        assert!(d.bins.iter().all(|b| b.bar_low <= b.bar_high));
    }

    #[test]
    fn reliability_argument_checks() {
        assert!(reliability_diagram(&[(0.5, true); 20], 1, 0).is_err());
        assert!(reliability_diagram(&[(0.5, true); 3], 10, 0).is_err());
    }

    #[test]
    fn seeded_bars_are_reproducible() {
        let data: Vec<(f64, bool)> = (0..200).map(|i| (i as f64 / 200.0, i % 3 == 0)).collect();
        let a = reliability_diagram(&data, 5, 42).unwrap();
        let b = reliability_diagram(&data, 5, 42).unwrap();
        assert_eq!(a, b);
    }
}
