//! Expected-goals predictors and the regressions that map them to
//! match-outcome and over/under 2.5 probabilities.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FitWarning, Fitted, Result};
use crate::ingest::Outcome;
use crate::optim::{self, logistic, BfgsOptions};

/// Coefficients and cutpoints are capped at this magnitude under separation.
pub const COEF_CAP: f64 = 50.0;
/// Below this many training matches the regressions emit base rates.
pub const MIN_TRAINING_MATCHES: usize = 200;

/// Which shot-success probability the expected goals were built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorVariant {
    /// Team-specific shot-success probabilities.
    Model,
    /// The league climatology for both teams.
    Climatology,
}

impl PredictorVariant {
    pub fn name(self) -> &'static str {
        match self {
            PredictorVariant::Model => "model",
            PredictorVariant::Climatology => "climatology",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalExpectation {
    pub home: f64,
    pub away: f64,
    pub variant: PredictorVariant,
}

impl GoalExpectation {
    pub fn new(shots: (f64, f64), probs: (f64, f64), variant: PredictorVariant) -> GoalExpectation {
        GoalExpectation {
            home: expected_goals(shots.0, probs.0),
            away: expected_goals(shots.1, probs.1),
            variant,
        }
    }
}

/// Predicted shots times the probability that each is scored.
pub fn expected_goals(shots: f64, p: f64) -> f64 {
    shots * p
}

/// `E_h − E_a`, the match-outcome predictor.
pub fn outcome_predictor(e: &GoalExpectation) -> f64 {
    e.home - e.away
}

/// `E_h + E_a`, the total-goals predictor.
pub fn totals_predictor(e: &GoalExpectation) -> f64 {
    e.home + e.away
}

/// Probability vector for one forecast with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// (home, draw, away) or (over, under).
    pub probs: Vec<f64>,
    pub variant: PredictorVariant,
    pub as_of: NaiveDate,
}

/// Proportional-odds model with ordering Away < Draw < Home:
/// `P(Y ≤ k | x) = logistic(c_k − βᵀx)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedLogitParams {
    pub beta: Vec<f64>,
    pub cut_low: f64,
    pub cut_high: f64,
}

impl OrderedLogitParams {
    pub fn linear(&self, x: &[f64]) -> f64 {
        self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
    }
}

/// `logistic(b) − logistic(a)` for `b > a`, without cancellation.
fn logistic_diff(b: f64, a: f64) -> f64 {
    logistic(b) * logistic(-a) * -(a - b).exp_m1()
}

/// (p_home, p_draw, p_away).
pub fn predict_ordered_logit(params: &OrderedLogitParams, x: &[f64]) -> [f64; 3] {
    let eta = params.linear(x);
    let p_away = logistic(params.cut_low - eta);
    let p_home = logistic(eta - params.cut_high);
    let p_draw = logistic_diff(params.cut_high - eta, params.cut_low - eta);
    [p_home, p_draw, p_away]
}

fn ordered_rank(y: Outcome) -> usize {
    match y {
        Outcome::AwayWin => 0,
        Outcome::Draw => 1,
        Outcome::HomeWin => 2,
    }
}

/// Mean negative log-likelihood and its gradient with respect to
/// `(β..., c_low, c_high)`.
pub fn ordered_logit_nll(
    params: &OrderedLogitParams,
    xs: &[Vec<f64>],
    ys: &[Outcome],
) -> (f64, Vec<f64>) {
    let k = params.beta.len();
    let mut grad = vec![0.0; k + 2];
    let mut total = 0.0;
    let (c1, c2) = (params.cut_low, params.cut_high);
    for (x, &y) in xs.iter().zip(ys) {
        let eta = params.linear(x);
        // d(-ln L)/dη, /dc1, /dc2
        let (nll, d_eta, d_c1, d_c2) = match ordered_rank(y) {
            0 => {
                let s = logistic(c1 - eta);
                (-ln_floor(s), 1.0 - s, -(1.0 - s), 0.0)
            }
            2 => {
                let s = logistic(eta - c2);
                (-ln_floor(s), -(1.0 - s), 0.0, 1.0 - s)
            }
            _ => {
                let d = logistic_diff(c2 - eta, c1 - eta);
                let f1 = logistic(c1 - eta) * logistic(eta - c1);
                let f2 = logistic(c2 - eta) * logistic(eta - c2);
                let d = d.max(1e-300);
                (-ln_floor(d), (f2 - f1) / d, f1 / d, -f2 / d)
            }
        };
        total += nll;
        for (g, v) in grad[..k].iter_mut().zip(x) {
            *g += d_eta * v;
        }
        grad[k] += d_c1;
        grad[k + 1] += d_c2;
    }
    let n = xs.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (total / n, grad)
}

fn ln_floor(p: f64) -> f64 {
    p.max(1e-300).ln()
}

fn check_design(xs: &[Vec<f64>], n_y: usize, min_rows: usize) -> Result<usize> {
    if xs.len() != n_y {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: n_y,
        });
    }
    let k = xs.first().map_or(0, |x| x.len());
    if xs.iter().any(|x| x.len() != k) {
        return Err(Error::InvalidArgument("ragged predictor matrix".into()));
    }
    if xs.len() < min_rows.max(k + 3) {
        return Err(Error::InsufficientData(format!(
            "{} observations for {k} predictors",
            xs.len()
        )));
    }
    Ok(k)
}

/// Maximum-likelihood fit of the proportional-odds model by BFGS on
/// `(β, c_low, ln(c_high − c_low))`.
pub fn fit_ordered_logit(
    xs: &[Vec<f64>],
    ys: &[Outcome],
    warm: Option<&OrderedLogitParams>,
) -> Result<Fitted<OrderedLogitParams>> {
    let k = check_design(xs, ys.len(), 0)?;
    let mut counts = [0usize; 3];
    for &y in ys {
        counts[ordered_rank(y)] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::DegenerateOutcomes(format!(
            "away/draw/home counts {counts:?}"
        )));
    }
    let n = ys.len() as f64;
    let start = match warm {
        Some(w) if w.beta.len() == k && w.cut_high > w.cut_low => w.clone(),
        _ => OrderedLogitParams {
            beta: vec![0.0; k],
            cut_low: optim::logit(counts[0] as f64 / n),
            cut_high: optim::logit((counts[0] + counts[1]) as f64 / n),
        },
    };
    let decode = |u: &[f64]| OrderedLogitParams {
        beta: u[..k].to_vec(),
        cut_low: u[k],
        cut_high: u[k] + u[k + 1].exp(),
    };
    let mut u0 = start.beta.clone();
    u0.push(start.cut_low);
    u0.push((start.cut_high - start.cut_low).ln());

    let objective = |u: &[f64], g: &mut [f64]| {
        let p = decode(u);
        let (v, grad) = ordered_logit_nll(&p, xs, ys);
        g[..k].copy_from_slice(&grad[..k]);
        g[k] = grad[k] + grad[k + 1];
        g[k + 1] = grad[k + 1] * u[k + 1].exp();
        v
    };
    let min = optim::bfgs(
        objective,
        &u0,
        BfgsOptions {
            grad_tol: 1e-9,
            max_iterations: 200,
        },
    );
    let mut params = decode(&min.x);
    let exceeds = params.beta.iter().any(|b| b.abs() > COEF_CAP)
        || params.cut_low.abs() > COEF_CAP
        || params.cut_high.abs() > COEF_CAP;
    if exceeds {
        params
            .beta
            .iter_mut()
            .for_each(|b| *b = b.clamp(-COEF_CAP, COEF_CAP));
        params.cut_low = params.cut_low.clamp(-COEF_CAP, COEF_CAP);
        params.cut_high = params
            .cut_high
            .clamp(-COEF_CAP, COEF_CAP)
            .max(params.cut_low + 1e-9);
        return Ok(Fitted::warn(
            params,
            FitWarning::Separation { cap: COEF_CAP },
        ));
    }
    if !min.converged {
        return Ok(Fitted::warn(
            params,
            FitWarning::NotConverged {
                iterations: min.iterations,
            },
        ));
    }
    Ok(Fitted::ok(params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitParams {
    pub intercept: f64,
    pub beta: Vec<f64>,
}

pub fn predict_logit(params: &LogitParams, x: &[f64]) -> f64 {
    logistic(params.intercept + params.beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
}

/// Binary maximum-likelihood logistic regression by damped Newton steps.
pub fn fit_logit(
    xs: &[Vec<f64>],
    ys: &[bool],
    warm: Option<&LogitParams>,
) -> Result<Fitted<LogitParams>> {
    let k = check_design(xs, ys.len(), 1)?;
    let dim = k + 1;
    let n = ys.len() as f64;
    let positives = ys.iter().filter(|&&y| y).count();

    let mean_nll = |w: &[f64]| -> f64 {
        xs.iter()
            .zip(ys)
            .map(|(x, &y)| {
                let m = w[0] + w[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
                // -ln σ(±m) = ln(1 + e^{∓m})
                let z = if y { -m } else { m };
                softplus(z)
            })
            .sum::<f64>()
            / n
    };

    let mut w = match warm {
        Some(p) if p.beta.len() == k => {
            let mut v = vec![p.intercept];
            v.extend_from_slice(&p.beta);
            v
        }
        _ => {
            let rate = (positives as f64 / n).clamp(1e-6, 1.0 - 1e-6);
            let mut v = vec![0.0; dim];
            v[0] = optim::logit(rate);
            v
        }
    };
    let mut value = mean_nll(&w);
    let mut converged = false;
    let mut capped = false;
    for _ in 0..100 {
        let mut grad = vec![0.0; dim];
        let mut hess = vec![0.0; dim * dim];
        for (x, &y) in xs.iter().zip(ys) {
            let m = w[0] + w[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
            let p = logistic(m);
            let r = p - if y { 1.0 } else { 0.0 };
            let s = p * (1.0 - p);
            for a in 0..dim {
                let xa = if a == 0 { 1.0 } else { x[a - 1] };
                grad[a] += r * xa / n;
                for b in 0..dim {
                    let xb = if b == 0 { 1.0 } else { x[b - 1] };
                    hess[a * dim + b] += s * xa * xb / n;
                }
            }
        }
        if grad.iter().all(|g| g.abs() < 1e-12) {
            converged = true;
            break;
        }
        let trace: f64 = (0..dim).map(|i| hess[i * dim + i]).sum();
        for i in 0..dim {
            hess[i * dim + i] += 1e-12 * trace.max(1e-300);
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let step = optim::solve_linear(hess, neg.clone()).unwrap_or(neg);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> = w.iter().zip(&step).map(|(a, s)| a + t * s).collect();
            let v = mean_nll(&cand);
            if v <= value {
                let shift = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
                w = cand;
                value = v;
                moved = true;
                if shift < 1e-10 {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if w.iter().any(|v| v.abs() > COEF_CAP) {
            w.iter_mut().for_each(|v| *v = v.clamp(-COEF_CAP, COEF_CAP));
            capped = true;
            break;
        }
        if converged || !moved {
            converged = true;
            break;
        }
    }
    let params = LogitParams {
        intercept: w[0],
        beta: w[1..].to_vec(),
    };
    if capped || positives == 0 || positives == ys.len() {
        return Ok(Fitted::warn(
            params,
            FitWarning::Separation { cap: COEF_CAP },
        ));
    }
    if !converged {
        return Ok(Fitted::warn(
            params,
            FitWarning::NotConverged { iterations: 100 },
        ));
    }
    Ok(Fitted::ok(params))
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_ordered(params: &OrderedLogitParams, x: &[f64], rng: &mut impl Rng) -> Outcome {
        let [h, d, _] = predict_ordered_logit(params, x);
        let u: f64 = rng.random();
        if u < h {
            Outcome::HomeWin
        } else if u < h + d {
            Outcome::Draw
        } else {
            Outcome::AwayWin
        }
    }

    #[test]
    fn expected_goals_and_predictors() {
        assert!((expected_goals(12.0, 0.1) - 1.2).abs() < 1e-15);
        assert!(expected_goals(12.0, 1e-9) < 1e-7);
        assert!((expected_goals(11.9, 0.13011) - 1.548309).abs() < 1e-6);
        let e = GoalExpectation {
            home: 1.5,
            away: 1.2,
            variant: PredictorVariant::Model,
        };
        assert!((outcome_predictor(&e) - 0.3).abs() < 1e-12);
        assert!((totals_predictor(&e) - 2.7).abs() < 1e-12);
        let clim = GoalExpectation::new((11.0, 11.0), (0.1, 0.1), PredictorVariant::Climatology);
        assert_eq!(outcome_predictor(&clim), 0.0);
        let zero = GoalExpectation {
            home: 0.0,
            away: 0.0,
            variant: PredictorVariant::Model,
        };
        assert_eq!(totals_predictor(&zero), 0.0);
    }

    #[test]
    fn ordered_probabilities_hand_values() {
        let p = OrderedLogitParams {
            beta: vec![1.0],
            cut_low: -1.0,
            cut_high: 1.0,
        };
        let [h, d, a] = predict_ordered_logit(&p, &[0.0]);
        assert!((a - 0.268941).abs() < 1e-6);
        assert!((d - 0.462117).abs() < 1e-6);
        assert!((h - 0.268941).abs() < 1e-6);
        assert!((h - a).abs() < 1e-15);
        let [h, _, _] = predict_ordered_logit(&p, &[50.0]);
        assert!(h > 0.999);
    }

    #[test]
    fn missing_class_is_degenerate() {
        let xs = vec![vec![0.1]; 10];
        let ys = vec![Outcome::HomeWin; 5]
            .into_iter()
            .chain(vec![Outcome::Draw; 5])
            .collect::<Vec<_>>();
        assert!(matches!(
            fit_ordered_logit(&xs, &ys, None),
            Err(Error::DegenerateOutcomes(_))
        ));
    }

    #[test]
    fn uninformative_predictor_recovers_base_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth = OrderedLogitParams {
            beta: vec![0.0],
            cut_low: -1.0,
            cut_high: 0.2,
        };
        let xs: Vec<Vec<f64>> = (0..40_000)
            .map(|_| vec![rng.random_range(-1.0..1.0)])
            .collect();
        let ys: Vec<Outcome> = xs
            .iter()
            .map(|x| sample_ordered(&truth, x, &mut rng))
            .collect();
        let fit = fit_ordered_logit(&xs, &ys, None).unwrap();
        assert!(fit.warning.is_none(), "{:?}", fit.warning);
        assert!(fit.params.beta[0].abs() < 0.05);
        let n = ys.len() as f64;
        let freq = |o| ys.iter().filter(|&&y| y == o).count() as f64 / n;
        let probs = predict_ordered_logit(&fit.params, &[0.0]);
        assert!((probs[0] - freq(Outcome::HomeWin)).abs() < 0.01);
        assert!((probs[1] - freq(Outcome::Draw)).abs() < 0.01);
        assert!((probs[2] - freq(Outcome::AwayWin)).abs() < 0.01);
    }

    #[test]
    fn mirrored_data_mirror_the_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth = OrderedLogitParams {
            beta: vec![0.8],
            cut_low: -0.9,
            cut_high: 0.4,
        };
        let xs: Vec<Vec<f64>> = (0..5000)
            .map(|_| vec![rng.random_range(-2.0..2.0)])
            .collect();
        let ys: Vec<Outcome> = xs
            .iter()
            .map(|x| sample_ordered(&truth, x, &mut rng))
            .collect();
        let fit = fit_ordered_logit(&xs, &ys, None).unwrap().params;
        let xs_m: Vec<Vec<f64>> = xs.iter().map(|x| vec![-x[0]]).collect();
        let ys_m: Vec<Outcome> = ys
            .iter()
            .map(|y| match y {
                Outcome::HomeWin => Outcome::AwayWin,
                Outcome::AwayWin => Outcome::HomeWin,
                Outcome::Draw => Outcome::Draw,
            })
            .collect();
        let m = fit_ordered_logit(&xs_m, &ys_m, None).unwrap().params;
        assert!((m.beta[0] - fit.beta[0]).abs() < 1e-5);
        assert!((m.cut_low + fit.cut_high).abs() < 1e-5);
        assert!((m.cut_high + fit.cut_low).abs() < 1e-5);
    }

    #[test]
    fn logit_recovers_known_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let truth = LogitParams {
            intercept: -0.5,
            beta: vec![0.4],
        };
        let xs: Vec<Vec<f64>> = (0..100_000)
            .map(|_| vec![rng.random_range(-3.0..3.0)])
            .collect();
        let ys: Vec<bool> = xs
            .iter()
            .map(|x| rng.random::<f64>() < predict_logit(&truth, x))
            .collect();
        let fit = fit_logit(&xs, &ys, None).unwrap();
        assert!(fit.warning.is_none());
        assert!((fit.params.intercept + 0.5).abs() < 0.03);
        assert!((fit.params.beta[0] - 0.4).abs() < 0.03);
        assert_eq!(
            predict_logit(
                &LogitParams {
                    intercept: 0.0,
                    beta: vec![0.0]
                },
                &[3.0]
            ),
            0.5
        );
    }

    #[test]
    fn constant_outcome_is_capped() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 50.0]).collect();
        let fit = fit_logit(&xs, &[true; 50], None).unwrap();
        assert!(matches!(fit.warning, Some(FitWarning::Separation { .. })));
        assert!(predict_logit(&fit.params, &[0.5]) > 0.99);
        assert!(fit.params.intercept.abs() <= COEF_CAP);
    }

    proptest! {
        #[test]
        fn ordered_probabilities_sum_to_one(beta in -3.0f64..3.0, c1 in -3.0f64..1.0, gap in 0.01f64..3.0, x in -5.0f64..5.0) {
            let p = OrderedLogitParams { beta: vec![beta], cut_low: c1, cut_high: c1 + gap };
            let probs = predict_ordered_logit(&p, &[x]);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn positive_slope_is_home_favouring(beta in 0.05f64..3.0, x in -3.0f64..3.0, dx in 0.01f64..1.0) {
            let p = OrderedLogitParams { beta: vec![beta], cut_low: -0.8, cut_high: 0.5 };
            let lo = predict_ordered_logit(&p, &[x]);
            let hi = predict_ordered_logit(&p, &[x + dx]);
            prop_assert!(hi[0] > lo[0]);
            prop_assert!(hi[2] < lo[2]);
        }
    }
}
