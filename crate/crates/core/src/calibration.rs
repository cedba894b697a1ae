//! Recalibration of raw shot-success forecasts: Platt scaling and blending
//! with the climatology.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FitWarning, Fitted, Result};
use crate::optim::{self, logistic};
use crate::shot_model::clamp_prob;

/// Calibrators stay inactive (forecasts fall back to the climatology) until
/// this many team-match samples are available.
pub const MIN_CALIBRATION_SAMPLES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Calibrator {
    #[default]
    Blend,
    Platt,
    None,
}

impl std::str::FromStr for Calibrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blend" => Ok(Calibrator::Blend),
            "platt" => Ok(Calibrator::Platt),
            "none" => Ok(Calibrator::None),
            other => Err(Error::Config(format!("unknown calibrator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    #[serde(rename = "A")]
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendParams {
    pub alpha: f64,
}

/// Binomial outcome of a team's shots in one match with the forecast `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotForecast {
    pub p: f64,
    pub shots: u32,
    pub goals: u32,
}

/// A raw forecast paired with the climatology it is blended against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendSample {
    pub p: f64,
    pub p_c: f64,
    pub shots: u32,
    pub goals: u32,
}

/// `1 / (1 + exp(A + b·p))`. A negative `b` gives an increasing map.
pub fn platt_scale(p: f64, params: PlattParams) -> f64 {
    logistic(-(params.a + params.b * p))
}

/// Maximum-likelihood Platt parameters under the per-shot binomial
/// likelihood, by damped Newton iteration.
pub fn fit_platt(
    forecasts: &[ShotForecast],
    warm: Option<PlattParams>,
) -> Result<Fitted<PlattParams>> {
    let (goals, shots) = forecasts.iter().fold((0u64, 0u64), |(g, s), f| {
        (g + f.goals as u64, s + f.shots as u64)
    });
    if shots == 0 {
        return Err(Error::InsufficientData("no shots to calibrate on".into()));
    }
    let rate = clamp_prob(goals as f64 / shots as f64);
    let constant = PlattParams {
        a: -optim::logit(rate),
        b: 0.0,
    };
    if goals == 0 || goals == shots {
        return Ok(Fitted::warn(
            constant,
            FitWarning::Degenerate(format!("{goals} goals from {shots} shots")),
        ));
    }

    let scale = 1.0 / shots as f64;
    let nll = |x: PlattParams| -> f64 {
        forecasts
            .iter()
            .map(|f| {
                let q = clamp_prob(platt_scale(f.p, x));
                -(f.goals as f64 * q.ln() + (f.shots - f.goals) as f64 * (1.0 - q).ln())
            })
            .sum::<f64>()
            * scale
    };

    let mut x = warm.unwrap_or(constant);
    let mut value = nll(x);
    for _ in 0..100 {
        // gradient and Hessian of the mean negative log-likelihood in (A, b)
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for f in forecasts {
            let n = f.shots as f64;
            if n == 0.0 {
                continue;
            }
            let q = platt_scale(f.p, x);
            let r = f.goals as f64 - n * q;
            ga += r;
            gb += r * f.p;
            let w = n * q * (1.0 - q);
            haa += w;
            hab += w * f.p;
            hbb += w * f.p * f.p;
        }
        let (ga, gb) = (ga * scale, gb * scale);
        let (haa, hab, hbb) = (haa * scale, hab * scale, hbb * scale);
        if ga.abs().max(gb.abs()) < 1e-12 {
            return Ok(Fitted::ok(x));
        }
        let ridge = 1e-12 * (haa + hbb);
        let step = optim::solve_linear(vec![haa + ridge, hab, hab, hbb + ridge], vec![-ga, -gb])
            .unwrap_or([-ga, -gb].to_vec());
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand = PlattParams {
                a: x.a + t * step[0],
                b: x.b + t * step[1],
            };
            let v = nll(cand);
            if v <= value {
                let shift = (t * step[0]).abs().max((t * step[1]).abs());
                x = cand;
                value = v;
                moved = true;
                if shift < 1e-10 {
                    return Ok(Fitted::ok(x));
                }
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // stalled at working precision
            return Ok(Fitted::ok(x));
        }
    }
    Ok(Fitted::warn(
        x,
        FitWarning::NotConverged { iterations: 100 },
    ))
}

/// `α·p + (1−α)·p_c`.
pub fn blend(p: f64, p_c: f64, params: BlendParams) -> f64 {
    params.alpha * p + (1.0 - params.alpha) * p_c
}

/// Mean ignorance per shot, in bits, of the blended forecasts.
pub fn blend_objective(samples: &[BlendSample], alpha: f64) -> f64 {
    let params = BlendParams { alpha };
    let mut total = 0.0;
    let mut shots = 0.0;
    for s in samples {
        if s.shots == 0 {
            continue;
        }
        let q = clamp_prob(blend(s.p, s.p_c, params));
        total -= s.goals as f64 * q.log2() + (s.shots - s.goals) as f64 * (1.0 - q).log2();
        shots += s.shots as f64;
    }
    total / shots
}

/// Blend weight minimizing the mean ignorance, by golden-section search on
/// `[0, 1]`; the pure strategies at either end are kept if they score better.
pub fn fit_blend(samples: &[BlendSample]) -> Result<BlendParams> {
    if samples.iter().all(|s| s.shots == 0) {
        return Err(Error::InsufficientData("no shots to blend on".into()));
    }
    let f = |a: f64| blend_objective(samples, a);
    let interior = optim::golden_section(f, 0.0, 1.0, 1e-5);
    let alpha = [interior, 0.0, 1.0]
        .into_iter()
        .min_by(|&x, &y| f(x).total_cmp(&f(y)))
        .expect("non-empty");
    Ok(BlendParams { alpha })
}
