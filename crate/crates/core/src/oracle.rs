//! Asymptotic risk ratios for the two regression scenarios and a brute-force
//! Monte Carlo estimator of forecast risk to check them against.

use rayon::prelude::*;

use crate::combiners::{self, CombinerConfig, Method};
use crate::dgp::{generate_case, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::{mean_se, msfe};
use crate::numerics::SeededGenerator;
use crate::types::WeightVector;

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticResult {
    /// Limit of `R_{T,1} / R_{T,SA}`.
    pub ratio: f64,
    /// Limiting optimum over weights summing to one.
    pub optimal_weight_restricted: Option<WeightVector>,
    /// Limiting optimum over all of `R^K`.
    pub optimal_weight_unrestricted: Option<WeightVector>,
}

/// Case 1: `sigma^2 / (sigma^2 + beta^2 sigma_x^2 / 4)`; all weight on the true model.
pub fn case1_limit(beta: f64, sigma_x: f64, sigma: f64) -> Result<AsymptoticResult> {
    if !(sigma > 0.0) {
        return Err(Error::Config("sigma must be positive".into()));
    }
    let s2 = sigma * sigma;
    let ratio = s2 / (s2 + beta * beta * sigma_x * sigma_x / 4.0);
    Ok(AsymptoticResult {
        ratio,
        optimal_weight_restricted: Some(WeightVector::simplex(vec![1.0, 0.0])?),
        optimal_weight_unrestricted: Some(WeightVector::unrestricted(vec![1.0, 0.0])?),
    })
}

/// Case 2 with equal coefficients and regressor variances:
/// `(sx^2 b^2 (1-rho^2) + s^2) / (sx^2 b^2 (1-rho^2)(1-rho)/2 + s^2)`.
///
/// Optimal weights are reported for `rho = 0` only: `(1/2, 1/2)` on the
/// sum-to-one line, `(1, 1)` unrestricted.
pub fn case2_limit(beta: f64, sigma_x: f64, sigma: f64, rho: f64) -> Result<AsymptoticResult> {
    if !(sigma > 0.0) {
        return Err(Error::Config("sigma must be positive".into()));
    }
    if !(rho.abs() <= 1.0) {
        return Err(Error::Config(format!("rho must lie in [-1, 1], got {rho}")));
    }
    let s2 = sigma * sigma;
    let signal = sigma_x * sigma_x * beta * beta * (1.0 - rho * rho);
    let ratio = (signal + s2) / (signal * (1.0 - rho) / 2.0 + s2);
    let (restricted, unrestricted) = if rho == 0.0 {
        (Some(WeightVector::simplex(vec![0.5, 0.5])?), Some(WeightVector::unrestricted(vec![1.0, 1.0])?))
    } else {
        (None, None)
    };
    Ok(AsymptoticResult { ratio, optimal_weight_restricted: restricted, optimal_weight_unrestricted: unrestricted })
}

/// What to score in a Monte Carlo risk estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum RiskTarget {
    /// A single candidate forecast (0-based).
    Candidate(usize),
    /// A fixed linear combination of the candidates.
    Fixed(Vec<f64>),
    /// A combining method run from the scenario's first forecast.
    Combiner(Method),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub n_draws: usize,
}

fn target_forecasts(target: &RiskTarget, rows: &[Vec<f64>], y: &[f64], cfg: &CombinerConfig) -> Result<Vec<f64>> {
    match target {
        RiskTarget::Candidate(i) => rows
            .iter()
            .map(|r| r.get(*i).copied().ok_or_else(|| Error::Config(format!("no candidate {i}"))))
            .collect(),
        RiskTarget::Fixed(w) => {
            if w.len() != rows[0].len() {
                return Err(Error::Alignment(format!("{} weights for {} candidates", w.len(), rows[0].len())));
            }
            Ok(rows.iter().map(|r| r.iter().zip(w).map(|(c, w)| c * w).sum()).collect())
        }
        RiskTarget::Combiner(m) => combiners::run_combiner(m.build(rows[0].len(), cfg), rows, y),
    }
}

/// Estimates `E (y_{T+1} - forecast_{T+1})^2` by simulating the whole
/// pipeline (data, candidate estimation, combination) `n_draws` times.
pub fn mc_risk(scenario: &ScenarioConfig, target: &RiskTarget, t: usize, n_draws: usize, seed: u64) -> Result<McEstimate> {
    let losses = mc_losses(scenario, std::slice::from_ref(target), t, n_draws, seed)?;
    let (mean, se) = mean_se(&losses[0]);
    Ok(McEstimate { mean, se, n_draws })
}

/// Squared one-step errors at `T+1` for several targets on common draws.
/// Returns one loss vector per target.
pub fn mc_losses(scenario: &ScenarioConfig, targets: &[RiskTarget], t: usize, n_draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n_draws < 100 {
        return Err(Error::Config(format!("Monte Carlo risk needs at least 100 draws, got {n_draws}")));
    }
    let mut cfg = scenario.clone();
    cfg.t_total = t + 1;
    cfg.eval_start = t + 1;
    cfg.build_end = cfg.build_end.min(t);
    cfg.validate()?;
    let per_draw: Vec<Vec<f64>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut gen = SeededGenerator::new(seed, d as u64);
            let sim = generate_case(&cfg, &mut gen)?;
            let ccfg = combiner_config_for(&sim.presample_y);
            let y = sim.panel.y();
            targets
                .iter()
                .map(|tg| {
                    let f = target_forecasts(tg, sim.panel.rows(), y, &ccfg)?;
                    let e = y[y.len() - 1] - f[f.len() - 1];
                    Ok(e * e)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..targets.len()).map(|j| per_draw.iter().map(|v| v[j]).collect()).collect())
}

/// Ratio of two average risks from paired draws, with a delta-method standard error.
pub fn ratio_estimate(num: &[f64], den: &[f64]) -> McEstimate {
    let n = num.len();
    let (mn, _) = mean_se(num);
    let (md, _) = mean_se(den);
    let r = mn / md;
    let resid: Vec<f64> = num.iter().zip(den).map(|(a, b)| (a - r * b) / md).collect();
    let (_, se) = mean_se(&resid);
    McEstimate { mean: r, se, n_draws: n }
}

/// Average MSFE over the scenario's evaluation window for each target, one
/// value per replication.
pub fn window_losses(scenario: &ScenarioConfig, targets: &[RiskTarget], n_reps: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    scenario.validate()?;
    let per_rep: Vec<Vec<f64>> = (0..n_reps)
        .into_par_iter()
        .map(|r| {
            let mut gen = SeededGenerator::new(seed, r as u64);
            let sim = generate_case(scenario, &mut gen)?;
            let ccfg = combiner_config_for(&sim.presample_y);
            let w = sim.window;
            let y = sim.panel.y();
            targets
                .iter()
                .map(|tg| {
                    let span = w.combine_start - 1..w.eval_end;
                    let f = target_forecasts(tg, &sim.panel.rows()[span.clone()], &y[span.clone()], &ccfg)?;
                    let shifted = crate::types::EvaluationWindow::new(1, w.eval_start + 1 - w.combine_start, f.len())?;
                    msfe(&y[span], &f, &shifted)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..targets.len()).map(|j| per_rep.iter().map(|v| v[j]).collect()).collect())
}

/// Combiner settings with the AFTER prior variance taken from `presample`.
pub fn combiner_config_for(presample: &[f64]) -> CombinerConfig {
    let mut cfg = CombinerConfig::default();
    cfg.after.prior_variance = sample_variance(presample).unwrap_or(1.0);
    cfg
}

/// Unbiased sample variance; `None` for fewer than two points or zero spread.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (v > 0.0 && v.is_finite()).then_some(v)
}
