//! Seeded data-generating processes and the candidate forecasts built on them.
//!
//! Candidate forecasts are re-estimated every period from all data strictly
//! before the forecast time, so `forecasts[t]` never depends on `y[t]`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RecursiveLs, SeededGenerator};
use crate::types::{EvaluationWindow, ForecastPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// `y = x beta + e`; candidates: slope-only regression and the running mean.
    Case1,
    /// `y = (x1 + x2) beta + e`; candidates regress on `x1` and `x2` separately.
    Case2,
    /// Case 2 plus a regression on an irrelevant regressor `x3`.
    Case3,
    /// Case 2 plus an exact copy of the second candidate.
    Case4,
    /// Case 2 plus a regression on `exp(x2)`.
    Case5,
}

impl Case {
    pub fn from_index(i: u8) -> Result<Self> {
        match i {
            1 => Ok(Case::Case1),
            2 => Ok(Case::Case2),
            3 => Ok(Case::Case3),
            4 => Ok(Case::Case4),
            5 => Ok(Case::Case5),
            _ => Err(Error::Config(format!("no case {i}"))),
        }
    }

    pub fn index(&self) -> u8 {
        match self {
            Case::Case1 => 1,
            Case::Case2 => 2,
            Case::Case3 => 3,
            Case::Case4 => 4,
            Case::Case5 => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case: Case,
    pub beta: f64,
    pub sigma: f64,
    pub sigma_x: f64,
    pub rho: f64,
    pub t_total: usize,
    /// Last observation used before candidates start forecasting.
    pub build_end: usize,
    /// First time entering the loss average (1-based, absolute).
    pub eval_start: usize,
    /// Freeze candidate coefficients at `build_end` instead of refitting each period.
    pub frozen: bool,
}

impl ScenarioConfig {
    /// T = 100, candidates built on t <= 60, evaluation on t = 81..100.
    pub fn new(case: Case, beta: f64) -> Self {
        Self { case, beta, sigma: 1.0, sigma_x: 1.0, rho: 0.0, t_total: 100, build_end: 60, eval_start: 81, frozen: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma_x > 0.0) {
            return Err(Error::Config("sigma and sigma_x must be positive".into()));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::Config(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        if !(self.build_end >= 2 && self.build_end < self.eval_start && self.eval_start <= self.t_total) {
            return Err(Error::Config(format!(
                "splits must satisfy 2 <= build_end < eval_start <= T, got {} / {} / {}",
                self.build_end, self.eval_start, self.t_total
            )));
        }
        Ok(())
    }

    /// Window in panel positions: combining starts at the first forecast.
    pub fn window(&self) -> EvaluationWindow {
        EvaluationWindow {
            combine_start: 1,
            eval_start: self.eval_start - self.build_end,
            eval_end: self.t_total - self.build_end,
        }
    }

    pub fn signal_to_noise(&self) -> f64 {
        self.beta * self.beta * self.sigma_x * self.sigma_x / (self.sigma * self.sigma)
    }
}

/// `n` signal-to-noise ratios evenly spaced on a log scale between `lo` and `hi`.
pub fn snr_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// The 20-point grid from 0.05 to 5.
pub fn default_snr_grid() -> Vec<f64> {
    snr_grid(20, 0.05, 5.0)
}

pub fn beta_for_snr(snr: f64, sigma: f64, sigma_x: f64) -> f64 {
    snr.sqrt() * sigma / sigma_x
}

/// A generated panel covering the forecast span, plus the observations that
/// preceded it and the evaluation window in panel positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPanel {
    pub panel: ForecastPanel,
    pub presample_y: Vec<f64>,
    pub window: EvaluationWindow,
}

fn normals(gen: &mut SeededGenerator, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * gen.standard_normal()).collect()
}

/// How each candidate is built from the simulated regressors.
enum CandidateSpec<'a> {
    /// `x_t * b`, `b` from a no-intercept regression of `y` on `x`.
    Slope(&'a [f64]),
    /// Running mean of `y`.
    Mean,
}

/// Recursive one-step forecasts for times `build_end+1..=T` (1-based).
///
/// The forecast for time `t` uses regressors at `t` and `(x_s, y_s)` for
/// `s < t` only (`s <= build_end` when `frozen`).
fn candidate_rows(specs: &[CandidateSpec], y: &[f64], build_end: usize, frozen: bool) -> Vec<Vec<f64>> {
    let n = y.len();
    let mut fits: Vec<RecursiveLs> = specs
        .iter()
        .map(|s| match s {
            CandidateSpec::Slope(_) => RecursiveLs::new(1, false),
            CandidateSpec::Mean => RecursiveLs::new(0, true),
        })
        .collect();
    let mut rows = Vec::with_capacity(n.saturating_sub(build_end));
    for t in 0..n {
        if t >= build_end {
            rows.push(
                specs
                    .iter()
                    .zip(&fits)
                    .map(|(s, f)| match s {
                        CandidateSpec::Slope(x) => f.predict(&[x[t]]),
                        CandidateSpec::Mean => f.predict(&[]),
                    })
                    .collect(),
            );
        }
        if !frozen || t < build_end {
            for (s, f) in specs.iter().zip(fits.iter_mut()) {
                match s {
                    CandidateSpec::Slope(x) => f.push(&[x[t]], y[t]),
                    CandidateSpec::Mean => f.push(&[], y[t]),
                }
            }
        }
    }
    rows
}

pub fn generate_case(cfg: &ScenarioConfig, gen: &mut SeededGenerator) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let n = cfg.t_total;
    let (x1, x2, eps) = match cfg.case {
        Case::Case1 => {
            let x = normals(gen, n, cfg.sigma_x);
            let e = normals(gen, n, cfg.sigma);
            (x, Vec::new(), e)
        }
        _ => {
            let x1 = normals(gen, n, cfg.sigma_x);
            let z = normals(gen, n, cfg.sigma_x);
            let s = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
            let x2 = x1.iter().zip(&z).map(|(a, b)| cfg.rho * a + s * b).collect();
            let e = normals(gen, n, cfg.sigma);
            (x1, x2, e)
        }
    };
    let y: Vec<f64> = match cfg.case {
        Case::Case1 => x1.iter().zip(&eps).map(|(x, e)| x * cfg.beta + e).collect(),
        _ => (0..n).map(|t| (x1[t] + x2[t]) * cfg.beta + eps[t]).collect(),
    };
    // Extra regressors are drawn after the Case 2 variables so the first two
    // candidates match Case 2 under the same seed.
    let extra: Vec<f64> = match cfg.case {
        Case::Case3 => normals(gen, n, cfg.sigma_x),
        Case::Case5 => x2.iter().map(|v| v.exp()).collect(),
        _ => Vec::new(),
    };
    let specs = match cfg.case {
        Case::Case1 => vec![CandidateSpec::Slope(&x1), CandidateSpec::Mean],
        Case::Case2 | Case::Case4 => vec![CandidateSpec::Slope(&x1), CandidateSpec::Slope(&x2)],
        Case::Case3 | Case::Case5 => {
            vec![CandidateSpec::Slope(&x1), CandidateSpec::Slope(&x2), CandidateSpec::Slope(&extra)]
        }
    };
    let mut rows = candidate_rows(&specs, &y, cfg.build_end, cfg.frozen);
    if cfg.case == Case::Case4 {
        for r in rows.iter_mut() {
            r.push(r[1]);
        }
    }
    let k = rows[0].len();
    let names = (1..=k).map(|i| format!("f{i}")).collect();
    let times = (cfg.build_end as i64 + 1..=n as i64).collect();
    let panel = ForecastPanel::new(times, y[cfg.build_end..].to_vec(), names, rows)?;
    Ok(SimulatedPanel { panel, presample_y: y[..cfg.build_end].to_vec(), window: cfg.window() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationarityPolicy {
    /// Use the uniform draws as they come, explosive or not.
    Verbatim,
    /// Redraw a segment's coefficients until its AR polynomial is stationary.
    RejectNonstationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakConfig {
    /// Last time index of each segment; the final bound is T.
    pub segment_bounds: Vec<usize>,
    pub lag_orders: Vec<usize>,
    pub policy: StationarityPolicy,
    /// Presample steps simulated under the first segment's dynamics (discarded).
    pub burn_in: usize,
    /// Candidates are AR(1)..AR(max_lag).
    pub max_lag: usize,
    pub intercept: bool,
    /// First time with candidate forecasts; combining starts here.
    pub forecast_start: usize,
    pub eval_start: usize,
    pub magnitude_guard: f64,
}

impl Default for BreakConfig {
    fn default() -> Self {
        Self {
            segment_bounds: vec![50, 100, 150],
            lag_orders: vec![4, 2, 1],
            policy: StationarityPolicy::RejectNonstationary,
            burn_in: 100,
            max_lag: 6,
            intercept: true,
            forecast_start: 21,
            eval_start: 51,
            magnitude_guard: 1e12,
        }
    }
}

impl BreakConfig {
    pub fn t_total(&self) -> usize {
        *self.segment_bounds.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_bounds.is_empty() || self.segment_bounds.len() != self.lag_orders.len() {
            return Err(Error::Config("one lag order per segment is required".into()));
        }
        if self.segment_bounds.windows(2).any(|w| w[1] <= w[0]) || self.segment_bounds[0] == 0 {
            return Err(Error::Config("segment bounds must be increasing and positive".into()));
        }
        if self.lag_orders.contains(&0) || self.max_lag == 0 {
            return Err(Error::Config("lag orders must be positive".into()));
        }
        let params = self.max_lag + usize::from(self.intercept);
        // AR(max_lag) needs more rows than parameters at the first forecast.
        if self.forecast_start < 2 * self.max_lag + 2 || self.forecast_start < params + self.max_lag + 2 {
            return Err(Error::Config(format!(
                "forecast_start {} leaves too few rows for AR({})",
                self.forecast_start, self.max_lag
            )));
        }
        if !(self.forecast_start <= self.eval_start && self.eval_start <= self.t_total()) {
            return Err(Error::Config("need forecast_start <= eval_start <= T".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> EvaluationWindow {
        let off = self.forecast_start - 1;
        EvaluationWindow { combine_start: 1, eval_start: self.eval_start - off, eval_end: self.t_total() - off }
    }
}

/// True when all roots of `1 - sum_k c_k z^k` lie outside the unit circle.
pub fn is_stationary(coefs: &[f64]) -> bool {
    let p = coefs.len();
    if p == 0 {
        return true;
    }
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            coefs[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion.complex_eigenvalues().iter().all(|l| l.norm() < 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakPanel {
    pub sim: SimulatedPanel,
    /// AR coefficients per segment, lag 1 first.
    pub coefficients: Vec<Vec<f64>>,
}

/// AR(1)..AR(max_lag) one-step forecasts for times `forecast_start..=T`
/// (1-based), each refit on all rows available before the forecast time.
fn ar_candidate_rows(y: &[f64], max_lag: usize, intercept: bool, forecast_start: usize) -> Vec<Vec<f64>> {
    let lags = |s: usize, k: usize| -> Vec<f64> { (1..=k).map(|j| y[s - j]).collect() };
    let mut models: Vec<RecursiveLs> = (1..=max_lag).map(|k| RecursiveLs::new(k, intercept)).collect();
    let mut rows = Vec::new();
    // y[s] is time s+1; model k has regression rows for s >= k.
    for (s, &ys) in y.iter().enumerate() {
        if s + 1 >= forecast_start {
            rows.push((1..=max_lag).map(|k| models[k - 1].predict(&lags(s, k))).collect::<Vec<_>>());
        }
        for k in 1..=max_lag {
            if s >= k {
                models[k - 1].push(&lags(s, k), ys);
            }
        }
    }
    rows
}

const MAX_REDRAWS: usize = 1_000_000;

fn draw_segment(order: usize, policy: StationarityPolicy, gen: &mut SeededGenerator) -> Result<Vec<f64>> {
    for _ in 0..MAX_REDRAWS {
        let c: Vec<f64> = (0..order).map(|_| gen.uniform()).collect();
        if policy == StationarityPolicy::Verbatim || is_stationary(&c) {
            return Ok(c);
        }
    }
    Err(Error::Config(format!("no stationary AR({order}) draw in {MAX_REDRAWS} attempts")))
}

/// Piecewise autoregression with breaks at the segment bounds; candidates are
/// AR(1)..AR(max_lag) refit by expanding-window OLS at every forecast time.
pub fn generate_breaks(cfg: &BreakConfig, gen: &mut SeededGenerator) -> Result<BreakPanel> {
    cfg.validate()?;
    let coefficients = cfg
        .lag_orders
        .iter()
        .map(|&o| draw_segment(o, cfg.policy, gen))
        .collect::<Result<Vec<_>>>()?;
    let t_total = cfg.t_total();
    let max_order = *cfg.lag_orders.iter().max().unwrap();
    let mut hist = vec![0.0; max_order];
    let step = |hist: &[f64], c: &[f64], e: f64| -> f64 {
        let n = hist.len();
        c.iter().enumerate().map(|(k, b)| b * hist[n - 1 - k]).sum::<f64>() + e
    };
    for _ in 0..cfg.burn_in {
        let v = step(&hist, &coefficients[0], gen.standard_normal());
        hist.push(v);
    }
    let mut y = Vec::with_capacity(t_total);
    let mut seg = 0;
    for t in 1..=t_total {
        while t > cfg.segment_bounds[seg] {
            seg += 1;
        }
        let v = step(&hist, &coefficients[seg], gen.standard_normal());
        if !(v.abs() <= cfg.magnitude_guard) {
            return Err(Error::ExplosiveSeries { t, limit: cfg.magnitude_guard });
        }
        hist.push(v);
        y.push(v);
    }

    let rows = ar_candidate_rows(&y, cfg.max_lag, cfg.intercept, cfg.forecast_start);
    let off = cfg.forecast_start - 1;
    let names = (1..=cfg.max_lag).map(|k| format!("ar{k}")).collect();
    let times = (cfg.forecast_start as i64..=t_total as i64).collect();
    let panel = ForecastPanel::new(times, y[off..].to_vec(), names, rows)?;
    Ok(BreakPanel {
        sim: SimulatedPanel { panel, presample_y: y[..off].to_vec(), window: cfg.window() },
        coefficients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningConfig {
    pub p: usize,
    pub beta: Vec<f64>,
    pub rho: f64,
    pub sigma: f64,
    pub t_total: usize,
    /// Screening uses t = 1..=screen_end; candidates forecast the rest.
    pub screen_end: usize,
    pub eval_start: usize,
}

impl ScreeningConfig {
    pub fn new(sigma: f64, rho: f64) -> Self {
        let mut beta = vec![0.0; 20];
        beta[..7].copy_from_slice(&[3.0, 3.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        Self { p: 20, beta, rho, sigma, t_total: 200, screen_end: 100, eval_start: 151 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.p || self.p == 0 {
            return Err(Error::Config(format!("beta has {} entries for p = {}", self.beta.len(), self.p)));
        }
        if !(self.sigma > 0.0 && self.rho.abs() < 1.0) {
            return Err(Error::Config("need sigma > 0 and |rho| < 1".into()));
        }
        if !(self.screen_end > self.p + 1 && self.screen_end < self.eval_start && self.eval_start <= self.t_total) {
            return Err(Error::Config("need p + 1 < screen_end < eval_start <= T".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> EvaluationWindow {
        EvaluationWindow {
            combine_start: 1,
            eval_start: self.eval_start - self.screen_end,
            eval_end: self.t_total - self.screen_end,
        }
    }
}

/// Rows `x_t ~ N(0, S)` with `S_ij = rho^|i-j|`, and `y = X beta + e`.
///
/// Columns are generated as a unit-variance AR(1) across the index, which
/// has exactly that covariance.
pub fn generate_screening(cfg: &ScreeningConfig, gen: &mut SeededGenerator) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    cfg.validate()?;
    let s = (1.0 - cfg.rho * cfg.rho).sqrt();
    let mut x = Vec::with_capacity(cfg.t_total);
    let mut y = Vec::with_capacity(cfg.t_total);
    for _ in 0..cfg.t_total {
        let mut row = Vec::with_capacity(cfg.p);
        let mut prev = gen.standard_normal();
        row.push(prev);
        for _ in 1..cfg.p {
            prev = cfg.rho * prev + s * gen.standard_normal();
            row.push(prev);
        }
        let mean: f64 = row.iter().zip(&cfg.beta).map(|(a, b)| a * b).sum();
        y.push(mean + cfg.sigma * gen.standard_normal());
        x.push(row);
    }
    Ok((x, y))
}

/// Synthetic stand-in for a survey panel: one file per horizon 1..=4, with
/// `k` forecasters of heterogeneous bias and precision forecasting a
/// persistent quarterly series.
pub fn spf_like_panels(seed: u64, n_quarters: usize, k: usize) -> Result<Vec<ForecastPanel>> {
    let mut gen = SeededGenerator::new(seed, 0);
    let (mu, phi, sd) = (4.0, 0.8, 1.0);
    let pre = 8;
    let mut y = vec![mu];
    for _ in 1..n_quarters + pre {
        let prev = *y.last().unwrap();
        y.push(mu + phi * (prev - mu) + sd * gen.standard_normal());
    }
    let bias: Vec<f64> = (0..k).map(|_| 0.3 * gen.standard_normal()).collect();
    let noise: Vec<f64> = (0..k).map(|_| 0.3 + 0.9 * gen.uniform()).collect();
    (1..=4u32)
        .map(|h| {
            let hs = h as usize;
            let mut rows = Vec::with_capacity(n_quarters);
            for t in pre..pre + n_quarters {
                let expected = mu + phi.powi(h as i32) * (y[t - hs] - mu);
                let common = 0.4 * gen.standard_normal();
                rows.push(
                    (0..k)
                        .map(|i| expected + bias[i] + common + noise[i] * (hs as f64).sqrt() * gen.standard_normal())
                        .map(|v| (v * 1e4).round() / 1e4)
                        .collect(),
                );
            }
            let obs = y[pre..].iter().map(|v| (v * 1e4).round() / 1e4).collect();
            let mut p = ForecastPanel::from_rows(obs, rows)?;
            p.target = Some("synthetic".into());
            p.horizon = Some(h);
            Ok(p)
        })
        .collect()
}
