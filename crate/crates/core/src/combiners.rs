//! Streaming forecast combiners.
//!
//! Every combiner follows the same protocol: at time `t` it sees the `K`
//! candidate forecasts, emits a combined forecast, and only then observes
//! `y_t`. [`Combiner::forecast`] is side-effect free; [`Combiner::update`]
//! folds one `(candidates, y)` pair into the state. [`Protocol`] enforces the
//! predict-then-observe order for callers driving a combiner step by step.

use std::cell::OnceCell;
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, LeastSquaresFit, VARIANCE_FLOOR};
use crate::metrics::msfe;
use crate::types::{EvaluationWindow, ForecastPanel, WeightVector};

pub trait Combiner: Send {
    fn name(&self) -> String;

    /// Number of candidate forecasts this combiner was built for.
    fn n_candidates(&self) -> usize;

    /// Combined forecast from the current state and the time-`t` candidates.
    fn forecast(&self, candidates: &[f64]) -> Result<f64>;

    /// Incorporates the realized value `y` for the candidates issued at the same time.
    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()>;

    fn weights(&self) -> WeightVector;

    /// A new instance with the same configuration and an empty history.
    fn fresh(&self) -> Box<dyn Combiner>;
}

fn check_candidates(candidates: &[f64], k: usize) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    if candidates.len() != k {
        return Err(Error::Alignment(format!("expected {k} candidates, got {}", candidates.len())));
    }
    if candidates.iter().any(|c| !c.is_finite()) {
        return Err(Error::NumericInput(format!("candidate forecasts must be finite: {candidates:?}")));
    }
    Ok(())
}

fn check_y(y: f64) -> Result<()> {
    if y.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericInput(format!("realized value must be finite, got {y}")))
    }
}

/// Arithmetic mean of the candidates.
pub fn sa_predict(candidates: &[f64]) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    Ok(candidates.iter().sum::<f64>() / candidates.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AfterConfig {
    /// Error variance used for a candidate with no error history yet.
    pub prior_variance: f64,
    pub variance_floor: f64,
    /// Truncate candidates to `center +- M`, `center` being the running mean of observed `y`.
    pub clip_bound: Option<f64>,
}

impl Default for AfterConfig {
    fn default() -> Self {
        Self { prior_variance: 1.0, variance_floor: VARIANCE_FLOOR, clip_bound: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerConfig {
    pub after: AfterConfig,
    pub bg_floor: f64,
    pub linreg_intercept: bool,
    /// Rows required before regression weights are used; `None` means `K + 2`.
    pub linreg_min_obs: Option<usize>,
}

impl Default for CombinerConfig {
    fn default() -> Self {
        Self { after: AfterConfig::default(), bg_floor: VARIANCE_FLOOR, linreg_intercept: true, linreg_min_obs: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sa,
    Bg,
    LinReg,
    After,
    MAfter,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Sa, Method::Bg, Method::LinReg, Method::After, Method::MAfter];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Sa => "sa",
            Method::Bg => "bg",
            Method::LinReg => "linreg",
            Method::After => "after",
            Method::MAfter => "mafter",
        }
    }

    pub fn build(&self, k: usize, cfg: &CombinerConfig) -> Box<dyn Combiner> {
        match self {
            Method::Sa => Box::new(SimpleAverage::new(k)),
            Method::Bg => Box::new(BatesGranger::new(k, cfg.bg_floor)),
            Method::LinReg => Box::new(LinReg::new(k, cfg.linreg_intercept, cfg.linreg_min_obs)),
            Method::After => Box::new(After::new(k, cfg.after)),
            Method::MAfter => Box::new(crate::mafter::MultiLevelAfter::new(k, cfg)),
        }
    }

    /// Builds the method, wrapped in a rolling window when `rw` is given.
    pub fn build_rolling(&self, k: usize, cfg: &CombinerConfig, rw: Option<usize>) -> Result<Box<dyn Combiner>> {
        let inner = self.build(k, cfg);
        match rw {
            None => Ok(inner),
            Some(rw) => Ok(Box::new(Rolling::new(inner, rw)?)),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sa" => Ok(Method::Sa),
            "bg" => Ok(Method::Bg),
            "linreg" | "lr" => Ok(Method::LinReg),
            "after" => Ok(Method::After),
            "mafter" => Ok(Method::MAfter),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimpleAverage {
    k: usize,
}

impl SimpleAverage {
    pub fn new(k: usize) -> Self {
        Self { k }
    }
}

impl Combiner for SimpleAverage {
    fn name(&self) -> String {
        "sa".into()
    }

    fn n_candidates(&self) -> usize {
        self.k
    }

    fn forecast(&self, candidates: &[f64]) -> Result<f64> {
        check_candidates(candidates, self.k)?;
        sa_predict(candidates)
    }

    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()> {
        check_candidates(candidates, self.k)?;
        check_y(y)
    }

    fn weights(&self) -> WeightVector {
        WeightVector::uniform(self.k)
    }

    fn fresh(&self) -> Box<dyn Combiner> {
        Box::new(Self::new(self.k))
    }
}

/// Inverse mean-squared-error weights, ignoring error correlation.
#[derive(Debug, Clone)]
pub struct BatesGranger {
    squared_error_sums: Vec<f64>,
    count: usize,
    variance_floor: f64,
}

impl BatesGranger {
    pub fn new(k: usize, variance_floor: f64) -> Self {
        Self { squared_error_sums: vec![0.0; k], count: 0, variance_floor }
    }

    pub fn mean_squared_errors(&self) -> Vec<f64> {
        self.squared_error_sums.iter().map(|s| s / self.count as f64).collect()
    }
}

/// Weights proportional to `1 / max(mse_i, floor)`.
pub fn bg_weights(mse: &[f64], floor: f64) -> Result<WeightVector> {
    WeightVector::from_masses(mse.iter().map(|m| 1.0 / m.max(floor)).collect())
}

impl Combiner for BatesGranger {
    fn name(&self) -> String {
        "bg".into()
    }

    fn n_candidates(&self) -> usize {
        self.squared_error_sums.len()
    }

    fn forecast(&self, candidates: &[f64]) -> Result<f64> {
        check_candidates(candidates, self.n_candidates())?;
        Ok(self.weights().combine(candidates))
    }

    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()> {
        check_candidates(candidates, self.n_candidates())?;
        check_y(y)?;
        for (s, c) in self.squared_error_sums.iter_mut().zip(candidates) {
            *s += (y - c) * (y - c);
        }
        self.count += 1;
        Ok(())
    }

    fn weights(&self) -> WeightVector {
        if self.count == 0 {
            return WeightVector::uniform(self.n_candidates());
        }
        bg_weights(&self.mean_squared_errors(), self.variance_floor)
            .expect("floored inverse variances are finite and positive")
    }

    fn fresh(&self) -> Box<dyn Combiner> {
        Box::new(Self::new(self.n_candidates(), self.variance_floor))
    }
}

/// Regression of the realized series on the candidate forecasts, unrestricted weights.
#[derive(Debug, Clone)]
pub struct LinReg {
    k: usize,
    intercept: bool,
    min_obs: usize,
    rows: Vec<Vec<f64>>,
    ys: Vec<f64>,
    fit: OnceCell<Option<LeastSquaresFit>>,
}

impl LinReg {
    pub fn new(k: usize, intercept: bool, min_obs: Option<usize>) -> Self {
        Self {
            k,
            intercept,
            min_obs: min_obs.unwrap_or(k + 2),
            rows: Vec::new(),
            ys: Vec::new(),
            fit: OnceCell::new(),
        }
    }

    pub fn min_obs(&self) -> usize {
        self.min_obs
    }

    /// Current regression fit, or `None` while below `min_obs` rows.
    pub fn fit(&self) -> Option<&LeastSquaresFit> {
        self.fit
            .get_or_init(|| {
                if self.rows.len() < self.min_obs {
                    None
                } else {
                    numerics::ols(&self.rows, &self.ys, self.intercept).ok()
                }
            })
            .as_ref()
    }
}

impl Combiner for LinReg {
    fn name(&self) -> String {
        "linreg".into()
    }

    fn n_candidates(&self) -> usize {
        self.k
    }

    fn forecast(&self, candidates: &[f64]) -> Result<f64> {
        check_candidates(candidates, self.k)?;
        match self.fit() {
            Some(fit) => Ok(fit.predict(candidates)),
            None => sa_predict(candidates),
        }
    }

    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()> {
        check_candidates(candidates, self.k)?;
        check_y(y)?;
        self.rows.push(candidates.to_vec());
        self.ys.push(y);
        self.fit = OnceCell::new();
        Ok(())
    }

    fn weights(&self) -> WeightVector {
        match self.fit() {
            Some(fit) => WeightVector::unrestricted(fit.coefficients.clone()).expect("finite fit"),
            None => WeightVector::uniform(self.k),
        }
    }

    fn fresh(&self) -> Box<dyn Combiner> {
        Box::new(Self::new(self.k, self.intercept, Some(self.min_obs)))
    }
}

/// Gaussian log-likelihood of error `e` under variance `v`, without the constant.
pub fn log_likelihood_increment(e: f64, v: f64) -> f64 {
    -e * e / (2.0 * v) - 0.5 * v.ln()
}

/// Aggregated forecast through exponential re-weighting.
///
/// Each candidate's log-weight accumulates the Gaussian log-likelihood of its
/// errors, `-e^2 / (2 v) - ln(v) / 2`, where `v` is that candidate's mean squared
/// error over strictly earlier times (the prior variance while it has none).
/// The prior over candidates is uniform.
#[derive(Debug, Clone)]
pub struct After {
    cfg: AfterConfig,
    log_scores: Vec<f64>,
    squared_error_sums: Vec<f64>,
    count: usize,
    y_sum: f64,
}

impl After {
    pub fn new(k: usize, cfg: AfterConfig) -> Self {
        Self { cfg, log_scores: vec![0.0; k], squared_error_sums: vec![0.0; k], count: 0, y_sum: 0.0 }
    }

    pub fn log_scores(&self) -> &[f64] {
        &self.log_scores
    }

    pub fn config(&self) -> &AfterConfig {
        &self.cfg
    }

    /// Variance estimate each candidate will use at its next update.
    pub fn variance_estimates(&self) -> Vec<f64> {
        self.squared_error_sums
            .iter()
            .map(|s| {
                if self.count == 0 {
                    self.cfg.prior_variance.max(self.cfg.variance_floor)
                } else {
                    (s / self.count as f64).max(self.cfg.variance_floor)
                }
            })
            .collect()
    }

    fn clip(&self, c: f64) -> f64 {
        match self.cfg.clip_bound {
            Some(m) => {
                let center = if self.count == 0 { 0.0 } else { self.y_sum / self.count as f64 };
                c.clamp(center - m, center + m)
            }
            None => c,
        }
    }
}

impl Combiner for After {
    fn name(&self) -> String {
        "after".into()
    }

    fn n_candidates(&self) -> usize {
        self.log_scores.len()
    }

    fn forecast(&self, candidates: &[f64]) -> Result<f64> {
        check_candidates(candidates, self.n_candidates())?;
        let w = self.weights();
        Ok(w.as_slice().iter().zip(candidates).map(|(w, c)| w * self.clip(*c)).sum())
    }

    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()> {
        check_candidates(candidates, self.n_candidates())?;
        check_y(y)?;
        let v = self.variance_estimates();
        for i in 0..candidates.len() {
            let e = y - self.clip(candidates[i]);
            self.log_scores[i] += log_likelihood_increment(e, v[i]);
            self.squared_error_sums[i] += e * e;
        }
        self.count += 1;
        self.y_sum += y;
        Ok(())
    }

    fn weights(&self) -> WeightVector {
        numerics::normalize_log_weights(&self.log_scores).expect("log-scores stay finite")
    }

    fn fresh(&self) -> Box<dyn Combiner> {
        Box::new(Self::new(self.n_candidates(), self.cfg))
    }
}

/// Restricts any combiner to the most recent `rw` observations.
///
/// After every update the inner combiner is rebuilt from scratch on the
/// retained window, so AFTER's scores and variance estimates are sums over
/// that window only.
pub struct Rolling {
    rw: usize,
    window: VecDeque<(Vec<f64>, f64)>,
    inner: Box<dyn Combiner>,
}

impl Rolling {
    pub fn new(inner: Box<dyn Combiner>, rw: usize) -> Result<Self> {
        if rw < 2 {
            return Err(Error::Config(format!("rolling window must be at least 2, got {rw}")));
        }
        Ok(Self { rw, window: VecDeque::with_capacity(rw + 1), inner: inner.fresh() })
    }

    pub fn rw(&self) -> usize {
        self.rw
    }
}

impl Combiner for Rolling {
    fn name(&self) -> String {
        format!("{}_rw{}", self.inner.name(), self.rw)
    }

    fn n_candidates(&self) -> usize {
        self.inner.n_candidates()
    }

    fn forecast(&self, candidates: &[f64]) -> Result<f64> {
        self.inner.forecast(candidates)
    }

    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()> {
        check_candidates(candidates, self.n_candidates())?;
        check_y(y)?;
        self.window.push_back((candidates.to_vec(), y));
        if self.window.len() > self.rw {
            self.window.pop_front();
        }
        let mut inner = self.inner.fresh();
        for (c, v) in &self.window {
            inner.update(c, *v)?;
        }
        self.inner = inner;
        Ok(())
    }

    fn weights(&self) -> WeightVector {
        self.inner.weights()
    }

    fn fresh(&self) -> Box<dyn Combiner> {
        Box::new(Rolling { rw: self.rw, window: VecDeque::with_capacity(self.rw + 1), inner: self.inner.fresh() })
    }
}

/// Enforces predict-before-observe on a combiner.
pub struct Protocol {
    inner: Box<dyn Combiner>,
    pending: Option<Vec<f64>>,
}

impl Protocol {
    pub fn new(inner: Box<dyn Combiner>) -> Self {
        Self { inner, pending: None }
    }

    pub fn predict(&mut self, candidates: &[f64]) -> Result<f64> {
        if self.pending.is_some() {
            return Err(Error::Protocol("predict called twice without observe".into()));
        }
        let f = self.inner.forecast(candidates)?;
        self.pending = Some(candidates.to_vec());
        Ok(f)
    }

    pub fn observe(&mut self, y: f64) -> Result<()> {
        let c = self.pending.take().ok_or_else(|| Error::Protocol("observe called before predict".into()))?;
        self.inner.update(&c, y)
    }

    pub fn current_weights(&self) -> WeightVector {
        self.inner.weights()
    }

    pub fn inner(&self) -> &dyn Combiner {
        self.inner.as_ref()
    }
}

/// Runs a combiner through `rows` and returns its one-step forecasts.
pub fn run_combiner(combiner: Box<dyn Combiner>, rows: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if rows.len() != y.len() {
        return Err(Error::Alignment(format!("{} forecast rows vs {} observations", rows.len(), y.len())));
    }
    let mut p = Protocol::new(combiner);
    let mut out = Vec::with_capacity(y.len());
    for (c, v) in rows.iter().zip(y) {
        out.push(p.predict(c)?);
        p.observe(*v)?;
    }
    Ok(out)
}

/// Drives a combiner over `window.combine_start..=window.eval_end` of `panel` and
/// returns its MSFE over the evaluation span.
pub fn evaluate(combiner: Box<dyn Combiner>, panel: &ForecastPanel, window: &EvaluationWindow) -> Result<f64> {
    let path = forecast_path(combiner, panel, window)?;
    let y = &panel.y()[window.combine_start - 1..window.eval_end];
    let shifted = EvaluationWindow::new(1, window.eval_start + 1 - window.combine_start, y.len())?;
    msfe(y, &path, &shifted)
}

/// One-step combined forecasts for positions `window.combine_start..=window.eval_end`.
pub fn forecast_path(combiner: Box<dyn Combiner>, panel: &ForecastPanel, window: &EvaluationWindow) -> Result<Vec<f64>> {
    if window.eval_end > panel.len() {
        return Err(Error::Alignment(format!(
            "window ends at {} but panel has {} points",
            window.eval_end,
            panel.len()
        )));
    }
    let span = window.combine_start - 1..window.eval_end;
    run_combiner(combiner, &panel.rows()[span.clone()], &panel.y()[span])
}
