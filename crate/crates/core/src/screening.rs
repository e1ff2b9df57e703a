//! Best-subset screening: one least-squares winner per model size, ranked by
//! the ABC criterion, with the top share kept as forecast candidates.

use std::cmp::Ordering;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{self, LeastSquaresFit, RecursiveLs};
use crate::types::ForecastPanel;

/// Largest `p` for which exhaustive search is allowed.
pub const EXHAUSTIVE_MAX_P: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchStrategy {
    Exhaustive,
    /// Forward selection with single-swap refinement at every size.
    Stepwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetModel {
    /// Sorted 0-based column indices.
    pub variables: Vec<usize>,
    pub fit: LeastSquaresFit,
    pub abc_score: f64,
}

impl SubsetModel {
    pub fn size(&self) -> usize {
        self.variables.len()
    }

    pub fn sse(&self) -> f64 {
        self.fit.residual_sum_squares
    }
}

/// Residual sums of squares for arbitrary column subsets, from cross-products.
struct SubsetSse {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
}

impl SubsetSse {
    fn new(x: &[Vec<f64>], y: &[f64], intercept: bool) -> Self {
        let n = x.len();
        let p = x[0].len();
        let (xm, ym) = if intercept {
            let xm: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
            (xm, y.iter().sum::<f64>() / n as f64)
        } else {
            (vec![0.0; p], 0.0)
        };
        let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - xm[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
        Self { gram: xc.transpose() * &xc, xty: xc.transpose() * &yc, yty: yc.norm_squared() }
    }

    fn sse(&self, subset: &[usize]) -> f64 {
        if subset.is_empty() {
            return self.yty;
        }
        let g = DMatrix::from_fn(subset.len(), subset.len(), |i, j| self.gram[(subset[i], subset[j])]);
        let b = DVector::from_iterator(subset.len(), subset.iter().map(|&j| self.xty[j]));
        let explained = match Cholesky::new(g.clone()) {
            Some(ch) => b.dot(&ch.solve(&b)),
            None => {
                let pinv = g.pseudo_inverse(1e-12).expect("pseudo-inverse of a symmetric matrix");
                b.dot(&(pinv * &b))
            }
        };
        (self.yty - explained).max(0.0)
    }
}

fn subsets_of_mask(mask: u32, p: usize) -> Vec<usize> {
    (0..p).filter(|j| mask & (1 << j) != 0).collect()
}

fn better(sse: f64, vars: &[usize], best_sse: f64, best_vars: &[usize]) -> bool {
    match sse.total_cmp(&best_sse) {
        Ordering::Less => true,
        Ordering::Equal => vars < best_vars,
        Ordering::Greater => false,
    }
}

fn best_subsets_exhaustive(ss: &SubsetSse, p: usize) -> Vec<Vec<usize>> {
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; p + 1];
    for mask in 1u32..(1u32 << p) {
        let vars = subsets_of_mask(mask, p);
        let sse = ss.sse(&vars);
        let slot = &mut best[vars.len()];
        let replace = match slot {
            None => true,
            Some((bs, bv)) => better(sse, &vars, *bs, bv),
        };
        if replace {
            *slot = Some((sse, vars));
        }
    }
    best.into_iter().skip(1).map(|b| b.expect("every size visited").1).collect()
}

fn best_subsets_stepwise(ss: &SubsetSse, p: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = Vec::new();
    let mut out = Vec::with_capacity(p);
    for _ in 1..=p {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for j in (0..p).filter(|j| !current.contains(j)) {
            let mut cand = current.clone();
            cand.push(j);
            cand.sort_unstable();
            let sse = ss.sse(&cand);
            if best.as_ref().is_none_or(|(bs, bv)| better(sse, &cand, *bs, bv)) {
                best = Some((sse, cand));
            }
        }
        let (mut cur_sse, mut cur) = best.expect("a variable is left to add");
        // single swaps until no swap lowers the SSE
        loop {
            let mut improved: Option<(f64, Vec<usize>)> = None;
            for (pos, _) in cur.iter().enumerate() {
                for j in (0..p).filter(|j| !cur.contains(j)) {
                    let mut cand = cur.clone();
                    cand[pos] = j;
                    cand.sort_unstable();
                    let sse = ss.sse(&cand);
                    let base = improved.as_ref().map_or(cur_sse, |(s, _)| *s);
                    if sse < base * (1.0 - 1e-12) {
                        improved = Some((sse, cand));
                    }
                }
            }
            match improved {
                Some((s, c)) => {
                    cur_sse = s;
                    cur = c;
                }
                None => break,
            }
        }
        current = cur.clone();
        out.push(cur);
    }
    out
}

fn select_columns(x: &[Vec<f64>], vars: &[usize]) -> Vec<Vec<f64>> {
    x.iter().map(|r| vars.iter().map(|&j| r[j]).collect()).collect()
}

/// Lowest-SSE subset for each size `1..=p`, in size order. Models are unscored
/// (`abc_score` is NaN) until passed through [`score_models`].
pub fn best_per_size(x: &[Vec<f64>], y: &[f64], strategy: SearchStrategy, intercept: bool) -> Result<Vec<SubsetModel>> {
    let n = x.len();
    if n == 0 || y.len() != n {
        return Err(Error::Alignment(format!("design has {n} rows, response has {}", y.len())));
    }
    let p = x[0].len();
    if p == 0 || x.iter().any(|r| r.len() != p) {
        return Err(Error::Alignment("design rows must share a positive width".into()));
    }
    if n <= p + usize::from(intercept) {
        return Err(Error::InsufficientData(format!("best subset search needs n > p, got n = {n}, p = {p}")));
    }
    let ss = SubsetSse::new(x, y, intercept);
    let subsets = match strategy {
        SearchStrategy::Exhaustive => {
            if p > EXHAUSTIVE_MAX_P {
                return Err(Error::Budget(format!("exhaustive search over p = {p} > {EXHAUSTIVE_MAX_P} variables")));
            }
            best_subsets_exhaustive(&ss, p)
        }
        SearchStrategy::Stepwise => best_subsets_stepwise(&ss, p),
    };
    subsets
        .into_iter()
        .map(|vars| {
            let fit = numerics::ols(&select_columns(x, &vars), y, intercept)?;
            Ok(SubsetModel { variables: vars, fit, abc_score: f64::NAN })
        })
        .collect()
}

/// `sse + 2 r sigma2 + sigma2 ln C(p, r)`.
pub fn abc_score(sse: f64, r: usize, sigma2: f64, p: usize, _n: usize) -> Result<f64> {
    if r > p {
        return Err(Error::Config(format!("model size {r} exceeds p = {p}")));
    }
    if !(sigma2 > 0.0) || !(sse >= 0.0) {
        return Err(Error::NumericInput(format!("need sse >= 0 and sigma2 > 0, got {sse}, {sigma2}")));
    }
    let ln_choose = ln_gamma(p as f64 + 1.0) - ln_gamma(r as f64 + 1.0) - ln_gamma((p - r) as f64 + 1.0);
    Ok(sse + 2.0 * r as f64 * sigma2 + sigma2 * ln_choose)
}

/// Scores models with `sigma2` taken as the full model's estimation mean
/// square error, `SSE_full / (n - p - intercept)`.
pub fn score_models(models: &mut [SubsetModel], n: usize, intercept: bool) -> Result<f64> {
    let p = models.len();
    let full = models
        .iter()
        .find(|m| m.size() == p)
        .ok_or_else(|| Error::Config("the full model is required to estimate sigma^2".into()))?;
    let dof = n.saturating_sub(p + usize::from(intercept)).max(1);
    let sigma2 = (full.sse() / dof as f64).max(f64::MIN_POSITIVE);
    for m in models.iter_mut() {
        m.abc_score = abc_score(m.sse(), m.size(), sigma2, p, n)?;
    }
    Ok(sigma2)
}

/// Number of models kept for a top-`x_percent` share of `p` models.
pub fn retained_count(p: usize, x_percent: u32) -> usize {
    (p * x_percent as usize).div_ceil(100)
}

fn abc_order(a: &SubsetModel, b: &SubsetModel) -> Ordering {
    a.abc_score
        .total_cmp(&b.abc_score)
        .then(a.size().cmp(&b.size()))
        .then_with(|| a.variables.cmp(&b.variables))
}

/// Models ordered by ABC score, ties broken by size then by index lists.
pub fn rank_by_abc(models: &[SubsetModel]) -> Vec<SubsetModel> {
    let mut sorted = models.to_vec();
    sorted.sort_by(abc_order);
    sorted
}

/// The `ceil(p X / 100)` best models by ABC.
pub fn retain_top(models: &[SubsetModel], x_percent: u32) -> Result<Vec<SubsetModel>> {
    if x_percent == 0 || x_percent > 100 {
        return Err(Error::Config(format!("top share must be in 1..=100 percent, got {x_percent}")));
    }
    let count = retained_count(models.len(), x_percent);
    if count == 0 {
        return Err(Error::Config("screening retains no models".into()));
    }
    Ok(rank_by_abc(models).into_iter().take(count).collect())
}

/// One-step forecasts of each subset model for times `start+1..=T` (1-based),
/// refit with all data before the forecast time on the model's fixed columns.
pub fn subset_forecasts(
    x: &[Vec<f64>],
    y: &[f64],
    models: &[SubsetModel],
    start: usize,
    intercept: bool,
) -> Result<ForecastPanel> {
    let n = y.len();
    if x.len() != n || start == 0 || start >= n {
        return Err(Error::Alignment(format!("forecast start {start} outside series of length {n}")));
    }
    let mut fits: Vec<RecursiveLs> = models.iter().map(|m| RecursiveLs::new(m.size(), intercept)).collect();
    let mut rows = Vec::with_capacity(n - start);
    for t in 0..n {
        let regs: Vec<Vec<f64>> = models.iter().map(|m| m.variables.iter().map(|&j| x[t][j]).collect()).collect();
        if t >= start {
            rows.push(fits.iter().zip(&regs).map(|(f, r)| f.predict(r)).collect());
        }
        for (f, r) in fits.iter_mut().zip(&regs) {
            f.push(r, y[t]);
        }
    }
    let names = models
        .iter()
        .map(|m| format!("x{}", m.variables.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join("+")))
        .collect();
    let times = (start as i64 + 1..=n as i64).collect();
    ForecastPanel::new(times, y[start..].to_vec(), names, rows)
}
