use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the simplex sum constraint.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A realized series together with `K` aligned candidate forecasts.
///
/// `forecasts` is stored time-major: `rows[t][i]` is candidate `i`'s forecast
/// of `y[t]`, issued before `y[t]` was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPanel {
    times: Vec<i64>,
    y: Vec<f64>,
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    pub target: Option<String>,
    pub horizon: Option<u32>,
}

impl ForecastPanel {
    pub fn new(times: Vec<i64>, y: Vec<f64>, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = names.len();
        if k == 0 {
            return Err(Error::NoCandidates);
        }
        if times.len() != y.len() || rows.len() != y.len() {
            return Err(Error::Alignment(format!(
                "times={}, y={}, forecast rows={}",
                times.len(),
                y.len(),
                rows.len()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Schema(format!("time index not increasing at {} -> {}", w[0], w[1])));
        }
        for (t, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Alignment(format!("row {t} has {} forecasts, expected {k}", row.len())));
            }
            if let Some(i) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingData { row: t, column: names[i].clone() });
            }
            if !y[t].is_finite() {
                return Err(Error::MissingData { row: t, column: "y".into() });
            }
        }
        Ok(Self { times, y, names, rows, target: None, horizon: None })
    }

    /// Panel indexed `1..=T` with candidates named `f1..fK`.
    pub fn from_rows(y: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        let times = (1..=y.len() as i64).collect();
        let names = (1..=k).map(|i| format!("f{i}")).collect();
        Self::new(times, y, names, rows)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_candidates(&self) -> usize {
        self.names.len()
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Candidate forecasts at 0-based position `pos`.
    pub fn candidates(&self, pos: usize) -> &[f64] {
        &self.rows[pos]
    }

    /// Forecast series of candidate `i`.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[i]).collect()
    }

    /// Keeps only the listed candidates, in the listed order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if idx.iter().any(|&i| i >= self.n_candidates()) {
            return Err(Error::Config(format!("candidate index out of range in {idx:?}")));
        }
        let rows = self.rows.iter().map(|r| idx.iter().map(|&i| r[i]).collect()).collect();
        let names = idx.iter().map(|&i| self.names[i].clone()).collect();
        let mut out = Self::new(self.times.clone(), self.y.clone(), names, rows)?;
        out.target = self.target.clone();
        out.horizon = self.horizon;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    Simplex,
    Unrestricted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    kind: WeightKind,
}

impl WeightVector {
    pub fn simplex(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::NoCandidates);
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NumericInput(format!("simplex weights must be finite and nonnegative: {w:?}")));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NumericInput(format!("simplex weights sum to {s}")));
        }
        Ok(Self { w, kind: WeightKind::Simplex })
    }

    /// Rescales nonnegative masses onto the simplex.
    pub fn from_masses(m: Vec<f64>) -> Result<Self> {
        let s: f64 = m.iter().sum();
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::DegenerateWeights);
        }
        Self::simplex(m.into_iter().map(|v| v / s).collect())
    }

    pub fn unrestricted(w: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!("weights must be finite: {w:?}")));
        }
        Ok(Self { w, kind: WeightKind::Unrestricted })
    }

    pub fn uniform(k: usize) -> Self {
        Self { w: vec![1.0 / k as f64; k], kind: WeightKind::Simplex }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn combine(&self, candidates: &[f64]) -> f64 {
        self.w.iter().zip(candidates).map(|(w, c)| w * c).sum()
    }
}

/// Positions (1-based, inclusive) into an aligned series.
///
/// Combiners start producing forecasts at `combine_start`; the loss average
/// covers `eval_start..=eval_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationWindow {
    pub combine_start: usize,
    pub eval_start: usize,
    pub eval_end: usize,
}

impl EvaluationWindow {
    pub fn new(combine_start: usize, eval_start: usize, eval_end: usize) -> Result<Self> {
        if combine_start == 0 || combine_start > eval_start || eval_start > eval_end {
            return Err(Error::Config(format!(
                "window requires 1 <= combine_start <= eval_start <= eval_end, got {combine_start}, {eval_start}, {eval_end}"
            )));
        }
        Ok(Self { combine_start, eval_start, eval_end })
    }

    /// Combine and evaluate over all `n` points.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(1, 1, n)
    }

    pub fn eval_len(&self) -> usize {
        self.eval_end + 1 - self.eval_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub method: String,
    pub point: f64,
    pub se: f64,
    pub n_reps: usize,
}
