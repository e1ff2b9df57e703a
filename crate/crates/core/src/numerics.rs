//! Least squares, variance estimates, log-domain weights and seeded streams.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::WeightVector;

/// Default lower bound applied to every error-variance estimate.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub intercept: Option<f64>,
    pub coefficients: Vec<f64>,
    pub residual_sum_squares: f64,
    pub rank: usize,
    pub dof: usize,
}

impl LeastSquaresFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept.unwrap_or(0.0) + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// Ordinary least squares on the rows of `design`.
///
/// Rank-deficient designs get the minimum-norm solution (over the intercept
/// and slopes jointly), computed from a truncated SVD.
pub fn ols(design: &[Vec<f64>], y: &[f64], intercept: bool) -> Result<LeastSquaresFit> {
    let n = design.len();
    if n == 0 {
        return Err(Error::InsufficientData("least squares needs at least one row".into()));
    }
    if y.len() != n {
        return Err(Error::Alignment(format!("design has {n} rows, response has {}", y.len())));
    }
    let p = design[0].len();
    if p == 0 && !intercept {
        return Err(Error::InsufficientData("least squares needs at least one regressor".into()));
    }
    if design.iter().any(|r| r.len() != p) {
        return Err(Error::Alignment("design rows have unequal lengths".into()));
    }
    if design.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("least squares input contains non-finite values".into()));
    }
    let off = usize::from(intercept);
    let cols = p + off;
    let x = DMatrix::from_fn(n, cols, |i, j| if j < off { 1.0 } else { design[i][j - off] });
    let b = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = n.max(cols) as f64 * f64::EPSILON * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let beta = if rank == 0 {
        DVector::zeros(cols)
    } else {
        svd.solve(&b, tol).map_err(|e| Error::NumericInput(e.to_string()))?
    };
    let resid = &b - &x * &beta;
    let rss = resid.norm_squared();
    let (icpt, slopes) = if intercept {
        (Some(beta[0]), beta.iter().skip(1).copied().collect())
    } else {
        (None, beta.iter().copied().collect())
    };
    Ok(LeastSquaresFit {
        intercept: icpt,
        coefficients: slopes,
        residual_sum_squares: rss,
        rank,
        dof: n - rank,
    })
}

/// Least squares accumulated through the normal equations, one row at a time.
///
/// Used for expanding-window refits where the design has a handful of columns
/// and thousands of rows; [`ols`] is the reference implementation.
#[derive(Debug, Clone)]
pub struct RecursiveLs {
    intercept: bool,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    n: usize,
}

impl RecursiveLs {
    pub fn new(p: usize, intercept: bool) -> Self {
        let cols = p + usize::from(intercept);
        Self { intercept, xtx: DMatrix::zeros(cols, cols), xty: DVector::zeros(cols), n: 0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, x: &[f64], y: f64) {
        let off = usize::from(self.intercept);
        let cols = self.xty.len();
        let at = |j: usize| if j < off { 1.0 } else { x[j - off] };
        for i in 0..cols {
            let xi = at(i);
            self.xty[i] += xi * y;
            for j in 0..=i {
                let v = xi * at(j);
                self.xtx[(i, j)] += v;
                if i != j {
                    self.xtx[(j, i)] += v;
                }
            }
        }
        self.n += 1;
    }

    /// Minimum-norm coefficients; the intercept (when present) comes first.
    /// Returns zeros before any row has been pushed.
    pub fn coefficients(&self) -> Vec<f64> {
        let cols = self.xty.len();
        if cols == 1 {
            let g = self.xtx[(0, 0)];
            return vec![if g > 0.0 { self.xty[0] / g } else { 0.0 }];
        }
        let eig = SymmetricEigen::new(self.xtx.clone());
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if lmax == 0.0 {
            return vec![0.0; cols];
        }
        let tol = lmax * 1e-12 * cols as f64;
        let qty = eig.eigenvectors.transpose() * &self.xty;
        let scaled = DVector::from_iterator(
            cols,
            qty.iter().zip(eig.eigenvalues.iter()).map(|(q, l)| if *l > tol { q / l } else { 0.0 }),
        );
        (&eig.eigenvectors * scaled).iter().copied().collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let b = self.coefficients();
        let off = usize::from(self.intercept);
        let icpt = if self.intercept { b[0] } else { 0.0 };
        icpt + b[off..].iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Mean squared error with a floor; `prior` stands in for an empty history.
pub fn running_error_variance(errors: &[f64], floor: f64, prior: f64) -> f64 {
    if errors.is_empty() {
        return prior.max(floor);
    }
    let ms = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    ms.max(floor)
}

/// Softmax of log-scores onto the simplex, stable for arbitrarily spread scores.
pub fn normalize_log_weights(log_scores: &[f64]) -> Result<WeightVector> {
    if log_scores.is_empty() {
        return Err(Error::NoCandidates);
    }
    if log_scores.iter().any(|s| s.is_nan() || *s == f64::INFINITY) {
        return Err(Error::NumericInput(format!("log-scores must be < +inf: {log_scores:?}")));
    }
    let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights);
    }
    let masses: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
    WeightVector::from_masses(masses)
}

/// Deterministic random stream keyed by a master seed and a stream id.
///
/// ChaCha8 with the stream id mapped onto the cipher's stream counter, so
/// replications can run in any order or in parallel and still produce
/// identical draws.
#[derive(Debug, Clone)]
pub struct SeededGenerator {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl SeededGenerator {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ols_exact_line() {
        let fit = ols(&[vec![1.0], vec![2.0]], &[2.0, 4.0], false).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert!(fit.residual_sum_squares < 1e-20);
        assert_eq!(fit.rank, 1);
    }

    #[test]
    fn ols_min_norm_on_rank_one() {
        // X = [[1,1],[2,2]]: X^+ y = (X^T X)^+ X^T y; X^T y = (5,5), X^T X = 5*[[1,1],[1,1]],
        // pseudoinverse of [[1,1],[1,1]] is [[1,1],[1,1]]/4, giving (10,10)/20 = (0.5,0.5).
        let fit = ols(&[vec![1.0, 1.0], vec![2.0, 2.0]], &[1.0, 2.0], false).unwrap();
        assert_relative_eq!(fit.coefficients[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(fit.coefficients[1], 0.5, epsilon = 1e-12);
        assert_eq!(fit.rank, 1);
        assert_eq!(fit.dof, 1);
    }

    #[test]
    fn ols_orthogonal_regressor() {
        let fit = ols(&[vec![1.0], vec![-1.0]], &[1.0, 1.0], false).unwrap();
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert_relative_eq!(fit.residual_sum_squares, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_intercept_only_is_mean() {
        let design = vec![Vec::new(); 4];
        let fit = ols(&design, &[1.0, 2.0, 3.0, 6.0], true).unwrap();
        assert_relative_eq!(fit.intercept.unwrap(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn ols_errors() {
        assert!(matches!(ols(&[], &[], true), Err(Error::InsufficientData(_))));
        assert!(matches!(ols(&[vec![f64::NAN]], &[1.0], false), Err(Error::NumericInput(_))));
    }

    #[test]
    fn variance_examples() {
        assert_eq!(running_error_variance(&[1.0, -1.0], 1e-8, 5.0), 1.0);
        assert_eq!(running_error_variance(&[0.0, 0.0], 1e-8, 5.0), 1e-8);
        assert_eq!(running_error_variance(&[3.0], 1e-8, 5.0), 9.0);
        assert_eq!(running_error_variance(&[], 1e-8, 5.0), 5.0);
    }

    #[test]
    fn log_weight_examples() {
        let w = normalize_log_weights(&[0.0, 0.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.5, 0.5]);
        let w = normalize_log_weights(&[1000.0, 0.0]).unwrap();
        assert_relative_eq!(w.as_slice()[0], 1.0, epsilon = 1e-15);
        assert!(w.as_slice()[1] < 1e-300);
        let w = normalize_log_weights(&[-7.5; 3]).unwrap();
        for v in w.as_slice() {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(matches!(
            normalize_log_weights(&[f64::NEG_INFINITY; 2]),
            Err(Error::DegenerateWeights)
        ));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |s, id| {
            let mut g = SeededGenerator::new(s, id);
            (0..16).map(|_| g.standard_normal()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    fn rows_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
        (1usize..4, 6usize..30).prop_flat_map(|(p, n)| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, p), n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn ols_residuals_orthogonal((design, y) in rows_strategy(), intercept in any::<bool>()) {
            let fit = ols(&design, &y, intercept).unwrap();
            let resid: Vec<f64> = design.iter().zip(&y).map(|(r, v)| v - fit.predict(r)).collect();
            let scale = design.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
                * y.iter().map(|v| v * v).sum::<f64>().sqrt() + 1.0;
            for j in 0..design[0].len() {
                let dot: f64 = design.iter().zip(&resid).map(|(r, e)| r[j] * e).sum();
                prop_assert!(dot.abs() <= 1e-8 * scale);
            }
            if intercept {
                prop_assert!(resid.iter().sum::<f64>().abs() <= 1e-8 * scale);
            }
            prop_assert!(fit.residual_sum_squares >= 0.0);
        }

        #[test]
        fn slope_only_closed_form(pairs in prop::collection::vec((0.1f64..5.0, -5.0f64..5.0), 2..30)) {
            let design: Vec<Vec<f64>> = pairs.iter().map(|(x, _)| vec![*x]).collect();
            let y: Vec<f64> = pairs.iter().map(|(_, v)| *v).collect();
            let sxy: f64 = pairs.iter().map(|(x, v)| x * v).sum();
            let sxx: f64 = pairs.iter().map(|(x, _)| x * x).sum();
            let fit = ols(&design, &y, false).unwrap();
            prop_assert!((fit.coefficients[0] - sxy / sxx).abs() <= 1e-10 * (1.0 + (sxy / sxx).abs()));
        }

        #[test]
        fn recursive_matches_batch((design, y) in rows_strategy(), intercept in any::<bool>()) {
            let mut rec = RecursiveLs::new(design[0].len(), intercept);
            for (r, v) in design.iter().zip(&y) {
                rec.push(r, *v);
            }
            let fit = ols(&design, &y, intercept).unwrap();
            let x0 = &design[0];
            prop_assert!((rec.predict(x0) - fit.predict(x0)).abs() <= 1e-7 * (1.0 + fit.predict(x0).abs()));
        }

        #[test]
        fn log_weights_shift_invariant(scores in prop::collection::vec(-800.0f64..800.0, 1..8), c in -1e3f64..1e3) {
            let a = normalize_log_weights(&scores).unwrap();
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let b = normalize_log_weights(&shifted).unwrap();
            let sum: f64 = a.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
