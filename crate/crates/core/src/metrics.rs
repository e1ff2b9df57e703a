//! Loss averages and baseline normalization.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::types::{EvaluationWindow, RiskReport};

/// Mean squared forecast error over `window.eval_start..=window.eval_end`.
pub fn msfe(actual: &[f64], predicted: &[f64], window: &EvaluationWindow) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::Alignment(format!(
            "actual has {} points, predicted has {}",
            actual.len(),
            predicted.len()
        )));
    }
    if window.eval_end > actual.len() {
        return Err(Error::Alignment(format!(
            "window ends at {} but series has {} points",
            window.eval_end,
            actual.len()
        )));
    }
    let range = window.eval_start - 1..window.eval_end;
    if range.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let n = range.len() as f64;
    let sse: f64 = actual[range.clone()]
        .iter()
        .zip(&predicted[range])
        .map(|(a, p)| (a - p) * (a - p))
        .sum();
    Ok(sse / n)
}

/// Mean and standard error (sample sd over `sqrt(n)`) of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Per-replication ratios against `baseline`, summarized as mean and standard error.
///
/// Methods are reported in the order they appear in the first replication.
/// The baseline row is pinned to exactly `1` with zero standard error.
pub fn normalize_vs_baseline(reps: &[IndexMap<String, f64>], baseline: &str) -> Result<Vec<RiskReport>> {
    let first = reps.first().ok_or(Error::EmptyWindow)?;
    let mut ratios: IndexMap<&str, Vec<f64>> =
        first.keys().map(|k| (k.as_str(), Vec::with_capacity(reps.len()))).collect();
    for (r, rep) in reps.iter().enumerate() {
        let base = *rep
            .get(baseline)
            .ok_or_else(|| Error::Config(format!("baseline `{baseline}` missing in replication {r}")))?;
        if !(base > 0.0) {
            return Err(Error::DegenerateBaseline { method: baseline.to_string(), replication: r });
        }
        for (method, acc) in ratios.iter_mut() {
            let v = rep
                .get(*method)
                .ok_or_else(|| Error::Config(format!("method `{method}` missing in replication {r}")))?;
            acc.push(v / base);
        }
    }
    Ok(ratios
        .into_iter()
        .map(|(method, xs)| {
            let (point, se) = if method == baseline { (1.0, 0.0) } else { mean_se(&xs) };
            RiskReport { method: method.to_string(), point, se, n_reps: xs.len() }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn full(n: usize) -> EvaluationWindow {
        EvaluationWindow::full(n).unwrap()
    }

    #[test]
    fn msfe_examples() {
        assert_eq!(msfe(&[1.0, 2.0], &[1.0, 2.0], &full(2)).unwrap(), 0.0);
        assert_eq!(msfe(&[0.0, 0.0], &[1.0, -1.0], &full(2)).unwrap(), 1.0);
        assert_eq!(msfe(&[3.0], &[1.0], &full(1)).unwrap(), 4.0);
    }

    #[test]
    fn msfe_uses_only_eval_span() {
        let w = EvaluationWindow::new(1, 3, 4).unwrap();
        let v = msfe(&[9.0, 9.0, 1.0, 1.0], &[0.0, 0.0, 0.0, 2.0], &w).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn msfe_errors() {
        assert!(matches!(msfe(&[1.0], &[1.0, 2.0], &full(1)), Err(Error::Alignment(_))));
        assert!(matches!(msfe(&[1.0], &[1.0], &full(3)), Err(Error::Alignment(_))));
        assert!(EvaluationWindow::new(2, 1, 3).is_err());
    }

    fn rep(pairs: &[(&str, f64)]) -> IndexMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn normalization_examples() {
        let reps = vec![rep(&[("sa", 1.0), ("a", 0.9)]), rep(&[("sa", 2.0), ("a", 1.4)])];
        let out = normalize_vs_baseline(&reps, "sa").unwrap();
        assert_eq!(out[0].method, "sa");
        assert_eq!((out[0].point, out[0].se), (1.0, 0.0));
        assert_relative_eq!(out[1].point, 0.8, epsilon = 1e-12);
        assert_relative_eq!(out[1].se, 0.1, epsilon = 1e-12);
        assert_eq!(out[1].n_reps, 2);
    }

    #[test]
    fn normalization_reproduces_table_row_shape() {
        // ratios with mean 1.64 and standard error 0.42 over 4 reps:
        // sd = 0.84 -> deviations of +-0.84*sqrt(3)/2 around the mean.
        let d = 0.84 * 3f64.sqrt() / 2.0;
        let ratios = [1.64 - d, 1.64 + d, 1.64 - d, 1.64 + d];
        let reps: Vec<_> = ratios.iter().map(|r| rep(&[("sa", 2.0), ("linreg", 2.0 * r)])).collect();
        let out = normalize_vs_baseline(&reps, "sa").unwrap();
        assert_relative_eq!(out[1].point, 1.64, epsilon = 1e-12);
        assert_relative_eq!(out[1].se, 0.42, epsilon = 1e-12);
    }

    #[test]
    fn zero_baseline_is_rejected() {
        let reps = vec![rep(&[("sa", 0.0), ("a", 1.0)])];
        assert!(matches!(
            normalize_vs_baseline(&reps, "sa"),
            Err(Error::DegenerateBaseline { replication: 0, .. })
        ));
    }

    proptest! {
        #[test]
        fn msfe_permutation_invariant(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40), seed in any::<u64>()) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let mut idx: Vec<usize> = (0..a.len()).collect();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let a2: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
            let p2: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let w = full(a.len());
            let m1 = msfe(&a, &p, &w).unwrap();
            let m2 = msfe(&a2, &p2, &w).unwrap();
            prop_assert!((m1 - m2).abs() <= 1e-9 * m1.max(1.0));
            prop_assert_eq!(msfe(&a, &a, &w).unwrap(), 0.0);
        }

        #[test]
        fn renormalization_is_idempotent(vals in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..20)) {
            let reps: Vec<_> = vals.iter().map(|(b, a)| rep(&[("sa", *b), ("a", *a)])).collect();
            let once = normalize_vs_baseline(&reps, "sa").unwrap();
            let ratio_reps: Vec<_> = vals.iter().map(|(b, a)| rep(&[("sa", 1.0), ("a", a / b)])).collect();
            let twice = normalize_vs_baseline(&ratio_reps, "sa").unwrap();
            for (x, y) in once.iter().zip(&twice) {
                prop_assert!((x.point - y.point).abs() <= 1e-12 * x.point.abs().max(1.0));
            }
        }
    }
}
