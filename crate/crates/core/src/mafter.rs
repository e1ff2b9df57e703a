//! Two-level AFTER: AFTER run over the simple average, AFTER and regression
//! combinations of the original candidates.

use crate::combiners::{self, After, Combiner, CombinerConfig, LinReg, SimpleAverage};
use crate::error::Result;
use crate::metrics::msfe;
use crate::types::{EvaluationWindow, ForecastPanel, WeightVector};

pub struct MultiLevelAfter {
    cfg: CombinerConfig,
    sa: SimpleAverage,
    after: After,
    linreg: LinReg,
    level2: After,
}

impl MultiLevelAfter {
    /// Level-1 outputs in the order SA, AFTER, LinReg.
    pub const LEVEL1: [&'static str; 3] = ["sa", "after", "linreg"];

    pub fn new(k: usize, cfg: &CombinerConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            sa: SimpleAverage::new(k),
            after: After::new(k, cfg.after),
            linreg: LinReg::new(k, cfg.linreg_intercept, cfg.linreg_min_obs),
            level2: After::new(3, cfg.after),
        }
    }

    pub fn level1_forecasts(&self, candidates: &[f64]) -> Result<[f64; 3]> {
        Ok([
            self.sa.forecast(candidates)?,
            self.after.forecast(candidates)?,
            self.linreg.forecast(candidates)?,
        ])
    }

    pub fn level2_weights(&self) -> WeightVector {
        self.level2.weights()
    }
}

impl Combiner for MultiLevelAfter {
    fn name(&self) -> String {
        "mafter".into()
    }

    fn n_candidates(&self) -> usize {
        self.sa.n_candidates()
    }

    fn forecast(&self, candidates: &[f64]) -> Result<f64> {
        let level1 = self.level1_forecasts(candidates)?;
        self.level2.forecast(&level1)
    }

    fn update(&mut self, candidates: &[f64], y: f64) -> Result<()> {
        let level1 = self.level1_forecasts(candidates)?;
        self.level2.update(&level1, y)?;
        self.sa.update(candidates, y)?;
        self.after.update(candidates, y)?;
        self.linreg.update(candidates, y)
    }

    fn weights(&self) -> WeightVector {
        self.level2_weights()
    }

    fn fresh(&self) -> Box<dyn Combiner> {
        Box::new(Self::new(self.n_candidates(), &self.cfg))
    }
}

/// Realized regret of mAFTER: its MSFE minus the smallest MSFE among the
/// individual candidates, SA and LinReg over the same window.
pub fn mafter_regret(panel: &ForecastPanel, window: &EvaluationWindow, cfg: &CombinerConfig) -> Result<f64> {
    let k = panel.n_candidates();
    let m = combiners::evaluate(Box::new(MultiLevelAfter::new(k, cfg)), panel, window)?;
    let sa = combiners::evaluate(Box::new(SimpleAverage::new(k)), panel, window)?;
    let lr = combiners::evaluate(Box::new(LinReg::new(k, cfg.linreg_intercept, cfg.linreg_min_obs)), panel, window)?;
    let mut best = sa.min(lr);
    for i in 0..k {
        best = best.min(msfe(panel.y(), &panel.series(i), window)?);
    }
    Ok(m - best)
}
