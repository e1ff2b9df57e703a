//! Replicated experiments: generate, combine, score, and normalize against
//! the simple average.

use std::fmt;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combiners::{evaluate, CombinerConfig, Method};
use crate::dgp::{
    beta_for_snr, default_snr_grid, generate_breaks, generate_case, generate_screening, BreakConfig, Case,
    ScenarioConfig, ScreeningConfig,
};
use crate::error::{Error, Result};
use crate::mafter::mafter_regret;
use crate::metrics::{mean_se, normalize_vs_baseline};
use crate::numerics::SeededGenerator;
use crate::oracle::{combiner_config_for, ratio_estimate, sample_variance};
use crate::screening::{best_per_size, retain_top, score_models, subset_forecasts, SearchStrategy};
use crate::types::{EvaluationWindow, ForecastPanel};

pub const BASELINE: &str = "sa";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
    Breaks,
    Screening,
}

impl Scenario {
    pub fn case(&self) -> Option<Case> {
        match self {
            Scenario::Case1 => Some(Case::Case1),
            Scenario::Case2 => Some(Case::Case2),
            Scenario::Case3 => Some(Case::Case3),
            Scenario::Case4 => Some(Case::Case4),
            Scenario::Case5 => Some(Case::Case5),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::Case1 => "case1",
            Scenario::Case2 => "case2",
            Scenario::Case3 => "case3",
            Scenario::Case4 => "case4",
            Scenario::Case5 => "case5",
            Scenario::Breaks => "breaks",
            Scenario::Screening => "screening",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "case1" => Ok(Scenario::Case1),
            "case2" => Ok(Scenario::Case2),
            "case3" => Ok(Scenario::Case3),
            "case4" => Ok(Scenario::Case4),
            "case5" => Ok(Scenario::Case5),
            "breaks" => Ok(Scenario::Breaks),
            "screening" => Ok(Scenario::Screening),
            other => Err(Error::Config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Parameters of the regression scenarios other than the coefficient, which
/// comes from the S/N grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseParams {
    pub sigma: f64,
    pub sigma_x: f64,
    pub rho: f64,
    pub t_total: usize,
    pub build_end: usize,
    pub eval_start: usize,
    pub frozen: bool,
}

impl Default for CaseParams {
    fn default() -> Self {
        let s = ScenarioConfig::new(Case::Case1, 0.0);
        Self {
            sigma: s.sigma,
            sigma_x: s.sigma_x,
            rho: s.rho,
            t_total: s.t_total,
            build_end: s.build_end,
            eval_start: s.eval_start,
            frozen: s.frozen,
        }
    }
}

impl CaseParams {
    pub fn scenario(&self, case: Case, snr: f64) -> ScenarioConfig {
        ScenarioConfig {
            case,
            beta: beta_for_snr(snr, self.sigma, self.sigma_x),
            sigma: self.sigma,
            sigma_x: self.sigma_x,
            rho: self.rho,
            t_total: self.t_total,
            build_end: self.build_end,
            eval_start: self.eval_start,
            frozen: self.frozen,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScreeningParams {
    pub sigma: f64,
    pub rho: f64,
    pub strategy: SearchStrategy,
    pub intercept: bool,
}

impl Default for ScreeningParams {
    fn default() -> Self {
        Self { sigma: 1.0, rho: 0.0, strategy: SearchStrategy::Stepwise, intercept: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    /// `None` is the full-history combiner; `Some(rw)` wraps it in a rolling window.
    /// Written as `"none"` or an integer in config files.
    #[serde(with = "rolling_serde")]
    pub rolling: Vec<Option<usize>>,
    pub snr_grid: Vec<f64>,
    pub top_percents: Vec<u32>,
    pub n_reps: usize,
    pub seed: u64,
    pub case: CaseParams,
    pub breaks: BreakConfig,
    pub screening: ScreeningParams,
    pub combiner: CombinerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Case2,
            methods: Method::ALL.to_vec(),
            rolling: vec![None],
            snr_grid: default_snr_grid(),
            top_percents: vec![10, 20, 40, 60, 80],
            n_reps: 100,
            seed: 0,
            case: CaseParams::default(),
            breaks: BreakConfig::default(),
            screening: ScreeningParams::default(),
            combiner: CombinerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_scenario(scenario: Scenario) -> Self {
        let mut cfg = Self { scenario, ..Self::default() };
        if scenario == Scenario::Breaks {
            cfg.methods = vec![Method::Sa, Method::LinReg, Method::Bg, Method::After];
            cfg.rolling = vec![None, Some(40), Some(20)];
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be positive".into()));
        }
        if !self.methods.contains(&Method::Sa) {
            return Err(Error::Config("the simple average is the baseline and must be among the methods".into()));
        }
        if self.rolling.is_empty() {
            return Err(Error::Config("at least one rolling setting is required".into()));
        }
        if let Some(rw) = self.rolling.iter().flatten().find(|rw| **rw < 2) {
            return Err(Error::Config(format!("rolling window {rw} is below 2")));
        }
        match self.scenario {
            s if s.case().is_some() => {
                if self.snr_grid.is_empty() || self.snr_grid.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(Error::Config("signal-to-noise grid must be non-empty and nonnegative".into()));
                }
                self.case.scenario(s.case().unwrap(), self.snr_grid[0]).validate()
            }
            Scenario::Breaks => self.breaks.validate(),
            _ => {
                if self.top_percents.is_empty() || self.top_percents.iter().any(|x| *x == 0 || *x > 100) {
                    return Err(Error::Config("top shares must lie in 1..=100".into()));
                }
                ScreeningConfig::new(self.screening.sigma, self.screening.rho).validate()
            }
        }
    }

    /// Human-readable settings recorded alongside results.
    pub fn flags(&self) -> Vec<String> {
        let mut f = vec![
            format!("scenario={}", self.scenario.as_str()),
            format!("n_reps={}", self.n_reps),
            "after_prior_variance=presample".to_string(),
        ];
        match self.scenario {
            s if s.case().is_some() => {
                f.push(format!("candidates={}", if self.case.frozen { "frozen" } else { "recursive" }));
                f.push(format!("rho={}", self.case.rho));
            }
            Scenario::Breaks => {
                let policy = policy_name(&self.breaks.policy);
                f.push(format!("stationarity={policy}"));
            }
            _ => {
                f.push(format!("search={:?}", self.screening.strategy).to_lowercase());
                f.push(format!("rho={}", self.screening.rho));
                f.push(format!("sigma={}", self.screening.sigma));
            }
        }
        f
    }
}

mod rolling_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Window(usize),
        Label(String),
    }

    pub fn serialize<S: Serializer>(v: &[Option<usize>], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|w| match w {
                Some(n) => Repr::Window(*n),
                None => Repr::Label("none".into()),
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Option<usize>>, D::Error> {
        Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(|r| match r {
                Repr::Window(n) => Ok(Some(n)),
                Repr::Label(s) if s.eq_ignore_ascii_case("none") => Ok(None),
                Repr::Label(s) => s.parse().map(Some).map_err(|_| serde::de::Error::custom(format!("bad rolling window `{s}`"))),
            })
            .collect()
    }
}

fn policy_name(p: &crate::dgp::StationarityPolicy) -> &'static str {
    match p {
        crate::dgp::StationarityPolicy::Verbatim => "verbatim",
        crate::dgp::StationarityPolicy::RejectNonstationary => "reject_nonstationary",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridPoint {
    None,
    Snr(f64),
    TopPercent(u32),
    Horizon(u32),
    HorizonAverage,
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridPoint::None => write!(f, "-"),
            GridPoint::Snr(v) => write!(f, "snr={v}"),
            GridPoint::TopPercent(x) => write!(f, "top={x}"),
            GridPoint::Horizon(h) => write!(f, "h={h}"),
            GridPoint::HorizonAverage => write!(f, "h=avg"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub method: Method,
    pub rw: Option<usize>,
    pub grid: GridPoint,
    pub point: f64,
    pub se: f64,
    pub n_reps: usize,
}

impl ResultRow {
    pub fn label(&self) -> String {
        method_label(self.method, self.rw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub seed: u64,
    pub version: String,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: RunMetadata,
}

impl ResultTable {
    pub fn find(&self, method: Method, rw: Option<usize>, grid: GridPoint) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.method == method && r.rw == rw && r.grid == grid)
    }

    /// Rows of one method and window, in grid order.
    pub fn series(&self, method: Method, rw: Option<usize>) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.method == method && r.rw == rw).collect()
    }
}

pub fn method_label(method: Method, rw: Option<usize>) -> String {
    match rw {
        None => method.as_str().to_string(),
        Some(rw) => format!("{}_rw{rw}", method.as_str()),
    }
}

fn parse_label(label: &str) -> Result<(Method, Option<usize>)> {
    match label.split_once("_rw") {
        None => Ok((label.parse()?, None)),
        Some((m, rw)) => {
            let rw = rw.parse().map_err(|_| Error::Config(format!("bad method label `{label}`")))?;
            Ok((m.parse()?, Some(rw)))
        }
    }
}

fn stream_id(grid_index: usize, rep: usize) -> u64 {
    ((grid_index as u64) << 32) | rep as u64
}

/// MSFE of every configured (method, window) pair on one panel.
fn score_panel(
    cfg: &ExperimentConfig,
    panel: &ForecastPanel,
    window: &EvaluationWindow,
    ccfg: &CombinerConfig,
) -> Result<IndexMap<String, f64>> {
    let k = panel.n_candidates();
    let mut out = IndexMap::new();
    out.insert(BASELINE.to_string(), evaluate(Method::Sa.build(k, ccfg), panel, window)?);
    for rw in &cfg.rolling {
        for m in &cfg.methods {
            if *m == Method::Sa {
                continue;
            }
            out.insert(method_label(*m, *rw), evaluate(m.build_rolling(k, ccfg, *rw)?, panel, window)?);
        }
    }
    Ok(out)
}

fn wrap(rep: usize, seed: u64) -> impl Fn(Error) -> Error {
    move |e| Error::Replication { index: rep, seed, source: Box::new(e) }
}

fn replicate_case(cfg: &ExperimentConfig, case: Case, snr: f64, grid_index: usize, rep: usize) -> Result<IndexMap<String, f64>> {
    let scenario = cfg.case.scenario(case, snr);
    let mut gen = SeededGenerator::new(cfg.seed, stream_id(grid_index, rep));
    let sim = generate_case(&scenario, &mut gen)?;
    let ccfg = with_prior(&cfg.combiner, &sim.presample_y);
    score_panel(cfg, &sim.panel, &sim.window, &ccfg)
}

fn replicate_breaks(cfg: &ExperimentConfig, rep: usize) -> Result<IndexMap<String, f64>> {
    let mut gen = SeededGenerator::new(cfg.seed, stream_id(0, rep));
    let b = generate_breaks(&cfg.breaks, &mut gen)?;
    let ccfg = with_prior(&cfg.combiner, &b.sim.presample_y);
    score_panel(cfg, &b.sim.panel, &b.sim.window, &ccfg)
}

/// One screening replication scored at every retained share.
fn replicate_screening(cfg: &ExperimentConfig, rep: usize) -> Result<Vec<IndexMap<String, f64>>> {
    let sc = ScreeningConfig::new(cfg.screening.sigma, cfg.screening.rho);
    let mut gen = SeededGenerator::new(cfg.seed, stream_id(0, rep));
    let (x, y) = generate_screening(&sc, &mut gen)?;
    let n = sc.screen_end;
    let intercept = cfg.screening.intercept;
    let mut models = best_per_size(&x[..n], &y[..n], cfg.screening.strategy, intercept)?;
    score_models(&mut models, n, intercept)?;
    let ccfg = with_prior(&cfg.combiner, &y[..n]);
    cfg.top_percents
        .iter()
        .map(|&pct| {
            let kept = retain_top(&models, pct)?;
            let panel = subset_forecasts(&x, &y, &kept, n, intercept)?;
            score_panel(cfg, &panel, &sc.window(), &ccfg)
        })
        .collect()
}

fn with_prior(base: &CombinerConfig, presample: &[f64]) -> CombinerConfig {
    let mut c = base.clone();
    c.after.prior_variance = combiner_config_for(presample).after.prior_variance;
    c
}

fn rows_from_reps(scenario: &str, grid: GridPoint, reps: &[IndexMap<String, f64>]) -> Result<Vec<ResultRow>> {
    normalize_vs_baseline(reps, BASELINE)?
        .into_iter()
        .map(|r| {
            let (method, rw) = parse_label(&r.method)?;
            Ok(ResultRow { scenario: scenario.to_string(), method, rw, grid, point: r.point, se: r.se, n_reps: r.n_reps })
        })
        .collect()
}

/// Runs the configured experiment. Replications run in parallel; each draws
/// from its own stream, so results do not depend on thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let name = cfg.scenario.as_str();
    let mut rows = Vec::new();
    match cfg.scenario {
        s if s.case().is_some() => {
            let case = s.case().unwrap();
            for (gi, &snr) in cfg.snr_grid.iter().enumerate() {
                let reps = (0..cfg.n_reps)
                    .into_par_iter()
                    .map(|r| replicate_case(cfg, case, snr, gi, r).map_err(wrap(r, cfg.seed)))
                    .collect::<Result<Vec<_>>>()?;
                rows.extend(rows_from_reps(name, GridPoint::Snr(snr), &reps)?);
            }
        }
        Scenario::Breaks => {
            let reps = (0..cfg.n_reps)
                .into_par_iter()
                .map(|r| replicate_breaks(cfg, r).map_err(wrap(r, cfg.seed)))
                .collect::<Result<Vec<_>>>()?;
            rows.extend(rows_from_reps(name, GridPoint::None, &reps)?);
        }
        _ => {
            let reps = (0..cfg.n_reps)
                .into_par_iter()
                .map(|r| replicate_screening(cfg, r).map_err(wrap(r, cfg.seed)))
                .collect::<Result<Vec<_>>>()?;
            for (i, &pct) in cfg.top_percents.iter().enumerate() {
                let at: Vec<IndexMap<String, f64>> = reps.iter().map(|r| r[i].clone()).collect();
                rows.extend(rows_from_reps(name, GridPoint::TopPercent(pct), &at)?);
            }
        }
    }
    Ok(ResultTable { rows, metadata: metadata(cfg.seed, cfg.flags()) })
}

fn metadata(seed: u64, flags: Vec<String>) -> RunMetadata {
    RunMetadata { seed, version: env!("CARGO_PKG_VERSION").to_string(), flags }
}

/// Scores methods on observed panels. The first `warmup_fraction` of each
/// panel is combined but not scored. With more than one panel, an extra
/// row per method averages the normalized risks across panels.
pub fn run_panel_eval(
    panels: &[ForecastPanel],
    methods: &[Method],
    rolling: &[Option<usize>],
    warmup_fraction: f64,
    base: &CombinerConfig,
) -> Result<ResultTable> {
    if panels.is_empty() {
        return Err(Error::Config("no panels to evaluate".into()));
    }
    if !(0.0..1.0).contains(&warmup_fraction) {
        return Err(Error::Config(format!("warm-up fraction must be in [0, 1), got {warmup_fraction}")));
    }
    let cfg = ExperimentConfig {
        methods: methods.to_vec(),
        rolling: rolling.to_vec(),
        n_reps: 1,
        combiner: base.clone(),
        ..ExperimentConfig::default()
    };
    if !methods.contains(&Method::Sa) {
        return Err(Error::Config("the simple average is the baseline and must be among the methods".into()));
    }
    let mut rows = Vec::new();
    for (i, panel) in panels.iter().enumerate() {
        let n = panel.len();
        let warm = (n as f64 * warmup_fraction).ceil() as usize;
        if n < 4 || warm >= n {
            return Err(Error::InsufficientData(format!("panel {} has {n} rows", i + 1)));
        }
        let window = EvaluationWindow::new(1, warm + 1, n)?;
        let prior = sample_variance(&panel.y()[..warm]).unwrap_or(1.0);
        let mut ccfg = base.clone();
        ccfg.after.prior_variance = prior;
        let scores = score_panel(&cfg, panel, &window, &ccfg)?;
        let grid = GridPoint::Horizon(panel.horizon.unwrap_or(i as u32 + 1));
        let scenario = panel.target.clone().unwrap_or_else(|| "panel".to_string());
        rows.extend(rows_from_reps(&scenario, grid, &[scores])?);
    }
    if panels.len() > 1 {
        let mut avg: IndexMap<(Method, Option<usize>), Vec<f64>> = IndexMap::new();
        for r in &rows {
            avg.entry((r.method, r.rw)).or_default().push(r.point);
        }
        let scenario = rows[0].scenario.clone();
        for ((method, rw), pts) in avg {
            let (point, se) = if method == Method::Sa { (1.0, 0.0) } else { mean_se(&pts) };
            rows.push(ResultRow {
                scenario: scenario.clone(),
                method,
                rw,
                grid: GridPoint::HorizonAverage,
                point,
                se,
                n_reps: pts.len(),
            });
        }
    }
    let flags = vec![format!("warmup_fraction={warmup_fraction}"), "after_prior_variance=warmup".to_string()];
    Ok(ResultTable { rows, metadata: metadata(0, flags) })
}

/// Ratio of a method's average MSFE under `case` to its average MSFE under
/// Case 2 on the same draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub case: Case,
    pub method: Method,
    pub snr: f64,
    pub ratio: f64,
    pub se: f64,
}

/// Sensitivity of SA and AFTER to adding a bad, irrelevant, or duplicated
/// candidate: every replication draws one Case-k panel and the Case-2 panel
/// from the same stream.
pub fn run_robustness(cfg: &ExperimentConfig, cases: &[Case]) -> Result<Vec<RobustnessRow>> {
    if cfg.n_reps < 2 {
        return Err(Error::Config("robustness needs at least two replications".into()));
    }
    let methods = [Method::Sa, Method::After];
    let mut out = Vec::new();
    for &case in cases {
        for (gi, &snr) in cfg.snr_grid.iter().enumerate() {
            let per_rep = (0..cfg.n_reps)
                .into_par_iter()
                .map(|r| {
                    let run = |c: Case| -> Result<Vec<f64>> {
                        let scenario = cfg.case.scenario(c, snr);
                        let mut gen = SeededGenerator::new(cfg.seed, stream_id(gi, r));
                        let sim = generate_case(&scenario, &mut gen)?;
                        let ccfg = with_prior(&cfg.combiner, &sim.presample_y);
                        let k = sim.panel.n_candidates();
                        methods.iter().map(|m| evaluate(m.build(k, &ccfg), &sim.panel, &sim.window)).collect()
                    };
                    Ok((run(case)?, run(Case::Case2)?))
                })
                .map(|r: Result<_>| r.map_err(wrap(0, cfg.seed)))
                .collect::<Result<Vec<(Vec<f64>, Vec<f64>)>>>()?;
            for (j, m) in methods.iter().enumerate() {
                let num: Vec<f64> = per_rep.iter().map(|(a, _)| a[j]).collect();
                let den: Vec<f64> = per_rep.iter().map(|(_, b)| b[j]).collect();
                let est = ratio_estimate(&num, &den);
                out.push(RobustnessRow { case, method: *m, snr, ratio: est.mean, se: est.se });
            }
        }
    }
    Ok(out)
}

/// Mean and standard error of the mAFTER regret for Case 1 at each sample size.
/// The forecast span always starts at `T * 0.6 + 1` and is scored in full.
pub fn regret_decay(params: &CaseParams, snr: f64, sizes: &[usize], n_reps: usize, seed: u64) -> Result<Vec<(usize, f64, f64)>> {
    sizes
        .iter()
        .enumerate()
        .map(|(gi, &t)| {
            let mut p = params.clone();
            p.t_total = t;
            p.build_end = t * 3 / 5;
            p.eval_start = p.build_end + 1;
            let scenario = p.scenario(Case::Case1, snr);
            scenario.validate()?;
            let regrets = (0..n_reps)
                .into_par_iter()
                .map(|r| {
                    let mut gen = SeededGenerator::new(seed, stream_id(gi, r));
                    let sim = generate_case(&scenario, &mut gen)?;
                    let ccfg = combiner_config_for(&sim.presample_y);
                    mafter_regret(&sim.panel, &sim.window, &ccfg)
                })
                .collect::<Result<Vec<f64>>>()?;
            let (m, se) = mean_se(&regrets);
            Ok((t, m, se))
        })
        .collect()
}
