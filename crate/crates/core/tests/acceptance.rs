//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

use std::path::Path;
use std::time::Instant;

use fcp_core::combiners::{run_combiner, CombinerConfig, Method};
use fcp_core::dgp::{default_snr_grid, Case, ScenarioConfig};
use fcp_core::harness::{
    regret_decay, run_experiment, run_panel_eval, run_robustness, CaseParams, ExperimentConfig, GridPoint, ResultTable,
    Scenario,
};
use fcp_core::io::read_panel;
use fcp_core::numerics::SeededGenerator;
use fcp_core::oracle::{case1_limit, case2_limit, mc_risk, ratio_estimate, window_losses, RiskTarget};
use fcp_core::screening::{best_per_size, SearchStrategy};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn point(t: &ResultTable, m: Method, rw: Option<usize>, g: GridPoint) -> f64 {
    t.find(m, rw, g).unwrap_or_else(|| panic!("missing row {m} {rw:?} {g}")).point
}

fn grid_table(scenario: Scenario) -> ResultTable {
    let mut cfg = ExperimentConfig::for_scenario(scenario);
    cfg.seed = SEED;
    cfg.n_reps = 100;
    run_experiment(&cfg).expect("grid experiment")
}

fn long_case(case: Case) -> ScenarioConfig {
    let mut s = ScenarioConfig::new(case, 1.0);
    s.t_total = 2000;
    s.build_end = 1000;
    s.eval_start = 1001;
    s
}

fn criterion1() -> Outcome {
    let start = Instant::now();
    let l = window_losses(&long_case(Case::Case1), &[RiskTarget::Candidate(0), RiskTarget::Fixed(vec![0.5, 0.5])], 200, SEED)
        .expect("case 1 losses");
    let r = ratio_estimate(&l[0], &l[1]);
    let target = case1_limit(1.0, 1.0, 1.0).unwrap().ratio;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (r.mean - target).abs() <= 0.03 && secs <= 60.0,
        format!("ratio {:.4} (se {:.4}) vs {target}, {secs:.1}s", r.mean, r.se),
    )
}

fn criterion2() -> Outcome {
    let l = window_losses(&long_case(Case::Case2), &[RiskTarget::Candidate(0), RiskTarget::Fixed(vec![0.5, 0.5])], 200, SEED)
        .expect("case 2 losses");
    let r = ratio_estimate(&l[0], &l[1]);
    let target = case2_limit(1.0, 1.0, 1.0, 0.0).unwrap().ratio;
    let ok_ratio = (r.mean - target).abs() <= 0.04;
    let w = mc_risk(&long_case(Case::Case2), &RiskTarget::Fixed(vec![1.0, 1.0]), 2000, 4000, SEED).expect("mc risk");
    let ok_w = (w.mean - 1.0).abs() <= 3.0 * w.se;
    outcome(
        ok_ratio && ok_w,
        format!("ratio {:.4} vs {target:.4}; risk at w=(1,1) {:.4} (se {:.4}) vs 1", r.mean, w.mean, w.se),
    )
}

fn criterion3(c1: &ResultTable, c2: &ResultTable) -> Outcome {
    let grid = default_snr_grid();
    let mut bad = Vec::new();
    for &s in grid.iter().filter(|s| **s >= 0.5) {
        let v = point(c1, Method::After, None, GridPoint::Snr(s));
        if v > 1.02 {
            bad.push(format!("case1 AFTER {v:.3} at snr {s:.3}"));
        }
    }
    for (name, t) in [("case1", c1), ("case2", c2)] {
        for &s in &grid[..3] {
            let v = point(t, Method::LinReg, None, GridPoint::Snr(s));
            if v <= 1.0 {
                bad.push(format!("{name} LinReg {v:.3} at snr {s:.3}"));
            }
        }
    }
    for &s in &grid[grid.len() - 5..] {
        let v = point(c2, Method::LinReg, None, GridPoint::Snr(s));
        if v >= 1.0 {
            bad.push(format!("case2 LinReg {v:.3} at snr {s:.3}"));
        }
    }
    outcome(bad.is_empty(), if bad.is_empty() { "all grid checks hold".into() } else { bad.join("; ") })
}

fn criterion4(c1: &ResultTable, c2: &ResultTable) -> Outcome {
    let mut worst: (f64, String) = (0.0, String::new());
    for (name, t) in [("case1", c1), ("case2", c2)] {
        for &s in &default_snr_grid() {
            let g = GridPoint::Snr(s);
            let best = [Method::Sa, Method::After, Method::LinReg].iter().map(|m| point(t, *m, None, g)).fold(f64::INFINITY, f64::min);
            let rel = point(t, Method::MAfter, None, g) / best;
            if rel > worst.0 {
                worst = (rel, format!("{name} snr {s:.3}"));
            }
        }
    }
    outcome(worst.0 <= 1.05, format!("worst mAFTER / best = {:.4} at {}", worst.0, worst.1))
}

fn criterion5() -> Outcome {
    let mut cfg = ExperimentConfig::for_scenario(Scenario::Breaks);
    cfg.seed = SEED;
    cfg.n_reps = 100;
    cfg.rolling = vec![None, Some(40), Some(20)];
    let t = run_experiment(&cfg).expect("breaks experiment");
    let g = GridPoint::None;
    let after20 = point(&t, Method::After, Some(20), g);
    let bg20 = point(&t, Method::Bg, Some(20), g);
    let lr = point(&t, Method::LinReg, None, g);
    let lr20 = point(&t, Method::LinReg, Some(20), g);
    let ok = after20 < bg20 && bg20 < 1.0 && 1.0 < lr && (0.90..=1.00).contains(&after20) && lr20 > 1.2;
    outcome(ok, format!("AFTER_rw20 {after20:.3}, BG_rw20 {bg20:.3}, LinReg {lr:.3}, LinReg_rw20 {lr20:.3}"))
}

fn criterion6() -> Outcome {
    let mut bad = Vec::new();
    let mut summary = Vec::new();
    for (sigma, rho) in [(2.0, 0.0), (2.0, 0.5), (4.0, 0.0), (4.0, 0.5)] {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::Screening);
        cfg.seed = SEED;
        cfg.n_reps = 100;
        cfg.screening.sigma = sigma;
        cfg.screening.rho = rho;
        let xs = cfg.top_percents.clone();
        let t = run_experiment(&cfg).expect("screening experiment");
        let col = |m: Method| -> Vec<f64> { xs.iter().map(|x| point(&t, m, None, GridPoint::TopPercent(*x))).collect() };
        let (after, bg, lr) = (col(Method::After), col(Method::Bg), col(Method::LinReg));
        let tag = format!("s={sigma},r={rho}");
        if after.iter().any(|v| *v > 1.005) {
            bad.push(format!("{tag} AFTER above 1.005"));
        }
        if after.windows(2).any(|w| w[1] > w[0] + 0.01) {
            bad.push(format!("{tag} AFTER increases in X"));
        }
        if lr.windows(2).any(|w| w[1] < w[0] - 0.01) {
            bad.push(format!("{tag} LinReg decreases in X"));
        }
        let lr80 = lr[xs.iter().position(|x| *x == 80).unwrap()];
        if lr80 <= 1.10 {
            bad.push(format!("{tag} LinReg at 80% {lr80:.3}"));
        }
        if bg.iter().any(|v| (v - 1.0).abs() > 0.01) {
            bad.push(format!("{tag} BG off 1"));
        }
        summary.push(format!("{tag}: AFTER {:.3}..{:.3} LinReg80 {lr80:.3}", after[0], after[after.len() - 1]));
    }
    let mut detail = summary.join("; ");
    if !bad.is_empty() {
        detail = format!("{} | {}", bad.join("; "), detail);
    }
    outcome(bad.is_empty(), detail)
}

fn criterion7() -> Outcome {
    let mut cfg = ExperimentConfig::for_scenario(Scenario::Case2);
    cfg.seed = SEED;
    cfg.n_reps = 100;
    let rows = run_robustness(&cfg, &[Case::Case3, Case::Case4, Case::Case5]).expect("robustness");
    let mut bad = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let mut sa3_min = f64::INFINITY;
    for r in &rows {
        match r.method {
            Method::After => {
                lo = lo.min(r.ratio);
                hi = hi.max(r.ratio);
                if !(0.98..=1.04).contains(&r.ratio) {
                    bad.push(format!("AFTER {:?} {:.3} at snr {:.3}", r.case, r.ratio, r.snr));
                }
            }
            Method::Sa if r.case == Case::Case3 && r.snr >= 0.5 => {
                sa3_min = sa3_min.min(r.ratio);
                if r.ratio < 1.05 {
                    bad.push(format!("SA case3 {:.3} at snr {:.3}", r.ratio, r.snr));
                }
            }
            _ => {}
        }
    }
    let detail = format!("AFTER ratios in [{lo:.3}, {hi:.3}], SA case3 min {sa3_min:.3} for snr >= 0.5");
    outcome(bad.is_empty(), if bad.is_empty() { detail } else { format!("{} | {detail}", bad.join("; ")) })
}

fn criterion8() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let panels: Vec<_> = (1..=4).map(|h| read_panel(&dir.join(format!("survey_h{h}.csv"))).expect("fixture")).collect();
    let ok_shape = panels.iter().all(|p| p.n_candidates() == 14);
    let t = run_panel_eval(&panels, &Method::ALL, &[None], 0.25, &CombinerConfig::default()).expect("panel eval");
    let mut worst = 0.0f64;
    for h in 1..=4 {
        let g = GridPoint::Horizon(h);
        let best = [Method::Sa, Method::After, Method::LinReg].iter().map(|m| point(&t, *m, None, g)).fold(f64::INFINITY, f64::min);
        worst = worst.max(point(&t, Method::MAfter, None, g) / best);
    }
    let has_avg = t.find(Method::MAfter, None, GridPoint::HorizonAverage).is_some();
    outcome(ok_shape && has_avg && worst <= 1.05, format!("worst mAFTER / best = {worst:.4}, average row: {has_avg}"))
}

fn criterion9() -> Outcome {
    let r = regret_decay(&CaseParams::default(), 1.0, &[100, 200, 400], 100, SEED).expect("regret");
    let v: Vec<f64> = r.iter().map(|x| x.1).collect();
    let ok = v.iter().all(|x| *x > 0.0) && v[0] > v[1] && v[1] > v[2] && v[2] <= 0.6 * v[0];
    outcome(ok, format!("regret {:.4} / {:.4} / {:.4}, ratio {:.3}", v[0], v[1], v[2], v[2] / v[0]))
}

fn random_panel(gen: &mut SeededGenerator, n: usize, k: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let y: Vec<f64> = (0..n).map(|_| gen.standard_normal()).collect();
    let rows = y.iter().map(|v| (0..k).map(|i| v * (0.3 + 0.2 * i as f64) + gen.normal(0.1 * i as f64, 1.0)).collect()).collect();
    (rows, y)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

fn criterion10() -> Outcome {
    let mut gen = SeededGenerator::new(SEED, 10);
    let cfg = CombinerConfig::default();
    let mut bad = Vec::new();
    for trial in 0..20 {
        let (rows, y) = random_panel(&mut gen, 30, 4);
        for m in Method::ALL {
            // simplex
            if m != Method::LinReg {
                let mut c = m.build(4, &cfg);
                for (r, v) in rows.iter().zip(&y) {
                    c.update(r, *v).unwrap();
                    let w = c.weights();
                    let s: f64 = w.as_slice().iter().sum();
                    if (s - 1.0).abs() > 1e-12 || w.as_slice().iter().any(|x| *x < 0.0) {
                        bad.push(format!("{m} off simplex"));
                        break;
                    }
                }
            }
            let base = run_combiner(m.build(4, &cfg), &rows, &y).unwrap();
            // permutation
            let perm: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[2], r[0], r[3], r[1]]).collect();
            let p = run_combiner(m.build(4, &cfg), &perm, &y).unwrap();
            if base.iter().zip(&p).any(|(a, b)| !close(*a, *b)) {
                bad.push(format!("{m} permutation (trial {trial})"));
            }
            // translation and scale
            let (a, b) = (2.5, 3.0);
            let tr: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| a + b * v).collect()).collect();
            let ty: Vec<f64> = y.iter().map(|v| a + b * v).collect();
            let mut scaled = cfg.clone();
            scaled.after.prior_variance *= b * b;
            let q = run_combiner(m.build(4, &scaled), &tr, &ty).unwrap();
            if base.iter().zip(&q).any(|(f, g)| !close(a + b * f, *g)) {
                bad.push(format!("{m} affine (trial {trial})"));
            }
            // rolling window longer than the history
            let r = run_combiner(m.build_rolling(4, &cfg, Some(rows.len() + 5)).unwrap(), &rows, &y).unwrap();
            if base != r {
                bad.push(format!("{m} rolling != expanding"));
            }
        }
    }
    // determinism
    let mut small = ExperimentConfig::for_scenario(Scenario::Breaks);
    small.n_reps = 8;
    small.seed = SEED;
    if run_experiment(&small).unwrap() != run_experiment(&small).unwrap() {
        bad.push("rerun differs".into());
    }
    // stepwise vs exhaustive at p = 8
    let mut worst_gap = 0.0f64;
    for rep in 0..20 {
        let mut g = SeededGenerator::new(SEED, 1000 + rep);
        let x: Vec<Vec<f64>> = (0..60).map(|_| (0..8).map(|_| g.standard_normal()).collect()).collect();
        let beta = [2.0, -1.0, 1.0, 0.5, 0.0, 0.0, 0.3, 0.0];
        let y: Vec<f64> = x.iter().map(|r| r.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + g.standard_normal()).collect();
        let ex = best_per_size(&x, &y, SearchStrategy::Exhaustive, true).unwrap();
        let st = best_per_size(&x, &y, SearchStrategy::Stepwise, true).unwrap();
        for (e, s) in ex.iter().zip(&st) {
            worst_gap = worst_gap.max(s.sse() / e.sse() - 1.0);
        }
    }
    if worst_gap > 0.05 {
        bad.push(format!("stepwise SSE gap {worst_gap:.4}"));
    }
    bad.dedup();
    let detail = format!("stepwise gap {:.2}%", 100.0 * worst_gap);
    outcome(bad.is_empty(), if bad.is_empty() { detail } else { format!("{} | {detail}", bad.join("; ")) })
}

fn main() {
    let start = Instant::now();
    let c1 = grid_table(Scenario::Case1);
    let c2 = grid_table(Scenario::Case2);
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "case 1 oracle ratio", criterion1()),
        (2, "case 2 oracle ratio", criterion2()),
        (3, "S/N grid shape", criterion3(&c1, &c2)),
        (4, "mAFTER adaptivity", criterion4(&c1, &c2)),
        (5, "structural breaks", criterion5()),
        (6, "screening", criterion6()),
        (7, "robustness to added candidates", criterion7()),
        (8, "survey-style panels", criterion8()),
        (9, "mAFTER regret decay", criterion9()),
        (10, "invariant suites", criterion10()),
    ];
    let mut failed = 0;
    for (n, name, o) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed in {:.1}s", results.len() - failed, results.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
