//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the binary exits non-zero if any of them fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use strata_assim::assimilate::{run_enkf, run_ens, run_mda, DynamicModel, Ensemble, Schedule, StateVector};
use strata_assim::forward::run_unconditional;
use strata_assim::grid_state::{inverse_logit, logit_transform, CurveKind};
use strata_assim::harness::{parse_las, read_las, Algorithm, Experiment, ExperimentConfig, TrialResult};
use strata_assim::observe::{NoiseCov, ObservationBatch, ObservationOperator};
use strata_assim::rng;
use strata_assim::score::{covers, crps_ensemble, trimmed_interval, ScoreReport};
use strata_assim::Result;

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---------------------------------------------------------------------------
// 1. Gauss-linear oracle

/// Scalar `x_k = a x_{k-1}`; the state is the trajectory `[x_0, ..., x_k]`.
struct Scalar {
    a: f64,
    n: usize,
}

impl DynamicModel for Scalar {
    type State = Vec<f64>;

    fn n_steps(&self) -> usize {
        self.n
    }

    fn advance(&self, s: &Vec<f64>, k: usize) -> Result<Vec<f64>> {
        let mut out = s.clone();
        out.push(self.a * s[k - 1]);
        Ok(out)
    }

    fn restart(&self, s: &Vec<f64>) -> Vec<f64> {
        vec![s[0]]
    }
}

struct Direct;

impl ObservationOperator<Vec<f64>> for Direct {
    fn dim(&self) -> usize {
        1
    }

    fn apply(&self, s: &Vec<f64>, k: usize) -> Result<Vec<f64>> {
        Ok(vec![s[k]])
    }
}

/// Kalman filter forward pass plus a Rauch-Tung-Striebel pass back to `x_0`.
/// Returns `((mean, var) of x_n, (mean, var) of x_0)`.
fn kalman_oracle(a: f64, m0: f64, p0: f64, obs: &[f64], r: f64) -> ((f64, f64), (f64, f64)) {
    let (mut m, mut p) = (m0, p0);
    let mut filtered = vec![(m, p)];
    let mut predicted = vec![(m, p)];
    for &y in obs {
        let (mp, pp) = (a * m, a * a * p);
        predicted.push((mp, pp));
        let k = pp / (pp + r);
        m = mp + k * (y - mp);
        p = (1.0 - k) * pp;
        filtered.push((m, p));
    }
    let last = filtered[obs.len()];
    let (mut ms, mut ps) = last;
    for k in (0..obs.len()).rev() {
        let (mf, pf) = filtered[k];
        let (mp, pp) = predicted[k + 1];
        let c = pf * a / pp;
        ms = mf + c * (ms - mp);
        ps = pf + c * c * (ps - pp);
    }
    (last, (ms, ps))
}

fn column_moments(ens: &Ensemble<Vec<f64>>, i: usize) -> (f64, f64) {
    let n = ens.len() as f64;
    let m = ens.members().iter().map(|v| v[i]).sum::<f64>() / n;
    let v = ens.members().iter().map(|x| (x[i] - m).powi(2)).sum::<f64>() / n;
    (m, v)
}

fn criterion_gauss_linear() -> Outcome {
    let start = Instant::now();
    let (a, m0, p0, r, n_steps, n_e): (f64, f64, f64, f64, usize, usize) = (0.9, 4.0, 2.0, 1.0, 5, 10_000);
    let model = Scalar { a, n: n_steps };
    let mut g = rng::stream(SEED, &[1]);
    let truth0 = m0 + p0.sqrt() * g.sample::<f64, _>(StandardNormal);
    let obs: Vec<f64> =
        (1..=n_steps).map(|k| a.powi(k as i32) * truth0 + r.sqrt() * g.sample::<f64, _>(StandardNormal)).collect();
    let schedule = Schedule::new(
        obs.iter()
            .enumerate()
            .map(|(i, &y)| ObservationBatch { step: i + 1, values: vec![y], operator: Direct, noise: NoiseCov::Diagonal(vec![r]) })
            .collect(),
    )
    .unwrap();
    let prior = Ensemble::new((0..n_e).map(|_| vec![m0 + p0.sqrt() * g.sample::<f64, _>(StandardNormal)]).collect()).unwrap();
    let ((mn, vn), (ms, vs)) = kalman_oracle(a, m0, p0, &obs, r);

    let runs = [
        ("enkf", run_enkf(&model, &prior, &schedule, SEED, false)),
        ("ens", run_ens(&model, &prior, &schedule, SEED)),
        ("mda1", run_mda(&model, &prior, &schedule, 1, SEED)),
        ("mda4", run_mda(&model, &prior, &schedule, 4, SEED)),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, run) in runs {
        let ens = run.unwrap().ensemble;
        let (m_n, v_n) = column_moments(&ens, n_steps);
        let (m_0, v_0) = column_moments(&ens, 0);
        let errs = [rel(m_n, mn), rel(v_n, vn), rel(m_0, ms), rel(v_0, vs)];
        let e = errs.iter().copied().fold(0.0, f64::max);
        worst = worst.max(e);
        parts.push(format!("{name} {:.2}%", 100.0 * e));
    }
    let secs = start.elapsed().as_secs_f64();
    // relative standard error of an ensemble variance
    let se = (2.0 / n_e as f64).sqrt();
    outcome(
        worst < 0.02 && secs < 30.0,
        format!(
            "max relative error {:.2}% = {:.1} standard errors of a variance at this n_e ({}), {secs:.1}s",
            100.0 * worst,
            worst / se,
            parts.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. MDA with one cycle is the smoother

fn criterion_mda_degenerate(exp: &Experiment) -> Outcome {
    let start = Instant::now();
    let seed = exp.trial_seed(0);
    let truth = exp.truth(seed).unwrap();
    let schedule = exp.observations(&truth, seed).unwrap();
    let prior = exp.prior_ensemble(seed).unwrap();
    let ens = run_ens(exp.model(), &prior, &schedule, seed).unwrap().ensemble;
    let mda = run_mda(exp.model(), &prior, &schedule, 1, seed).unwrap().ensemble;
    let diff = ens
        .members()
        .iter()
        .zip(mda.members())
        .flat_map(|(a, b)| a.to_vector().into_iter().zip(b.to_vector()).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    outcome(diff <= 1e-12 && secs < 60.0, format!("max |EnS - MDA(1)| = {diff:e}, {secs:.1}s"))
}

// ---------------------------------------------------------------------------
// 3. Mass conservation

/// Exact trapezoid integral of piecewise-linear knot values over `[t0, t1]`,
/// where both ends are knots.
fn knot_integral(knots: &[f64], values: &[f64], t0: f64, t1: f64) -> f64 {
    knots
        .windows(2)
        .zip(values.windows(2))
        .filter(|(t, _)| t[0] >= t0 && t[1] <= t1)
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum()
}

fn criterion_mass(cfg: &ExperimentConfig) -> Outcome {
    let mut cfg = cfg.clone();
    cfg.forward.erosion = false;
    let exp = Experiment::new(&cfg).unwrap();
    let fwd = cfg.forward_config();
    let times = cfg.knots();
    let mut worst = 0.0f64;
    for member in 0..5 {
        let x = exp.truth(rng::derive_seed(SEED, &[99, member])).unwrap();
        let params = x.params().clone();
        let x0 = x.to_stack().unwrap().surfaces()[0].clone();
        let stack0 = strata_assim::grid_state::LayerStack::initial(cfg.grid, x0).unwrap();
        let traj = run_unconditional(&stack0, &params, &times, &fwd).unwrap();
        let area = cfg.grid.cell_area();
        let base = traj[0].surfaces()[0].values().to_vec();
        for (k, st) in traj.iter().enumerate().skip(1) {
            let deposited: f64 = st.top().values().iter().zip(&base).map(|(t, b)| (t - b) * area).sum();
            let injected = knot_integral(params.knots(), params.values(CurveKind::SedimentSupply), times[0], times[k]);
            worst = worst.max(rel(deposited, injected));
        }
    }
    outcome(worst <= 1e-6, format!("max relative volume error {worst:.2e} over 5 runs x {} steps", times.len() - 1))
}

// ---------------------------------------------------------------------------
// 4. Transform round trip

fn criterion_transform() -> Outcome {
    let mut g = rng::stream(SEED, &[4]);
    let (mut worst_p, mut worst_s, mut bad_simplex) = (0.0f64, 0.0f64, 0usize);
    let mut n = 0;
    while n < 100_000 {
        let e: [f64; 4] = std::array::from_fn(|_| -g.random::<f64>().ln());
        let sum: f64 = e.iter().sum();
        let p = e.map(|x| x / sum);
        if p.iter().any(|&x| x < 1e-5) {
            continue;
        }
        n += 1;
        let back = inverse_logit(logit_transform(p).unwrap());
        worst_p = worst_p.max((0..4).map(|l| (back[l] - p[l]).abs()).fold(0.0, f64::max));

        let s: [f64; 3] = std::array::from_fn(|_| 30.0 * (2.0 * g.random::<f64>() - 1.0));
        let q = inverse_logit(s);
        if q.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            bad_simplex += 1;
        }
        if q.iter().all(|&x| x > 1e-5) {
            let s2 = logit_transform(q).unwrap();
            worst_s = worst_s.max((0..3).map(|c| (s2[c] - s[c]).abs()).fold(0.0, f64::max));
        }
    }
    outcome(
        worst_p <= 1e-10 && worst_s <= 1e-10 && bad_simplex == 0,
        format!("p round trip {worst_p:.1e}, s round trip {worst_s:.1e}, invalid simplexes {bad_simplex}"),
    )
}

// ---------------------------------------------------------------------------
// 5. Score calibration

fn criterion_scores() -> Outcome {
    let (n_e, trim, trials) = (100usize, 10usize, 10_000usize);
    let mut g = rng::stream(SEED, &[5]);
    let mut hits = 0usize;
    for _ in 0..trials {
        let members: Vec<f64> = (0..n_e).map(|_| g.sample(StandardNormal)).collect();
        let truth: f64 = g.sample(StandardNormal);
        hits += usize::from(covers(trimmed_interval(&members, trim).unwrap(), truth));
    }
    let cov = hits as f64 / trials as f64;
    // exchangeability: the truth is equally likely to fall in any of the n_e + 1 gaps
    let exact = (n_e - 2 * trim - 1) as f64 / (n_e + 1) as f64;
    let mut crps_exact = true;
    for _ in 0..1000 {
        let x: f64 = 10.0 * g.sample::<f64, _>(StandardNormal);
        let y: f64 = 10.0 * g.sample::<f64, _>(StandardNormal);
        crps_exact &= crps_ensemble(&[x], y).unwrap() == (x - y).abs();
    }
    outcome(
        (cov - 0.80).abs() <= 0.02 && crps_exact,
        format!(
            "coverage {cov:.4} (finite-ensemble expectation {exact:.4} +/- {:.4}), point CRPS = |error|: {crps_exact}",
            (exact * (1.0 - exact) / trials as f64).sqrt()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6-8. Desk-scale twin experiments

fn z_summary(report: &ScoreReport) -> (f64, f64, f64) {
    let s = report.variable("z").expect("z scored");
    (s.mse, s.crps, s.coverage)
}

fn criterion_ordering(reports: &BTreeMap<&str, ScoreReport>) -> Outcome {
    let (enkf, ens, mda) = (z_summary(&reports["enkf"]), z_summary(&reports["ens"]), z_summary(&reports["mda"]));
    let pass = enkf.0 < ens.0.min(mda.0) && enkf.1 < ens.1.min(mda.1) && enkf.2 > ens.2.max(mda.2);
    let fmt = |(m, c, v): (f64, f64, f64)| format!("mse {m:.2} crps {c:.3} cov {v:.3}");
    outcome(pass, format!("z: EnKF {} | EnS {} | MDA {}", fmt(enkf), fmt(ens), fmt(mda)))
}

fn criterion_nearest_well(cfg: &ExperimentConfig, results: &[TrialResult]) -> Outcome {
    let records: Vec<_> = results.iter().map(|r| r.records.clone()).collect();
    let report = ScoreReport::from_trials("enkf", &records).unwrap();
    let cond = cfg.wells.conditioning;
    let mut by_dist: Vec<(f64, usize)> =
        cfg.wells.blind.iter().enumerate().map(|(w, s)| (s.dist2(&cond), w + 1)).collect();
    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mse = |w: usize| report.well("z", w).unwrap().mse;
    let nearest = by_dist[0].1;
    let far = [by_dist[by_dist.len() - 1].1, by_dist[by_dist.len() - 2].1];
    let far_mean = 0.5 * (mse(far[0]) + mse(far[1]));
    outcome(
        results.len() >= 50 && mse(nearest) <= far_mean,
        format!(
            "{} trials: nearest well {nearest} mse {:.2}, farthest wells {far:?} mean {far_mean:.2}",
            results.len(),
            mse(nearest)
        ),
    )
}

fn criterion_coverage(report: &ScoreReport) -> Outcome {
    let c = report.variable("z").unwrap().coverage;
    outcome((0.55..=0.95).contains(&c), format!("EnKF z coverage {c:.3}"))
}

// ---------------------------------------------------------------------------
// 9. LAS fixtures

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))
}

fn criterion_las() -> Outcome {
    let mut fails = Vec::new();
    match read_las(fixtures().join("minimal.las")) {
        Ok(log) => {
            let gr: Vec<Option<f64>> = vec![Some(75.5), Some(80.25), Some(91.125)];
            if log.depths() != [1300.0, 1300.5, 1301.0] || log.curve("GR") != Some(&gr[..]) || log.depth_unit() != "M" {
                fails.push("minimal.las content".to_string());
            }
        }
        Err(e) => fails.push(format!("minimal.las: {e}")),
    }
    match read_las(fixtures().join("nulls.las")) {
        Ok(log) => {
            let gr = log.curve("GR").map(|c| c.to_vec());
            let rhob = log.curve("RHOB").map(|c| c.to_vec());
            if gr != Some(vec![Some(60.0), None, Some(64.5), None]) || rhob != Some(vec![None, Some(2.45), Some(2.5), None]) {
                fails.push("nulls.las masking".to_string());
            }
        }
        Err(e) => fails.push(format!("nulls.las: {e}")),
    }
    let rejects = [
        ("wrapped.las", "line 3", "unsupported"),
        ("bad_columns.las", "line 15", "expected 2 values"),
        ("bad_number.las", "line 15", "8O.25"),
        ("non_monotone.las", "line 16", "monotone"),
        ("missing_ascii.las", "", "~A"),
    ];
    for (file, line, what) in rejects {
        let text = std::fs::read_to_string(fixtures().join(file)).unwrap();
        match parse_las(&text) {
            Ok(_) => fails.push(format!("{file} accepted")),
            Err(e) => {
                let msg = e.to_string();
                if !msg.contains(line) || !msg.contains(what) {
                    fails.push(format!("{file}: {msg}"));
                }
            }
        }
    }
    outcome(fails.is_empty(), if fails.is_empty() { "2 fixtures accepted, 5 rejected".into() } else { fails.join("; ") })
}

// ---------------------------------------------------------------------------
// 10. CLI determinism across thread counts

fn run_cli(dir: &Path, args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_strata-assim"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_cli() -> Outcome {
    let runs: Vec<Vec<&str>> = vec![
        vec!["simulate"],
        vec!["assimilate", "--algorithm", "enkf"],
        vec!["trial", "--trials", "2", "--algorithm", "enkf"],
        vec!["trial", "--trials", "2", "--algorithm", "mda"],
        vec!["score", "--algorithm", "enkf"],
    ];
    let mut trees = Vec::new();
    for threads in ["1", "3"] {
        let dir = tempfile::tempdir().unwrap();
        for args in &runs {
            let mut a = args.clone();
            a.extend(["--seed", "7", "--out", "out", "--threads", threads]);
            if let Err(e) = run_cli(dir.path(), &a) {
                return outcome(false, e);
            }
        }
        trees.push(tree(&dir.path().join("out")));
    }
    let differing: Vec<&String> = trees[0].keys().filter(|k| trees[1].get(*k) != trees[0].get(*k)).collect();
    let same_set = trees[0].len() == trees[1].len();
    outcome(
        differing.is_empty() && same_set && !trees[0].is_empty(),
        format!("{} files compared between --threads 1 and 3, {} differ", trees[0].len(), differing.len()),
    )
}

// ---------------------------------------------------------------------------

fn main() {
    let total = Instant::now();
    let mut results: Vec<(usize, &str, Outcome, Duration)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let line = format!(
            "criterion {n:>2} {}: {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        println!("{line}");
        results.push((n, name, o, t.elapsed()));
    };

    let cfg = ExperimentConfig::desk();
    let exp = Experiment::new(&cfg).unwrap();

    record(1, "Gauss-linear oracle", &mut criterion_gauss_linear);
    record(2, "MDA(R=1) equals EnS", &mut || criterion_mda_degenerate(&exp));
    record(3, "mass conservation", &mut || criterion_mass(&cfg));
    record(4, "transform round trip", &mut criterion_transform);
    record(5, "score calibration", &mut criterion_scores);

    let start = Instant::now();
    let outcome_all = exp.run_trials_for(&Algorithm::ALL);
    assert!(outcome_all.failures.is_empty(), "desk trials failed: {:?}", outcome_all.failures.iter().map(|f| &f.error).collect::<Vec<_>>());
    let reports: BTreeMap<&str, ScoreReport> =
        Algorithm::ALL.iter().map(|&a| (a.name(), outcome_all.report(a).unwrap())).collect();
    println!("desk trials ({} x 3 algorithms) in {:.1}s", cfg.trials, start.elapsed().as_secs_f64());
    record(6, "EnKF beats EnS and MDA at desk scale", &mut || criterion_ordering(&reports));

    let mut enkf: Vec<TrialResult> =
        outcome_all.results.iter().filter(|r| r.algorithm == Algorithm::Enkf).cloned().collect();
    let extra: Vec<TrialResult> = (cfg.trials..50.max(cfg.trials))
        .into_par_iter()
        .map(|t| exp.run_trial_for(t, &[Algorithm::Enkf]).unwrap().remove(0))
        .collect();
    enkf.extend(extra);
    record(7, "nearest blind well has the smallest error", &mut || criterion_nearest_well(&cfg, &enkf));
    record(8, "EnKF coverage sanity", &mut || criterion_coverage(&reports["enkf"]));
    record(9, "LAS fixtures", &mut criterion_las);
    record(10, "CLI determinism across --threads", &mut criterion_cli);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        results.len() - failed.len(),
        results.len(),
        total.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
