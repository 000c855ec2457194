use super::*;
use crate::observe::NoiseCov;
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// `x_k = a x_{k-1} + θ`, state `[x_0, θ, x_1, ..., x_k]`.
struct Linear {
    a: f64,
    n: usize,
}

impl DynamicModel for Linear {
    type State = Vec<f64>;

    fn n_steps(&self) -> usize {
        self.n
    }

    fn advance(&self, s: &Vec<f64>, k: usize) -> Result<Vec<f64>> {
        let prev = if k == 1 { s[0] } else { s[k] };
        let mut out = s.clone();
        out.push(self.a * prev + s[1]);
        Ok(out)
    }

    fn restart(&self, s: &Vec<f64>) -> Vec<f64> {
        s[..2].to_vec()
    }
}

/// Observes `x_k`.
struct ObsX;

impl ObservationOperator<Vec<f64>> for ObsX {
    fn dim(&self) -> usize {
        1
    }
    fn apply(&self, s: &Vec<f64>, k: usize) -> Result<Vec<f64>> {
        Ok(vec![s[1 + k]])
    }
}

fn prior(n_e: usize, seed: u64) -> Ensemble<Vec<f64>> {
    let mut r = rng::stream(seed, &[tag::PRIOR]);
    Ensemble::new(
        (0..n_e)
            .map(|_| {
                let x0: f64 = 5.0 + 2.0 * r.sample::<f64, _>(StandardNormal);
                let th: f64 = 1.0 + 0.5 * r.sample::<f64, _>(StandardNormal);
                vec![x0, th]
            })
            .collect(),
    )
    .unwrap()
}

fn schedule(obs: &[(usize, f64)], var: f64) -> Schedule<ObsX> {
    Schedule::new(
        obs.iter()
            .map(|&(k, y)| ObservationBatch { step: k, values: vec![y], operator: ObsX, noise: NoiseCov::Diagonal(vec![var]) })
            .collect(),
    )
    .unwrap()
}

/// Posterior of `(x_0, θ)` in information form; `x_k = g_k · (x_0, θ)`.
fn oracle(a: f64, obs: &[(usize, f64)], var: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let g = |k: usize| [a.powi(k as i32), (0..k).map(|j| a.powi(j as i32)).sum::<f64>()];
    let mut p = [[1.0 / 4.0, 0.0], [0.0, 1.0 / 0.25]];
    let mut b = [5.0 / 4.0, 1.0 / 0.25];
    for &(k, y) in obs {
        let gk = g(k);
        for r in 0..2 {
            for c in 0..2 {
                p[r][c] += gk[r] * gk[c] / var;
            }
            b[r] += gk[r] * y / var;
        }
    }
    let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
    let cov = [[p[1][1] / det, -p[0][1] / det], [-p[1][0] / det, p[0][0] / det]];
    let mean = [cov[0][0] * b[0] + cov[0][1] * b[1], cov[1][0] * b[0] + cov[1][1] * b[1]];
    (mean, cov)
}

fn moments(ens: &Ensemble<Vec<f64>>, i: usize) -> (f64, f64) {
    let xs: Vec<Vec<f64>> = ens.members().iter().map(|m| vec![m[i]]).collect();
    let m = empirical_mean(&xs).unwrap()[0];
    let v = empirical_cross_cov(&xs, &xs).unwrap()[(0, 0)];
    (m, v)
}

#[test]
fn gain_examples() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let k = kalman_gain(&one, &one, &one).unwrap();
    assert!((k[(0, 0)] - 0.5).abs() < 1e-9);
    let zero = DMatrix::zeros(3, 1);
    assert_eq!(kalman_gain(&zero, &one, &one).unwrap(), DMatrix::zeros(3, 1));
    assert!(kalman_gain(&one, &one, &DMatrix::zeros(2, 2)).is_err());
}

#[test]
fn gain_rank_deficient_innovation_is_regularized() {
    let cvh = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let chh = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    let k = kalman_gain(&cvh, &chh, &DMatrix::zeros(2, 2)).unwrap();
    assert!(k.iter().all(|x| x.is_finite()));
    let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
    assert!(kalman_gain(&DMatrix::from_element(1, 1, 1.0), &neg, &DMatrix::zeros(1, 1)).is_err());
}

#[test]
fn identical_members_are_not_moved() {
    let ens = Ensemble::new(vec![vec![1.0, 2.0, 3.0]; 6]).unwrap();
    let b = ObservationBatch { step: 1, values: vec![10.0], operator: ObsX, noise: NoiseCov::Diagonal(vec![1.0]) };
    let (a, _) = enkf_update(&ens, &[&b], 1.0, 3, 0).unwrap();
    assert_eq!(a, ens);
}

#[test]
fn huge_noise_leaves_forecast_nearly_unchanged() {
    let model = Linear { a: 0.9, n: 1 };
    let f = forecast(&model, &prior(200, 1), 0, 1).unwrap();
    let b = ObservationBatch { step: 1, values: vec![20.0], operator: ObsX, noise: NoiseCov::Diagonal(vec![1.0]) };
    let (a, _) = enkf_update(&f, &[&b], 1e6, 5, 0).unwrap();
    let ma = empirical_mean(a.members()).unwrap();
    let mf = empirical_mean(f.members()).unwrap();
    for (u, v) in ma.iter().zip(&mf) {
        assert!((u - v).abs() <= 1e-3 * v.abs(), "{u} vs {v}");
    }
}

#[test]
fn mean_update_matches_kalman_update_of_mean() {
    let model = Linear { a: 0.8, n: 1 };
    let f = forecast(&model, &prior(50, 2), 0, 1).unwrap();
    // Zero noise makes every pseudo-datum equal the member's prediction.
    let b = ObservationBatch { step: 1, values: vec![7.5], operator: ObsX, noise: NoiseCov::Diagonal(vec![0.0]) };
    let (a, _) = enkf_update(&f, &[&b], 1.0, 9, 0).unwrap();
    let fv: Vec<Vec<f64>> = f.members().to_vec();
    let av: Vec<Vec<f64>> = a.members().to_vec();
    let hv: Vec<Vec<f64>> = fv.iter().map(|m| vec![m[2]]).collect();
    let mf = empirical_mean(&fv).unwrap();
    let ma = empirical_mean(&av).unwrap();
    let cvh = empirical_cross_cov(&fv, &hv).unwrap();
    let chh = empirical_cross_cov(&hv, &hv).unwrap()[(0, 0)];
    let mh = empirical_mean(&hv).unwrap()[0];
    for i in 0..3 {
        let expect = mf[i] + cvh[(i, 0)] / chh * (7.5 - mh);
        assert!((ma[i] - expect).abs() < 1e-8 * expect.abs().max(1.0), "{i}: {} vs {expect}", ma[i]);
    }
}

#[test]
fn empty_schedule_is_unconditional() {
    let model = Linear { a: 0.9, n: 4 };
    let p = prior(10, 3);
    let run = run_enkf(&model, &p, &Schedule::<ObsX>::empty(), 1, true).unwrap();
    assert_eq!(run.ensemble, forecast(&model, &p, 0, 4).unwrap());
    assert!(run.updates.is_empty());
    assert_eq!(run.trajectory.len(), 4);
    assert!(run.trajectory.iter().all(|r| r.analysis.is_none()));
}

#[test]
fn parameters_unchanged_by_forecast_steps() {
    let model = Linear { a: 0.9, n: 3 };
    let run = run_enkf(&model, &prior(20, 4), &schedule(&[(1, 6.0), (3, 8.0)], 0.5), 2, true).unwrap();
    for w in run.trajectory.windows(2) {
        let before = w[0].analysis.as_ref().unwrap_or(&w[0].forecast);
        for (x, y) in before.members().iter().zip(w[1].forecast.members()) {
            assert_eq!(x[1].to_bits(), y[1].to_bits());
        }
    }
}

#[test]
fn single_terminal_batch_smoother_equals_filter() {
    let model = Linear { a: 0.9, n: 3 };
    let p = prior(30, 5);
    let s = schedule(&[(3, 9.0)], 0.3);
    let f = run_enkf(&model, &p, &s, 8, false).unwrap();
    let e = run_ens(&model, &p, &s, 8).unwrap();
    assert_eq!(f.ensemble, e.ensemble);
}

#[test]
fn mda_with_one_cycle_is_the_smoother() {
    let model = Linear { a: 0.9, n: 3 };
    let p = prior(30, 6);
    let s = schedule(&[(1, 6.0), (2, 7.0), (3, 9.0)], 0.3);
    let e = run_ens(&model, &p, &s, 8).unwrap();
    let m = run_mda(&model, &p, &s, 1, 8).unwrap();
    assert_eq!(e.ensemble, m.ensemble);
    assert_eq!(e.updates[0].obs_dim, 3);
}

#[test]
fn runs_are_reproducible() {
    let model = Linear { a: 0.7, n: 3 };
    let p = prior(25, 7);
    let s = schedule(&[(1, 6.0), (3, 9.0)], 0.3);
    assert_eq!(run_enkf(&model, &p, &s, 1, true).unwrap(), run_enkf(&model, &p, &s, 1, true).unwrap());
    assert_eq!(run_mda(&model, &p, &s, 4, 1).unwrap(), run_mda(&model, &p, &s, 4, 1).unwrap());
}

#[test]
fn schedule_validation() {
    let mk = |k| ObservationBatch { step: k, values: vec![0.0], operator: ObsX, noise: NoiseCov::Diagonal(vec![1.0]) };
    assert!(Schedule::new(vec![mk(2), mk(2)]).is_err());
    assert!(Schedule::new(vec![mk(0)]).is_err());
    let model = Linear { a: 1.0, n: 2 };
    assert!(run_enkf(&model, &prior(5, 1), &Schedule::new(vec![mk(3)]).unwrap(), 1, false).is_err());
    assert!(run_mda(&model, &prior(5, 1), &Schedule::new(vec![mk(1)]).unwrap(), 0, 1).is_err());
}

#[test]
fn small_gauss_linear_tracks_oracle() {
    let model = Linear { a: 0.9, n: 3 };
    let obs = [(1, 6.5), (2, 7.1), (3, 8.4)];
    let (mean, cov) = oracle(0.9, &obs, 0.5);
    let run = run_enkf(&model, &prior(2000, 21), &schedule(&obs, 0.5), 4, false).unwrap();
    let (m0, v0) = moments(&run.ensemble, 0);
    let (m1, v1) = moments(&run.ensemble, 1);
    assert!((m0 - mean[0]).abs() < 0.05 * mean[0].abs());
    assert!((m1 - mean[1]).abs() < 0.1 * mean[1].abs());
    assert!((v0 / cov[0][0] - 1.0).abs() < 0.15);
    assert!((v1 / cov[1][1] - 1.0).abs() < 0.15);
}
