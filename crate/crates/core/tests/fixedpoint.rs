use mvlab_core::fixedpoint::fit_above_floor;
use mvlab_core::measures::{noise_floor, GaussianMeasure};
use mvlab_core::models::{granular_media_1d, mean_field_ou};
use mvlab_core::rng::CounterRng;
use mvlab_core::*;

fn cfg(n: usize, step: f64, horizon: f64, seed: u64) -> SimConfig {
    SimConfig { n_particles: n, step, horizon, seed, record_every: 50, ..SimConfig::default() }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn linear_model() -> ModelSpec {
    mean_field_ou(1.0, 0.5, 2f64.sqrt(), 1).unwrap()
}

/// Roots of `m − mean(ρ_m)` located by sign changes on a grid and refined by
/// bisection, with `ρ_m` the quadrature density for frozen μ = δ_m.
fn self_consistent_means(model: &ModelSpec, lo: f64, hi: f64) -> Vec<f64> {
    let g = grid(-6.0, 6.0, 6001);
    let f = |m: f64| {
        let mu = EmpiricalMeasure::dirac(&[m]).unwrap();
        m - stationary_density_1d(model, &mu, &g).unwrap().mean
    };
    let ms = grid(lo, hi, 201);
    let mut roots = Vec::new();
    for w in ms.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb > 0.0 {
            continue;
        }
        let mut fa = fa;
        for _ in 0..60 {
            let c = 0.5 * (a + b);
            let fc = f(c);
            if fa * fc <= 0.0 {
                b = c;
            } else {
                a = c;
                fa = fc;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

#[test]
fn apply_t_on_linear_model_matches_gaussian_law() {
    let n = 4000;
    let mu = EmpiricalMeasure::dirac(&[1.0]).unwrap();
    let out = apply_t(&linear_model(), &mu, &cfg(n, 1e-2, 8.0, 1), &ApplyTOptions::default()).unwrap();
    let se = (1.0 / n as f64).sqrt();
    assert!((out.mean()[0] - 0.5).abs() < 3.0 * se);
    // Variance SE of a unit Gaussian is √(2/N); Euler adds h/2 relative bias.
    assert!((out.covariance()[0] - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt() + 0.01);
}

#[test]
fn apply_t_without_interaction_ignores_mu() {
    let model = mean_field_ou(1.0, 0.0, 2f64.sqrt(), 1).unwrap();
    let c = cfg(3000, 1e-2, 8.0, 2);
    let init = GaussianMeasure::scalar(0.0, 1.0).unwrap().sample(3000, 7);
    let opts = ApplyTOptions { init: Some(init), ..ApplyTOptions::default() };
    let a = apply_t(&model, &EmpiricalMeasure::dirac(&[0.0]).unwrap(), &c, &opts).unwrap();
    let b = apply_t(&model, &EmpiricalMeasure::dirac(&[5.0]).unwrap(), &c, &opts).unwrap();
    // Same noise and same start: the runs coincide exactly.
    assert_eq!(a, b);
}

#[test]
fn apply_t_granular_symmetric_start_is_centred() {
    let model = granular_media_1d(0.25, 1.0, 0.3, 1.0).unwrap();
    let init = EmpiricalMeasure::from_1d(&[-1.0, 1.0]).unwrap();
    let opts = ApplyTOptions { init: Some(init), pooled: true, burn_in: Some(4.0) };
    let out = apply_t(&model, &EmpiricalMeasure::dirac(&[0.0]).unwrap(), &cfg(2000, 1e-2, 10.0, 3), &opts).unwrap();
    let sd = out.covariance()[0].sqrt();
    // Pooled snapshots are correlated; allow the SE of one snapshot.
    assert!(out.mean()[0].abs() < 3.0 * sd / (2000f64).sqrt(), "{}", out.mean()[0]);
}

#[test]
fn apply_t_reports_divergence() {
    let model = mean_field_ou(-2.0, 0.0, 1.0, 1).unwrap();
    let c = SimConfig { explosion_bound: 1e4, ..cfg(100, 1e-2, 10.0, 0) };
    let r = apply_t(&model, &EmpiricalMeasure::dirac(&[1.0]).unwrap(), &c, &ApplyTOptions::default());
    assert!(matches!(r, Err(Error::Divergence { .. })));
}

#[test]
fn quadrature_oracle_matches_apply_t() {
    let model = granular_media_1d(0.25, 1.0, 0.0, 1.0).unwrap();
    let n = 4000;
    let g = grid(-8.0, 8.0, 4001);
    for m in [0.0, 0.5] {
        let mu = EmpiricalMeasure::dirac(&[m]).unwrap();
        let dens = stationary_density_1d(&model, &mu, &g).unwrap();
        let oracle = dens.quantile_cloud(n).unwrap();
        let init = oracle.clone();
        let sim =
            apply_t(&model, &mu, &cfg(n, 2e-3, 6.0, 10), &ApplyTOptions { init: Some(init), ..Default::default() })
                .unwrap();
        let w = wasserstein(&sim, &oracle, 1.0).unwrap().value;
        let (floor, _) = noise_floor(&oracle, 1.0, 8, 1).unwrap();
        assert!(w < 3.0 * floor, "m={m}: W1 {w} vs floor {floor}");
    }
}

#[test]
fn picard_on_linear_model() {
    let n = 3000;
    let mu0 = EmpiricalMeasure::dirac(&[1.0]).unwrap();
    let r =
        picard_solve(&linear_model(), &mu0, &cfg(n, 1e-2, 8.0, 4), &PicardOptions { tol: 1e-4, ..Default::default() })
            .unwrap();
    assert!(r.converged, "{:?}", r.iterates);
    // Iterate means 1, 0.5, 0.25, ... up to sampling error.
    for (k, m) in r.iterate_means.iter().take(4).enumerate() {
        let want = 0.5f64.powi(k as i32);
        assert!((m[0] - want).abs() < 0.06, "k={k}: {} vs {want}", m[0]);
    }
    let ratio = r.contraction_estimate.unwrap();
    assert!((ratio - 0.5).abs() < 0.1, "{ratio}");
    let reference = GaussianMeasure::scalar(0.0, 1.0).unwrap().sample(n, 99);
    let w = wasserstein(&r.measure, &reference, 2.0).unwrap().value;
    let (floor, _) = noise_floor(&reference, 2.0, 8, 5).unwrap();
    assert!(w < 3.0 * floor + 0.01, "W2 {w}, floor {floor}");
    // Residual invariant: one more application moves the result by at most
    // the stopping threshold.
    let again = apply_t(
        &linear_model(),
        &r.measure,
        &cfg(n, 1e-2, 8.0, 4),
        &ApplyTOptions { init: Some(r.measure.clone()), ..Default::default() },
    )
    .unwrap();
    assert!(wasserstein(&again, &r.measure, 2.0).unwrap().value <= 1e-4_f64.max(3.0 * r.noise_floor));
}

#[test]
fn picard_without_interaction_stops_immediately() {
    let model = mean_field_ou(1.0, 0.0, 2f64.sqrt(), 1).unwrap();
    let mu0 = EmpiricalMeasure::dirac(&[1.0]).unwrap();
    let r = picard_solve(&model, &mu0, &cfg(1000, 1e-2, 8.0, 4), &PicardOptions::default()).unwrap();
    assert!(r.converged);
    // The first step reaches the invariant law; later gaps sit far below
    // the noise floor because every iterate shares the noise.
    assert!(r.iterations_used <= 3, "{:?}", r.iterates);
    assert!(r.iterates[1] < 0.1 * r.noise_floor, "{:?}", r.iterates);
}

#[test]
fn picard_guards() {
    let mu0 = EmpiricalMeasure::dirac(&[1.0]).unwrap();
    let c = cfg(10, 1e-2, 1.0, 0);
    assert!(picard_solve(&linear_model(), &mu0, &c, &PicardOptions { tol: 0.0, ..Default::default() }).is_err());
    assert!(picard_solve(&linear_model(), &mu0, &c, &PicardOptions { max_iter: 0, ..Default::default() }).is_err());
}

#[test]
fn picard_does_not_contract_past_the_threshold() {
    // c > a: the mean map m ↦ (c/a)m expands, so gaps grow.
    let model = mean_field_ou(1.0, 1.5, 1.0, 1).unwrap();
    let mu0 = EmpiricalMeasure::dirac(&[3.0]).unwrap();
    let r = picard_solve(
        &model,
        &mu0,
        &cfg(500, 1e-2, 3.0, 1),
        &PicardOptions { tol: 1e-6, max_iter: 6, ..Default::default() },
    )
    .unwrap();
    assert!(!r.converged);
    assert_eq!(r.stop_reason, StopReason::MaxIter);
}

#[test]
fn granular_picard_mirror_symmetry() {
    let model = granular_media_1d(0.25, 1.0, 1.0, 0.5).unwrap();
    let c = cfg(1500, 1e-2, 6.0, 8);
    let start = EmpiricalMeasure::dirac(&[1.5]).unwrap();
    let a = picard_solve(&model, &start, &c, &PicardOptions::default()).unwrap();
    let b = picard_solve(&model, &start.reflected(), &c, &PicardOptions::default()).unwrap();
    let w = wasserstein(&a.measure.reflected(), &b.measure, 2.0).unwrap().value;
    assert!(w <= 3.0 * a.noise_floor.max(b.noise_floor), "{w}");
    assert!(a.measure.mean()[0] > 0.5 && b.measure.mean()[0] < -0.5);
}

#[test]
fn weak_interaction_has_one_fixed_point() {
    let model = granular_media_1d(0.25, 1.0, 0.3, 2.0).unwrap();
    assert_eq!(self_consistent_means(&model, -3.0, 3.0).len(), 1);
    let c = cfg(1500, 1e-2, 6.0, 9);
    let a = picard_solve(&model, &EmpiricalMeasure::dirac(&[2.0]).unwrap(), &c, &PicardOptions::default()).unwrap();
    let b = picard_solve(&model, &EmpiricalMeasure::dirac(&[-2.0]).unwrap(), &c, &PicardOptions::default()).unwrap();
    let w = wasserstein(&a.measure, &b.measure, 2.0).unwrap().value;
    assert!(w <= 5.0 * a.noise_floor.max(b.noise_floor), "{w}");
}

#[test]
fn contraction_of_linear_model() {
    let n = 3000;
    let mu = GaussianMeasure::scalar(0.0, 1.0).unwrap().sample(n, 1);
    let nu = GaussianMeasure::scalar(2.0, 1.0).unwrap().sample(n, 2);
    let c = cfg(n, 1e-2, 8.0, 3);
    let e = estimate_contraction(&linear_model(), &mu, &nu, &c, &ApplyTOptions::default()).unwrap();
    assert!((e.ratio - 0.5).abs() < 0.05, "{e:?}");

    let free = mean_field_ou(1.0, 0.0, 2f64.sqrt(), 1).unwrap();
    let e = estimate_contraction(&free, &mu, &nu, &c, &ApplyTOptions::default()).unwrap();
    assert!(e.ratio < 0.05, "{e:?}");

    let mut rng = CounterRng::from_seed(3, 0);
    let resampled = mu.resample(n, &mut rng);
    assert!(matches!(
        estimate_contraction(&linear_model(), &mu, &resampled, &c, &ApplyTOptions::default()),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn contraction_stays_below_threshold_ratio() {
    // δ/δ₀ with δ = c and δ₀ = a from the dissipativity of the linear model.
    let mut rng = CounterRng::from_seed(21, 0);
    for (k, c_int) in [0.2, 0.5, 0.8].into_iter().enumerate() {
        let model = mean_field_ou(1.0, c_int, 1.0, 1).unwrap();
        let shift = 1.0 + 2.0 * rng.uniform();
        let mu = GaussianMeasure::scalar(0.0, 0.5 + rng.uniform()).unwrap().sample(1500, 10 + k as u64);
        let nu = GaussianMeasure::scalar(shift, 0.5 + rng.uniform()).unwrap().sample(1500, 20 + k as u64);
        let e =
            estimate_contraction(&model, &mu, &nu, &cfg(1500, 1e-2, 8.0, k as u64), &ApplyTOptions::default()).unwrap();
        assert!(e.ratio <= c_int + 0.1, "c={c_int}: {e:?}");
    }
}

#[test]
fn ergodicity_of_pure_ou() {
    let model = mean_field_ou(1.0, 0.0, 2f64.sqrt(), 1).unwrap();
    let n = 4000;
    let frozen = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let starts = vec![EmpiricalMeasure::dirac(&[4.0]).unwrap(), EmpiricalMeasure::dirac(&[-3.0]).unwrap()];
    let c = SimConfig { record_every: 20, ..cfg(n, 1e-2, 6.0, 11) };
    let e = estimate_ergodicity(&model, &frozen, &starts, &c, &ApplyTOptions::default()).unwrap();
    assert!(e.usable, "{e:?}");
    assert!((e.lambda_hat.unwrap() - 1.0).abs() < 0.1, "{e:?}");
    assert!(e.c_hat >= 1.0 && e.c_hat < 1.5, "{e:?}");

    // Starting at the target leaves nothing to fit.
    let target = apply_t(&model, &frozen, &c, &ApplyTOptions::default()).unwrap();
    let e = estimate_ergodicity(&model, &frozen, &[target], &c, &ApplyTOptions::default()).unwrap();
    assert!(e.degenerate && !e.usable);
}

#[test]
fn ergodicity_of_frozen_double_well() {
    let model = granular_media_1d(0.5, 0.0, 0.0, 2.0).unwrap();
    let frozen = EmpiricalMeasure::dirac(&[0.0]).unwrap();
    let starts = vec![EmpiricalMeasure::dirac(&[3.0]).unwrap()];
    let c = SimConfig { record_every: 10, ..cfg(3000, 5e-3, 4.0, 12) };
    let e = estimate_ergodicity(&model, &frozen, &starts, &c, &ApplyTOptions::default()).unwrap();
    assert!(e.lambda_hat.unwrap() > 0.0 && e.fit_quality >= 0.9, "{e:?}");
}

#[test]
fn convergence_of_linear_model() {
    let n = 3000;
    let mu_bar = GaussianMeasure::scalar(0.0, 1.0).unwrap().sample(n, 31);
    let c = SimConfig { record_every: 20, ..cfg(n, 1e-2, 6.0, 13) };
    let tr = measure_convergence(&linear_model(), &EmpiricalMeasure::dirac(&[2.0]).unwrap(), &mu_bar, &c).unwrap();
    let w = tr.wp_to_ref.clone().unwrap();
    let (floor, _) = noise_floor(&mu_bar, 2.0, 8, 2).unwrap();
    // Skip the initial variance transient of the Dirac start.
    let series: Vec<(f64, f64)> = tr.times.iter().copied().zip(w).filter(|(t, _)| *t >= 1.0).collect();
    let fit = fit_above_floor(&series, 3.0 * floor).unwrap();
    assert!((fit.lambda_bar - 0.5).abs() < 0.1, "{fit:?}");
    assert!(fit.r2 >= 0.95);

    let flat = measure_convergence(&linear_model(), &mu_bar, &mu_bar, &c).unwrap();
    assert!(flat.wp_to_ref.unwrap().iter().all(|w| *w < 5.0 * floor));
}

#[test]
fn noisy_exponential_fit() {
    let mut rng = CounterRng::from_seed(5, 0);
    let series: Vec<(f64, f64)> = (0..40)
        .map(|i| {
            let t = 0.25 * i as f64;
            (t, (-0.3 * t).exp() * (1.0 + 0.01 * rng.normal()))
        })
        .collect();
    let fit = fit_exponential_rate(&series).unwrap();
    assert!((fit.lambda_bar - 0.3).abs() < 0.02);
}

#[test]
fn linear_scan_is_unique() {
    let starts = vec![EmpiricalMeasure::dirac(&[2.0]).unwrap(), EmpiricalMeasure::dirac(&[-2.0]).unwrap()];
    let report = phase_scan(
        |c| mean_field_ou(1.0, c, 1.0, 1),
        "c",
        &[0.0, 0.25, 0.5],
        &starts,
        &cfg(800, 1e-2, 5.0, 14),
        &PhaseScanOptions::default(),
    )
    .unwrap();
    assert_eq!(report.multiplicity, vec![1, 1, 1]);
    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next(), Some("param_value,start_id,mean_1,multiplicity"));
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn granular_scan_matches_self_consistency_oracle() {
    let family = |s: f64| granular_media_1d(0.25, 1.0, 1.0, s);
    let starts = vec![EmpiricalMeasure::dirac(&[2.0]).unwrap(), EmpiricalMeasure::dirac(&[-2.0]).unwrap()];
    let report =
        phase_scan(family, "s", &[0.2, 2.0], &starts, &cfg(1000, 1e-2, 5.0, 15), &PhaseScanOptions::default()).unwrap();
    for (k, s) in [0.2, 2.0].into_iter().enumerate() {
        let oracle = self_consistent_means(&family(s).unwrap(), -3.0, 3.0);
        let cell = &report.cells[k];
        if oracle.len() > 1 {
            assert!(cell.multiplicity >= 2, "s={s}: {cell:?}");
            let means: Vec<f64> = cell.fixed_points.iter().map(|f| f.mean.as_ref().unwrap()[0]).collect();
            assert!(means[0] >= 0.1 && means[1] <= -0.1, "{means:?}");
            assert!((means[0] + means[1]).abs() < 0.05, "{means:?}");
        } else {
            assert_eq!(cell.multiplicity, 1, "s={s}: {cell:?}");
        }
    }
    assert_eq!(report.multiplicity, vec![2, 1]);
}

#[test]
fn scan_records_failures_and_continues() {
    let starts = vec![EmpiricalMeasure::dirac(&[1.0]).unwrap(), EmpiricalMeasure::dirac(&[-1.0]).unwrap()];
    let c = SimConfig { explosion_bound: 1e3, ..cfg(50, 1e-2, 5.0, 0) };
    let report =
        phase_scan(|a| mean_field_ou(a, 0.0, 1.0, 1), "a", &[-3.0, 1.0], &starts, &c, &PhaseScanOptions::default())
            .unwrap();
    assert_eq!(report.multiplicity[0], 0);
    assert!(report.cells[0].fixed_points.iter().all(|f| f.error.is_some()));
    assert_eq!(report.multiplicity[1], 1);
}
