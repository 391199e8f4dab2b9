use mvlab_core::measures::{
    median_cost, noise_floor, read_measure_binary, read_measure_csv, write_measure_binary, write_measure_csv,
    DEFAULT_ASSIGNMENT_CAP,
};
use mvlab_core::rng::CounterRng;
use mvlab_core::*;
use proptest::prelude::*;

fn cloud(rng: &mut CounterRng, n: usize, d: usize, shift: f64) -> EmpiricalMeasure {
    let pts: Vec<f64> = (0..n * d).map(|_| rng.normal() + shift).collect();
    EmpiricalMeasure::new(pts, d).unwrap()
}

/// Minimum over all permutations, by Heap's algorithm.
fn brute_force(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> f64 {
    let n = mu.len();
    let cost = |i: usize, j: usize| -> f64 {
        let r2: f64 = mu.point(i).iter().zip(nu.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        r2.powf(0.5 * p)
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    (best / n as f64).powf(1.0 / p)
}

#[test]
fn exact_1d_agrees_with_assignment() {
    let mut rng = CounterRng::from_seed(11, 0);
    for k in 0..100 {
        let n = 1 + rng.below(64);
        let mu = cloud(&mut rng, n, 1, 0.0);
        let nu = cloud(&mut rng, n, 1, 0.5);
        let p = [1.0, 1.5, 2.0, 3.0][k % 4];
        let a = wasserstein_1d(&mu, &nu, p).unwrap();
        let b = wasserstein_assignment(&mu, &nu, p, DEFAULT_ASSIGNMENT_CAP).unwrap();
        assert!((a - b).abs() <= 1e-9, "trial {k}: {a} vs {b}");
    }
}

#[test]
fn assignment_matches_exhaustive_search() {
    let mut rng = CounterRng::from_seed(12, 0);
    for k in 0..20 {
        let d = 1 + k % 3;
        let mu = cloud(&mut rng, 8, d, 0.0);
        let nu = cloud(&mut rng, 8, d, 1.0);
        for p in [1.0, 2.0] {
            let a = wasserstein_assignment(&mu, &nu, p, DEFAULT_ASSIGNMENT_CAP).unwrap();
            let b = brute_force(&mu, &nu, p);
            assert!((a - b).abs() <= 1e-12 * b.max(1.0), "trial {k}, p={p}: {a} vs {b}");
        }
    }
}

#[test]
fn sinkhorn_tracks_assignment() {
    let mut rng = CounterRng::from_seed(13, 0);
    for _ in 0..3 {
        let mu = cloud(&mut rng, 64, 2, 0.0);
        let nu = cloud(&mut rng, 64, 2, 1.0);
        let exact = wasserstein_assignment(&mu, &nu, 1.0, DEFAULT_ASSIGNMENT_CAP).unwrap();
        let reg = 1e-2 * median_cost(&mu, &nu, 1.0);
        let s = wasserstein_sinkhorn(&mu, &nu, 1.0, reg).unwrap();
        assert!((s - exact).abs() <= 0.02 * exact, "{s} vs {exact}");
    }
}

#[test]
fn sinkhorn_of_identical_clouds_is_zero() {
    let mut rng = CounterRng::from_seed(14, 0);
    let mu = cloud(&mut rng, 32, 2, 0.0);
    let s = wasserstein_sinkhorn(&mu, &mu, 2.0, 0.05).unwrap();
    // Solver residuals of order 1e-12 in the cost survive the square root.
    assert!(s * s < 1e-10, "{s}");
}

#[test]
fn gaussian_closed_forms() {
    // W2 between N(0,1) and N(2,4) is √(4 + 1).
    let a = GaussianMeasure::scalar(0.0, 1.0).unwrap();
    let b = GaussianMeasure::scalar(2.0, 4.0).unwrap();
    assert!((gaussian_w2(&a, &b).unwrap() - 5f64.sqrt()).abs() < 1e-12);
    // KL(N(0,1) | N(0,2)) = ½(1/2 − 1 + ln 2).
    let c = GaussianMeasure::scalar(0.0, 2.0).unwrap();
    let want = 0.5 * (0.5 - 1.0 + 2f64.ln());
    assert!((gaussian_kl(&a, &c).unwrap() - want).abs() < 1e-12);
    // Commuting 2-D covariances: W2² = |Δm|² + Σ(√λ − √λ')².
    let d = GaussianMeasure::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 9.0]).unwrap();
    let e = GaussianMeasure::new(vec![1.0, 1.0], vec![4.0, 0.0, 0.0, 1.0]).unwrap();
    assert!((gaussian_w2(&d, &e).unwrap() - (2.0f64 + 1.0 + 4.0).sqrt()).abs() < 1e-10);
}

#[test]
fn gaussian_samples_converge_in_w2() {
    let g = GaussianMeasure::scalar(0.5, 1.0).unwrap();
    let reference = GaussianMeasure::scalar(0.5, 1.0).unwrap().sample(20_000, 2);
    let sample = g.sample(20_000, 1);
    let w = wasserstein(&sample, &reference, 2.0).unwrap();
    let (floor, _) = noise_floor(&reference, 2.0, 8, 3).unwrap();
    assert_eq!(w.estimator, Estimator::Exact1d);
    assert!(w.value < 3.0 * floor, "{} vs floor {floor}", w.value);
}

#[test]
fn large_clouds_fall_back_to_subsampled_assignment() {
    let mut rng = CounterRng::from_seed(15, 0);
    let mu = cloud(&mut rng, 600, 2, 0.0);
    let nu = cloud(&mut rng, 600, 2, 0.0);
    assert_eq!(wasserstein(&mu, &nu, 2.0).unwrap().estimator, Estimator::AssignmentSubsampled);
    let small = cloud(&mut rng, 100, 2, 0.0);
    assert_eq!(wasserstein(&small, &small, 2.0).unwrap().estimator, Estimator::Assignment);
    assert!(matches!(wasserstein_assignment(&mu, &nu, 2.0, DEFAULT_ASSIGNMENT_CAP), Err(Error::CapExceeded { .. })));
}

#[test]
fn measure_files_round_trip() {
    let mut rng = CounterRng::from_seed(16, 0);
    let mu = cloud(&mut rng, 17, 3, 0.0);
    let mut buf = Vec::new();
    write_measure_csv(&mu, &mut buf).unwrap();
    assert_eq!(read_measure_csv(buf.as_slice()).unwrap(), mu);
    let mut bin = Vec::new();
    write_measure_binary(&mu, &mut bin).unwrap();
    assert_eq!(read_measure_binary(bin.as_slice()).unwrap(), mu);
}

#[test]
fn empirical_measure_rejects_bad_input() {
    assert!(EmpiricalMeasure::new(vec![f64::NAN], 1).is_err());
    assert!(EmpiricalMeasure::new(vec![1.0, 2.0, 3.0], 2).is_err());
    assert!(EmpiricalMeasure::with_weights(vec![1.0, 2.0], 1, vec![0.5, 0.6]).is_err());
    assert!(EmpiricalMeasure::with_weights(vec![1.0, 2.0], 1, vec![-0.5, 1.5]).is_err());
}

fn arb_cloud(d: usize) -> impl Strategy<Value = EmpiricalMeasure> {
    (1usize..12).prop_flat_map(move |n| {
        prop::collection::vec(-5.0f64..5.0, n * d).prop_map(move |v| EmpiricalMeasure::new(v, d).unwrap())
    })
}

fn arb_pair(d: usize) -> impl Strategy<Value = (EmpiricalMeasure, EmpiricalMeasure)> {
    (1usize..10).prop_flat_map(move |n| {
        (prop::collection::vec(-5.0f64..5.0, n * d), prop::collection::vec(-5.0f64..5.0, n * d))
            .prop_map(move |(a, b)| (EmpiricalMeasure::new(a, d).unwrap(), EmpiricalMeasure::new(b, d).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn w1d_is_a_metric(a in arb_cloud(1), b in arb_cloud(1), c in arb_cloud(1), p in 1.0f64..4.0) {
        let ab = wasserstein_1d(&a, &b, p).unwrap();
        let ba = wasserstein_1d(&b, &a, p).unwrap();
        let ac = wasserstein_1d(&a, &c, p).unwrap();
        let cb = wasserstein_1d(&c, &b, p).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert!(ab <= ac + cb + 1e-9);
        prop_assert!(wasserstein_1d(&a, &a, p).unwrap() <= 1e-12);
    }

    #[test]
    fn translation_moves_by_its_length((a, _) in arb_pair(2), sx in -3.0f64..3.0, sy in -3.0f64..3.0, p in 1.0f64..3.0) {
        let b = a.translated(&[sx, sy]).unwrap();
        let w = wasserstein_assignment(&a, &b, p, DEFAULT_ASSIGNMENT_CAP).unwrap();
        let len = (sx * sx + sy * sy).sqrt();
        // The identity coupling attains |s|, and W_p ≥ |mean difference|.
        prop_assert!((w - len).abs() <= 1e-9 * (1.0 + len), "{} vs {}", w, len);
    }

    #[test]
    fn wp_is_nondecreasing_in_p((a, b) in arb_pair(2)) {
        let w1 = wasserstein_assignment(&a, &b, 1.0, DEFAULT_ASSIGNMENT_CAP).unwrap();
        let w2 = wasserstein_assignment(&a, &b, 2.0, DEFAULT_ASSIGNMENT_CAP).unwrap();
        let w3 = wasserstein_assignment(&a, &b, 3.0, DEFAULT_ASSIGNMENT_CAP).unwrap();
        prop_assert!(w1 <= w2 + 1e-9 && w2 <= w3 + 1e-9);
    }

    #[test]
    fn wp_dominates_mean_gap((a, b) in arb_pair(2), p in 1.0f64..3.0) {
        let w = wasserstein_assignment(&a, &b, p, DEFAULT_ASSIGNMENT_CAP).unwrap();
        let (ma, mb) = (a.mean(), b.mean());
        let gap = ((ma[0] - mb[0]).powi(2) + (ma[1] - mb[1]).powi(2)).sqrt();
        prop_assert!(gap <= w + 1e-9);
    }

    #[test]
    fn reflection_is_an_isometry((a, b) in arb_pair(1), p in 1.0f64..3.0) {
        let w = wasserstein_1d(&a, &b, p).unwrap();
        let r = wasserstein_1d(&a.reflected(), &b.reflected(), p).unwrap();
        prop_assert!((w - r).abs() <= 1e-12 * (1.0 + w));
    }
}
