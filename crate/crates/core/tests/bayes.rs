use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapeinv::bayes::*;
use shapeinv::observe::NoiseModel;

#[test]
fn potential_hand_values() {
    let id = NoiseModel::scaled_identity(2, 1.0).unwrap();
    assert_eq!(potential(&[1.0, 2.0], &[1.0, 2.0], &id).unwrap(), 0.0);
    assert_eq!(potential(&[0.0, 0.0], &[3.0, 4.0], &id).unwrap(), 12.5);
    let s = NoiseModel::scaled_identity(2, 0.01).unwrap();
    assert!((potential(&[0.0, 0.0], &[0.1, 0.0], &s).unwrap() - 0.5).abs() < 1e-14);
    // correlated: ½ rᵀΣ⁻¹r with Σ = [[2,1],[1,2]], Σ⁻¹ = [[2,-1],[-1,2]]/3, r = (1, 1)
    let c = NoiseModel::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
    assert!((potential(&[0.0, 0.0], &[1.0, 1.0], &c).unwrap() - 1.0 / 3.0).abs() < 1e-14);
    assert!(potential(&[0.0], &[1.0, 2.0], &id).is_err());
}

#[test]
fn tempered_increments() {
    assert_eq!(tempered_log_increment(3.7, 0.4, 0.4).unwrap(), 0.0);
    assert_eq!(tempered_log_increment(3.7, 0.0, 1.0).unwrap(), -3.7);
    assert_eq!(tempered_log_increment(2.0, 0.25, 0.5).unwrap(), -0.5);
    assert!(tempered_log_increment(1.0, 0.5, 0.25).is_err());
    assert!(tempered_log_increment(1.0, -0.1, 0.5).is_err());
    assert!(tempered_log_increment(1.0, 0.5, 1.1).is_err());
}

#[test]
fn log_sum_exp_values() {
    assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    assert!((log_sum_exp(&[-1000.0, -1000.0]) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
}

#[test]
fn hellinger_edge_cases() {
    let noise = NoiseModel::scaled_identity(1, 0.1).unwrap();
    let gs: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64 / 100.0 - 1.0]).collect();
    assert_eq!(hellinger_estimate(&gs, &[0.3], &[0.3], &noise).unwrap(), 0.0);
    let inf = f64::NEG_INFINITY;
    assert_eq!(hellinger_from_log_weights(&[0.0, inf], &[inf, 0.0]).unwrap(), 1.0);
    assert!(hellinger_from_log_weights(&[inf, inf], &[0.0, 0.0]).is_err());
    // every weight underflows
    let tiny = NoiseModel::scaled_identity(1, 1e-300).unwrap();
    let e = hellinger_estimate(&gs, &[50.0], &[50.0], &tiny);
    assert!(e.is_err() || e.unwrap() == 0.0);
}

/// J = K = 1, G(y) = a y, y ~ U(-1, 1): posterior Hellinger distance by
/// dense midpoint quadrature.
fn quadrature_hellinger(a: f64, s2: f64, d1: f64, d2: f64) -> f64 {
    let n = 200_000;
    let h = 2.0 / n as f64;
    let (mut z1, mut z2, mut z12) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let y = -1.0 + (i as f64 + 0.5) * h;
        let p = (-0.5 * (d1 - a * y).powi(2) / s2).exp();
        let q = (-0.5 * (d2 - a * y).powi(2) / s2).exp();
        z1 += p * h;
        z2 += q * h;
        z12 += (p * q).sqrt() * h;
    }
    (1.0 - z12 / (z1 * z2).sqrt()).max(0.0).sqrt()
}

#[test]
fn hellinger_matches_quadrature() {
    let (a, s2) = (1.0, 0.1);
    let noise = NoiseModel::scaled_identity(1, s2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gs: Vec<Vec<f64>> = (0..100_000).map(|_| vec![a * rng.gen_range(-1.0..=1.0)]).collect();
    for (d1, d2) in [(0.3, 0.6), (0.0, 0.1), (-0.5, 0.5)] {
        let est = hellinger_estimate(&gs, &[d1], &[d2], &noise).unwrap();
        let want = quadrature_hellinger(a, s2, d1, d2);
        assert!((est - want).abs() < 1e-2, "({d1}, {d2}): {est} vs {want}");
    }
}

proptest! {
    #[test]
    fn hellinger_symmetric_and_bounded(la in proptest::collection::vec(-30.0f64..0.0, 50),
                                       lb in proptest::collection::vec(-30.0f64..0.0, 50)) {
        let ab = hellinger_from_log_weights(&la, &lb).unwrap();
        let ba = hellinger_from_log_weights(&lb, &la).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn potential_rotation_invariant(theta in 0.0f64..6.3, r in proptest::collection::vec(-1.0f64..1.0, 2),
                                    d in proptest::collection::vec(0.1f64..2.0, 2), off in -0.9f64..0.9) {
        // Σ = diag(d) with a correlation, then rotate residual and covariance together
        let c = off * (d[0] * d[1]).sqrt();
        let sigma = [[d[0], c], [c, d[1]]];
        let (co, si) = (theta.cos(), theta.sin());
        let q = [[co, -si], [si, co]];
        let mut rs = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                rs[i][j] = (0..2).map(|k| (0..2).map(|l| q[i][k] * sigma[k][l] * q[j][l]).sum::<f64>()).sum();
            }
        }
        let rr = [q[0][0] * r[0] + q[0][1] * r[1], q[1][0] * r[0] + q[1][1] * r[1]];
        let n1 = NoiseModel::new(2, vec![sigma[0][0], sigma[0][1], sigma[1][0], sigma[1][1]]).unwrap();
        let sym = 0.5 * (rs[0][1] + rs[1][0]);
        let n2 = NoiseModel::new(2, vec![rs[0][0], sym, sym, rs[1][1]]).unwrap();
        let a = potential(&[0.0, 0.0], &r, &n1).unwrap();
        let b = potential(&[0.0, 0.0], &rr, &n2).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.max(1.0), "{} vs {}", a, b);
        prop_assert!(a >= 0.0);
    }
}
