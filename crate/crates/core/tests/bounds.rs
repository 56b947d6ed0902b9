mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use shapeinv::bounds::*;
use shapeinv::forward::PhysicsParams;
use shapeinv::mesh::SPEED_OF_LIGHT;
use shapeinv::shape::{sample_prior, star_shape_constant, whittle_matern_coeffs, PriorSpec, RadiusField};

// Reference values below come from a 40-digit evaluation of the printed
// closed forms, done outside this crate.

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

fn params(alpha_in: f64, n_in: f64, dim: usize) -> PhysicsParams {
    let mut p = PhysicsParams::from_frequency(1e9, SPEED_OF_LIGHT, alpha_in, 1.0, n_in, 1.0, [1.0, 0.0]).unwrap();
    p.dim = dim;
    p
}

/// Hand-specified geometry so the fixtures do not depend on the prior.
fn geom(d: usize) -> GeometrySummary {
    GeometrySummary {
        d,
        r: 0.07,
        r_scatt: 0.035,
        r_pml: 0.11,
        r0: 0.01,
        gamma_beta: 0.05,
        r_minus: 0.0095,
        r_plus: 0.0105,
        diam_max: 0.021,
        diam_inner: 0.019,
        gamma_tilde: 1.0 / 18.0,
        g_hat: 1.0 / 18.0,
        c_surf: 0.3,
    }
}

#[test]
fn corollary_fixtures() {
    for (d, ck, c2) in [(2, 4.9166419273217283, 6122.4489795918367), (3, 9.6903079580603544, 7346.9387755102041)] {
        let c = corollary_constants(&params(2.0, 0.9, d), &geom(d)).unwrap();
        assert!(close(c.c_kappa0, ck, 1e-12), "{}", c.c_kappa0);
        assert!(close(c.c1, 1224.4897959183673, 1e-12));
        assert!(close(c.c2, c2, 1e-12));
    }
    assert!((corollary_constants(&PhysicsParams::default(), &geom(2)).unwrap().c_kappa0 - 4.92).abs() < 0.005);
}

#[test]
fn corollary_limits_and_substitution() {
    let lim = 0.07 * 8f64.sqrt();
    assert!(close(c_kappa0(1e12, 0.07, 1.0, 1.0, 2), lim, 1e-9));
    for r in [0.05, 0.07, 1.3] {
        let mut g = geom(2);
        g.r = r;
        g.r_scatt = r / 2.0;
        let c = corollary_constants(&params(1.0, 0.9, 2), &g).unwrap();
        assert!(close(c.c1, 6.0 / (r * r), 1e-14));
    }
    let mut g = geom(2);
    g.r_scatt = 0.07;
    assert!(corollary_constants(&params(1.0, 0.9, 2), &g).is_err());
}

#[test]
fn c_kappa0_strictly_decreasing() {
    let lim = 0.07 * 8f64.sqrt();
    let vals: Vec<f64> = (0..50)
        .map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 49.0))
        .map(|k| c_kappa0(k, 0.07, 1.0, 1.0, 2))
        .collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]));
    assert!(vals.iter().all(|&v| v > lim));
}

#[test]
fn volume_source_fixtures() {
    for (d, a, b) in [(2, 26.838401823886577, 24.173367841497919), (3, 104.31473569116426, 93.902068322047836)] {
        let p = params(2.0, 0.9, d);
        let [fa, fb] = volume_source_factors(&p, &geom(d));
        assert!(close(fa, a, 1e-12) && close(fb, b, 1e-12), "{fa} {fb}");
        assert_eq!(volume_source_rhs(&p, &geom(d), 0.0, 0.0), 0.0);
        let c = corollary_constants(&p, &geom(d)).unwrap().c_kappa0;
        assert!(close(volume_source_rhs(&p, &geom(d), 0.0, 0.3), (c * 0.3).powi(2), 1e-14));
    }
}

#[test]
fn jump_fixtures() {
    for (d, f2, f3) in [(2, 2621.9625884304356, 195580.69988165142), (3, 10479.105445573293, 781796.11952660567)] {
        let p = params(2.0, 0.9, d);
        let [a, b, c] = jump_factors(&p, &geom(d), 1.0 / 18.0).unwrap();
        assert!(close(a, 6.216, 1e-12) && close(b, f2, 1e-12) && close(c, f3, 1e-12), "{a} {b} {c}");
    }
}

#[test]
fn jump_reduces_and_rejects() {
    let p = params(2.0, 0.9, 2);
    let g = geom(2);
    for (fi, fo) in [(0.0, 0.0), (0.2, 0.7), (3.0, 0.01)] {
        let a = jump_rhs(&p, &g, g.g_hat, &TraceNorms::default(), fi, fo).unwrap();
        assert_eq!(a, volume_source_rhs(&p, &g, fi, fo));
    }
    assert!(jump_factors(&params(1.0, 0.9, 2), &g, 0.05).is_err());
    assert!(jump_factors(&params(2.0, 1.0, 2), &g, 0.05).is_err());
    assert!(jump_factors(&p, &g, 0.6).is_err());
    // pole as alpha_in approaches alpha_out from above
    let near = jump_factors(&params(1.0 + 1e-9, 0.9, 2), &g, 0.05).unwrap();
    let far = jump_factors(&params(1.5, 0.9, 2), &g, 0.05).unwrap();
    assert!(near[0] > 1e7 * far[0] && near[0].is_finite());
}

#[test]
fn stability_fixtures_and_structure() {
    let inc = IncidentNorms { l2: 0.05, grad: 0.01, weighted: 0.02 };
    for (d, gv, cv) in [(2, 1626.5427360452849, 488012.82081358548), (3, 3739.6062861208692, 1121931.8858362608)] {
        let p = params(2.0, 0.9, d);
        let s = stability_constant(&p, &geom(d), 0.01, 0.5, 3.0, &inc).unwrap();
        assert!(close(s.forward_bound, gv, 1e-12) && close(s.value, cv, 1e-12), "{s:?}");
        assert!(close(s.plane_wave_proxy, 54.398229715025711, 1e-12));
        assert!(close(scattered_bound(&p, &geom(d), &inc).unwrap(), gv, 1e-12));
    }
    let p = params(2.0, 0.9, 2);
    let zero = stability_constant(&p, &geom(2), 0.01, 0.0, 3.0, &IncidentNorms::default()).unwrap();
    assert_eq!(zero.value, 0.0);
    for lam in [1e-4, 0.01, 0.3, 7.0] {
        let s = stability_constant(&p, &geom(2), lam, 0.5, 3.0, &inc).unwrap();
        assert!(close(s.value * lam, 0.5 + 3.0 * s.forward_bound, 1e-14));
    }
    assert!(stability_constant(&p, &geom(2), 0.0, 0.5, 3.0, &inc).is_err());
    let mut p2 = p;
    p2.kappa0 *= 2.0;
    let a = stability_constant(&p, &geom(2), 0.01, 0.5, 3.0, &inc).unwrap().plane_wave_proxy - 50.0;
    let b = stability_constant(&p2, &geom(2), 0.01, 0.5, 3.0, &inc).unwrap().plane_wave_proxy - 50.0;
    assert!(close(b, 2.0 * a, 1e-14));
}

#[test]
fn suboptimal_fixtures_and_structure() {
    for (d, want) in [(2, 326437.56854635532), (3, 652606.23780995477)] {
        let v = suboptimal_stability_constant(&params(2.0, 0.9, d), &geom(d), 0.01, 0.5, 3.0, 0.02, 1.3).unwrap();
        assert!(close(v, want, 1e-12), "{v}");
    }
    // n_in = n_out α_out / α_in kills the volume-contrast term
    let p = params(2.0, 0.5, 2);
    let a = suboptimal_stability_constant(&p, &geom(2), 0.01, 0.5, 3.0, 0.02, 1.3).unwrap();
    let b = suboptimal_stability_constant(&p, &geom(2), 0.01, 0.5, 3.0, 5.0, 1.3).unwrap();
    assert_eq!(a, b);
    assert!(suboptimal_stability_constant(&params(1.0, 0.9, 2), &geom(2), 0.01, 0.5, 3.0, 0.02, 1.3).is_err());
}

// The surface term carries α_out (d-1)²/(4 κ0² diam) under the root, times
// ‖u^i‖_{C¹} = 1 + κ0, so it falls like 1/κ0 for small κ0. At this geometry
// the constant bottoms out near κ0 ≈ 3.4 and only increases beyond.
#[test]
#[ignore = "known failure: the contrast-explicit constant decreases on [0.1, 3.4] at the default geometry"]
fn suboptimal_increasing_in_kappa0() {
    let scan: Vec<f64> = (0..60)
        .map(|i| 0.1 * 100f64.powf(i as f64 / 59.0))
        .map(|k| {
            let mut q = params(2.0, 0.9, 2);
            q.kappa0 = k;
            suboptimal_stability_constant(&q, &geom(2), 0.01, 0.5, 3.0, 0.02, 1.0 + q.k_out()).unwrap()
        })
        .collect();
    assert!(scan.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn soundsoft_fixtures() {
    for (d, c1, c3) in [(2, 15.905973720586866, 22.825249177172196), (3, 18.145247311624055, 26.80731243522931)] {
        let s = soundsoft_constants(20.0, 0.07, d, 1.0, 2.0, 0.3, 0.021, 1.0 / 18.0).unwrap();
        assert!(close(s.c1, c1, 1e-12) && close(s.c2, 0.1089458581131013, 1e-12) && close(s.c3, c3, 1e-12), "{s:?}");
    }
    // C2 ∝ √diam √(1 + 4 diam/γ̃)
    let a = soundsoft_constants(20.0, 0.07, 2, 1.0, 2.0, 0.3, 0.01, 0.1).unwrap().c2;
    let b = soundsoft_constants(20.0, 0.07, 2, 1.0, 2.0, 0.3, 0.04, 0.1).unwrap().c2;
    assert!(close(b / a, (0.04f64 / 0.01).sqrt() * ((1.0 + 1.6) / 1.4f64).sqrt(), 1e-14));
    // C3 grows linearly in κ0 R
    let c = |k: f64| soundsoft_constants(k, 0.07, 2, 1.0, 2.0, 0.3, 0.021, 0.05).unwrap().c3;
    assert!(close(c(2e6) / c(1e6), 2.0, 1e-9));
}

#[test]
fn soundsoft_threshold_rejected_at_defaults() {
    let k = PhysicsParams::default().kappa0;
    let e = soundsoft_constants(k, 0.07, 2, 1.0, 2.0, 0.3, 0.021, 1.0 / 18.0).unwrap_err().to_string();
    let threshold = (3.0f64 / 8.0).sqrt() / k;
    assert!(e.contains(&format!("{threshold}")), "{e}");
    assert!(soundsoft_constants(1.0, 0.7, 2, 1.0, 0.0, 0.3, 0.021, 0.05).is_err());
}

#[test]
fn geometry_from_prior() {
    let c = whittle_matern_coeffs(0.01, 0.1, 0.001, 6).unwrap();
    let g = GeometrySummary::new(&c, 2, 0.07, None, 0.11).unwrap();
    assert_eq!(g.r_scatt, 0.035);
    let gt = star_shape_constant(2, c.gamma_beta(), 0.01, 0.01).unwrap();
    assert_eq!(g.gamma_tilde, gt);
    assert_eq!(g.g_hat, gt.min(0.5));
    assert!(close(g.gamma_tilde, 1.0 / 18.0, 1e-15));
    assert!(close(g.diam_max, 2.0 * (1.0 + c.gamma_beta()) * 0.01, 1e-15));
    assert!(GeometrySummary::new(&c, 2, 0.07, Some(0.0101), 0.11).is_err());
    assert!(GeometrySummary::new(&c, 2, 0.07, Some(0.08), 0.11).is_err());
    assert!(GeometrySummary::new(&c, 4, 0.07, None, 0.11).is_err());
}

#[test]
fn holdall_norms_of_plane_wave() {
    let p = params(2.0, 0.9, 2);
    let g = geom(2);
    let inc = holdall_incident_norms(&p, &g);
    let ao = PI * (g.r * g.r - g.r_minus * g.r_minus);
    let ai = PI * g.r_plus * g.r_plus;
    let k = p.kappa0;
    assert!(close(inc.l2, ao.sqrt(), 1e-12));
    assert!(close(inc.grad, k * ao.sqrt(), 1e-12));
    let w = (2.0 * k * k * ai + k * k * 0.9 * ai + k * k * ao + k * k * ao).sqrt();
    assert!(close(inc.weighted, w, 1e-12));
    assert!(close(incident_l2_inner(&p, &g), ai.sqrt(), 1e-12));
    assert_eq!(incident_c1_norm(&p), 1.0 + k);
}

#[test]
fn constant_report_contents() {
    let c = whittle_matern_coeffs(0.01, 0.1, 0.001, 6).unwrap();
    let g = GeometrySummary::new(&c, 2, 0.07, None, 0.11).unwrap();
    let inputs = StabilityInputs { lambda_min: 0.01, gamma: 1.0, o_norm: 2.0, soundsoft: Some((1.0, 2.0)) };
    let r = constant_report(&PhysicsParams::default(), &g, &inputs).unwrap();
    assert!(r.jump.is_none() && r.suboptimal.is_none());
    assert!(r.soundsoft.is_none(), "threshold fails at the default wavenumber");
    let s = r.stability.unwrap();
    assert!(s.value.is_finite() && s.value > 0.0);
    let r = constant_report(&params(2.0, 0.9, 2), &g, &inputs).unwrap();
    assert!(r.jump.unwrap().iter().all(|v| v.is_finite() && *v > 0.0));
    assert!(r.suboptimal.unwrap() > 0.0);
}

#[test]
fn observation_norms_are_bounded_below() {
    let p = PhysicsParams::default();
    let solver = common::default_solver(0.0025, p);
    let pts = common::ring(0.06, 8);
    let o = observation_norms(solver.mesh(), &p, &pts).unwrap();
    // v ≡ 1 is in the P1 space: |v(x)| / ‖v‖ = 1 / (κ0 √∫n)
    let floor = 1.0 / (p.kappa0 * (PI * 0.07f64 * 0.07).sqrt());
    for v in &o {
        assert!(v.is_finite() && *v >= floor * 0.999, "{v} vs {floor}");
    }
    assert_eq!(euclidean(&[3.0, 4.0]), 5.0);
    assert!(observation_norms(solver.mesh(), &p, &[[0.08, 0.0]]).is_err());
}

#[test]
fn forward_bound_checks() {
    let c = Arc::new(whittle_matern_coeffs(0.01, 0.1, 0.001, 6).unwrap());
    let g = GeometrySummary::new(&c, 2, 0.07, None, 0.11).unwrap();
    // no contrast: nothing scatters
    let flat = PhysicsParams::from_frequency(1e9, SPEED_OF_LIGHT, 1.0, 1.0, 1.0, 1.0, [1.0, 0.0]).unwrap();
    let s = common::default_solver(0.0025, flat);
    let r = verify_forward_bound(&RadiusField::nominal(c.clone()), &g, &s, 0.05).unwrap();
    assert!(r.lhs.unwrap() < 1e-12 && r.passed().unwrap());
    let s = common::default_solver(0.00125, PhysicsParams::default());
    for f in sample_prior(&PriorSpec::new(c.clone(), 3), 3) {
        let r = verify_forward_bound(&f, &g, &s, 0.05).unwrap();
        assert!(r.passed().unwrap(), "ratio {:?}", r.ratio());
        let inc = realization_incident_norms(&s, &f).unwrap();
        assert!(inc.l2 > 0.0 && inc.grad > 0.0 && inc.weighted > inc.grad);
    }
    // realization norms of the nominal circle: |u^i| = 1 over the mapped annulus
    let inc = realization_incident_norms(&s, &RadiusField::nominal(c.clone())).unwrap();
    let want = (PI * (0.07f64.powi(2) - 0.01f64.powi(2))).sqrt();
    assert!(close(inc.l2, want, 1e-3), "{} vs {want}", inc.l2);
    let trapping = PhysicsParams::from_frequency(1e9, SPEED_OF_LIGHT, 1.0, 1.0, 2.0, 1.0, [1.0, 0.0]).unwrap();
    let s = common::default_solver(0.005, trapping);
    assert!(verify_forward_bound(&RadiusField::nominal(c), &g, &s, 0.05).is_err());
}
