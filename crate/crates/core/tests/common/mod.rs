//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64 as C64;
use puruspe::{Jn, Yn};

fn jn(m: u32, x: f64) -> f64 {
    Jn(m, x)
}

fn jn_prime(m: u32, x: f64) -> f64 {
    if m == 0 {
        -Jn(1, x)
    } else {
        0.5 * (Jn(m - 1, x) - Jn(m + 1, x))
    }
}

fn hn(m: u32, x: f64) -> C64 {
    C64::new(Jn(m, x), Yn(m, x))
}

fn hn_prime(m: u32, x: f64) -> C64 {
    if m == 0 {
        -hn(1, x)
    } else {
        (hn(m - 1, x) - hn(m + 1, x)) * 0.5
    }
}

/// Scattering of `exp(i k_out d·x)` by a penetrable disk of radius `a`,
/// by matching `u` and `α ∂_ρ u` mode by mode.
pub struct CircleSeries {
    pub k_out: f64,
    pub k_in: f64,
    pub direction: [f64; 2],
    /// `b_m`, m = 0..modes.
    pub b: Vec<C64>,
}

impl CircleSeries {
    pub fn new(
        kappa0: f64,
        alpha_in: f64,
        alpha_out: f64,
        n_in: f64,
        n_out: f64,
        a: f64,
        direction: [f64; 2],
        modes: u32,
    ) -> Self {
        let k0 = kappa0 * (n_out / alpha_out).sqrt();
        let k1 = kappa0 * (n_in / alpha_in).sqrt();
        let (x0, x1) = (k0 * a, k1 * a);
        let b = (0..=modes)
            .map(|m| {
                let im = C64::i().powu(m);
                let num = alpha_in * k1 * jn_prime(m, x1) * jn(m, x0)
                    - alpha_out * k0 * jn_prime(m, x0) * jn(m, x1);
                let den = hn_prime(m, x0) * (alpha_out * k0 * jn(m, x1))
                    - hn(m, x0) * (alpha_in * k1 * jn_prime(m, x1));
                im * num / den
            })
            .collect();
        Self {
            k_out: k0,
            k_in: k1,
            direction,
            b,
        }
    }

    /// Scattered field at a point outside the disk.
    pub fn scattered(&self, x: [f64; 2]) -> C64 {
        let rho = x[0].hypot(x[1]);
        let theta = x[1].atan2(x[0]) - self.direction[1].atan2(self.direction[0]);
        let kr = self.k_out * rho;
        let mut u = self.b[0] * hn(0, kr);
        for (m, bm) in self.b.iter().enumerate().skip(1) {
            u += *bm * hn(m as u32, kr) * (2.0 * (m as f64 * theta).cos());
        }
        u
    }

    pub fn incident(&self, x: [f64; 2]) -> C64 {
        C64::from_polar(1.0, self.k_out * (self.direction[0] * x[0] + self.direction[1] * x[1]))
    }

    pub fn total(&self, x: [f64; 2]) -> C64 {
        self.incident(x) + self.scattered(x)
    }
}

/// Relative discrete L² distance `|a - b| / |b|`.
pub fn rel_l2(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Points `r (cos 2πi/K, sin 2πi/K)`, i = 1..K, built independently of the library.
pub fn ring(r: f64, k: usize) -> Vec<[f64; 2]> {
    (1..=k)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

/// Composite Gauss–Legendre (5 points) on `[a, b]` with `n` panels.
pub fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for p in 0..n {
        let c = a + (p as f64 + 0.5) * h;
        for k in 0..5 {
            s += W[k] * f(c + 0.5 * h * X[k]);
        }
    }
    s * 0.5 * h
}

/// Reference mesh and solver at the desk-scale defaults, mesh size `h`.
pub fn default_solver(h: f64, params: shapeinv::forward::PhysicsParams) -> shapeinv::forward::ForwardSolver {
    use shapeinv::mesh::{build_disk_mesh, MeshConfig};
    let cfg = MeshConfig::new(h, 0.00125, 0.01, 0.0425, 0.07, 0.11).unwrap();
    let mesh = std::sync::Arc::new(build_disk_mesh(&cfg).unwrap());
    shapeinv::forward::ForwardSolver::new(mesh, params, shapeinv::forward::DEFAULT_SIGMA_PML).unwrap()
}
