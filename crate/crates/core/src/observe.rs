//! Point measurements of the total field on a ring, the Gaussian noise
//! model, and synthetic data.

use std::f64::consts::PI;

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::{FieldSolution, ForwardSolver};
use crate::shape::RadiusField;

/// What is read off the total field at each point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Amplitude,
    RealPart,
}

impl Mode {
    pub fn apply(self, u: num_complex::Complex64) -> f64 {
        match self {
            Mode::Amplitude => u.norm(),
            Mode::RealPart => u.re,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetup {
    pub k: usize,
    pub r1: f64,
    pub mode: Mode,
}

impl MeasurementSetup {
    pub fn new(k: usize, r1: f64, mode: Mode) -> Result<Self> {
        if k == 0 {
            return invalid("need at least one measurement point");
        }
        if !(r1 > 0.0 && r1.is_finite()) {
            return invalid(format!("ring radius must be > 0, got {r1}"));
        }
        Ok(Self { k, r1, mode })
    }

    /// Ring must clear every admissible scatterer (`r_max`) and stay inside `B_R`.
    pub fn check_geometry(&self, r_max: f64, r: f64) -> Result<()> {
        if !(self.r1 > r_max) {
            return invalid(format!(
                "measurement radius r1 = {} must exceed the largest scatterer radius {r_max}",
                self.r1
            ));
        }
        if !(self.r1 < r) {
            return invalid(format!("measurement radius r1 = {} must be below R = {r}", self.r1));
        }
        Ok(())
    }
}

/// `x_i = r1 (cos 2πi/K, sin 2πi/K)`, `i = 1..K`.
pub fn measurement_points(setup: &MeasurementSetup) -> Vec<[f64; 2]> {
    (1..=setup.k)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / setup.k as f64;
            [setup.r1 * t.cos(), setup.r1 * t.sin()]
        })
        .collect()
}

/// Observation of an existing solution.
pub fn observe(sol: &FieldSolution, setup: &MeasurementSetup) -> Result<Vec<f64>> {
    let u = sol.total_field_at(&measurement_points(setup))?;
    Ok(u.into_iter().map(|v| setup.mode.apply(v)).collect())
}

/// `G(r)`: solve and observe.
pub fn forward_map(field: &RadiusField, setup: &MeasurementSetup, solver: &ForwardSolver) -> Result<Vec<f64>> {
    observe(&solver.solve(field)?, setup)
}

/// How the noise covariance is specified in configs and data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaSpec {
    /// `σ² I`.
    ScaledIdentity { variance: f64 },
    Diagonal { variances: Vec<f64> },
    /// Row-major `K×K`.
    Full { matrix: Vec<Vec<f64>> },
}

impl Default for SigmaSpec {
    fn default() -> Self {
        SigmaSpec::ScaledIdentity { variance: 0.01 }
    }
}

impl SigmaSpec {
    pub fn matrix(&self, k: usize) -> Result<Vec<f64>> {
        let mut m = vec![0.0; k * k];
        match self {
            SigmaSpec::ScaledIdentity { variance } => {
                for i in 0..k {
                    m[i * k + i] = *variance;
                }
            }
            SigmaSpec::Diagonal { variances } => {
                if variances.len() != k {
                    return invalid(format!("diagonal covariance has {} entries, K = {k}", variances.len()));
                }
                for (i, v) in variances.iter().enumerate() {
                    m[i * k + i] = *v;
                }
            }
            SigmaSpec::Full { matrix } => {
                if matrix.len() != k || matrix.iter().any(|r| r.len() != k) {
                    return invalid(format!("covariance must be {k}x{k}"));
                }
                for (i, row) in matrix.iter().enumerate() {
                    m[i * k..(i + 1) * k].copy_from_slice(row);
                }
            }
        }
        Ok(m)
    }

    pub fn noise_model(&self, k: usize) -> Result<NoiseModel> {
        NoiseModel::new(k, self.matrix(k)?)
    }
}

/// Gaussian noise `N(0, Σ)` with `Σ^{±1/2}` precomputed from the
/// eigendecomposition.
#[derive(Clone, Debug)]
pub struct NoiseModel {
    k: usize,
    cov: Vec<f64>,
    inv_sqrt: Vec<f64>,
    sqrt: Vec<f64>,
    lambda_min: f64,
}

impl NoiseModel {
    /// `cov` is row-major `k×k`, symmetric to 1e-12 and positive definite.
    pub fn new(k: usize, cov: Vec<f64>) -> Result<Self> {
        if cov.len() != k * k || k == 0 {
            return invalid(format!("covariance has {} entries, expected {}", cov.len(), k * k));
        }
        if cov.iter().any(|v| !v.is_finite()) {
            return invalid("covariance has non-finite entries");
        }
        let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..k {
            for j in 0..i {
                if (cov[i * k + j] - cov[j * k + i]).abs() > 1e-12 * scale.max(1.0) {
                    return invalid(format!("covariance is not symmetric at ({i}, {j})"));
                }
            }
        }
        let a = Mat::<f64>::from_fn(k, k, |i, j| 0.5 * (cov[i * k + j] + cov[j * k + i]));
        let eig = a
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Invalid(format!("covariance eigendecomposition failed: {e:?}")))?;
        let s = eig.S();
        let u = eig.U();
        let lambdas: Vec<f64> = (0..k).map(|i| s[i]).collect();
        let lambda_min = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lambda_min > 0.0) {
            return invalid(format!("covariance must be positive definite, smallest eigenvalue {lambda_min:e}"));
        }
        let build = |f: &dyn Fn(f64) -> f64| {
            let mut m = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    m[i * k + j] = (0..k).map(|l| u[(i, l)] * f(lambdas[l]) * u[(j, l)]).sum();
                }
            }
            m
        };
        let inv_sqrt = build(&|l| 1.0 / l.sqrt());
        let sqrt = build(&|l| l.sqrt());
        Ok(Self {
            k,
            cov,
            inv_sqrt,
            sqrt,
            lambda_min,
        })
    }

    pub fn scaled_identity(k: usize, variance: f64) -> Result<Self> {
        SigmaSpec::ScaledIdentity { variance }.noise_model(k)
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn covariance(&self) -> &[f64] {
        &self.cov
    }

    /// `Σ^{-1/2} v`.
    pub fn whiten(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.inv_sqrt, v)
    }

    /// One draw `Σ^{1/2} z`.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        let z: Vec<f64> = (0..self.k).map(|_| StandardNormal.sample(rng)).collect();
        mat_vec(&self.sqrt, &z)
    }
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let k = v.len();
    (0..k).map(|i| m[i * k..(i + 1) * k].iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Observed data and where it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataVector {
    pub delta: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub r1: f64,
    pub mode: Mode,
    pub truth_seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub sigma_spec: SigmaSpec,
    /// Coordinates of the synthetic truth, if known.
    #[serde(default)]
    pub truth_y: Option<Vec<f64>>,
}

impl DataVector {
    pub fn validate(&self) -> Result<()> {
        if self.delta.len() != self.k {
            return invalid(format!("data has {} values but K = {}", self.delta.len(), self.k));
        }
        if self.delta.iter().any(|v| !v.is_finite()) {
            return invalid("data contains non-finite values");
        }
        Ok(())
    }
}

/// Seeds recorded with synthetic data.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DataSeeds {
    pub truth: Option<u64>,
    pub noise: u64,
}

/// `δ = G(r†) + Σ^{1/2} z`; `noise = None` gives the noiseless `G(r†)`.
pub fn generate_data(
    truth: &RadiusField,
    setup: &MeasurementSetup,
    solver: &ForwardSolver,
    noise: Option<&NoiseModel>,
    sigma_spec: SigmaSpec,
    seeds: DataSeeds,
) -> Result<DataVector> {
    let g = forward_map(truth, setup, solver)?;
    let delta = add_noise(&g, noise, seeds.noise)?;
    Ok(DataVector {
        delta,
        k: setup.k,
        r1: setup.r1,
        mode: setup.mode,
        truth_seed: seeds.truth,
        noise_seed: noise.map(|_| seeds.noise),
        sigma_spec,
        truth_y: Some(truth.y().to_vec()),
    })
}

/// `g + Σ^{1/2} z` with `z` drawn from `noise_seed`.
pub fn add_noise(g: &[f64], noise: Option<&NoiseModel>, noise_seed: u64) -> Result<Vec<f64>> {
    let Some(n) = noise else {
        return Ok(g.to_vec());
    };
    if n.dim() != g.len() {
        return invalid(format!("noise dimension {} differs from K = {}", n.dim(), g.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    Ok(g.iter().zip(n.sample(&mut rng)).map(|(a, b)| a + b).collect())
}
