//! Star-shaped boundary parametrization, the uniform prior over it, and
//! geometric star-shapedness diagnostics.
//!
//! A boundary is the polar curve
//! `r(y, φ) = r0 + Σ_j β_j y_j ψ_j(φ)` with `y ∈ [-1, 1]^J`, a Fourier basis
//! `ψ_j` normalized to unit `C^{0,1}` norm, and Whittle–Matérn-like
//! coefficients `β_j` whose absolute sum is `r0 / 2`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Uniform angle grid used by the geometric minima.
pub const DEFAULT_ANGLE_GRID: usize = 4096;

/// How the raw harmonics are scaled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Normalization {
    /// Divide by `sup|ψ| + Lip(ψ) = 1 + k` for frequency `k`.
    #[default]
    SupPlusLipschitz,
    /// Raw `sin`/`cos`.
    Unit,
}

impl Normalization {
    pub fn factor(self, k: usize) -> f64 {
        match self {
            Normalization::SupPlusLipschitz => 1.0 / (1.0 + k as f64),
            Normalization::Unit => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BasisSet {
    pub count: usize,
    pub normalization: Normalization,
}

impl BasisSet {
    pub fn new(count: usize) -> Self {
        Self {
            count,
            normalization: Normalization::default(),
        }
    }

    /// `ψ_j(φ)` for `j ≥ 1`. Panics on `j = 0`; use [`basis_eval`] for a checked call.
    pub fn eval(&self, j: usize, phi: f64) -> f64 {
        let k = frequency(j);
        let a = self.normalization.factor(k);
        if j % 2 == 1 {
            a * (k as f64 * phi).sin()
        } else {
            a * (k as f64 * phi).cos()
        }
    }

    pub fn deriv(&self, j: usize, phi: f64) -> f64 {
        let k = frequency(j);
        let kf = k as f64;
        let a = self.normalization.factor(k);
        if j % 2 == 1 {
            a * kf * (kf * phi).cos()
        } else {
            -a * kf * (kf * phi).sin()
        }
    }

    /// Squared `L²(0, 2π)` norm of `ψ_j`.
    pub fn l2_norm_sq(&self, j: usize) -> f64 {
        let a = self.normalization.factor(frequency(j));
        PI * a * a
    }
}

/// Harmonic frequency of basis index `j`: `(j+1)/2` for odd `j`, `j/2` for even `j`.
pub fn frequency(j: usize) -> usize {
    (j + 1) / 2
}

/// Normalized basis function `ψ_j(φ)`.
pub fn basis_eval(j: usize, phi: f64) -> Result<f64> {
    if j == 0 {
        return invalid("basis index starts at 1");
    }
    Ok(BasisSet::new(j).eval(j, phi))
}

/// Decay family `β_{2k-1} = β_{2k} = r0 w_k / (4 S)` with `w_k = 1/(1 + s k^{2+ε})`
/// and `S = Σ_k w_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhittleMatern {
    pub s: f64,
    pub eps: f64,
    /// `S = Σ_{k≥1} w_k`.
    pub normalizer: f64,
}

impl WhittleMatern {
    pub fn new(s: f64, eps: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("decay parameter s must be > 0, got {s}"));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return invalid(format!("decay parameter epsilon must be > 0, got {eps}"));
        }
        Ok(Self {
            s,
            eps,
            normalizer: normalizer(s, eps),
        })
    }

    pub fn weight(&self, k: usize) -> f64 {
        1.0 / (1.0 + self.s * (k as f64).powf(2.0 + self.eps))
    }

    pub fn beta(&self, r0: f64, j: usize) -> f64 {
        r0 * self.weight(frequency(j)) / (4.0 * self.normalizer)
    }
}

/// `S(s, ε) = Σ_{k≥1} 1/(1 + s k^{2+ε})`.
///
/// Explicit sum up to `N` with `s N^{2+ε} ≥ 10³`, then an Euler–Maclaurin
/// tail built from the large-`x` expansion of the summand. Relative error is
/// below 1e-13 for all `s, ε > 0`.
pub fn normalizer(s: f64, eps: f64) -> f64 {
    let p = 2.0 + eps;
    let n = ((1e3 / s).powf(1.0 / p).ceil()).max(1000.0) as usize;
    let mut sum = 0.0;
    for k in (1..=n).rev() {
        sum += 1.0 / (1.0 + s * (k as f64).powf(p));
    }
    sum + euler_maclaurin_tail(s, p, n as f64)
}

/// `Σ_{k>n} f(k)` for `f(x) = 1/(1 + s x^p)`, valid when `s n^p ≫ 1`.
fn euler_maclaurin_tail(s: f64, p: f64, n: f64) -> f64 {
    // f(x) = Σ_m c_m x^{-q_m}, c_m = (-1)^m s^{-(m+1)}, q_m = p (m+1)
    let mut integral = 0.0;
    let mut f = 0.0;
    let mut f1 = 0.0;
    let mut f3 = 0.0;
    for m in 0..40 {
        let c = if m % 2 == 0 { 1.0 } else { -1.0 } * s.powi(-(m + 1));
        let q = p * (m + 1) as f64;
        let xq = n.powf(-q);
        let term = c * xq;
        integral += term * n / (q - 1.0);
        f += term;
        f1 += -q * term / n;
        f3 += -q * (q + 1.0) * (q + 2.0) * term / (n * n * n);
        if term.abs() < 1e-30 * f.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    integral - f / 2.0 - f1 / 12.0 + f3 / 720.0
}

/// Coefficient vector `β_1..β_J`, optionally backed by an analytic family
/// that defines the infinite tail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSequence {
    r0: f64,
    betas: Vec<f64>,
    family: Option<WhittleMatern>,
}

/// First `j` coefficients of the Whittle–Matérn family at nominal radius `r0`.
pub fn whittle_matern_coeffs(r0: f64, s: f64, eps: f64, j: usize) -> Result<CoefficientSequence> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return invalid(format!("nominal radius must be > 0, got {r0}"));
    }
    let fam = WhittleMatern::new(s, eps)?;
    let betas = (1..=j).map(|i| fam.beta(r0, i)).collect();
    Ok(CoefficientSequence {
        r0,
        betas,
        family: Some(fam),
    })
}

impl CoefficientSequence {
    /// Explicit finite coefficient list (no tail).
    pub fn from_betas(r0: f64, betas: Vec<f64>) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return invalid(format!("nominal radius must be > 0, got {r0}"));
        }
        if betas.iter().any(|b| !b.is_finite()) {
            return invalid("coefficients must be finite");
        }
        let total: f64 = betas.iter().map(|b| b.abs()).sum();
        if total >= r0 {
            return invalid(format!(
                "sum of |beta| = {total} must stay below r0 = {r0} for a positive radius"
            ));
        }
        Ok(Self {
            r0,
            betas,
            family: None,
        })
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn family(&self) -> Option<&WhittleMatern> {
        self.family.as_ref()
    }

    /// `β_j` for any `j ≥ 1`; beyond the stored length this is the family
    /// value, or zero for an explicit list.
    pub fn beta_at(&self, j: usize) -> f64 {
        if j >= 1 && j <= self.betas.len() {
            self.betas[j - 1]
        } else if let Some(f) = &self.family {
            f.beta(self.r0, j)
        } else {
            0.0
        }
    }

    /// Same sequence truncated (or extended along the family) to `j` terms.
    pub fn truncated(&self, j: usize) -> CoefficientSequence {
        CoefficientSequence {
            r0: self.r0,
            betas: (1..=j).map(|i| self.beta_at(i)).collect(),
            family: self.family,
        }
    }

    /// `Σ_{i≤j} |β_i|`.
    pub fn partial_abs_sum(&self, j: usize) -> f64 {
        if let Some(f) = &self.family {
            // pairwise form keeps the sum exact in the pair structure
            let pairs = j / 2;
            let mut w = 0.0;
            for k in (1..=pairs).rev() {
                w += f.weight(k);
            }
            let mut s = self.r0 * w / (2.0 * f.normalizer);
            if j % 2 == 1 {
                s += f.beta(self.r0, j);
            }
            s
        } else {
            self.betas.iter().take(j).map(|b| b.abs()).sum()
        }
    }

    /// `Σ_j |β_j|` over the whole (possibly infinite) sequence; `r0/2` for the family.
    pub fn total_abs_sum(&self) -> f64 {
        match &self.family {
            Some(_) => self.r0 / 2.0,
            None => self.partial_abs_sum(self.betas.len()),
        }
    }

    /// `γ_β = Σ|β_j| / r0`.
    pub fn gamma_beta(&self) -> f64 {
        self.total_abs_sum() / self.r0
    }

    /// Variance contribution of one term: `β_j² E[Y²] ‖ψ_j‖²_{L²}` with `E[Y²] = 1/3`.
    fn variance_term(&self, j: usize) -> f64 {
        let b = self.beta_at(j);
        b * b / 3.0 * BasisSet::new(j).l2_norm_sq(j)
    }

    /// Prior variance of `‖r - r0‖_{L²}` carried by the first `j` terms.
    pub fn variance_truncated(&self, j: usize) -> f64 {
        (1..=j).rev().map(|i| self.variance_term(i)).sum()
    }

    /// Prior variance of `‖r - r0‖_{L²}` for the full sequence.
    pub fn total_variance(&self) -> f64 {
        match &self.family {
            None => self.variance_truncated(self.betas.len()),
            Some(f) => {
                // terms decay like j^{-2(2+ε)-2}; the integral tail past N is far below 1e-12
                let n = 200_000usize;
                let head = self.variance_truncated(n);
                let p = 2.0 + f.eps;
                let q = 2.0 * p + 2.0;
                let c = (self.r0 / (4.0 * f.normalizer * f.s)).powi(2) * 2.0 * PI / 3.0;
                let tail = c * (n as f64 / 2.0).powf(1.0 - q) / (q - 1.0);
                head + tail
            }
        }
    }
}

/// Smallest `J` whose truncated prior variance is at least `fraction` of the total.
pub fn truncation_level(coeffs: &CoefficientSequence, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return invalid(format!("variance fraction must lie in (0, 1), got {fraction}"));
    }
    let total = coeffs.total_variance();
    if total <= 0.0 {
        return invalid("coefficient sequence carries no variance");
    }
    let target = fraction * total;
    let mut acc = 0.0;
    let mut j = 0usize;
    loop {
        j += 1;
        acc += coeffs.variance_term(j);
        if acc >= target {
            return Ok(j);
        }
        if coeffs.family.is_none() && j >= coeffs.len() {
            return Ok(j);
        }
    }
}

/// Boundary `r(y, ·)` for one coefficient vector `y`.
#[derive(Clone, Debug)]
pub struct RadiusField {
    y: Vec<f64>,
    coeffs: Arc<CoefficientSequence>,
    basis: BasisSet,
}

impl RadiusField {
    /// `y` may be shorter than the coefficient list; missing entries are zero.
    pub fn new(coeffs: Arc<CoefficientSequence>, y: Vec<f64>) -> Result<Self> {
        if y.len() > coeffs.len() {
            return invalid(format!(
                "y has {} entries but only {} coefficients are available",
                y.len(),
                coeffs.len()
            ));
        }
        if let Some((i, v)) = y.iter().enumerate().find(|(_, v)| !(v.abs() <= 1.0)) {
            return invalid(format!("y[{i}] = {v} lies outside [-1, 1]"));
        }
        let basis = BasisSet::new(y.len());
        Ok(Self { y, coeffs, basis })
    }

    /// The nominal circle `r ≡ r0`.
    pub fn nominal(coeffs: Arc<CoefficientSequence>) -> Self {
        let j = coeffs.len();
        Self::new(coeffs, vec![0.0; j]).expect("zero vector is admissible")
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn coeffs(&self) -> &Arc<CoefficientSequence> {
        &self.coeffs
    }

    pub fn r0(&self) -> f64 {
        self.coeffs.r0()
    }

    /// `(r, dr/dφ)` at `φ`, using a rotation recurrence for the harmonics.
    pub fn eval_with_deriv(&self, phi: f64) -> (f64, f64) {
        let (s1, c1) = phi.sin_cos();
        let (mut s, mut c) = (0.0, 1.0);
        let mut r = self.coeffs.r0();
        let mut dr = 0.0;
        let betas = self.coeffs.betas();
        let pairs = self.y.len().div_ceil(2);
        for k in 1..=pairs {
            // (s, c) ← (sin kφ, cos kφ)
            let (sn, cn) = (s * c1 + c * s1, c * c1 - s * s1);
            s = sn;
            c = cn;
            let kf = k as f64;
            let a = self.basis.normalization.factor(k);
            let jo = 2 * k - 1;
            let by = betas[jo - 1] * self.y[jo - 1] * a;
            r += by * s;
            dr += by * kf * c;
            if 2 * k <= self.y.len() {
                let bx = betas[2 * k - 1] * self.y[2 * k - 1] * a;
                r += bx * c;
                dr -= bx * kf * s;
            }
        }
        (r, dr)
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.eval_with_deriv(phi).0
    }

    pub fn deriv(&self, phi: f64) -> f64 {
        self.eval_with_deriv(phi).1
    }

    /// `r(φ) - r0`.
    pub fn displacement(&self, phi: f64) -> f64 {
        self.eval(phi) - self.coeffs.r0()
    }

    /// Maximum radius over a uniform grid of `n` angles.
    pub fn max_radius(&self, n: usize) -> f64 {
        angle_grid(n).map(|p| self.eval(p)).fold(f64::MIN, f64::max)
    }

    pub fn min_radius(&self, n: usize) -> f64 {
        angle_grid(n).map(|p| self.eval(p)).fold(f64::MAX, f64::min)
    }

    /// Enclosed area `½ ∫ r² dφ`, by the trapezoid rule (spectrally accurate here).
    pub fn area(&self) -> f64 {
        let n = DEFAULT_ANGLE_GRID;
        0.5 * angle_grid(n).map(|p| self.eval(p).powi(2)).sum::<f64>() * 2.0 * PI / n as f64
    }
}

fn angle_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| 2.0 * PI * i as f64 / n as f64)
}

/// Prior `μ0`: i.i.d. uniform `y_j` on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct PriorSpec {
    pub coeffs: Arc<CoefficientSequence>,
    pub seed: u64,
}

impl PriorSpec {
    pub fn new(coeffs: Arc<CoefficientSequence>, seed: u64) -> Self {
        Self { coeffs, seed }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }
}

/// Raw prior draws `y ∈ [-1, 1]^J`.
pub fn sample_prior_y(spec: &PriorSpec, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let u = Uniform::new_inclusive(-1.0, 1.0);
    (0..count)
        .map(|_| (0..spec.dim()).map(|_| u.sample(&mut rng)).collect())
        .collect()
}

pub fn sample_prior(spec: &PriorSpec, count: usize) -> Vec<RadiusField> {
    sample_prior_y(spec, count)
        .into_iter()
        .map(|y| RadiusField::new(spec.coeffs.clone(), y).expect("prior draws lie in the cube"))
        .collect()
}

/// `min_φ x·n = r² / √(r² + r'²)` over an `n`-point grid, refined by one
/// Newton step at the grid minimizer.
pub fn star_shape_margin(field: &RadiusField, grid: usize) -> f64 {
    let g = |phi: f64| {
        let (r, dr) = field.eval_with_deriv(phi);
        r * r / (r * r + dr * dr).sqrt()
    };
    let n = grid.max(3);
    let dphi = 2.0 * PI / n as f64;
    let (mut best_phi, mut best) = (0.0, f64::MAX);
    for p in angle_grid(n) {
        let v = g(p);
        if v < best {
            best = v;
            best_phi = p;
        }
    }
    let eta = 1e-4;
    let (gp, gm) = (g(best_phi + eta), g(best_phi - eta));
    let d1 = (gp - gm) / (2.0 * eta);
    let d2 = (gp - 2.0 * best + gm) / (eta * eta);
    if d2 > 0.0 {
        let step = -d1 / d2;
        if step.abs() <= dphi {
            best = best.min(g(best_phi + step));
        }
    }
    best
}

/// `γ̃` such that every admissible boundary is star-shaped with respect to
/// a ball of radius `γ̃ · diam`.
///
/// `r0_inf` is `inf r0`, `r0_c01` is `‖r0‖_{C^{0,1}}` (equal to `r0` for a
/// constant nominal radius).
pub fn star_shape_constant(d: usize, gamma_beta: f64, r0_inf: f64, r0_c01: f64) -> Result<f64> {
    if !(gamma_beta > 0.0 && gamma_beta < 1.0) {
        return invalid(format!("gamma_beta must lie in (0, 1), got {gamma_beta}"));
    }
    if !(r0_inf > 0.0 && r0_c01 > 0.0) {
        return invalid("nominal radius norms must be positive");
    }
    let base = ((1.0 - gamma_beta) * r0_inf / (2f64.sqrt() * (1.0 + gamma_beta) * r0_c01)).powi(2);
    match d {
        2 => Ok(base),
        3 => {
            let f = (1.0 / ((1.0 - gamma_beta) * r0_inf) + 1.0) * (1.0 + gamma_beta) * r0_c01 + 1.0;
            Ok(0.5 * base / f)
        }
        _ => invalid(format!("dimension must be 2 or 3, got {d}")),
    }
}
