//! Gaussian-noise potential, tempered increments, and a Hellinger distance
//! estimate between two posteriors sharing a prior sample.

use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::forward::ForwardSolver;
use crate::observe::{forward_map, DataVector, MeasurementSetup, NoiseModel};
use crate::shape::{CoefficientSequence, RadiusField};

/// `Φ(r; δ) = ½ |Σ^{-1/2}(δ − G(r))|²`.
pub fn potential(gr: &[f64], delta: &[f64], noise: &NoiseModel) -> Result<f64> {
    if gr.len() != delta.len() || gr.len() != noise.dim() {
        return invalid(format!(
            "dimension mismatch: G(r) has {}, data {}, noise {}",
            gr.len(),
            delta.len(),
            noise.dim()
        ));
    }
    let r: Vec<f64> = delta.iter().zip(gr).map(|(d, g)| d - g).collect();
    Ok(0.5 * noise.whiten(&r).iter().map(|v| v * v).sum::<f64>())
}

/// `−(T_hi − T_lo) Φ`, the log weight increment between two temperatures.
pub fn tempered_log_increment(phi: f64, t_lo: f64, t_hi: f64) -> Result<f64> {
    if !(0.0 <= t_lo && t_lo <= t_hi && t_hi <= 1.0) {
        return invalid(format!("temperatures must satisfy 0 <= {t_lo} <= {t_hi} <= 1"));
    }
    Ok(-(t_hi - t_lo) * phi)
}

/// `log Σ exp(l_i)`; `-inf` if every term is `-inf`.
pub fn log_sum_exp(l: &[f64]) -> f64 {
    let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + l.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Hellinger distance between the measures with prior-sample log weights
/// `la` and `lb` (self-normalized importance sampling from the prior).
///
/// Evaluated as `d² = ½ Σ p_i (1 − exp(½Δ_i))²` with `p` the normalized
/// weights of `la` and `Δ_i = log q_i − log p_i`; this equals
/// `1 − Σ√(a_i b_i) / √(Σa_i Σb_i)` but keeps precision when `d` is tiny.
pub fn hellinger_from_log_weights(la: &[f64], lb: &[f64]) -> Result<f64> {
    if la.len() != lb.len() || la.is_empty() {
        return invalid("log-weight vectors must be non-empty and of equal length");
    }
    let (na, nb) = (log_sum_exp(la), log_sum_exp(lb));
    if !na.is_finite() || !nb.is_finite() {
        return Err(Error::Underflow(
            "all importance weights vanish; temper the likelihood or enlarge the noise covariance".into(),
        ));
    }
    let mut d2 = 0.0;
    for (a, b) in la.iter().zip(lb) {
        let lp = a - na;
        let lq = b - nb;
        let p = lp.exp();
        if p == 0.0 && lq == f64::NEG_INFINITY {
            continue;
        }
        let term = if lp == f64::NEG_INFINITY {
            lq.exp()
        } else if lq == f64::NEG_INFINITY {
            p
        } else {
            p * (0.5 * (lq - lp)).exp_m1().powi(2)
        };
        d2 += term;
    }
    Ok((0.5 * d2).clamp(0.0, 1.0).sqrt())
}

/// Hellinger estimate from forward values `G(r_i)` of a common prior sample
/// and two data vectors.
pub fn hellinger_estimate(gs: &[Vec<f64>], delta: &[f64], delta2: &[f64], noise: &NoiseModel) -> Result<f64> {
    let la = gs
        .iter()
        .map(|g| potential(g, delta, noise).map(|p| -p))
        .collect::<Result<Vec<_>>>()?;
    let lb = gs
        .iter()
        .map(|g| potential(g, delta2, noise).map(|p| -p))
        .collect::<Result<Vec<_>>>()?;
    hellinger_from_log_weights(&la, &lb)
}

/// Something that maps a parameter vector to a potential value.
pub trait Potential: Sync {
    fn potential(&self, y: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> Result<f64> + Sync> Potential for F {
    fn potential(&self, y: &[f64]) -> Result<f64> {
        self(y)
    }
}

/// `y ↦ Φ(r(y); δ)` through the FEM forward map.
pub struct ForwardPotential {
    pub solver: Arc<ForwardSolver>,
    pub coeffs: Arc<CoefficientSequence>,
    pub setup: MeasurementSetup,
    pub data: DataVector,
    pub noise: NoiseModel,
}

impl ForwardPotential {
    pub fn new(
        solver: Arc<ForwardSolver>,
        coeffs: Arc<CoefficientSequence>,
        setup: MeasurementSetup,
        data: DataVector,
        noise: NoiseModel,
    ) -> Result<Self> {
        data.validate()?;
        if data.k != setup.k || noise.dim() != setup.k {
            return invalid(format!(
                "data has K = {}, measurement setup K = {}, noise dimension {}",
                data.k,
                setup.k,
                noise.dim()
            ));
        }
        Ok(Self {
            solver,
            coeffs,
            setup,
            data,
            noise,
        })
    }

    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        let field = RadiusField::new(self.coeffs.clone(), y.to_vec())?;
        forward_map(&field, &self.setup, &self.solver)
    }
}

impl Potential for ForwardPotential {
    fn potential(&self, y: &[f64]) -> Result<f64> {
        potential(&self.forward(y)?, &self.data.delta, &self.noise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let n = NoiseModel::scaled_identity(2, 1.0).unwrap();
        assert_eq!(potential(&[0.0, 0.0], &[3.0, 4.0], &n).unwrap(), 12.5);
        let n = NoiseModel::scaled_identity(2, 0.01).unwrap();
        assert!((potential(&[0.0, 0.0], &[0.1, 0.0], &n).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(tempered_log_increment(2.0, 0.25, 0.5).unwrap(), -0.5);
    }

    #[test]
    fn matches_textbook_formula_when_large() {
        let la: [f64; 4] = [0.0, -1.0, -3.0, -0.5];
        let lb: [f64; 4] = [-2.0, 0.0, -0.1, -4.0];
        let m = la.len() as f64;
        let sa: f64 = la.iter().map(|v| v.exp()).sum::<f64>() / m;
        let sb: f64 = lb.iter().map(|v| v.exp()).sum::<f64>() / m;
        let sab: f64 = la.iter().zip(&lb).map(|(a, b)| (0.5 * (a + b)).exp()).sum::<f64>() / m;
        let want = (1.0 - sab / (sa * sb).sqrt()).sqrt();
        let got = hellinger_from_log_weights(&la, &lb).unwrap();
        assert!((got - want).abs() < 1e-14, "{got} {want}");
    }

    #[test]
    fn disjoint_is_one() {
        let inf = f64::NEG_INFINITY;
        let d = hellinger_from_log_weights(&[0.0, inf], &[inf, 0.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }
}
