//! Tempered sequential Monte Carlo on the cube `[-1, 1]^J` with an adaptive
//! temperature ladder, always-on resampling and random-walk Metropolis
//! mutations.
//!
//! Random numbers come from ChaCha8 streams keyed by
//! `(iteration, step, particle)`, so results do not depend on how particles
//! are scheduled across threads.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{log_sum_exp, Potential};
use crate::error::{invalid, Error, Result};
use crate::shape::{BasisSet, CoefficientSequence};

/// Smallest temperature increment taken when even tiny steps miss the ESS target.
pub const MIN_TEMPERATURE_STEP: f64 = 1e-6;
/// Bisection stops when the bracket is this narrow.
pub const TEMPERATURE_TOL: f64 = 1e-6;

const INIT_STEP: u64 = 254;
const RESAMPLE_STEP: u64 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmcConfig {
    /// Number of particles `M`.
    pub m: usize,
    /// ESS kept at each tempering step, as a fraction of `M`.
    pub ess_factor: f64,
    pub max_sweeps: usize,
    pub min_sweeps: usize,
    pub resampling: Resampling,
    /// Resample every iteration; otherwise only when ESS < `ess_factor·M`.
    pub always_resample: bool,
    pub seed: u64,
    /// Initial proposal scale factor; `2.38/√J` if unset.
    pub lambda0: Option<f64>,
    pub parallel: bool,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self {
            m: 1000,
            ess_factor: 1.0 / 1.1,
            max_sweeps: 25,
            min_sweeps: 2,
            resampling: Resampling::Multinomial,
            always_resample: true,
            seed: 0,
            lambda0: None,
            parallel: true,
        }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return invalid(format!("need at least 2 particles, got M = {}", self.m));
        }
        if !(self.ess_factor > 0.0 && self.ess_factor < 1.0) {
            return invalid(format!("ESS factor must lie in (0, 1), got {}", self.ess_factor));
        }
        if self.min_sweeps == 0 || self.min_sweeps > self.max_sweeps {
            return invalid(format!(
                "need 1 <= min_sweeps <= max_sweeps, got {} and {}",
                self.min_sweeps, self.max_sweeps
            ));
        }
        if self.max_sweeps as u64 >= INIT_STEP {
            return invalid(format!("max_sweeps must be below {INIT_STEP}"));
        }
        if let Some(l) = self.lambda0 {
            if !(l > 0.0 && l.is_finite()) {
                return invalid(format!("lambda0 must be > 0, got {l}"));
            }
        }
        Ok(())
    }
}

/// RNG for one `(iteration, step, particle)` triple.
pub fn stream_rng(seed: u64, iteration: usize, step: u64, particle: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((iteration as u64) << 40) | (step << 32) | (particle as u64 & 0xFFFF_FFFF));
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSystem {
    /// `M × J`.
    pub positions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub temperature: f64,
    /// Cached `Φ` of each position.
    pub potentials: Vec<f64>,
}

impl ParticleSystem {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions.first().map_or(0, |p| p.len())
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }

    /// Weighted mean of each coordinate.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.positions.iter().zip(&self.weights) {
            for (a, b) in m.iter_mut().zip(p) {
                *a += w * b;
            }
        }
        m
    }

    /// Weighted covariance, row-major `J×J`.
    pub fn covariance(&self) -> Vec<f64> {
        let j = self.dim();
        let mu = self.mean();
        let mut c = vec![0.0; j * j];
        for (p, w) in self.positions.iter().zip(&self.weights) {
            for a in 0..j {
                for b in 0..j {
                    c[a * j + b] += w * (p[a] - mu[a]) * (p[b] - mu[b]);
                }
            }
        }
        c
    }
}

/// `1 / Σ W_i²`.
pub fn ess(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|v| v * v).sum::<f64>()
}

/// ESS of the weights `∝ W_i exp(−dt Φ_i)`.
pub fn ess_after(phi: &[f64], w: &[f64], dt: f64) -> f64 {
    let l: Vec<f64> = w.iter().zip(phi).map(|(w, p)| w.ln() - dt * p).collect();
    let l2: Vec<f64> = l.iter().map(|v| 2.0 * v).collect();
    (2.0 * log_sum_exp(&l) - log_sum_exp(&l2)).exp()
}

/// Largest `T_next ∈ (T, 1]` keeping the ESS at `target·M`, by bisection.
pub fn select_next_temperature(phi: &[f64], w: &[f64], t: f64, target: f64) -> f64 {
    let need = target * w.len() as f64;
    let span = 1.0 - t;
    if ess_after(phi, w, span) >= need {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, span);
    while hi - lo > TEMPERATURE_TOL {
        let mid = 0.5 * (lo + hi);
        if ess_after(phi, w, mid) >= need {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo > 0.0 {
        t + lo
    } else {
        (t + MIN_TEMPERATURE_STEP).min(1.0)
    }
}

/// `W_i ← W_i exp(−(T_next − T) Φ_i)`, normalized in log space.
pub fn reweight(sys: &mut ParticleSystem, t_next: f64) -> Result<()> {
    if !(t_next >= sys.temperature && t_next <= 1.0) {
        return invalid(format!("temperature must increase: {} -> {t_next}", sys.temperature));
    }
    let dt = t_next - sys.temperature;
    let l: Vec<f64> = sys
        .weights
        .iter()
        .zip(&sys.potentials)
        .map(|(w, p)| w.ln() - dt * p)
        .collect();
    let z = log_sum_exp(&l);
    if !z.is_finite() {
        return Err(Error::Underflow(format!(
            "all particle weights vanish at temperature {t_next}"
        )));
    }
    for (w, v) in sys.weights.iter_mut().zip(l) {
        *w = (v - z).exp();
    }
    sys.temperature = t_next;
    Ok(())
}

/// Draw `M` indices according to `w`.
pub fn resample_indices(w: &[f64], scheme: Resampling, rng: &mut impl Rng) -> Vec<usize> {
    let m = w.len();
    let mut cum = Vec::with_capacity(m);
    let mut acc = 0.0;
    for v in w {
        acc += v;
        cum.push(acc);
    }
    let find = |u: f64| cum.partition_point(|&c| c <= u * acc).min(m - 1);
    match scheme {
        Resampling::Multinomial => (0..m).map(|_| find(rng.gen::<f64>())).collect(),
        Resampling::Systematic => {
            let u0: f64 = rng.gen::<f64>() / m as f64;
            (0..m).map(|i| find(u0 + i as f64 / m as f64)).collect()
        }
    }
}

/// Replace the population by a weighted draw with replacement; weights become `1/M`.
pub fn resample(sys: &mut ParticleSystem, scheme: Resampling, rng: &mut impl Rng) {
    let idx = resample_indices(&sys.weights, scheme, rng);
    sys.positions = idx.iter().map(|&i| sys.positions[i].clone()).collect();
    sys.potentials = idx.iter().map(|&i| sys.potentials[i]).collect();
    let m = sys.len();
    sys.weights = vec![1.0 / m as f64; m];
}

/// Counts potential evaluations made through it.
pub struct Counted<'a, P: ?Sized> {
    inner: &'a P,
    calls: AtomicUsize,
}

impl<'a, P: Potential + ?Sized> Counted<'a, P> {
    pub fn new(inner: &'a P) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn eval(&self, y: &[f64]) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.potential(y)
    }
}

/// Outcome of one mutation sweep.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SweepStats {
    pub accepted: usize,
    /// Proposals outside the cube, rejected without a forward evaluation.
    pub out_of_cube: usize,
}

fn map_particles<T: Send>(parallel: bool, m: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if parallel {
        (0..m).into_par_iter().map(f).collect()
    } else {
        (0..m).map(f).collect()
    }
}

/// One RWMH sweep at the system's temperature with per-coordinate scales.
pub fn mutation_sweep<P: Potential + ?Sized>(
    sys: &mut ParticleSystem,
    target: &Counted<'_, P>,
    scales: &[f64],
    seed: u64,
    iteration: usize,
    sweep: usize,
    parallel: bool,
) -> Result<SweepStats> {
    let t = sys.temperature;
    let positions = &sys.positions;
    let potentials = &sys.potentials;
    let moves = map_particles(parallel, sys.len(), |i| {
        let mut rng = stream_rng(seed, iteration, sweep as u64, i);
        let y = &positions[i];
        let prop: Vec<f64> = y
            .iter()
            .zip(scales)
            .map(|(v, s)| v + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let u: f64 = rng.gen();
        if prop.iter().any(|v| v.abs() > 1.0) {
            return Ok((None, true));
        }
        let phi = target.eval(&prop)?;
        let accept = t == 0.0 || u.ln() < -t * (phi - potentials[i]);
        Ok((accept.then_some((prop, phi)), false))
    })?;
    let mut stats = SweepStats::default();
    for (i, (mv, outside)) in moves.into_iter().enumerate() {
        if outside {
            stats.out_of_cube += 1;
        }
        if let Some((p, phi)) = mv {
            sys.positions[i] = p;
            sys.potentials[i] = phi;
            stats.accepted += 1;
        }
    }
    Ok(stats)
}

/// Weighted per-coordinate standard deviation.
fn coordinate_std(sys: &ParticleSystem) -> Vec<f64> {
    let mu = sys.mean();
    let mut v = vec![0.0; sys.dim()];
    for (p, w) in sys.positions.iter().zip(&sys.weights) {
        for (k, x) in p.iter().enumerate() {
            v[k] += w * (x - mu[k]).powi(2);
        }
    }
    v.into_iter().map(f64::sqrt).collect()
}

/// Floor on proposal scales so a collapsed coordinate can still move.
const MIN_SCALE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MutationReport {
    pub sweeps: usize,
    pub accepted: usize,
    pub out_of_cube: usize,
    pub lambda: f64,
}

/// Sweeps until the cumulative acceptance per particle reaches 1, within
/// `[min_sweeps, max_sweeps]`; `lambda` is adapted between sweeps.
pub fn mutate<P: Potential + ?Sized>(
    sys: &mut ParticleSystem,
    target: &Counted<'_, P>,
    config: &SmcConfig,
    lambda: &mut f64,
    iteration: usize,
) -> Result<MutationReport> {
    let m = sys.len() as f64;
    let mut cumulative = 0.0;
    let mut rep = MutationReport {
        sweeps: 0,
        accepted: 0,
        out_of_cube: 0,
        lambda: *lambda,
    };
    while rep.sweeps < config.min_sweeps || (cumulative < 1.0 && rep.sweeps < config.max_sweeps) {
        let scales: Vec<f64> = coordinate_std(sys)
            .into_iter()
            .map(|s| *lambda * s.max(MIN_SCALE))
            .collect();
        let s = mutation_sweep(sys, target, &scales, config.seed, iteration, rep.sweeps, config.parallel)?;
        let rate = s.accepted as f64 / m;
        cumulative += rate;
        rep.sweeps += 1;
        rep.accepted += s.accepted;
        rep.out_of_cube += s.out_of_cube;
        if rate > 0.3 {
            *lambda *= 1.1;
        } else if rate < 0.15 {
            *lambda *= 0.9;
        }
    }
    rep.lambda = *lambda;
    Ok(rep)
}

/// One row per tempering step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub iteration: usize,
    pub temperature: f64,
    /// ESS right after reweighting.
    pub ess: f64,
    pub acceptance: f64,
    pub sweeps: usize,
    pub forward_calls: usize,
    pub out_of_cube: usize,
    pub lambda: f64,
    /// The minimum temperature step was forced.
    pub forced_step: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SmcOutput {
    pub particles: ParticleSystem,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Temperatures visited, starting at 0.
    pub ladder: Vec<f64>,
    /// Evaluations spent on the initial prior population.
    pub init_calls: usize,
    /// Evaluations during the ladder (mutations only).
    pub ladder_calls: usize,
    /// Evaluations observed during reweighting and resampling (expected 0).
    pub update_calls: usize,
    pub total_sweeps: usize,
    pub out_of_cube: usize,
}

/// Full tempering loop from the uniform prior on `[-1, 1]^dim` to the posterior.
pub fn run<P: Potential + ?Sized>(config: &SmcConfig, dim: usize, potential: &P) -> Result<SmcOutput> {
    config.validate()?;
    if dim == 0 {
        return invalid("parameter dimension must be >= 1");
    }
    let m = config.m;
    let target = Counted::new(potential);
    let wrap = |iteration: usize| move |e: Error| Error::Smc {
        iteration,
        source: Box::new(e),
    };

    let positions: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut rng = stream_rng(config.seed, 0, INIT_STEP, i);
            (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        })
        .collect();
    let potentials = map_particles(config.parallel, m, |i| target.eval(&positions[i])).map_err(wrap(0))?;
    let init_calls = target.calls();
    let mut sys = ParticleSystem {
        positions,
        weights: vec![1.0 / m as f64; m],
        temperature: 0.0,
        potentials,
    };

    let mut lambda = config.lambda0.unwrap_or(2.38 / (dim as f64).sqrt());
    let mut out = SmcOutput {
        particles: sys.clone(),
        diagnostics: Vec::new(),
        ladder: vec![0.0],
        init_calls,
        ladder_calls: 0,
        update_calls: 0,
        total_sweeps: 0,
        out_of_cube: 0,
    };
    let mut iteration = 0;
    while sys.temperature < 1.0 {
        iteration += 1;
        let start = Instant::now();
        let before = target.calls();
        let t = sys.temperature;
        let t_next = select_next_temperature(&sys.potentials, &sys.weights, t, config.ess_factor);
        let forced = t_next < 1.0 && t_next - t <= MIN_TEMPERATURE_STEP * (1.0 + 1e-9);
        reweight(&mut sys, t_next).map_err(wrap(iteration))?;
        let ess_now = sys.ess();
        if config.always_resample || ess_now < config.ess_factor * m as f64 {
            let mut rng = stream_rng(config.seed, iteration, RESAMPLE_STEP, 0);
            resample(&mut sys, config.resampling, &mut rng);
        }
        let after_update = target.calls();
        out.update_calls += after_update - before;
        let rep = mutate(&mut sys, &target, config, &mut lambda, iteration).map_err(wrap(iteration))?;
        let calls = target.calls() - after_update;
        out.ladder_calls += calls;
        out.total_sweeps += rep.sweeps;
        out.out_of_cube += rep.out_of_cube;
        out.ladder.push(t_next);
        out.diagnostics.push(StepDiagnostics {
            iteration,
            temperature: t_next,
            ess: ess_now,
            acceptance: rep.accepted as f64 / (m * rep.sweeps) as f64,
            sweeps: rep.sweeps,
            forward_calls: calls,
            out_of_cube: rep.out_of_cube,
            lambda: rep.lambda,
            forced_step: forced,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    out.particles = sys;
    Ok(out)
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, rows: &[StepDiagnostics]) -> Result<()> {
    writeln!(
        w,
        "iteration,temperature,ess,acceptance,sweeps,forward_calls,out_of_cube,lambda,forced_step,wall_seconds"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{},{},{},{:.16e},{},{:.6}",
            r.iteration,
            r.temperature,
            r.ess,
            r.acceptance,
            r.sweeps,
            r.forward_calls,
            r.out_of_cube,
            r.lambda,
            r.forced_step,
            r.wall_seconds
        )?;
    }
    Ok(())
}

pub fn write_particles_csv<W: Write>(mut w: W, sys: &ParticleSystem) -> Result<()> {
    let j = sys.dim();
    let head: Vec<String> = (1..=j).map(|k| format!("y{k}")).collect();
    writeln!(w, "{},weight", head.join(","))?;
    for (p, wt) in sys.positions.iter().zip(&sys.weights) {
        let cols: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{},{:.16e}", cols.join(","), wt)?;
    }
    Ok(())
}

/// Posterior and prior radius statistics at one angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusRow {
    pub phi: f64,
    pub mean: f64,
    pub std: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
}

/// Radius statistics on an `n`-point angle grid. The prior moments are
/// exact for `y_j ~ U[-1, 1]` (mean `r0`, variance `Σ β_j² ψ_j² / 3`).
pub fn radius_summary(sys: &ParticleSystem, coeffs: &CoefficientSequence, n: usize) -> Vec<RadiusRow> {
    let j = coeffs.len().min(sys.dim());
    let basis = BasisSet::new(j);
    let betas = coeffs.betas();
    (0..n)
        .map(|a| {
            let phi = 2.0 * std::f64::consts::PI * a as f64 / n as f64;
            let psi: Vec<f64> = (1..=j).map(|k| betas[k - 1] * basis.eval(k, phi)).collect();
            let radii: Vec<f64> = sys
                .positions
                .iter()
                .map(|y| coeffs.r0() + psi.iter().zip(y).map(|(b, v)| b * v).sum::<f64>())
                .collect();
            let mean: f64 = radii.iter().zip(&sys.weights).map(|(r, w)| r * w).sum();
            let var: f64 = radii.iter().zip(&sys.weights).map(|(r, w)| w * (r - mean).powi(2)).sum();
            RadiusRow {
                phi,
                mean,
                std: var.sqrt(),
                prior_mean: coeffs.r0(),
                prior_std: (psi.iter().map(|b| b * b).sum::<f64>() / 3.0).sqrt(),
            }
        })
        .collect()
}

pub fn write_radius_csv<W: Write>(mut w: W, rows: &[RadiusRow]) -> Result<()> {
    writeln!(w, "phi,posterior_mean,posterior_std,prior_mean,prior_std")?;
    for r in rows {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.phi, r.mean, r.std, r.prior_mean, r.prior_std
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert_eq!(ess(&[1.0, 0.0, 0.0]), 1.0);
        assert!((ess(&[0.5, 0.25, 0.25]) - 1.0 / 0.375).abs() < 1e-12);
    }

    #[test]
    fn reweight_hand_value() {
        let mut s = ParticleSystem {
            positions: vec![vec![0.0], vec![0.0]],
            weights: vec![0.5, 0.5],
            temperature: 0.0,
            potentials: vec![0.0, 4f64.ln()],
        };
        reweight(&mut s, 0.5).unwrap();
        assert!((s.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.weights[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_potential_jumps_to_one() {
        let w = vec![0.1; 10];
        assert_eq!(select_next_temperature(&[3.0; 10], &w, 0.0, 1.0 / 1.1), 1.0);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(1, 1, 0, 0).gen();
        let b: u64 = stream_rng(1, 1, 0, 1).gen();
        let c: u64 = stream_rng(1, 1, 1, 0).gen();
        assert!(a != b && a != c && b != c);
    }
}
