//! Explicit wavenumber-dependent constants of the transmission and
//! sound-soft stability estimates, and a numerical check of the
//! scattered-field bound against FEM solves.
//!
//! Plane-wave norms over unbounded exteriors are taken on the part inside
//! `B_R`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Side;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::forward::{integrate_physical, ForwardSolver, PhysicsParams};
use crate::mesh::{Mesh, Region};
use crate::shape::{star_shape_constant, CoefficientSequence, RadiusField};

/// Realization-independent geometry entering the constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeometrySummary {
    pub d: usize,
    pub r: f64,
    pub r_scatt: f64,
    pub r_pml: f64,
    pub r0: f64,
    pub gamma_beta: f64,
    /// `r⁻ = (1-γ_β) r0`, inner edge of the tube `U`.
    pub r_minus: f64,
    /// `r⁺ = (1+γ_β) r0`, outer edge of `U`.
    pub r_plus: f64,
    /// Upper bound `2 r⁺` on every scatterer's diameter.
    pub diam_max: f64,
    /// `diam(D_in,H \ U) = 2 r⁻`.
    pub diam_inner: f64,
    pub gamma_tilde: f64,
    /// `min(1/2, γ̃)`.
    pub g_hat: f64,
    /// Upper bound on `sup |Γ|^{1/2}`.
    pub c_surf: f64,
}

impl GeometrySummary {
    /// For a constant nominal radius. `r_scatt = None` takes `R/2`.
    pub fn new(coeffs: &CoefficientSequence, d: usize, r: f64, r_scatt: Option<f64>, r_pml: f64) -> Result<Self> {
        let r0 = coeffs.r0();
        let gb = coeffs.gamma_beta();
        let gamma_tilde = star_shape_constant(d, gb, r0, r0)?;
        let r_plus = (1.0 + gb) * r0;
        let r_minus = (1.0 - gb) * r0;
        // |Γ| = ∫ √(r² + r'²) dφ with |r| ≤ r⁺ and |r'| ≤ γ_β r0 under the C^{0,1} normalization
        let c_surf = (2.0 * PI * r_plus.hypot(gb * r0)).sqrt();
        let g = Self {
            d,
            r,
            r_scatt: r_scatt.unwrap_or(0.5 * r),
            r_pml,
            r0,
            gamma_beta: gb,
            r_minus,
            r_plus,
            diam_max: 2.0 * r_plus,
            diam_inner: 2.0 * r_minus,
            gamma_tilde,
            g_hat: gamma_tilde.min(0.5),
            c_surf,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d == 2 || self.d == 3) {
            return invalid(format!("dimension must be 2 or 3, got {}", self.d));
        }
        if !(self.r_scatt > self.r_plus) {
            return invalid(format!(
                "R_scatt = {} must exceed (1+gamma_beta)*r0 = {}",
                self.r_scatt, self.r_plus
            ));
        }
        if !(self.r > self.r_scatt) {
            return invalid(format!("R = {} must exceed R_scatt = {}", self.r, self.r_scatt));
        }
        if !(self.r_pml > self.r) {
            return invalid(format!("R_PML = {} must exceed R = {}", self.r_pml, self.r));
        }
        Ok(())
    }
}

/// `C_κ0 = R [4/α_out + (2√(n_out/α_out) + (d-1)/(κ0R))² / n_out]^{1/2}`.
pub fn c_kappa0(kappa0: f64, r: f64, alpha_out: f64, n_out: f64, d: usize) -> f64 {
    let kr = kappa0 * r;
    let t = 2.0 * (n_out / alpha_out).sqrt() + (d as f64 - 1.0) / kr;
    r * (4.0 / alpha_out + t * t / n_out).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CorollaryConstants {
    pub c_kappa0: f64,
    /// Bound on `‖∇χ‖_∞` of the cubic cutoff.
    pub c1: f64,
    /// Bound on `‖Δχ‖_∞`.
    pub c2: f64,
}

pub fn corollary_constants(params: &PhysicsParams, geom: &GeometrySummary) -> Result<CorollaryConstants> {
    params.validate()?;
    let (r, rs) = (geom.r, geom.r_scatt);
    if !(rs > 0.0 && r > rs) {
        return invalid(format!("need R > R_scatt > 0, got R = {r}, R_scatt = {rs}"));
    }
    let d = params.dim as f64;
    let c1 = 1.5 / (rs * (r - rs));
    Ok(CorollaryConstants {
        c_kappa0: c_kappa0(params.kappa0, r, params.alpha_out, params.n_out, params.dim),
        c1,
        c2: 6.0 / (r - rs).powi(2) + (d - 1.0) * c1,
    })
}

/// `(a, b)` with the interior-source bound `a ‖f_in‖² + b ‖f_out‖²`.
pub fn volume_source_factors(params: &PhysicsParams, geom: &GeometrySummary) -> [f64; 2] {
    let k = params.kappa0;
    let kr = k * geom.r;
    let d = params.dim as f64;
    let t = 2.0 * (params.n_out / params.alpha_out).sqrt() + (d - 1.0) / kr;
    let a = (4.0 * (k * geom.diam_max).powi(2) / params.alpha_in + kr * kr / params.n_in * t * t) / (k * k);
    let c = c_kappa0(k, geom.r, params.alpha_out, params.n_out, params.dim);
    [a, c * c]
}

/// Squared-norm bound for volume sources only.
pub fn volume_source_rhs(params: &PhysicsParams, geom: &GeometrySummary, f_in: f64, f_out: f64) -> f64 {
    let [a, b] = volume_source_factors(params, geom);
    a * f_in * f_in + b * f_out * f_out
}

/// `L²(Γ)` norms of interface jump data.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct TraceNorms {
    pub grad_t_gd: f64,
    pub gd: f64,
    pub gn: f64,
}

/// Coefficients of `‖∇_T g_D‖², ‖g_D‖², ‖g_N‖²`; needs `n_in/n_out < 1 < α_in/α_out`.
pub fn jump_factors(params: &PhysicsParams, geom: &GeometrySummary, g_hat: f64) -> Result<[f64; 3]> {
    if !params.strict_chain() {
        return invalid(format!(
            "jump bound needs n_in/n_out < 1 < alpha_in/alpha_out, got n_in/n_out = {}, alpha_in/alpha_out = {}",
            params.n_in / params.n_out,
            params.alpha_in / params.alpha_out
        ));
    }
    if !(g_hat > 0.0 && g_hat <= 0.5) {
        return invalid(format!("g_hat must lie in (0, 1/2], got {g_hat}"));
    }
    let (ai, ao, ni, no) = (params.alpha_in, params.alpha_out, params.n_in, params.n_out);
    let k = params.kappa0;
    let diam = geom.diam_max;
    let d = params.dim as f64;
    let big = no * (k * geom.r).powi(2) + ao * (d - 1.0).powi(2) / 4.0;
    let f_grad = 2.0 * diam * ao * ((3.0 + 2.0 * g_hat) * ai + 2.0 * ao) / (g_hat * (ai - ao));
    let f_gd = 2.0
        * (2.0 * k * k * diam * no * no / (g_hat * (no - ni))
            + (3.0 + g_hat) * ai * big / (g_hat * diam * (ai - ao)));
    let f_gn = 2.0 / (g_hat * ao) * (diam * (4.0 * ai + 2.0 * ao) / (ai - ao) + 2.0 * big / (k * k * diam * (no - ni)));
    Ok([f_grad, f_gd, f_gn])
}

pub fn jump_rhs(
    params: &PhysicsParams,
    geom: &GeometrySummary,
    g_hat: f64,
    traces: &TraceNorms,
    f_in: f64,
    f_out: f64,
) -> Result<f64> {
    let [a, b, c] = jump_factors(params, geom, g_hat)?;
    Ok(volume_source_rhs(params, geom, f_in, f_out)
        + a * traces.grad_t_gd.powi(2)
        + b * traces.gd.powi(2)
        + c * traces.gn.powi(2))
}

/// Plane-wave norms entering the stability constants.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct IncidentNorms {
    /// `‖u^i‖_{L²}` over the exterior part.
    pub l2: f64,
    /// `‖∇u^i‖_{L²}` over the exterior part.
    pub grad: f64,
    /// `‖u^i‖_{H¹_{κ0,α,n}}` over interior plus exterior.
    pub weighted: f64,
}

/// `∫ f` over the annulus `a < ρ < b` by Gauss–Legendre in `ρ` and the
/// trapezoid rule in `φ`.
pub fn annulus_integral(f: impl Fn([f64; 2]) -> f64, a: f64, b: f64) -> f64 {
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
    if b <= a {
        return 0.0;
    }
    let (panels, nphi) = (16, 256);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            let rho = c + 0.5 * h * x;
            let ring: f64 = (0..nphi)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / nphi as f64;
                    f([rho * t.cos(), rho * t.sin()])
                })
                .sum::<f64>()
                * (2.0 * PI / nphi as f64);
            s += w * 0.5 * h * ring * rho;
        }
    }
    s
}

/// Plane-wave norms on the hold-all domains: exterior `D_out,H ∩ B_R =
/// {r⁻ < |x| < R}`, interior `D_in,H = {|x| < r⁺}`. The weighted norm sums
/// both with their own materials, which bounds every realization.
pub fn holdall_incident_norms(params: &PhysicsParams, geom: &GeometrySummary) -> IncidentNorms {
    let u2 = |x: [f64; 2]| params.incident(x).norm_sqr();
    let g2 = |x: [f64; 2]| {
        let g = params.incident_grad(x);
        g[0].norm_sqr() + g[1].norm_sqr()
    };
    let k2 = params.kappa0 * params.kappa0;
    let l2o = annulus_integral(u2, geom.r_minus, geom.r);
    let g2o = annulus_integral(g2, geom.r_minus, geom.r);
    let l2i = annulus_integral(u2, 0.0, geom.r_plus);
    let g2i = annulus_integral(g2, 0.0, geom.r_plus);
    IncidentNorms {
        l2: l2o.sqrt(),
        grad: g2o.sqrt(),
        weighted: (params.alpha_in * g2i + k2 * params.n_in * l2i + params.alpha_out * g2o + k2 * params.n_out * l2o)
            .sqrt(),
    }
}

/// `‖u^i‖_{L²(D_in,H)}` for the contrast-explicit constant.
pub fn incident_l2_inner(params: &PhysicsParams, geom: &GeometrySummary) -> f64 {
    annulus_integral(|x| params.incident(x).norm_sqr(), 0.0, geom.r_plus).sqrt()
}

/// `sup |u^i| + sup |∇u^i|` of a unit plane wave.
pub fn incident_c1_norm(params: &PhysicsParams) -> f64 {
    1.0 + params.k_out()
}

/// Bound on `‖u‖_{H¹_{κ0,α,n}}` of the scattered field from the cutoff argument.
pub fn scattered_bound(params: &PhysicsParams, geom: &GeometrySummary, inc: &IncidentNorms) -> Result<f64> {
    let c = corollary_constants(params, geom)?;
    let ao = params.alpha_out;
    Ok(c.c_kappa0 * c.c1 * ao * inc.grad + (c.c_kappa0 * c.c2 * ao + ao.sqrt() * c.c1) * inc.l2 + inc.weighted)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityConstant {
    pub value: f64,
    /// `‖G‖_∞` bound used inside.
    pub forward_bound: f64,
    /// `λ⁻¹γ + λ⁻¹|O| κ0 R`.
    pub plane_wave_proxy: f64,
}

/// `C_{γ,G} = λ⁻¹ (γ + |(‖O_k‖)| ‖G‖)` with the scattered-field bound for `‖G‖`.
/// `o_norm` is the Euclidean norm of the observation functional norms.
pub fn stability_constant(
    params: &PhysicsParams,
    geom: &GeometrySummary,
    lambda_min: f64,
    gamma: f64,
    o_norm: f64,
    inc: &IncidentNorms,
) -> Result<StabilityConstant> {
    if !(lambda_min > 0.0) {
        return invalid(format!("smallest noise eigenvalue must be > 0, got {lambda_min}"));
    }
    let g = scattered_bound(params, geom, inc)?;
    Ok(StabilityConstant {
        value: (gamma + o_norm * g) / lambda_min,
        forward_bound: g,
        plane_wave_proxy: (gamma + o_norm * params.kappa0 * geom.r) / lambda_min,
    })
}

/// Contrast-explicit (wavenumber-suboptimal) variant of `C_{γ,G}`; needs
/// the strict chain. The first contrast factor enters through its absolute value.
pub fn suboptimal_stability_constant(
    params: &PhysicsParams,
    geom: &GeometrySummary,
    lambda_min: f64,
    gamma: f64,
    o_norm: f64,
    ui_l2_inner: f64,
    ui_c1: f64,
) -> Result<f64> {
    if !params.strict_chain() {
        return invalid("contrast-explicit constant needs n_in/n_out < 1 < alpha_in/alpha_out");
    }
    if !(lambda_min > 0.0) {
        return invalid(format!("smallest noise eigenvalue must be > 0, got {lambda_min}"));
    }
    let (ai, ao, ni, no) = (params.alpha_in, params.alpha_out, params.n_in, params.n_out);
    let k = params.kappa0;
    let kr = k * geom.r;
    let d = params.dim as f64;
    let diam = geom.diam_max;
    let t = 2.0 * (no / ao).sqrt() + (d - 1.0) / kr;
    let first = (4.0 * (k * diam).powi(2) / ai + kr * kr / ni * t * t).sqrt() * k * (ai / ao * ni - no).abs() * ui_l2_inner;
    let big = no * kr * kr + ao * (d - 1.0).powi(2) / 4.0;
    let second = (diam * (4.0 * ai + 2.0 * ao) / (ai - ao) + 2.0 * big / (k * k * geom.diam_inner * (no - ni))).sqrt()
        * 2.0
        * geom.c_surf
        * (ai - ao)
        / (geom.g_hat * ao)
        * ui_c1;
    Ok((gamma + o_norm * (first + second)) / lambda_min)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SoundSoftConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// Sound-soft constants; `μ_n` and `n_max` describe the heterogeneous exterior index.
#[allow(clippy::too_many_arguments)]
pub fn soundsoft_constants(
    kappa0: f64,
    r: f64,
    d: usize,
    n_max: f64,
    mu_n: f64,
    c_surf: f64,
    diam: f64,
    gamma_tilde: f64,
) -> Result<SoundSoftConstants> {
    if !(mu_n > 0.0 && n_max > 0.0 && kappa0 > 0.0) {
        return invalid(format!("need mu_n, n_max, kappa0 > 0, got {mu_n}, {n_max}, {kappa0}"));
    }
    let threshold = (3.0f64 / 8.0).sqrt() / kappa0;
    if r < threshold {
        return invalid(format!("sound-soft bound needs R >= sqrt(3/8)/kappa0 = {threshold}, got R = {r}"));
    }
    let kr = kappa0 * r;
    let t = 2.0 + (d as f64 - 2.0) / (2.0 * kr);
    let m = 1.0 + 1.5 * n_max;
    let c1 = 2.0 * (4.0 * kr * kr / (mu_n * mu_n) * (1.0 + t * t) * m * m + 2.0 / n_max).sqrt();
    let c2 = c_surf * (2.0 / mu_n).sqrt() * m.sqrt() * diam.sqrt() * (1.0 + 4.0 * diam / gamma_tilde).sqrt();
    let c3 = 2.0 * c_surf * (8.0 / mu_n * m * kr * kr / gamma_tilde * t * t + 2.0 / gamma_tilde).sqrt();
    Ok(SoundSoftConstants { c1, c2, c3 })
}

fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    let g = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    (g, 0.5 * det.abs())
}

/// Dual norms `sup |v(x_k)| / ‖v‖_{H¹_{κ0,α,n}(B_R)}` over the P1 space of
/// the nominal mesh, `√(wᵀ G⁻¹ w)` with `G` the weighted Gram matrix and `w`
/// the barycentric weights of `x_k`. Mesh-dependent by construction.
pub fn observation_norms(mesh: &Mesh, params: &PhysicsParams, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    let nv = mesh.num_vertices();
    let mut idx = vec![usize::MAX; nv];
    let mut n = 0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if mesh.regions[t] == Region::Pml {
            continue;
        }
        for &v in tri {
            if idx[v] == usize::MAX {
                idx[v] = n;
                n += 1;
            }
        }
    }
    let k2 = params.kappa0 * params.kappa0;
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let region = mesh.regions[t];
        if region == Region::Pml {
            continue;
        }
        let (a_c, n_c) = if region == Region::Interior {
            (params.alpha_in, params.n_in)
        } else {
            (params.alpha_out, params.n_out)
        };
        let (g, area) = p1_gradients(mesh.triangle_coords(t));
        for a in 0..3 {
            for b in 0..3 {
                let stiff = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                let mass = area / 12.0 * if a == b { 2.0 } else { 1.0 };
                *acc.entry((idx[tri[a]], idx[tri[b]])).or_insert(0.0) += a_c * stiff + k2 * n_c * mass;
            }
        }
    }
    let trip: Vec<Triplet<usize, usize, f64>> = acc
        .into_iter()
        .map(|((i, j), v)| Triplet::new(i, j, v))
        .collect();
    let gram = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Invalid(format!("Gram matrix assembly failed: {e:?}")))?;
    let llt = gram.sp_cholesky(Side::Lower).map_err(|e| Error::Solver {
        kappa0: params.kappa0,
        msg: format!("Gram Cholesky failed: {e:?}"),
    })?;
    points
        .iter()
        .map(|&x| {
            if x[0].hypot(x[1]) >= mesh.config.r {
                return invalid(format!("observation point ({}, {}) is outside B_R", x[0], x[1]));
            }
            let (t, l) = mesh.locate_point(x)?;
            let tri = mesh.triangles[t];
            let mut w = Mat::<f64>::zeros(n, 1);
            for a in 0..3 {
                w[(idx[tri[a]], 0)] += l[a];
            }
            let z = llt.solve(&w);
            let q: f64 = (0..n).map(|i| w[(i, 0)] * z[(i, 0)]).sum();
            Ok(q.max(0.0).sqrt())
        })
        .collect()
}

/// Euclidean norm of a vector of functional norms.
pub fn euclidean(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Named constants for one `κ0`, plus an optional measured check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub kappa0: f64,
    pub corollary: CorollaryConstants,
    pub volume_source: [f64; 2],
    pub jump: Option<[f64; 3]>,
    pub stability: Option<StabilityConstant>,
    pub suboptimal: Option<f64>,
    pub soundsoft: Option<SoundSoftConstants>,
    /// Measured weighted norm of the FEM scattered field.
    pub lhs: Option<f64>,
    /// Bound evaluated with this shape's incident-wave norms.
    pub rhs: Option<f64>,
    pub slack: f64,
}

impl BoundReport {
    pub fn ratio(&self) -> Option<f64> {
        Some(self.lhs? / self.rhs?)
    }

    pub fn passed(&self) -> Option<bool> {
        Some(self.lhs? <= self.rhs? * (1.0 + self.slack))
    }
}

/// Inputs for the data-stability constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityInputs {
    pub lambda_min: f64,
    pub gamma: f64,
    pub o_norm: f64,
    /// `(n_max, μ_n)` of a sound-soft exterior index, if wanted.
    pub soundsoft: Option<(f64, f64)>,
}

/// Every constant applicable to `params`; inapplicable ones are `None`.
pub fn constant_report(params: &PhysicsParams, geom: &GeometrySummary, inputs: &StabilityInputs) -> Result<BoundReport> {
    let inc = holdall_incident_norms(params, geom);
    let strict = params.strict_chain();
    Ok(BoundReport {
        kappa0: params.kappa0,
        corollary: corollary_constants(params, geom)?,
        volume_source: volume_source_factors(params, geom),
        jump: if strict { Some(jump_factors(params, geom, geom.g_hat)?) } else { None },
        stability: Some(stability_constant(params, geom, inputs.lambda_min, inputs.gamma, inputs.o_norm, &inc)?),
        suboptimal: if strict {
            Some(suboptimal_stability_constant(
                params,
                geom,
                inputs.lambda_min,
                inputs.gamma,
                inputs.o_norm,
                incident_l2_inner(params, geom),
                incident_c1_norm(params),
            )?)
        } else {
            None
        },
        soundsoft: match inputs.soundsoft {
            Some((n_max, mu_n)) => soundsoft_constants(
                params.kappa0,
                geom.r,
                params.dim,
                n_max,
                mu_n,
                geom.c_surf,
                geom.diam_max,
                geom.gamma_tilde,
            )
            .ok(),
            None => None,
        },
        lhs: None,
        rhs: None,
        slack: 0.0,
    })
}

/// Plane-wave norms over this realization: `L²` and gradient over `D_R(ω)`,
/// weighted norm over `D_in(ω) ∪ D_R(ω)`, by quadrature on the mapped mesh.
pub fn realization_incident_norms(solver: &ForwardSolver, field: &RadiusField) -> Result<IncidentNorms> {
    let mesh = solver.mesh();
    let p = *solver.params();
    let cfg = mesh.config;
    let mapping = crate::forward::build_mapping(field, cfg.rho_a, cfg.r_map)?;
    let k2 = p.kappa0 * p.kappa0;
    let g2 = |x: [f64; 2]| {
        let g = p.incident_grad(x);
        g[0].norm_sqr() + g[1].norm_sqr()
    };
    let l2 = integrate_physical(mesh, &mapping, |_, _, x, inside, _| if inside { 0.0 } else { p.incident(x).norm_sqr() });
    let grad = integrate_physical(mesh, &mapping, |_, _, x, inside, _| if inside { 0.0 } else { g2(x) });
    let weighted = integrate_physical(mesh, &mapping, |_, _, x, inside, _| {
        let (a, n) = if inside { (p.alpha_in, p.n_in) } else { (p.alpha_out, p.n_out) };
        a * g2(x) + k2 * n * p.incident(x).norm_sqr()
    });
    Ok(IncidentNorms {
        l2: l2.sqrt(),
        grad: grad.sqrt(),
        weighted: weighted.sqrt(),
    })
}

/// Solve for `field` and compare the weighted norm of the scattered field
/// with the cutoff bound; passes iff `LHS ≤ RHS (1 + slack)`.
pub fn verify_forward_bound(
    field: &RadiusField,
    geom: &GeometrySummary,
    solver: &ForwardSolver,
    slack: f64,
) -> Result<BoundReport> {
    let params = solver.params();
    if !params.nontrapping() {
        return invalid("forward bound needs n_in/n_out <= alpha_in/alpha_out");
    }
    let sol = solver.solve(field)?;
    let inc = realization_incident_norms(solver, field)?;
    Ok(BoundReport {
        kappa0: params.kappa0,
        corollary: corollary_constants(params, geom)?,
        volume_source: volume_source_factors(params, geom),
        jump: None,
        stability: None,
        suboptimal: None,
        soundsoft: None,
        lhs: Some(sol.weighted_norm()),
        rhs: Some(scattered_bound(params, geom, &inc)?),
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_kappa0_spot() {
        let k = 2.0 * PI * 1e9 / 3e10;
        let kr = k * 0.07;
        let want = 0.07 * (4.0 + (2.0 + 1.0 / kr).powi(2)).sqrt();
        assert!((c_kappa0(k, 0.07, 1.0, 1.0, 2) - want).abs() < 1e-14);
        assert!((want - 4.92).abs() < 0.01);
    }

    #[test]
    fn annulus_area() {
        let a = annulus_integral(|_| 1.0, 0.005, 0.07);
        assert!((a - PI * (0.07f64.powi(2) - 0.005f64.powi(2))).abs() < 1e-14);
    }
}
