//! Helmholtz transmission problem on the fixed reference mesh.
//!
//! The physical interface `r(y, φ)` is pulled back to the nominal circle by a
//! radial map `Φ(x̂) = x̂ + δr(φ) χ(|x̂|) e_ρ`, where `χ` is the hat function
//! that is 0 at `ρ_a`, 1 at `r0` and 0 at `R_map`. Coefficients are
//! transformed accordingly, so the mesh and the sparsity pattern never change
//! across samples. Outgoing behaviour is imposed with an annular PML on
//! `[R, R_PML]` and a zero Dirichlet condition at `R_PML`.
//!
//! Unknown is the scattered field `u = u^T - u^i` with the plane wave
//! `u^i(x) = exp(i k_out d·x)`, `k_out = κ0 √(n_out/α_out)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::{wavenumber, Mesh, Region, SPEED_OF_LIGHT};
use crate::shape::RadiusField;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Degree-2 rule: barycentric points and equal weights `1/3`.
const QUAD: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub kappa0: f64,
    pub alpha_in: f64,
    pub alpha_out: f64,
    pub n_in: f64,
    pub n_out: f64,
    /// Incident direction, unit length.
    pub direction: [f64; 2],
    /// Frequency the wavenumber was derived from, if any.
    pub frequency: Option<f64>,
    pub c: f64,
    /// Space dimension entering the constants (the solver itself is 2D).
    pub dim: usize,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self::from_frequency(1e9, SPEED_OF_LIGHT, 1.0, 1.0, 0.9, 1.0, [1.0, 0.0])
            .expect("defaults are valid")
    }
}

impl PhysicsParams {
    pub fn from_frequency(
        f: f64,
        c: f64,
        alpha_in: f64,
        alpha_out: f64,
        n_in: f64,
        n_out: f64,
        direction: [f64; 2],
    ) -> Result<Self> {
        if !(f > 0.0 && c > 0.0) {
            return invalid(format!("frequency and wave speed must be > 0 (f = {f}, c = {c})"));
        }
        let p = Self {
            kappa0: wavenumber(f, c),
            alpha_in,
            alpha_out,
            n_in,
            n_out,
            direction,
            frequency: Some(f),
            c,
            dim: 2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same materials at wavenumber `kappa0`.
    pub fn with_kappa0(&self, kappa0: f64) -> Self {
        Self {
            kappa0,
            frequency: Some(kappa0 * self.c / (2.0 * PI)),
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return invalid(format!("kappa0 must be > 0, got {}", self.kappa0));
        }
        for (name, v) in [
            ("alpha_in", self.alpha_in),
            ("alpha_out", self.alpha_out),
            ("n_in", self.n_in),
            ("n_out", self.n_out),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be > 0, got {v}"));
            }
        }
        let norm = self.direction[0].hypot(self.direction[1]);
        if (norm - 1.0).abs() > 1e-12 {
            return invalid(format!("incident direction must have unit length, |d| = {norm}"));
        }
        if !(self.dim == 2 || self.dim == 3) {
            return invalid(format!("dimension must be 2 or 3, got {}", self.dim));
        }
        Ok(())
    }

    /// Wavenumber of the outer medium `κ0 √(n_out/α_out)`.
    pub fn k_out(&self) -> f64 {
        self.kappa0 * (self.n_out / self.alpha_out).sqrt()
    }

    pub fn incident(&self, x: [f64; 2]) -> C64 {
        let phase = self.k_out() * (self.direction[0] * x[0] + self.direction[1] * x[1]);
        C64::from_polar(1.0, phase)
    }

    pub fn incident_grad(&self, x: [f64; 2]) -> [C64; 2] {
        let u = self.incident(x) * I * self.k_out();
        [u * self.direction[0], u * self.direction[1]]
    }

    /// `n_in/n_out ≤ α_in/α_out`.
    pub fn nontrapping(&self) -> bool {
        self.n_in / self.n_out <= self.alpha_in / self.alpha_out
    }

    /// `n_in/n_out < 1 < α_in/α_out`.
    pub fn strict_chain(&self) -> bool {
        self.n_in / self.n_out < 1.0 && 1.0 < self.alpha_in / self.alpha_out
    }
}

/// Default ramp height. The layer damps the outgoing wave by
/// `exp(-k_out Im ρ̃(R_PML)) = exp(-σ_PML (R_PML-R) sqrt(n_out/α_out) / 2)`, which does
/// not depend on κ0; 300 gives `e^-6` for a 0.04 wide layer. Much larger values make
/// the stretched coefficients too anisotropic for P1 elements on the ring mesh.
pub const DEFAULT_SIGMA_PML: f64 = 300.0;

/// Radial complex stretching `ρ̃ = ρ (1 + i σ̄(ρ)/κ0)` on `[R, R_PML]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmlParams {
    pub r: f64,
    pub r_pml: f64,
    pub sigma_max: f64,
}

impl PmlParams {
    /// Linear absorption ramp, 0 at `R` and `σ_PML` at `R_PML`.
    pub fn sigma(&self, rho: f64) -> f64 {
        if rho <= self.r {
            0.0
        } else if rho <= self.r_pml {
            self.sigma_max * (rho - self.r) / (self.r_pml - self.r)
        } else {
            self.sigma_max
        }
    }

    /// `σ̄(ρ) = ρ⁻¹ ∫_R^ρ σ`.
    pub fn sigma_bar(&self, rho: f64) -> f64 {
        if rho <= self.r {
            0.0
        } else if rho <= self.r_pml {
            self.sigma_max * (rho - self.r).powi(2) / (2.0 * rho * (self.r_pml - self.r))
        } else {
            self.sigma_max * (1.0 - (self.r_pml + self.r) / (2.0 * rho))
        }
    }

    /// `(ρ̃/ρ, dρ̃/dρ)`.
    pub fn stretch(&self, rho: f64, kappa0: f64) -> (C64, C64) {
        (
            C64::new(1.0, self.sigma_bar(rho) / kappa0),
            C64::new(1.0, self.sigma(rho) / kappa0),
        )
    }
}

/// `Φ(x̂) = x̂ + δr(φ) χ(|x̂|) e_ρ`.
#[derive(Clone, Debug)]
pub struct DomainMapping {
    pub rho_a: f64,
    pub r0: f64,
    pub r_map: f64,
    field: RadiusField,
}

/// Validates that the map is a diffeomorphism for `field`.
pub fn build_mapping(field: &RadiusField, rho_a: f64, r_map: f64) -> Result<DomainMapping> {
    let r0 = field.r0();
    if !(0.0 < rho_a && rho_a < r0 && r0 < r_map) {
        return invalid(format!(
            "mapping breakpoints must satisfy 0 < rho_a < r0 < R_map (got {rho_a}, {r0}, {r_map})"
        ));
    }
    let n = 4096;
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    for i in 0..n {
        let d = field.displacement(2.0 * PI * i as f64 / n as f64);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    // radial derivative 1 + δr χ' on both linear pieces
    if 1.0 + lo / (r0 - rho_a) <= 0.0 || 1.0 - hi / (r_map - r0) <= 0.0 {
        return Err(Error::Mapping(format!(
            "displacement range [{lo:e}, {hi:e}] folds the mapping with breakpoints ({rho_a}, {r0}, {r_map})"
        )));
    }
    Ok(DomainMapping {
        rho_a,
        r0,
        r_map,
        field: field.clone(),
    })
}

impl DomainMapping {
    pub fn field(&self) -> &RadiusField {
        &self.field
    }

    pub fn chi(&self, rho: f64) -> f64 {
        if rho <= self.rho_a || rho >= self.r_map {
            0.0
        } else if rho <= self.r0 {
            (rho - self.rho_a) / (self.r0 - self.rho_a)
        } else {
            (self.r_map - rho) / (self.r_map - self.r0)
        }
    }

    /// `χ'` with the one-sided value on the piece containing `rho`.
    pub fn dchi(&self, rho: f64) -> f64 {
        if rho <= self.rho_a || rho >= self.r_map {
            0.0
        } else if rho <= self.r0 {
            1.0 / (self.r0 - self.rho_a)
        } else {
            -1.0 / (self.r_map - self.r0)
        }
    }

    pub fn is_identity_at(&self, rho: f64) -> bool {
        rho <= self.rho_a || rho >= self.r_map
    }

    pub fn map(&self, xh: [f64; 2]) -> [f64; 2] {
        let rho = xh[0].hypot(xh[1]);
        if self.is_identity_at(rho) {
            return xh;
        }
        let phi = xh[1].atan2(xh[0]);
        let s = 1.0 + self.field.displacement(phi) * self.chi(rho) / rho;
        [xh[0] * s, xh[1] * s]
    }

    /// Jacobian `DΦ(x̂)` (row-major) and its determinant.
    pub fn jacobian(&self, xh: [f64; 2]) -> ([[f64; 2]; 2], f64) {
        let rho = xh[0].hypot(xh[1]);
        if self.is_identity_at(rho) {
            return ([[1.0, 0.0], [0.0, 1.0]], 1.0);
        }
        self.jacobian_on_piece(xh, rho, self.chi(rho), self.dchi(rho))
    }

    /// Jacobian with `χ, χ'` supplied, so element quadrature can use the
    /// slope of the piece the element lies on.
    fn jacobian_on_piece(&self, xh: [f64; 2], rho: f64, chi: f64, dchi: f64) -> ([[f64; 2]; 2], f64) {
        let phi = xh[1].atan2(xh[0]);
        let (r, dr) = self.field.eval_with_deriv(phi);
        let delta = r - self.r0;
        let g1 = 1.0 + delta * dchi;
        let g2 = dr * chi / rho;
        let g3 = (rho + delta * chi) / rho;
        let (c, s) = (phi.cos(), phi.sin());
        // g1 e_ρ e_ρᵀ + g2 e_ρ e_φᵀ + g3 e_φ e_φᵀ
        let j = [
            [g1 * c * c - g2 * c * s + g3 * s * s, g1 * c * s + g2 * c * c - g3 * s * c],
            [g1 * s * c - g2 * s * s - g3 * c * s, g1 * s * s + g2 * s * c + g3 * c * c],
        ];
        (j, g1 * g3)
    }

    /// Inverse of [`DomainMapping::map`].
    pub fn pullback(&self, x: [f64; 2]) -> [f64; 2] {
        let rho = x[0].hypot(x[1]);
        if self.is_identity_at(rho) {
            return x;
        }
        let phi = x[1].atan2(x[0]);
        let delta = self.field.displacement(phi);
        let rb = self.r0 + delta;
        let rh = if rho <= rb {
            self.rho_a + (rho - self.rho_a) * (self.r0 - self.rho_a) / (rb - self.rho_a)
        } else {
            self.r_map - (self.r_map - rho) * (self.r_map - self.r0) / (self.r_map - rb)
        };
        let s = rh / rho;
        [x[0] * s, x[1] * s]
    }
}

/// Stiffness-minus-mass operator and load in CSC layout.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub dim: usize,
    pub col_ptr: Arc<Vec<usize>>,
    pub row_idx: Arc<Vec<usize>>,
    pub values: Vec<C64>,
    pub rhs: Vec<C64>,
}

impl AssembledSystem {
    /// `A[i, j]`, zero outside the pattern.
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        match self.row_idx[a..b].binary_search(&i) {
            Ok(k) => self.values[a + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.dim];
        for j in 0..self.dim {
            let xj = x[j];
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += self.values[k] * xj;
            }
        }
        y
    }
}

/// Scattered field on the reference mesh.
#[derive(Clone, Debug)]
pub struct FieldSolution {
    /// Nodal values per mesh vertex (zero on the outer boundary).
    pub values: Vec<C64>,
    pub params: PhysicsParams,
    pub mapping: DomainMapping,
    pub mesh: Arc<Mesh>,
    pub residual: f64,
}

/// Per-mesh precomputation shared by every solve: DOF map, sparsity
/// pattern, symbolic LU, geometry, and the sample-independent part of the
/// operator.
pub struct ForwardSolver {
    mesh: Arc<Mesh>,
    params: PhysicsParams,
    pml: PmlParams,
    dof: Vec<usize>,
    ndof: usize,
    col_ptr: Arc<Vec<usize>>,
    row_idx: Arc<Vec<usize>>,
    symbolic: SymbolicSparseColMat<usize>,
    symbolic_lu: SymbolicLu<usize>,
    slots: Vec<[usize; 9]>,
    grads: Vec<[[f64; 2]; 3]>,
    areas: Vec<f64>,
    fixed: Vec<C64>,
    mapped: Vec<usize>,
}

const NONE: usize = usize::MAX;

/// Gradients of the three barycentric functions.
fn p1_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]);
    let g = [
        [(p[1][1] - p[2][1]) / det, (p[2][0] - p[1][0]) / det],
        [(p[2][1] - p[0][1]) / det, (p[0][0] - p[2][0]) / det],
        [(p[0][1] - p[1][1]) / det, (p[1][0] - p[0][0]) / det],
    ];
    (g, 0.5 * det)
}

fn inv2(j: [[f64; 2]; 2], det: f64) -> [[f64; 2]; 2] {
    [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]]
}

impl ForwardSolver {
    pub fn new(mesh: Arc<Mesh>, params: PhysicsParams, sigma_pml: f64) -> Result<Self> {
        params.validate()?;
        if !(sigma_pml >= 0.0 && sigma_pml.is_finite()) {
            return invalid(format!("sigma_PML must be >= 0, got {sigma_pml}"));
        }
        let cfg = mesh.config;
        let pml = PmlParams {
            r: cfg.r,
            r_pml: cfg.r_pml,
            sigma_max: sigma_pml,
        };
        let nv = mesh.num_vertices();
        let mut dof = vec![NONE; nv];
        let mut ndof = 0;
        for v in 0..nv {
            if !mesh.boundary[v] {
                dof[v] = ndof;
                ndof += 1;
            }
        }
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); ndof];
        for t in &mesh.triangles {
            for &a in t {
                for &b in t {
                    if dof[a] != NONE && dof[b] != NONE {
                        cols[dof[b]].push(dof[a]);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(ndof + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        let slot = |i: usize, j: usize| {
            let (a, b) = (col_ptr[j], col_ptr[j + 1]);
            a + row_idx[a..b].binary_search(&i).expect("entry in pattern")
        };
        let mut slots = Vec::with_capacity(mesh.num_triangles());
        let mut grads = Vec::with_capacity(mesh.num_triangles());
        let mut areas = Vec::with_capacity(mesh.num_triangles());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let mut s = [NONE; 9];
            for a in 0..3 {
                for b in 0..3 {
                    let (da, db) = (dof[tri[a]], dof[tri[b]]);
                    if da != NONE && db != NONE {
                        s[3 * a + b] = slot(da, db);
                    }
                }
            }
            slots.push(s);
            let (g, area) = p1_gradients(mesh.triangle_coords(t));
            grads.push(g);
            areas.push(area);
        }
        let symbolic =
            SymbolicSparseColMat::new_checked(ndof, ndof, col_ptr.clone(), None, row_idx.clone());
        let symbolic_lu = SymbolicLu::try_new(symbolic.as_ref()).map_err(|e| Error::Solver {
            kappa0: params.kappa0,
            msg: format!("symbolic factorization failed: {e:?}"),
        })?;
        let mut solver = Self {
            mesh,
            params,
            pml,
            dof,
            ndof,
            col_ptr: Arc::new(col_ptr),
            row_idx: Arc::new(row_idx),
            symbolic,
            symbolic_lu,
            slots,
            grads,
            areas,
            fixed: Vec::new(),
            mapped: Vec::new(),
        };
        let mut fixed = vec![C64::new(0.0, 0.0); solver.row_idx.len()];
        let mut mapped = Vec::new();
        for t in 0..solver.mesh.num_triangles() {
            let rho = {
                let c = solver.mesh.centroid(t);
                c[0].hypot(c[1])
            };
            if rho > cfg.rho_a && rho < cfg.r_map {
                mapped.push(t);
                continue;
            }
            let e = solver.element_unmapped(t);
            solver.scatter(t, &e, &mut fixed);
        }
        solver.fixed = fixed;
        solver.mapped = mapped;
        Ok(solver)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn pml(&self) -> &PmlParams {
        &self.pml
    }

    /// Number of unknowns (non-Dirichlet vertices).
    pub fn num_dofs(&self) -> usize {
        self.ndof
    }

    pub fn dof_of(&self, v: usize) -> Option<usize> {
        (self.dof[v] != NONE).then_some(self.dof[v])
    }

    fn scatter(&self, t: usize, e: &[[C64; 3]; 3], values: &mut [C64]) {
        let s = &self.slots[t];
        for a in 0..3 {
            for b in 0..3 {
                let k = s[3 * a + b];
                if k != NONE {
                    values[k] += e[a][b];
                }
            }
        }
    }

    /// Element matrix `∫ A∇φ_b·∇φ_a − m φ_b φ_a` with pointwise `(A, m)`.
    fn element_with(&self, t: usize, mut coef: impl FnMut([f64; 2]) -> ([[C64; 2]; 2], C64)) -> [[C64; 3]; 3] {
        let p = self.mesh.triangle_coords(t);
        let g = &self.grads[t];
        let w = self.areas[t] / 3.0;
        let mut e = [[C64::new(0.0, 0.0); 3]; 3];
        for q in QUAD {
            let x = [
                q[0] * p[0][0] + q[1] * p[1][0] + q[2] * p[2][0],
                q[0] * p[0][1] + q[1] * p[1][1] + q[2] * p[2][1],
            ];
            let (a, m) = coef(x);
            for i in 0..3 {
                let agi = [
                    a[0][0] * g[i][0] + a[0][1] * g[i][1],
                    a[1][0] * g[i][0] + a[1][1] * g[i][1],
                ];
                for j in 0..3 {
                    let k = agi[0] * g[j][0] + agi[1] * g[j][1];
                    e[i][j] += (k - m * q[i] * q[j]) * w;
                }
            }
        }
        e
    }

    fn material(&self, region: Region) -> (f64, f64) {
        match region {
            Region::Interior => (self.params.alpha_in, self.params.n_in),
            _ => (self.params.alpha_out, self.params.n_out),
        }
    }

    fn element_unmapped(&self, t: usize) -> [[C64; 3]; 3] {
        let region = self.mesh.regions[t];
        let k2 = self.params.kappa0.powi(2);
        let (alpha, n) = self.material(region);
        if region == Region::Pml {
            let pml = self.pml;
            let kappa0 = self.params.kappa0;
            self.element_with(t, |x| {
                let rho = x[0].hypot(x[1]);
                let (a, b) = pml.stretch(rho, kappa0);
                let (c, s) = (x[0] / rho, x[1] / rho);
                let (arr, aff) = (a / b * alpha, b / a * alpha);
                (
                    [
                        [arr * c * c + aff * s * s, (arr - aff) * c * s],
                        [(arr - aff) * c * s, arr * s * s + aff * c * c],
                    ],
                    a * b * k2 * n,
                )
            })
        } else {
            let z = C64::new(0.0, 0.0);
            let a = C64::new(alpha, 0.0);
            self.element_with(t, |_| ([[a, z], [z, a]], C64::new(k2 * n, 0.0)))
        }
    }

    /// `χ` and `χ'` for triangle `t` evaluated on the piece that contains it.
    fn piece(&self, mapping: &DomainMapping, t: usize) -> impl Fn(f64) -> (f64, f64) {
        let c = self.mesh.centroid(t);
        let inner = c[0].hypot(c[1]) < mapping.r0;
        let (ra, r0, rm) = (mapping.rho_a, mapping.r0, mapping.r_map);
        move |rho: f64| {
            if inner {
                ((rho - ra) / (r0 - ra), 1.0 / (r0 - ra))
            } else {
                ((rm - rho) / (rm - r0), -1.0 / (rm - r0))
            }
        }
    }

    fn element_mapped(&self, t: usize, mapping: &DomainMapping) -> Result<[[C64; 3]; 3]> {
        let (alpha, n) = self.material(self.mesh.regions[t]);
        let k2 = self.params.kappa0.powi(2);
        let piece = self.piece(mapping, t);
        let mut bad = None;
        let e = self.element_with(t, |xh| {
            let rho = xh[0].hypot(xh[1]);
            let (chi, dchi) = piece(rho);
            let (j, det) = mapping.jacobian_on_piece(xh, rho, chi, dchi);
            if !(det > 0.0) {
                bad = Some((xh, det));
            }
            let ji = inv2(j, det);
            // J⁻¹ α J⁻ᵀ |det J|
            let mut a = [[C64::new(0.0, 0.0); 2]; 2];
            for r in 0..2 {
                for c in 0..2 {
                    let v = ji[r][0] * ji[c][0] + ji[r][1] * ji[c][1];
                    a[r][c] = C64::new(alpha * v * det.abs(), 0.0);
                }
            }
            (a, C64::new(k2 * n * det.abs(), 0.0))
        });
        if let Some((x, det)) = bad {
            return Err(Error::Mapping(format!(
                "Jacobian determinant {det:e} <= 0 at reference point ({:e}, {:e})",
                x[0], x[1]
            )));
        }
        Ok(e)
    }

    /// Weak load `∫ κ0²(n−n_out) u^i v − (α−α_out) ∇u^i·∇v` over the scatterer.
    fn load(&self, mapping: &DomainMapping) -> Vec<C64> {
        let mut f = vec![C64::new(0.0, 0.0); self.ndof];
        let p = &self.params;
        let dn = p.n_in - p.n_out;
        let da = p.alpha_in - p.alpha_out;
        if dn == 0.0 && da == 0.0 {
            return f;
        }
        let k2 = p.kappa0.powi(2);
        for t in 0..self.mesh.num_triangles() {
            if self.mesh.regions[t] != Region::Interior {
                continue;
            }
            let tri = self.mesh.triangles[t];
            let pts = self.mesh.triangle_coords(t);
            let g = &self.grads[t];
            let w = self.areas[t] / 3.0;
            let c = self.mesh.centroid(t);
            let mapped = !mapping.is_identity_at(c[0].hypot(c[1]));
            let piece = self.piece(mapping, t);
            for q in QUAD {
                let xh = [
                    q[0] * pts[0][0] + q[1] * pts[1][0] + q[2] * pts[2][0],
                    q[0] * pts[0][1] + q[1] * pts[1][1] + q[2] * pts[2][1],
                ];
                let (ji, det, x) = if mapped {
                    let rho = xh[0].hypot(xh[1]);
                    let (chi, dchi) = piece(rho);
                    let (j, det) = mapping.jacobian_on_piece(xh, rho, chi, dchi);
                    (inv2(j, det), det.abs(), mapping.map(xh))
                } else {
                    ([[1.0, 0.0], [0.0, 1.0]], 1.0, xh)
                };
                let ui = p.incident(x);
                let gui = p.incident_grad(x);
                for a in 0..3 {
                    let d = self.dof[tri[a]];
                    if d == NONE {
                        continue;
                    }
                    // ∇_x φ_a = J⁻ᵀ ∇_x̂ φ_a
                    let gx = [
                        ji[0][0] * g[a][0] + ji[1][0] * g[a][1],
                        ji[0][1] * g[a][0] + ji[1][1] * g[a][1],
                    ];
                    let mass = ui * (k2 * dn * q[a]);
                    let stiff = (gui[0] * gx[0] + gui[1] * gx[1]) * da;
                    f[d] += (mass - stiff) * (w * det);
                }
            }
        }
        f
    }

    /// Operator and load for one mapped configuration.
    pub fn assemble(&self, mapping: &DomainMapping) -> Result<AssembledSystem> {
        let mut values = self.fixed.clone();
        for &t in &self.mapped {
            let e = self.element_mapped(t, mapping)?;
            self.scatter(t, &e, &mut values);
        }
        Ok(AssembledSystem {
            dim: self.ndof,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values,
            rhs: self.load(mapping),
        })
    }

    /// Sparse LU with the shared symbolic analysis; rejects residuals above 1e-10.
    pub fn solve_system(&self, system: &AssembledSystem) -> Result<(Vec<C64>, f64)> {
        let kappa0 = self.params.kappa0;
        let bnorm = system.rhs.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if bnorm == 0.0 {
            return Ok((vec![C64::new(0.0, 0.0); system.dim], 0.0));
        }
        let a = SparseColMatRef::new(self.symbolic.as_ref(), &system.values);
        let lu = Lu::try_new_with_symbolic(self.symbolic_lu.clone(), a).map_err(|e| Error::Solver {
            kappa0,
            msg: format!("numeric LU failed: {e:?}"),
        })?;
        let residual = |x: &[C64]| -> Vec<C64> {
            let ax = system.matvec(x);
            system.rhs.iter().zip(&ax).map(|(b, u)| b - u).collect()
        };
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let solve = |r: &[C64]| -> Vec<C64> {
            let y = lu.solve(Mat::<C64>::from_fn(system.dim, 1, |i, _| r[i]));
            (0..system.dim).map(|i| y[(i, 0)]).collect()
        };
        let mut x = solve(&system.rhs);
        let mut r = residual(&x);
        let mut rel = norm(&r) / bnorm;
        // iterative refinement on the same factors; large PML meshes lose a digit or two
        for _ in 0..3 {
            if rel <= 1e-12 {
                break;
            }
            let dx = solve(&r);
            let cand: Vec<C64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let rc = residual(&cand);
            let relc = norm(&rc) / bnorm;
            if !(relc < rel) {
                break;
            }
            (x, r, rel) = (cand, rc, relc);
        }
        if !(rel <= 1e-10) {
            return Err(Error::Solver {
                kappa0,
                msg: format!("relative residual {rel:e} exceeds 1e-10"),
            });
        }
        Ok((x, rel))
    }

    /// Mapping, assembly and solve for one boundary sample.
    pub fn solve(&self, field: &RadiusField) -> Result<FieldSolution> {
        let cfg = self.mesh.config;
        let mapping = build_mapping(field, cfg.rho_a, cfg.r_map)?;
        let system = self.assemble(&mapping)?;
        let (x, residual) = self.solve_system(&system)?;
        let mut values = vec![C64::new(0.0, 0.0); self.mesh.num_vertices()];
        for (v, &d) in self.dof.iter().enumerate() {
            if d != NONE {
                values[v] = x[d];
            }
        }
        Ok(FieldSolution {
            values,
            params: self.params,
            mapping,
            mesh: self.mesh.clone(),
            residual,
        })
    }
}

/// Quadrature of `f(x, inside)` over the physical image of `D_in ∪ D_R`
/// (PML excluded), with `x` the physical point.
pub fn integrate_physical(
    mesh: &Mesh,
    mapping: &DomainMapping,
    mut f: impl FnMut(usize, [f64; 3], [f64; 2], bool, [[f64; 2]; 2]) -> f64,
) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let region = mesh.regions[t];
        if region == Region::Pml {
            continue;
        }
        let p = mesh.triangle_coords(t);
        let (_, area) = p1_gradients(p);
        let c = mesh.centroid(t);
        let crho = c[0].hypot(c[1]);
        let mapped = !mapping.is_identity_at(crho);
        let inner = crho < mapping.r0;
        for q in QUAD {
            let xh = [
                q[0] * p[0][0] + q[1] * p[1][0] + q[2] * p[2][0],
                q[0] * p[0][1] + q[1] * p[1][1] + q[2] * p[2][1],
            ];
            let (jinv, det, x) = if mapped {
                let rho = xh[0].hypot(xh[1]);
                let (chi, dchi) = if inner {
                    ((rho - mapping.rho_a) / (mapping.r0 - mapping.rho_a), 1.0 / (mapping.r0 - mapping.rho_a))
                } else {
                    ((mapping.r_map - rho) / (mapping.r_map - mapping.r0), -1.0 / (mapping.r_map - mapping.r0))
                };
                let (j, det) = mapping.jacobian_on_piece(xh, rho, chi, dchi);
                (inv2(j, det), det.abs(), mapping.map(xh))
            } else {
                ([[1.0, 0.0], [0.0, 1.0]], 1.0, xh)
            };
            total += f(t, q, x, region == Region::Interior, jinv) * det * area / 3.0;
        }
    }
    total
}

impl FieldSolution {
    /// P1 interpolant of the scattered field at a reference point.
    pub fn scattered_at_reference(&self, xh: [f64; 2]) -> Result<C64> {
        let (t, l) = self.mesh.locate_point(xh)?;
        let tri = self.mesh.triangles[t];
        Ok(self.values[tri[0]] * l[0] + self.values[tri[1]] * l[1] + self.values[tri[2]] * l[2])
    }

    /// Scattered field at physical points in `B_R`.
    pub fn scattered_at(&self, points: &[[f64; 2]]) -> Result<Vec<C64>> {
        let r = self.mesh.config.r;
        points
            .iter()
            .map(|&x| {
                if x[0].hypot(x[1]) >= r {
                    return invalid(format!(
                        "point ({}, {}) lies in the PML (|x| >= R = {r})",
                        x[0], x[1]
                    ));
                }
                self.scattered_at_reference(self.mapping.pullback(x))
            })
            .collect()
    }

    /// `u^i + u` at physical points in `B_R`.
    pub fn total_field_at(&self, points: &[[f64; 2]]) -> Result<Vec<C64>> {
        let s = self.scattered_at(points)?;
        Ok(points
            .iter()
            .zip(s)
            .map(|(&x, u)| self.params.incident(x) + u)
            .collect())
    }

    /// `‖u‖_{H¹_{κ0,α,n}(D_in ∪ D_R)}` of the scattered field.
    pub fn weighted_norm(&self) -> f64 {
        weighted_norm_of(&self.mesh, &self.mapping, &self.params, &self.values)
    }

    /// Nodal CSV `x,y,Re(u),Im(u)` at physical node positions (scattered field).
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "x,y,re_u,im_u")?;
        for (v, u) in self.mesh.vertices.iter().zip(&self.values) {
            let x = self.mapping.map(*v);
            writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", x[0], x[1], u.re, u.im)?;
        }
        Ok(())
    }
}

/// Weighted norm of a nodal P1 function on the mapped physical domain.
pub fn weighted_norm_of(mesh: &Mesh, mapping: &DomainMapping, params: &PhysicsParams, values: &[C64]) -> f64 {
    let k2 = params.kappa0.powi(2);
    let sq = integrate_physical(mesh, mapping, |t, q, _x, inside, ji| {
        let tri = mesh.triangles[t];
        let (g, _) = p1_gradients(mesh.triangle_coords(t));
        let (alpha, n) = if inside {
            (params.alpha_in, params.n_in)
        } else {
            (params.alpha_out, params.n_out)
        };
        let mut u = C64::new(0.0, 0.0);
        let mut gu = [C64::new(0.0, 0.0); 2];
        for a in 0..3 {
            let v = values[tri[a]];
            u += v * q[a];
            let gx = [
                ji[0][0] * g[a][0] + ji[1][0] * g[a][1],
                ji[0][1] * g[a][0] + ji[1][1] * g[a][1],
            ];
            gu[0] += v * gx[0];
            gu[1] += v * gx[1];
        }
        alpha * (gu[0].norm_sqr() + gu[1].norm_sqr()) + k2 * n * u.norm_sqr()
    });
    sq.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pml_sigma_bar_is_running_mean() {
        let p = PmlParams {
            r: 0.07,
            r_pml: 0.11,
            sigma_max: 1e5,
        };
        let rho = 0.09;
        let n = 20000;
        let h = (rho - p.r) / n as f64;
        let integral: f64 = (0..n).map(|i| p.sigma(p.r + (i as f64 + 0.5) * h) * h).sum();
        assert!((integral / rho - p.sigma_bar(rho)).abs() < 1e-9 * p.sigma_bar(rho));
    }

    #[test]
    fn incident_has_unit_modulus() {
        let p = PhysicsParams::default();
        assert!((p.incident([0.03, -0.02]).norm() - 1.0).abs() < 1e-15);
    }
}
