//! Run configuration, subcommands and reproducibility manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::bayes::ForwardPotential;
use crate::bounds::{
    constant_report, euclidean, observation_norms, verify_forward_bound, BoundReport, GeometrySummary, StabilityInputs,
};
use crate::error::{Error, Result};
use crate::forward::{ForwardSolver, PhysicsParams, DEFAULT_SIGMA_PML};
use crate::mesh::{build_disk_mesh, pollution_mesh_size, Mesh, MeshConfig, SPEED_OF_LIGHT};
use crate::observe::{
    generate_data, measurement_points, observe, DataSeeds, DataVector, MeasurementSetup, Mode, NoiseModel, SigmaSpec,
};
use crate::shape::{
    sample_prior_y, truncation_level, whittle_matern_coeffs, CoefficientSequence, PriorSpec, RadiusField,
};
use crate::smc::{self, SmcConfig};

/// Variance fraction kept by the automatic truncation.
pub const AUTO_FRACTION: f64 = 0.95;
/// Angle grid of the radius summaries.
pub const SUMMARY_ANGLES: usize = 720;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    /// Frequency in Hz; `1e9` if neither this nor `kappa0` is set.
    pub frequency: Option<f64>,
    pub kappa0: Option<f64>,
    pub c: f64,
    pub alpha_in: f64,
    pub alpha_out: f64,
    pub n_in: f64,
    pub n_out: f64,
    pub direction: [f64; 2],
    pub d: usize,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            frequency: None,
            kappa0: None,
            c: SPEED_OF_LIGHT,
            alpha_in: 1.0,
            alpha_out: 1.0,
            n_in: 0.9,
            n_out: 1.0,
            direction: [1.0, 0.0],
            d: 2,
        }
    }
}

/// Number of prior terms: fixed, or the smallest `J` keeping 95% of the variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Truncation {
    #[default]
    Auto95,
    Fixed(usize),
}

impl Serialize for Truncation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Truncation::Auto95 => s.serialize_str("auto95"),
            Truncation::Fixed(j) => s.serialize_u64(*j as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Truncation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(usize),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(j) => Ok(Truncation::Fixed(j)),
            Raw::S(s) if s == "auto95" => Ok(Truncation::Auto95),
            Raw::S(s) => Err(serde::de::Error::custom(format!("J must be a count or \"auto95\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub r0: f64,
    pub s: f64,
    pub epsilon: f64,
    #[serde(rename = "J")]
    pub j: Truncation,
    /// Seed for `prior-sample`.
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            r0: 0.01,
            s: 0.1,
            epsilon: 0.001,
            j: Truncation::Auto95,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    /// `0.25 (1-γ_β) r0` if unset.
    pub rho_a: Option<f64>,
    /// Midway between `(1+γ_β) r0` and `R` if unset.
    pub r_map: Option<f64>,
    pub r: f64,
    pub r_pml: f64,
    pub sigma_pml: f64,
    pub h: f64,
    /// When set, `h` is the mesh size at this frequency and is rescaled to keep `h² κ0³` fixed.
    pub pollution_reference: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            rho_a: None,
            r_map: None,
            r: 0.07,
            r_pml: 0.11,
            sigma_pml: DEFAULT_SIGMA_PML,
            h: 0.00125,
            pollution_reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub r1: f64,
    pub mode: Mode,
    pub sigma: SigmaSpec,
}

impl Default for MeasurementConfig {
    fn default() -> Self {
        Self {
            k: 100,
            r1: 0.06,
            mode: Mode::Amplitude,
            sigma: SigmaSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub truth_seed: u64,
    pub noise_seed: u64,
    /// Fixed truth coordinates instead of a prior draw.
    pub truth_y: Option<Vec<f64>>,
    /// Emit `δ = G(r†)` without noise.
    pub noise_free: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            truth_seed: 1,
            noise_seed: 2,
            truth_y: None,
            noise_free: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub n_shapes: usize,
    pub kappa0_multipliers: Vec<f64>,
    pub shape_seed: u64,
    pub slack: f64,
    /// Data bound `γ ≥ |δ|`; `2√K` if unset.
    pub gamma: Option<f64>,
    /// `(n_max, μ_n)` for the sound-soft constants.
    pub soundsoft: (f64, f64),
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            n_shapes: 20,
            kappa0_multipliers: vec![1.0, 2.0, 4.0],
            shape_seed: 3,
            slack: 0.05,
            gamma: None,
            soundsoft: (1.0, 2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub prior: PriorConfig,
    pub geometry: GeometryConfig,
    pub measurement: MeasurementConfig,
    pub smc: SmcConfig,
    pub data: DataConfig,
    pub bounds: BoundsConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            physics: PhysicsConfig::default(),
            prior: PriorConfig::default(),
            geometry: GeometryConfig::default(),
            measurement: MeasurementConfig::default(),
            smc: SmcConfig::default(),
            data: DataConfig::default(),
            bounds: BoundsConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Library validation failures surface as config errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Invalid(m) | Error::Mesh(m) => Error::Config(m),
        other => other,
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| cfg_err(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Every seed derived from one master value.
    pub fn apply_seed(&mut self, seed: u64) {
        self.prior.seed = seed;
        self.data.truth_seed = seed;
        self.data.noise_seed = seed.wrapping_add(1);
        self.smc.seed = seed.wrapping_add(2);
        self.bounds.shape_seed = seed.wrapping_add(3);
    }

    /// Defaults materialized and every cross-field constraint checked.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = self.clone();
        let p = &mut c.physics;
        match (p.frequency, p.kappa0) {
            (Some(_), Some(_)) => return Err(cfg_err("set either physics.frequency or physics.kappa0, not both")),
            (None, None) => p.frequency = Some(1e9),
            _ => {}
        }
        let coeffs = resolve_coeffs(&c.prior)?;
        c.prior.j = Truncation::Fixed(coeffs.len());
        let gb = coeffs.gamma_beta();
        let r0 = c.prior.r0;
        let g = &mut c.geometry;
        g.rho_a.get_or_insert(0.25 * (1.0 - gb) * r0);
        g.r_map.get_or_insert(0.5 * ((1.0 + gb) * r0 + g.r));
        if let Some(f_ref) = g.pollution_reference.take() {
            let params = c.physics_params()?;
            let f = params.kappa0 * params.c / (2.0 * std::f64::consts::PI);
            if !(f_ref > 0.0) {
                return Err(cfg_err(format!("geometry.pollution_reference must be > 0, got {f_ref}")));
            }
            c.geometry.h = pollution_mesh_size(c.geometry.h, f_ref, f, params.c);
        }
        c.validate_resolved(&coeffs)?;
        Ok(c)
    }

    fn validate_resolved(&self, coeffs: &CoefficientSequence) -> Result<()> {
        self.physics_params()?;
        let gb = coeffs.gamma_beta();
        let r0 = self.prior.r0;
        let mc = self.mesh_config()?;
        if !(mc.rho_a < (1.0 - gb) * r0) {
            return Err(cfg_err(format!(
                "geometry.rho_a = {} must be below (1-gamma_beta) r0 = {}",
                mc.rho_a,
                (1.0 - gb) * r0
            )));
        }
        if !((1.0 + gb) * r0 < mc.r_map) {
            return Err(cfg_err(format!(
                "geometry.r_map = {} must exceed (1+gamma_beta) r0 = {}",
                mc.r_map,
                (1.0 + gb) * r0
            )));
        }
        if !(self.geometry.sigma_pml >= 0.0 && self.geometry.sigma_pml.is_finite()) {
            return Err(cfg_err("geometry.sigma_pml must be >= 0"));
        }
        let setup = self.setup()?;
        setup.check_geometry((1.0 + gb) * r0, mc.r).map_err(as_config)?;
        self.noise_model()?;
        self.smc.validate().map_err(as_config)?;
        if let Some(y) = &self.data.truth_y {
            if y.len() != coeffs.len() {
                return Err(cfg_err(format!("data.truth_y has {} entries, J = {}", y.len(), coeffs.len())));
            }
            if y.iter().any(|v| !(v.abs() <= 1.0)) {
                return Err(cfg_err("data.truth_y must lie in [-1, 1]^J"));
            }
        }
        let b = &self.bounds;
        if b.kappa0_multipliers.iter().any(|m| !(*m > 0.0)) {
            return Err(cfg_err("bounds.kappa0_multipliers must be > 0"));
        }
        if !(b.slack >= 0.0) {
            return Err(cfg_err("bounds.slack must be >= 0"));
        }
        Ok(())
    }

    pub fn physics_params(&self) -> Result<PhysicsParams> {
        let p = &self.physics;
        let dir = p.direction;
        let base = match (p.frequency, p.kappa0) {
            (Some(f), _) => PhysicsParams::from_frequency(f, p.c, p.alpha_in, p.alpha_out, p.n_in, p.n_out, dir),
            (None, Some(k)) => PhysicsParams::from_frequency(1e9, p.c, p.alpha_in, p.alpha_out, p.n_in, p.n_out, dir)
                .map(|q| q.with_kappa0(k)),
            (None, None) => PhysicsParams::from_frequency(1e9, p.c, p.alpha_in, p.alpha_out, p.n_in, p.n_out, dir),
        }
        .map_err(as_config)?;
        let q = PhysicsParams { dim: p.d, ..base };
        q.validate().map_err(as_config)?;
        Ok(q)
    }

    /// Coefficients (resolved configs only carry a fixed `J`).
    pub fn coeffs(&self) -> Result<CoefficientSequence> {
        resolve_coeffs(&self.prior)
    }

    pub fn mesh_config(&self) -> Result<MeshConfig> {
        let g = &self.geometry;
        let (rho_a, r_map) = match (g.rho_a, g.r_map) {
            (Some(a), Some(m)) => (a, m),
            _ => return Err(cfg_err("geometry not resolved; call resolve() first")),
        };
        MeshConfig::new(g.h, rho_a, self.prior.r0, r_map, g.r, g.r_pml).map_err(as_config)
    }

    pub fn setup(&self) -> Result<MeasurementSetup> {
        let m = &self.measurement;
        MeasurementSetup::new(m.k, m.r1, m.mode).map_err(as_config)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        self.measurement.sigma.noise_model(self.measurement.k).map_err(as_config)
    }
}

fn resolve_coeffs(p: &PriorConfig) -> Result<CoefficientSequence> {
    let j = match p.j {
        Truncation::Fixed(0) => return Err(cfg_err("prior.J must be >= 1")),
        Truncation::Fixed(j) => j,
        Truncation::Auto95 => {
            let c = whittle_matern_coeffs(p.r0, p.s, p.epsilon, 0).map_err(as_config)?;
            truncation_level(&c, AUTO_FRACTION).map_err(as_config)?
        }
    };
    whittle_matern_coeffs(p.r0, p.s, p.epsilon, j).map_err(as_config)
}

/// Everything a command needs, built once from a resolved config.
pub struct Context {
    pub config: RunConfig,
    pub params: PhysicsParams,
    pub coeffs: Arc<CoefficientSequence>,
    pub mesh: Arc<Mesh>,
    pub setup: MeasurementSetup,
    pub noise: NoiseModel,
}

impl Context {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let config = config.resolve()?;
        let mesh = Arc::new(build_disk_mesh(&config.mesh_config()?).map_err(as_config)?);
        Ok(Self {
            params: config.physics_params()?,
            coeffs: Arc::new(config.coeffs()?),
            setup: config.setup()?,
            noise: config.noise_model()?,
            mesh,
            config,
        })
    }

    pub fn solver(&self, params: PhysicsParams) -> Result<ForwardSolver> {
        ForwardSolver::new(self.mesh.clone(), params, self.config.geometry.sigma_pml)
    }

    pub fn geometry(&self) -> Result<GeometrySummary> {
        let g = &self.config.geometry;
        GeometrySummary::new(&self.coeffs, self.params.dim, g.r, None, g.r_pml)
    }
}

/// Files written by a command and the forward solves it spent.
#[derive(Clone, Debug, Default)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub forward_solves: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub seeds: Seeds,
    pub wall_seconds: f64,
    pub forward_solves: usize,
    /// `(file name, sha256)`.
    pub outputs: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub prior: u64,
    pub truth: u64,
    pub noise: u64,
    pub smc: u64,
    pub shapes: u64,
}

impl Seeds {
    fn of(c: &RunConfig) -> Self {
        Self {
            prior: c.prior.seed,
            truth: c.data.truth_seed,
            noise: c.data.noise_seed,
            smc: c.smc.seed,
            shapes: c.bounds.shape_seed,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write through a temporary file and rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn emit(out: &mut CommandOutput, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    write_atomic(&p, bytes)?;
    out.files.push(p);
    Ok(())
}

fn write_manifest(command: &str, cfg: &RunConfig, out: &CommandOutput, dir: &Path, start: Instant) -> Result<PathBuf> {
    let outputs = out
        .files
        .iter()
        .map(|p| {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((name, sha256_hex(&fs::read(p)?)))
        })
        .collect::<Result<Vec<_>>>()?;
    let m = RunManifest {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: Seeds::of(cfg),
        wall_seconds: start.elapsed().as_secs_f64(),
        forward_solves: out.forward_solves,
        outputs,
    };
    let path = dir.join("manifest.json");
    write_atomic(&path, serde_json::to_string_pretty(&m)?.as_bytes())?;
    Ok(path)
}

fn truth_field(ctx: &Context) -> Result<RadiusField> {
    let y = match &ctx.config.data.truth_y {
        Some(y) => y.clone(),
        None => sample_prior_y(&PriorSpec::new(ctx.coeffs.clone(), ctx.config.data.truth_seed), 1).remove(0),
    };
    RadiusField::new(ctx.coeffs.clone(), y)
}

/// Synthetic data `δ = G(r†) + η` as JSON.
pub fn cmd_generate_data(ctx: &Context, dir: &Path) -> Result<CommandOutput> {
    let c = &ctx.config;
    let truth = truth_field(ctx)?;
    let solver = ctx.solver(ctx.params)?;
    let noise = (!c.data.noise_free).then_some(&ctx.noise);
    let seeds = DataSeeds {
        truth: c.data.truth_y.is_none().then_some(c.data.truth_seed),
        noise: c.data.noise_seed,
    };
    let data = generate_data(&truth, &ctx.setup, &solver, noise, c.measurement.sigma.clone(), seeds)?;
    let mut out = CommandOutput {
        forward_solves: 1,
        ..Default::default()
    };
    emit(&mut out, dir, "data.json", serde_json::to_string_pretty(&data)?.as_bytes())?;
    Ok(out)
}

pub fn load_data(path: &Path) -> Result<DataVector> {
    let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("cannot read data file {}: {e}", path.display())))?;
    let d: DataVector = serde_json::from_str(&text).map_err(|e| cfg_err(format!("cannot parse data file: {e}")))?;
    d.validate().map_err(as_config)?;
    Ok(d)
}

/// Tempered SMC posterior for `data`.
pub fn cmd_run_smc(ctx: &Context, data: DataVector, dir: &Path) -> Result<CommandOutput> {
    let c = &ctx.config;
    if data.k != ctx.setup.k {
        return Err(cfg_err(format!("data has K = {}, config has K = {}", data.k, ctx.setup.k)));
    }
    if (data.r1 - ctx.setup.r1).abs() > 1e-15 || data.mode != ctx.setup.mode {
        return Err(cfg_err("data ring radius or mode differs from the config"));
    }
    let solver = Arc::new(ctx.solver(ctx.params)?);
    let pot = ForwardPotential::new(solver, ctx.coeffs.clone(), ctx.setup, data, ctx.noise.clone()).map_err(as_config)?;
    let res = smc::run(&c.smc, ctx.coeffs.len(), &pot)?;
    let mut out = CommandOutput {
        forward_solves: res.init_calls + res.ladder_calls + res.update_calls,
        ..Default::default()
    };
    let mut buf = Vec::new();
    smc::write_particles_csv(&mut buf, &res.particles)?;
    emit(&mut out, dir, "particles.csv", &buf)?;
    buf.clear();
    smc::write_diagnostics_csv(&mut buf, &res.diagnostics)?;
    emit(&mut out, dir, "diagnostics.csv", &buf)?;
    buf.clear();
    let rows = smc::radius_summary(&res.particles, &ctx.coeffs, SUMMARY_ANGLES);
    smc::write_radius_csv(&mut buf, &rows)?;
    emit(&mut out, dir, "radius_summary.csv", &buf)?;
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.16e}"))
}

fn bounds_row(w: &mut Vec<u8>, mult: f64, shape: usize, consts: &BoundReport, check: &BoundReport) -> Result<()> {
    let tj = consts.jump;
    let ss = consts.soundsoft;
    let st = consts.stability;
    let cells = [
        format!("{mult:.16e}"),
        format!("{:.16e}", consts.kappa0),
        shape.to_string(),
        format!("{:.16e}", consts.corollary.c_kappa0),
        format!("{:.16e}", consts.corollary.c1),
        format!("{:.16e}", consts.corollary.c2),
        format!("{:.16e}", consts.volume_source[0]),
        format!("{:.16e}", consts.volume_source[1]),
        opt(tj.map(|t| t[0])),
        opt(tj.map(|t| t[1])),
        opt(tj.map(|t| t[2])),
        opt(st.map(|s| s.value)),
        opt(st.map(|s| s.plane_wave_proxy)),
        opt(consts.suboptimal),
        opt(ss.map(|s| s.c1)),
        opt(ss.map(|s| s.c2)),
        opt(ss.map(|s| s.c3)),
        opt(check.lhs),
        opt(check.rhs),
        opt(check.ratio()),
        check.passed().map_or("nan".into(), |p| p.to_string()),
    ];
    writeln!(w, "{}", cells.join(","))?;
    Ok(())
}

/// Constants and the measured forward bound over shapes × κ0 multipliers.
pub fn cmd_verify_bounds(ctx: &Context, dir: &Path) -> Result<CommandOutput> {
    let c = &ctx.config;
    let geom = ctx.geometry()?;
    let ys = sample_prior_y(&PriorSpec::new(ctx.coeffs.clone(), c.bounds.shape_seed), c.bounds.n_shapes);
    let points = measurement_points(&ctx.setup);
    let mut buf = Vec::new();
    writeln!(
        buf,
        "kappa0_multiplier,kappa0,shape,c_kappa0,c1,c2,vol_fin,vol_fout,jump_gradgd,jump_gd,jump_gn,\
         stability,plane_wave_proxy,suboptimal,ss_c1,ss_c2,ss_c3,lhs,rhs,ratio,pass"
    )?;
    let mut solves = 0;
    for &mult in &c.bounds.kappa0_multipliers {
        let params = ctx.params.with_kappa0(ctx.params.kappa0 * mult);
        let o = observation_norms(&ctx.mesh, &params, &points)?;
        let inputs = StabilityInputs {
            lambda_min: ctx.noise.lambda_min(),
            gamma: c.bounds.gamma.unwrap_or(2.0 * (ctx.setup.k as f64).sqrt()),
            o_norm: euclidean(&o),
            soundsoft: Some(c.bounds.soundsoft),
        };
        let consts = constant_report(&params, &geom, &inputs)?;
        let solver = ctx.solver(params)?;
        let checks = ys
            .par_iter()
            .map(|y| {
                let f = RadiusField::new(ctx.coeffs.clone(), y.clone())?;
                verify_forward_bound(&f, &geom, &solver, c.bounds.slack)
            })
            .collect::<Result<Vec<_>>>()?;
        solves += checks.len();
        for (i, chk) in checks.iter().enumerate() {
            bounds_row(&mut buf, mult, i, &consts, chk)?;
        }
    }
    let mut out = CommandOutput {
        forward_solves: solves,
        ..Default::default()
    };
    emit(&mut out, dir, "bounds.csv", &buf)?;
    Ok(out)
}

/// One solve at `y` (nominal shape if `None`): nodal field and measurements.
pub fn cmd_forward_solve(ctx: &Context, y: Option<Vec<f64>>, dir: &Path) -> Result<CommandOutput> {
    let y = y.unwrap_or_else(|| vec![0.0; ctx.coeffs.len()]);
    if y.len() != ctx.coeffs.len() {
        return Err(cfg_err(format!("y has {} entries, J = {}", y.len(), ctx.coeffs.len())));
    }
    let field = RadiusField::new(ctx.coeffs.clone(), y.clone()).map_err(as_config)?;
    let sol = ctx.solver(ctx.params)?.solve(&field)?;
    let mut out = CommandOutput {
        forward_solves: 1,
        ..Default::default()
    };
    let field_path = dir.join("field.csv");
    sol.export_csv(&field_path)?;
    out.files.push(field_path);
    let g = observe(&sol, &ctx.setup)?;
    #[derive(Serialize)]
    struct Measurements<'a> {
        y: &'a [f64],
        points: Vec<[f64; 2]>,
        values: &'a [f64],
        residual: f64,
    }
    let m = Measurements {
        y: &y,
        points: measurement_points(&ctx.setup),
        values: &g,
        residual: sol.residual,
    };
    emit(&mut out, dir, "measurements.json", serde_json::to_string_pretty(&m)?.as_bytes())?;
    Ok(out)
}

/// Prior draws as `sample,phi,radius` rows on the summary grid.
pub fn cmd_prior_sample(ctx: &Context, count: usize, dir: &Path) -> Result<CommandOutput> {
    let spec = PriorSpec::new(ctx.coeffs.clone(), ctx.config.prior.seed);
    let mut buf = Vec::new();
    writeln!(buf, "sample,phi,radius")?;
    for (i, y) in sample_prior_y(&spec, count).into_iter().enumerate() {
        let f = RadiusField::new(ctx.coeffs.clone(), y)?;
        for a in 0..SUMMARY_ANGLES {
            let phi = 2.0 * std::f64::consts::PI * a as f64 / SUMMARY_ANGLES as f64;
            writeln!(buf, "{i},{phi:.16e},{:.16e}", f.eval(phi))?;
        }
    }
    let mut out = CommandOutput::default();
    emit(&mut out, dir, "prior_samples.csv", &buf)?;
    Ok(out)
}

#[derive(Parser, Debug)]
#[command(name = "shapeinv", version, about = "Bayesian shape inversion of a penetrable scatterer")]
pub struct Cli {
    /// JSON run config; built-in defaults if omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed overriding every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    GenerateData,
    RunSmc {
        #[arg(long)]
        data: PathBuf,
    },
    VerifyBounds {
        #[arg(long)]
        shapes: Option<usize>,
        /// Comma-separated κ0 multipliers.
        #[arg(long, value_delimiter = ',')]
        multipliers: Option<Vec<f64>>,
    },
    ForwardSolve {
        /// Comma-separated coordinates `y`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y: Option<Vec<f64>>,
    },
    PriorSample {
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenerateData => "generate-data",
            Command::RunSmc { .. } => "run-smc",
            Command::VerifyBounds { .. } => "verify-bounds",
            Command::ForwardSolve { .. } => "forward-solve",
            Command::PriorSample { .. } => "prior-sample",
        }
    }
}

/// Process exit code for an error: 2 for bad inputs, 3 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        match e {
            Error::Config(_) | Error::Invalid(_) | Error::Mesh(_) | Error::Json(_) => 2,
            Error::Smc { source, .. } => exit_code(source),
            _ => 1,
        }
    }
}

/// Run a parsed command; returns the manifest path.
pub fn execute(cli: Cli) -> Result<PathBuf> {
    let start = Instant::now();
    if let Some(n) = cli.threads {
        // a second call in the same process fails harmlessly
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| match e {
            Error::Io(io) => cfg_err(format!("cannot read config {}: {io}", p.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.apply_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    if let Command::VerifyBounds { shapes, multipliers } = &cli.command {
        if let Some(n) = shapes {
            cfg.bounds.n_shapes = *n;
        }
        if let Some(m) = multipliers {
            cfg.bounds.kappa0_multipliers = m.clone();
        }
    }
    let ctx = Context::new(&cfg)?;
    let dir = ctx.config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let out = match &cli.command {
        Command::GenerateData => cmd_generate_data(&ctx, &dir)?,
        Command::RunSmc { data } => cmd_run_smc(&ctx, load_data(data)?, &dir)?,
        Command::VerifyBounds { .. } => cmd_verify_bounds(&ctx, &dir)?,
        Command::ForwardSolve { y } => cmd_forward_solve(&ctx, y.clone(), &dir)?,
        Command::PriorSample { count } => cmd_prior_sample(&ctx, *count, &dir)?,
    };
    write_manifest(cli.command.name(), &ctx.config, &out, &dir, start)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(m) => {
            println!("{}", m.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
