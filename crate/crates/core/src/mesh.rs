//! Structured polar triangulation of the disk `B_{R_PML}`.
//!
//! Rings are placed so that every anchor radius (mapping breakpoints, the
//! nominal interface, the PML start and the outer boundary) is a ring. Each
//! ring carries `max(8, ⌈2πρ/h⌉)` equally spaced vertices starting at angle 0;
//! neighbouring rings are stitched by merging their angle sequences, which
//! splits every quad into two triangles when the counts agree. The disk
//! inside the first ring is a fan around the origin.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used to turn frequencies into wavenumbers.
pub const SPEED_OF_LIGHT: f64 = 3e10;

/// `κ0 = 2πf/c`.
pub fn wavenumber(f: f64, c: f64) -> f64 {
    2.0 * PI * f / c
}

/// Mesh size that keeps `h² κ0³` fixed relative to a reference `(h_ref, f_ref)`.
pub fn pollution_mesh_size(h_ref: f64, f_ref: f64, f: f64, c: f64) -> f64 {
    h_ref * (wavenumber(f_ref, c) / wavenumber(f, c)).powf(1.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    /// Maximum ring spacing and arc spacing.
    pub h: f64,
    /// Inner breakpoint of the domain mapping.
    pub rho_a: f64,
    /// Nominal interface radius.
    pub r0: f64,
    /// Outer breakpoint of the domain mapping.
    pub r_map: f64,
    /// PML start.
    pub r: f64,
    /// Outer boundary.
    pub r_pml: f64,
}

impl MeshConfig {
    pub fn new(h: f64, rho_a: f64, r0: f64, r_map: f64, r: f64, r_pml: f64) -> Result<Self> {
        let c = Self {
            h,
            rho_a,
            r0,
            r_map,
            r,
            r_pml,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn anchors(&self) -> [f64; 5] {
        [self.rho_a, self.r0, self.r_map, self.r, self.r_pml]
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Mesh(format!("mesh size must be > 0, got {}", self.h)));
        }
        let names = ["rho_a", "r0", "R_map", "R", "R_PML"];
        let a = self.anchors();
        if !(a[0] > 0.0) {
            return Err(Error::Mesh(format!("rho_a must be > 0, got {}", a[0])));
        }
        for k in 0..4 {
            if !(a[k] < a[k + 1]) {
                return Err(Error::Mesh(format!(
                    "anchors must increase: {} = {} is not below {} = {}",
                    names[k],
                    a[k],
                    names[k + 1],
                    a[k + 1]
                )));
            }
            if a[k + 1] - a[k] < 0.5 * self.h {
                return Err(Error::Mesh(format!(
                    "h = {} too large to fit a ring between {} = {} and {} = {}",
                    self.h,
                    names[k],
                    a[k],
                    names[k + 1],
                    a[k + 1]
                )));
            }
        }
        Ok(())
    }

    /// Copy with a different mesh size.
    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..*self }
    }
}

/// Material/treatment region of a triangle, by reference radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    /// Inside the nominal interface `ρ < r0`.
    Interior,
    /// `r0 ≤ ρ < R_map`: outer medium, moved by the domain mapping.
    Mapped,
    /// `R_map ≤ ρ < R`.
    Exterior,
    /// `R ≤ ρ ≤ R_PML`.
    Pml,
}

impl Region {
    pub fn code(self) -> u8 {
        match self {
            Region::Interior => 0,
            Region::Mapped => 1,
            Region::Exterior => 2,
            Region::Pml => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    pub radius: f64,
    pub first: usize,
    pub count: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub config: MeshConfig,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    /// Vertices on `ρ = R_PML`.
    pub boundary: Vec<bool>,
    /// Rings in increasing radius; the origin is vertex 0 and not a ring.
    pub rings: Vec<Ring>,
    index: GridIndex,
}

/// Ring radii from 0 (exclusive) to `R_PML`, with every anchor included.
fn ring_radii(c: &MeshConfig) -> Vec<f64> {
    let mut radii = Vec::new();
    let mut lo = 0.0;
    for a in c.anchors() {
        let n = ((a - lo) / c.h - 1e-9).ceil().max(1.0) as usize;
        for i in 1..n {
            radii.push(lo + (a - lo) * i as f64 / n as f64);
        }
        radii.push(a);
        lo = a;
    }
    radii
}

fn ring_count(radius: f64, h: f64) -> usize {
    ((2.0 * PI * radius / h - 1e-9).ceil() as usize).max(8)
}

/// Twice the signed area of `(a, b, c)`.
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

pub fn build_disk_mesh(config: &MeshConfig) -> Result<Mesh> {
    config.validate()?;
    let radii = ring_radii(config);
    let mut vertices = vec![[0.0, 0.0]];
    let mut rings = Vec::with_capacity(radii.len());
    let mut prev = 0;
    for &rho in &radii {
        let count = ring_count(rho, config.h).max(prev);
        prev = count;
        let first = vertices.len();
        for k in 0..count {
            let t = 2.0 * PI * k as f64 / count as f64;
            vertices.push([rho * t.cos(), rho * t.sin()]);
        }
        rings.push(Ring {
            radius: rho,
            first,
            count,
        });
    }

    let region_of = |mid: f64| {
        if mid < config.r0 {
            Region::Interior
        } else if mid < config.r_map {
            Region::Mapped
        } else if mid < config.r {
            Region::Exterior
        } else {
            Region::Pml
        }
    };

    let mut triangles = Vec::new();
    let mut regions = Vec::new();
    let mut push = |tri: [usize; 3], reg: Region, verts: &Vec<[f64; 2]>| {
        let [a, b, c] = tri;
        if orient(verts[a], verts[b], verts[c]) > 0.0 {
            triangles.push([a, b, c]);
        } else {
            triangles.push([a, c, b]);
        }
        regions.push(reg);
    };

    let r1 = rings[0];
    for k in 0..r1.count {
        let a = r1.first + k;
        let b = r1.first + (k + 1) % r1.count;
        push([0, a, b], region_of(0.5 * r1.radius), &vertices);
    }
    for w in rings.windows(2) {
        let (ia, ib) = (w[0], w[1]);
        let reg = region_of(0.5 * (ia.radius + ib.radius));
        let (na, nb) = (ia.count, ib.count);
        let va = |i: usize| ia.first + i % na;
        let vb = |j: usize| ib.first + j % nb;
        let (mut i, mut j) = (0usize, 0usize);
        while i < na || j < nb {
            // advance along the ring whose next vertex has the smaller angle
            let advance_a = j == nb || (i < na && (i + 1) * nb <= (j + 1) * na);
            if advance_a {
                push([va(i), va(i + 1), vb(j)], reg, &vertices);
                i += 1;
            } else {
                push([va(i), vb(j), vb(j + 1)], reg, &vertices);
                j += 1;
            }
        }
    }

    let outer = *rings.last().expect("at least one ring");
    let mut boundary = vec![false; vertices.len()];
    for b in boundary.iter_mut().skip(outer.first).take(outer.count) {
        *b = true;
    }
    let index = GridIndex::new(&vertices, &triangles, config.r_pml, config.h);
    Ok(Mesh {
        config: *config,
        vertices,
        triangles,
        regions,
        boundary,
        rings,
        index,
    })
}

/// Uniform bucket grid over the bounding box of the disk.
#[derive(Clone, Debug)]
struct GridIndex {
    lo: f64,
    cell: f64,
    n: usize,
    buckets: Vec<Vec<u32>>,
}

impl GridIndex {
    fn new(vertices: &[[f64; 2]], triangles: &[[usize; 3]], extent: f64, h: f64) -> Self {
        let lo = -extent * (1.0 + 1e-9);
        let cell = 2.0 * h;
        let n = ((2.0 * -lo) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); n * n];
        let clamp = |v: f64| (((v - lo) / cell).floor().max(0.0) as usize).min(n - 1);
        for (t, tri) in triangles.iter().enumerate() {
            let xs = tri.map(|v| vertices[v][0]);
            let ys = tri.map(|v| vertices[v][1]);
            let (x0, x1) = (clamp(xs.iter().cloned().fold(f64::MAX, f64::min)), clamp(xs.iter().cloned().fold(f64::MIN, f64::max)));
            let (y0, y1) = (clamp(ys.iter().cloned().fold(f64::MAX, f64::min)), clamp(ys.iter().cloned().fold(f64::MIN, f64::max)));
            for cx in x0..=x1 {
                for cy in y0..=y1 {
                    buckets[cy * n + cx].push(t as u32);
                }
            }
        }
        Self {
            lo,
            cell,
            n,
            buckets,
        }
    }

    fn bucket(&self, x: [f64; 2]) -> Option<&[u32]> {
        let fx = ((x[0] - self.lo) / self.cell).floor();
        let fy = ((x[1] - self.lo) / self.cell).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.n as f64 || fy >= self.n as f64 {
            return None;
        }
        Some(&self.buckets[fy as usize * self.n + fx as usize])
    }
}

/// Barycentric coordinates of `x` in triangle `(a, b, c)`.
pub fn barycentric(a: [f64; 2], b: [f64; 2], c: [f64; 2], x: [f64; 2]) -> [f64; 3] {
    let det = orient(a, b, c);
    let l1 = orient(x, b, c) / det;
    let l2 = orient(a, x, c) / det;
    [l1, l2, 1.0 - l1 - l2]
}

impl Mesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * orient(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangle_coords(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Triangle containing `x` (lowest id on shared edges) and barycentric weights.
    pub fn locate_point(&self, x: [f64; 2]) -> Result<(usize, [f64; 3])> {
        const TOL: f64 = 1e-12;
        let cands = self
            .index
            .bucket(x)
            .ok_or_else(|| Error::Mesh(format!("point ({}, {}) lies outside the mesh", x[0], x[1])))?;
        for &t in cands {
            let [a, b, c] = self.triangle_coords(t as usize);
            let l = barycentric(a, b, c, x);
            if l.iter().all(|&v| v >= -TOL) {
                let l = l.map(|v| v.max(0.0));
                let s = l[0] + l[1] + l[2];
                return Ok((t as usize, l.map(|v| v / s)));
            }
        }
        Err(Error::Mesh(format!("point ({}, {}) lies outside the mesh", x[0], x[1])))
    }

    /// Number of distinct edges.
    pub fn num_edges(&self) -> usize {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges.len()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        let mut m = f64::MAX;
        for t in 0..self.num_triangles() {
            let p = self.triangle_coords(t);
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1])
                    / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
                m = m.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        m
    }

    /// Ring whose radius equals `radius` to relative 1e-12, if any.
    pub fn ring_at(&self, radius: f64) -> Option<&Ring> {
        self.rings
            .iter()
            .find(|r| (r.radius - radius).abs() <= 1e-12 * radius)
    }

    /// Write vertices as `x y` lines and triangles as `i j k tag` lines
    /// (tag: 0 interior, 1 mapped, 2 exterior, 3 PML).
    pub fn export<W: Write, V: Write>(&self, mut vertices: W, mut triangles: V) -> Result<()> {
        for v in &self.vertices {
            writeln!(vertices, "{:.16e} {:.16e}", v[0], v[1])?;
        }
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            writeln!(triangles, "{} {} {} {}", t[0], t[1], t[2], r.code())?;
        }
        Ok(())
    }

    /// [`Mesh::export`] into `<dir>/<stem>.node` and `<dir>/<stem>.ele`.
    pub fn export_files(&self, dir: &Path, stem: &str) -> Result<()> {
        let v = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.node")))?);
        let t = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("{stem}.ele")))?);
        self.export(v, t)
    }
}
