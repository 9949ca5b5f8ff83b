//! Surfaces (spheres and ellipsoids), quadrature meshes, Weingarten maps and
//! the tubular neighbourhood `x_Σ + tν(x_Σ)`.
//!
//! The Weingarten map follows `W ∂_jφ = −∂_jν` with the outward normal, so a
//! sphere of radius `R` has both eigenvalues equal to `−1/R` and the coarea
//! Jacobian is `det(1 − tW) = (1 + t/R)²`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

pub type Vec3 = [f64; 3];

/// Tolerance for a point to count as lying on the surface.
pub const ON_SURFACE_TOL: f64 = 1e-9;

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn axpy(s: f64, x: Vec3, y: Vec3) -> Vec3 {
    [y[0] + s * x[0], y[1] + s * x[1], y[2] + s * x[2]]
}

pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn scale(s: f64, a: Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

fn unit(a: Vec3) -> Vec3 {
    scale(1.0 / norm(a), a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Surface {
    Sphere { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
}

/// Which spherical-angle chart a Weingarten evaluation used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    /// Polar axis along z.
    Standard,
    /// Polar axis along x, used near the z-poles.
    Rotated,
}

/// Weingarten map in chart coordinates, `G⁻¹L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weingarten {
    pub chart: Chart,
    pub chart_point: [f64; 2],
    pub matrix: [[f64; 2]; 2],
    /// Ascending.
    pub eigenvalues: [f64; 2],
}

impl Weingarten {
    /// `det(1 − tW)`.
    pub fn coarea_factor(&self, t: f64) -> f64 {
        (1.0 - t * self.eigenvalues[0]) * (1.0 - t * self.eigenvalues[1])
    }
}

impl Surface {
    pub fn sphere(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {radius}")));
        }
        Ok(Self::Sphere { radius })
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        if [a, b, c].iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidArgument("ellipsoid semi-axes must be positive".into()));
        }
        Ok(Self::Ellipsoid { a, b, c })
    }

    pub fn semi_axes(&self) -> Vec3 {
        match *self {
            Self::Sphere { radius } => [radius; 3],
            Self::Ellipsoid { a, b, c } => [a, b, c],
        }
    }

    /// Surface area; closed form for spheres, 128×256 product Gauss rule
    /// otherwise.
    pub fn area(&self) -> f64 {
        match *self {
            Self::Sphere { radius } => 4.0 * PI * radius * radius,
            Self::Ellipsoid { .. } => {
                let gl = GaussLegendre::new(128);
                let np = 256;
                let mut total = 0.0;
                for (z, w) in gl.nodes.iter().zip(&gl.weights) {
                    let s = (1.0 - z * z).sqrt();
                    for j in 0..np {
                        let psi = 2.0 * PI * (j as f64 + 0.5) / np as f64;
                        total += w * (2.0 * PI / np as f64)
                            * self.area_element([s * psi.cos(), s * psi.sin(), *z]);
                    }
                }
                total
            }
        }
    }

    /// Area density of the map from the unit sphere, `abc √(X²/a² + Y²/b² + Z²/c²)`.
    fn area_element(&self, unit_point: Vec3) -> f64 {
        let [a, b, c] = self.semi_axes();
        let q = (unit_point[0] / a).powi(2) + (unit_point[1] / b).powi(2) + (unit_point[2] / c).powi(2);
        a * b * c * q.sqrt()
    }

    fn unit_to_surface(&self, p: Vec3) -> Vec3 {
        let ax = self.semi_axes();
        [ax[0] * p[0], ax[1] * p[1], ax[2] * p[2]]
    }

    /// Level-set residual `|√(Σ x_i²/a_i²) − 1| · min a_i`.
    pub fn residual(&self, x: Vec3) -> f64 {
        let ax = self.semi_axes();
        let q: f64 = (0..3).map(|i| (x[i] / ax[i]).powi(2)).sum();
        (q.sqrt() - 1.0).abs() * ax.iter().copied().fold(f64::MAX, f64::min)
    }

    fn check_on(&self, x: Vec3) -> Result<()> {
        let residual = self.residual(x);
        if residual > ON_SURFACE_TOL {
            return Err(Error::OffSurface { residual });
        }
        Ok(())
    }

    fn normal_unchecked(&self, x: Vec3) -> Vec3 {
        let ax = self.semi_axes();
        unit([x[0] / (ax[0] * ax[0]), x[1] / (ax[1] * ax[1]), x[2] / (ax[2] * ax[2])])
    }

    /// Outward unit normal.
    pub fn normal(&self, x: Vec3) -> Result<Vec3> {
        self.check_on(x)?;
        Ok(self.normal_unchecked(x))
    }

    /// Largest principal curvature, `max a_i / a_j²`.
    pub fn max_curvature(&self) -> f64 {
        let ax = self.semi_axes();
        let mut best: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    best = best.max(ax[i] / (ax[j] * ax[j]));
                }
            }
        }
        best
    }

    /// Default tubular width `0.25 / max |curvature|`.
    pub fn default_eta(&self) -> f64 {
        0.25 / self.max_curvature()
    }

    /// Chart map and its first and second derivatives at `(θ, ψ)`:
    /// `[φ, φ_θ, φ_ψ, φ_θθ, φ_θψ, φ_ψψ]`.
    pub fn chart_derivatives(&self, chart: Chart, theta: f64, psi: f64) -> [Vec3; 6] {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = psi.sin_cos();
        let local = [
            [st * cp, st * sp, ct],
            [ct * cp, ct * sp, -st],
            [-st * sp, st * cp, 0.0],
            [-st * cp, -st * sp, -ct],
            [-ct * sp, ct * cp, 0.0],
            [-st * cp, -st * sp, 0.0],
        ];
        local.map(|e| self.unit_to_surface(permute(chart, e)))
    }

    /// Chart coordinates of a surface point.
    pub fn chart_coordinates(&self, x: Vec3) -> (Chart, f64, f64) {
        let ax = self.semi_axes();
        let p = [x[0] / ax[0], x[1] / ax[1], x[2] / ax[2]];
        if p[2].abs() <= 0.9 {
            (Chart::Standard, p[2].clamp(-1.0, 1.0).acos(), p[1].atan2(p[0]))
        } else {
            (Chart::Rotated, p[0].clamp(-1.0, 1.0).acos(), p[2].atan2(p[1]))
        }
    }

    /// Weingarten map at a surface point.
    pub fn weingarten(&self, x: Vec3) -> Result<Weingarten> {
        self.check_on(x)?;
        let (chart, theta, psi) = self.chart_coordinates(x);
        let [p, pt, pp, ptt, ptp, ppp] = self.chart_derivatives(chart, theta, psi);
        let nu = self.normal_unchecked(p);
        let g = [[dot(pt, pt), dot(pt, pp)], [dot(pp, pt), dot(pp, pp)]];
        let l = [[dot(ptt, nu), dot(ptp, nu)], [dot(ptp, nu), dot(ppp, nu)]];
        let det_g = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let gi = [[g[1][1] / det_g, -g[0][1] / det_g], [-g[1][0] / det_g, g[0][0] / det_g]];
        let mut m = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = gi[r][0] * l[0][c] + gi[r][1] * l[1][c];
            }
        }
        // G⁻¹L is self-adjoint in the G inner product, so its eigenvalues are real.
        let tr = m[0][0] + m[1][1];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        Ok(Weingarten {
            chart,
            chart_point: [theta, psi],
            matrix: m,
            eigenvalues: [0.5 * tr - disc, 0.5 * tr + disc],
        })
    }

    /// Foot point and signed distance: `x = x_Σ + t ν(x_Σ)`.
    pub fn project(&self, x: Vec3) -> (Vec3, f64) {
        match *self {
            Self::Sphere { radius } => {
                let r = norm(x);
                let dir = if r > 0.0 { scale(1.0 / r, x) } else { [0.0, 0.0, 1.0] };
                (scale(radius, dir), r - radius)
            }
            Self::Ellipsoid { .. } => {
                // Foot point p_i = x_i a_i² / (a_i² + s); solve Σ p_i²/a_i² = 1 for s.
                let ax = self.semi_axes();
                let a2 = ax.map(|a| a * a);
                let f = |s: f64| -> f64 {
                    (0..3).map(|i| x[i] * x[i] * a2[i] / (a2[i] + s).powi(2)).sum::<f64>() - 1.0
                };
                let lo_bound = -a2.iter().copied().fold(f64::MAX, f64::min);
                let mut lo = lo_bound * (1.0 - 1e-15);
                let mut hi = norm(x) * ax.iter().copied().fold(0.0, f64::max) + 1.0;
                while f(hi) > 0.0 {
                    hi *= 2.0;
                }
                if f(lo) < 0.0 {
                    lo = lo_bound * (1.0 - 1e-15);
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                        break;
                    }
                }
                let s = 0.5 * (lo + hi);
                let p = [
                    x[0] * a2[0] / (a2[0] + s),
                    x[1] * a2[1] / (a2[1] + s),
                    x[2] * a2[2] / (a2[2] + s),
                ];
                let nu = self.normal_unchecked(p);
                (p, dot(sub(x, p), nu))
            }
        }
    }
}

fn permute(chart: Chart, e: Vec3) -> Vec3 {
    match chart {
        Chart::Standard => e,
        Chart::Rotated => [e[2], e[0], e[1]],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MeshKind {
    /// Fibonacci lattice of the unit sphere, mapped to the surface.
    Fibonacci { n: usize },
    /// Gauss–Legendre in cos θ times trapezoid in ψ.
    GaussProduct { n_theta: usize, n_psi: usize },
    /// Geodesic refinement of the icosahedron.
    Icosahedral { level: u32 },
}

/// Quadrature nodes on a surface with normals, weights and curvatures.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    surface: Surface,
    kind: MeshKind,
    nodes: Vec<Vec3>,
    normals: Vec<Vec3>,
    weights: Vec<f64>,
    curvatures: Vec<[f64; 2]>,
}

impl SurfaceMesh {
    /// Mesh from unit-sphere points and solid-angle weights.
    fn from_unit_sphere(surface: Surface, kind: MeshKind, points: Vec<Vec3>, solid: Vec<f64>) -> Result<Self> {
        let mut nodes = Vec::with_capacity(points.len());
        let mut normals = Vec::with_capacity(points.len());
        let mut weights = Vec::with_capacity(points.len());
        let mut curvatures = Vec::with_capacity(points.len());
        for (p, s) in points.into_iter().zip(solid) {
            let p = unit(p);
            let x = surface.unit_to_surface(p);
            nodes.push(x);
            normals.push(surface.normal_unchecked(x));
            weights.push(s * surface.area_element(p));
            curvatures.push(surface.weingarten(x)?.eigenvalues);
        }
        Ok(Self {
            surface,
            kind,
            nodes,
            normals,
            weights,
            curvatures,
        })
    }

    /// Fibonacci lattice with equal solid-angle weights `4π/n`.
    pub fn fibonacci(surface: Surface, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidArgument("Fibonacci mesh needs at least 4 nodes".into()));
        }
        let golden = PI * (3.0 - 5f64.sqrt());
        let points = (0..n)
            .map(|k| {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                let s = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                [s * phi.cos(), s * phi.sin(), z]
            })
            .collect();
        Self::from_unit_sphere(surface, MeshKind::Fibonacci { n }, points, vec![4.0 * PI / n as f64; n])
    }

    /// Product rule, exact for spherical polynomials of degree below
    /// `min(2 n_theta, n_psi)` on the sphere.
    pub fn gauss_product(surface: Surface, n_theta: usize, n_psi: usize) -> Result<Self> {
        if n_theta < 1 || n_psi < 3 {
            return Err(Error::InvalidArgument("product mesh is too small".into()));
        }
        let gl = GaussLegendre::new(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_psi);
        let mut solid = Vec::with_capacity(n_theta * n_psi);
        for (z, w) in gl.nodes.iter().zip(&gl.weights) {
            let s = (1.0 - z * z).sqrt();
            for j in 0..n_psi {
                let psi = 2.0 * PI * (j as f64 + 0.5) / n_psi as f64;
                points.push([s * psi.cos(), s * psi.sin(), *z]);
                solid.push(w * 2.0 * PI / n_psi as f64);
            }
        }
        Self::from_unit_sphere(surface, MeshKind::GaussProduct { n_theta, n_psi }, points, solid)
    }

    /// Icosahedral geodesic mesh with `10·4^level + 2` vertices; weights are
    /// one third of the incident spherical-triangle solid angles.
    pub fn icosahedral(surface: Surface, level: u32) -> Result<Self> {
        if level > 7 {
            return Err(Error::InvalidArgument("icosahedral level above 7 is too large".into()));
        }
        let (vertices, faces) = icosphere(level);
        let mut solid = vec![0.0; vertices.len()];
        for f in &faces {
            let (a, b, c) = (vertices[f[0]], vertices[f[1]], vertices[f[2]]);
            let num = dot(a, cross(b, c)).abs();
            let den = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
            let omega = 2.0 * num.atan2(den);
            for &v in f {
                solid[v] += omega / 3.0;
            }
        }
        Self::from_unit_sphere(surface, MeshKind::Icosahedral { level }, vertices, solid)
    }

    pub fn surface(&self) -> &Surface {
        &self.surface
    }

    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn curvatures(&self) -> &[[f64; 2]] {
        &self.curvatures
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `det(1 − tW)` at node `k`.
    pub fn coarea_factor(&self, k: usize, t: f64) -> f64 {
        let [l1, l2] = self.curvatures[k];
        (1.0 - t * l1) * (1.0 - t * l2)
    }

    /// Typical node spacing `√(area / N)`.
    pub fn spacing(&self) -> f64 {
        (self.total_weight() / self.len() as f64).sqrt()
    }

    /// CSV with columns node, x, y, z, nx, ny, nz, weight, lambda1, lambda2.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,x,y,z,nx,ny,nz,weight,lambda1,lambda2\n");
        for k in 0..self.len() {
            let (x, n, c) = (self.nodes[k], self.normals[k], self.curvatures[k]);
            writeln!(
                out,
                "{k},{},{},{},{},{},{},{},{},{}",
                x[0], x[1], x[2], n[0], n[1], n[2], self.weights[k], c[0], c[1]
            )
            .unwrap();
        }
        out
    }
}

fn icosphere(level: u32) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(unit)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = unit(scale(0.5, axpy(1.0, vertices[a], vertices[b])));
                vertices.push(m);
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let ab = midpoint(f[0], f[1], &mut vertices);
            let bc = midpoint(f[1], f[2], &mut vertices);
            let ca = midpoint(f[2], f[0], &mut vertices);
            next.push([f[0], ab, ca]);
            next.push([f[1], bc, ab]);
            next.push([f[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// The map `i(x_Σ, t) = x_Σ + tν(x_Σ)` for `|t| ≤ η`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubularMap {
    mesh: SurfaceMesh,
    eta: f64,
}

impl TubularMap {
    /// Requires `0 < η` and `det(1 − tW) > 0` for `|t| ≤ η` at every node.
    pub fn new(mesh: SurfaceMesh, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
        }
        let kmax = mesh
            .curvatures()
            .iter()
            .flat_map(|c| c.iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        if eta * kmax >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "eta = {eta} exceeds the focal distance 1/{kmax}"
            )));
        }
        Ok(Self { mesh, eta })
    }

    /// Tubular map with the default `η = 0.25 / max |curvature|`.
    pub fn with_default_eta(mesh: SurfaceMesh) -> Result<Self> {
        let eta = mesh.surface().default_eta();
        Self::new(mesh, eta)
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn check_eps(&self, eps: f64) -> Result<()> {
        if !(eps > 0.0 && eps <= self.eta) {
            return Err(Error::InvalidEpsilon { epsilon: eps, eta: self.eta });
        }
        Ok(())
    }

    /// Image of node `k` at height `t`.
    pub fn map(&self, k: usize, t: f64) -> Vec3 {
        axpy(t, self.mesh.normals[k], self.mesh.nodes[k])
    }

    /// Smallest distance between images of distinct nodes at each of the
    /// heights `−ε, 0, ε`.
    pub fn min_image_separation(&self, eps: f64) -> Result<f64> {
        self.check_eps(eps)?;
        let n = self.mesh.len();
        let mut best = f64::MAX;
        for t in [-eps, 0.0, eps] {
            let pts: Vec<Vec3> = (0..n).map(|k| self.map(k, t)).collect();
            for i in 0..n {
                for j in i + 1..n {
                    best = best.min(norm(sub(pts[i], pts[j])));
                }
            }
        }
        Ok(best)
    }

    /// `∫_{Ω_ε} f = ∫_Σ ∫_{−ε}^{ε} f(x_Σ + tν) det(1 − tW) dt dσ`, with a
    /// `t_nodes`-point Gauss rule in `t`.
    pub fn coarea_integrate<F: Fn(Vec3) -> f64>(&self, f: F, eps: f64, t_nodes: usize) -> Result<f64> {
        self.check_eps(eps)?;
        if t_nodes == 0 {
            return Err(Error::InvalidArgument("need at least one t-node".into()));
        }
        let gl = GaussLegendre::new(t_nodes);
        let mut total = 0.0;
        for k in 0..self.mesh.len() {
            let mut inner = 0.0;
            for (s, w) in gl.nodes.iter().zip(&gl.weights) {
                let t = eps * s;
                inner += w * f(self.map(k, t)) * self.mesh.coarea_factor(k, t);
            }
            total += self.mesh.weights[k] * eps * inner;
        }
        Ok(total)
    }

    /// `∫_{Σ_t} f dσ_t` through the coarea weights.
    pub fn level_integrate<F: Fn(Vec3) -> f64>(&self, f: F, t: f64) -> Result<f64> {
        if t.abs() > self.eta {
            return Err(Error::InvalidEpsilon { epsilon: t.abs(), eta: self.eta });
        }
        Ok((0..self.mesh.len())
            .map(|k| self.mesh.weights[k] * self.mesh.coarea_factor(k, t) * f(self.map(k, t)))
            .sum())
    }

    /// Estimates `σ_t(B_r(x)) / r²` over `centers` sampled nodes of `Σ_t`.
    pub fn measure_growth_audit(&self, t: f64, radii: &[f64], centers: usize) -> Result<GrowthReport> {
        if t.abs() > self.eta {
            return Err(Error::InvalidEpsilon { epsilon: t.abs(), eta: self.eta });
        }
        let n = self.mesh.len();
        let h = self.mesh.spacing();
        let stride = (n / centers.clamp(1, n)).max(1);
        let picks: Vec<usize> = (0..n).step_by(stride).take(centers.max(1)).collect();
        let images: Vec<Vec3> = (0..n).map(|k| self.map(k, t)).collect();
        let area_t: Vec<f64> = (0..n)
            .map(|k| self.mesh.weights[k] * self.mesh.coarea_factor(k, t))
            .collect();
        let exact = match self.mesh.surface {
            Surface::Sphere { radius } => Some(radius + t),
            _ => None,
        };
        let mut rows = Vec::with_capacity(radii.len());
        for &r in radii {
            if r < 2.0 * h {
                rows.push(GrowthRow {
                    radius: r,
                    min_ratio: None,
                    max_ratio: None,
                    exact_ratio: None,
                    below_resolution: true,
                });
                continue;
            }
            let (mut lo, mut hi) = (f64::MAX, 0.0f64);
            for &c in &picks {
                // Each node covers a disc of diameter ≈ h; its overlap with
                // the ball is ramped linearly across the ball's boundary.
                let mass: f64 = (0..n)
                    .map(|k| {
                        let d = norm(sub(images[k], images[c]));
                        area_t[k] * ((r - d) / h + 0.5).clamp(0.0, 1.0)
                    })
                    .sum();
                let ratio = mass / (r * r);
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
            let exact_ratio = exact.map(|rho| sphere_ball_measure(rho, r) / (r * r));
            rows.push(GrowthRow {
                radius: r,
                min_ratio: Some(lo),
                max_ratio: Some(hi),
                exact_ratio,
                below_resolution: false,
            });
        }
        Ok(GrowthReport {
            t,
            centers: picks.len(),
            mesh_spacing: h,
            rows,
        })
    }
}

/// `σ(B_r(x))` for `x` on a sphere of radius `ρ`: `πr²` up to `r = 2ρ`.
pub fn sphere_ball_measure(rho: f64, r: f64) -> f64 {
    if r >= 2.0 * rho {
        4.0 * PI * rho * rho
    } else {
        PI * r * r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub radius: f64,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub exact_ratio: Option<f64>,
    pub below_resolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub t: f64,
    pub centers: usize,
    pub mesh_spacing: f64,
    pub rows: Vec<GrowthRow>,
}

impl GrowthReport {
    /// Smallest and largest ratio over all resolved radii.
    pub fn constants(&self) -> Option<(f64, f64)> {
        let lo = self.rows.iter().filter_map(|r| r.min_ratio).reduce(f64::min)?;
        let hi = self.rows.iter().filter_map(|r| r.max_ratio).reduce(f64::max)?;
        Some((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_sphere() -> Surface {
        Surface::sphere(1.0).unwrap()
    }

    /// Weingarten eigenvalues from central differences of ν in the chart.
    fn fd_weingarten(s: &Surface, chart: Chart, theta: f64, psi: f64) -> [f64; 2] {
        let h = 1e-5;
        let nu = |th: f64, ps: f64| {
            let p = s.chart_derivatives(chart, th, ps)[0];
            s.normal_unchecked(p)
        };
        let d = s.chart_derivatives(chart, theta, psi);
        let (pt, pp) = (d[1], d[2]);
        let dnt = scale(0.5 / h, sub(nu(theta + h, psi), nu(theta - h, psi)));
        let dnp = scale(0.5 / h, sub(nu(theta, psi + h), nu(theta, psi - h)));
        // Solve W [pt pp] = −[dnt dnp] in the tangent basis via normal equations.
        let g = [[dot(pt, pt), dot(pt, pp)], [dot(pp, pt), dot(pp, pp)]];
        let b = [[-dot(pt, dnt), -dot(pt, dnp)], [-dot(pp, dnt), -dot(pp, dnp)]];
        let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
        let gi = [[g[1][1] / det, -g[0][1] / det], [-g[1][0] / det, g[0][0] / det]];
        let mut m = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                m[r][c] = gi[r][0] * b[0][c] + gi[r][1] * b[1][c];
            }
        }
        let tr = m[0][0] + m[1][1];
        let dt = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let disc = (0.25 * tr * tr - dt).max(0.0).sqrt();
        [0.5 * tr - disc, 0.5 * tr + disc]
    }

    #[test]
    fn sphere_curvatures_are_minus_inverse_radius() {
        let s = Surface::sphere(2.0).unwrap();
        for x in [[2.0, 0.0, 0.0], [0.0, 0.0, -2.0], [1.2, -1.2, 2f64.sqrt() * 0.4 * 2f64.sqrt() * 1.0]] {
            let x = scale(2.0 / norm(x), x);
            let w = s.weingarten(x).unwrap();
            assert_relative_eq!(w.eigenvalues[0], -0.5, epsilon = 1e-12);
            assert_relative_eq!(w.eigenvalues[1], -0.5, epsilon = 1e-12);
            assert_relative_eq!(w.coarea_factor(0.3), (1.0 + 0.15f64).powi(2), epsilon = 1e-12);
            assert_eq!(w.coarea_factor(0.0), 1.0);
        }
    }

    #[test]
    fn ellipsoid_curvatures_match_finite_differences() {
        let s = Surface::ellipsoid(2.0, 1.0, 1.0).unwrap();
        let w = s.weingarten([2.0, 0.0, 0.0]).unwrap();
        let fd = fd_weingarten(&s, w.chart, w.chart_point[0], w.chart_point[1]);
        for k in 0..2 {
            assert!((w.eigenvalues[k] - fd[k]).abs() < 1e-5);
            assert!((w.eigenvalues[k] + 2.0).abs() < 1e-12);
        }
        let w = s.weingarten([0.0, 1.0, 0.0]).unwrap();
        let fd = fd_weingarten(&s, w.chart, w.chart_point[0], w.chart_point[1]);
        assert!((w.eigenvalues[0] - fd[0]).abs() < 1e-5 && (w.eigenvalues[1] - fd[1]).abs() < 1e-5);
        assert_relative_eq!(w.eigenvalues[0], -1.0, epsilon = 1e-12);
        assert_relative_eq!(w.eigenvalues[1], -0.25, epsilon = 1e-12);
    }

    #[test]
    fn off_surface_points_are_rejected() {
        let s = unit_sphere();
        assert!(matches!(s.weingarten([1.1, 0.0, 0.0]), Err(Error::OffSurface { .. })));
        assert!(s.normal([0.0, 0.0, 0.5]).is_err());
    }

    #[test]
    fn mesh_weights_sum_to_area() {
        let e = Surface::ellipsoid(1.5, 1.0, 0.8).unwrap();
        for mesh in [
            SurfaceMesh::fibonacci(unit_sphere(), 500).unwrap(),
            SurfaceMesh::icosahedral(unit_sphere(), 3).unwrap(),
            SurfaceMesh::gauss_product(unit_sphere(), 12, 24).unwrap(),
        ] {
            assert_relative_eq!(mesh.total_weight(), 4.0 * PI, epsilon = 1e-12);
            assert!(mesh.weights().iter().all(|w| *w > 0.0));
        }
        let product = SurfaceMesh::gauss_product(e, 48, 96).unwrap();
        assert_relative_eq!(product.total_weight(), e.area(), max_relative = 1e-10);
        let fib = SurfaceMesh::fibonacci(e, 4000).unwrap();
        assert_relative_eq!(fib.total_weight(), e.area(), max_relative = 1e-3);
        assert_eq!(SurfaceMesh::icosahedral(unit_sphere(), 2).unwrap().len(), 162);
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let mesh = SurfaceMesh::fibonacci(Surface::ellipsoid(2.0, 1.0, 0.5).unwrap(), 300).unwrap();
        for (x, n) in mesh.nodes().iter().zip(mesh.normals()) {
            assert_relative_eq!(norm(*n), 1.0, epsilon = 1e-14);
            assert!(dot(*x, *n) > 0.0);
        }
    }

    #[test]
    fn shell_volume_and_moment() {
        let mesh = SurfaceMesh::fibonacci(unit_sphere(), 2048).unwrap();
        let tm = TubularMap::new(mesh, 0.2).unwrap();
        let vol = tm.coarea_integrate(|_| 1.0, 0.1, 16).unwrap();
        let exact = 4.0 * PI / 3.0 * (1.1f64.powi(3) - 0.9f64.powi(3));
        assert!((vol - exact).abs() / exact < 1e-6);
        assert!((vol - 2.52165).abs() < 1e-5);
        let m2 = tm.coarea_integrate(|x| dot(x, x), 0.1, 16).unwrap();
        let exact = 4.0 * PI * (1.1f64.powi(5) - 0.9f64.powi(5)) / 5.0;
        assert!((m2 - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn thin_shell_volume_approaches_twice_the_area() {
        let tm = TubularMap::new(SurfaceMesh::fibonacci(unit_sphere(), 256).unwrap(), 0.25).unwrap();
        let eps = 1e-5;
        let v = tm.coarea_integrate(|_| 1.0, eps, 4).unwrap();
        assert_relative_eq!(v / (2.0 * eps), 4.0 * PI, max_relative = 1e-9);
        assert!(tm.coarea_integrate(|_| 1.0, 0.3, 4).is_err());
    }

    #[test]
    fn ellipsoid_volume_by_coarea() {
        // Volume between the parallel surfaces at ±ε equals
        // ∫_Σ (2ε + (2/3)ε³ K) dσ; compare with the Steiner formula
        // 2ε·area + (2/3)ε³·4π (Gauss–Bonnet: ∫K = 4π).
        let e = Surface::ellipsoid(1.4, 1.0, 0.9).unwrap();
        let tm = TubularMap::with_default_eta(SurfaceMesh::gauss_product(e, 48, 96).unwrap()).unwrap();
        let eps = 0.9 * tm.eta();
        let vol = tm.coarea_integrate(|_| 1.0, eps, 8).unwrap();
        let steiner = 2.0 * eps * e.area() + 2.0 / 3.0 * eps.powi(3) * 4.0 * PI;
        assert!((vol - steiner).abs() / steiner < 1e-5);
    }

    #[test]
    fn level_integral_matches_independent_mesh() {
        let t = 0.15;
        let tm = TubularMap::new(SurfaceMesh::fibonacci(unit_sphere(), 1024).unwrap(), 0.2).unwrap();
        let f = |x: Vec3| 1.0 + x[2] * x[2] + 0.5 * x[0];
        let via_coarea = tm.level_integrate(f, t).unwrap();
        let direct_mesh = SurfaceMesh::fibonacci(Surface::sphere(1.0 + t).unwrap(), 1024).unwrap();
        let direct: f64 = direct_mesh
            .nodes()
            .iter()
            .zip(direct_mesh.weights())
            .map(|(x, w)| w * f(*x))
            .sum();
        assert!((via_coarea - direct).abs() / direct < 1e-4);
    }

    #[test]
    fn tubular_map_is_injective_and_projects_back() {
        let e = Surface::ellipsoid(2.0, 1.0, 1.0).unwrap();
        let mesh = SurfaceMesh::fibonacci(e, 400).unwrap();
        let tm = TubularMap::with_default_eta(mesh).unwrap();
        assert_relative_eq!(tm.eta(), 0.125, epsilon = 1e-15);
        assert!(tm.min_image_separation(tm.eta()).unwrap() > 0.0);
        for k in (0..400).step_by(37) {
            for t in [-tm.eta(), 0.0, 0.5 * tm.eta()] {
                let (p, s) = e.project(tm.map(k, t));
                assert!(norm(sub(p, tm.mesh().nodes()[k])) < 1e-10);
                assert!((s - t).abs() < 1e-10);
            }
            assert!(tm.mesh().coarea_factor(k, tm.eta()) > 0.0);
            assert!(tm.mesh().coarea_factor(k, -tm.eta()) > 0.0);
        }
        assert!(TubularMap::new(SurfaceMesh::fibonacci(e, 50).unwrap(), 0.6).is_err());
    }

    #[test]
    fn measure_growth_on_the_sphere() {
        let tm = TubularMap::new(SurfaceMesh::fibonacci(unit_sphere(), 2048).unwrap(), 0.25).unwrap();
        assert_relative_eq!(sphere_ball_measure(1.0, 5.0), 4.0 * PI);
        let mut extremes = Vec::new();
        for t in [-0.25, 0.0, 0.25] {
            let rep = tm.measure_growth_audit(t, &[0.01, 0.5, 1.0], 16).unwrap();
            assert!(rep.rows[0].below_resolution);
            for row in &rep.rows[1..] {
                let exact = row.exact_ratio.unwrap();
                assert_relative_eq!(exact, PI, epsilon = 1e-15);
                assert!((row.min_ratio.unwrap() - exact).abs() / exact < 0.05);
                assert!((row.max_ratio.unwrap() - exact).abs() / exact < 0.05);
            }
            extremes.push(rep.constants().unwrap());
        }
        let lo = extremes.iter().map(|e| e.0).fold(f64::MAX, f64::min);
        let hi = extremes.iter().map(|e| e.1).fold(0.0, f64::max);
        assert!(hi / lo < 1.2);
        // A ball larger than the whole level set covers all of it.
        let rep = tm.measure_growth_audit(0.0, &[5.0], 4).unwrap();
        assert_relative_eq!(rep.rows[0].min_ratio.unwrap() * 25.0, 4.0 * PI, max_relative = 1e-12);
    }

    #[test]
    fn csv_export_has_one_row_per_node() {
        let mesh = SurfaceMesh::icosahedral(unit_sphere(), 1).unwrap();
        let csv = mesh.to_csv();
        assert_eq!(csv.lines().count(), mesh.len() + 1);
        assert!(csv.starts_with("node,x,y,z,nx,ny,nz,weight,lambda1,lambda2"));
    }

    proptest! {
        #[test]
        fn ellipsoid_weingarten_agrees_with_differences(
            a in 0.6f64..2.5, b in 0.6f64..2.5, c in 0.6f64..2.5,
            theta in 0.05f64..3.09, psi in -3.1f64..3.1,
        ) {
            let s = Surface::ellipsoid(a, b, c).unwrap();
            let x = s.chart_derivatives(Chart::Standard, theta, psi)[0];
            let w = s.weingarten(x).unwrap();
            let fd = fd_weingarten(&s, w.chart, w.chart_point[0], w.chart_point[1]);
            let bound = s.max_curvature();
            for k in 0..2 {
                prop_assert!((w.eigenvalues[k] - fd[k]).abs() < 1e-5 * (1.0 + bound));
                prop_assert!(w.eigenvalues[k] < 0.0 && -w.eigenvalues[k] <= bound * (1.0 + 1e-12));
            }
        }
    }
}
