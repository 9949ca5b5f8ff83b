//! `Φᵃ(G, g)`, the principal-value operator `C_σᵃ`, and the Plemelj check.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{gradient_stencils, sphere_radius};
use super::sphere::sphere_moment;
use super::volume::{free_resolvent, AmbientField};
use super::{from_points, to_points, BlockRows, OperatorLabel, ShellOperator};
use crate::dirac_algebra::{phi_element, DiracElement, SpectralParameter};
use crate::error::{Error, Result};
use crate::geometry::{norm, sub, SurfaceMesh, Vec3};
use crate::quadrature::GaussLegendre;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A smooth density on the surface, given pointwise.
pub type Density = dyn Fn(Vec3) -> [C64; 4] + Sync;

/// Offsets `h, 2h, 4h` for the one-sided limits.
pub const DEFAULT_OFFSETS: [f64; 3] = [0.0125, 0.025, 0.05];

/// `Φᵃ(G, g)(x)` for `x` off the surface: the mesh quadrature of the single
/// layer plus, when `volume` is given, `(H − a)⁻¹G` from the volume grid.
/// Points closer to the surface than the mesh spacing are refused.
pub fn layer_potential(
    sp: &SpectralParameter,
    mesh: &SurfaceMesh,
    volume: Option<&AmbientField>,
    g: &[[C64; 4]],
    x: Vec3,
) -> Result<[C64; 4]> {
    if g.len() != mesh.len() {
        return Err(Error::InvalidArgument("density length differs from the mesh size".into()));
    }
    let guard = mesh.spacing();
    let distance = mesh.surface().project(x).1.abs();
    if distance < guard {
        return Err(Error::PointTooCloseToSurface { distance, guard });
    }
    let mut acc = match volume {
        Some(field) => free_resolvent(sp, field, &[x])?[0],
        None => [C64::new(0.0, 0.0); 4],
    };
    for ((y, w), gj) in mesh.nodes().iter().zip(mesh.weights()).zip(g) {
        let v = phi_element(sp, sub(x, *y))?.apply(gj);
        for k in 0..4 {
            acc[k] += v[k] * *w;
        }
    }
    Ok(acc)
}

struct CSigmaRows {
    sp: SpectralParameter,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    pv: Vec<DiracElement>,
    cell: Vec<f64>,
    stencils: Vec<Vec<(usize, Vec3)>>,
}

impl BlockRows for CSigmaRows {
    fn rows(&self) -> usize {
        self.nodes.len()
    }

    fn cols(&self) -> usize {
        self.nodes.len()
    }

    fn row(&self, i: usize, out: &mut Vec<(usize, DiracElement)>) {
        let x = self.nodes[i];
        let mut diag = self.pv[i];
        for (j, (y, w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            if j == i {
                continue;
            }
            let e = phi_element(&self.sp, sub(x, *y))
                .expect("distinct mesh nodes")
                .scale(C64::from(*w));
            diag = diag - e;
            out.push((j, e));
        }
        let c = -0.25 * I * self.cell[i];
        for &(k, v) in &self.stencils[i] {
            let e = DiracElement::alpha_dot(v).scale(c);
            diag = diag - e;
            out.push((k, e));
        }
        out.push((i, diag));
    }
}

/// `C_σᵃ` on a spherical mesh (`4N × 4N`): the closed-form principal value
/// of the frozen density, the mesh sum of `φ(x_i − y_j)(g_j − g_i)`, and the
/// self-cell term `−(i/4)ρ_c α·∇g(x_i)` with `ρ_c = √(w_i/π)`.
pub fn cauchy_sigma(sp: &SpectralParameter, mesh: &SurfaceMesh) -> Result<ShellOperator> {
    let radius = sphere_radius(mesh)?;
    let nodes = mesh.nodes().to_vec();
    let rows = CSigmaRows {
        sp: *sp,
        pv: nodes.iter().map(|x| sphere_moment(sp, *x, radius)).collect(),
        cell: mesh.weights().iter().map(|w| (w / PI).sqrt()).collect(),
        weights: mesh.weights().to_vec(),
        stencils: gradient_stencils(mesh),
        nodes,
    };
    let w = Arc::new(mesh.weights().to_vec());
    Ok(ShellOperator::new(OperatorLabel::CSigma, *sp, Arc::new(rows), w.clone(), w))
}

/// Lagrange weights extrapolating values at `offsets` to zero.
pub fn extrapolation_weights(offsets: &[f64]) -> Vec<f64> {
    (0..offsets.len())
        .map(|k| {
            offsets
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != k)
                .map(|(_, h)| h / (h - offsets[k]))
                .product()
        })
        .collect()
}

/// `Φᵃ(0, g)(x₀ + σν)` for `x₀` on the sphere `|y| = R`, by Gauss rules in
/// the polar angle about `x₀` (graded towards `x₀` at the scale `|σ|`) and
/// the trapezoid rule in azimuth. Independent of any mesh.
fn polar_reference(sp: &SpectralParameter, radius: f64, x0: Vec3, sigma: f64, densities: &[&Density]) -> Vec<[C64; 4]> {
    const ORDER: usize = 12;
    const AZIMUTH: usize = 40;
    let gl = GaussLegendre::new(ORDER);
    let n = [x0[0] / radius, x0[1] / radius, x0[2] / radius];
    let seed = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = {
        let c = crate::geometry::cross(n, seed);
        let l = norm(c);
        [c[0] / l, c[1] / l, c[2] / l]
    };
    let e2 = crate::geometry::cross(n, e1);
    let z = [x0[0] + sigma * n[0], x0[1] + sigma * n[1], x0[2] + sigma * n[2]];
    let scale = (sigma.abs() / radius).max(1e-8);
    let mut edges = vec![0.0];
    let mut th = 0.25 * scale;
    while th < 0.5 {
        edges.push(th);
        th *= 2.0;
    }
    let start = *edges.last().unwrap();
    let panels = ((PI - start) / 0.25).ceil() as usize;
    for k in 1..=panels {
        edges.push(start + (PI - start) * k as f64 / panels as f64);
    }
    let mut acc = vec![[C64::new(0.0, 0.0); 4]; densities.len()];
    for w in edges.windows(2) {
        let (ts, wts) = gl.on(w[0], w[1]);
        for (t, wt) in ts.iter().zip(&wts) {
            let (st, ct) = t.sin_cos();
            let base = wt * radius * radius * st * 2.0 * PI / AZIMUTH as f64;
            for j in 0..AZIMUTH {
                let p = 2.0 * PI * (j as f64 + 0.5) / AZIMUTH as f64;
                let (sp_, cp) = p.sin_cos();
                let mut y = [0.0; 3];
                for k in 0..3 {
                    y[k] = radius * (ct * n[k] + st * (cp * e1[k] + sp_ * e2[k]));
                }
                let e = phi_element(sp, sub(z, y)).expect("off-surface point").scale(C64::from(base));
                for (a, g) in acc.iter_mut().zip(densities) {
                    let v = e.apply(&g(y));
                    for k in 0..4 {
                        a[k] += v[k];
                    }
                }
            }
        }
    }
    acc
}

/// Three smooth test densities: a constant spinor, a linear one and a
/// non-polynomial one.
pub fn standard_densities() -> [fn(Vec3) -> [C64; 4]; 3] {
    fn constant(_: Vec3) -> [C64; 4] {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
    }
    fn linear(y: Vec3) -> [C64; 4] {
        [C64::new(y[2], 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(y[0], y[1])]
    }
    fn smooth(y: Vec3) -> [C64; 4] {
        [
            C64::new(0.0, 0.0),
            C64::new(y[0].exp(), 0.0),
            C64::new(0.0, y[1] * y[2]),
            C64::new(y[2].cos(), 0.5 * y[0]),
        ]
    }
    [constant, linear, smooth]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlemeljDensityReport {
    /// `max_i |C₊g − (−(i/2)(α·ν)g + C_σ g)| / max_i |C₊g|`.
    pub interior_error: f64,
    pub exterior_error: f64,
    /// `max_i |C₊g − C₋g + i(α·ν)g| / max_i |g|`, from the reference alone.
    pub jump_residual: f64,
    /// `max_i |C₊g + C₋g − 2C_σ g| / max_i |2C_σ g|`.
    pub sum_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlemeljReport {
    pub nodes: usize,
    pub offsets: Vec<f64>,
    pub densities: Vec<PlemeljDensityReport>,
    /// Largest interior or exterior error over the densities.
    pub max_relative_error: f64,
}

fn dist4(a: &[C64; 4], b: &[C64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn len4(a: &[C64; 4]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Compares the one-sided limits of `Φᵃ(0, g)` (from an independent polar
/// quadrature at `x_i ∓ hν`, extrapolated to `h = 0`) with
/// `∓(i/2)(α·ν)g + C_σᵃ g` computed on the mesh.
pub fn plemelj_check(
    sp: &SpectralParameter,
    mesh: &SurfaceMesh,
    densities: &[&Density],
    offsets: &[f64],
) -> Result<PlemeljReport> {
    let radius = sphere_radius(mesh)?;
    if offsets.len() < 2 || offsets.iter().any(|h| !(*h > 0.0 && *h < 0.5 * radius)) {
        return Err(Error::InvalidArgument(
            "need at least two positive offsets below half the radius".into(),
        ));
    }
    let weights = extrapolation_weights(offsets);
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("offsets must be distinct".into()));
    }
    let c_sigma = cauchy_sigma(sp, mesh)?;
    let nodes = mesh.nodes();
    // Reference limits: [node][side][density], side 0 interior, 1 exterior.
    let limits: Vec<[Vec<[C64; 4]>; 2]> = nodes
        .par_iter()
        .map(|x0| {
            let side = |sign: f64| {
                let mut acc = vec![[C64::new(0.0, 0.0); 4]; densities.len()];
                for (h, w) in offsets.iter().zip(&weights) {
                    let vals = polar_reference(sp, radius, *x0, sign * h, densities);
                    for (a, v) in acc.iter_mut().zip(vals) {
                        for k in 0..4 {
                            a[k] += v[k] * *w;
                        }
                    }
                }
                acc
            };
            [side(-1.0), side(1.0)]
        })
        .collect();
    let mut reports = Vec::with_capacity(densities.len());
    for (d, g) in densities.iter().enumerate() {
        let nodal: Vec<[C64; 4]> = nodes.iter().map(|x| g(*x)).collect();
        let cg = to_points(&c_sigma.apply(&from_points(&nodal)));
        let mut worst = [0.0f64; 2];
        let mut scale = [0.0f64; 2];
        let (mut jump, mut sum, mut gmax, mut cmax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..nodes.len() {
            let nu = mesh.normals()[i];
            let an = DiracElement::alpha_dot(nu).apply(&nodal[i]);
            for (s, sign) in [(0usize, -1.0), (1, 1.0)] {
                let mut predicted = cg[i];
                for k in 0..4 {
                    predicted[k] += 0.5 * sign * I * an[k];
                }
                worst[s] = worst[s].max(dist4(&limits[i][s][d], &predicted));
                scale[s] = scale[s].max(len4(&limits[i][s][d]));
            }
            let (lp, lm) = (&limits[i][0][d], &limits[i][1][d]);
            let mut j = [C64::new(0.0, 0.0); 4];
            let mut s2 = [C64::new(0.0, 0.0); 4];
            let mut two_c = [C64::new(0.0, 0.0); 4];
            for k in 0..4 {
                j[k] = lp[k] - lm[k] + I * an[k];
                two_c[k] = 2.0 * cg[i][k];
                s2[k] = lp[k] + lm[k] - two_c[k];
            }
            jump = jump.max(len4(&j));
            sum = sum.max(len4(&s2));
            gmax = gmax.max(len4(&nodal[i]));
            cmax = cmax.max(len4(&two_c));
        }
        let rel = |a: f64, b: f64| if b > 0.0 { a / b } else { a };
        reports.push(PlemeljDensityReport {
            interior_error: rel(worst[0], scale[0]),
            exterior_error: rel(worst[1], scale[1]),
            jump_residual: rel(jump, gmax),
            sum_residual: rel(sum, cmax),
        });
    }
    let max_relative_error = reports
        .iter()
        .map(|r| r.interior_error.max(r.exterior_error))
        .fold(0.0, f64::max);
    Ok(PlemeljReport {
        nodes: mesh.len(),
        offsets: offsets.to_vec(),
        densities: reports,
        max_relative_error,
    })
}

/// Applies `C_σᵃ` to nodal values of `g`.
#[cfg(test)]
fn apply_nodal(op: &ShellOperator, g: &[[C64; 4]]) -> Vec<[C64; 4]> {
    to_points(&op.apply(&from_points(g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Surface;

    fn mesh(n: usize) -> SurfaceMesh {
        SurfaceMesh::fibonacci(Surface::sphere(1.0).unwrap(), n).unwrap()
    }

    #[test]
    fn extrapolation_weights_for_doubling_offsets() {
        let w = extrapolation_weights(&DEFAULT_OFFSETS);
        for (a, b) in w.iter().zip([8.0 / 3.0, -2.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let m = mesh(64);
        let g = vec![[C64::new(0.0, 0.0); 4]; 64];
        let v = layer_potential(&SpectralParameter::default(), &m, None, &g, [0.0, 0.0, 3.0]).unwrap();
        assert!(v.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn layer_potential_self_converges_and_decays() {
        let sp = SpectralParameter::default();
        let e1 = [C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)];
        let eval = |n: usize, x: Vec3| {
            let m = mesh(n);
            layer_potential(&sp, &m, None, &vec![e1; n], x).unwrap()
        };
        let coarse = eval(512, [0.0, 0.0, 3.0]);
        let fine = eval(2048, [0.0, 0.0, 3.0]);
        assert!(dist4(&coarse, &fine) / len4(&fine) < 1e-4);
        // Constant density: Φ is the closed-form moment.
        let exact = sphere_moment(&sp, [0.0, 0.0, 3.0], 1.0).apply(&e1);
        assert!(dist4(&fine, &exact) / len4(&exact) < 1e-5);
        let far = eval(512, [0.0, 0.0, 10.0]);
        let near = eval(512, [0.0, 0.0, 2.0]);
        assert!(len4(&far) < 1e-3 * len4(&near));
    }

    #[test]
    fn points_near_the_surface_are_refused() {
        let m = mesh(128);
        let g = vec![[C64::new(1.0, 0.0); 4]; 128];
        let err = layer_potential(&SpectralParameter::default(), &m, None, &g, [0.0, 0.0, 1.01]).unwrap_err();
        assert!(matches!(err, Error::PointTooCloseToSurface { .. }));
    }

    #[test]
    fn constant_density_is_integrated_exactly() {
        // The frozen density carries the whole integral when g is constant.
        let sp = SpectralParameter::default();
        let m = mesh(200);
        let c = cauchy_sigma(&sp, &m).unwrap();
        let g = vec![[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]; 200];
        let out = apply_nodal(&c, &g);
        for (i, x) in m.nodes().iter().enumerate() {
            let exact = sphere_moment(&sp, *x, 1.0).apply(&g[i]);
            assert!(dist4(&out[i], &exact) < 1e-12);
        }
    }

    #[test]
    fn massless_static_operator_is_the_riesz_kernel() {
        let sp = SpectralParameter::massless_static();
        let m = mesh(128);
        let c = cauchy_sigma(&sp, &m).unwrap();
        let blocks = c.row_blocks(5);
        for (j, e) in blocks.iter().filter(|(j, _)| *j != 5).take(40) {
            if m.nodes()[*j] == m.nodes()[5] {
                continue;
            }
            assert_eq!(e.id, C64::new(0.0, 0.0));
            assert_eq!(e.beta, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn plemelj_relation_holds_at_moderate_resolution() {
        let sp = SpectralParameter::default();
        let dens = standard_densities();
        let refs: Vec<&Density> = dens.iter().map(|f| f as &Density).collect();
        let r = plemelj_check(&sp, &mesh(256), &refs, &DEFAULT_OFFSETS).unwrap();
        for d in &r.densities {
            assert!(d.jump_residual < 1e-3, "{d:?}");
        }
        assert!(r.max_relative_error < 0.1, "{r:?}");
    }

    #[test]
    fn jump_on_an_alpha_nu_eigenvector_has_the_density_size() {
        // (α·ν)g = g at the north pole for g = (1, 0, 1, 0)/√2.
        let sp = SpectralParameter::default();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let g = move |_: Vec3| [C64::new(s, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(0.0, 0.0)];
        let x0 = [0.0, 0.0, 1.0];
        let w = extrapolation_weights(&DEFAULT_OFFSETS);
        let limit = |sign: f64| {
            let mut acc = [C64::new(0.0, 0.0); 4];
            for (h, wk) in DEFAULT_OFFSETS.iter().zip(&w) {
                let v = polar_reference(&sp, 1.0, x0, sign * h, &[&g])[0];
                for k in 0..4 {
                    acc[k] += v[k] * *wk;
                }
            }
            acc
        };
        let (inner, outer) = (limit(-1.0), limit(1.0));
        assert!((dist4(&inner, &outer) - 1.0).abs() < 1e-3);
    }
}
