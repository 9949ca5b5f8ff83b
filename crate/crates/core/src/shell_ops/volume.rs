//! `(H − a)⁻¹` on a uniform grid and the resolvent of the δ-shell operator.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layer::cauchy_sigma;
use super::{from_points, to_points};
use crate::coupling::CouplingKind;
use crate::dirac_algebra::{phi_element, DiracElement, SpectralParameter};
use crate::error::{Error, Result};
use crate::geometry::{sub, SurfaceMesh, Vec3};
use crate::linalg::condition_1;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `lim_{n→∞} (∫_{|x|<n} dx/|x| − Σ'_{m∈ℤ³, |m|<n} 1/|m|)`.
pub const LATTICE_CONSTANT: f64 = 2.8372974794806;

/// Largest accepted condition number of the boundary system.
pub const CONDITION_CAP: f64 = 1e10;

/// Electrostatic couplings with `||λ| − 2| <` this are refused.
pub const NEAR_CRITICAL_TOL: f64 = 1e-6;

/// Uniform grid `origin + h·(i, j, k)`, `0 ≤ i < dims[0]` etc.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeGrid {
    pub origin: Vec3,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl VolumeGrid {
    pub fn new(origin: Vec3, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) || dims.iter().any(|&d| d < 4) {
            return Err(Error::InvalidArgument(
                "volume grid needs a positive spacing and at least 4 nodes per axis".into(),
            ));
        }
        Ok(Self { origin, spacing, dims })
    }

    /// Cube `[−half_width, half_width]³` with `n` nodes per axis.
    pub fn cube(half_width: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidArgument("at least 4 nodes per axis".into()));
        }
        let h = 2.0 * half_width / (n - 1) as f64;
        Self::new([-half_width; 3], h, [n; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    pub fn coords(&self, n: usize) -> [usize; 3] {
        let k = n % self.dims[2];
        let j = (n / self.dims[2]) % self.dims[1];
        [n / (self.dims[1] * self.dims[2]), j, k]
    }

    pub fn node(&self, n: usize) -> Vec3 {
        let c = self.coords(n);
        [
            self.origin[0] + self.spacing * c[0] as f64,
            self.origin[1] + self.spacing * c[1] as f64,
            self.origin[2] + self.spacing * c[2] as f64,
        ]
    }
}

/// A spinor field sampled at the nodes of a [`VolumeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientField {
    pub grid: VolumeGrid,
    pub values: Vec<[C64; 4]>,
}

impl AmbientField {
    pub fn new(grid: VolumeGrid, values: Vec<[C64; 4]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument("field length differs from the grid size".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn sample<F: Fn(Vec3) -> [C64; 4] + Sync>(grid: VolumeGrid, f: F) -> Self {
        let values = (0..grid.len()).into_par_iter().map(|n| f(grid.node(n))).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: VolumeGrid) -> Self {
        let values = vec![[C64::new(0.0, 0.0); 4]; grid.len()];
        Self { grid, values }
    }

    /// Discrete `L²` norm.
    pub fn norm(&self) -> f64 {
        let h3 = self.grid.spacing.powi(3);
        (h3 * self.values.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }
}

/// Lattice convolution with `φᵃ`: the punctured sum with the kernel table
/// `h³φᵃ(h·d)` and the `O(h²)` correction of the missing cell.
struct Convolver<'a> {
    field: &'a AmbientField,
    table: Vec<DiracElement>,
    span: [usize; 3],
    correction: DiracElement,
    gradient_scale: C64,
}

impl<'a> Convolver<'a> {
    fn new(sp: &SpectralParameter, field: &'a AmbientField) -> Self {
        let g = &field.grid;
        let h = g.spacing;
        let span = [2 * g.dims[0] - 1, 2 * g.dims[1] - 1, 2 * g.dims[2] - 1];
        let h3 = C64::from(h * h * h);
        let table = (0..span[0] * span[1] * span[2])
            .into_par_iter()
            .map(|n| {
                let k = n % span[2];
                let j = (n / span[2]) % span[1];
                let i = n / (span[1] * span[2]);
                let d = [
                    h * (i as f64 - (g.dims[0] - 1) as f64),
                    h * (j as f64 - (g.dims[1] - 1) as f64),
                    h * (k as f64 - (g.dims[2] - 1) as f64),
                ];
                match phi_element(sp, d) {
                    Ok(e) => e.scale(h3),
                    Err(_) => DiracElement::zero(),
                }
            })
            .collect();
        let c = LATTICE_CONSTANT * h * h / (4.0 * PI);
        Self {
            field,
            table,
            span,
            correction: DiracElement {
                id: sp.a() * c,
                beta: C64::from(sp.m() * c),
                ..DiracElement::default()
            },
            gradient_scale: -I * (c / 3.0),
        }
    }

    fn gradient(&self, n: usize) -> [[C64; 4]; 3] {
        let g = &self.field.grid;
        let c = g.coords(n);
        let mut out = [[C64::new(0.0, 0.0); 4]; 3];
        for axis in 0..3 {
            let at = |shift: isize| -> [C64; 4] {
                let mut q = c;
                let v = q[axis] as isize + shift;
                if v < 0 || v >= g.dims[axis] as isize {
                    return [C64::new(0.0, 0.0); 4];
                }
                q[axis] = v as usize;
                self.field.values[g.index(q[0], q[1], q[2])]
            };
            let (p, m) = (at(1), at(-1));
            for k in 0..4 {
                out[axis][k] = (p[k] - m[k]) / (2.0 * g.spacing);
            }
        }
        out
    }

    fn at_node(&self, n: usize) -> [C64; 4] {
        let g = &self.field.grid;
        let [ci, cj, ck] = g.coords(n);
        let mut acc = [C64::new(0.0, 0.0); 4];
        let [nx, ny, nz] = g.dims;
        let mut m = 0;
        for mi in 0..nx {
            for mj in 0..ny {
                let row = ((ci + nx - 1 - mi) * self.span[1] + (cj + ny - 1 - mj)) * self.span[2] + ck + nz - 1;
                for mk in 0..nz {
                    let f = &self.field.values[m];
                    m += 1;
                    let v = self.table[row - mk].apply(f);
                    for k in 0..4 {
                        acc[k] += v[k];
                    }
                }
            }
        }
        let local = self.correction.apply(&self.field.values[n]);
        let grad = self.gradient(n);
        let mut adf = [C64::new(0.0, 0.0); 4];
        for (axis, gk) in grad.iter().enumerate() {
            let mut dir = [0.0; 3];
            dir[axis] = 1.0;
            let v = DiracElement::alpha_dot(dir).apply(gk);
            for k in 0..4 {
                adf[k] += v[k];
            }
        }
        for k in 0..4 {
            acc[k] += local[k] + self.gradient_scale * adf[k];
        }
        acc
    }

    /// Direct lattice sum at an arbitrary point (no local correction).
    fn direct(&self, sp: &SpectralParameter, x: Vec3) -> Result<[C64; 4]> {
        let g = &self.field.grid;
        let h3 = g.spacing.powi(3);
        let mut acc = [C64::new(0.0, 0.0); 4];
        for (m, f) in self.field.values.iter().enumerate() {
            let v = phi_element(sp, sub(x, g.node(m)))?.apply(f);
            for k in 0..4 {
                acc[k] += v[k] * h3;
            }
        }
        Ok(acc)
    }
}

fn lagrange4(x: f64) -> [f64; 4] {
    // Nodes 0, 1, 2, 3.
    [
        -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
        x * (x - 2.0) * (x - 3.0) / 2.0,
        -x * (x - 1.0) * (x - 3.0) / 2.0,
        x * (x - 1.0) * (x - 2.0) / 6.0,
    ]
}

/// Tricubic stencil `(base, weights per axis)` for `x`, if it fits in the grid.
fn stencil(g: &VolumeGrid, x: Vec3) -> Option<([usize; 3], [[f64; 4]; 3])> {
    let mut base = [0usize; 3];
    let mut w = [[0.0; 4]; 3];
    for a in 0..3 {
        let s = (x[a] - g.origin[a]) / g.spacing;
        let b = s.floor() as isize - 1;
        if b < 0 || b + 3 >= g.dims[a] as isize {
            return None;
        }
        base[a] = b as usize;
        w[a] = lagrange4(s - b as f64);
    }
    Some((base, w))
}

/// Tricubic interpolation of a grid field at `x`; `None` near the grid edge.
pub(crate) fn interpolate(field: &AmbientField, x: Vec3) -> Option<[C64; 4]> {
    let g = &field.grid;
    let (b, w) = stencil(g, x)?;
    let mut acc = [C64::new(0.0, 0.0); 4];
    for q in 0..64 {
        let (p, r, s) = (q / 16, (q / 4) % 4, q % 4);
        let weight = w[0][p] * w[1][r] * w[2][s];
        let v = field.values[g.index(b[0] + p, b[1] + r, b[2] + s)];
        for k in 0..4 {
            acc[k] += v[k] * weight;
        }
    }
    Some(acc)
}

/// `((H − a)⁻¹F)(x)` for each point. Points inside the grid are interpolated
/// (tricubic) from corrected lattice sums at the nodes; points outside use
/// the lattice sum directly.
pub fn free_resolvent(sp: &SpectralParameter, field: &AmbientField, points: &[Vec3]) -> Result<Vec<[C64; 4]>> {
    let g = &field.grid;
    let conv = Convolver::new(sp, field);
    let stencils: Vec<_> = points.iter().map(|x| stencil(g, *x)).collect();
    let mut needed: Vec<usize> = stencils
        .iter()
        .flatten()
        .flat_map(|(b, _)| {
            (0..64).map(move |q| g.index(b[0] + q / 16, b[1] + (q / 4) % 4, b[2] + q % 4))
        })
        .collect();
    needed.sort_unstable();
    needed.dedup();
    let values: Vec<[C64; 4]> = needed.par_iter().map(|&n| conv.at_node(n)).collect();
    let lookup = |n: usize| values[needed.binary_search(&n).expect("stencil node computed")];
    points
        .par_iter()
        .zip(&stencils)
        .map(|(x, st)| match st {
            Some((b, w)) => {
                let mut acc = [C64::new(0.0, 0.0); 4];
                for q in 0..64 {
                    let (p, r, s) = (q / 16, (q / 4) % 4, q % 4);
                    let weight = w[0][p] * w[1][r] * w[2][s];
                    let v = lookup(g.index(b[0] + p, b[1] + r, b[2] + s));
                    for k in 0..4 {
                        acc[k] += v[k] * weight;
                    }
                }
                Ok(acc)
            }
            None => conv.direct(sp, *x),
        })
        .collect()
}

/// `(H − a)⁻¹F` at every node of the field's grid.
pub fn free_resolvent_on_grid(sp: &SpectralParameter, field: &AmbientField) -> AmbientField {
    let conv = Convolver::new(sp, field);
    let values = (0..field.grid.len()).into_par_iter().map(|n| conv.at_node(n)).collect();
    AmbientField {
        grid: field.grid.clone(),
        values,
    }
}

/// Output of [`shell_resolvent_apply`].
#[derive(Debug, Clone)]
pub struct ShellResolvent {
    pub field: AmbientField,
    /// Nodes closer to Σ than the mesh spacing; the layer term is not
    /// resolved there.
    pub near_surface: Vec<bool>,
    /// Boundary density `(1 + λC_σ)⁻¹Φ_σF` (or `(β + λC_σ)⁻¹Φ_σF`).
    pub density: Vec<[C64; 4]>,
    /// 1-norm condition number of the boundary system.
    pub condition: f64,
}

/// `(H + λδ_Σ − a)⁻¹F = (H − a)⁻¹F − λΦᵃ(0, (1 + λC_σ)⁻¹Φ_σF)` for the
/// electrostatic shell; the scalar shell replaces `1` by `β`. The trace
/// `Φ_σF` is the free resolvent at the mesh nodes.
pub fn shell_resolvent_apply(
    sp: &SpectralParameter,
    mesh: &SurfaceMesh,
    lambda: f64,
    kind: CouplingKind,
    field: &AmbientField,
) -> Result<ShellResolvent> {
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument("lambda must be finite".into()));
    }
    if kind == CouplingKind::Electrostatic && (lambda.abs() - 2.0).abs() < NEAR_CRITICAL_TOL {
        return Err(Error::NearCriticalCoupling { lambda });
    }
    let free = free_resolvent_on_grid(sp, field);
    let g = &field.grid;
    let guard = mesh.spacing();
    let near_surface: Vec<bool> = (0..g.len())
        .map(|n| mesh.surface().project(g.node(n)).1.abs() < guard)
        .collect();
    if lambda == 0.0 {
        return Ok(ShellResolvent {
            field: free,
            near_surface,
            density: vec![[C64::new(0.0, 0.0); 4]; mesh.len()],
            condition: 1.0,
        });
    }
    let trace = free_resolvent(sp, field, mesh.nodes())?;
    let c = cauchy_sigma(sp, mesh)?.to_dense()?;
    let dim = c.nrows();
    let lead = match kind {
        CouplingKind::Electrostatic => DMatrix::identity(dim, dim),
        CouplingKind::Scalar => DMatrix::from_fn(dim, dim, |r, q| {
            if r != q {
                C64::new(0.0, 0.0)
            } else if r % 4 < 2 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(-1.0, 0.0)
            }
        }),
    };
    let system = lead + c * C64::from(lambda);
    let condition = condition_1(&system);
    if !(condition < CONDITION_CAP) {
        return Err(Error::SingularBoundaryInverse { condition });
    }
    let rhs: DVector<C64> = from_points(&trace);
    let density = to_points(&system.lu().solve(&rhs).ok_or(Error::SingularMatrix)?);
    let weights = mesh.weights();
    let values = free
        .values
        .par_iter()
        .enumerate()
        .map(|(n, base)| {
            let x = g.node(n);
            let mut out = *base;
            for ((y, w), d) in mesh.nodes().iter().zip(weights).zip(&density) {
                if let Ok(e) = phi_element(sp, sub(x, *y)) {
                    let v = e.apply(d);
                    for k in 0..4 {
                        out[k] -= v[k] * (lambda * w);
                    }
                }
            }
            out
        })
        .collect();
    Ok(ShellResolvent {
        field: AmbientField {
            grid: g.clone(),
            values,
        },
        near_surface,
        density,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{norm, Surface};

    const S: f64 = 0.5;

    fn gaussian(y: Vec3) -> [C64; 4] {
        let e = (-(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]) / (2.0 * S * S)).exp();
        [C64::new(e, 0.0), C64::new(0.0, 0.5 * e), C64::new(0.0, 0.0), C64::new(0.3 * e, 0.0)]
    }

    /// `(H − a)` applied to [`gaussian`] in closed form.
    fn gaussian_image(sp: &SpectralParameter, y: Vec3) -> [C64; 4] {
        let psi = gaussian(y);
        let op = DiracElement {
            id: -sp.a(),
            beta: C64::from(sp.m()),
            alpha: [I * (y[0] / (S * S)), I * (y[1] / (S * S)), I * (y[2] / (S * S))],
        };
        op.apply(&psi)
    }

    fn diff(a: &[C64; 4], b: &[C64; 4]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
    }

    fn size(a: &[C64; 4]) -> f64 {
        a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn lagrange_weights_reproduce_cubics() {
        let w = lagrange4(1.37);
        let f = |x: f64| 2.0 - x + 0.5 * x * x * x;
        let v: f64 = (0..4).map(|k| w[k] * f(k as f64)).sum();
        assert!((v - f(1.37)).abs() < 1e-13);
    }

    #[test]
    fn resolvent_of_a_dirac_image_is_the_original_field() {
        let sp = SpectralParameter::default();
        let run = |n: usize| {
            let grid = VolumeGrid::cube(3.0, n).unwrap();
            let f = AmbientField::sample(grid, |y| gaussian_image(&sp, y));
            let pts = [[0.0, 0.0, 0.0], [0.31, -0.17, 0.52], [0.9, 0.4, -0.2]];
            let out = free_resolvent(&sp, &f, &pts).unwrap();
            pts.iter()
                .zip(&out)
                .map(|(p, v)| diff(v, &gaussian(*p)) / size(&gaussian([0.0; 3])))
                .fold(0.0, f64::max)
        };
        let coarse = run(25);
        let fine = run(37);
        assert!(fine < 5e-3, "{coarse} {fine}");
        // Second order in h.
        assert!(coarse / fine > 1.8, "{coarse} {fine}");
    }

    /// The free term cancels exactly in every comparison using this setup, so
    /// a coarse grid suffices.
    fn shell_setup() -> (SpectralParameter, SurfaceMesh, AmbientField) {
        let sp = SpectralParameter::default();
        let mesh = SurfaceMesh::fibonacci(Surface::sphere(1.0).unwrap(), 256).unwrap();
        let grid = VolumeGrid::cube(3.0, 13).unwrap();
        let field = AmbientField::sample(grid, |y| gaussian_image(&sp, y));
        (sp, mesh, field)
    }

    #[test]
    fn zero_coupling_gives_the_free_resolvent() {
        let (sp, mesh, field) = shell_setup();
        let r = shell_resolvent_apply(&sp, &mesh, 0.0, CouplingKind::Electrostatic, &field).unwrap();
        assert_eq!(r.field, free_resolvent_on_grid(&sp, &field));
    }

    #[test]
    fn critical_electrostatic_coupling_is_refused() {
        let (sp, mesh, field) = shell_setup();
        for l in [2.0, -2.0] {
            let err = shell_resolvent_apply(&sp, &mesh, l, CouplingKind::Electrostatic, &field).unwrap_err();
            assert!(matches!(err, Error::NearCriticalCoupling { .. }));
        }
    }

    #[test]
    fn shell_resolvent_inverts_the_dirac_operator_off_the_shell() {
        // Fourth-order central differences of the output reproduce F at nodes
        // well away from Σ and from the grid boundary.
        // The whole stencil stays at least 0.3 away from Σ.
        let (sp, mesh, _) = shell_setup();
        let grid = VolumeGrid::cube(2.5, 31).unwrap();
        let field = AmbientField::sample(grid, |y| gaussian_image(&sp, y));
        let r = shell_resolvent_apply(&sp, &mesh, 0.7, CouplingKind::Electrostatic, &field).unwrap();
        let g = &field.grid;
        let h = g.spacing;
        let at = |c: [usize; 3]| r.field.values[g.index(c[0], c[1], c[2])];
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut checked = 0;
        for n in 0..g.len() {
            let c = g.coords(n);
            if c.iter().any(|&v| v < 2 || v + 2 >= g.dims[0]) {
                continue;
            }
            let x = g.node(n);
            if (norm(x) - 1.0).abs() < 0.3 + 2.0 * h || norm(x) > 2.0 {
                continue;
            }
            let mut grad = [[C64::new(0.0, 0.0); 4]; 3];
            for axis in 0..3 {
                let shifted = |s: isize| {
                    let mut q = c;
                    q[axis] = (q[axis] as isize + s) as usize;
                    at(q)
                };
                let (p1, m1, p2, m2) = (shifted(1), shifted(-1), shifted(2), shifted(-2));
                for k in 0..4 {
                    grad[axis][k] = (8.0 * (p1[k] - m1[k]) - (p2[k] - m2[k])) / (12.0 * h);
                }
            }
            let u = at(c);
            let mut hu = DiracElement {
                id: -sp.a(),
                beta: C64::from(sp.m()),
                ..DiracElement::default()
            }
            .apply(&u);
            for (axis, gk) in grad.iter().enumerate() {
                let mut dir = [0.0; 3];
                dir[axis] = 1.0;
                let v = DiracElement::alpha_dot(dir).apply(gk);
                for k in 0..4 {
                    hu[k] += -I * v[k];
                }
            }
            worst = worst.max(diff(&hu, &field.values[n]));
            scale = scale.max(size(&field.values[n]));
            checked += 1;
        }
        assert!(scale > 0.0 && checked > 20, "{checked}");
        assert!(worst / scale < 1e-2, "{}", worst / scale);
    }

    #[test]
    fn small_coupling_matches_the_first_born_term() {
        // (R(λ) − R(0))/λ → −Φ(0, Φ_σF) (electrostatic), −Φ(0, βΦ_σF) (scalar).
        let (sp, mesh, field) = shell_setup();
        let free = free_resolvent_on_grid(&sp, &field);
        let trace = free_resolvent(&sp, &field, mesh.nodes()).unwrap();
        let g = &field.grid;
        for kind in [CouplingKind::Electrostatic, CouplingKind::Scalar] {
            let born_density: Vec<[C64; 4]> = match kind {
                CouplingKind::Electrostatic => trace.clone(),
                CouplingKind::Scalar => trace
                    .iter()
                    .map(|v| [v[0], v[1], -v[2], -v[3]])
                    .collect(),
            };
            let mut errs = Vec::new();
            for lambda in [1e-2, 5e-3] {
                let r = shell_resolvent_apply(&sp, &mesh, lambda, kind, &field).unwrap();
                let mut worst = 0.0f64;
                let mut scale = 0.0f64;
                for n in (0..g.len()).step_by(7) {
                    let x = g.node(n);
                    if r.near_surface[n] {
                        continue;
                    }
                    let mut born = [C64::new(0.0, 0.0); 4];
                    for ((y, w), d) in mesh.nodes().iter().zip(mesh.weights()).zip(&born_density) {
                        let v = phi_element(&sp, sub(x, *y)).unwrap().apply(d);
                        for k in 0..4 {
                            born[k] -= v[k] * *w;
                        }
                    }
                    let mut q = [C64::new(0.0, 0.0); 4];
                    for k in 0..4 {
                        q[k] = (r.field.values[n][k] - free.values[n][k]) / lambda;
                    }
                    worst = worst.max(diff(&q, &born));
                    scale = scale.max(size(&born));
                }
                errs.push(worst / scale);
            }
            // The remainder is O(λ).
            assert!(errs[0] < 0.05, "{kind:?} {errs:?}");
            assert!((errs[0] / errs[1] - 2.0).abs() < 0.2, "{kind:?} {errs:?}");
        }
    }
}
