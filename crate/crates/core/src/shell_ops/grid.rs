//! Tensor grid on `Σ × (−1, 1)` and the local data shared by the operators.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::{weighted_norm, DENSE_CAP};
use crate::coupling::KVOperator;
use crate::error::{Error, Result};
use crate::geometry::{cross, dot, norm, sub, Surface, SurfaceMesh, Vec3};
use crate::potential::{factorize, PotentialProfile};
use crate::quadrature::PanelRule;

/// Neighbours used by the least-squares tangential gradient.
pub const STENCIL_SIZE: usize = 10;

/// Radius of a spherical mesh; the layer operators are implemented for
/// spheres centred at the origin.
pub fn sphere_radius(mesh: &SurfaceMesh) -> Result<f64> {
    match mesh.surface() {
        Surface::Sphere { radius } => Ok(*radius),
        _ => Err(Error::InvalidArgument(
            "layer operators are implemented for spheres only".into(),
        )),
    }
}

fn tangent_basis(n: Vec3) -> (Vec3, Vec3) {
    let seed = if n[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let e1 = cross(n, seed);
    let l = norm(e1);
    let e1 = [e1[0] / l, e1[1] / l, e1[2] / l];
    (e1, cross(n, e1))
}

/// Tangential gradient stencils: `∇_T g(x_i) ≈ Σ_k c_ik (g_k − g_i)` from a
/// quadratic least-squares fit over the nearest [`STENCIL_SIZE`] nodes in
/// tangent-plane coordinates.
pub fn gradient_stencils(mesh: &SurfaceMesh) -> Vec<Vec<(usize, Vec3)>> {
    let nodes = mesh.nodes();
    let n = nodes.len();
    let k = STENCIL_SIZE.min(n.saturating_sub(1));
    (0..n)
        .map(|i| {
            let mut order: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (dot(sub(nodes[j], nodes[i]), sub(nodes[j], nodes[i])), j))
                .collect();
            if k < order.len() {
                order.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0));
                order.truncate(k);
            }
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let (e1, e2) = tangent_basis(mesh.normals()[i]);
            let columns = if k >= 5 { 5 } else { 2 };
            let a = DMatrix::from_fn(order.len(), columns, |r, c| {
                let d = sub(nodes[order[r].1], nodes[i]);
                let (x, y) = (dot(d, e1), dot(d, e2));
                [x, y, 0.5 * x * x, x * y, 0.5 * y * y][c]
            });
            let pinv = a
                .svd(true, true)
                .pseudo_inverse(1e-13)
                .expect("SVD pseudo-inverse with both factors");
            order
                .iter()
                .enumerate()
                .map(|(r, &(_, j))| {
                    let (cx, cy) = (pinv[(0, r)], pinv[(1, r)]);
                    (j, [cx * e1[0] + cy * e2[0], cx * e1[1] + cy * e2[1], cx * e1[2] + cy * e2[2]])
                })
                .collect()
        })
        .collect()
}

/// Quadrature in `s` for one target node `t_a`, split at `t_a`:
/// positions, sides `sign(t_a − s)`, and `q[p][b] = weight_p · ℓ_b(s_p)`.
#[derive(Debug, Clone)]
pub(crate) struct SplitTable {
    pub s: Vec<f64>,
    pub side: Vec<f64>,
    pub q: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub(crate) struct GridData {
    pub mesh: SurfaceMesh,
    pub radius: f64,
    pub profile: PotentialProfile,
    pub kv: KVOperator,
    pub stencils: Vec<Vec<(usize, Vec3)>>,
    pub splits: Vec<SplitTable>,
    pub point_weights: Arc<Vec<f64>>,
}

/// `Σ × (−1, 1)` discretized by a spherical mesh (N nodes) and a
/// Gauss–Legendre rule in `t` (M nodes) refined at the breakpoints of the
/// profile. Grid point `(i, a)` has index `i·M + a`.
#[derive(Debug, Clone)]
pub struct OperatorGrid {
    pub(crate) data: Arc<GridData>,
}

impl OperatorGrid {
    /// Grid with (about) `t_nodes` Gauss points in `t`. Fails with
    /// `DenseTooLarge` when `4NM` exceeds [`DENSE_CAP`].
    pub fn new(mesh: SurfaceMesh, profile: &PotentialProfile, t_nodes: usize) -> Result<Self> {
        let radius = sphere_radius(&mesh)?;
        if t_nodes < 2 {
            return Err(Error::InvalidArgument("the t rule needs at least 2 nodes".into()));
        }
        profile.validate()?;
        if profile.eta() >= radius {
            return Err(Error::InvalidArgument(format!(
                "eta = {} must be below the sphere radius {radius}",
                profile.eta()
            )));
        }
        let uv = factorize(profile);
        let rule = PanelRule::new(vec![-1.0, 1.0], t_nodes)?.with_breakpoints(&uv.breakpoints());
        let m = rule.len();
        let dim = 4 * mesh.len() * m;
        if dim > DENSE_CAP {
            return Err(Error::DenseTooLarge { dim, cap: DENSE_CAP });
        }
        let splits = rule
            .nodes()
            .iter()
            .map(|&t| {
                let split = rule.split_rule(t);
                let mut table = SplitTable {
                    s: Vec::with_capacity(split.points.len()),
                    side: Vec::with_capacity(split.points.len()),
                    q: Vec::with_capacity(split.points.len()),
                };
                for p in &split.points {
                    let mut row = vec![0.0; m];
                    for &(b, c) in &p.coeffs {
                        row[b] += p.weight * c;
                    }
                    table.s.push(p.s);
                    table.side.push(p.side);
                    table.q.push(row);
                }
                table
            })
            .collect();
        let kv = KVOperator::on_rule(rule, &uv);
        let stencils = gradient_stencils(&mesh);
        let point_weights = Arc::new(
            mesh.weights()
                .iter()
                .flat_map(|w| kv.weights().iter().map(move |wt| w * wt))
                .collect(),
        );
        Ok(Self {
            data: Arc::new(GridData {
                mesh,
                radius,
                profile: profile.clone(),
                kv,
                stencils,
                splits,
                point_weights,
            }),
        })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.data.mesh
    }

    pub fn radius(&self) -> f64 {
        self.data.radius
    }

    pub fn profile(&self) -> &PotentialProfile {
        &self.data.profile
    }

    pub fn eta(&self) -> f64 {
        self.data.profile.eta()
    }

    pub fn kv(&self) -> &KVOperator {
        &self.data.kv
    }

    /// N.
    pub fn n_nodes(&self) -> usize {
        self.data.mesh.len()
    }

    /// M.
    pub fn n_t(&self) -> usize {
        self.data.kv.len()
    }

    /// `4NM`.
    pub fn dim(&self) -> usize {
        4 * self.n_nodes() * self.n_t()
    }

    pub fn t_nodes(&self) -> &[f64] {
        self.data.kv.nodes()
    }

    pub fn t_weights(&self) -> &[f64] {
        self.data.kv.weights()
    }

    pub fn index(&self, node: usize, t: usize) -> usize {
        node * self.n_t() + t
    }

    /// Weights `w_i w_a` of the grid points; they sum to `2·area(Σ)`.
    pub fn point_weights(&self) -> &[f64] {
        &self.data.point_weights
    }

    /// Samples `g(x_Σ, t)` on the grid.
    pub fn sample<F: Fn(Vec3, f64) -> [C64; 4]>(&self, g: F) -> DVector<C64> {
        let mut out = Vec::with_capacity(self.dim());
        for x in self.mesh().nodes() {
            for &t in self.t_nodes() {
                out.extend(g(*x, t));
            }
        }
        DVector::from_vec(out)
    }

    /// `L²(Σ × (−1, 1))⁴` norm of a grid function.
    pub fn norm(&self, x: &DVector<C64>) -> f64 {
        weighted_norm(x, self.point_weights())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Surface;
    use proptest::prelude::*;

    fn sphere_grid(n: usize, m: usize) -> OperatorGrid {
        let mesh = SurfaceMesh::fibonacci(Surface::sphere(1.0).unwrap(), n).unwrap();
        OperatorGrid::new(mesh, &PotentialProfile::square(0.4, 0.25).unwrap(), m).unwrap()
    }

    #[test]
    fn total_weight_is_twice_the_area() {
        let g = sphere_grid(200, 6);
        let total: f64 = g.point_weights().iter().sum();
        assert!((total - 8.0 * std::f64::consts::PI).abs() < 1e-12);
        assert_eq!(g.dim(), 4 * 200 * 6);
    }

    #[test]
    fn dense_cap_is_enforced() {
        let mesh = SurfaceMesh::fibonacci(Surface::sphere(1.0).unwrap(), 1025).unwrap();
        let err = OperatorGrid::new(mesh, &PotentialProfile::square(0.4, 0.25).unwrap(), 4).unwrap_err();
        assert!(matches!(err, Error::DenseTooLarge { dim: 16400, cap: 16384 }));
    }

    #[test]
    fn ellipsoids_are_rejected() {
        let mesh = SurfaceMesh::fibonacci(Surface::ellipsoid(1.0, 1.0, 1.5).unwrap(), 64).unwrap();
        assert!(OperatorGrid::new(mesh, &PotentialProfile::square(0.4, 0.25).unwrap(), 4).is_err());
    }

    #[test]
    fn split_tables_reproduce_the_sign_weights() {
        let g = sphere_grid(16, 8);
        let m = g.n_t();
        for (a, table) in g.data.splits.iter().enumerate() {
            for b in 0..m {
                let p: f64 = table.q.iter().zip(&table.side).map(|(q, s)| q[b] * s).sum();
                assert!((p - g.kv().sign_weights()[a * m + b]).abs() < 1e-13);
                let w: f64 = table.q.iter().map(|q| q[b]).sum();
                assert!((w - g.t_weights()[b]).abs() < 1e-13);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn gradient_of_linear_functions_is_tangential_part(c in prop::array::uniform3(-2.0f64..2.0)) {
            let mesh = SurfaceMesh::fibonacci(Surface::sphere(1.0).unwrap(), 300).unwrap();
            let st = gradient_stencils(&mesh);
            for i in (0..300).step_by(37) {
                let x = mesh.nodes()[i];
                let n = mesh.normals()[i];
                let mut grad = [0.0; 3];
                for &(k, w) in &st[i] {
                    let dg = dot(c, sub(mesh.nodes()[k], x));
                    for j in 0..3 {
                        grad[j] += w[j] * dg;
                    }
                }
                let cn = dot(c, n);
                for j in 0..3 {
                    prop_assert!((grad[j] - (c[j] - cn * n[j])).abs() < 2e-3 * (1.0 + norm(c)));
                }
            }
        }
    }
}
