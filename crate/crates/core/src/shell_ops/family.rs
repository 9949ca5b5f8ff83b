//! The squeezed family `A_ε, B_ε, C_ε` on an [`OperatorGrid`] and its limits.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::grid::{GridData, OperatorGrid};
use super::layer::cauchy_sigma;
use super::sphere::{cell_integral, sphere_moment};
use super::volume::{free_resolvent, free_resolvent_on_grid, interpolate, AmbientField};
use super::{weighted_norm, BlockRows, OperatorLabel, ShellOperator, MATERIALIZE_CAP};
use crate::dirac_algebra::{phi_element, DiracElement, DiracMatrix, SpectralParameter};
use crate::error::{Error, Result};
use crate::geometry::{sub, Surface, SurfaceMesh, Vec3};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Shifted source and target points closer than this (in `ε|t − s|`) are
/// rejected.
const COLLISION_GUARD: f64 = 1e-10;

/// A row whose difference norm is below `FLOOR_REL` times the norm of the
/// limit is flagged as being at the discretization floor.
pub const FLOOR_REL: f64 = 1e-9;

fn shifted(x: Vec3, scale: f64) -> Vec3 {
    [x[0] * scale, x[1] * scale, x[2] * scale]
}

/// Rows of `B_ε`: target `(i, a)` at `x_i + εt_aν_i`, the `s`-integral split
/// at `t_a` and interpolated through the Gauss nodes, each `s` level
/// integrated over the shifted sphere with singular subtraction.
struct BEpsRows {
    data: Arc<GridData>,
    sp: SpectralParameter,
    eps: f64,
    cell: Vec<f64>,
}

impl BlockRows for BEpsRows {
    fn rows(&self) -> usize {
        self.data.mesh.len() * self.data.kv.len()
    }

    fn cols(&self) -> usize {
        self.rows()
    }

    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>) {
        let d = &*self.data;
        let (n, m) = (d.mesh.len(), d.kv.len());
        let (i, a) = (r / m, r % m);
        let t = d.kv.nodes()[a];
        let ua = d.kv.u()[a];
        if ua == 0.0 {
            return;
        }
        let xi = d.mesh.nodes()[i];
        let z = shifted(xi, 1.0 + self.eps * t / d.radius);
        let split = &d.splits[a];
        let mut acc = vec![DiracElement::zero(); n * m];
        let mut level = vec![DiracElement::zero(); n];
        for p in 0..split.s.len() {
            let coeff: Vec<f64> = (0..m).map(|b| ua * d.kv.v()[b] * split.q[p][b]).collect();
            if coeff.iter().all(|c| *c == 0.0) {
                continue;
            }
            let s = split.s[p];
            let scale = 1.0 + self.eps * s / d.radius;
            let sep = self.eps * (t - s);
            let mut diag = sphere_moment(&self.sp, z, d.radius * scale);
            for (j, (y, w)) in d.mesh.nodes().iter().zip(d.mesh.weights()).enumerate() {
                if j == i {
                    level[j] = DiracElement::zero();
                    continue;
                }
                let det = d.mesh.coarea_factor(j, self.eps * s);
                let e = phi_element(&self.sp, sub(z, shifted(*y, scale)))
                    .expect("separated points")
                    .scale(C64::from(w * det));
                diag = diag - e;
                level[j] = e;
            }
            let c = -0.25 * I * cell_integral(self.cell[i] * scale, sep) / scale;
            for &(k, v) in &d.stencils[i] {
                let e = DiracElement::alpha_dot(v).scale(c);
                diag = diag - e;
                level[k] += e;
            }
            level[i] += diag;
            for (j, e) in level.iter().enumerate() {
                for (b, cb) in coeff.iter().enumerate() {
                    if *cb != 0.0 {
                        acc[j * m + b] += e.scale(C64::from(*cb));
                    }
                }
            }
        }
        out.extend(acc.into_iter().enumerate().filter(|(_, e)| *e != DiracElement::zero()));
    }
}

/// Rows of `Û C_σ V̂`: block `u_a w_b v_b C_σ[i, j]`.
struct B0Rows {
    data: Arc<GridData>,
    c_sigma: ShellOperator,
}

impl BlockRows for B0Rows {
    fn rows(&self) -> usize {
        self.data.mesh.len() * self.data.kv.len()
    }

    fn cols(&self) -> usize {
        self.rows()
    }

    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>) {
        let kv = &self.data.kv;
        let m = kv.len();
        let (i, a) = (r / m, r % m);
        let ua = kv.u()[a];
        if ua == 0.0 {
            return;
        }
        for (j, e) in self.c_sigma.row_blocks(i) {
            for b in 0..m {
                let c = ua * kv.weights()[b] * kv.v()[b];
                if c != 0.0 {
                    out.push((j * m + b, e.scale(C64::from(c))));
                }
            }
        }
    }
}

/// Rows of `B′`: block `(α·ν_i)·(i/2)u_a P_ab v_b`, `P` the sign weights.
struct BPrimeRows {
    data: Arc<GridData>,
}

impl BlockRows for BPrimeRows {
    fn rows(&self) -> usize {
        self.data.mesh.len() * self.data.kv.len()
    }

    fn cols(&self) -> usize {
        self.rows()
    }

    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>) {
        let kv = &self.data.kv;
        let m = kv.len();
        let (i, a) = (r / m, r % m);
        let an = DiracElement::alpha_dot(self.data.mesh.normals()[i]);
        for b in 0..m {
            let k = kv.matrix()[(a, b)];
            if k != C64::new(0.0, 0.0) {
                out.push((i * m + b, an.scale(k)));
            }
        }
    }
}

/// Rows of `A_ε` evaluated at test points away from the tube.
struct ARows {
    data: Arc<GridData>,
    sp: SpectralParameter,
    eps: f64,
    points: Vec<Vec3>,
}

impl BlockRows for ARows {
    fn rows(&self) -> usize {
        self.points.len()
    }

    fn cols(&self) -> usize {
        self.data.mesh.len() * self.data.kv.len()
    }

    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>) {
        let d = &*self.data;
        let m = d.kv.len();
        let x = self.points[r];
        for (j, (y, w)) in d.mesh.nodes().iter().zip(d.mesh.weights()).enumerate() {
            for b in 0..m {
                let vb = d.kv.v()[b];
                if vb == 0.0 {
                    continue;
                }
                let s = d.kv.nodes()[b];
                let det = d.mesh.coarea_factor(j, self.eps * s);
                let src = shifted(*y, 1.0 + self.eps * s / d.radius);
                let e = phi_element(&self.sp, sub(x, src)).expect("test point off the tube");
                out.push((j * m + b, e.scale(C64::from(w * d.kv.weights()[b] * vb * det))));
            }
        }
    }
}

/// Test points for `A_ε`: Fibonacci spheres of radii `R + 2η`, `R + 3η`
/// and, when positive, `R − 2η`, each with N points, and their area weights.
pub fn test_points(grid: &OperatorGrid) -> (Vec<Vec3>, Vec<f64>) {
    let (r, eta, n) = (grid.radius(), grid.eta(), grid.n_nodes());
    let mut radii = vec![r + 2.0 * eta, r + 3.0 * eta];
    if r - 2.0 * eta > 0.0 {
        radii.push(r - 2.0 * eta);
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rho in radii {
        let mesh = SurfaceMesh::fibonacci(Surface::sphere(rho).expect("positive radius"), n)
            .expect("at least one node");
        points.extend_from_slice(mesh.nodes());
        weights.extend_from_slice(mesh.weights());
    }
    (points, weights)
}

fn a_operator(grid: &OperatorGrid, sp: &SpectralParameter, eps: f64, label: OperatorLabel) -> ShellOperator {
    let (points, weights) = test_points(grid);
    let rows = ARows {
        data: grid.data.clone(),
        sp: *sp,
        eps,
        points,
    };
    ShellOperator::new(
        label,
        *sp,
        Arc::new(rows),
        Arc::new(weights),
        grid.data.point_weights.clone(),
    )
}

/// `C_ε F = u(t)((H − a)⁻¹F)(x_Σ + εtν)` on the grid points.
#[derive(Debug, Clone)]
pub struct TraceOperator {
    grid: OperatorGrid,
    sp: SpectralParameter,
    epsilon: f64,
}

impl TraceOperator {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Evaluation points `x_i + εt_aν_i` in grid order.
    pub fn points(&self) -> Vec<Vec3> {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.n_nodes() * g.n_t());
        for (x, nu) in g.mesh().nodes().iter().zip(g.mesh().normals()) {
            for &t in g.t_nodes() {
                let h = self.epsilon * t;
                out.push([x[0] + h * nu[0], x[1] + h * nu[1], x[2] + h * nu[2]]);
            }
        }
        out
    }

    fn weight_by_u(&self, values: Vec<[C64; 4]>) -> DVector<C64> {
        let m = self.grid.n_t();
        let u = self.grid.kv().u();
        DVector::from_iterator(
            4 * values.len(),
            values
                .into_iter()
                .enumerate()
                .flat_map(|(r, v)| v.map(|z| z * u[r % m])),
        )
    }

    pub fn apply(&self, field: &AmbientField) -> Result<DVector<C64>> {
        Ok(self.weight_by_u(free_resolvent(&self.sp, field, &self.points())?))
    }

    /// Same as [`TraceOperator::apply`] from `(H − a)⁻¹F` already computed
    /// on the field's grid.
    pub fn apply_resolved(&self, resolved: &AmbientField) -> Result<DVector<C64>> {
        let values = self
            .points()
            .iter()
            .map(|x| {
                interpolate(resolved, *x).ok_or_else(|| {
                    Error::InvalidArgument("tube point outside the interpolation range of the grid".into())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.weight_by_u(values))
    }
}

#[derive(Debug, Clone)]
pub struct OperatorFamily {
    pub epsilon: f64,
    /// `A_ε`, evaluated at [`test_points`].
    pub a: ShellOperator,
    pub b: ShellOperator,
    pub c: TraceOperator,
}

/// `A_ε`, `B_ε`, `C_ε` for `0 < ε ≤ η`.
pub fn assemble_family(grid: &OperatorGrid, sp: &SpectralParameter, epsilon: f64) -> Result<OperatorFamily> {
    let eta = grid.eta();
    if !(epsilon > 0.0 && epsilon <= eta) {
        return Err(Error::InvalidEpsilon { epsilon, eta });
    }
    for (a, split) in grid.data.splits.iter().enumerate() {
        let t = grid.t_nodes()[a];
        for s in &split.s {
            let separation = epsilon * (t - s).abs();
            if separation <= COLLISION_GUARD {
                return Err(Error::DegenerateQuadrature { separation });
            }
        }
    }
    let cell = grid.mesh().weights().iter().map(|w| (w / PI).sqrt()).collect();
    let w = grid.data.point_weights.clone();
    let b = ShellOperator::new(
        OperatorLabel::BEps,
        *sp,
        Arc::new(BEpsRows {
            data: grid.data.clone(),
            sp: *sp,
            eps: epsilon,
            cell,
        }),
        w.clone(),
        w,
    );
    Ok(OperatorFamily {
        epsilon,
        a: a_operator(grid, sp, epsilon, OperatorLabel::AEps),
        b,
        c: TraceOperator {
            grid: grid.clone(),
            sp: *sp,
            epsilon,
        },
    })
}

#[derive(Debug, Clone)]
pub struct LimitOperators {
    pub a0: ShellOperator,
    pub b0: ShellOperator,
    pub b_prime: ShellOperator,
    /// `B₀ + B′`.
    pub b_sum: ShellOperator,
    pub c0: TraceOperator,
}

/// `A₀`, `B₀ = Û C_σ V̂`, `B′` and `C₀`.
pub fn assemble_limits(grid: &OperatorGrid, sp: &SpectralParameter) -> Result<LimitOperators> {
    let w = grid.data.point_weights.clone();
    let b0 = ShellOperator::new(
        OperatorLabel::B0,
        *sp,
        Arc::new(B0Rows {
            data: grid.data.clone(),
            c_sigma: cauchy_sigma(sp, grid.mesh())?.cached(),
        }),
        w.clone(),
        w.clone(),
    );
    let b_prime = ShellOperator::new(
        OperatorLabel::BPrime,
        *sp,
        Arc::new(BPrimeRows { data: grid.data.clone() }),
        w.clone(),
        w,
    );
    let b_sum = b0.plus(&b_prime, OperatorLabel::B0PlusBPrime)?;
    Ok(LimitOperators {
        a0: a_operator(grid, sp, 0.0, OperatorLabel::A0),
        b0,
        b_prime,
        b_sum,
        c0: TraceOperator {
            grid: grid.clone(),
            sp: *sp,
            epsilon: 0.0,
        },
    })
}

fn check_materialize(grid: &OperatorGrid) -> Result<()> {
    if grid.dim() > MATERIALIZE_CAP {
        return Err(Error::DenseTooLarge {
            dim: grid.dim(),
            cap: MATERIALIZE_CAP,
        });
    }
    Ok(())
}

/// Dense `B₀` assembled entry by entry from the dense `C_σ` and the
/// `t`-rule, without the separable row generator.
pub fn assemble_b0_direct(grid: &OperatorGrid, sp: &SpectralParameter) -> Result<DMatrix<C64>> {
    check_materialize(grid)?;
    let c = cauchy_sigma(sp, grid.mesh())?.to_dense()?;
    let (n, m) = (grid.n_nodes(), grid.n_t());
    let kv = grid.kv();
    let mut out = DMatrix::zeros(grid.dim(), grid.dim());
    for i in 0..n {
        for a in 0..m {
            for j in 0..n {
                for b in 0..m {
                    let f = kv.u()[a] * (kv.weights()[b] * kv.v()[b]);
                    for p in 0..4 {
                        for q in 0..4 {
                            out[(4 * (i * m + a) + p, 4 * (j * m + b) + q)] = c[(4 * i + p, 4 * j + q)] * f;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dense `B′` by a loop over nodes and `t`-pairs.
pub fn b_prime_dense_direct(grid: &OperatorGrid) -> Result<DMatrix<C64>> {
    check_materialize(grid)?;
    let (n, m) = (grid.n_nodes(), grid.n_t());
    let kv = grid.kv();
    let (u, v, sign) = (kv.u(), kv.v(), kv.sign_weights());
    let mut out = DMatrix::zeros(grid.dim(), grid.dim());
    for i in 0..n {
        let an = DiracMatrix::alpha_dot(grid.mesh().normals()[i]);
        for a in 0..m {
            for b in 0..m {
                let k = C64::new(0.0, 0.5 * u[a] * sign[a * m + b] * v[b]);
                for p in 0..4 {
                    for q in 0..4 {
                        out[(4 * (i * m + a) + p, 4 * (i * m + b) + q)] = an.0[p][q] * k;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Dense `B′` as the block-diagonal Kronecker product `(α·ν_i) ⊗ K_V`,
/// permuted to the grid layout.
pub fn b_prime_dense_tensor(grid: &OperatorGrid) -> Result<DMatrix<C64>> {
    check_materialize(grid)?;
    let (n, m) = (grid.n_nodes(), grid.n_t());
    let k = grid.kv().matrix();
    let mut out = DMatrix::zeros(grid.dim(), grid.dim());
    for i in 0..n {
        let an = DiracMatrix::alpha_dot(grid.mesh().normals()[i]);
        let an = DMatrix::from_fn(4, 4, |p, q| an.0[p][q]);
        let block = an.kronecker(k);
        // Kronecker index (p·M + a, q·M + b) to grid index (4a + p, 4b + q).
        for p in 0..4 {
            for q in 0..4 {
                for a in 0..m {
                    for b in 0..m {
                        out[(4 * (i * m + a) + p, 4 * (i * m + b) + q)] = block[(p * m + a, q * m + b)];
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub epsilon: f64,
    /// `‖(B_ε − B₀ − B′)g‖`.
    pub norm_b: f64,
    /// `‖(A_ε − A₀)g‖` over the test points.
    pub norm_a: f64,
    /// `‖(C_ε − C₀)F‖`.
    pub norm_c: f64,
    pub floor_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub n_nodes: usize,
    pub n_t: usize,
    /// `‖(B₀ + B′)g‖`, `‖A₀g‖`, `‖C₀F‖`.
    pub limit_norms: [f64; 3],
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    fn column(&self, k: usize) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| [r.norm_b, r.norm_a, r.norm_c][k])
            .collect()
    }

    fn below_floor(&self, k: usize, value: f64) -> bool {
        value <= FLOOR_REL * self.limit_norms[k]
    }

    /// Ratios between consecutive rows for the B, A and C columns, up to the
    /// first row at the floor.
    pub fn decay_ratios(&self) -> [Vec<f64>; 3] {
        [0, 1, 2].map(|k| {
            let col = self.column(k);
            col.windows(2)
                .take_while(|w| !self.below_floor(k, w[1]))
                .map(|w| w[0] / w[1])
                .collect()
        })
    }

    /// Every ratio before the floor is at least `min_ratio`.
    pub fn decays(&self, min_ratio: f64) -> bool {
        self.decay_ratios().iter().all(|r| r.iter().all(|x| *x >= min_ratio))
    }

    /// Least-squares slope of `log ‖(A_ε − A₀)g‖` against `log ε`.
    pub fn a_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.norm_a > 0.0)
            .map(|r| (r.epsilon.ln(), r.norm_a.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / n, s.1 + p.1 / n));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }

    /// CSV with columns `epsilon,norm_B,norm_A,norm_C,floor_flag`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,norm_B,norm_A,norm_C,floor_flag\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{}\n",
                r.epsilon, r.norm_b, r.norm_a, r.norm_c, r.floor_flag
            ));
        }
        s
    }
}

/// Norms of `(B_ε − B₀ − B′)g`, `(A_ε − A₀)g` and `(C_ε − C₀)F` for each `ε`
/// (decreasing, in `(0, η]`).
pub fn strong_convergence_experiment(
    grid: &OperatorGrid,
    sp: &SpectralParameter,
    g: &DVector<C64>,
    field: &AmbientField,
    eps: &[f64],
) -> Result<ConvergenceReport> {
    if eps.is_empty() {
        return Err(Error::InvalidArgument("the epsilon list is empty".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("the epsilon list must be decreasing".into()));
    }
    if g.len() != grid.dim() {
        return Err(Error::InvalidArgument("density length differs from the grid dimension".into()));
    }
    let limits = assemble_limits(grid, sp)?;
    let (_, test_weights) = test_points(grid);
    let resolved = free_resolvent_on_grid(sp, field);
    let b_lim = limits.b_sum.apply(g);
    let a_lim = limits.a0.apply(g);
    let c_lim = limits.c0.apply_resolved(&resolved)?;
    let pw = grid.point_weights();
    let limit_norms = [
        weighted_norm(&b_lim, pw),
        weighted_norm(&a_lim, &test_weights),
        weighted_norm(&c_lim, pw),
    ];
    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let fam = assemble_family(grid, sp, e)?;
        let norm_b = weighted_norm(&(fam.b.apply(g) - &b_lim), pw);
        let norm_a = weighted_norm(&(fam.a.apply(g) - &a_lim), &test_weights);
        let norm_c = weighted_norm(&(fam.c.apply_resolved(&resolved)? - &c_lim), pw);
        let floor_flag = [norm_b, norm_a, norm_c]
            .iter()
            .zip(&limit_norms)
            .any(|(v, l)| *v <= FLOOR_REL * l);
        rows.push(ConvergenceRow {
            epsilon: e,
            norm_b,
            norm_a,
            norm_c,
            floor_flag,
        });
    }
    Ok(ConvergenceReport {
        n_nodes: grid.n_nodes(),
        n_t: grid.n_t(),
        limit_norms,
        rows,
    })
}
