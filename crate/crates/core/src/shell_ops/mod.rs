//! Layer potentials and boundary operators on spheres, the squeezed family
//! `A_ε, B_ε, C_ε`, their limits `A₀, B₀ + B′, C₀`, and the shell resolvent.
//!
//! Surface integrals with a nearly singular kernel are computed by singular
//! subtraction: the density is frozen at the target's foot point, the frozen
//! part is integrated in closed form over the (shifted) sphere, and the
//! remainder `φ(z − y)(g(y) − g(x))` is summed over the mesh. The one cell
//! the sum cannot see contributes `−(i/4) I(d) α·∇g`, with `I` from
//! [`cell_integral`] and a least-squares tangential gradient.
//!
//! Operators are stored as generators of their 4×4 blocks (every block lies
//! in span{I, β, α}) and applied without materializing the matrix; small
//! ones can be turned into dense matrices.

mod family;
mod grid;
mod layer;
mod sphere;
mod volume;

pub use family::{
    assemble_b0_direct, assemble_family, assemble_limits, b_prime_dense_direct, b_prime_dense_tensor,
    strong_convergence_experiment, test_points, ConvergenceReport, ConvergenceRow, LimitOperators,
    OperatorFamily, TraceOperator, FLOOR_REL,
};
pub use grid::{gradient_stencils, sphere_radius, OperatorGrid, STENCIL_SIZE};
pub use layer::{
    cauchy_sigma, extrapolation_weights, layer_potential, plemelj_check, standard_densities, Density,
    PlemeljDensityReport, PlemeljReport, DEFAULT_OFFSETS,
};
pub use sphere::{cell_integral, sphere_moment};
pub use volume::{
    free_resolvent, free_resolvent_on_grid, shell_resolvent_apply, AmbientField, ShellResolvent, VolumeGrid, CONDITION_CAP,
    LATTICE_CONSTANT, NEAR_CRITICAL_TOL,
};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirac_algebra::{DiracElement, SpectralParameter};
use crate::error::{Error, Result};
use crate::linalg::{largest_singular_value, C64};

/// Largest admissible dimension `4NM` of a grid operator.
pub const DENSE_CAP: usize = 16384;

/// Largest dimension turned into a dense matrix.
pub const MATERIALIZE_CAP: usize = 4096;

/// Largest number of blocks kept in memory by [`ShellOperator::cached`]
/// inside [`ShellOperator::norm`].
pub const CACHE_BLOCKS: usize = 1 << 22;

/// Lanczos steps for matrix-free norms.
const NORM_ITERATIONS: usize = 60;
const CACHED_NORM_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorLabel {
    AEps,
    BEps,
    CEps,
    A0,
    B0,
    BPrime,
    B0PlusBPrime,
    CSigma,
}

/// Block generator: `row(r)` lists the nonzero `(column point, block)` pairs
/// of row point `r`. Repeated columns add up.
pub(crate) trait BlockRows: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>);
}

/// A discretized operator between spaces of 4-spinor fields sampled at
/// quadrature points. Vectors are laid out point-major, four components per
/// point.
#[derive(Clone)]
pub struct ShellOperator {
    label: OperatorLabel,
    sp: SpectralParameter,
    blocks: Arc<dyn BlockRows>,
    row_weights: Arc<Vec<f64>>,
    col_weights: Arc<Vec<f64>>,
}

impl fmt::Debug for ShellOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShellOperator")
            .field("label", &self.label)
            .field("rows", &self.rows())
            .field("cols", &self.cols())
            .finish()
    }
}

pub(crate) fn to_points(x: &DVector<C64>) -> Vec<[C64; 4]> {
    x.as_slice().chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
}

pub(crate) fn from_points(p: &[[C64; 4]]) -> DVector<C64> {
    DVector::from_iterator(4 * p.len(), p.iter().flat_map(|v| v.iter().copied()))
}

fn add4(acc: &mut [C64; 4], v: [C64; 4]) {
    for k in 0..4 {
        acc[k] += v[k];
    }
}

/// Rows handled per task in the adjoint; fixed so that sums are reproducible.
const ADJOINT_CHUNK: usize = 64;

impl ShellOperator {
    pub(crate) fn new(
        label: OperatorLabel,
        sp: SpectralParameter,
        blocks: Arc<dyn BlockRows>,
        row_weights: Arc<Vec<f64>>,
        col_weights: Arc<Vec<f64>>,
    ) -> Self {
        debug_assert_eq!(blocks.rows(), row_weights.len());
        debug_assert_eq!(blocks.cols(), col_weights.len());
        Self {
            label,
            sp,
            blocks,
            row_weights,
            col_weights,
        }
    }

    pub fn label(&self) -> OperatorLabel {
        self.label
    }

    pub fn spectral_parameter(&self) -> SpectralParameter {
        self.sp
    }

    /// Scalar row dimension (four per point).
    pub fn rows(&self) -> usize {
        4 * self.blocks.rows()
    }

    pub fn cols(&self) -> usize {
        4 * self.blocks.cols()
    }

    /// Quadrature weights of the row points.
    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[f64] {
        &self.col_weights
    }

    /// Blocks of one row point.
    pub fn row_blocks(&self, r: usize) -> Vec<(usize, DiracElement)> {
        let mut out = Vec::new();
        self.blocks.row(r, &mut out);
        out
    }

    /// `y = A x`.
    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        assert_eq!(x.len(), self.cols(), "operand has the wrong dimension");
        let xp = to_points(x);
        let y: Vec<[C64; 4]> = (0..self.blocks.rows())
            .into_par_iter()
            .map_init(Vec::new, |buf, r| {
                buf.clear();
                self.blocks.row(r, buf);
                let mut acc = [C64::new(0.0, 0.0); 4];
                for (c, e) in buf.iter() {
                    add4(&mut acc, e.apply(&xp[*c]));
                }
                acc
            })
            .collect();
        from_points(&y)
    }

    /// `x = A* y` (Euclidean adjoint, no weights).
    pub fn apply_adjoint(&self, y: &DVector<C64>) -> DVector<C64> {
        assert_eq!(y.len(), self.rows(), "operand has the wrong dimension");
        let yp = to_points(y);
        let cols = self.blocks.cols();
        let rows: Vec<usize> = (0..self.blocks.rows()).collect();
        let partial: Vec<Vec<[C64; 4]>> = rows
            .par_chunks(ADJOINT_CHUNK)
            .map(|chunk| {
                let mut acc = vec![[C64::new(0.0, 0.0); 4]; cols];
                let mut buf = Vec::new();
                for &r in chunk {
                    buf.clear();
                    self.blocks.row(r, &mut buf);
                    for (c, e) in &buf {
                        add4(&mut acc[*c], e.adjoint().apply(&yp[r]));
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![[C64::new(0.0, 0.0); 4]; cols];
        for part in partial {
            for (t, p) in total.iter_mut().zip(part) {
                add4(t, p);
            }
        }
        from_points(&total)
    }

    /// Dense matrix, refused above [`MATERIALIZE_CAP`].
    pub fn to_dense(&self) -> Result<DMatrix<C64>> {
        let (nr, nc) = (self.rows(), self.cols());
        if nr.max(nc) > MATERIALIZE_CAP {
            return Err(Error::DenseTooLarge {
                dim: nr.max(nc),
                cap: MATERIALIZE_CAP,
            });
        }
        let rows: Vec<Vec<(usize, DiracElement)>> = (0..self.blocks.rows())
            .into_par_iter()
            .map(|r| self.row_blocks(r))
            .collect();
        let mut m = DMatrix::zeros(nr, nc);
        for (r, blocks) in rows.iter().enumerate() {
            for (c, e) in blocks {
                let b = e.to_matrix();
                for p in 0..4 {
                    for q in 0..4 {
                        m[(4 * r + p, 4 * c + q)] += b.0[p][q];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Operator norm between the weighted `L²` spaces of the row and column
    /// points: the largest singular value of `D_r^{1/2} A D_c^{−1/2}`, by
    /// Lanczos. Row blocks are cached when there are at most
    /// [`CACHE_BLOCKS`] of them.
    pub fn norm(&self) -> f64 {
        let sr: Vec<f64> = self.row_weights.iter().flat_map(|w| [w.sqrt(); 4]).collect();
        let sc: Vec<f64> = self.col_weights.iter().flat_map(|w| [w.sqrt(); 4]).collect();
        let scale = |x: &DVector<C64>, s: &[f64], inverse: bool| {
            DVector::from_iterator(
                x.len(),
                x.iter().zip(s).map(|(v, w)| if inverse { v / w } else { v * w }),
            )
        };
        if self.blocks.rows() * self.blocks.cols() <= CACHE_BLOCKS {
            let cached = self.cached();
            return largest_singular_value(
                self.cols(),
                |x| scale(&cached.apply(&scale(x, &sc, true)), &sr, false),
                |y| scale(&cached.apply_adjoint(&scale(y, &sr, false)), &sc, true),
                CACHED_NORM_ITERATIONS.min(self.cols()),
            );
        }
        largest_singular_value(
            self.cols(),
            |x| scale(&self.apply(&scale(x, &sc, true)), &sr, false),
            |y| scale(&self.apply_adjoint(&scale(y, &sr, false)), &sc, true),
            NORM_ITERATIONS,
        )
    }

    /// The same operator with every row's blocks computed once and stored.
    pub fn cached(&self) -> ShellOperator {
        let rows: Vec<Vec<(usize, DiracElement)>> = (0..self.blocks.rows())
            .into_par_iter()
            .map(|r| self.row_blocks(r))
            .collect();
        ShellOperator::new(
            self.label,
            self.sp,
            Arc::new(StoredRows {
                cols: self.blocks.cols(),
                rows,
            }),
            self.row_weights.clone(),
            self.col_weights.clone(),
        )
    }

    /// `self + other` on the same spaces.
    pub fn plus(&self, other: &ShellOperator, label: OperatorLabel) -> Result<ShellOperator> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::InvalidArgument("operator dimensions differ".into()));
        }
        Ok(ShellOperator::new(
            label,
            self.sp,
            Arc::new(SumRows(self.blocks.clone(), other.blocks.clone())),
            self.row_weights.clone(),
            self.col_weights.clone(),
        ))
    }
}

struct StoredRows {
    cols: usize,
    rows: Vec<Vec<(usize, DiracElement)>>,
}

impl BlockRows for StoredRows {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>) {
        out.extend_from_slice(&self.rows[r]);
    }
}

struct SumRows(Arc<dyn BlockRows>, Arc<dyn BlockRows>);

impl BlockRows for SumRows {
    fn rows(&self) -> usize {
        self.0.rows()
    }

    fn cols(&self) -> usize {
        self.0.cols()
    }

    fn row(&self, r: usize, out: &mut Vec<(usize, DiracElement)>) {
        self.0.row(r, out);
        self.1.row(r, out);
    }
}

/// Weighted `L²` norm of a point-major field.
pub fn weighted_norm(x: &DVector<C64>, weights: &[f64]) -> f64 {
    x.as_slice()
        .chunks_exact(4)
        .zip(weights)
        .map(|(v, w)| w * v.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}
