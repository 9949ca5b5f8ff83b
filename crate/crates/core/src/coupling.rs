//! Nyström discretization of `K_V f(t) = (i/2) u(t) ∫ sign(t−s) v(s) f(s) ds`
//! and the effective couplings
//! `λ_e = ∫ v (1 − K_V²)⁻¹ u`, `λ_s = ∫ v (1 + K_V²)⁻¹ u`.
//!
//! The sign kernel is integrated against the panel interpolant of `v f`
//! (product integration), so the discrete operator is exact on piecewise
//! polynomials of the panel order. For square wells both couplings have
//! closed forms, `2 tan(τη/2)` and `2 tanh(τη/2)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{condition_1, lu_solve};
use crate::potential::UVFactorization;
use crate::quadrature::PanelRule;

/// Default Nyström node count.
pub const DEFAULT_NODES: usize = 128;

/// Condition number above which a non-contractive solve is refused.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Tolerance on the imaginary residue of computed couplings.
pub const REALNESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingKind {
    /// `V` enters as an electrostatic term, resolvent `(1 − K²)⁻¹`.
    Electrostatic,
    /// `V` enters as a Lorentz scalar `βV`, resolvent `(1 + K²)⁻¹`.
    Scalar,
}

impl CouplingKind {
    fn sign(self) -> f64 {
        match self {
            Self::Electrostatic => 1.0,
            Self::Scalar => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Electrostatic => "electrostatic",
            Self::Scalar => "scalar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DirectSolve,
    Neumann,
    ClosedForm,
}

/// A computed coupling with its solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingValue {
    pub kind: CouplingKind,
    pub method: Method,
    pub value: f64,
    pub imag_residue: f64,
    pub condition: Option<f64>,
    pub error_bound: Option<f64>,
}

/// Discretized `K_V` on a composite Gauss–Legendre rule.
#[derive(Debug, Clone)]
pub struct KVOperator {
    rule: PanelRule,
    u: Vec<f64>,
    v: Vec<f64>,
    sign: Vec<f64>,
    matrix: DMatrix<C64>,
}

/// Assembles `K_V` with (about) `n` nodes; panels are refined at the
/// breakpoints of the profile, which may add nodes.
pub fn build_kv(f: &UVFactorization, n: usize) -> Result<KVOperator> {
    if n < 8 {
        return Err(Error::InvalidArgument(format!("K_V needs at least 8 nodes, got {n}")));
    }
    let rule = PanelRule::for_count(n)?.with_breakpoints(&f.breakpoints());
    Ok(KVOperator::on_rule(rule, f))
}

impl KVOperator {
    pub fn on_rule(rule: PanelRule, f: &UVFactorization) -> Self {
        let u: Vec<f64> = rule.nodes().iter().map(|&t| f.u(t)).collect();
        let v: Vec<f64> = rule.nodes().iter().map(|&t| f.v(t)).collect();
        let sign = rule.sign_matrix();
        let n = rule.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| C64::new(0.0, 0.5 * u[i] * sign[i * n + j] * v[j]));
        Self { rule, u, v, sign, matrix }
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    pub fn rule(&self) -> &PanelRule {
        &self.rule
    }

    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    pub fn weights(&self) -> &[f64] {
        self.rule.weights()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    /// Product-integration weights `∫ sign(t_i − s) ℓ_j(s) ds`, row-major.
    pub fn sign_weights(&self) -> &[f64] {
        &self.sign
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `‖u‖₂` and `‖v‖₂` under the rule.
    pub fn factor_norms(&self) -> (f64, f64) {
        let w = self.weights();
        let uu: f64 = w.iter().zip(&self.u).map(|(w, x)| w * x * x).sum();
        let vv: f64 = w.iter().zip(&self.v).map(|(w, x)| w * x * x).sum();
        (uu.sqrt(), vv.sqrt())
    }

    /// Hilbert–Schmidt norm of the kernel, `½‖u‖₂‖v‖₂`.
    pub fn hs_norm(&self) -> f64 {
        let (nu, nv) = self.factor_norms();
        0.5 * nu * nv
    }

    pub fn apply(&self, x: &DVector<C64>) -> DVector<C64> {
        &self.matrix * x
    }

    /// `∫ v x` under the rule.
    pub fn pair_with_v(&self, x: &DVector<C64>) -> C64 {
        self.weights()
            .iter()
            .zip(&self.v)
            .zip(x.iter())
            .map(|((w, v), x)| *x * (w * v))
            .sum()
    }

    fn u_vector(&self) -> DVector<C64> {
        DVector::from_iterator(self.len(), self.u.iter().map(|&x| C64::from(x)))
    }

    /// `1 ∓ K²` for the given kind.
    pub fn resolvent_matrix(&self, kind: CouplingKind) -> DMatrix<C64> {
        let k2 = &self.matrix * &self.matrix;
        DMatrix::identity(self.len(), self.len()) - k2 * C64::from(kind.sign())
    }
}

fn real_value(kind: CouplingKind, method: Method, z: C64) -> CouplingValue {
    CouplingValue {
        kind,
        method,
        value: z.re,
        imag_residue: z.im.abs(),
        condition: None,
        error_bound: None,
    }
}

/// Solves `(1 ∓ K²) x = u` and returns `∫ v x`.
pub fn lambda_direct(k: &KVOperator, kind: CouplingKind) -> Result<CouplingValue> {
    let a = k.resolvent_matrix(kind);
    let condition = condition_1(&a);
    if k.hs_norm() >= 1.0 && condition > CONDITION_LIMIT {
        return Err(Error::NonContractive {
            hs_norm: k.hs_norm(),
            condition,
        });
    }
    let x = lu_solve(a, &k.u_vector())?;
    let mut out = real_value(kind, Method::DirectSolve, k.pair_with_v(&x));
    out.condition = Some(condition);
    debug_assert!(out.imag_residue <= REALNESS_TOL * out.value.abs().max(1.0));
    Ok(out)
}

/// `λ_e = ∫ v (1 − K²)⁻¹ u`.
pub fn lambda_electrostatic(k: &KVOperator) -> Result<CouplingValue> {
    lambda_direct(k, CouplingKind::Electrostatic)
}

/// `λ_s = ∫ v (1 + K²)⁻¹ u`.
pub fn lambda_scalar(k: &KVOperator) -> Result<CouplingValue> {
    lambda_direct(k, CouplingKind::Scalar)
}

/// Partial sum `Σ_{n ≤ terms} (±1)ⁿ ∫ v K^{2n} u` with the geometric tail
/// bound `HS^{2(terms+1)} / (1 − HS²) ‖u‖‖v‖`.
pub fn lambda_neumann(k: &KVOperator, kind: CouplingKind, terms: usize) -> Result<CouplingValue> {
    let hs = k.hs_norm();
    if hs >= 1.0 {
        return Err(Error::NonContractive {
            hs_norm: hs,
            condition: condition_1(&k.resolvent_matrix(kind)),
        });
    }
    let sign = C64::from(kind.sign());
    let mut term = k.u_vector();
    let mut total = k.pair_with_v(&term);
    for _ in 0..terms {
        term = k.apply(&k.apply(&term)) * sign;
        total += k.pair_with_v(&term);
    }
    let (nu, nv) = k.factor_norms();
    let mut out = real_value(kind, Method::Neumann, total);
    out.error_bound = Some(hs.powi(2 * (terms as i32 + 1)) / (1.0 - hs * hs) * nu * nv);
    Ok(out)
}

/// `2 tan(τη/2)` or `2 tanh(τη/2)` for a square well with `∫V = τη`.
pub fn closed_form(kind: CouplingKind, tau_eta: f64) -> CouplingValue {
    let value = match kind {
        CouplingKind::Electrostatic => 2.0 * (0.5 * tau_eta).tan(),
        CouplingKind::Scalar => 2.0 * (0.5 * tau_eta).tanh(),
    };
    CouplingValue {
        kind,
        method: Method::ClosedForm,
        value,
        imag_residue: 0.0,
        condition: None,
        error_bound: None,
    }
}

/// `∫ v (1 − K²)⁻¹ K u`, which vanishes for every profile.
pub fn oddness_residual(k: &KVOperator) -> Result<C64> {
    let ku = k.apply(&k.u_vector());
    let x = lu_solve(k.resolvent_matrix(CouplingKind::Electrostatic), &ku)?;
    Ok(k.pair_with_v(&x))
}

/// All available methods for one kind, with their largest pairwise gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTriangle {
    pub kind: CouplingKind,
    pub direct: CouplingValue,
    pub neumann: Option<CouplingValue>,
    pub closed_form: Option<CouplingValue>,
    pub max_disagreement: f64,
}

pub fn method_triangle(
    k: &KVOperator,
    f: &UVFactorization,
    kind: CouplingKind,
    terms: usize,
) -> Result<MethodTriangle> {
    let direct = lambda_direct(k, kind)?;
    let neumann = lambda_neumann(k, kind, terms).ok();
    let closed = f
        .profile()
        .square_tau()
        .map(|tau| closed_form(kind, tau * f.profile().eta()));
    let values: Vec<f64> = [Some(direct), neumann, closed]
        .iter()
        .flatten()
        .map(|c| c.value)
        .collect();
    let mut gap: f64 = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            gap = gap.max((a - b).abs());
        }
    }
    Ok(MethodTriangle {
        kind,
        direct,
        neumann,
        closed_form: closed,
        max_disagreement: gap,
    })
}
