//! 4×4 Dirac matrices, the spectral parameter with its square-root branch,
//! the fundamental solution of `H - a` and its three-term split.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Below this distance kernels refuse to evaluate.
pub const SINGULAR_GUARD: f64 = 1e-12;

/// Pauli matrix σ_j for j = 1, 2, 3.
pub fn pauli(j: usize) -> [[C64; 2]; 2] {
    match j {
        1 => [[ZERO, ONE], [ONE, ZERO]],
        2 => [[ZERO, -I], [I, ZERO]],
        3 => [[ONE, ZERO], [ZERO, -ONE]],
        _ => panic!("Pauli index must be 1, 2 or 3"),
    }
}

/// Dense row-major 4×4 complex matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiracMatrix(pub [[C64; 4]; 4]);

impl DiracMatrix {
    pub fn zero() -> Self {
        Self([[ZERO; 4]; 4])
    }

    pub fn identity() -> Self {
        let mut m = Self::zero();
        for k in 0..4 {
            m.0[k][k] = ONE;
        }
        m
    }

    /// α_j = [[0, σ_j], [σ_j, 0]].
    pub fn alpha(j: usize) -> Self {
        let s = pauli(j);
        let mut m = Self::zero();
        for r in 0..2 {
            for c in 0..2 {
                m.0[r][c + 2] = s[r][c];
                m.0[r + 2][c] = s[r][c];
            }
        }
        m
    }

    /// β = diag(1, 1, -1, -1).
    pub fn beta() -> Self {
        let mut m = Self::identity();
        m.0[2][2] = -ONE;
        m.0[3][3] = -ONE;
        m
    }

    /// α·v for a real 3-vector v.
    pub fn alpha_dot(v: [f64; 3]) -> Self {
        DiracElement::alpha_dot(v).to_matrix()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[r][c]
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zero();
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = self.0[c][r];
            }
        }
        m
    }

    pub fn conj(&self) -> Self {
        let mut m = *self;
        m.0.iter_mut().flatten().for_each(|z| *z = z.conj());
        m
    }

    pub fn adjoint(&self) -> Self {
        self.transpose().conj()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..4).map(|c| self.0[r][c] * v[c]).sum();
        }
        out
    }
}

impl Add for DiracMatrix {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for r in 0..4 {
            for c in 0..4 {
                self.0[r][c] += rhs.0[r][c];
            }
        }
        self
    }
}

impl Sub for DiracMatrix {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs * C64::from(-1.0)
    }
}

impl Neg for DiracMatrix {
    type Output = Self;
    fn neg(self) -> Self {
        self * C64::from(-1.0)
    }
}

impl Mul for DiracMatrix {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut m = Self::zero();
        for r in 0..4 {
            for c in 0..4 {
                m.0[r][c] = (0..4).map(|k| self.0[r][k] * rhs.0[k][c]).sum();
            }
        }
        m
    }
}

impl Mul<C64> for DiracMatrix {
    type Output = Self;
    fn mul(mut self, s: C64) -> Self {
        self.0.iter_mut().flatten().for_each(|z| *z *= s);
        self
    }
}

impl Mul<f64> for DiracMatrix {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self * C64::from(s)
    }
}

/// Element of span{I, β, α₁, α₂, α₃}: `id·I + beta·β + Σ alpha_j α_j`.
///
/// The fundamental solution and every weighted sum of its values live in
/// this span, so layer operators can store five coefficients per block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiracElement {
    pub id: C64,
    pub beta: C64,
    pub alpha: [C64; 3],
}

impl DiracElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scalar(s: C64) -> Self {
        Self { id: s, ..Self::default() }
    }

    pub fn alpha_dot(v: [f64; 3]) -> Self {
        Self {
            alpha: [C64::from(v[0]), C64::from(v[1]), C64::from(v[2])],
            ..Self::default()
        }
    }

    pub fn to_matrix(&self) -> DiracMatrix {
        let (a, b, c) = (self.alpha[0], self.alpha[1], self.alpha[2]);
        // α·c = [[0, σ·c], [σ·c, 0]] with σ·c = [[c3, c1 - i c2], [c1 + i c2, -c3]].
        let s = [[c, a - I * b], [a + I * b, -c]];
        let mut m = DiracMatrix::zero();
        for r in 0..2 {
            for col in 0..2 {
                m.0[r][col + 2] = s[r][col];
                m.0[r + 2][col] = s[r][col];
            }
        }
        m.0[0][0] = self.id + self.beta;
        m.0[1][1] = self.id + self.beta;
        m.0[2][2] = self.id - self.beta;
        m.0[3][3] = self.id - self.beta;
        m
    }

    pub fn apply(&self, v: &[C64; 4]) -> [C64; 4] {
        let [a, b, c] = self.alpha;
        let p = self.id + self.beta;
        let q = self.id - self.beta;
        let s01 = a - I * b;
        let s10 = a + I * b;
        [
            p * v[0] + c * v[2] + s01 * v[3],
            p * v[1] + s10 * v[2] - c * v[3],
            c * v[0] + s01 * v[1] + q * v[2],
            s10 * v[0] - c * v[1] + q * v[3],
        ]
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            id: self.id * s,
            beta: self.beta * s,
            alpha: [self.alpha[0] * s, self.alpha[1] * s, self.alpha[2] * s],
        }
    }

    /// Conjugate transpose; `I`, `β` and `α_j` are Hermitian.
    pub fn adjoint(&self) -> Self {
        Self {
            id: self.id.conj(),
            beta: self.beta.conj(),
            alpha: [self.alpha[0].conj(), self.alpha[1].conj(), self.alpha[2].conj()],
        }
    }

    pub fn max_coeff(&self) -> f64 {
        [self.id, self.beta, self.alpha[0], self.alpha[1], self.alpha[2]]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

impl Add for DiracElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            id: self.id + rhs.id,
            beta: self.beta + rhs.beta,
            alpha: [
                self.alpha[0] + rhs.alpha[0],
                self.alpha[1] + rhs.alpha[1],
                self.alpha[2] + rhs.alpha[2],
            ],
        }
    }
}

impl AddAssign for DiracElement {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for DiracElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + rhs.scale(C64::from(-1.0))
    }
}

/// Spectral parameter `a` with mass `m` and the branch `κ = √(m² − a²)`,
/// Re κ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralParameter {
    a: C64,
    m: f64,
    kappa: C64,
}

impl SpectralParameter {
    /// Accepts `a ∈ (ℂ∖ℝ) ∪ (−m, m)`.
    pub fn new(a: C64, m: f64) -> Result<Self> {
        let invalid = Error::InvalidSpectralParameter { re: a.re, im: a.im, m };
        if !(m.is_finite() && m >= 0.0 && a.re.is_finite() && a.im.is_finite()) {
            return Err(invalid);
        }
        if a.im == 0.0 && a.re.abs() >= m {
            return Err(invalid);
        }
        let mut kappa = (C64::from(m * m) - a * a).sqrt();
        if kappa.re < 0.0 {
            kappa = -kappa;
        }
        if kappa.re == 0.0 {
            return Err(Error::DegenerateBranch);
        }
        Ok(Self { a, m, kappa })
    }

    /// The massless static limit `a = m = 0` (κ = 0), where the kernel
    /// reduces to its Riesz part.
    pub fn massless_static() -> Self {
        Self { a: ZERO, m: 0.0, kappa: ZERO }
    }

    pub fn a(&self) -> C64 {
        self.a
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// `√(m² − a²)` with positive real part.
    pub fn kappa(&self) -> C64 {
        self.kappa
    }

    /// Parameter for `ā`.
    pub fn conj(&self) -> Self {
        Self {
            a: self.a.conj(),
            m: self.m,
            kappa: self.kappa.conj(),
        }
    }
}

impl Default for SpectralParameter {
    fn default() -> Self {
        Self::new(I, 1.0).expect("a = i, m = 1 is valid")
    }
}

fn radius(x: [f64; 3]) -> Result<f64> {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if !(r >= SINGULAR_GUARD) {
        return Err(Error::SingularPoint { norm: r });
    }
    Ok(r)
}

/// Fundamental solution of `H − a` as an element of span{I, β, α}.
pub fn phi_element(sp: &SpectralParameter, x: [f64; 3]) -> Result<DiracElement> {
    let r = radius(x)?;
    let k = sp.kappa;
    let e = (-k * r).exp() / (4.0 * PI * r);
    let g = e * (ONE + k * r) * I / (r * r);
    Ok(DiracElement {
        id: e * sp.a,
        beta: e * sp.m,
        alpha: [g * x[0], g * x[1], g * x[2]],
    })
}

/// `φᵃ(x) = e^{−κ|x|}/(4π|x|) (a + mβ + (1 + κ|x|) iα·x/|x|²)`.
pub fn phi_a(sp: &SpectralParameter, x: [f64; 3]) -> Result<DiracMatrix> {
    phi_element(sp, x).map(|e| e.to_matrix())
}

/// The split `φᵃ = ω₁ + ω₂ + ω₃` into a decaying part, a bounded part and
/// the `a`-independent Riesz part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSplit {
    sp: SpectralParameter,
}

pub fn kernel_split(sp: &SpectralParameter) -> KernelSplit {
    KernelSplit { sp: *sp }
}

impl KernelSplit {
    /// `e^{−κr}/(4πr) (a + mβ + κ iα·x/r)`.
    pub fn omega1(&self, x: [f64; 3]) -> Result<DiracMatrix> {
        let r = radius(x)?;
        let k = self.sp.kappa;
        let e = (-k * r).exp() / (4.0 * PI * r);
        let g = e * k * I / r;
        Ok(DiracElement {
            id: e * self.sp.a,
            beta: e * self.sp.m,
            alpha: [g * x[0], g * x[1], g * x[2]],
        }
        .to_matrix())
    }

    /// `(e^{−κr} − 1)/(4π) iα·x/r³`.
    pub fn omega2(&self, x: [f64; 3]) -> Result<DiracMatrix> {
        let r = radius(x)?;
        // exp_m1 keeps the bounded part accurate as r → 0.
        let kr = -self.sp.kappa * r;
        let em1 = if kr.norm() < 1e-5 {
            kr * (ONE + kr * (0.5 + kr / 6.0))
        } else {
            kr.exp() - ONE
        };
        let g = em1 * I / (4.0 * PI * r * r * r);
        Ok(DiracElement {
            alpha: [g * x[0], g * x[1], g * x[2]],
            ..DiracElement::default()
        }
        .to_matrix())
    }

    /// `(i/4π) α·x/r³`.
    pub fn omega3(&self, x: [f64; 3]) -> Result<DiracMatrix> {
        let k = riesz_kernel(x)?;
        Ok(DiracElement {
            alpha: [I * k[0], I * k[1], I * k[2]],
            ..DiracElement::default()
        }
        .to_matrix())
    }
}

/// `k(x) = x / (4π|x|³)`.
pub fn riesz_kernel(x: [f64; 3]) -> Result<[f64; 3]> {
    let r = radius(x)?;
    let c = 1.0 / (4.0 * PI * r * r * r);
    Ok([c * x[0], c * x[1], c * x[2]])
}
