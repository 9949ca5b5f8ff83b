//! Spherical shells in partial waves.
//!
//! With `φ = (g(r)/r Ω_κ, i f(r)/r Ω_{−κ})` and `(σ·r̂) Ω_κ = −Ω_{−κ}`, the
//! operator `−i(α·ν)` acts on the channel pair `y = (g, f)` as
//! `J_e = [[0, −1], [1, 0]]`, and `−i(α·ν)β` as `J_s = [[0, 1], [1, 0]]`.
//! Integrating `(H + λδ_Σ − a)φ = 0` across `r = R` gives
//! `J (y(R⁺) − y(R⁻)) = −(λ/2) (y(R⁺) + y(R⁻))` for the electrostatic shell,
//! i.e. `y(R⁺) = (I − (λ/2)J)⁻¹ (I + (λ/2)J) y(R⁻)` (with `J_s` for the
//! scalar shell `λβδ_Σ`). In terms of the interior trace `φ₊` and exterior
//! trace `φ₋` this is `i(α·ν)(φ₊ − φ₋) = −(λ/2)(φ₊ + φ₋)`.
//!
//! `J_e² = −I`, so the electrostatic matching is the rotation by
//! `2 arctan(λ/2)`; `J_s² = I`, so the scalar matching is a hyperbolic
//! rotation by `2 artanh(λ/2)`, singular at `λ = ±2`.

mod radial;
mod study;

pub use radial::{
    det, distance, expm_traceless, graded_nodes, magnus_step, mat_mul, mat_vec, propagate,
    propagate_vector, rotation, uniform_nodes, ChannelSystem, Mat2, Vec2, IDENTITY,
};
pub use study::{klein_convergence_study, KleinRow, KleinStudy};

use serde::{Deserialize, Serialize};

use crate::coupling::CouplingKind;
use crate::error::{Error, Result};
use crate::potential::SqueezedFamily;

/// Distance from `|λ| = 2` treated as critical.
pub const CRITICAL_TOL: f64 = 1e-12;

/// Channel image of `−i(α·ν)` (electrostatic) or `−i(α·ν)β` (scalar).
pub fn generator(kind: CouplingKind) -> Mat2 {
    match kind {
        CouplingKind::Electrostatic => [[0.0, -1.0], [1.0, 0.0]],
        CouplingKind::Scalar => [[0.0, 1.0], [1.0, 0.0]],
    }
}

/// `exp(θ J_kind)`: the rotation (electrostatic) or boost (scalar) by `θ`.
pub fn limit_matrix(kind: CouplingKind, theta: f64) -> Mat2 {
    match kind {
        CouplingKind::Electrostatic => rotation(theta),
        CouplingKind::Scalar => {
            let (c, s) = (theta.cosh(), theta.sinh());
            [[c, s], [s, c]]
        }
    }
}

/// `y(R⁺) = M y(R⁻)` for a shell of strength `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionMatrix {
    pub matrix: Mat2,
    pub kind: CouplingKind,
    pub lambda: f64,
}

/// Cayley form `M = (I − (λ/2)J)⁻¹ (I + (λ/2)J)`.
///
/// `|λ| = 2` is refused for both kinds. The scalar matrix is singular there;
/// the electrostatic one is not, but those couplings are excluded for the
/// shell operator itself.
pub fn shell_matching(lambda: f64, kind: CouplingKind) -> Result<TransmissionMatrix> {
    if !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite, got {lambda}")));
    }
    if (lambda.abs() - 2.0).abs() <= CRITICAL_TOL {
        return Err(Error::CriticalCoupling {
            lambda,
            kind: kind.name(),
        });
    }
    let j = generator(kind);
    let c = 0.5 * lambda;
    let minus = [[1.0 - c * j[0][0], -c * j[0][1]], [-c * j[1][0], 1.0 - c * j[1][1]]];
    let plus = [[1.0 + c * j[0][0], c * j[0][1]], [c * j[1][0], 1.0 + c * j[1][1]]];
    let d = det(&minus);
    let inv = [[minus[1][1] / d, -minus[0][1] / d], [-minus[1][0] / d, minus[0][0] / d]];
    Ok(TransmissionMatrix {
        matrix: mat_mul(&inv, &plus),
        kind,
        lambda,
    })
}

/// Discretization parameters of the radial solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Series start `r0 = r0_fraction · R`.
    pub r0_fraction: f64,
    pub series_order: usize,
    /// Geometric steps from `r0` to the shell.
    pub inner_steps: usize,
    /// Geometric steps from the shell to `r_max`.
    pub outer_steps: usize,
    /// Largest step length anywhere.
    pub h_max: f64,
    /// `r_max = R + decay_lengths / √(m² − a²)`.
    pub decay_lengths: f64,
    /// Magnus steps across the squeezed layer.
    pub squeezed_panels: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            r0_fraction: 0.01,
            series_order: 6,
            inner_steps: 200,
            outer_steps: 200,
            h_max: 0.25,
            decay_lengths: 30.0,
            squeezed_panels: 64,
        }
    }
}

impl SolverConfig {
    /// Every step count and the step cap refined by a factor of two.
    pub fn refined(&self) -> Self {
        Self {
            inner_steps: 2 * self.inner_steps,
            outer_steps: 2 * self.outer_steps,
            h_max: 0.5 * self.h_max,
            squeezed_panels: 2 * self.squeezed_panels,
            ..*self
        }
    }
}

/// What sits between the interior and exterior free regions.
#[derive(Debug, Clone, PartialEq)]
pub enum Interface {
    Free,
    Shell(TransmissionMatrix),
    Squeezed { family: SqueezedFamily, kind: CouplingKind },
}

impl Interface {
    fn half_width(&self) -> f64 {
        match self {
            Self::Squeezed { family, .. } => family.epsilon(),
            _ => 0.0,
        }
    }
}

/// Propagator of the channel from `R − ε` to `R + ε` through `V_ε`
/// (electrostatic, `a → a − V`) or `βV_ε` (scalar, `m → m + V`).
pub fn transfer_through_squeezed(
    ch: &ChannelSystem,
    a: f64,
    family: &SqueezedFamily,
    kind: CouplingKind,
    panels: usize,
) -> Result<Mat2> {
    let eps = family.epsilon();
    if ch.radius - eps <= 0.0 {
        return Err(Error::InvalidEpsilon { epsilon: eps, eta: ch.radius });
    }
    let coeff = |r: f64| {
        let v = family.evaluate(r - ch.radius);
        match kind {
            CouplingKind::Electrostatic => ch.coefficients(r, a, v, 0.0),
            CouplingKind::Scalar => ch.coefficients(r, a, 0.0, v),
        }
    };
    Ok(propagate(&coeff, &uniform_nodes(ch.radius - eps, ch.radius + eps, panels.max(1))))
}

/// Normalized matching determinant `det[ψ_out(R⁺), T ψ_in(R⁻)]`, whose
/// zeros in `a ∈ (−m, m)` are the channel eigenvalues.
pub fn matching_determinant(ch: &ChannelSystem, a: f64, iface: &Interface, cfg: &SolverConfig) -> Result<f64> {
    let k = ch.decay_rate(a)?;
    let eps = iface.half_width();
    let r0 = cfg.r0_fraction * ch.radius;
    let (r_in, r_out) = (ch.radius - eps, ch.radius + eps);
    if r_in <= r0 {
        return Err(Error::InvalidEpsilon { epsilon: eps, eta: ch.radius - r0 });
    }
    let free = |r: f64| ch.coefficients(r, a, 0.0, 0.0);
    let seed = ch.origin_series(a, r0, cfg.series_order);
    let inner = propagate_vector(&free, &graded_nodes(r0, r_in, cfg.inner_steps, cfg.h_max), seed);
    let crossed = match iface {
        Interface::Free => inner,
        Interface::Shell(t) => mat_vec(&t.matrix, inner),
        Interface::Squeezed { family, kind } => {
            mat_vec(&transfer_through_squeezed(ch, a, family, *kind, cfg.squeezed_panels)?, inner)
        }
    };
    let r_max = r_out + cfg.decay_lengths / k;
    let tail = [1.0, -k / (a + ch.m)];
    let outer = propagate_vector(&free, &graded_nodes(r_max, r_out, cfg.outer_steps, cfg.h_max), tail);
    let d = outer[0] * crossed[1] - outer[1] * crossed[0];
    Ok(d / ((outer[0].hypot(outer[1])) * crossed[0].hypot(crossed[1])))
}

/// Scan window in `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scan {
    pub a_min: f64,
    pub a_max: f64,
    pub steps: usize,
}

impl Scan {
    /// `(−m, m)` shrunk by `10⁻³ m` at both ends, 400 steps.
    pub fn gap(m: f64) -> Self {
        Self {
            a_min: -m * (1.0 - 1e-3),
            a_max: m * (1.0 - 1e-3),
            steps: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub kappa: i32,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub brackets: Vec<(f64, f64)>,
}

/// Bisection tolerance on eigenvalues.
pub const ROOT_TOL: f64 = 1e-10;

/// Eigenvalues in the scan window by sign changes of the matching
/// determinant, bisected to [`ROOT_TOL`]. An empty result is not an error.
pub fn find_gap_eigenvalues(
    ch: &ChannelSystem,
    iface: &Interface,
    scan: Scan,
    cfg: &SolverConfig,
) -> Result<SpectralResult> {
    if !(scan.a_min < scan.a_max && scan.a_min > -ch.m && scan.a_max < ch.m && scan.steps >= 1) {
        return Err(Error::InvalidArgument(format!(
            "scan window [{}, {}] must lie inside (-m, m)",
            scan.a_min, scan.a_max
        )));
    }
    let d = |a: f64| matching_determinant(ch, a, iface, cfg);
    let grid: Vec<f64> = (0..=scan.steps)
        .map(|j| scan.a_min + (scan.a_max - scan.a_min) * j as f64 / scan.steps as f64)
        .collect();
    let values = grid.iter().map(|&a| d(a)).collect::<Result<Vec<f64>>>()?;
    let mut out = SpectralResult {
        kappa: ch.kappa,
        eigenvalues: Vec::new(),
        residuals: Vec::new(),
        brackets: Vec::new(),
    };
    for j in 0..scan.steps {
        let (mut lo, mut hi) = (grid[j], grid[j + 1]);
        let (mut dlo, dhi) = (values[j], values[j + 1]);
        if dlo == 0.0 {
            out.eigenvalues.push(lo);
            out.residuals.push(0.0);
            out.brackets.push((lo, lo));
            continue;
        }
        if dlo * dhi >= 0.0 {
            continue;
        }
        let bracket = (lo, hi);
        while hi - lo > ROOT_TOL {
            let mid = 0.5 * (lo + hi);
            let dm = d(mid)?;
            if dm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if dm * dlo < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                dlo = dm;
            }
        }
        let root = 0.5 * (lo + hi);
        out.residuals.push(d(root)?.abs());
        out.eigenvalues.push(root);
        out.brackets.push(bracket);
    }
    Ok(out)
}
