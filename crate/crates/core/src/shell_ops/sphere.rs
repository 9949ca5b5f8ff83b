//! Closed-form single-layer integrals of `φᵃ` over a sphere centred at the
//! origin, and the self-cell integral used by the local corrections.
//!
//! With `r = |z − y|` the surface element of `|y| = ρ` is `2πρ r dr / |z|`,
//! and `(z − y)·ẑ = (|z|² − ρ² + r²)/(2|z|)`, so every moment is a
//! one-dimensional integral in `r` over `[||z| − ρ|, |z| + ρ]`.

use num_complex::Complex64 as C64;

use crate::dirac_algebra::{DiracElement, SpectralParameter};
use crate::geometry::{norm, Vec3};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative distance below which a point counts as lying on the sphere.
pub(crate) const ON_SPHERE_TOL: f64 = 1e-12;

/// `(e^{−κa} − e^{−κb}) / κ`, finite as `κ → 0`.
fn exp_diff_over_kappa(k: C64, a: f64, b: f64) -> C64 {
    let x = -k * (b - a);
    let em1 = if x.norm() < 1e-4 {
        x * (1.0 + x * (0.5 + x / 6.0))
    } else {
        x.exp() - 1.0
    };
    if k.norm() * (b - a) < 1e-12 {
        return C64::from(b - a) * (-k * a).exp();
    }
    -(-k * a).exp() * em1 / k
}

/// `∫_{|y|=ρ} φᵃ(z − y) dσ(y)`; the principal value when `|z| = ρ`.
pub fn sphere_moment(sp: &SpectralParameter, z: Vec3, rho: f64) -> DiracElement {
    let k = sp.kappa();
    let zn = norm(z);
    if zn < 1e-12 * rho {
        let s = rho * (-k * rho).exp();
        return DiracElement {
            id: sp.a() * s,
            beta: s * sp.m(),
            ..DiracElement::default()
        };
    }
    // Points within roundoff of the sphere get the principal value.
    let d = if (zn - rho).abs() <= ON_SPHERE_TOL * rho { 0.0 } else { zn - rho };
    let (rm, rp) = (d.abs(), zn + rho);
    let s0 = exp_diff_over_kappa(k, rm, rp) * (rho / (2.0 * zn));
    let (em, ep) = ((-k * rm).exp(), (-k * rp).exp());
    // F(r₊) − F(r₋) with F(r) = −e^{−κr}(r + 2/κ).
    let f = em * rm - ep * rp + 2.0 * exp_diff_over_kappa(k, rm, rp);
    // c/r₋ and c/r₊ with c = |z|² − ρ²; the first is dropped on the sphere.
    let jump = if rm > 0.0 { em * (d.signum() * rp) } else { C64::from(0.0) };
    let s1 = (f + jump - ep * d) * (rho / (4.0 * zn * zn));
    let g = I * s1 / zn;
    DiracElement {
        id: sp.a() * s0,
        beta: s0 * sp.m(),
        alpha: [g * z[0], g * z[1], g * z[2]],
    }
}

/// `∫_{|e|<ρ_c} e_a e_b / (|e|² + d²)^{3/2} de = π I(d) δ_ab` over a flat disk.
pub fn cell_integral(rho_c: f64, d: f64) -> f64 {
    let q = (rho_c * rho_c + d * d).sqrt();
    (rho_c * rho_c + 2.0 * d * d) / q - 2.0 * d.abs()
}
