//! Radial Dirac system on `y = (g, f)`:
//!
//! ```text
//! g' = −(κ/r) g + (a − V + m + S) f
//! f' =  (κ/r) f − (a − V − m − S) g
//! ```
//!
//! with electrostatic potential `V` and Lorentz-scalar potential `S`.
//! The coefficient matrix is traceless, so every propagator is unimodular.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];
pub type Vec2 = [f64; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
        [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
    ]
}

pub fn mat_vec(a: &Mat2, v: Vec2) -> Vec2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

/// Frobenius norm of `a − b`.
pub fn distance(a: &Mat2, b: &Mat2) -> f64 {
    let mut s = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            s += (a[r][c] - b[r][c]).powi(2);
        }
    }
    s.sqrt()
}

/// `exp(θJ)` with `J = [[0, −1], [1, 0]]`.
pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

/// Exponential of a traceless 2×2 matrix: `Ω² = −det(Ω) I`.
pub fn expm_traceless(o: &Mat2) -> Mat2 {
    let s2 = o[0][0] * o[0][0] + o[0][1] * o[1][0];
    let (c, sh) = if s2.abs() < 1e-8 {
        (1.0 + 0.5 * s2 + s2 * s2 / 24.0, 1.0 + s2 / 6.0 + s2 * s2 / 120.0)
    } else if s2 > 0.0 {
        let s = s2.sqrt();
        (s.cosh(), s.sinh() / s)
    } else {
        let s = (-s2).sqrt();
        (s.cos(), s.sin() / s)
    };
    [[c + sh * o[0][0], sh * o[0][1]], [sh * o[1][0], c + sh * o[1][1]]]
}

/// A radial channel: spin-orbit number `κ ≠ 0`, mass `m`, shell radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSystem {
    pub kappa: i32,
    pub m: f64,
    pub radius: f64,
}

impl ChannelSystem {
    pub fn new(kappa: i32, m: f64, radius: f64) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::InvalidArgument("kappa must be nonzero".into()));
        }
        if !(m > 0.0 && m.is_finite()) || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument("mass and radius must be positive".into()));
        }
        Ok(Self { kappa, m, radius })
    }

    /// Coefficient matrix at radius `r`, energy `a`, potentials `(V, S)`.
    pub fn coefficients(&self, r: f64, a: f64, v: f64, s: f64) -> Mat2 {
        let k = self.kappa as f64 / r;
        [[-k, a - v + self.m + s], [-(a - v - self.m - s), k]]
    }

    /// `√(m² − a²)` for a gap energy.
    pub fn decay_rate(&self, a: f64) -> Result<f64> {
        if !(a.abs() < self.m) {
            return Err(Error::InvalidSpectralParameter { re: a, im: 0.0, m: self.m });
        }
        Ok((self.m * self.m - a * a).sqrt())
    }

    /// Regular solution near the origin by the Frobenius series of the
    /// given order, up to the common factor `r^|κ|`.
    pub fn origin_series(&self, a: f64, r: f64, order: usize) -> Vec2 {
        let kappa = self.kappa as f64;
        let gamma = kappa.abs();
        let (mut an, mut bn) = if self.kappa < 0 { (1.0, 0.0) } else { (0.0, 1.0) };
        let (mut g, mut f) = (an, bn);
        let mut rn = 1.0;
        for n in 1..=order {
            let nf = n as f64;
            let a_next = (a + self.m) * bn / (gamma + nf + kappa);
            let b_next = -(a - self.m) * an / (gamma + nf - kappa);
            an = a_next;
            bn = b_next;
            rn *= r;
            g += an * rn;
            f += bn * rn;
        }
        [g, f]
    }
}

/// One fourth-order Magnus step from `r0` to `r1` (either direction).
pub fn magnus_step<F>(coeff: &F, r0: f64, r1: f64) -> Mat2
where
    F: Fn(f64) -> Mat2,
{
    let h = r1 - r0;
    let d = 3f64.sqrt() / 6.0;
    let a1 = coeff(r0 + (0.5 - d) * h);
    let a2 = coeff(r0 + (0.5 + d) * h);
    let comm = {
        let p = mat_mul(&a2, &a1);
        let q = mat_mul(&a1, &a2);
        [[p[0][0] - q[0][0], p[0][1] - q[0][1]], [p[1][0] - q[1][0], p[1][1] - q[1][1]]]
    };
    let c = 3f64.sqrt() / 12.0 * h * h;
    let mut o = [[0.0; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            o[r][k] = 0.5 * h * (a1[r][k] + a2[r][k]) + c * comm[r][k];
        }
    }
    expm_traceless(&o)
}

/// Propagator along the node sequence `nodes` (monotone, either direction).
pub fn propagate<F>(coeff: &F, nodes: &[f64]) -> Mat2
where
    F: Fn(f64) -> Mat2,
{
    nodes
        .windows(2)
        .fold(IDENTITY, |acc, w| mat_mul(&magnus_step(coeff, w[0], w[1]), &acc))
}

/// Carries a vector along `nodes`, renormalizing to unit length.
pub fn propagate_vector<F>(coeff: &F, nodes: &[f64], mut y: Vec2) -> Vec2
where
    F: Fn(f64) -> Mat2,
{
    for w in nodes.windows(2) {
        y = mat_vec(&magnus_step(coeff, w[0], w[1]), y);
        let n = (y[0] * y[0] + y[1] * y[1]).sqrt();
        if n > 1e100 || n < 1e-100 {
            y = [y[0] / n, y[1] / n];
        }
    }
    y
}

/// Nodes from `r0` to `r1` (both positive) with `steps` geometric steps,
/// further split so that no step exceeds `h_max`.
pub fn graded_nodes(r0: f64, r1: f64, steps: usize, h_max: f64) -> Vec<f64> {
    let steps = steps.max(1);
    let ratio = r1 / r0;
    let mut out = vec![r0];
    let mut prev = r0;
    for j in 1..=steps {
        let next = if j == steps {
            r1
        } else {
            r0 * ratio.powf(j as f64 / steps as f64)
        };
        let pieces = ((next - prev).abs() / h_max).ceil().max(1.0) as usize;
        for p in 1..=pieces {
            out.push(if p == pieces {
                next
            } else {
                prev + (next - prev) * p as f64 / pieces as f64
            });
        }
        prev = next;
    }
    out
}

/// Uniform nodes on `[r0, r1]`.
pub fn uniform_nodes(r0: f64, r1: f64, steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|j| {
            if j == steps {
                r1
            } else {
                r0 + (r1 - r0) * j as f64 / steps as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traceless_exponential_matches_series() {
        for o in [
            [[0.3, 1.2], [-0.7, -0.3]],
            [[0.0, 2.0], [3.0, 0.0]],
            [[1e-6, 2e-6], [1e-6, -1e-6]],
        ] {
            // Taylor series to high order as the reference.
            let mut term = IDENTITY;
            let mut sum = IDENTITY;
            for k in 1..40 {
                term = mat_mul(&term, &o);
                for row in term.iter_mut() {
                    for x in row.iter_mut() {
                        *x /= k as f64;
                    }
                }
                for r in 0..2 {
                    for c in 0..2 {
                        sum[r][c] += term[r][c];
                    }
                }
            }
            assert!(distance(&sum, &expm_traceless(&o)) < 1e-12);
            assert!((det(&expm_traceless(&o)) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_coefficients_are_propagated_exactly() {
        let a: Mat2 = [[0.0, -1.0], [1.0, 0.0]];
        let p = propagate(&|_| a, &uniform_nodes(0.0, 0.8, 3));
        assert!(distance(&p, &rotation(0.8)) < 1e-14);
    }

    #[test]
    fn magnus_is_fourth_order() {
        let ch = ChannelSystem::new(-2, 1.0, 1.0).unwrap();
        let coeff = |r: f64| ch.coefficients(r, 0.3, 0.0, 0.0);
        let reference = propagate(&coeff, &uniform_nodes(0.2, 1.0, 4096));
        let e1 = distance(&propagate(&coeff, &uniform_nodes(0.2, 1.0, 16)), &reference);
        let e2 = distance(&propagate(&coeff, &uniform_nodes(0.2, 1.0, 32)), &reference);
        assert!(e1 / e2 > 12.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn series_satisfies_the_system() {
        for kappa in [-2, -1, 1, 3] {
            let ch = ChannelSystem::new(kappa, 1.0, 1.0).unwrap();
            let a = 0.4;
            let r = 0.01;
            let gamma = (kappa as f64).abs();
            let y = |r: f64| {
                let s = ch.origin_series(a, r, 10);
                [s[0] * r.powf(gamma), s[1] * r.powf(gamma)]
            };
            let h = 1e-6;
            let (yp, ym) = (y(r + h), y(r - h));
            let dy = [(yp[0] - ym[0]) / (2.0 * h), (yp[1] - ym[1]) / (2.0 * h)];
            let rhs = mat_vec(&ch.coefficients(r, a, 0.0, 0.0), y(r));
            let scale = r.powf(gamma - 1.0);
            assert!((dy[0] - rhs[0]).abs() / scale < 1e-6);
            assert!((dy[1] - rhs[1]).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn graded_nodes_respect_the_cap() {
        let nodes = graded_nodes(0.01, 50.0, 20, 0.5);
        assert_eq!(nodes[0], 0.01);
        assert_eq!(*nodes.last().unwrap(), 50.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.5 + 1e-12));
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelSystem::new(0, 1.0, 1.0).is_err());
        assert!(ChannelSystem::new(1, -1.0, 1.0).is_err());
        assert!(ChannelSystem::new(1, 1.0, 1.0).unwrap().decay_rate(1.0).is_err());
    }
}
