//! One-dimensional potential profiles, their `u`/`v` factorization and the
//! squeezed families `V_ε(t) = (η/ε) V(ηt/ε)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Grid size used when the sup norm has no closed form.
pub const SUP_GRID: usize = 10_000;

/// A real profile `V` supported in `[-η, η]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PotentialProfile {
    /// `V = (τ/2) χ_(−η, η)`, so that `∫V = τη`.
    Square { tau: f64, eta: f64 },
    /// `amplitude · exp(−t²/(2 width²))` truncated to `[-η, η]`.
    Gaussian { amplitude: f64, width: f64, eta: f64 },
    /// Linear interpolation of `(ts, vs)`, zero outside `[ts[0], ts[last]]`.
    Table { ts: Vec<f64>, vs: Vec<f64>, eta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupSource {
    Analytic,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessReport {
    pub sup_norm: f64,
    pub bound: f64,
    pub source: SupSource,
    pub grid_size: Option<usize>,
    pub small: bool,
}

impl PotentialProfile {
    pub fn square(tau: f64, eta: f64) -> Result<Self> {
        let p = Self::Square { tau, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(amplitude: f64, width: f64, eta: f64) -> Result<Self> {
        let p = Self::Gaussian { amplitude, width, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn table(ts: Vec<f64>, vs: Vec<f64>, eta: f64) -> Result<Self> {
        let p = Self::Table { ts, vs, eta };
        p.validate()?;
        Ok(p)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profiles serialize")
    }

    pub fn validate(&self) -> Result<()> {
        let eta = self.eta();
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidProfile(format!("eta must be positive, got {eta}")));
        }
        match self {
            Self::Square { tau, .. } if !tau.is_finite() => {
                Err(Error::InvalidProfile("tau must be finite".into()))
            }
            Self::Gaussian { amplitude, width, .. } if !(amplitude.is_finite() && *width > 0.0) => {
                Err(Error::InvalidProfile("gaussian needs finite amplitude and positive width".into()))
            }
            Self::Table { ts, vs, eta } => {
                if ts.len() != vs.len() || ts.len() < 2 {
                    return Err(Error::InvalidProfile(
                        "table needs matching ts/vs with at least two samples".into(),
                    ));
                }
                if ts.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidProfile("table ts must be increasing".into()));
                }
                if ts[0] < -eta * (1.0 + 1e-12) || ts[ts.len() - 1] > eta * (1.0 + 1e-12) {
                    return Err(Error::InvalidProfile("table extends beyond [-eta, eta]".into()));
                }
                if vs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProfile("table values must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eta(&self) -> f64 {
        match self {
            Self::Square { eta, .. } | Self::Gaussian { eta, .. } | Self::Table { eta, .. } => *eta,
        }
    }

    /// `τ` for square wells.
    pub fn square_tau(&self) -> Option<f64> {
        match self {
            Self::Square { tau, .. } => Some(*tau),
            _ => None,
        }
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            Self::Square { tau, eta } => {
                if t.abs() < *eta {
                    0.5 * tau
                } else {
                    0.0
                }
            }
            Self::Gaussian { amplitude, width, eta } => {
                if t.abs() <= *eta {
                    amplitude * (-0.5 * (t / width).powi(2)).exp()
                } else {
                    0.0
                }
            }
            Self::Table { ts, vs, .. } => {
                let n = ts.len();
                if t < ts[0] || t > ts[n - 1] {
                    return 0.0;
                }
                let k = ts.partition_point(|x| *x <= t).clamp(1, n - 1);
                let (t0, t1) = (ts[k - 1], ts[k]);
                let s = (t - t0) / (t1 - t0);
                vs[k - 1] + s * (vs[k] - vs[k - 1])
            }
        }
    }

    /// Points of `(-1, 1)` where `t ↦ V(ηt)` is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Table { ts, vs, eta } => {
                // Nodes, plus sign changes where |V| has a kink.
                let mut out: Vec<f64> = ts.to_vec();
                for (t, v) in ts.windows(2).zip(vs.windows(2)) {
                    if v[0] * v[1] < 0.0 {
                        out.push(t[0] + (t[1] - t[0]) * v[0] / (v[0] - v[1]));
                    }
                }
                out.sort_by(|a, b| a.partial_cmp(b).unwrap());
                out.into_iter()
                    .map(|t| t / eta)
                    .filter(|s| s.abs() < 1.0 - 1e-12)
                    .collect()
            }
            _ => Vec::new(),
        }
    }

    /// `‖V‖_∞`, analytic when available and otherwise sampled on
    /// [`SUP_GRID`] points.
    pub fn sup_norm(&self) -> (f64, SupSource) {
        match self {
            Self::Square { tau, .. } => (0.5 * tau.abs(), SupSource::Analytic),
            Self::Gaussian { amplitude, .. } => (amplitude.abs(), SupSource::Analytic),
            Self::Table { vs, .. } => {
                // Linear interpolation attains its sup at a node; the grid
                // estimate is kept for uniformity of reporting.
                let eta = self.eta();
                let grid = (0..SUP_GRID)
                    .map(|k| self.evaluate(-eta + 2.0 * eta * k as f64 / (SUP_GRID - 1) as f64).abs())
                    .fold(0.0, f64::max);
                let nodes = vs.iter().map(|v| v.abs()).fold(0.0, f64::max);
                (grid.max(nodes), SupSource::Grid)
            }
        }
    }

    /// `∫|V|`.
    pub fn l1_norm(&self) -> f64 {
        match self {
            Self::Square { tau, eta } => tau.abs() * eta,
            Self::Gaussian { .. } => {
                let gl = GaussLegendre::new(64);
                let eta = self.eta();
                gl.integrate(-eta, 0.0, |t| self.evaluate(t).abs())
                    + gl.integrate(0.0, eta, |t| self.evaluate(t).abs())
            }
            Self::Table { ts, vs, .. } => ts
                .windows(2)
                .zip(vs.windows(2))
                .map(|(t, v)| segment_abs_integral(t[1] - t[0], v[0], v[1]))
                .sum(),
        }
    }

    /// `∫V`.
    pub fn integral(&self) -> f64 {
        match self {
            Self::Square { tau, eta } => tau * eta,
            Self::Gaussian { .. } => {
                let gl = GaussLegendre::new(64);
                let eta = self.eta();
                gl.integrate(-eta, 0.0, |t| self.evaluate(t)) + gl.integrate(0.0, eta, |t| self.evaluate(t))
            }
            Self::Table { ts, vs, .. } => ts
                .windows(2)
                .zip(vs.windows(2))
                .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
                .sum(),
        }
    }
}

fn segment_abs_integral(h: f64, a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * h * (a.abs() + b.abs())
    } else {
        // The segment crosses zero at fraction a/(a-b).
        let s = a / (a - b);
        0.5 * h * (s * a.abs() + (1.0 - s) * b.abs())
    }
}

/// `(δ, η)`-smallness: `supp V ⊆ [−η, η]` and `‖V‖_∞ ≤ δ/η`.
pub fn smallness_report(p: &PotentialProfile, delta: f64) -> SmallnessReport {
    let (sup, source) = p.sup_norm();
    let bound = delta / p.eta();
    SmallnessReport {
        sup_norm: sup,
        bound,
        source,
        grid_size: (source == SupSource::Grid).then_some(SUP_GRID),
        small: sup <= bound,
    }
}

pub fn is_delta_eta_small(p: &PotentialProfile, delta: f64) -> bool {
    smallness_report(p, delta).small
}

/// `u(t) = |ηV(ηt)|^{1/2}`, `v(t) = sign(V(ηt)) u(t)` on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UVFactorization {
    profile: PotentialProfile,
}

pub fn factorize(p: &PotentialProfile) -> UVFactorization {
    UVFactorization { profile: p.clone() }
}

impl UVFactorization {
    pub fn profile(&self) -> &PotentialProfile {
        &self.profile
    }

    fn scaled(&self, t: f64) -> f64 {
        if t.abs() > 1.0 {
            return 0.0;
        }
        let eta = self.profile.eta();
        eta * self.profile.evaluate(eta * t)
    }

    pub fn u(&self, t: f64) -> f64 {
        self.scaled(t).abs().sqrt()
    }

    pub fn v(&self, t: f64) -> f64 {
        let w = self.scaled(t);
        if w > 0.0 {
            w.sqrt()
        } else if w < 0.0 {
            -(-w).sqrt()
        } else {
            0.0
        }
    }

    /// Jumps and kinks of `u`, `v` inside `(-1, 1)`.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.profile.breakpoints()
    }

    /// `‖u‖₂² = ‖v‖₂² = ‖V‖_{L¹}`.
    pub fn l2_norm_squared(&self) -> f64 {
        self.profile.l1_norm()
    }
}

/// `V_ε(t) = (η/ε) V(ηt/ε)` for `0 < ε ≤ η`.
#[derive(Debug, Clone, PartialEq)]
pub struct SqueezedFamily {
    profile: PotentialProfile,
    epsilon: f64,
}

pub fn squeeze(p: &PotentialProfile, epsilon: f64) -> Result<SqueezedFamily> {
    let eta = p.eta();
    if !(epsilon > 0.0 && epsilon <= eta) {
        return Err(Error::InvalidEpsilon { epsilon, eta });
    }
    Ok(SqueezedFamily {
        profile: p.clone(),
        epsilon,
    })
}

impl SqueezedFamily {
    pub fn profile(&self) -> &PotentialProfile {
        &self.profile
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let ratio = self.profile.eta() / self.epsilon;
        ratio * self.profile.evaluate(ratio * t)
    }

    /// `∫V_ε`, independent of ε.
    pub fn integral(&self) -> f64 {
        self.profile.integral()
    }

    /// `(lo, hi, value)` pieces when `V_ε` is piecewise constant.
    pub fn constant_pieces(&self) -> Option<Vec<(f64, f64, f64)>> {
        match self.profile {
            PotentialProfile::Square { .. } => {
                Some(vec![(-self.epsilon, self.epsilon, self.evaluate(0.0))])
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::PanelRule;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn smallness_examples() {
        let p = PotentialProfile::square(1.0, 0.1).unwrap();
        let rep = smallness_report(&p, 0.1);
        assert_eq!(rep.sup_norm, 0.5);
        assert!(rep.small);
        assert!(!is_delta_eta_small(&PotentialProfile::square(30.0, 0.1).unwrap(), 0.1));
    }

    #[test]
    fn small_profiles_have_bounded_l1_norm() {
        let delta = 0.2;
        for p in [
            PotentialProfile::square(3.9, 0.1).unwrap(),
            PotentialProfile::gaussian(-1.5, 0.05, 0.1).unwrap(),
            PotentialProfile::table(vec![-0.1, 0.0, 0.1], vec![2.0, -1.0, 1.5], 0.1).unwrap(),
        ] {
            assert!(is_delta_eta_small(&p, delta));
            assert!(p.l1_norm() <= 2.0 * delta + 1e-15);
        }
    }

    #[test]
    fn zero_profile_factorizes_to_zero() {
        let f = factorize(&PotentialProfile::square(0.0, 0.3).unwrap());
        for t in [-0.9, 0.0, 0.4] {
            assert_eq!(f.u(t), 0.0);
            assert_eq!(f.v(t), 0.0);
        }
    }

    #[test]
    fn square_well_factors() {
        let (tau, eta) = (1.3, 0.2);
        let f = factorize(&PotentialProfile::square(tau, eta).unwrap());
        let expected = (eta * tau / 2.0).sqrt();
        assert_relative_eq!(f.u(0.5), expected, epsilon = 1e-15);
        assert_relative_eq!(f.v(-0.5), expected, epsilon = 1e-15);
        let g = factorize(&PotentialProfile::square(-tau, eta).unwrap());
        assert_relative_eq!(g.v(0.1), -expected, epsilon = 1e-15);
        assert_eq!(f.u(1.5), 0.0);
    }

    #[test]
    fn factor_norms_match_l1_norm() {
        let p = PotentialProfile::table(
            vec![-0.2, -0.05, 0.0, 0.1, 0.2],
            vec![0.0, 3.0, -1.0, 2.0, 0.0],
            0.2,
        )
        .unwrap();
        let f = factorize(&p);
        let rule = PanelRule::dyadic(2, 16).with_breakpoints(&f.breakpoints());
        let (mut uu, mut vv) = (0.0, 0.0);
        for (t, w) in rule.nodes().iter().zip(rule.weights()) {
            uu += w * f.u(*t).powi(2);
            vv += w * f.v(*t).powi(2);
        }
        // Exact ∫|V| for the table, computed by hand from the segments.
        let exact = 0.5 * 0.15 * 3.0 + 0.05 * (0.75 * 3.0 + 0.25 * 1.0) * 0.5
            + 0.1 * (1.0 / 3.0 * 1.0 + 2.0 / 3.0 * 2.0) * 0.5
            + 0.5 * 0.1 * 2.0;
        assert_relative_eq!(p.l1_norm(), exact, epsilon = 1e-14);
        assert_relative_eq!(uu.sqrt() * vv.sqrt(), exact, epsilon = 1e-10);
    }

    #[test]
    fn squeeze_examples() {
        let p = PotentialProfile::square(1.0, 0.1).unwrap();
        let s = squeeze(&p, 0.01).unwrap();
        assert_relative_eq!(s.evaluate(0.005), 5.0, epsilon = 1e-12);
        assert_eq!(s.evaluate(0.011), 0.0);
        assert_relative_eq!(s.integral(), 0.1, epsilon = 1e-15);
        let same = squeeze(&p, 0.1).unwrap();
        for t in [-0.09, 0.0, 0.05, 0.2] {
            assert_eq!(same.evaluate(t), p.evaluate(t));
        }
        assert!(matches!(squeeze(&p, 0.2), Err(Error::InvalidEpsilon { .. })));
        assert!(squeeze(&p, 0.0).is_err());
    }

    #[test]
    fn squeezed_integral_is_invariant() {
        let p = PotentialProfile::gaussian(2.0, 0.3, 0.5).unwrap();
        for eps in [0.5, 0.25, 0.05] {
            let s = squeeze(&p, eps).unwrap();
            let gl = GaussLegendre::new(64);
            let direct = gl.integrate(-eps, 0.0, |t| s.evaluate(t)) + gl.integrate(0.0, eps, |t| s.evaluate(t));
            assert_relative_eq!(direct, p.integral(), epsilon = 1e-12);
        }
    }

    #[test]
    fn json_round_trip() {
        let p = PotentialProfile::from_json(r#"{"kind": "square", "tau": 2.0, "eta": 0.25}"#).unwrap();
        assert_eq!(p, PotentialProfile::Square { tau: 2.0, eta: 0.25 });
        let t = PotentialProfile::from_json(r#"{"kind": "table", "ts": [-0.1, 0.1], "vs": [1.0, 1.0], "eta": 0.1}"#)
            .unwrap();
        assert_eq!(PotentialProfile::from_json(&t.to_json()).unwrap(), t);
        assert!(PotentialProfile::from_json(r#"{"kind": "square", "tau": 1.0, "eta": -1.0}"#).is_err());
        assert!(PotentialProfile::from_json(r#"{"kind": "table", "ts": [0.2, 0.1], "vs": [1, 1], "eta": 1}"#).is_err());
    }

    proptest! {
        #[test]
        fn uv_product_recovers_scaled_potential(
            vals in prop::collection::vec(-5.0f64..5.0, 5),
            eta in 0.05f64..2.0,
            t in -1.0f64..1.0,
        ) {
            let ts: Vec<f64> = (0..5).map(|k| eta * (-1.0 + 0.5 * k as f64)).collect();
            let p = PotentialProfile::table(ts, vals, eta).unwrap();
            let f = factorize(&p);
            let target = eta * p.evaluate(eta * t);
            prop_assert!((f.u(t) * f.v(t) - target).abs() <= 1e-12 * target.abs().max(1.0));
            prop_assert!(f.u(t) >= 0.0);
        }

        #[test]
        fn squeezed_support_shrinks(tau in -10.0f64..10.0, eta in 0.1f64..1.0, frac in 0.01f64..1.0, t in -2.0f64..2.0) {
            let p = PotentialProfile::square(tau, eta).unwrap();
            let s = squeeze(&p, frac * eta).unwrap();
            if t.abs() >= frac * eta {
                prop_assert_eq!(s.evaluate(t), 0.0);
            }
        }
    }
}
