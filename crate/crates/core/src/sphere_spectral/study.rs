//! Squeezed-well eigenvalues against shell eigenvalues at the nonlinear
//! coupling and at the naive coupling `∫V`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{find_gap_eigenvalues, shell_matching, ChannelSystem, Interface, Scan, SolverConfig};
use crate::coupling::{build_kv, lambda_direct, CouplingKind, DEFAULT_NODES};
use crate::error::{Error, Result};
use crate::potential::{factorize, squeeze, PotentialProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleinRow {
    pub epsilon: f64,
    pub a_eps: Option<f64>,
    /// `|a(ε) − a*(λ_nonlinear)|`.
    pub error_nonlinear: Option<f64>,
    /// `|a(ε) − a*(λ_linear)|`.
    pub distance_linear: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleinStudy {
    pub kind: CouplingKind,
    pub channel: ChannelSystem,
    pub profile: PotentialProfile,
    pub lambda_nonlinear: f64,
    pub lambda_linear: f64,
    pub a_nonlinear: Option<f64>,
    pub a_linear: Option<f64>,
    pub rows: Vec<KleinRow>,
    /// Least-squares slope of `log error` against `log ε`.
    pub slope: Option<f64>,
    /// Every row has an eigenvalue and the error decreases strictly.
    pub errors_decreasing: bool,
    /// Smallest `|a(ε) − a*(λ_linear)|` over the rows.
    pub min_linear_distance: Option<f64>,
}

/// Runs the squeezed sequence over `eps` (decreasing) and compares it with
/// the shell eigenvalues at `λ_e`/`λ_s` (computed from `K_V`) and at `∫V`.
pub fn klein_convergence_study(
    profile: &PotentialProfile,
    ch: &ChannelSystem,
    eps: &[f64],
    kind: CouplingKind,
    scan: Scan,
    cfg: &SolverConfig,
) -> Result<KleinStudy> {
    if eps.is_empty() {
        return Err(Error::InvalidArgument("epsilon list is empty".into()));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilon list must be strictly decreasing".into()));
    }
    let uv = factorize(profile);
    let kv = build_kv(&uv, DEFAULT_NODES)?;
    let lambda_nonlinear = lambda_direct(&kv, kind)?.value;
    let lambda_linear = profile.integral();

    let shell_roots = |lambda: f64| -> Result<Vec<f64>> {
        let t = shell_matching(lambda, kind)?;
        Ok(find_gap_eigenvalues(ch, &Interface::Shell(t), scan, cfg)?.eigenvalues)
    };
    let nonlinear = shell_roots(lambda_nonlinear)?;
    let linear = shell_roots(lambda_linear)?;
    // Track the lowest nonlinear shell eigenvalue.
    let a_nonlinear = nonlinear.first().copied();
    let nearest = |roots: &[f64], target: f64| {
        roots
            .iter()
            .copied()
            .min_by(|x, y| (x - target).abs().total_cmp(&(y - target).abs()))
    };
    let a_linear = match a_nonlinear {
        Some(t) => nearest(&linear, t),
        None => linear.first().copied(),
    };

    let mut rows = Vec::with_capacity(eps.len());
    for &e in eps {
        let family = squeeze(profile, e)?;
        let roots = find_gap_eigenvalues(ch, &Interface::Squeezed { family, kind }, scan, cfg)?.eigenvalues;
        let anchor = a_nonlinear.or(a_linear);
        let a_eps = match anchor {
            Some(t) => nearest(&roots, t),
            None => roots.first().copied(),
        };
        rows.push(KleinRow {
            epsilon: e,
            a_eps,
            error_nonlinear: a_eps.zip(a_nonlinear).map(|(x, y)| (x - y).abs()),
            distance_linear: a_eps.zip(a_linear).map(|(x, y)| (x - y).abs()),
        });
    }

    let errors: Vec<Option<f64>> = rows.iter().map(|r| r.error_nonlinear).collect();
    let errors_decreasing = errors.iter().all(|e| e.is_some())
        && errors.windows(2).all(|w| w[1].unwrap() < w[0].unwrap());
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.error_nonlinear.filter(|e| *e > 0.0).map(|e| (r.epsilon.ln(), e.ln())))
        .collect();
    let slope = (fit.len() >= 2).then(|| least_squares_slope(&fit));
    let min_linear_distance = rows.iter().filter_map(|r| r.distance_linear).reduce(f64::min);

    Ok(KleinStudy {
        kind,
        channel: *ch,
        profile: profile.clone(),
        lambda_nonlinear,
        lambda_linear,
        a_nonlinear,
        a_linear,
        rows,
        slope,
        errors_decreasing,
        min_linear_distance,
    })
}

pub(crate) fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.12e}")).unwrap_or_default()
}

impl KleinStudy {
    /// `|a*(λ_nonlinear) − a*(λ_linear)|` when both exist.
    pub fn target_gap(&self) -> Option<f64> {
        self.a_nonlinear.zip(self.a_linear).map(|(x, y)| (x - y).abs())
    }

    /// CSV rows `epsilon,a_eps,a_nonlinear,a_linear,gap,error_nonlinear,distance_linear`
    /// (empty cells where no eigenvalue exists).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,a_eps,a_nonlinear,a_linear,gap,error_nonlinear,distance_linear\n");
        for r in &self.rows {
            writeln!(
                out,
                "{:.12e},{},{},{},{},{},{}",
                r.epsilon,
                opt(r.a_eps),
                opt(self.a_nonlinear),
                opt(self.a_linear),
                opt(self.target_gap()),
                opt(r.error_nonlinear),
                opt(r.distance_linear)
            )
            .unwrap();
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "kappa": self.channel.kappa,
            "m": self.channel.m,
            "radius": self.channel.radius,
            "lambda_nonlinear": self.lambda_nonlinear,
            "lambda_linear": self.lambda_linear,
            "a_nonlinear": self.a_nonlinear,
            "a_linear": self.a_linear,
            "target_gap": self.target_gap(),
            "slope": self.slope,
            "errors_decreasing": self.errors_decreasing,
            "min_linear_distance": self.min_linear_distance,
        })
    }
}
