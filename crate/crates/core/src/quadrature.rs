//! Gauss–Legendre rules, composite panel rules on (-1, 1) and the product
//! integration weights used for kernels with a `sign(t - s)` jump.
//!
//! A [`PanelRule`] represents a function on (-1, 1) by its values at the
//! Gauss nodes of each panel; between nodes the function is the panel-wise
//! Lagrange interpolant. Integrals against kernels that jump at an arbitrary
//! target point are evaluated with a [`SplitRule`], which splits the panel
//! containing the target and integrates the interpolant on both sides exactly.

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn on(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let x = self.nodes.iter().map(|t| mid + half * t).collect();
        let w = self.weights.iter().map(|w| half * w).collect();
        (x, w)
    }

    /// Integral of `f` over [a, b].
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// One quadrature point of a [`SplitRule`]: position, weight, the sign of
/// `target - s`, and the interpolation coefficients `(node index, coefficient)`
/// that reconstruct a nodal function at `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPoint {
    pub s: f64,
    pub weight: f64,
    pub side: f64,
    pub coeffs: Vec<(usize, f64)>,
}

/// Quadrature on (-1, 1) adapted to a kernel that jumps at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRule {
    pub target: f64,
    pub points: Vec<SplitPoint>,
}

/// Composite Gauss–Legendre rule on (-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRule {
    edges: Vec<f64>,
    order: usize,
    reference: GaussLegendre,
    bary: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl PanelRule {
    /// Rule with the given panel edges (strictly increasing, spanning [-1, 1])
    /// and `order` Gauss points per panel.
    pub fn new(edges: Vec<f64>, order: usize) -> Result<Self> {
        if order == 0 || edges.len() < 2 {
            return Err(Error::InvalidArgument(
                "panel rule needs at least one panel and one point per panel".into(),
            ));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "panel edges must be strictly increasing".into(),
            ));
        }
        if (edges[0] + 1.0).abs() > 1e-14 || (edges[edges.len() - 1] - 1.0).abs() > 1e-14 {
            return Err(Error::InvalidArgument("panel edges must span [-1, 1]".into()));
        }
        let reference = GaussLegendre::new(order);
        let bary = barycentric_weights(&reference.nodes);
        let mut nodes = Vec::with_capacity(order * (edges.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for w in edges.windows(2) {
            let (x, wt) = reference.on(w[0], w[1]);
            nodes.extend(x);
            weights.extend(wt);
        }
        Ok(Self {
            edges,
            order,
            reference,
            bary,
            nodes,
            weights,
        })
    }

    /// `2^levels` equal panels with `order` points each.
    pub fn dyadic(levels: u32, order: usize) -> Self {
        let panels = 1usize << levels;
        let edges = (0..=panels)
            .map(|k| -1.0 + 2.0 * k as f64 / panels as f64)
            .collect();
        Self::new(edges, order).expect("dyadic edges are valid")
    }

    /// Layout for `n` nodes: panels of 16 (or 8) points on a dyadic split when
    /// `n` allows it, otherwise a single panel of `n` points.
    pub fn for_count(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("node count must be positive".into()));
        }
        for order in [16usize, 8] {
            if n > order && n % order == 0 && (n / order).is_power_of_two() {
                return Ok(Self::dyadic((n / order).trailing_zeros(), order));
            }
        }
        Ok(Self::dyadic(0, n))
    }

    /// Same rule with additional panel edges (e.g. jumps of the integrand).
    /// Each inserted edge splits a panel, adding `order` nodes.
    pub fn with_breakpoints(self, breakpoints: &[f64]) -> Self {
        let mut edges = self.edges.clone();
        for &b in breakpoints {
            if b > -1.0 + 1e-12 && b < 1.0 - 1e-12 && edges.iter().all(|e| (e - b).abs() > 1e-12) {
                edges.push(b);
            }
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Self::new(edges, self.order).expect("refined edges are valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the panel containing `x` (closed on the left).
    pub fn panel_of(&self, x: f64) -> usize {
        let p = self.edges.partition_point(|e| *e <= x);
        p.clamp(1, self.edges.len() - 1) - 1
    }

    /// Interpolation coefficients for evaluating a nodal function at `x`
    /// (which must lie in panel `panel`).
    pub fn interpolation_row(&self, panel: usize, x: f64) -> Vec<(usize, f64)> {
        let (a, b) = (self.edges[panel], self.edges[panel + 1]);
        let xi = (2.0 * x - a - b) / (b - a);
        let base = panel * self.order;
        let nodes = &self.reference.nodes;
        if let Some(j) = nodes.iter().position(|n| (n - xi).abs() < 1e-15) {
            return vec![(base + j, 1.0)];
        }
        let terms: Vec<f64> = nodes
            .iter()
            .zip(&self.bary)
            .map(|(n, w)| w / (xi - n))
            .collect();
        let total: f64 = terms.iter().sum();
        terms
            .into_iter()
            .enumerate()
            .map(|(j, t)| (base + j, t / total))
            .collect()
    }

    /// Evaluates the panel interpolant of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        self.interpolation_row(self.panel_of(x), x)
            .into_iter()
            .map(|(j, c)| c * values[j])
            .sum()
    }

    /// Quadrature adapted to a jump at `target`: every panel keeps its nodes
    /// except the one containing `target` in its interior, which is replaced
    /// by Gauss rules on both sides of `target`.
    pub fn split_rule(&self, target: f64) -> SplitRule {
        let mut points = Vec::with_capacity(self.len() + self.order);
        let side = |s: f64| {
            if target > s {
                1.0
            } else if target < s {
                -1.0
            } else {
                0.0
            }
        };
        for p in 0..self.panels() {
            let (a, b) = (self.edges[p], self.edges[p + 1]);
            let inside = target > a + 1e-14 * (b - a) && target < b - 1e-14 * (b - a);
            if inside {
                for (lo, hi) in [(a, target), (target, b)] {
                    let (xs, ws) = self.reference.on(lo, hi);
                    for (s, w) in xs.into_iter().zip(ws) {
                        points.push(SplitPoint {
                            s,
                            weight: w,
                            side: side(s),
                            coeffs: self.interpolation_row(p, s),
                        });
                    }
                }
            } else {
                for j in 0..self.order {
                    let idx = p * self.order + j;
                    let s = self.nodes[idx];
                    points.push(SplitPoint {
                        s,
                        weight: self.weights[idx],
                        side: side(s),
                        coeffs: vec![(idx, 1.0)],
                    });
                }
            }
        }
        SplitRule { target, points }
    }

    /// Product-integration matrix `P[i][j] = ∫ sign(t_i - s) ℓ_j(s) ds`
    /// (row-major, n × n), exact for the panel interpolant.
    pub fn sign_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let rule = self.split_rule(self.nodes[i]);
            let row = &mut out[i * n..(i + 1) * n];
            for pt in &rule.points {
                for &(j, c) in &pt.coeffs {
                    row[j] += pt.weight * pt.side * c;
                }
            }
        }
        out
    }
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    (0..nodes.len())
        .map(|j| {
            let prod: f64 = nodes
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, x)| nodes[j] - x)
                .product();
            1.0 / prod
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 8, 16, 33] {
            let rule = GaussLegendre::new(n);
            for deg in 0..(2 * n) {
                let approx = rule.integrate(-1.0, 1.0, |x| x.powi(deg as i32));
                let exact = if deg % 2 == 1 {
                    0.0
                } else {
                    2.0 / (deg as f64 + 1.0)
                };
                assert!((approx - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let rule = PanelRule::for_count(128).unwrap();
        assert_eq!(rule.len(), 128);
        assert_eq!(rule.panels(), 8);
        assert_relative_eq!(rule.weights().iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn breakpoints_add_a_panel() {
        let rule = PanelRule::dyadic(1, 8).with_breakpoints(&[0.3, 0.0, 2.0]);
        assert_eq!(rule.edges(), &[-1.0, 0.0, 0.3, 1.0]);
        assert_eq!(rule.len(), 24);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let rule = PanelRule::dyadic(2, 6);
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(5);
        let vals: Vec<f64> = rule.nodes().iter().map(|&x| f(x)).collect();
        for x in [-0.99, -0.3, 0.0, 0.41, 0.77] {
            assert_relative_eq!(rule.interpolate(&vals, x), f(x), epsilon = 1e-12);
        }
    }

    #[test]
    fn sign_matrix_is_exact_for_constants() {
        // ∫ sign(t - s) ds over (-1, 1) = 2t.
        let rule = PanelRule::dyadic(1, 7);
        let p = rule.sign_matrix();
        let n = rule.len();
        for i in 0..n {
            let row: f64 = p[i * n..(i + 1) * n].iter().sum();
            assert_relative_eq!(row, 2.0 * rule.nodes()[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn weighted_sign_matrix_is_antisymmetric() {
        let rule = PanelRule::dyadic(2, 5);
        let p = rule.sign_matrix();
        let w = rule.weights();
        let n = rule.len();
        for i in 0..n {
            for j in 0..n {
                let lhs = w[i] * p[i * n + j];
                let rhs = -w[j] * p[j * n + i];
                assert!((lhs - rhs).abs() < 1e-14, "({i},{j}) {lhs} {rhs}");
            }
        }
    }

    #[test]
    fn split_rule_integrates_the_jump_exactly() {
        let rule = PanelRule::dyadic(0, 6);
        let vals: Vec<f64> = rule.nodes().iter().map(|x| x * x).collect();
        for target in [-0.7, 0.05, 0.6] {
            let split = rule.split_rule(target);
            let approx: f64 = split
                .points
                .iter()
                .map(|p| {
                    let f: f64 = p.coeffs.iter().map(|&(j, c)| c * vals[j]).sum();
                    p.weight * p.side * f
                })
                .sum();
            // ∫ sign(target - s) s^2 ds = (target^3 + 1)/3 - (1 - target^3)/3
            let exact = 2.0 * target.powi(3) / 3.0;
            assert_relative_eq!(approx, exact, epsilon = 1e-13);
        }
    }
}
