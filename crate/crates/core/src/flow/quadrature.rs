use std::f64::consts::PI;

/// Clenshaw–Curtis rule on `[-1, 1]` with `points` Chebyshev extreme nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClenshawCurtis {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl ClenshawCurtis {
    pub fn new(points: usize) -> Self {
        assert!(points >= 2, "Clenshaw-Curtis needs at least two nodes");
        let n = points - 1;
        let mut nodes = Vec::with_capacity(points);
        let mut weights = Vec::with_capacity(points);
        for k in 0..=n {
            let theta = k as f64 * PI / n as f64;
            nodes.push(theta.cos());
            let mut s = 0.0;
            for j in 1..=n / 2 {
                let b = if 2 * j == n { 1.0 } else { 2.0 };
                s += b / (4.0 * (j * j) as f64 - 1.0) * (2.0 * j as f64 * theta).cos();
            }
            let c = if k == 0 || k == n { 1.0 } else { 2.0 };
            weights.push(c / n as f64 * (1.0 - s));
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Points `t_k = x (1 + s_k) / 2` covering `[0, x]`.
    pub fn points_on(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().map(move |s| 0.5 * x * (1.0 + s))
    }

    /// Approximates the integral of `f` over `[a, b]`.
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.nodes.iter().zip(&self.weights).map(|(s, w)| w * f(mid + half * s)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        for points in [2usize, 3, 8, 9, 50, 51] {
            let rule = ClenshawCurtis::new(points);
            assert!((rule.weights().iter().sum::<f64>() - 2.0).abs() < 1e-13);
            for deg in 0..points {
                let exact = (1.0 - (-1.0f64).powi(deg as i32 + 1)) / (deg as f64 + 1.0);
                let approx = rule.integrate(-1.0, 1.0, |t| t.powi(deg as i32));
                assert!((approx - exact).abs() < 1e-12, "points {points} degree {deg}: {approx} vs {exact}");
            }
        }
    }

    #[test]
    fn smooth_integrand_on_interval() {
        let rule = ClenshawCurtis::new(50);
        let approx = rule.integrate(0.0, 3.0, f64::exp);
        assert!((approx - (3f64.exp() - 1.0)).abs() < 1e-12);
        let neg = rule.integrate(0.0, -2.0, |t| t.cos());
        assert!((neg - (-2f64).sin()).abs() < 1e-13);
    }
}
