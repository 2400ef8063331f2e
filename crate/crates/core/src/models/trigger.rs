//! Quadratic mixed-threshold triggers `φ = |ε|² − σ|ζ|² − ε̄²`.

use super::{ModelError, Trigger};

/// `φ(ζ, ε) = |ε|² − σ|ζ|² − ε̄²`.
///
/// `σ = 0` gives Lebesgue sampling. The homogenized form is the polynomial
/// `|ε|² − σ|ζ|² − ε̄² w²` (degree `θ = 1`), which also defines `φ̃` at `w = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTrigger {
    n: usize,
    sigma: f64,
    threshold_sq: f64,
    name: &'static str,
}

impl QuadraticTrigger {
    /// `|ε|² − ε̄²`
    pub fn lebesgue(n: usize, eps_bar: f64) -> Result<Self, ModelError> {
        if !(eps_bar > 0.0) || n == 0 {
            return Err(ModelError::Parameter(format!(
                "lebesgue trigger needs ε̄ > 0 and n ≥ 1, got ε̄ = {eps_bar}, n = {n}"
            )));
        }
        Ok(Self {
            n,
            sigma: 0.0,
            threshold_sq: eps_bar * eps_bar,
            name: "lebesgue",
        })
    }

    /// `|ε|² − σ|ζ|² − ε̄²`
    pub fn mixed(n: usize, sigma: f64, eps_bar: f64) -> Result<Self, ModelError> {
        if !(sigma >= 0.0) || !(eps_bar > 0.0) || n == 0 {
            return Err(ModelError::Parameter(format!(
                "mixed trigger needs σ ≥ 0, ε̄ > 0, n ≥ 1; got σ = {sigma}, ε̄ = {eps_bar}"
            )));
        }
        Ok(Self {
            n,
            sigma,
            threshold_sq: eps_bar * eps_bar,
            name: "mixed",
        })
    }

    /// `|ε|² − 0.0049|ζ|² − 16` on `ℝ² × ℝ²`.
    pub fn benchmark() -> Self {
        Self {
            n: 2,
            sigma: 0.0049,
            threshold_sq: 16.0,
            name: "benchmark",
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `ε̄²`
    pub fn threshold_sq(&self) -> f64 {
        self.threshold_sq
    }

    fn quadratic_part(&self, xi: &[f64]) -> f64 {
        let (zeta, eps) = xi.split_at(self.n);
        let e2: f64 = eps.iter().map(|e| e * e).sum();
        let z2: f64 = zeta.iter().map(|z| z * z).sum();
        e2 - self.sigma * z2
    }
}

impl Trigger for QuadraticTrigger {
    fn name(&self) -> &str {
        self.name
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn homogeneity_degree(&self) -> f64 {
        1.0
    }

    fn value(&self, xi: &[f64]) -> f64 {
        self.quadratic_part(xi) - self.threshold_sq
    }

    fn gradient(&self, xi: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            out[i] = -2.0 * self.sigma * xi[i];
            out[n + i] = 2.0 * xi[n + i];
        }
    }

    fn homogenized_exact(&self, xi: &[f64], w: f64) -> Option<f64> {
        Some(self.quadratic_part(xi) - self.threshold_sq * w * w)
    }

    fn homogenized_gradient_exact(&self, xi: &[f64], _w: f64, out: &mut [f64]) -> bool {
        self.gradient(xi, out);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_parameters() {
        assert!(QuadraticTrigger::lebesgue(2, 0.0).is_err());
        assert!(QuadraticTrigger::mixed(2, -0.1, 1.0).is_err());
        assert!(QuadraticTrigger::mixed(2, 0.1, -1.0).is_err());
        assert!(QuadraticTrigger::lebesgue(0, 1.0).is_err());
    }

    #[test]
    fn mixed_with_zero_sigma_is_lebesgue() {
        let a = QuadraticTrigger::mixed(2, 0.0, 0.7).unwrap();
        let b = QuadraticTrigger::lebesgue(2, 0.7).unwrap();
        let xi = [0.3, -1.2, 0.4, 0.1];
        assert_eq!(a.value(&xi), b.value(&xi));
    }

    #[test]
    fn benchmark_value_at_unit_state() {
        let t = QuadraticTrigger::benchmark();
        assert!((t.value(&[1.0, 0.0, 0.0, 0.0]) - (-16.0049)).abs() < 1e-12);
    }

    #[test]
    fn lebesgue_at_zero_error() {
        let t = QuadraticTrigger::lebesgue(3, 0.5).unwrap();
        assert_eq!(t.value(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0]), -0.25);
    }
}
