//! Built-in plants selectable by name from a run configuration.

use super::{DisturbanceBox, ModelError, Plant};

/// Perturbed second-order benchmark loop
///
/// ```text
/// ζ̇₁ = ζ₂ + 0.1 d₂ ζ₁ + 0.1 d₁
/// ζ̇₂ = u + 0.2 d₃ ζ₂²
/// u   = −(7.02 |s| + 25.515) s,   s = ĥ₂ + 2.1 ĥ₁
/// ```
///
/// where `ĥ = ζ + ε` is the held measurement and
/// `d ∈ [−4, 4] × [−1, 1] × [−1, 1]`. The uncertain terms `0.1 ζ₁ sin ζ₁` and
/// `0.2 ζ₂² sin ζ₂` are covered by `d₂ = sin ζ₁`, `d₃ = sin ζ₂`.
#[derive(Debug, Clone)]
pub struct BenchmarkPlant {
    disturbance: DisturbanceBox,
    alpha: f64,
}

impl BenchmarkPlant {
    pub const GAIN_ABS: f64 = 7.02;
    pub const GAIN_LIN: f64 = 25.515;
    pub const POLE: f64 = 2.1;

    pub fn new(alpha: f64) -> Result<Self, ModelError> {
        if !(alpha > 0.0) {
            return Err(ModelError::Parameter(format!(
                "homogeneity degree must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            disturbance: DisturbanceBox::symmetric(&[4.0, 1.0, 1.0]).expect("static box"),
            alpha,
        })
    }
}

impl Default for BenchmarkPlant {
    fn default() -> Self {
        Self::new(1.0).expect("static degree")
    }
}

impl Plant for BenchmarkPlant {
    fn name(&self) -> &str {
        "benchmark"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn disturbance_box(&self) -> &DisturbanceBox {
        &self.disturbance
    }

    fn homogeneity_degree(&self) -> f64 {
        self.alpha
    }

    fn control(&self, held: &[f64], u: &mut [f64]) {
        let s = held[1] + Self::POLE * held[0];
        u[0] = -(Self::GAIN_ABS * s.abs() + Self::GAIN_LIN) * s;
    }

    fn dynamics(&self, zeta: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        out[0] = zeta[1] + 0.1 * d[1] * zeta[0] + 0.1 * d[0];
        out[1] = u[0] + 0.2 * d[2] * zeta[1] * zeta[1];
    }
}

/// `ζ̇ = c`, independent of state, input and disturbance.
#[derive(Debug, Clone)]
pub struct ConstantPlant {
    rate: Vec<f64>,
    disturbance: DisturbanceBox,
    alpha: f64,
}

impl ConstantPlant {
    pub fn new(rate: Vec<f64>, alpha: f64) -> Result<Self, ModelError> {
        if rate.is_empty() || !(alpha > 0.0) {
            return Err(ModelError::Parameter(
                "constant plant needs a non-empty rate and α > 0".into(),
            ));
        }
        Ok(Self {
            rate,
            disturbance: DisturbanceBox::empty(),
            alpha,
        })
    }
}

impl Plant for ConstantPlant {
    fn name(&self) -> &str {
        "constant"
    }

    fn state_dim(&self) -> usize {
        self.rate.len()
    }

    fn input_dim(&self) -> usize {
        0
    }

    fn disturbance_box(&self) -> &DisturbanceBox {
        &self.disturbance
    }

    fn homogeneity_degree(&self) -> f64 {
        self.alpha
    }

    fn control(&self, _held: &[f64], _u: &mut [f64]) {}

    fn dynamics(&self, _zeta: &[f64], _u: &[f64], _d: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.rate);
    }
}

/// `ζ̇ = A ζ + B u + E d` with static feedback `u = K ĥ`.
///
/// Matrices are row-major.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    n: usize,
    m_u: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    e: Vec<f64>,
    k: Vec<f64>,
    disturbance: DisturbanceBox,
    alpha: f64,
}

impl LinearPlant {
    pub fn new(
        n: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        k: Vec<f64>,
        e: Vec<f64>,
        disturbance: DisturbanceBox,
        alpha: f64,
    ) -> Result<Self, ModelError> {
        if n == 0 || a.len() != n * n {
            return Err(ModelError::Parameter(format!("A must be {n}x{n}")));
        }
        let m_u = b.len() / n;
        if b.len() != n * m_u || k.len() != m_u * n {
            return Err(ModelError::Parameter("B must be n×m and K m×n".into()));
        }
        if e.len() != n * disturbance.dim() {
            return Err(ModelError::Parameter("E must be n×m_d".into()));
        }
        if !(alpha > 0.0) {
            return Err(ModelError::Parameter("α must be positive".into()));
        }
        Ok(Self {
            n,
            m_u,
            a,
            b,
            e,
            k,
            disturbance,
            alpha,
        })
    }

    /// Uncontrolled `ζ̇ = A ζ`.
    pub fn autonomous(n: usize, a: Vec<f64>, alpha: f64) -> Result<Self, ModelError> {
        Self::new(n, a, Vec::new(), Vec::new(), Vec::new(), DisturbanceBox::empty(), alpha)
    }
}

impl Plant for LinearPlant {
    fn name(&self) -> &str {
        "linear"
    }

    fn state_dim(&self) -> usize {
        self.n
    }

    fn input_dim(&self) -> usize {
        self.m_u
    }

    fn disturbance_box(&self) -> &DisturbanceBox {
        &self.disturbance
    }

    fn homogeneity_degree(&self) -> f64 {
        self.alpha
    }

    fn control(&self, held: &[f64], u: &mut [f64]) {
        for (i, ui) in u.iter_mut().enumerate() {
            *ui = (0..self.n).map(|j| self.k[i * self.n + j] * held[j]).sum();
        }
    }

    fn dynamics(&self, zeta: &[f64], u: &[f64], d: &[f64], out: &mut [f64]) {
        let m_d = self.disturbance.dim();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.a[i * self.n + j] * zeta[j];
            }
            for j in 0..self.m_u {
                acc += self.b[i * self.m_u + j] * u[j];
            }
            for j in 0..m_d {
                acc += self.e[i * m_d + j] * d[j];
            }
            *o = acc;
        }
    }
}
