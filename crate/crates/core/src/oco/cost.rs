//! Revealed per-round cost: a convex quadratic that can be evaluated and
//! differentiated at arbitrary points, not just at the committed decision.

/// Convex quadratic cost `0.5 x'Hx + q'x + c` with a dense symmetric `H`.
///
/// Costs are assembled additively from squared affine terms, linear terms,
/// and constants; decision dimensions in this crate are small (a handful of
/// device setpoints), so dense storage is the simplest correct choice.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    dim: usize,
    hessian: Vec<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl QuadraticCost {
    /// The identically-zero cost on `dim` variables.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            hessian: vec![0.0; dim * dim],
            linear: vec![0.0; dim],
            constant: 0.0,
        }
    }

    /// Number of decision variables.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `weight * (sum_j coeff_j * x_j + shift)^2`; `weight` must be
    /// non-negative to keep the cost convex.
    pub fn add_square(&mut self, terms: &[(usize, f64)], shift: f64, weight: f64) {
        assert!(weight >= 0.0, "negative square weight breaks convexity");
        for &(i, a) in terms {
            assert!(i < self.dim, "term index {i} out of range");
            for &(j, b) in terms {
                self.hessian[i * self.dim + j] += 2.0 * weight * a * b;
            }
            self.linear[i] += 2.0 * weight * shift * a;
        }
        self.constant += weight * shift * shift;
    }

    /// Adds `coeff * x_index`.
    pub fn add_linear(&mut self, index: usize, coeff: f64) {
        assert!(index < self.dim, "index {index} out of range");
        self.linear[index] += coeff;
    }

    /// Adds a constant offset.
    pub fn add_constant(&mut self, value: f64) {
        self.constant += value;
    }

    /// Cost value at `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim);
        let mut quad = 0.0;
        for i in 0..self.dim {
            let row = &self.hessian[i * self.dim..(i + 1) * self.dim];
            let hx: f64 = row.iter().zip(x).map(|(h, v)| h * v).sum();
            quad += x[i] * hx;
        }
        0.5 * quad + self.linear.iter().zip(x).map(|(q, v)| q * v).sum::<f64>() + self.constant
    }

    /// Gradient `Hx + q` at `x`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                let row = &self.hessian[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(x).map(|(h, v)| h * v).sum::<f64>() + self.linear[i]
            })
            .collect()
    }

    /// Dense row-major Hessian (`dim * dim` entries).
    pub fn hessian(&self) -> &[f64] {
        &self.hessian
    }

    /// Linear coefficients.
    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Constant offset.
    pub fn constant(&self) -> f64 {
        self.constant
    }
}
