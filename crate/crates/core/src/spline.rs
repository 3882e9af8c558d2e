//! B-spline bases (Cox-de Boor) and the equally spaced input lattice that the
//! position register addresses.

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// A B-spline basis of fixed degree over a nondecreasing knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    degree: usize,
    knots: Vec<f64>,
}

impl SplineBasis {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if knots.len() < degree + 2 {
            return config(format!(
                "{} knots cannot support a degree-{degree} basis",
                knots.len()
            ));
        }
        if knots.iter().any(|t| !t.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
            return config("knot vector must be finite and nondecreasing");
        }
        Ok(Self { degree, knots })
    }

    /// Clamped uniform knots on `[lo, hi]`: the end knots are repeated
    /// `degree + 1` times and `n_basis - degree - 1` interior knots are evenly spaced.
    pub fn clamped_uniform(n_basis: usize, degree: usize, lo: f64, hi: f64) -> Result<Self> {
        if n_basis <= degree {
            return config(format!(
                "a clamped degree-{degree} basis needs more than {degree} functions"
            ));
        }
        if !(hi > lo) {
            return config("clamped basis needs hi > lo");
        }
        let spans = n_basis - degree;
        let mut knots = vec![lo; degree];
        knots.extend((0..=spans).map(|i| lo + (hi - lo) * i as f64 / spans as f64));
        knots.extend(std::iter::repeat(hi).take(degree));
        Self::new(degree, knots)
    }

    /// Four quadratic splines on `[0, 1]` with knots `[0,0,0,0.5,1,1,1]`.
    pub fn default_quadratic() -> Self {
        Self::clamped_uniform(4, 2, 0.0, 1.0).expect("static basis is valid")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// `[t_p, t_{n_basis}]`, where the basis sums to one.
    pub fn domain(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.n_basis()])
    }

    /// Value of `B_{i,p}(x)`. Zero outside the support and for `i >= n_basis`.
    pub fn cox_de_boor(&self, i: usize, x: f64) -> f64 {
        if i >= self.n_basis() {
            return 0.0;
        }
        self.eval(i, self.degree, x)
    }

    fn eval(&self, i: usize, p: usize, x: f64) -> f64 {
        let t = &self.knots;
        if p == 0 {
            return self.indicator(i, x);
        }
        let mut v = 0.0;
        let left = t[i + p] - t[i];
        if left > 0.0 {
            v += (x - t[i]) / left * self.eval(i, p - 1, x);
        }
        let right = t[i + p + 1] - t[i + 1];
        if right > 0.0 {
            v += (t[i + p + 1] - x) / right * self.eval(i + 1, p - 1, x);
        }
        v
    }

    // Half-open [t_i, t_{i+1}); the last nonempty interval is closed on the right
    // so that the basis still sums to one at the right end of the domain.
    fn indicator(&self, i: usize, x: f64) -> f64 {
        let t = &self.knots;
        if t[i] <= x && x < t[i + 1] {
            return 1.0;
        }
        let last = *t.last().unwrap();
        if x == last && t[i] < t[i + 1] && t[i + 1] == last {
            return 1.0;
        }
        0.0
    }

    /// `M[i][k] = B_i(points[k])`. Errors when some basis function vanishes on every grid point.
    pub fn basis_matrix(&self, grid: &DiscretizationGrid) -> Result<Vec<Vec<f64>>> {
        let m: Vec<Vec<f64>> = (0..self.n_basis())
            .map(|i| grid.points().iter().map(|&x| self.cox_de_boor(i, x)).collect())
            .collect();
        if let Some(i) = m.iter().position(|row| !row.iter().any(|&v| v > 0.0)) {
            return config(format!("basis function {i} is zero on every grid point"));
        }
        Ok(m)
    }
}

/// `2^{n_x}` equally spaced points between `x_min` and `x_max`, inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationGrid {
    x_min: f64,
    x_max: f64,
    n_position_qubits: usize,
}

impl DiscretizationGrid {
    pub fn new(x_min: f64, x_max: f64, n_position_qubits: usize) -> Result<Self> {
        if n_position_qubits == 0 {
            return config("the position register needs at least one qubit");
        }
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return config(format!("invalid grid range [{x_min}, {x_max}]"));
        }
        Ok(Self {
            x_min,
            x_max,
            n_position_qubits,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_position_qubits(&self) -> usize {
        self.n_position_qubits
    }

    pub fn len(&self) -> usize {
        1 << self.n_position_qubits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn delta(&self) -> f64 {
        (self.x_max - self.x_min) / (self.len() - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.delta()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Index of the closest grid point. Ties go to the lower index; inputs
    /// beyond either end clamp to the end points.
    pub fn nearest_index(&self, x: f64) -> Result<usize> {
        if !x.is_finite() {
            return domain(format!("cannot discretise non-finite input {x}"));
        }
        Ok(self.nearest_index_unchecked(x))
    }

    pub(crate) fn nearest_index_unchecked(&self, x: f64) -> usize {
        let last = self.len() - 1;
        if x <= self.x_min {
            return 0;
        }
        if x >= self.x_max {
            return last;
        }
        let f = (x - self.x_min) / self.delta();
        let lo = (f.floor() as usize).min(last);
        if lo == last {
            return last;
        }
        // compare actual distances so the tie rule is applied on the real points
        let d_lo = x - self.point(lo);
        let d_hi = self.point(lo + 1) - x;
        if d_hi < d_lo {
            lo + 1
        } else {
            lo
        }
    }
}
