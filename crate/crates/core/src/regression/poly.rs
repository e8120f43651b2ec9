use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Monomials of total degree ≤ `degree` in `input_dim` variables.
///
/// Ordering is graded-lexicographic with the constant first: for n = 2,
/// degree 2 the features are `(1, z1, z2, z1², z1 z2, z2²)`. The ordering
/// fixes the meaning of each row of a fitted coefficient matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PolyDescriptor", into = "PolyDescriptor")]
pub struct PolyFeatureMap {
    input_dim: usize,
    degree: usize,
    /// Each monomial as a nondecreasing list of variable indices.
    monomials: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct PolyDescriptor {
    input_dim: usize,
    degree: usize,
}

impl TryFrom<PolyDescriptor> for PolyFeatureMap {
    type Error = Error;

    fn try_from(d: PolyDescriptor) -> Result<Self> {
        PolyFeatureMap::new(d.input_dim, d.degree)
    }
}

impl From<PolyFeatureMap> for PolyDescriptor {
    fn from(m: PolyFeatureMap) -> Self {
        PolyDescriptor {
            input_dim: m.input_dim,
            degree: m.degree,
        }
    }
}

impl PolyFeatureMap {
    pub fn new(input_dim: usize, degree: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("feature map needs input dimension ≥ 1"));
        }
        let mut monomials = vec![Vec::new()];
        let mut previous: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..degree {
            let mut next = Vec::new();
            for m in &previous {
                let start = m.last().copied().unwrap_or(0);
                for v in start..input_dim {
                    let mut grown = m.clone();
                    grown.push(v);
                    next.push(grown);
                }
            }
            monomials.extend(next.iter().cloned());
            previous = next;
        }
        Ok(Self {
            input_dim,
            degree,
            monomials,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of features p = C(n + degree, degree).
    pub fn output_dim(&self) -> usize {
        self.monomials.len()
    }

    pub fn monomials(&self) -> &[Vec<usize>] {
        &self.monomials
    }

    fn check(&self, z: &[impl Sized]) -> Result<()> {
        if z.len() != self.input_dim {
            return Err(Error::config(format!(
                "feature map expects input of length {}, got {}",
                self.input_dim,
                z.len()
            )));
        }
        Ok(())
    }

    /// J(z).
    pub fn features<T: Real>(&self, z: &[T]) -> Result<Vec<T>> {
        self.check(z)?;
        Ok(self
            .monomials
            .iter()
            .map(|m| m.iter().fold(T::one(), |acc, &v| acc * z[v]))
            .collect())
    }

    /// ∇J(z), the p × n Jacobian.
    pub fn jacobian<T: Real>(&self, z: &[T]) -> Result<Matrix<T>> {
        self.check(z)?;
        let mut jac = Matrix::zeros(self.output_dim(), self.input_dim);
        for (row, m) in self.monomials.iter().enumerate() {
            // Product rule: drop one factor at a time.
            for skip in 0..m.len() {
                let rest = m
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != skip)
                    .fold(T::one(), |acc, (_, &v)| acc * z[v]);
                jac[(row, m[skip])] += rest;
            }
        }
        Ok(jac)
    }
}

/// Binomial coefficient, used to cross-check the monomial count.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}
