//! Orthonormal DCT-II and its inverse, plus coefficient truncation.
//!
//! Evaluated directly in O(N²) from a shared cosine table. Sums use
//! Neumaier compensation so the transform stays orthonormal to ~1e-15 even
//! for a few thousand points.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// DCT coefficients of a real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralVector {
    coefficients: Vec<f64>,
}

impl SpectralVector {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

/// `cos(π m / 2N)` for `m in 0..4N`; `cos(π k (2n+1) / 2N)` is entry `k(2n+1) mod 4N`.
fn cosine_table(n: usize) -> Vec<f64> {
    let period = 4 * n;
    (0..period)
        .map(|m| (std::f64::consts::PI * m as f64 / (2 * n) as f64).cos())
        .collect()
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// `y_k = c_k Σ_n x_n cos(π k (2n+1) / 2N)` with `c_0 = √(1/N)`, `c_k = √(2/N)`.
pub fn dct_forward(x: &[f64]) -> Result<SpectralVector> {
    let n = x.len();
    if n == 0 {
        return Err(invalid("DCT of an empty vector"));
    }
    let table = cosine_table(n);
    let period = 4 * n;
    let coefficients = (0..n)
        .map(|k| {
            let mut acc = Neumaier::default();
            for (i, &xi) in x.iter().enumerate() {
                acc.add(xi * table[(k * (2 * i + 1)) % period]);
            }
            scale(k, n) * acc.total()
        })
        .collect();
    Ok(SpectralVector { coefficients })
}

/// `x_n = Σ_k c_k y_k cos(π k (2n+1) / 2N)`.
pub fn dct_inverse(y: &SpectralVector) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 {
        return Err(invalid("inverse DCT of an empty vector"));
    }
    let table = cosine_table(n);
    let period = 4 * n;
    let scaled: Vec<f64> = y
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, v)| scale(k, n) * v)
        .collect();
    Ok((0..n)
        .map(|i| {
            let mut acc = Neumaier::default();
            for (k, &yk) in scaled.iter().enumerate() {
                acc.add(yk * table[(k * (2 * i + 1)) % period]);
            }
            acc.total()
        })
        .collect())
}

/// Keeps the first `k` coefficients and zeroes the rest.
pub fn truncate(y: &SpectralVector, k: usize) -> Result<SpectralVector> {
    if k == 0 || k > y.len() {
        return Err(invalid(format!(
            "truncation length {k} outside 1..={}",
            y.len()
        )));
    }
    let mut out = y.clone();
    out.coefficients[k..].iter_mut().for_each(|c| *c = 0.0);
    Ok(out)
}
