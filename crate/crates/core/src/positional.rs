//! Rotation-based positional encodings `p_i = (R^T)^i p_0`, `p_0 = (0, 1)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default number of distinguishable positions.
pub const DEFAULT_N_MAX: usize = 4096;

/// Angle increment `delta_hat = 2 pi / n_max` and the derived rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Positional {
    n_max: usize,
    delta_hat: f64,
}

impl Default for Positional {
    fn default() -> Self {
        Self::new(DEFAULT_N_MAX).expect("default n_max is valid")
    }
}

impl Positional {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 2 {
            return Err(Error::Params(format!(
                "n_max must be at least 2, got {n_max}"
            )));
        }
        Ok(Self {
            n_max,
            delta_hat: 2.0 * PI / n_max as f64,
        })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn delta_hat(&self) -> f64 {
        self.delta_hat
    }

    /// `(cos delta_hat, sin delta_hat)`.
    pub fn rotation(&self) -> (f64, f64) {
        (self.delta_hat.cos(), self.delta_hat.sin())
    }

    /// Applies `R^T` once: `(x, y) -> (c x + s y, -s x + c y)`.
    pub fn step(&self, p: (f64, f64)) -> (f64, f64) {
        let (c, s) = self.rotation();
        (c * p.0 + s * p.1, -s * p.0 + c * p.1)
    }

    /// `p_i` by `i`-fold rotation of `p_0`. Indices past `n_max` exceed the
    /// encoding capacity.
    pub fn encode(&self, i: usize) -> Result<(f64, f64)> {
        if i > self.n_max {
            return Err(Error::Capacity {
                requested: i,
                n_max: self.n_max,
            });
        }
        let mut p = (0.0, 1.0);
        for _ in 0..i {
            p = self.step(p);
        }
        Ok(p)
    }

    /// `p_0 .. p_{count-1}`.
    pub fn table(&self, count: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(count);
        let mut p = (0.0, 1.0);
        for _ in 0..count {
            out.push(p);
            p = self.step(p);
        }
        out
    }

    /// Smallest gap `p_i . p_i - p_i . p_j` between distinct positions.
    pub fn separation(&self) -> f64 {
        1.0 - self.delta_hat.cos()
    }

    /// Nearest position index for an embedding, if it lies within `tol` of
    /// the tabulated value in both coordinates.
    pub fn decode(&self, table: &[(f64, f64)], p: (f64, f64), tol: f64) -> Option<usize> {
        let angle = p.0.atan2(p.1).rem_euclid(2.0 * PI);
        let i = (angle / self.delta_hat).round() as usize % self.n_max;
        let q = table.get(i)?;
        ((q.0 - p.0).abs() <= tol && (q.1 - p.1).abs() <= tol).then_some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_examples() {
        let pe = Positional::new(8).unwrap();
        assert_eq!(pe.encode(0).unwrap(), (0.0, 1.0));
        let (a, b) = pe.encode(1).unwrap();
        let h = 2f64.sqrt() / 2.0;
        assert!((a - h).abs() < 1e-15 && (b - h).abs() < 1e-15);
        for i in 0..=8 {
            let (x, y) = pe.encode(i).unwrap();
            assert!((x * x + y * y - 1.0).abs() < 1e-12);
        }
        assert!(matches!(pe.encode(9), Err(Error::Capacity { .. })));
    }

    #[test]
    fn full_revolution_returns_to_origin() {
        let pe = Positional::new(64).unwrap();
        let (x, y) = pe.encode(64).unwrap();
        assert!(x.abs() < 1e-9 && (y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decode_roundtrip() {
        let pe = Positional::new(512).unwrap();
        let table = pe.table(512);
        for (i, p) in table.iter().enumerate() {
            assert_eq!(pe.decode(&table, *p, 1e-9), Some(i));
        }
        assert_eq!(pe.decode(&table, (0.0, 0.0), 1e-9), None);
    }
}
