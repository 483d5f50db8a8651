//! Fourier seasonal regressors and the block design `I ⊗ fᵀ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Period and number of harmonics of the seasonal basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSpec {
    period: u32,
    #[serde(rename = "harmonics")]
    n_harmonics: u32,
}

impl FourierSpec {
    pub fn new(period: u32, n_harmonics: u32) -> Result<Self> {
        if n_harmonics < 1 || 2 * n_harmonics >= period {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= harmonics and 2*harmonics < period, got harmonics={n_harmonics}, period={period}"
            )));
        }
        Ok(FourierSpec { period, n_harmonics })
    }

    /// Monthly data with `n_harmonics` harmonics.
    pub fn monthly(n_harmonics: u32) -> Result<Self> {
        Self::new(12, n_harmonics)
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn n_harmonics(&self) -> u32 {
        self.n_harmonics
    }

    /// Length of a design row: intercept plus a sine/cosine pair per harmonic.
    pub fn n_terms(&self) -> usize {
        1 + 2 * self.n_harmonics as usize
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.period, self.n_harmonics).map(|_| ())
    }
}

impl Default for FourierSpec {
    fn default() -> Self {
        FourierSpec { period: 12, n_harmonics: 5 }
    }
}

/// Seasonal regressor vector `f_t` for one month.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow {
    pub f: Vec<f64>,
    pub t_index: i64,
}

impl DesignRow {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn dot(&self, coef: &[f64]) -> f64 {
        debug_assert_eq!(coef.len(), self.f.len());
        self.f.iter().zip(coef).map(|(a, b)| a * b).sum()
    }
}

/// `(1, sin(2πt/P), cos(2πt/P), …, sin(2πKt/P), cos(2πKt/P))`.
///
/// The phase is reduced modulo the period before scaling so rows repeat
/// bit-for-bit with period `P`.
pub fn fourier_row(t: i64, spec: &FourierSpec) -> DesignRow {
    let period = spec.period as i64;
    let mut f = Vec::with_capacity(spec.n_terms());
    f.push(1.0);
    for k in 1..=spec.n_harmonics as i64 {
        let phase = (k * t).rem_euclid(period) as f64;
        let angle = 2.0 * std::f64::consts::PI * phase / period as f64;
        f.push(angle.sin());
        f.push(angle.cos());
    }
    DesignRow { f, t_index: t }
}

/// Dense `I_{n_coords} ⊗ fᵀ`. Hot paths use [`apply_block`] instead.
pub fn block_design(row: &DesignRow, n_coords: usize) -> DMatrix<f64> {
    let p = row.len();
    let mut x = DMatrix::zeros(n_coords, n_coords * p);
    for j in 0..n_coords {
        for (k, v) in row.f.iter().enumerate() {
            x[(j, j * p + k)] = *v;
        }
    }
    x
}

/// Slice form of `X_t β`: `out[j] = f · β[j·p..(j+1)·p]`.
pub fn apply_block(row: &DesignRow, beta: &[f64], out: &mut [f64]) {
    let p = row.len();
    debug_assert_eq!(beta.len(), out.len() * p);
    for (o, b) in out.iter_mut().zip(beta.chunks_exact(p)) {
        *o = row.dot(b);
    }
}
