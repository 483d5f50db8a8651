//! Sample-based predictive distributions on the simplex.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::simplex::{Basis, Composition};

/// `M` compositions for one horizon, stored row-major (`M × J`).
#[derive(Debug, Clone, PartialEq)]
pub struct Fan {
    basis: Arc<Basis>,
    members: Vec<f64>,
}

impl Fan {
    /// Takes ownership of `members` (length `M·J`). Every row must already be
    /// a valid composition.
    pub fn from_flat(basis: Arc<Basis>, members: Vec<f64>) -> Result<Self> {
        let j = basis.n_parts();
        if members.is_empty() || members.len() % j != 0 {
            return Err(Error::InvalidArgument(format!("{} values do not form rows of {j} parts", members.len())));
        }
        for (m, row) in members.chunks_exact(j).enumerate() {
            if row.iter().any(|v| !(*v > 0.0 && v.is_finite())) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("fan member {m} is not a composition: {row:?}")));
            }
        }
        Ok(Fan { basis, members })
    }

    pub(crate) fn from_flat_unchecked(basis: Arc<Basis>, members: Vec<f64>) -> Self {
        debug_assert_eq!(members.len() % basis.n_parts(), 0);
        Fan { basis, members }
    }

    /// `m` copies of one composition.
    pub fn point_mass(y: &Composition, m: usize) -> Self {
        let members = y.parts().iter().copied().cycle().take(m * y.len()).collect();
        Fan { basis: Arc::clone(y.basis()), members }
    }

    pub fn from_compositions(rows: &[Composition]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::InvalidArgument("empty fan".into()))?;
        let basis = Arc::clone(first.basis());
        let mut members = Vec::with_capacity(rows.len() * basis.n_parts());
        for r in rows {
            if r.basis() != &basis {
                return Err(Error::IncompatibleComposition("fan members on different bases".into()));
            }
            members.extend_from_slice(r.parts());
        }
        Ok(Fan { basis, members })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn n_parts(&self) -> usize {
        self.basis.n_parts()
    }

    /// Number of members `M`.
    pub fn len(&self) -> usize {
        self.members.len() / self.basis.n_parts()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member(&self, m: usize) -> &[f64] {
        let j = self.n_parts();
        &self.members[m * j..(m + 1) * j]
    }

    pub fn members(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.members.chunks_exact(self.n_parts())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.members
    }

    /// Values of component `j` across members.
    pub fn component(&self, j: usize) -> Vec<f64> {
        self.members().map(|r| r[j]).collect()
    }

    /// Arithmetic mean of the members.
    pub fn mean(&self) -> Vec<f64> {
        let j = self.n_parts();
        let mut out = vec![0.0; j];
        for r in self.members() {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        let m = self.len() as f64;
        out.iter_mut().for_each(|o| *o /= m);
        out
    }
}

/// Fans for horizons `1..=H` from one model at one origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastFan {
    pub horizons: Vec<Fan>,
}

impl ForecastFan {
    pub fn new(horizons: Vec<Fan>) -> Result<Self> {
        let first = horizons.first().ok_or_else(|| Error::InvalidArgument("no horizons".into()))?;
        if horizons.iter().any(|f| f.len() != first.len() || f.basis() != first.basis()) {
            return Err(Error::InvalidArgument("horizons differ in fan size or basis".into()));
        }
        Ok(ForecastFan { horizons })
    }

    pub fn n_horizons(&self) -> usize {
        self.horizons.len()
    }

    /// Fan at horizon `h` (1-based).
    pub fn at(&self, h: usize) -> &Fan {
        &self.horizons[h - 1]
    }

    pub fn fan_size(&self) -> usize {
        self.horizons[0].len()
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.horizons[0].basis()
    }
}
