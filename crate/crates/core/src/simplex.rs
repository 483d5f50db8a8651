//! Compositional geometry on the unit simplex.
//!
//! A [`Composition`] is a strictly positive share vector that sums to one. Its
//! [`Basis`] carries the component labels and the reference part used as the
//! denominator of the additive log-ratio (ALR) transform. ALR coordinates keep
//! the original label order with the reference removed.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance on the unit-sum invariant.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// Additive constant of the zero-replacement rule.
pub const ZERO_REPLACEMENT_EPS: f64 = 1e-6;

/// Component labels plus the ALR reference part.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Basis {
    labels: Vec<String>,
    reference: usize,
}

impl Basis {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>, reference: usize) -> Result<Arc<Self>> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a composition needs at least 2 parts, got {}",
                labels.len()
            )));
        }
        if reference >= labels.len() {
            return Err(Error::InvalidArgument(format!(
                "reference index {reference} out of range for {} parts",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::InvalidArgument(format!("duplicate label '{l}'")));
            }
        }
        Ok(Arc::new(Basis { labels, reference }))
    }

    /// Basis with labels `x1..xJ` and the last part as reference.
    pub fn anonymous(n_parts: usize) -> Result<Arc<Self>> {
        Self::new((1..=n_parts).map(|i| format!("x{i}")), n_parts.saturating_sub(1))
    }

    /// Basis whose reference is given by label.
    pub fn with_reference_label<S: Into<String>>(
        labels: impl IntoIterator<Item = S>,
        reference: &str,
    ) -> Result<Arc<Self>> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        let idx = labels
            .iter()
            .position(|l| l == reference)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown reference label '{reference}'")))?;
        Self::new(labels, idx)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn n_parts(&self) -> usize {
        self.labels.len()
    }

    pub fn n_coords(&self) -> usize {
        self.labels.len() - 1
    }

    /// Part index of each ALR coordinate.
    pub fn coord_parts(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&j| j != self.reference)
    }
}

/// A J-part share vector on the open unit simplex.
#[derive(Debug, Clone)]
pub struct Composition {
    parts: Vec<f64>,
    basis: Arc<Basis>,
}

impl PartialEq for Composition {
    fn eq(&self, other: &Self) -> bool {
        self.parts == other.parts && self.basis == other.basis
    }
}

impl Composition {
    /// Wraps already-closed shares after validating the simplex invariants.
    pub fn new(parts: Vec<f64>, basis: Arc<Basis>) -> Result<Self> {
        check_len(parts.len(), &basis)?;
        check_positive(&parts, &basis)?;
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Domain(format!("parts sum to {sum}, not 1")));
        }
        Ok(Composition { parts, basis })
    }

    /// Trusted constructor for internal hot paths; the caller guarantees the
    /// invariants.
    pub(crate) fn from_closed_unchecked(parts: Vec<f64>, basis: Arc<Basis>) -> Self {
        debug_assert_eq!(parts.len(), basis.n_parts());
        Composition { parts, basis }
    }

    pub fn parts(&self) -> &[f64] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<f64> {
        self.parts
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn labels(&self) -> &[String] {
        self.basis.labels()
    }

    pub fn reference_index(&self) -> usize {
        self.basis.reference()
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (l, p)) in self.basis.labels().iter().zip(&self.parts).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}={p:.6}")?;
        }
        write!(f, ")")
    }
}

/// ALR coordinates of a composition.
#[derive(Debug, Clone, PartialEq)]
pub struct AlrVector {
    coords: Vec<f64>,
    basis: Arc<Basis>,
}

impl AlrVector {
    pub fn new(coords: Vec<f64>, basis: Arc<Basis>) -> Result<Self> {
        if coords.len() != basis.n_coords() {
            return Err(Error::InvalidArgument(format!(
                "expected {} ALR coordinates, got {}",
                basis.n_coords(),
                coords.len()
            )));
        }
        if let Some(i) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::Domain(format!("ALR coordinate {i} is not finite")));
        }
        Ok(AlrVector { coords, basis })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn reference_index(&self) -> usize {
        self.basis.reference()
    }
}

fn check_len(n: usize, basis: &Basis) -> Result<()> {
    if n != basis.n_parts() {
        return Err(Error::IncompatibleComposition(format!(
            "expected {} parts, got {n}",
            basis.n_parts()
        )));
    }
    Ok(())
}

fn check_positive(parts: &[f64], basis: &Basis) -> Result<()> {
    for (p, l) in parts.iter().zip(basis.labels()) {
        if !p.is_finite() {
            return Err(Error::NonFinite { label: l.clone(), value: *p });
        }
        if *p <= 0.0 {
            return Err(Error::ZeroComponent { label: l.clone(), value: *p });
        }
    }
    Ok(())
}

/// Normalizes raw positive quantities to unit sum.
pub fn closure(raw: &[f64], basis: &Arc<Basis>) -> Result<Composition> {
    check_len(raw.len(), basis)?;
    check_positive(raw, basis)?;
    let total: f64 = raw.iter().sum();
    let parts = raw.iter().map(|x| x / total).collect();
    Ok(Composition { parts, basis: Arc::clone(basis) })
}

/// Zero replacement: close (zeros allowed), add [`ZERO_REPLACEMENT_EPS`] to
/// every share, close again.
pub fn closure_with_replacement(raw: &[f64], basis: &Arc<Basis>) -> Result<Composition> {
    check_len(raw.len(), basis)?;
    for (p, l) in raw.iter().zip(basis.labels()) {
        if !p.is_finite() {
            return Err(Error::NonFinite { label: l.clone(), value: *p });
        }
        if *p < 0.0 {
            return Err(Error::ZeroComponent { label: l.clone(), value: *p });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroComponent { label: basis.labels()[0].clone(), value: 0.0 });
    }
    let shifted: Vec<f64> = raw.iter().map(|x| x / total + ZERO_REPLACEMENT_EPS).collect();
    closure(&shifted, basis)
}

/// `out[k] = log(y[p_k] / y[ref])` over the non-reference parts `p_k`.
pub fn alr_into(parts: &[f64], reference: usize, out: &mut [f64]) {
    let lr = parts[reference].ln();
    let mut k = 0;
    for (j, p) in parts.iter().enumerate() {
        if j != reference {
            out[k] = p.ln() - lr;
            k += 1;
        }
    }
}

/// Inverse ALR with max-subtraction: a softmax over the coordinates plus an
/// implicit zero logit for the reference part.
pub fn alr_inv_into(coords: &[f64], reference: usize, out: &mut [f64]) {
    let max = coords.iter().fold(0.0_f64, |m, &c| m.max(c));
    let mut total = 0.0;
    let mut k = 0;
    for (j, o) in out.iter_mut().enumerate() {
        let v = if j == reference {
            (-max).exp()
        } else {
            let v = (coords[k] - max).exp();
            k += 1;
            v
        };
        *o = v;
        total += v;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

pub fn alr(y: &Composition) -> AlrVector {
    let mut coords = vec![0.0; y.basis.n_coords()];
    alr_into(&y.parts, y.basis.reference(), &mut coords);
    AlrVector { coords, basis: Arc::clone(&y.basis) }
}

pub fn alr_inv(e: &AlrVector) -> Composition {
    let mut parts = vec![0.0; e.basis.n_parts()];
    alr_inv_into(&e.coords, e.basis.reference(), &mut parts);
    // Underflow for |coords| beyond ~745 can produce exact zeros.
    floor_and_close(&mut parts);
    Composition { parts, basis: Arc::clone(&e.basis) }
}

/// Replaces exact zeros by the smallest positive normal and re-closes.
pub(crate) fn floor_and_close(parts: &mut [f64]) {
    if parts.iter().any(|&p| p <= 0.0) {
        for p in parts.iter_mut() {
            if *p <= 0.0 {
                *p = f64::MIN_POSITIVE;
            }
        }
        let s: f64 = parts.iter().sum();
        for p in parts.iter_mut() {
            *p /= s;
        }
    }
}

/// Centred log-ratio coordinates (one per part, summing to zero).
pub fn clr(y: &Composition) -> Vec<f64> {
    clr_of(&y.parts)
}

pub(crate) fn clr_of(parts: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = parts.iter().map(|p| p.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.into_iter().map(|l| l - mean).collect()
}

/// `‖clr(y) − clr(mu)‖₂ / √J`.
pub fn aitchison_rmse_distance(y: &Composition, mu: &Composition) -> Result<f64> {
    if y.basis != mu.basis {
        return Err(Error::IncompatibleComposition(format!(
            "labels {:?} (ref {}) vs {:?} (ref {})",
            y.labels(),
            y.reference_index(),
            mu.labels(),
            mu.reference_index()
        )));
    }
    Ok(aitchison_rmse_of(&y.parts, &mu.parts))
}

pub(crate) fn aitchison_rmse_of(a: &[f64], b: &[f64]) -> f64 {
    let ca = clr_of(a);
    let cb = clr_of(b);
    let ss: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(j: usize) -> Arc<Basis> {
        Basis::anonymous(j).unwrap()
    }

    #[test]
    fn closure_examples() {
        let b7 = basis(7);
        let y = closure(&[2.0; 7], &b7).unwrap();
        for p in y.parts() {
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
        let y = closure(&[1.0, 1.0, 2.0], &basis(3)).unwrap();
        assert_eq!(y.parts(), &[0.25, 0.25, 0.5]);

        let means = [13.0, 1.64, 5.20, 12.2, 30.3, 6.51, 31.2];
        let total: f64 = means.iter().sum();
        assert!((total - 100.05).abs() < 1e-9);
        let y = closure(&means, &b7).unwrap();
        for (p, m) in y.parts().iter().zip(means) {
            assert!((p - m / total).abs() < 1e-15);
        }
        assert!((y.parts().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closure_rejects_zero_with_label() {
        let b = Basis::new(["a", "b", "c"], 2).unwrap();
        match closure(&[1.0, 0.0, 2.0], &b) {
            Err(Error::ZeroComponent { label, .. }) => assert_eq!(label, "b"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(closure(&[1.0, -1.0, 2.0], &b), Err(Error::ZeroComponent { .. })));
        assert!(matches!(closure(&[1.0, f64::NAN, 2.0], &b), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn zero_replacement_produces_valid_composition() {
        let b = basis(3);
        let y = closure_with_replacement(&[1.0, 0.0, 3.0], &b).unwrap();
        assert!(y.parts().iter().all(|&p| p > 0.0));
        let expected = [0.25 + 1e-6, 1e-6, 0.75 + 1e-6];
        let s: f64 = expected.iter().sum();
        for (p, e) in y.parts().iter().zip(expected) {
            assert!((p - e / s).abs() < 1e-15);
        }
    }

    #[test]
    fn alr_examples() {
        let y = closure(&[1.0; 7], &basis(7)).unwrap();
        assert!(alr(&y).coords().iter().all(|&c| c.abs() < 1e-15));

        let b = basis(3);
        let y = Composition::new(vec![0.5, 0.25, 0.25], Arc::clone(&b)).unwrap();
        let e = alr(&y);
        assert!((e.coords()[0] - 2f64.ln()).abs() < 1e-15);
        assert!(e.coords()[1].abs() < 1e-15);

        let back = alr_inv(&AlrVector::new(vec![2f64.ln(), 0.0], b).unwrap());
        assert!((back.parts()[0] - 0.5).abs() < 1e-15);
        assert!((back.parts()[1] - 0.25).abs() < 1e-15);
        assert!((back.parts()[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn alr_respects_reference_position() {
        let b = Basis::new(["a", "b", "c"], 0).unwrap();
        let y = Composition::new(vec![0.25, 0.5, 0.25], Arc::clone(&b)).unwrap();
        let e = alr(&y);
        assert!((e.coords()[0] - 2f64.ln()).abs() < 1e-15);
        assert!(e.coords()[1].abs() < 1e-15);
        let back = alr_inv(&e);
        for (p, q) in back.parts().iter().zip(y.parts()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn alr_inv_zero_is_uniform() {
        let b = basis(7);
        let y = alr_inv(&AlrVector::new(vec![0.0; 6], b).unwrap());
        for p in y.parts() {
            assert!((p - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn alr_inv_large_coordinates_stay_finite() {
        // Reference values: first part = 1/(1 + 6 e^{-700}) ≈ 1 - 6e^{-700},
        // the others e^{-700}/(1 + ...) which underflow to ~1e-304.
        let b = basis(7);
        let mut c = vec![0.0; 6];
        c[0] = 700.0;
        let y = alr_inv(&AlrVector::new(c, b).unwrap());
        assert!(y.parts().iter().all(|p| p.is_finite() && *p > 0.0));
        assert!((y.parts()[0] - 1.0).abs() < 1e-15);
        let expected_small = (-700.0f64).exp();
        for p in &y.parts()[1..] {
            assert!(((p - expected_small) / expected_small).abs() < 1e-12);
        }
    }

    #[test]
    fn clr_examples() {
        let y = closure(&[3.0; 4], &basis(4)).unwrap();
        assert!(clr(&y).iter().all(|c| c.abs() < 1e-15));

        let y = Composition::new(vec![0.5, 0.25, 0.25], basis(3)).unwrap();
        let g = (0.5f64 * 0.25 * 0.25).powf(1.0 / 3.0);
        let expected = [(0.5 / g).ln(), (0.25 / g).ln(), (0.25 / g).ln()];
        for (c, e) in clr(&y).iter().zip(expected) {
            assert!((c - e).abs() < 1e-14);
        }
    }

    #[test]
    fn distance_requires_matching_basis() {
        let a = closure(&[1.0, 2.0, 3.0], &basis(3)).unwrap();
        let b = closure(&[1.0, 2.0, 3.0], &Basis::new(["x1", "x2", "x3"], 0).unwrap()).unwrap();
        assert!(matches!(aitchison_rmse_distance(&a, &b), Err(Error::IncompatibleComposition(_))));
        assert_eq!(aitchison_rmse_distance(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn distance_is_perturbation_invariant_under_common_scaling() {
        let b = basis(4);
        let x = [1.0, 2.0, 5.0, 0.3];
        let z = [0.7, 4.0, 1.0, 2.0];
        let d = aitchison_rmse_distance(&closure(&x, &b).unwrap(), &closure(&z, &b).unwrap()).unwrap();
        let x3: Vec<f64> = x.iter().map(|v| v * 3.0).collect();
        let z3: Vec<f64> = z.iter().map(|v| v * 3.0).collect();
        let d3 = aitchison_rmse_distance(&closure(&x3, &b).unwrap(), &closure(&z3, &b).unwrap()).unwrap();
        assert!((d - d3).abs() < 1e-12);
    }

    #[test]
    fn basis_validation() {
        assert!(Basis::new(["a"], 0).is_err());
        assert!(Basis::new(["a", "b"], 2).is_err());
        assert!(Basis::new(["a", "a"], 0).is_err());
        assert_eq!(Basis::with_reference_label(["a", "b", "c"], "b").unwrap().reference(), 1);
    }
}
