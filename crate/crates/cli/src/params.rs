//! Parameter files for the synthetic-data generator.
//!
//! ```json
//! {
//!   "labels": ["a", "b", "c"],
//!   "reference": "c",
//!   "start": "2010-01",
//!   "fourier": {"period": 12, "harmonics": 2},
//!   "a1": [[0.5, 0.0], [0.0, 0.5]],
//!   "a2": [[0.2, 0.0], [0.0, 0.2]],
//!   "beta": [[0.1, 0.2, 0.0, 0.0, 0.0], [-0.3, 0.0, 0.1, 0.0, 0.0]],
//!   "gamma": [6.0, 0.0, 0.0, 0.0, 0.0]
//! }
//! ```
//!
//! `beta` has one row per ALR coordinate holding intercept, then a sine and
//! cosine per harmonic; `gamma` holds the same terms for log precision.

use std::sync::Arc;

use bdarma::model::{BdarmaParams, ParamLayout};
use bdarma::seasonal::FourierSpec;
use bdarma::series::YearMonth;
use bdarma::simplex::Basis;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub labels: Vec<String>,
    pub reference: String,
    pub start: YearMonth,
    pub fourier: FourierSpec,
    pub a1: Vec<Vec<f64>>,
    pub a2: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
}

/// Parses a parameter file. Errors carry the path of the offending field.
pub fn parse(text: &str) -> Result<ParamsFile, String> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| format!("field `{}`: {}", e.path(), e.inner()))
}

fn check_rows(field: &str, rows: &[Vec<f64>], n_rows: usize, n_cols: usize) -> Result<(), String> {
    if rows.len() != n_rows {
        return Err(format!("field `{field}`: expected {n_rows} rows, found {}", rows.len()));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n_cols {
            return Err(format!("field `{field}[{i}]`: expected {n_cols} entries, found {}", r.len()));
        }
    }
    Ok(())
}

impl ParamsFile {
    pub fn basis(&self) -> Result<Arc<Basis>, String> {
        let r = self
            .labels
            .iter()
            .position(|l| l == &self.reference)
            .ok_or_else(|| format!("field `reference`: '{}' is not one of the labels", self.reference))?;
        Basis::new(self.labels.clone(), r).map_err(|e| format!("field `labels`: {e}"))
    }

    pub fn to_params(&self) -> Result<(Arc<Basis>, BdarmaParams), String> {
        self.fourier.validate().map_err(|e| format!("field `fourier`: {e}"))?;
        let basis = self.basis()?;
        let layout = ParamLayout::for_basis(&basis, &self.fourier);
        let (n, p) = (layout.n_coords(), layout.n_terms());
        check_rows("a1", &self.a1, n, n)?;
        check_rows("a2", &self.a2, n, n)?;
        check_rows("beta", &self.beta, n, p)?;
        if self.gamma.len() != p {
            return Err(format!("field `gamma`: expected {p} entries, found {}", self.gamma.len()));
        }
        let mut theta = Vec::with_capacity(layout.dim());
        theta.extend(self.a1.iter().flatten());
        theta.extend(self.a2.iter().flatten());
        theta.extend(self.beta.iter().flatten());
        theta.extend(&self.gamma);
        let params = BdarmaParams::from_flat(layout, &theta).map_err(|e| e.to_string())?;
        Ok((basis, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{"labels": ["a", "b", "c"], "reference": "c", "start": "2010-01",
        "fourier": {"period": 12, "harmonics": 1},
        "a1": [[0.5, 0.0], [0.0, 0.5]], "a2": [[0.2, 0.0], [0.0, 0.2]],
        "beta": [[0.1, 0.2, 0.0], [-0.3, 0.0, 0.1]], "gamma": [6.0, 0.0, 0.0]}"#;

    #[test]
    fn packs_in_layout_order() {
        let (_, p) = parse(GOOD).unwrap().to_params().unwrap();
        let flat = p.to_flat();
        assert_eq!(flat.len(), 4 + 4 + 6 + 3);
        assert_eq!(&flat[8..14], &[0.1, 0.2, 0.0, -0.3, 0.0, 0.1]);
        assert_eq!(flat[14], 6.0);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = GOOD.replace(r#""gamma": [6.0, 0.0, 0.0]"#, r#""gamma": [6.0, "x", 0.0]"#);
        let e = parse(&bad).unwrap_err();
        assert!(e.contains("gamma[1]"), "{e}");
        let short = GOOD.replace("[-0.3, 0.0, 0.1]", "[-0.3, 0.0]");
        let e = parse(&short).unwrap().to_params().unwrap_err();
        assert!(e.contains("beta[1]"), "{e}");
    }
}
