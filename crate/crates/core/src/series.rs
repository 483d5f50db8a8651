//! Calendar-indexed compositional panels.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simplex::{Basis, Composition};

/// A calendar month, `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    year: i32,
    month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidArgument(format!("month {month} out of range")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + (self.month as i64 - 1)
    }

    fn from_ordinal(o: i64) -> Self {
        YearMonth { year: o.div_euclid(12) as i32, month: o.rem_euclid(12) as u32 + 1 }
    }

    /// Month shifted by `n` (may be negative).
    pub fn add_months(self, n: i64) -> Self {
        Self::from_ordinal(self.ordinal() + n)
    }

    pub fn succ(self) -> Self {
        self.add_months(1)
    }

    /// Signed number of months from `self` to `later`.
    pub fn months_until(self, later: YearMonth) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    /// Accepts `YYYY-MM` and `YYYY-MM-DD` (day ignored).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut it = s.split('-');
        let bad = || Error::InvalidArgument(format!("invalid year-month '{s}'"));
        let year: i32 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let month: u32 = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if let Some(day) = it.next() {
            day.parse::<u32>().map_err(|_| bad())?;
        }
        if it.next().is_some() {
            return Err(bad());
        }
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A gap-free monthly panel of compositions.
///
/// `start_index` is the global month index of the first row: 1 for a series
/// loaded from file, preserved by [`CompositionalSeries::window`] so that
/// seasonal regressors keep their phase inside backtest windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionalSeries {
    basis: Arc<Basis>,
    start: YearMonth,
    start_index: i64,
    shares: Vec<f64>,
}

impl CompositionalSeries {
    pub fn new(basis: Arc<Basis>, start: YearMonth, rows: Vec<Composition>) -> Result<Self> {
        let mut shares = Vec::with_capacity(rows.len() * basis.n_parts());
        for (i, r) in rows.iter().enumerate() {
            if r.basis() != &basis {
                return Err(Error::IncompatibleComposition(format!("row {i} has a different basis")));
            }
            shares.extend_from_slice(r.parts());
        }
        Ok(CompositionalSeries { basis, start, start_index: 1, shares })
    }

    pub(crate) fn from_flat(basis: Arc<Basis>, start: YearMonth, start_index: i64, shares: Vec<f64>) -> Self {
        debug_assert_eq!(shares.len() % basis.n_parts(), 0);
        CompositionalSeries { basis, start, start_index, shares }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn labels(&self) -> &[String] {
        self.basis.labels()
    }

    pub fn n_parts(&self) -> usize {
        self.basis.n_parts()
    }

    pub fn len(&self) -> usize {
        self.shares.len() / self.basis.n_parts()
    }

    pub fn is_empty(&self) -> bool {
        self.shares.is_empty()
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    pub fn end(&self) -> YearMonth {
        self.start.add_months(self.len() as i64 - 1)
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    /// Global month index of row `row` (0-based).
    pub fn global_index(&self, row: usize) -> i64 {
        self.start_index + row as i64
    }

    pub fn date(&self, row: usize) -> YearMonth {
        self.start.add_months(row as i64)
    }

    /// Row (0-based) holding month `date`, if inside the series.
    pub fn row_of(&self, date: YearMonth) -> Option<usize> {
        let d = self.start.months_until(date);
        (d >= 0 && (d as usize) < self.len()).then_some(d as usize)
    }

    pub fn shares(&self, row: usize) -> &[f64] {
        let j = self.n_parts();
        &self.shares[row * j..(row + 1) * j]
    }

    pub fn composition(&self, row: usize) -> Composition {
        Composition::from_closed_unchecked(self.shares(row).to_vec(), Arc::clone(&self.basis))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.shares.chunks(self.n_parts())
    }

    /// The first `len` observations (an expanding-window estimation set).
    pub fn window(&self, len: usize) -> Result<CompositionalSeries> {
        if len > self.len() {
            return Err(Error::OutOfRange { index: len, reason: format!("series has {} rows", self.len()) });
        }
        Ok(CompositionalSeries {
            basis: Arc::clone(&self.basis),
            start: self.start,
            start_index: self.start_index,
            shares: self.shares[..len * self.n_parts()].to_vec(),
        })
    }

    /// SHA-256 of the labels, reference, calendar and share bit patterns.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for l in self.labels() {
            h.update(l.as_bytes());
            h.update([0u8]);
        }
        h.update((self.basis.reference() as u64).to_le_bytes());
        h.update(self.start.to_string().as_bytes());
        h.update(self.start_index.to_le_bytes());
        for v in &self.shares {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
