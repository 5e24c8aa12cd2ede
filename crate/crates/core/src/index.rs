//! Country-major, sector-minor flat indexing.
//!
//! Every `NJ`-length vector and `NJ x NJ` matrix in the crate stores the pair
//! (country `i`, sector `j`) at position `i * J + j` (0-based). For
//! `NJ x NJ` network matrices the row is the supplying pair and the column is
//! the purchasing pair.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n_countries: usize,
    pub n_sectors: usize,
}

impl Dimensions {
    pub fn new(n_countries: usize, n_sectors: usize) -> Result<Self> {
        if n_countries < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 countries, got {n_countries}"
            )));
        }
        if n_sectors < 1 {
            return Err(Error::Argument("need at least 1 sector".into()));
        }
        Ok(Self {
            n_countries,
            n_sectors,
        })
    }

    /// Number of country-sector pairs.
    #[inline]
    pub fn nj(&self) -> usize {
        self.n_countries * self.n_sectors
    }

    /// 0-based position of `(country, sector)`, both 0-based. Unchecked.
    #[inline]
    pub fn at(&self, country: usize, sector: usize) -> usize {
        country * self.n_sectors + sector
    }

    /// Country owning flat position `idx`.
    #[inline]
    pub fn country_of(&self, idx: usize) -> usize {
        idx / self.n_sectors
    }

    #[inline]
    pub fn sector_of(&self, idx: usize) -> usize {
        idx % self.n_sectors
    }

    /// Maps 1-based `(country, sector)` labels to the 0-based flat index
    /// `(country - 1) * J + sector - 1`.
    ///
    /// ```
    /// use cbam_ge::Dimensions;
    /// let dims = Dimensions::new(3, 44).unwrap();
    /// assert_eq!(dims.flat_index(2, 1).unwrap(), 44);
    /// ```
    pub fn flat_index(&self, country: usize, sector: usize) -> Result<usize> {
        if country == 0 || country > self.n_countries {
            return Err(Error::Argument(format!(
                "country {country} out of range 1..={}",
                self.n_countries
            )));
        }
        if sector == 0 || sector > self.n_sectors {
            return Err(Error::Argument(format!(
                "sector {sector} out of range 1..={}",
                self.n_sectors
            )));
        }
        Ok((country - 1) * self.n_sectors + sector - 1)
    }

    /// Inverse of [`Dimensions::flat_index`]: returns 1-based labels.
    pub fn unflatten(&self, idx: usize) -> Result<(usize, usize)> {
        if idx >= self.nj() {
            return Err(Error::Argument(format!(
                "flat index {idx} out of range 0..{}",
                self.nj()
            )));
        }
        Ok((idx / self.n_sectors + 1, idx % self.n_sectors + 1))
    }
}
