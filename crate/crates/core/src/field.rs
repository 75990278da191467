//! Site-by-time value grids with an observation mask.

use crate::error::{Error, Result};

/// Values indexed by `(site, time)`; unobserved entries are masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    n_sites: usize,
    n_times: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
}

/// A field on the standard-Laplace scale.
pub type LaplaceField = Field;

impl Field {
    /// An all-missing field.
    pub fn missing(n_sites: usize, n_times: usize) -> Self {
        Self {
            n_sites,
            n_times,
            values: vec![f64::NAN; n_sites * n_times],
            observed: vec![false; n_sites * n_times],
        }
    }

    /// A complete field from per-site rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_sites = rows.len();
        let n_times = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_times) {
            return Err(Error::DimensionMismatch("field rows differ in length".into()));
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value at site {}, time {}",
                k / n_times.max(1),
                k % n_times.max(1)
            )));
        }
        let observed = vec![true; values.len()];
        Ok(Self { n_sites, n_times, values, observed })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    fn index(&self, site: usize, time: usize) -> usize {
        assert!(site < self.n_sites && time < self.n_times, "index ({site}, {time}) out of range");
        site * self.n_times + time
    }

    /// Value if observed.
    pub fn get(&self, site: usize, time: usize) -> Option<f64> {
        let k = self.index(site, time);
        self.observed[k].then_some(self.values[k])
    }

    pub fn is_observed(&self, site: usize, time: usize) -> bool {
        self.observed[self.index(site, time)]
    }

    pub fn set(&mut self, site: usize, time: usize, value: f64) {
        let k = self.index(site, time);
        self.values[k] = value;
        self.observed[k] = true;
    }

    pub fn clear(&mut self, site: usize, time: usize) {
        let k = self.index(site, time);
        self.values[k] = f64::NAN;
        self.observed[k] = false;
    }

    /// Observed values of one site, in time order.
    pub fn site_values(&self, site: usize) -> Vec<f64> {
        (0..self.n_times).filter_map(|t| self.get(site, t)).collect()
    }

    /// Full time series of one site with `None` for missing entries.
    pub fn site_series(&self, site: usize) -> Vec<Option<f64>> {
        (0..self.n_times).map(|t| self.get(site, t)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masking_round_trip() {
        let mut f = Field::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(f.get(1, 0), Some(3.0));
        f.clear(1, 0);
        assert_eq!(f.get(1, 0), None);
        assert_eq!(f.missing_count(), 1);
        assert_eq!(f.site_values(1), vec![4.0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Field::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
