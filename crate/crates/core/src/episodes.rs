//! Runs declustering at the conditioning site and extraction of extreme
//! episodes as fixed-length site-by-time blocks.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::field::Field;

/// Settings of the runs declustering rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RunsConfig {
    /// Threshold on the Laplace scale.
    pub threshold: f64,
    /// Number of consecutive non-exceedances that closes a cluster.
    pub run_length: usize,
    /// Episode length in time steps.
    pub block_length: usize,
    /// Time indices at which a new year starts; clusters and episodes never span one.
    pub year_starts: Vec<usize>,
}

impl RunsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.run_length == 0 || self.block_length == 0 {
            return Err(Error::invalid("run length and block length must be at least 1"));
        }
        if !self.threshold.is_finite() {
            return Err(Error::invalid("threshold must be finite"));
        }
        Ok(())
    }
}

/// A cluster of exceedances: first and last exceedance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cluster {
    pub start: usize,
    pub end: usize,
}

/// Clusters of the series under the runs rule. Missing (NaN) values count as
/// non-exceedances.
pub fn clusters(series: &[f64], threshold: f64, run_length: usize, year_starts: &[usize]) -> Vec<Cluster> {
    let mut out = Vec::new();
    let mut open: Option<Cluster> = None;
    let mut boundaries = year_starts.to_vec();
    boundaries.sort_unstable();
    let mut next_boundary = 0;
    for (t, &x) in series.iter().enumerate() {
        while next_boundary < boundaries.len() && boundaries[next_boundary] < t {
            next_boundary += 1;
        }
        if next_boundary < boundaries.len() && boundaries[next_boundary] == t {
            if let Some(c) = open.take() {
                out.push(c);
            }
        }
        if x > threshold {
            match open.as_mut() {
                Some(c) => c.end = t,
                None => open = Some(Cluster { start: t, end: t }),
            }
        } else if let Some(c) = open {
            if t - c.end >= run_length {
                out.push(c);
                open = None;
            }
        }
    }
    out.extend(open);
    out
}

/// First exceedance index of each cluster.
pub fn decluster_runs(series: &[f64], cfg: &RunsConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    Ok(clusters(series, cfg.threshold, cfg.run_length, &cfg.year_starts).into_iter().map(|c| c.start).collect())
}

/// Number of clusters for each candidate run length, to guide the choice of `r`.
pub fn cluster_counts(series: &[f64], threshold: f64, run_lengths: &[usize], year_starts: &[usize]) -> Vec<(usize, usize)> {
    run_lengths.iter().map(|&r| (r, clusters(series, threshold, r.max(1), year_starts).len())).collect()
}

/// One extreme episode: a `sites × block_length` window on the Laplace scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Time index of the conditioning exceedance in the source record.
    pub start: usize,
    /// Laplace value at the conditioning site and first time step.
    pub conditioning_value: f64,
    pub values: Field,
}

/// Replicated episodes sharing sites, conditioning site and block length.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSet {
    pub conditioning_site: usize,
    pub threshold: f64,
    pub n_sites: usize,
    pub block_length: usize,
    pub episodes: Vec<Episode>,
}

impl EpisodeSet {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn conditioning_values(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.conditioning_value).collect()
    }

    /// Checks rectangular shape, conditioning entries, and threshold exceedance.
    pub fn validate(&self) -> Result<()> {
        if self.conditioning_site >= self.n_sites {
            return Err(Error::invalid(format!(
                "conditioning site {} out of range for {} sites",
                self.conditioning_site, self.n_sites
            )));
        }
        for (j, e) in self.episodes.iter().enumerate() {
            if e.values.n_sites() != self.n_sites || e.values.n_times() != self.block_length {
                return Err(Error::DimensionMismatch(format!("episode {j} has the wrong shape")));
            }
            if e.values.get(self.conditioning_site, 0) != Some(e.conditioning_value) {
                return Err(Error::Data(format!("episode {j}: conditioning entry does not match its value")));
            }
            if !(e.conditioning_value > self.threshold) {
                return Err(Error::Data(format!(
                    "episode {j}: conditioning value {} does not exceed the threshold {}",
                    e.conditioning_value, self.threshold
                )));
            }
        }
        Ok(())
    }

    /// Writes `episode_id,site_id,time_offset,laplace_value,is_conditioning` rows; missing entries are skipped.
    pub fn write_csv<W: Write>(&self, site_ids: &[String], out: W) -> Result<()> {
        if site_ids.len() != self.n_sites {
            return Err(Error::DimensionMismatch("site id count differs from episode sites".into()));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode_id", "site_id", "time_offset", "laplace_value", "is_conditioning"])?;
        for (j, e) in self.episodes.iter().enumerate() {
            for t in 0..self.block_length {
                for (s, id) in site_ids.iter().enumerate() {
                    if let Some(x) = e.values.get(s, t) {
                        let cond = s == self.conditioning_site && t == 0;
                        w.write_record([j.to_string(), id.clone(), t.to_string(), x.to_string(), u8::from(cond).to_string()])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv). Site order follows `site_ids`.
    pub fn read_csv<R: Read>(input: R, site_ids: &[String], threshold: f64) -> Result<Self> {
        let index: BTreeMap<&str, usize> = site_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: BTreeMap<usize, Vec<(usize, usize, f64, bool)>> = BTreeMap::new();
        let mut block_length = 0;
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec?;
            let field = |i: usize, name: &str| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Parse { line, message: format!("missing {name}") })
            };
            let num = |s: &str, name: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| Error::Parse { line, message: format!("invalid {name} '{s}'") })
            };
            let j = num(field(0, "episode_id")?, "episode_id")? as usize;
            let site = *index
                .get(field(1, "site_id")?.trim())
                .ok_or_else(|| Error::Parse { line, message: "unknown site_id".into() })?;
            let t = num(field(2, "time_offset")?, "time_offset")? as usize;
            let x = num(field(3, "laplace_value")?, "laplace_value")?;
            let cond = num(field(4, "is_conditioning")?, "is_conditioning")? != 0.0;
            block_length = block_length.max(t + 1);
            rows.entry(j).or_default().push((site, t, x, cond));
        }
        let mut conditioning_site = None;
        let mut episodes = Vec::new();
        for (j, entries) in rows {
            let mut values = Field::missing(site_ids.len(), block_length);
            let mut cond_value = None;
            for (s, t, x, cond) in entries {
                if values.is_observed(s, t) {
                    return Err(Error::Data(format!("episode {j}: duplicate entry for site {s}, offset {t}")));
                }
                values.set(s, t, x);
                if cond {
                    if t != 0 || conditioning_site.is_some_and(|c| c != s) {
                        return Err(Error::Data(format!("episode {j}: inconsistent conditioning entry")));
                    }
                    conditioning_site = Some(s);
                    cond_value = Some(x);
                }
            }
            let conditioning_value =
                cond_value.ok_or_else(|| Error::Data(format!("episode {j} has no conditioning entry")))?;
            episodes.push(Episode { start: j, conditioning_value, values });
        }
        let set = EpisodeSet {
            conditioning_site: conditioning_site.ok_or_else(|| Error::Data("no episodes".into()))?,
            threshold,
            n_sites: site_ids.len(),
            block_length,
            episodes,
        };
        set.validate()?;
        Ok(set)
    }
}

/// Cuts episodes of `block_length` steps starting at each start index.
/// Windows running past the record or across a year start are dropped, as
/// are starts whose conditioning entry is missing; the dropped count is returned.
pub fn extract_episodes(
    field: &Field,
    conditioning_site: usize,
    starts: &[usize],
    cfg: &RunsConfig,
) -> Result<(EpisodeSet, usize)> {
    cfg.validate()?;
    if conditioning_site >= field.n_sites() {
        return Err(Error::invalid(format!(
            "conditioning site {conditioning_site} out of range for {} sites",
            field.n_sites()
        )));
    }
    let ell = cfg.block_length;
    let mut episodes = Vec::new();
    let mut dropped = 0;
    for &start in starts {
        let end = start + ell;
        let crosses = cfg.year_starts.iter().any(|&b| b > start && b < end);
        let cond = if start < field.n_times() { field.get(conditioning_site, start) } else { None };
        let Some(x) = cond.filter(|_| end <= field.n_times() && !crosses) else {
            dropped += 1;
            continue;
        };
        if !(x > cfg.threshold) {
            return Err(Error::Data(format!("start {start}: value {x} does not exceed the threshold")));
        }
        let mut values = Field::missing(field.n_sites(), ell);
        for s in 0..field.n_sites() {
            for t in 0..ell {
                if let Some(v) = field.get(s, start + t) {
                    values.set(s, t, v);
                }
            }
        }
        episodes.push(Episode { start, conditioning_value: x, values });
    }
    if dropped > 0 {
        log::info!("dropped {dropped} episode windows that ran past the record or across a year start");
    }
    let set = EpisodeSet {
        conditioning_site,
        threshold: cfg.threshold,
        n_sites: field.n_sites(),
        block_length: ell,
        episodes,
    };
    Ok((set, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_with(n: usize, hits: &[usize]) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for &h in hits {
            s[h] = 5.0;
        }
        s
    }

    fn cfg(r: usize, ell: usize) -> RunsConfig {
        RunsConfig { threshold: 1.0, run_length: r, block_length: ell, year_starts: vec![] }
    }

    #[test]
    fn hand_traces() {
        assert_eq!(decluster_runs(&series_with(40, &[3, 4, 20]), &cfg(12, 7)).unwrap(), vec![3, 20]);
        assert_eq!(decluster_runs(&series_with(40, &[3, 4, 10]), &cfg(12, 7)).unwrap(), vec![3]);
        assert!(decluster_runs(&vec![0.0; 40], &cfg(12, 7)).unwrap().is_empty());
    }

    #[test]
    fn exactly_r_gap_separates() {
        assert_eq!(decluster_runs(&series_with(40, &[4, 17]), &cfg(12, 7)).unwrap(), vec![4, 17]);
        assert_eq!(decluster_runs(&series_with(40, &[4, 16]), &cfg(12, 7)).unwrap(), vec![4]);
    }

    #[test]
    fn year_start_closes_cluster() {
        let mut c = cfg(12, 3);
        c.year_starts = vec![10];
        assert_eq!(decluster_runs(&series_with(30, &[8, 11]), &c).unwrap(), vec![8, 11]);
    }

    #[test]
    fn extraction_drops_crossing_windows() {
        let series = series_with(30, &[2, 15, 28]);
        let field = Field::from_rows(&[series.clone(), vec![0.5; 30]]).unwrap();
        let mut c = cfg(5, 4);
        c.year_starts = vec![17];
        let starts = decluster_runs(&series, &c).unwrap();
        let (set, dropped) = extract_episodes(&field, 0, &starts, &c).unwrap();
        assert_eq!(dropped, 2);
        assert_eq!(set.len(), 1);
        assert_eq!(set.episodes[0].start, 2);
        assert_eq!(set.episodes[0].conditioning_value, 5.0);
        set.validate().unwrap();
    }

    #[test]
    fn csv_round_trip() {
        let series = series_with(30, &[2, 15]);
        let field = Field::from_rows(&[series.clone(), (0..30).map(|t| t as f64 * 0.1).collect()]).unwrap();
        let c = cfg(5, 3);
        let (set, _) = extract_episodes(&field, 0, &decluster_runs(&series, &c).unwrap(), &c).unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        set.write_csv(&ids, &mut buf).unwrap();
        let back = EpisodeSet::read_csv(buf.as_slice(), &ids, 1.0).unwrap();
        assert_eq!(back.len(), 2);
        for (x, y) in back.episodes.iter().zip(&set.episodes) {
            assert_eq!(x.values, y.values);
        }
    }
}
