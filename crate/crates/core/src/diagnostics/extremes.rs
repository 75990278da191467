//! Region-exceedance proportions and χ_q curves, from model simulation and
//! from data.

use serde::{Deserialize, Serialize};

use crate::episodes::EpisodeSet;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::marginals::chi_q;
use crate::par::{map_indexed, Execution};
use crate::simulate::ConditionalSimulator;
use crate::stats::laplace_quantile;

const CHUNK: usize = 512;

/// A set of sites between two distances from the conditioning site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub inner: f64,
    pub outer: f64,
    pub sites: Vec<usize>,
}

/// Region 0 holds the conditioning site alone; the others are rings of
/// equal width out to the farthest site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPartition {
    pub regions: Vec<Region>,
}

impl RegionPartition {
    pub fn rings(distances: &[f64], conditioning_site: usize, rings: usize) -> Result<Self> {
        if conditioning_site >= distances.len() || rings == 0 {
            return Err(Error::invalid("need a valid conditioning site and at least one ring"));
        }
        let max = distances.iter().cloned().fold(0.0, f64::max);
        if !(max > 0.0) {
            return Err(Error::Degenerate("all sites coincide with the conditioning site".into()));
        }
        let width = max / rings as f64;
        let mut regions = vec![Region { inner: 0.0, outer: 0.0, sites: vec![conditioning_site] }];
        regions.extend((0..rings).map(|k| Region { inner: k as f64 * width, outer: (k + 1) as f64 * width, sites: vec![] }));
        for (i, &d) in distances.iter().enumerate() {
            if i == conditioning_site {
                continue;
            }
            let k = ((d / width).ceil() as usize).clamp(1, rings);
            regions[k].sites.push(i);
        }
        if let Some(k) = regions.iter().position(|r| r.sites.is_empty()) {
            return Err(Error::Data(format!("region {k} contains no sites; use fewer rings")));
        }
        Ok(Self { regions })
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    fn region_mean(&self, values: &[f64], n_sites: usize, time: usize) -> Vec<f64> {
        self.regions
            .iter()
            .map(|r| r.sites.iter().map(|&i| values[time * n_sites + i]).sum::<f64>() / r.sites.len() as f64)
            .collect()
    }
}

/// Share of simulated episodes, conditioned on exceeding the Laplace
/// `q`-quantile at the conditioning site, in which each `(t, i)` entry
/// also exceeds it.
pub fn exceedance_fractions(sim: &ConditionalSimulator, q: f64, n_sim: usize, seed: u64, exec: Execution) -> Result<Vec<f64>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("q = {q} must lie in (0, 1)")));
    }
    if n_sim == 0 {
        return Err(Error::SampleTooSmall { found: 0, required: 1 });
    }
    let u = laplace_quantile(q);
    let len = sim.n_sites() * sim.block_length();
    let chunks = n_sim.div_ceil(CHUNK);
    let counts = map_indexed(chunks, exec, |c| {
        let mut count = vec![0u32; len];
        for j in c * CHUNK..((c + 1) * CHUNK).min(n_sim) {
            let (_, values) = sim.simulate_episode(j as u64, u, seed);
            for (n, v) in count.iter_mut().zip(values) {
                *n += (v > u) as u32;
            }
        }
        count
    });
    let mut total = vec![0.0; len];
    for c in counts {
        for (t, n) in total.iter_mut().zip(c) {
            *t += n as f64;
        }
    }
    Ok(total.into_iter().map(|t| t / n_sim as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub region: usize,
    pub inner: f64,
    pub outer: f64,
    pub sites: usize,
    pub time: usize,
    pub q: f64,
    /// Mean share of the region's sites above the quantile in simulated episodes.
    pub model: f64,
    /// The same share in observed episodes whose conditioning value exceeds the quantile.
    pub empirical: Option<f64>,
}

/// Empirical region shares at one time step, averaged over episodes whose
/// conditioning value exceeds `u`.
fn empirical_region_shares(episodes: &EpisodeSet, partition: &RegionPartition, u: f64, time: usize) -> Vec<Option<f64>> {
    partition
        .regions
        .iter()
        .map(|r| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for e in episodes.episodes.iter().filter(|e| e.conditioning_value > u) {
                let obs: Vec<f64> = r.sites.iter().filter_map(|&i| e.values.get(i, time)).collect();
                if obs.is_empty() {
                    continue;
                }
                sum += obs.iter().filter(|&&v| v > u).count() as f64 / obs.len() as f64;
                n += 1;
            }
            (n > 0).then(|| sum / n as f64)
        })
        .collect()
}

/// Model and empirical shares of exceeding sites per region and time step.
pub fn region_exceedance(
    sim: &ConditionalSimulator,
    episodes: Option<&EpisodeSet>,
    partition: &RegionPartition,
    q: f64,
    n_sim: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<RegionRow>> {
    let d = sim.n_sites();
    if partition.regions.iter().flat_map(|r| &r.sites).any(|&i| i >= d) {
        return Err(Error::DimensionMismatch("region refers to a site the simulator does not have".into()));
    }
    if let Some(e) = episodes {
        if e.n_sites != d || e.block_length != sim.block_length() {
            return Err(Error::DimensionMismatch("episodes and simulator disagree in shape".into()));
        }
    }
    let fractions = exceedance_fractions(sim, q, n_sim, seed, exec)?;
    let u = laplace_quantile(q);
    let mut rows = Vec::new();
    for t in 0..sim.block_length() {
        let model = partition.region_mean(&fractions, d, t);
        let empirical = episodes.map(|e| empirical_region_shares(e, partition, u, t));
        for (k, r) in partition.regions.iter().enumerate() {
            rows.push(RegionRow {
                region: k,
                inner: r.inner,
                outer: r.outer,
                sites: r.sites.len(),
                time: t,
                q,
                model: model[k],
                empirical: empirical.as_ref().and_then(|e| e[k]),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiRow {
    pub region: usize,
    pub inner: f64,
    pub outer: f64,
    pub time: usize,
    pub q: f64,
    pub model: Option<f64>,
    pub empirical: Option<f64>,
}

/// Model χ_q between the conditioning site and each distance band, for
/// every requested `q`; bands follow `partition`.
pub fn model_chi_curves(
    sim: &ConditionalSimulator,
    partition: &RegionPartition,
    qs: &[f64],
    n_sim: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ChiRow>> {
    let mut rows = Vec::new();
    for &q in qs {
        let fractions = exceedance_fractions(sim, q, n_sim, seed, exec)?;
        for t in 0..sim.block_length() {
            let means = partition.region_mean(&fractions, sim.n_sites(), t);
            for (k, r) in partition.regions.iter().enumerate() {
                rows.push(ChiRow { region: k, inner: r.inner, outer: r.outer, time: t, q, model: Some(means[k]), empirical: None });
            }
        }
    }
    Ok(rows)
}

/// Rank-based χ_q between the conditioning site's series and each site's
/// series `lag` steps later, averaged within distance bands. Bands where no
/// site has enough complete pairs are `None`.
pub fn empirical_chi_curves(
    field: &Field,
    conditioning_site: usize,
    partition: &RegionPartition,
    qs: &[f64],
    lag: usize,
) -> Result<Vec<ChiRow>> {
    if conditioning_site >= field.n_sites() {
        return Err(Error::invalid("conditioning site out of range"));
    }
    let base = field.site_series(conditioning_site);
    let mut rows = Vec::new();
    for &q in qs {
        for (k, r) in partition.regions.iter().enumerate() {
            let mut sum = 0.0;
            let mut n = 0usize;
            for &i in &r.sites {
                let other = field.site_series(i);
                let (a, b): (Vec<f64>, Vec<f64>) = base
                    .iter()
                    .zip(other.iter().skip(lag))
                    .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
                    .unzip();
                match chi_q(&a, &b, q) {
                    Ok(c) => {
                        sum += c;
                        n += 1;
                    }
                    Err(Error::SampleTooSmall { .. } | Error::TooFewExceedances { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            rows.push(ChiRow {
                region: k,
                inner: r.inner,
                outer: r.outer,
                time: lag,
                q,
                model: None,
                empirical: (n > 0).then(|| sum / n as f64),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episodes::Episode;

    fn line_distances(d: usize) -> Vec<f64> {
        (0..d).map(|i| i as f64).collect()
    }

    #[test]
    fn rings_partition_every_site_once() {
        let p = RegionPartition::rings(&line_distances(10), 0, 3).unwrap();
        assert_eq!(p.regions[0].sites, vec![0]);
        let mut all: Vec<usize> = p.regions.iter().flat_map(|r| r.sites.clone()).collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(p.regions[1].sites, vec![1, 2, 3]);
        assert!(RegionPartition::rings(&line_distances(3), 0, 5).is_err());
    }

    #[test]
    fn perfect_dependence_gives_full_exceedance() {
        let sim = ConditionalSimulator::new(6, 1, 0, vec![1.0; 6], vec![0.0; 6], 0.0, 0.0, None).unwrap();
        let p = RegionPartition::rings(&line_distances(6), 0, 2).unwrap();
        let rows = region_exceedance(&sim, None, &p, 0.9, 200, 1, Execution::Sequential).unwrap();
        assert!(rows.iter().all(|r| r.model == 1.0));
    }

    #[test]
    fn independence_gives_one_minus_q() {
        // pure Gaussian noise: the share is a Gaussian tail probability
        let sd = 2f64.sqrt();
        let sim = ConditionalSimulator::new(4, 1, 0, vec![0.0; 4], vec![0.0; 4], 0.0, sd, None).unwrap();
        let q = 0.9;
        let f = exceedance_fractions(&sim, q, 40_000, 5, Execution::Parallel).unwrap();
        let expected = 1.0 - crate::stats::std_normal_cdf(laplace_quantile(q) / sd);
        assert_eq!(f[0], 1.0);
        for v in &f[1..] {
            assert!((v - expected).abs() < 0.01, "{v} vs {expected}");
        }
    }

    #[test]
    fn empirical_conditioning_region_is_one() {
        let mut episodes = Vec::new();
        for j in 0..5 {
            let mut f = Field::missing(4, 1);
            let x = 3.0 + j as f64;
            f.set(0, 0, x);
            for i in 1..4 {
                f.set(i, 0, if (i + j) % 2 == 0 { 5.0 } else { -1.0 });
            }
            episodes.push(Episode { start: j * 10, conditioning_value: x, values: f });
        }
        let set = EpisodeSet { conditioning_site: 0, threshold: 2.0, n_sites: 4, block_length: 1, episodes };
        let p = RegionPartition::rings(&line_distances(4), 0, 1).unwrap();
        let shares = empirical_region_shares(&set, &p, laplace_quantile(0.9), 0);
        assert_eq!(shares[0], Some(1.0));
        let s = shares[1].unwrap();
        assert!((0.0..=1.0).contains(&s));
    }

    #[test]
    fn chi_decreases_for_decaying_alpha() {
        let d = 5;
        let alpha: Vec<f64> = (0..d).map(|i| (-(i as f64) / 2.0).exp()).collect();
        let sim = ConditionalSimulator::new(d, 1, 0, alpha, vec![0.0; d], 0.0, 0.5, None).unwrap();
        let p = RegionPartition::rings(&line_distances(d), 0, 4).unwrap();
        let rows = model_chi_curves(&sim, &p, &[0.9, 0.99], 5000, 3, Execution::Parallel).unwrap();
        let at = |q: f64, k: usize| rows.iter().find(|r| r.q == q && r.region == k).unwrap().model.unwrap();
        assert_eq!(at(0.9, 0), 1.0);
        assert!(at(0.99, 2) < at(0.9, 2));
    }
}
