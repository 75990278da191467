//! The subcommands. Each one reads and checks all of its inputs before it
//! writes anything, so a failure leaves the output directory untouched.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use condex::diagnostics::{
    diagnose as run_diagnostics, empirical_chi_curves, episode_fold_rows, quadrant_rows, rmse_cv, RegionPartition,
};
use condex::episodes::{cluster_counts, decluster_runs, extract_episodes, EpisodeSet, RunsConfig};
use condex::inference::{fit, FitSummary, PosteriorFit};
use condex::marginals::{transform_field, MarginalModel};
use condex::mesh::{distances, scale_coordinates, Mesh2D, Point};
use condex::model::{AssembledModel, Residual};
use condex::par::Execution;
use condex::simulate::ConditionalSimulator;
use condex::stats::laplace_quantile;
use condex::synthetic::{generate, SyntheticConfig};
use condex::Error;

use crate::config::RunConfig;
use crate::error::{file_error, CliError, CliResult};
use crate::ingest::{load_dataset, write_long, Dataset};

const EXEC: Execution = Execution::Parallel;

pub const LAPLACE_FILE: &str = "laplace.csv";
pub const MARGINALS_FILE: &str = "marginals.json";
pub const EPISODES_FILE: &str = "episodes.csv";
pub const CLUSTER_COUNTS_FILE: &str = "cluster_counts.csv";
pub const FIT_FILE: &str = "fit.json";
pub const REPORT_FILE: &str = "diagnostics.json";

/// Files produced by one subcommand, written together at the end.
#[derive(Default)]
struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, dir: &Path, name: &str, bytes: Vec<u8>) {
        self.files.push((dir.join(name), bytes));
    }

    fn add_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(dir, name, bytes);
        Ok(())
    }

    fn write(self) -> CliResult<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (path, bytes) in self.files {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(file_error(dir))?;
            }
            fs::write(&path, bytes).map_err(file_error(&path))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Core(Error::Io(e.into_error())))
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn require(path: &Path, producer: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Data(format!("{} not found; run `condex {producer}` first", path.display())).into())
    }
}

/// Sites, scaled coordinates and the conditioning site of a dataset.
struct Geometry {
    coords: Vec<Point>,
    conditioning_site: usize,
}

fn geometry(cfg: &RunConfig, data: &Dataset) -> CliResult<Geometry> {
    let coords = scale_coordinates(&data.coords, cfg.data.coordinate_multipliers, cfg.data.coordinate_scale);
    let conditioning_site = match &cfg.data.conditioning_site {
        Some(id) => data
            .site_ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| CliError::Config(format!("conditioning site '{id}' is not in the data")))?,
        None => {
            let n = coords.len() as f64;
            let c = [coords.iter().map(|p| p[0]).sum::<f64>() / n, coords.iter().map(|p| p[1]).sum::<f64>() / n];
            let d = distances(&coords, c);
            (0..d.len()).min_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0)
        }
    };
    Ok(Geometry { coords, conditioning_site })
}

fn median_nearest_distance(coords: &[Point]) -> f64 {
    let mut nearest: Vec<f64> = coords
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            distances(coords, p).into_iter().enumerate().filter(|&(j, d)| j != i && d > 0.0).map(|(_, d)| d).fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if nearest.is_empty() {
        return 1.0;
    }
    nearest.sort_by(f64::total_cmp);
    nearest[nearest.len() / 2]
}

fn build_mesh(cfg: &RunConfig, coords: &[Point]) -> CliResult<Mesh2D> {
    let inner = cfg.mesh.inner_edge.unwrap_or_else(|| median_nearest_distance(coords));
    let outer = cfg.mesh.outer_edge.unwrap_or(2.0 * inner);
    let extension = cfg.mesh.extension.unwrap_or_else(|| {
        let span = |k: usize| {
            let (lo, hi) = coords.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
            hi - lo
        };
        (0.2 * span(0).max(span(1))).max(outer)
    });
    if outer < inner {
        return Err(CliError::Config(format!("mesh outer edge {outer} is below the inner edge {inner}")));
    }
    Ok(Mesh2D::build(coords, inner, outer, extension)?)
}

fn load_laplace(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = cfg.data.output_dir.join(LAPLACE_FILE);
    require(&path, "transform")?;
    load_dataset(&path)
}

fn load_episodes(cfg: &RunConfig, data: &Dataset) -> CliResult<EpisodeSet> {
    let path = cfg.data.output_dir.join(EPISODES_FILE);
    require(&path, "decluster")?;
    let file = fs::File::open(&path).map_err(file_error(&path))?;
    let threshold = laplace_quantile(cfg.episodes.threshold_quantile);
    Ok(EpisodeSet::read_csv(std::io::BufReader::new(file), &data.site_ids, threshold)?)
}

/// Everything needed to assemble the model from pipeline artifacts.
struct Prepared {
    data: Dataset,
    geometry: Geometry,
    episodes: EpisodeSet,
    model: AssembledModel,
}

fn prepare(cfg: &RunConfig) -> CliResult<Prepared> {
    let spec = cfg.model.spec()?;
    let data = load_laplace(cfg)?;
    let geometry = geometry(cfg, &data)?;
    let episodes = load_episodes(cfg, &data)?;
    if episodes.conditioning_site != geometry.conditioning_site {
        return Err(Error::Data("episodes were cut at a different conditioning site than configured".into()).into());
    }
    let mesh = if spec.residual == Residual::None { None } else { Some(build_mesh(cfg, &geometry.coords)?) };
    let dist = distances(&geometry.coords, geometry.coords[geometry.conditioning_site]);
    let spline = spec.spline_mesh(dist.iter().cloned().fold(0.0, f64::max))?;
    let model = AssembledModel::assemble(&spec, &episodes, &geometry.coords, mesh.as_ref(), &spline)?;
    Ok(Prepared { data, geometry, episodes, model })
}

fn load_fit(cfg: &RunConfig, model: AssembledModel) -> CliResult<(PosteriorFit, String)> {
    let path = cfg.data.output_dir.join(FIT_FILE);
    require(&path, "fit")?;
    let bytes = fs::read(&path).map_err(file_error(&path))?;
    let summary: FitSummary = serde_json::from_slice(&bytes)?;
    if summary.model != *model.spec() {
        return Err(CliError::Config(format!("{} was fitted with a different model than configured", path.display())));
    }
    let fit = PosteriorFit::from_summary(Arc::new(model), &summary, EXEC)?;
    Ok((fit, content_hash(&bytes)))
}

pub fn transform(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = load_dataset(&cfg.data.input)?;
    geometry(cfg, &data)?;
    let (mut marginals, laplace) = transform_field(&data.values, cfg.marginal.quantile, EXEC)?;
    for (m, id) in marginals.iter_mut().zip(&data.site_ids) {
        m.site_id = id.clone();
    }
    let mut out = Outputs::default();
    let mut bytes = Vec::new();
    write_long(&data, &laplace, "value", &mut bytes)?;
    out.add(&cfg.data.output_dir, LAPLACE_FILE, bytes);
    out.add_json::<Vec<MarginalModel>>(&cfg.data.output_dir, MARGINALS_FILE, &marginals)?;
    out.write()
}

#[derive(Serialize)]
struct ClusterCountRow {
    run_length: usize,
    clusters: usize,
}

pub fn decluster(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = load_laplace(cfg)?;
    let geo = geometry(cfg, &data)?;
    let series: Vec<f64> =
        data.values.site_series(geo.conditioning_site).into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    let runs = RunsConfig {
        threshold: laplace_quantile(cfg.episodes.threshold_quantile),
        run_length: cfg.episodes.run_length,
        block_length: cfg.episodes.block_length,
        year_starts: data.year_starts.clone(),
    };
    let starts = decluster_runs(&series, &runs)?;
    let (episodes, dropped) = extract_episodes(&data.values, geo.conditioning_site, &starts, &runs)?;
    if episodes.is_empty() {
        return Err(Error::Data("no complete episodes above the threshold".into()).into());
    }
    log::info!("{} episodes ({dropped} windows dropped)", episodes.len());
    let counts: Vec<ClusterCountRow> =
        cluster_counts(&series, runs.threshold, &cfg.episodes.candidate_run_lengths, &data.year_starts)
            .into_iter()
            .map(|(run_length, clusters)| ClusterCountRow { run_length, clusters })
            .collect();
    let mut out = Outputs::default();
    let mut bytes = Vec::new();
    episodes.write_csv(&data.site_ids, &mut bytes)?;
    out.add(&cfg.data.output_dir, EPISODES_FILE, bytes);
    out.add(&cfg.data.output_dir, CLUSTER_COUNTS_FILE, csv_bytes(&counts)?);
    out.write()
}

pub fn fit_model(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let p = prepare(cfg)?;
    let fitted = fit(Arc::new(p.model), &cfg.fit_config())?;
    let mut out = Outputs::default();
    out.add_json(&cfg.data.output_dir, FIT_FILE, &fitted.summary())?;
    out.write()
}

pub fn diagnose(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let p = prepare(cfg)?;
    let (fitted, hash) = load_fit(cfg, p.model)?;
    let mut report = run_diagnostics(&fitted, Some(&p.episodes), Some(&p.data.values), &cfg.diagnostics, EXEC)?;
    report.fit_hash = Some(hash);
    let dir = &cfg.data.output_dir;
    let mut out = Outputs::default();
    out.add_json(dir, REPORT_FILE, &report)?;
    let mut obs = Vec::new();
    report.write_observations_csv(&fitted, &mut obs)?;
    out.add(dir, "observations.csv", obs);
    let mut regions = Vec::new();
    report.write_regions_csv(&mut regions)?;
    out.add(dir, "regions.csv", regions);
    let mut chi = Vec::new();
    report.write_chi_csv(&mut chi)?;
    out.add(dir, "chi.csv", chi);
    out.write()
}

#[derive(Serialize)]
struct CvRow {
    holdout: &'static str,
    fold: usize,
    entries: usize,
    rmse: f64,
}

pub fn cross_validate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let p = prepare(cfg)?;
    let origin = cfg.cv.quadrant_origin.unwrap_or(p.geometry.coords[p.geometry.conditioning_site]);
    let fit_cfg = cfg.fit_config();
    let mut rows = Vec::new();
    let quadrant = quadrant_rows(&p.model, &p.geometry.coords, origin)?;
    if quadrant.is_empty() {
        log::warn!("no observed entries in the held-out quadrant; skipping it");
    } else {
        let r = rmse_cv(&p.model, &fit_cfg, &quadrant)?;
        rows.push(CvRow { holdout: "quadrant", fold: 0, entries: quadrant.len(), rmse: r.rmse });
    }
    let folds = cfg.cv.folds.min(p.model.n_episodes());
    if folds >= 2 {
        for fold in 0..folds {
            let held = episode_fold_rows(&p.model, folds, fold, cfg.cv.seed)?;
            let r = rmse_cv(&p.model, &fit_cfg, &held)?;
            rows.push(CvRow { holdout: "episode_fold", fold, entries: held.len(), rmse: r.rmse });
        }
    }
    let mut out = Outputs::default();
    out.add(&cfg.data.output_dir, "cv.csv", csv_bytes(&rows)?);
    out.write()
}

pub fn simulate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let p = prepare(cfg)?;
    let (fitted, _) = load_fit(cfg, p.model)?;
    let sim = ConditionalSimulator::from_fit(&fitted)?;
    let u = laplace_quantile(cfg.simulate.threshold_quantile);
    let set = sim.simulate_episodes(cfg.simulate.episodes, u, cfg.simulate.seed, EXEC);
    let mut bytes = Vec::new();
    set.write_csv(&p.data.site_ids, &mut bytes)?;
    let mut out = Outputs::default();
    out.add(&cfg.data.output_dir, "simulations.csv", bytes);
    out.write()
}

#[derive(Serialize)]
struct EmpiricalChiRow {
    region: usize,
    inner: f64,
    outer: f64,
    lag: usize,
    q: f64,
    chi: Option<f64>,
}

pub fn chi(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let data = load_laplace(cfg)?;
    let geo = geometry(cfg, &data)?;
    let dist = distances(&geo.coords, geo.coords[geo.conditioning_site]);
    let partition = RegionPartition::rings(&dist, geo.conditioning_site, cfg.chi.rings)?;
    let mut rows = Vec::new();
    for lag in 0..=cfg.chi.max_lag {
        for r in empirical_chi_curves(&data.values, geo.conditioning_site, &partition, &cfg.chi.q, lag)? {
            rows.push(EmpiricalChiRow { region: r.region, inner: r.inner, outer: r.outer, lag, q: r.q, chi: r.empirical });
        }
    }
    let mut out = Outputs::default();
    out.add(&cfg.data.output_dir, "chi_empirical.csv", csv_bytes(&rows)?);
    out.write()
}

// June to December, so that a season of up to 214 days maps to calendar dates
const MONTH_DAYS: [(u32, u32); 7] = [(6, 30), (7, 31), (8, 31), (9, 30), (10, 31), (11, 30), (12, 31)];

fn season_date(year: usize, day: usize) -> Option<String> {
    let mut d = day as u32;
    for (month, len) in MONTH_DAYS {
        if d < len {
            return Some(format!("{year}-{month:02}-{:02}", d + 1));
        }
        d -= len;
    }
    None
}

/// Writes the synthetic dataset as long-format CSV with one season per year.
pub fn synth(cfg: &SyntheticConfig, path: &Path) -> CliResult<Vec<PathBuf>> {
    let generated = generate(cfg)?;
    let times: Vec<String> = (0..cfg.years)
        .flat_map(|y| (0..cfg.days_per_year).map(move |d| (y, d)))
        .map(|(y, d)| season_date(2001 + y, d).ok_or_else(|| CliError::Config("synth.days_per_year exceeds 214".into())))
        .collect::<CliResult<_>>()?;
    let width = (generated.sites.len() - 1).to_string().len();
    let data = Dataset {
        site_ids: (0..generated.sites.len()).map(|i| format!("s{i:0width$}")).collect(),
        coords: generated.sites,
        times,
        year_starts: generated.year_starts,
        values: generated.values,
    };
    let mut bytes = Vec::new();
    write_long(&data, &data.values, "value", &mut bytes)?;
    let mut out = Outputs::default();
    out.files.push((path.to_path_buf(), bytes));
    out.write()
}
