//! Monte Carlo campaigns: UE sampling, per-UE pipeline runs, summaries and
//! the interaction-count density.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{estimate_position, SolverConfig};
use crate::geom::{ApId, Point3, Scene, Vec2};
use crate::measure::{measure_all, MeasureConfig, MeasurementSet};
use crate::neighborhood::NeighborhoodTable;
use crate::raytrace::RayConfig;
use crate::select::{pick_references, select, Strategy};

/// UEs closer than this to a wall or AP (plan view) are resampled.
pub const REJECTION_MARGIN_M: f64 = 1e-2;
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 100_000;
pub const DEFAULT_UE_COUNT: usize = 100;
pub const DEFAULT_DISK_RADIUS_M: f64 = 0.5;
pub const DENSITY_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Sampling {
    /// Uniform over the scene bounds.
    #[default]
    UniformRegion,
    /// Uniform over a disk at the scene's UE height.
    Disk {
        center: Point3,
        #[serde(default = "default_radius")]
        radius: f64,
    },
}

fn default_radius() -> f64 {
    DEFAULT_DISK_RADIUS_M
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scene: PathBuf,
    pub table: Option<PathBuf>,
    pub sampling: Sampling,
    pub ue_count: usize,
    pub strategies: Vec<Strategy>,
    pub measure: MeasureConfig,
    pub solver: SolverConfig,
    pub rng_seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureSection {
    #[serde(default = "default_max_order")]
    max_order: usize,
    #[serde(default)]
    noise_sigma_s: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self {
            max_order: default_max_order(),
            noise_sigma_s: 0.0,
        }
    }
}

fn default_max_order() -> usize {
    RayConfig::default().max_order
}

fn default_ue_count() -> usize {
    DEFAULT_UE_COUNT
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDocument {
    scene: PathBuf,
    #[serde(default)]
    table: Option<PathBuf>,
    #[serde(default)]
    sampling: Sampling,
    #[serde(default = "default_ue_count")]
    ue_count: usize,
    strategies: Vec<Strategy>,
    #[serde(default)]
    measure: MeasureSection,
    #[serde(default)]
    solver: SolverConfig,
    #[serde(default)]
    rng_seed: u64,
}

impl ScenarioConfig {
    /// A uniform-region scenario with default settings.
    pub fn new(scene: impl Into<PathBuf>, strategies: Vec<Strategy>) -> Self {
        Self {
            scene: scene.into(),
            table: None,
            sampling: Sampling::UniformRegion,
            ue_count: DEFAULT_UE_COUNT,
            strategies,
            measure: MeasureConfig::default(),
            solver: SolverConfig::default(),
            rng_seed: 0,
        }
    }

    /// Parses a scenario document; relative paths resolve against
    /// `base_dir`. The measurement seed follows `rng_seed`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ScenarioDocument =
            serde_path_to_error::deserialize(de).map_err(|e| Error::from_json("scenario", e))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        Ok(Self {
            scene: resolve(doc.scene),
            table: doc.table.map(resolve),
            sampling: doc.sampling,
            ue_count: doc.ue_count,
            strategies: doc.strategies,
            measure: MeasureConfig {
                ray: RayConfig {
                    max_order: doc.measure.max_order,
                },
                noise_sigma_s: doc.measure.noise_sigma_s,
                rng_seed: doc.rng_seed,
            },
            solver: doc.solver,
            rng_seed: doc.rng_seed,
        })
    }

    pub fn load_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.rng_seed = seed;
        self.measure.rng_seed = seed;
    }

    pub fn validate(&self, scene: &Scene) -> Result<()> {
        if self.ue_count < 1 {
            return Err(Error::InvalidConfig("ue_count must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one strategy is required".into(),
            ));
        }
        for s in &self.strategies {
            s.validate_for(scene.ap_count())?;
        }
        self.measure.validate()?;
        self.solver.validate()?;
        if let Sampling::Disk { center, radius } = self.sampling {
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "disk radius must be > 0, got {radius}"
                )));
            }
            let b = scene.bounds();
            let inside = center.is_finite()
                && center.x - radius >= b.min.x
                && center.x + radius <= b.max.x
                && center.y - radius >= b.min.y
                && center.y + radius <= b.max.y;
            if !inside {
                return Err(Error::InvalidConfig(format!(
                    "disk at {center} with radius {radius} is not inside the scene bounds"
                )));
            }
        }
        Ok(())
    }
}

fn too_close(p: Vec2, scene: &Scene) -> bool {
    scene
        .walls()
        .iter()
        .any(|w| w.segment().distance_to_point(p) < REJECTION_MARGIN_M)
        || scene
            .aps()
            .iter()
            .any(|ap| ap.pos.xy().distance(p) < REJECTION_MARGIN_M)
}

/// Draws `ue_count` UE positions at the scene's UE height.
pub fn sample_ues(cfg: &ScenarioConfig, scene: &Scene) -> Result<Vec<Point3>> {
    cfg.validate(scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let z = scene.default_ue_height();
    let b = *scene.bounds();
    let mut out = Vec::with_capacity(cfg.ue_count);
    let mut rejections = 0;
    while out.len() < cfg.ue_count {
        let p = match cfg.sampling {
            Sampling::UniformRegion => Vec2::new(
                b.min.x + rng.random::<f64>() * b.width(),
                b.min.y + rng.random::<f64>() * b.height(),
            ),
            Sampling::Disk { center, radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                Vec2::new(center.x + r * theta.cos(), center.y + r * theta.sin())
            }
        };
        if too_close(p, scene) || !b.contains(p) {
            rejections += 1;
            if rejections >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::SamplingStarved(rejections));
            }
            continue;
        }
        rejections = 0;
        out.push(Point3::new(p.x, p.y, z));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub ue_idx: usize,
    pub ue: Point3,
    pub strategy: Strategy,
    pub selected: Vec<ApId>,
    pub position_error: Option<f64>,
    pub converged: bool,
    /// Reflection count on the reference AP's path.
    pub min_interactions: Option<usize>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_success(&self) -> bool {
        self.position_error.is_some()
    }
}

fn run_one(
    ue_idx: usize,
    ue: Point3,
    cfg: &ScenarioConfig,
    scene: &Scene,
    table: &NeighborhoodTable,
) -> Vec<RunRecord> {
    let failed = |strategy: Strategy, min_interactions: Option<usize>, e: &Error| RunRecord {
        ue_idx,
        ue,
        strategy,
        selected: Vec::new(),
        position_error: None,
        converged: false,
        min_interactions,
        error: Some(e.to_string()),
    };
    let ms: MeasurementSet = match measure_all(ue, scene, &cfg.measure.for_stream(ue_idx as u64)) {
        Ok(ms) => ms,
        Err(e) => {
            return cfg
                .strategies
                .iter()
                .map(|&s| failed(s, None, &e))
                .collect()
        }
    };
    let min_interactions = pick_references(&ms)
        .ok()
        .and_then(|(r, _)| ms.get(r))
        .map(|e| e.interactions);

    cfg.strategies
        .iter()
        .map(|&strategy| {
            let outcome = select(strategy, &ms, table).and_then(|sel| {
                let est = estimate_position(&sel, scene, &cfg.solver)?.with_truth(ue);
                Ok((sel, est))
            });
            match outcome {
                Ok((sel, est)) => RunRecord {
                    ue_idx,
                    ue,
                    strategy,
                    selected: sel.ap_ids(),
                    position_error: est.position_error,
                    converged: est.converged,
                    min_interactions,
                    error: None,
                },
                Err(e) => failed(strategy, min_interactions, &e),
            }
        })
        .collect()
}

/// Runs every strategy on every sampled UE. Per-run failures are recorded,
/// not raised. Records come back ordered by UE index, then by the order of
/// `cfg.strategies`, regardless of thread count.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    scene: &Scene,
    table: &NeighborhoodTable,
) -> Result<Vec<RunRecord>> {
    cfg.validate(scene)?;
    if cfg.strategies.iter().any(Strategy::uses_table) && table.ap_count() != scene.ap_count() {
        return Err(Error::InvalidConfig(format!(
            "table covers {} APs but the scene has {}",
            table.ap_count(),
            scene.ap_count()
        )));
    }
    let ues = sample_ues(cfg, scene)?;
    let per_ue: Vec<Vec<RunRecord>> = ues
        .par_iter()
        .enumerate()
        .map(|(i, &ue)| run_one(i, ue, cfg, scene, table))
        .collect();
    Ok(per_ue.into_iter().flatten().collect())
}

/// Silverman rule-of-thumb bandwidth; zero-spread data gets 0.1.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = interpolated_quantile(&sorted, 0.75) - interpolated_quantile(&sorted, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => return 0.1,
    };
    0.9 * spread * n.powf(-0.2)
}

fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian KDE over the per-UE `min_interactions`, on a 200-point grid
/// spanning five bandwidths past the data. Returns `(x, density)` pairs.
pub fn interaction_density(records: &[RunRecord]) -> Result<Vec<(f64, f64)>> {
    let mut seen = HashSet::new();
    let samples: Vec<f64> = records
        .iter()
        .filter_map(|r| r.min_interactions.map(|m| (r.ue_idx, m)))
        .filter(|(ue, _)| seen.insert(*ue))
        .map(|(_, m)| m as f64)
        .collect();
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "density needs at least 2 UEs with interaction counts, got {}",
            samples.len()
        )));
    }
    Ok(gaussian_kde(&samples, DENSITY_GRID_POINTS))
}

pub fn gaussian_kde(samples: &[f64], grid_points: usize) -> Vec<(f64, f64)> {
    let h = silverman_bandwidth(samples);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 5.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 5.0 * h;
    let step = (hi - lo) / (grid_points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..grid_points)
        .map(|i| {
            let x = lo + i as f64 * step;
            let d: f64 = samples
                .iter()
                .map(|s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum();
            (x, d * norm)
        })
        .collect()
}

/// Trapezoid-rule integral of a sampled curve.
pub fn trapezoid(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeStats {
    pub median: f64,
    pub mean: f64,
    pub p90: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    pub strategy: Strategy,
    /// Successful runs.
    pub count: usize,
    pub failed: usize,
    /// `None` when every run failed.
    pub stats: Option<PeStats>,
}

/// Nearest-rank quantile of ascending data.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Median with the midpoint rule for even counts.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub fn pe_stats(values: &[f64]) -> Option<PeStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(PeStats {
        median: median(&v),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        p90: nearest_rank(&v, 0.9),
        iqr: nearest_rank(&v, 0.75) - nearest_rank(&v, 0.25),
    })
}

/// Per-strategy PE statistics, in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryStats> {
    let mut order: Vec<Strategy> = Vec::new();
    for r in records {
        if !order.contains(&r.strategy) {
            order.push(r.strategy);
        }
    }
    order
        .into_iter()
        .map(|strategy| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.strategy == strategy).collect();
            let pes: Vec<f64> = runs.iter().filter_map(|r| r.position_error).collect();
            SummaryStats {
                strategy,
                count: pes.len(),
                failed: runs.len() - pes.len(),
                stats: pe_stats(&pes),
            }
        })
        .collect()
}

/// PEs for one strategy keyed by UE index; failed runs are `None`.
pub fn errors_by_ue(records: &[RunRecord], strategy: Strategy) -> Vec<(usize, Option<f64>)> {
    records
        .iter()
        .filter(|r| r.strategy == strategy)
        .map(|r| (r.ue_idx, r.position_error))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    /// Pairs where the first sample is strictly smaller.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
    pub p_value: f64,
}

/// Paired sign test of `a < b`.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Less) => wins += 1,
            Some(std::cmp::Ordering::Greater) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = wins + losses;
    // log-space binomial tail
    let ln_choose =
        |n: usize, k: usize| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    let p_value = if n == 0 {
        1.0
    } else {
        (wins..=n)
            .map(|k| (ln_choose(n, k) - n as f64 * std::f64::consts::LN_2).exp())
            .sum::<f64>()
            .min(1.0)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    ue_idx: usize,
    ue_x: f64,
    ue_y: f64,
    ue_z: f64,
    strategy: Strategy,
    n_selected: usize,
    selected_ids: String,
    pe_m: Option<f64>,
    converged: bool,
    min_interactions: Option<usize>,
    error: Option<String>,
}

/// Records CSV: `ue_idx,ue_x,ue_y,ue_z,strategy,n_selected,selected_ids,
/// pe_m,converged,min_interactions,error`.
pub fn write_records_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RecordRow {
            ue_idx: r.ue_idx,
            ue_x: r.ue.x,
            ue_y: r.ue.y,
            ue_z: r.ue.z,
            strategy: r.strategy,
            n_selected: r.selected.len(),
            selected_ids: r
                .selected
                .iter()
                .map(ApId::to_string)
                .collect::<Vec<_>>()
                .join(";"),
            pe_m: r.position_error,
            converged: r.converged,
            min_interactions: r.min_interactions,
            error: r.error.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io("<records csv>", e))?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize::<RecordRow>()
        .map(|row| {
            let row = row?;
            let selected = row
                .selected_ids
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<u32>()
                        .map(ApId)
                        .map_err(|_| Error::InvalidInput(format!("bad selected id `{s}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if selected.len() != row.n_selected {
                return Err(Error::InvalidInput(format!(
                    "row for UE {}: n_selected {} but {} ids",
                    row.ue_idx,
                    row.n_selected,
                    selected.len()
                )));
            }
            Ok(RunRecord {
                ue_idx: row.ue_idx,
                ue: Point3::new(row.ue_x, row.ue_y, row.ue_z),
                strategy: row.strategy,
                selected,
                position_error: row.pe_m,
                converged: row.converged,
                min_interactions: row.min_interactions,
                error: row.error,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    strategy: Strategy,
    count: usize,
    median_m: Option<f64>,
    mean_m: Option<f64>,
    p90_m: Option<f64>,
    iqr_m: Option<f64>,
}

/// Summary CSV: `strategy,count,median_m,mean_m,p90_m,iqr_m`.
pub fn write_summary_csv<W: Write>(out: W, summary: &[SummaryStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in summary {
        w.serialize(SummaryRow {
            strategy: s.strategy,
            count: s.count,
            median_m: s.stats.map(|p| p.median),
            mean_m: s.stats.map(|p| p.mean),
            p90_m: s.stats.map(|p| p.p90),
            iqr_m: s.stats.map(|p| p.iqr),
        })?;
    }
    w.flush().map_err(|e| Error::io("<summary csv>", e))?;
    Ok(())
}

/// Density CSV: `x,density`.
pub fn write_density_csv<W: Write>(out: W, series: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "density"])?;
    for &(x, d) in series {
        w.write_record([x.to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<density csv>", e))?;
    Ok(())
}
