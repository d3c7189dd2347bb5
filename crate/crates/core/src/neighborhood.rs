//! Elbow change-point rule and the per-AP neighborhood look-up table.
//!
//! For AP `m` the table stores every other AP ordered by ascending
//! AP-to-AP minimum delay (`B_m`), plus the elbow-selected count `k`. The
//! trimmed neighborhood `N_m` is the `k`-prefix of that order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{ApId, Scene};
use crate::measure::{sort_by_toa, MeasureConfig};
use crate::raytrace::min_delay_toa;

/// Lower bound on the number of measurements kept by the elbow rule.
pub const ELBOW_K_MIN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ElbowResult {
    pub k: usize,
    /// Consecutive differences of the sorted input.
    pub deltas: Vec<f64>,
    /// Mean of `deltas`.
    pub threshold: f64,
    /// True when no difference strictly exceeded the threshold.
    pub fallback_used: bool,
}

/// Elbow count over an ascending delay list.
///
/// `k` is the first (1-based) index `i` whose gap `d[i+1] - d[i]` strictly
/// exceeds the mean gap; with no such gap every entry is kept. The result
/// is clamped to `[k_min, L]`, so inputs shorter than `k_min` yield `L`.
///
/// Gaps within floating-point noise of the mean (relative 1e-9 of the mean,
/// or a few ulps of the largest delay) count as equal, not exceeding.
pub fn elbow_k(sorted_delays: &[f64], k_min: usize) -> Result<ElbowResult> {
    let len = sorted_delays.len();
    if len < 2 {
        return Err(Error::InvalidInput(format!(
            "elbow needs at least 2 delays, got {len}"
        )));
    }
    if k_min < 1 {
        return Err(Error::InvalidInput("elbow k_min must be >= 1".into()));
    }
    if sorted_delays.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("elbow delays must be finite".into()));
    }
    if sorted_delays.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "elbow delays must be sorted ascending".into(),
        ));
    }

    let deltas: Vec<f64> = sorted_delays.windows(2).map(|w| w[1] - w[0]).collect();
    let threshold = deltas.iter().sum::<f64>() / deltas.len() as f64;
    let scale = sorted_delays[0].abs().max(sorted_delays[len - 1].abs());
    let noise = (1e-9 * threshold).max(16.0 * f64::EPSILON * scale);

    let first = deltas.iter().position(|&d| d - threshold > noise);
    let (raw, fallback_used) = match first {
        Some(i) => (i + 1, false),
        None => (len, true),
    };
    Ok(ElbowResult {
        k: raw.max(k_min).min(len),
        deltas,
        threshold,
        fallback_used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodRow {
    pub id: ApId,
    /// All other APs, ascending by AP-to-AP delay.
    pub neighbors_sorted: Vec<ApId>,
    /// Elbow count; `neighbors_sorted[..k]` is the neighborhood.
    pub k: usize,
    pub toas_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodTable {
    rows: Vec<NeighborhoodRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableDocument {
    aps: Vec<NeighborhoodRow>,
}

impl NeighborhoodTable {
    /// Checks structural invariants: one row per AP id `0..M`, no self
    /// neighbors, no duplicates, `k <= |B_m|`, and one non-decreasing ToA
    /// per neighbor.
    pub fn from_rows(mut rows: Vec<NeighborhoodRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.id);
        let m = rows.len();
        if let Some(i) = rows.iter().enumerate().position(|(i, r)| r.id.index() != i) {
            return Err(Error::InvalidTable(format!(
                "missing row for AP {i} (rows must cover ids 0..{m} exactly once)"
            )));
        }
        for row in &rows {
            if row.neighbors_sorted.contains(&row.id) {
                return Err(Error::InvalidTable(format!(
                    "AP {} lists itself as a neighbor",
                    row.id
                )));
            }
            let mut seen = vec![false; m];
            for n in &row.neighbors_sorted {
                let slot = seen.get_mut(n.index()).ok_or_else(|| {
                    Error::InvalidTable(format!("AP {} has unknown neighbor {n}", row.id))
                })?;
                if std::mem::replace(slot, true) {
                    return Err(Error::InvalidTable(format!(
                        "AP {} lists neighbor {n} twice",
                        row.id
                    )));
                }
            }
            if row.toas_s.len() != row.neighbors_sorted.len() {
                return Err(Error::InvalidTable(format!(
                    "AP {}: {} neighbors but {} toas",
                    row.id,
                    row.neighbors_sorted.len(),
                    row.toas_s.len()
                )));
            }
            if row.toas_s.iter().any(|t| !t.is_finite() || *t <= 0.0)
                || row.toas_s.windows(2).any(|w| w[1] < w[0])
            {
                return Err(Error::InvalidTable(format!(
                    "AP {}: toas must be positive and ascending",
                    row.id
                )));
            }
            if row.k > row.neighbors_sorted.len() {
                return Err(Error::InvalidTable(format!(
                    "AP {}: k = {} exceeds neighbor count {}",
                    row.id,
                    row.k,
                    row.neighbors_sorted.len()
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[NeighborhoodRow] {
        &self.rows
    }

    pub fn ap_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, id: ApId) -> Option<&NeighborhoodRow> {
        self.rows.get(id.index())
    }

    /// Trimmed neighborhood `N_m`.
    pub fn neighborhood(&self, id: ApId) -> Option<&[ApId]> {
        self.row(id).map(|r| &r.neighbors_sorted[..r.k])
    }

    /// Full ordered neighbor list `B_m`.
    pub fn sorted_neighbors(&self, id: ApId) -> Option<&[ApId]> {
        self.row(id).map(|r| r.neighbors_sorted.as_slice())
    }

    pub fn k(&self, id: ApId) -> Option<usize> {
        self.row(id).map(|r| r.k)
    }

    pub fn save(&self) -> String {
        let doc = TableDocument {
            aps: self.rows.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("table serializes")
    }

    pub fn load(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: TableDocument = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::from_json("neighborhood table", e))?;
        Self::from_rows(doc.aps)
    }

    pub fn load_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::load(&text)
    }
}

pub fn save_table(table: &NeighborhoodTable) -> String {
    table.save()
}

pub fn load_table(text: &str) -> Result<NeighborhoodTable> {
    NeighborhoodTable::load(text)
}

/// Noiseless AP-to-AP minimum delays, `delays[m][j]`; the diagonal is 0.
/// Each unordered pair is traced once.
pub fn pairwise_delays(scene: &Scene, cfg: &MeasureConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let m = scene.ap_count();
    let aps = scene.aps();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let traced: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| min_delay_toa(aps[i].pos, aps[j].pos, scene, &cfg.ray).map(|(d, _)| d))
        .collect();
    let mut delays = vec![vec![0.0; m]; m];
    for (&(i, j), d) in pairs.iter().zip(traced) {
        let d = d.ok_or(Error::DisconnectedPair(aps[i].id, aps[j].id))?;
        delays[i][j] = d;
        delays[j][i] = d;
    }
    Ok(delays)
}

/// Builds the look-up table with every other AP as a candidate neighbor.
/// Measurement noise in `cfg` is ignored.
pub fn build_table(scene: &Scene, cfg: &MeasureConfig) -> Result<NeighborhoodTable> {
    let noiseless = MeasureConfig {
        noise_sigma_s: 0.0,
        ..*cfg
    };
    let delays = pairwise_delays(scene, &noiseless)?;
    let rows = scene
        .aps()
        .iter()
        .map(|ap| {
            let mut others: Vec<(ApId, f64)> = scene
                .aps()
                .iter()
                .filter(|o| o.id != ap.id)
                .map(|o| (o.id, delays[ap.id.index()][o.id.index()]))
                .collect();
            sort_by_toa(&mut others);
            let toas_s: Vec<f64> = others.iter().map(|&(_, t)| t).collect();
            let k = elbow_k(&toas_s, ELBOW_K_MIN)?.k;
            Ok(NeighborhoodRow {
                id: ap.id,
                neighbors_sorted: others.iter().map(|&(id, _)| id).collect(),
                k,
                toas_s,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NeighborhoodTable::from_rows(rows)
}
