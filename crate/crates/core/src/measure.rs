//! Per-probe ToA measurement sets built from minimum-delay paths.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{ApId, Point3, Scene};
use crate::raytrace::{min_delay_toa, RayConfig};

/// Minimum number of valid measurements needed to estimate a 2-D position.
pub const MIN_MEASUREMENTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToaMeasurement {
    pub ap_id: ApId,
    /// NaN when `valid` is false.
    pub toa_s: f64,
    pub interactions: usize,
    pub valid: bool,
}

impl ToaMeasurement {
    pub fn valid(ap_id: ApId, toa_s: f64, interactions: usize) -> Self {
        Self {
            ap_id,
            toa_s,
            interactions,
            valid: true,
        }
    }

    pub fn missing(ap_id: ApId) -> Self {
        Self {
            ap_id,
            toa_s: f64::NAN,
            interactions: 0,
            valid: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// Ground-truth position the set was generated for.
    pub probe: Point3,
    /// One entry per AP, indexed by ap_id.
    pub entries: Vec<ToaMeasurement>,
    pub noise_sigma_s: f64,
}

impl MeasurementSet {
    /// Builds a set from raw entries; entries must cover ap_ids `0..n`
    /// exactly once, in any order.
    pub fn new(
        probe: Point3,
        mut entries: Vec<ToaMeasurement>,
        noise_sigma_s: f64,
    ) -> Result<Self> {
        entries.sort_by_key(|e| e.ap_id);
        for (i, e) in entries.iter().enumerate() {
            if e.ap_id.index() != i {
                return Err(Error::InvalidInput(format!(
                    "measurement entries must cover ap_ids 0..{} exactly once",
                    entries.len()
                )));
            }
            if e.valid && !(e.toa_s.is_finite() && e.toa_s > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "valid measurement for AP {} has non-positive or non-finite toa",
                    e.ap_id
                )));
            }
        }
        Ok(Self {
            probe,
            entries,
            noise_sigma_s,
        })
    }

    pub fn get(&self, id: ApId) -> Option<&ToaMeasurement> {
        self.entries.get(id.index())
    }

    pub fn valid_entries(&self) -> impl Iterator<Item = &ToaMeasurement> {
        self.entries.iter().filter(|e| e.valid)
    }

    pub fn valid_count(&self) -> usize {
        self.valid_entries().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureConfig {
    pub ray: RayConfig,
    pub noise_sigma_s: f64,
    pub rng_seed: u64,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            ray: RayConfig::default(),
            noise_sigma_s: 0.0,
            rng_seed: 0,
        }
    }
}

impl MeasureConfig {
    pub fn validate(&self) -> Result<()> {
        self.ray.validate()?;
        if !(self.noise_sigma_s.is_finite() && self.noise_sigma_s >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise_sigma_s must be finite and >= 0, got {}",
                self.noise_sigma_s
            )));
        }
        Ok(())
    }

    /// Same config with the RNG seed mixed with a stream index, so that
    /// each probe of a campaign draws from its own stream.
    pub fn for_stream(&self, index: u64) -> Self {
        Self {
            rng_seed: splitmix64(self.rng_seed ^ splitmix64(index.wrapping_add(1))),
            ..*self
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ray-traces every AP to `ue` and returns the resulting ToA set.
///
/// Noise, when enabled, is zero-mean Gaussian per AP and clamped below at
/// half the noiseless delay.
pub fn measure_all(ue: Point3, scene: &Scene, cfg: &MeasureConfig) -> Result<MeasurementSet> {
    cfg.validate()?;
    if !ue.is_finite() || !scene.bounds().contains(ue.xy()) {
        return Err(Error::InvalidInput(format!("UE {ue} outside scene bounds")));
    }
    if let Some(ap) = scene.aps().iter().find(|ap| ap.pos == ue) {
        return Err(Error::InvalidInput(format!(
            "UE {ue} coincides with AP {}",
            ap.id
        )));
    }

    let mut noise = if cfg.noise_sigma_s > 0.0 {
        let normal =
            Normal::new(0.0, cfg.noise_sigma_s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Some((normal, ChaCha8Rng::seed_from_u64(cfg.rng_seed)))
    } else {
        None
    };

    let entries: Vec<ToaMeasurement> = scene
        .aps()
        .iter()
        .map(|ap| {
            // one draw per AP regardless of validity keeps streams aligned
            let n = noise
                .as_mut()
                .map(|(normal, rng)| normal.sample(rng))
                .unwrap_or(0.0);
            match min_delay_toa(ue, ap.pos, scene, &cfg.ray) {
                Some((delay, interactions)) => {
                    ToaMeasurement::valid(ap.id, (delay + n).max(0.5 * delay), interactions)
                }
                None => ToaMeasurement::missing(ap.id),
            }
        })
        .collect();

    let have = entries.iter().filter(|e| e.valid).count();
    if have < MIN_MEASUREMENTS {
        return Err(Error::InsufficientMeasurements {
            have,
            need: MIN_MEASUREMENTS,
        });
    }
    Ok(MeasurementSet {
        probe: ue,
        entries,
        noise_sigma_s: cfg.noise_sigma_s,
    })
}

/// Valid entries as `(ap_id, toa_s)`, ascending by ToA then ap_id.
pub fn sort_ascending(ms: &MeasurementSet) -> Vec<(ApId, f64)> {
    let mut v: Vec<(ApId, f64)> = ms.valid_entries().map(|e| (e.ap_id, e.toa_s)).collect();
    sort_by_toa(&mut v);
    v
}

pub(crate) fn sort_by_toa(v: &mut [(ApId, f64)]) {
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

#[derive(Debug, Serialize)]
struct MeasurementRow {
    ue_x: f64,
    ue_y: f64,
    ue_z: f64,
    ap_id: u32,
    toa_s: f64,
    interactions: usize,
    valid: bool,
}

/// Writes sets as CSV: `ue_x,ue_y,ue_z,ap_id,toa_s,interactions,valid`.
pub fn write_measurements_csv<W: Write>(out: W, sets: &[MeasurementSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for ms in sets {
        for e in &ms.entries {
            w.serialize(MeasurementRow {
                ue_x: ms.probe.x,
                ue_y: ms.probe.y,
                ue_z: ms.probe.z,
                ap_id: e.ap_id.0,
                toa_s: e.toa_s,
                interactions: e.interactions,
                valid: e.valid,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io("<measurement csv>", e))?;
    Ok(())
}
