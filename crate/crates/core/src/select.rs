//! Measurement-selection strategies over one UE's ToA set.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::ApId;
use crate::measure::{sort_ascending, MeasurementSet, MIN_MEASUREMENTS};
use crate::neighborhood::{elbow_k, NeighborhoodTable, ELBOW_K_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Reference AP plus its neighborhood.
    Neighborhood,
    /// Both references plus the intersection of their neighborhoods.
    Intersection,
    /// Both references plus the union of their neighborhoods, elbow-trimmed.
    Union,
    /// The `|N_r| + 1` smallest ToAs.
    Cardinality,
    /// The `n` smallest ToAs.
    FixedN(usize),
    /// Elbow rule over all ToAs.
    FixedElbow,
    /// Every valid measurement.
    All,
}

impl Strategy {
    /// Rejects `FixedN(n)` outside `3..=m`.
    pub fn validate_for(&self, m: usize) -> Result<()> {
        match *self {
            Strategy::FixedN(n) if n < MIN_MEASUREMENTS => Err(Error::InvalidStrategy(format!(
                "fixed:{n} selects fewer than {MIN_MEASUREMENTS} measurements"
            ))),
            Strategy::FixedN(n) if n > m => Err(Error::FixedNExceedsM { n, m }),
            _ => Ok(()),
        }
    }

    pub fn uses_table(&self) -> bool {
        matches!(
            self,
            Strategy::Neighborhood
                | Strategy::Intersection
                | Strategy::Union
                | Strategy::Cardinality
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Neighborhood => f.write_str("neighborhood"),
            Strategy::Intersection => f.write_str("intersection"),
            Strategy::Union => f.write_str("union"),
            Strategy::Cardinality => f.write_str("cardinality"),
            Strategy::FixedN(n) => write!(f, "fixed:{n}"),
            Strategy::FixedElbow => f.write_str("fixed-elbow"),
            Strategy::All => f.write_str("all"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "neighborhood" => Strategy::Neighborhood,
            "intersection" => Strategy::Intersection,
            "union" => Strategy::Union,
            "cardinality" => Strategy::Cardinality,
            "fixed-elbow" => Strategy::FixedElbow,
            "all" => Strategy::All,
            other => {
                let n = other
                    .strip_prefix("fixed:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidStrategy(format!("unknown strategy `{other}`")))?;
                if n < MIN_MEASUREMENTS {
                    return Err(Error::InvalidStrategy(format!(
                        "fixed:{n} selects fewer than {MIN_MEASUREMENTS} measurements"
                    )));
                }
                Strategy::FixedN(n)
            }
        })
    }
}

impl serde::Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Strategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated strategy list.
pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedSet {
    /// AP with the smallest ToA.
    pub reference: ApId,
    /// AP with the second-smallest ToA, for the two-reference strategies.
    pub second_reference: Option<ApId>,
    /// Selected `(ap_id, toa_s)`, ascending by ToA then ap_id.
    pub members: Vec<(ApId, f64)>,
    pub strategy: Strategy,
    /// Set when Intersection fell back to Union.
    pub fallback_used: bool,
}

impl SelectedSet {
    pub fn ap_ids(&self) -> Vec<ApId> {
        self.members.iter().map(|&(id, _)| id).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Reference `r` (smallest ToA) and second reference `s`.
pub fn pick_references(ms: &MeasurementSet) -> Result<(ApId, Option<ApId>)> {
    let sorted = sort_ascending(ms);
    if sorted.len() < MIN_MEASUREMENTS {
        return Err(Error::InsufficientMeasurements {
            have: sorted.len(),
            need: MIN_MEASUREMENTS,
        });
    }
    Ok((sorted[0].0, sorted.get(1).map(|&(id, _)| id)))
}

fn neighborhood_of(table: &NeighborhoodTable, id: ApId) -> Result<&[ApId]> {
    table
        .neighborhood(id)
        .ok_or_else(|| Error::InvalidTable(format!("table has no row for AP {id}")))
}

fn finish(
    members: Vec<(ApId, f64)>,
    reference: ApId,
    second_reference: Option<ApId>,
    strategy: Strategy,
    fallback_used: bool,
) -> Result<SelectedSet> {
    if members.len() < MIN_MEASUREMENTS {
        return Err(Error::InsufficientMeasurements {
            have: members.len(),
            need: MIN_MEASUREMENTS,
        });
    }
    Ok(SelectedSet {
        reference,
        second_reference,
        members,
        strategy,
        fallback_used,
    })
}

/// Applies `strategy` to the valid entries of `ms`. The table is only
/// consulted by the neighborhood-based strategies.
pub fn select(
    strategy: Strategy,
    ms: &MeasurementSet,
    table: &NeighborhoodTable,
) -> Result<SelectedSet> {
    let sorted = sort_ascending(ms);
    if sorted.len() < MIN_MEASUREMENTS {
        return Err(Error::InsufficientMeasurements {
            have: sorted.len(),
            need: MIN_MEASUREMENTS,
        });
    }
    let r = sorted[0].0;
    let s = sorted[1].0;
    // keeps ascending order, drops invalid APs
    let pick = |keep: &dyn Fn(ApId) -> bool| -> Vec<(ApId, f64)> {
        sorted.iter().copied().filter(|&(id, _)| keep(id)).collect()
    };

    match strategy {
        Strategy::Neighborhood => {
            let n_r = neighborhood_of(table, r)?;
            finish(
                pick(&|id| id == r || n_r.contains(&id)),
                r,
                None,
                strategy,
                false,
            )
        }
        Strategy::Intersection => {
            let (n_r, n_s) = (neighborhood_of(table, r)?, neighborhood_of(table, s)?);
            let members =
                pick(&|id| id == r || id == s || (n_r.contains(&id) && n_s.contains(&id)));
            if members.len() < MIN_MEASUREMENTS {
                let mut fallback = union_select(&sorted, r, s, table)?;
                fallback.strategy = strategy;
                fallback.fallback_used = true;
                return Ok(fallback);
            }
            finish(members, r, Some(s), strategy, false)
        }
        Strategy::Union => union_select(&sorted, r, s, table),
        Strategy::Cardinality => {
            let n = neighborhood_of(table, r)?.len() + 1;
            finish(
                sorted.iter().copied().take(n).collect(),
                r,
                None,
                strategy,
                false,
            )
        }
        Strategy::FixedN(n) => {
            if n < MIN_MEASUREMENTS {
                return Err(Error::InvalidStrategy(format!("fixed:{n}")));
            }
            if n > sorted.len() {
                return Err(Error::FixedNExceedsM { n, m: sorted.len() });
            }
            finish(sorted[..n].to_vec(), r, None, strategy, false)
        }
        Strategy::FixedElbow => {
            let toas: Vec<f64> = sorted.iter().map(|&(_, t)| t).collect();
            let k = elbow_k(&toas, ELBOW_K_MIN)?.k;
            finish(sorted[..k].to_vec(), r, None, strategy, false)
        }
        Strategy::All => finish(sorted, r, None, strategy, false),
    }
}

/// Elbow-trimmed union; `sorted` is the ascending valid list.
fn union_select(
    sorted: &[(ApId, f64)],
    r: ApId,
    s: ApId,
    table: &NeighborhoodTable,
) -> Result<SelectedSet> {
    let (n_r, n_s) = (neighborhood_of(table, r)?, neighborhood_of(table, s)?);
    let candidates: Vec<(ApId, f64)> = sorted
        .iter()
        .copied()
        .filter(|&(id, _)| id == r || id == s || n_r.contains(&id) || n_s.contains(&id))
        .collect();
    let toas: Vec<f64> = candidates.iter().map(|&(_, t)| t).collect();
    let k = elbow_k(&toas, ELBOW_K_MIN)?.k;
    finish(candidates[..k].to_vec(), r, Some(s), Strategy::Union, false)
}
