//! Indoor ToA positioning with ray-traced measurements and AP-neighborhood
//! based measurement selection.
//!
//! Pipeline: [`geom`] scenes feed the image-method tracer in [`raytrace`];
//! [`measure`] turns minimum-delay paths into per-UE ToA sets;
//! [`neighborhood`] builds the AP look-up table with the elbow rule;
//! [`select`] picks a measurement subset; [`estimate`] solves the position;
//! [`harness`] runs Monte Carlo campaigns over all of it.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod geom;
pub mod harness;
pub mod measure;
pub mod neighborhood;
pub mod raytrace;
pub mod select;

pub use error::{Error, Result};
pub use estimate::{
    estimate_position, position_error, residual, EstimateResult, InitMode, SolverConfig,
};
pub use geom::{
    load_scene, los_blocked, segment_intersection, AccessPoint, ApId, Bounds, Point3, Scene,
    Segment, Vec2, Wall,
};
pub use harness::{
    interaction_density, run_scenario, sample_ues, summarize, RunRecord, Sampling, ScenarioConfig,
    SummaryStats,
};
pub use measure::{measure_all, sort_ascending, MeasureConfig, MeasurementSet, ToaMeasurement};
pub use neighborhood::{
    build_table, elbow_k, load_table, save_table, ElbowResult, NeighborhoodTable,
};
pub use raytrace::{
    enumerate_paths, min_delay_toa, reflect_across_wall, PropagationPath, RayConfig, SPEED_OF_LIGHT,
};
pub use select::{pick_references, select, SelectedSet, Strategy};
