//! Floor-plan model, planar primitives and scene documents.
//!
//! Walls are vertical and full-height, so every occlusion and reflection
//! test happens in the x-y plane. Height only enters path length.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance (m) for point-on-segment and endpoint-touching decisions.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn lex_cmp(self, o: Vec2) -> std::cmp::Ordering {
        self.x.total_cmp(&o.x).then(self.y.total_cmp(&o.y))
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn distance(self, o: Point3) -> f64 {
        let (dx, dy, dz) = (self.x - o.x, self.y - o.y, self.z - o.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Access point identifier. Scene ids are contiguous from 0.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ApId(pub u32);

impl ApId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ApId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn direction(&self) -> Vec2 {
        self.b - self.a
    }

    /// Same segment with endpoints in lexicographic order.
    fn canonical(self) -> Segment {
        if self.a.lex_cmp(self.b).is_gt() {
            Segment::new(self.b, self.a)
        } else {
            self
        }
    }

    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let d = self.direction();
        let len2 = d.dot(d);
        let t = if len2 > 0.0 {
            ((p - self.a).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        p.distance(self.a + d * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wall {
    pub a: Vec2,
    pub b: Vec2,
    #[serde(default = "default_reflective")]
    pub reflective: bool,
}

fn default_reflective() -> bool {
    true
}

impl Wall {
    pub const fn new(a: Vec2, b: Vec2, reflective: bool) -> Self {
        Self { a, b, reflective }
    }

    pub fn segment(&self) -> Segment {
        Segment::new(self.a, self.b)
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessPoint {
    pub id: ApId,
    pub pos: Point3,
}

/// Validated, immutable floor plan with its AP roster.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    bounds: Bounds,
    default_ue_height: f64,
    walls: Vec<Wall>,
    aps: Vec<AccessPoint>,
}

/// Minimum number of APs a scene must carry.
pub const MIN_APS: usize = 4;

impl Scene {
    /// Builds a scene, checking every invariant. APs may be given in any
    /// order; they are stored by id.
    pub fn new(
        bounds: Bounds,
        default_ue_height: f64,
        walls: Vec<Wall>,
        mut aps: Vec<AccessPoint>,
    ) -> Result<Self> {
        if !(bounds.min.is_finite() && bounds.max.is_finite()) {
            return Err(Error::InvalidScene("bounds must be finite".into()));
        }
        if bounds.min.x >= bounds.max.x || bounds.min.y >= bounds.max.y {
            return Err(Error::InvalidScene(
                "bounds min must be strictly below max".into(),
            ));
        }
        if !default_ue_height.is_finite() {
            return Err(Error::InvalidScene(
                "default_ue_height must be finite".into(),
            ));
        }
        for (i, w) in walls.iter().enumerate() {
            if !(w.a.is_finite() && w.b.is_finite()) {
                return Err(Error::InvalidScene(format!(
                    "wall {i} has a non-finite endpoint"
                )));
            }
            if w.length() <= GEOM_EPS {
                return Err(Error::InvalidScene(format!("zero-length wall {i}")));
            }
        }
        aps.sort_by_key(|ap| ap.id);
        for pair in aps.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidScene(format!(
                    "duplicate ap_id {}",
                    pair[0].id
                )));
            }
        }
        for (i, ap) in aps.iter().enumerate() {
            if ap.id.index() != i {
                return Err(Error::InvalidScene(format!(
                    "ap_ids must be contiguous from 0; missing ap_id {i}"
                )));
            }
            if !ap.pos.is_finite() {
                return Err(Error::InvalidScene(format!(
                    "AP {} has a non-finite position",
                    ap.id
                )));
            }
            if !bounds.contains(ap.pos.xy()) {
                return Err(Error::InvalidScene(format!("AP {} outside bounds", ap.id)));
            }
        }
        if aps.len() < MIN_APS {
            return Err(Error::InvalidScene(format!(
                "need at least {MIN_APS} APs, found {}",
                aps.len()
            )));
        }
        Ok(Self {
            bounds,
            default_ue_height,
            walls,
            aps,
        })
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn default_ue_height(&self) -> f64 {
        self.default_ue_height
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn aps(&self) -> &[AccessPoint] {
        &self.aps
    }

    /// Number of APs (M).
    pub fn ap_count(&self) -> usize {
        self.aps.len()
    }

    pub fn ap(&self, id: ApId) -> Option<&AccessPoint> {
        self.aps.get(id.index())
    }

    pub fn ap_position(&self, id: ApId) -> Option<Point3> {
        self.ap(id).map(|ap| ap.pos)
    }

    /// Scene with the given wall removed. Used by property tests.
    pub fn without_wall(&self, index: usize) -> Scene {
        let mut s = self.clone();
        s.walls.remove(index);
        s
    }

    pub fn to_document(&self) -> String {
        let doc = SceneDocument {
            bounds: self.bounds,
            default_ue_height: self.default_ue_height,
            walls: self.walls.clone(),
            aps: self.aps.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("scene serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDocument {
    bounds: Bounds,
    default_ue_height: f64,
    #[serde(default)]
    walls: Vec<Wall>,
    aps: Vec<AccessPoint>,
}

/// Parses and validates a scene document (JSON).
pub fn load_scene(text: &str) -> Result<Scene> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: SceneDocument =
        serde_path_to_error::deserialize(de).map_err(|e| Error::from_json("scene", e))?;
    Scene::new(doc.bounds, doc.default_ue_height, doc.walls, doc.aps)
}

pub fn load_scene_file(path: &std::path::Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scene(&text)
}

/// Proper crossing point of two segments.
///
/// Parallel or collinear segments never intersect, and a crossing within
/// [`GEOM_EPS`] of any endpoint counts as touching, not intersecting. The
/// result does not depend on argument order or endpoint order.
pub fn segment_intersection(p: Segment, q: Segment) -> Option<Vec2> {
    let (p, q) = (p.canonical(), q.canonical());
    let (p, q) = match p.a.lex_cmp(q.a).then(p.b.lex_cmp(q.b)) {
        std::cmp::Ordering::Greater => (q, p),
        _ => (p, q),
    };
    let d1 = p.direction();
    let d2 = q.direction();
    let (len1, len2) = (d1.norm(), d2.norm());
    if len1 <= 0.0 || len2 <= 0.0 {
        return None;
    }
    let denom = d1.cross(d2);
    if denom.abs() <= 1e-12 * len1 * len2 {
        return None;
    }
    let w = q.a - p.a;
    let t = w.cross(d2) / denom;
    let u = w.cross(d1) / denom;
    let strictly_inside = |s: f64, len: f64| s * len > GEOM_EPS && (1.0 - s) * len > GEOM_EPS;
    if strictly_inside(t, len1) && strictly_inside(u, len2) {
        Some(p.a + d1 * t)
    } else {
        None
    }
}

/// True iff the plan projection of `p`–`q` properly crosses any wall.
pub fn los_blocked(p: Point3, q: Point3, scene: &Scene) -> bool {
    segment_blocked(Segment::new(p.xy(), q.xy()), scene.walls())
}

pub(crate) fn segment_blocked(seg: Segment, walls: &[Wall]) -> bool {
    walls
        .iter()
        .any(|w| segment_intersection(seg, w.segment()).is_some())
}
