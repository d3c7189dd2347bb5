//! Image-method enumeration of specular paths between two points.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{segment_blocked, Point3, Scene, Segment, Vec2, Wall, GEOM_EPS};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest supported reflection order.
pub const MAX_REFLECTION_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RayConfig {
    /// Maximum number of reflections per path.
    pub max_order: usize,
}

impl Default for RayConfig {
    fn default() -> Self {
        Self { max_order: 3 }
    }
}

impl RayConfig {
    pub fn new(max_order: usize) -> Result<Self> {
        let cfg = Self { max_order };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order > MAX_REFLECTION_ORDER {
            return Err(Error::InvalidConfig(format!(
                "max_order {} exceeds {MAX_REFLECTION_ORDER}",
                self.max_order
            )));
        }
        Ok(())
    }

    pub const fn c(&self) -> f64 {
        SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    /// Plan-view vertices: transmitter, reflection points, receiver.
    pub vertices: Vec<Vec2>,
    /// Unfolded 3-D path length (m).
    pub length_m: f64,
    pub delay_s: f64,
    /// Number of reflections.
    pub interactions: usize,
}

impl PropagationPath {
    fn from_vertices(vertices: Vec<Vec2>, dz: f64) -> Self {
        let planar: f64 = vertices.windows(2).map(|w| w[0].distance(w[1])).sum();
        let length_m = planar.hypot(dz);
        Self {
            interactions: vertices.len() - 2,
            delay_s: length_m / SPEED_OF_LIGHT,
            length_m,
            vertices,
        }
    }

    /// Ordering used to pick the minimum-delay path: delay, then fewer
    /// interactions, then lexicographic vertex order.
    pub fn preference(&self, other: &Self) -> Ordering {
        self.delay_s
            .total_cmp(&other.delay_s)
            .then(self.interactions.cmp(&other.interactions))
            .then_with(|| {
                for (a, b) in self.vertices.iter().zip(&other.vertices) {
                    let o = a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y));
                    if o.is_ne() {
                        return o;
                    }
                }
                Ordering::Equal
            })
    }
}

/// Mirror image of `p` across the infinite line through `w`.
pub fn reflect_across_wall(p: Vec2, w: &Wall) -> Vec2 {
    let d = w.b - w.a;
    let t = (p - w.a).dot(d) / d.dot(d);
    let foot = w.a + d * t;
    foot * 2.0 - p
}

/// Crossing of the leg `from`–`image` with wall `w`, if the crossing is a
/// valid specular point: strictly between the two leg ends and strictly
/// inside the wall.
fn specular_point(from: Vec2, image: Vec2, w: &Wall) -> Option<Vec2> {
    let leg = image - from;
    let dir = w.b - w.a;
    let denom = leg.cross(dir);
    let (leg_len, wall_len) = (leg.norm(), dir.norm());
    if denom.abs() <= 1e-12 * leg_len * wall_len {
        return None;
    }
    let rel = w.a - from;
    let s = rel.cross(dir) / denom;
    let t = rel.cross(leg) / denom;
    let inside = |u: f64, len: f64| u * len > GEOM_EPS && (1.0 - u) * len > GEOM_EPS;
    if inside(s, leg_len) && inside(t, wall_len) {
        Some(w.a + dir * t)
    } else {
        None
    }
}

struct Tracer<'a> {
    walls: &'a [Wall],
    reflective: Vec<usize>,
    tx: Vec2,
    rx: Vec2,
    dz: f64,
    max_order: usize,
    paths: Vec<PropagationPath>,
}

impl Tracer<'_> {
    /// Depth-first walk over wall sequences; `images[j]` is the
    /// transmitter mirrored across the first `j` walls of `seq`.
    fn walk(&mut self, seq: &mut Vec<usize>, images: &mut Vec<Vec2>) {
        if !seq.is_empty() {
            self.try_sequence(seq, images);
        }
        if seq.len() == self.max_order {
            return;
        }
        for i in 0..self.reflective.len() {
            let wi = self.reflective[i];
            if seq.last() == Some(&wi) {
                continue;
            }
            let next = reflect_across_wall(*images.last().unwrap(), &self.walls[wi]);
            seq.push(wi);
            images.push(next);
            self.walk(seq, images);
            seq.pop();
            images.pop();
        }
    }

    fn try_sequence(&mut self, seq: &[usize], images: &[Vec2]) {
        let mut vertices = Vec::with_capacity(seq.len() + 2);
        vertices.push(self.rx);
        let mut from = self.rx;
        for j in (0..seq.len()).rev() {
            match specular_point(from, images[j + 1], &self.walls[seq[j]]) {
                Some(p) => {
                    vertices.push(p);
                    from = p;
                }
                None => return,
            }
        }
        vertices.push(self.tx);
        vertices.reverse();
        let clear = vertices.windows(2).all(|leg| {
            leg[0].distance(leg[1]) > GEOM_EPS
                && !segment_blocked(Segment::new(leg[0], leg[1]), self.walls)
        });
        if clear {
            self.paths
                .push(PropagationPath::from_vertices(vertices, self.dz));
        }
    }
}

fn same_vertices(a: &PropagationPath, b: &PropagationPath) -> bool {
    a.vertices.len() == b.vertices.len()
        && a.vertices
            .iter()
            .zip(&b.vertices)
            .all(|(p, q)| p.distance(*q) <= GEOM_EPS)
}

/// All specular paths from `tx` to `rx` with at most `cfg.max_order`
/// reflections, LoS first, then by wall sequence.
pub fn enumerate_paths(
    tx: Point3,
    rx: Point3,
    scene: &Scene,
    cfg: &RayConfig,
) -> Vec<PropagationPath> {
    let walls = scene.walls();
    let mut tracer = Tracer {
        walls,
        reflective: (0..walls.len()).filter(|&i| walls[i].reflective).collect(),
        tx: tx.xy(),
        rx: rx.xy(),
        dz: tx.z - rx.z,
        max_order: cfg.max_order.min(MAX_REFLECTION_ORDER),
        paths: Vec::new(),
    };
    let plan = Segment::new(tracer.tx, tracer.rx);
    if plan.length() <= GEOM_EPS || !segment_blocked(plan, walls) {
        tracer.paths.push(PropagationPath::from_vertices(
            vec![tracer.tx, tracer.rx],
            tracer.dz,
        ));
    }
    if plan.length() > GEOM_EPS {
        let mut seq = Vec::with_capacity(tracer.max_order);
        let mut images = vec![tracer.tx];
        tracer.walk(&mut seq, &mut images);
    }
    let mut unique: Vec<PropagationPath> = Vec::with_capacity(tracer.paths.len());
    for p in tracer.paths {
        if !unique.iter().any(|q| same_vertices(q, &p)) {
            unique.push(p);
        }
    }
    unique
}

/// Minimum-delay path between two points, or `None` if no path exists
/// within the reflection budget.
pub fn min_delay_path(
    tx: Point3,
    rx: Point3,
    scene: &Scene,
    cfg: &RayConfig,
) -> Option<PropagationPath> {
    enumerate_paths(tx, rx, scene, cfg)
        .into_iter()
        .min_by(|a, b| a.preference(b))
}

/// `(delay_s, interactions)` of the minimum-delay path.
pub fn min_delay_toa(
    tx: Point3,
    rx: Point3,
    scene: &Scene,
    cfg: &RayConfig,
) -> Option<(f64, usize)> {
    min_delay_path(tx, rx, scene, cfg).map(|p| (p.delay_s, p.interactions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{AccessPoint, ApId, Bounds};

    fn scene_with(walls: Vec<Wall>) -> Scene {
        let aps = (0..4)
            .map(|i| AccessPoint {
                id: ApId(i),
                pos: Point3::new(-4.0 + i as f64, -4.0, 3.0),
            })
            .collect();
        Scene::new(
            Bounds {
                min: Vec2::new(-5.0, -5.0),
                max: Vec2::new(10.0, 10.0),
            },
            1.0,
            walls,
            aps,
        )
        .unwrap()
    }

    fn w(ax: f64, ay: f64, bx: f64, by: f64, reflective: bool) -> Wall {
        Wall::new(Vec2::new(ax, ay), Vec2::new(bx, by), reflective)
    }

    fn corridor() -> Scene {
        scene_with(vec![
            w(0.0, 2.0, 4.0, 2.0, true),
            w(2.0, -1.0, 2.0, 1.0, true),
        ])
    }

    #[test]
    fn reflection_examples() {
        let wall = w(0.0, 2.0, 4.0, 2.0, true);
        assert_eq!(
            reflect_across_wall(Vec2::new(0.0, 0.0), &wall),
            Vec2::new(0.0, 4.0)
        );
        let on = Vec2::new(3.0, 2.0);
        assert_eq!(reflect_across_wall(on, &wall), on);
        assert_eq!(
            reflect_across_wall(Vec2::new(1.0, 0.0), &w(0.0, 0.0, 0.0, 1.0, true)),
            Vec2::new(-1.0, 0.0)
        );
    }

    #[test]
    fn reflection_is_an_involution() {
        let wall = w(0.3, -1.2, 2.9, 4.4, true);
        let p = Vec2::new(-3.7, 8.1);
        let back = reflect_across_wall(reflect_across_wall(p, &wall), &wall);
        assert!(back.distance(p) < 1e-12);
    }

    #[test]
    fn free_space_single_los_path() {
        let s = scene_with(vec![]);
        let paths = enumerate_paths(
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(3.0, 0.0, 1.0),
            &s,
            &RayConfig::default(),
        );
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].interactions, 0);
        assert_eq!(paths[0].vertices.len(), 2);
        assert!((paths[0].delay_s - 3.0 / SPEED_OF_LIGHT).abs() < 1e-22);
        assert!((paths[0].delay_s - 1.00069e-8).abs() < 1e-13);
    }

    #[test]
    fn corridor_single_reflection() {
        let s = corridor();
        let tx = Point3::new(0.0, 0.0, 1.0);
        let rx = Point3::new(4.0, 0.0, 1.0);
        let paths = enumerate_paths(tx, rx, &s, &RayConfig::default());
        assert!(paths.iter().all(|p| p.interactions > 0));
        let (delay, n) = min_delay_toa(tx, rx, &s, &RayConfig::default()).unwrap();
        assert_eq!(n, 1);
        let expected = 32f64.sqrt() / SPEED_OF_LIGHT;
        assert!((delay - expected).abs() / expected < 1e-14);
        assert!((delay - 1.88693e-8).abs() < 1e-13);
        let best = min_delay_path(tx, rx, &s, &RayConfig::default()).unwrap();
        assert!(best.vertices[1].distance(Vec2::new(2.0, 2.0)) < 1e-12);
    }

    #[test]
    fn enclosed_pair_has_no_path() {
        // tx boxed in by absorbers, rx outside
        let s = scene_with(vec![
            w(-1.0, -1.0, 1.0, -1.0, false),
            w(1.0, -1.0, 1.0, 1.0, false),
            w(1.0, 1.0, -1.0, 1.0, false),
            w(-1.0, 1.0, -1.0, -1.0, false),
        ]);
        let tx = Point3::new(0.0, 0.0, 1.0);
        let rx = Point3::new(5.0, 4.0, 1.0);
        assert!(enumerate_paths(tx, rx, &s, &RayConfig::default()).is_empty());
        assert_eq!(min_delay_toa(tx, rx, &s, &RayConfig::default()), None);
    }

    #[test]
    fn endpoint_specular_point_is_rejected() {
        // specular point would land exactly on the wall end (2, 2)
        let s = scene_with(vec![w(2.0, 2.0, 6.0, 2.0, true)]);
        let paths = enumerate_paths(
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(4.0, 0.0, 1.0),
            &s,
            &RayConfig::default(),
        );
        assert!(paths.iter().all(|p| p.interactions == 0), "{paths:?}");
    }

    #[test]
    fn height_difference_enters_delay() {
        let s = scene_with(vec![]);
        let (d, _) = min_delay_toa(
            Point3::new(0.0, 0.0, 4.0),
            Point3::new(3.0, 0.0, 0.0),
            &s,
            &RayConfig::default(),
        )
        .unwrap();
        assert!((d - 5.0 / SPEED_OF_LIGHT).abs() < 1e-22);
    }

    #[test]
    fn parallel_mirrors_give_higher_orders() {
        let s = scene_with(vec![
            w(-5.0, 1.0, 10.0, 1.0, true),
            w(-5.0, -1.0, 10.0, -1.0, true),
        ]);
        let paths = enumerate_paths(
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(6.0, 0.0, 1.0),
            &s,
            &RayConfig { max_order: 3 },
        );
        // LoS, 2 first-order, 2 second-order (ABA-free: AB, BA), 2 third-order
        assert_eq!(paths.len(), 7);
        for p in &paths {
            assert_eq!(p.interactions, p.vertices.len() - 2);
            assert!(p.length_m >= 6.0);
        }
    }

    #[test]
    fn max_order_is_guarded() {
        assert!(RayConfig::new(6).is_ok());
        assert!(RayConfig::new(7).is_err());
    }
}
