//! Range-based multilateration by damped nonlinear least squares.
//!
//! The horizontal position `(x, y)` is solved with the UE height fixed to
//! the scene default. Each selected AP contributes the residual
//! `||p - p_m|| - c * toa_m`; the solver minimizes the sum of squares with
//! a Levenberg-style trust-region update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Bounds, Point3, Scene, Vec2};
use crate::measure::MIN_MEASUREMENTS;
use crate::raytrace::SPEED_OF_LIGHT;
use crate::select::SelectedSet;

/// Iterates closer than this to an AP are nudged away.
const AP_GUARD_M: f64 = 1e-6;
const AP_NUDGE_M: f64 = 1e-4;
const MAX_DAMPING: f64 = 1e20;
const MIN_DAMPING: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Mean of the member APs' horizontal positions.
    Centroid,
    Fixed(Point3),
    /// Best result over a square grid of starts covering the scene bounds.
    Multistart {
        spacing_m: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `||J^T r||` falls to this (m).
    pub gradient_tolerance: f64,
    /// Stop once a trial step is this short (m).
    pub step_tolerance: f64,
    pub initial_damping: f64,
    pub init: InitMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            initial_damping: 1e-3,
            init: InitMode::Centroid,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.gradient_tolerance)
            && positive(self.step_tolerance)
            && positive(self.initial_damping))
        {
            return Err(Error::InvalidConfig(
                "solver tolerances and damping must be finite and > 0".into(),
            ));
        }
        match self.init {
            InitMode::Multistart { spacing_m } if !positive(spacing_m) => Err(
                Error::InvalidConfig("multistart spacing must be > 0".into()),
            ),
            InitMode::Fixed(p) if !p.is_finite() => {
                Err(Error::InvalidConfig("fixed init must be finite".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    pub p_hat: Point3,
    /// Sum of squared residuals at `p_hat` (m²).
    pub objective: f64,
    /// `||J^T r||` at `p_hat` (m).
    pub gradient_norm: f64,
    pub iterations: usize,
    /// Set when the gradient or step tolerance stopped the solver; clear
    /// on the iteration cap or runaway damping.
    pub converged: bool,
    /// Member APs are collinear in plan view; the fix may be mirrored.
    pub collinear: bool,
    pub position_error: Option<f64>,
}

impl EstimateResult {
    pub fn with_truth(mut self, truth: Point3) -> Self {
        self.position_error = Some(position_error(self.p_hat, truth));
        self
    }
}

/// `||p - ap|| - c * toa`, in meters.
pub fn residual(p: Point3, ap_pos: Point3, toa_s: f64) -> f64 {
    p.distance(ap_pos) - SPEED_OF_LIGHT * toa_s
}

/// Derivative of [`residual`] with respect to `(x, y)`.
pub fn jacobian_row(p: Point3, ap_pos: Point3) -> [f64; 2] {
    let d = p.distance(ap_pos);
    [(p.x - ap_pos.x) / d, (p.y - ap_pos.y) / d]
}

pub fn position_error(p_hat: Point3, p_true: Point3) -> f64 {
    p_hat.distance(p_true)
}

/// Ranges to fixed anchors with the unknown height pinned to `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeProblem {
    anchors: Vec<Point3>,
    ranges: Vec<f64>,
    z: f64,
}

/// One local solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSolve {
    pub p: Vec2,
    pub objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RangeProblem {
    /// `anchors` pairs each AP position with its ToA (s).
    pub fn new(anchors: &[(Point3, f64)], z: f64) -> Self {
        Self {
            anchors: anchors.iter().map(|&(p, _)| p).collect(),
            ranges: anchors.iter().map(|&(_, t)| SPEED_OF_LIGHT * t).collect(),
            z,
        }
    }

    pub fn point(&self, p: Vec2) -> Point3 {
        Point3::new(p.x, p.y, self.z)
    }

    pub fn residuals(&self, p: Vec2) -> Vec<f64> {
        let q = self.point(p);
        self.anchors
            .iter()
            .zip(&self.ranges)
            .map(|(a, r)| q.distance(*a) - r)
            .collect()
    }

    pub fn objective(&self, p: Vec2) -> f64 {
        self.residuals(p).iter().map(|r| r * r).sum()
    }

    pub fn jacobian(&self, p: Vec2) -> Vec<[f64; 2]> {
        let q = self.point(p);
        self.anchors.iter().map(|a| jacobian_row(q, *a)).collect()
    }

    /// `J^T r`.
    pub fn gradient(&self, p: Vec2) -> [f64; 2] {
        let r = self.residuals(p);
        let j = self.jacobian(p);
        r.iter().zip(&j).fold([0.0, 0.0], |g, (ri, row)| {
            [g[0] + row[0] * ri, g[1] + row[1] * ri]
        })
    }

    /// Plan-view centroid of the anchors.
    pub fn centroid(&self) -> Vec2 {
        let n = self.anchors.len() as f64;
        let (sx, sy) = self
            .anchors
            .iter()
            .fold((0.0, 0.0), |(sx, sy), a| (sx + a.x, sy + a.y));
        Vec2::new(sx / n, sy / n)
    }

    /// Principal axes of the anchor layout: `(major, minor, major_var,
    /// minor_var)` from the 2x2 covariance.
    fn layout_axes(&self) -> (Vec2, Vec2, f64, f64) {
        let c = self.centroid();
        let n = self.anchors.len() as f64;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for a in &self.anchors {
            let (dx, dy) = (a.x - c.x, a.y - c.y);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
        let mean = 0.5 * (sxx + syy);
        let diff = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
        let (big, small) = (mean + diff, (mean - diff).max(0.0));
        let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let major = Vec2::new(angle.cos(), angle.sin());
        let minor = Vec2::new(-major.y, major.x);
        (major, minor, big, small)
    }

    /// True when the anchors lie on one line in plan view.
    pub fn is_collinear(&self) -> bool {
        let (_, _, big, small) = self.layout_axes();
        small <= 1e-12 * big || big == 0.0
    }

    fn guard(&self, mut p: Vec2) -> Vec2 {
        if self
            .anchors
            .iter()
            .any(|a| self.point(p).distance(*a) < AP_GUARD_M)
        {
            p.x += AP_NUDGE_M;
        }
        p
    }

    /// Damped Gauss-Newton from `start`. Every accepted step strictly
    /// lowers the objective; when `trace` is given it receives the
    /// objective after each accepted step, starting with the initial one.
    pub fn solve_from(
        &self,
        start: Vec2,
        cfg: &SolverConfig,
        mut trace: Option<&mut Vec<f64>>,
    ) -> LocalSolve {
        let mut p = self.guard(start);
        let mut r = self.residuals(p);
        let mut f: f64 = r.iter().map(|x| x * x).sum();
        let mut lambda = cfg.initial_damping;
        let mut iterations = 0;
        if let Some(t) = trace.as_deref_mut() {
            t.push(f);
        }

        // (gradient norm, stopped on a tolerance rather than a limit)
        let (gradient_norm, converged) = loop {
            let jac = self.jacobian(p);
            let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
            let (mut gx, mut gy) = (0.0, 0.0);
            for (row, ri) in jac.iter().zip(&r) {
                a += row[0] * row[0];
                b += row[0] * row[1];
                d += row[1] * row[1];
                gx += row[0] * ri;
                gy += row[1] * ri;
            }
            let g_norm = gx.hypot(gy);
            if g_norm <= cfg.gradient_tolerance {
                break (g_norm, true);
            }
            if iterations >= cfg.max_iterations {
                break (g_norm, false);
            }
            iterations += 1;

            // Marquardt scaling with a floor so flat directions still damp
            let floor = 1e-9 * (a + d).max(1e-300);
            let (da, dd) = (a.max(floor), d.max(floor));
            let (m11, m22) = (a + lambda * da, d + lambda * dd);
            let det = m11 * m22 - b * b;
            if !(det.is_finite() && det > 0.0) {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    break (g_norm, false);
                }
                continue;
            }
            let step = Vec2::new((-gx * m22 + gy * b) / det, (-gy * m11 + gx * b) / det);
            if step.norm() <= cfg.step_tolerance {
                break (g_norm, true);
            }
            let candidate = self.guard(p + step);
            let r_new = self.residuals(candidate);
            let f_new: f64 = r_new.iter().map(|x| x * x).sum();
            if f_new < f {
                p = candidate;
                r = r_new;
                f = f_new;
                lambda = (lambda * 0.1).max(MIN_DAMPING);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(f);
                }
            } else {
                lambda *= 10.0;
                if lambda > MAX_DAMPING {
                    break (g_norm, false);
                }
            }
        };

        LocalSolve {
            p,
            objective: f,
            gradient_norm,
            iterations,
            converged,
        }
    }

    /// Solves from the configured initial point(s). `bounds` is required
    /// for multistart.
    pub fn solve(&self, cfg: &SolverConfig, bounds: Option<&Bounds>) -> Result<EstimateResult> {
        cfg.validate()?;
        if self.anchors.len() < MIN_MEASUREMENTS {
            return Err(Error::InsufficientMeasurements {
                have: self.anchors.len(),
                need: MIN_MEASUREMENTS,
            });
        }
        let collinear = self.is_collinear();
        let starts: Vec<Vec2> = match cfg.init {
            InitMode::Fixed(p) => vec![p.xy()],
            InitMode::Centroid => {
                // thin anchor layouts have a mirror-image basin on the far
                // side of the principal axis, so start once on each side
                // (a start on an exactly collinear axis never leaves it)
                let (_, minor, big, _) = self.layout_axes();
                let c = self.centroid();
                let off = big.sqrt().max(1.0);
                let sides = [c + minor * off, c - minor * off];
                if collinear {
                    sides.to_vec()
                } else {
                    vec![c, sides[0], sides[1]]
                }
            }
            InitMode::Multistart { spacing_m } => {
                let b = bounds.ok_or_else(|| {
                    Error::InvalidConfig("multistart init needs scene bounds".into())
                })?;
                let nx = (b.width() / spacing_m).floor() as usize;
                let ny = (b.height() / spacing_m).floor() as usize;
                let mut v = vec![self.centroid()];
                for i in 0..=nx {
                    for j in 0..=ny {
                        v.push(Vec2::new(
                            b.min.x + i as f64 * spacing_m,
                            b.min.y + j as f64 * spacing_m,
                        ));
                    }
                }
                v
            }
        };
        // a fix outside the scene cannot be the UE, so in-bounds solutions
        // win over lower objectives outside (this settles mirror images)
        let inside = |s: &LocalSolve| bounds.is_none_or(|b| b.contains(s.p));
        let best = starts
            .iter()
            .map(|&s| self.solve_from(s, cfg, None))
            .reduce(|best, s| {
                let better = match (inside(&s), inside(&best)) {
                    (true, false) => true,
                    (false, true) => false,
                    _ => s.objective < best.objective,
                };
                if better {
                    s
                } else {
                    best
                }
            })
            .expect("at least one start");
        Ok(EstimateResult {
            p_hat: self.point(best.p),
            objective: best.objective,
            gradient_norm: best.gradient_norm,
            iterations: best.iterations,
            converged: best.converged,
            collinear,
            position_error: None,
        })
    }
}

/// Estimates the UE position from a selected measurement set.
pub fn estimate_position(
    sel: &SelectedSet,
    scene: &Scene,
    cfg: &SolverConfig,
) -> Result<EstimateResult> {
    if sel.members.len() < MIN_MEASUREMENTS {
        return Err(Error::InsufficientMeasurements {
            have: sel.members.len(),
            need: MIN_MEASUREMENTS,
        });
    }
    let anchors = sel
        .members
        .iter()
        .map(|&(id, toa)| {
            scene
                .ap_position(id)
                .map(|p| (p, toa))
                .ok_or_else(|| Error::InvalidInput(format!("AP {id} not in scene")))
        })
        .collect::<Result<Vec<_>>>()?;
    RangeProblem::new(&anchors, scene.default_ue_height()).solve(cfg, Some(scene.bounds()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(aps: &[Point3], ue: Point3) -> RangeProblem {
        let anchors: Vec<(Point3, f64)> = aps
            .iter()
            .map(|&a| (a, ue.distance(a) / SPEED_OF_LIGHT))
            .collect();
        RangeProblem::new(&anchors, ue.z)
    }

    #[test]
    fn residual_examples() {
        let ap = Point3::new(1.0, 2.0, 3.0);
        assert!(residual(ap, ap, f64::MIN_POSITIVE).abs() < 1e-12);
        let p = Point3::new(4.0, 2.0, 3.0);
        assert!(residual(p, ap, 3.0 / SPEED_OF_LIGHT).abs() < 1e-15);
        assert!((residual(p, ap, 4.0 / SPEED_OF_LIGHT) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn position_error_examples() {
        let a = Point3::new(0.0, 0.0, 1.0);
        let b = Point3::new(3.0, 4.0, 1.0);
        assert_eq!(position_error(a, a), 0.0);
        assert_eq!(position_error(a, b), 5.0);
        assert_eq!(position_error(b, a), position_error(a, b));
    }

    #[test]
    fn three_ap_fix() {
        let aps = [
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(4.0, 0.0, 3.0),
            Point3::new(0.0, 4.0, 3.0),
        ];
        let ue = Point3::new(1.0, 1.0, 1.0);
        let res = exact(&aps, ue)
            .solve(&SolverConfig::default(), None)
            .unwrap();
        assert!(res.converged);
        assert!(!res.collinear);
        assert!(res.p_hat.distance(ue) < 1e-6, "{res:?}");
    }

    #[test]
    fn collinear_anchors_are_flagged() {
        let aps = [
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(4.0, 0.0, 3.0),
            Point3::new(8.0, 0.0, 3.0),
        ];
        let ue = Point3::new(3.0, 2.0, 1.0);
        let res = exact(&aps, ue)
            .solve(&SolverConfig::default(), None)
            .unwrap();
        assert!(res.collinear);
        assert!(res.converged);
        assert!(res.objective < 1e-12);
        // either the true point or its mirror across y = 0
        let mirror = Point3::new(3.0, -2.0, 1.0);
        assert!(res.p_hat.distance(ue) < 1e-6 || res.p_hat.distance(mirror) < 1e-6);
    }

    #[test]
    fn too_few_anchors() {
        let p = RangeProblem::new(
            &[
                (Point3::new(0.0, 0.0, 0.0), 1e-8),
                (Point3::new(1.0, 0.0, 0.0), 1e-8),
            ],
            0.0,
        );
        assert!(matches!(
            p.solve(&SolverConfig::default(), None),
            Err(Error::InsufficientMeasurements { have: 2, .. })
        ));
    }

    #[test]
    fn accepted_steps_never_raise_the_objective() {
        let aps = [
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(9.0, 1.0, 3.0),
            Point3::new(2.0, 8.0, 3.0),
            Point3::new(7.0, 7.0, 3.0),
        ];
        // inconsistent ranges, as under NLoS
        let anchors: Vec<(Point3, f64)> = aps
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, (5.0 + 1.7 * i as f64) / SPEED_OF_LIGHT))
            .collect();
        let prob = RangeProblem::new(&anchors, 1.0);
        let mut trace = Vec::new();
        let out = prob.solve_from(
            Vec2::new(-3.0, 12.0),
            &SolverConfig::default(),
            Some(&mut trace),
        );
        assert!(trace.len() > 1);
        assert!(trace.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(*trace.last().unwrap(), out.objective);
        assert!(out.converged);
        assert!(out.iterations < SolverConfig::default().max_iterations);
    }

    #[test]
    fn guard_nudges_off_an_ap() {
        let aps = [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(4.0, 0.0, 1.0),
            Point3::new(0.0, 4.0, 1.0),
        ];
        let prob = exact(&aps, Point3::new(1.0, 1.0, 1.0));
        let out = prob.solve_from(Vec2::new(0.0, 0.0), &SolverConfig::default(), None);
        assert!(out.p.x.is_finite() && out.p.y.is_finite());
        assert!(out.p.distance(Vec2::new(1.0, 1.0)) < 1e-6);
    }

    #[test]
    fn multistart_needs_bounds() {
        let aps = [
            Point3::new(0.0, 0.0, 3.0),
            Point3::new(4.0, 0.0, 3.0),
            Point3::new(0.0, 4.0, 3.0),
        ];
        let cfg = SolverConfig {
            init: InitMode::Multistart { spacing_m: 1.0 },
            ..Default::default()
        };
        let prob = exact(&aps, Point3::new(1.0, 1.0, 1.0));
        assert!(prob.solve(&cfg, None).is_err());
        let b = Bounds {
            min: Vec2::new(0.0, 0.0),
            max: Vec2::new(4.0, 4.0),
        };
        let res = prob.solve(&cfg, Some(&b)).unwrap();
        assert!(res.p_hat.distance(Point3::new(1.0, 1.0, 1.0)) < 1e-6);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SolverConfig {
            gradient_tolerance: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
