//! Deterministic reduced-order locomotion evaluator.
//!
//! Each joint is a 1-DOF driven spring-damper with torque and velocity
//! saturation acting on a lumped effective inertia. The body translates
//! only: each step it moves opposite to the mean forward displacement of
//! the feet currently on the ground. A run ends early when two non-adjacent
//! parts come into contact.

use std::io::{self, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::gait::{phase_group, GaitSpec};
use crate::genome::{ControllerGenome, LINKS_PER_LEG};
use crate::phenotype::{LegInstance, RobotModel};

/// Smallest effective inertia a joint may see, kg·m².
pub const MIN_EFFECTIVE_INERTIA: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    /// m/s²
    pub gravity: f64,
    /// Feet this close to the lowest foot count as stance, m.
    pub stance_epsilon: f64,
    #[serde(default)]
    pub record_trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { duration: 5.0, dt: 1.0 / 30.0, gravity: 9.81, stance_epsilon: 0.01, record_trace: false }
    }
}

impl SimConfig {
    pub fn is_valid(&self) -> bool {
        self.dt > 0.0 && self.duration >= self.dt && self.gravity > 0.0 && self.stance_epsilon >= 0.0
    }

    pub fn total_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    None,
    SelfIntersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    /// Leg-major, three joints per leg.
    pub angles: Vec<f64>,
    pub velocities: Vec<f64>,
    pub torques: Vec<f64>,
    pub powers: Vec<f64>,
    pub stance: Vec<bool>,
    pub distance: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Forward distance, m.
    pub distance: f64,
    /// Mechanical energy, J.
    pub energy: f64,
    /// Nominal trial length, s.
    pub duration: f64,
    /// Simulated time before termination, s.
    pub duration_run: f64,
    pub terminated: Termination,
    /// Body top height with joints at their t = 0 targets, m.
    pub standing_height: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trace: Option<Vec<TraceRow>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    pub angle: f64,
    pub velocity: f64,
}

/// One semi-implicit Euler step of a saturated spring-damper joint.
///
/// Returns the new state, the applied torque and the absolute mechanical
/// power `|torque * new_velocity|`.
#[allow(clippy::too_many_arguments)]
pub fn step_joint(
    s: JointState,
    target: f64,
    stiffness: f64,
    damping: f64,
    max_torque: f64,
    max_ang_vel: f64,
    inertia: f64,
    dt: f64,
) -> (JointState, f64, f64) {
    let torque = (stiffness * (target - s.angle) - damping * s.velocity).clamp(-max_torque, max_torque);
    let velocity = (s.velocity + torque / inertia * dt).clamp(-max_ang_vel, max_ang_vel);
    let angle = s.angle + velocity * dt;
    (JointState { angle, velocity }, torque, (torque * velocity).abs())
}

/// Lumped inertia seen by the joint that drives `link`, with the leg straight.
///
/// Each link from `link` outward contributes its mass as a point at its tip;
/// the driven link adds its own rod term.
pub fn effective_inertia(leg: &LegInstance, link: usize) -> f64 {
    let mut reach = 0.0;
    let mut inertia = 0.0;
    for l in &leg.links[link..] {
        reach += l.length;
        inertia += l.link_mass * reach * reach;
    }
    let own = &leg.links[link];
    inertia += own.link_mass * own.length * own.length / 3.0;
    inertia.max(MIN_EFFECTIVE_INERTIA)
}

/// `E / (m g d)`; infinite when the robot made no forward progress.
pub fn cost_of_transport(res: &SimResult, mass: f64, gravity: f64) -> f64 {
    if res.distance <= 0.0 {
        return f64::INFINITY;
    }
    res.energy / (mass * gravity * res.distance)
}

/// Reciprocal cost of transport; zero when no progress was made.
pub fn fitness(res: &SimResult, mass: f64, gravity: f64) -> f64 {
    let cot = cost_of_transport(res, mass, gravity);
    if cot.is_infinite() {
        0.0
    } else {
        1.0 / cot
    }
}

/// A locomotion evaluator. The reduced-order model is the built-in backend;
/// a rigid-body engine can be plugged in behind the same call.
pub trait LocomotionBackend: Sync {
    fn simulate(&self, model: &RobotModel, controller: &ControllerGenome, cfg: &SimConfig) -> SimResult;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ReducedOrder;

impl LocomotionBackend for ReducedOrder {
    fn simulate(&self, model: &RobotModel, controller: &ControllerGenome, cfg: &SimConfig) -> SimResult {
        simulate(model, controller, cfg)
    }
}

pub fn simulate(model: &RobotModel, controller: &ControllerGenome, cfg: &SimConfig) -> SimResult {
    let mut rollout = Rollout::new(model, controller, cfg);
    rollout.advance(cfg.total_steps());
    rollout.finish()
}

#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: Vector3<f64>,
    b: Vector3<f64>,
    radius: f64,
}

impl Capsule {
    fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let r = Vector3::repeat(self.radius);
        (self.a.inf(&self.b) - r, self.a.sup(&self.b) + r)
    }
}

/// Closest distance between segments `p1q1` and `p2q2`.
pub fn segment_distance(p1: Vector3<f64>, q1: Vector3<f64>, p2: Vector3<f64>, q2: Vector3<f64>) -> f64 {
    const EPS: f64 = 1e-12;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (s, t);
    if a <= EPS && e <= EPS {
        return r.norm();
    }
    if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > EPS { ((b * f - c * e) / denom).clamp(0.0, 1.0) } else { 0.0 };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

/// Whether segment `pq` passes through the centred box with the given
/// half-extents grown by `margin`.
pub fn segment_hits_box(p: Vector3<f64>, q: Vector3<f64>, half: &[f64; 3], margin: f64) -> bool {
    let d = q - p;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..3 {
        let h = half[axis] + margin;
        if d[axis].abs() < 1e-15 {
            if p[axis] < -h || p[axis] > h {
                return false;
            }
            continue;
        }
        let inv = 1.0 / d[axis];
        let (mut lo, mut hi) = ((-h - p[axis]) * inv, (h - p[axis]) * inv);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Stepwise rollout; [`simulate`] runs one to completion. Advancing in
/// several chunks gives the same result as one call.
pub struct Rollout<'a> {
    model: &'a RobotModel,
    cfg: SimConfig,
    gait: GaitSpec,
    groups: Vec<f64>,
    inertia: Vec<[f64; LINKS_PER_LEG]>,
    joints: Vec<[JointState; LINKS_PER_LEG]>,
    feet: Vec<Vector3<f64>>,
    pairs: Vec<(usize, usize)>,
    step: usize,
    distance: f64,
    energy: f64,
    terminated: Termination,
    standing_height: f64,
    trace: Option<Vec<TraceRow>>,
}

impl<'a> Rollout<'a> {
    pub fn new(model: &'a RobotModel, controller: &ControllerGenome, cfg: &SimConfig) -> Self {
        let gait = GaitSpec::new(controller);
        let groups: Vec<f64> = model
            .legs
            .iter()
            .map(|l| phase_group(l.side.index(), l.index_along_body, model.legs_per_side))
            .collect();
        let inertia = model.legs.iter().map(|l| std::array::from_fn(|i| effective_inertia(l, i))).collect();
        let joints: Vec<[JointState; LINKS_PER_LEG]> = model
            .legs
            .iter()
            .zip(&groups)
            .map(|(leg, &g)| {
                std::array::from_fn(|i| JointState {
                    angle: gait.joint_target(i, g, 0.0, leg.links[i].joint.max_ang_vel),
                    velocity: 0.0,
                })
            })
            .collect();

        let mut pairs = Vec::new();
        let segs = model.legs.len() * LINKS_PER_LEG;
        for a in 0..segs {
            for b in (a + 1)..segs {
                let same_leg = a / LINKS_PER_LEG == b / LINKS_PER_LEG;
                if same_leg && b - a == 1 {
                    continue;
                }
                pairs.push((a, b));
            }
        }

        let mut r = Self {
            model,
            cfg: *cfg,
            gait,
            groups,
            inertia,
            feet: Vec::new(),
            joints,
            pairs,
            step: 0,
            distance: 0.0,
            energy: 0.0,
            terminated: Termination::None,
            standing_height: model.standing_height(controller),
            trace: cfg.record_trace.then(Vec::new),
        };
        let points = r.all_points();
        if r.intersects(&points) {
            r.terminated = Termination::SelfIntersection;
        }
        r.feet = points.iter().map(|p| p[LINKS_PER_LEG]).collect();
        r
    }

    fn all_points(&self) -> Vec<[Vector3<f64>; LINKS_PER_LEG + 1]> {
        self.model
            .legs
            .iter()
            .zip(&self.joints)
            .map(|(leg, js)| leg.joint_points(&js.map(|j| j.angle)))
            .collect()
    }

    fn intersects(&self, points: &[[Vector3<f64>; LINKS_PER_LEG + 1]]) -> bool {
        let capsules: Vec<Capsule> = self
            .model
            .legs
            .iter()
            .zip(points)
            .flat_map(|(leg, p)| {
                (0..LINKS_PER_LEG).map(move |i| Capsule { a: p[i], b: p[i + 1], radius: 0.5 * leg.links[i].width })
            })
            .collect();

        // Link 0 is adjacent to the body; the others must stay clear of it.
        let half = &self.model.body.half_extents;
        for (k, c) in capsules.iter().enumerate() {
            if k % LINKS_PER_LEG != 0 && segment_hits_box(c.a, c.b, half, c.radius) {
                return true;
            }
        }

        let bounds: Vec<_> = capsules.iter().map(Capsule::bounds).collect();
        self.pairs.iter().any(|&(i, j)| {
            let (lo_i, hi_i) = &bounds[i];
            let (lo_j, hi_j) = &bounds[j];
            let overlap = (0..3).all(|k| lo_i[k] <= hi_j[k] && lo_j[k] <= hi_i[k]);
            overlap && {
                let (a, b) = (&capsules[i], &capsules[j]);
                segment_distance(a.a, a.b, b.a, b.b) < a.radius + b.radius
            }
        })
    }

    pub fn is_done(&self) -> bool {
        self.terminated != Termination::None || self.step >= self.cfg.total_steps()
    }

    /// Advances up to `steps` control steps, stopping early at the end of the
    /// trial or on self-intersection.
    pub fn advance(&mut self, steps: usize) {
        for _ in 0..steps {
            if self.is_done() {
                return;
            }
            self.advance_one();
        }
    }

    fn advance_one(&mut self) {
        let dt = self.cfg.dt;
        let t = (self.step + 1) as f64 * dt;
        let n_joints = self.joints.len() * LINKS_PER_LEG;
        let mut next = self.joints.clone();
        let mut torques = Vec::with_capacity(n_joints);
        let mut powers = Vec::with_capacity(n_joints);

        for (li, leg) in self.model.legs.iter().enumerate() {
            for i in 0..LINKS_PER_LEG {
                let jp = &leg.links[i].joint;
                let target = self.gait.joint_target(i, self.groups[li], t, jp.max_ang_vel);
                let (s, tau, p) = step_joint(
                    self.joints[li][i],
                    target,
                    jp.strength,
                    jp.damping,
                    jp.max_torque,
                    jp.max_ang_vel,
                    self.inertia[li][i],
                    dt,
                );
                next[li][i] = s;
                torques.push(tau);
                powers.push(p);
            }
        }

        let previous = std::mem::replace(&mut self.joints, next);
        let points = self.all_points();
        if self.intersects(&points) {
            // The colliding pose is not committed.
            self.joints = previous;
            self.terminated = Termination::SelfIntersection;
            return;
        }

        let feet: Vec<Vector3<f64>> = points.iter().map(|p| p[LINKS_PER_LEG]).collect();
        let lowest = feet.iter().map(|f| f.y).fold(f64::INFINITY, f64::min);
        let stance: Vec<bool> = feet.iter().map(|f| f.y <= lowest + self.cfg.stance_epsilon).collect();
        let (sum, count) = feet
            .iter()
            .zip(&self.feet)
            .zip(&stance)
            .filter(|(_, &s)| s)
            .fold((0.0, 0usize), |(sum, n), ((new, old), _)| (sum + (new.x - old.x), n + 1));
        if count > 0 {
            self.distance -= sum / count as f64;
        }
        self.energy += powers.iter().sum::<f64>() * dt;
        self.feet = feet;
        self.step += 1;

        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow {
                t,
                angles: self.joints.iter().flat_map(|js| js.iter().map(|j| j.angle)).collect(),
                velocities: self.joints.iter().flat_map(|js| js.iter().map(|j| j.velocity)).collect(),
                torques,
                powers,
                stance,
                distance: self.distance,
                energy: self.energy,
            });
        }
    }

    pub fn finish(self) -> SimResult {
        SimResult {
            distance: self.distance,
            energy: self.energy,
            duration: self.cfg.duration,
            duration_run: self.step as f64 * self.cfg.dt,
            terminated: self.terminated,
            standing_height: self.standing_height,
            trace: self.trace,
        }
    }
}

/// Writes a per-step trace as CSV: time, then per joint angle, velocity,
/// torque and power, then the stance mask, then cumulative distance and energy.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], legs: usize, out: &mut W) -> io::Result<()> {
    let mut header = vec!["t".to_string()];
    for kind in ["angle", "velocity", "torque", "power"] {
        for l in 0..legs {
            for j in 0..LINKS_PER_LEG {
                header.push(format!("{kind}_{l}_{j}"));
            }
        }
    }
    header.extend((0..legs).map(|l| format!("stance_{l}")));
    header.push("distance".into());
    header.push("energy".into());
    writeln!(out, "{}", header.join(","))?;
    for row in trace {
        let mut cells = vec![format!("{:?}", row.t)];
        for series in [&row.angles, &row.velocities, &row.torques, &row.powers] {
            cells.extend(series.iter().map(|v| format!("{v:?}")));
        }
        cells.extend(row.stance.iter().map(|&s| if s { "1".to_string() } else { "0".to_string() }));
        cells.push(format!("{:?}", row.distance));
        cells.push(format!("{:?}", row.energy));
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{default_controller, MorphologyGenome};
    use crate::phenotype::{expand, JointParams, LinkInstance, PhenotypeConfig, Side};
    use crate::seeding::rng_from_seed;

    #[test]
    fn joint_at_rest_stays_put() {
        let s = JointState { angle: 0.4, velocity: 0.0 };
        let (n, tau, p) = step_joint(s, 0.4, 3000.0, 10.0, 100.0, 1.0, 0.5, 1.0 / 30.0);
        assert_eq!(n, s);
        assert_eq!(tau, 0.0);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn joint_torque_saturates() {
        let s = JointState::default();
        let (_, tau, _) = step_joint(s, 1.0, 6000.0, 1.0, 50.0, 1.0, 1.0, 0.01);
        assert_eq!(tau, 50.0);
        let (n, tau, p) = step_joint(s, 0.1, 2000.0, 10.0, 200.0, 1.5, 1.0, 1.0 / 30.0);
        assert_eq!(tau, 200.0);
        assert_eq!(n.velocity, 1.5);
        assert_eq!(n.angle, 1.5 / 30.0);
        assert_eq!(p, 300.0);
    }

    fn leg(masses: [f64; 3], lengths: [f64; 3]) -> LegInstance {
        let joint = JointParams { strength: 1.0, damping: 1.0, max_torque: 1.0, max_ang_vel: 1.0 };
        LegInstance {
            side: Side::Left,
            index_along_body: 0,
            attach_position: [0.0; 3],
            attach_pitch: 0.0,
            links: std::array::from_fn(|i| LinkInstance {
                length: lengths[i],
                width: 0.05,
                link_mass: masses[i],
                hinge_axis: [1.0, 0.0, 0.0],
                joint,
            }),
        }
    }

    #[test]
    fn inertia_cases() {
        assert_eq!(effective_inertia(&leg([0.0; 3], [1.0; 3]), 2), MIN_EFFECTIVE_INERTIA);
        let l = leg([0.0, 0.0, 1.0], [0.5, 0.5, 1.0]);
        assert!((effective_inertia(&l, 2) - (1.0 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn inertia_matches_point_mass_enumeration() {
        let masses = [1.3, 0.7, 0.45];
        let lengths = [0.8, 0.9, 0.6];
        let l = leg(masses, lengths);
        for k in 0..3 {
            // Tip positions along a straight leg measured from joint k.
            let mut brute = masses[k] * lengths[k].powi(2) / 3.0;
            for j in k..3 {
                let r: f64 = lengths[k..=j].iter().sum();
                brute += masses[j] * r.powi(2);
            }
            assert!((effective_inertia(&l, k) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn cot_and_fitness() {
        let mut r = SimResult {
            distance: 5.0,
            energy: 2943.0,
            duration: 5.0,
            duration_run: 5.0,
            terminated: Termination::None,
            standing_height: 2.0,
            trace: None,
        };
        assert!((cost_of_transport(&r, 60.0, 9.81) - 1.0).abs() < 1e-12);
        assert!((fitness(&r, 60.0, 9.81) - 1.0).abs() < 1e-12);
        r.energy = 0.0;
        assert_eq!(cost_of_transport(&r, 60.0, 9.81), 0.0);
        r.distance = 0.0;
        assert!(cost_of_transport(&r, 60.0, 9.81).is_infinite());
        assert_eq!(fitness(&r, 60.0, 9.81), 0.0);
        r.distance = 1.0;
        r.energy = 0.0052 * 60.0 * 9.81;
        assert!((fitness(&r, 60.0, 9.81) - 192.307_692).abs() < 1e-4);
    }

    #[test]
    fn segment_distance_cases() {
        let v = |x, y, z| Vector3::new(x, y, z);
        assert!((segment_distance(v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.), v(1., 1., 0.)) - 1.0).abs() < 1e-12);
        assert!(segment_distance(v(-1., 0., 0.), v(1., 0., 0.), v(0., -1., 0.), v(0., 1., 0.)) < 1e-12);
        assert!((segment_distance(v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.), v(3., 0., 0.)) - 1.0).abs() < 1e-12);
        assert!((segment_distance(v(0., 0., 0.), v(0., 0., 0.), v(0., 0., 2.), v(0., 0., 2.)) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn segment_distance_matches_sampling() {
        let mut rng = rng_from_seed(8);
        use rand::Rng;
        for _ in 0..200 {
            let mut p = || Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let (a, b, c, d) = (p(), p(), p(), p());
            let exact = segment_distance(a, b, c, d);
            let mut brute = f64::INFINITY;
            let n = 200;
            for i in 0..=n {
                for j in 0..=n {
                    let s = i as f64 / n as f64;
                    let t = j as f64 / n as f64;
                    brute = brute.min(((a + (b - a) * s) - (c + (d - c) * t)).norm());
                }
            }
            assert!(exact <= brute + 1e-12);
            assert!(brute - exact < 0.02);
        }
    }

    #[test]
    fn box_hits() {
        let v = |x, y, z| Vector3::new(x, y, z);
        let half = [1.0, 0.1, 0.2];
        assert!(segment_hits_box(v(0., -1., 0.), v(0., 1., 0.), &half, 0.0));
        assert!(!segment_hits_box(v(0., -1., 0.5), v(0., 1., 0.5), &half, 0.0));
        assert!(segment_hits_box(v(0., -1., 0.25), v(0., 1., 0.25), &half, 0.06));
        assert!(!segment_hits_box(v(2., 0., 0.), v(3., 0., 0.), &half, 0.5));
    }

    fn robot(seed: u64) -> RobotModel {
        expand(&MorphologyGenome::random(&mut rng_from_seed(seed)), &PhenotypeConfig::default())
    }

    #[test]
    fn zero_velocity_limit_means_no_motion() {
        let mut g = MorphologyGenome::random(&mut rng_from_seed(3));
        for l in g.links.iter_mut() {
            l.max_ang_vel = 0.0;
        }
        let m = expand(&g, &PhenotypeConfig::default());
        let r = simulate(&m, &default_controller(), &SimConfig::default());
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn deterministic_and_bounded() {
        let cfg = SimConfig { record_trace: true, ..Default::default() };
        for seed in 0..20 {
            let m = robot(seed);
            let c = ControllerGenome::random(&mut rng_from_seed(seed + 100));
            let a = simulate(&m, &c, &cfg);
            assert_eq!(a, simulate(&m, &c, &cfg));
            assert!(a.energy >= 0.0);
            assert!(a.duration_run <= a.duration);
            if a.terminated == Termination::SelfIntersection {
                assert!(a.duration_run < a.duration);
            }
            let trace = a.trace.as_ref().unwrap();
            for row in trace {
                for (k, (&v, &tau)) in row.velocities.iter().zip(&row.torques).enumerate() {
                    let jp = m.legs[k / 3].links[k % 3].joint;
                    assert!(v.abs() <= jp.max_ang_vel);
                    assert!(tau.abs() <= jp.max_torque);
                }
            }
            let replay: f64 = trace.iter().map(|r| r.powers.iter().sum::<f64>() * cfg.dt).sum();
            assert!((replay - a.energy).abs() <= 1e-9 * a.energy.max(1.0));
        }
    }

    #[test]
    fn split_rollout_matches_single() {
        let cfg = SimConfig::default();
        for seed in 0..10 {
            let m = robot(seed);
            let c = ControllerGenome::random(&mut rng_from_seed(seed + 7));
            let whole = simulate(&m, &c, &cfg);
            let mut r = Rollout::new(&m, &c, &cfg);
            r.advance(cfg.total_steps() / 2);
            r.advance(cfg.total_steps());
            let split = r.finish();
            assert!((whole.energy - split.energy).abs() <= 1e-9 * whole.energy.max(1.0));
            assert!((whole.distance - split.distance).abs() <= 1e-9);
        }
    }

    #[test]
    fn intersecting_start_pose_terminates_immediately() {
        let mut g = MorphologyGenome::random(&mut rng_from_seed(5));
        // Two legs per side stacked on the same attach point.
        g.legs_per_side = 2;
        g.quad_attach_linear = [0.7, 0.0];
        g.quad_attach_quadratic = [0.0, 0.0];
        let mut m = expand(&g, &PhenotypeConfig::default());
        m.legs[1].attach_position = m.legs[0].attach_position;
        let r = simulate(&m, &default_controller(), &SimConfig::default());
        assert_eq!(r.terminated, Termination::SelfIntersection);
        assert_eq!(r.duration_run, 0.0);
        assert_eq!(r.distance, 0.0);
    }

    #[test]
    fn trace_csv_has_one_row_per_step() {
        let cfg = SimConfig { record_trace: true, ..Default::default() };
        let m = robot(1);
        let r = simulate(&m, &default_controller(), &cfg);
        let mut buf = Vec::new();
        write_trace_csv(r.trace.as_ref().unwrap(), m.legs.len(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), r.trace.as_ref().unwrap().len() + 1);
        assert!(text.starts_with("t,angle_0_0"));
    }
}
