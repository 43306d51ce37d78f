//! Genome expansion into a bilateral robot model, the empirical mass model,
//! MAP-Elites features and design-brief constraint checks.
//!
//! Body frame axes are (forward, up, right). Legs are built on the left side
//! (outward is -right) and mirrored onto the right side by negating the
//! right-axis component of every point.

use nalgebra::{Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::gait;
use crate::genome::{ControllerGenome, MorphologyGenome, LINKS_PER_LEG};
use crate::simulator::SimResult;

/// Physical constants of the mass model and leg geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeConfig {
    /// Batteries and avionics carried by the body, kg.
    pub body_payload: f64,
    /// kg/m³
    pub body_density: f64,
    /// Carbon fibre, kg/m³
    pub tube_density: f64,
    /// Linkage and housing mass at each link tip, kg.
    pub mechanism_mass: f64,
    /// Motor power-to-squared-mass ratio, W/kg².
    pub motor_power_per_mass_sq: f64,
    /// Tube length per unit of the link's longest cuboid extent.
    pub link_length_gain: f64,
    /// Lower bound of the per-leg joint strength factor.
    pub strength_factor_floor: f64,
}

impl Default for PhenotypeConfig {
    fn default() -> Self {
        Self {
            body_payload: 7.5,
            body_density: 170.0,
            tube_density: 1600.0,
            mechanism_mass: 0.2,
            motor_power_per_mass_sq: 13000.0,
            link_length_gain: 5.0,
            strength_factor_floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// 0 for left, 1 for right.
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    fn mirror(self, p: Vector3<f64>) -> Vector3<f64> {
        match self {
            Side::Left => p,
            Side::Right => Vector3::new(p.x, p.y, -p.z),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointParams {
    pub strength: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub max_ang_vel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkInstance {
    /// Tube length after the per-leg length factor, m.
    pub length: f64,
    /// Outer side of the square tube after the per-leg width factor, m.
    pub width: f64,
    pub link_mass: f64,
    /// Unit hinge axis in the parent link frame (left-side convention).
    pub hinge_axis: [f64; 3],
    pub joint: JointParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegInstance {
    pub side: Side,
    pub index_along_body: usize,
    /// Body frame, m.
    pub attach_position: [f64; 3],
    pub attach_pitch: f64,
    pub links: [LinkInstance; LINKS_PER_LEG],
}

impl LegInstance {
    /// Joint points from the attach point to the foot for the given joint
    /// angles: `[attach, knee0, knee1, foot]` in the body frame.
    pub fn joint_points(&self, angles: &[f64; LINKS_PER_LEG]) -> [Vector3<f64>; LINKS_PER_LEG + 1] {
        let attach = Vector3::from(self.attach_position);
        // Work in the left-side frame, then mirror.
        let base = self.side.mirror(attach);
        let down = Vector3::new(0.0, -1.0, 0.0);
        let mut frame = Rotation3::from_axis_angle(&Vector3::z_axis(), self.attach_pitch);
        let mut points = [base; LINKS_PER_LEG + 1];
        for (i, link) in self.links.iter().enumerate() {
            let axis = Unit::new_normalize(Vector3::from(link.hinge_axis));
            frame *= Rotation3::from_axis_angle(&axis, angles[i]);
            points[i + 1] = points[i] + frame * down * link.length;
        }
        points.map(|p| self.side.mirror(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    pub half_extents: [f64; 3],
    pub com: [f64; 2],
    pub mass: f64,
}

/// Fully expanded robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub body: BodyModel,
    /// Left legs front to back, then right legs front to back.
    pub legs: Vec<LegInstance>,
    pub legs_per_side: usize,
    pub total_mass: f64,
    /// Template link lengths before the per-leg length factor, m.
    pub template_link_lengths: [f64; LINKS_PER_LEG],
}

impl RobotModel {
    /// Body top height above the lowest leg point with every joint at its
    /// t = 0 gait target.
    pub fn standing_height(&self, controller: &ControllerGenome) -> f64 {
        let spec = gait::GaitSpec::new(controller);
        let lowest = self
            .legs
            .iter()
            .flat_map(|leg| {
                let group = gait::phase_group(leg.side.index(), leg.index_along_body, self.legs_per_side);
                let angles = std::array::from_fn(|i| spec.joint_target(i, group, 0.0, leg.links[i].joint.max_ang_vel));
                leg.joint_points(&angles)
            })
            .map(|p| p.y)
            .fold(f64::INFINITY, f64::min);
        self.body.half_extents[1] - lowest
    }

    /// Every massive part: body first, then each link of each leg.
    pub fn part_masses(&self) -> Vec<f64> {
        std::iter::once(self.body.mass)
            .chain(self.legs.iter().flat_map(|l| l.links.iter().map(|k| k.link_mass)))
            .collect()
    }
}

/// Leg position parameter in [-1, 1] from front to back.
pub fn leg_position(index: usize, legs_per_side: usize) -> f64 {
    if legs_per_side <= 1 {
        return 0.0;
    }
    -1.0 + 2.0 * index as f64 / (legs_per_side - 1) as f64
}

/// Mass of a servo motor with the given peak power.
pub fn motor_mass(max_torque: f64, max_ang_vel: f64) -> f64 {
    motor_mass_with(max_torque, max_ang_vel, PhenotypeConfig::default().motor_power_per_mass_sq)
}

fn motor_mass_with(max_torque: f64, max_ang_vel: f64, power_per_mass_sq: f64) -> f64 {
    (max_torque * max_ang_vel / power_per_mass_sq).max(0.0).sqrt()
}

/// Hollow square carbon tube plus tip mechanism and motor.
pub fn link_mass(length: f64, width: f64, tube_thickness: f64, joint: &JointParams, cfg: &PhenotypeConfig) -> f64 {
    let wall = tube_thickness.clamp(0.0, 0.5 * width);
    let inner = width - 2.0 * wall;
    let tube = cfg.tube_density * length * (width * width - inner * inner);
    tube + cfg.mechanism_mass + motor_mass_with(joint.max_torque, joint.max_ang_vel, cfg.motor_power_per_mass_sq)
}

/// Fixed payload plus uniform-density cuboid.
pub fn body_mass(half_extents: &[f64; 3], payload: f64, density: f64) -> f64 {
    let volume = 8.0 * half_extents[0] * half_extents[1] * half_extents[2];
    payload + density * volume
}

fn sorted_desc(v: [f64; 3]) -> [f64; 3] {
    let mut s = v;
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Expands the symmetric encoding into every leg on both sides.
pub fn expand(g: &MorphologyGenome, cfg: &PhenotypeConfig) -> RobotModel {
    let n = g.legs_per_side as usize;
    let [_, ey, ez] = g.body_extents;
    let body = BodyModel {
        half_extents: g.body_extents,
        com: g.body_com,
        mass: body_mass(&g.body_extents, cfg.body_payload, cfg.body_density),
    };

    let template_link_lengths = g.links.map(|l| 2.0 * sorted_desc(l.extents)[0] * cfg.link_length_gain);
    let template_widths = g.links.map(|l| 2.0 * sorted_desc(l.extents)[1]);

    let mut legs = Vec::with_capacity(2 * n);
    for side in [Side::Left, Side::Right] {
        for k in 0..n {
            let u = leg_position(k, n);
            let u2 = u * u;
            let forward = g.leg_attach_point[0] + g.quad_attach_linear[0] * u + g.quad_attach_quadratic[0] * u2;
            let lateral = g.leg_attach_point[2] + g.quad_attach_linear[1] * u + g.quad_attach_quadratic[1] * u2;
            let up = g.leg_attach_point[1] * ey;
            let length_factor = 1.0 + g.quad_length_mult * u2;
            let width_factor = 1.0 + g.quad_width_mult * u2;
            // The top tube sits against or outboard of the side wall, never
            // inside the body.
            let standoff = lateral.max(0.0) + 0.5 * template_widths[0] * width_factor;
            // Left-side convention; Side::mirror flips the right legs.
            let attach_left = Vector3::new(forward, up, -(ez + standoff));
            let attach = side.mirror(attach_left);
            let strength_factor = (1.0 + g.quad_strength_mult * u2).max(cfg.strength_factor_floor);

            let links = std::array::from_fn(|i| {
                let lg = &g.links[i];
                let joint = JointParams {
                    strength: lg.joint_strength * strength_factor,
                    damping: lg.joint_damping,
                    max_torque: lg.max_torque * strength_factor,
                    max_ang_vel: lg.max_ang_vel,
                };
                let length = template_link_lengths[i] * length_factor;
                let width = template_widths[i] * width_factor;
                let axis = Vector3::from(lg.hinge_axis).normalize();
                LinkInstance {
                    length,
                    width,
                    link_mass: link_mass(length, width, g.tube_thickness, &joint, cfg),
                    hinge_axis: [axis.x, axis.y, axis.z],
                    joint,
                }
            });
            legs.push(LegInstance {
                side,
                index_along_body: k,
                attach_position: [attach.x, attach.y, attach.z],
                attach_pitch: g.leg_attach_pitch,
                links,
            });
        }
    }

    let leg_mass: f64 = legs.iter().flat_map(|l| l.links.iter()).map(|k| k.link_mass).sum();
    RobotModel {
        total_mass: body.mass + leg_mass,
        body,
        legs,
        legs_per_side: n,
        template_link_lengths,
    }
}

/// The six MAP-Elites descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub total_leg_length: f64,
    pub total_mass: f64,
    pub legs_per_side: u32,
    pub tube_thickness: f64,
    pub leg_length_scale: f64,
    pub leg_width_scale: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.total_leg_length,
            self.total_mass,
            f64::from(self.legs_per_side),
            self.tube_thickness,
            self.leg_length_scale,
            self.leg_width_scale,
        ]
    }
}

pub fn features(model: &RobotModel, g: &MorphologyGenome) -> FeatureVector {
    FeatureVector {
        total_leg_length: model.template_link_lengths.iter().sum(),
        total_mass: model.total_mass,
        legs_per_side: g.legs_per_side,
        tube_thickness: g.tube_thickness,
        leg_length_scale: g.quad_length_mult,
        leg_width_scale: g.quad_width_mult,
    }
}

/// Design-brief limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// kg, inclusive.
    pub max_mass: f64,
    /// m/s, strict.
    pub min_speed: f64,
    /// m, inclusive.
    pub min_height: f64,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self { max_mass: 60.0, min_speed: 1.0, min_height: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Mass,
    Speed,
    Height,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub mass_ok: bool,
    pub speed_ok: bool,
    pub height_ok: bool,
    pub mass: f64,
    pub speed: f64,
    pub height: f64,
}

impl ConstraintReport {
    pub fn passed(&self) -> bool {
        self.mass_ok && self.speed_ok && self.height_ok
    }

    pub fn failures(&self) -> Vec<Constraint> {
        let mut out = Vec::new();
        if !self.mass_ok {
            out.push(Constraint::Mass);
        }
        if !self.speed_ok {
            out.push(Constraint::Speed);
        }
        if !self.height_ok {
            out.push(Constraint::Height);
        }
        out
    }
}

pub fn check_constraints(model: &RobotModel, sim: &SimResult, cfg: &ConstraintConfig) -> ConstraintReport {
    let speed = if sim.duration > 0.0 { sim.distance / sim.duration } else { 0.0 };
    ConstraintReport {
        mass_ok: model.total_mass <= cfg.max_mass,
        speed_ok: speed > cfg.min_speed,
        height_ok: sim.standing_height >= cfg.min_height,
        mass: model.total_mass,
        speed,
        height: sim.standing_height,
    }
}
