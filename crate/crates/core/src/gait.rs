//! Constrained sinusoidal joint targets and generalized tripod phase groups.

use std::f64::consts::PI;

use crate::genome::{ControllerGenome, LINKS_PER_LEG};

/// Phase shift of a leg's gait group: legs alternate along each side and the
/// two sides are in anti-phase, which gives the tripod pattern on a hexapod.
pub fn phase_group(side: usize, leg_index: usize, _legs_per_side: usize) -> f64 {
    if (leg_index + side).is_multiple_of(2) {
        0.0
    } else {
        PI
    }
}

/// Controller view used by the simulator. Amplitudes are never stored: they
/// follow from each joint's velocity limit and the stride frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSpec {
    pub stride_freq: f64,
    pub vert_offset: [f64; LINKS_PER_LEG],
    pub phase_offset: [f64; LINKS_PER_LEG],
}

impl GaitSpec {
    pub fn new(c: &ControllerGenome) -> Self {
        Self { stride_freq: c.stride_freq, vert_offset: c.vert_offset, phase_offset: c.phase_offset }
    }

    /// Amplitude that makes the peak target velocity equal `max_ang_vel`.
    pub fn amplitude(&self, max_ang_vel: f64) -> f64 {
        max_ang_vel / self.stride_freq
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.stride_freq
    }

    pub fn joint_target(&self, link: usize, group_phase: f64, t: f64, max_ang_vel: f64) -> f64 {
        self.vert_offset[link]
            + self.amplitude(max_ang_vel) * (self.stride_freq * t + self.phase_offset[link] + group_phase).sin()
    }

    /// Time derivative of [`GaitSpec::joint_target`].
    pub fn joint_target_rate(&self, link: usize, group_phase: f64, t: f64, max_ang_vel: f64) -> f64 {
        max_ang_vel * (self.stride_freq * t + self.phase_offset[link] + group_phase).cos()
    }
}
