//! Morphology and controller genomes, their legal ranges, sampling and mutation.
//!
//! A robot is described by one body, one leg template repeated down each
//! side, and four quadratic variation terms that bend leg properties from
//! front to back. Every real-valued gene has a closed range and stays inside
//! it after any operation; out-of-range mutation steps are clamped.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Links per leg. Fixed by the encoding.
pub const LINKS_PER_LEG: usize = 3;

/// Relative standard deviation of a real-valued mutation step.
pub const MUTATION_SIGMA_FRACTION: f64 = 0.10;

/// Closed interval of legal values for one scalar gene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub lo: f64,
    pub hi: f64,
}

impl ParamRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.span() <= 0.0 {
            return self.lo;
        }
        rng.gen_range(self.lo..=self.hi)
    }

    /// Gaussian step with sd = 10% of the span, clamped back into range.
    pub fn perturb<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let sd = MUTATION_SIGMA_FRACTION * self.span();
        if sd <= 0.0 {
            return self.clamp(x);
        }
        let step = Normal::new(0.0, sd).expect("finite positive sd").sample(rng);
        self.clamp(x + step)
    }
}

/// Legal ranges of every gene.
pub mod ranges {
    use super::ParamRange;
    use std::f64::consts::FRAC_PI_2;

    pub const BODY_EXTENTS: [ParamRange; 3] = [
        ParamRange::new(0.4, 1.0),
        ParamRange::new(0.025, 0.15),
        ParamRange::new(0.05, 0.3),
    ];
    pub const BODY_COM: [ParamRange; 2] = [ParamRange::new(-0.5, 0.5), ParamRange::new(-0.5, 0.5)];
    pub const LEGS_PER_SIDE: (u32, u32) = (2, 6);
    pub const LEG_ATTACH_POINT: [ParamRange; 3] = [
        ParamRange::new(0.0, 0.0),
        ParamRange::new(-1.0, 1.0),
        ParamRange::new(0.0, 0.0),
    ];
    pub const LEG_ATTACH_PITCH: ParamRange = ParamRange::new(-0.6, 0.6);
    pub const TUBE_THICKNESS: ParamRange = ParamRange::new(0.001, 0.01);

    pub const LINK_EXTENT: ParamRange = ParamRange::new(0.0025, 0.1);
    pub const HINGE_AXIS: [ParamRange; 3] = [
        ParamRange::new(0.8, 1.0),
        ParamRange::new(-0.2, 0.2),
        ParamRange::new(-0.2, 0.2),
    ];
    pub const TOP_HINGE_AXIS: [ParamRange; 3] = [
        ParamRange::new(-0.2, 0.2),
        ParamRange::new(0.8, 1.0),
        ParamRange::new(-0.2, 0.2),
    ];
    pub const JOINT_STRENGTH: ParamRange = ParamRange::new(2000.0, 6000.0);
    pub const JOINT_DAMPING: ParamRange = ParamRange::new(1.0, 40.0);
    pub const MAX_TORQUE: ParamRange = ParamRange::new(50.0, 200.0);
    pub const MAX_ANG_VEL: ParamRange = ParamRange::new(0.0, 1.5);

    pub const QUAD_ATTACH_LINEAR: [ParamRange; 2] =
        [ParamRange::new(0.7, 1.0), ParamRange::new(-0.2, 0.2)];
    pub const QUAD_ATTACH_QUADRATIC: [ParamRange; 2] =
        [ParamRange::new(-0.1, 0.1), ParamRange::new(-0.1, 0.1)];
    pub const QUAD_LENGTH_MULT: ParamRange = ParamRange::new(-0.2, 0.2);
    pub const QUAD_WIDTH_MULT: ParamRange = ParamRange::new(-0.2, 0.2);
    pub const QUAD_STRENGTH_MULT: ParamRange = ParamRange::new(-5.0, 5.0);

    pub const STRIDE_FREQ: ParamRange = ParamRange::new(1.0, 4.0);
    pub const VERT_OFFSET: ParamRange = ParamRange::new(-1.0, 2.0);
    pub const PHASE_OFFSET: ParamRange = ParamRange::new(-FRAC_PI_2, FRAC_PI_2);
}

/// Per-link genes of the shared leg template. Link 0 is nearest the body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGenome {
    /// Cuboid half-extents (forward, up, right), m.
    pub extents: [f64; 3],
    pub hinge_axis: [f64; 3],
    /// N·m/rad
    pub joint_strength: f64,
    /// N·m·s/rad
    pub joint_damping: f64,
    /// N·m
    pub max_torque: f64,
    /// rad/s
    pub max_ang_vel: f64,
}

impl LinkGenome {
    fn hinge_ranges(index: usize) -> &'static [ParamRange; 3] {
        if index == 0 {
            &ranges::TOP_HINGE_AXIS
        } else {
            &ranges::HINGE_AXIS
        }
    }

    fn random<R: Rng + ?Sized>(index: usize, rng: &mut R) -> Self {
        let hinge = Self::hinge_ranges(index);
        Self {
            extents: [
                ranges::LINK_EXTENT.sample(rng),
                ranges::LINK_EXTENT.sample(rng),
                ranges::LINK_EXTENT.sample(rng),
            ],
            hinge_axis: [hinge[0].sample(rng), hinge[1].sample(rng), hinge[2].sample(rng)],
            joint_strength: ranges::JOINT_STRENGTH.sample(rng),
            joint_damping: ranges::JOINT_DAMPING.sample(rng),
            max_torque: ranges::MAX_TORQUE.sample(rng),
            max_ang_vel: ranges::MAX_ANG_VEL.sample(rng),
        }
    }

    fn is_valid(&self, index: usize) -> bool {
        let hinge = Self::hinge_ranges(index);
        self.extents.iter().all(|&e| ranges::LINK_EXTENT.contains(e))
            && self.hinge_axis.iter().zip(hinge).all(|(&a, r)| r.contains(a))
            && ranges::JOINT_STRENGTH.contains(self.joint_strength)
            && ranges::JOINT_DAMPING.contains(self.joint_damping)
            && ranges::MAX_TORQUE.contains(self.max_torque)
            && ranges::MAX_ANG_VEL.contains(self.max_ang_vel)
    }
}

/// Compact symmetric body and leg encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphologyGenome {
    pub body_extents: [f64; 3],
    pub body_com: [f64; 2],
    pub legs_per_side: u32,
    pub leg_attach_point: [f64; 3],
    pub leg_attach_pitch: f64,
    pub tube_thickness: f64,
    pub links: [LinkGenome; LINKS_PER_LEG],
    pub quad_attach_linear: [f64; 2],
    pub quad_attach_quadratic: [f64; 2],
    pub quad_length_mult: f64,
    pub quad_width_mult: f64,
    pub quad_strength_mult: f64,
}

/// Number of genes produced by [`MorphologyGenome::genes`].
pub const MORPHOLOGY_GENE_COUNT: usize = 48;

impl MorphologyGenome {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let sample3 = |r: &[ParamRange; 3], rng: &mut R| [r[0].sample(rng), r[1].sample(rng), r[2].sample(rng)];
        let sample2 = |r: &[ParamRange; 2], rng: &mut R| [r[0].sample(rng), r[1].sample(rng)];
        let body_extents = sample3(&ranges::BODY_EXTENTS, rng);
        let body_com = sample2(&ranges::BODY_COM, rng);
        let legs_per_side = rng.gen_range(ranges::LEGS_PER_SIDE.0..=ranges::LEGS_PER_SIDE.1);
        let leg_attach_point = sample3(&ranges::LEG_ATTACH_POINT, rng);
        let leg_attach_pitch = ranges::LEG_ATTACH_PITCH.sample(rng);
        let tube_thickness = ranges::TUBE_THICKNESS.sample(rng);
        let links = [
            LinkGenome::random(0, rng),
            LinkGenome::random(1, rng),
            LinkGenome::random(2, rng),
        ];
        Self {
            body_extents,
            body_com,
            legs_per_side,
            leg_attach_point,
            leg_attach_pitch,
            tube_thickness,
            links,
            quad_attach_linear: sample2(&ranges::QUAD_ATTACH_LINEAR, rng),
            quad_attach_quadratic: sample2(&ranges::QUAD_ATTACH_QUADRATIC, rng),
            quad_length_mult: ranges::QUAD_LENGTH_MULT.sample(rng),
            quad_width_mult: ranges::QUAD_WIDTH_MULT.sample(rng),
            quad_strength_mult: ranges::QUAD_STRENGTH_MULT.sample(rng),
        }
    }

    /// True when every gene is inside its legal range.
    pub fn is_valid(&self) -> bool {
        let all3 = |v: &[f64; 3], r: &[ParamRange; 3]| v.iter().zip(r).all(|(&x, r)| r.contains(x));
        let all2 = |v: &[f64; 2], r: &[ParamRange; 2]| v.iter().zip(r).all(|(&x, r)| r.contains(x));
        all3(&self.body_extents, &ranges::BODY_EXTENTS)
            && all2(&self.body_com, &ranges::BODY_COM)
            && (ranges::LEGS_PER_SIDE.0..=ranges::LEGS_PER_SIDE.1).contains(&self.legs_per_side)
            && all3(&self.leg_attach_point, &ranges::LEG_ATTACH_POINT)
            && ranges::LEG_ATTACH_PITCH.contains(self.leg_attach_pitch)
            && ranges::TUBE_THICKNESS.contains(self.tube_thickness)
            && self.links.iter().enumerate().all(|(i, l)| l.is_valid(i))
            && all2(&self.quad_attach_linear, &ranges::QUAD_ATTACH_LINEAR)
            && all2(&self.quad_attach_quadratic, &ranges::QUAD_ATTACH_QUADRATIC)
            && ranges::QUAD_LENGTH_MULT.contains(self.quad_length_mult)
            && ranges::QUAD_WIDTH_MULT.contains(self.quad_width_mult)
            && ranges::QUAD_STRENGTH_MULT.contains(self.quad_strength_mult)
    }

    /// Flat gene vector: 6 body (extents, com, legs per side), 5 leg template,
    /// 30 link and 7 quadratic genes.
    pub fn genes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(MORPHOLOGY_GENE_COUNT);
        out.extend_from_slice(&self.body_extents);
        out.extend_from_slice(&self.body_com);
        out.push(f64::from(self.legs_per_side));
        out.extend_from_slice(&self.leg_attach_point);
        out.push(self.leg_attach_pitch);
        out.push(self.tube_thickness);
        for l in &self.links {
            out.extend_from_slice(&l.extents);
            out.extend_from_slice(&l.hinge_axis);
            out.extend_from_slice(&[l.joint_strength, l.joint_damping, l.max_torque, l.max_ang_vel]);
        }
        out.extend_from_slice(&self.quad_attach_linear);
        out.extend_from_slice(&self.quad_attach_quadratic);
        out.extend_from_slice(&[self.quad_length_mult, self.quad_width_mult, self.quad_strength_mult]);
        out
    }
}

/// Per-group mutation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationRates {
    pub modify_leg: f64,
    pub modify_num_legs: f64,
    pub modify_num_links: f64,
    pub modify_motor: f64,
    pub modify_leg_offset: f64,
    pub modify_body: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        Self {
            modify_leg: 0.25,
            modify_num_legs: 0.25,
            modify_num_links: 0.4,
            modify_motor: 0.25,
            modify_leg_offset: 0.25,
            modify_body: 0.25,
        }
    }
}

impl MutationRates {
    pub fn none() -> Self {
        Self {
            modify_leg: 0.0,
            modify_num_legs: 0.0,
            modify_num_links: 0.0,
            modify_motor: 0.0,
            modify_leg_offset: 0.0,
            modify_body: 0.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [
            self.modify_leg,
            self.modify_num_legs,
            self.modify_num_links,
            self.modify_motor,
            self.modify_leg_offset,
            self.modify_body,
        ]
        .iter()
        .all(|p| (0.0..=1.0).contains(p))
    }
}

fn perturb_all<const N: usize, R: Rng + ?Sized>(v: &mut [f64; N], r: &[ParamRange; N], rng: &mut R) {
    for (x, range) in v.iter_mut().zip(r) {
        *x = range.perturb(*x, rng);
    }
}

/// Applies each rate-gated mutation group in a fixed order.
///
/// Every gate consumes one uniform draw whether or not it fires, so the
/// random stream stays aligned across genomes.
pub fn mutate_morphology<R: Rng + ?Sized>(g: &MorphologyGenome, rates: &MutationRates, rng: &mut R) -> MorphologyGenome {
    let mut child = g.clone();

    if rng.gen::<f64>() < rates.modify_leg {
        for (i, link) in child.links.iter_mut().enumerate() {
            let extent_ranges = [ranges::LINK_EXTENT; 3];
            perturb_all(&mut link.extents, &extent_ranges, rng);
            perturb_all(&mut link.hinge_axis, LinkGenome::hinge_ranges(i), rng);
        }
        child.leg_attach_pitch = ranges::LEG_ATTACH_PITCH.perturb(child.leg_attach_pitch, rng);
        child.tube_thickness = ranges::TUBE_THICKNESS.perturb(child.tube_thickness, rng);
    }

    if rng.gen::<f64>() < rates.modify_num_legs {
        let (lo, hi) = ranges::LEGS_PER_SIDE;
        let n = i64::from(child.legs_per_side) + if rng.gen::<bool>() { 1 } else { -1 };
        child.legs_per_side = n.clamp(i64::from(lo), i64::from(hi)) as u32;
    }

    // Links per leg are fixed, so this gate never changes the genome.
    let _ = rng.gen::<f64>() < rates.modify_num_links;

    if rng.gen::<f64>() < rates.modify_motor {
        for link in child.links.iter_mut() {
            link.joint_strength = ranges::JOINT_STRENGTH.perturb(link.joint_strength, rng);
            link.joint_damping = ranges::JOINT_DAMPING.perturb(link.joint_damping, rng);
            link.max_torque = ranges::MAX_TORQUE.perturb(link.max_torque, rng);
            link.max_ang_vel = ranges::MAX_ANG_VEL.perturb(link.max_ang_vel, rng);
        }
    }

    if rng.gen::<f64>() < rates.modify_leg_offset {
        perturb_all(&mut child.leg_attach_point, &ranges::LEG_ATTACH_POINT, rng);
        perturb_all(&mut child.quad_attach_linear, &ranges::QUAD_ATTACH_LINEAR, rng);
        perturb_all(&mut child.quad_attach_quadratic, &ranges::QUAD_ATTACH_QUADRATIC, rng);
        child.quad_length_mult = ranges::QUAD_LENGTH_MULT.perturb(child.quad_length_mult, rng);
        child.quad_width_mult = ranges::QUAD_WIDTH_MULT.perturb(child.quad_width_mult, rng);
        child.quad_strength_mult = ranges::QUAD_STRENGTH_MULT.perturb(child.quad_strength_mult, rng);
    }

    if rng.gen::<f64>() < rates.modify_body {
        perturb_all(&mut child.body_extents, &ranges::BODY_EXTENTS, rng);
        perturb_all(&mut child.body_com, &ranges::BODY_COM, rng);
    }

    child
}

/// Sinusoidal gait parameters: one stride frequency plus a vertical and a
/// phase offset per link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGenome {
    /// rad/s
    pub stride_freq: f64,
    pub vert_offset: [f64; LINKS_PER_LEG],
    pub phase_offset: [f64; LINKS_PER_LEG],
}

impl Default for ControllerGenome {
    fn default() -> Self {
        default_controller()
    }
}

impl ControllerGenome {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let stride_freq = ranges::STRIDE_FREQ.sample(rng);
        let mut vert_offset = [0.0; LINKS_PER_LEG];
        let mut phase_offset = [0.0; LINKS_PER_LEG];
        for i in 0..LINKS_PER_LEG {
            vert_offset[i] = ranges::VERT_OFFSET.sample(rng);
            phase_offset[i] = ranges::PHASE_OFFSET.sample(rng);
        }
        Self { stride_freq, vert_offset, phase_offset }
    }

    pub fn is_valid(&self) -> bool {
        ranges::STRIDE_FREQ.contains(self.stride_freq)
            && self.vert_offset.iter().all(|&v| ranges::VERT_OFFSET.contains(v))
            && self.phase_offset.iter().all(|&p| ranges::PHASE_OFFSET.contains(p))
    }

    pub fn genes(&self) -> [f64; 7] {
        let [v0, v1, v2] = self.vert_offset;
        let [p0, p1, p2] = self.phase_offset;
        [self.stride_freq, v0, v1, v2, p0, p1, p2]
    }
}

/// Midpoint of every controller range.
pub fn default_controller() -> ControllerGenome {
    ControllerGenome {
        stride_freq: ranges::STRIDE_FREQ.midpoint(),
        vert_offset: [ranges::VERT_OFFSET.midpoint(); LINKS_PER_LEG],
        phase_offset: [ranges::PHASE_OFFSET.midpoint(); LINKS_PER_LEG],
    }
}

/// Perturbs all seven controller genes.
pub fn mutate_controller<R: Rng + ?Sized>(c: &ControllerGenome, rng: &mut R) -> ControllerGenome {
    let mut child = *c;
    child.stride_freq = ranges::STRIDE_FREQ.perturb(child.stride_freq, rng);
    for i in 0..LINKS_PER_LEG {
        child.vert_offset[i] = ranges::VERT_OFFSET.perturb(child.vert_offset[i], rng);
        child.phase_offset[i] = ranges::PHASE_OFFSET.perturb(child.phase_offset[i], rng);
    }
    child
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn random_morphology_is_valid_and_seeded() {
        let mut r = rng(1);
        for _ in 0..100_000 {
            let g = MorphologyGenome::random(&mut r);
            assert!((2..=6).contains(&g.legs_per_side));
        }
        let a = MorphologyGenome::random(&mut rng(42));
        let b = MorphologyGenome::random(&mut rng(42));
        assert_eq!(a, b);
        assert!(a.is_valid());
    }

    #[test]
    fn tube_thickness_is_uniform() {
        // Pearson chi-square over 20 equal-width bins; critical value for
        // 19 dof at p = 0.01 is 36.19.
        let mut r = rng(7);
        let n = 100_000;
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let t = MorphologyGenome::random(&mut r).tube_thickness;
            let i = (((t - 0.001) / 0.009) * bins as f64).floor() as usize;
            counts[i.min(bins - 1)] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }

    #[test]
    fn zero_rates_leave_genome_untouched() {
        let mut r = rng(3);
        let g = MorphologyGenome::random(&mut r);
        for _ in 0..100 {
            assert_eq!(mutate_morphology(&g, &MutationRates::none(), &mut r), g);
        }
    }

    #[test]
    fn mutation_stays_in_range() {
        let mut r = rng(11);
        let all = MutationRates {
            modify_leg: 1.0,
            modify_num_legs: 1.0,
            modify_num_links: 1.0,
            modify_motor: 1.0,
            modify_leg_offset: 1.0,
            modify_body: 1.0,
        };
        let mut g = MorphologyGenome::random(&mut r);
        for _ in 0..100_000 {
            g = mutate_morphology(&g, &all, &mut r);
            assert!(g.is_valid());
        }
    }

    #[test]
    fn leg_count_clamps_at_six() {
        let mut r = rng(5);
        let mut g = MorphologyGenome::random(&mut r);
        g.legs_per_side = 6;
        let rates = MutationRates { modify_num_legs: 1.0, ..MutationRates::none() };
        let mut saw_up_step = false;
        for _ in 0..200 {
            let c = mutate_morphology(&g, &rates, &mut r);
            assert!(c.legs_per_side == 5 || c.legs_per_side == 6);
            saw_up_step |= c.legs_per_side == 6;
        }
        assert!(saw_up_step);
    }

    #[test]
    fn gene_count() {
        let g = MorphologyGenome::random(&mut rng(0));
        assert_eq!(g.genes().len(), MORPHOLOGY_GENE_COUNT);
        assert_eq!(default_controller().genes().len(), 7);
    }

    #[test]
    fn controller_mutation_bounds_and_step_size() {
        let mut r = rng(9);
        let start = default_controller();
        let n = 100_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let c = mutate_controller(&start, &mut r);
            assert!(c.is_valid());
            assert!((1.0..=4.0).contains(&c.stride_freq));
            let d = c.phase_offset[0] - start.phase_offset[0];
            sum_sq += d * d;
        }
        // Start at mid-range: clamping affects |step| > 5 sd, negligible.
        let sd = (sum_sq / n as f64).sqrt();
        let expected = 0.10 * std::f64::consts::PI;
        assert!((sd - expected).abs() / expected < 0.05, "sd = {sd}");
    }

    #[test]
    fn controller_mutation_is_seeded() {
        let c = ControllerGenome::random(&mut rng(1));
        assert_eq!(mutate_controller(&c, &mut rng(2)), mutate_controller(&c, &mut rng(2)));
    }

    #[test]
    fn default_controller_midpoints() {
        let c = default_controller();
        assert_eq!(c.stride_freq, 2.5);
        assert_eq!(c.vert_offset, [0.5; 3]);
        assert_eq!(c.phase_offset, [0.0; 3]);
    }

    #[test]
    fn json_uses_snake_case_fields() {
        let g = MorphologyGenome::random(&mut rng(4));
        let v = serde_json::to_value(&g).unwrap();
        for key in ["body_extents", "legs_per_side", "tube_thickness", "links", "quad_strength_mult"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["links"].as_array().unwrap().len(), 3);
        let back: MorphologyGenome = serde_json::from_value(v).unwrap();
        assert_eq!(back, g);
    }
}
