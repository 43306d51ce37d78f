use proptest::prelude::*;

use legged_elites::archive::GridSpec;
use legged_elites::gait::GaitSpec;
use legged_elites::genome::{mutate_controller, mutate_morphology, ControllerGenome, MorphologyGenome, MutationRates};
use legged_elites::phenotype::{expand, FeatureVector, PhenotypeConfig};
use legged_elites::seeding::rng_from_seed;
use legged_elites::simulator::{simulate, step_joint, JointState, Rollout, SimConfig};

fn short_sim() -> SimConfig {
    SimConfig { duration: 1.0, ..SimConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutation_stays_in_range(seed in any::<u64>(), rounds in 1usize..20) {
        let mut rng = rng_from_seed(seed);
        let mut g = MorphologyGenome::random(&mut rng);
        let mut c = ControllerGenome::random(&mut rng);
        let all = MutationRates { modify_leg: 1.0, modify_num_legs: 1.0, modify_num_links: 1.0, modify_motor: 1.0, modify_leg_offset: 1.0, modify_body: 1.0 };
        for _ in 0..rounds {
            g = mutate_morphology(&g, &all, &mut rng);
            c = mutate_controller(&c, &mut rng);
            prop_assert!(g.is_valid());
            prop_assert!(c.is_valid());
        }
    }

    #[test]
    fn binning_matches_linear_scan(
        x0 in 1.5f64..3.3, x1 in 40.0f64..85.0, legs in 0u32..9,
        x3 in -0.005f64..0.015, x4 in -0.5f64..0.5, x5 in -0.5f64..0.5,
    ) {
        let spec = GridSpec::default();
        let f = FeatureVector { total_leg_length: x0, total_mass: x1, legs_per_side: legs, tube_thickness: x3, leg_length_scale: x4, leg_width_scale: x5 };
        let key = spec.bin_index(&f).unwrap();
        for (d, x) in f.to_array().iter().enumerate() {
            let dim = &spec.dims[d];
            let expected = if dim.integer {
                (0..dim.bins).rev().find(|&k| x - dim.lo >= k as f64 - 0.5 || k == 0).unwrap()
            } else {
                let width = (dim.hi - dim.lo) / dim.bins as f64;
                (0..dim.bins).rev().find(|&k| *x >= dim.lo + k as f64 * width - 1e-12 || k == 0).unwrap()
            };
            prop_assert_eq!(key[d], expected, "dimension {}", d);
        }
    }

    #[test]
    fn amplitude_law(seed in any::<u64>(), w in 0.1f64..20.0) {
        let spec = GaitSpec::new(&ControllerGenome::random(&mut rng_from_seed(seed)));
        let b = spec.amplitude(w);
        prop_assert!((b * spec.stride_freq - w).abs() <= 1e-12 * w);
        for k in 0..50 {
            let t = k as f64 * 0.037;
            prop_assert!((spec.joint_target(1, 0.0, t, w) - spec.vert_offset[1]).abs() <= b * (1.0 + 1e-12));
            prop_assert!(spec.joint_target_rate(1, 0.0, t, w).abs() <= w * (1.0 + 1e-12));
        }
    }

    #[test]
    fn split_rollout_matches_single(seed in any::<u64>(), split in 1usize..29) {
        let mut rng = rng_from_seed(seed);
        let m = expand(&MorphologyGenome::random(&mut rng), &PhenotypeConfig::default());
        let c = ControllerGenome::random(&mut rng);
        let cfg = short_sim();
        let whole = simulate(&m, &c, &cfg);
        let mut r = Rollout::new(&m, &c, &cfg);
        r.advance(split);
        r.advance(cfg.total_steps());
        let parts = r.finish();
        prop_assert_eq!(whole.energy, parts.energy);
        prop_assert_eq!(whole.distance, parts.distance);
        prop_assert!(whole.energy >= 0.0);
    }

    #[test]
    fn joint_respects_limits(
        angle in -3.0f64..3.0, vel in -20.0f64..20.0, target in -3.0f64..3.0,
        k in 0.0f64..5000.0, c in 0.0f64..50.0, tmax in 1.0f64..200.0, wmax in 0.5f64..10.0, inertia in 1e-4f64..2.0,
    ) {
        let (s, tau, p) = step_joint(JointState { angle, velocity: vel }, target, k, c, tmax, wmax, inertia, 1.0 / 30.0);
        prop_assert!(tau.abs() <= tmax);
        prop_assert!(s.velocity.abs() <= wmax);
        prop_assert!((p - (tau * s.velocity).abs()).abs() <= 1e-12 * p.max(1.0));
        prop_assert!(p <= tmax * wmax * (1.0 + 1e-12));
    }
}
