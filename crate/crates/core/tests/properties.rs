use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heightlab::enrichment::{collapse, enrich, forcing_violations};
use heightlab::exploration::{explore_enriched, explore_plain, step_bound, Direction, SelectionOrder};
use heightlab::gibbs::{
    exact_distribution, pushup, run_chain, EnergyModel, HeightConfig, HeightRange, LevelDirection, SamplerConfig,
};
use heightlab::lattice::{build_ball, LatticeSpec, PlanarPatch};
use heightlab::percolation::{clusters, edge_spin_field, level_set};
use heightlab::potentials::{decompose_weight, EdgePotentials, HalfInt, Potential};

fn ball(n: usize) -> PlanarPatch {
    build_ball(&LatticeSpec::honeycomb(), n, 0).unwrap()
}

/// A typical configuration: a short heat-bath chain from the zero boundary.
fn sample(patch: &PlanarPatch, v: &Potential, seed: u64) -> HeightConfig {
    let parity = v.classify().parity;
    let pots = EdgePotentials::uniform(patch, v.clone());
    let mut config = HeightConfig::zero_boundary(patch, parity).unwrap();
    let model = EnergyModel::from_patch(patch, &pots, &config);
    let sampler = SamplerConfig { sweeps: 20, burn_in: 0, thinning: 1, seed, height_window: None };
    config.heights = run_chain(&model, &config, &sampler, &[]).unwrap().final_heights;
    config
}

fn potentials() -> Vec<Potential> {
    vec![
        Potential::homomorphism(),
        Potential::k_lipschitz(1),
        Potential::k_lipschitz(2),
        Potential::discrete_gaussian(0.5).unwrap(),
        Potential::solid_on_solid(0.3).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn level_sets_are_nested(seed in any::<u64>(), a in -4i64..4) {
        let patch = ball(3);
        let c = sample(&patch, &Potential::k_lipschitz(2), seed);
        let hi = level_set(&c, a + 1, LevelDirection::Geq);
        let lo = level_set(&c, a, LevelDirection::Geq);
        prop_assert!(hi.iter().zip(&lo).all(|(&h, &l)| !h || l));
        let below = level_set(&c, a - 1, LevelDirection::Leq);
        prop_assert!(below.iter().zip(&lo).all(|(&b, &l)| b != l));
    }

    #[test]
    fn edge_spins_are_monotone(seed in any::<u64>(), bump in 0usize..40) {
        let patch = ball(3);
        let c = sample(&patch, &Potential::k_lipschitz(1), seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coins: Vec<HalfInt> = (0..patch.n_edges())
            .map(|_| if rng.gen() { HalfInt::PLUS_HALF } else { HalfInt::MINUS_HALF })
            .collect();
        let mut raised = c.clone();
        raised.heights[bump % patch.n_vertices()] += 1;
        let s = edge_spin_field(&c, &patch, &coins);
        let t = edge_spin_field(&raised, &patch, &coins);
        prop_assert!(s.spins.iter().zip(&t.spins).all(|(a, b)| a <= b));
    }

    #[test]
    fn plain_exploration_ignores_order(seed in any::<u64>(), a in -2i64..3, above in any::<bool>()) {
        let patch = ball(4);
        let c = sample(&patch, &Potential::homomorphism(), seed);
        let region = patch.ball_mask(2);
        let dir = if above { Direction::Above } else { Direction::Below };
        let base = explore_plain(&c, &patch, &region, a, dir, SelectionOrder::Fifo);
        prop_assert!(base.steps <= step_bound(&patch, &region));
        prop_assert_eq!(base.violations(), 0);
        for k in 0..5 {
            let r = explore_plain(&c, &patch, &region, a, dir, SelectionOrder::Shuffled(seed ^ k));
            prop_assert_eq!(&r.revealed, &base.revealed);
        }
    }

    #[test]
    fn enrich_then_collapse_is_identity(seed in any::<u64>(), pick in 0usize..5) {
        let v = potentials().swap_remove(pick);
        prop_assume!(v.classify().excited);
        let patch = ball(3);
        let c = sample(&patch, &v, seed);
        let pots = EdgePotentials::uniform(&patch, v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = enrich(&c, &patch, &pots, pick % 2 == 0, &mut rng).unwrap();
        prop_assert_eq!(collapse(&e), c);
        prop_assert_eq!(forcing_violations(&e, &patch), 0);
    }

    #[test]
    fn enriched_exploration_boundaries_are_typed(seed in any::<u64>()) {
        let patch = ball(4);
        let v = Potential::k_lipschitz(1);
        let c = sample(&patch, &v, seed);
        let pots = EdgePotentials::uniform(&patch, v);
        let region = patch.ball_mask(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, r) = explore_enriched(&c, &patch, &pots, &region, SelectionOrder::Shuffled(seed), &mut rng).unwrap();
        prop_assert_eq!(r.violations(), 0);
        prop_assert!(r.steps <= step_bound(&patch, &region));
    }

    #[test]
    fn pushup_dominates_and_stays_admissible(seed in any::<u64>(), n in 0usize..3) {
        let patch = ball(4);
        let v = Potential::homomorphism();
        let c = sample(&patch, &v, seed);
        let pots = EdgePotentials::uniform(&patch, v);
        let p = pushup(&c, &patch, n).unwrap();
        prop_assert!(p.heights.iter().zip(&c.heights).all(|(a, b)| a >= b));
        prop_assert!(p.is_admissible(&patch, &pots));
        for e in &patch.edges {
            prop_assert_eq!((p.heights[e.u] - p.heights[e.v]).rem_euclid(2), 1);
        }
        let again = pushup(&p, &patch, n).unwrap();
        prop_assert_eq!(again, p);
    }

    #[test]
    fn cluster_sizes_partition_the_subset(seed in any::<u64>(), a in -2i64..3) {
        let patch = ball(4);
        let c = sample(&patch, &Potential::homomorphism(), seed);
        let subset = level_set(&c, a, LevelDirection::Geq);
        let r = clusters(&patch, &subset);
        prop_assert_eq!(r.cluster_sizes.iter().sum::<usize>(), subset.iter().filter(|&&b| b).count());
        prop_assert_eq!(r.cluster_sizes.len(), r.cluster_count);
    }

    #[test]
    fn decomposition_parts_are_nonnegative(h in -6i64..=6, beta in 0.05f64..4.0, k in 1u32..4) {
        for v in [Potential::k_lipschitz(k), Potential::discrete_gaussian(beta).unwrap(), Potential::solid_on_solid(beta).unwrap()] {
            if let Ok((ex, plain)) = decompose_weight(&v, h) {
                prop_assert!(ex >= 0.0 && plain >= 0.0);
                prop_assert!(((ex + plain) - v.weight(h)).abs() <= 1e-14 * v.weight(h).max(1e-300));
            }
        }
    }

    #[test]
    fn flip_symmetry_for_random_boundaries(seed in any::<u64>()) {
        let pos = (0..6).map(|i| [i as f64, (i % 2) as f64]).collect();
        let patch = PlanarPatch::from_edges(pos, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)], &[1, 2, 3, 4], 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rng.gen_range(-2..=2);
        let b = rng.gen_range(-2..=2);
        let pots = EdgePotentials::uniform(&patch, Potential::discrete_gaussian(0.8).unwrap());
        let c = HeightConfig::with_fixed(&patch, &[(0, a), (5, b)], None);
        let range = HeightRange::symmetric(7);
        let d = exact_distribution(&patch, &pots, &c, range).unwrap();
        let f = exact_distribution(&patch, &pots, &c.negated(), range).unwrap();
        for v in 1..5 {
            prop_assert!((d.mean(v) + f.mean(v)).abs() < 1e-12);
        }
        let fm = f.to_map();
        for (phi, p) in d.to_map() {
            let neg: Vec<i64> = phi.iter().map(|h| -h).collect();
            prop_assert!((fm[&neg] - p).abs() < 1e-12);
        }
    }
}
