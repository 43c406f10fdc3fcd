//! Randomized invariants of the engine, worlds, policy network and statistics.

use pbml_core::engine::World;
use pbml_core::numeric::{NumericGenome, NumericWorld};
use pbml_core::policy::{ModularPolicyNet, MutationScales};
use pbml_core::reacher::{ArmState, ReacherConfig, ACTION_DIM, OBS_DIM};
use pbml_core::rng::{stream, Purpose};
use pbml_core::squares::{SquareGenome, SquareLandscape, SquareWorld, RADIUS_BINS};
use pbml_core::stats::{polyfit_gain, spearman};
use pbml_core::{
    allocate_offspring, apply_decay, rank_fitness, step_generation, EngineConfig, PopulationState, Strategy,
};
use proptest::prelude::*;
use proptest::strategy::Strategy as _;
use rand_chacha::ChaCha8Rng;

fn strategy() -> impl proptest::strategy::Strategy<Value = Strategy> {
    prop_oneof![Just(Strategy::PopulationBased), Just(Strategy::SingleGenome), Just(Strategy::RandomDrift)]
}

/// Positive ratios normalized to sum to one.
fn ratios(max_len: usize) -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, 1..max_len).prop_map(|v| {
        let total: f64 = v.iter().sum();
        v.into_iter().map(|x| x / total).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn numeric_generations_conserve_mass(
        strategy in strategy(),
        offspring in 1usize..300,
        decay in 0.0f64..0.99,
        seed in any::<u64>(),
    ) {
        let cfg = EngineConfig { decay, ..EngineConfig::new(strategy, offspring, 30, seed) };
        let mut state = PopulationState::singleton(NumericGenome::initial());
        let mut world = NumericWorld;
        for _ in 0..30 {
            let before = state.ratios();
            let row = step_generation(&mut state, &mut world, &cfg).unwrap();
            let expected: usize = allocate_offspring(&before, offspring).iter().sum();
            prop_assert_eq!(row.offspring, expected);
            prop_assert!(row.offspring <= offspring);
            let total: f64 = state.ratios().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "sum {}", total);
            if state.genomes.len() > 1 {
                prop_assert!(state.ratios().iter().all(|p| *p >= cfg.extinction_cutoff));
            }
        }
    }

    #[test]
    fn allocation_never_exceeds_budget(ratios in ratios(40), offspring in 0usize..5000) {
        let counts = allocate_offspring(&ratios, offspring);
        prop_assert!(counts.iter().sum::<usize>() <= offspring);
    }

    #[test]
    fn allocation_exact_on_integral_shares(counts in prop::collection::vec(1usize..50, 1..20)) {
        let c: usize = counts.iter().sum();
        let ratios: Vec<f64> = counts.iter().map(|&k| k as f64 / c as f64).collect();
        prop_assert_eq!(allocate_offspring(&ratios, c), counts);
    }

    #[test]
    fn decay_output_is_sound(ratios in ratios(60), decay in 0.0f64..0.99, cutoff in 0.0f64..0.2, seed in any::<u64>()) {
        let fitness: Vec<f64> = (0..ratios.len() as u64).map(|i| (seed.wrapping_mul(i + 1) % 97) as f64).collect();
        let ranks = rank_fitness(&fitness).unwrap();
        let keys: Vec<u64> = (0..ratios.len() as u64).map(|i| i.wrapping_mul(seed | 1)).collect();
        let out = apply_decay(&ratios, &ranks, decay, cutoff, &keys);
        prop_assert!(!out.is_empty());
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        if out.len() > 1 {
            prop_assert!(out.iter().all(|(_, p)| *p >= cutoff));
        }
        let best = ranks.iter().copied().fold(0.0, f64::max);
        prop_assert!(out.iter().any(|&(i, _)| ranks[i] == best));
    }

    #[test]
    fn strategies_agree_on_a_singleton(seed in any::<u64>(), offspring in 1usize..200) {
        let census = |strategy| {
            let cfg = EngineConfig::new(strategy, offspring, 1, seed);
            let mut state = PopulationState::singleton(NumericGenome::initial());
            let row = step_generation(&mut state, &mut CensusProbe, &cfg).unwrap();
            (row.observables, row.offspring, state.next_id)
        };
        let pb = census(Strategy::PopulationBased);
        prop_assert_eq!(pb.1, offspring);
        prop_assert_eq!(&pb, &census(Strategy::SingleGenome));
        prop_assert_eq!(&pb, &census(Strategy::RandomDrift));
    }

    #[test]
    fn drift_preserves_parent_proportions(ratios in ratios(30), seed in any::<u64>()) {
        let keys: Vec<u64> = (0..ratios.len() as u64).map(|i| i ^ seed).collect();
        let out = apply_decay(&ratios, &vec![1.0; ratios.len()], 0.25, 0.0, &keys);
        prop_assert_eq!(out.len(), ratios.len());
        for (i, p) in out {
            prop_assert!((p - ratios[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
    ) {
        let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let base = spearman(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0 * v).collect();
        let ty: Vec<f64> = y.iter().map(|v| (v / 50.0).exp()).collect();
        prop_assert!((spearman(&tx, &ty).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&base));
    }

    #[test]
    fn polyfit_gain_is_non_negative(y in prop::collection::vec(-1e3f64..1e3, 5..60)) {
        let x: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        prop_assert!(polyfit_gain(&x, &y).unwrap() >= 0.0);
    }

    #[test]
    fn numeric_fitness_ignores_radius(x in -1e6f64..1e6, r1 in -50.0f64..50.0, r2 in -50.0f64..50.0) {
        prop_assert_eq!(NumericWorld.fitness(&NumericGenome { x, r: r1 }), NumericWorld.fitness(&NumericGenome { x, r: r2 }));
    }

    #[test]
    fn gate_shift_leaves_output_unchanged(seed in any::<u64>(), shift in -30.0f64..30.0, layer in 0usize..2) {
        let mut rng = stream(seed, Purpose::GenomeInit, 0, 0);
        let mut net = ModularPolicyNet::init(&mut rng, OBS_DIM, 8, ACTION_DIM).unwrap();
        net = net.mutate(&MutationScales { sigma_base: 0.5, sigma_meta: 0.0 }, &mut rng);
        let obs: Vec<f64> = (0..OBS_DIM).map(|i| (seed.rotate_left(i as u32) % 1000) as f64 / 500.0 - 1.0).collect();
        let before = net.forward(&obs).unwrap();
        net.gates[layer].iter_mut().for_each(|g| *g += shift);
        let after = net.forward(&obs).unwrap();
        for (a, b) in before.iter().zip(&after) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(a));
        }
    }

    #[test]
    fn frozen_module_stays_put(seed in any::<u64>(), module in 0usize..6) {
        let mut rng = stream(seed, Purpose::GenomeInit, 0, 0);
        let mut net = ModularPolicyNet::init(&mut rng, OBS_DIM, 6, ACTION_DIM).unwrap();
        net.radii[2 * module] = -1000.0;
        net.radii[2 * module + 1] = -1000.0;
        let scales = MutationScales { sigma_base: 0.02, sigma_meta: 0.0 };
        let mut child = net.clone();
        for _ in 0..20 {
            child = child.mutate(&scales, &mut rng);
        }
        for (a, b) in net.modules[module].weights.iter().zip(&child.modules[module].weights) {
            prop_assert!((a - b).abs() <= f64::EPSILON * a.abs().max(1.0));
        }
        for (a, b) in net.modules[module].biases.iter().zip(&child.modules[module].biases) {
            prop_assert!((a - b).abs() <= f64::EPSILON * a.abs().max(1.0));
        }
    }

    #[test]
    fn unforced_arm_loses_speed(w1 in -20.0f64..20.0, w2 in -20.0f64..20.0, t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let cfg = ReacherConfig::default();
        let mut s = ArmState { theta: [t1, t2], omega: [w1, w2] };
        let mut speed = w1.hypot(w2);
        for _ in 0..100 {
            s = s.step([0.0, 0.0], &cfg);
            let next = s.omega[0].hypot(s.omega[1]);
            prop_assert!(next <= speed);
            speed = next;
        }
    }

    #[test]
    fn shuffle_preserves_values_and_positions(seed in any::<u64>()) {
        let mut land = SquareLandscape::build(9.5, 1.5, 128.0, &mut stream(seed, Purpose::WorldInit, 0, 0)).unwrap();
        let centers = land.centers().to_vec();
        let mut before = land.values().to_vec();
        land.shuffle(&mut stream(seed, Purpose::WorldHook, 1, 0));
        let mut after = land.values().to_vec();
        prop_assert_eq!(land.centers(), &centers[..]);
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        prop_assert_eq!(before, after);
    }
}

/// Numeric world that reports every census member's parameters as observables.
struct CensusProbe;

impl World for CensusProbe {
    type Params = NumericGenome;

    fn begin_generation(&mut self, _: u64, _: &mut ChaCha8Rng) -> bool {
        false
    }

    fn fitness(&self, g: &NumericGenome) -> f64 {
        g.x
    }

    fn mutate(&self, g: &NumericGenome, rng: &mut ChaCha8Rng) -> NumericGenome {
        g.mutate(rng)
    }

    fn observable_columns(&self) -> Vec<String> {
        Vec::new()
    }

    fn observables(&self, census: &[&NumericGenome], _: &[f64], _: &[f64]) -> Vec<f64> {
        census.iter().flat_map(|g| [g.x, g.r]).collect()
    }
}

fn logit_genome(seed: u64) -> SquareGenome {
    let mut rng: ChaCha8Rng = stream(seed, Purpose::GenomeInit, 0, 0);
    let mut logits = [0.0; RADIUS_BINS];
    for l in &mut logits {
        *l = rand::Rng::random_range(&mut rng, -2.0..2.0);
    }
    SquareGenome { x: 100.0, y: 100.0, logits }
}

/// Upper 0.1% point of chi-square with 15 degrees of freedom.
const CHI2_15_P001: f64 = 37.697;

#[test]
fn radius_sampling_follows_softmax() {
    let g = logit_genome(5);
    let probs = g.radius_probabilities();
    let n = 100_000;
    let mut counts = [0usize; RADIUS_BINS];
    for i in 0..n {
        let child = g.mutate(0.0, &mut stream(9, Purpose::Mutation, 0, i));
        let d = (child.x - g.x).hypot(child.y - g.y);
        counts[d.round() as usize] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    assert!(chi2 < CHI2_15_P001, "chi-square {chi2}");
}

#[test]
fn mean_displacement_matches_expectation() {
    let g = logit_genome(6);
    let expected: f64 = g.radius_probabilities().iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let n = 100_000;
    let mean = (0..n)
        .map(|i| {
            let c = g.mutate(0.1, &mut stream(10, Purpose::Mutation, 0, i));
            (c.x - g.x).hypot(c.y - g.y)
        })
        .sum::<f64>()
        / n as f64;
    // The displacement stdev is below 5, so the standard error is below 0.016.
    assert!((mean - expected).abs() < 0.08, "{mean} vs {expected}");
}

#[test]
fn square_world_observables_are_mass_weighted() {
    let land = SquareLandscape::build(9.5, 1.5, 64.0, &mut stream(0, Purpose::WorldInit, 0, 0)).unwrap();
    let world = SquareWorld { landscape: land, shuffle_period: None, sigma_r: 0.1 };
    let (a, b) = (logit_genome(1), logit_genome(2));
    let mass = world.observables(&[&a, &b], &[0.25, 0.75], &[0.0, 0.0]);
    let (pa, pb) = (a.radius_probabilities(), b.radius_probabilities());
    for k in 0..RADIUS_BINS {
        assert!((mass[k] - (0.25 * pa[k] + 0.75 * pb[k])).abs() < 1e-15);
    }
    assert!((mass.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
