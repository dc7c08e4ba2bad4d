use deictic::deictic::{CropSpec, CropTable, Patch};
use deictic::env::{action_space, EffectorState, MoveEffectEnv, Rules, Stage, Task};
use deictic::learner::replay::SumTree;
use deictic::learner::{ReplayBuffer, ReplayMode};
use deictic::{Image, Pose};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn stage_strategy() -> impl Strategy<Value = Stage> {
    prop_oneof![
        (3usize..6, 1usize..4).prop_map(|(side, n)| {
            let mut s = Stage::grid_disk(side);
            s.num_objects = n;
            s
        }),
        (5usize..8, prop_oneof![Just(1usize), Just(2), Just(4)]).prop_map(|(side, o)| Stage::new(
            Task::BlockAlign,
            side,
            side,
            o
        )),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_rollouts_keep_env_invariants(stage in stage_strategy(), seed in any::<u64>(), picks in prop::collection::vec(any::<prop::sample::Index>(), 10)) {
        let rules = Rules::default();
        let mut env = MoveEffectEnv::new(stage, rules).unwrap();
        env.reset::<f64>(seed).unwrap();
        let actions = action_space(&stage);
        let count = env.state().objects.len();
        for ix in picks {
            if env.is_done() {
                break;
            }
            let a = actions[ix.index(actions.len())];
            let res = env.step::<f64>(&a).unwrap();
            let st = env.state();
            let held = matches!(st.effector, EffectorState::Holding(_));
            let on_table = st.objects.iter().filter(|o| o.on_table).count();
            prop_assert_eq!(on_table + held as usize, count);
            prop_assert_eq!(res.observation.theta, st.theta());
            prop_assert!(res.reward == 0.0 || res.done);
            let lit = res.observation.image.as_slice().iter().filter(|v| **v > 0.0).count();
            let cells: usize = st.objects.iter().filter(|o| o.on_table).map(|o| o.footprint(&stage.grid, &rules).len()).sum();
            if stage.task == Task::GridDisk {
                prop_assert_eq!(lit, on_table);
            } else {
                prop_assert!(lit <= cells);
            }
        }
    }

    #[test]
    fn half_turn_canonical_form(values in prop::collection::vec(0u8..3, 9)) {
        let p = Patch::from_flat(3, values.iter().map(|v| *v as f64).collect()).unwrap();
        let c = p.clone().canonical_half_turn();
        prop_assert_eq!(c.clone().canonical_half_turn(), c.clone());
        prop_assert_eq!(p.rotated_half().canonical_half_turn(), c.clone());
        prop_assert_eq!(p.rotated_quarter().rotated_quarter(), p.rotated_half());
    }

    #[test]
    fn crop_centre_reads_the_target_cell(cells in prop::collection::vec(any::<bool>(), 25), x in 0usize..5, y in 0usize..5, o in 0usize..4, window in prop_oneof![Just(1usize), Just(3), Just(5)]) {
        let data = cells.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        let img: Image<f64> = Image::from_vec(5, 5, data).unwrap();
        let table = CropTable::new(CropSpec::new(window), 4);
        let patch = table.crop(&img, &Pose::new(x, y, o));
        let m = window / 2;
        prop_assert_eq!(patch.get(m, m), img.get(x as i64, y as i64).unwrap());
        prop_assert_eq!(table.crop_has_positive(&img, &Pose::new(x, y, o)), patch.has_positive());
    }

    #[test]
    fn sum_tree_tracks_leaf_total(weights in prop::collection::vec(0.0f64..10.0, 1..40), rewrites in prop::collection::vec((any::<prop::sample::Index>(), 0.0f64..10.0), 0..20)) {
        let mut tree = SumTree::new(weights.len());
        let mut shadow = weights.clone();
        for (i, w) in weights.iter().enumerate() {
            tree.set(i, *w);
        }
        for (ix, w) in rewrites {
            let i = ix.index(shadow.len());
            shadow[i] = w;
            tree.set(i, w);
        }
        let total: f64 = shadow.iter().sum();
        prop_assert!((tree.total() - total).abs() <= 1e-9 * (1.0 + total));
        if total > 0.0 {
            let j = tree.find(total * 0.5);
            prop_assert!(j < shadow.len() && shadow[j] > 0.0);
        }
    }

    #[test]
    fn prioritized_sampling_is_a_distribution(capacity in 1usize..30, pushes in 1usize..60, errors in prop::collection::vec(-5.0f64..5.0, 0..30), seed in any::<u64>()) {
        let mut buf = ReplayBuffer::new(capacity, ReplayMode::prioritized());
        for i in 0..pushes {
            buf.push(i);
        }
        let idx: Vec<usize> = (0..errors.len()).map(|i| i % buf.len()).collect();
        buf.update_priorities(&idx, &errors);
        let p = buf.probabilities();
        prop_assert_eq!(p.len(), buf.len());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|v| *v > 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = buf.sample(buf.len().min(10), &mut rng);
        prop_assert!(s.indices.iter().all(|i| *i < buf.len()));
        prop_assert!(s.weights.iter().all(|w| *w > 0.0 && *w <= 1.0 + 1e-12));
    }
}
