use proptest::prelude::*;

use strokesig_core::distort::{DropSchedule, ScheduleMode};
use strokesig_core::pipeline::TrainConfig;
use strokesig_core::sigfeat::{
    chen_concat, path_signature, read_dump, signature_len, write_dump, FeatureDump, FeatureMap,
};
use strokesig_core::tensornet::{ssmp_output_len, ssmp_plan_with_thresholds, Checkpoint, Network, NetworkSpec};

fn path2(max_len: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-2.0f64..2.0), 2..max_len)
}

fn path3(max_len: usize) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 2..max_len)
}

proptest! {
    #[test]
    fn chen_identity_holds_at_any_cut(p in path3(10), depth in 1usize..=4, cut in 0usize..100) {
        let k = cut % (p.len() - 1);
        let whole = path_signature(&p, depth).unwrap();
        let joined = chen_concat(&path_signature(&p[..=k], depth).unwrap(), &path_signature(&p[k..], depth).unwrap()).unwrap();
        prop_assert!(whole.max_abs_diff(&joined) < 1e-10);
    }

    #[test]
    fn signature_ignores_translation(p in path2(10), dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let moved: Vec<[f64; 2]> = p.iter().map(|q| [q[0] + dx, q[1] + dy]).collect();
        let a = path_signature(&p, 4).unwrap();
        prop_assert!(a.max_abs_diff(&path_signature(&moved, 4).unwrap()) < 1e-10);
    }

    #[test]
    fn path_then_its_reverse_is_trivial(p in path2(8)) {
        let mut there_and_back = p.clone();
        there_and_back.extend(p.iter().rev().skip(1));
        let trivial = path_signature(&[p[0], p[0]], 4).unwrap();
        prop_assert!(path_signature(&there_and_back, 4).unwrap().max_abs_diff(&trivial) < 1e-10);
    }

    #[test]
    fn low_levels_are_increment_and_half_square(p in path3(8)) {
        let sig = path_signature(&p, 2).unwrap();
        let last = p[p.len() - 1];
        let d: Vec<f64> = (0..3).map(|i| last[i] - p[0][i]).collect();
        prop_assert_eq!(sig.coeffs().len(), signature_len(3, 2));
        prop_assert!((sig.level(0)[0] - 1.0).abs() < 1e-15);
        for i in 0..3 {
            prop_assert!((sig.level(1)[i] - d[i]).abs() < 1e-12);
            for j in 0..3 {
                let sym = sig.get(&[i, j]) + sig.get(&[j, i]);
                prop_assert!((sym - d[i] * d[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn planner_keeps_endpoints_and_order(n in 3usize..200, alpha in 1.01f64..=2.0, th in prop::collection::vec(0.0f64..1.0, 200)) {
        let plan = ssmp_plan_with_thresholds(n, alpha, &th).unwrap();
        prop_assert_eq!(plan.starts.len(), ssmp_output_len(n, alpha));
        prop_assert_eq!(plan.starts[0], 0);
        prop_assert_eq!(*plan.starts.last().unwrap(), n - 2);
        prop_assert!(plan.starts.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((plan.alpha_effective - n as f64 / plan.starts.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn shared_threshold_interior_strides_are_one_or_two(n in 4usize..200, th in 0.0f64..1.0) {
        let plan = ssmp_plan_with_thresholds(n, 1.5, &vec![th; 200]).unwrap();
        let s = plan.strides();
        if s.len() > 2 {
            prop_assert!(s[1..s.len() - 1].iter().all(|&x| x == 1 || x == 2), "{:?}", s);
        }
    }

    #[test]
    fn equal_split_covers_every_epoch(k in 1usize..6, epochs in 6usize..200) {
        let thetas: Vec<f64> = (0..k).map(|i| 0.5 - 0.05 * i as f64).collect();
        let sched = DropSchedule::equal_split(&thetas, epochs, ScheduleMode::FixedEpochs).unwrap();
        let lens: Vec<usize> = sched.stages().iter().map(|s| s.1).collect();
        prop_assert_eq!(lens.iter().sum::<usize>(), epochs);
        prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        prop_assert!(lens.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn feature_dump_round_trips(
        channels in 1usize..4,
        grid in 1usize..6,
        labels in prop::collection::vec(prop::option::of(0u32..50), 0..5),
        fill in -3.0f32..3.0,
    ) {
        let records = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let data = (0..channels * grid * grid).map(|j| fill * (i + j) as f32).collect();
                (FeatureMap::from_data(channels, grid, data).unwrap(), l)
            })
            .collect();
        let dump = FeatureDump { channels, grid, records };
        let mut bytes = Vec::new();
        write_dump(&mut bytes, &dump).unwrap();
        prop_assert_eq!(read_dump(&mut bytes.as_slice()).unwrap(), dump);
    }

    #[test]
    fn config_text_round_trips(epochs in 3usize..100, batch in 1usize..256, seed in any::<u64>(), m in 1usize..=4) {
        let mut cfg = TrainConfig::default();
        cfg.set("epochs", &epochs.to_string()).unwrap();
        cfg.set("batch", &batch.to_string()).unwrap();
        cfg.set("seed", &seed.to_string()).unwrap();
        cfg.set("m", &m.to_string()).unwrap();
        let back = TrainConfig::from_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), epoch in 0usize..100) {
        let spec = NetworkSpec::parse("toy", 2, 12, 3).unwrap();
        let mut ck = Checkpoint::new(Network::new(spec, seed).unwrap(), vec!["a".into(), "b".into(), "c".into()], seed).unwrap();
        ck.epoch = epoch;
        ck.notes.insert("free text".into(), "value with = sign".into());
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
