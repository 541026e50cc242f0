use eforest::codec::{decode_batch, decode_mcr, encode_batch, TreeMask};
use eforest::persist::{model_hash, parse_model, serialize_model};
use eforest::rng::SplitMix64;
use eforest::rule::{representative, Strategy};
use eforest::synth::random_mixed;
use eforest::tree::forest_encode;
use eforest::{train_forest, Dataset, Instance, Mode, TrainConfig, Value};
use proptest::prelude::*;

fn mode_of(sup: bool) -> Mode {
    if sup {
        Mode::Supervised
    } else {
        Mode::Unsupervised
    }
}

fn in_bounds(data: &Dataset, x: &Instance) -> bool {
    x.values().iter().zip(data.bounds()).all(|(v, b)| match (v, b) {
        (Value::Number(v), Some(b)) => b.contains(*v),
        _ => true,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_instance_lies_in_its_mcr(
        seed in any::<u64>(),
        d in 2usize..10,
        n in 10usize..80,
        t in 1usize..12,
        sup in any::<bool>(),
    ) {
        let data = random_mixed(seed, n, d, 3).unwrap();
        let forest = train_forest(&data, &TrainConfig::new(mode_of(sup), t, seed)).unwrap();
        for x in data.instances() {
            let mcr = decode_mcr(&forest, &forest_encode(&forest, x), None).unwrap();
            prop_assert!(mcr.contains(x));
            for strategy in [Strategy::Min, Strategy::Mean, Strategy::Max] {
                let rep = representative(&mcr, strategy, forest.schema());
                prop_assert!(mcr.contains(&rep));
                // The representative decodes to the same leaves.
                prop_assert_eq!(forest_encode(&forest, &rep), forest_encode(&forest, x));
            }
        }
    }

    #[test]
    fn held_out_instances_in_bounds_lie_in_their_mcr(seed in any::<u64>(), d in 2usize..8, t in 1usize..10) {
        let all = random_mixed(seed, 90, d, 2).unwrap();
        let train = all.slice(0..60);
        let forest = train_forest(&train, &TrainConfig::new(Mode::Unsupervised, t, seed)).unwrap();
        for x in all.instances()[60..].iter().filter(|x| in_bounds(&train, x)) {
            let mcr = decode_mcr(&forest, &forest_encode(&forest, x), None).unwrap();
            prop_assert!(mcr.contains(x));
        }
    }

    #[test]
    fn more_trees_never_widen_the_region(seed in any::<u64>(), d in 2usize..6, t in 2usize..16, keep_seed in any::<u64>()) {
        let data = random_mixed(seed, 50, d, 2).unwrap();
        let forest = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, t, seed)).unwrap();
        let fractions = [0.25, 0.5, 0.75, 1.0];
        for x in data.instances().iter().take(10) {
            let code = forest_encode(&forest, x);
            let mut wider = None;
            for f in fractions {
                let Ok(mask) = TreeMask::random(t, f, keep_seed) else { continue };
                let mcr = decode_mcr(&forest, &code, Some(&mask)).unwrap();
                if let Some(w) = &wider {
                    prop_assert!(mcr.is_subset_of(w));
                }
                prop_assert!(mcr.contains(x));
                wider = Some(mcr);
            }
        }
    }

    #[test]
    fn training_is_reproducible(seed in any::<u64>(), sup in any::<bool>()) {
        let data = random_mixed(seed, 40, 5, 3).unwrap();
        let config = TrainConfig::new(mode_of(sup), 6, seed);
        let a = train_forest(&data, &config).unwrap();
        let b = train_forest(&data, &TrainConfig { threads: 1, ..config.clone() }).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(model_hash(&a), model_hash(&b));
        let (doc, _) = serialize_model(&a);
        prop_assert_eq!(serialize_model(&parse_model(&doc).unwrap()).0, doc);
    }
}

#[test]
fn tree_streams_do_not_depend_on_forest_size() {
    let data = random_mixed(3, 80, 6, 3).unwrap();
    for mode in [Mode::Supervised, Mode::Unsupervised] {
        let small = train_forest(&data, &TrainConfig::new(mode, 5, 11)).unwrap();
        let large = train_forest(&data, &TrainConfig::new(mode, 12, 11)).unwrap();
        assert_eq!(small.trees(), &large.trees()[..5]);
    }
}

#[test]
fn batch_round_trip_on_numeric_data() {
    let mut rng = SplitMix64::new(8);
    let rows: Vec<Vec<f64>> = (0..120)
        .map(|_| (0..6).map(|_| (rng.next_f64() * 255.0).round()).collect())
        .collect();
    let data = Dataset::from_rows(eforest::Schema::numeric(6).unwrap(), &rows, None).unwrap();
    let forest = train_forest(&data, &TrainConfig::new(Mode::Unsupervised, 60, 1)).unwrap();
    let codes = encode_batch(&forest, &data).unwrap();
    let recon = decode_batch(&forest, &codes, Strategy::Mean, None).unwrap();
    let err = eforest::metrics::compare(&data, &recon, eforest::Metric::Mse).unwrap();
    // With many completely random trees the boxes shrink around each row.
    assert!(eforest::metrics::mean(&err) < 50.0, "{}", eforest::metrics::mean(&err));
    // Re-encoding a reconstruction lands in the same leaves.
    assert_eq!(encode_batch(&forest, &recon).unwrap(), codes);
}
