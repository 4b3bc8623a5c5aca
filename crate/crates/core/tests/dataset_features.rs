mod common;

use std::collections::{BTreeMap, HashSet};

use brainage::dataset::{
    age_stratum, dedup_conflicting_ids, load_cohort, read_cohort, stratified_split, write_cohort, Cohort,
    FeatureSchema, FeatureSet, Sex, SubjectRecord,
};
use brainage::features::{apply_scaler, correlate_with_age, fit_scaler, fuse, FeatureMatrix};
use brainage::synth::{generate, SynthSpec};
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn random_cohort(seed: u64, m: usize) -> Cohort {
    let mut r = rng(seed);
    let schema = FeatureSchema::from_names(["cat12__roi001__gm"]).unwrap();
    let records = (0..m)
        .map(|i| SubjectRecord {
            id: format!("s{i:04}"),
            age: (r.random_range(6.0..86.0_f64) * 100.0).round() / 100.0,
            sex: if i < 2 || (i >= 4 && r.random_bool(0.5)) { Sex::Male } else { Sex::Female },
            site: None,
            features: vec![r.random_range(0.0..1.0)],
        })
        .collect();
    Cohort::new(schema, records).unwrap()
}

#[test]
fn split_partitions_random_cohorts() {
    for seed in 0..100u64 {
        let m = 20 + (seed as usize * 7) % 180;
        let cohort = random_cohort(seed, m);
        let frac = [0.1, 0.2, 0.25, 0.5][seed as usize % 4];
        let split = stratified_split(&cohort, frac, seed).unwrap();
        let train: HashSet<_> = split.train_ids.iter().collect();
        let test: HashSet<_> = split.test_ids.iter().collect();
        assert_eq!(train.len(), split.train_ids.len());
        assert_eq!(test.len(), split.test_ids.len());
        assert!(train.is_disjoint(&test));
        assert_eq!(train.len() + test.len(), m);
        assert_eq!(test.len(), (frac * m as f64).round() as usize);

        let by_id = cohort.index_by_id();
        let mut male = split.male_test_ids.clone();
        male.extend(split.female_test_ids.iter().cloned());
        male.sort();
        let mut all = split.test_ids.clone();
        all.sort();
        assert_eq!(male, all);
        for id in &split.male_test_ids {
            assert_eq!(cohort.records()[by_id[id.as_str()]].sex, Sex::Male);
        }

        // every (sex, decade) stratum receives within one of its proportional share
        let mut strata: BTreeMap<(Sex, u32), (usize, usize)> = BTreeMap::new();
        for r in cohort.records() {
            strata.entry((r.sex, age_stratum(r.age))).or_default().0 += 1;
        }
        for id in &split.test_ids {
            let r = &cohort.records()[by_id[id.as_str()]];
            strata.get_mut(&(r.sex, age_stratum(r.age))).unwrap().1 += 1;
        }
        for ((sex, d), (n, t)) in strata {
            let share = frac * n as f64;
            assert!((t as f64 - share).abs() <= 1.0 + 1e-9, "seed {seed} {sex} decade {d}: {t} vs {share}");
        }
    }
}

#[test]
fn split_is_reproducible_and_seed_dependent() {
    let cohort = random_cohort(1, 150);
    let a = stratified_split(&cohort, 0.2, 9).unwrap();
    assert_eq!(a, stratified_split(&cohort, 0.2, 9).unwrap());
    assert_ne!(a.test_ids, stratified_split(&cohort, 0.2, 10).unwrap().test_ids);
}

#[test]
fn dedup_is_idempotent_on_noisy_tables() {
    let schema = FeatureSchema::from_names(["cat12__roi001__gm"]).unwrap();
    for seed in 0..20 {
        let mut r = rng(200 + seed);
        let records: Vec<SubjectRecord> = (0..60)
            .map(|_| SubjectRecord {
                id: format!("s{}", r.random_range(0..25)),
                age: [20.0, 30.0][r.random_range(0..2)],
                sex: if r.random_bool(0.8) { Sex::Male } else { Sex::Female },
                site: None,
                features: vec![0.5],
            })
            .collect();
        let (once, removed) = dedup_conflicting_ids(Cohort::new(schema.clone(), records).unwrap());
        assert!(once.has_unique_ids());
        let kept: HashSet<_> = once.ids().into_iter().collect();
        assert!(removed.iter().all(|id| !kept.contains(id)));
        let (twice, none) = dedup_conflicting_ids(once.clone());
        assert!(none.is_empty());
        assert_eq!(twice, once);
    }
}

#[test]
fn synthetic_cohort_survives_a_file_round_trip() {
    let s = generate(&SynthSpec::new(30, 3, small_schema())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cohort.csv");
    write_cohort(&s.cohort, &path).unwrap();
    let back = load_cohort(&path, Some(s.cohort.schema())).unwrap();
    assert_eq!(back.records(), s.cohort.records());
    let inferred = load_cohort(&path, None).unwrap();
    assert_eq!(inferred.records(), s.cohort.records());
    assert_eq!(inferred.schema().sets(), s.cohort.schema().sets());
}

#[test]
fn full_schema_has_three_fixed_column_sets() {
    let schema = FeatureSchema::standard(&FeatureSet::ALL, 142).unwrap();
    assert_eq!(schema.set_len(FeatureSet::Cat12), 284);
    assert_eq!(schema.set_len(FeatureSet::Desikan), 476);
    assert_eq!(schema.set_len(FeatureSet::Destrieux), 1036);
    schema.check_atlas_sizes().unwrap();
    let s = generate(&SynthSpec::new(12, 0, schema)).unwrap();
    let ids = s.cohort.ids();
    let fused = FeatureMatrix::from_cohort(&s.cohort, &ids, &[FeatureSet::Desikan, FeatureSet::Destrieux]).unwrap();
    assert_eq!(fused.ncols(), 1512);
}

#[test]
fn nan_cell_is_reported_with_position() {
    let text = "participant_id,age,sex,cat12__roi001__gm\na,20,M,1.0\nb,30,F,NaN\n";
    let err = read_cohort(text, None).unwrap_err().to_string();
    assert!(err.contains("row 2") && err.contains("cat12__roi001__gm"), "{err}");
}

fn named(values: DMatrix<f64>, prefix: &str, target: &[f64]) -> FeatureMatrix {
    let ids = (0..values.nrows()).map(|i| format!("r{i}")).collect();
    let names = (0..values.ncols()).map(|j| format!("{prefix}{j}")).collect();
    FeatureMatrix::new(values, ids, names, target.to_vec()).unwrap()
}

#[test]
fn fuse_is_associative() {
    let mut r = rng(4);
    let y: Vec<f64> = (0..7).map(|i| i as f64 + 10.0).collect();
    let mk = |n, p: &str, r: &mut rand_chacha::ChaCha8Rng| {
        named(DMatrix::from_fn(7, n, |_, _| r.random_range(-1.0..1.0)), p, &y)
    };
    let (a, b, c) = (mk(2, "a", &mut r), mk(3, "b", &mut r), mk(1, "c", &mut r));
    let left = fuse(&[fuse(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
    let right = fuse(&[a.clone(), fuse(&[b.clone(), c.clone()]).unwrap()]).unwrap();
    let flat = fuse(&[a.clone(), b, c]).unwrap();
    assert_eq!(left, right);
    assert_eq!(left, flat);
    assert!(fuse(&[a.clone(), a]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaled_training_columns_lie_in_unit_interval(
        cells in prop::collection::vec(-1e4..1e4f64, 12),
        scale in prop::collection::vec(0.1..100.0f64, 3),
        shift in prop::collection::vec(-50.0..50.0f64, 3),
    ) {
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = named(DMatrix::from_row_slice(4, 3, &cells), "f", &y);
        let s = apply_scaler(&fit_scaler(&x).unwrap(), &x).unwrap();
        for j in 0..3 {
            let col = s.values().column(j);
            prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
            if col.iter().any(|v| *v != 0.0) {
                prop_assert!(col.min() == 0.0 && (col.max() - 1.0).abs() < 1e-12);
            }
        }
        // positive affine maps of the input leave the scaled output unchanged
        let moved = DMatrix::from_fn(4, 3, |i, j| x.values()[(i, j)] * scale[j] + shift[j]);
        let xm = x.with_values(moved).unwrap();
        let sm = apply_scaler(&fit_scaler(&xm).unwrap(), &xm).unwrap();
        for (a, b) in s.values().iter().zip(sm.values().iter()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn correlation_is_invariant_to_positive_affine_maps(
        cells in prop::collection::vec(-10.0..10.0f64, 8),
        ages in prop::collection::vec(6.0..86.0f64, 8),
        scale in 0.1..10.0f64,
        shift in -100.0..100.0f64,
    ) {
        let x = named(DMatrix::from_column_slice(8, 1, &cells), "f", &ages);
        let base = correlate_with_age(&x);
        prop_assume!(base.is_ok());
        let base = base.unwrap().features[0].clone();
        prop_assume!(!base.degenerate);
        let oracle = pearson(&cells, &ages);
        prop_assert!((base.r - oracle).abs() < 1e-9);

        let pos = x.with_values(x.values().map(|v| v * scale + shift)).unwrap();
        let neg = x.with_values(x.values().map(|v| -v)).unwrap();
        let aged = x.with_target(ages.iter().map(|a| a * scale + shift).collect()).unwrap();
        prop_assert!((correlate_with_age(&pos).unwrap().features[0].r - base.r).abs() < 1e-9);
        prop_assert!((correlate_with_age(&neg).unwrap().features[0].r + base.r).abs() < 1e-9);
        prop_assert!((correlate_with_age(&aged).unwrap().features[0].r - base.r).abs() < 1e-9);
    }
}

#[test]
fn constant_column_is_degenerate() {
    let x = named(DMatrix::from_element(5, 1, 2.5), "f", &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let rep = correlate_with_age(&x).unwrap();
    assert!(rep.features[0].degenerate);
    assert_eq!(rep.features[0].r, 0.0);
}
