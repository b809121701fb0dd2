mod common;

use common::{assignment_strategy, build_instance, load_fixture};
use proptest::prelude::*;
use unitax::label_space::{build_training_taxonomy, TaxonomyKind};
use unitax::taxonomy::{
    build_universal, build_universal_traced, parse_taxonomy_json, relate, signature_partition,
    universal_to_json, ClassRelation, ConceptSet, FlatTaxonomy, TaxonomyError,
};

fn counts(name: &str) -> (usize, usize, usize) {
    let set = load_fixture(name);
    let ut = set.compile().unwrap();
    assert!(ut.check_invariants(&set.taxonomies).is_empty());
    let naive =
        build_training_taxonomy(TaxonomyKind::NaiveConcat, &set.universe, &set.taxonomies).unwrap();
    let merge = build_training_taxonomy(TaxonomyKind::PartialMerge, &set.universe, &set.taxonomies)
        .unwrap();
    (ut.len(), naive.len(), merge.len())
}

#[test]
fn city_vistas_counts() {
    assert_eq!(counts("city_vistas.json"), (65, 93, 72));
}

#[test]
fn wd2_vistas_counts() {
    assert_eq!(counts("wd2_vistas.json"), (67, 98, 76));
}

#[test]
fn wd2_car_maps_to_the_three_car_concepts() {
    let set = load_fixture("wd2_vistas.json");
    let ut = set.compile().unwrap();
    let targets = ut
        .mapping("Vistas")
        .unwrap()
        .targets_of("object--vehicle--car")
        .unwrap();
    let names: Vec<&str> = targets
        .iter()
        .map(|&k| ut.classes[k].name.as_str())
        .collect();
    assert_eq!(
        names,
        [
            "object--vehicle--car",
            "object--vehicle--van",
            "object--vehicle--pickup"
        ]
    );
}

#[test]
fn cityscapes_road_subsumes_markings_and_manholes() {
    let set = load_fixture("city_vistas.json");
    let ut = set.compile().unwrap();
    let road = ut
        .mapping("Cityscapes")
        .unwrap()
        .targets_of("road")
        .unwrap();
    let names: Vec<&str> = road.iter().map(|&k| ut.classes[k].name.as_str()).collect();
    assert!(names.contains(&"marking--general"));
    assert!(names.contains(&"object--manhole"));
    assert_eq!(names.len(), 9);
}

#[test]
fn universal_output_roundtrips_through_json() {
    let set = load_fixture("city_vistas.json");
    let ut = set.compile().unwrap();
    let text = universal_to_json(&set.universe, &ut);
    assert_eq!(
        text,
        universal_to_json(&set.universe, &set.compile().unwrap())
    );
    let again = parse_taxonomy_json(&text).unwrap();
    let ut2 = again.compile().unwrap();
    assert_eq!(ut2.classes, ut.classes);
}

#[test]
fn single_dataset_compiles_to_itself() {
    let text = r#"{"universe": ["a", "b", "c"],
        "datasets": [{"name": "D", "classes": [
            {"name": "ab", "concepts": ["a", "b"]}, {"name": "c", "concepts": ["c"]}]}]}"#;
    let set = parse_taxonomy_json(text).unwrap();
    let ut = set.compile().unwrap();
    let extents: Vec<_> = ut.classes.iter().map(|c| c.extent.clone()).collect();
    let inputs: Vec<_> = set.taxonomies[0]
        .classes
        .iter()
        .map(|c| c.extent.clone())
        .collect();
    assert_eq!(extents, inputs);
    assert_eq!(ut.classes[0].name, "a+b");
}

#[test]
fn overlapping_input_is_rejected() {
    let text = r#"{"universe": ["road", "marking"],
        "datasets": [{"name": "D", "classes": [
            {"name": "road", "concepts": ["road", "marking"]}, {"name": "marking", "concepts": ["marking"]}]}]}"#;
    let set = parse_taxonomy_json(text).unwrap();
    assert!(matches!(set.compile(), Err(TaxonomyError::NotFlat { .. })));
}

#[test]
fn empty_input_is_rejected() {
    let set = parse_taxonomy_json(r#"{"universe": ["a"], "datasets": []}"#).unwrap();
    assert_eq!(set.compile().unwrap_err(), TaxonomyError::NoTaxonomies);
}

#[test]
fn names_override_generated_names() {
    let text = r#"{"universe": ["truck", "pickup", "trailer"],
        "datasets": [
            {"name": "VIPER", "classes": [{"name": "truck", "concepts": ["truck", "pickup"]}]},
            {"name": "Ade", "classes": [{"name": "truck", "concepts": ["truck", "trailer"]}]}],
        "names": {"pickup": "wd-pickup"}}"#;
    let ut = parse_taxonomy_json(text).unwrap().compile().unwrap();
    let names: Vec<&str> = ut.classes.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["truck", "wd-pickup", "trailer"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rewrite_compiler_matches_signature_oracle(a in assignment_strategy()) {
        let (universe, taxonomies) = build_instance(&a);
        let rewritten = build_universal(&universe, &taxonomies).unwrap();
        let oracle = signature_partition(&universe, &taxonomies).unwrap();
        prop_assert_eq!(&rewritten, &oracle);
        prop_assert!(rewritten.check_invariants(&taxonomies).is_empty());
        prop_assert!(oracle.check_invariants(&taxonomies).is_empty());
    }

    #[test]
    fn potential_strictly_decreases(a in assignment_strategy()) {
        let (universe, taxonomies) = build_instance(&a);
        let (_, trace) = build_universal_traced(&universe, &taxonomies).unwrap();
        prop_assert_eq!(trace.potential.len(), trace.rewrites.len() + 1);
        for w in trace.potential.windows(2) {
            prop_assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn compiling_the_output_is_idempotent(a in assignment_strategy()) {
        let (universe, taxonomies) = build_instance(&a);
        let ut = build_universal(&universe, &taxonomies).unwrap();
        let again = build_universal(&universe, &[ut.as_flat("U")]).unwrap();
        prop_assert_eq!(&again.classes, &ut.classes);
        let m = again.mapping("U").unwrap();
        for (k, c) in m.classes.iter().enumerate() {
            prop_assert_eq!(&c.targets, &vec![k]);
        }
    }

    #[test]
    fn compilation_is_deterministic(a in assignment_strategy()) {
        let (universe, taxonomies) = build_instance(&a);
        let first = universal_to_json(&universe, &build_universal(&universe, &taxonomies).unwrap());
        let second = universal_to_json(&universe, &build_universal(&universe, &taxonomies).unwrap());
        prop_assert_eq!(first, second);
    }

    #[test]
    fn relate_is_consistent_both_ways(
        a in prop::collection::btree_set(0..12usize, 1..8),
        b in prop::collection::btree_set(0..12usize, 1..8),
    ) {
        let sa = ConceptSet::from_indices(12, a.iter().copied());
        let sb = ConceptSet::from_indices(12, b.iter().copied());
        let ab = relate(&sa, &sb).unwrap();
        let ba = relate(&sb, &sa).unwrap();
        let expected = match ab {
            ClassRelation::SupersetOf => ClassRelation::SubsetOf,
            ClassRelation::SubsetOf => ClassRelation::SupersetOf,
            other => other,
        };
        prop_assert_eq!(ba, expected);
        let shared = a.intersection(&b).count();
        let truth = if a == b {
            ClassRelation::Equal
        } else if shared == 0 {
            ClassRelation::Disjoint
        } else if shared == b.len() {
            ClassRelation::SupersetOf
        } else if shared == a.len() {
            ClassRelation::SubsetOf
        } else {
            ClassRelation::Overlap
        };
        prop_assert_eq!(ab, truth);
    }
}

#[test]
fn uncovered_concepts_stay_out() {
    let (universe, taxonomies) = build_instance(&vec![
        vec![Some(0), None, Some(1)],
        vec![Some(0), None, None],
    ]);
    let ut = build_universal(&universe, &taxonomies).unwrap();
    assert!(ut.classes.iter().all(|c| !c.extent.contains(1)));
    assert_eq!(ut.len(), 2);
}

#[test]
fn capacity_mismatch_is_an_error() {
    let (universe, mut taxonomies) =
        build_instance(&vec![vec![Some(0), Some(1)], vec![Some(0), Some(0)]]);
    taxonomies.push(
        FlatTaxonomy::new("odd")
            .with_class("x", ConceptSet::from_indices(5, [0]))
            .unwrap(),
    );
    assert!(build_universal(&universe, &taxonomies).is_err());
}
