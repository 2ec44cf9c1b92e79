//! Filter summaries against a direct per-particle evaluation.

mod common;

use std::collections::BTreeSet;

use daedalus_core::filter::{apply_filters, filter_summary, FilterSpec, FilterState};
use daedalus_core::labels::{LabelAlphabet, LabelStore, UNLABELED};
use daedalus_core::layout::BinSpec;
use daedalus_core::{Dataset, FacetKey};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Filters {
    lots: Option<u8>,
    suppliers: Option<u8>,
    area: Option<(u8, u8)>,
    elongation: Option<(f64, f64)>,
    shape: Option<u8>,
}

fn subset<'a>(mask: u8, items: &[&'a str]) -> Vec<&'a str> {
    items
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, s)| *s)
        .collect()
}

fn specs(f: &Filters, alphabet: &LabelAlphabet) -> Vec<FilterSpec> {
    let mut out = Vec::new();
    if let Some(m) = f.lots {
        out.push(FilterSpec::include(
            FacetKey::attribute("Lot"),
            subset(m, &common::LOTS),
        ));
    }
    if let Some(m) = f.suppliers {
        out.push(FilterSpec::include(
            FacetKey::attribute("Supplier"),
            subset(m, &common::SUPPLIERS),
        ));
    }
    if let Some((a, b)) = f.area {
        out.push(FilterSpec::range(
            FacetKey::attribute("Area"),
            f64::from(a.min(b)),
            f64::from(a.max(b)),
        ));
    }
    if let Some((a, b)) = f.elongation {
        out.push(FilterSpec::range(
            FacetKey::attribute("Elongation"),
            a.min(b),
            a.max(b),
        ));
    }
    if let Some(m) = f.shape {
        let all = [
            common::LABELS[0],
            common::LABELS[1],
            common::LABELS[2],
            UNLABELED,
        ];
        out.push(FilterSpec::include(
            FacetKey::Alphabet(alphabet.id),
            subset(m, &all),
        ));
    }
    out
}

/// Whether particle `i` passes `f`, read straight from its values.
fn passes(
    f: &Filters,
    key: Option<&str>,
    ds: &Dataset,
    store: &LabelStore,
    alphabet: &LabelAlphabet,
    i: usize,
) -> bool {
    let p = &ds.particles[i];
    let skip = |k: &str| key == Some(k);
    let cat_in = |attr: &str, mask: u8, items: &[&str]| {
        subset(mask, items).contains(&p.category(attr).unwrap())
    };
    let lot = skip("Lot") || f.lots.is_none_or(|m| cat_in("Lot", m, &common::LOTS));
    let sup = skip("Supplier")
        || f.suppliers
            .is_none_or(|m| cat_in("Supplier", m, &common::SUPPLIERS));
    let area = skip("Area")
        || f.area.is_none_or(|(a, b)| {
            let v = p.number("Area").unwrap();
            v >= f64::from(a.min(b)) && v <= f64::from(a.max(b))
        });
    let elong = skip("Elongation")
        || f.elongation.is_none_or(|(a, b)| {
            let v = p.number("Elongation").unwrap();
            v >= a.min(b) && v <= a.max(b)
        });
    let shape = skip("Shape")
        || f.shape.is_none_or(|m| {
            let name = match store.label_of(alphabet.id, &p.id) {
                Some(l) => alphabet.label(l).unwrap().name.as_str(),
                None => UNLABELED,
            };
            let all = [
                common::LABELS[0],
                common::LABELS[1],
                common::LABELS[2],
                UNLABELED,
            ];
            subset(m, &all).contains(&name)
        });
    lot && sup && area && elong && shape
}

fn filters() -> impl Strategy<Value = Filters> {
    (
        prop::option::of(1u8..16),
        prop::option::of(1u8..8),
        prop::option::of((0u8..100, 0u8..100)),
        prop::option::of((1.0f64..3.0, 1.0f64..3.0)),
        prop::option::of(1u8..16),
    )
        .prop_map(|(lots, suppliers, area, elongation, shape)| Filters {
            lots,
            suppliers,
            area,
            elongation,
            shape,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bins_partition_and_conjunction_is_order_independent(
        seed in 0u64..1_000_000,
        n in 1usize..80,
        f in filters(),
        rotate in 0usize..5,
    ) {
        let ds = common::dataset(n, seed);
        let (store, alphabet) = common::labeled_store(&ds, seed ^ 0x5eed);
        let specs = specs(&f, &alphabet);
        let state = FilterState::new(specs.clone()).unwrap();
        let mut reordered = specs.clone();
        reordered.reverse();
        if !reordered.is_empty() {
            let k = rotate % reordered.len();
            reordered.rotate_left(k);
        }
        let reordered = FilterState::new(reordered).unwrap();

        let mask = apply_filters(&state, &ds, &store).unwrap();
        prop_assert_eq!(&mask, &apply_filters(&reordered, &ds, &store).unwrap());
        for (i, &m) in mask.iter().enumerate() {
            prop_assert_eq!(m, passes(&f, None, &ds, &store, &alphabet, i));
        }
        let included = mask.iter().filter(|&&m| m).count();

        let area_bins = BinSpec::from_edges("Area", vec![0.0, 25.0, 50.0, 75.0, 100.0]).unwrap();
        let elong_bins = BinSpec::from_edges("Elongation", vec![1.0, 1.5, 2.0, 2.5, 3.0]).unwrap();
        let keys: [(FacetKey, &str, Option<&BinSpec>); 5] = [
            (FacetKey::attribute("Lot"), "Lot", None),
            (FacetKey::attribute("Supplier"), "Supplier", None),
            (FacetKey::attribute("Area"), "Area", Some(&area_bins)),
            (FacetKey::attribute("Elongation"), "Elongation", Some(&elong_bins)),
            (FacetKey::Alphabet(alphabet.id), "Shape", None),
        ];
        for (key, name, bins) in keys {
            let summary = filter_summary(&state, &ds, &store, &key, bins).unwrap();
            prop_assert_eq!(&summary, &filter_summary(&reordered, &ds, &store, &key, bins).unwrap());
            prop_assert_eq!(summary.total, n);
            prop_assert_eq!(summary.included, included);
            let mut total = 0;
            for bin in &summary.bins {
                prop_assert_eq!(bin.included + bin.excluded_by_self + bin.excluded_by_others, bin.total);
                total += bin.total;
            }
            prop_assert_eq!(total, n);
            prop_assert_eq!(summary.bins.iter().map(|b| b.included).sum::<usize>(), included);
            // the facet's own filter is ignored when counting what others exclude
            let others_pass = (0..n).filter(|&i| passes(&f, Some(name), &ds, &store, &alphabet, i)).count();
            let self_excluded: usize = summary.bins.iter().map(|b| b.excluded_by_self).sum();
            let others_excluded: usize = summary.bins.iter().map(|b| b.excluded_by_others).sum();
            prop_assert_eq!(others_excluded + included, n - self_excluded);
            prop_assert!(included <= others_pass);
        }
    }
}

#[test]
fn one_filter_per_key() {
    let key = FacetKey::attribute("Lot");
    let mut state = FilterState::default();
    state.set(FilterSpec::include(key.clone(), ["1"]));
    state.set(FilterSpec::include(key.clone(), ["2", "3"]));
    assert_eq!(state.specs().len(), 1);
    let expected: BTreeSet<String> = ["2", "3"].iter().map(|s| s.to_string()).collect();
    assert_eq!(
        state.get(&key).unwrap().predicate,
        daedalus_core::filter::Predicate::Include(expected)
    );
    assert!(FilterState::new(vec![
        FilterSpec::include(key.clone(), ["1"]),
        FilterSpec::include(key, ["2"])
    ])
    .is_err());
}

#[test]
fn empty_include_and_inverted_range_are_rejected() {
    let ds = common::dataset(10, 1);
    let store = LabelStore::new(ds.ids().map(String::from));
    let empty = FilterSpec::include(FacetKey::attribute("Lot"), Vec::<String>::new());
    assert!(empty.evaluate(&ds, &store).is_err());
    assert!(FilterSpec::range(FacetKey::attribute("Area"), 5.0, 1.0)
        .evaluate(&ds, &store)
        .is_err());
    assert!(FilterSpec::range(FacetKey::attribute("Lot"), 1.0, 2.0)
        .evaluate(&ds, &store)
        .is_err());
    assert!(FilterSpec::include(FacetKey::attribute("Lot"), ["9"])
        .evaluate(&ds, &store)
        .is_err());
}
