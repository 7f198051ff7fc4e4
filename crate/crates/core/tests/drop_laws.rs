//! Closed-form inter-drop laws against the exact count-based walk.

use proptest::prelude::*;
use redsim_core::analysis::{
    exhaustive_interdrop, red1_interdrop_pmf, red4_interdrop_pmf, red5_interdrop_pmf, DropLawInput, Pmf,
};
use redsim_core::RedVariant;

fn closed(variant: RedVariant, input: &DropLawInput) -> Pmf {
    match variant {
        RedVariant::Red1 => red1_interdrop_pmf(input.p_b).unwrap(),
        RedVariant::Red4 => red4_interdrop_pmf(input).unwrap(),
        RedVariant::Red5 => red5_interdrop_pmf(input).unwrap(),
        v => unreachable!("{v}"),
    }
}

fn exact(variant: RedVariant, input: &DropLawInput) -> Pmf {
    exhaustive_interdrop(variant, input, closed(variant, input).max_n() + 2).unwrap()
}

/// Drop probability per size and bytes carried per size over the support.
fn by_size(input: &DropLawInput, pmf: &Pmf) -> Vec<(u32, f64, f64)> {
    let mut out: Vec<(u32, f64, f64)> = Vec::new();
    for (n, mass) in pmf.support().filter(|&(_, m)| m > 1e-12) {
        let len = input.size_at(n);
        let i = match out.iter().position(|e| e.0 == len) {
            Some(i) => i,
            None => {
                out.push((len, 0.0, 0.0));
                out.len() - 1
            }
        };
        out[i].1 += mass;
        out[i].2 += f64::from(len);
    }
    out
}

#[test]
fn red4_drops_each_size_in_proportion_to_its_bytes() {
    // 1/p_b covers whole pattern periods, so no size is cut short.
    for (sizes, periods) in [(vec![1500, 750, 375], 4.0), (vec![1500, 375], 2.0), (vec![750, 1500, 750, 375], 3.0)] {
        let per_period: f64 = sizes.iter().map(|&l| f64::from(l) / 1500.0).sum();
        let input = DropLawInput::new(1.0 / (per_period * periods), sizes.clone(), 1500).unwrap();
        let pmf = exact(RedVariant::Red4, &input);
        let rows = by_size(&input, &pmf);
        let total_bytes: f64 = rows.iter().map(|r| r.2).sum();
        for (len, p, bytes) in rows {
            assert!((p - bytes / total_bytes).abs() < 1e-12, "{sizes:?} size {len}: {p} vs {}", bytes / total_bytes);
        }
    }
}

#[test]
fn red1_drops_each_arrival_slot_equally() {
    let input = DropLawInput::new(0.1, vec![1500, 750, 375], 1500).unwrap();
    let pmf = exact(RedVariant::Red1, &input);
    assert_eq!(pmf.max_n(), 10);
    for n in 1..=10 {
        assert!((pmf.mass(n) - 0.1).abs() < 1e-12);
    }
}

#[test]
fn red5_favours_dropping_large_packets_more_than_red4() {
    let input = DropLawInput::new(0.05, vec![1500, 750, 375], 1500).unwrap();
    let large = |v| by_size(&input, &exact(v, &input))[0].1;
    assert!(large(RedVariant::Red5) > large(RedVariant::Red4));
    assert!(large(RedVariant::Red4) > large(RedVariant::Red1));
}

proptest! {
    #[test]
    fn closed_forms_match_the_exact_walk(
        p_b in 0.01f64..0.95,
        sizes in prop::collection::vec(40u32..=1500, 1..6),
        v in 0usize..3,
    ) {
        let variant = [RedVariant::Red1, RedVariant::Red4, RedVariant::Red5][v];
        let input = DropLawInput::new(p_b, sizes, 1500).unwrap();
        let c = closed(variant, &input);
        let e = exact(variant, &input);
        prop_assert!((c.total() - 1.0).abs() < 1e-9);
        prop_assert!(c.max_abs_diff(&e) < 1e-12, "{:?}", input);
    }
}
