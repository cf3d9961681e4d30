//! Shipped rule base against an independent Mamdani evaluation, plus its
//! intended behaviour.

use hess_core::fuzzy::{FuzzyRuleBase, Variable};
use proptest::prelude::*;

/// Min/max inference with a centroid by trapezoidal integration on `n + 1`
/// uniform points.
fn reference_k(rb: &FuzzyRuleBase, x: [f64; 3], n: usize) -> f64 {
    let inputs = [Variable::Preq, Variable::SocBat, Variable::SocSc];
    let out = rb.terms(Variable::Kbat);
    let mut strength = vec![0.0f64; out.len()];
    for rule in rb.rules() {
        let mut w = 1.0f64;
        for (slot, term) in rule.antecedent.iter().enumerate() {
            if let Some(t) = term {
                w = w.min(rb.terms(inputs[slot])[*t].degree(x[slot]));
            }
        }
        strength[rule.consequent] = strength[rule.consequent].max(w);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=n {
        let y = i as f64 / n as f64;
        let mu = out.iter().zip(&strength).map(|(mf, s)| mf.degree(y).min(*s)).fold(0.0, f64::max);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        num += w * y * mu;
        den += w * mu;
    }
    num / den
}

#[test]
fn matches_reference_inference() {
    let rb = FuzzyRuleBase::default_rules();
    for p in (0..=20).map(|i| -1.0 + 0.1 * i as f64) {
        for b in (0..=10).map(|i| 0.1 * i as f64) {
            for s in (0..=10).map(|i| 0.1 * i as f64) {
                let k = rb.evaluate(p, b, s);
                let r = reference_k(&rb, [p, b, s], 500);
                assert!((k - r).abs() < 1e-9, "({p}, {b}, {s}): {k} vs {r}");
                let dense = reference_k(&rb, [p, b, s], 50_000);
                assert!((k - dense).abs() < 5e-3, "({p}, {b}, {s}): {k} vs dense {dense}");
            }
        }
    }
}

#[test]
fn empty_bank_puts_load_on_battery() {
    let rb = FuzzyRuleBase::default_rules();
    for p in [0.05, 0.2, 0.5, 0.8, 1.0] {
        for b in [0.15, 0.5, 0.9] {
            for s in [0.0, 0.1, 0.2] {
                assert!(rb.evaluate(p, b, s) >= 0.95, "K({p}, {b}, {s}) = {}", rb.evaluate(p, b, s));
            }
        }
    }
}

#[test]
fn heavy_load_with_full_bank_shares() {
    let rb = FuzzyRuleBase::default_rules();
    assert!(rb.evaluate(1.0, 0.9, 0.9) <= 0.5);
}

#[test]
fn output_is_continuous() {
    let rb = FuzzyRuleBase::default_rules();
    for b in [0.2, 0.5, 0.8] {
        for s in [0.3, 0.6, 0.9] {
            let mut prev = rb.evaluate(-1.0, b, s);
            for i in 1..=2000 {
                let k = rb.evaluate(-1.0 + 1e-3 * i as f64, b, s);
                assert!((k - prev).abs() < 0.05, "jump at p={}", -1.0 + 1e-3 * i as f64);
                prev = k;
            }
        }
    }
}

#[test]
fn battery_share_non_increasing_in_bank_charge() {
    let rb = FuzzyRuleBase::default_rules();
    for p in [0.1, 0.3, 0.5, 0.7, 1.0] {
        for b in [0.2, 0.5, 0.8] {
            let ks: Vec<f64> = (0..=100).map(|i| rb.evaluate(p, b, i as f64 / 100.0)).collect();
            for w in ks.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "p={p} b={b}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

proptest! {
    #[test]
    fn output_in_unit_interval(p in -3.0f64..3.0, b in -0.5f64..1.5, s in -0.5f64..1.5) {
        let k = FuzzyRuleBase::default_rules().evaluate(p, b, s);
        prop_assert!((0.0..=1.0).contains(&k));
    }
}
