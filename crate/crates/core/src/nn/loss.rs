use crate::corpus::Label;

/// Two-class softmax with max subtraction.
pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

/// `-log softmax(logits)[label]` via log-sum-exp.
pub fn cross_entropy(logits: [f64; 2], label: Label) -> f64 {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    lse - logits[label.index()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_cost_ln2() {
        for label in Label::ALL {
            assert!((cross_entropy([0.0, 0.0], label) - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_logits() {
        assert!(cross_entropy([30.0, -30.0], Label::Real) < 1e-12);
        assert!((cross_entropy([30.0, -30.0], Label::Foil) - 60.0).abs() < 1e-9);
        let p = softmax([800.0, -800.0]);
        assert!(p[0].is_finite() && p[1].is_finite());
    }

    proptest! {
        #[test]
        fn matches_naive_form(a in -30.0f64..30.0, b in -30.0f64..30.0, foil in any::<bool>()) {
            let label = if foil { Label::Foil } else { Label::Real };
            let naive = -((if foil { b } else { a }).exp() / (a.exp() + b.exp())).ln();
            prop_assert!((cross_entropy([a, b], label) - naive).abs() < 1e-9);
        }

        #[test]
        fn softmax_sums_to_one(a in -700.0f64..700.0, b in -700.0f64..700.0) {
            let p = softmax([a, b]);
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
            prop_assert!(p[0] >= 0.0 && p[1] >= 0.0);
        }
    }
}
