//! Binary stroke decisions with a straight-through sigmoid gradient.

use crate::stroke::sigmoid;

/// Hard decision: `1` when `c >= 0`, else `0`.
pub fn binary_decision(c: f64) -> bool {
    c >= 0.0
}

/// Surrogate derivative used in the backward pass:
/// `exp(-c) / (1 + exp(-c))^2`, i.e. the logistic derivative.
pub fn binary_decision_grad(c: f64) -> f64 {
    let s = sigmoid(c);
    s * (1.0 - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn forward_values() {
        assert!(binary_decision(0.0));
        assert!(!binary_decision(-0.5));
        assert!(binary_decision(1e-300));
        assert!(!binary_decision(f64::NAN));
    }

    #[test]
    fn gradient_at_zero() {
        assert!((binary_decision_grad(0.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_logistic_derivative() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let c: f64 = rng.random_range(-20.0..20.0);
            let e = (-c).exp();
            let expected = e / ((1.0 + e) * (1.0 + e));
            assert!((binary_decision_grad(c) - expected).abs() < 1e-9);
        }
    }
}
