//! Ground truth, error metrics, spectrum statistics and the rank-r error bound.

mod bound;
mod picard;
mod report;
mod rollout;

pub use bound::{theorem_bound, BoundTerms};
pub use picard::{picard_profile, PicardProfile};
pub use report::{Checkpoint, EvalReport, ReportError};
pub use rollout::{grid_states, rollout_values, rmse, RolloutValues};

/// Smallest `k` whose leading singular values hold `mass_fraction` of the
/// total mass. `sigma` must be sorted non-increasing; all zeros gives 0.
pub fn spectrum_count(sigma: &[f64], mass_fraction: f64) -> usize {
    let total: f64 = sigma.iter().sum();
    if !(total > 0.0) {
        return 0;
    }
    let mut acc = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        acc += s;
        // relative slack so a fraction of exactly 1 is reached despite round-off
        if acc >= mass_fraction * total * (1.0 - 1e-12) {
            return i + 1;
        }
    }
    sigma.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn count_examples() {
        assert_eq!(spectrum_count(&[1.0, 0.0, 0.0], 0.95), 1);
        assert_eq!(spectrum_count(&[0.5, 0.3, 0.15, 0.05], 0.95), 3);
        assert_eq!(spectrum_count(&[0.0, 0.0], 0.95), 0);
        assert_eq!(spectrum_count(&[], 0.95), 0);
    }

    proptest! {
        #[test]
        fn full_mass_counts_nonzeros(mut s in proptest::collection::vec(prop_oneof![Just(0.0), 1e-3f64..10.0], 1..30)) {
            s.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let nonzero = s.iter().filter(|&&v| v > 0.0).count();
            prop_assert_eq!(spectrum_count(&s, 1.0), nonzero);
        }
    }
}
