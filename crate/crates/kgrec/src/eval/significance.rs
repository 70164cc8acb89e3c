//! Paired two-sided t-testing with Bonferroni correction.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

/// Outcome of one paired comparison. `significant` already includes the
/// Bonferroni correction it was computed under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTest {
    pub t: f64,
    pub p: f64,
    pub significant: bool,
}

/// Two-sided p-value of a t statistic with the given degrees of freedom.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    2.0 * dist.cdf(-t.abs())
}

/// Paired two-sided t-test on the per-sample differences a - b, declared
/// significant iff p < alpha / n_comparisons. Degenerate zero-variance
/// differences short-circuit: p = 1 for an all-zero difference, p = 0 for
/// a constant non-zero one.
pub fn paired_significance(
    a: &[f64],
    b: &[f64],
    n_comparisons: usize,
    alpha: f64,
) -> Result<PairedTest, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::SampleMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(EvalError::TooFewSamples(a.len()));
    }
    if n_comparisons == 0 {
        return Err(EvalError::ZeroComparisons);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::BadAlpha(alpha));
    }
    let threshold = alpha / n_comparisons as f64;
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            PairedTest {
                t: 0.0,
                p: 1.0,
                significant: false,
            }
        } else {
            PairedTest {
                t: if mean > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                },
                p: 0.0,
                significant: true,
            }
        });
    }
    let t = mean / (var / n).sqrt();
    let p = two_sided_p(t, n - 1.0);
    Ok(PairedTest {
        t,
        p,
        significant: p < threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn p_values_match_reference_statistics_tables() {
        // (t, df, two-sided p) reference triples
        let cases = [
            (2.5, 4.0, 0.06676654481198813),
            (1.0, 9.0, 0.34343639613791355),
            (4.2, 4.0, 0.01369581030509645),
        ];
        for (t, df, want) in cases {
            let got = two_sided_p(t, df);
            assert!((got - want).abs() < 1e-9, "t={t} df={df}: {got} vs {want}");
        }
    }

    #[test]
    fn five_sample_case_matches_reference_values() {
        let a = [0.90, 0.91, 0.92, 0.93, 0.94];
        let b = [0.80, 0.82, 0.84, 0.81, 0.83];
        let res = paired_significance(&a, &b, 6, 0.05).unwrap();
        assert!((res.t - 14.142135623730987).abs() < 1e-6, "t {}", res.t);
        assert!((res.p - 0.0001451281706131962).abs() < 1e-9, "p {}", res.p);
        assert!(res.significant);
    }

    #[test]
    fn strongly_separated_samples_are_significant() {
        let a: Vec<f64> = (0..30).map(|i| 2.0 + (i % 3) as f64 * 0.01).collect();
        let b: Vec<f64> = (0..30).map(|i| 1.0 + (i % 5) as f64 * 0.01).collect();
        let res = paired_significance(&a, &b, 6, 0.05).unwrap();
        assert!(res.p < 1e-6, "p {}", res.p);
        assert!(res.significant);
    }

    #[test]
    fn identical_samples_are_never_significant() {
        let a = [0.5, 0.6, 0.7];
        let res = paired_significance(&a, &a, 1, 0.05).unwrap();
        assert_eq!(res.p, 1.0);
        assert_eq!(res.t, 0.0);
        assert!(!res.significant);
    }

    #[test]
    fn constant_nonzero_difference_is_a_zero_p_limit() {
        // eighths are exact in binary, so the differences are bit-identical
        let a = [1.0, 1.125, 1.25, 1.375];
        let b = [0.875, 1.0, 1.125, 1.25];
        let res = paired_significance(&a, &b, 3, 0.05).unwrap();
        assert_eq!(res.p, 0.0);
        assert_eq!(res.t, f64::INFINITY);
        assert!(res.significant);
        let flipped = paired_significance(&b, &a, 3, 0.05).unwrap();
        assert_eq!(flipped.t, f64::NEG_INFINITY);
        assert!(flipped.significant);
    }

    #[test]
    fn contract_violations_are_rejected() {
        assert!(matches!(
            paired_significance(&[1.0], &[1.0, 2.0], 1, 0.05),
            Err(EvalError::SampleMismatch { .. })
        ));
        assert!(matches!(
            paired_significance(&[1.0], &[2.0], 1, 0.05),
            Err(EvalError::TooFewSamples(1))
        ));
        assert!(matches!(
            paired_significance(&[1.0, 2.0], &[2.0, 3.0], 0, 0.05),
            Err(EvalError::ZeroComparisons)
        ));
        assert!(matches!(
            paired_significance(&[1.0, 2.0], &[2.0, 3.0], 1, 1.5),
            Err(EvalError::BadAlpha(_))
        ));
    }

    proptest! {
        #[test]
        fn bonferroni_flag_is_monotone_in_comparisons(
            diffs in proptest::collection::vec(-1.0f64..1.0, 2..12),
            small in 1usize..5,
            extra in 0usize..20,
        ) {
            let a: Vec<f64> = diffs.iter().map(|d| 0.5 + d).collect();
            let b = vec![0.5; a.len()];
            let loose = paired_significance(&a, &b, small, 0.05).unwrap();
            let strict = paired_significance(&a, &b, small + extra, 0.05).unwrap();
            prop_assert_eq!(loose.p, strict.p);
            // a stricter correction can only lose significance
            prop_assert!(!(strict.significant && !loose.significant));
        }
    }
}
