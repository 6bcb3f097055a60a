//! Tie-line quality metrics: the smoothing penalty charged inside the
//! dispatch objectives and the descriptive indices reported afterwards.

use super::GridError;

/// Quadratic smoothing cost of a tie-line sequence:
/// `Σ_t step·(P_t − P_{t−1})² + mean·(P_t − P̄)²`, with `P̄` the sequence
/// mean. `start` supplies the power preceding the first period; when absent
/// the first step difference is zero.
pub fn smoothing_penalty(grid_mw: &[f64], start: Option<f64>, step: f64, mean: f64) -> f64 {
    if grid_mw.is_empty() {
        return 0.0;
    }
    let avg = grid_mw.iter().sum::<f64>() / grid_mw.len() as f64;
    let mut prev = start.unwrap_or(grid_mw[0]);
    let mut total = 0.0;
    for &p in grid_mw {
        let d = p - prev;
        let m = p - avg;
        total += step * d * d + mean * m * m;
        prev = p;
    }
    total
}

/// Descriptive fluctuation indices of a tie-line sequence: the mean absolute
/// period-to-period step and the mean absolute deviation from the day mean.
pub fn fluctuation_indices(grid_mw: &[f64]) -> Result<(f64, f64), GridError> {
    let n = grid_mw.len();
    if n < 2 {
        return Err(GridError::Invalid(format!(
            "fluctuation indices need at least 2 periods, got {n}"
        )));
    }
    let steps: f64 = grid_mw.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let avg = grid_mw.iter().sum::<f64>() / n as f64;
    let spread: f64 = grid_mw.iter().map(|p| (p - avg).abs()).sum();
    Ok((steps / (n - 1) as f64, spread / n as f64))
}

/// Percentage of voltage samples inside the closed band `[v_min, v_max]`.
pub fn voltage_satisfaction(samples: &[f64], v_min: f64, v_max: f64) -> Result<f64, GridError> {
    if !(v_min < v_max) {
        return Err(GridError::Invalid(format!(
            "voltage band [{v_min}, {v_max}] is empty"
        )));
    }
    if samples.is_empty() {
        return Err(GridError::Invalid(
            "voltage satisfaction needs at least one sample".into(),
        ));
    }
    let inside = samples
        .iter()
        .filter(|v| (v_min..=v_max).contains(*v))
        .count();
    Ok(100.0 * inside as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smoothing_hand_values() {
        assert_eq!(smoothing_penalty(&[2.0, 2.0, 2.0], Some(2.0), 3.0, 5.0), 0.0);
        let v = smoothing_penalty(&[1.0, 3.0], Some(1.0), 1.0, 1.0);
        assert!((v - 6.0).abs() < 1e-12);
        assert_eq!(smoothing_penalty(&[4.0, -2.0, 9.0], Some(0.0), 0.0, 0.0), 0.0);
    }

    #[test]
    fn smoothing_without_a_start_skips_the_first_step() {
        let with = smoothing_penalty(&[1.0, 3.0], Some(0.0), 1.0, 0.0);
        let without = smoothing_penalty(&[1.0, 3.0], None, 1.0, 0.0);
        assert!((with - 5.0).abs() < 1e-12);
        assert!((without - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fluctuation_hand_values() {
        let (s, m) = fluctuation_indices(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!((s, m), (0.0, 0.0));
        let (s, m) = fluctuation_indices(&[1.0, 2.0, 4.0]).unwrap();
        assert!((s - 1.5).abs() < 1e-12);
        assert!((m - 10.0 / 9.0).abs() < 1e-12);
        let (s, m) = fluctuation_indices(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((m - 0.5).abs() < 1e-12);
        assert!(fluctuation_indices(&[1.0]).is_err());
    }

    #[test]
    fn satisfaction_hand_values() {
        assert_eq!(
            voltage_satisfaction(&[0.96, 1.0, 1.04], 0.95, 1.05).unwrap(),
            100.0
        );
        assert_eq!(
            voltage_satisfaction(&[0.96, 1.0, 1.06, 1.0], 0.95, 1.05).unwrap(),
            75.0
        );
        // Band edges count as satisfied.
        assert_eq!(voltage_satisfaction(&[0.95, 1.05], 0.95, 1.05).unwrap(), 100.0);
        assert!(voltage_satisfaction(&[1.0], 1.05, 0.95).is_err());
        assert!(voltage_satisfaction(&[], 0.95, 1.05).is_err());
    }

    proptest! {
        #[test]
        fn indices_are_nonnegative_and_shift_invariant(
            seq in proptest::collection::vec(-10.0f64..10.0, 2..40),
            shift in -5.0f64..5.0,
        ) {
            let (s, m) = fluctuation_indices(&seq).unwrap();
            prop_assert!(s >= 0.0 && m >= 0.0);
            let shifted: Vec<f64> = seq.iter().map(|p| p + shift).collect();
            let (s2, m2) = fluctuation_indices(&shifted).unwrap();
            prop_assert!((s - s2).abs() < 1e-9);
            prop_assert!((m - m2).abs() < 1e-9);
        }

        #[test]
        fn smoothing_is_nonnegative(
            seq in proptest::collection::vec(-10.0f64..10.0, 1..30),
            start in -10.0f64..10.0,
            step in 0.0f64..5.0,
            mean in 0.0f64..5.0,
        ) {
            prop_assert!(smoothing_penalty(&seq, Some(start), step, mean) >= 0.0);
        }
    }
}
