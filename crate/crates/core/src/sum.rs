//! Summation helpers shared by the evaluator and the solver.

/// Neumaier-compensated sum, accumulated in iteration order.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Running prefix sums of `lhs_i - ratio * rhs_i`.
///
/// This is the single definition of the causality residuals: the evaluator
/// and the repair sweep both go through [`prefix_step`] so that a repaired
/// allocation reads back with residuals that are exactly non-positive.
pub fn running_difference(lhs: &[f64], rhs: &[f64], ratio: f64) -> Vec<f64> {
    let mut acc = 0.0;
    lhs.iter()
        .zip(rhs)
        .map(|(&l, &r)| {
            acc = prefix_step(acc, l, r, ratio);
            acc
        })
        .collect()
}

#[inline]
pub fn prefix_step(acc: f64, lhs: f64, rhs: f64, ratio: f64) -> f64 {
    acc + (lhs - ratio * rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(neumaier_sum(v), 2.0);
        assert_eq!(neumaier_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn running_difference_prefixes() {
        let r = running_difference(&[0.0, 50.0], &[100.0, 100.0], 1.0);
        assert_eq!(r, vec![-100.0, -150.0]);
    }
}
