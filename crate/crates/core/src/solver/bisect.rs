//! Monotone root search used to pin the equality multipliers.

use super::SolverError;

/// Finds a scalar where the nondecreasing, continuous `total` reaches
/// `target` to within `tol`.
///
/// `lo` must satisfy `total(lo) <= target`. The upper bracket is found by
/// doubling a step of `initial_width` away from `lo`, at most `max_expand`
/// times. When `total(lo)` already meets the target (e.g. a zero target
/// with `lo` at the clamp edge) `lo` itself is returned.
pub fn bisect<F>(
    target: f64,
    mut total: F,
    lo: f64,
    initial_width: f64,
    tol: f64,
    max_expand: u32,
) -> Result<f64, SolverError>
where
    F: FnMut(f64) -> f64,
{
    let f_lo = total(lo);
    if f_lo >= target - tol {
        return Ok(lo);
    }

    let mut lo = lo;
    let mut width = if initial_width > 0.0 && initial_width.is_finite() {
        initial_width
    } else {
        lo.abs().max(f64::MIN_POSITIVE)
    };
    let mut hi = lo + width;
    let mut expansions = 0;
    loop {
        let f_hi = total(hi);
        if f_hi >= target {
            if f_hi - target <= tol {
                return Ok(hi);
            }
            break;
        }
        lo = hi;
        expansions += 1;
        if expansions > max_expand || !hi.is_finite() {
            return Err(SolverError::BracketExpansion {
                target,
                reached: f_hi,
                expansions: max_expand,
            });
        }
        width *= 2.0;
        hi = lo + width;
    }

    let (mut f_l, mut f_h) = (f64::NAN, f64::NAN);
    loop {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f = total(mid);
        if (f - target).abs() <= tol {
            return Ok(mid);
        }
        if f < target {
            lo = mid;
            f_l = f;
        } else {
            hi = mid;
            f_h = f;
        }
    }
    // Bracket collapsed to adjacent floats; keep the closer end.
    if f_l.is_nan() {
        f_l = total(lo);
    }
    if f_h.is_nan() {
        f_h = total(hi);
    }
    Ok(if (target - f_l) <= (f_h - target) {
        lo
    } else {
        hi
    })
}
