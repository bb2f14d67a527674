//! Integer-order Bessel functions of the first kind, used as Chebyshev
//! expansion coefficients of `exp(-i x y)` on `y in [-1, 1]`.

/// Returns `J_0(x), J_1(x), ..., J_K(x)` for `x >= 0`, truncated after the
/// last order whose magnitude exceeds `cutoff`.
///
/// Miller's backward recurrence started well above `x`, normalized with
/// `J_0 + 2 sum J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, cutoff: f64) -> Vec<f64> {
    assert!(
        x >= 0.0 && x.is_finite(),
        "bessel_j_sequence needs finite x >= 0"
    );
    if x == 0.0 {
        return vec![1.0];
    }
    let start = start_order(x);
    let mut j = vec![0.0; start + 2];
    j[start + 1] = 0.0;
    j[start] = 1e-300;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        j[k - 1] = (k as f64) * two_over_x * j[k] - j[k + 1];
        if j[k - 1].abs() > 1e250 {
            for v in j[k - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let mut norm = j[0];
    for k in (2..=start).step_by(2) {
        norm += 2.0 * j[k];
    }
    let inv = 1.0 / norm;
    for v in j.iter_mut() {
        *v *= inv;
    }
    // Orders below x are oscillatory; only the evanescent tail is cut.
    let last = j
        .iter()
        .rposition(|v| v.abs() > cutoff)
        .unwrap_or(0)
        .max(x.ceil() as usize)
        .min(start);
    j.truncate(last + 1);
    j
}

/// Order where the backward recurrence starts.
///
/// Beyond `n = x`, `J_n(x)` decays roughly like
/// `exp(-(2/3) sqrt(2) (n - x)^{3/2} / sqrt(x))`; the margin below pushes the
/// start far past the point where the magnitude drops under `1e-40`.
fn start_order(x: f64) -> usize {
    let margin = 25.0 * x.cbrt() + 40.0;
    let m = (x + margin).ceil() as usize;
    m + (m % 2)
}

/// Estimated number of Chebyshev terms for `exp(-i x y)` at accuracy `cutoff`,
/// without building the coefficient table.
pub fn chebyshev_term_estimate(x: f64, cutoff: f64) -> usize {
    let x = x.abs();
    if x == 0.0 {
        return 1;
    }
    let log_cut = (-cutoff.ln()).max(1.0);
    (x + (log_cut * 1.5).powf(2.0 / 3.0) * x.cbrt() * 1.5 + log_cut).ceil() as usize + 1
}
