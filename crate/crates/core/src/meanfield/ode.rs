//! Adaptive Dormand-Prince 5(4) integrator over fixed-size state arrays.

use crate::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 5_000_000;

/// Right-hand side failure inside a trial stage. The integrator shrinks the
/// step; if it cannot get past the point the error is returned unchanged.
pub(crate) type Rhs<'a, const D: usize> = dyn FnMut(&[f64; D]) -> Result<[f64; D]> + 'a;

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates the autonomous system `y' = f(y)` from `t = 0` and returns the
/// state at each of `outputs` (sorted, nonnegative). Steps land exactly on
/// the output times. `err_components` limits error control to the leading
/// components, so that tangent variables ride along without steering the
/// step size.
pub(crate) fn integrate<const D: usize>(
    f: &mut Rhs<'_, D>,
    y0: [f64; D],
    outputs: &[f64],
    tol: f64,
    err_components: usize,
) -> Result<Vec<[f64; D]>> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "tolerance {tol} must be positive"
        )));
    }
    if outputs.iter().any(|t| !t.is_finite() || *t < 0.0) || outputs.windows(2).any(|w| w[1] < w[0])
    {
        return Err(Error::InvalidInput(
            "output times must be finite, nonnegative and sorted".into(),
        ));
    }
    let ne = err_components.clamp(1, D);
    let mut out = Vec::with_capacity(outputs.len());
    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = f(&y)?;
    let t_end = outputs.last().copied().unwrap_or(0.0);
    let mut h = initial_step(&y, &k1, tol, ne).min(t_end.max(1e-3));
    let mut next = 0;
    let mut steps = 0usize;
    let mut last_stage_error: Option<Error> = None;

    while next < outputs.len() && outputs[next] <= t {
        out.push(y);
        next += 1;
    }
    while next < outputs.len() {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepUnderflow { t, h });
        }
        let target = outputs[next];
        let mut landing = false;
        if t + h >= target || t + 1.01 * h >= target {
            h = target - t;
            landing = true;
        }
        let h_min = 1e-14 * (1.0 + t.abs());
        if h < h_min && !landing {
            return Err(last_stage_error
                .take()
                .unwrap_or(Error::StepUnderflow { t, h }));
        }

        match try_step(f, &y, &k1, h, ne) {
            Ok((y_new, k7, err)) => {
                let err = err / tol;
                if err <= 1.0 {
                    t = if landing { target } else { t + h };
                    y = y_new;
                    k1 = k7;
                    last_stage_error = None;
                    while next < outputs.len() && outputs[next] <= t {
                        out.push(y);
                        next += 1;
                    }
                    let fac = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h *= fac;
                } else {
                    h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                }
            }
            Err(e) => {
                last_stage_error = Some(e);
                h *= 0.25;
            }
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(last_stage_error
                .take()
                .unwrap_or(Error::StepUnderflow { t, h }));
        }
    }
    Ok(out)
}

fn initial_step<const D: usize>(y: &[f64; D], f0: &[f64; D], tol: f64, ne: usize) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..ne {
        let sc = tol + tol * y[i].abs();
        d0 = d0.max((y[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.clamp(1e-8, 0.1)
}

type StepOutput<const D: usize> = ([f64; D], [f64; D], f64);

fn try_step<const D: usize>(
    f: &mut Rhs<'_, D>,
    y: &[f64; D],
    k1: &[f64; D],
    h: f64,
    ne: usize,
) -> Result<StepOutput<D>> {
    let k2 = f(&axpy(y, h, &[(A21, k1)]))?;
    let k3 = f(&axpy(y, h, &[(A31, k1), (A32, &k2)]))?;
    let k4 = f(&axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]))?;
    let k5 = f(&axpy(
        y,
        h,
        &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)],
    ))?;
    let k6 = f(&axpy(
        y,
        h,
        &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
    ))?;
    let y_new = axpy(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = f(&y_new)?;
    let mut acc = 0.0;
    for i in 0..ne {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = 1.0 + y[i].abs().max(y_new[i].abs());
        acc += (e / sc).powi(2);
    }
    Ok((y_new, k7, (acc / ne as f64).sqrt()))
}
