//! Explicit Runge-Kutta engine: classical RK4 on a fixed grid and the
//! Dormand-Prince 5(4) pair with PI step-size control.

use crate::error::{Error, Result};
use crate::scalar::{Dense, Scalar};

/// Step cap for the adaptive controller.
pub const MAX_ADAPTIVE_STEPS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct RkOutput<T: Scalar> {
    pub value: Dense<T>,
    pub rhs_evals: usize,
    pub steps: usize,
}

/// Classical RK4 with `steps` equal steps from `t0` to `t1`.
pub fn rk4<T, F>(mut f: F, y0: &Dense<T>, t0: f64, t1: f64, steps: usize) -> Result<RkOutput<T>>
where
    T: Scalar,
    F: FnMut(f64, &Dense<T>) -> Dense<T>,
{
    if steps == 0 {
        return Err(Error::invalid("rk4 needs at least one step"));
    }
    let h = (t1 - t0) / steps as f64;
    let mut y = y0.clone();
    if h == 0.0 {
        return Ok(RkOutput { value: y, rhs_evals: 0, steps: 0 });
    }
    for i in 0..steps {
        let t = t0 + i as f64 * h;
        let k1 = f(t, &y);
        let k2 = f(t + 0.5 * h, &(&y + &k1 * T::from_real(0.5 * h)));
        let k3 = f(t + 0.5 * h, &(&y + &k2 * T::from_real(0.5 * h)));
        let k4 = f(t + h, &(&y + &k3 * T::from_real(h)));
        y += (k1 + (k2 + k3) * T::from_real(2.0) + k4) * T::from_real(h / 6.0);
    }
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("rk4"));
    }
    Ok(RkOutput { value: y, rhs_evals: 4 * steps, steps })
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

fn scaled_norm<T: Scalar>(e: &Dense<T>, y0: &Dense<T>, y1: &Dense<T>, rtol: f64, atol: f64) -> f64 {
    let n = e.len().max(1);
    let sum: f64 = e
        .iter()
        .zip(y0.iter().zip(y1.iter()))
        .map(|(ei, (a, b))| {
            let sc = atol + rtol * a.modulus().max(b.modulus());
            (ei.modulus() / sc).powi(2)
        })
        .sum();
    (sum / n as f64).sqrt()
}

/// Adaptive Dormand-Prince 5(4) from `t0` to `t1`.
pub fn dopri5<T, F>(
    mut f: F,
    y0: &Dense<T>,
    t0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<RkOutput<T>>
where
    T: Scalar,
    F: FnMut(f64, &Dense<T>) -> Dense<T>,
{
    if !(rtol > 0.0 && atol > 0.0) {
        return Err(Error::invalid("adaptive tolerances must be positive"));
    }
    if t1 < t0 {
        return Err(Error::invalid("dopri5 integrates forward in time only"));
    }
    let mut y = y0.clone();
    if t1 == t0 {
        return Ok(RkOutput { value: y, rhs_evals: 0, steps: 0 });
    }
    let span = t1 - t0;
    let mut evals = 0;
    let mut k0 = f(t0, &y);
    evals += 1;

    // Initial step guess (Hairer, Norsett & Wanner, II.4).
    let d0 = scaled_norm(&y, &y, &y, rtol, atol);
    let d1 = scaled_norm(&k0, &y, &y, rtol, atol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y_probe = &y + &k0 * T::from_real(h0);
    let k_probe = f(t0 + h0, &y_probe);
    evals += 1;
    let d2 = scaled_norm(&(&k_probe - &k0), &y, &y, rtol, atol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    let mut h = (100.0 * h0).min(h1).min(span);

    let mut t = t0;
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0;
    let mut rejected_last = false;
    let mut k: Vec<Dense<T>> = Vec::with_capacity(7);
    while t < t1 {
        if steps >= MAX_ADAPTIVE_STEPS {
            return Err(Error::TooManySteps { max_steps: MAX_ADAPTIVE_STEPS, t_end: t1 });
        }
        if h < 1e-14 * t.abs().max(span) {
            return Err(Error::StepSizeUnderflow { t });
        }
        let last = t + h >= t1 - 1e-14 * span;
        if last {
            h = t1 - t;
        }
        k.clear();
        k.push(k0.clone());
        for s in 1..7 {
            let mut stage = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    stage += kj * T::from_real(h * a);
                }
            }
            k.push(f(t + C[s] * h, &stage));
            evals += 1;
            if s == 6 {
                // FSAL: the last stage point is the fifth-order solution.
                k.push(stage);
            }
        }
        let y_new = k.pop().expect("stage point stored");
        let mut err_vec = Dense::<T>::zeros(y.nrows(), y.ncols());
        for (j, kj) in k.iter().enumerate() {
            if E[j] != 0.0 {
                err_vec += kj * T::from_real(h * E[j]);
            }
        }
        let err = scaled_norm(&err_vec, &y, &y_new, rtol, atol);
        if !err.is_finite() {
            return Err(Error::NonFinite("dopri5"));
        }
        if err <= 1.0 {
            steps += 1;
            t = if last { t1 } else { t + h };
            y = y_new;
            k0 = k.pop().expect("seven stages");
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-ALPHA) * err_prev.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
            };
            let fac = if rejected_last { fac.min(1.0) } else { fac };
            err_prev = err.max(1e-4);
            h *= fac;
            rejected_last = false;
        } else {
            h *= (SAFETY * err.powf(-0.2)).max(FAC_MIN);
            rejected_last = true;
        }
    }
    Ok(RkOutput { value: y, rhs_evals: evals, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(x: f64) -> Dense<f64> {
        Dense::from_element(1, 1, x)
    }

    #[test]
    fn zero_field_returns_initial_value() {
        let y0 = Dense::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let out = dopri5(|_, y: &Dense<f64>| y * 0.0, &y0, 0.0, 1.0, 1e-10, 1e-10).unwrap();
        assert_eq!(out.value, y0);
        let out = rk4(|_, y: &Dense<f64>| y * 0.0, &y0, 0.0, 1.0, 3).unwrap();
        assert_eq!(out.value, y0);
    }

    #[test]
    fn exponential_growth_adaptive() {
        let out = dopri5(|_, y: &Dense<f64>| y.clone(), &scalar(1.0), 0.0, 1.0, 1e-12, 1e-12)
            .unwrap();
        assert!((out.value[0] - std::f64::consts::E).abs() < 1e-8);
    }

    #[test]
    fn forced_decay_matches_closed_form() {
        // y' = -y + cos t, y(0) = 0  =>  y = (cos t + sin t - e^{-t}) / 2
        let f = |t: f64, y: &Dense<f64>| scalar(-y[0] + t.cos());
        let t1: f64 = 3.0;
        let exact = 0.5 * (t1.cos() + t1.sin() - (-t1).exp());
        let out = dopri5(f, &scalar(0.0), 0.0, t1, 1e-11, 1e-11).unwrap();
        assert!((out.value[0] - exact).abs() < 1e-8);
        let out = rk4(f, &scalar(0.0), 0.0, t1, 2000).unwrap();
        assert!((out.value[0] - exact).abs() < 1e-8);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let f = |_: f64, y: &Dense<f64>| scalar(-2.0 * y[0]);
        let exact = (-2.0f64).exp();
        let e1 = (rk4(f, &scalar(1.0), 0.0, 1.0, 10).unwrap().value[0] - exact).abs();
        let e2 = (rk4(f, &scalar(1.0), 0.0, 1.0, 20).unwrap().value[0] - exact).abs();
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let f = |_: f64, y: &Dense<f64>| y.clone();
        assert!(rk4(f, &scalar(1.0), 0.0, 1.0, 0).is_err());
        assert!(dopri5(f, &scalar(1.0), 0.0, 1.0, 0.0, 1e-8).is_err());
        assert!(dopri5(f, &scalar(1.0), 1.0, 0.0, 1e-8, 1e-8).is_err());
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y^2 from y(0) = 1 blows up at t = 1.
        let f = |_: f64, y: &Dense<f64>| scalar(y[0] * y[0]);
        assert!(dopri5(f, &scalar(1.0), 0.0, 2.0, 1e-8, 1e-8).is_err());
    }
}
