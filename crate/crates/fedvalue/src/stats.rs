//! Student-t distribution via the regularized incomplete beta function.
//!
//! Self-contained (no statistics libraries): Lanczos log-gamma, a Lentz
//! continued fraction for the incomplete beta, and a bracketed Newton solve
//! for t quantiles. Accuracy is validated against external reference values
//! in the tests at 1e-10 relative error.

use crate::error::{Error, Result};

/// Lanczos approximation (g = 7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cont_frac(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::Stats(format!(
            "incomplete_beta needs a, b > 0, got ({a}, {b})"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Stats(format!(
            "incomplete_beta needs x in [0, 1], got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    // Symmetry switch keeps the continued fraction in its fast-converging
    // region.
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cont_frac(a, b, x) / a)
    } else {
        Ok(1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b)
    }
}

/// CDF of Student's t with `dof` degrees of freedom.
pub fn t_cdf(t: f64, dof: f64) -> Result<f64> {
    if dof <= 0.0 {
        return Err(Error::Stats(format!("t_cdf needs dof > 0, got {dof}")));
    }
    if t == 0.0 {
        return Ok(0.5);
    }
    let x = dof / (dof + t * t);
    let half_tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, x)?;
    Ok(if t > 0.0 { 1.0 - half_tail } else { half_tail })
}

/// Quantile of Student's t: the `q`-th percentile for `q` in (0, 1).
/// Bisection with Newton refinement; absolute accuracy ~1e-12.
pub fn t_quantile(q: f64, dof: f64) -> Result<f64> {
    if !(0.0 < q && q < 1.0) {
        return Err(Error::Stats(format!(
            "t_quantile needs q in (0, 1), got {q}"
        )));
    }
    if dof <= 0.0 {
        return Err(Error::Stats(format!("t_quantile needs dof > 0, got {dof}")));
    }
    if (q - 0.5).abs() < 1e-16 {
        return Ok(0.0);
    }
    // Symmetric: solve for the upper half only.
    if q < 0.5 {
        return Ok(-t_quantile(1.0 - q, dof)?);
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    while t_cdf(hi, dof)? < q {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Stats(format!(
                "t_quantile failed to bracket q={q}, dof={dof}"
            )));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = t_cdf(t, dof)? - q;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        // t pdf for the Newton step.
        let pdf = (ln_gamma(0.5 * (dof + 1.0))
            - ln_gamma(0.5 * dof)
            - 0.5 * (dof * std::f64::consts::PI).ln()
            - 0.5 * (dof + 1.0) * (1.0 + t * t / dof).ln())
        .exp();
        let mut next = t - f / pdf;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() < 1e-13 * (1.0 + t.abs()) {
            return Ok(next);
        }
        t = next;
    }
    Ok(t)
}
