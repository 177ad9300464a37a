//! Normal and Student-t distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Upper tail `erfc(z)` for `z >= 0`.
///
/// Uses the all-positive Taylor series `erf(z) = 2/√π e^{-z²} Σ 2ⁿ z^{2n+1} / (2n+1)!!`
/// below `z = 3` and the Laplace continued fraction above it, so the result
/// keeps full relative precision deep into the tail.
fn erfc_nonneg(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z < 3.0 {
        1.0 - erf_series(z)
    } else {
        erfc_continued_fraction(z)
    }
}

fn erf_series(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= 2.0 * z2 / (2.0 * k + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-z2).exp() * sum
}

// erfc(z) = e^{-z²}/√π · 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...)))), modified Lentz.
fn erfc_continued_fraction(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 * 0.5;
        d = z + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = z + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-z * z).exp() / (f * PI.sqrt())
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("expected a finite argument, got {x}")))
    }
}

fn check_probability(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability must lie in (0, 1), got {q}")))
    }
}

// Lower tail Φ(x) without the argument checks.
fn phi_lower(x: f64) -> f64 {
    let z = x * FRAC_1_SQRT_2;
    if z < 0.0 {
        0.5 * erfc_nonneg(-z)
    } else {
        1.0 - 0.5 * erfc_nonneg(z)
    }
}

fn phi_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function Φ.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    check_finite(x)?;
    Ok(phi_lower(x))
}

/// Φ⁻¹ via Acklam's rational approximation followed by Halley refinement.
pub fn std_normal_quantile(q: f64) -> Result<f64> {
    check_probability(q)?;
    if q == 0.5 {
        return Ok(0.0);
    }
    // Work in the lower tail so the refinement sees full relative precision.
    let (tail, sign) = if q < 0.5 { (q, 1.0) } else { (1.0 - q, -1.0) };
    let mut x = acklam_lower(tail);
    for _ in 0..3 {
        let e = phi_lower(x) - tail;
        let u = e / phi_density(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(sign * x)
}

fn acklam_lower(q: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    if q < 0.02425 {
        let t = (-2.0 * q.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    } else {
        let t = q - 0.5;
        let r = t * t;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * t
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
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
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
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
    for m in 1..20_000 {
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
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Student-t distribution function with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> Result<f64> {
    check_finite(t)?;
    if !(df > 0.0) || !df.is_finite() {
        return Err(Error::Domain(format!("degrees of freedom must be positive, got {df}")));
    }
    Ok(t_cdf_unchecked(t, df))
}

fn t_cdf_unchecked(t: f64, df: f64) -> f64 {
    let t2 = t * t;
    // Pick the incomplete-beta argument that avoids cancellation in 1 - x.
    let upper_tail = if t2 < df {
        0.5 - 0.5 * reg_inc_beta(0.5, 0.5 * df, t2 / (df + t2))
    } else {
        0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + t2))
    };
    if t >= 0.0 {
        1.0 - upper_tail
    } else {
        upper_tail
    }
}

fn t_density(t: f64, df: f64) -> f64 {
    let ln = ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * PI).ln()
        - 0.5 * (df + 1.0) * (t * t / df).ln_1p();
    ln.exp()
}

/// Student-t quantile by safeguarded Newton iteration on the CDF, started
/// from the Cornish–Fisher expansion around the normal quantile.
pub fn student_t_quantile(q: f64, df: u64) -> Result<f64> {
    check_probability(q)?;
    if df == 0 {
        return Err(Error::Domain("degrees of freedom must be at least 1".into()));
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    let nu = df as f64;
    // Solve in the upper half and reflect; the distribution is symmetric.
    let (target, sign) = if q > 0.5 { (q, 1.0) } else { (1.0 - q, -1.0) };
    let z = std_normal_quantile(target)?;
    let z3 = z * z * z;
    let z5 = z3 * z * z;
    let mut x = z + (z3 + z) / (4.0 * nu) + (5.0 * z5 + 16.0 * z3 + 3.0 * z) / (96.0 * nu * nu);
    if !x.is_finite() || x <= 0.0 {
        x = z.max(1e-3);
    }

    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for _ in 0..100 {
        let residual = t_cdf_unchecked(x, nu) - target;
        if residual.abs() <= 1e-12 {
            break;
        }
        if residual > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let step = residual / t_density(x, nu);
        let mut next = x - step;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * x.max(1.0)
            };
        }
        if next == x {
            break;
        }
        x = next;
    }
    Ok(sign * x)
}
