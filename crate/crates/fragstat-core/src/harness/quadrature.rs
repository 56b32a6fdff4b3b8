//! Adaptive Simpson quadrature with Richardson extrapolation.

use crate::{Error, Result};

const MAX_DEPTH: u32 = 60;

/// Integrates `f` over `[lo, hi]` to absolute tolerance `tol`.
pub fn quadrature(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("quadrature bounds must be finite"));
    }
    if tol < 1e-14 {
        return Err(Error::invalid("quadrature tolerance below 1e-14"));
    }
    if lo == hi {
        return Ok(0.0);
    }
    let (a, b, sign) = if lo < hi { (lo, hi, 1.0) } else { (hi, lo, -1.0) };
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    if !fa.is_finite() || !fm.is_finite() || !fb.is_finite() {
        return Err(Error::invalid("non-finite integrand evaluation"));
    }
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    let v = adaptive(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    Ok(sign * v)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    if !flm.is_finite() || !frm.is_finite() {
        return Err(Error::invalid("non-finite integrand evaluation"));
    }
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let half = 0.5 * tol;
    Ok(adaptive(f, a, m, fa, flm, fm, left, half, depth - 1)?
        + adaptive(f, m, b, fm, frm, fb, right, half, depth - 1)?)
}

/// Nested quadrature of `f(x, y)` over the rectangle `[xlo,xhi] x [ylo,yhi]`.
pub fn quadrature2(
    f: impl Fn(f64, f64) -> f64,
    xlo: f64,
    xhi: f64,
    ylo: f64,
    yhi: f64,
    tol: f64,
) -> Result<f64> {
    let inner_tol = (tol / (xhi - xlo).abs().max(1.0)).max(1e-14) * 0.1;
    quadrature(
        |x| quadrature(|y| f(x, y), ylo, yhi, inner_tol).unwrap_or(f64::NAN),
        xlo,
        xhi,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = quadrature(|x| x, 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn sine_integral() {
        let v = quadrature(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() <= 1e-11);
    }

    #[test]
    fn kink_integrand_converges() {
        let v = quadrature(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-10).unwrap();
        let exact = 0.5 * (0.3f64.powi(2) + 0.7f64.powi(2));
        assert!((v - exact).abs() <= 1e-9, "{v} vs {exact}");
    }

    #[test]
    fn rejects_non_finite() {
        assert!(quadrature(|x| 1.0 / x, 0.0, 1.0, 1e-9).is_err());
    }

    #[test]
    fn nested_rectangle() {
        let v = quadrature2(|x, y| x * y, 0.0, 1.0, 0.0, 2.0, 1e-10).unwrap();
        assert!((v - 1.0).abs() <= 1e-8);
    }
}
