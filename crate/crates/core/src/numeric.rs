//! Small numerical helpers shared by the model and the optimiser.

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `num / den`, treating `0 / 0` as zero.
#[inline]
pub(crate) fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let v = integrate(|x| 3.0 * x * x + 1.0, 0.0, 2.0, 1e-12);
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn integrates_rational_function() {
        // ∫_0^1 1/(1+x)^2 dx = 1/2
        let v = integrate(|x| 1.0 / ((1.0 + x) * (1.0 + x)), 0.0, 1.0, 1e-13);
        assert!((v - 0.5).abs() < 1e-12);
    }
}
