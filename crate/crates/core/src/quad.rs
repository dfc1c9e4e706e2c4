//! Adaptive quadrature and the two numeric integrals used as experiment
//! oracles: the ageing tail P(Θ > ω) and the normalization of the top-two
//! limit density.

use crate::error::{CoreError, Result};

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 {
            return Err(CoreError::Quadrature {
                tol,
                estimate: left + right,
            });
        }
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        let lv = recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)?;
        let rv = recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)?;
        Ok(lv + rv)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// ν-measure of the ageing set D_ω(x, y) for the intensity
/// ν(dx̄, dȳ) = dx̄ ⊗ e^{-ȳ-|x̄|} dȳ in d = 1.
///
/// D_ω(x, y) = {(x̄, ȳ) : y + β|x| - β|x̄| ≤ ȳ} ∪ (ℝ × [y, ∞)) with
/// β = ω/(1+ω): for each x̄ the section is [y + β·min(0, |x|-|x̄|), ∞), so the
/// ȳ-integral is explicit and only the x̄-integral needs quadrature. The
/// e^{-y} factor is exact: ν(D_ω(x, y)) = e^{-y} c_ω(|x|).
pub fn nu_of_ageing_set(omega: f64, x_abs: f64, y: f64, tol: f64) -> Result<f64> {
    Ok((-y).exp() * c_omega(omega, x_abs, tol)?)
}

fn c_omega(omega: f64, r: f64, tol: f64) -> Result<f64> {
    let beta = omega / (1.0 + omega);
    // |x̄| ≤ r: section threshold y, weight e^{-|x̄|}.
    let inner = if r > 0.0 {
        2.0 * adaptive_simpson(&|u: f64| (-u).exp(), 0.0, r, tol / 4.0)?
    } else {
        0.0
    };
    // |x̄| > r: threshold y + β(r - |x̄|); integrand e^{-(1-β)|x̄|} e^{-βr}.
    // Truncate where the tail bound e^{-βr} e^{-(1-β)U}/(1-β) drops below tol.
    let rate = 1.0 - beta;
    let upper = r + ((1.0 / (rate * tol * 0.25)).ln() / rate).max(10.0);
    let outer = 2.0
        * (-beta * r).exp()
        * adaptive_simpson(&|u: f64| (-rate * u).exp(), r, upper, tol / 4.0)?;
    Ok(inner + outer)
}

/// Numeric tail P(Θ > ω) = ∫ exp{-ν(D_ω(x, y))} ν(dx, dy) for d = 1, to
/// absolute tolerance `tol` (default callers use 1e-3).
///
/// The ȳ-substitution w = e^{-y} turns the outer integral into
/// ∫ e^{-|x|} ∫₀^∞ exp{-w c_ω(|x|)} dw dx with both integrals evaluated
/// numerically; x and w ranges are truncated with explicit tail bounds.
pub fn theta_tail_numeric(omega: f64, d: usize, tol: f64) -> Result<f64> {
    if d != 1 {
        return Err(CoreError::Param(
            "theta tail quadrature implemented for d = 1 only".into(),
        ));
    }
    if !(omega > 0.0) {
        return Err(CoreError::Param(format!("omega must be > 0, got {omega}")));
    }
    let x_max = (2.0 / tol).ln().max(10.0);
    let inner_tol = tol / (8.0 * x_max);
    let f = |x: f64| -> f64 {
        let c = c_omega(omega, x, inner_tol).unwrap_or(f64::NAN);
        // ∫₀^∞ e^{-wc} dw truncated at w where the remainder e^{-wc}/c < tol/8.
        let w_max = (8.0 / (tol * c)).ln().max(1.0) / c;
        let inner = adaptive_simpson(&|w: f64| (-w * c).exp(), 0.0, w_max, inner_tol)
            .unwrap_or(f64::NAN);
        (-x).exp() * inner
    };
    let v = 2.0 * adaptive_simpson(&f, 0.0, x_max, tol / 4.0)?;
    if v.is_nan() {
        return Err(CoreError::Quadrature { tol, estimate: v });
    }
    Ok(v)
}

/// Numeric normalization of the top-two limit density
/// p(x₁, x₂, y₁, y₂) = exp{-(y₁+y₂) - |x₁| - |x₂| - 2^d e^{-y₂}} 1_{y₁>y₂}.
///
/// The x-integrals are the closed form 2^d each and ∫_{y₂}^∞ e^{-y₁} dy₁ =
/// e^{-y₂}; the remaining y₂-integral is evaluated numerically after the
/// substitution w = e^{-y₂}: ∫ p = 4^d ∫₀^∞ w e^{-2^d w} dw.
pub fn top_two_density_normalization(d: usize, tol: f64) -> Result<f64> {
    let two_d = (2.0f64).powi(d as i32);
    let four_d = two_d * two_d;
    // Tail bound: ∫_W^∞ w e^{-cw} dw = (W + 1/c) e^{-cW}/c ≤ tol/4 picks W.
    let c = two_d;
    let mut w_max = 10.0 / c;
    while (w_max + 1.0 / c) * (-c * w_max).exp() / c > tol / (4.0 * four_d) {
        w_max *= 1.5;
    }
    let v = four_d * adaptive_simpson(&|w: f64| w * (-c * w).exp(), 0.0, w_max, tol / (4.0 * four_d))?;
    Ok(v)
}
