//! Deterministic scale functions of (t, d, γ, θ) in one auditable place.
//!
//! Core scales:
//!   R_t   = t (log t)^{1/γ}                     macrobox radius
//!   L_{t,a} = ((1-a) log |V_t|)^{1/γ}           macrobox level
//!   a_t   = (d log t)^{1/γ}                     top-of-field scale
//!   d_t   = (1/γ)(d log t)^{1/γ-1}              top-order-statistics spacing
//!   r_t   = t (d log t)^{1/γ-1} / log log t     localisation distance scale
//!   ρ     = ⌊(γ-1)/2⌋⁺                          radius of influence
//!   j     = min{n : 2n+1 > γ-1}                 path-expansion truncation order
//!
//! Auxiliary functions (defaults chosen to satisfy the required orderings
//! 1/llt < f_t h_t < f_t < h_t < e_t/g_t and κ_t ≤ f_t h_t on all of
//! t ∈ [10², 10¹²]; all overridable): κ_t = (llt)⁻¹, f_t = (llt)^{-1/2},
//! h_t = (llt)^{-1/4}, e_t = (llt)^{-1/16}, g_t = max(log llt, 1.05), with
//! llt = log log t. The e_t exponent is -1/16 rather than -1/8 because
//! log llt overtakes llt^{1/8} before t reaches 10¹², which would break
//! h_t < e_t/g_t near the top of the range.
//!
//! Experiments may override `side`: R_t is astronomically large at
//! interesting t, so desk-scale runs fix the allocated window and the
//! ScaleSet records both the formula value and the override.

use crate::error::{CoreError, Result};
use crate::potential::Separation;
use serde::{Deserialize, Serialize};

/// Smallest admissible time: t = e^e, where log log t reaches 1. The hand
/// examples for a_t, d_t, r_t and the penalisation functional all sit exactly
/// at this point.
pub const MIN_T: f64 = 15.154262241479262;

/// Input bundle for [`compute_scales`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleParams {
    pub t: f64,
    pub d: usize,
    pub gamma: f64,
    /// Macrobox level exponent θ ∈ (0, 1/2); L_t := L_{t,θ}.
    pub theta: f64,
    /// Fix the allocated side instead of 2⌊R_t⌋+1.
    pub side_override: Option<i64>,
    /// Auxiliary overrides; `None` picks the defaults above.
    pub kappa: Option<f64>,
    pub f: Option<f64>,
    pub h: Option<f64>,
    pub e: Option<f64>,
    pub g: Option<f64>,
    /// Diagnostic constants 0 < ε″ < ε < ε′ < θ < θ′ < 1/2.
    pub eps_dprime: Option<f64>,
    pub eps: Option<f64>,
    pub eps_prime: Option<f64>,
    pub theta_prime: Option<f64>,
    /// Rectangle exponent for the local-profile event; default is the
    /// midpoint of (0, 2ρ-γ+3), clamped to 0.1 if that interval is empty.
    pub eta: Option<f64>,
}

impl ScaleParams {
    pub fn new(t: f64, d: usize, gamma: f64, theta: f64) -> Self {
        ScaleParams {
            t,
            d,
            gamma,
            theta,
            side_override: None,
            kappa: None,
            f: None,
            h: None,
            e: None,
            g: None,
            eps_dprime: None,
            eps: None,
            eps_prime: None,
            theta_prime: None,
            eta: None,
        }
    }

    pub fn with_side(mut self, side: i64) -> Self {
        self.side_override = Some(side);
        self
    }
}

/// All scale functions evaluated at one (t, d, γ, θ), plus provenance for any
/// side override. Serializes with every field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleSet {
    pub t: f64,
    pub d: usize,
    pub gamma: f64,
    pub theta: f64,

    pub r_macrobox: f64,
    /// 2⌊R_t⌋+1 as a float (may exceed i64 range).
    pub side_formula: f64,
    /// The allocated side (override or formula when representable).
    pub side: i64,
    pub side_overridden: bool,
    /// |V_t| = side^d for the allocated side.
    pub v_size: f64,
    pub log_v: f64,

    pub l_t: f64,
    pub a_t: f64,
    pub d_t: f64,
    pub r_t: f64,
    pub rho: u32,
    pub j: u32,

    pub loglog_t: f64,
    pub kappa_t: f64,
    pub f_t: f64,
    pub h_t: f64,
    pub e_t: f64,
    pub g_t: f64,

    pub eps_dprime: f64,
    pub eps: f64,
    pub eps_prime: f64,
    pub theta_prime: f64,
    pub eta: f64,
}

/// Radius of influence ρ = ⌊(γ-1)/2⌋⁺.
pub fn rho_of_gamma(gamma: f64) -> u32 {
    let f = ((gamma - 1.0) / 2.0).floor();
    if f > 0.0 {
        f as u32
    } else {
        0
    }
}

/// Truncation order: the smallest non-negative integer with 2j+1 > γ-1,
/// equivalently a_t^{-2j-1} = o(d_t).
pub fn j_of_gamma(gamma: f64) -> u32 {
    let mut j = 0u32;
    while 2.0 * f64::from(j) + 1.0 <= gamma - 1.0 {
        j += 1;
    }
    j
}

/// Penalisation exponent q(x) = (1 - 2x/(γ-1))⁺ with the 0/0 := 0 convention,
/// extended to γ <= 1 by q(0) = 1, q(x >= 1) = 0 (zero radius of influence).
pub fn q_exponent(x: u32, gamma: f64) -> f64 {
    if x == 0 {
        return 1.0;
    }
    if gamma <= 1.0 {
        return 0.0;
    }
    (1.0 - 2.0 * f64::from(x) / (gamma - 1.0)).max(0.0)
}

/// Macrobox level L_{t,a} = ((1-a) log |V_t|)^{1/γ}.
pub fn macrobox_level(v_size: f64, a: f64, gamma: f64) -> Result<f64> {
    if !(v_size >= 2.0) {
        return Err(CoreError::Param(format!("V size must be >= 2, got {v_size}")));
    }
    if a > 1.0 {
        return Err(CoreError::Param(format!("a must be <= 1, got {a}")));
    }
    if !(gamma > 0.0) {
        return Err(CoreError::Param(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(((1.0 - a) * v_size.ln()).powf(1.0 / gamma))
}

pub fn compute_scales(p: &ScaleParams) -> Result<ScaleSet> {
    if !(p.t >= MIN_T) || !p.t.is_finite() {
        return Err(CoreError::Param(format!(
            "t must be finite and >= {MIN_T} (so log log t > 0), got {}",
            p.t
        )));
    }
    if !(p.gamma > 0.0) || !p.gamma.is_finite() {
        return Err(CoreError::Param(format!("gamma must be > 0, got {}", p.gamma)));
    }
    if !(p.theta > 0.0 && p.theta < 0.5) {
        return Err(CoreError::Param(format!(
            "theta must lie in (0, 1/2), got {}",
            p.theta
        )));
    }
    if p.d == 0 {
        return Err(CoreError::Param("dimension must be positive".into()));
    }

    let gamma = p.gamma;
    let log_t = p.t.ln();
    let loglog_t = log_t.ln();
    let dlt = p.d as f64 * log_t;

    let r_macrobox = p.t * log_t.powf(1.0 / gamma);
    let side_formula = 2.0 * r_macrobox.floor() + 1.0;
    let (side, side_overridden) = match p.side_override {
        Some(s) => {
            if s < 3 || s % 2 == 0 {
                return Err(CoreError::Param(format!(
                    "side override must be odd and >= 3, got {s}"
                )));
            }
            (s, true)
        }
        None => {
            if side_formula > i64::MAX as f64 / 2.0 {
                return Err(CoreError::Param(format!(
                    "formula side {side_formula:.3e} is not allocatable; pass a side override"
                )));
            }
            (side_formula as i64, false)
        }
    };
    let v_size = (side as f64).powi(p.d as i32);
    let log_v = p.d as f64 * (side as f64).ln();

    let l_t = ((1.0 - p.theta) * log_v).powf(1.0 / gamma);
    let a_t = dlt.powf(1.0 / gamma);
    let d_t = dlt.powf(1.0 / gamma - 1.0) / gamma;
    let r_t = p.t * dlt.powf(1.0 / gamma - 1.0) / loglog_t;

    let kappa_t = p.kappa.unwrap_or(1.0 / loglog_t);
    let f_t = p.f.unwrap_or(loglog_t.powf(-0.5));
    let h_t = p.h.unwrap_or(loglog_t.powf(-0.25));
    let e_t = p.e.unwrap_or(loglog_t.powf(-0.0625));
    let g_t = p.g.unwrap_or(loglog_t.ln().max(1.05));

    let eps_dprime = p.eps_dprime.unwrap_or(0.10);
    let eps = p.eps.unwrap_or(0.15);
    let eps_prime = p.eps_prime.unwrap_or(0.20);
    let theta_prime = p.theta_prime.unwrap_or(0.30);
    if !(0.0 < eps_dprime
        && eps_dprime < eps
        && eps < eps_prime
        && eps_prime < p.theta
        && p.theta < theta_prime
        && theta_prime < 0.5)
    {
        return Err(CoreError::Param(format!(
            "need 0 < eps'' < eps < eps' < theta < theta' < 1/2, got \
             ({eps_dprime}, {eps}, {eps_prime}, {}, {theta_prime})",
            p.theta
        )));
    }

    let rho = rho_of_gamma(gamma);
    let j = j_of_gamma(gamma);
    let eta_interval = 2.0 * f64::from(rho) - gamma + 3.0;
    let eta = p.eta.unwrap_or(if eta_interval > 0.0 {
        eta_interval / 2.0
    } else {
        0.1
    });

    Ok(ScaleSet {
        t: p.t,
        d: p.d,
        gamma,
        theta: p.theta,
        r_macrobox,
        side_formula,
        side,
        side_overridden,
        v_size,
        log_v,
        l_t,
        a_t,
        d_t,
        r_t,
        rho,
        j,
        loglog_t,
        kappa_t,
        f_t,
        h_t,
        e_t,
        g_t,
        eps_dprime,
        eps,
        eps_prime,
        theta_prime,
        eta,
    })
}

impl ScaleSet {
    /// Distance penalty per unit ℓ¹ distance in the functionals:
    /// log log t / (γ t).
    pub fn penalty_rate(&self) -> f64 {
        self.loglog_t / (self.gamma * self.t)
    }

    /// L_{t,a} for this window.
    pub fn level(&self, a: f64) -> Result<f64> {
        macrobox_level(self.v_size, a, self.gamma)
    }

    /// Per-realization decay diagnostic δ_t: |V|^{(1-2θ')/d} divided by
    /// log(1 + (L_{t,ε'} - L_t)/2d) times the realized separation of the
    /// exceedance set. Zero by convention when the separation is infinite.
    pub fn delta_t(&self, separation: Separation) -> Result<f64> {
        match separation {
            Separation::Infinite => Ok(0.0),
            Separation::Finite(r) => {
                let l_eps_prime = self.level(self.eps_prime)?;
                let denom = (1.0 + (l_eps_prime - self.l_t) / (2.0 * self.d as f64)).ln();
                Ok(self.v_size.powf((1.0 - 2.0 * self.theta_prime) / self.d as f64)
                    / (denom * r as f64))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ScaleSet serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scales(t: f64, d: usize, gamma: f64) -> ScaleSet {
        compute_scales(&ScaleParams::new(t, d, gamma, 0.25).with_side(201)).unwrap()
    }

    #[test]
    fn direct_formula_values_at_t_e_to_e() {
        // t = e^e: log t = e, log log t = 1.
        let t = std::f64::consts::E.exp();
        let s = scales(t, 1, 2.0);
        assert!((s.a_t - std::f64::consts::E.sqrt()).abs() < 1e-12);
        assert!((s.d_t - 0.5 * (-0.5f64 * 1.0).exp() * 1.0).abs() < 1e-12);
        let d_t_expected = 0.5 * std::f64::consts::E.powf(-0.5);
        assert!((s.d_t - d_t_expected).abs() < 1e-12);
        let r_t_expected = (std::f64::consts::E - 0.5).exp();
        assert!((s.r_t - r_t_expected).abs() < 1e-9 * r_t_expected);
    }

    #[test]
    fn rho_and_j_values() {
        assert_eq!(rho_of_gamma(2.0), 0);
        assert_eq!(rho_of_gamma(3.0), 1);
        assert_eq!(rho_of_gamma(7.0), 3);
        assert_eq!(rho_of_gamma(0.5), 0);
        assert_eq!(j_of_gamma(2.0), 1);
        assert_eq!(j_of_gamma(4.0), 2);
        assert_eq!(j_of_gamma(5.0), 2);
    }

    #[test]
    fn j_is_rho_or_rho_plus_one_on_gamma_grid() {
        let mut g = 0.01;
        while g <= 10.0 {
            let rho = rho_of_gamma(g);
            let j = j_of_gamma(g);
            assert!(
                j == rho || j == rho + 1,
                "gamma={g}: rho={rho}, j={j}"
            );
            g += 0.01;
        }
    }

    #[test]
    fn q_values() {
        assert_eq!(q_exponent(0, 5.0), 1.0);
        assert_eq!(q_exponent(1, 5.0), 0.5);
        assert_eq!(q_exponent(2, 5.0), 0.0);
        assert_eq!(q_exponent(0, 0.7), 1.0);
        assert_eq!(q_exponent(1, 1.0), 0.0);
        assert_eq!(q_exponent(3, 2.0), 0.0);
    }

    #[test]
    fn macrobox_level_values() {
        let e2 = (2.0f64).exp();
        assert!((macrobox_level(e2, 0.5, 3.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(macrobox_level(100.0, 1.0, 2.0).unwrap(), 0.0);
        let v = macrobox_level(49.0, 0.25, 2.0).unwrap();
        assert!((v - (0.75 * 49.0f64.ln()).sqrt()).abs() < 1e-12);
        assert!((v - 1.7084686).abs() < 1e-6);
        assert!(macrobox_level(1.0, 0.5, 2.0).is_err());
        assert!(macrobox_level(10.0, 1.5, 2.0).is_err());
    }

    #[test]
    fn gamma_a_d_identity() {
        // γ a_t^{γ-1} d_t = 1 exactly (to float tolerance).
        for gamma in [0.5, 1.0, 2.0, 3.7, 6.0] {
            for t in [16.0, 1e3, 1e8, 1e12] {
                for d in [1usize, 2, 3] {
                    let s = compute_scales(&ScaleParams::new(t, d, gamma, 0.25).with_side(201))
                        .unwrap();
                    let prod = gamma * s.a_t.powf(gamma - 1.0) * s.d_t;
                    assert!((prod - 1.0).abs() < 1e-12, "gamma={gamma}, t={t}: {prod}");
                }
            }
        }
    }

    #[test]
    fn monotonicity_in_t() {
        let ts = [16.0, 1e2, 1e4, 1e8, 1e12];
        for gamma in [1.5, 2.0, 4.0] {
            let sets: Vec<ScaleSet> = ts.iter().map(|&t| scales(t, 1, gamma)).collect();
            for w in sets.windows(2) {
                assert!(w[1].a_t > w[0].a_t);
                assert!(w[1].r_t > w[0].r_t);
                assert!(w[1].r_macrobox > w[0].r_macrobox);
                if gamma > 1.0 {
                    assert!(w[1].d_t < w[0].d_t);
                }
            }
        }
    }

    #[test]
    fn auxiliary_ordering_on_range() {
        // 1/llt < f h < f < h < e/g and κ < f h, for t in [1e2, 1e12].
        let mut t = 100.0f64;
        while t <= 1.0001e12 {
            let s = scales(t, 1, 2.0);
            let llt_inv = 1.0 / s.loglog_t;
            assert!(llt_inv < s.f_t * s.h_t, "t={t}");
            assert!(s.kappa_t <= llt_inv + 1e-15, "t={t}");
            assert!(s.kappa_t < s.f_t * s.h_t, "t={t}");
            assert!(s.f_t * s.h_t < s.f_t, "t={t}");
            assert!(s.f_t < s.h_t, "t={t}");
            assert!(s.h_t < s.e_t / s.g_t, "t={t}");
            assert!(s.g_t > 1.0 && s.kappa_t > 0.0 && s.kappa_t < 1.0);
            t *= 1.12;
        }
    }

    #[test]
    fn parameter_errors() {
        assert!(compute_scales(&ScaleParams::new(10.0, 1, 2.0, 0.25)).is_err());
        assert!(compute_scales(&ScaleParams::new(100.0, 1, -1.0, 0.25)).is_err());
        assert!(compute_scales(&ScaleParams::new(100.0, 1, 2.0, 0.6)).is_err());
        assert!(compute_scales(&ScaleParams::new(100.0, 0, 2.0, 0.25)).is_err());
        let mut p = ScaleParams::new(100.0, 1, 2.0, 0.25).with_side(200);
        assert!(compute_scales(&p).is_err());
        p.side_override = Some(201);
        p.eps = Some(0.3); // violates eps < theta
        assert!(compute_scales(&p).is_err());
    }

    #[test]
    fn override_recorded_with_formula_value() {
        let s = scales(1e8, 1, 2.0);
        assert!(s.side_overridden);
        assert_eq!(s.side, 201);
        let r = 1e8 * (1e8f64).ln().sqrt();
        assert!((s.side_formula - (2.0 * r.floor() + 1.0)).abs() < 1.0);
        let json = s.to_json();
        assert!(json.contains("side_overridden"));
        assert!(json.contains("side_formula"));
    }

    #[test]
    fn delta_t_conventions() {
        let s = scales(1e3, 1, 2.0);
        assert_eq!(s.delta_t(Separation::Infinite).unwrap(), 0.0);
        let d = s.delta_t(Separation::Finite(20)).unwrap();
        assert!(d > 0.0 && d.is_finite());
    }
}
