//! Penalisation functionals, localisation sites, the penalised spectrum,
//! ageing times and the diagnostic events.
//!
//! The functional Ψ̃^{(n)}_{t,c}(z) = λ̃^{(n)}(z) - |z| log log t/(γt) + c|z|/t
//! trades the local principal eigenvalue against the distance from the
//! origin; its argmax is the predicted localisation site. λ̃ always comes
//! from the eigensolver here; the path-expansion fixed point is a
//! cross-check, not the production route.

use crate::error::{CoreError, Result};
use crate::geometry::{Site, TorusGeometry};
use crate::operators::{local_principal_eigenvalue, SpectralData};
use crate::potential::PotentialField;
use crate::scales::{compute_scales, q_exponent, ScaleParams, ScaleSet};
use crate::solver::spectral_snapshot;
use serde::Serialize;
use std::collections::HashMap;

/// Ψ̃^{(n)}_{t,c}(z); c = 0 recovers the plain penalisation functional.
pub fn psi(
    field: &PotentialField,
    z: &Site,
    n: u64,
    c: f64,
    scales: &ScaleSet,
    eig_tol: f64,
) -> Result<f64> {
    let lam = local_principal_eigenvalue(field, z, n, scales.l_t, eig_tol)?;
    let dist = field.geometry().origin_distance(z)? as f64;
    Ok(lam - dist * scales.penalty_rate() + c * dist / scales.t)
}

/// Top two sites of the penalisation functional with their values.
#[derive(Debug, Clone, PartialEq)]
pub struct TopTwo {
    pub z1: Site,
    pub z2: Site,
    pub psi1: f64,
    pub psi2: f64,
    pub gap: f64,
}

/// (value, index) ordering with lexicographic tie-break: higher value wins,
/// equal values prefer the lexicographically smaller site.
#[inline]
fn better(v: f64, idx: usize, v_best: f64, idx_best: usize) -> bool {
    v > v_best || (v == v_best && idx < idx_best)
}

/// Argmax and runner-up of Ψ̃^{(n)}_{t,c} over the torus.
///
/// Candidates are visited in descending order of the proof-safe Lemma-3.3
/// bound max(L_t, ξ(z)) + 2d - |z| llt/(γt) + max(c,0)|z|/t; once the bound
/// drops below the current runner-up value the scan stops. The outcome is
/// identical to the exhaustive scan because the bound dominates Ψ̃.
pub fn top_two(
    field: &PotentialField,
    n: u64,
    c: f64,
    scales: &ScaleSet,
    eig_tol: f64,
) -> Result<TopTwo> {
    let g = field.geometry();
    let count = g.site_count();
    if count < 2 {
        return Err(CoreError::Input("need at least two sites".into()));
    }
    let two_d = 2.0 * g.d() as f64;
    let rate = scales.penalty_rate();
    let cpos = c.max(0.0);

    let value_of = |idx: usize| -> Result<f64> {
        let z = g.site_at(idx);
        let lam = if n == 0 {
            field.value(idx)
        } else {
            local_principal_eigenvalue(field, &z, n, scales.l_t, eig_tol)?
        };
        let dist = g.origin_distance_idx(idx) as f64;
        Ok(lam - dist * rate + c * dist / scales.t)
    };

    let mut order: Vec<(f64, usize)> = (0..count)
        .map(|idx| {
            let dist = g.origin_distance_idx(idx) as f64;
            let bound =
                scales.l_t.max(field.value(idx)) + two_d - dist * rate + cpos * dist / scales.t;
            (bound, idx)
        })
        .collect();
    order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));

    let mut best: Option<(f64, usize)> = None;
    let mut second: Option<(f64, usize)> = None;
    for &(bound, idx) in &order {
        if let Some((v2, _)) = second {
            if bound < v2 {
                break;
            }
        }
        let v = value_of(idx)?;
        match best {
            None => best = Some((v, idx)),
            Some((v1, i1)) => {
                if better(v, idx, v1, i1) {
                    second = Some((v1, i1));
                    best = Some((v, idx));
                } else {
                    match second {
                        None => second = Some((v, idx)),
                        Some((v2, i2)) => {
                            if better(v, idx, v2, i2) {
                                second = Some((v, idx));
                            }
                        }
                    }
                }
            }
        }
    }
    let (psi1, i1) = best.expect("count >= 2");
    let (psi2, i2) = second.expect("count >= 2");
    Ok(TopTwo {
        z1: g.site_at(i1),
        z2: g.site_at(i2),
        psi1,
        psi2,
        gap: psi1 - psi2,
    })
}

/// Exhaustive-scan oracle for [`top_two`]; no pruning.
pub fn top_two_exhaustive(
    field: &PotentialField,
    n: u64,
    c: f64,
    scales: &ScaleSet,
    eig_tol: f64,
) -> Result<TopTwo> {
    let g = field.geometry();
    let mut best: Option<(f64, usize)> = None;
    let mut second: Option<(f64, usize)> = None;
    for idx in 0..g.site_count() {
        let z = g.site_at(idx);
        let lam = if n == 0 {
            field.value(idx)
        } else {
            local_principal_eigenvalue(field, &z, n, scales.l_t, eig_tol)?
        };
        let dist = g.origin_distance_idx(idx) as f64;
        let v = lam - dist * scales.penalty_rate() + c * dist / scales.t;
        match best {
            None => best = Some((v, idx)),
            Some((v1, i1)) => {
                if better(v, idx, v1, i1) {
                    second = Some((v1, i1));
                    best = Some((v, idx));
                } else {
                    match second {
                        None => second = Some((v, idx)),
                        Some((v2, i2)) => {
                            if better(v, idx, v2, i2) {
                                second = Some((v, idx));
                            }
                        }
                    }
                }
            }
        }
    }
    let (psi1, i1) = best.ok_or_else(|| CoreError::Input("empty torus".into()))?;
    let (psi2, i2) = second.ok_or_else(|| CoreError::Input("need two sites".into()))?;
    Ok(TopTwo {
        z1: g.site_at(i1),
        z2: g.site_at(i2),
        psi1,
        psi2,
        gap: psi1 - psi2,
    })
}

/// The penalised spectrum Ψ_t(i) = λ_{t,i} + log|φ_{t,i}(0)|/t and its top
/// two indices. φ_i(0) = 0 maps to -∞ and is never selected.
#[derive(Debug, Clone)]
pub struct PenalisedSpectrum {
    pub values: Vec<f64>,
    pub i1: usize,
    pub i2: usize,
}

pub fn penalised_spectrum(sd: &SpectralData, g: &TorusGeometry, t: f64) -> Result<PenalisedSpectrum> {
    let values: Vec<f64> = (0..sd.eigenvalues.len())
        .map(|i| {
            let phi0 = sd.origin_component(i, g);
            if phi0 == 0.0 {
                f64::NEG_INFINITY
            } else {
                sd.eigenvalues[i] + phi0.abs().ln() / t
            }
        })
        .collect();
    let finite = values.iter().filter(|v| v.is_finite()).count();
    if finite < 2 {
        return Err(CoreError::DegenerateSpectrum(format!(
            "only {finite} finite penalised values"
        )));
    }
    let mut i1 = usize::MAX;
    let mut i2 = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        if i1 == usize::MAX || v > values[i1] {
            i2 = i1;
            i1 = i;
        } else if i2 == usize::MAX || v > values[i2] {
            i2 = i;
        }
    }
    Ok(PenalisedSpectrum { values, i1, i2 })
}

/// Outcome of an ageing scan: the first time the tracked object changes, or
/// censoring at the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct AgeingOutcome {
    pub time: f64,
    pub censored: bool,
}

/// How the emulated window grows with s: the allocated base side scales with
/// the formula ratio R_{t+s}/R_t, capped by the sampled horizon box.
pub fn window_half_at(base_half: i64, horizon_half: i64, t: f64, s: f64, gamma: f64) -> i64 {
    let r = |tt: f64| tt * tt.ln().powf(1.0 / gamma);
    let grown = (base_half as f64 * r(t + s) / r(t)).floor() as i64;
    grown.clamp(base_half, horizon_half)
}

/// First s > 0 at which the argmax of Ψ̃^{(n)}_{t+s} over the growing window
/// V_{t+s} moves, by grid scan (step t/200) and bisection (resolution t/10⁵).
///
/// The field lives once on the horizon box; every V_{t+s} is a centred
/// sub-window with its own side and macrobox level. For n = 0 the scan uses
/// per-radius maxima of ξ (Ψ̃ depends on a site only through (ξ(z), |z|));
/// for n ≥ 1 each probe prunes with the Lemma-3.3 bound and caches ball
/// eigenvalues per puncture pattern.
pub fn ageing_time(
    field_horizon: &PotentialField,
    base_side: i64,
    n: u64,
    params: &ScaleParams,
    horizon: f64,
    eig_tol: f64,
) -> Result<AgeingOutcome> {
    let g = field_horizon.geometry();
    let t = params.t;
    let base_half = (base_side - 1) / 2;
    let horizon_half = g.half();
    if base_half > horizon_half {
        return Err(CoreError::Input(format!(
            "base side {base_side} exceeds horizon box side {}",
            g.side()
        )));
    }

    // Per-radius best (value, index) tables for the n = 0 fast path.
    let radius_table: Option<Vec<(f64, usize)>> = if n == 0 {
        let mut table: Vec<(f64, usize)> = vec![(f64::NEG_INFINITY, usize::MAX); (g.d() as i64 * horizon_half) as usize + 1];
        for idx in 0..g.site_count() {
            let r = g.origin_distance_idx(idx) as usize;
            let v = field_horizon.value(idx);
            let (bv, bi) = table[r];
            if better(v, idx, bv, bi) {
                table[r] = (v, idx);
            }
        }
        Some(table)
    } else {
        None
    };

    let mut cache: HashMap<(usize, u64), f64> = HashMap::new();

    let mut argmax_at = |s: f64| -> Result<usize> {
        let w = window_half_at(base_half, horizon_half, t, s, params.gamma);
        let ts = t + s;
        let mut p = params.clone();
        p.t = ts;
        p.side_override = Some(2 * w + 1);
        let scales = compute_scales(&p)?;
        let rate = scales.penalty_rate();
        match &radius_table {
            Some(table) => {
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                let rmax = (g.d() as i64 * w) as usize;
                for (r, &(v, idx)) in table.iter().enumerate().take(rmax + 1) {
                    if idx == usize::MAX {
                        continue;
                    }
                    // Buckets can contain sites outside the (non-cubic reach
                    // in d>1 is still fine: origin distance r ≤ w ⊆ window in
                    // ℓ¹ only if every coordinate ≤ w; guard below).
                    if g.site_at(idx).coords.iter().any(|c| c.abs() > w) {
                        continue;
                    }
                    let val = v - r as f64 * rate;
                    if better(val, idx, best.0, best.1) {
                        best = (val, idx);
                    }
                }
                Ok(best.1)
            }
            None => {
                // Generic path: prune with the sandwich bound inside the window.
                let two_d = 2.0 * g.d() as f64;
                let mut order: Vec<(f64, usize)> = (0..g.site_count())
                    .filter(|&idx| g.site_at(idx).coords.iter().all(|c| c.abs() <= w))
                    .map(|idx| {
                        let dist = g.origin_distance_idx(idx) as f64;
                        let bound = scales.l_t.max(field_horizon.value(idx)) + two_d - dist * rate;
                        (bound, idx)
                    })
                    .collect();
                order.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                let mut best = (f64::NEG_INFINITY, usize::MAX);
                for &(bound, idx) in &order {
                    if bound < best.0 {
                        break;
                    }
                    let z = g.site_at(idx);
                    let zi = g.index_of(&z)?;
                    let ball = g.ball_indices(zi, n);
                    let mut sig = 0u64;
                    for (k, &bidx) in ball.iter().enumerate() {
                        if field_horizon.value(bidx) > scales.l_t && bidx != zi {
                            sig |= 1 << (k as u64 % 64);
                        }
                    }
                    let lam = match cache.get(&(idx, sig)) {
                        Some(&l) => l,
                        None => {
                            let l = local_principal_eigenvalue(
                                field_horizon,
                                &z,
                                n,
                                scales.l_t,
                                eig_tol,
                            )?;
                            cache.insert((idx, sig), l);
                            l
                        }
                    };
                    let dist = g.origin_distance_idx(idx) as f64;
                    let val = lam - dist * rate;
                    if better(val, idx, best.0, best.1) {
                        best = (val, idx);
                    }
                }
                Ok(best.1)
            }
        }
    };

    let z0 = argmax_at(0.0)?;
    let step = t / 200.0;
    let resolution = t / 1e5;
    let mut prev = 0.0f64;
    let mut s = step;
    while s <= horizon + 1e-12 * t {
        if argmax_at(s)? != z0 {
            let mut lo = prev;
            let mut hi = s;
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                if argmax_at(mid)? != z0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(AgeingOutcome {
                time: hi,
                censored: false,
            });
        }
        prev = s;
        s += step;
    }
    Ok(AgeingOutcome {
        time: horizon,
        censored: true,
    })
}

/// First s > 0 at which the renormalized profile moves by more than ε in
/// sup norm: ‖u(t,·)/U(t) - u(t+s,·)/U(t+s)‖_∞ > ε, same grid-and-bisection
/// scheme as the site ageing time. One spectral decomposition of the horizon
/// box is reused for every probe.
pub fn solution_ageing_time(
    sd: &SpectralData,
    g: &TorusGeometry,
    t: f64,
    horizon: f64,
    epsilon: f64,
) -> Result<AgeingOutcome> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(CoreError::Param(format!(
            "epsilon must lie in (0, 1/2), got {epsilon}"
        )));
    }
    let profile = |tau: f64| -> Vec<f64> {
        let snap = spectral_snapshot(g, sd, tau);
        let total = snap.total_mass;
        snap.u.iter().map(|&x| x / total).collect()
    };
    let base = profile(t);
    let moved = |s: f64| -> bool {
        let p = profile(t + s);
        let mut sup = 0.0f64;
        for (a, b) in p.iter().zip(&base) {
            sup = sup.max((a - b).abs());
        }
        sup > epsilon
    };

    let step = t / 200.0;
    let resolution = t / 1e5;
    let mut prev = 0.0f64;
    let mut s = step;
    while s <= horizon + 1e-12 * t {
        if moved(s) {
            let mut lo = prev;
            let mut hi = s;
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                if moved(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(AgeingOutcome {
                time: hi,
                censored: false,
            });
        }
        prev = s;
        s += step;
    }
    Ok(AgeingOutcome {
        time: horizon,
        censored: true,
    })
}

/// The diagnostic event flags: local-profile windows at the two maximisers,
/// penalised gaps, distance band and functional height, plus their
/// conjunction.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EventFlags {
    /// Field-window membership at Z^{(1,j)} with radius parameter j.
    pub s_j: bool,
    /// Field-window membership at Z^{(1,ρ)} with radius parameter ρ.
    pub s_rho: bool,
    /// Gap of the c = 0 penalised functional at n = j exceeds d_t e_t.
    pub g_zero: bool,
    /// Same with the probe constant c.
    pub g_c: bool,
    /// r_t f_t < |Z^{(1,j)}| < r_t g_t.
    pub h: bool,
    /// Ψ̃^{(j)}(Z^{(1,j)}) > a_t(1 - f_t).
    pub i: bool,
    pub conjunction: bool,
}

/// Membership of the local field profile around z in the rectangle event:
/// ξ(z) within a_t(1±f_t), first-shell values within a_t^{q(|y|)}(1±f_t) for
/// y in B(0, min(n,ρ))\{0}, outer-shell values in (0, a_t^η) for the rest of
/// B(0, j).
pub fn profile_window_event(
    field: &PotentialField,
    z: &Site,
    n: u64,
    scales: &ScaleSet,
) -> Result<bool> {
    let g = field.geometry();
    let zi = g.index_of(z)?;
    let a = scales.a_t;
    let f = scales.f_t;
    if !(field.value(zi) > a * (1.0 - f) && field.value(zi) < a * (1.0 + f)) {
        return Ok(false);
    }
    let inner_radius = n.min(scales.rho as u64);
    let origin = Site::origin(g.d());
    let oidx = g.index_of(&origin)?;
    for yidx in g.ball_indices(oidx, scales.j as u64) {
        let y = g.site_at(yidx);
        let dist = g.origin_distance_idx(yidx);
        if dist == 0 {
            continue;
        }
        let value = field.value(g.shifted_index(zi, &y.coords));
        if dist <= inner_radius {
            let center = a.powf(q_exponent(dist as u32, scales.gamma));
            if !(value > center * (1.0 - f) && value < center * (1.0 + f)) {
                return Ok(false);
            }
        } else if !(value > 0.0 && value < a.powf(scales.eta)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Evaluate every event flag literally from its definition.
pub fn event_flags(
    field: &PotentialField,
    scales: &ScaleSet,
    c: f64,
    eig_tol: f64,
) -> Result<EventFlags> {
    let j = scales.j as u64;
    let rho = scales.rho as u64;
    let top_j0 = top_two(field, j, 0.0, scales, eig_tol)?;
    let top_jc = top_two(field, j, c, scales, eig_tol)?;
    let top_r0 = if rho == j {
        top_j0.clone()
    } else {
        top_two(field, rho, 0.0, scales, eig_tol)?
    };

    let gap_floor = scales.d_t * scales.e_t;
    let g_zero = top_j0.gap > gap_floor;
    let g_c = top_jc.gap > gap_floor;
    let dist_j = field.geometry().origin_distance(&top_j0.z1)? as f64;
    let h = scales.r_t * scales.f_t < dist_j && dist_j < scales.r_t * scales.g_t;
    let i = top_j0.psi1 > scales.a_t * (1.0 - scales.f_t);
    let s_j = profile_window_event(field, &top_j0.z1, j, scales)?;
    let s_rho = profile_window_event(field, &top_r0.z1, rho, scales)?;
    Ok(EventFlags {
        s_j,
        s_rho,
        g_zero,
        g_c,
        h,
        i,
        conjunction: s_j && s_rho && g_zero && g_c && h && i,
    })
}

/// Per-realization record assembled by the experiment harness.
#[derive(Debug, Clone, Serialize)]
pub struct LocalisationReport {
    pub z1: Site,
    pub z2: Site,
    pub psi1: f64,
    pub psi2: f64,
    pub gap: f64,
    pub n_used: u64,
    pub c_used: f64,
    pub mass_at_z1: f64,
    pub lambda_local_at_z1: f64,
    pub event_flags: EventFlags,
}
