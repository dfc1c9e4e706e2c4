//! Three independent solvers for the Cauchy problem u' = (Δ + ξ)u from the
//! indicator of the origin, plus mass/profile extraction.
//!
//! * spectral: u(t, ·) = Σ_i e^{t λ_i} φ_i(0) φ_i(·), truncated to the top k
//!   modes (exact with k = dimension, the dense oracle mode);
//! * ODE: adaptive Dormand–Prince integration of u' = Hu, an independent
//!   oracle limited to modest sizes;
//! * Feynman–Kac Monte Carlo: continuous-time walk X with total jump rate 2d,
//!   weight exp(∫₀ᵗ ξ(X_s) + 2d ds), unbiased for the torus solution.
//!
//! Solution values can span thousands of e-folds, so a snapshot stores
//! u·exp(-log_scale) with the common exponent kept separately; ratios like
//! u(z)/U(t) never touch the exponent.

use crate::error::{CoreError, Result};
use crate::geometry::{Site, TorusGeometry};
use crate::operators::{build_hamiltonian, top_k_eigenpairs, HamiltonianVariant, SpectralData};
use crate::potential::PotentialField;
use crate::rng::substream;
use crate::scales::ScaleSet;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Spectral,
    Ode,
    FeynmanKacMc,
}

impl std::fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveMethod::Spectral => write!(f, "spectral"),
            SolveMethod::Ode => write!(f, "ode"),
            SolveMethod::FeynmanKacMc => write!(f, "fk"),
        }
    }
}

/// Solution at one time. True values are `u[i] * exp(log_scale)`; the scale
/// is zero whenever the values fit comfortably in linear f64 range.
#[derive(Debug, Clone)]
pub struct SolutionSnapshot {
    pub t: f64,
    pub u: Vec<f64>,
    pub total_mass: f64,
    pub log_scale: f64,
    pub method: SolveMethod,
    pub mc_stderr: Option<Vec<f64>>,
    /// e^{t(λ_k - λ_1)} for the spectral method: how much the smallest kept
    /// mode is suppressed relative to the top one.
    pub remainder_proxy: Option<f64>,
}

impl SolutionSnapshot {
    pub fn mass_fraction_at(&self, idx: usize) -> f64 {
        self.u[idx] / self.total_mass
    }

    /// Dump as CSV `coord_1..coord_d,u,stderr?` in the stored scale.
    pub fn dump_csv<W: std::io::Write>(&self, g: &TorusGeometry, mut w: W) -> Result<()> {
        let d = g.d();
        let header: Vec<String> = (1..=d).map(|k| format!("coord_{k}")).collect();
        if self.mc_stderr.is_some() {
            writeln!(w, "{},u,stderr", header.join(","))?;
        } else {
            writeln!(w, "{},u", header.join(","))?;
        }
        for i in 0..self.u.len() {
            let s = g.site_at(i);
            let coords: Vec<String> = s.coords.iter().map(|c| c.to_string()).collect();
            match &self.mc_stderr {
                Some(se) => writeln!(w, "{},{:.16e},{:.16e}", coords.join(","), self.u[i], se[i])?,
                None => writeln!(w, "{},{:.16e}", coords.join(","), self.u[i])?,
            }
        }
        Ok(())
    }
}

fn origin_index(g: &TorusGeometry) -> usize {
    g.index_of(&Site::origin(g.d())).expect("origin is valid")
}

/// Spectral solution from the top-k eigenpairs of Δ + ξ on the torus.
pub fn solve_spectral(field: &PotentialField, t: f64, k: usize, eig_tol: f64) -> Result<SolutionSnapshot> {
    if t < 0.0 {
        return Err(CoreError::Param(format!("t must be >= 0, got {t}")));
    }
    let op = build_hamiltonian(field, &HamiltonianVariant::Full)?;
    let sd = top_k_eigenpairs(&op, k.min(op.dim()), eig_tol)?;
    Ok(spectral_snapshot(field.geometry(), &sd, t))
}

/// Assemble the snapshot from precomputed eigenpairs (shared by the ageing
/// machinery, which reuses one decomposition across many times).
pub fn spectral_snapshot(g: &TorusGeometry, sd: &SpectralData, t: f64) -> SolutionSnapshot {
    let n = g.site_count();
    let o = origin_index(g);
    let k = sd.eigenvalues.len();
    // log-magnitude and sign of each mode weight e^{tλ} φ(0)
    let mut logw = Vec::with_capacity(k);
    let mut sign = Vec::with_capacity(k);
    for i in 0..k {
        let phi0 = sd.eigenvectors[i][o];
        if phi0 == 0.0 {
            logw.push(f64::NEG_INFINITY);
            sign.push(0.0);
        } else {
            logw.push(t * sd.eigenvalues[i] + phi0.abs().ln());
            sign.push(phi0.signum());
        }
    }
    let shift = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut u = vec![0.0; n];
    if shift.is_finite() {
        for i in 0..k {
            if sign[i] == 0.0 {
                continue;
            }
            let w = sign[i] * (logw[i] - shift).exp();
            if w == 0.0 {
                continue;
            }
            for (uz, phz) in u.iter_mut().zip(&sd.eigenvectors[i]) {
                *uz += w * phz;
            }
        }
    }
    let mut total_mass: f64 = u.iter().sum();
    // Keep values in linear range when possible.
    let log_scale = if shift.abs() <= 600.0 {
        let mult = shift.exp();
        for x in u.iter_mut() {
            *x *= mult;
        }
        total_mass *= mult;
        0.0
    } else {
        shift
    };
    let remainder_proxy = if k >= 2 {
        Some((t * (sd.eigenvalues[k - 1] - sd.eigenvalues[0])).exp())
    } else {
        Some(0.0)
    };
    SolutionSnapshot {
        t,
        u,
        total_mass,
        log_scale,
        method: SolveMethod::Spectral,
        mc_stderr: None,
        remainder_proxy,
    }
}

/// Adaptive Dormand–Prince (RK5(4)) on u' = Hu. Oracle-grade, not a
/// production path: limited to 10^4 sites.
pub fn solve_ode(field: &PotentialField, t: f64, rel_tol: f64) -> Result<SolutionSnapshot> {
    if rel_tol < 1e-12 {
        return Err(CoreError::Param(format!(
            "rel_tol must be >= 1e-12, got {rel_tol}"
        )));
    }
    if t < 0.0 {
        return Err(CoreError::Param(format!("t must be >= 0, got {t}")));
    }
    let g = field.geometry();
    let n = g.site_count();
    if n > 10_000 {
        return Err(CoreError::Input(format!(
            "ODE oracle limited to 10^4 sites, got {n}"
        )));
    }
    let op = build_hamiltonian(field, &HamiltonianVariant::Full)?;
    let mut u = vec![0.0; n];
    u[origin_index(g)] = 1.0;
    let mut log_scale = 0.0f64;

    // Dormand–Prince coefficients.
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let lam_hi = op.spectral_upper_bound().abs().max(1.0);
    let mut h = (0.1 / lam_hi).min(t.max(1e-12));
    let mut time = 0.0;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut stage = vec![0.0; n];
    let mut u5 = vec![0.0; n];
    let mut u4 = vec![0.0; n];

    while time < t {
        if time + h > t {
            h = t - time;
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(CoreError::Stiffness { t: time });
        }
        op.matvec(&u, &mut k[0]);
        for s in 0..6 {
            for i in 0..n {
                let mut acc = u[i];
                for (j, kj) in k.iter().enumerate().take(s + 1) {
                    let a = A[s][j];
                    if a != 0.0 {
                        acc += h * a * kj[i];
                    }
                }
                stage[i] = acc;
            }
            let (_, tail) = k.split_at_mut(s + 1);
            op.matvec(&stage, &mut tail[0]);
        }
        let mut err_num = 0.0f64;
        let mut scale_den = 0.0f64;
        for i in 0..n {
            let mut v5 = u[i];
            let mut v4 = u[i];
            for j in 0..7 {
                if B5[j] != 0.0 {
                    v5 += h * B5[j] * k[j][i];
                }
                if B4[j] != 0.0 {
                    v4 += h * B4[j] * k[j][i];
                }
            }
            u5[i] = v5;
            u4[i] = v4;
            err_num = err_num.max((v5 - v4).abs());
            scale_den = scale_den.max(v5.abs());
        }
        let err = err_num / (rel_tol * scale_den.max(1e-300));
        if err <= 1.0 {
            time += h;
            std::mem::swap(&mut u, &mut u5);
            // Renormalize to dodge overflow; the ODE is linear.
            let umax = u.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            if umax > 1e250 {
                let c = umax.ln();
                let mult = (-c).exp();
                for x in u.iter_mut() {
                    *x *= mult;
                }
                log_scale += c;
            }
        }
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
    }

    let mut total_mass: f64 = u.iter().sum();
    if log_scale != 0.0 && log_scale.abs() <= 600.0 {
        let mult = log_scale.exp();
        for x in u.iter_mut() {
            *x *= mult;
        }
        total_mass *= mult;
        log_scale = 0.0;
    }
    Ok(SolutionSnapshot {
        t,
        u,
        total_mass,
        log_scale,
        method: SolveMethod::Ode,
        mc_stderr: None,
        remainder_proxy: None,
    })
}

/// Feynman–Kac estimator on the torus: walkers carry log-weights
/// 2dt + ∫ ξ(X_s) ds; per-site means and standard errors are reduced in a
/// fixed pairwise tree over walker blocks, so results are bitwise identical
/// for any worker count.
pub fn feynman_kac_mc(
    field: &PotentialField,
    t: f64,
    walkers: usize,
    seed: u64,
) -> Result<SolutionSnapshot> {
    if walkers < 1_000 {
        return Err(CoreError::Param(format!(
            "need at least 10^3 walkers, got {walkers}"
        )));
    }
    if t < 0.0 {
        return Err(CoreError::Param(format!("t must be >= 0, got {t}")));
    }
    let g = field.geometry();
    let n = g.site_count();
    let o = origin_index(g);
    let two_d = 2 * g.d();
    let rate = two_d as f64;

    let mut nbr = vec![0usize; n * two_d];
    for i in 0..n {
        let nb = g.neighbors_idx(i);
        nbr[i * two_d..(i + 1) * two_d].copy_from_slice(&nb);
    }

    let walk = |w: usize| -> (usize, f64) {
        let mut rng = substream(seed, w as u64);
        let mut x = o;
        let mut time = 0.0f64;
        let mut logw = rate * t;
        loop {
            let hold = -(rng.gen::<f64>().max(f64::MIN_POSITIVE)).ln() / rate;
            if time + hold >= t {
                logw += field.value(x) * (t - time);
                break;
            }
            logw += field.value(x) * hold;
            time += hold;
            x = nbr[x * two_d + rng.gen_range(0..two_d)];
        }
        (x, logw)
    };

    use rayon::prelude::*;
    let results: Vec<(usize, f64)> = (0..walkers).into_par_iter().map(walk).collect();

    let shift = results
        .iter()
        .map(|&(_, lw)| lw)
        .fold(f64::NEG_INFINITY, f64::max);

    // Pairwise tree over fixed-size walker blocks: per-site Σw and Σw².
    const BLOCK: usize = 1024;
    struct Acc {
        sum: Vec<f64>,
        sumsq: Vec<f64>,
    }
    fn block_acc(results: &[(usize, f64)], shift: f64, n: usize) -> Acc {
        let mut acc = Acc {
            sum: vec![0.0; n],
            sumsq: vec![0.0; n],
        };
        for &(x, lw) in results {
            let w = (lw - shift).exp();
            acc.sum[x] += w;
            acc.sumsq[x] += w * w;
        }
        acc
    }
    fn merge(mut a: Acc, b: Acc) -> Acc {
        for i in 0..a.sum.len() {
            a.sum[i] += b.sum[i];
            a.sumsq[i] += b.sumsq[i];
        }
        a
    }
    fn reduce(results: &[(usize, f64)], shift: f64, n: usize) -> Acc {
        if results.len() <= BLOCK {
            return block_acc(results, shift, n);
        }
        let blocks = results.len().div_ceil(BLOCK);
        let mid = (blocks / 2) * BLOCK;
        let (l, r) = results.split_at(mid);
        merge(reduce(l, shift, n), reduce(r, shift, n))
    }
    let acc = reduce(&results, shift, n);

    let wn = walkers as f64;
    let mut u: Vec<f64> = acc.sum.iter().map(|s| s / wn).collect();
    let mut stderr: Vec<f64> = (0..n)
        .map(|i| {
            let mean = acc.sum[i] / wn;
            let var = (acc.sumsq[i] / wn - mean * mean).max(0.0);
            (var / wn).sqrt()
        })
        .collect();
    let mut total_mass: f64 = u.iter().sum();
    let log_scale = if shift.abs() <= 600.0 {
        let mult = shift.exp();
        for x in u.iter_mut() {
            *x *= mult;
        }
        for x in stderr.iter_mut() {
            *x *= mult;
        }
        total_mass *= mult;
        0.0
    } else {
        shift
    };
    Ok(SolutionSnapshot {
        t,
        u,
        total_mass,
        log_scale,
        method: SolveMethod::FeynmanKacMc,
        mc_stderr: Some(stderr),
        remainder_proxy: None,
    })
}

/// Max deviation between the solution on a large torus and on a window torus
/// whose field values agree on the window (the finite-box analogue of the
/// macrobox truncation estimate). Both sides solved with the exact spectral
/// route.
pub fn macrobox_truncation_check(
    field_large: &PotentialField,
    field_window: &PotentialField,
    t: f64,
    eig_tol: f64,
) -> Result<(f64, f64)> {
    let gl = field_large.geometry();
    let gw = field_window.geometry();
    if gl.d() != gw.d() || gw.side() > gl.side() {
        return Err(CoreError::Input(
            "window must live inside the larger torus".into(),
        ));
    }
    for i in 0..gw.site_count() {
        let s = gw.site_at(i);
        if field_window.value(i) != field_large.xi(&s)? {
            return Err(CoreError::Input(format!(
                "fields disagree at {s}: {} vs {}",
                field_window.value(i),
                field_large.xi(&s)?
            )));
        }
    }
    let ul = solve_spectral(field_large, t, gl.site_count(), eig_tol)?;
    let uw = solve_spectral(field_window, t, gw.site_count(), eig_tol)?;
    if ul.log_scale != 0.0 || uw.log_scale != 0.0 {
        return Err(CoreError::Input(
            "truncation check requires linear-range solutions (small t)".into(),
        ));
    }
    let mut max_dev = 0.0f64;
    for i in 0..gw.site_count() {
        let s = gw.site_at(i);
        let dev = (uw.u[i] - ul.u[gl.index_of(&s)?]).abs();
        max_dev = max_dev.max(dev);
    }
    Ok((max_dev, (ul.total_mass - uw.total_mass).abs()))
}

/// One row of the exponential-shape profile.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileRow {
    pub distance: u64,
    pub log_ratio: f64,
    /// log(u/U) / ((1/γ)|z-Z| log log t); absent at distance zero.
    pub normalized_ratio: Option<f64>,
}

/// Per-site profile records around the localisation site Z for every site
/// with u > 0.
pub fn profile_extract(
    snapshot: &SolutionSnapshot,
    g: &TorusGeometry,
    z_loc: &Site,
    scales: &ScaleSet,
) -> Result<Vec<ProfileRow>> {
    if !(snapshot.total_mass > 0.0) {
        return Err(CoreError::Input("total mass must be positive".into()));
    }
    let zi = g.index_of(z_loc)?;
    let z_site = g.site_at(zi);
    let mut rows = Vec::new();
    for i in 0..snapshot.u.len() {
        if snapshot.u[i] <= 0.0 {
            continue;
        }
        let dist = g.torus_distance(&g.site_at(i), &z_site)?;
        let log_ratio = (snapshot.u[i] / snapshot.total_mass).ln();
        let normalized_ratio = if dist == 0 {
            None
        } else {
            Some(log_ratio / (dist as f64 * scales.loglog_t / scales.gamma))
        };
        rows.push(ProfileRow {
            distance: dist,
            log_ratio,
            normalized_ratio,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{mix, u64_to_open_unit};
    use crate::scales::{compute_scales, ScaleParams};

    fn zero_field(side: i64) -> PotentialField {
        let g = TorusGeometry::new(1, side).unwrap();
        let n = g.site_count();
        PotentialField::from_values(g, vec![0.0; n], 2.0, 0).unwrap()
    }

    fn random_field(side: i64, scale: f64, seed: u64) -> PotentialField {
        let g = TorusGeometry::new(1, side).unwrap();
        let n = g.site_count();
        let values = (0..n)
            .map(|i| scale * u64_to_open_unit(mix(seed, i as u64)))
            .collect();
        PotentialField::from_values(g, values, 2.0, seed).unwrap()
    }

    #[test]
    fn spectral_at_time_zero_is_indicator() {
        let f = random_field(15, 2.0, 3);
        let s = solve_spectral(&f, 0.0, 15, 1e-10).unwrap();
        let o = f.geometry().index_of(&Site::origin(1)).unwrap();
        for i in 0..15 {
            let expect = if i == o { 1.0 } else { 0.0 };
            assert!((s.u[i] - expect).abs() < 1e-9, "site {i}: {}", s.u[i]);
        }
        assert!((s.total_mass - 1.0).abs() < 1e-9);
    }

    /// ξ ≡ 0 mass identity: dU/dt = 2dU under the neighbour-sum convention,
    /// so U(t) = e^{2dt} exactly.
    #[test]
    fn zero_field_mass_identity() {
        let f = zero_field(21);
        let s = solve_spectral(&f, 1.0, 21, 1e-10).unwrap();
        assert!((s.total_mass - (2.0f64).exp()).abs() < 1e-8);

        let o = solve_ode(&f, 1.0, 1e-12).unwrap();
        assert!(
            (o.total_mass - (2.0f64).exp()).abs() < 1e-6,
            "ODE mass {}",
            o.total_mass
        );
    }

    #[test]
    fn ode_time_zero_is_indicator() {
        let f = random_field(11, 1.0, 9);
        let s = solve_ode(&f, 0.0, 1e-12).unwrap();
        let o = f.geometry().index_of(&Site::origin(1)).unwrap();
        assert_eq!(s.u[o], 1.0);
        assert_eq!(s.total_mass, 1.0);
    }

    /// Dense spectral vs ODE on a random 15-site field at t = 2.
    #[test]
    fn spectral_vs_ode_cross_oracle() {
        let f = random_field(15, 2.0, 21);
        let a = solve_spectral(&f, 2.0, 15, 1e-11).unwrap();
        let b = solve_ode(&f, 2.0, 1e-12).unwrap();
        let sup = a.u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        for i in 0..15 {
            assert!(
                (a.u[i] - b.u[i]).abs() <= 1e-7 * sup,
                "site {i}: {} vs {}",
                a.u[i],
                b.u[i]
            );
        }
    }

    /// FK with ξ ≡ 0: every walker carries the same weight e^{2dt}, so the
    /// total-mass estimate is exact even though per-site occupancy varies.
    #[test]
    fn fk_zero_field_exact_weight() {
        let f = zero_field(11);
        let s = feynman_kac_mc(&f, 1.0, 2_000, 5).unwrap();
        assert!((s.total_mass - (2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn fk_time_zero_is_indicator() {
        let f = random_field(11, 2.0, 4);
        let s = feynman_kac_mc(&f, 0.0, 1_000, 8).unwrap();
        let o = f.geometry().index_of(&Site::origin(1)).unwrap();
        assert_eq!(s.mass_fraction_at(o), 1.0);
    }

    #[test]
    fn fk_matches_spectral_within_three_sigma() {
        let mut hits = 0;
        let seeds = 20;
        for seed in 0..seeds {
            let f = random_field(15, 2.0, 100 + seed);
            let spec = solve_spectral(&f, 1.0, 15, 1e-11).unwrap();
            let fk = feynman_kac_mc(&f, 1.0, 20_000, seed).unwrap();
            // σ of Û: per-site stderrs add in quadrature only for independent
            // cells; Σ stderr is a safe upper bound for the mass error bar.
            let sigma: f64 = fk.mc_stderr.as_ref().unwrap().iter().sum();
            if (fk.total_mass - spec.total_mass).abs() <= 3.0 * sigma {
                hits += 1;
            }
        }
        assert!(hits >= seeds - 1, "only {hits}/{seeds} within 3σ");
    }

    #[test]
    fn fk_deterministic_in_seed() {
        let f = random_field(11, 1.5, 6);
        let a = feynman_kac_mc(&f, 1.0, 4_000, 42).unwrap();
        let b = feynman_kac_mc(&f, 1.0, 4_000, 42).unwrap();
        assert_eq!(a.u, b.u);
        let c = feynman_kac_mc(&f, 1.0, 4_000, 43).unwrap();
        assert_ne!(a.u, c.u);
    }

    #[test]
    fn fk_walker_floor() {
        let f = random_field(11, 1.0, 6);
        assert!(feynman_kac_mc(&f, 1.0, 10, 1).is_err());
    }

    /// Positivity, clip-free: every solver returns u ≥ 0 on small instances.
    #[test]
    fn positivity_across_solvers() {
        for seed in 0..10u64 {
            let f = random_field(15, 2.0, 500 + seed);
            let a = solve_spectral(&f, 1.5, 15, 1e-11).unwrap();
            let b = solve_ode(&f, 1.5, 1e-12).unwrap();
            let c = feynman_kac_mc(&f, 1.5, 2_000, seed).unwrap();
            for s in [&a, &b, &c] {
                assert!(
                    s.u.iter().all(|&x| x >= 0.0),
                    "{:?} produced negative mass",
                    s.method
                );
            }
        }
    }

    /// Mass growth bounds from the eigenvalue sandwich:
    /// e^{t max ξ} ≤ U(t) ≤ (site count) e^{t(max ξ + 2d)}.
    #[test]
    fn mass_growth_bounds() {
        for seed in 0..10u64 {
            let f = random_field(21, 2.5, 700 + seed);
            let t = 2.0;
            let s = solve_spectral(&f, t, 21, 1e-11).unwrap();
            let m = f.max_value();
            assert!(s.total_mass >= (t * m).exp() * (1.0 - 1e-9));
            assert!(s.total_mass <= 21.0 * (t * (m + 2.0)).exp() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn truncation_check_identity_and_window() {
        let g = TorusGeometry::new(1, 41).unwrap();
        let f = PotentialField::sample(g, 2.0, 77).unwrap();
        let (du, dm) = macrobox_truncation_check(&f, &f, 1.0, 1e-11).unwrap();
        assert_eq!(du, 0.0);
        assert_eq!(dm, 0.0);

        // Documented case: sides 41 vs 81 at t = 1, deviation below 1e-6 U.
        let large = PotentialField::sample(TorusGeometry::new(1, 81).unwrap(), 2.0, 77).unwrap();
        let w41 = PotentialField::sample(TorusGeometry::new(1, 41).unwrap(), 2.0, 77).unwrap();
        let (d41, _) = macrobox_truncation_check(&large, &w41, 1.0, 1e-11).unwrap();
        let u = solve_spectral(&large, 1.0, 81, 1e-11).unwrap();
        assert!(d41 <= 1e-6 * u.total_mass, "window deviation {d41}");

        // Nested windows where the wraparound signal sits above solver noise:
        // the deviation decreases strictly as the window grows.
        let big = PotentialField::sample(TorusGeometry::new(1, 41).unwrap(), 2.0, 78).unwrap();
        let w15 = PotentialField::sample(TorusGeometry::new(1, 15).unwrap(), 2.0, 78).unwrap();
        let w21 = PotentialField::sample(TorusGeometry::new(1, 21).unwrap(), 2.0, 78).unwrap();
        let (d15, _) = macrobox_truncation_check(&big, &w15, 2.0, 1e-11).unwrap();
        let (d21, _) = macrobox_truncation_check(&big, &w21, 2.0, 1e-11).unwrap();
        assert!(d21 < d15, "d15={d15}, d21={d21}");
    }

    #[test]
    fn truncation_check_rejects_mismatched_fields() {
        let a = PotentialField::sample(TorusGeometry::new(1, 81).unwrap(), 2.0, 1).unwrap();
        let b = PotentialField::sample(TorusGeometry::new(1, 41).unwrap(), 2.0, 2).unwrap();
        assert!(macrobox_truncation_check(&a, &b, 1.0, 1e-11).is_err());
    }

    #[test]
    fn profile_rows() {
        let f = random_field(15, 2.0, 31);
        let s = solve_spectral(&f, 2.0, 15, 1e-11).unwrap();
        let scales = compute_scales(&ScaleParams::new(100.0, 1, 2.0, 0.25).with_side(15)).unwrap();
        let z = Site::new(vec![4]);
        let rows = profile_extract(&s, f.geometry(), &z, &scales).unwrap();
        assert_eq!(rows.len(), 15);
        for r in &rows {
            if r.distance == 0 {
                assert!(r.normalized_ratio.is_none());
            } else {
                assert!(r.normalized_ratio.is_some());
            }
        }
    }

    /// ξ ≡ 0 on the torus: past the mixing time the renormalized profile is
    /// flat in z.
    #[test]
    fn profile_flat_for_zero_field_at_large_t() {
        let f = zero_field(11);
        let s = solve_spectral(&f, 100.0, 11, 1e-11).unwrap();
        let lo = s.u.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(((hi / lo).ln()).abs() < 1e-9, "spread {}", (hi / lo).ln());
    }

    #[test]
    fn snapshot_csv_has_full_precision() {
        let f = random_field(5, 1.0, 1);
        let s = solve_spectral(&f, 0.5, 5, 1e-11).unwrap();
        let mut buf = Vec::new();
        s.dump_csv(f.geometry(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("coord_1,u\n"));
        for line in text.lines().skip(1) {
            let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            let i: i64 = line.split(',').next().unwrap().parse().unwrap();
            let idx = f.geometry().index_of(&Site::new(vec![i])).unwrap();
            assert_eq!(v, s.u[idx], "17 significant digits round-trip");
        }
    }
}
