//! Restricted nearest-neighbour path families and the fixed-point path
//! expansions they support.
//!
//! Γ*_k(z, n) is the family of closed length-k nearest-neighbour paths from z
//! to z inside B(z, n) whose interior never revisits z. The local principal
//! eigenvalue solves
//!
//!   λ = ξ(z) + Σ_{k≥2} Σ_{Γ*_k(z,n)} Π_{0<i<k} 1/(λ - ξ̃(y_i)),
//!
//! with ξ̃ the punctured interior values; truncating at k ≤ 2j costs o(d_t e_t).
//! The same machinery gives partial sums of the Green's function path
//! expansion over Δ.

use crate::error::{CoreError, Result};
use crate::geometry::{Site, TorusGeometry};
use crate::potential::PotentialField;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Closed paths of one length at one base site.
#[derive(Debug, Clone)]
pub struct PathFamily {
    pub base: Site,
    pub radius: u64,
    pub length: usize,
    /// Each path as the full site sequence z = y_0, …, y_k = z.
    pub paths: Vec<Vec<Site>>,
}

/// Offset-space key: path shapes depend only on (d, n, k) up to translation.
type MemoKey = (usize, u64, usize);

fn memo() -> &'static Mutex<HashMap<MemoKey, Vec<Vec<Vec<i64>>>>> {
    static MEMO: OnceLock<Mutex<HashMap<MemoKey, Vec<Vec<Vec<i64>>>>>> = OnceLock::new();
    MEMO.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Enumerate the relative step sequences of Γ*_k(0, n) on the infinite
/// lattice; deterministic order (depth-first, axis steps in -/+ order).
/// Wrap collisions are resolved when a family is materialized on a torus.
fn offset_paths(d: usize, n: u64, k: usize) -> Vec<Vec<Vec<i64>>> {
    if let Some(hit) = memo().lock().unwrap().get(&(d, n, k)) {
        return hit.clone();
    }
    let mut out = Vec::new();
    let mut current: Vec<Vec<i64>> = vec![vec![0; d]];
    dfs_paths(d, n as i64, k, &mut current, &mut out);
    memo().lock().unwrap().insert((d, n, k), out.clone());
    out
}

fn dfs_paths(d: usize, n: i64, k: usize, current: &mut Vec<Vec<i64>>, out: &mut Vec<Vec<Vec<i64>>>) {
    let step_idx = current.len() - 1;
    if step_idx == k {
        if current[k].iter().all(|&c| c == 0) {
            out.push(current.clone());
        }
        return;
    }
    let last = current[step_idx].clone();
    for axis in 0..d {
        for dir in [-1i64, 1] {
            let mut next = last.clone();
            next[axis] += dir;
            let l1: i64 = next.iter().map(|c| c.abs()).sum();
            if l1 > n {
                continue;
            }
            let interior = step_idx + 1 < k;
            if interior && l1 == 0 {
                continue; // interior may not revisit the base
            }
            // Remaining steps must suffice to return.
            if l1 > (k - step_idx - 1) as i64 {
                continue;
            }
            current.push(next);
            dfs_paths(d, n, k, current, out);
            current.pop();
        }
    }
}

/// Exhaustive, duplicate-free enumeration of Γ*_k(z, n) on the torus.
pub fn enumerate_paths(z: &Site, n: u64, k: usize, g: &TorusGeometry) -> Result<PathFamily> {
    if k < 2 {
        return Err(CoreError::Param(format!("path length must be >= 2, got {k}")));
    }
    let zi = g.index_of(z)?;
    let rel = offset_paths(g.d(), n, k);
    // On small tori distinct offsets can wrap to the same site sequence.
    let mut seen: Vec<Vec<usize>> = Vec::new();
    for path in &rel {
        let idx_seq: Vec<usize> = path.iter().map(|off| g.shifted_index(zi, off)).collect();
        if !seen.contains(&idx_seq) {
            seen.push(idx_seq);
        }
    }
    let paths = seen
        .into_iter()
        .map(|seq| seq.into_iter().map(|i| g.site_at(i)).collect())
        .collect();
    Ok(PathFamily {
        base: z.clone(),
        radius: n,
        length: k,
        paths,
    })
}

/// How the path-expansion sum is truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    /// Keep paths of length 2..=max_len (the 2j rule of the error budget).
    MaxLen(usize),
    /// Resum all path lengths exactly via the interior Green's function;
    /// only sensible on small balls, used as the oracle mode.
    Untruncated,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub lambda: f64,
    pub iterations: usize,
    pub last_delta: f64,
}

/// Interior values for the expansion at z: punctured field on B(z, n) with
/// the centre's own value excluded from the interior by construction.
fn interior_punctured(field: &PotentialField, z: &Site, n: u64, level: f64) -> Result<(Vec<usize>, Vec<f64>)> {
    let g = field.geometry();
    let zi = g.index_of(z)?;
    let ball = g.ball_indices(zi, n);
    let values = ball
        .iter()
        .map(|&i| {
            let v = field.value(i);
            if v > level && i != zi {
                0.0
            } else {
                v
            }
        })
        .collect();
    Ok((ball, values))
}

/// Evaluate the truncated path sum S(λ) = Σ_k Σ_{Γ*_k} Π 1/(λ - ξ̃(y_i)).
fn path_sum(
    field: &PotentialField,
    z: &Site,
    n: u64,
    level: f64,
    lambda: f64,
    max_len: usize,
) -> Result<f64> {
    let g = field.geometry();
    let zi = g.index_of(z)?;
    let mut total = 0.0;
    for k in (2..=max_len).step_by(2) {
        // Odd k contributes nothing (bipartite parity), skip enumerating it.
        let fam = enumerate_paths(z, n, k, g)?;
        for path in &fam.paths {
            let mut prod = 1.0;
            for y in &path[1..k] {
                let yi = g.index_of(y)?;
                let v = if field.value(yi) > level && yi != zi {
                    0.0
                } else {
                    field.value(yi)
                };
                prod /= lambda - v;
            }
            total += prod;
        }
    }
    Ok(total)
}

/// Exact resummation of the interior path series: Σ_{y,y' ~ z} G_int(λ; y, y')
/// with G_int the Green's function of the ball with the centre removed.
fn schur_sum(field: &PotentialField, z: &Site, n: u64, level: f64, lambda: f64) -> Result<f64> {
    let g = field.geometry();
    let zi = g.index_of(z)?;
    let (ball, values) = interior_punctured(field, z, n, level)?;
    // Interior = ball minus the centre.
    let interior: Vec<usize> = ball.iter().copied().filter(|&i| i != zi).collect();
    if interior.is_empty() {
        return Ok(0.0);
    }
    let local: HashMap<usize, usize> = interior.iter().enumerate().map(|(l, &i)| (i, l)).collect();
    let m = interior.len();
    let mut a = nalgebra::DMatrix::zeros(m, m);
    for (l, &i) in interior.iter().enumerate() {
        let bpos = ball.binary_search(&i).unwrap();
        a[(l, l)] = lambda - values[bpos];
        for nb in g.neighbors_idx(i) {
            if let Some(&l2) = local.get(&nb) {
                a[(l, l2)] = -1.0;
            }
        }
    }
    let neighbors_of_z: Vec<usize> = g
        .neighbors_idx(zi)
        .into_iter()
        .filter_map(|nb| local.get(&nb).copied())
        .collect();
    let mut rhs = nalgebra::DVector::zeros(m);
    for &l in &neighbors_of_z {
        rhs[l] += 1.0;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| CoreError::Regime("interior solve singular".into()))?;
    Ok(neighbors_of_z.iter().map(|&l| sol[l]).sum())
}

/// Iteratively evaluate the path expansion for λ̃^{(n)}(z), starting from
/// λ₀ = ξ(z). The iteration must stay inside (ξ(z), ξ(z) + 2d]; leaving it,
/// or failing to contract, is a regime error and the caller falls back to
/// the eigensolver.
pub fn lambda_fixed_point(
    field: &PotentialField,
    z: &Site,
    n: u64,
    level: f64,
    tol: f64,
    max_iter: usize,
    truncation: Truncation,
) -> Result<FixedPointResult> {
    let xi_z = field.xi(z)?;
    if n == 0 {
        return Ok(FixedPointResult {
            lambda: xi_z,
            iterations: 0,
            last_delta: 0.0,
        });
    }
    let (_, interior_vals) = interior_punctured(field, z, n, level)?;
    let max_interior = interior_vals
        .iter()
        .zip(field.geometry().ball_indices(field.geometry().index_of(z)?, n))
        .filter(|&(_, i)| i != field.geometry().index_of(z).unwrap())
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if xi_z <= max_interior {
        return Err(CoreError::Regime(format!(
            "peak value {xi_z} not above interior maximum {max_interior}"
        )));
    }

    let two_d = 2.0 * field.geometry().d() as f64;
    let hi = xi_z + two_d;
    let sum_at = |lam: f64| -> Result<f64> {
        match truncation {
            Truncation::MaxLen(m) => path_sum(field, z, n, level, lam, m),
            Truncation::Untruncated => schur_sum(field, z, n, level, lam),
        }
    };

    let mut lambda = xi_z;
    let mut prev_delta = f64::INFINITY;
    let mut damping_on = false;
    for it in 1..=max_iter {
        let s = sum_at(lambda.max(xi_z + 1e-300))?;
        let mut next = xi_z + s;
        if damping_on {
            next = 0.5 * (next + lambda);
        }
        let delta = next - lambda;
        if !(next.is_finite()) || next > hi + 1e-9 || (it > 1 && next < xi_z - 1e-9) {
            return Err(CoreError::Regime(format!(
                "iterate {next} left ({xi_z}, {hi}] at step {it}"
            )));
        }
        lambda = next;
        if delta.abs() <= tol {
            return Ok(FixedPointResult {
                lambda,
                iterations: it,
                last_delta: delta,
            });
        }
        if delta.abs() > prev_delta.abs() && delta * prev_delta < 0.0 {
            // Alternating overshoot: damp the update.
            damping_on = true;
        } else if delta.abs() > prev_delta.abs() && it > 3 {
            return Err(CoreError::Regime(format!(
                "iteration diverges: |δ| grew from {prev_delta:.3e} to {delta:.3e}"
            )));
        }
        prev_delta = delta;
    }
    Err(CoreError::Regime(format!(
        "no convergence after {max_iter} iterations (last δ = {prev_delta:.3e})"
    )))
}

/// Partial sum over nearest-neighbour paths x → y of length ≤ max_len for the
/// Green's function of Δ + ζ; the degenerate x = y path contributes
/// 1/(λ - ζ(x)). Requires λ > max ζ + 2d (the convergent regime).
pub fn greens_path_partial_sum(
    zeta: &PotentialField,
    lambda: f64,
    x: &Site,
    y: &Site,
    max_len: usize,
) -> Result<f64> {
    let g = zeta.geometry();
    let max_zeta = zeta.max_value();
    let two_d = 2.0 * g.d() as f64;
    if !(lambda > max_zeta + two_d) {
        return Err(CoreError::Regime(format!(
            "lambda {lambda} inside the divergence region (need > {})",
            max_zeta + two_d
        )));
    }
    let xi = g.index_of(x)?;
    let yi = g.index_of(y)?;
    let n = g.site_count();
    // Sum_k [D^{-1} (A D^{-1})^k]_{x,y}: iterate v ← D^{-1} A v from D^{-1} e_y.
    let inv_d: Vec<f64> = (0..n).map(|i| 1.0 / (lambda - zeta.value(i))).collect();
    let mut v = vec![0.0; n];
    v[yi] = inv_d[yi];
    let mut total = v[xi];
    let mut next = vec![0.0; n];
    for _ in 1..=max_len {
        for i in 0..n {
            let mut acc = 0.0;
            for nb in g.neighbors_idx(i) {
                acc += v[nb];
            }
            next[i] = acc * inv_d[i];
        }
        std::mem::swap(&mut v, &mut next);
        total += v[xi];
    }
    Ok(total)
}
