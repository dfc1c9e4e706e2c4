//! Hamiltonian variants as sparse symmetric operators, their top eigenpairs,
//! and Green's functions.
//!
//! Every operator is Δ (pure neighbour sum, off-diagonal 1 between active
//! nearest neighbours, no -2d diagonal) plus a diagonal potential. Variants
//! differ only in the diagonal and in the active domain:
//!
//! * `Full`                    ξ on the whole torus
//! * `Punctured(L)`            ξ zeroed on every site with ξ > L
//! * `SinglePeak(L, z)`        punctured, with ξ(z) restored at z
//! * `SinglePunctured(z)`      ξ with the single site z zeroed
//! * `RestrictedPuncturedPeak` punctured-with-peak on the ball B(z, n),
//!                             Dirichlet outside
//!
//! Eigenpairs come from a dense solver below [`DENSE_THRESHOLD`] and from a
//! restarted Lanczos iteration with full reorthogonalization above it; the
//! dense path doubles as the oracle for the iterative one.

use crate::error::{CoreError, Result};
use crate::geometry::{Site, TorusGeometry};
use crate::potential::PotentialField;
use nalgebra::{DMatrix, DVector};

/// Dimension at and below which eigenproblems are solved densely.
pub const DENSE_THRESHOLD: usize = 400;

/// Default eigensolver tolerance: residual ‖Hφ - λφ‖ ≤ tol · max(1, |λ|).
pub const DEFAULT_EIG_TOL: f64 = 1e-10;

/// Eigenvalues closer than 1e-9·max(1, |λ₁|) are treated as a numerically
/// degenerate cluster and flagged.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum HamiltonianVariant {
    Full,
    Punctured { level: f64 },
    SinglePeak { level: f64, peak: Site },
    SinglePunctured { site: Site },
    RestrictedPuncturedPeak { level: f64, center: Site, radius: u64 },
}

/// Symmetric operator: diagonal potential plus unit off-diagonals between
/// active nearest neighbours, in CSR form over the active domain.
#[derive(Debug, Clone)]
pub struct SparseSymOp {
    geometry: TorusGeometry,
    /// Global (torus) indices of the active sites, sorted ascending.
    active: Vec<usize>,
    diag: Vec<f64>,
    adj_ptr: Vec<usize>,
    adj_idx: Vec<usize>,
}

impl SparseSymOp {
    pub fn dim(&self) -> usize {
        self.active.len()
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn active_sites(&self) -> &[usize] {
        &self.active
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_full_domain(&self) -> bool {
        self.active.len() == self.geometry.site_count()
    }

    pub fn local_of_global(&self, global: usize) -> Option<usize> {
        if self.is_full_domain() {
            return Some(global);
        }
        self.active.binary_search(&global).ok()
    }

    pub fn local_of_site(&self, s: &Site) -> Result<usize> {
        let g = self.geometry.index_of(s)?;
        self.local_of_global(g).ok_or_else(|| CoreError::InvalidSite {
            site: s.coords.clone(),
            reason: "site outside the operator's active domain".into(),
        })
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for i in 0..self.dim() {
            let mut acc = self.diag[i] * x[i];
            for k in self.adj_ptr[i]..self.adj_ptr[i + 1] {
                acc += x[self.adj_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for k in self.adj_ptr[i]..self.adj_ptr[i + 1] {
                m[(i, self.adj_idx[k])] = 1.0;
            }
        }
        m
    }

    /// Upper bound max ξ + 2d for the spectrum (Gershgorin).
    pub fn spectral_upper_bound(&self) -> f64 {
        let max_diag = self.diag.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        max_diag + 2.0 * self.geometry.d() as f64
    }

    /// Embed a local vector into the full torus, zero off-domain.
    pub fn embed(&self, local: &[f64]) -> Vec<f64> {
        if self.is_full_domain() {
            return local.to_vec();
        }
        let mut full = vec![0.0; self.geometry.site_count()];
        for (l, &g) in self.active.iter().enumerate() {
            full[g] = local[l];
        }
        full
    }
}

/// Top-k eigenpairs with residuals and localisation centres.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Strictly descending after the degeneracy dedup.
    pub eigenvalues: Vec<f64>,
    /// ℓ²-normalized, embedded over the full torus (zero off-domain), sign
    /// fixed so that φ(argmax site) > 0.
    pub eigenvectors: Vec<Vec<f64>>,
    /// ‖Hφ - λφ‖₂ per pair, measured with the real operator.
    pub residuals: Vec<f64>,
    /// Site of max |φ| per vector.
    pub argmax_sites: Vec<Site>,
    /// Set when two returned eigenvalues are closer than the dedup tolerance;
    /// such realizations are excluded from gap statistics.
    pub degenerate: bool,
}

impl SpectralData {
    pub fn origin_component(&self, i: usize, g: &TorusGeometry) -> f64 {
        let o = g.index_of(&Site::origin(g.d())).expect("origin is valid");
        self.eigenvectors[i][o]
    }
}

pub fn build_hamiltonian(field: &PotentialField, variant: &HamiltonianVariant) -> Result<SparseSymOp> {
    let g = field.geometry().clone();
    let n = g.site_count();
    match variant {
        HamiltonianVariant::RestrictedPuncturedPeak {
            level,
            center,
            radius,
        } => {
            let center_idx = g.index_of(center)?;
            let active = g.ball_indices(center_idx, *radius);
            let punctured: Vec<bool> = active
                .iter()
                .map(|&i| field.value(i) > *level && i != center_idx)
                .collect();
            let diag: Vec<f64> = active
                .iter()
                .zip(&punctured)
                .map(|(&i, &p)| if p { 0.0 } else { field.value(i) })
                .collect();
            let (adj_ptr, adj_idx) = ball_adjacency(&g, &active);
            Ok(SparseSymOp {
                geometry: g,
                active,
                diag,
                adj_ptr,
                adj_idx,
            })
        }
        _ => {
            let mut diag: Vec<f64> = field.values().to_vec();
            match variant {
                HamiltonianVariant::Full => {}
                HamiltonianVariant::Punctured { level } => {
                    for v in diag.iter_mut() {
                        if *v > *level {
                            *v = 0.0;
                        }
                    }
                }
                HamiltonianVariant::SinglePeak { level, peak } => {
                    let p = g.index_of(peak)?;
                    for (i, v) in diag.iter_mut().enumerate() {
                        if *v > *level && i != p {
                            *v = 0.0;
                        }
                    }
                }
                HamiltonianVariant::SinglePunctured { site } => {
                    let p = g.index_of(site)?;
                    diag[p] = 0.0;
                }
                HamiltonianVariant::RestrictedPuncturedPeak { .. } => unreachable!(),
            }
            let mut adj_ptr = Vec::with_capacity(n + 1);
            let mut adj_idx = Vec::with_capacity(2 * g.d() * n);
            adj_ptr.push(0);
            for i in 0..n {
                let mut nb = g.neighbors_idx(i);
                nb.sort_unstable();
                nb.dedup(); // side 3 wraps both steps of an axis onto one site
                adj_idx.extend_from_slice(&nb);
                adj_ptr.push(adj_idx.len());
            }
            Ok(SparseSymOp {
                geometry: g,
                active: (0..n).collect(),
                diag,
                adj_ptr,
                adj_idx,
            })
        }
    }
}

fn ball_adjacency(g: &TorusGeometry, active: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut adj_ptr = Vec::with_capacity(active.len() + 1);
    let mut adj_idx = Vec::new();
    adj_ptr.push(0);
    for &gi in active {
        let mut nb: Vec<usize> = g
            .neighbors_idx(gi)
            .into_iter()
            .filter_map(|n| active.binary_search(&n).ok())
            .collect();
        nb.sort_unstable();
        nb.dedup();
        adj_idx.extend_from_slice(&nb);
        adj_ptr.push(adj_idx.len());
    }
    (adj_ptr, adj_idx)
}

/// Principal eigenpair; the eigenvector is over the active domain.
pub fn principal_eigenpair(op: &SparseSymOp, tol: f64) -> Result<(f64, Vec<f64>)> {
    let sd = top_k_eigenpairs(op, 1, tol)?;
    let local = if op.is_full_domain() {
        sd.eigenvectors[0].clone()
    } else {
        op.active_sites()
            .iter()
            .map(|&g| sd.eigenvectors[0][g])
            .collect()
    };
    Ok((sd.eigenvalues[0], local))
}

/// The k algebraically largest eigenpairs.
pub fn top_k_eigenpairs(op: &SparseSymOp, k: usize, tol: f64) -> Result<SpectralData> {
    let n = op.dim();
    if n == 0 {
        return Err(CoreError::Input("operator has empty domain".into()));
    }
    if k == 0 || k > n {
        return Err(CoreError::Param(format!("k must be in 1..={n}, got {k}")));
    }
    let (mut vals, mut vecs) = if n <= DENSE_THRESHOLD || k * 2 >= n {
        dense_top_k(op, k)
    } else {
        lanczos_top_k(op, k, tol)?
    };

    // Sign convention: positive at the argmax site (first maximal entry).
    let mut argmax_sites = Vec::with_capacity(k);
    for v in vecs.iter_mut() {
        let mut am = 0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > v[am].abs() {
                am = i;
            }
        }
        if v[am] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        argmax_sites.push(op.geometry.site_at(op.active[am]));
    }

    // Explicit residuals against the real operator.
    let mut residuals = Vec::with_capacity(k);
    let mut buf = vec![0.0; n];
    for (lam, v) in vals.iter().zip(&vecs) {
        op.matvec(v, &mut buf);
        let mut r2 = 0.0;
        for i in 0..n {
            let r = buf[i] - lam * v[i];
            r2 += r * r;
        }
        residuals.push(r2.sqrt());
    }
    for (i, (&lam, &res)) in vals.iter().zip(&residuals).enumerate() {
        if res > tol * lam.abs().max(1.0) {
            return Err(CoreError::Eigensolver {
                iterations: i,
                residual: res,
            });
        }
    }

    let degenerate = vals
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() < DEGENERACY_REL_TOL * vals[0].abs().max(1.0));

    let eigenvectors: Vec<Vec<f64>> = vecs.iter().map(|v| op.embed(v)).collect();
    Ok(SpectralData {
        eigenvalues: std::mem::take(&mut vals),
        eigenvectors,
        residuals,
        argmax_sites,
        degenerate,
    })
}

fn dense_top_k(op: &SparseSymOp, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = op.to_dense();
    let eig = m.symmetric_eigen();
    let n = op.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().take(k).map(|&i| eig.eigenvalues[i]).collect();
    let vecs: Vec<Vec<f64>> = order
        .iter()
        .take(k)
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            let norm = col.norm();
            col.iter().map(|&x| x / norm).collect()
        })
        .collect();
    (vals, vecs)
}

/// Restarted Lanczos with full reorthogonalization and locking. Converged
/// Ritz pairs are locked and deflated; each sweep builds a fresh Krylov
/// space orthogonal to the locked set.
fn lanczos_top_k(op: &SparseSymOp, k: usize, tol: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = op.dim();
    let sweep_len = (3 * k).max(80).min(n);
    let max_sweeps = 12;

    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_vecs: Vec<Vec<f64>> = Vec::new();
    let mut start = deterministic_start(n, 0x1a2b_3c4d ^ n as u64);
    let mut last_residual = f64::INFINITY;
    let mut total_iters = 0usize;

    for sweep in 0..max_sweeps {
        orthogonalize_against(&mut start, &locked_vecs);
        if norm2(&start) < 1e-300 {
            start = deterministic_start(n, 0x5151_0000 + sweep as u64);
            orthogonalize_against(&mut start, &locked_vecs);
        }
        let inv = 1.0 / norm2(&start);
        scale(&mut start, inv);

        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        for j in 0..sweep_len {
            total_iters += 1;
            op.matvec(&basis[j], &mut w);
            if j > 0 {
                axpy(&mut w, -betas[j - 1], &basis[j - 1]);
            }
            let alpha = dot(&w, &basis[j]);
            axpy(&mut w, -alpha, &basis[j]);
            alphas.push(alpha);
            // Full reorthogonalization, two passes, against locked + basis.
            for _ in 0..2 {
                orthogonalize_against(&mut w, &locked_vecs);
                orthogonalize_against(&mut w, &basis);
            }
            let beta = norm2(&w);
            if beta < 1e-13 * op.spectral_upper_bound().abs().max(1.0) {
                break; // invariant subspace exhausted
            }
            if j + 1 < sweep_len {
                betas.push(beta);
                let mut next = w.clone();
                scale(&mut next, 1.0 / beta);
                basis.push(next);
            } else {
                betas.push(beta);
            }
        }

        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let eig = t.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());

        let want = k - locked_vals.len();
        let mut buf = vec![0.0; n];
        for &col in order.iter().take(want.max(1)) {
            let s = eig.eigenvectors.column(col);
            let mut x = vec![0.0; n];
            for (j, b) in basis.iter().enumerate().take(m.min(basis.len())) {
                axpy(&mut x, s[j], b);
            }
            orthogonalize_against(&mut x, &locked_vecs);
            let nx = norm2(&x);
            if nx < 1e-10 {
                continue;
            }
            scale(&mut x, 1.0 / nx);
            op.matvec(&x, &mut buf);
            let theta = dot(&buf, &x);
            let mut r2 = 0.0;
            for i in 0..n {
                let r = buf[i] - theta * x[i];
                r2 += r * r;
            }
            let res = r2.sqrt();
            last_residual = res;
            if res <= tol * theta.abs().max(1.0) {
                locked_vals.push(theta);
                locked_vecs.push(x);
                if locked_vals.len() == k {
                    break;
                }
            } else {
                // Unconverged direction seeds the next sweep.
                start = x;
                break;
            }
        }
        if locked_vals.len() >= k {
            break;
        }
        if locked_vals.len() + m >= n {
            // The whole space is exhausted; accept what we have if complete.
            break;
        }
    }

    if locked_vals.len() < k {
        return Err(CoreError::Eigensolver {
            iterations: total_iters,
            residual: last_residual,
        });
    }

    // Locking order is convergence order; sort by eigenvalue.
    let mut order: Vec<usize> = (0..locked_vals.len()).collect();
    order.sort_by(|&a, &b| locked_vals[b].partial_cmp(&locked_vals[a]).unwrap());
    let vals: Vec<f64> = order.iter().take(k).map(|&i| locked_vals[i]).collect();
    let vecs: Vec<Vec<f64>> = order
        .iter()
        .take(k)
        .map(|&i| locked_vecs[i].clone())
        .collect();
    Ok((vals, vecs))
}

fn deterministic_start(n: usize, key: u64) -> Vec<f64> {
    use crate::rng::{splitmix64, u64_to_open_unit};
    let mut v: Vec<f64> = (0..n)
        .map(|i| u64_to_open_unit(splitmix64(key ^ (i as u64).wrapping_mul(0x9e37_79b9))) - 0.5)
        .collect();
    let nn = norm2(&v);
    scale(&mut v, 1.0 / nn);
    v
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn scale(a: &mut [f64], s: f64) {
    for x in a.iter_mut() {
        *x *= s;
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn orthogonalize_against(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let c = dot(v, b);
        axpy(v, -c, b);
    }
}

/// Green's function G(λ; ·, y) of the operator, solving
/// (λ - H) G(λ; ·, y) = 1_{y}. Returned embedded over the full torus.
pub fn greens_function(op: &SparseSymOp, lambda: f64, y: &Site) -> Result<Vec<f64>> {
    let yl = op.local_of_site(y)?;
    let n = op.dim();
    let mut m = op.to_dense();
    m.neg_mut();
    for i in 0..n {
        m[(i, i)] += lambda;
    }
    let mut rhs = DVector::zeros(n);
    rhs[yl] = 1.0;
    let lu = m.clone().lu();
    let sol = lu.solve(&rhs).ok_or(CoreError::SpectrumCollision {
        lambda,
        residual: f64::INFINITY,
    })?;
    let resid = (&m * &sol - &rhs).norm();
    if !(resid <= 1e-10) {
        return Err(CoreError::SpectrumCollision {
            lambda,
            residual: resid,
        });
    }
    let local: Vec<f64> = sol.iter().copied().collect();
    Ok(op.embed(&local))
}

/// n-local principal eigenvalue: top eigenvalue of the punctured-with-peak
/// Hamiltonian on B(z, n) with Dirichlet boundary. For n = 0 this is ξ(z).
pub fn local_principal_eigenvalue(
    field: &PotentialField,
    z: &Site,
    n: u64,
    level: f64,
    tol: f64,
) -> Result<f64> {
    if n == 0 {
        return field.xi(z);
    }
    let op = build_hamiltonian(
        field,
        &HamiltonianVariant::RestrictedPuncturedPeak {
            level,
            center: z.clone(),
            radius: n,
        },
    )?;
    Ok(principal_eigenpair(&op, tol)?.0)
}
