//! Small statistics toolbox: empirical CDFs, Kolmogorov–Smirnov distances,
//! quantiles and a seeded percentile bootstrap.

use crate::error::{CoreError, Result};
use crate::rng::substream;
use rand::Rng;

/// Sorted copy of the data; NaNs are rejected.
fn sorted(data: &[f64]) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(CoreError::Input("empty series".into()));
    }
    if data.iter().any(|x| x.is_nan()) {
        return Err(CoreError::Input("series contains NaN".into()));
    }
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(v)
}

/// Empirical CDF evaluated at `x`: fraction of points ≤ x.
pub fn empirical_cdf(data: &[f64], x: f64) -> Result<f64> {
    let v = sorted(data)?;
    let pos = v.partition_point(|&y| y <= x);
    Ok(pos as f64 / v.len() as f64)
}

/// One-sample KS distance sup |F̂ - F| against a CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> Result<f64> {
    let v = sorted(data)?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((((i + 1) as f64) / n - f).abs());
        d = d.max((f - (i as f64) / n).abs());
    }
    Ok(d)
}

/// Two-sample KS distance sup |F̂₁ - F̂₂|.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    let va = sorted(a)?;
    let vb = sorted(b)?;
    let (na, nb) = (va.len() as f64, vb.len() as f64);
    let mut d = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < va.len() && j < vb.len() {
        let x = va[i].min(vb[j]);
        while i < va.len() && va[i] <= x {
            i += 1;
        }
        while j < vb.len() && vb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Percentile bootstrap 95% CI for the mean: 10³ seeded resamples.
pub fn bootstrap_ci(data: &[f64], seed: u64) -> Result<(f64, f64)> {
    let v = sorted(data)?;
    let n = v.len();
    let resamples = 1000;
    let mut rng = substream(seed, 0xB007);
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut s = 0.0;
        for _ in 0..n {
            s += v[rng.gen_range(0..n)];
        }
        means.push(s / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok((quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975)))
}

/// Type-7 (linear interpolation) quantile of pre-sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

pub fn quantile(data: &[f64], q: f64) -> Result<f64> {
    Ok(quantile_sorted(&sorted(data)?, q))
}

pub fn median(data: &[f64]) -> Result<f64> {
    quantile(data, 0.5)
}

pub fn mean(data: &[f64]) -> Result<f64> {
    if data.is_empty() {
        return Err(CoreError::Input("empty series".into()));
    }
    Ok(data.iter().sum::<f64>() / data.len() as f64)
}

/// Standard error of the mean.
pub fn stderr_of_mean(data: &[f64]) -> Result<f64> {
    let m = mean(data)?;
    let n = data.len() as f64;
    if data.len() < 2 {
        return Ok(0.0);
    }
    let var = data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    Ok((var / n).sqrt())
}

/// Pearson correlation of paired samples.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(CoreError::Input("correlation needs paired samples".into()));
    }
    let ma = mean(a)?;
    let mb = mean(b)?;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    Ok(num / (da.sqrt() * db.sqrt()))
}

/// CDF of the standard Laplace law with density e^{-|x|}/2 (absolute moment 1).
pub fn laplace_cdf(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * x.exp()
    } else {
        1.0 - 0.5 * (-x).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{mix, u64_to_open_unit};

    #[test]
    fn ks_of_sample_against_own_ecdf_is_zero() {
        let data: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let d = ks_two_sample(&data, &data).unwrap();
        assert_eq!(d, 0.0);
    }

    /// Uniform sample against Uniform(0,1): KS below the classic 5% critical
    /// value 1.36/√n on fixed seeds verified once.
    #[test]
    fn ks_uniform_within_critical_value() {
        let n = 1000;
        for seed in [1u64, 2, 3, 4, 5] {
            let data: Vec<f64> = (0..n)
                .map(|i| u64_to_open_unit(mix(seed, i as u64)))
                .collect();
            let d = ks_distance(&data, |x| x.clamp(0.0, 1.0)).unwrap();
            assert!(
                d <= 1.36 / (n as f64).sqrt(),
                "seed {seed}: KS {d} above critical value"
            );
        }
    }

    #[test]
    fn bootstrap_contains_sample_mean() {
        let data: Vec<f64> = (0..200).map(|i| u64_to_open_unit(mix(9, i))).collect();
        let m = mean(&data).unwrap();
        let (lo, hi) = bootstrap_ci(&data, 7).unwrap();
        assert!(lo <= m && m <= hi, "CI ({lo}, {hi}) misses mean {m}");
        // Seeded: identical on repeat.
        assert_eq!(bootstrap_ci(&data, 7).unwrap(), (lo, hi));
    }

    #[test]
    fn empty_series_is_error() {
        assert!(empirical_cdf(&[], 0.0).is_err());
        assert!(ks_distance(&[], |_| 0.0).is_err());
        assert!(bootstrap_ci(&[], 1).is_err());
        assert!(median(&[]).is_err());
    }

    #[test]
    fn quantiles_interpolate() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&data).unwrap(), 2.5);
        assert_eq!(quantile(&data, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&data, 1.0).unwrap(), 4.0);
    }

    #[test]
    fn laplace_cdf_properties() {
        assert_eq!(laplace_cdf(0.0), 0.5);
        assert!((laplace_cdf(1.0) + laplace_cdf(-1.0) - 1.0).abs() < 1e-15);
        assert!(laplace_cdf(20.0) > 1.0 - 1e-8);
    }

    #[test]
    fn two_sample_ks_detects_shift() {
        let a: Vec<f64> = (0..500).map(|i| u64_to_open_unit(mix(1, i))).collect();
        let b: Vec<f64> = (0..500).map(|i| u64_to_open_unit(mix(2, i)) + 0.5).collect();
        let d = ks_two_sample(&a, &b).unwrap();
        assert!(d > 0.4);
    }
}
