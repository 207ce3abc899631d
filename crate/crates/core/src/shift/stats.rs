//! Two-sample statistics and histogram divergences.

use crate::scalar::Real;

use super::histogram::Histogram;
use super::{Result, ShiftError};

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
///
/// `D` is the maximum ECDF gap; the p-value uses the Kolmogorov tail series
/// with the standard small-sample correction of the effective sample size.
pub fn ks_statistic<F: Real>(a: &[F], b: &[F]) -> Result<(F, F)> {
    if a.is_empty() || b.is_empty() {
        return Err(ShiftError::Domain("ks_statistic requires non-empty samples".into()));
    }
    let mut sa: Vec<F> = a.iter().copied().filter(|v| v.is_finite()).collect();
    let mut sb: Vec<F> = b.iter().copied().filter(|v| v.is_finite()).collect();
    if sa.is_empty() || sb.is_empty() {
        return Err(ShiftError::Domain("ks_statistic requires finite values".into()));
    }
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let (na, nb) = (sa.len(), sb.len());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d = F::zero();
    while i < na && j < nb {
        let x = if sa[i] <= sb[j] { sa[i] } else { sb[j] };
        while i < na && sa[i] <= x {
            i += 1;
        }
        while j < nb && sb[j] <= x {
            j += 1;
        }
        let fa = F::from_usize_lossy(i) / F::from_usize_lossy(na);
        let fb = F::from_usize_lossy(j) / F::from_usize_lossy(nb);
        let gap = (fa - fb).abs();
        if gap > d {
            d = gap;
        }
    }

    let en = ((na as f64) * (nb as f64) / ((na + nb) as f64)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d.to_f64_lossy();
    Ok((d, F::from_f64_lossy(kolmogorov_tail(lambda))))
}

/// Q_KS(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2), clamped to [0, 1].
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let l2 = -2.0 * lambda * lambda;
    for j in 1..=100 {
        let term = (l2 * (j as f64) * (j as f64)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Smoothed bin proportions: `(count + alpha) / (total + alpha * bins)`.
fn smoothed<F: Real>(h: &Histogram<F>, alpha: f64) -> Vec<f64> {
    let total = h.total() as f64;
    let bins = h.bins() as f64;
    h.counts()
        .iter()
        .map(|&c| (c as f64 + alpha) / (total + alpha * bins))
        .collect()
}

fn check_comparable<F: Real>(a: &Histogram<F>, b: &Histogram<F>) -> Result<()> {
    if !a.same_edges(b) {
        return Err(ShiftError::IncompatibleHistogram);
    }
    if a.total() == 0 || b.total() == 0 {
        return Err(ShiftError::Domain("histograms must have counts".into()));
    }
    Ok(())
}

/// Population stability index with 0.5-count additive smoothing:
/// `sum_i (q_i - p_i) ln(q_i / p_i)`. Symmetric, zero iff the smoothed
/// proportions agree.
pub fn psi<F: Real>(reference: &Histogram<F>, test: &Histogram<F>) -> Result<f64> {
    check_comparable(reference, test)?;
    let p = smoothed(reference, 0.5);
    let q = smoothed(test, 0.5);
    Ok(p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| (qi - pi) * (qi / pi).ln())
        .sum())
}

/// KL divergence `sum p ln(p/q)` over proportions smoothed by `smoothing`
/// added counts per bin.
pub fn kl_divergence<F: Real>(
    p_hist: &Histogram<F>,
    q_hist: &Histogram<F>,
    smoothing: f64,
) -> Result<f64> {
    if smoothing <= 0.0 {
        return Err(ShiftError::Domain("smoothing must be positive".into()));
    }
    check_comparable(p_hist, q_hist)?;
    let p = smoothed(p_hist, smoothing);
    let q = smoothed(q_hist, smoothing);
    Ok(p
        .iter()
        .zip(&q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0))
}

/// Histogram intersection `sum_i min(p_i, q_i)` over normalized proportions:
/// 1 for identical histograms, 0 for disjoint support.
pub fn hist_intersection<F: Real>(a: &Histogram<F>, b: &Histogram<F>) -> Result<f64> {
    check_comparable(a, b)?;
    let ta = a.total() as f64;
    let tb = b.total() as f64;
    Ok(a.counts()
        .iter()
        .zip(b.counts())
        .map(|(&ca, &cb)| (ca as f64 / ta).min(cb as f64 / tb))
        .sum())
}
