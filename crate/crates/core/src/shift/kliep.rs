//! Direct density-ratio estimation for change-point scoring.
//!
//! Fits r(x) = sum_l alpha_l K_sigma(x, c_l) by maximizing the mean
//! log-ratio over the test window subject to alpha >= 0 and a unit mean
//! ratio over the reference window (projected gradient ascent with step
//! halving). Knowing the ratio directly is enough for change scoring; no
//! density estimate is ever formed. The kernel width is picked from a grid
//! by likelihood cross-validation on held-out test folds.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::scalar::Real;

use super::{Result, ShiftError, WindowPair};

/// Floor applied to fitted ratios before taking logs.
const RATIO_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct RatioModel<F: Real> {
    /// Kernel centers drawn from the test window.
    pub centers: Vec<Vec<F>>,
    /// Non-negative mixing weights.
    pub alphas: Vec<F>,
    /// Gaussian kernel width.
    pub sigma: F,
    /// Mean ratio over the reference window after fitting; held at 1.
    pub normalizer: F,
    /// Objective value after each accepted ascent step (diagnostic).
    pub objective_trace: Vec<F>,
}

impl<F: Real> RatioModel<F> {
    /// Density ratio estimate at a point.
    pub fn ratio(&self, x: &[F]) -> F {
        let mut r = F::zero();
        for (center, &alpha) in self.centers.iter().zip(&self.alphas) {
            r = r + alpha * gaussian_kernel(x, center, self.sigma);
        }
        r
    }
}

#[derive(Debug, Clone)]
pub struct KliepOptions {
    pub max_iters: usize,
    pub cv_folds: usize,
    /// Convergence tolerance on the objective improvement.
    pub tol: f64,
}

impl Default for KliepOptions {
    fn default() -> Self {
        Self { max_iters: 500, cv_folds: 5, tol: 1e-9 }
    }
}

fn gaussian_kernel<F: Real>(x: &[F], c: &[F], sigma: F) -> F {
    let mut sq = F::zero();
    for (&xi, &ci) in x.iter().zip(c) {
        let d = xi - ci;
        sq = sq + d * d;
    }
    (-sq / (F::from_f64_lossy(2.0) * sigma * sigma)).exp()
}

/// Fit a ratio model choosing sigma from `sigma_grid` by cross-validated
/// held-out likelihood. Centers are drawn uniformly from the test window.
pub fn kliep_fit<F: Real, R: Rng + ?Sized>(
    pair: &WindowPair,
    n_centers: usize,
    sigma_grid: &[f64],
    rng: &mut R,
) -> Result<RatioModel<F>> {
    kliep_fit_with(pair, n_centers, sigma_grid, &KliepOptions::default(), rng)
}

pub fn kliep_fit_with<F: Real, R: Rng + ?Sized>(
    pair: &WindowPair,
    n_centers: usize,
    sigma_grid: &[f64],
    opts: &KliepOptions,
    rng: &mut R,
) -> Result<RatioModel<F>> {
    if sigma_grid.is_empty() {
        return Err(ShiftError::Domain("sigma_grid must be non-empty".into()));
    }
    if n_centers == 0 {
        return Err(ShiftError::Domain("n_centers must be >= 1".into()));
    }
    if pair.reference.len() < n_centers || pair.test.len() < n_centers {
        return Err(ShiftError::Domain(format!(
            "both windows must hold at least n_centers={n_centers} points"
        )));
    }
    let finite = |rows: &Vec<Vec<f64>>| rows.iter().all(|r| r.iter().all(|v| v.is_finite()));
    if !finite(&pair.reference) || !finite(&pair.test) {
        return Err(ShiftError::Domain("feature vectors must be finite".into()));
    }

    let reference: Vec<Vec<F>> = pair
        .reference
        .iter()
        .map(|r| r.iter().map(|&v| F::from_f64_lossy(v)).collect())
        .collect();
    let test: Vec<Vec<F>> = pair
        .test
        .iter()
        .map(|r| r.iter().map(|&v| F::from_f64_lossy(v)).collect())
        .collect();

    let sigma = if sigma_grid.len() == 1 {
        F::from_f64_lossy(sigma_grid[0])
    } else {
        select_sigma(&reference, &test, n_centers, sigma_grid, opts, rng)?
    };

    let centers = draw_centers(&test, n_centers, rng);
    fit_alphas(&reference, &test, centers, sigma, opts)
}

/// Likelihood cross-validation: fit on all folds but one, score the mean
/// log-ratio on the held-out fold, keep the sigma with the best average.
fn select_sigma<F: Real, R: Rng + ?Sized>(
    reference: &[Vec<F>],
    test: &[Vec<F>],
    n_centers: usize,
    sigma_grid: &[f64],
    opts: &KliepOptions,
    rng: &mut R,
) -> Result<F> {
    let folds = opts.cv_folds.clamp(2, test.len());
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(rng);

    let mut best = (f64::NEG_INFINITY, sigma_grid[0]);
    for &sigma in sigma_grid {
        let sigma_f = F::from_f64_lossy(sigma);
        let mut held_out_sum = 0.0;
        let mut ok = true;
        for fold in 0..folds {
            let hold: Vec<usize> = order
                .iter()
                .copied()
                .skip(fold)
                .step_by(folds)
                .collect();
            let hold_set: std::collections::HashSet<usize> = hold.iter().copied().collect();
            let train: Vec<Vec<F>> = order
                .iter()
                .filter(|i| !hold_set.contains(i))
                .map(|&i| test[i].clone())
                .collect();
            if train.len() < n_centers.min(8) || hold.is_empty() {
                ok = false;
                break;
            }
            let centers = draw_centers(&train, n_centers.min(train.len()), rng);
            match fit_alphas(reference, &train, centers, sigma_f, opts) {
                Ok(model) => {
                    let mut s = 0.0;
                    for &i in &hold {
                        s += model.ratio(&test[i]).to_f64_lossy().max(RATIO_FLOOR).ln();
                    }
                    held_out_sum += s / hold.len() as f64;
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let mean = held_out_sum / folds as f64;
            if mean > best.0 {
                best = (mean, sigma);
            }
        }
    }
    if best.0.is_infinite() {
        return Err(ShiftError::Convergence { last_objective: f64::NEG_INFINITY });
    }
    Ok(F::from_f64_lossy(best.1))
}

fn draw_centers<F: Real, R: Rng + ?Sized>(
    test: &[Vec<F>],
    n_centers: usize,
    rng: &mut R,
) -> Vec<Vec<F>> {
    let mut idx: Vec<usize> = (0..test.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n_centers);
    idx.sort_unstable();
    idx.into_iter().map(|i| test[i].clone()).collect()
}

/// Projected gradient ascent on mean log r over the test window with the
/// reference-mean constraint. The accepted-objective sequence never
/// decreases; steps that would decrease it are halved away.
fn fit_alphas<F: Real>(
    reference: &[Vec<F>],
    test: &[Vec<F>],
    centers: Vec<Vec<F>>,
    sigma: F,
    opts: &KliepOptions,
) -> Result<RatioModel<F>> {
    let b_len = centers.len();
    let n_test = test.len();

    // Kernel matrix rows: test x centers.
    let a: Vec<Vec<F>> = test
        .iter()
        .map(|x| centers.iter().map(|c| gaussian_kernel(x, c, sigma)).collect())
        .collect();
    // Constraint vector: mean kernel activation over the reference.
    let n_ref = F::from_usize_lossy(reference.len());
    let mut b = vec![F::zero(); b_len];
    for x in reference {
        for (l, c) in centers.iter().enumerate() {
            b[l] = b[l] + gaussian_kernel(x, c, sigma);
        }
    }
    for v in b.iter_mut() {
        *v = *v / n_ref;
    }

    let dot = |u: &[F], v: &[F]| -> F {
        u.iter().zip(v).fold(F::zero(), |acc, (&x, &y)| acc + x * y)
    };
    let bb = dot(&b, &b);
    if bb <= F::zero() {
        return Err(ShiftError::Convergence { last_objective: f64::NEG_INFINITY });
    }

    let project = |alpha: &mut Vec<F>| -> bool {
        // Equality correction, clamp to the positive orthant, rescale.
        let shift = (F::one() - dot(&b, alpha)) / bb;
        for (al, &bl) in alpha.iter_mut().zip(&b) {
            *al = *al + shift * bl;
            if *al < F::zero() {
                *al = F::zero();
            }
        }
        let scale = dot(&b, alpha);
        if scale <= F::zero() {
            return false;
        }
        for al in alpha.iter_mut() {
            *al = *al / scale;
        }
        true
    };

    let objective = |alpha: &[F]| -> F {
        let mut sum = F::zero();
        for row in &a {
            let r = dot(row, alpha).to_f64_lossy().max(RATIO_FLOOR);
            sum = sum + F::from_f64_lossy(r.ln());
        }
        sum / F::from_usize_lossy(n_test)
    };

    let mut alpha = vec![F::one(); b_len];
    if !project(&mut alpha) {
        return Err(ShiftError::Convergence { last_objective: f64::NEG_INFINITY });
    }
    let mut best = objective(&alpha);
    let mut trace = vec![best];
    let mut step = F::from_f64_lossy(1.0);
    let min_step = F::from_f64_lossy(1e-12);
    let mut converged = false;

    for _ in 0..opts.max_iters {
        // Gradient of mean log(A alpha): A^T (1 / (A alpha)) / n.
        let mut grad = vec![F::zero(); b_len];
        for row in &a {
            let r = dot(row, &alpha);
            let inv = if r > F::zero() { F::one() / r } else { F::zero() };
            for (g, &al) in grad.iter_mut().zip(row) {
                *g = *g + al * inv;
            }
        }
        for g in grad.iter_mut() {
            *g = *g / F::from_usize_lossy(n_test);
        }

        let mut accepted = false;
        while step >= min_step {
            let mut cand: Vec<F> = alpha
                .iter()
                .zip(&grad)
                .map(|(&al, &g)| al + step * g)
                .collect();
            if project(&mut cand) {
                let obj = objective(&cand);
                if obj >= best {
                    let gain = (obj - best).to_f64_lossy();
                    alpha = cand;
                    best = obj;
                    trace.push(best);
                    accepted = true;
                    if gain < opts.tol {
                        converged = true;
                    }
                    // Re-open the step after a success so progress does not
                    // crawl once an early plateau forced halving.
                    step = (step * F::from_f64_lossy(2.0)).min(F::from_f64_lossy(1e6));
                    break;
                }
            }
            step = step / F::from_f64_lossy(2.0);
        }
        if !accepted {
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        // Ran out of iterations while still making material progress.
        return Err(ShiftError::Convergence { last_objective: best.to_f64_lossy() });
    }

    let normalizer = dot(&b, &alpha);
    Ok(RatioModel {
        centers,
        alphas: alpha,
        sigma,
        normalizer,
        objective_trace: trace,
    })
}

/// Mean log-ratio of the test window under a fitted model. Larger values
/// mean stronger evidence that the test distribution left the reference.
pub fn change_score<F: Real>(model: &RatioModel<F>, test: &[Vec<F>]) -> Result<f64> {
    if test.is_empty() {
        return Err(ShiftError::Domain("change_score requires a non-empty test window".into()));
    }
    let mut sum = 0.0;
    for x in test {
        sum += model.ratio(x).to_f64_lossy().max(RATIO_FLOOR).ln();
    }
    Ok(sum / test.len() as f64)
}

/// Median pairwise distance heuristic for centering a sigma grid.
pub fn median_distance_heuristic(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len().min(200);
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dists.push(d);
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = dists[dists.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}
