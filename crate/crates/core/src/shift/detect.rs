//! The detector bank: per-dimension statistics aggregated into one report.
//!
//! Runs KS per dimension with Bonferroni correction, histogram divergences
//! for attribution evidence, and (optionally) a KLIEP change score checked
//! against a permutation null. Firing is driven by the corrected KS
//! p-value plus a configurable minimum-magnitude gate.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::hash::stream_seed;

use super::histogram::Histogram;
use super::kliep::{change_score, kliep_fit_with, median_distance_heuristic, KliepOptions};
use super::stats::{hist_intersection, kl_divergence, ks_statistic, psi};
use super::{
    FeatureAttribution, Result, ShiftError, ShiftReport, ShiftType, Uncertainty, WindowPair,
};

/// Which side of the pipeline the windows describe; label-side significance
/// is classified as prior-probability shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowSide {
    Features,
    Labels,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DetectorConfig {
    /// Family-wise significance level after Bonferroni correction.
    pub significance: f64,
    /// Minimum rows required on each side before detectors run.
    pub min_reference: usize,
    pub min_test: usize,
    /// Reports below this max-statistic are suppressed (emission gate).
    pub min_magnitude: f64,
    pub side: WindowSide,
    /// Density-ratio change scoring (more expensive; off by default).
    pub enable_kliep: bool,
    pub kliep_centers: usize,
    /// Empty grid means a median-distance-heuristic grid.
    pub kliep_sigma_grid: Vec<f64>,
    /// Permutation draws for the change-score null distribution.
    pub kliep_null_draws: usize,
    /// Seed for everything stochastic inside the detector.
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            significance: 0.05,
            min_reference: 50,
            min_test: 50,
            min_magnitude: 0.0,
            side: WindowSide::Features,
            enable_kliep: false,
            kliep_centers: 100,
            kliep_sigma_grid: Vec::new(),
            kliep_null_draws: 40,
            seed: 0,
        }
    }
}

/// Everything the bank computed, whether or not a report fired. The monitor
/// uses the diagnostics for its sustained-change-point and re-freeze logic.
#[derive(Debug, Clone)]
pub struct Detection {
    pub report: Option<ShiftReport>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Per-dimension KS statistic and raw p-value.
    pub ks: Vec<(f64, f64)>,
    /// Bonferroni-corrected minimum p-value.
    pub min_adjusted_p: f64,
    /// Per-dimension PSI against the frozen reference binning.
    pub psi: Vec<f64>,
    /// Per-dimension histogram intersection.
    pub intersection: Vec<f64>,
    /// Per-dimension smoothed KL divergence.
    pub kl: Vec<f64>,
    /// KLIEP mean log-ratio of the test window, when enabled.
    pub change_score: Option<f64>,
    /// 99th percentile of the permutation-null change scores.
    pub change_score_null_q99: Option<f64>,
    /// Change score exceeded the null and the bank considers it a spike.
    pub kliep_spike: bool,
}

/// Run the configured bank over a window pair. `Ok(None)` means the windows
/// were examined and nothing fired; `Err(NotReady)` means they are still too
/// small to examine.
pub fn detect_shift(pair: &WindowPair, config: &DetectorConfig) -> Result<Option<ShiftReport>> {
    Ok(run_detectors(pair, config)?.report)
}

pub fn run_detectors(pair: &WindowPair, config: &DetectorConfig) -> Result<Detection> {
    if pair.reference.len() < config.min_reference || pair.test.len() < config.min_test {
        return Err(ShiftError::NotReady(format!(
            "windows {}/{} below minimum {}/{}",
            pair.reference.len(),
            pair.test.len(),
            config.min_reference,
            config.min_test
        )));
    }
    let dims = pair.feature_dims();
    if dims == 0 {
        return Err(ShiftError::NotReady("no feature dimensions".into()));
    }

    let mut diagnostics = Diagnostics::default();
    let mut attributions = Vec::with_capacity(dims);
    for dim in 0..dims {
        let (r, t) = pair.column(dim);
        let (d, p) = ks_statistic(&r, &t)?;
        diagnostics.ks.push((d, p));
        attributions.push(FeatureAttribution { dimension: dim, statistic: d, p_value: Some(p) });

        // Histogram divergences on reference-frozen binning: attribution
        // evidence, not firing criteria.
        match Histogram::freedman_diaconis(&r) {
            Ok(template) => {
                let href = Histogram::from_sample(template.edges().to_vec(), &r)?;
                let mut htest = template.empty_like();
                for &v in &t {
                    htest.add(v);
                }
                diagnostics.psi.push(psi(&href, &htest).unwrap_or(f64::NAN));
                diagnostics
                    .intersection
                    .push(hist_intersection(&href, &htest).unwrap_or(f64::NAN));
                diagnostics
                    .kl
                    .push(kl_divergence(&href, &htest, 0.5).unwrap_or(f64::NAN));
            }
            Err(_) => {
                diagnostics.psi.push(f64::NAN);
                diagnostics.intersection.push(f64::NAN);
                diagnostics.kl.push(f64::NAN);
            }
        }
    }

    let min_p_raw = diagnostics
        .ks
        .iter()
        .map(|&(_, p)| p)
        .fold(f64::INFINITY, f64::min);
    let adjusted = (min_p_raw * dims as f64).min(1.0);
    diagnostics.min_adjusted_p = adjusted;
    let max_stat = diagnostics
        .ks
        .iter()
        .map(|&(d, _)| d)
        .fold(0.0f64, f64::max);

    if config.enable_kliep
        && pair.reference.len() >= config.kliep_centers
        && pair.test.len() >= config.kliep_centers
    {
        run_kliep(pair, config, &mut diagnostics);
    }

    let fired = adjusted < config.significance && max_stat >= config.min_magnitude;
    let report = if fired {
        attributions.sort_by(|a, b| {
            b.statistic
                .partial_cmp(&a.statistic)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.dimension.cmp(&b.dimension))
        });
        let shift_type = match config.side {
            WindowSide::Labels => ShiftType::PriorProbability,
            WindowSide::Features => ShiftType::Covariate,
        };
        let mut detector = String::from("ks_bonferroni");
        if diagnostics.kliep_spike {
            detector.push_str("+kliep");
        }
        Some(ShiftReport {
            shift_type,
            magnitude: max_stat,
            uncertainty: Uncertainty::PValue(adjusted).into(),
            features: attributions,
            detector,
            ref_window: pair.ref_id,
            test_window: pair.test_id,
        })
    } else {
        None
    };

    Ok(Detection { report, diagnostics })
}

fn run_kliep(pair: &WindowPair, config: &DetectorConfig, diagnostics: &mut Diagnostics) {
    let mut rng = ChaCha20Rng::seed_from_u64(stream_seed(
        config.seed ^ pair.ref_id.rotate_left(17) ^ pair.test_id,
        "detect.kliep",
    ));
    let opts = KliepOptions { max_iters: 300, cv_folds: 2, tol: 1e-8 };
    let centers = config.kliep_centers.min(pair.test.len());
    let grid: Vec<f64> = if config.kliep_sigma_grid.is_empty() {
        let med = median_distance_heuristic(&pair.reference);
        vec![0.5 * med, med, 2.0 * med]
    } else {
        config.kliep_sigma_grid.clone()
    };

    let score = match kliep_fit_with::<f64, _>(pair, centers, &grid, &opts, &mut rng) {
        Ok(model) => match change_score(&model, &pair.test) {
            Ok(s) => s,
            Err(_) => return,
        },
        Err(_) => return,
    };
    diagnostics.change_score = Some(score);

    // Permutation null: pool the windows, reshuffle into same-sized halves,
    // refit, rescore. A fixed sigma keeps the null affordable.
    let med = median_distance_heuristic(&pair.reference);
    let mut pooled: Vec<Vec<f64>> = pair
        .reference
        .iter()
        .chain(pair.test.iter())
        .cloned()
        .collect();
    let mut null_scores = Vec::with_capacity(config.kliep_null_draws);
    for _ in 0..config.kliep_null_draws {
        use rand::seq::SliceRandom;
        pooled.shuffle(&mut rng);
        let (r, t) = pooled.split_at(pair.reference.len());
        let null_pair = WindowPair::new(r.to_vec(), t.to_vec());
        if let Ok(model) = kliep_fit_with::<f64, _>(&null_pair, centers, &[med], &opts, &mut rng) {
            if let Ok(s) = change_score(&model, &null_pair.test) {
                null_scores.push(s);
            }
        }
    }
    if null_scores.len() >= 10 {
        null_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let q99_idx = ((null_scores.len() as f64) * 0.99) as usize;
        let q99 = null_scores[q99_idx.min(null_scores.len() - 1)];
        diagnostics.change_score_null_q99 = Some(q99);
        diagnostics.kliep_spike = score > q99;
    }
}
