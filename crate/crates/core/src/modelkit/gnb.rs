//! Gaussian naive Bayes with per-class diagonal covariance.

use crate::joiner::JoinedExample;

use super::{Hyperparams, ModelError, ModelParameters, Result};

pub fn fit(train: &[JoinedExample], hp: &Hyperparams) -> Result<ModelParameters> {
    let smoothing_ratio = hp.get_or("var_smoothing", 1e-9);

    let mut classes: Vec<u32> = Vec::new();
    for row in train {
        let c = row
            .label
            .as_class()
            .ok_or_else(|| ModelError::Data("naive bayes needs class labels".into()))?;
        if !classes.contains(&c) {
            classes.push(c);
        }
    }
    classes.sort_unstable();
    if classes.is_empty() {
        return Err(ModelError::Data("no classes".into()));
    }
    let dim = train[0].features.len();
    let k = classes.len();

    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0f64; dim]; k];
    let mut sq_sums = vec![vec![0.0f64; dim]; k];
    for row in train {
        let c = classes
            .iter()
            .position(|&cl| cl == row.label.as_class().unwrap())
            .unwrap();
        counts[c] += 1;
        for (j, &x) in row.features.iter().enumerate() {
            sums[c][j] += x;
            sq_sums[c][j] += x * x;
        }
    }

    // Smoothing floor proportional to the largest feature variance.
    let n = train.len() as f64;
    let mut global_max_var = 0.0f64;
    for j in 0..dim {
        let total: f64 = sums.iter().map(|s| s[j]).sum();
        let total_sq: f64 = sq_sums.iter().map(|s| s[j]).sum();
        let mean = total / n;
        global_max_var = global_max_var.max(total_sq / n - mean * mean);
    }
    let floor = (smoothing_ratio * global_max_var).max(1e-12);

    let mut priors = Vec::with_capacity(k);
    let mut means = vec![vec![0.0f64; dim]; k];
    let mut variances = vec![vec![0.0f64; dim]; k];
    for c in 0..k {
        if counts[c] == 0 {
            return Err(ModelError::Data("empty class".into()));
        }
        let nc = counts[c] as f64;
        priors.push(nc / n);
        for j in 0..dim {
            let mean = sums[c][j] / nc;
            means[c][j] = mean;
            variances[c][j] = (sq_sums[c][j] / nc - mean * mean).max(floor);
        }
    }

    Ok(ModelParameters::GaussianNb { classes, priors, means, variances })
}

pub fn probabilities(
    classes: &[u32],
    priors: &[f64],
    means: &[Vec<f64>],
    variances: &[Vec<f64>],
    features: &[f64],
) -> Vec<(u32, f64)> {
    let mut log_joint = Vec::with_capacity(classes.len());
    for c in 0..classes.len() {
        let mut lj = priors[c].max(1e-300).ln();
        for (j, &x) in features.iter().enumerate() {
            let var = variances[c][j];
            let d = x - means[c][j];
            lj -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var);
        }
        log_joint.push(lj);
    }
    let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut probs: Vec<f64> = log_joint
        .into_iter()
        .map(|lj| {
            let p = (lj - max).exp();
            sum += p;
            p
        })
        .collect();
    for p in probs.iter_mut() {
        *p /= sum;
    }
    classes.iter().copied().zip(probs).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joiner::Label;

    fn row(x: f64, class: u32) -> JoinedExample {
        JoinedExample {
            key: String::new(),
            features: vec![x],
            label: Label::Class(class),
            weak: false,
            primary_ts: 0,
            feedback_ts: 0,
            join_latency: 0,
        }
    }

    #[test]
    fn recovers_class_statistics() {
        let mut data = Vec::new();
        for i in 0..200 {
            let jitter = ((i % 7) as f64 - 3.0) * 0.3;
            data.push(row(-2.0 + jitter, 0));
            data.push(row(2.0 + jitter, 1));
        }
        let params = fit(&data, &Hyperparams::default()).unwrap();
        if let ModelParameters::GaussianNb { means, priors, .. } = &params {
            assert!((means[0][0] + 2.0).abs() < 0.1);
            assert!((means[1][0] - 2.0).abs() < 0.1);
            assert!((priors[0] - 0.5).abs() < 1e-12);
        } else {
            panic!("wrong family");
        }
        let probs = super::super::class_probabilities(&params, &[-2.0]).unwrap();
        assert!(probs[0].1 > 0.95);
    }

    #[test]
    fn zero_variance_features_are_floored() {
        let data = vec![row(1.0, 0), row(1.0, 0), row(2.0, 1), row(2.0, 1)];
        let params = fit(&data, &Hyperparams::default()).unwrap();
        let probs = super::super::class_probabilities(&params, &[1.0]).unwrap();
        assert!(probs[0].1 > 0.99, "exact match should dominate");
    }
}
