//! SGD softmax classifier with logistic loss and L2 regularization.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::joiner::JoinedExample;

use super::{Hyperparams, ModelError, ModelParameters, Result};

pub fn fit(train: &[JoinedExample], hp: &Hyperparams, seed: u64) -> Result<ModelParameters> {
    let lr = hp.get_or("learning_rate", 0.1);
    let l2 = hp.get_or("l2", 1e-4);
    let epochs = hp.get_or("epochs", 5.0).max(1.0) as usize;

    let mut classes: Vec<u32> = Vec::new();
    for row in train {
        let c = row
            .label
            .as_class()
            .ok_or_else(|| ModelError::Data("sgd classifier needs class labels".into()))?;
        if !classes.contains(&c) {
            classes.push(c);
        }
    }
    classes.sort_unstable();
    if classes.len() < 2 {
        return Err(ModelError::Data("need at least two classes".into()));
    }
    let k = classes.len();
    let dim = train[0].features.len();

    let mut weights = vec![vec![0.0f64; dim]; k];
    let mut bias = vec![0.0f64; k];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut probs = vec![0.0f64; k];

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        // 1/t learning-rate decay per epoch.
        let rate = lr / (1.0 + epoch as f64);
        for &i in &order {
            let row = &train[i];
            let truth = classes
                .iter()
                .position(|&c| c == row.label.as_class().unwrap())
                .unwrap();
            softmax_into(&classes, &weights, &bias, &row.features, &mut probs);
            for c in 0..k {
                let err = probs[c] - f64::from(u8::from(c == truth));
                let w = &mut weights[c];
                for (wj, &xj) in w.iter_mut().zip(&row.features) {
                    *wj -= rate * (err * xj + l2 * *wj);
                }
                bias[c] -= rate * err;
            }
        }
    }

    Ok(ModelParameters::SgdLinear { classes, weights, bias })
}

pub fn probabilities(
    classes: &[u32],
    weights: &[Vec<f64>],
    bias: &[f64],
    features: &[f64],
) -> Vec<(u32, f64)> {
    let mut probs = vec![0.0f64; classes.len()];
    softmax_into(classes, weights, bias, features, &mut probs);
    classes.iter().copied().zip(probs).collect()
}

fn softmax_into(
    classes: &[u32],
    weights: &[Vec<f64>],
    bias: &[f64],
    features: &[f64],
    out: &mut [f64],
) {
    debug_assert_eq!(classes.len(), out.len());
    for (c, slot) in out.iter_mut().enumerate() {
        let logit: f64 = weights[c]
            .iter()
            .zip(features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + bias[c];
        *slot = logit;
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in out.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joiner::Label;

    fn row(x: f64, y: f64, class: u32) -> JoinedExample {
        JoinedExample {
            key: String::new(),
            features: vec![x, y],
            label: Label::Class(class),
            weak: false,
            primary_ts: 0,
            feedback_ts: 0,
            join_latency: 0,
        }
    }

    #[test]
    fn learns_a_separating_line() {
        let mut data = Vec::new();
        for i in 0..100 {
            let off = (i % 10) as f64 * 0.05;
            data.push(row(-2.0 - off, off, 0));
            data.push(row(2.0 + off, -off, 1));
        }
        let params = fit(&data, &Hyperparams::default(), 3).unwrap();
        // Deep inside each blob the model must be confident and correct.
        let probs = super::super::class_probabilities(&params, &[-2.5, 0.1]).unwrap();
        assert!(probs[0].1 > 0.9);
        let probs = super::super::class_probabilities(&params, &[2.5, -0.1]).unwrap();
        assert!(probs[1].1 > 0.9);
    }

    #[test]
    fn rejects_single_class_and_real_labels() {
        let data = vec![row(0.0, 0.0, 1), row(1.0, 0.0, 1)];
        assert!(matches!(fit(&data, &Hyperparams::default(), 0), Err(ModelError::Data(_))));
        let mut data = vec![row(0.0, 0.0, 0), row(1.0, 0.0, 1)];
        data[0].label = Label::Real(0.5);
        assert!(matches!(fit(&data, &Hyperparams::default(), 0), Err(ModelError::Data(_))));
    }
}
