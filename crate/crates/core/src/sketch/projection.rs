//! Sparse random projections for dimensionality reduction.
//!
//! The implicit projection matrix has entries {+1, 0, -1} with probabilities
//! {1/6, 2/3, 1/6}, scaled by sqrt(3/d). It is regenerated column-by-column
//! from the seed on every call and never materialized, so the same
//! `(seed, input_dim, output_dim)` triple always projects identically.

use crate::hash::{splitmix64, xxh64};
use crate::scalar::Real;

use super::{Result, SketchError};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomProjection<F: Real> {
    input_dim: usize,
    output_dim: usize,
    seed: u64,
    scale: F,
}

impl<F: Real> RandomProjection<F> {
    pub fn new(input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if output_dim == 0 || output_dim >= input_dim {
            return Err(SketchError::Domain(
                "output_dim must satisfy 0 < d < input_dim".into(),
            ));
        }
        Ok(Self {
            input_dim,
            output_dim,
            seed,
            scale: F::from_f64_lossy((3.0 / output_dim as f64).sqrt()),
        })
    }

    /// Project a length-D vector to length d. Linear and deterministic.
    pub fn project(&self, vector: &[F]) -> Result<Vec<F>> {
        if vector.len() != self.input_dim {
            return Err(SketchError::Domain(format!(
                "expected dimension {}, got {}",
                self.input_dim,
                vector.len()
            )));
        }
        let mut out = vec![F::zero(); self.output_dim];
        for (j, &x) in vector.iter().enumerate() {
            if x == F::zero() {
                continue;
            }
            // Column j's signs come from an independent SplitMix64 stream.
            let mut state = xxh64(&(j as u64).to_le_bytes(), self.seed);
            for o in out.iter_mut() {
                match splitmix64(&mut state) % 6 {
                    0 => *o = *o + x,
                    1 => *o = *o - x,
                    _ => {}
                }
            }
        }
        for o in out.iter_mut() {
            *o = *o * self.scale;
        }
        Ok(out)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn zero_maps_to_zero() {
        let p: RandomProjection<f64> = RandomProjection::new(50, 10, 1).unwrap();
        let out = p.project(&vec![0.0; 50]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(RandomProjection::<f64>::new(10, 10, 0).is_err());
        assert!(RandomProjection::<f64>::new(10, 0, 0).is_err());
        let p = RandomProjection::<f64>::new(10, 3, 0).unwrap();
        assert!(p.project(&[1.0; 9]).is_err());
    }

    #[test]
    fn projection_is_linear() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let p: RandomProjection<f64> = RandomProjection::new(64, 16, 3).unwrap();
        let x: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..64).map(|_| rng.random::<f64>() - 0.5).collect();
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let px = p.project(&x).unwrap();
        let py = p.project(&y).unwrap();
        let psum = p.project(&sum).unwrap();
        for i in 0..16 {
            assert!((psum[i] - (px[i] + py[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p1: RandomProjection<f64> = RandomProjection::new(128, 8, 42).unwrap();
        let p2: RandomProjection<f64> = RandomProjection::new(128, 8, 42).unwrap();
        let x: Vec<f64> = (0..128).map(|i| (i as f64).sin()).collect();
        let a = p1.project(&x).unwrap();
        let b = p2.project(&x).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let p3: RandomProjection<f64> = RandomProjection::new(128, 8, 43).unwrap();
        assert_ne!(a, p3.project(&x).unwrap());
    }

    #[test]
    fn distances_are_roughly_preserved() {
        // Johnson-Lindenstrauss behavior: squared-distance ratios center on 1.
        let mut rng = ChaCha20Rng::seed_from_u64(100);
        let p: RandomProjection<f64> = RandomProjection::new(1000, 100, 5).unwrap();
        let mut ratio_sum = 0.0;
        let pairs = 500;
        for _ in 0..pairs {
            let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..1000).map(|_| rng.random::<f64>() - 0.5).collect();
            let px = p.project(&x).unwrap();
            let py = p.project(&y).unwrap();
            let d_orig: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            let d_proj: f64 = px.iter().zip(&py).map(|(a, b)| (a - b) * (a - b)).sum();
            ratio_sum += d_proj / d_orig;
        }
        let mean_ratio = ratio_sum / pairs as f64;
        assert!(
            (mean_ratio - 1.0).abs() < 0.10,
            "mean squared-distance ratio {mean_ratio}"
        );
    }
}
