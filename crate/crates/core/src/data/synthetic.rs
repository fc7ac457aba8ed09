//! Two-class 2-D generators. All three place their noiseless points inside
//! the unit square, so a single ε scale is meaningful across kinds. Noise
//! is isotropic Gaussian in output units and is not clipped.
//!
//! * `two_moons`: upper arc `(cos t, sin t)` and lower arc
//!   `(1 - cos t, 0.5 - sin t)`, `t ∈ [0, π]`, mapped by
//!   `u = (x + 1) / 3`, `v = (y + 0.5) / 1.5` onto `[0, 1]²`.
//! * `gaussian_blobs`: centers `(0.25, 0.25)` and `(0.75, 0.75)`.
//! * `concentric_circles`: radii 0.15 (class 0) and 0.4 (class 1) around
//!   `(0.5, 0.5)`.
//!
//! Arc and angle parameters are drawn uniformly. Class 0 receives
//! `ceil(n / 2)` points and class 1 the rest; class 0 rows come first.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticKind {
    TwoMoons,
    GaussianBlobs,
    ConcentricCircles,
}

impl SyntheticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::TwoMoons => "two_moons",
            SyntheticKind::GaussianBlobs => "gaussian_blobs",
            SyntheticKind::ConcentricCircles => "concentric_circles",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(SyntheticKind::TwoMoons),
            "gaussian_blobs" => Ok(SyntheticKind::GaussianBlobs),
            "concentric_circles" => Ok(SyntheticKind::ConcentricCircles),
            other => Err(Error::invalid(format!(
                "unknown synthetic kind {other:?} (two_moons, gaussian_blobs, concentric_circles)"
            ))),
        }
    }
}

/// Noiseless two-moons point for class `class` at arc parameter `t`.
pub fn moon_point(class: usize, t: f64) -> [f64; 2] {
    let (x, y) = if class == 0 {
        (t.cos(), t.sin())
    } else {
        (1.0 - t.cos(), 0.5 - t.sin())
    };
    [(x + 1.0) / 3.0, (y + 0.5) / 1.5]
}

pub fn gen_synthetic(kind: SyntheticKind, n_points: usize, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if n_points < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {n_points}")));
    }
    if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let per_class = [n_points.div_ceil(2), n_points / 2];
    let mut data = Vec::with_capacity(n_points * 2);
    let mut labels = Vec::with_capacity(n_points);
    for (class, &count) in per_class.iter().enumerate() {
        for _ in 0..count {
            let p = match kind {
                SyntheticKind::TwoMoons => {
                    let t = rng.gen_range(0.0..=PI);
                    moon_point(class, t)
                }
                SyntheticKind::GaussianBlobs => {
                    let c = if class == 0 { 0.25 } else { 0.75 };
                    [c, c]
                }
                SyntheticKind::ConcentricCircles => {
                    let r = if class == 0 { 0.15 } else { 0.4 };
                    let t = rng.gen_range(0.0..2.0 * PI);
                    [0.5 + r * t.cos(), 0.5 + r * t.sin()]
                }
            };
            data.push(p[0] + noise.sample(&mut rng));
            data.push(p[1] + noise.sample(&mut rng));
            labels.push(class);
        }
    }
    Dataset::labeled(Tensor::matrix(n_points, 2, data)?, labels, 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_moons_lie_on_loci() {
        let ds = gen_synthetic(SyntheticKind::TwoMoons, 101, 0.0, 3).unwrap();
        let labels = ds.labels.as_ref().unwrap();
        for i in 0..ds.len() {
            let [u, v] = [ds.inputs.row(i)[0], ds.inputs.row(i)[1]];
            let (x, y) = (3.0 * u - 1.0, 1.5 * v - 0.5);
            let (cx, cy) = if labels[i] == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if labels[i] == 0 {
                assert!(y >= -1e-12);
            } else {
                assert!(y <= 0.5 + 1e-12);
            }
            assert!((0.0..=1.0).contains(&u) && (-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn same_seed_same_data() {
        for kind in [SyntheticKind::TwoMoons, SyntheticKind::GaussianBlobs, SyntheticKind::ConcentricCircles] {
            let a = gen_synthetic(kind, 50, 0.05, 9).unwrap();
            let b = gen_synthetic(kind, 50, 0.05, 9).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn balanced_classes() {
        let ds = gen_synthetic(SyntheticKind::GaussianBlobs, 11, 0.02, 0).unwrap();
        let l = ds.labels.unwrap();
        assert_eq!(l.iter().filter(|&&c| c == 0).count(), 6);
        assert_eq!(l.iter().filter(|&&c| c == 1).count(), 5);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(gen_synthetic(SyntheticKind::TwoMoons, 1, 0.0, 0).is_err());
        assert!(gen_synthetic(SyntheticKind::TwoMoons, 10, -1.0, 0).is_err());
        assert!("spirals".parse::<SyntheticKind>().is_err());
    }
}
