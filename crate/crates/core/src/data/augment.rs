//! Random affine augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct AffineConfig {
    /// Maximum absolute rotation in radians.
    pub rotation: f64,
    /// Isotropic scale range.
    pub scale: (f64, f64),
    /// Maximum absolute shear of the first axis along the second.
    pub shear: f64,
    /// Maximum absolute translation as a fraction of the grid extent.
    pub translation: f64,
}

impl AffineConfig {
    pub fn identity() -> Self {
        AffineConfig {
            rotation: 0.0,
            scale: (1.0, 1.0),
            shear: 0.0,
            translation: 0.0,
        }
    }

    /// Rotation ±15°, scale 0.85–1.15, translation ±10%.
    pub fn planar() -> Self {
        AffineConfig {
            rotation: 15f64.to_radians(),
            scale: (0.85, 1.15),
            shear: 0.0,
            translation: 0.1,
        }
    }

    /// Any rotation about the vertical axis, scale 0.85–1.15, translation ±10%.
    pub fn scene() -> Self {
        AffineConfig {
            rotation: std::f64::consts::PI,
            ..Self::planar()
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

/// `p -> M (p - c) + c + t * unit` for a centre `c` and length `unit`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub d: usize,
    /// Row-major `d x d`.
    pub matrix: Vec<f64>,
    pub translation: Vec<f64>,
}

impl Affine {
    pub fn identity(d: usize) -> Self {
        let mut matrix = vec![0.0; d * d];
        (0..d).for_each(|i| matrix[i * d + i] = 1.0);
        Affine {
            d,
            matrix,
            translation: vec![0.0; d],
        }
    }

    /// Rotation by `theta` in the plane of the first two axes.
    pub fn rotation(d: usize, theta: f64) -> Self {
        let mut a = Self::identity(d);
        let (s, c) = theta.sin_cos();
        a.matrix[0] = c;
        a.matrix[1] = -s;
        a.matrix[d] = s;
        a.matrix[d + 1] = c;
        a
    }

    pub fn apply(&self, p: &[f64], centre: &[f64], unit: f64) -> Vec<f64> {
        let d = self.d;
        (0..d)
            .map(|i| {
                let row = &self.matrix[i * d..(i + 1) * d];
                let lin: f64 = (0..d).map(|j| row[j] * (p[j] - centre[j])).sum();
                lin + centre[i] + self.translation[i] * unit
            })
            .collect()
    }
}

/// Draws a transform from `cfg`; the same seed always gives the same
/// transform. Rotation acts in the plane of the first two axes.
pub fn random_affine(d: usize, cfg: &AffineConfig, seed: u64) -> Affine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = rng.gen_range(-cfg.rotation..=cfg.rotation);
    let scale = rng.gen_range(cfg.scale.0..=cfg.scale.1);
    let shear = rng.gen_range(-cfg.shear..=cfg.shear);
    let translation = (0..d)
        .map(|_| rng.gen_range(-cfg.translation..=cfg.translation))
        .collect();
    let rot = Affine::rotation(d, theta);
    let mut matrix = rot.matrix.clone();
    // M = R * H * sI, with H shearing axis 0 along axis 1
    for i in 0..d {
        let r0 = rot.matrix[i * d];
        matrix[i * d + 1] += r0 * shear;
        for j in 0..d {
            matrix[i * d + j] *= scale;
        }
    }
    Affine { d, matrix, translation }
}
