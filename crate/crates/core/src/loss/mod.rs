//! Composite image reconstruction objective:
//! `MSE + lambda_s * D-SSIM + lambda_l * perceptual`.
//!
//! Every term returns its value together with the gradient w.r.t. the
//! rendered image, so the optimizers only ever see one `dL/dImage`.

mod filter;
mod perceptual;
mod ssim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

pub use perceptual::{Perceptual, StructuralProxy};
pub use ssim::{C1, C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// D-SSIM weight.
    pub lambda_s: f64,
    /// Perceptual weight.
    pub lambda_l: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_s: 0.2,
            lambda_l: 0.5,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_s", self.lambda_s), ("lambda_l", self.lambda_l)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

pub fn mse(img: &Image, gt: &Image) -> Result<LossValue> {
    img.ensure_same_dims(gt)?;
    let n = img.as_slice().len() as f64;
    let mut sum = 0.0;
    let grad: Vec<f64> = img
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(a, b)| {
            let d = a - b;
            sum += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossValue {
        value: sum / n,
        grad: Image::from_raw(img.width(), img.height(), grad)?,
    })
}

fn check_window(img: &Image) -> Result<()> {
    let (w, h) = img.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    Ok(())
}

/// Mean SSIM over all window positions and channels.
pub fn ssim(img: &Image, gt: &Image) -> Result<f64> {
    img.ensure_same_dims(gt)?;
    check_window(img)?;
    let (w, h) = img.dims();
    let total: f64 = (0..3)
        .map(|c| ssim::ssim_plane(&img.channel(c), &gt.channel(c), w, h, false).0)
        .sum();
    Ok(total / 3.0)
}

/// Structural dissimilarity `(1 - SSIM) / 2`.
pub fn dssim(img: &Image, gt: &Image) -> Result<LossValue> {
    img.ensure_same_dims(gt)?;
    check_window(img)?;
    let (w, h) = img.dims();
    let mut total = 0.0;
    let mut planes: [Vec<f64>; 3] = Default::default();
    for (c, plane) in planes.iter_mut().enumerate() {
        let (s, g) = ssim::ssim_plane(&img.channel(c), &gt.channel(c), w, h, true);
        total += s;
        *plane = g.unwrap().into_iter().map(|v| -v / 6.0).collect();
    }
    Ok(LossValue {
        value: (1.0 - total / 3.0) / 2.0,
        grad: Image::from_channels(w, h, [&planes[0], &planes[1], &planes[2]]),
    })
}

/// Perceptual distance using the default [`StructuralProxy`].
pub fn perceptual(img: &Image, gt: &Image) -> Result<LossValue> {
    StructuralProxy::default().evaluate(img, gt)
}

/// Per-term breakdown of one objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconLoss {
    pub mse: f64,
    pub dssim: f64,
    pub perceptual: f64,
    pub total: f64,
    pub grad: Image,
}

pub fn recon_loss(img: &Image, gt: &Image, weights: &LossWeights) -> Result<ReconLoss> {
    recon_loss_with(img, gt, weights, &StructuralProxy::default())
}

pub fn recon_loss_with(
    img: &Image,
    gt: &Image,
    weights: &LossWeights,
    perceptual: &dyn Perceptual,
) -> Result<ReconLoss> {
    weights.validate()?;
    let m = mse(img, gt)?;
    let s = dssim(img, gt)?;
    let p = perceptual.evaluate(img, gt)?;
    let mut grad = m.grad;
    for ((g, gs), gp) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(s.grad.as_slice())
        .zip(p.grad.as_slice())
    {
        *g += weights.lambda_s * gs + weights.lambda_l * gp;
    }
    Ok(ReconLoss {
        mse: m.value,
        dssim: s.value,
        perceptual: p.value,
        total: m.value + weights.lambda_s * s.value + weights.lambda_l * p.value,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image {
        Image::from_raw(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
    }

    /// Central differences of `f` at every coordinate of `img`.
    fn finite_diff(img: &Image, h: f64, f: impl Fn(&Image) -> f64) -> Vec<f64> {
        (0..img.as_slice().len())
            .map(|i| {
                let mut p = img.clone();
                p.as_mut_slice()[i] += h;
                let mut m = img.clone();
                m.as_mut_slice()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_grad_close(analytic: &Image, fd: &[f64], rel: f64) {
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (i, (a, f)) in analytic.as_slice().iter().zip(fd).enumerate() {
            let err = (a - f).abs();
            assert!(
                err <= rel * f.abs() || err <= 1e-9 * scale,
                "coordinate {i}: analytic {a}, finite-difference {f}"
            );
        }
    }

    #[test]
    fn mse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_image(8, 8, &mut rng);
        let l = mse(&a, &a).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad.as_slice().iter().all(|&g| g == 0.0));

        let zero = Image::filled(4, 3, [0.0; 3]);
        let one = Image::filled(4, 3, [1.0; 3]);
        assert_eq!(mse(&zero, &one).unwrap().value, 1.0);

        let b = random_image(8, 8, &mut rng);
        let mut direct = 0.0;
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    let d = a.get(x, y)[c] - b.get(x, y)[c];
                    direct += d * d;
                }
            }
        }
        direct /= 8.0 * 8.0 * 3.0;
        assert!((mse(&a, &b).unwrap().value - direct).abs() < 1e-12);
    }

    #[test]
    fn mse_dimension_mismatch() {
        let a = Image::new(4, 4);
        let b = Image::new(4, 5);
        assert!(matches!(mse(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(perceptual(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn dssim_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(16, 16, &mut rng);
        assert!(dssim(&a, &a).unwrap().value.abs() < 1e-12);

        let zero = Image::filled(16, 16, [0.0; 3]);
        let one = Image::filled(16, 16, [1.0; 3]);
        // means 0 and 1, zero variance: only the stabilizers survive
        let s = (C1 * C2) / ((1.0 + C1) * C2);
        let expected = (1.0 - s) / 2.0;
        assert!((dssim(&zero, &one).unwrap().value - expected).abs() < 1e-12);
        assert!((expected - 0.49995).abs() < 1e-6);
    }

    #[test]
    fn dssim_rejects_small_images() {
        let a = Image::new(10, 16);
        assert!(matches!(dssim(&a, &a), Err(Error::ImageTooSmall { .. })));
        assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn dssim_gradient_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        let analytic = dssim(&a, &b).unwrap().grad;
        let fd = finite_diff(&a, 1e-3, |x| dssim(x, &b).unwrap().value);
        assert_grad_close(&analytic, &fd, 1e-3);
    }

    #[test]
    fn perceptual_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(16, 16, &mut rng);
        let p = perceptual(&a, &a).unwrap();
        assert_eq!(p.value, 0.0);
        assert!(p.grad.as_slice().iter().all(|g| g.abs() < 1e-12));
        assert!(matches!(perceptual(&Image::new(8, 8), &Image::new(8, 8)), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn perceptual_ranks_shift_above_noise() {
        // smooth structured image, its 1-pixel shift, and noise with matched mean/std
        let (w, h) = (48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = |x: f64, y: f64, c: usize| {
            0.5 + 0.3 * ((x * 0.21 + c as f64).sin() * (y * 0.17).cos()) + 0.15 * (((x + y) * 0.05).sin())
        };
        let mut base = Image::new(w, h);
        let mut shifted = Image::new(w, h);
        for y in 0..h {
            for x in 0..w {
                base.set(x, y, [0, 1, 2].map(|c| f(x as f64, y as f64, c)));
                shifted.set(x, y, [0, 1, 2].map(|c| f(x as f64 + 1.0, y as f64, c)));
            }
        }
        let vals = base.as_slice();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        let noise = Image::from_raw(
            w,
            h,
            (0..w * h * 3)
                .map(|_| mean + std * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0))
                .collect(),
        )
        .unwrap();
        let to_shift = perceptual(&base, &shifted).unwrap().value;
        let to_noise = perceptual(&base, &noise).unwrap().value;
        assert!(to_shift < to_noise, "{to_shift} !< {to_noise}");
        assert!(to_shift > 0.0);
    }

    #[test]
    fn perceptual_gradient_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        let analytic = perceptual(&a, &b).unwrap().grad;
        let fd = finite_diff(&a, 1e-4, |x| perceptual(x, &b).unwrap().value);
        assert_grad_close(&analytic, &fd, 1e-3);
    }

    #[test]
    fn term_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        assert_eq!(mse(&a, &b).unwrap().value, mse(&b, &a).unwrap().value);
        assert!((dssim(&a, &b).unwrap().value - dssim(&b, &a).unwrap().value).abs() < 1e-15);
        assert!((perceptual(&a, &b).unwrap().value - perceptual(&b, &a).unwrap().value).abs() < 1e-15);
    }

    #[test]
    fn recon_loss_reductions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_image(16, 16, &mut rng);
        let b = random_image(16, 16, &mut rng);
        assert_eq!(recon_loss(&a, &a, &LossWeights::default()).unwrap().total, 0.0);

        let only_mse = recon_loss(&a, &b, &LossWeights { lambda_s: 0.0, lambda_l: 0.0 }).unwrap();
        let m = mse(&a, &b).unwrap();
        assert_eq!(only_mse.total, m.value);
        assert_eq!(only_mse.grad, m.grad);

        let w = LossWeights { lambda_s: 0.2, lambda_l: 0.5 };
        let r = recon_loss(&a, &b, &w).unwrap();
        let sum = m.value + 0.2 * dssim(&a, &b).unwrap().value + 0.5 * perceptual(&a, &b).unwrap().value;
        assert!((r.total - sum).abs() < 1e-12);

        let doubled = recon_loss(&a, &b, &LossWeights { lambda_s: 0.4, ..w }).unwrap();
        assert!((doubled.total - r.total - 0.2 * r.dssim).abs() < 1e-10);
    }

    #[test]
    fn negative_weights_rejected() {
        let a = Image::new(16, 16);
        let w = LossWeights { lambda_s: -1.0, lambda_l: 0.0 };
        assert!(matches!(recon_loss(&a, &a, &w), Err(Error::InvalidConfig(_))));
    }
}
